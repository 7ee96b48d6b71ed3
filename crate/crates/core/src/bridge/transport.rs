use std::io::{BufRead, BufReader, Read, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};

enum Peer {
    Tcp(TcpStream),
    Child(Child),
    None,
}

/// One lockstep line-oriented connection.
///
/// A background thread turns the read half into a channel of lines so that
/// reads can time out without leaving the stream in a half-read state.
pub struct Connection {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    peer: Peer,
}

impl Connection {
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Self {
        Self::with_peer(reader, writer, Peer::None)
    }

    fn with_peer(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        peer: Peer,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self {
            writer: Box::new(writer),
            lines: rx,
            peer,
        }
    }

    pub fn tcp(address: &str, timeout: Duration) -> Result<Self> {
        let addr = address
            .to_socket_addrs()
            .map_err(|e| Error::Transport(format!("cannot resolve {address}: {e}")))?
            .next()
            .ok_or_else(|| Error::Transport(format!("{address} resolves to no address")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)
            .map_err(|e| Error::Transport(format!("cannot connect to {address}: {e}")))?;
        stream.set_nodelay(true).ok();
        let read_half = stream
            .try_clone()
            .map_err(|e| Error::Transport(format!("cannot clone socket: {e}")))?;
        let write_half = stream
            .try_clone()
            .map_err(|e| Error::Transport(format!("cannot clone socket: {e}")))?;
        Ok(Self::with_peer(read_half, write_half, Peer::Tcp(stream)))
    }

    pub fn spawn(command: &[String]) -> Result<Self> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| Error::config("stdio transport needs a command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Transport(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self::with_peer(stdout, stdin, Peer::Child(child)))
    }

    pub fn send_line(&mut self, line: &str) -> Result<()> {
        let io = |e: std::io::Error| Error::Transport(format!("write failed: {e}"));
        self.writer.write_all(line.as_bytes()).map_err(io)?;
        self.writer.write_all(b"\n").map_err(io)?;
        self.writer.flush().map_err(io)
    }

    pub fn recv_line(&mut self, timeout: Duration) -> Result<String> {
        match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::Transport(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Transport(format!(
                "no reply within {} ms",
                timeout.as_millis()
            ))),
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Transport("connection closed by server".into()))
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        match &mut self.peer {
            Peer::Tcp(s) => {
                s.shutdown(Shutdown::Both).ok();
            }
            Peer::Child(c) => {
                c.kill().ok();
                c.wait().ok();
            }
            Peer::None => {}
        }
    }
}
