//! Client side of the model-server wire protocol.

mod client;
pub mod mock;
pub mod protocol;
mod transport;

use serde::{Deserialize, Serialize};

pub use client::BridgeClient;
pub use transport::Connection;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "lowercase")]
pub enum Transport {
    /// Spawn `command` and talk over its stdin/stdout.
    Stdio {
        command: Vec<String>,
    },
    Tcp {
        address: String,
    },
}

/// JSON form, e.g. `{"transport": "tcp", "address": "127.0.0.1:9000"}` or
/// `{"transport": "stdio", "command": ["python3", "server.py"]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeConfig {
    #[serde(flatten)]
    pub transport: Transport,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_max_batch() -> usize {
    256
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            transport: Transport::Tcp {
                address: "127.0.0.1:7341".into(),
            },
            timeout_ms: default_timeout_ms(),
            max_batch: default_max_batch(),
        }
    }
}

impl BridgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::config("bridge timeout_ms must be positive"));
        }
        if self.max_batch == 0 {
            return Err(Error::config("bridge max_batch must be at least 1"));
        }
        if let Transport::Stdio { command } = &self.transport {
            if command.is_empty() {
                return Err(Error::config("stdio transport needs a command"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_forms() {
        let c: BridgeConfig =
            serde_json::from_str(r#"{"transport":"tcp","address":"localhost:1"}"#).unwrap();
        assert_eq!(c.timeout_ms, 30_000);
        assert_eq!(c.max_batch, 256);
        let c: BridgeConfig = serde_json::from_str(
            r#"{"transport":"stdio","command":["srv","--x"],"timeout_ms":5,"max_batch":2}"#,
        )
        .unwrap();
        assert_eq!(
            c.transport,
            Transport::Stdio {
                command: vec!["srv".into(), "--x".into()]
            }
        );
        assert!(BridgeConfig {
            timeout_ms: 0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(BridgeConfig { max_batch: 0, ..c }.validate().is_err());
    }
}
