use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use latentprobe_core::backend::{score_batch, Backend};
use latentprobe_core::bridge::mock::{MockServer, Scripted, SyntheticHandler};
use latentprobe_core::bridge::{BridgeClient, BridgeConfig};
use latentprobe_core::latent::sample_box;
use latentprobe_core::search::{search, SearchConfig};
use latentprobe_core::synthetic::{margin_latents, SyntheticSpec};
use latentprobe_core::{
    Error, ImageTensor, LatentVector, SamplingBox, SeededRng, SyntheticModel, TargetIdentity,
};
use serde_json::{json, Value};

fn request(line: &str) -> Value {
    serde_json::from_str(line).unwrap()
}

fn id_of(line: &str) -> u64 {
    request(line)["id"].as_u64().unwrap()
}

fn info_json(id: u64, d: usize, m: usize) -> Value {
    json!({"id": id, "ok": true, "latent_dim": d, "embedding_dim": m,
           "image_shape": [3, 64, 64], "name": "scripted", "fused": true})
}

/// Answers `info` with the given dims and hands everything else to `rest`.
fn scripted(
    d: usize,
    m: usize,
    mut rest: impl FnMut(&Value) -> Scripted + Send + 'static,
) -> MockServer {
    MockServer::spawn(move |line: &str| {
        let req = request(line);
        if req["op"] == "info" {
            Scripted::Reply(info_json(req["id"].as_u64().unwrap(), d, m))
        } else {
            rest(&req)
        }
    })
    .unwrap()
}

fn synthetic_server(spec: SyntheticSpec) -> MockServer {
    MockServer::spawn(SyntheticHandler::new(spec).unwrap()).unwrap()
}

fn quick(config: BridgeConfig) -> BridgeConfig {
    BridgeConfig {
        timeout_ms: 300,
        ..config
    }
}

#[test]
fn handshake_populates_info() {
    let server = scripted(200, 128, |_| Scripted::Silent);
    let client = BridgeClient::connect(server.client_config()).unwrap();
    let info = Backend::<f64>::info(&client);
    assert_eq!(info.latent_dim, 200);
    assert_eq!(info.embedding_dim, 128);
    assert_eq!(info.image_shape, [3, 64, 64]);
    assert_eq!(info.backend_name, "scripted");
    assert!(info.supports_fused_generate_embed);
    assert!(!info.concurrent);
}

#[test]
fn handshake_missing_field_is_named() {
    let server = MockServer::spawn(|line: &str| {
        Scripted::Reply(
            json!({"id": id_of(line), "ok": true, "embedding_dim": 4, "image_shape": [1,1,4]}),
        )
    })
    .unwrap();
    match BridgeClient::connect(server.client_config()) {
        Err(Error::Protocol(msg)) => assert!(msg.contains("\"latent_dim\""), "{msg}"),
        Err(other) => panic!("unexpected error {other}"),
        Ok(_) => panic!("handshake should fail"),
    }
}

#[test]
fn mismatched_reply_id_is_protocol_error() {
    let server =
        MockServer::spawn(|line: &str| Scripted::Reply(info_json(id_of(line) + 7, 2, 2))).unwrap();
    assert!(matches!(
        BridgeClient::connect(server.client_config()),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn malformed_reply_is_protocol_error() {
    let server = MockServer::spawn(|_: &str| Scripted::Raw("{not json".into())).unwrap();
    assert!(matches!(
        BridgeClient::connect(server.client_config()),
        Err(Error::Protocol(_))
    ));
}

#[test]
fn batch_of_one_returns_scripted_embedding() {
    let server = scripted(2, 3, |req| {
        assert_eq!(req["op"], "generate_embed");
        assert_eq!(req["latents"], json!([[0.5, -0.25]]));
        Scripted::Reply(json!({"id": req["id"], "ok": true, "embeddings": [[0.1, 0.2, 0.3]]}))
    });
    let client = BridgeClient::connect(server.client_config()).unwrap();
    let z = LatentVector::new(vec![0.5, -0.25]).unwrap();
    let e = Backend::<f64>::generate_embed(&client, &[z]).unwrap();
    let got: Vec<f32> = e[0].as_slice().iter().map(|v| *v as f32).collect();
    assert_eq!(got, vec![0.1f32, 0.2, 0.3]);
}

#[test]
fn out_of_order_items_are_reordered() {
    let server = scripted(1, 1, |req| {
        let n = req["latents"].as_array().unwrap().len();
        let items: Vec<Value> = (0..n)
            .rev()
            .map(|i| json!({"index": i, "embedding": [req["latents"][i][0].as_f64().unwrap() * 10.0]}))
            .collect();
        Scripted::Reply(json!({"id": req["id"], "ok": true, "embeddings": items}))
    });
    let client = BridgeClient::connect(server.client_config()).unwrap();
    let zs: Vec<LatentVector> = [1.0, 2.0, 3.0]
        .iter()
        .map(|v| LatentVector::new(vec![*v]).unwrap())
        .collect();
    let e = Backend::<f64>::generate_embed(&client, &zs).unwrap();
    let got: Vec<f64> = e.iter().map(|e| e.as_slice()[0]).collect();
    assert_eq!(got, vec![10.0, 20.0, 30.0]);
}

#[test]
fn oversize_batch_is_chunked() {
    let requests = Arc::new(AtomicUsize::new(0));
    let seen = requests.clone();
    let server = scripted(1, 1, move |req| {
        seen.fetch_add(1, Ordering::SeqCst);
        let items: Vec<Value> = req["latents"]
            .as_array()
            .unwrap()
            .iter()
            .map(|z| json!([z[0].as_f64().unwrap() + 0.5]))
            .collect();
        assert!(items.len() <= 4);
        Scripted::Reply(json!({"id": req["id"], "ok": true, "embeddings": items}))
    });
    let config = BridgeConfig {
        max_batch: 4,
        ..server.client_config()
    };
    let client = BridgeClient::connect(config).unwrap();
    let zs: Vec<LatentVector> = (0..10)
        .map(|i| LatentVector::new(vec![i as f64]).unwrap())
        .collect();
    let e = Backend::<f64>::generate_embed(&client, &zs).unwrap();
    assert_eq!(requests.load(Ordering::SeqCst), 3);
    let got: Vec<f64> = e.iter().map(|e| e.as_slice()[0]).collect();
    let expect: Vec<f64> = (0..10).map(|i| i as f64 + 0.5).collect();
    assert_eq!(got, expect);
}

#[test]
fn chunked_equals_unchunked_on_synthetic_server() {
    let spec = SyntheticSpec::default();
    let server = synthetic_server(spec);
    let zs = sample_box(&SamplingBox::symmetric_unit(64), 37, &mut SeededRng::new(5)).unwrap();
    let whole = BridgeClient::connect(server.client_config()).unwrap();
    let a = Backend::<f64>::generate_embed(&whole, &zs).unwrap();
    drop(whole);
    let chunked = BridgeClient::connect(BridgeConfig {
        max_batch: 5,
        ..server.client_config()
    })
    .unwrap();
    let b = Backend::<f64>::generate_embed(&chunked, &zs).unwrap();
    assert_eq!(a, b);
}

#[test]
fn per_item_error_surfaces_with_index() {
    let server = scripted(1, 1, |req| {
        Scripted::Reply(json!({"id": req["id"], "ok": true,
            "embeddings": [[0.0], {"index": 1, "error": "latent rejected"}, [0.0]]}))
    });
    let client = BridgeClient::connect(BridgeConfig {
        max_batch: 3,
        ..server.client_config()
    })
    .unwrap();
    let zs: Vec<LatentVector> = (0..6).map(|_| LatentVector::zeros(1)).collect();
    match Backend::<f64>::generate_embed(&client, &zs) {
        Err(Error::Backend {
            index: Some(1),
            message,
        }) => assert_eq!(message, "latent rejected"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn server_error_reply_is_backend_error() {
    let server = scripted(1, 1, |req| {
        Scripted::Reply(json!({"id": req["id"], "ok": false, "error": "out of memory"}))
    });
    let client = BridgeClient::connect(server.client_config()).unwrap();
    match Backend::<f64>::generate_embed(&client, &[LatentVector::zeros(1)]) {
        Err(Error::Backend { message, .. }) => assert_eq!(message, "out of memory"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_op_answered_with_failure() {
    let h = SyntheticHandler::new(SyntheticSpec::default()).unwrap();
    let reply = h.answer(r#"{"id":5,"op":"train"}"#);
    assert_eq!(reply, json!({"id": 5, "ok": false, "error": "unknown op"}));
    let reply = h.answer("{oops");
    assert_eq!(reply["ok"], false);
    let reply = h.answer(r#"{"id":6,"op":"generate"}"#);
    assert_eq!(
        (reply["id"].as_u64(), reply["ok"].as_bool()),
        (Some(6), Some(false))
    );
}

#[test]
fn generate_and_embed_round_trip() {
    let spec = SyntheticSpec {
        latent_dim: 16,
        ..SyntheticSpec::default()
    };
    let server = synthetic_server(spec);
    let client = BridgeClient::connect(server.client_config()).unwrap();
    let local = SyntheticModel::new(spec).unwrap();
    let z = sample_box(&SamplingBox::symmetric_unit(16), 1, &mut SeededRng::new(1))
        .unwrap()
        .pop()
        .unwrap();

    let x: ImageTensor = client.generate(&z).unwrap();
    assert_eq!(x.shape(), [1, 1, 48]);
    let lx = local.generate(&z).unwrap();
    for (a, b) in x.values().iter().zip(lx.values()) {
        assert!((a - b).abs() < 1e-6);
    }
    let e = client.embed(&x).unwrap();
    let le = local.embed(&lx).unwrap();
    for (a, b) in e.as_slice().iter().zip(le.as_slice()) {
        assert!((a - b).abs() < 1e-5);
    }

    let wrong = ImageTensor::new([1, 1, 3], vec![0.5; 3]).unwrap();
    assert!(client.embed(&wrong).is_err());
    assert!(matches!(
        Backend::<f64>::generate(&client, &LatentVector::zeros(3)),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn timeout_is_transport_error_after_one_retry() {
    let server = scripted(1, 1, |_| Scripted::Silent);
    let client = BridgeClient::connect(quick(server.client_config())).unwrap();
    match Backend::<f64>::generate_embed(&client, &[LatentVector::zeros(1)]) {
        Err(Error::Transport(msg)) => assert!(msg.contains("300 ms"), "{msg}"),
        other => panic!("{other:?}"),
    }
    // handshake connection, then one reconnect for the retry
    assert_eq!(server.connections(), 2);
}

#[test]
fn dropped_connection_is_retried_once() {
    let mut hung_up = false;
    let server = scripted(1, 1, move |req| {
        if !hung_up {
            hung_up = true;
            return Scripted::Hangup;
        }
        Scripted::Reply(json!({"id": req["id"], "ok": true, "embeddings": [[4.0]]}))
    });
    let client = BridgeClient::connect(quick(server.client_config())).unwrap();
    let e = Backend::<f64>::generate_embed(&client, &[LatentVector::zeros(1)]).unwrap();
    assert_eq!(e[0].as_slice(), &[4.0]);
    assert_eq!(server.connections(), 2);
}

#[test]
fn unreachable_server_is_transport_error() {
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let config = BridgeConfig {
        transport: latentprobe_core::bridge::Transport::Tcp {
            address: addr.to_string(),
        },
        timeout_ms: 200,
        max_batch: 8,
    };
    assert!(matches!(
        BridgeClient::connect(config),
        Err(Error::Transport(_))
    ));
}

#[test]
fn score_batch_over_bridge_matches_scalar_path() {
    let spec = SyntheticSpec {
        latent_dim: 12,
        ..SyntheticSpec::default()
    };
    let server = synthetic_server(spec);
    let client = BridgeClient::connect(BridgeConfig {
        max_batch: 16,
        ..server.client_config()
    })
    .unwrap();
    let local = SyntheticModel::new(spec).unwrap();
    let z = margin_latents(12, 1, 0.0, &mut SeededRng::new(2)).unwrap();
    let target = TargetIdentity::new(local.generate_embed(&z).unwrap()).unwrap();
    let zs = sample_box(&SamplingBox::symmetric_unit(12), 40, &mut SeededRng::new(3)).unwrap();
    let batch = score_batch(&zs, &target, &client).unwrap();
    for (z, s) in zs.iter().zip(&batch) {
        let one = score_batch(std::slice::from_ref(z), &target, &client).unwrap()[0];
        assert!((one - s).abs() < 1e-6);
        let local_score = score_batch(std::slice::from_ref(z), &target, &local).unwrap()[0];
        assert!((local_score - s).abs() < 1e-5);
    }
}

#[test]
fn search_over_bridge_reproduces_in_process_run() {
    let spec = SyntheticSpec {
        latent_dim: 8,
        ..SyntheticSpec::default()
    };
    let server = synthetic_server(spec);
    let client = BridgeClient::connect(server.client_config()).unwrap();
    let local = SyntheticModel::new(spec).unwrap();
    let z = margin_latents(8, 1, 0.0, &mut SeededRng::new(77)).unwrap();
    // the remote run scores against the f32-rounded target it would receive
    let target = TargetIdentity::new(local.generate_embed(&z).unwrap()).unwrap();
    let config = SearchConfig {
        latent_dim: 8,
        candidates_per_round: 64,
        seed: 77,
        ..SearchConfig::default()
    };
    let a = search(&target, &local, &config).unwrap();
    let b = search(&target, &client, &config).unwrap();
    assert_eq!(a.best_latent, b.best_latent);
    assert_eq!(a.terminated_by, b.terminated_by);
    assert_eq!(a.trace.len(), b.trace.len());
    for (ra, rb) in a.trace.records().iter().zip(b.trace.records()) {
        assert_eq!(
            (
                ra.stage,
                ra.round_index,
                ra.alpha_or_beta,
                ra.candidates_evaluated,
                ra.rng_substream_id
            ),
            (
                rb.stage,
                rb.round_index,
                rb.alpha_or_beta,
                rb.candidates_evaluated,
                rb.rng_substream_id
            )
        );
        assert!((ra.best_score_after - rb.best_score_after).abs() <= 1e-5);
    }
}
