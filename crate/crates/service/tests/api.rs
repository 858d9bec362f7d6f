use std::time::Duration;

use drape_core::deform::{Correspondence, CorrespondenceSet};
use drape_core::geometry::{parse_mesh, parse_target, write_obj_string, Vec3};
use drape_core::pipeline::{DrapeConfig, DrapeSession, SessionStatus};
use drape_core::shapes::{bumpy_ellipsoid, icosphere};
use drape_service::{
    decode_vertices, serve, CorrespondenceResponse, ResultResponse, ServiceConfig, SessionView, StreamMessage,
};
use futures_util::StreamExt;
use reqwest::StatusCode;
use serde_json::json;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;

struct Server {
    base: String,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn start(config: ServiceConfig) -> Self {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(async move {
            serve(listener, config, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Self {
            base: format!("http://{addr}"),
            stop: Some(tx),
            task,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn ws_url(&self, id: &str) -> String {
        format!("{}/sessions/{id}/stream", self.base.replace("http://", "ws://"))
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap();
    }
}

fn small_config() -> DrapeConfig {
    let mut cfg = DrapeConfig::default();
    cfg.iterations = 20;
    cfg.encoder.reveal_iters = 10;
    cfg.net.width = 32;
    cfg.net.layers = 2;
    cfg.loss.chamfer_samples = 300;
    cfg.loss.lambda_switch_iter = 10;
    cfg.snapshot.stride = 5;
    cfg.target.dense_samples = 3000;
    cfg.metrics.samples = 1000;
    cfg.metrics.dense_samples = 3000;
    cfg
}

fn shapes() -> (String, String) {
    let source = icosphere(2);
    let target = bumpy_ellipsoid(3, Vec3::new(1.0, 0.8, 0.6), 0.05, 4.0);
    (write_obj_string(&source), write_obj_string(&target))
}

async fn create(client: &reqwest::Client, server: &Server, cfg: &DrapeConfig) -> SessionView {
    let (source, target) = shapes();
    let resp = client
        .post(server.url("/sessions"))
        .json(&json!({ "source": source, "target": target, "config": cfg }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::CREATED);
    resp.json().await.unwrap()
}

async fn control(client: &reqwest::Client, server: &Server, id: &str, action: &str) -> reqwest::Response {
    client
        .post(server.url(&format!("/sessions/{id}/control")))
        .json(&json!({ "action": action }))
        .send()
        .await
        .unwrap()
}

async fn put_pairs(client: &reqwest::Client, server: &Server, id: &str, pairs: &CorrespondenceSet) -> reqwest::Response {
    client
        .put(server.url(&format!("/sessions/{id}/correspondences")))
        .body(serde_json::to_string(pairs).unwrap())
        .send()
        .await
        .unwrap()
}

/// Read stream frames until the final message; snapshots are returned with
/// their decoded vertex buffers.
async fn collect_stream(url: String) -> (Vec<(StreamMessage, Vec<[f32; 3]>)>, StreamMessage) {
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    let mut snaps = Vec::new();
    let mut pending: Option<StreamMessage> = None;
    while let Some(frame) = tokio::time::timeout(Duration::from_secs(120), ws.next()).await.unwrap() {
        match frame.unwrap() {
            Message::Text(t) => {
                let m: StreamMessage = serde_json::from_str(&t).unwrap();
                if matches!(m, StreamMessage::Snapshot { .. }) {
                    assert!(pending.is_none(), "snapshot without vertex frame");
                    pending = Some(m);
                } else {
                    return (snaps, m);
                }
            }
            Message::Binary(b) => {
                let m = pending.take().expect("vertex frame without snapshot");
                snaps.push((m, decode_vertices(&b).unwrap()));
            }
            Message::Close(_) => break,
            _ => {}
        }
    }
    panic!("stream ended without a final message");
}

async fn wait_for(client: &reqwest::Client, server: &Server, id: &str, status: SessionStatus) -> SessionView {
    for _ in 0..1200 {
        let v: SessionView = client
            .get(server.url(&format!("/sessions/{id}")))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        if v.status == status {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("session never reached {status}");
}

fn pairs_for(target_obj: &str, ids: &[usize], rigid: usize) -> CorrespondenceSet {
    let target = parse_mesh(target_obj).unwrap();
    let pairs = ids
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let p = target.vertices()[i];
            if k < rigid {
                Correspondence::rigid(i, p)
            } else {
                Correspondence::soft(i, p)
            }
        })
        .collect();
    CorrespondenceSet::new(pairs).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn health_and_creation() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let health: serde_json::Value = client.get(server.url("/healthz")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");

    let a = create(&client, &server, &small_config()).await;
    let b = create(&client, &server, &small_config()).await;
    assert_ne!(a.id, b.id);
    assert_eq!(a.status, SessionStatus::Idle);
    assert_eq!(a.iteration, 0);
    assert_eq!(a.vertex_count, 162);

    let empty = client
        .post(server.url("/sessions"))
        .json(&json!({ "source": "", "target": "v 0 0 0" }))
        .send()
        .await
        .unwrap();
    assert_eq!(empty.status(), StatusCode::BAD_REQUEST);
    let garbage = client
        .post(server.url("/sessions"))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(garbage.status(), StatusCode::BAD_REQUEST);

    let missing = client.get(server.url("/sessions/nope")).send().await.unwrap();
    assert_eq!(missing.status(), StatusCode::NOT_FOUND);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn upload_limit_gives_413() {
    let server = Server::start(ServiceConfig {
        max_upload_bytes: 4096,
        checkpoint_dir: None,
    })
    .await;
    let client = reqwest::Client::new();
    let (source, target) = shapes();
    let resp = client
        .post(server.url("/sessions"))
        .json(&json!({ "source": source, "target": target }))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::PAYLOAD_TOO_LARGE);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn correspondences_and_preview() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let s = create(&client, &server, &small_config()).await;
    let (_, target) = shapes();

    let unknown = put_pairs(&client, &server, "nope", &CorrespondenceSet::default()).await;
    assert_eq!(unknown.status(), StatusCode::NOT_FOUND);

    let bad = CorrespondenceSet::new(vec![Correspondence::soft(162, Vec3::zeros())]).unwrap();
    assert_eq!(put_pairs(&client, &server, &s.id, &bad).await.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let text = client
        .put(server.url(&format!("/sessions/{}/correspondences", s.id)))
        .body("0 1 2")
        .send()
        .await
        .unwrap();
    assert_eq!(text.status(), StatusCode::BAD_REQUEST);

    let ids = [0usize, 1, 2, 3, 4, 5, 6, 7, 8, 9];
    let pairs = pairs_for(&target, &ids, 2);
    let resp = put_pairs(&client, &server, &s.id, &pairs).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let body: CorrespondenceResponse = resp.json().await.unwrap();
    assert_eq!(body.status, SessionStatus::Idle);
    assert_eq!(body.pairs.len(), 10);
    assert_eq!(body.preview.len(), 162);
    for c in body.pairs.pairs().iter().filter(|c| c.kind == drape_core::deform::PairKind::Rigid) {
        let p = body.preview[c.source_vertex];
        assert!((Vec3::from(p) - c.target_point).norm() < 1e-9);
    }

    // idle sessions may be re-initialized any number of times
    let resp = put_pairs(&client, &server, &s.id, &CorrespondenceSet::default()).await;
    let body: CorrespondenceResponse = resp.json().await.unwrap();
    assert!(body.pairs.is_empty());
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn control_transitions_and_result_gate() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let mut cfg = small_config();
    cfg.iterations = 400;
    let s = create(&client, &server, &cfg).await;

    assert_eq!(control(&client, &server, &s.id, "pause").await.status(), StatusCode::CONFLICT);
    assert_eq!(control(&client, &server, &s.id, "resume").await.status(), StatusCode::CONFLICT);
    let bogus = control(&client, &server, &s.id, "explode").await;
    assert!(bogus.status().is_client_error());
    let result = client.get(server.url(&format!("/sessions/{}/result", s.id))).send().await.unwrap();
    assert_eq!(result.status(), StatusCode::CONFLICT);

    let started: SessionView = control(&client, &server, &s.id, "start").await.json().await.unwrap();
    assert_eq!(started.status, SessionStatus::Running);
    assert_eq!(control(&client, &server, &s.id, "start").await.status(), StatusCode::CONFLICT);
    let result = client.get(server.url(&format!("/sessions/{}/result", s.id))).send().await.unwrap();
    assert_eq!(result.status(), StatusCode::CONFLICT);
    let edit = put_pairs(&client, &server, &s.id, &CorrespondenceSet::default()).await;
    assert_eq!(edit.status(), StatusCode::CONFLICT);

    let cancelled: SessionView = control(&client, &server, &s.id, "cancel").await.json().await.unwrap();
    assert_eq!(cancelled.status, SessionStatus::Cancelled);
    assert!(cancelled.iteration < 400);
    let result: ResultResponse = client
        .get(server.url(&format!("/sessions/{}/result", s.id)))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(result.partial);
    assert_eq!(result.iteration, cancelled.iteration);
    let (source, _) = shapes();
    let mesh = parse_mesh(&result.mesh).unwrap();
    assert_eq!(mesh.faces(), parse_mesh(&source).unwrap().faces());

    let (_, last) = collect_stream(server.ws_url(&s.id)).await;
    assert!(matches!(last, StreamMessage::Done { partial: true, .. }));
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stream_delivers_every_stride_to_every_subscriber() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let s = create(&client, &server, &small_config()).await;
    let a = tokio::spawn(collect_stream(server.ws_url(&s.id)));
    let b = tokio::spawn(collect_stream(server.ws_url(&s.id)));
    // both subscriptions are registered once their handshakes finish
    tokio::time::sleep(Duration::from_millis(300)).await;
    control(&client, &server, &s.id, "start").await;
    let (snaps_a, last_a) = a.await.unwrap();
    let (snaps_b, last_b) = b.await.unwrap();

    let ts: Vec<usize> = snaps_a
        .iter()
        .map(|(m, _)| match m {
            StreamMessage::Snapshot { iteration, .. } => *iteration,
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(ts, vec![5, 10, 15, 20]);
    assert!(snaps_a.iter().all(|(_, v)| v.len() == 162));
    assert_eq!(snaps_a, snaps_b);
    assert_eq!(last_a, last_b);
    let StreamMessage::Done { iteration, partial, report } = last_a else {
        panic!("expected done, got {last_a:?}");
    };
    assert_eq!((iteration, partial), (20, false));

    let result: ResultResponse = client
        .get(server.url(&format!("/sessions/{}/result", s.id)))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(result.report, report);
    let mesh = parse_mesh(&result.mesh).unwrap();
    for (p, q) in mesh.vertices().iter().zip(&snaps_a[3].1) {
        for c in 0..3 {
            assert_eq!(p[c] as f32, q[c]);
        }
    }
    let obj = client
        .get(server.url(&format!("/sessions/{}/result?format=obj", s.id)))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(obj, result.mesh);

    // a subscriber arriving after the end gets the final message at once
    let (late, last) = collect_stream(server.ws_url(&s.id)).await;
    assert!(late.is_empty());
    assert!(matches!(last, StreamMessage::Done { iteration: 20, .. }));
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_edit_matches_direct_run() {
    let server = Server::start(ServiceConfig::default()).await;
    let client = reqwest::Client::new();
    let mut cfg = small_config();
    cfg.iterations = 200;
    let (source_obj, target_obj) = shapes();
    let s = create(&client, &server, &cfg).await;
    let first = pairs_for(&target_obj, &[0, 1, 2, 3, 4, 5], 1);
    assert_eq!(put_pairs(&client, &server, &s.id, &first).await.status(), StatusCode::OK);

    let (mut ws, _) = tokio_tungstenite::connect_async(server.ws_url(&s.id)).await.unwrap();
    control(&client, &server, &s.id, "start").await;
    // pause once the first snapshot arrives
    loop {
        let frame = tokio::time::timeout(Duration::from_secs(60), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Binary(_) = frame {
            break;
        }
    }
    let paused: SessionView = control(&client, &server, &s.id, "pause").await.json().await.unwrap();
    assert_eq!(paused.status, SessionStatus::Paused);
    assert!(paused.iteration >= 5 && paused.iteration < 200);
    let t_pause = paused.iteration;
    tokio::time::sleep(Duration::from_millis(200)).await;
    let still = wait_for(&client, &server, &s.id, SessionStatus::Paused).await;
    assert_eq!(still.iteration, t_pause);

    let mut edited = first.pairs().to_vec();
    edited[3].target_point += Vec3::new(0.0, 0.1, 0.05);
    edited.push(Correspondence::soft(40, parse_mesh(&target_obj).unwrap().vertices()[40]));
    let edited = CorrespondenceSet::new(edited).unwrap();
    let ack: CorrespondenceResponse = put_pairs(&client, &server, &s.id, &edited).await.json().await.unwrap();
    assert_eq!(ack.iteration, t_pause);
    control(&client, &server, &s.id, "resume").await;
    let mut last = None;
    let mut previous = 5;
    while let Some(frame) = tokio::time::timeout(Duration::from_secs(120), ws.next()).await.unwrap() {
        if let Message::Text(t) = frame.unwrap() {
            let m: StreamMessage = serde_json::from_str(&t).unwrap();
            if let StreamMessage::Snapshot { iteration, .. } = m {
                assert!(iteration > previous && iteration % 5 == 0);
                previous = iteration;
            } else {
                last = Some(m);
                break;
            }
        }
    }
    assert!(matches!(last, Some(StreamMessage::Done { iteration: 200, partial: false, .. })));
    let result: ResultResponse = client
        .get(server.url(&format!("/sessions/{}/result", s.id)))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();

    let reference = tokio::task::spawn_blocking(move || {
        let source = parse_mesh(&source_obj).unwrap();
        let target = parse_target(&target_obj, cfg.target.dense_samples).unwrap();
        let mut d = DrapeSession::create(source, target, first, cfg).unwrap();
        d.start().unwrap();
        for _ in 0..t_pause {
            d.step().unwrap();
        }
        d.pause().unwrap();
        d.update_correspondences(edited).unwrap();
        d.resume().unwrap();
        d.run_to_end().unwrap();
        d.extract_result().unwrap()
    })
    .await
    .unwrap();
    let served = parse_mesh(&result.mesh).unwrap();
    assert_eq!(served.faces(), reference.mesh.faces());
    for (p, q) in served.vertices().iter().zip(reference.mesh.vertices()) {
        assert!((p - q).norm() <= 1e-9);
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn checkpoints_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let server = Server::start(config.clone()).await;
    let client = reqwest::Client::new();
    let mut cfg = small_config();
    cfg.iterations = 1000;
    let s = create(&client, &server, &cfg).await;
    let idle = create(&client, &server, &cfg).await;
    control(&client, &server, &s.id, "start").await;
    let paused: SessionView = control(&client, &server, &s.id, "pause").await.json().await.unwrap();
    assert!(dir.path().join(format!("{}.json", s.id)).exists());
    server.stop().await;
    assert!(dir.path().join(format!("{}.json", idle.id)).exists());

    let server = Server::start(config).await;
    let restored = wait_for(&client, &server, &s.id, SessionStatus::Paused).await;
    assert_eq!(restored.iteration, paused.iteration);
    let other = wait_for(&client, &server, &idle.id, SessionStatus::Idle).await;
    assert_eq!(other.iteration, 0);
    control(&client, &server, &s.id, "resume").await;
    let done = wait_for(&client, &server, &s.id, SessionStatus::Done).await;
    assert_eq!(done.iteration, 1000);
    server.stop().await;
}
