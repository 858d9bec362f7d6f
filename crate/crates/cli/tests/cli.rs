use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use drape_core::geometry::{load_mesh, write_mesh, SurfaceMesh};
use drape_core::metrics::TransferReport;
use drape_core::shapes::icosphere;

fn drape() -> Command {
    Command::new(env!("CARGO_BIN_EXE_drape"))
}

fn run(args: &[&str]) -> Output {
    drape().args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, mesh: &SurfaceMesh) -> PathBuf {
    let p = dir.join(name);
    write_mesh(&p, mesh).unwrap();
    p
}

#[test]
fn missing_source_is_a_usage_error() {
    let out = run(&["transfer", "--target", "t.obj"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unreadable_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "transfer",
        "--source",
        path_str(&dir.path().join("missing.obj")),
        "--target",
        path_str(&dir.path().join("missing.obj")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("drape: "));
}

#[test]
fn invalid_config_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write(dir.path(), "m.obj", &icosphere(1));
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "iterations = 0\n").unwrap();
    let out = run(&[
        "transfer",
        "--source",
        path_str(&mesh),
        "--target",
        path_str(&mesh),
        "--config",
        path_str(&config),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iterations"));
}

#[test]
fn self_transfer_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let source = icosphere(2);
    let path = write(dir.path(), "sphere.obj", &source);
    let out_path = dir.path().join("out.obj");
    let report_path = dir.path().join("report.json");
    let out = run(&[
        "transfer",
        "--source",
        path_str(&path),
        "--target",
        path_str(&path),
        "--out",
        path_str(&out_path),
        "--report",
        path_str(&report_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result = load_mesh(&out_path).unwrap();
    assert_eq!(result.faces(), source.faces());
    let report: TransferReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert!(report.chamfer <= 1e-4, "{report:?}");
    assert!(report.q_transfer >= 0.95, "{report:?}");
}

#[test]
fn no_encoding_config_runs_and_prints_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let source = write(dir.path(), "s.obj", &icosphere(1));
    let target = write(dir.path(), "t.obj", &icosphere(2).transformed(|p| p * 1.5));
    let config = dir.path().join("none.toml");
    std::fs::write(
        &config,
        "iterations = 40\nencoder.mode = \"none\"\nencoder.reveal_iters = 40\nnet.width = 16\nloss.lambda_switch_iter = 20\n",
    )
    .unwrap();
    let out = run(&[
        "transfer",
        "--source",
        path_str(&source),
        "--target",
        path_str(&target),
        "--config",
        path_str(&config),
        "--progress",
        "10",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let mesh = drape_core::geometry::parse_mesh(&stdout).unwrap();
    assert_eq!(mesh.faces(), icosphere(1).faces());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(stderr.matches("iteration ").count(), 4);
    assert!(stderr.contains("q_transfer"));
}

#[test]
fn eval_identical_triple_scores_high_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = write(dir.path(), "m.obj", &icosphere(2));
    let report_path = dir.path().join("r.json");
    let out = run(&[
        "eval",
        "--source",
        path_str(&mesh),
        "--result",
        path_str(&mesh),
        "--target",
        path_str(&mesh),
        "--report",
        path_str(&report_path),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: TransferReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(printed.q_transfer >= 0.95, "{printed:?}");
    assert!(printed.f_a <= 2.0, "{printed:?}");
    assert!(printed.dirichlet.abs() < 1e-12);
    let saved: TransferReport = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(saved, printed);
}

#[test]
fn eval_with_mismatched_faces_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let source = write(dir.path(), "s.obj", &icosphere(2));
    let result = write(dir.path(), "r.obj", &icosphere(1));
    let out = run(&[
        "eval",
        "--source",
        path_str(&source),
        "--result",
        path_str(&result),
        "--target",
        path_str(&source),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("connectivity"));
}

struct Server {
    child: Child,
    addr: String,
}

impl Server {
    fn start(extra: &[&str]) -> Self {
        let mut child = drape()
            .args(["serve", "--port", "0"])
            .args(extra)
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
        let addr = loop {
            let line = lines.next().expect("server exited").unwrap();
            if let Some(a) = line.strip_prefix("listening on http://") {
                break a.trim().to_string();
            }
        };
        std::thread::spawn(move || lines.for_each(drop));
        Self { child, addr }
    }

    fn terminate(mut self) -> std::process::ExitStatus {
        let status = Command::new("kill").args(["-TERM", &self.child.id().to_string()]).status().unwrap();
        assert!(status.success());
        self.child.wait().unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap()
}

#[test]
fn serve_health_and_busy_port() {
    let server = Server::start(&[]);
    let body: serde_json::Value = runtime().block_on(async {
        reqwest::get(format!("http://{}/healthz", server.addr))
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    });
    assert_eq!(body["status"], "ok");

    let port = server.addr.rsplit(':').next().unwrap();
    let second = run(&["serve", "--port", port]);
    assert_eq!(second.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&second.stderr).contains("cannot listen"));
    assert!(server.terminate().success());
}

#[test]
fn shutdown_signal_checkpoints_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let server = Server::start(&["--checkpoint-dir", path_str(dir.path())]);
    let obj = drape_core::geometry::write_obj_string(&icosphere(1));
    let status = runtime().block_on(async {
        reqwest::Client::new()
            .post(format!("http://{}/sessions", server.addr))
            .json(&serde_json::json!({ "source": obj, "target": obj }))
            .send()
            .await
            .unwrap()
            .status()
    });
    assert_eq!(status.as_u16(), 201);
    assert!(server.terminate().success());
    let saved: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
        .collect();
    assert_eq!(saved.len(), 1);
}
