use drape_core::deform::CorrespondenceSet;
use drape_core::geometry::{load_mesh, load_target, write_mesh, Vec3};
use drape_core::pipeline::{DrapeConfig, DrapeSession, SessionCheckpoint, SessionStatus};
use drape_core::shapes::icosphere;

const CONFIG: &str = r#"
iterations = 30
seed = 11

[encoder]
reveal_iters = 20

[net]
width = 16

[loss]
lambda_switch_iter = 10

[target]
dense_samples = 2000
"#;

#[test]
fn mesh_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = icosphere(2).transformed(|p| p * 0.37 + p.component_mul(p) * 0.1);
    let path = dir.path().join("m.obj");
    write_mesh(&path, &mesh).unwrap();
    let back = load_mesh(&path).unwrap();
    assert_eq!(back.faces(), mesh.faces());
    assert_eq!(back.vertices(), mesh.vertices());
}

#[test]
fn config_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, CONFIG).unwrap();
    let config = DrapeConfig::load(&path).unwrap();
    assert_eq!(config.iterations, 30);
    assert_eq!(config.net.width, 16);
    let again = DrapeConfig::from_toml_str(&config.to_toml_string()).unwrap();
    assert_eq!(again.to_toml_string(), config.to_toml_string());
}

#[test]
fn checkpoint_file_resumes_identically() {
    let dir = tempfile::tempdir().unwrap();
    write_mesh(dir.path().join("s.obj"), &icosphere(1)).unwrap();
    write_mesh(dir.path().join("t.obj"), &icosphere(2).transformed(|p| p.component_mul(&Vec3::new(1.3, 0.9, 1.0)))).unwrap();
    let config = DrapeConfig::from_toml_str(CONFIG).unwrap();
    let open = || {
        let source = load_mesh(dir.path().join("s.obj")).unwrap();
        let target = load_target(dir.path().join("t.obj"), config.target.dense_samples).unwrap();
        DrapeSession::create(source, target, CorrespondenceSet::default(), config.clone()).unwrap()
    };

    let mut straight = open();
    straight.start().unwrap();
    straight.run_to_end().unwrap();
    let expected = straight.extract_result().unwrap();

    let mut first = open();
    first.start().unwrap();
    for _ in 0..12 {
        first.step().unwrap();
    }
    let cp_path = dir.path().join("cp.json");
    std::fs::write(&cp_path, serde_json::to_string(&first.checkpoint()).unwrap()).unwrap();
    drop(first);

    let cp: SessionCheckpoint = serde_json::from_str(&std::fs::read_to_string(&cp_path).unwrap()).unwrap();
    let mut resumed = DrapeSession::restore(cp).unwrap();
    assert_eq!(resumed.status(), SessionStatus::Paused);
    assert_eq!(resumed.iteration(), 12);
    resumed.resume().unwrap();
    resumed.run_to_end().unwrap();
    let got = resumed.extract_result().unwrap();
    assert_eq!(got.mesh.vertices(), expected.mesh.vertices());
    assert!(!got.partial);
}
