use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn tunnel_rom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tunnel-rom"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Training runs, a validation run and an identified model, made once.
struct Fixture {
    _dir: tempfile::TempDir,
    train: Vec<PathBuf>,
    validation: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let sim = |name: &str, capacity: &str, ambient: &str, seed: &str| {
            let p = dir.path().join(name);
            let out = tunnel_rom(&[
                "simulate",
                "--capacity",
                capacity,
                "--ambient",
                ambient,
                "--seed",
                seed,
                "--out",
                s(&p),
            ]);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
            p
        };
        let train = vec![sim("train1.csv", "60", "15", "1"), sim("train2.csv", "243", "25", "2")];
        let validation = sim("validation.csv", "60", "25", "3");
        let model = dir.path().join("model.json");
        let out = tunnel_rom(&[
            "identify",
            "--train",
            s(&train[0]),
            "--train",
            s(&train[1]),
            "--out",
            s(&model),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture {
            _dir: dir,
            train,
            validation,
            model,
        }
    })
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    for (name, seed) in [("a.csv", "9"), ("b.csv", "9"), ("c.csv", "10")] {
        assert_eq!(
            code(&tunnel_rom(&["simulate", "--seed", seed, "--out", s(&p(name))])),
            0
        );
    }
    let read = |n: &str| std::fs::read(p(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn identify_writes_one_model_per_node_and_quantity() {
    let f = fixture();
    let file = tunnel_rom::sysid::ModelFile::load(&f.model).unwrap();
    assert_eq!(file.node_count, 10);
    assert_eq!(file.nodes.len(), 20);
    assert!(f.train.iter().all(|p| p.exists()));
}

#[test]
fn estimate_and_evaluate_a_layout() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = tunnel_rom(&[
        "estimate",
        "--model",
        s(&f.model),
        "--data",
        s(&f.validation),
        "--sensors",
        "1,5,10",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let trace = dir.path().join("trace_mhe.csv");
    assert!(trace.exists() && dir.path().join("rmse_temperature.csv").exists());
    let table = dir.path().join("eval.csv");
    let out = tunnel_rom(&[
        "evaluate",
        "--truth",
        s(&f.validation),
        "--trace",
        s(&trace),
        "--out",
        s(&table),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&table).unwrap().lines().count(), 11);
}

#[test]
fn case_set_then_report() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases");
    let out = tunnel_rom(&[
        "estimate",
        "--model",
        s(&f.model),
        "--data",
        s(&f.validation),
        "--cases",
        "paper",
        "--out",
        s(&cases),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let names = ["case1", "case2", "case3", "case4"];
    let dirs: Vec<PathBuf> = names.iter().map(|n| cases.join(n)).collect();
    assert!(dirs.iter().all(|d| d.join("trace_open_loop.csv").exists()));
    let report = dir.path().join("report");
    let mut args = vec!["report", "--truth", s(&f.validation), "--out", s(&report)];
    args.extend(dirs.iter().map(|d| s(d)));
    let out = tunnel_rom(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(report.join("summary.csv").exists());
    assert!(report
        .join("case1")
        .join("plots")
        .join("temperature_node3.csv")
        .exists());
}

#[test]
fn bad_input_exits_with_config_error() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let est = |sensors: &str| {
        tunnel_rom(&[
            "estimate",
            "--model",
            s(&f.model),
            "--data",
            s(&f.validation),
            "--sensors",
            sensors,
            "--out",
            s(dir.path()),
        ])
    };
    assert_eq!(code(&est("11")), 2);
    assert_eq!(code(&est("0,3")), 2);
    assert_eq!(
        code(&tunnel_rom(&[
            "report",
            "--truth",
            s(&f.validation),
            "--out",
            s(dir.path())
        ])),
        2
    );
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&tunnel_rom(&["reproduce-paper", "--config", s(&missing)])), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "solver_step = -1.0\n").unwrap();
    assert_eq!(
        code(&tunnel_rom(&[
            "simulate",
            "--config",
            s(&bad),
            "--out",
            s(&dir.path().join("x.csv"))
        ])),
        2
    );
}

#[test]
fn unobservable_layout_exits_with_numeric_failure() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = tunnel_rom(&[
        "estimate",
        "--model",
        s(&f.model),
        "--data",
        s(&f.validation),
        "--sensors",
        "5",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("observable"));
}

#[test]
fn reproduce_paper_writes_the_experiment_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = tunnel_rom(&["reproduce-paper", "--out", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for p in [
        "model.json",
        "runs/validation.csv",
        "cases/case4/trace_mhe.csv",
        "report/summary.txt",
        "experiment.toml",
    ] {
        assert!(dir.path().join(p).exists(), "{p} missing");
    }
}
