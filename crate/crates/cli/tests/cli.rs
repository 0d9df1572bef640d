use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

const POP_CSV: &str = "id,reported_value,true_f\n\
a,50,0.2\nb,30,0.4\nc,20,0\nd,12,0.9\ne,7,0.05\nf,3,1\ng,40,0.1\nh,25,0.3\n";

fn rlfa(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rlfa"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn rlfa_stdin(args: &[&str], dir: &Path, input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_rlfa"))
        .args(args)
        .current_dir(dir)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

fn workdir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pop.csv"), POP_CSV).unwrap();
    dir
}

const SCENARIO: &str = r#"{
  "n": 60, "n1_frac": 0.2, "f_mode": "prop_pi",
  "epsilon": 0.05, "delta": 0.05, "trials": 6, "seed": 4, "grid_size": 201
}"#;

#[test]
fn audit_rerun_is_byte_identical() {
    let dir = workdir();
    let args = [
        "audit", "--population", "pop.csv", "--epsilon", "0.05", "--delta", "0.05",
        "--strategy", "propM", "--cs", "betting", "--seed", "17",
    ];
    let a = rlfa(&args, dir.path());
    let b = rlfa(&args, dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", text(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let out = text(&a.stdout);
    assert!(out.contains("\ntau: "), "{out}");
    assert!(out.contains("\ninterval: ["), "{out}");
    assert!(!out.contains("seed:"), "seed was given, nothing to report");
}

#[test]
fn audit_without_seed_reports_the_seed_it_chose() {
    let dir = workdir();
    let a = rlfa(&["audit", "--population", "pop.csv"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    let out = text(&a.stdout);
    let first = out.lines().next().unwrap();
    let seed = first.strip_prefix("seed: ").expect("seed line first");
    let b = rlfa(&["audit", "--population", "pop.csv", "--seed", seed], dir.path());
    assert_eq!(out.split_once('\n').unwrap().1, text(&b.stdout));
}

#[test]
fn every_family_and_strategy_runs() {
    let dir = workdir();
    for cs in ["betting", "hoeffding", "empirical_bernstein"] {
        for strategy in ["uniform", "propM", "oracle"] {
            let o = rlfa(
                &["audit", "--population", "pop.csv", "--cs", cs, "--strategy", strategy, "--seed", "1"],
                dir.path(),
            );
            assert_eq!(o.status.code(), Some(0), "{cs}/{strategy}: {}", text(&o.stderr));
        }
    }
    let o = rlfa(
        &["audit", "--population", "pop.csv", "--control-variates", "--batch-size", "3", "--grid", "101", "--seed", "2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
}

#[test]
fn replay_prints_the_audit_trace() {
    let dir = workdir();
    let a = rlfa(
        &["audit", "--population", "pop.csv", "--seed", "5", "--save", "s.json"],
        dir.path(),
    );
    assert_eq!(a.status.code(), Some(0));
    let r = rlfa(&["replay", "s.json"], dir.path());
    assert_eq!(r.status.code(), Some(0), "{}", text(&r.stderr));
    let audit_out = text(&a.stdout);
    let replay_out = text(&r.stdout);
    let widths = |s: &str| -> Vec<String> {
        s.lines()
            .filter(|l| l.starts_with("t="))
            .map(|l| l.rsplit_once(" interval ").unwrap().1.to_string())
            .collect()
    };
    assert_eq!(widths(&audit_out), widths(&replay_out));
    let last = |s: &str, key: &str| s.lines().find(|l| l.starts_with(key)).map(str::to_string);
    assert_eq!(last(&audit_out, "tau:"), last(&replay_out, "tau:"));
    assert_eq!(last(&audit_out, "interval:"), last(&replay_out, "interval:"));
}

#[test]
fn interactive_audit_reads_stdin() {
    let dir = workdir();
    std::fs::write(dir.path().join("p.csv"), "id,reported_value\nx,50\ny,30\n").unwrap();
    let o = rlfa_stdin(
        &["audit", "--population", "p.csv", "--seed", "1"],
        dir.path(),
        "2\n0.3\n0.2\n",
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("t=1 audit index x (weight 0.625), enter f:"), "{out}");
    assert!(out.contains("f must be a number in [0, 1]"), "{out}");
    assert!(out.contains("interval: [0.2625, 0.2625]"), "{out}");

    let o = rlfa_stdin(&["audit", "--population", "p.csv", "--seed", "1"], dir.path(), "0.3\n");
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).starts_with("error: input: "));
}

#[test]
fn usage_errors_exit_2() {
    let dir = workdir();
    for args in [
        vec!["simulate"],
        vec!["audit", "--population", "pop.csv", "--strategy", "bogus"],
        vec!["audit", "--population", "pop.csv", "--frobnicate"],
        vec!["nonsense"],
    ] {
        let o = rlfa(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = text(&o.stderr);
        assert!(err.starts_with("error: usage: "), "{err}");
        assert_eq!(err.lines().count(), 1, "{err}");
    }
}

#[test]
fn runtime_errors_exit_1() {
    let dir = workdir();
    std::fs::write(dir.path().join("bad.csv"), "id,reported_value\na,50\nb,-3\n").unwrap();
    let o = rlfa(&["audit", "--population", "bad.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).starts_with("error: validation: "), "{}", text(&o.stderr));

    let o = rlfa(&["audit", "--population", "missing.csv"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).starts_with("error: io: "));

    let o = rlfa(&["audit", "--population", "pop.csv", "--epsilon", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).starts_with("error: config: "), "{}", text(&o.stderr));

    std::fs::write(dir.path().join("sc.json"), "{not json").unwrap();
    let o = rlfa(&["simulate", "--config", "sc.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(text(&o.stderr).starts_with("error: format: "));
}

#[test]
fn simulate_writes_results_reproducibly() {
    let dir = workdir();
    std::fs::write(dir.path().join("scenario.json"), SCENARIO).unwrap();
    for out in ["r1", "r2"] {
        let o = rlfa(&["simulate", "--config", "scenario.json", "--out", out], dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    }
    for file in ["summary.json", "trials.csv", "widths.csv"] {
        let a = std::fs::read(dir.path().join("r1").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("r2").join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file}");
    }
    let trials = std::fs::read_to_string(dir.path().join("r1/trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 7);

    // flags override the scenario file
    let o = rlfa(
        &["simulate", "--config", "scenario.json", "--out", "r3", "--trials", "2", "--cs", "hoeffding"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("r3/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenario"]["trials"], 2);
    assert_eq!(summary["methods"][0]["label"], "propM+hoeffding");
}

#[test]
fn sweep_cv_writes_gain_table() {
    let dir = workdir();
    std::fs::write(dir.path().join("scenario.json"), SCENARIO).unwrap();
    let o = rlfa(
        &["sweep-cv", "--config", "scenario.json", "--out", "cv", "--c", "0.2,0.8", "--trials", "3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", text(&o.stderr));
    let points: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cv/cv_gain.json")).unwrap()).unwrap();
    assert_eq!(points.as_array().unwrap().len(), 2);
    assert!(dir.path().join("cv/cv_gain.csv").exists());
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    stream.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn serve_answers_http() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_rlfa"))
        .args(["serve", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let reply = loop {
        if let Some(r) = http_get(port, "/sessions/unknown") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(reply.starts_with("HTTP/1.1 404"), "{reply}");
    assert!(reply.contains("\"not_found\""), "{reply}");
}
