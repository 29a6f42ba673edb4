use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn edm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run edm")
}

#[test]
fn gen_is_deterministic_and_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let out = edm(dir.path(), &["gen-p2p", "--seed", "7", "--cases", "1000", "--out", "a.xes"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(start.elapsed() < Duration::from_secs(5));
    edm(dir.path(), &["gen-p2p", "--seed", "7", "--cases", "1000", "--out", "b.xes"]);
    edm(dir.path(), &["gen-p2p", "--seed", "8", "--cases", "1000", "--out", "c.xes"]);
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.xes"), read("b.xes"));
    assert_ne!(read("a.xes"), read("c.xes"));
}

#[test]
fn discover_lists_decision_points() {
    let dir = tempfile::tempdir().unwrap();
    edm(dir.path(), &["gen-p2p", "--cases", "200", "--out", "log.xes"]);
    let out = edm(dir.path(), &["--threads", "1", "discover", "--log", "log.xes", "--out", "net.pnml"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("Hold at customs"), "{stdout}");
    assert!(stdout.contains("Request Manager Approval"));
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.xes"), "").unwrap();
    let out = edm(dir.path(), &["discover", "--log", "empty.xes", "--out", "net.pnml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let out = edm(dir.path(), &["discover", "--log", "missing.xes", "--out", "net.pnml"]);
    assert_eq!(out.status.code(), Some(2));

    edm(dir.path(), &["gen-p2p", "--cases", "50", "--out", "log.xes"]);
    edm(dir.path(), &["discover", "--log", "log.xes", "--out", "net.pnml"]);
    let out = edm(dir.path(), &["mine", "--log", "log.xes", "--net", "net.pnml", "--dp", "nowhere", "--out", "m"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("log.csv"), "a,b\n1,2\n").unwrap();
    let out = edm(dir.path(), &["discover", "--log", "log.csv", "--out", "net.pnml"]);
    assert_eq!(out.status.code(), Some(2), "CSV without a mapping");

    let out = edm(dir.path(), &["gen-p2p", "--cases", "0", "--out", "x.xes"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_instance_feature_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    edm(d, &["gen-p2p", "--cases", "120", "--out", "log.xes"]);
    edm(d, &["discover", "--log", "log.xes", "--out", "net.pnml"]);
    std::fs::write(d.join("f.json"), r#"{"case_features":["origin","base price per item"]}"#).unwrap();
    // p1 is the approval choice right after the start in this net.
    let out = edm(d, &["mine", "--log", "log.xes", "--net", "net.pnml", "--dp", "p1", "--features", "f.json", "--kinds", "decision_tree", "--out", "m"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model.json", "background.json", "summary.json", "encoder.json", "situation_table.csv", "reports/decision_tree.json"] {
        assert!(d.join("m").join(f).exists(), "missing {f}");
    }
    std::fs::write(d.join("bad.json"), r#"{"case:colour":"red"}"#).unwrap();
    let out = edm(d, &["explain", "--model", "m", "--instance", "bad.json", "--out", "e"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(d.join("ok.json"), r#"{"features":{"case:origin":"EU"}}"#).unwrap();
    let out = edm(d, &["explain", "--model", "m", "--instance", "ok.json", "--out", "e"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(d.join("e/bar.svg")).unwrap().starts_with("<svg"));
}

#[test]
fn serve_answers_spec_requests() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_edm"))
        .args(["serve", "--port", "0", "--data-dir"])
        .arg(dir.path().join("data"))
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").unwrap_or_else(|| panic!("{line}")).to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(stream, "GET /spec HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    stream.read_to_string(&mut resp).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.contains("\"openapi\""));
}
