//! End-to-end tests driving the `arise` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde_json::Value;

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arise"))
}

fn f1_root() -> PathBuf {
    arise_testkit::f1_root()
}

fn data(path: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(path)
}

fn build_graph_file(dir: &Path, mode: &str) -> PathBuf {
    let out = dir.join(format!("graph-{mode}.jsonl"));
    let status = binary()
        .args(["build"])
        .arg(f1_root())
        .args(["--mode", mode, "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    out
}

#[test]
fn build_full_writes_statement_nodes() {
    let dir = tempfile::tempdir().unwrap();
    let path = build_graph_file(dir.path(), "full");
    let graph = arise_core::persist::load_from_path(&path).unwrap();
    assert_eq!(graph.count_kind(arise_core::NodeKind::Statement), 7);
}

#[test]
fn build_coarse_has_no_statements_or_dataflow() {
    let dir = tempfile::tempdir().unwrap();
    let path = build_graph_file(dir.path(), "coarse");
    let graph = arise_core::persist::load_from_path(&path).unwrap();
    assert_eq!(graph.count_kind(arise_core::NodeKind::Statement), 0);
    assert_eq!(graph.edges().filter(|e| e.kind.is_dataflow()).count(), 0);
}

#[test]
fn build_unreadable_path_fails_with_stderr() {
    let output = binary()
        .args(["build", "/nonexistent/nowhere", "--out", "/tmp/never.jsonl"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn serve_rejects_corrupt_graph_file() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let bytes = std::fs::read(&graph).unwrap();
    let corrupt = dir.path().join("corrupt.jsonl");
    std::fs::write(&corrupt, &bytes[..bytes.len() / 2]).unwrap();
    let output = binary()
        .arg("serve")
        .arg(&corrupt)
        .arg("--repo")
        .arg(f1_root())
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("corrupt"));
}

#[test]
fn serve_stdio_survives_malformed_requests() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let mut child = binary()
        .arg("serve")
        .arg(&graph)
        .arg("--repo")
        .arg(f1_root())
        .args(["--transport", "stdio"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        stdin.write_all(b"this is not json\n").unwrap();
        stdin
            .write_all(
                br#"{"id":"ok1","tool":"get_code_span","arguments":{"file":"pkg/util.py","start_line":1,"end_line":1}}"#,
            )
            .unwrap();
        stdin.write_all(b"\n").unwrap();
    }
    let output = child.wait_with_output().unwrap();
    assert!(output.status.success());
    let lines: Vec<Value> = String::from_utf8(output.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["error"]["code"], "parse_error");
    assert_eq!(lines[1]["ok"], true);
    assert_eq!(lines[1]["result"]["text"], "def inc(a):");
}

#[test]
fn replay_golden_trace_succeeds_and_reports_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let trace = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/f1_trace.jsonl");
    let output = binary()
        .arg("replay")
        .arg(&trace)
        .arg(&graph)
        .arg("--repo")
        .arg(f1_root())
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8(output.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 10); // 9 transcript entries + ledger
    let ledger: Value = serde_json::from_str(lines[9]).unwrap();
    assert!(ledger["ledger"]["total"].as_u64().unwrap() > 0);
}

#[test]
fn replay_mismatch_exits_2_naming_request_id() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let trace = dir.path().join("bad_trace.jsonl");
    std::fs::write(
        &trace,
        concat!(
            r#"{"request":{"id":"weird7","tool":"get_code_span","arguments":{"file":"pkg/util.py","start_line":1,"end_line":1}},"#,
            r#""expect":{"id":"weird7","ok":true,"result":{"text":"NOT THIS","clamped":false}}}"#,
            "\n"
        ),
    )
    .unwrap();
    let output = binary()
        .arg("replay")
        .arg(&trace)
        .arg(&graph)
        .arg("--repo")
        .arg(f1_root())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("weird7"));
}

#[test]
fn eval_toy_instance_matches_hand_computed_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let report_path = dir.path().join("report.json");
    let output = binary()
        .arg("eval")
        .arg(data("predictions.jsonl"))
        .arg(data("gold"))
        .arg(&graph)
        .arg("--repo")
        .arg(f1_root())
        .args(["--budget", "8000"])
        .arg("--out")
        .arg(&report_path)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let table = String::from_utf8(output.stdout).unwrap();
    assert!(table.contains("f1_demo"));
    assert!(table.contains("MEAN(2)"));

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let demo = &report["per_instance"][0];
    assert_eq!(demo["instance_id"], "f1_demo");
    assert_eq!(demo["file_r1"], 1.0);
    assert_eq!(demo["file_mrr"], 1.0);
    assert_eq!(demo["function_r1"], 1.0);
    assert_eq!(demo["function_f1_at_3"], 0.5);
    assert_eq!(demo["line_r1"], 1.0);
    let iou = demo["line_iou"].as_f64().unwrap();
    assert!((iou - 1.0 / 7.0).abs() < 1e-12);
    assert_eq!(demo["coverage_at_budget"], 1.0);

    // The instance with no prediction row scores zero and is flagged.
    let missing = &report["per_instance"][1];
    assert_eq!(missing["instance_id"], "f1_missing");
    assert_eq!(missing["missing_prediction"], true);
    assert_eq!(missing["file_r1"], 0.0);
    assert_eq!(missing["function_mrr"], 0.0);
    assert_eq!(report["aggregate"]["missing_predictions"], 1);
    assert_eq!(report["aggregate"]["file_r1"], 0.5);
}

#[test]
fn eval_malformed_predictions_line_fails_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let bad = dir.path().join("bad_predictions.jsonl");
    std::fs::write(&bad, "{\"instance_id\":\"a\",\"predictions\":[]}\n{oops}\n").unwrap();
    let output = binary()
        .arg("eval")
        .arg(&bad)
        .arg(data("gold"))
        .arg(&graph)
        .arg("--repo")
        .arg(f1_root())
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 2"));
}

#[test]
fn http_transport_answers_posts_and_rejects_other_routes() {
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpStream;

    let dir = tempfile::tempdir().unwrap();
    let graph = build_graph_file(dir.path(), "full");
    let port = 17_341u16;
    let mut child = binary()
        .arg("serve")
        .arg(&graph)
        .arg("--repo")
        .arg(f1_root())
        .args(["--transport", "http", "--port", &port.to_string()])
        .spawn()
        .unwrap();

    let deadline = std::time::Instant::now() + std::time::Duration::from_secs(10);
    let mut stream = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(stream) => break stream,
            Err(_) if std::time::Instant::now() < deadline => {
                std::thread::sleep(std::time::Duration::from_millis(50))
            }
            Err(err) => panic!("server did not come up: {err}"),
        }
    };

    let body = r#"{"id":"h1","tool":"search_entities","arguments":{"query":"inc","k":1}}"#;
    write!(
        stream,
        "POST /tool HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        body.len(),
        body
    )
    .unwrap();
    let mut reader = BufReader::new(&stream);
    let mut status_line = String::new();
    reader.read_line(&mut status_line).unwrap();
    assert!(status_line.contains("200"), "{status_line}");
    let mut response = String::new();
    reader.read_to_string(&mut response).unwrap();
    let json_start = response.find("{").unwrap();
    let parsed: Value = serde_json::from_str(response[json_start..].trim()).unwrap();
    assert_eq!(parsed["id"], "h1");
    assert_eq!(parsed["ok"], true);

    let mut other = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        other,
        "GET /nope HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut reply = String::new();
    BufReader::new(&other).read_line(&mut reply).unwrap();
    assert!(reply.contains("404"), "{reply}");

    child.kill().unwrap();
    let _ = child.wait();
}
