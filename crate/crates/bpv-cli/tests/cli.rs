//! End-to-end runs of the `bpv` binary: exit codes, verdict agreement
//! between the text and JSON formats, and the import/verify/query/trace
//! round trips on the shipped order-handling model.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn model_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models/handle-order")
}

fn bpv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpv")).args(args).output().expect("spawning bpv")
}

/// Run against the shipped model plus any extra arguments.
fn on_example(extra: &[&str]) -> Output {
    let dir = model_dir();
    let mut args = vec![
        "--bps".to_string(),
        dir.join("handle_order.bps").display().to_string(),
        "--triples".to_string(),
        dir.join("reference_ontology.dl").display().to_string(),
        "--ann".to_string(),
        dir.join("handle_order.ann").display().to_string(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    let args: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    bpv(&args)
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn tmp(name: &str, content: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("bpv-cli-{}-{name}", std::process::id()));
    fs::write(&path, content).unwrap();
    path
}

#[test]
fn verify_passes_on_the_example() {
    let out = on_example(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("option to complete: PASS"), "{text}");
    assert!(text.contains("result: PASS"), "{text}");
}

#[test]
fn compliance_query_reports_the_rule_violated() {
    // "Some run completes with the order never closed" — the reconstruction
    // violates the every-order-closed rule, so the query HOLDS.
    let q = "SELECT <> WHERE [EF (final(ho) AND t(?o,rdf:type,bro:Purchase_Order) \
             AND NOT t(?o,rdf:type,bro:ClosedPO)) | ho]";
    let out = on_example(&["query", q]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("result: HOLDS"), "{}", stdout(&out));

    let bound = q.replacen("<>", "?o", 1);
    let out = on_example(&["query", &bound, "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["result"]["rows"], serde_json::json!([["o"]]));
}

#[test]
fn space_counts_are_deterministic_across_runs() {
    let runs: Vec<serde_json::Value> = (0..2)
        .map(|_| {
            let out = on_example(&["space", "--format", "json"]);
            assert_eq!(out.status.code(), Some(0));
            serde_json::from_str(&stdout(&out)).unwrap()
        })
        .collect();
    assert_eq!(runs[0]["processes"][0]["states"], runs[1]["processes"][0]["states"]);
    assert_eq!(runs[0]["processes"][0]["transitions"], runs[1]["processes"][0]["transitions"]);
    assert_eq!(runs[0]["processes"][0]["states"], serde_json::json!(113));
}

#[test]
fn text_and_json_agree_on_failing_verdicts() {
    // An exclusive choice feeding a parallel join: one arm always starves,
    // so the process can never complete.
    let bps = "bp(p, s, e)\nstart_event(s)\nend_event(e)\nexc_branch(g)\npar_merge(m)\n\
               task(a)\ntask(b)\nseq(s,g,p)\nseq(g,a,p)\nseq(g,b,p)\nseq(a,m,p)\n\
               seq(b,m,p)\nseq(m,e,p)\n";
    let path = tmp("deadlock.bps", bps);
    let path = path.to_str().unwrap();

    let text_run = bpv(&["verify", "--bps", path]);
    assert_eq!(text_run.status.code(), Some(1));
    let text = stdout(&text_run);
    assert!(text.contains("option to complete: FAIL"), "{text}");
    assert!(text.contains("stuck after:"), "{text}");

    let json_run = bpv(&["verify", "--bps", path, "--format", "json"]);
    assert_eq!(json_run.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&json_run)).unwrap();
    assert_eq!(v["pass"], serde_json::json!(false));
    assert_eq!(v["processes"][0]["option_to_complete"]["pass"], serde_json::json!(false));
    assert!(v["processes"][0]["option_to_complete"]["witness"].is_object());
}

#[test]
fn validate_reports_structural_violations() {
    let path = tmp("malformed.bps", "bp(p, s, e)\nstart_event(s)\nend_event(e)\ntask(a)\n");
    let out = bpv(&["validate", "--bps", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("result: INVALID"), "{text}");
    assert!(text.contains("violation"), "{text}");
}

#[test]
fn input_errors_exit_with_two() {
    let out = bpv(&["verify", "--bps", "/nonexistent/model.bps"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("reading"), "{}", stderr(&out));

    let out = on_example(&["query", "SELECT ?x WHERE"]);
    assert_eq!(out.status.code(), Some(2));

    let out = on_example(&["space", "--process", "nope"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown process"), "{}", stderr(&out));

    let out = on_example(&["space", "--budget", "0"]);
    assert_eq!(out.status.code(), Some(2));

    let out = bpv(&["verify"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("--bps"), "{}", stderr(&out));
}

#[test]
fn bpmn_import_runs_end_to_end() {
    let xml = r#"<definitions xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL" id="d"
                   targetNamespace="http://example.com">
      <process id="p">
        <startEvent id="s"/>
        <subProcess id="sub">
          <startEvent id="ss"/><task id="inner"/><endEvent id="se"/>
          <sequenceFlow id="g1" sourceRef="ss" targetRef="inner"/>
          <sequenceFlow id="g2" sourceRef="inner" targetRef="se"/>
        </subProcess>
        <boundaryEvent id="oops" attachedToRef="sub"/>
        <exclusiveGateway id="m"/>
        <endEvent id="e"/>
        <sequenceFlow id="f1" sourceRef="s" targetRef="sub"/>
        <sequenceFlow id="f2" sourceRef="sub" targetRef="m"/>
        <sequenceFlow id="f3" sourceRef="oops" targetRef="m"/>
        <sequenceFlow id="f4" sourceRef="m" targetRef="e"/>
      </process>
    </definitions>"#;
    let path = tmp("import.bpmn", xml);
    let out = bpv(&["verify", "--bpmn", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("result: PASS"));

    let bad = xml.replace("exclusiveGateway", "eventBasedGateway");
    let path = tmp("unsupported.bpmn", &bad);
    let out = bpv(&["validate", "--bpmn", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unsupported element"), "{}", stderr(&out));
}

#[test]
fn generated_traces_replay_through_trace_check() {
    let out = on_example(&["trace-gen", "--max-len", "15", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["count"], serde_json::json!(1));
    let trace: Vec<String> = v["traces"][0]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a.as_str().unwrap().to_string())
        .collect();

    let path = tmp("replay.trace", &(trace.join("\n") + "\n"));
    let out = on_example(&["trace-check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("ACCEPTED"));

    // Truncating the trace leaves the process mid-flight: rejected.
    let short = trace[..trace.len() - 1].join("\n");
    let path = tmp("short.trace", &short);
    let out = on_example(&["trace-check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("REJECTED"));
}

#[test]
fn report_files_and_query_files_are_read() {
    let q = tmp(
        "query.q",
        "% every task assigned to the shipper\nSELECT ?a WHERE task(?a) AND \
         assigned(?a, shipper, ho)\n",
    );
    let report = std::env::temp_dir().join(format!("bpv-cli-{}-report.json", std::process::id()));
    let out = on_example(&[
        "query",
        q.to_str().unwrap(),
        "--format",
        "json",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).is_empty());
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["result"]["rows"], serde_json::json!([["delivering"]]));
}
