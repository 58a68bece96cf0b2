//! End-to-end CLI coverage: gen-fixtures, sample, run, report, and
//! validate-trace, including the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn laabench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laabench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, per_level: usize, levels: &str) -> std::path::PathBuf {
    let spec_path = dir.join("spec.json");
    let spec = format!(
        r#"{{
  "schema_version": 1,
  "env_kind": "shopping",
  "per_level_count": {per_level},
  "levels": [{levels}],
  "seed": 5,
  "architectures": ["ZS", {{"pool": "pool_shopping.json"}}],
  "backend": {{"kind": "purchase-oracle"}},
  "limits": {{"max_steps": 15, "context_limit": 2048}}
}}"#
    );
    std::fs::write(&spec_path, spec).unwrap();
    spec_path
}

#[test]
fn full_pipeline_run_report_validate() {
    let dir = tempfile::tempdir().unwrap();

    // fixtures into the spec's directory so the relative pool path resolves
    let gen = laabench(&["gen-fixtures", "--out", dir.path().to_str().unwrap()]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    assert!(dir.path().join("catalog.json").exists());
    assert!(dir.path().join("tasks_wikiqa.json").exists());

    let spec_path = write_spec(dir.path(), 2, "1, 2");
    let out_dir = dir.path().join("out");
    let run = laabench(&[
        "run",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--workers",
        "2",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("8 episodes executed"), "stdout: {stdout}");
    assert!(out_dir.join("results.json").exists());
    assert!(out_dir.join("per_level_reward.csv").exists());

    // resume executes nothing new
    let rerun = laabench(&[
        "run",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--resume",
    ]);
    assert!(rerun.status.success());
    assert!(String::from_utf8_lossy(&rerun.stdout).contains("0 episodes executed, 8 resumed"));

    let report = laabench(&["report", "--in", out_dir.to_str().unwrap(), "--format", "markdown"]);
    assert!(report.status.success());
    let report_text = String::from_utf8_lossy(&report.stdout);
    assert!(report_text.contains("### Mean reward"));
    assert!(report_text.contains("### Mean recall"));
    assert!(report_text.contains("1.0000"));

    let csv = laabench(&["report", "--in", out_dir.to_str().unwrap(), "--format", "csv"]);
    assert!(csv.status.success());
    assert!(String::from_utf8_lossy(&csv.stdout).contains("reward,purchase-oracle,ZS,1.0000"));

    // every written trace validates
    let traces: Vec<_> = std::fs::read_dir(out_dir.join("traces"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().map(|e| e == "jsonl").unwrap_or(false))
        .collect();
    assert_eq!(traces.len(), 8);
    for trace in traces {
        let validate = laabench(&["validate-trace", trace.to_str().unwrap()]);
        assert!(
            validate.status.success(),
            "{}: {}",
            trace.display(),
            String::from_utf8_lossy(&validate.stderr)
        );
    }
}

#[test]
fn debug_prompts_writes_sidecar_files() {
    let dir = tempfile::tempdir().unwrap();
    laabench(&["gen-fixtures", "--out", dir.path().to_str().unwrap()]);
    let spec_path = write_spec(dir.path(), 1, "1");
    let out_dir = dir.path().join("out");
    let run = laabench(&[
        "run",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--debug-prompts",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let sidecars: Vec<_> = std::fs::read_dir(out_dir.join("traces"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".prompts.jsonl"))
        .collect();
    assert_eq!(sidecars.len(), 2); // one per episode: ZS + pool
    let body = std::fs::read_to_string(&sidecars[0]).unwrap();
    let first: serde_json::Value = serde_json::from_str(body.lines().next().unwrap()).unwrap();
    assert!(first["text"].as_str().unwrap().contains("Instruction:"));
}

#[test]
fn sample_subcommand_writes_task_file() {
    let dir = tempfile::tempdir().unwrap();
    laabench(&["gen-fixtures", "--out", dir.path().to_str().unwrap()]);
    let universe = dir.path().join("tasks_shopping.json");
    let out = dir.path().join("sampled.json");
    let sample = laabench(&[
        "sample",
        "--universe",
        universe.to_str().unwrap(),
        "--per-level",
        "10",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
        "--levels",
        "1,2,3,4,5,6",
    ]);
    assert!(sample.status.success(), "{}", String::from_utf8_lossy(&sample.stderr));
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(parsed["tasks"].as_array().unwrap().len(), 60);
}

#[test]
fn exit_code_2_on_spec_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 9}"#).unwrap();
    let run = laabench(&["run", "--spec", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn exit_code_3_on_shortage() {
    let dir = tempfile::tempdir().unwrap();
    laabench(&["gen-fixtures", "--out", dir.path().to_str().unwrap()]);
    let spec_path = write_spec(dir.path(), 99, "1");
    let run = laabench(&[
        "run",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains("shortage at level 1"));
}

#[test]
fn exit_code_4_on_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    laabench(&["gen-fixtures", "--out", dir.path().to_str().unwrap()]);
    let spec_path = dir.path().join("remote.json");
    // nothing listens on this port: transport fails, retries exhaust
    std::fs::write(
        &spec_path,
        r#"{
  "schema_version": 1,
  "env_kind": "shopping",
  "per_level_count": 1,
  "levels": [1],
  "seed": 5,
  "architectures": ["ZS"],
  "backend": {"kind": "remote", "endpoint": "http://127.0.0.1:9/v1/chat/completions", "model": "m", "max_retries": 0, "timeout_secs": 2, "backoff_ms": 1},
  "limits": {"max_steps": 1}
}"#,
    )
    .unwrap();
    let run = laabench(&[
        "run",
        "--spec",
        spec_path.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    // the backend failed every executed episode: the run itself fails
    assert_eq!(run.status.code(), Some(4), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stderr).contains("backend"));

    // a missing results directory is a spec error, not a backend one
    let report = laabench(&["report", "--in", dir.path().join("nope").to_str().unwrap()]);
    assert_eq!(report.status.code(), Some(2));
}

#[test]
fn validate_trace_rejects_corrupt_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    std::fs::write(&path, "{broken\n{}\n").unwrap();
    let validate = laabench(&["validate-trace", path.to_str().unwrap()]);
    assert_eq!(validate.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&validate.stderr).contains("line 1"));
}
