//! Episode traces as JSON Lines: a header line, one line per record, and an
//! EpisodeResult footer. Field names are part of the stable trace contract.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::check_architecture_shape;
use crate::error::{Error, Result};
use crate::types::{
    Architecture, EnvKind, EpisodeResult, LaaConfig, RecordKind, Termination, Trajectory,
};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub task_id: String,
    pub config_name: String,
    pub seed: u64,
}

/// Writes header, records, and footer atomically (temp file + rename), so a
/// crash mid-write never leaves a half trace behind.
pub fn persist_trace(
    path: &Path,
    config_name: &str,
    seed: u64,
    trajectory: &Trajectory,
    result: &EpisodeResult,
) -> Result<()> {
    let header = TraceHeader {
        schema_version: TRACE_SCHEMA_VERSION,
        task_id: trajectory.task_id.clone(),
        config_name: config_name.to_string(),
        seed,
    };
    let mut buffer = Vec::new();
    writeln!(buffer, "{}", serde_json::to_string(&header)?)?;
    for record in trajectory.records() {
        writeln!(buffer, "{}", serde_json::to_string(record)?)?;
    }
    writeln!(buffer, "{}", serde_json::to_string(result)?)?;

    let tmp = path.with_extension("jsonl.tmp");
    std::fs::write(&tmp, &buffer)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a trace back, replaying every record through the trajectory
/// invariants. Errors name the offending 1-based line.
pub fn load_trace(path: &Path) -> Result<(TraceHeader, Trajectory, EpisodeResult)> {
    let raw = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = raw.lines().collect();
    if lines.len() < 2 {
        return Err(Error::Trace {
            line: lines.len().max(1),
            message: "trace needs at least a header and a footer".into(),
        });
    }
    let header: TraceHeader = serde_json::from_str(lines[0])
        .map_err(|e| Error::Trace { line: 1, message: format!("bad header: {e}") })?;
    if header.schema_version != TRACE_SCHEMA_VERSION {
        return Err(Error::Trace {
            line: 1,
            message: format!(
                "unsupported schema_version {} (expected {TRACE_SCHEMA_VERSION})",
                header.schema_version
            ),
        });
    }
    let footer_line = lines.len();
    let result: EpisodeResult = serde_json::from_str(lines[footer_line - 1])
        .map_err(|e| Error::Trace { line: footer_line, message: format!("bad footer: {e}") })?;
    result
        .validate()
        .map_err(|e| Error::Trace { line: footer_line, message: e.to_string() })?;

    let mut trajectory = Trajectory::new(&header.task_id);
    for (i, line) in lines[1..footer_line - 1].iter().enumerate() {
        let line_no = i + 2;
        let record = serde_json::from_str(line)
            .map_err(|e| Error::Trace { line: line_no, message: format!("bad record: {e}") })?;
        trajectory
            .append(record)
            .map_err(|e| Error::Trace { line: line_no, message: e.to_string() })?;
    }
    trajectory.finalize(result.terminated);
    Ok((header, trajectory, result))
}

/// Structural and architecture-shape validation of a stored trace, given
/// only what the file carries. Canonical config names get the full
/// plan/think theorems (unless the episode aborted mid-flight); orchestrated
/// traces get the attribution check instead.
pub fn validate_trace(path: &Path) -> Result<String> {
    let (header, trajectory, result) = load_trace(path)?;
    let mut checks = vec!["structure".to_string()];

    if result.steps_used as usize != trajectory.step_records() {
        return Err(Error::Validation(format!(
            "footer says {} steps but the trace holds {}",
            result.steps_used,
            trajectory.step_records()
        )));
    }

    // action kinds must fit a single environment grammar
    let used: std::collections::BTreeSet<_> = trajectory
        .action_records()
        .map(|r| r.action.as_ref().expect("action record").kind())
        .collect();
    let fits = [EnvKind::Shopping, EnvKind::WikiQa]
        .iter()
        .any(|env| used.is_subset(&env.grammar()));
    if !fits {
        return Err(Error::Validation(
            "trace mixes action kinds across environment grammars".into(),
        ));
    }
    checks.push("grammar".to_string());

    let attributed = trajectory.action_records().any(|r| r.agent_id.is_some());
    if let Some(arch) = Architecture::from_name(&header.config_name) {
        if result.terminated != Termination::Aborted {
            let (fewshot, think, plan) = arch.flags();
            let config = LaaConfig {
                name: header.config_name.clone(),
                fewshot,
                think,
                plan,
                max_steps: u32::MAX,
                context_limit: u32::MAX,
                allowed_action_kinds: EnvKind::Shopping
                    .grammar()
                    .union(&EnvKind::WikiQa.grammar())
                    .copied()
                    .collect(),
            };
            check_architecture_shape(&trajectory, &config)?;
            checks.push(format!("shape({})", header.config_name));
        }
    } else if attributed {
        for r in trajectory.records() {
            if r.kind == RecordKind::Action && r.agent_id.is_none() {
                return Err(Error::Validation(format!(
                    "action at step {} lacks agent attribution",
                    r.step_index
                )));
            }
        }
        checks.push("attribution".to_string());
    }

    Ok(format!(
        "{}: {} records, terminated {:?}, checks passed: {}",
        header.task_id,
        trajectory.records().len(),
        result.terminated,
        checks.join(", ")
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Action, Record};

    fn sample() -> (Trajectory, EpisodeResult) {
        let mut t = Trajectory::new("task-1");
        t.append(Record::plan("plan body", 0)).unwrap();
        t.append(Record::action("search[x]", Action::Search("x".into()), 0)).unwrap();
        t.append(Record::observation("[Results] 1. item", 0)).unwrap();
        t.finalize(Termination::Completed);
        let result = EpisodeResult {
            task_id: "task-1".into(),
            reward: 1.0,
            recall: Some(1),
            steps_used: 1,
            terminated: Termination::Completed,
            trajectory_ref: Some("task-1.jsonl".into()),
        };
        (t, result)
    }

    #[test]
    fn round_trip_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let (trajectory, result) = sample();
        persist_trace(&path, "PlanAct", 7, &trajectory, &result).unwrap();
        let (header, got_t, got_r) = load_trace(&path).unwrap();
        assert_eq!(header.config_name, "PlanAct");
        assert_eq!(header.seed, 7);
        assert_eq!(got_t, trajectory);
        assert_eq!(got_r, result);
    }

    #[test]
    fn trace_lines_carry_the_stable_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let (trajectory, result) = sample();
        persist_trace(&path, "PlanAct", 7, &trajectory, &result).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = raw.lines().collect();
        assert_eq!(
            lines[0],
            r#"{"schema_version":1,"task_id":"task-1","config_name":"PlanAct","seed":7}"#
        );
        assert_eq!(lines[1], r#"{"kind":"Plan","content":"plan body","step_index":0}"#);
        assert_eq!(
            lines[2],
            r#"{"kind":"Action","content":"search[x]","action":{"kind":"search","payload":"x"},"step_index":0}"#
        );
        assert_eq!(
            lines[4],
            r#"{"task_id":"task-1","reward":1.0,"recall":1,"steps_used":1,"terminated":"Completed","trajectory_ref":"task-1.jsonl"}"#
        );
    }

    #[test]
    fn truncated_file_errors_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let (trajectory, result) = sample();
        persist_trace(&path, "PlanAct", 7, &trajectory, &result).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = full.lines().collect();
        lines.pop(); // drop the footer: the last record line is no result
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = load_trace(&path).unwrap_err();
        match err {
            Error::Trace { line, .. } => assert_eq!(line, 4),
            other => panic!("expected trace error, got {other:?}"),
        }
    }

    #[test]
    fn corrupt_record_names_its_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let (trajectory, result) = sample();
        persist_trace(&path, "ZS", 7, &trajectory, &result).unwrap();
        let full = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = full.lines().map(String::from).collect();
        lines[2] = "{not json".into();
        std::fs::write(&path, lines.join("\n")).unwrap();
        match load_trace(&path).unwrap_err() {
            Error::Trace { line, .. } => assert_eq!(line, 3),
            other => panic!("expected trace error, got {other:?}"),
        }
    }

    #[test]
    fn header_and_footer_only_is_a_valid_empty_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut t = Trajectory::new("task-2");
        t.finalize(Termination::MaxSteps);
        let result = EpisodeResult {
            task_id: "task-2".into(),
            reward: 0.0,
            recall: Some(0),
            steps_used: 0,
            terminated: Termination::MaxSteps,
            trajectory_ref: None,
        };
        persist_trace(&path, "ZS", 0, &t, &result).unwrap();
        let (_, got, _) = load_trace(&path).unwrap();
        assert!(got.records().is_empty());
    }

    #[test]
    fn validate_trace_checks_shape_for_canonical_names() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let (trajectory, result) = sample();
        // the sample has a plan but ZS must not plan
        persist_trace(&path, "ZS", 7, &trajectory, &result).unwrap();
        assert!(validate_trace(&path).is_err());
        persist_trace(&path, "PlanAct", 7, &trajectory, &result).unwrap();
        let summary = validate_trace(&path).unwrap();
        assert!(summary.contains("shape(PlanAct)"));
    }
}
