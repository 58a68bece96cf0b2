//! Shared domain types: tasks, actions, trajectory records, agent
//! configurations, and episode results.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvKind {
    #[serde(rename = "shopping")]
    Shopping,
    #[serde(rename = "wikiqa")]
    WikiQa,
}

impl EnvKind {
    /// The action grammar of this environment.
    pub fn grammar(self) -> BTreeSet<ActionKind> {
        match self {
            EnvKind::Shopping => [ActionKind::Search, ActionKind::Click].into_iter().collect(),
            EnvKind::WikiQa => [ActionKind::Search, ActionKind::Lookup, ActionKind::Finish]
                .into_iter()
                .collect(),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvKind::Shopping => write!(f, "shopping"),
            EnvKind::WikiQa => write!(f, "wikiqa"),
        }
    }
}

/// Hidden ground truth attached to a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundTruth {
    Shopping {
        target_product_id: String,
        required_attributes: BTreeSet<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        price_cap: Option<f64>,
    },
    WikiQa { gold_answer: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: String,
    pub instruction: String,
    pub env_kind: EnvKind,
    pub ground_truth: GroundTruth,
    pub complexity: u32,
}

impl Task {
    pub fn validate(&self) -> Result<()> {
        if self.instruction.trim().is_empty() {
            return Err(Error::Validation(format!("task {}: empty instruction", self.id)));
        }
        if self.complexity == 0 {
            return Err(Error::Validation(format!("task {}: complexity must be positive", self.id)));
        }
        match (&self.env_kind, &self.ground_truth) {
            (EnvKind::Shopping, GroundTruth::Shopping { required_attributes, .. }) => {
                if required_attributes.is_empty() {
                    return Err(Error::Validation(format!(
                        "task {}: shopping ground truth needs at least one required attribute",
                        self.id
                    )));
                }
                if required_attributes.len() as u32 != self.complexity {
                    return Err(Error::Validation(format!(
                        "task {}: complexity {} does not match {} required attributes",
                        self.id,
                        self.complexity,
                        required_attributes.len()
                    )));
                }
            }
            (EnvKind::WikiQa, GroundTruth::WikiQa { gold_answer }) => {
                if gold_answer.trim().is_empty() {
                    return Err(Error::Validation(format!("task {}: empty gold answer", self.id)));
                }
                if !(1..=3).contains(&self.complexity) {
                    return Err(Error::Validation(format!(
                        "task {}: wikiqa complexity must be 1 (easy), 2 (medium) or 3 (hard), got {}",
                        self.id, self.complexity
                    )));
                }
            }
            _ => {
                return Err(Error::Validation(format!(
                    "task {}: ground truth does not match env kind {}",
                    self.id, self.env_kind
                )));
            }
        }
        Ok(())
    }
}

/// Complexity level of a task: the number of required attributes for shopping
/// (price caps are not counted), or the stored difficulty tier for wiki QA.
pub fn task_complexity(task: &Task) -> Result<u32> {
    task.validate()?;
    match &task.ground_truth {
        GroundTruth::Shopping { required_attributes, .. } => Ok(required_attributes.len() as u32),
        GroundTruth::WikiQa { .. } => Ok(task.complexity),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    Click,
    Lookup,
    Finish,
}

impl ActionKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ActionKind::Search => "search",
            ActionKind::Click => "click",
            ActionKind::Lookup => "lookup",
            ActionKind::Finish => "finish",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// A typed environment command parsed from raw model text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Search(String),
    Click(String),
    Lookup(String),
    Finish(String),
}

impl Action {
    pub fn new(kind: ActionKind, payload: impl Into<String>) -> Result<Action> {
        let payload = payload.into().trim().to_string();
        if payload.is_empty() {
            return Err(Error::Validation(format!("{} action with empty payload", kind)));
        }
        Ok(match kind {
            ActionKind::Search => Action::Search(payload),
            ActionKind::Click => Action::Click(payload),
            ActionKind::Lookup => Action::Lookup(payload),
            ActionKind::Finish => Action::Finish(payload),
        })
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Search(_) => ActionKind::Search,
            Action::Click(_) => ActionKind::Click,
            Action::Lookup(_) => ActionKind::Lookup,
            Action::Finish(_) => ActionKind::Finish,
        }
    }

    pub fn payload(&self) -> &str {
        match self {
            Action::Search(p) | Action::Click(p) | Action::Lookup(p) | Action::Finish(p) => p,
        }
    }
}

impl fmt::Display for Action {
    /// Canonical surface form, e.g. `search[camera tripod]`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]", self.kind().keyword(), self.payload())
    }
}

#[derive(Serialize, Deserialize)]
struct ActionRepr {
    kind: ActionKind,
    payload: String,
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ActionRepr { kind: self.kind(), payload: self.payload().to_string() }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ActionRepr::deserialize(deserializer)?;
        Action::new(repr.kind, repr.payload).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordKind {
    Plan,
    Thought,
    Action,
    Observation,
    ParseFailure,
}

/// One entry in an episode's memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub kind: RecordKind,
    pub content: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<Action>,
    pub step_index: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent_id: Option<String>,
}

impl Record {
    pub fn plan(content: impl Into<String>, step_index: u32) -> Record {
        Record { kind: RecordKind::Plan, content: content.into(), action: None, step_index, agent_id: None }
    }

    pub fn thought(content: impl Into<String>, step_index: u32) -> Record {
        Record { kind: RecordKind::Thought, content: content.into(), action: None, step_index, agent_id: None }
    }

    /// An executed action; `content` keeps the raw model text.
    pub fn action(content: impl Into<String>, action: Action, step_index: u32) -> Record {
        Record {
            kind: RecordKind::Action,
            content: content.into(),
            action: Some(action),
            step_index,
            agent_id: None,
        }
    }

    pub fn observation(content: impl Into<String>, step_index: u32) -> Record {
        Record { kind: RecordKind::Observation, content: content.into(), action: None, step_index, agent_id: None }
    }

    pub fn parse_failure(content: impl Into<String>, step_index: u32) -> Record {
        Record { kind: RecordKind::ParseFailure, content: content.into(), action: None, step_index, agent_id: None }
    }

    pub fn with_agent(mut self, agent_id: impl Into<String>) -> Record {
        self.agent_id = Some(agent_id.into());
        self
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            RecordKind::Action => {
                if self.action.is_none() {
                    return Err(Error::Structural("action record without an action".into()));
                }
            }
            _ => {
                if self.action.is_some() {
                    return Err(Error::Structural(format!(
                        "{:?} record must not carry an action",
                        self.kind
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Completed,
    MaxSteps,
    Aborted,
}

/// Ordered episode memory. Appends are validated; a trajectory that was only
/// built through [`Trajectory::append`] satisfies the structural invariants:
/// at most one plan, the plan precedes every action, and every action is
/// answered by exactly one observation before the next action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    records: Vec<Record>,
    pub terminated: Option<Termination>,
}

impl Trajectory {
    pub fn new(task_id: impl Into<String>) -> Trajectory {
        Trajectory { task_id: task_id.into(), records: Vec::new(), terminated: None }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn plan(&self) -> Option<&Record> {
        self.records.iter().find(|r| r.kind == RecordKind::Plan)
    }

    pub fn last_step_index(&self) -> Option<u32> {
        self.records.last().map(|r| r.step_index)
    }

    /// Appends a record, enforcing the ordering invariants.
    pub fn append(&mut self, record: Record) -> Result<()> {
        record.validate()?;
        if let Some(last) = self.last_step_index() {
            if record.step_index < last {
                return Err(Error::Structural(format!(
                    "step index {} decreases below {}",
                    record.step_index, last
                )));
            }
        }
        match record.kind {
            RecordKind::Plan => {
                if self.plan().is_some() {
                    return Err(Error::Structural("second plan record".into()));
                }
                if self.records.iter().any(|r| r.kind == RecordKind::Action) {
                    return Err(Error::Structural("plan record after an action record".into()));
                }
            }
            RecordKind::Action => {
                if let Some(unanswered) = self.open_action() {
                    return Err(Error::Structural(format!(
                        "action at step {} has no observation yet",
                        unanswered.step_index
                    )));
                }
            }
            RecordKind::Observation => {
                // Observations answer the action or parse failure immediately
                // before them; anything else leaves them dangling.
                match self.records.last().map(|r| r.kind) {
                    Some(RecordKind::Action) | Some(RecordKind::ParseFailure) => {}
                    _ => {
                        return Err(Error::Structural(
                            "observation must follow an action or parse failure".into(),
                        ))
                    }
                }
            }
            RecordKind::Thought | RecordKind::ParseFailure => {}
        }
        self.records.push(record);
        Ok(())
    }

    /// The most recent action record that has not received an observation.
    fn open_action(&self) -> Option<&Record> {
        for r in self.records.iter().rev() {
            match r.kind {
                RecordKind::Observation => return None,
                RecordKind::Action => return Some(r),
                _ => {}
            }
        }
        None
    }

    pub fn finalize(&mut self, termination: Termination) {
        self.terminated = Some(termination);
    }

    pub fn action_records(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| r.kind == RecordKind::Action)
    }

    /// Count of records that consumed an episode step (actions and parse failures).
    pub fn step_records(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r.kind, RecordKind::Action | RecordKind::ParseFailure))
            .count()
    }
}

/// The three architecture flags plus per-episode limits. The five canonical
/// solo architectures are fixed points of the flag triple; labor agents under
/// the orchestrator use restricted `allowed_action_kinds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaaConfig {
    pub name: String,
    pub fewshot: bool,
    pub think: bool,
    pub plan: bool,
    pub max_steps: u32,
    pub context_limit: u32,
    pub allowed_action_kinds: BTreeSet<ActionKind>,
}

impl LaaConfig {
    /// Builds the named canonical architecture over an environment's grammar.
    pub fn canonical(arch: Architecture, env_kind: EnvKind, max_steps: u32, context_limit: u32) -> LaaConfig {
        let (fewshot, think, plan) = arch.flags();
        LaaConfig {
            name: arch.name().to_string(),
            fewshot,
            think,
            plan,
            max_steps,
            context_limit,
            allowed_action_kinds: env_kind.grammar(),
        }
    }

    /// Checks the canonical name/flag correspondence when the name is canonical.
    pub fn validate(&self) -> Result<()> {
        if self.allowed_action_kinds.is_empty() {
            return Err(Error::Config(format!("config {}: empty action grammar", self.name)));
        }
        if let Some(arch) = Architecture::from_name(&self.name) {
            if arch.flags() != (self.fewshot, self.think, self.plan) {
                return Err(Error::Config(format!(
                    "config {}: flags (fewshot={}, think={}, plan={}) do not match the canonical architecture",
                    self.name, self.fewshot, self.think, self.plan
                )));
            }
        }
        Ok(())
    }
}

/// The five solo architectures, identified by their flag triples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Zs,
    Zst,
    ReAct,
    PlanAct,
    PlanReAct,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Zs,
        Architecture::Zst,
        Architecture::ReAct,
        Architecture::PlanAct,
        Architecture::PlanReAct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Zs => "ZS",
            Architecture::Zst => "ZST",
            Architecture::ReAct => "ReAct",
            Architecture::PlanAct => "PlanAct",
            Architecture::PlanReAct => "PlanReAct",
        }
    }

    pub fn from_name(name: &str) -> Option<Architecture> {
        Architecture::ALL.into_iter().find(|a| a.name() == name)
    }

    /// (fewshot, think, plan)
    pub fn flags(self) -> (bool, bool, bool) {
        match self {
            Architecture::Zs => (false, false, false),
            Architecture::Zst => (false, true, false),
            Architecture::ReAct => (true, true, false),
            Architecture::PlanAct => (true, false, true),
            Architecture::PlanReAct => (true, true, true),
        }
    }

    pub fn from_flags(fewshot: bool, think: bool, plan: bool) -> Option<Architecture> {
        Architecture::ALL.into_iter().find(|a| a.flags() == (fewshot, think, plan))
    }
}

/// Final outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub task_id: String,
    pub reward: f64,
    /// 1 if the ground-truth product was ever shown on a results page,
    /// 0 otherwise. Absent for environments where recall is undefined.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<u8>,
    pub steps_used: u32,
    pub terminated: Termination,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_ref: Option<String>,
}

impl EpisodeResult {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.reward) {
            return Err(Error::Validation(format!("reward {} outside [0,1]", self.reward)));
        }
        if let Some(r) = self.recall {
            if r > 1 {
                return Err(Error::Validation(format!("recall {} outside {{0,1}}", r)));
            }
        }
        Ok(())
    }
}
