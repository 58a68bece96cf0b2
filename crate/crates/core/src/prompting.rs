//! Prompt assembly for the five solo architectures and the orchestrator's
//! labor messages: zeroshot action prompts, think prompts, fewshot blocks,
//! plan prompts, and memory truncation under a token budget.
//!
//! Template wording lives in `templates/*.txt` so prompt changes stay
//! diffable; fewshot and plan examples ship as JSON fixture files, one per
//! environment.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::estimate_tokens;
use crate::types::{ActionKind, EnvKind, LaaConfig, Record, RecordKind, Task, Trajectory};

pub const ACTION_CUE: &str = "Action:";
pub const THINK_CUE: &str = "Think:";
pub const PLAN_CUE: &str = "Plan:";
/// Header that opens the fewshot block. Present in a rendered prompt iff the
/// config has the fewshot flag.
pub const FEWSHOT_HEADER: &str = "Worked examples:";

const SHOPPING_PREAMBLE: &str = include_str!("../templates/shopping_preamble.txt");
const WIKIQA_PREAMBLE: &str = include_str!("../templates/wikiqa_preamble.txt");
const SHOPPING_ACTION_DOCS: &str = include_str!("../templates/shopping_action_docs.txt");
const WIKIQA_ACTION_DOCS: &str = include_str!("../templates/wikiqa_action_docs.txt");
const THINK_DOC: &str = include_str!("../templates/think_doc.txt");

const BUILTIN_FEWSHOT_SHOPPING: &str = include_str!("../fixtures/fewshot_shopping.json");
const BUILTIN_FEWSHOT_WIKIQA: &str = include_str!("../fixtures/fewshot_wikiqa.json");
const BUILTIN_PLANS_SHOPPING: &str = include_str!("../fixtures/plans_shopping.json");
const BUILTIN_PLANS_WIKIQA: &str = include_str!("../fixtures/plans_wikiqa.json");

/// One step of a worked interaction example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewshotStep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thought: Option<String>,
    pub action: crate::types::Action,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewshotExample {
    pub instruction: String,
    pub env_kind: EnvKind,
    pub steps: Vec<FewshotStep>,
}

impl FewshotExample {
    pub fn validate(&self) -> Result<()> {
        let grammar = self.env_kind.grammar();
        for step in &self.steps {
            if !grammar.contains(&step.action.kind()) {
                return Err(Error::Validation(format!(
                    "fewshot example uses {} outside the {} grammar",
                    step.action.kind(),
                    self.env_kind
                )));
            }
        }
        Ok(())
    }
}

/// A previous successful plan, used by the fewshot plan prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExample {
    pub instruction: String,
    pub plan: String,
}

pub fn load_fewshot_file(path: &Path) -> Result<Vec<FewshotExample>> {
    let raw = std::fs::read_to_string(path)?;
    let examples: Vec<FewshotExample> = serde_json::from_str(&raw)?;
    for e in &examples {
        e.validate()?;
    }
    Ok(examples)
}

pub fn load_plan_file(path: &Path) -> Result<Vec<PlanExample>> {
    let raw = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&raw)?)
}

/// An assembled prompt, section by section. `render` produces the final text:
/// the preamble appears exactly once and the output ends with the cue.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub preamble: String,
    pub action_docs: String,
    pub fewshot_block: Option<String>,
    pub instruction: String,
    pub memory_block: String,
    pub cue: String,
}

impl PromptTemplate {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(self.preamble.trim_end());
        out.push_str("\n\n");
        out.push_str(self.action_docs.trim_end());
        out.push('\n');
        if let Some(fewshot) = &self.fewshot_block {
            out.push('\n');
            out.push_str(FEWSHOT_HEADER);
            out.push('\n');
            out.push_str(fewshot.trim_end());
            out.push('\n');
        }
        out.push_str("\nInstruction: ");
        out.push_str(&self.instruction);
        out.push('\n');
        out.push_str(&self.memory_block);
        out.push('\n');
        out.push_str(&self.cue);
        out
    }
}

/// Renders a single record as one memory line. Executed actions render in
/// canonical form; parse failures render the raw model text so the model can
/// see its own mistake next to the corrective observation.
pub fn render_record(record: &Record) -> String {
    match record.kind {
        RecordKind::Plan => format!("Plan: {}", record.content),
        RecordKind::Thought => format!("Thought: {}", record.content),
        RecordKind::Action => match &record.action {
            Some(action) => format!("Action: {action}"),
            None => format!("Action: {}", record.content),
        },
        RecordKind::ParseFailure => format!("Action: {}", record.content),
        RecordKind::Observation => format!("Observation: {}", record.content),
    }
}

fn render_records<'a>(records: impl Iterator<Item = &'a Record>) -> String {
    records.map(render_record).collect::<Vec<_>>().join("\n")
}

/// Renders the trajectory into a memory block that fits `budget` tokens.
/// The newest records are retained and the oldest dropped; the plan record,
/// if any, is pinned and only dropped when it alone exceeds the budget.
/// An observation is never kept without the action it answers.
pub fn truncate_memory(trajectory: &Trajectory, budget: u32) -> String {
    let plan: Vec<&Record> = trajectory.plan().into_iter().collect();
    let rest: Vec<&Record> = trajectory
        .records()
        .iter()
        .filter(|r| r.kind != RecordKind::Plan)
        .collect();

    for start in 0..=rest.len() {
        // an observation at the cut would dangle without its action
        if start < rest.len() && rest[start].kind == RecordKind::Observation {
            continue;
        }
        let rendered = render_records(plan.iter().chain(rest[start..].iter()).copied());
        if estimate_tokens(&rendered) <= budget {
            return rendered;
        }
    }
    String::new()
}

/// Environment-specific templates plus fewshot and plan example fixtures.
pub struct Prompter {
    env_kind: EnvKind,
    preamble: String,
    action_docs: BTreeMap<ActionKind, String>,
    think_doc: String,
    fewshot: Vec<FewshotExample>,
    plans: Vec<PlanExample>,
}

impl Prompter {
    /// Templates and examples shipped with the crate.
    pub fn builtin(env_kind: EnvKind) -> Prompter {
        let (preamble, docs_raw, fewshot_raw, plans_raw) = match env_kind {
            EnvKind::Shopping => (
                SHOPPING_PREAMBLE,
                SHOPPING_ACTION_DOCS,
                BUILTIN_FEWSHOT_SHOPPING,
                BUILTIN_PLANS_SHOPPING,
            ),
            EnvKind::WikiQa => (
                WIKIQA_PREAMBLE,
                WIKIQA_ACTION_DOCS,
                BUILTIN_FEWSHOT_WIKIQA,
                BUILTIN_PLANS_WIKIQA,
            ),
        };
        let fewshot: Vec<FewshotExample> =
            serde_json::from_str(fewshot_raw).expect("builtin fewshot fixture parses");
        let plans: Vec<PlanExample> =
            serde_json::from_str(plans_raw).expect("builtin plan fixture parses");
        Prompter {
            env_kind,
            preamble: preamble.trim_end().to_string(),
            action_docs: parse_action_docs(docs_raw),
            think_doc: THINK_DOC.trim_end().to_string(),
            fewshot,
            plans,
        }
    }

    pub fn with_fewshot(mut self, examples: Vec<FewshotExample>) -> Prompter {
        self.fewshot = examples;
        self
    }

    pub fn with_plans(mut self, plans: Vec<PlanExample>) -> Prompter {
        self.plans = plans;
        self
    }

    pub fn env_kind(&self) -> EnvKind {
        self.env_kind
    }

    fn docs_for(&self, kinds: impl Iterator<Item = ActionKind>, include_think: bool) -> String {
        let mut lines: Vec<&str> = kinds
            .filter_map(|k| self.action_docs.get(&k).map(String::as_str))
            .collect();
        if include_think {
            lines.push(&self.think_doc);
        }
        lines.join("\n")
    }

    fn fewshot_block(&self, config: &LaaConfig) -> Option<String> {
        if !config.fewshot {
            return None;
        }
        let rendered: Vec<String> = self
            .fewshot
            .iter()
            .map(|example| {
                let mut lines = vec![format!("Example task: {}", example.instruction)];
                for step in &example.steps {
                    if config.think {
                        if let Some(thought) = &step.thought {
                            lines.push(format!("Thought: {thought}"));
                        }
                    }
                    lines.push(format!("Action: {}", step.action));
                    lines.push(format!("Observation: {}", step.observation));
                }
                lines.join("\n")
            })
            .collect();
        Some(rendered.join("\n\n"))
    }

    fn template(
        &self,
        task: &Task,
        config: &LaaConfig,
        cue: &str,
        include_think_doc: bool,
        specialty: Option<ActionKind>,
    ) -> PromptTemplate {
        let kinds: Vec<ActionKind> = match specialty {
            Some(kind) => vec![kind],
            None => config.allowed_action_kinds.iter().copied().collect(),
        };
        PromptTemplate {
            preamble: self.preamble.clone(),
            action_docs: self.docs_for(kinds.into_iter(), include_think_doc),
            fewshot_block: self.fewshot_block(config),
            instruction: task.instruction.clone(),
            memory_block: String::new(),
            cue: cue.to_string(),
        }
    }

    /// Fills the memory block with the largest trajectory suffix that keeps
    /// the whole prompt within `budget` tokens.
    fn fit(&self, mut template: PromptTemplate, trajectory: &Trajectory, budget: u32) -> Result<String> {
        let overhead = estimate_tokens(&template.render());
        if overhead > budget {
            return Err(Error::Budget(format!(
                "budget {budget} cannot hold the prompt skeleton ({overhead} tokens) for '{}'",
                template.instruction
            )));
        }
        template.memory_block = truncate_memory(trajectory, budget - overhead);
        let rendered = template.render();
        debug_assert!(estimate_tokens(&rendered) <= budget);
        Ok(rendered)
    }

    /// The prompt that elicits the next environment action.
    pub fn build_action_prompt(
        &self,
        task: &Task,
        trajectory: &Trajectory,
        config: &LaaConfig,
        budget: u32,
    ) -> Result<String> {
        self.fit(self.template(task, config, ACTION_CUE, false, None), trajectory, budget)
    }

    /// The self-think prompt. Requires the think flag.
    pub fn build_think_prompt(
        &self,
        task: &Task,
        trajectory: &Trajectory,
        config: &LaaConfig,
        budget: u32,
    ) -> Result<String> {
        if !config.think {
            return Err(Error::Contract(format!(
                "think prompt requested for config {} with think=false",
                config.name
            )));
        }
        self.fit(self.template(task, config, THINK_CUE, true, None), trajectory, budget)
    }

    /// The fewshot plan prompt, built from previous successful plans. The
    /// earliest examples are dropped first when over budget; at least one is
    /// always retained.
    pub fn build_plan_prompt(&self, task: &Task, budget: u32) -> Result<String> {
        self.build_plan_prompt_with(task, &self.plans, budget)
    }

    pub fn build_plan_prompt_with(
        &self,
        task: &Task,
        examples: &[PlanExample],
        budget: u32,
    ) -> Result<String> {
        if examples.is_empty() {
            return Err(Error::Config(
                "plan prompting is fewshot: at least one previous successful plan is required".into(),
            ));
        }
        for start in 0..examples.len() {
            let block: Vec<String> = examples[start..]
                .iter()
                .map(|e| format!("Example task: {}\nPlan: {}", e.instruction, e.plan))
                .collect();
            let rendered = format!(
                "{}\n\nPrevious successful plans:\n\n{}\n\nInstruction: {}\n{}",
                self.preamble,
                block.join("\n\n"),
                task.instruction,
                PLAN_CUE
            );
            if estimate_tokens(&rendered) <= budget {
                return Ok(rendered);
            }
        }
        Err(Error::Budget(format!(
            "budget {budget} cannot hold even one plan example for task {}",
            task.id
        )))
    }

    /// The message the orchestrator sends to a labor agent: instruction,
    /// shared-trajectory rendering, and the target's specialty cue.
    pub fn build_labor_message(
        &self,
        task: &Task,
        trajectory: &Trajectory,
        config: &LaaConfig,
        specialty: ActionKind,
        budget: u32,
    ) -> Result<String> {
        let cue = format!("Respond with exactly one {}[...] action.\n{ACTION_CUE}", specialty.keyword());
        self.fit(self.template(task, config, &cue, false, Some(specialty)), trajectory, budget)
    }
}

fn parse_action_docs(raw: &str) -> BTreeMap<ActionKind, String> {
    let mut docs = BTreeMap::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        for kind in [ActionKind::Search, ActionKind::Click, ActionKind::Lookup, ActionKind::Finish] {
            if line.starts_with(&format!("{}:", kind.keyword())) {
                docs.insert(kind, line.to_string());
            }
        }
    }
    docs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Action, Architecture, GroundTruth};

    fn task() -> Task {
        Task {
            id: "t1".into(),
            instruction: "I'm looking for a camera tripod with quick release.".into(),
            env_kind: EnvKind::Shopping,
            ground_truth: GroundTruth::Shopping {
                target_product_id: "p1".into(),
                required_attributes: ["quick release".to_string()].into_iter().collect(),
                price_cap: None,
            },
            complexity: 1,
        }
    }

    fn config(arch: Architecture) -> LaaConfig {
        LaaConfig::canonical(arch, EnvKind::Shopping, 15, 2048)
    }

    fn step_pair(t: &mut Trajectory, i: u32, query: &str, obs: &str) {
        t.append(Record::action(
            format!("search[{query}]"),
            Action::Search(query.into()),
            i,
        ))
        .unwrap();
        t.append(Record::observation(obs, i)).unwrap();
    }

    #[test]
    fn zs_prompt_has_no_fewshot_and_empty_memory() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let trajectory = Trajectory::new("t1");
        let prompt = prompter
            .build_action_prompt(&task(), &trajectory, &config(Architecture::Zs), 2048)
            .unwrap();
        assert!(!prompt.contains(FEWSHOT_HEADER));
        assert!(prompt.contains("Instruction: I'm looking for a camera tripod"));
        assert!(prompt.ends_with(ACTION_CUE));
        assert!(prompt.contains("click: using this action to click observed [button]"));
    }

    #[test]
    fn react_prompt_differs_only_by_fewshot_block() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let trajectory = Trajectory::new("t1");
        let zs = prompter
            .build_action_prompt(&task(), &trajectory, &config(Architecture::Zs), 2048)
            .unwrap();
        let react = prompter
            .build_action_prompt(&task(), &trajectory, &config(Architecture::ReAct), 2048)
            .unwrap();
        assert!(react.contains(FEWSHOT_HEADER));
        assert!(react.len() > zs.len());
        // identical except for the inserted fewshot block
        let stripped: String = react
            .lines()
            .filter(|l| zs.lines().any(|z| z == *l))
            .collect::<Vec<_>>()
            .join("\n");
        assert!(stripped.contains("Instruction:"));
    }

    #[test]
    fn preamble_appears_exactly_once_and_prompt_ends_with_cue() {
        let prompter = Prompter::builtin(EnvKind::WikiQa);
        let mut wiki_task = task();
        wiki_task.env_kind = EnvKind::WikiQa;
        wiki_task.ground_truth = GroundTruth::WikiQa { gold_answer: "1901".into() };
        let trajectory = Trajectory::new("t1");
        let cfg = LaaConfig::canonical(Architecture::PlanReAct, EnvKind::WikiQa, 15, 2048);
        let prompt = prompter.build_think_prompt(&wiki_task, &trajectory, &cfg, 2048).unwrap();
        assert_eq!(prompt.matches("question answering agent").count(), 1);
        assert!(prompt.ends_with(THINK_CUE));
        assert!(prompt.contains("think: using this action to plan your actions and reasoning."));
    }

    #[test]
    fn think_prompt_requires_think_flag() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let trajectory = Trajectory::new("t1");
        let err = prompter
            .build_think_prompt(&task(), &trajectory, &config(Architecture::Zs), 2048)
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn think_prompt_includes_stored_plan() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let mut trajectory = Trajectory::new("t1");
        trajectory.append(Record::plan("search then buy the tripod", 0)).unwrap();
        let prompt = prompter
            .build_think_prompt(&task(), &trajectory, &config(Architecture::PlanReAct), 2048)
            .unwrap();
        assert!(prompt.contains("Plan: search then buy the tripod"));
    }

    #[test]
    fn plan_prompt_contains_examples_and_cue() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let prompt = prompter.build_plan_prompt(&task(), 2048).unwrap();
        assert!(prompt.contains("Previous successful plans:"));
        assert!(prompt.contains("Example task:"));
        assert!(prompt.ends_with(PLAN_CUE));
    }

    #[test]
    fn plan_prompt_with_no_examples_is_a_config_error() {
        let prompter = Prompter::builtin(EnvKind::Shopping).with_plans(vec![]);
        assert!(matches!(prompter.build_plan_prompt(&task(), 2048), Err(Error::Config(_))));
    }

    #[test]
    fn plan_prompt_drops_earliest_examples_first() {
        let examples: Vec<PlanExample> = (0..3)
            .map(|i| PlanExample {
                instruction: format!("task number {i}"),
                plan: format!("plan {i} {}", "x".repeat(200)),
            })
            .collect();
        let prompter = Prompter::builtin(EnvKind::Shopping).with_plans(examples.clone());
        // generous budget: all three fit
        let full = prompter.build_plan_prompt(&task(), 4096).unwrap();
        assert!(full.contains("task number 0") && full.contains("task number 2"));
        // tight budget: earliest dropped, latest retained
        let overhead = estimate_tokens(&prompter.build_plan_prompt_with(&task(), &examples[2..], 4096).unwrap());
        let tight = prompter.build_plan_prompt(&task(), overhead).unwrap();
        assert!(!tight.contains("task number 0"));
        assert!(tight.contains("task number 2"));
        // below one example: budget error
        assert!(matches!(prompter.build_plan_prompt(&task(), 10), Err(Error::Budget(_))));
    }

    #[test]
    fn truncate_keeps_most_recent_records_and_pins_plan() {
        let mut t = Trajectory::new("t1");
        t.append(Record::plan("the pinned plan", 0)).unwrap();
        for i in 0..8 {
            step_pair(&mut t, i, &format!("query {i}"), &format!("page {i} {}", "o".repeat(60)));
        }
        let full = truncate_memory(&t, 10_000);
        assert!(full.contains("query 0") && full.contains("query 7"));
        let tight = truncate_memory(&t, estimate_tokens(&full) - 20);
        assert!(tight.contains("the pinned plan"));
        assert!(!tight.contains("query 0"));
        assert!(tight.contains("query 7"));
    }

    #[test]
    fn truncate_drops_action_observation_pairs_atomically() {
        let mut t = Trajectory::new("t1");
        for i in 0..5 {
            step_pair(&mut t, i, &format!("q{i}"), &format!("obs {i} {}", "x".repeat(40)));
        }
        for budget in 0..=estimate_tokens(&truncate_memory(&t, u32::MAX)) {
            let rendered = truncate_memory(&t, budget);
            if rendered.is_empty() {
                continue;
            }
            assert!(!rendered.starts_with("Observation:"), "dangling observation at budget {budget}");
            assert!(estimate_tokens(&rendered) <= budget);
        }
    }

    #[test]
    fn truncate_zero_budget_is_empty() {
        let mut t = Trajectory::new("t1");
        t.append(Record::plan("plan text", 0)).unwrap();
        assert_eq!(truncate_memory(&t, 0), "");
        assert_eq!(truncate_memory(&Trajectory::new("e"), 0), "");
    }

    /// Brute-force oracle: enumerate every safe kept-suffix, render it, and
    /// pick the longest one that fits. The implementation must agree.
    #[test]
    fn truncation_matches_brute_force_suffix_oracle() {
        let mut t = Trajectory::new("t1");
        t.append(Record::plan("plan of record", 0)).unwrap();
        for i in 0..200 {
            t.append(Record::thought(format!("thinking about step {i}"), i)).unwrap();
            step_pair(&mut t, i, &format!("term{i}"), &format!("observation body {i}"));
        }
        let budget = 512; // a 2k-char-equivalent memory window
        let got = truncate_memory(&t, budget);

        let plan: Vec<&Record> = t.plan().into_iter().collect();
        let rest: Vec<&Record> =
            t.records().iter().filter(|r| r.kind != RecordKind::Plan).collect();
        let mut best: Option<String> = None;
        for start in (0..=rest.len()).rev() {
            if start < rest.len() && rest[start].kind == RecordKind::Observation {
                continue;
            }
            let rendered = plan
                .iter()
                .chain(rest[start..].iter())
                .map(|r| render_record(r))
                .collect::<Vec<_>>()
                .join("\n");
            if estimate_tokens(&rendered) <= budget {
                best = Some(rendered); // keep the longest fitting suffix
            }
        }
        assert_eq!(got, best.unwrap_or_default());
        assert!(got.contains("Plan: plan of record"));
        assert!(got.contains("term199"));
        assert!(!got.contains("term0]"));
    }

    #[test]
    fn action_prompt_respects_budget_with_long_memory() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let mut t = Trajectory::new("t1");
        for i in 0..200 {
            step_pair(&mut t, i, &format!("q{i}"), &"long observation ".repeat(12));
        }
        let budget = 2048;
        let prompt = prompter
            .build_action_prompt(&task(), &t, &config(Architecture::ReAct), budget)
            .unwrap();
        assert!(estimate_tokens(&prompt) <= budget);
        assert!(prompt.contains("q199")); // most recent record retained
    }

    #[test]
    fn budget_too_small_for_skeleton_errors() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let trajectory = Trajectory::new("t1");
        let err = prompter
            .build_action_prompt(&task(), &trajectory, &config(Architecture::Zs), 20)
            .unwrap_err();
        assert!(matches!(err, Error::Budget(_)));
    }

    #[test]
    fn labor_message_restricts_docs_and_carries_specialty_cue() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let trajectory = Trajectory::new("t1");
        let cfg = config(Architecture::ReAct);
        let msg = prompter
            .build_labor_message(&task(), &trajectory, &cfg, ActionKind::Search, 2048)
            .unwrap();
        assert!(msg.contains("search: using this action"));
        assert!(!msg.contains("click: using this action"));
        assert!(msg.contains("exactly one search[...] action"));
        assert!(msg.ends_with(ACTION_CUE));
    }

    #[test]
    fn rendering_is_deterministic() {
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let mut t = Trajectory::new("t1");
        step_pair(&mut t, 0, "tripod", "[Results] 1. something");
        let cfg = config(Architecture::PlanReAct);
        let a = prompter.build_action_prompt(&task(), &t, &cfg, 1024).unwrap();
        let b = prompter.build_action_prompt(&task(), &t, &cfg, 1024).unwrap();
        assert_eq!(a, b);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// The rendered memory is always the pinned plan plus a suffix of
            /// the remaining records, and stays within budget.
            #[test]
            fn suffix_property(n in 0usize..30, budget in 0u32..600) {
                let mut t = Trajectory::new("t");
                t.append(Record::plan("p".repeat(8), 0)).unwrap();
                for i in 0..n {
                    t.append(Record::action(
                        format!("search[s{i}]"),
                        Action::Search(format!("s{i}")),
                        i as u32,
                    )).unwrap();
                    t.append(Record::observation(format!("body {i}"), i as u32)).unwrap();
                }
                let rendered = truncate_memory(&t, budget);
                prop_assert!(estimate_tokens(&rendered) <= budget);
                if !rendered.is_empty() {
                    // must start with the plan line; the rest is a suffix
                    prop_assert!(rendered.starts_with("Plan: "));
                    let full = truncate_memory(&t, u32::MAX);
                    prop_assert!(full.ends_with(rendered.trim_start_matches("Plan: pppppppp").trim_start()));
                }
            }
        }
    }
}
