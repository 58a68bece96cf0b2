//! Solo episode executor: one loop covers all five architectures through the
//! config flags, with first-match action parsing over raw model text.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::llm::{Backend, GenerationParams};
use crate::prompting::{Prompter, FEWSHOT_HEADER};
use crate::types::{
    Action, ActionKind, EpisodeResult, LaaConfig, Record, RecordKind, Task, Termination, Trajectory,
};

/// Why raw model text failed to parse into an executable action. Failures
/// are values, not errors: they become trace records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    NoAction,
    EmptyPayload(ActionKind),
    NotAllowed(ActionKind),
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseFailure::NoAction => write!(f, "No action found in the output."),
            ParseFailure::EmptyPayload(kind) => {
                write!(f, "The {kind} action needs a non-empty [payload].")
            }
            ParseFailure::NotAllowed(kind) => write!(f, "The {kind} action is not allowed here."),
        }
    }
}

fn action_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(search|click|lookup|finish)\[").expect("valid pattern"))
}

/// Extracts the first surface form `search[...]`, `click[...]`, `lookup[...]`
/// or `finish[...]` (case-insensitive) from raw model text. The payload is
/// captured verbatim up to the closing bracket, then whitespace-trimmed.
/// The first complete form decides the outcome: an empty payload or a
/// variant outside `allowed` is a failure even if a valid form follows.
pub fn parse_action(raw: &str, allowed: &BTreeSet<ActionKind>) -> std::result::Result<Action, ParseFailure> {
    for m in action_pattern().captures_iter(raw) {
        let whole = m.get(0).expect("match");
        let keyword = m.get(1).expect("keyword").as_str().to_lowercase();
        let Some(close) = raw[whole.end()..].find(']') else {
            continue; // unclosed bracket is not a form
        };
        let payload = raw[whole.end()..whole.end() + close].trim();
        let kind = match keyword.as_str() {
            "search" => ActionKind::Search,
            "click" => ActionKind::Click,
            "lookup" => ActionKind::Lookup,
            _ => ActionKind::Finish,
        };
        if payload.is_empty() {
            return Err(ParseFailure::EmptyPayload(kind));
        }
        if !allowed.contains(&kind) {
            return Err(ParseFailure::NotAllowed(kind));
        }
        return Ok(Action::new(kind, payload).expect("non-empty payload"));
    }
    Err(ParseFailure::NoAction)
}

/// Per-episode loop state.
pub struct AgentState<'a> {
    pub task: &'a Task,
    pub config: LaaConfig,
    pub trajectory: Trajectory,
    pub step_index: u32,
    pub parse_failures_in_a_row: u32,
}

impl<'a> AgentState<'a> {
    pub fn new(task: &'a Task, config: &LaaConfig) -> AgentState<'a> {
        AgentState {
            task,
            config: config.clone(),
            trajectory: Trajectory::new(&task.id),
            step_index: 0,
            parse_failures_in_a_row: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptPurpose {
    Plan,
    Think,
    Action,
    /// Controller agent-selection prompt (backend-assisted pools only).
    Select,
}

/// A rendered prompt kept for the sidecar debug trace and the
/// prompt-faithfulness checks.
#[derive(Debug, Clone)]
pub struct PromptCapture {
    pub step_index: u32,
    pub purpose: PromptPurpose,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Consecutive parse failures tolerated before the episode aborts.
    pub parse_failure_cap: u32,
    pub generation: GenerationParams,
    /// Keep every rendered prompt in the outcome (off by default).
    pub capture_prompts: bool,
    /// Recorded in the trace header.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> RunOptions {
        RunOptions {
            parse_failure_cap: 3,
            generation: GenerationParams::default(),
            capture_prompts: false,
            seed: 0,
        }
    }
}

pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub result: EpisodeResult,
    pub prompts: Vec<PromptCapture>,
    /// Present when the episode aborted because the backend failed (as
    /// opposed to parse-failure caps, which are the agent's own doing).
    pub backend_failure: Option<String>,
}

/// One self-think step: builds the think prompt over the current memory and
/// appends the thought verbatim, so the following action prompt includes it.
pub fn self_think(
    state: &mut AgentState<'_>,
    backend: &dyn Backend,
    prompter: &Prompter,
    params: &GenerationParams,
    budget: u32,
) -> Result<String> {
    let prompt = prompter.build_think_prompt(state.task, &state.trajectory, &state.config, budget)?;
    let completion = backend.generate(&prompt, params)?;
    state.trajectory.append(Record::thought(completion.text, state.step_index))?;
    Ok(prompt)
}

/// Records the failure plus a corrective synthetic observation, consuming a
/// step. Returns true when the consecutive-failure cap is reached and the
/// episode must abort. Under the orchestrator the failure record carries the
/// labor agent's id.
pub fn handle_parse_failure(
    state: &mut AgentState<'_>,
    raw: &str,
    failure: &ParseFailure,
    allowed: &BTreeSet<ActionKind>,
    cap: u32,
    agent_id: Option<&str>,
) -> Result<bool> {
    state.parse_failures_in_a_row += 1;
    let mut record = Record::parse_failure(raw, state.step_index);
    if let Some(id) = agent_id {
        record = record.with_agent(id);
    }
    state.trajectory.append(record)?;
    let menu: Vec<String> = allowed.iter().map(|k| format!("{}[...]", k.keyword())).collect();
    state.trajectory.append(Record::observation(
        format!("Invalid action. {failure} Allowed: {}.", menu.join(", ")),
        state.step_index,
    ))?;
    state.step_index += 1;
    Ok(state.parse_failures_in_a_row >= cap)
}

fn is_abort(err: &Error) -> bool {
    matches!(err, Error::Backend(_) | Error::ContextOverflow(_))
}

/// Runs one episode: an optional planning step, then the
/// think/act/observe loop until the environment reports done or the step
/// limit is reached. Backend failures abort the episode; the result is
/// always computed by the environment from its final state.
pub fn run_episode(
    config: &LaaConfig,
    task: &Task,
    env: &mut dyn Environment,
    backend: &dyn Backend,
    prompter: &Prompter,
    options: &RunOptions,
) -> Result<EpisodeOutcome> {
    config.validate()?;
    task.validate()?;
    let allowed: BTreeSet<ActionKind> = config
        .allowed_action_kinds
        .intersection(&env.kind().grammar())
        .copied()
        .collect();
    if allowed.is_empty() {
        return Err(Error::Config(format!(
            "config {} allows no action of the {} grammar",
            config.name,
            env.kind()
        )));
    }
    env.reset(task)?;

    let budget = config.context_limit.saturating_sub(options.generation.max_new_tokens);
    let mut state = AgentState::new(task, config);
    let mut prompts: Vec<PromptCapture> = Vec::new();
    let capture = |step_index: u32, purpose: PromptPurpose, text: &str, sink: &mut Vec<PromptCapture>| {
        if options.capture_prompts {
            sink.push(PromptCapture { step_index, purpose, text: text.to_string() });
        }
    };

    let mut termination: Option<Termination> = None;
    let mut backend_failure: Option<String> = None;

    if config.plan {
        let prompt = prompter.build_plan_prompt(task, budget)?;
        capture(0, PromptPurpose::Plan, &prompt, &mut prompts);
        match backend.generate(&prompt, &options.generation) {
            Ok(completion) => {
                state.trajectory.append(Record::plan(completion.text, 0))?;
            }
            Err(err) if is_abort(&err) => {
                log::warn!("episode {} aborted during planning: {err}", task.id);
                backend_failure = Some(err.to_string());
                termination = Some(Termination::Aborted);
            }
            Err(err) => return Err(err),
        }
    }

    while termination.is_none() {
        if state.step_index >= config.max_steps {
            termination = Some(Termination::MaxSteps);
            break;
        }

        if config.think {
            match self_think(&mut state, backend, prompter, &options.generation, budget) {
                Ok(prompt) => {
                    capture(state.step_index, PromptPurpose::Think, &prompt, &mut prompts);
                }
                Err(err) if is_abort(&err) => {
                    log::warn!("episode {} aborted during think: {err}", task.id);
                    backend_failure = Some(err.to_string());
                    termination = Some(Termination::Aborted);
                    break;
                }
                Err(err) => return Err(err),
            }
        }

        let prompt = prompter.build_action_prompt(task, &state.trajectory, config, budget)?;
        capture(state.step_index, PromptPurpose::Action, &prompt, &mut prompts);
        let completion = match backend.generate(&prompt, &options.generation) {
            Ok(c) => c,
            Err(err) if is_abort(&err) => {
                log::warn!("episode {} aborted during action generation: {err}", task.id);
                backend_failure = Some(err.to_string());
                termination = Some(Termination::Aborted);
                break;
            }
            Err(err) => return Err(err),
        };

        match parse_action(&completion.text, &allowed) {
            Ok(action) => {
                state.parse_failures_in_a_row = 0;
                state
                    .trajectory
                    .append(Record::action(completion.text, action.clone(), state.step_index))?;
                let outcome = env.step(&action)?;
                state
                    .trajectory
                    .append(Record::observation(outcome.observation.content, state.step_index))?;
                state.step_index += 1;
                if outcome.done {
                    termination = Some(Termination::Completed);
                }
            }
            Err(failure) => {
                let abort = handle_parse_failure(
                    &mut state,
                    &completion.text,
                    &failure,
                    &allowed,
                    options.parse_failure_cap,
                    None,
                )?;
                if abort {
                    termination = Some(Termination::Aborted);
                }
            }
        }
    }

    let termination = termination.unwrap_or(Termination::Aborted);
    state.trajectory.finalize(termination);
    let score = env.final_score();
    let result = EpisodeResult {
        task_id: task.id.clone(),
        reward: score.reward,
        recall: score.recall,
        steps_used: state.step_index,
        terminated: termination,
        trajectory_ref: None,
    };
    result.validate()?;
    Ok(EpisodeOutcome { trajectory: state.trajectory, result, prompts, backend_failure })
}

/// Checks the architecture-shape theorems on a finished trace:
/// (a) exactly one plan record iff the plan flag, preceding every action;
/// (b) with the think flag every action is preceded by its own thought,
/// without it there are no thoughts; plus the step bound and action
/// legality. Aborted episodes may stop anywhere, so call this on completed
/// or step-limited traces.
pub fn check_architecture_shape(trajectory: &Trajectory, config: &LaaConfig) -> Result<()> {
    let records = trajectory.records();
    let plan_count = records.iter().filter(|r| r.kind == RecordKind::Plan).count();
    let expected = usize::from(config.plan);
    if plan_count != expected {
        return Err(Error::Validation(format!(
            "expected {expected} plan records for {}, found {plan_count}",
            config.name
        )));
    }
    if let Some(plan_pos) = records.iter().position(|r| r.kind == RecordKind::Plan) {
        if records[..plan_pos].iter().any(|r| r.kind == RecordKind::Action) {
            return Err(Error::Validation("plan does not precede every action".into()));
        }
    }

    let thought_count = records.iter().filter(|r| r.kind == RecordKind::Thought).count();
    if config.think {
        let mut thought_pending = false;
        for r in records {
            match r.kind {
                RecordKind::Thought => thought_pending = true,
                RecordKind::Action => {
                    if !thought_pending {
                        return Err(Error::Validation(
                            "action without a preceding thought under the think flag".into(),
                        ));
                    }
                    thought_pending = false;
                }
                _ => {}
            }
        }
    } else if thought_count != 0 {
        return Err(Error::Validation(format!(
            "{thought_count} thought records without the think flag"
        )));
    }

    if trajectory.step_records() > config.max_steps as usize {
        return Err(Error::Validation(format!(
            "{} steps exceed max_steps {}",
            trajectory.step_records(),
            config.max_steps
        )));
    }

    for r in trajectory.action_records() {
        let kind = r.action.as_ref().expect("action record").kind();
        if !config.allowed_action_kinds.contains(&kind) {
            return Err(Error::Validation(format!("illegal action kind {kind}")));
        }
    }
    Ok(())
}

/// Theorem (c): the fewshot block appears in every rendered action and think
/// prompt iff the config has the fewshot flag. Plan prompts are fewshot by
/// definition and are not checked.
pub fn check_prompt_faithfulness(prompts: &[PromptCapture], config: &LaaConfig) -> Result<()> {
    for p in prompts {
        if matches!(p.purpose, PromptPurpose::Plan | PromptPurpose::Select) {
            continue;
        }
        let has_block = p.text.contains(FEWSHOT_HEADER);
        if has_block != config.fewshot {
            return Err(Error::Validation(format!(
                "prompt at step {} has fewshot block = {has_block}, config {} says {}",
                p.step_index, config.name, config.fewshot
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Catalog, ShoppingEnv};
    use crate::fixtures;
    use crate::harness::oracles;
    use crate::llm::{ScriptedBackend, ScriptedPolicy, ScriptedRule};
    use crate::types::{Architecture, EnvKind, GroundTruth};
    use std::sync::Arc;

    fn shopping_allowed() -> BTreeSet<ActionKind> {
        EnvKind::Shopping.grammar()
    }

    #[test]
    fn parse_canonical_form() {
        let got = parse_action("search[travel monopod camera tripod]", &shopping_allowed()).unwrap();
        assert_eq!(got, Action::Search("travel monopod camera tripod".into()));
    }

    #[test]
    fn parse_takes_first_form_in_chatty_output() {
        // hand-enumerated scan: the first complete form is click[Buy Now];
        // "finish." carries no bracket and is not a form
        let raw = "I think I should click[Buy Now] to finish.";
        let got = parse_action(raw, &shopping_allowed()).unwrap();
        assert_eq!(got, Action::Click("Buy Now".into()));
    }

    #[test]
    fn parse_rejects_variant_outside_grammar() {
        let got = parse_action("finish[Paris]", &shopping_allowed());
        assert_eq!(got, Err(ParseFailure::NotAllowed(ActionKind::Finish)));
    }

    #[test]
    fn parse_is_case_insensitive_and_trims_payload() {
        let got = parse_action("SEARCH[  red mug  ]", &shopping_allowed()).unwrap();
        assert_eq!(got, Action::Search("red mug".into()));
    }

    #[test]
    fn parse_empty_payload_fails() {
        assert_eq!(
            parse_action("click[]", &shopping_allowed()),
            Err(ParseFailure::EmptyPayload(ActionKind::Click))
        );
        assert_eq!(
            parse_action("click[   ]", &shopping_allowed()),
            Err(ParseFailure::EmptyPayload(ActionKind::Click))
        );
    }

    #[test]
    fn parse_prose_without_action_fails() {
        assert_eq!(parse_action("I have no idea what to do.", &shopping_allowed()), Err(ParseFailure::NoAction));
    }

    #[test]
    fn parse_skips_embedded_keywords_and_unclosed_brackets() {
        // "declick[" must not match; the unclosed "click[Buy" is skipped
        assert_eq!(
            parse_action("declick[x]", &shopping_allowed()),
            Err(ParseFailure::NoAction)
        );
        let got = parse_action("click[Buy ... then click[Buy Now]", &shopping_allowed()).unwrap();
        // first complete form closes at the first ']'
        assert_eq!(got, Action::Click("Buy ... then click[Buy Now".into()));
    }

    fn catalog() -> Arc<Catalog> {
        Arc::new(fixtures::builtin_catalog())
    }

    fn first_task() -> crate::types::Task {
        fixtures::builtin_shopping_tasks().into_iter().next().unwrap()
    }

    fn run(
        arch: Architecture,
        task: &crate::types::Task,
        policy: ScriptedPolicy,
        max_steps: u32,
    ) -> EpisodeOutcome {
        let config = LaaConfig::canonical(arch, EnvKind::Shopping, max_steps, 2048);
        let mut env = ShoppingEnv::new(catalog());
        let backend = ScriptedBackend::new(policy);
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let options = RunOptions { capture_prompts: true, ..RunOptions::default() };
        run_episode(&config, task, &mut env, &backend, &prompter, &options).unwrap()
    }

    #[test]
    fn zs_oracle_buys_target_with_full_reward() {
        let task = first_task();
        let policy = oracles::purchase_oracle(&task, &catalog()).unwrap();
        let outcome = run(Architecture::Zs, &task, policy, 15);
        assert_eq!(outcome.result.reward, 1.0);
        assert_eq!(outcome.result.recall, Some(1));
        assert_eq!(outcome.result.terminated, Termination::Completed);
        let kinds: Vec<RecordKind> = outcome.trajectory.records().iter().map(|r| r.kind).collect();
        assert_eq!(
            kinds,
            vec![
                RecordKind::Action,
                RecordKind::Observation,
                RecordKind::Action,
                RecordKind::Observation,
                RecordKind::Action,
                RecordKind::Observation,
            ]
        );
    }

    #[test]
    fn plan_react_oracle_has_plan_and_thoughts() {
        let task = first_task();
        let policy = oracles::purchase_oracle(&task, &catalog()).unwrap();
        let outcome = run(Architecture::PlanReAct, &task, policy, 15);
        assert_eq!(outcome.result.reward, 1.0);
        let config = LaaConfig::canonical(Architecture::PlanReAct, EnvKind::Shopping, 15, 2048);
        check_architecture_shape(&outcome.trajectory, &config).unwrap();
        check_prompt_faithfulness(&outcome.prompts, &config).unwrap();
        assert_eq!(outcome.trajectory.records()[0].kind, RecordKind::Plan);
        // same action sequence as ZS, interleaved with thoughts
        let actions: Vec<&Record> = outcome.trajectory.action_records().collect();
        assert_eq!(actions.len(), 3);
    }

    #[test]
    fn max_steps_zero_yields_empty_action_trajectory() {
        let task = first_task();
        let policy = oracles::purchase_oracle(&task, &catalog()).unwrap();
        let outcome = run(Architecture::Zs, &task, policy, 0);
        assert_eq!(outcome.result.terminated, Termination::MaxSteps);
        assert_eq!(outcome.result.reward, 0.0);
        assert_eq!(outcome.trajectory.records().len(), 0);
        assert_eq!(outcome.result.steps_used, 0);
    }

    #[test]
    fn parse_failure_recovery_then_success() {
        let task = first_task();
        let target_title = {
            let GroundTruth::Shopping { target_product_id, .. } = &task.ground_truth else {
                unreachable!()
            };
            catalog().get(target_product_id).unwrap().title.clone()
        };
        // first action prompt gets garbage; after the corrective observation
        // is in memory, the oracle staging rules take over
        let policy = ScriptedPolicy::new(
            vec![
                ScriptedRule::pattern(
                    r"(?s)\nInstruction: .*Buy Now.*Action:\s*$",
                    "click[Buy Now]",
                ),
                ScriptedRule::pattern(
                    r"(?s)\nInstruction: .*\[Results\].*Action:\s*$",
                    format!("click[{target_title}]"),
                ),
                ScriptedRule::pattern(
                    r"(?s)\nInstruction: .*Invalid action.*Action:\s*$",
                    format!("search[{target_title}]"),
                ),
            ],
            "no action here",
        );
        let outcome = run(Architecture::Zs, &task, policy, 15);
        assert_eq!(outcome.result.reward, 1.0);
        let kinds: Vec<RecordKind> = outcome.trajectory.records().iter().map(|r| r.kind).collect();
        assert_eq!(kinds[0], RecordKind::ParseFailure);
        assert_eq!(kinds[1], RecordKind::Observation);
        assert_eq!(kinds[2], RecordKind::Action);
        // failure consumed a step
        assert_eq!(outcome.result.steps_used as usize, outcome.trajectory.step_records());
    }

    #[test]
    fn three_consecutive_failures_abort_with_zero_reward() {
        let task = first_task();
        let policy = ScriptedPolicy::new(vec![], "utter nonsense");
        let outcome = run(Architecture::Zs, &task, policy, 15);
        assert_eq!(outcome.result.terminated, Termination::Aborted);
        assert_eq!(outcome.result.reward, 0.0);
        assert_eq!(outcome.result.steps_used, 3);
        assert_eq!(
            outcome
                .trajectory
                .records()
                .iter()
                .filter(|r| r.kind == RecordKind::ParseFailure)
                .count(),
            3
        );
    }

    #[test]
    fn failure_cap_of_one_aborts_immediately() {
        let task = first_task();
        let config = LaaConfig::canonical(Architecture::Zs, EnvKind::Shopping, 15, 2048);
        let mut env = ShoppingEnv::new(catalog());
        let backend = ScriptedBackend::new(ScriptedPolicy::new(vec![], "garbage"));
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let options = RunOptions { parse_failure_cap: 1, ..RunOptions::default() };
        let outcome =
            run_episode(&config, &task, &mut env, &backend, &prompter, &options).unwrap();
        assert_eq!(outcome.result.terminated, Termination::Aborted);
        assert_eq!(outcome.result.steps_used, 1);
    }

    #[test]
    fn think_flag_produces_alternating_thoughts() {
        let task = first_task();
        let policy = oracles::purchase_oracle(&task, &catalog()).unwrap();
        let outcome = run(Architecture::Zst, &task, policy, 15);
        let records = outcome.trajectory.records();
        let mut saw = Vec::new();
        for r in records {
            if matches!(r.kind, RecordKind::Thought | RecordKind::Action) {
                saw.push(r.kind);
            }
        }
        assert_eq!(
            saw,
            vec![
                RecordKind::Thought,
                RecordKind::Action,
                RecordKind::Thought,
                RecordKind::Action,
                RecordKind::Thought,
                RecordKind::Action,
            ]
        );
    }

    #[test]
    fn zs_trace_has_zero_thoughts() {
        let task = first_task();
        let policy = oracles::purchase_oracle(&task, &catalog()).unwrap();
        let outcome = run(Architecture::Zs, &task, policy, 15);
        assert!(outcome.trajectory.records().iter().all(|r| r.kind != RecordKind::Thought));
    }

    #[test]
    fn backend_error_aborts_episode() {
        struct FailingBackend;
        impl Backend for FailingBackend {
            fn generate(&self, _: &str, _: &GenerationParams) -> Result<crate::llm::Completion> {
                Err(Error::Backend("connection refused".into()))
            }
            fn id(&self) -> &str {
                "failing"
            }
        }
        let task = first_task();
        let config = LaaConfig::canonical(Architecture::Zs, EnvKind::Shopping, 15, 2048);
        let mut env = ShoppingEnv::new(catalog());
        let prompter = Prompter::builtin(EnvKind::Shopping);
        let outcome = run_episode(
            &config,
            &task,
            &mut env,
            &FailingBackend,
            &prompter,
            &RunOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.result.terminated, Termination::Aborted);
        assert_eq!(outcome.result.reward, 0.0);
    }

    #[test]
    fn replay_determinism_same_trace_bytes() {
        let task = first_task();
        let policy = oracles::purchase_oracle(&task, &catalog()).unwrap();
        let a = run(Architecture::PlanReAct, &task, policy.clone(), 15);
        let b = run(Architecture::PlanReAct, &task, policy, 15);
        assert_eq!(
            serde_json::to_string(&a.trajectory).unwrap(),
            serde_json::to_string(&b.trajectory).unwrap()
        );
        assert_eq!(a.result, b.result);
    }
}
