//! Orchestrated multi-agent episodes: a controller selects one labor agent
//! per step from a pool of single-action specialists, builds its message
//! over the shared trajectory, parses the response, and drives the
//! environment. The controller itself never emits actions.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{
    handle_parse_failure, parse_action, AgentState, EpisodeOutcome, PromptCapture, PromptPurpose,
    RunOptions,
};
use crate::env::{Environment, Observation, PageKind};
use crate::error::{Error, Result};
use crate::llm::Backend;
use crate::prompting::Prompter;
use crate::types::{ActionKind, EpisodeResult, LaaConfig, Record, Task, Termination};

pub const POOL_SCHEMA_VERSION: u32 = 1;

/// A pool member: an agent restricted to exactly one action variant.
#[derive(Debug, Clone, PartialEq)]
pub struct LaborAgentSpec {
    pub agent_id: String,
    pub specialty: ActionKind,
    pub config: LaaConfig,
}

impl LaborAgentSpec {
    pub fn new(
        agent_id: impl Into<String>,
        specialty: ActionKind,
        fewshot: bool,
        think: bool,
        plan: bool,
        max_steps: u32,
        context_limit: u32,
    ) -> LaborAgentSpec {
        let agent_id = agent_id.into();
        let config = LaaConfig {
            name: agent_id.clone(),
            fewshot,
            think,
            plan,
            max_steps,
            context_limit,
            allowed_action_kinds: [specialty].into_iter().collect(),
        };
        LaborAgentSpec { agent_id, specialty, config }
    }

    fn validate(&self) -> Result<()> {
        if self.config.allowed_action_kinds.len() != 1
            || !self.config.allowed_action_kinds.contains(&self.specialty)
        {
            return Err(Error::Config(format!(
                "labor agent {} must allow exactly its specialty {}",
                self.agent_id, self.specialty
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    #[default]
    RuleBased,
    BackendAssisted,
}

/// A labor pool plus the episode-level settings shared by its members.
#[derive(Debug, Clone)]
pub struct BolaaPool {
    pub name: String,
    pub agents: Vec<LaborAgentSpec>,
    pub selection: SelectionPolicy,
    pub max_steps: u32,
}

impl BolaaPool {
    pub fn new(name: impl Into<String>, agents: Vec<LaborAgentSpec>, max_steps: u32) -> Result<BolaaPool> {
        let pool = BolaaPool {
            name: name.into(),
            agents,
            selection: SelectionPolicy::RuleBased,
            max_steps,
        };
        pool.validate()?;
        Ok(pool)
    }

    pub fn with_selection(mut self, selection: SelectionPolicy) -> BolaaPool {
        self.selection = selection;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::Config("labor pool is empty".into()));
        }
        let ids: BTreeSet<&str> = self.agents.iter().map(|a| a.agent_id.as_str()).collect();
        if ids.len() != self.agents.len() {
            return Err(Error::Config("labor agent ids must be unique".into()));
        }
        for agent in &self.agents {
            agent.validate()?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    schema_version: u32,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    selection: SelectionPolicy,
    agents: Vec<PoolAgentEntry>,
}

#[derive(Serialize, Deserialize)]
struct PoolAgentEntry {
    agent_id: String,
    specialty: ActionKind,
    #[serde(default = "default_true")]
    fewshot: bool,
    #[serde(default)]
    think: bool,
    #[serde(default)]
    plan: bool,
}

fn default_true() -> bool {
    true
}

fn pool_from_json(raw: &str, name: &str, max_steps: u32, context_limit: u32) -> Result<BolaaPool> {
    let file: PoolFile = serde_json::from_str(raw)?;
    if file.schema_version != POOL_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported pool schema_version {} (expected {POOL_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let agents = file
        .agents
        .into_iter()
        .map(|e| {
            LaborAgentSpec::new(e.agent_id, e.specialty, e.fewshot, e.think, e.plan, max_steps, context_limit)
        })
        .collect();
    let name = file.name.unwrap_or_else(|| name.to_string());
    Ok(BolaaPool::new(name, agents, max_steps)?.with_selection(file.selection))
}

pub fn load_pool(path: &Path, name: &str, max_steps: u32, context_limit: u32) -> Result<BolaaPool> {
    let raw = std::fs::read_to_string(path)?;
    pool_from_json(&raw, name, max_steps, context_limit)
}

/// The shipped shopping pool: one search agent and one click agent.
pub fn default_shopping_pool(max_steps: u32, context_limit: u32) -> BolaaPool {
    pool_from_json(
        crate::fixtures::BUILTIN_POOL_SHOPPING_JSON,
        "BOLAA",
        max_steps,
        context_limit,
    )
    .expect("builtin pool fixture is valid")
}

/// Controller loop state for one orchestrated episode.
pub struct ControllerState<'a> {
    pub task: &'a Task,
    pub pool: &'a BolaaPool,
    pub agent: AgentState<'a>,
    pub last_observation: Observation,
}

/// Chooses the labor agent for the current step.
///
/// Rule-based: on the search page (nothing listed yet) pick the first search
/// specialist; on results or item pages pick the first click specialist;
/// anything else falls back to the first pool agent in declaration order.
/// Backend-assisted: ask the backend to name an agent id, falling back to
/// the rules when the reply names none.
pub fn select_agent<'p>(
    state: &ControllerState<'_>,
    pool: &'p BolaaPool,
    backend: &dyn Backend,
    options: &RunOptions,
) -> Result<(&'p LaborAgentSpec, Option<String>)> {
    pool.validate()?;
    match pool.selection {
        SelectionPolicy::RuleBased => Ok((rule_based_selection(pool, &state.last_observation), None)),
        SelectionPolicy::BackendAssisted => {
            let roster: Vec<String> = pool
                .agents
                .iter()
                .map(|a| format!("- {}: emits {}[...] actions", a.agent_id, a.specialty.keyword()))
                .collect();
            let excerpt: String = state.last_observation.content.chars().take(400).collect();
            let prompt = format!(
                "You are the controller of a pool of specialist agents. Choose which agent acts next.\nAgents:\n{}\nLast observation: {excerpt}\nReply with exactly one agent id.\nAgent:",
                roster.join("\n")
            );
            let completion = backend.generate(&prompt, &options.generation)?;
            let chosen = pool
                .agents
                .iter()
                .filter_map(|a| completion.text.find(&a.agent_id).map(|pos| (pos, a)))
                .min_by_key(|(pos, _)| *pos)
                .map(|(_, a)| a);
            Ok((
                chosen.unwrap_or_else(|| rule_based_selection(pool, &state.last_observation)),
                Some(prompt),
            ))
        }
    }
}

fn rule_based_selection<'p>(pool: &'p BolaaPool, observation: &Observation) -> &'p LaborAgentSpec {
    let wanted = match observation.page_kind {
        PageKind::SearchPage => Some(ActionKind::Search),
        PageKind::ResultsPage | PageKind::ItemPage => Some(ActionKind::Click),
        _ => None,
    };
    wanted
        .and_then(|kind| pool.agents.iter().find(|a| a.specialty == kind))
        .unwrap_or(&pool.agents[0])
}

/// The message the controller sends to the selected labor agent.
pub fn build_message(
    prompter: &Prompter,
    state: &ControllerState<'_>,
    target: &LaborAgentSpec,
    headroom: u32,
) -> Result<String> {
    let budget = target.config.context_limit.saturating_sub(headroom);
    prompter.build_labor_message(
        state.task,
        &state.agent.trajectory,
        &target.config,
        target.specialty,
        budget,
    )
}

enum StepFlow {
    Continue,
    Done(Termination, Option<String>),
}

/// One controller turn: select, message, generate (with the labor's own
/// think flow first), parse restricted to the specialty, and step the
/// environment. Records carry the labor agent's id.
fn orchestrate_step(
    state: &mut ControllerState<'_>,
    env: &mut dyn Environment,
    backend: &dyn Backend,
    prompter: &Prompter,
    options: &RunOptions,
    prompts: &mut Vec<PromptCapture>,
) -> Result<StepFlow> {
    let pool = state.pool;
    let (target, selection_prompt) = select_agent(state, pool, backend, options)?;
    if options.capture_prompts {
        if let Some(text) = selection_prompt {
            prompts.push(PromptCapture {
                step_index: state.agent.step_index,
                purpose: PromptPurpose::Select,
                text,
            });
        }
    }
    let headroom = options.generation.max_new_tokens;
    let budget = target.config.context_limit.saturating_sub(headroom);

    // labor plan flow: the first plan-flagged agent plans once per episode
    if target.config.plan && state.agent.trajectory.plan().is_none() {
        let prompt = prompter.build_plan_prompt(state.task, budget)?;
        if options.capture_prompts {
            prompts.push(PromptCapture {
                step_index: state.agent.step_index,
                purpose: PromptPurpose::Plan,
                text: prompt.clone(),
            });
        }
        match backend.generate(&prompt, &options.generation) {
            Ok(completion) => {
                state
                    .agent
                    .trajectory
                    .append(Record::plan(completion.text, state.agent.step_index).with_agent(&target.agent_id))?;
            }
            Err(err) if is_abort(&err) => {
                return Ok(StepFlow::Done(Termination::Aborted, Some(err.to_string())))
            }
            Err(err) => return Err(err),
        }
    }

    if target.config.think {
        let prompt =
            prompter.build_think_prompt(state.task, &state.agent.trajectory, &target.config, budget)?;
        if options.capture_prompts {
            prompts.push(PromptCapture {
                step_index: state.agent.step_index,
                purpose: PromptPurpose::Think,
                text: prompt.clone(),
            });
        }
        match backend.generate(&prompt, &options.generation) {
            Ok(completion) => {
                state.agent.trajectory.append(
                    Record::thought(completion.text, state.agent.step_index).with_agent(&target.agent_id),
                )?;
            }
            Err(err) if is_abort(&err) => {
                return Ok(StepFlow::Done(Termination::Aborted, Some(err.to_string())))
            }
            Err(err) => return Err(err),
        }
    }

    let message = build_message(prompter, state, target, headroom)?;
    if options.capture_prompts {
        prompts.push(PromptCapture {
            step_index: state.agent.step_index,
            purpose: PromptPurpose::Action,
            text: message.clone(),
        });
    }
    let completion = match backend.generate(&message, &options.generation) {
        Ok(c) => c,
        Err(err) if is_abort(&err) => {
            return Ok(StepFlow::Done(Termination::Aborted, Some(err.to_string())))
        }
        Err(err) => return Err(err),
    };

    let specialty_only: BTreeSet<ActionKind> = [target.specialty].into_iter().collect();
    match parse_action(&completion.text, &specialty_only) {
        Ok(action) => {
            state.agent.parse_failures_in_a_row = 0;
            state.agent.trajectory.append(
                Record::action(completion.text, action.clone(), state.agent.step_index)
                    .with_agent(&target.agent_id),
            )?;
            let outcome = env.step(&action)?;
            state
                .agent
                .trajectory
                .append(Record::observation(outcome.observation.content.clone(), state.agent.step_index))?;
            state.last_observation = outcome.observation;
            state.agent.step_index += 1;
            if outcome.done {
                return Ok(StepFlow::Done(Termination::Completed, None));
            }
            Ok(StepFlow::Continue)
        }
        Err(failure) => {
            let abort = handle_parse_failure(
                &mut state.agent,
                &completion.text,
                &failure,
                &specialty_only,
                options.parse_failure_cap,
                Some(&target.agent_id),
            )?;
            if abort {
                return Ok(StepFlow::Done(Termination::Aborted, None));
            }
            Ok(StepFlow::Continue)
        }
    }
}

fn is_abort(err: &Error) -> bool {
    matches!(err, Error::Backend(_) | Error::ContextOverflow(_))
}

/// Runs one orchestrated episode with the same termination and result
/// contract as the solo executor.
pub fn run_bolaa_episode(
    pool: &BolaaPool,
    task: &Task,
    env: &mut dyn Environment,
    backend: &dyn Backend,
    prompter: &Prompter,
    options: &RunOptions,
) -> Result<EpisodeOutcome> {
    pool.validate()?;
    task.validate()?;
    let grammar = env.kind().grammar();
    for agent in &pool.agents {
        if !grammar.contains(&agent.specialty) {
            return Err(Error::Config(format!(
                "labor agent {} specialty {} is outside the {} grammar",
                agent.agent_id,
                agent.specialty,
                env.kind()
            )));
        }
    }
    let initial = env.reset(task)?;

    // the controller shares one trajectory across all labor agents; its own
    // config only carries the episode-level limits, it never generates
    let controller_config = LaaConfig {
        name: pool.name.clone(),
        fewshot: false,
        think: false,
        plan: false,
        max_steps: pool.max_steps,
        context_limit: 0,
        allowed_action_kinds: grammar,
    };
    let mut state = ControllerState {
        task,
        pool,
        agent: AgentState::new(task, &controller_config),
        last_observation: initial,
    };
    let mut prompts = Vec::new();
    let mut termination = None;
    let mut backend_failure = None;
    while termination.is_none() {
        if state.agent.step_index >= pool.max_steps {
            termination = Some(Termination::MaxSteps);
            break;
        }
        match orchestrate_step(&mut state, env, backend, prompter, options, &mut prompts)? {
            StepFlow::Continue => {}
            StepFlow::Done(t, cause) => {
                termination = Some(t);
                backend_failure = cause;
            }
        }
    }

    let termination = termination.unwrap_or(Termination::Aborted);
    let mut trajectory = state.agent.trajectory;
    trajectory.finalize(termination);
    let score = env.final_score();
    let result = EpisodeResult {
        task_id: task.id.clone(),
        reward: score.reward,
        recall: score.recall,
        steps_used: state.agent.step_index,
        terminated: termination,
        trajectory_ref: None,
    };
    result.validate()?;
    Ok(EpisodeOutcome { trajectory, result, prompts, backend_failure })
}
