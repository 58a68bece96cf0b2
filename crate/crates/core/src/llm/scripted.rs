//! Deterministic scripted backend: an ordered rule table over rendered
//! prompts, standing in for a real LLM in tests and oracle benchmarks.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, Completion, GenerationParams};
use crate::error::{Error, Result};

/// Placeholder in response templates, replaced by the most recent
/// observation excerpt found in the prompt.
pub const LAST_OBSERVATION_VAR: &str = "{last_observation}";

const OBSERVATION_PREFIX: &str = "Observation: ";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Case-sensitive literal match anywhere in the prompt.
    Substring(String),
    /// Regex over the whole prompt (anchors allowed).
    Pattern(String),
}

impl Matcher {
    fn matches(&self, prompt: &str, compiled: Option<&Regex>) -> bool {
        match self {
            Matcher::Substring(s) => prompt.contains(s.as_str()),
            Matcher::Pattern(_) => compiled.map(|re| re.is_match(prompt)).unwrap_or(false),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedRule {
    pub matcher: Matcher,
    pub response: String,
}

impl ScriptedRule {
    pub fn substring(needle: impl Into<String>, response: impl Into<String>) -> ScriptedRule {
        ScriptedRule { matcher: Matcher::Substring(needle.into()), response: response.into() }
    }

    pub fn pattern(pattern: impl Into<String>, response: impl Into<String>) -> ScriptedRule {
        ScriptedRule { matcher: Matcher::Pattern(pattern.into()), response: response.into() }
    }
}

/// Ordered rule table; the first matching rule wins, otherwise the default
/// response applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptedPolicy {
    pub rules: Vec<ScriptedRule>,
    pub default_response: String,
}

impl ScriptedPolicy {
    pub fn new(rules: Vec<ScriptedRule>, default_response: impl Into<String>) -> ScriptedPolicy {
        ScriptedPolicy { rules, default_response: default_response.into() }
    }

    pub fn respond(&self, prompt: &str) -> Result<String> {
        let template = self
            .rules
            .iter()
            .find_map(|rule| {
                let compiled = match &rule.matcher {
                    Matcher::Pattern(p) => Some(
                        Regex::new(p)
                            .map_err(|e| Error::Config(format!("bad scripted pattern '{p}': {e}")))
                            .ok()?,
                    ),
                    Matcher::Substring(_) => None,
                };
                rule.matcher.matches(prompt, compiled.as_ref()).then_some(rule.response.as_str())
            })
            .unwrap_or(self.default_response.as_str());
        Ok(render_template(template, prompt))
    }
}

/// Substitutes `{last_observation}` with the excerpt of the last observation
/// block present in the prompt (empty string if there is none).
fn render_template(template: &str, prompt: &str) -> String {
    if !template.contains(LAST_OBSERVATION_VAR) {
        return template.to_string();
    }
    template.replace(LAST_OBSERVATION_VAR, &last_observation_excerpt(prompt))
}

fn last_observation_excerpt(prompt: &str) -> String {
    let Some(start) = prompt.rfind(OBSERVATION_PREFIX) else {
        return String::new();
    };
    let body = &prompt[start + OBSERVATION_PREFIX.len()..];
    // the block ends where the next record or the trailing cue begins
    let end = ["\nAction", "\nThought", "\nThink", "\nPlan", "\nObservation"]
        .iter()
        .filter_map(|m| body.find(m))
        .min()
        .unwrap_or(body.len());
    body[..end].trim().to_string()
}

pub struct ScriptedBackend {
    policy: ScriptedPolicy,
    id: String,
}

impl ScriptedBackend {
    pub fn new(policy: ScriptedPolicy) -> ScriptedBackend {
        ScriptedBackend { policy, id: "scripted".to_string() }
    }

    pub fn with_id(policy: ScriptedPolicy, id: impl Into<String>) -> ScriptedBackend {
        ScriptedBackend { policy, id: id.into() }
    }
}

impl Backend for ScriptedBackend {
    fn generate(&self, prompt: &str, _params: &GenerationParams) -> Result<Completion> {
        if prompt.is_empty() {
            return Err(Error::Contract("empty prompt".into()));
        }
        let text = self.policy.respond(prompt)?;
        Ok(Completion {
            prompt_tokens: estimate_tokens(prompt),
            completion_tokens: estimate_tokens(&text),
            text,
            backend_id: self.id.clone(),
        })
    }

    fn id(&self) -> &str {
        &self.id
    }
}
