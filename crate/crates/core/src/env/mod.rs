//! The environment protocol and the two simulated environments.

mod metrics;
mod shopping;
mod wiki;

pub use metrics::{normalize_answer_tokens, token_f1};
pub use shopping::{
    recall, search_products, webshop_reward, Catalog, Product, ShoppingEnv, CATALOG_SCHEMA_VERSION,
};
pub use wiki::{Corpus, WikiEnv, CORPUS_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::types::{Action, EnvKind, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PageKind {
    SearchPage,
    ResultsPage,
    ItemPage,
    DonePage,
    WikiPassage,
    WikiLookupResult,
    WikiMessage,
}

/// What the agent sees after reset or a step: a page kind, deterministic
/// rendered text, and the labels it may click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub page_kind: PageKind,
    pub content: String,
    pub clickables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub done: bool,
}

/// End-of-episode scores, valid for every termination cause.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub reward: f64,
    /// Defined for shopping only.
    pub recall: Option<u8>,
}

/// One environment instance drives one episode at a time.
pub trait Environment {
    fn kind(&self) -> EnvKind;

    /// Clears all cumulative state and shows the initial observation.
    fn reset(&mut self, task: &Task) -> Result<Observation>;

    /// Executes one action. Errors on actions outside the grammar or after
    /// the episode is done.
    fn step(&mut self, action: &Action) -> Result<StepOutcome>;

    /// Reward and recall given the current state. Callable at any point;
    /// meaningful at episode end.
    fn final_score(&self) -> Score;
}

/// Lowercased alphanumeric tokens, splitting on everything else.
pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}
