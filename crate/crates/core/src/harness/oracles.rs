//! Scripted oracle policies built from a task's hidden ground truth. They
//! stand in for a real LLM backbone: the purchase oracle solves shopping
//! tasks perfectly, the answer oracle solves wiki questions perfectly, and
//! the distractor oracle deliberately buys a 2-of-3 attribute match.
//!
//! The staging rules anchor on the task section of the prompt (everything
//! after the `Instruction:` line), so fewshot examples earlier in the prompt
//! never trigger a later stage.

use crate::env::{Catalog, Corpus};
use crate::error::{Error, Result};
use crate::llm::{ScriptedPolicy, ScriptedRule};
use crate::types::{GroundTruth, Task};

const THINK_RULE: (&str, &str) = (r"Think:\s*$", "I should work toward the goal step by step.");
const PLAN_RULE: (&str, &str) =
    (r"Plan:\s*$", "1. Search for the goal item. 2. Open the best match. 3. Complete the task.");

fn staged_shopping_policy(title: &str) -> ScriptedPolicy {
    ScriptedPolicy::new(
        vec![
            ScriptedRule::pattern(THINK_RULE.0, THINK_RULE.1),
            ScriptedRule::pattern(PLAN_RULE.0, PLAN_RULE.1),
            ScriptedRule::pattern(r"(?s)\nInstruction: .*Buy Now", "click[Buy Now]"),
            ScriptedRule::pattern(r"(?s)\nInstruction: .*\[Results\]", format!("click[{title}]")),
        ],
        format!("search[{title}]"),
    )
}

/// Searches the target product by title, clicks it, and buys it.
pub fn purchase_oracle(task: &Task, catalog: &Catalog) -> Result<ScriptedPolicy> {
    let GroundTruth::Shopping { target_product_id, .. } = &task.ground_truth else {
        return Err(Error::Contract(format!("task {} is not a shopping task", task.id)));
    };
    let target = catalog.get(target_product_id).ok_or_else(|| {
        Error::Validation(format!("task {}: target {target_product_id} not in catalog", task.id))
    })?;
    Ok(staged_shopping_policy(&target.title))
}

/// Buys the first product (by id) sharing exactly 2 of the task's required
/// attributes with the ground truth.
pub fn distractor_oracle(task: &Task, catalog: &Catalog) -> Result<ScriptedPolicy> {
    let GroundTruth::Shopping { target_product_id, required_attributes, .. } = &task.ground_truth
    else {
        return Err(Error::Contract(format!("task {} is not a shopping task", task.id)));
    };
    let distractor = catalog
        .products()
        .iter()
        .filter(|p| {
            p.id != *target_product_id
                && p.attributes.intersection(required_attributes).count() == 2
        })
        .min_by(|a, b| a.id.cmp(&b.id))
        .ok_or_else(|| {
            Error::Validation(format!(
                "task {}: no product shares exactly 2 required attributes",
                task.id
            ))
        })?;
    Ok(staged_shopping_policy(&distractor.title))
}

/// Searches a page that mentions the gold answer, then finishes with the
/// gold answer verbatim.
pub fn answer_oracle(task: &Task, corpus: &Corpus) -> Result<ScriptedPolicy> {
    let GroundTruth::WikiQa { gold_answer } = &task.ground_truth else {
        return Err(Error::Contract(format!("task {} is not a wikiqa task", task.id)));
    };
    let page = corpus
        .titles()
        .find(|title| {
            corpus
                .page(title)
                .map(|paragraphs| paragraphs.iter().flatten().any(|s| s.contains(gold_answer.as_str())))
                .unwrap_or(false)
        })
        .or_else(|| corpus.titles().next())
        .ok_or_else(|| Error::Validation("empty corpus".into()))?
        .clone();
    Ok(ScriptedPolicy::new(
        vec![
            ScriptedRule::pattern(THINK_RULE.0, THINK_RULE.1),
            ScriptedRule::pattern(PLAN_RULE.0, PLAN_RULE.1),
            ScriptedRule::pattern(r"(?s)\nInstruction: .*\[Passage", format!("finish[{gold_answer}]")),
        ],
        format!("search[{page}]"),
    ))
}
