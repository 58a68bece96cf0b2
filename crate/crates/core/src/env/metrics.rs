//! Answer-grading metric for the wiki environment: token-level F1 between
//! the agent answer and the gold answer.

use std::collections::HashMap;

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Normalization applied to both sides before token F1: lowercase, strip
/// punctuation, drop the articles a/an/the, split on whitespace.
pub fn normalize_answer_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_string)
        .collect()
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

/// Token-level F1 with multiset overlap. Returns 0 when either side has no
/// tokens after normalization.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = normalize_answer_tokens(prediction);
    let gold = normalize_answer_tokens(gold);
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let pred_counts = counts(&pred);
    let gold_counts = counts(&gold);
    let overlap: usize = pred_counts
        .iter()
        .map(|(token, n)| n.min(gold_counts.get(token).unwrap_or(&0)))
        .sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
