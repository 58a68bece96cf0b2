//! Simulated wiki question-answering environment over a fixture corpus,
//! modeled on the exact-page-or-suggestions behavior of wiki search tools.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{metrics::token_f1, tokenize, Environment, Observation, PageKind, Score, StepOutcome};
use crate::error::{Error, Result};
use crate::types::{Action, EnvKind, GroundTruth, Task};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CorpusFile {
    schema_version: u32,
    /// title -> paragraphs, each paragraph an ordered list of sentences
    pages: BTreeMap<String, Vec<Vec<String>>>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pages: BTreeMap<String, Vec<Vec<String>>>,
    normalized_titles: BTreeMap<String, String>,
}

impl Corpus {
    pub fn new(pages: BTreeMap<String, Vec<Vec<String>>>) -> Result<Corpus> {
        let mut normalized_titles = BTreeMap::new();
        for title in pages.keys() {
            if normalized_titles.insert(normalize_title(title), title.clone()).is_some() {
                return Err(Error::Validation(format!(
                    "corpus titles collide after normalization: {title}"
                )));
            }
        }
        Ok(Corpus { pages, normalized_titles })
    }

    pub fn titles(&self) -> impl Iterator<Item = &String> {
        self.pages.keys()
    }

    pub fn page(&self, title: &str) -> Option<&Vec<Vec<String>>> {
        self.pages.get(title)
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    fn lookup_exact(&self, entity: &str) -> Option<&String> {
        self.normalized_titles.get(&normalize_title(entity))
    }

    /// Up to `n` titles nearest to the query by token overlap, ties by
    /// ascending title.
    fn similar_titles(&self, entity: &str, n: usize) -> Vec<String> {
        let query_tokens = tokenize(entity);
        let mut rows: Vec<(usize, &String)> = self
            .pages
            .keys()
            .map(|title| {
                let title_tokens = tokenize(title);
                let overlap = query_tokens.iter().filter(|t| title_tokens.contains(t)).count();
                (overlap, title)
            })
            .collect();
        rows.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
        rows.into_iter().take(n).map(|(_, t)| t.clone()).collect()
    }

    pub fn load(path: &Path) -> Result<Corpus> {
        let raw = std::fs::read_to_string(path)?;
        let file: CorpusFile = serde_json::from_str(&raw)?;
        if file.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported corpus schema_version {} (expected {CORPUS_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Corpus::new(file.pages)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CorpusFile { schema_version: CORPUS_SCHEMA_VERSION, pages: self.pages.clone() };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

/// Case- and punctuation-insensitive title key.
fn normalize_title(title: &str) -> String {
    tokenize(title).join(" ")
}

#[derive(Debug, Clone)]
struct Passage {
    sentences: Vec<String>,
}

#[derive(Debug, Clone)]
struct LookupCursor {
    keyword: String,
    next: usize,
}

pub struct WikiEnv {
    corpus: Arc<Corpus>,
    task: Option<Task>,
    passage: Option<Passage>,
    cursor: Option<LookupCursor>,
    answer: Option<String>,
    done: bool,
}

impl WikiEnv {
    pub fn new(corpus: Arc<Corpus>) -> WikiEnv {
        WikiEnv { corpus, task: None, passage: None, cursor: None, answer: None, done: false }
    }

    pub fn answer(&self) -> Option<&str> {
        self.answer.as_deref()
    }

    fn task(&self) -> Result<&Task> {
        self.task.as_ref().ok_or_else(|| Error::Contract("environment not reset".into()))
    }

    fn message(content: String) -> Observation {
        Observation { page_kind: PageKind::WikiMessage, content, clickables: Vec::new() }
    }
}

impl Environment for WikiEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::WikiQa
    }

    fn reset(&mut self, task: &Task) -> Result<Observation> {
        if task.env_kind != EnvKind::WikiQa {
            return Err(Error::Contract(format!(
                "wiki environment cannot run a {} task",
                task.env_kind
            )));
        }
        task.validate()?;
        self.task = Some(task.clone());
        self.passage = None;
        self.cursor = None;
        self.answer = None;
        self.done = false;
        Ok(Self::message(format!("[Question] {}", task.instruction)))
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        self.task()?;
        if self.done {
            return Err(Error::Contract("episode already done".into()));
        }
        match action {
            Action::Search(entity) => {
                if let Some(title) = self.corpus.lookup_exact(entity).cloned() {
                    let first_paragraph = self
                        .corpus
                        .page(&title)
                        .and_then(|paragraphs| paragraphs.first())
                        .cloned()
                        .unwrap_or_default();
                    let content = format!("[Passage: {title}] {}", first_paragraph.join(" "));
                    self.passage = Some(Passage { sentences: first_paragraph });
                    self.cursor = None;
                    Ok(StepOutcome {
                        observation: Observation {
                            page_kind: PageKind::WikiPassage,
                            content,
                            clickables: Vec::new(),
                        },
                        done: false,
                    })
                } else {
                    let similar = self.corpus.similar_titles(entity, 5);
                    Ok(StepOutcome {
                        observation: Self::message(format!(
                            "[Message] Could not find '{entity}'. Similar: {}",
                            similar.join("; ")
                        )),
                        done: false,
                    })
                }
            }
            Action::Lookup(keyword) => {
                let Some(passage) = &self.passage else {
                    return Ok(StepOutcome {
                        observation: Self::message(
                            "[Message] No passage selected. Use search[<entity>] first.".to_string(),
                        ),
                        done: false,
                    });
                };
                let needle = keyword.to_lowercase();
                let matches: Vec<&String> = passage
                    .sentences
                    .iter()
                    .filter(|s| s.to_lowercase().contains(&needle))
                    .collect();
                if matches.is_empty() {
                    return Ok(StepOutcome {
                        observation: Observation {
                            page_kind: PageKind::WikiLookupResult,
                            content: "[Lookup] No more results.".to_string(),
                            clickables: Vec::new(),
                        },
                        done: false,
                    });
                }
                let position = match &mut self.cursor {
                    Some(cursor) if cursor.keyword == needle => {
                        let p = cursor.next % matches.len();
                        cursor.next += 1;
                        p
                    }
                    _ => {
                        self.cursor = Some(LookupCursor { keyword: needle.clone(), next: 1 });
                        0
                    }
                };
                Ok(StepOutcome {
                    observation: Observation {
                        page_kind: PageKind::WikiLookupResult,
                        content: format!("[Lookup] {}", matches[position]),
                        clickables: Vec::new(),
                    },
                    done: false,
                })
            }
            Action::Finish(answer) => {
                self.answer = Some(answer.clone());
                self.done = true;
                Ok(StepOutcome {
                    observation: Self::message("[Done] Answer submitted.".to_string()),
                    done: true,
                })
            }
            other => Err(Error::Contract(format!(
                "{} is outside the wikiqa action grammar",
                other.kind()
            ))),
        }
    }

    fn final_score(&self) -> Score {
        let reward = match (&self.task, &self.answer) {
            (Some(task), Some(answer)) => {
                let GroundTruth::WikiQa { gold_answer } = &task.ground_truth else {
                    return Score { reward: 0.0, recall: None };
                };
                token_f1(answer, gold_answer)
            }
            _ => 0.0,
        };
        Score { reward, recall: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mini_corpus() -> Arc<Corpus> {
        let mut pages = BTreeMap::new();
        pages.insert(
            "Kestrel Bridge".to_string(),
            vec![
                vec![
                    "The Kestrel Bridge is a suspension bridge in Valmora.".to_string(),
                    "It was completed in 1901.".to_string(),
                    "The Kestrel Bridge was designed by Mira Talven.".to_string(),
                    "It spans the Soren River.".to_string(),
                ],
                vec!["The bridge is a prime tourist attraction.".to_string()],
            ],
        );
        pages.insert(
            "Valmora".to_string(),
            vec![vec![
                "Valmora is a coastal city.".to_string(),
                "Valmora was founded in 1612.".to_string(),
            ]],
        );
        pages.insert(
            "Mira Talven".to_string(),
            vec![vec!["Mira Talven was an architect born in 1854.".to_string()]],
        );
        Arc::new(Corpus::new(pages).unwrap())
    }

    fn question() -> Task {
        Task {
            id: "w1".into(),
            instruction: "In what year was the Kestrel Bridge completed?".into(),
            env_kind: EnvKind::WikiQa,
            ground_truth: GroundTruth::WikiQa { gold_answer: "1901".into() },
            complexity: 1,
        }
    }

    #[test]
    fn reset_restates_the_question() {
        let mut env = WikiEnv::new(mini_corpus());
        let obs = env.reset(&question()).unwrap();
        assert_eq!(obs.page_kind, PageKind::WikiMessage);
        assert!(obs.content.contains("Kestrel Bridge completed?"));
    }

    #[test]
    fn exact_title_search_is_punctuation_and_case_insensitive() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        let out = env.step(&Action::Search("kestrel bridge!".into())).unwrap();
        assert_eq!(out.observation.page_kind, PageKind::WikiPassage);
        assert!(out.observation.content.starts_with("[Passage: Kestrel Bridge]"));
        // only the first paragraph is shown
        assert!(!out.observation.content.contains("tourist attraction"));
    }

    #[test]
    fn missing_title_lists_similar_pages() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        let out = env.step(&Action::Search("Kestrel Tunnel".into())).unwrap();
        assert_eq!(out.observation.page_kind, PageKind::WikiMessage);
        assert!(out.observation.content.contains("Could not find 'Kestrel Tunnel'"));
        assert!(out.observation.content.contains("Kestrel Bridge"));
    }

    #[test]
    fn lookup_cycles_through_matching_sentences() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        env.step(&Action::Search("Kestrel Bridge".into())).unwrap();
        let a = env.step(&Action::Lookup("Kestrel".into())).unwrap();
        assert!(a.observation.content.contains("suspension bridge"));
        let b = env.step(&Action::Lookup("Kestrel".into())).unwrap();
        assert!(b.observation.content.contains("designed by Mira Talven"));
        let c = env.step(&Action::Lookup("Kestrel".into())).unwrap();
        assert_eq!(a.observation.content, c.observation.content); // cyclic
    }

    #[test]
    fn lookup_without_occurrence_says_no_more_results() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        env.step(&Action::Search("Kestrel Bridge".into())).unwrap();
        let out = env.step(&Action::Lookup("prime".into())).unwrap();
        assert_eq!(out.observation.content, "[Lookup] No more results.");
    }

    #[test]
    fn lookup_without_passage_is_a_synthetic_message() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        let out = env.step(&Action::Lookup("year".into())).unwrap();
        assert!(out.observation.content.contains("No passage selected"));
    }

    #[test]
    fn finish_scores_token_f1() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        let out = env.step(&Action::Finish("1901".into())).unwrap();
        assert!(out.done);
        assert_eq!(env.final_score().reward, 1.0);
        assert_eq!(env.final_score().recall, None);
        assert!(matches!(env.step(&Action::Finish("x".into())), Err(Error::Contract(_))));
    }

    #[test]
    fn click_is_outside_the_grammar() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        assert!(matches!(env.step(&Action::Click("x".into())), Err(Error::Contract(_))));
    }

    #[test]
    fn unanswered_episode_scores_zero() {
        let mut env = WikiEnv::new(mini_corpus());
        env.reset(&question()).unwrap();
        env.step(&Action::Search("Valmora".into())).unwrap();
        assert_eq!(env.final_score().reward, 0.0);
    }
}
