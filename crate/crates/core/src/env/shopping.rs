//! Simulated web-shopping environment over a fixture catalog.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{tokenize, Environment, Observation, PageKind, Score, StepOutcome};
use crate::error::{Error, Result};
use crate::types::{Action, EnvKind, GroundTruth, Task};

pub const CATALOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub title: String,
    pub attributes: BTreeSet<String>,
    pub price: f64,
    #[serde(default)]
    pub options: BTreeMap<String, Vec<String>>,
    pub description: String,
}

impl Product {
    fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Validation(format!("product {}: no attributes", self.id)));
        }
        if self.price <= 0.0 {
            return Err(Error::Validation(format!("product {}: price must be positive", self.id)));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    schema_version: u32,
    products: Vec<Product>,
}

#[derive(Debug, Clone)]
pub struct Catalog {
    products: Vec<Product>,
    by_id: HashMap<String, usize>,
}

impl Catalog {
    pub fn new(products: Vec<Product>) -> Result<Catalog> {
        let mut by_id = HashMap::with_capacity(products.len());
        for (i, p) in products.iter().enumerate() {
            p.validate()?;
            if by_id.insert(p.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate product id {}", p.id)));
            }
        }
        Ok(Catalog { products, by_id })
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn get(&self, id: &str) -> Option<&Product> {
        self.by_id.get(id).map(|&i| &self.products[i])
    }

    pub fn load(path: &Path) -> Result<Catalog> {
        let raw = std::fs::read_to_string(path)?;
        let file: CatalogFile = serde_json::from_str(&raw)?;
        if file.schema_version != CATALOG_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "unsupported catalog schema_version {} (expected {CATALOG_SCHEMA_VERSION})",
                file.schema_version
            )));
        }
        Catalog::new(file.products)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CatalogFile {
            schema_version: CATALOG_SCHEMA_VERSION,
            products: self.products.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

/// Lexical ranking: score a product by how many normalized query terms
/// appear among its title, attribute, and description tokens. Descending
/// score, ties broken by ascending id, top-k returned. Products that match
/// no term are excluded; an empty query returns nothing.
pub fn search_products(query: &str, catalog: &Catalog, k: usize) -> Vec<String> {
    let terms = tokenize(query);
    if terms.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut scored: Vec<(usize, &str)> = catalog
        .products()
        .iter()
        .filter_map(|p| {
            let mut haystack: BTreeSet<String> = tokenize(&p.title).into_iter().collect();
            for attr in &p.attributes {
                haystack.extend(tokenize(attr));
            }
            haystack.extend(tokenize(&p.description));
            let score = terms.iter().filter(|t| haystack.contains(*t)).count();
            (score > 0).then_some((score, p.id.as_str()))
        })
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(k).map(|(_, id)| id.to_string()).collect()
}

/// Attribute-overlap reward for a purchase: |bought ∩ required| / |required|.
/// With the price gate enabled, an item priced above the task's cap scores 0.
pub fn webshop_reward(bought: &Product, gt: &GroundTruth, price_gate: bool) -> Result<f64> {
    let GroundTruth::Shopping { required_attributes, price_cap, .. } = gt else {
        return Err(Error::Contract("webshop_reward needs a shopping ground truth".into()));
    };
    if required_attributes.is_empty() {
        return Err(Error::Validation("empty required attribute set".into()));
    }
    if price_gate {
        if let Some(cap) = price_cap {
            if bought.price > *cap {
                return Ok(0.0);
            }
        }
    }
    let overlap = bought.attributes.intersection(required_attributes).count();
    Ok(overlap as f64 / required_attributes.len() as f64)
}

/// 1 if the ground-truth product id appeared on any results page during the
/// session, 0 otherwise.
pub fn recall(retrieved_ids: &BTreeSet<String>, gt: &GroundTruth) -> Result<u8> {
    let GroundTruth::Shopping { target_product_id, .. } = gt else {
        return Err(Error::Contract("recall needs a shopping ground truth".into()));
    };
    Ok(u8::from(retrieved_ids.contains(target_product_id)))
}

#[derive(Debug, Clone, PartialEq)]
enum Page {
    Search,
    Results { query: String, ids: Vec<String> },
    Item { id: String },
    Done,
}

pub struct ShoppingEnv {
    catalog: Arc<Catalog>,
    top_k: usize,
    price_gate: bool,
    task: Option<Task>,
    page: Page,
    retrieved: BTreeSet<String>,
    purchased: Option<String>,
}

impl ShoppingEnv {
    pub fn new(catalog: Arc<Catalog>) -> ShoppingEnv {
        ShoppingEnv {
            catalog,
            top_k: 10,
            price_gate: false,
            task: None,
            page: Page::Search,
            retrieved: BTreeSet::new(),
            purchased: None,
        }
    }

    pub fn with_top_k(mut self, k: usize) -> ShoppingEnv {
        self.top_k = k.max(1);
        self
    }

    /// Enables the optional price gate deviation: purchases above the task's
    /// price cap score 0 instead of their attribute overlap.
    pub fn with_price_gate(mut self, on: bool) -> ShoppingEnv {
        self.price_gate = on;
        self
    }

    pub fn retrieved_ids(&self) -> &BTreeSet<String> {
        &self.retrieved
    }

    pub fn purchased(&self) -> Option<&str> {
        self.purchased.as_deref()
    }

    /// Order-stable digest of the mutable episode state, for checking that
    /// invalid interactions leave the state untouched.
    pub fn state_digest(&self) -> u64 {
        let repr = format!("{:?}|{:?}|{:?}", self.page, self.retrieved, self.purchased);
        crate::fnv1a(repr.as_bytes())
    }

    fn task(&self) -> Result<&Task> {
        self.task.as_ref().ok_or_else(|| Error::Contract("environment not reset".into()))
    }

    fn search_page_observation(&self, note: Option<String>) -> Result<Observation> {
        let instruction = &self.task()?.instruction;
        let mut content = String::new();
        if let Some(note) = note {
            content.push_str(&note);
            content.push(' ');
        }
        content.push_str(&format!("[Search] {instruction} Type search[<query>] to find products."));
        Ok(Observation { page_kind: PageKind::SearchPage, content, clickables: Vec::new() })
    }

    fn results_observation(&self, query: &str, ids: &[String]) -> Observation {
        let mut lines = vec![format!("[Results] Results for '{query}':")];
        let mut clickables = Vec::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            let title = &self.catalog.get(id).expect("ranked ids exist in catalog").title;
            lines.push(format!("{}. {}", i + 1, title));
            clickables.push(title.clone());
        }
        Observation {
            page_kind: PageKind::ResultsPage,
            content: lines.join("\n"),
            clickables,
        }
    }

    fn item_observation(&self, id: &str) -> Observation {
        let p = self.catalog.get(id).expect("item page id exists in catalog");
        let attrs = p.attributes.iter().cloned().collect::<Vec<_>>().join("; ");
        let content = format!(
            "[Item] {}\nPrice: ${:.2}\nAttributes: {}\n{}\nButtons: Buy Now, Back to Search",
            p.title, p.price, attrs, p.description
        );
        Observation {
            page_kind: PageKind::ItemPage,
            content,
            clickables: vec!["Buy Now".to_string(), "Back to Search".to_string()],
        }
    }

    fn current_observation(&self) -> Result<Observation> {
        Ok(match &self.page {
            Page::Search => self.search_page_observation(None)?,
            Page::Results { query, ids } => self.results_observation(query, ids),
            Page::Item { id } => self.item_observation(id),
            Page::Done => Observation {
                page_kind: PageKind::DonePage,
                content: "[Done] Order placed. Thank you!".to_string(),
                clickables: Vec::new(),
            },
        })
    }

    fn invalid_element(&self, element: &str) -> Result<Observation> {
        let current = self.current_observation()?;
        Ok(Observation {
            page_kind: current.page_kind,
            content: format!("Invalid element '{element}'. Nothing happened.\n{}", current.content),
            clickables: current.clickables,
        })
    }
}

impl Environment for ShoppingEnv {
    fn kind(&self) -> EnvKind {
        EnvKind::Shopping
    }

    fn reset(&mut self, task: &Task) -> Result<Observation> {
        if task.env_kind != EnvKind::Shopping {
            return Err(Error::Contract(format!(
                "shopping environment cannot run a {} task",
                task.env_kind
            )));
        }
        task.validate()?;
        self.task = Some(task.clone());
        self.page = Page::Search;
        self.retrieved.clear();
        self.purchased = None;
        self.search_page_observation(None)
    }

    fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        self.task()?;
        if self.page == Page::Done {
            return Err(Error::Contract("episode already done".into()));
        }
        match action {
            Action::Search(query) => {
                let ids = search_products(query, &self.catalog, self.top_k);
                if ids.is_empty() {
                    self.page = Page::Search;
                    let obs = self.search_page_observation(Some(format!(
                        "No results for '{query}'."
                    )))?;
                    return Ok(StepOutcome { observation: obs, done: false });
                }
                self.retrieved.extend(ids.iter().cloned());
                let obs = self.results_observation(query, &ids);
                self.page = Page::Results { query: query.clone(), ids };
                Ok(StepOutcome { observation: obs, done: false })
            }
            Action::Click(element) => {
                let current = self.current_observation()?;
                let matched = current
                    .clickables
                    .iter()
                    .find(|c| c.eq_ignore_ascii_case(element.trim()))
                    .cloned();
                let Some(label) = matched else {
                    return Ok(StepOutcome {
                        observation: self.invalid_element(element)?,
                        done: false,
                    });
                };
                match (&self.page.clone(), label.as_str()) {
                    (Page::Item { id }, "Buy Now") => {
                        self.purchased = Some(id.clone());
                        self.page = Page::Done;
                        Ok(StepOutcome { observation: self.current_observation()?, done: true })
                    }
                    (Page::Item { .. }, "Back to Search") => {
                        self.page = Page::Search;
                        Ok(StepOutcome { observation: self.current_observation()?, done: false })
                    }
                    (Page::Results { ids, .. }, _) => {
                        let id = ids
                            .iter()
                            .find(|id| {
                                self.catalog
                                    .get(id)
                                    .map(|p| p.title.eq_ignore_ascii_case(&label))
                                    .unwrap_or(false)
                            })
                            .cloned()
                            .expect("clickable title maps to a ranked id");
                        self.page = Page::Item { id };
                        Ok(StepOutcome { observation: self.current_observation()?, done: false })
                    }
                    _ => Ok(StepOutcome {
                        observation: self.invalid_element(element)?,
                        done: false,
                    }),
                }
            }
            other => Err(Error::Contract(format!(
                "{} is outside the shopping action grammar",
                other.kind()
            ))),
        }
    }

    fn final_score(&self) -> Score {
        let Some(task) = &self.task else {
            return Score { reward: 0.0, recall: Some(0) };
        };
        let reward = self
            .purchased
            .as_ref()
            .and_then(|id| self.catalog.get(id))
            .map(|p| webshop_reward(p, &task.ground_truth, self.price_gate).unwrap_or(0.0))
            .unwrap_or(0.0);
        let recall = recall(&self.retrieved, &task.ground_truth).unwrap_or(0);
        Score { reward, recall: Some(recall) }
    }
}
