//! Deterministic fixture generation: the product catalog, the wiki corpus,
//! and the task universes for both environments. The same code backs the
//! `gen-fixtures` CLI subcommand, so the shipped JSON files are reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Catalog, Corpus, Product};
use crate::error::{Error, Result};
use crate::types::{EnvKind, GroundTruth, Task};

pub const TASKS_SCHEMA_VERSION: u32 = 1;

pub const BUILTIN_POOL_SHOPPING_JSON: &str = include_str!("../fixtures/pool_shopping.json");
pub const BUILTIN_FEWSHOT_SHOPPING_JSON: &str = include_str!("../fixtures/fewshot_shopping.json");
pub const BUILTIN_FEWSHOT_WIKIQA_JSON: &str = include_str!("../fixtures/fewshot_wikiqa.json");
pub const BUILTIN_PLANS_SHOPPING_JSON: &str = include_str!("../fixtures/plans_shopping.json");
pub const BUILTIN_PLANS_WIKIQA_JSON: &str = include_str!("../fixtures/plans_wikiqa.json");

struct Category {
    name: &'static str,
    code: &'static str,
    attrs: [&'static str; 8],
}

const CATEGORIES: [Category; 10] = [
    Category {
        name: "camera tripod",
        code: "ct",
        attrs: [
            "quick release", "easy carry", "lightweight", "aluminum alloy",
            "adjustable height", "non slip feet", "travel friendly", "ball head",
        ],
    },
    Category {
        name: "hiking backpack",
        code: "bp",
        attrs: [
            "water resistant", "padded straps", "large capacity", "ultralight",
            "rain cover", "hip belt", "laptop sleeve", "breathable mesh",
        ],
    },
    Category {
        name: "wireless headphones",
        code: "wh",
        attrs: [
            "noise cancelling", "long battery", "foldable design", "built in mic",
            "deep bass", "bluetooth five", "fast charging", "memory foam",
        ],
    },
    Category {
        name: "desk lamp",
        code: "dl",
        attrs: [
            "adjustable arm", "warm light", "touch control", "usb port",
            "dimmable", "eye caring", "clamp mount", "energy saving",
        ],
    },
    Category {
        name: "rain jacket",
        code: "rj",
        attrs: [
            "waterproof shell", "hooded collar", "zip pockets", "windproof",
            "packable", "reflective trim", "fleece lined", "breathable fabric",
        ],
    },
    Category {
        name: "coffee mug",
        code: "cm",
        attrs: [
            "double wall", "vacuum insulated", "leak proof", "ceramic glaze",
            "wide handle", "dishwasher safe", "travel lid", "hand painted",
        ],
    },
    Category {
        name: "mechanical keyboard",
        code: "mk",
        attrs: [
            "hot swappable", "rgb backlight", "tactile switches", "detachable cable",
            "aluminum frame", "wrist rest", "quiet typing", "compact layout",
        ],
    },
    Category {
        name: "sports watch",
        code: "sw",
        attrs: [
            "heart rate", "gps tracking", "water sealed", "sleep monitor",
            "long standby", "sapphire glass", "quick strap", "altitude meter",
        ],
    },
    Category {
        name: "fleece blanket",
        code: "fb",
        attrs: [
            "machine washable", "extra soft", "double sided", "anti pilling",
            "queen size", "hypoallergenic", "warm knit", "portable roll",
        ],
    },
    Category {
        name: "bluetooth speaker",
        code: "bs",
        attrs: [
            "party mode", "splash proof", "bass boost", "usb c port",
            "strap handle", "voice assistant", "long playtime", "compact size",
        ],
    },
];

const BRANDS: [&str; 10] =
    ["Apex", "Norvo", "Zentia", "Kiro", "Halcyon", "Brio", "Vanta", "Orix", "Lumo", "Terra"];

const COLORS: [&str; 6] = ["black", "silver", "blue", "red", "green", "gray"];

const PRODUCTS_PER_CATEGORY: usize = 30;
const TASKS_PER_LEVEL: usize = 15;
const SHOPPING_LEVELS: u32 = 6;

/// Ordered attribute window for product `j` of a category: `(j % 6) + 1`
/// attributes starting at offset `j % 8`, wrapping around the pool.
fn attr_window(cat: &Category, j: usize) -> Vec<&'static str> {
    let count = (j % 6) + 1;
    let start = j % 8;
    (0..count).map(|k| cat.attrs[(start + k) % 8]).collect()
}

fn make_product(ci: usize, cat: &Category, j: usize, id: String, attrs: Vec<&'static str>, price: f64) -> Product {
    let brand = BRANDS[(ci + j) % BRANDS.len()];
    let code = id.clone();
    let title = format!("{brand} {code} {} {}", attrs[0], cat.name);
    let description = format!("The {title} features {}.", attrs.join(", "));
    let mut options = BTreeMap::new();
    options.insert(
        "color".to_string(),
        vec![COLORS[(ci + j) % 6].to_string(), COLORS[(ci + j + 3) % 6].to_string()],
    );
    Product {
        id,
        title,
        attributes: attrs.iter().map(|a| a.to_string()).collect(),
        price,
        options,
        description,
    }
}

fn level_targets(level: u32) -> Vec<(usize, usize)> {
    // products with (j % 6) + 1 == level, in (category, j) order
    let mut targets = Vec::new();
    for ci in 0..CATEGORIES.len() {
        for j in 0..PRODUCTS_PER_CATEGORY {
            if (j % 6) + 1 == level as usize {
                targets.push((ci, j));
            }
        }
    }
    targets.sort();
    targets.truncate(TASKS_PER_LEVEL);
    targets
}

/// The fixture catalog: 30 products per category with attribute counts
/// cycling 1..=6, plus one dedicated distractor per level-3 task target that
/// shares exactly 2 of its 3 required attributes.
pub fn builtin_catalog() -> Catalog {
    let mut products = Vec::new();
    for (ci, cat) in CATEGORIES.iter().enumerate() {
        for j in 0..PRODUCTS_PER_CATEGORY {
            let attrs = attr_window(cat, j);
            let price = 10.0 + ((j * 7 + ci * 13) % 140) as f64 + (j % 4) as f64 * 0.25;
            let id = format!("{}{:03}", cat.code, j);
            products.push(make_product(ci, cat, j, id, attrs, price));
        }
    }
    for (ci, j) in level_targets(3) {
        let cat = &CATEGORIES[ci];
        let start = j % 8;
        let attrs = vec![cat.attrs[start], cat.attrs[(start + 1) % 8], cat.attrs[(start + 4) % 8]];
        let price = 15.0 + ((j * 7 + ci * 13) % 140) as f64;
        let id = format!("{}d{:02}", cat.code, j);
        products.push(make_product(ci, cat, j + 1, id, attrs, price));
    }
    Catalog::new(products).expect("builtin catalog is valid")
}

fn shopping_instruction(cat: &Category, attrs: &[&str], price_cap: Option<f64>) -> String {
    let listed = match attrs.len() {
        1 => attrs[0].to_string(),
        2 => format!("{} and {}", attrs[0], attrs[1]),
        _ => format!("{} and {}", attrs[..attrs.len() - 1].join(", "), attrs[attrs.len() - 1]),
    };
    match price_cap {
        Some(cap) => format!(
            "I'm looking for a {} with {listed}, and price lower than {cap:.2} dollars.",
            cat.name
        ),
        None => format!("I'm looking for a {} with {listed}.", cat.name),
    }
}

/// The shopping task universe: 15 tasks per complexity level 1..=6, each
/// targeting a catalog product whose attribute set is exactly the required
/// set. Every second task carries a satisfiable price cap.
pub fn builtin_shopping_tasks() -> Vec<Task> {
    let catalog = builtin_catalog();
    let mut tasks = Vec::new();
    for level in 1..=SHOPPING_LEVELS {
        for (seq, (ci, j)) in level_targets(level).into_iter().enumerate() {
            let cat = &CATEGORIES[ci];
            let id = format!("{}{:03}", cat.code, j);
            let product = catalog.get(&id).expect("target exists");
            let attrs = attr_window(cat, j);
            let price_cap = (seq % 2 == 0).then_some(product.price + 20.0);
            tasks.push(Task {
                id: format!("shop-l{level}-{seq:02}"),
                instruction: shopping_instruction(cat, &attrs, price_cap),
                env_kind: EnvKind::Shopping,
                ground_truth: GroundTruth::Shopping {
                    target_product_id: id,
                    required_attributes: attrs.iter().map(|a| a.to_string()).collect(),
                    price_cap,
                },
                complexity: level,
            });
        }
    }
    tasks
}

const LANDMARKS: [&str; 20] = [
    "Kestrel", "Alder", "Vexley", "Solden", "Bramhall", "Tarwick", "Elmsworth", "Fenwick",
    "Mossgate", "Drayce", "Corbell", "Pellam", "Sorrel", "Quillon", "Marden", "Ashvale",
    "Thornby", "Lockridge", "Hartwell", "Greybourne",
];

const PERSONS: [&str; 20] = [
    "Mira Talven", "Edwin Crosse", "Lena Vosper", "Hugo Brandt", "Ada Kellerman",
    "Tomas Reiner", "Oskar Lindqvist", "Nora Castellan", "Felix Armand", "Iris Delmare",
    "Viktor Hale", "Selma Ostrowski", "Rafael Dunmore", "Greta Solvang", "Anton Merrick",
    "Celia Fairbanks", "Dmitri Volkov", "Hanna Birkeland", "Jonas Whitfield", "Clara Voss",
];

const CITIES: [&str; 20] = [
    "Valmora", "Northaven", "Eastmere", "Calder Bay", "Westhollow", "Branford", "Silvermouth",
    "Redgate", "Ostermoor", "Maplecross", "Windmere", "Greenhalt", "Stonewick", "Harrowgate",
    "Millbrook", "Foxden", "Roseport", "Duskvale", "Lunden", "Farwick",
];

const RIVERS: [&str; 20] = [
    "Soren", "Mirel", "Tavish", "Ostrel", "Brade", "Velden", "Camlin", "Durrow", "Eskew",
    "Farrow", "Gilden", "Halden", "Iswell", "Jorvik", "Kelda", "Lumen", "Morrow", "Nysa",
    "Pembra", "Quenby",
];

const PROVINCES: [&str; 4] = ["Aldenia", "Veruna", "Castermore", "Ilvary"];
const BRIDGE_TYPES: [&str; 4] = ["suspension bridge", "stone arch bridge", "viaduct", "footbridge"];

const WIKI_QUESTION_TRIPLES: usize = 12;

fn bridge_title(i: usize) -> String {
    format!("{} Bridge", LANDMARKS[i])
}

fn completed_year(i: usize) -> u32 {
    1797 + 7 * i as u32
}

fn founded_year(i: usize) -> u32 {
    1500 + 9 * i as u32
}

fn birth_year(i: usize) -> u32 {
    1745 + 5 * i as u32
}

/// The fixture corpus: 20 bridges, their 20 designers, and the 20 cities
/// they stand in, each with factual first paragraphs supporting 1 to 3 hop
/// questions.
pub fn builtin_corpus() -> Corpus {
    let mut pages = BTreeMap::new();
    for i in 0..20 {
        let bridge = bridge_title(i);
        let person = PERSONS[i];
        let city = CITIES[i];
        let river = RIVERS[i];
        let province = PROVINCES[i % 4];
        pages.insert(
            bridge.clone(),
            vec![
                vec![
                    format!("The {bridge} is a {} in {city}.", BRIDGE_TYPES[i % 4]),
                    format!("It was completed in {}.", completed_year(i)),
                    format!("The {bridge} was designed by {person}."),
                    format!("It spans the {river} River."),
                ],
                vec![format!("The {bridge} appears on the provincial seal of {province}.")],
            ],
        );
        pages.insert(
            person.to_string(),
            vec![vec![
                format!("{person} was an architect born in {}.", birth_year(i)),
                format!("{person} designed the {bridge}."),
                format!("{person} spent most of their career in {city}."),
            ]],
        );
        pages.insert(
            city.to_string(),
            vec![
                vec![
                    format!("{city} is a coastal city in the province of {province}."),
                    format!("The {river} River flows through {city}."),
                    format!("{city} was founded in {}.", founded_year(i)),
                ],
                vec![format!("The economy of {city} is centered on shipbuilding and trade.")],
            ],
        );
    }
    Corpus::new(pages).expect("builtin corpus is valid")
}

/// The wiki task universe: 12 questions at each difficulty. Easy questions
/// read one page, medium two, hard three.
pub fn builtin_wiki_tasks() -> Vec<Task> {
    let mut tasks = Vec::new();
    for i in 0..WIKI_QUESTION_TRIPLES {
        let bridge = bridge_title(i);
        let person = PERSONS[i];
        tasks.push(Task {
            id: format!("wiki-l1-{i:02}"),
            instruction: format!("In what year was the {bridge} completed?"),
            env_kind: EnvKind::WikiQa,
            ground_truth: GroundTruth::WikiQa { gold_answer: completed_year(i).to_string() },
            complexity: 1,
        });
        tasks.push(Task {
            id: format!("wiki-l2-{i:02}"),
            instruction: format!("What river does the bridge designed by {person} span?"),
            env_kind: EnvKind::WikiQa,
            ground_truth: GroundTruth::WikiQa { gold_answer: format!("{} River", RIVERS[i]) },
            complexity: 2,
        });
        tasks.push(Task {
            id: format!("wiki-l3-{i:02}"),
            instruction: format!(
                "In what year was the city founded where the bridge designed by {person} is located?"
            ),
            env_kind: EnvKind::WikiQa,
            ground_truth: GroundTruth::WikiQa { gold_answer: founded_year(i).to_string() },
            complexity: 3,
        });
    }
    tasks.sort_by(|a, b| a.id.cmp(&b.id));
    tasks
}

pub fn builtin_tasks(env_kind: EnvKind) -> Vec<Task> {
    match env_kind {
        EnvKind::Shopping => builtin_shopping_tasks(),
        EnvKind::WikiQa => builtin_wiki_tasks(),
    }
}

#[derive(Serialize, Deserialize)]
struct TaskFile {
    schema_version: u32,
    tasks: Vec<Task>,
}

pub fn load_tasks(path: &Path) -> Result<Vec<Task>> {
    let raw = std::fs::read_to_string(path)?;
    let file: TaskFile = serde_json::from_str(&raw)?;
    if file.schema_version != TASKS_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "unsupported task schema_version {} (expected {TASKS_SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    for task in &file.tasks {
        task.validate()?;
    }
    Ok(file.tasks)
}

pub fn save_tasks(tasks: &[Task], path: &Path) -> Result<()> {
    let file = TaskFile { schema_version: TASKS_SCHEMA_VERSION, tasks: tasks.to_vec() };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

/// Writes every fixture file into `dir`: catalog, corpus, both task
/// universes, the default labor pool, and the fewshot/plan examples.
pub fn write_all(dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    builtin_catalog().save(&dir.join("catalog.json"))?;
    written.push("catalog.json".to_string());
    builtin_corpus().save(&dir.join("corpus.json"))?;
    written.push("corpus.json".to_string());
    save_tasks(&builtin_shopping_tasks(), &dir.join("tasks_shopping.json"))?;
    written.push("tasks_shopping.json".to_string());
    save_tasks(&builtin_wiki_tasks(), &dir.join("tasks_wikiqa.json"))?;
    written.push("tasks_wikiqa.json".to_string());

    let embedded = [
        ("pool_shopping.json", BUILTIN_POOL_SHOPPING_JSON),
        ("fewshot_shopping.json", BUILTIN_FEWSHOT_SHOPPING_JSON),
        ("fewshot_wikiqa.json", BUILTIN_FEWSHOT_WIKIQA_JSON),
        ("plans_shopping.json", BUILTIN_PLANS_SHOPPING_JSON),
        ("plans_wikiqa.json", BUILTIN_PLANS_WIKIQA_JSON),
    ];
    for (name, bytes) in embedded {
        std::fs::write(dir.join(name), bytes)?;
        written.push(name.to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::search_products;
    use crate::types::task_complexity;

    #[test]
    fn catalog_size_and_validity() {
        let catalog = builtin_catalog();
        assert_eq!(catalog.products().len(), 315);
    }

    #[test]
    fn every_level_has_enough_tasks() {
        let tasks = builtin_shopping_tasks();
        for level in 1..=6 {
            let n = tasks.iter().filter(|t| t.complexity == level).count();
            assert!(n >= 10, "level {level} has only {n} tasks");
        }
        for task in &tasks {
            assert_eq!(task_complexity(task).unwrap(), task.complexity);
        }
    }

    #[test]
    fn target_title_search_ranks_target_first_for_every_task() {
        let catalog = builtin_catalog();
        for task in builtin_shopping_tasks() {
            let GroundTruth::Shopping { target_product_id, .. } = &task.ground_truth else {
                unreachable!()
            };
            let target = catalog.get(target_product_id).unwrap();
            let ranked = search_products(&target.title, &catalog, 10);
            assert_eq!(
                ranked.first(),
                Some(target_product_id),
                "task {}: target not ranked first",
                task.id
            );
        }
    }

    #[test]
    fn every_level3_task_has_an_exactly_two_overlap_distractor() {
        let catalog = builtin_catalog();
        for task in builtin_shopping_tasks().iter().filter(|t| t.complexity == 3) {
            let GroundTruth::Shopping { target_product_id, required_attributes, .. } =
                &task.ground_truth
            else {
                unreachable!()
            };
            let found = catalog.products().iter().any(|p| {
                p.id != *target_product_id
                    && p.attributes.intersection(required_attributes).count() == 2
            });
            assert!(found, "task {}: no 2-of-3 distractor", task.id);
        }
    }

    #[test]
    fn corpus_has_sixty_pages_with_answerable_questions() {
        let corpus = builtin_corpus();
        assert_eq!(corpus.len(), 60);
        for task in builtin_wiki_tasks() {
            let GroundTruth::WikiQa { gold_answer } = &task.ground_truth else { unreachable!() };
            let found = corpus.titles().any(|t| {
                corpus.page(t).unwrap().iter().flatten().any(|s| s.contains(gold_answer.split(' ').next().unwrap()))
            });
            assert!(found, "task {}: gold answer not in corpus", task.id);
        }
    }

    #[test]
    fn wiki_task_counts_per_level() {
        let tasks = builtin_wiki_tasks();
        for level in 1..=3 {
            assert_eq!(tasks.iter().filter(|t| t.complexity == level).count(), 12);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(builtin_shopping_tasks(), builtin_shopping_tasks());
        let a = builtin_catalog();
        let b = builtin_catalog();
        assert_eq!(a.products(), b.products());
    }

    #[test]
    fn file_round_trips(){
        let dir = tempfile::tempdir().unwrap();
        let written = write_all(dir.path()).unwrap();
        assert!(written.contains(&"catalog.json".to_string()));
        let catalog = Catalog::load(&dir.path().join("catalog.json")).unwrap();
        assert_eq!(catalog.products(), builtin_catalog().products());
        let corpus = Corpus::load(&dir.path().join("corpus.json")).unwrap();
        assert_eq!(corpus.len(), 60);
        let tasks = load_tasks(&dir.path().join("tasks_shopping.json")).unwrap();
        assert_eq!(tasks, builtin_shopping_tasks());
    }
}
