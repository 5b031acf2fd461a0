// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic multi-document QA about fictional people, so answers can only
//! come from the provided context.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::answer::normalize;
use super::dataset::{Document, MultiDocExample};
use crate::error::{Error, Result};
use crate::prompt::substitute;

const FIRST_A: &[&str] = &[
    "Al", "Bre", "Cor", "Dar", "El", "Fen", "Gil", "Hal", "Isa", "Jor", "Kel", "Lor", "Mar",
    "Ner", "Ol", "Pel",
];
const FIRST_B: &[&str] = &[
    "ric", "wyn", "ona", "ian", "isa", "ard", "una", "eth", "ora", "ino", "ace", "ell",
];
const LAST_A: &[&str] = &[
    "Ash", "Bram", "Crow", "Dun", "Elder", "Frost", "Gale", "Holl", "Iver", "Jasp", "Kest",
    "Lark", "Moss", "Nettle",
];
const LAST_B: &[&str] = &[
    "ford", "wick", "mere", "holt", "by", "stead", "thorne", "vale", "croft", "ley",
];
const VALUE_A: &[&str] = &[
    "Quor", "Vex", "Zanth", "Ploz", "Drev", "Yul", "Xem", "Trov", "Skel", "Wib", "Grun", "Obr",
    "Fyz", "Umb", "Rhov", "Jiv",
];
const VALUE_B: &[&str] = &[
    "amir", "oset", "ulon", "ithra", "avex", "orbin", "essa", "undle", "opra", "ekka",
];
const ATTRIBUTES: &[&str] = &[
    "birthplace",
    "home village",
    "first employer",
    "favorite dish",
    "childhood pet",
    "family estate",
];
const FILLER: &[&str] = &[
    "{name} spent many years travelling between small coastal towns.",
    "Friends describe {name} as patient, curious and fond of long walks.",
    "Early records about {name} are sparse and often contradictory.",
    "{name} later wrote a short memoir that was never published.",
    "In later life {name} took up gardening and amateur astronomy.",
    "Several letters written by {name} survive in a private collection.",
];

pub const DEFAULT_FACT_TEMPLATE: &str = "The {attribute} of {name} is {value}.";

/// Fictional "First Last" names, 30720 of them.
pub fn default_name_pool() -> Vec<String> {
    let mut pool = Vec::new();
    for a in FIRST_A {
        for b in FIRST_B {
            for c in LAST_A {
                for d in LAST_B {
                    pool.push(format!("{a}{b} {c}{d}"));
                }
            }
        }
    }
    pool
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    /// Uses [`default_name_pool`] when absent.
    pub name_pool: Option<Vec<String>>,
    /// Must contain `{attribute}`, `{name}` and `{value}`.
    pub fact_template: String,
}

impl SynthConfig {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            seed,
            name_pool: None,
            fact_template: DEFAULT_FACT_TEMPLATE.into(),
        }
    }
}

/// `n` examples of `k` documents. Each document states one fact about a
/// distinct person, framed by filler sentences; the question asks for the
/// gold person's value. No answer string appears in any distractor.
pub fn synth_generate(config: &SynthConfig) -> Result<Vec<MultiDocExample>> {
    let SynthConfig { n, k, seed, .. } = *config;
    if n == 0 || k == 0 {
        return Err(Error::InvalidExample("n and k must be >= 1".into()));
    }
    for slot in ["{attribute}", "{name}", "{value}"] {
        if !config.fact_template.contains(slot) {
            return Err(Error::InvalidTemplate(format!("fact template lacks {slot}")));
        }
    }
    let mut pool = config.name_pool.clone().unwrap_or_else(default_name_pool);
    pool.sort();
    pool.dedup();
    let needed = n * k;
    if pool.len() < needed {
        return Err(Error::NamePoolTooSmall {
            available: pool.len(),
            needed,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let mut names = pool.into_iter();

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let attribute = *ATTRIBUTES.choose(&mut rng).expect("nonempty");
        let people: Vec<String> = names.by_ref().take(k).collect();
        let values = distinct_values(&mut rng, &people, k);
        let gold = rng.random_range(0..k);
        let docs: Vec<Document> = people
            .iter()
            .zip(&values)
            .enumerate()
            .map(|(j, (name, value))| {
                let fact = substitute(
                    &config.fact_template,
                    &[("{attribute}", attribute), ("{name}", name), ("{value}", value)],
                );
                let mut sentences: Vec<String> = FILLER
                    .choose_multiple(&mut rng, 2)
                    .map(|f| f.replace("{name}", name))
                    .collect();
                let at = rng.random_range(0..=sentences.len());
                sentences.insert(at, fact);
                Document {
                    id: format!("synth-{seed}-{i}-{j}"),
                    title: name.clone(),
                    text: sentences.join(" "),
                    is_gold: j == gold,
                }
            })
            .collect();
        let question = format!("What is the {attribute} of {}?", people[gold]);
        let example = MultiDocExample::new(question, alloc::vec![values[gold].clone()], docs)?;
        debug_assert!(contamination_free(&example));
        out.push(example);
    }
    Ok(out)
}

/// `k` values, none of which occurs (normalized) in another value, a name,
/// or any fixed sentence text.
fn distinct_values(rng: &mut ChaCha8Rng, people: &[String], k: usize) -> Vec<String> {
    let blocked: Vec<String> = people
        .iter()
        .map(String::as_str)
        .chain(FILLER.iter().copied())
        .chain(ATTRIBUTES.iter().copied())
        .map(normalize)
        .collect();
    let mut values: Vec<String> = Vec::with_capacity(k);
    while values.len() < k {
        let v = format!(
            "{}{}",
            VALUE_A.choose(rng).expect("nonempty"),
            VALUE_B.choose(rng).expect("nonempty")
        );
        let nv = normalize(&v);
        let clash = values.iter().any(|o| {
            let no = normalize(o);
            no.contains(&nv) || nv.contains(&no)
        }) || blocked.iter().any(|b| b.contains(&nv));
        if !clash {
            values.push(v);
        }
    }
    values
}

/// True when no distractor mentions any answer string (normalized).
pub fn contamination_free(example: &MultiDocExample) -> bool {
    example
        .docs
        .iter()
        .filter(|d| !d.is_gold)
        .all(|d| {
            let text = normalize(&d.text);
            example
                .answers
                .iter()
                .all(|a| !text.contains(&normalize(a)))
        })
}
