//! Synthetic examples with planted ground truth, plus the hand-written
//! synonym and exact-match fixture suites.

use std::sync::Arc;

use crate::datamodel::{ProbeExample, Schema};
use crate::error::Result;
use crate::probe::encoder::{ReferenceEncoder, ReferenceEncoderSpec};
use crate::rng::{stable_hash, SplitMix64};

/// An example paired with the reference encoder that knows its links.
#[derive(Debug, Clone)]
pub struct SyntheticCase {
    pub example: ProbeExample,
    pub encoder: ReferenceEncoder,
}

impl SyntheticCase {
    pub fn spec(&self) -> &ReferenceEncoderSpec {
        self.encoder.spec()
    }
}

const TABLE_WORDS: &[&str] = &[
    "singer", "concert", "stadium", "pets", "student", "course", "teacher", "flight", "airport",
    "employee", "shop", "orchestra", "museum", "visitor", "battle", "ship", "poker", "player",
];

const COLUMN_WORDS: &[&str] = &[
    "id", "name", "age", "country", "capacity", "year", "salary", "city", "weight", "type",
    "date", "price", "rank", "title", "code", "budget", "height", "location", "gender", "score",
];

const QUESTION_WORDS: &[&str] = &[
    "how", "many", "what", "is", "the", "of", "each", "show", "list", "all", "average", "total",
    "which", "has", "most", "for", "with", "and", "find", "number", "oldest", "largest", "every",
    "give", "me", "sorted", "by", "descending",
];

fn pick<'a>(rng: &mut SplitMix64, words: &[&'a str]) -> &'a str {
    words[rng.next_range(0, words.len() - 1)]
}

/// Builds `count` random examples with `|Q| <= 12` and `|S| <= 15`. Each has
/// between one and four planted links with similarities in `[0.1, 1]`, and at
/// least one unlinked pair.
pub fn synthetic_corpus(count: usize, dim: usize, seed: u64) -> Result<Vec<SyntheticCase>> {
    (0..count)
        .map(|k| {
            let mut rng = SplitMix64::new(stable_hash(seed, &["synthetic", &k.to_string()]));
            let n_tables = rng.next_range(1, 3);
            let n_columns = rng.next_range(1, 15 - n_tables);
            let tables = (0..n_tables)
                .map(|t| vec![pick(&mut rng, TABLE_WORDS).to_owned(), format!("t{t}")])
                .collect();
            let columns = (0..n_columns)
                .map(|_| (rng.next_range(0, n_tables - 1), vec![pick(&mut rng, COLUMN_WORDS).to_owned()]))
                .collect();
            let schema = Schema::new(format!("synth_db_{k}"), tables, columns)?;

            let n_question = rng.next_range(3, 12);
            let question: Vec<String> = (0..n_question).map(|_| pick(&mut rng, QUESTION_WORDS).to_owned()).collect();
            let n_schema = schema.len();

            let n_links = rng.next_range(1, 4).min(n_question * n_schema - 1);
            let mut planted = Vec::with_capacity(n_links);
            while planted.len() < n_links {
                let pair = (rng.next_range(0, n_question - 1), rng.next_range(0, n_schema - 1));
                if planted.iter().all(|(p, _)| *p != pair) {
                    planted.push((pair, 0.1 + 0.9 * rng.next_unit()));
                }
            }
            let gold = planted.iter().map(|(p, _)| *p).collect();
            let example = ProbeExample::new(format!("synth_{k}"), question, Arc::new(schema), Some(gold))?;
            let spec = ReferenceEncoderSpec::new(&example, dim, seed, planted)?;
            Ok(SyntheticCase {
                example,
                encoder: ReferenceEncoder::new(spec),
            })
        })
        .collect()
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

struct HandCase<'a> {
    id: &'a str,
    db_id: &'a str,
    tables: &'a [&'a str],
    columns: &'a [(usize, &'a str)],
    question: &'a str,
    /// `(question index, schema index, planted similarity)`
    links: &'a [(usize, usize, f64)],
}

fn build(cases: &[HandCase<'_>], dim: usize, seed: u64) -> Result<Vec<SyntheticCase>> {
    cases
        .iter()
        .map(|c| {
            let schema = Schema::new(
                c.db_id,
                c.tables.iter().map(|t| words(t)).collect(),
                c.columns.iter().map(|(t, n)| (*t, words(n))).collect(),
            )?;
            let gold = c.links.iter().map(|&(i, j, _)| (i, j)).collect();
            let example = ProbeExample::new(c.id, words(c.question), Arc::new(schema), Some(gold))?;
            let spec = ReferenceEncoderSpec::new(&example, dim, seed, c.links.iter().map(|&(i, j, s)| ((i, j), s)))?;
            Ok(SyntheticCase {
                example,
                encoder: ReferenceEncoder::new(spec),
            })
        })
        .collect()
}

/// Questions whose words never occur in any schema name; every gold link is
/// a synonym or paraphrase.
pub fn synonym_suite(dim: usize, seed: u64) -> Result<Vec<SyntheticCase>> {
    build(
        &[
            // pets: tables 0 pets, 1 student; columns 2 pet id, 3 pettype, 4 pet age, 5 stuid
            HandCase {
                id: "syn_pets_category",
                db_id: "pets_1",
                tables: &["pets", "student"],
                columns: &[(0, "pet id"), (0, "pettype"), (0, "pet age"), (1, "stuid")],
                question: "which category of animal is most common",
                links: &[(1, 3, 0.9), (3, 0, 0.6)],
            },
            // cars: 0 cars data, 1 car makers; 2 mpg, 3 cylinders, 4 horsepower, 5 maker
            HandCase {
                id: "syn_cars_pistons",
                db_id: "car_1",
                tables: &["cars data", "car makers"],
                columns: &[(0, "mpg"), (0, "cylinders"), (0, "horsepower"), (1, "maker")],
                question: "which automobiles have eight pistons",
                links: &[(1, 0, 0.7), (4, 3, 0.95)],
            },
            // concerts: 0 singer, 1 concert; 2 name, 3 age, 4 concert name
            HandCase {
                id: "syn_singer_performers",
                db_id: "concert_singer",
                tables: &["singer", "concert"],
                columns: &[(0, "name"), (0, "age"), (1, "concert name")],
                question: "list performers older than thirty",
                links: &[(1, 0, 0.8), (2, 3, 0.75)],
            },
            // employees: 0 employee, 1 shop; 2 salary, 3 city, 4 location
            HandCase {
                id: "syn_employee_wage",
                db_id: "employee_hire_evaluation",
                tables: &["employee", "shop"],
                columns: &[(0, "salary"), (0, "city"), (1, "location")],
                question: "what wage does every worker earn",
                links: &[(1, 2, 0.85), (4, 0, 0.65), (5, 2, 0.3)],
            },
            // flights: 0 aircraft, 1 flight; 2 distance, 3 origin, 4 price
            HandCase {
                id: "syn_flight_planes",
                db_id: "flight_1",
                tables: &["aircraft", "flight"],
                columns: &[(0, "distance"), (1, "origin"), (1, "price")],
                question: "which planes travel furthest",
                links: &[(1, 0, 0.9), (3, 2, 0.7)],
            },
        ],
        dim,
        seed,
    )
}

/// Questions whose gold links are exactly the surface-form matches.
pub fn exact_match_suite(dim: usize, seed: u64) -> Result<Vec<SyntheticCase>> {
    build(
        &[
            // 0 cars data; 1 cylinders, 2 horsepower, 3 mpg
            HandCase {
                id: "exact_cars",
                db_id: "car_1",
                tables: &["cars data"],
                columns: &[(0, "cylinders"), (0, "horsepower"), (0, "mpg")],
                question: "show the cylinders and horsepower",
                links: &[(2, 1, 0.9), (4, 2, 0.8)],
            },
            // 0 pets, 1 student; 2 pet age, 3 weight, 4 fname
            HandCase {
                id: "exact_pets",
                db_id: "pets_1",
                tables: &["pets", "student"],
                columns: &[(0, "pet age"), (0, "weight"), (1, "fname")],
                question: "what is the pet age of each student",
                links: &[(3, 2, 0.9), (4, 2, 0.85), (7, 1, 0.7)],
            },
            // 0 singer, 1 concert; 2 name, 3 country, 4 year
            HandCase {
                id: "exact_singer",
                db_id: "concert_singer",
                tables: &["singer", "concert"],
                columns: &[(0, "name"), (0, "country"), (1, "year")],
                question: "list every singer name and country",
                links: &[(2, 0, 0.8), (3, 2, 0.9), (5, 3, 0.6)],
            },
            // partial match counts: "concert" alone against "concert id"
            // 0 stadium; 1 concert id, 2 capacity
            HandCase {
                id: "exact_stadium",
                db_id: "stadium_db",
                tables: &["stadium"],
                columns: &[(0, "concert id"), (0, "capacity")],
                question: "stadium capacity for each concert",
                links: &[(0, 0, 0.7), (1, 2, 0.8), (4, 1, 0.5)],
            },
        ],
        dim,
        seed,
    )
}
