//! End-to-end check of the probe on synthetic data with known links.

use std::fmt;

use rayon::prelude::*;

use crate::datamodel::RelationMatrix;
use crate::error::Result;
use crate::eval::{score_links, LinkMetrics};
use crate::geometry::Metric;
use crate::probe::{
    collect_embeddings, decode_dump, encode_record, materialize_from_dump, normalize_minmax,
    probe_example, threshold_adjacency, F32Rounded,
};
use crate::rulelink::{lexical_link, MatchConfig};
use crate::synth::{exact_match_suite, synonym_suite, synthetic_corpus, SyntheticCase};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfTestConfig {
    pub examples: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SelfTestConfig {
    fn default() -> Self {
        Self {
            examples: 60,
            dim: 32,
            seed: 7,
        }
    }
}

/// One scored configuration and whether it met its expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestLine {
    pub suite: &'static str,
    pub method: String,
    pub tau: Option<f64>,
    pub metrics: LinkMetrics,
    pub expected_f1: f64,
}

impl SelfTestLine {
    pub fn passed(&self) -> bool {
        let m = &self.metrics;
        if self.expected_f1 == 1.0 {
            m.precision == 1.0 && m.recall == 1.0 && m.f1 == 1.0
        } else {
            m.f1 == self.expected_f1
        }
    }
}

impl fmt::Display for SelfTestLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        write!(f, "{:<10} {:<10}", self.suite, self.method)?;
        match self.tau {
            Some(t) => write!(f, " tau={t:<10.6}")?,
            None => write!(f, " {:<14}", "")?,
        }
        write!(
            f,
            " precision={:.3} recall={:.3} F1 = {:.3} (expect {:.3}) {}",
            m.precision,
            m.recall,
            m.f1,
            self.expected_f1,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestReport {
    pub lines: Vec<SelfTestLine>,
    /// Examples whose dump round trip did not reproduce the probe matrix.
    pub dump_mismatches: Vec<String>,
}

impl SelfTestReport {
    pub fn passed(&self) -> bool {
        self.dump_mismatches.is_empty() && self.lines.iter().all(SelfTestLine::passed)
    }
}

impl fmt::Display for SelfTestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.lines {
            writeln!(f, "{line}")?;
        }
        if self.dump_mismatches.is_empty() {
            writeln!(f, "dump round trip reproduces probe matrices: PASS")?;
        } else {
            writeln!(f, "dump round trip mismatches: {:?} FAIL", self.dump_mismatches)?;
        }
        write!(f, "selftest {}", if self.passed() { "passed" } else { "FAILED" })
    }
}

fn metric_name(metric: Metric) -> &'static str {
    match metric {
        Metric::Euclidean => "euclidean",
        Metric::Poincare => "poincare",
    }
}

/// Normalized probe matrices for every case.
pub fn probe_cases(cases: &[SyntheticCase], metric: Metric) -> Result<Vec<RelationMatrix>> {
    cases
        .par_iter()
        .map(|c| probe_example(&c.example, &c.encoder, metric).map(|x| normalize_minmax(&x)))
        .collect()
}

/// Smallest normalized score on any planted pair across all cases.
pub fn min_planted_score(cases: &[SyntheticCase], normalized: &[RelationMatrix]) -> f64 {
    cases
        .iter()
        .zip(normalized)
        .flat_map(|(c, x)| c.spec().planted().keys().map(move |&(i, j)| x.get(i, j)))
        .fold(f64::INFINITY, f64::min)
}

/// Micro-averaged probe metrics at threshold `tau`.
pub fn score_probe(cases: &[SyntheticCase], normalized: &[RelationMatrix], tau: f64) -> Result<LinkMetrics> {
    let per_example = cases
        .iter()
        .zip(normalized)
        .map(|(c, x)| {
            let gold = c.example.gold_links().expect("synthetic cases carry gold links");
            score_links(&threshold_adjacency(x, tau)?, gold)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_example.iter().sum())
}

pub fn score_lexical(cases: &[SyntheticCase], config: &MatchConfig) -> Result<LinkMetrics> {
    let per_example = cases
        .iter()
        .map(|c| {
            let gold = c.example.gold_links().expect("synthetic cases carry gold links");
            score_links(&lexical_link(&c.example, config), gold)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_example.iter().sum())
}

/// Examples whose matrix from a dump round trip differs from probing an
/// encoder rounded to dump precision.
pub fn dump_round_trip_mismatches(cases: &[SyntheticCase], metric: Metric) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for c in cases {
        let set = collect_embeddings(&c.example, &c.encoder)?;
        let restored = decode_dump(&encode_record(&set))?;
        let from_dump = materialize_from_dump(&restored[0], metric)?;
        let direct = probe_example(&c.example, &F32Rounded(&c.encoder), metric)?;
        if from_dump != direct {
            bad.push(c.example.example_id().to_owned());
        }
    }
    Ok(bad)
}

pub fn run_selftest(config: &SelfTestConfig) -> Result<SelfTestReport> {
    let corpus = synthetic_corpus(config.examples, config.dim, config.seed)?;
    let synonyms = synonym_suite(config.dim, config.seed)?;
    let exact = exact_match_suite(config.dim, config.seed)?;
    let mut lines = Vec::new();

    for metric in [Metric::Euclidean, Metric::Poincare] {
        let normalized = probe_cases(&corpus, metric)?;
        let tau_max = min_planted_score(&corpus, &normalized);
        for tau in [tau_max, tau_max / 2.0, tau_max / 100.0] {
            lines.push(SelfTestLine {
                suite: "synthetic",
                method: metric_name(metric).into(),
                tau: Some(tau),
                metrics: score_probe(&corpus, &normalized, tau)?,
                expected_f1: 1.0,
            });
        }
    }

    let lexical = MatchConfig::default();
    lines.push(SelfTestLine {
        suite: "synonym",
        method: "lexical".into(),
        tau: None,
        metrics: score_lexical(&synonyms, &lexical)?,
        expected_f1: 0.0,
    });
    for metric in [Metric::Euclidean, Metric::Poincare] {
        let normalized = probe_cases(&synonyms, metric)?;
        let tau = min_planted_score(&synonyms, &normalized);
        lines.push(SelfTestLine {
            suite: "synonym",
            method: metric_name(metric).into(),
            tau: Some(tau),
            metrics: score_probe(&synonyms, &normalized, tau)?,
            expected_f1: 1.0,
        });
    }
    lines.push(SelfTestLine {
        suite: "exact",
        method: "lexical".into(),
        tau: None,
        metrics: score_lexical(&exact, &lexical)?,
        expected_f1: 1.0,
    });

    let mut dump_mismatches = Vec::new();
    for metric in [Metric::Euclidean, Metric::Poincare] {
        dump_mismatches.extend(dump_round_trip_mismatches(&corpus, metric)?);
    }

    Ok(SelfTestReport {
        lines,
        dump_mismatches,
    })
}
