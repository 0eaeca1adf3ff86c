//! Precision/recall/F1 over untyped question-schema links.

use serde::Serialize;

use crate::datamodel::{GoldLinks, LinkGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LinkMetrics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl LinkMetrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1,
        }
    }

    /// Micro-average: pools counts, then recomputes the ratios.
    pub fn merge(&self, other: &LinkMetrics) -> LinkMetrics {
        Self::from_counts(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )
    }
}

impl<'a> std::iter::Sum<&'a LinkMetrics> for LinkMetrics {
    fn sum<I: Iterator<Item = &'a LinkMetrics>>(iter: I) -> Self {
        iter.fold(LinkMetrics::default(), |acc, m| acc.merge(m))
    }
}

/// Compares predicted edges with gold links, ignoring edge tags.
pub fn score_links(pred: &LinkGraph, gold: &GoldLinks) -> Result<LinkMetrics> {
    if pred.n_question() != gold.n_question() || pred.n_schema() != gold.n_schema() {
        return Err(Error::Validation(format!(
            "predicted graph is {}x{} but gold links are {}x{}",
            pred.n_question(),
            pred.n_schema(),
            gold.n_question(),
            gold.n_schema()
        )));
    }
    let predicted = pred.pairs();
    let tp = predicted.intersection(gold.pairs()).count();
    Ok(LinkMetrics::from_counts(
        tp,
        predicted.len() - tp,
        gold.pairs().len() - tp,
    ))
}
