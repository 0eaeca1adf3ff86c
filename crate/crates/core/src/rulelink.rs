//! Lexical n-gram schema linking, the string-matching baseline used to build
//! question/schema edges in relation-aware parsers.

use crate::datamodel::{Edge, EdgeTag, LinkGraph, ProbeExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchConfig {
    max_ngram: usize,
    case_fold: bool,
}

impl MatchConfig {
    pub fn new(max_ngram: usize, case_fold: bool) -> Result<Self> {
        if max_ngram == 0 {
            return Err(Error::Validation("max_ngram must be at least 1".into()));
        }
        Ok(Self { max_ngram, case_fold })
    }

    pub fn max_ngram(&self) -> usize {
        self.max_ngram
    }

    pub fn case_fold(&self) -> bool {
        self.case_fold
    }
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_ngram: 5,
            case_fold: true,
        }
    }
}

/// Links question n-grams to schema items by surface form.
///
/// N-grams are tried longest first. For each schema item, question positions
/// already covered by an earlier match of that item are not reused. An n-gram
/// equal to the item's full name gives `ExactMatch` edges; an n-gram equal to a
/// strict contiguous part of the name gives `PartialMatch` edges.
pub fn lexical_link(example: &ProbeExample, config: &MatchConfig) -> LinkGraph {
    let question: Vec<String> = example
        .question_tokens()
        .iter()
        .map(|t| if config.case_fold { t.to_lowercase() } else { t.clone() })
        .collect();
    let items = example.schema().items();
    let nq = question.len();
    let mut covered = vec![vec![false; nq]; items.len()];
    let mut graph = LinkGraph::new(nq, items.len());

    for n in (1..=config.max_ngram.min(nq)).rev() {
        for start in 0..=nq - n {
            let gram = &question[start..start + n];
            for (j, item) in items.iter().enumerate() {
                let span = &mut covered[j][start..start + n];
                if span.iter().any(|&c| c) {
                    continue;
                }
                let name = item.name_tokens();
                let tag = if gram == name {
                    EdgeTag::ExactMatch
                } else if n < name.len() && name.windows(n).any(|w| w == gram) {
                    EdgeTag::PartialMatch
                } else {
                    continue;
                };
                span.fill(true);
                for question in start..start + n {
                    graph
                        .insert(Edge { question, schema: j, tag })
                        .expect("indices come from the example");
                }
            }
        }
    }
    graph
}

/// Union of two graphs over the same example; tags are kept side by side.
pub fn merge_graphs(probe: &LinkGraph, rule: &LinkGraph) -> Result<LinkGraph> {
    if probe.n_question() != rule.n_question() {
        return Err(Error::DimensionMismatch {
            context: "merged graph question tokens",
            expected: probe.n_question(),
            actual: rule.n_question(),
        });
    }
    if probe.n_schema() != rule.n_schema() {
        return Err(Error::DimensionMismatch {
            context: "merged graph schema items",
            expected: probe.n_schema(),
            actual: rule.n_schema(),
        });
    }
    LinkGraph::from_edges(
        probe.n_question(),
        probe.n_schema(),
        probe.edges().iter().chain(rule.edges()).copied(),
    )
}
