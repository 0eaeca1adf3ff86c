//! Schema linking by probing a frozen encoder.
//!
//! Each question word is masked in turn and the movement of every schema
//! item's contextual vector is measured, giving a question-by-schema relation
//! matrix. Thresholded, that matrix becomes a set of link edges that can be
//! merged with string-match links and fed to a relation-aware attention layer.

pub mod datamodel;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod probe;
pub mod ratlayer;
pub mod records;
pub mod render;
pub mod rng;
pub mod rulelink;
pub mod selftest;
pub mod synth;

pub use datamodel::{
    load_examples, load_spider_schemas, parse_examples, parse_spider_schemas, Edge, EdgeTag,
    GoldLinks, ItemKind, LinkGraph, ProbeExample, RelationMatrix, Schema, SchemaCatalog,
    SchemaItem,
};
pub use error::{Error, ErrorClass, Result};
pub use eval::{score_links, LinkMetrics};
pub use geometry::{exp_map_origin, mobius_add, poincare_distance, BallPoint, Metric, TangentVector};
pub use probe::{
    build_input_layout, collect_embeddings, materialize_from_dump, normalize_minmax, probe_example,
    read_embedding_dump, threshold_adjacency, write_dump_file, EmbeddingSet, InputLayout,
    ReferenceEncoder, ReferenceEncoderSpec, SchemaEncoder,
};
pub use ratlayer::{rat_forward, RatConfig, RatOutput, RatParams, Relation, RelationTags, RelationVocabulary};
pub use rulelink::{lexical_link, merge_graphs, MatchConfig};
