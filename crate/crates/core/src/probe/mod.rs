//! Masked-encoding probe: input layout, encoders, relation matrices and the
//! embedding dump format.

pub mod dump;
pub mod encoder;
pub mod layout;
pub mod relation;

pub use dump::{decode_dump, encode_record, read_embedding_dump, write_dump, write_dump_file};
pub use encoder::{F32Rounded, ReferenceEncoder, ReferenceEncoderSpec, SchemaEncoder};
pub use layout::{build_input_layout, layout_from_parts, InputLayout, Segment, SegmentKind};
pub use relation::{
    collect_embeddings, materialize_from_dump, normalize_minmax, probe_example,
    threshold_adjacency, EmbeddingSet,
};
