mod encode;
mod schema;
mod split;
mod synth;
mod table;

pub use encode::{
    embedding_width, fit_encoders, ContinuousStats, EncodedDataset, Encoder, TargetStats,
    Vocabulary, MAX_EMBEDDING_WIDTH,
};
pub use schema::{ColumnRole, ColumnSpec, SchemaConfig, TargetTransform};
pub use split::{split_by_fraction, split_by_time, SplitSpec, SplitStrategy};
pub use synth::{excess_kurtosis, gen_synthetic, synthetic_schema, SynthKind};
pub use table::{load_csv, load_csv_reader, parse_timestamp, Column, RawTable};
