//! Lossless speculative decoding over pluggable token models.
//!
//! Everything here is deterministic and side-effect free: models are pure
//! functions of their context, forward passes are counted rather than timed,
//! and every decoding strategy is required to reproduce the target model's
//! greedy transcript token for token. Simulated latency is derived from the
//! forward-pass counts through an affine cost model, so relative speedups
//! are reproducible on any machine.

pub mod error;
pub mod mask;
pub mod metrics;
pub mod models;
pub mod strategies;
pub mod tree;
pub mod types;
pub mod verify;

pub use error::{Error, Result};
pub use mask::{build_attention_mask, check_mask, AttentionMask};
pub use metrics::{
    simulated_latency, speedup, summarize, transcript_digest, CostModel, CsvRow, Latency,
    RunMetrics, SummaryRow, CSV_HEADER,
};
pub use models::{
    batch_distributions, load_trace, manifest_path, record_pair, synthetic_pair, write_manifest,
    write_trace, AgreementProfile, CallCounter, ModelHandle, PairStats, SyntheticDraft,
    SyntheticTarget, TokenModel, TraceManifest, TraceModel,
};
pub use strategies::{
    decode, decode_autoregressive, decode_tsp, recycle_round, RecycleOutcome, StrategyConfig,
    StrategyKind,
};
pub use tree::{tree_from_sequence, AliasEdge, DraftNode, DraftTree, MaterializedFrom, Origin};
pub use types::{DistEntry, Distribution, Sequence, TokenId};
pub use verify::{verify_linear, verify_tree, VerificationOutcome};
