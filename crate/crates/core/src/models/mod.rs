//! Pluggable next-token models and the counted forward operations on them.
//!
//! A model is a deterministic function from a token context to a truncated
//! next-token distribution. Decoding cost is measured in *forward calls* and
//! *batch width* (tokens processed per call); per-session counters live in
//! [`ModelHandle`], not in the model, so a single model can back many runs.

pub mod synthetic;
pub mod trace;

pub use synthetic::{synthetic_pair, AgreementProfile, SyntheticDraft, SyntheticTarget};
pub use trace::{
    load_trace, manifest_path, record_pair, write_manifest, write_trace, PairStats, TraceManifest,
    TraceModel,
};

use crate::error::{Error, Result};
use crate::mask::{check_mask, AttentionMask};
use crate::tree::DraftTree;
use crate::types::{Distribution, Sequence, TokenId};

/// Deterministic next-token model over a fixed vocabulary.
pub trait TokenModel: Send + Sync {
    fn vocab_size(&self) -> u32;

    /// Number of candidates retained per position.
    fn top_k(&self) -> usize;

    /// Raw next-token distribution after `context`. Implementations must be
    /// pure: the same context always yields the same distribution.
    fn query(&self, context: &[TokenId]) -> Result<Distribution>;
}

/// Forward accounting: `calls` counts forward passes, `tokens` sums their
/// batch widths. Every counted operation adds exactly one call.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct CallCounter {
    pub calls: u64,
    pub tokens: u64,
}

impl CallCounter {
    pub fn record(&mut self, width: u64) {
        self.calls += 1;
        self.tokens += width;
    }
}

/// A model reference bundled with the session's forward counters.
pub struct ModelHandle<'a> {
    model: &'a dyn TokenModel,
    pub counter: CallCounter,
}

impl<'a> ModelHandle<'a> {
    pub fn new(model: &'a dyn TokenModel) -> Self {
        Self {
            model,
            counter: CallCounter::default(),
        }
    }

    pub fn vocab_size(&self) -> u32 {
        self.model.vocab_size()
    }

    pub fn top_k(&self) -> usize {
        self.model.top_k()
    }

    /// Uncounted query, for kernels that account a whole batched forward
    /// themselves via [`ModelHandle::record_forward`].
    pub fn raw_query(&self, context: &[TokenId]) -> Result<Distribution> {
        self.model.query(context)
    }

    /// Records one forward pass of the given batch width.
    pub fn record_forward(&mut self, width: u64) {
        self.counter.record(width);
    }

    /// Single-step decode: one forward call of width one.
    pub fn next_distribution(&mut self, context: &[TokenId]) -> Result<Distribution> {
        self.counter.record(1);
        self.model.query(context)
    }

    /// Evaluates several contexts in one forward pass. `counted_width` is the
    /// batch width to charge, normally `contexts.len()`; callers that model
    /// free slots may charge less.
    pub fn batch_queries(
        &mut self,
        contexts: &[Vec<TokenId>],
        counted_width: u64,
    ) -> Result<Vec<Distribution>> {
        self.counter.record(counted_width);
        contexts.iter().map(|c| self.model.query(c)).collect()
    }
}

/// Evaluates a whole draft tree in one masked forward pass.
///
/// Entry `i` is the distribution the model assigns after `prefix` plus the
/// strict ancestors of node `i` — exactly what `next_distribution` would
/// return when walking that path sequentially. Costs one forward call with
/// batch width equal to the node count.
pub fn batch_distributions(
    handle: &mut ModelHandle,
    tree: &DraftTree,
    mask: &AttentionMask,
    prefix: &Sequence,
) -> Result<Vec<Distribution>> {
    check_mask(tree, mask)?;
    if prefix.end_position() != tree.root_prefix_len {
        return Err(Error::Config(format!(
            "prefix ends at position {} but tree roots sit at {}",
            prefix.end_position(),
            tree.root_prefix_len
        )));
    }
    handle.record_forward(tree.len() as u64);
    let mut out = Vec::with_capacity(tree.len());
    for i in 0..tree.len() {
        let mut ctx = prefix.tokens.clone();
        let path = tree.path_to(i);
        for &n in &path[..path.len() - 1] {
            ctx.push(tree.nodes[n].token);
        }
        out.push(handle.raw_query(&ctx)?);
    }
    Ok(out)
}
