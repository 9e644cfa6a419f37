//! Token, distribution, and sequence primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vocabulary entry. Plain integer id in `0..vocab_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One `(token, probability)` entry of a top-k distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistEntry {
    pub token: TokenId,
    pub prob: f64,
}

/// Truncated next-token distribution.
///
/// Entries are kept sorted by probability, descending; equal probabilities are
/// ordered by ascending token id so the ordering (and therefore `argmax`) is
/// total and deterministic. Probabilities are full-softmax values, so the sum
/// over the retained top-k never exceeds one (up to rounding).
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    entries: Vec<DistEntry>,
}

/// Slack allowed on the probability-mass check to absorb rounding.
pub const PROB_SUM_SLACK: f64 = 1e-9;

impl Distribution {
    /// Validates and sorts `entries` into a distribution.
    pub fn new(mut entries: Vec<DistEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidDistribution("no entries".into()));
        }
        let mut sum = 0.0;
        for e in &entries {
            if !e.prob.is_finite() || e.prob <= 0.0 || e.prob > 1.0 {
                return Err(Error::InvalidDistribution(format!(
                    "probability {} for token {} outside (0, 1]",
                    e.prob, e.token
                )));
            }
            sum += e.prob;
        }
        if sum > 1.0 + PROB_SUM_SLACK {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum} > 1"
            )));
        }
        entries.sort_by(|a, b| {
            b.prob
                .partial_cmp(&a.prob)
                .expect("finite probs")
                .then(a.token.cmp(&b.token))
        });
        for w in entries.windows(2) {
            if w[0].token == w[1].token {
                return Err(Error::InvalidDistribution(format!(
                    "duplicate token {}",
                    w[0].token
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Entries in rank order (rank 0 = argmax).
    pub fn entries(&self) -> &[DistEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Highest-probability token.
    pub fn argmax(&self) -> TokenId {
        self.entries[0].token
    }

    /// Probability of the argmax.
    pub fn top1_prob(&self) -> f64 {
        self.entries[0].prob
    }

    /// `rank` is zero-based; `nth(1)` is the second-best candidate.
    pub fn nth(&self, rank: usize) -> Option<DistEntry> {
        self.entries.get(rank).copied()
    }

    /// Zero-based rank of `token`, if it is within the retained top-k.
    pub fn rank_of(&self, token: TokenId) -> Option<usize> {
        self.entries.iter().position(|e| e.token == token)
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.rank_of(token).is_some()
    }
}

/// A run of tokens anchored at an absolute position.
///
/// `tokens[i]` sits at absolute position `base_position + i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequence {
    pub tokens: Vec<TokenId>,
    pub base_position: usize,
}

impl Sequence {
    pub fn new(tokens: Vec<TokenId>, base_position: usize) -> Self {
        Self {
            tokens,
            base_position,
        }
    }

    /// Empty sequence starting at position 0.
    pub fn empty() -> Self {
        Self::new(Vec::new(), 0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Position one past the final token.
    pub fn end_position(&self) -> usize {
        self.base_position + self.tokens.len()
    }
}
