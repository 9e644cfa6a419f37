//! Forward-event accounting, the affine cost model, and CSV reporting.
//!
//! The engine never measures wall-clock time. Every decode accumulates
//! forward calls and batch widths into [`RunMetrics`]; an affine
//! [`CostModel`] (base cost per call plus cost per token in the batch)
//! converts those counts into simulated latency, split into draft and target
//! subtotals. Speedups always compare against the autoregressive reference
//! run over the same transcript.

use crate::error::{Error, Result};
use crate::types::TokenId;

/// Per-run event counters. All token counts sum batch widths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunMetrics {
    pub draft_calls: u64,
    pub draft_tokens: u64,
    pub target_calls: u64,
    pub target_tokens: u64,
    /// Tokens emitted beyond the prompt.
    pub committed_tokens: u64,
    /// Per round: committed tokens minus the correction/bonus. Truncation at
    /// the output cap or end-of-sequence shrinks the final entry so the
    /// accounting identity stays exact.
    pub accepted_per_round: Vec<u64>,
    /// Draft forward steps avoided by grafting retained tokens.
    pub draft_steps_saved: u64,
    pub rounds: u64,
    /// Rounds whose drafting stopped early at the probability threshold.
    pub truncations: u64,
    /// Branches spawned at uncertainty marks.
    pub marks_spawned: u64,
    /// Committed tokens that entered via a graft (recycled content).
    pub reused_committed: u64,
    /// Among rounds whose trunk top-1 failed, how many failures the draft's
    /// rank-two candidate would have recovered.
    pub first_fail_rank2: u64,
    pub first_fail_total: u64,
    /// Order-sensitive digest of the emitted transcript.
    pub transcript_digest: u64,
}

impl RunMetrics {
    /// Books one verification round that committed `accepted + 1` tokens.
    pub fn record_round(&mut self, accepted: u64) {
        self.rounds += 1;
        self.accepted_per_round.push(accepted);
        self.committed_tokens += accepted + 1;
    }

    /// Draft tokens submitted for verification (batch slots minus the
    /// correction/bonus slot of each round).
    pub fn submitted_tokens(&self) -> u64 {
        self.target_tokens.saturating_sub(self.target_calls)
    }

    /// Accepted draft tokens across all rounds.
    pub fn accepted_tokens(&self) -> u64 {
        self.committed_tokens.saturating_sub(self.rounds)
    }

    /// Decoding-acceptance ratio: accepted / submitted draft tokens.
    pub fn accept_ratio(&self) -> f64 {
        let submitted = self.submitted_tokens();
        if submitted == 0 {
            0.0
        } else {
            self.accepted_tokens() as f64 / submitted as f64
        }
    }

    /// Mean accepted draft tokens per verification round.
    pub fn mean_accepted(&self) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.accepted_tokens() as f64 / self.rounds as f64
        }
    }

    /// Drafted-but-rejected tokens (submitted and not accepted).
    pub fn ineffective_steps(&self) -> u64 {
        self.submitted_tokens().saturating_sub(self.accepted_tokens())
    }

    /// Fraction of committed tokens that came through a graft.
    pub fn reuse_fraction(&self) -> f64 {
        if self.committed_tokens == 0 {
            0.0
        } else {
            self.reused_committed as f64 / self.committed_tokens as f64
        }
    }

    /// The bookkeeping identity every decode must satisfy.
    pub fn check_identity(&self) -> bool {
        self.committed_tokens == self.accepted_per_round.iter().sum::<u64>() + self.rounds
    }
}

/// Order-sensitive 64-bit digest of a token sequence.
pub fn transcript_digest(tokens: &[TokenId]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for t in tokens {
        h ^= u64::from(t.0).wrapping_add(0x9E37_79B9);
        h = h.rotate_left(27).wrapping_mul(0x2545_F491_4F6C_DD1D);
    }
    h
}

/// Affine per-call cost: `base + per_token * batch_width`, summed per model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub draft_base: f64,
    pub draft_per_token: f64,
    pub target_base: f64,
    pub target_per_token: f64,
}

impl CostModel {
    /// Target/draft call-base ratio 8, the small-pair regime.
    pub fn preset_8to1() -> Self {
        Self {
            draft_base: 1.0,
            draft_per_token: 0.02,
            target_base: 8.0,
            target_per_token: 0.05,
        }
    }

    /// Target/draft call-base ratio 30, the large-target regime.
    pub fn preset_30to1() -> Self {
        Self {
            draft_base: 1.0,
            draft_per_token: 0.02,
            target_base: 30.0,
            target_per_token: 0.05,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "8to1" => Ok(Self::preset_8to1()),
            "30to1" => Ok(Self::preset_30to1()),
            other => Err(Error::Config(format!(
                "unknown cost preset '{other}' (expected 8to1 or 30to1)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("draft_base", self.draft_base),
            ("draft_per_token", self.draft_per_token),
            ("target_base", self.target_base),
            ("target_per_token", self.target_per_token),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("cost field {name} = {v} invalid")));
            }
        }
        Ok(())
    }
}

/// Simulated latency split by model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latency {
    pub draft: f64,
    pub target: f64,
}

impl Latency {
    pub fn total(&self) -> f64 {
        self.draft + self.target
    }
}

/// Converts counted forwards into simulated latency.
pub fn simulated_latency(m: &RunMetrics, c: &CostModel) -> Latency {
    Latency {
        draft: m.draft_calls as f64 * c.draft_base + m.draft_tokens as f64 * c.draft_per_token,
        target: m.target_calls as f64 * c.target_base + m.target_tokens as f64 * c.target_per_token,
    }
}

/// Latency ratio reference/method. Both runs must have decoded the same
/// transcript; mismatched digests are a losslessness violation. The digest
/// carries no position information, so the reported position is zero —
/// callers holding full transcripts should diff those for a precise
/// location.
pub fn speedup(method: &RunMetrics, reference: &RunMetrics, c: &CostModel) -> Result<f64> {
    if method.transcript_digest != reference.transcript_digest {
        return Err(Error::TranscriptMismatch { position: 0 });
    }
    let m = simulated_latency(method, c).total();
    let r = simulated_latency(reference, c).total();
    if m == 0.0 {
        return Ok(1.0);
    }
    Ok(r / m)
}

/// Pooled cross-run panel: one row summarizing many runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub runs: usize,
    pub mean_accept: f64,
    pub accept_ratio: f64,
    pub mean_draft_steps: f64,
    pub mean_target_rounds: f64,
    pub reuse_frac: f64,
}

/// Pools runs: ratios use summed numerators and denominators.
pub fn summarize(runs: &[RunMetrics]) -> Option<SummaryRow> {
    if runs.is_empty() {
        return None;
    }
    let rounds: u64 = runs.iter().map(|m| m.rounds).sum();
    let accepted: u64 = runs.iter().map(RunMetrics::accepted_tokens).sum();
    let submitted: u64 = runs.iter().map(RunMetrics::submitted_tokens).sum();
    let committed: u64 = runs.iter().map(|m| m.committed_tokens).sum();
    let reused: u64 = runs.iter().map(|m| m.reused_committed).sum();
    let draft_calls: u64 = runs.iter().map(|m| m.draft_calls).sum();
    let n = runs.len() as f64;
    Some(SummaryRow {
        runs: runs.len(),
        mean_accept: if rounds == 0 {
            0.0
        } else {
            accepted as f64 / rounds as f64
        },
        accept_ratio: if submitted == 0 {
            0.0
        } else {
            accepted as f64 / submitted as f64
        },
        mean_draft_steps: draft_calls as f64 / n,
        mean_target_rounds: rounds as f64 / n,
        reuse_frac: if committed == 0 {
            0.0
        } else {
            reused as f64 / committed as f64
        },
    })
}

/// Bit-exact CSV header every report writes.
pub const CSV_HEADER: &str = "strategy,seed,p_top1,p_top2,tau,draft_len,rounds,draft_calls,draft_tokens,target_calls,target_tokens,committed,accept_ratio,mean_accept,reuse_frac,sim_latency_draft,sim_latency_target,sim_latency_total,speedup_vs_ar";

/// One CSV row: run parameters plus measured counters and simulated costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub strategy: String,
    pub seed: u64,
    pub p_top1: f64,
    pub p_top2: f64,
    pub tau: f64,
    pub draft_len: usize,
    pub rounds: u64,
    pub draft_calls: u64,
    pub draft_tokens: u64,
    pub target_calls: u64,
    pub target_tokens: u64,
    pub committed: u64,
    pub accept_ratio: f64,
    pub mean_accept: f64,
    pub reuse_frac: f64,
    pub sim_latency_draft: f64,
    pub sim_latency_target: f64,
    pub sim_latency_total: f64,
    pub speedup_vs_ar: f64,
}

impl CsvRow {
    /// Builds a row from a run, its autoregressive reference, and the cost
    /// model; fails when the transcripts differ.
    #[allow(clippy::too_many_arguments)]
    pub fn from_run(
        strategy: &str,
        seed: u64,
        p_top1: f64,
        p_top2: f64,
        tau: f64,
        draft_len: usize,
        m: &RunMetrics,
        ar: &RunMetrics,
        cost: &CostModel,
    ) -> Result<Self> {
        let lat = simulated_latency(m, cost);
        let sp = speedup(m, ar, cost)?;
        Ok(Self {
            strategy: strategy.to_string(),
            seed,
            p_top1,
            p_top2,
            tau,
            draft_len,
            rounds: m.rounds,
            draft_calls: m.draft_calls,
            draft_tokens: m.draft_tokens,
            target_calls: m.target_calls,
            target_tokens: m.target_tokens,
            committed: m.committed_tokens,
            accept_ratio: m.accept_ratio(),
            mean_accept: m.mean_accepted(),
            reuse_frac: m.reuse_fraction(),
            sim_latency_draft: lat.draft,
            sim_latency_target: lat.target,
            sim_latency_total: lat.total(),
            speedup_vs_ar: sp,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.4},{:.4},{:.4},{:.6}",
            self.strategy,
            self.seed,
            self.p_top1,
            self.p_top2,
            self.tau,
            self.draft_len,
            self.rounds,
            self.draft_calls,
            self.draft_tokens,
            self.target_calls,
            self.target_tokens,
            self.committed,
            self.accept_ratio,
            self.mean_accept,
            self.reuse_frac,
            self.sim_latency_draft,
            self.sim_latency_target,
            self.sim_latency_total,
            self.speedup_vs_ar,
        )
    }
}
