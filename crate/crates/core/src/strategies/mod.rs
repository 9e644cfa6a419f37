//! The decoding strategies: terminating control loops over a draft/target
//! pair and the verification kernels.
//!
//! Every strategy emits, token for token, the sequence target-only greedy
//! decoding would emit for the same prompt and cap — acceleration only ever
//! changes *cost*, never output. Rounds always commit at least one token
//! (the correction), so decoding terminates within `max_output_len` rounds.
//!
//! Drafting in any round is capped at one less than the remaining output
//! budget. Tokens past that could never commit, and the cap keeps every
//! model query — including the final bonus query — inside the domain of
//! finite trace models.

pub mod recycle;
pub mod tsp;

pub use recycle::{recycle_round, RecycleOutcome};
pub use tsp::decode_tsp;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{transcript_digest, RunMetrics};
use crate::models::{ModelHandle, TokenModel};
use crate::types::{DistEntry, Distribution, Sequence, TokenId};
use crate::verify::{verify_linear, VerificationOutcome};

/// The five decoding strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Autoregressive,
    BaselineSpec,
    Asp,
    AspRecycle,
    Tsp,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Autoregressive,
        StrategyKind::BaselineSpec,
        StrategyKind::Asp,
        StrategyKind::AspRecycle,
        StrategyKind::Tsp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Autoregressive => "autoregressive",
            StrategyKind::BaselineSpec => "baseline_spec",
            StrategyKind::Asp => "asp",
            StrategyKind::AspRecycle => "asp_recycle",
            StrategyKind::Tsp => "tsp",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "autoregressive" | "ar" => Ok(StrategyKind::Autoregressive),
            "baseline_spec" | "baseline" => Ok(StrategyKind::BaselineSpec),
            "asp" => Ok(StrategyKind::Asp),
            "asp_recycle" => Ok(StrategyKind::AspRecycle),
            "tsp" => Ok(StrategyKind::Tsp),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Knobs for one decoding session.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Fixed speculation length for the baseline strategy.
    pub draft_len: usize,
    /// Drafting cap per round for the adaptive and tree strategies.
    pub max_draft_len: usize,
    /// Probability threshold: drafting truncates (or marks) below it.
    pub tau: f64,
    /// Branch candidate rank (2 = second-highest probability).
    pub branch_k: usize,
    /// Branch budget per tree.
    pub max_branches: usize,
    /// Maximum position skew for grafting retained tokens.
    pub merge_window: usize,
    pub max_output_len: usize,
    /// Decoding stops once this token is committed; `None` runs to the cap.
    pub eos: Option<TokenId>,
    /// Node budget for materialized trees.
    pub max_tree_nodes: usize,
    /// When set, retained-sequence slots in parallel drafting are not
    /// charged to the batch width.
    pub free_retention: bool,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            draft_len: 8,
            max_draft_len: 24,
            tau: 0.4,
            branch_k: 2,
            max_branches: 4,
            merge_window: 1,
            max_output_len: 200,
            eos: None,
            max_tree_nodes: 64,
            free_retention: false,
        }
    }

    /// Validates fields against the models' retained distribution size.
    pub fn validate(&self, model_top_k: usize) -> Result<()> {
        if self.draft_len == 0 {
            return Err(Error::Config("draft_len must be positive".into()));
        }
        if self.max_draft_len == 0 {
            return Err(Error::Config("max_draft_len must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.branch_k < 2 {
            return Err(Error::Config("branch_k must be at least 2".into()));
        }
        if self.branch_k > model_top_k {
            return Err(Error::Config(format!(
                "branch_k {} exceeds model top-k {model_top_k}",
                self.branch_k
            )));
        }
        if self.max_branches == 0 {
            return Err(Error::Config("max_branches must be positive".into()));
        }
        if self.max_output_len == 0 {
            return Err(Error::Config("max_output_len must be positive".into()));
        }
        if self.max_tree_nodes < 2 {
            return Err(Error::Config("max_tree_nodes must be at least 2".into()));
        }
        Ok(())
    }
}

/// A drafted token with the distribution it was drawn from and whether it
/// entered the current chain through a graft.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTok {
    pub token: TokenId,
    pub prob: f64,
    pub reused: bool,
    pub dist: Distribution,
}

/// A drafted position whose top-1 probability fell below the threshold,
/// with the remaining candidates for branch expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMark {
    pub position: usize,
    /// Candidates excluding the emitted top-1, by descending probability.
    pub candidates: Vec<DistEntry>,
    pub source_node: usize,
    pub top1_prob: f64,
}

/// Shared per-session commit bookkeeping.
pub(crate) struct Session<'a> {
    pub cfg: &'a StrategyConfig,
    pub seq: Vec<TokenId>,
    pub prompt_len: usize,
    pub metrics: RunMetrics,
    pub done: bool,
}

impl<'a> Session<'a> {
    pub fn new(prompt: &Sequence, cfg: &'a StrategyConfig) -> Result<Self> {
        if prompt.base_position != 0 {
            return Err(Error::Config(format!(
                "prompt must start at position 0, got {}",
                prompt.base_position
            )));
        }
        Ok(Self {
            cfg,
            seq: prompt.tokens.clone(),
            prompt_len: prompt.tokens.len(),
            metrics: RunMetrics::default(),
            done: false,
        })
    }

    pub fn emitted(&self) -> &[TokenId] {
        &self.seq[self.prompt_len..]
    }

    /// Tokens still allowed before the output cap.
    pub fn budget(&self) -> usize {
        self.cfg.max_output_len - self.emitted().len()
    }

    pub fn prefix(&self) -> Sequence {
        Sequence::new(self.seq.clone(), 0)
    }

    /// Commits one round's tokens (`(token, came_via_graft)` pairs),
    /// truncating at the output cap and at end-of-sequence.
    pub fn commit(&mut self, tokens: &[(TokenId, bool)]) {
        let mut take = tokens.len().min(self.budget());
        let mut hit_eos = false;
        if let Some(eos) = self.cfg.eos {
            if let Some(i) = tokens[..take].iter().position(|&(t, _)| t == eos) {
                take = i + 1;
                hit_eos = true;
            }
        }
        debug_assert!(take >= 1, "every round must commit at least one token");
        for &(t, reused) in &tokens[..take] {
            self.seq.push(t);
            if reused {
                self.metrics.reused_committed += 1;
            }
        }
        self.metrics.record_round(take as u64 - 1);
        if hit_eos || self.budget() == 0 {
            self.done = true;
        }
    }

    pub fn into_output(mut self, draft: Option<&ModelHandle>, target: &ModelHandle) -> (Sequence, RunMetrics) {
        if let Some(d) = draft {
            self.metrics.draft_calls = d.counter.calls;
            self.metrics.draft_tokens = d.counter.tokens;
        }
        self.metrics.target_calls = target.counter.calls;
        self.metrics.target_tokens = target.counter.tokens;
        self.metrics.transcript_digest = transcript_digest(self.emitted());
        let out = Sequence::new(self.emitted().to_vec(), self.prompt_len);
        (out, self.metrics)
    }
}

/// Commits one target step with no speculation: the round that finishes out
/// the last budget slot.
pub(crate) fn tail_step(target: &mut ModelHandle, s: &mut Session) -> Result<()> {
    let g = target.next_distribution(&s.seq)?.argmax();
    s.commit(&[(g, false)]);
    Ok(())
}

/// Drafts a greedy chain of up to `cap` tokens. `tau = Some(t)` enables
/// early truncation: the first token whose top-1 probability falls below `t`
/// is included and ends the chain.
pub(crate) fn draft_chain(
    draft: &mut ModelHandle,
    base_ctx: &[TokenId],
    cap: usize,
    tau: Option<f64>,
    eos: Option<TokenId>,
    metrics: &mut RunMetrics,
) -> Result<Vec<PathTok>> {
    let mut ctx = base_ctx.to_vec();
    let mut out = Vec::new();
    while out.len() < cap {
        let dist = draft.next_distribution(&ctx)?;
        let token = dist.argmax();
        let prob = dist.top1_prob();
        ctx.push(token);
        out.push(PathTok {
            token,
            prob,
            reused: false,
            dist,
        });
        if eos == Some(token) {
            break;
        }
        if let Some(t) = tau {
            if prob < t {
                metrics.truncations += 1;
                break;
            }
        }
    }
    Ok(out)
}

/// Pairs a verification outcome with per-token graft flags for committing.
pub(crate) fn commit_pairs(
    outcome: &VerificationOutcome,
    path: &[PathTok],
) -> Vec<(TokenId, bool)> {
    let mut out: Vec<(TokenId, bool)> = outcome
        .accepted
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            debug_assert_eq!(path[i].token, t);
            (t, path[i].reused)
        })
        .collect();
    out.push((outcome.correction, false));
    out
}

/// Books rank statistics for a failed round: was the correction the draft's
/// rank-two candidate at the failure position?
pub(crate) fn note_first_fail(
    metrics: &mut RunMetrics,
    outcome: &VerificationOutcome,
    path: &[PathTok],
) {
    if outcome.fully_accepted {
        return;
    }
    let idx = outcome.accepted.len();
    if let Some(tok) = path.get(idx) {
        metrics.first_fail_total += 1;
        if tok.dist.rank_of(outcome.correction) == Some(1) {
            metrics.first_fail_rank2 += 1;
        }
    }
}

/// Runs `cfg.kind` over the pair and prompt.
pub fn decode(
    draft: &dyn TokenModel,
    target: &dyn TokenModel,
    prompt: &Sequence,
    cfg: &StrategyConfig,
) -> Result<(Sequence, RunMetrics)> {
    cfg.validate(draft.top_k().min(target.top_k()))?;
    match cfg.kind {
        StrategyKind::Autoregressive => decode_autoregressive_run(target, prompt, cfg),
        StrategyKind::BaselineSpec => decode_baseline_spec(draft, target, prompt, cfg),
        StrategyKind::Asp | StrategyKind::AspRecycle => decode_asp(draft, target, prompt, cfg),
        StrategyKind::Tsp => tsp::decode_tsp(draft, target, prompt, cfg),
    }
}

/// Target-only greedy decoding: the reference transcript for every
/// losslessness check. Only the cap and end-of-sequence fields of `cfg` are
/// read.
pub fn decode_autoregressive(
    target: &dyn TokenModel,
    prompt: &Sequence,
    cfg: &StrategyConfig,
) -> Result<Sequence> {
    decode_autoregressive_run(target, prompt, cfg).map(|(s, _)| s)
}

fn decode_autoregressive_run(
    target: &dyn TokenModel,
    prompt: &Sequence,
    cfg: &StrategyConfig,
) -> Result<(Sequence, RunMetrics)> {
    let mut s = Session::new(prompt, cfg)?;
    let mut th = ModelHandle::new(target);
    while !s.done {
        tail_step(&mut th, &mut s)?;
    }
    Ok(s.into_output(None, &th))
}

/// Fixed-length speculation: draft `cfg.draft_len`, verify, commit, repeat.
pub fn decode_baseline_spec(
    draft: &dyn TokenModel,
    target: &dyn TokenModel,
    prompt: &Sequence,
    cfg: &StrategyConfig,
) -> Result<(Sequence, RunMetrics)> {
    let mut s = Session::new(prompt, cfg)?;
    let mut dh = ModelHandle::new(draft);
    let mut th = ModelHandle::new(target);
    while !s.done {
        let budget = s.budget();
        if budget == 1 {
            tail_step(&mut th, &mut s)?;
            continue;
        }
        let cap = cfg.draft_len.min(budget - 1);
        let path = draft_chain(&mut dh, &s.seq, cap, None, cfg.eos, &mut s.metrics)?;
        let tokens: Vec<TokenId> = path.iter().map(|t| t.token).collect();
        let outcome = verify_linear(&mut th, &s.prefix(), &tokens)?;
        note_first_fail(&mut s.metrics, &outcome, &path);
        s.commit(&commit_pairs(&outcome, &path));
    }
    Ok(s.into_output(Some(&dh), &th))
}

/// Adaptive single-sequence speculation: draft until the first low-
/// confidence token (at most `max_draft_len`), verify, commit. With
/// `AspRecycle`, the rejected suffix of each round is retained and merged
/// into the next round's drafting.
pub fn decode_asp(
    draft: &dyn TokenModel,
    target: &dyn TokenModel,
    prompt: &Sequence,
    cfg: &StrategyConfig,
) -> Result<(Sequence, RunMetrics)> {
    let recycling = cfg.kind == StrategyKind::AspRecycle;
    let mut s = Session::new(prompt, cfg)?;
    let mut dh = ModelHandle::new(draft);
    let mut th = ModelHandle::new(target);
    let mut retained: Vec<PathTok> = Vec::new();
    while !s.done {
        let budget = s.budget();
        if budget == 1 {
            tail_step(&mut th, &mut s)?;
            retained.clear();
            continue;
        }
        let cap = cfg.max_draft_len.min(budget - 1);
        let path = if recycling && !retained.is_empty() {
            recycle_round(
                &mut dh,
                &s.seq,
                &retained,
                cfg,
                cap,
                Some(cfg.tau),
                &mut s.metrics,
            )?
            .path
        } else {
            draft_chain(&mut dh, &s.seq, cap, Some(cfg.tau), cfg.eos, &mut s.metrics)?
        };
        let tokens: Vec<TokenId> = path.iter().map(|t| t.token).collect();
        let outcome = verify_linear(&mut th, &s.prefix(), &tokens)?;
        note_first_fail(&mut s.metrics, &outcome, &path);
        s.commit(&commit_pairs(&outcome, &path));
        retained.clear();
        if recycling && !s.done && !outcome.fully_accepted {
            // Skip the disproved token itself; its successors may re-align.
            let first_kept = outcome.accepted.len() + 1;
            if first_kept < path.len() {
                retained.extend_from_slice(&path[first_kept..]);
            }
        }
    }
    Ok(s.into_output(Some(&dh), &th))
}
