//! Seeded synthetic draft/target pair with tunable agreement.
//!
//! The target behaves like an acoustic-conditioned decoder: a hidden
//! per-position *script* (a pure function of the seed) fixes its argmax at
//! every position, regardless of what tokens the context actually holds. That
//! is what lets a draft re-align with the target right after a disagreement
//! burst — the property draft recycling exploits. Everything else about a
//! distribution (filler candidates and their probabilities) is hashed from
//! the full context, so batched and sequential evaluation can only agree when
//! ancestor paths are reconstructed exactly.
//!
//! The draft disagrees with the target according to a two-state Markov chain
//! over positions, giving clustered disagreement bursts of configurable mean
//! length. Draft confidence is drawn per position — low while disagreeing,
//! high while agreeing — so probability-threshold truncation has a real
//! signal to work with.

use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{DistEntry, Distribution, TokenId};

use super::TokenModel;

// Domain tags keep the per-position random streams independent.
const DOMAIN_SCRIPT: u64 = 0xA1;
const DOMAIN_PEAK: u64 = 0xA2;
const DOMAIN_FILL: u64 = 0xA3;
const DOMAIN_CHAIN: u64 = 0xB1;
const DOMAIN_CONF: u64 = 0xB2;
const DOMAIN_RANK: u64 = 0xB3;
const DOMAIN_DECOY: u64 = 0xB4;
const DOMAIN_DRAFT_FILL: u64 = 0xB5;
/// Mixed into the target seed to derive the paired draft's seed.
const DRAFT_SEED_TAG: u64 = 0x5EED_D12A_F700_0001;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable fold of a token context into a hash key.
fn context_hash(context: &[TokenId]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for t in context {
        h ^= u64::from(t.0).wrapping_add(1);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn domain_rng(seed: u64, domain: u64, x: u64) -> ChaCha8Rng {
    let mixed = splitmix64(splitmix64(seed ^ domain.wrapping_mul(GOLDEN_GAMMA)) ^ x);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Draft/target agreement knobs.
///
/// `p_top1` is the stationary probability that the draft's argmax equals the
/// target's at a position. Disagreements cluster in runs with mean length
/// `burst_len`. Conditioned on a disagreement, the target's token appears at
/// rank two of the draft's distribution with probability `p_top2`, otherwise
/// at a deeper retained rank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementProfile {
    pub p_top1: f64,
    pub p_top2: f64,
    pub burst_len: f64,
}

impl AgreementProfile {
    pub fn new(p_top1: f64, p_top2: f64, burst_len: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_top1) {
            return Err(Error::Config(format!("p_top1 {p_top1} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&p_top2) {
            return Err(Error::Config(format!("p_top2 {p_top2} outside [0, 1]")));
        }
        if !burst_len.is_finite() || burst_len < 1.0 {
            return Err(Error::Config(format!("burst_len {burst_len} must be >= 1")));
        }
        Ok(Self {
            p_top1,
            p_top2,
            burst_len,
        })
    }

    /// `(enter, exit)` probabilities of the disagreement chain, chosen so the
    /// stationary disagreement rate is exactly `1 - p_top1`. When the
    /// requested burst length is unreachable at that rate the enter
    /// probability saturates at one and the exit probability adjusts instead.
    fn transitions(&self) -> (f64, f64) {
        let pi_d = 1.0 - self.p_top1;
        if pi_d <= 0.0 {
            return (0.0, 1.0);
        }
        if self.p_top1 <= 0.0 {
            return (1.0, 0.0);
        }
        let mut exit = 1.0 / self.burst_len;
        let mut enter = exit * pi_d / self.p_top1;
        if enter > 1.0 {
            enter = 1.0;
            exit = self.p_top1 / pi_d;
        }
        (enter, exit)
    }
}

/// Builds `tokens.len()` entries where `tokens[0]` carries probability `peak`
/// and the tail decays strictly, with total mass kept below one.
fn peaked_entries(peak: f64, tokens: &[TokenId], rng: &mut ChaCha8Rng) -> Vec<DistEntry> {
    let k = tokens.len();
    let mut weights = Vec::with_capacity(k);
    weights.push(1.0f64);
    for i in 1..k {
        let u: f64 = rng.gen();
        weights.push(weights[i - 1] * (0.35 + 0.45 * u));
    }
    let tail_raw: f64 = weights[1..].iter().sum();
    let mut entries = vec![DistEntry {
        token: tokens[0],
        prob: peak,
    }];
    if tail_raw > 0.0 {
        // Tail max is at most 0.8 * peak, so the rank order is strict.
        let budget = (peak * tail_raw).min((1.0 - peak) * 0.9);
        for (i, &t) in tokens.iter().enumerate().skip(1) {
            entries.push(DistEntry {
                token: t,
                prob: weights[i] * budget / tail_raw,
            });
        }
    }
    entries
}

/// Draws `count` distinct tokens, none of them in `exclude`.
fn distinct_tokens(
    rng: &mut ChaCha8Rng,
    vocab_size: u32,
    count: usize,
    exclude: &[TokenId],
) -> Vec<TokenId> {
    let mut out: Vec<TokenId> = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        let cand = TokenId(rng.gen_range(0..vocab_size));
        if !exclude.contains(&cand) && !out.contains(&cand) {
            out.push(cand);
        }
        attempts += 1;
        if attempts > 64 * (count + 1) {
            // Deterministic fallback for tiny vocabularies.
            for raw in 0..vocab_size {
                let cand = TokenId(raw);
                if out.len() == count {
                    break;
                }
                if !exclude.contains(&cand) && !out.contains(&cand) {
                    out.push(cand);
                }
            }
            break;
        }
    }
    out
}

/// Deterministic target model with a peaked head.
///
/// The argmax at position `p` is the hidden script token for `p`; its
/// probability lies in `[0.5, 0.95]`. The remaining top-k entries are hashed
/// from the full context.
pub struct SyntheticTarget {
    seed: u64,
    vocab_size: u32,
    k: usize,
}

impl SyntheticTarget {
    pub fn new(seed: u64, vocab_size: u32, k: usize) -> Result<Self> {
        if vocab_size < 4 {
            return Err(Error::Config(format!(
                "vocab_size {vocab_size} too small; need at least 4"
            )));
        }
        if k < 2 {
            return Err(Error::Config(format!("top-k {k} must be at least 2")));
        }
        Ok(Self {
            seed,
            vocab_size,
            k,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn script(&self, position: usize) -> TokenId {
        TokenId(domain_rng(self.seed, DOMAIN_SCRIPT, position as u64).gen_range(0..self.vocab_size))
    }

    fn k_eff(&self) -> usize {
        self.k.min(self.vocab_size as usize)
    }
}

impl TokenModel for SyntheticTarget {
    fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    fn top_k(&self) -> usize {
        self.k_eff()
    }

    fn query(&self, context: &[TokenId]) -> Result<Distribution> {
        let p = context.len();
        let script = self.script(p);
        let peak = {
            let u: f64 = domain_rng(self.seed, DOMAIN_PEAK, p as u64).gen();
            0.5 + 0.45 * u
        };
        let mut fill_rng = domain_rng(self.seed, DOMAIN_FILL, context_hash(context));
        let mut tokens = vec![script];
        tokens.extend(distinct_tokens(
            &mut fill_rng,
            self.vocab_size,
            self.k_eff() - 1,
            &[script],
        ));
        Distribution::new(peaked_entries(peak, &tokens, &mut fill_rng))
    }
}

/// Draft model paired with a [`SyntheticTarget`] by seed.
///
/// Whether the draft agrees with the target at a position, and how confident
/// it is there, are functions of the position alone; only filler candidates
/// depend on the context. Re-drafting a position after a failed round
/// therefore reproduces the same token, which is what makes retained suffixes
/// mergeable.
pub struct SyntheticDraft {
    target: SyntheticTarget,
    draft_seed: u64,
    profile: AgreementProfile,
    enter: f64,
    exit: f64,
    /// Memoized disagreement chain, indexed by position.
    chain: Mutex<Vec<bool>>,
}

impl SyntheticDraft {
    pub fn new(target_seed: u64, vocab_size: u32, k: usize, profile: AgreementProfile) -> Result<Self> {
        let target = SyntheticTarget::new(target_seed, vocab_size, k)?;
        let (enter, exit) = profile.transitions();
        Ok(Self {
            draft_seed: splitmix64(target_seed ^ DRAFT_SEED_TAG),
            target,
            profile,
            enter,
            exit,
            chain: Mutex::new(Vec::new()),
        })
    }

    pub fn profile(&self) -> AgreementProfile {
        self.profile
    }

    /// True when the draft's argmax disagrees with the target at `position`.
    fn disagrees(&self, position: usize) -> bool {
        let mut chain = self.chain.lock().expect("chain lock");
        while chain.len() <= position {
            let i = chain.len();
            let u: f64 = domain_rng(self.draft_seed, DOMAIN_CHAIN, i as u64).gen();
            let next = if i == 0 {
                u < 1.0 - self.profile.p_top1
            } else if chain[i - 1] {
                u >= self.exit
            } else {
                u < self.enter
            };
            chain.push(next);
        }
        chain[position]
    }

    /// Draft argmax probability at `position`: high in agreement, low inside
    /// a disagreement burst. The two bands tile [0.15, 0.95) without overlap
    /// so a threshold sweep moves through them continuously: thresholds below
    /// 0.6 progressively distrust burst tokens, thresholds above 0.6
    /// additionally truncate confident agreement runs.
    fn confidence(&self, position: usize, disagree: bool) -> f64 {
        let u: f64 = domain_rng(self.draft_seed, DOMAIN_CONF, position as u64).gen();
        if disagree {
            0.15 + 0.45 * u
        } else {
            0.6 + 0.35 * u
        }
    }

    /// Zero-based rank at which the target's token appears while
    /// disagreeing; `None` when it falls outside the retained top-k.
    fn target_rank(&self, position: usize) -> Option<usize> {
        let k = self.target.k_eff();
        let mut rng = domain_rng(self.draft_seed, DOMAIN_RANK, position as u64);
        let u: f64 = rng.gen();
        if u < self.profile.p_top2 {
            Some(1)
        } else if k >= 3 {
            Some(2 + rng.gen_range(0..(k - 2)))
        } else {
            None
        }
    }

    /// Wrong-argmax token emitted inside a burst; never the script token.
    fn decoy(&self, position: usize) -> TokenId {
        let script = self.target.script(position);
        let mut rng = domain_rng(self.draft_seed, DOMAIN_DECOY, position as u64);
        loop {
            let cand = TokenId(rng.gen_range(0..self.target.vocab_size));
            if cand != script {
                return cand;
            }
        }
    }
}

impl TokenModel for SyntheticDraft {
    fn vocab_size(&self) -> u32 {
        self.target.vocab_size
    }

    fn top_k(&self) -> usize {
        self.target.k_eff()
    }

    fn query(&self, context: &[TokenId]) -> Result<Distribution> {
        let p = context.len();
        let k = self.target.k_eff();
        let script = self.target.script(p);
        let disagree = self.disagrees(p);
        let peak = self.confidence(p, disagree);
        let mut fill_rng = domain_rng(self.draft_seed, DOMAIN_DRAFT_FILL, context_hash(context));

        let mut tokens: Vec<TokenId>;
        if disagree {
            let decoy = self.decoy(p);
            let script_rank = self.target_rank(p).filter(|&r| r < k);
            let fillers = distinct_tokens(
                &mut fill_rng,
                self.target.vocab_size,
                k - 1 - usize::from(script_rank.is_some()),
                &[decoy, script],
            );
            tokens = vec![decoy];
            let mut fillers = fillers.into_iter();
            for rank in 1..k {
                if script_rank == Some(rank) {
                    tokens.push(script);
                } else if let Some(f) = fillers.next() {
                    tokens.push(f);
                }
            }
        } else {
            tokens = vec![script];
            tokens.extend(distinct_tokens(
                &mut fill_rng,
                self.target.vocab_size,
                k - 1,
                &[script],
            ));
        }
        Distribution::new(peaked_entries(peak, &tokens, &mut fill_rng))
    }
}

/// Builds a draft/target pair sharing one seed.
pub fn synthetic_pair(
    seed: u64,
    vocab_size: u32,
    k: usize,
    profile: AgreementProfile,
) -> Result<(SyntheticTarget, SyntheticDraft)> {
    Ok((
        SyntheticTarget::new(seed, vocab_size, k)?,
        SyntheticDraft::new(seed, vocab_size, k, profile)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(p1: f64, p2: f64, burst: f64) -> AgreementProfile {
        AgreementProfile::new(p1, p2, burst).unwrap()
    }

    #[test]
    fn queries_are_deterministic() {
        let (target, draft) = synthetic_pair(9, 128, 4, profile(0.8, 0.7, 2.0)).unwrap();
        let ctx = vec![TokenId(5), TokenId(17), TokenId(40)];
        assert_eq!(target.query(&ctx).unwrap(), target.query(&ctx).unwrap());
        assert_eq!(draft.query(&ctx).unwrap(), draft.query(&ctx).unwrap());
    }

    #[test]
    fn target_head_is_peaked() {
        let (target, _) = synthetic_pair(3, 256, 4, profile(0.9, 0.7, 2.0)).unwrap();
        let mut ctx = Vec::new();
        for _ in 0..50 {
            let d = target.query(&ctx).unwrap();
            assert!((0.5..=0.95).contains(&d.top1_prob()), "peak {}", d.top1_prob());
            assert_eq!(d.len(), 4);
            ctx.push(d.argmax());
        }
    }

    #[test]
    fn perfect_agreement_matches_argmax_on_any_prefix() {
        let (target, draft) = synthetic_pair(11, 64, 4, profile(1.0, 0.7, 2.0)).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let len = rng.gen_range(0..12);
            let ctx: Vec<TokenId> = (0..len).map(|_| TokenId(rng.gen_range(0..64))).collect();
            assert_eq!(
                draft.query(&ctx).unwrap().argmax(),
                target.query(&ctx).unwrap().argmax()
            );
        }
    }

    #[test]
    fn agreement_rate_calibrates_to_p_top1() {
        // Pinned configuration: measured top-1 agreement over 10k positions
        // stays within +/- 0.02 of the requested rate.
        let (target, draft) = synthetic_pair(42, 256, 4, profile(0.9, 0.7, 2.0)).unwrap();
        let mut ctx = Vec::new();
        let mut agree = 0u32;
        for _ in 0..10_000 {
            let t = target.query(&ctx).unwrap().argmax();
            let d = draft.query(&ctx).unwrap().argmax();
            if t == d {
                agree += 1;
            }
            ctx.push(t);
        }
        let rate = f64::from(agree) / 10_000.0;
        assert!((0.88..=0.92).contains(&rate), "measured agreement {rate}");
    }

    #[test]
    fn disagreements_cluster_into_bursts() {
        let (_, draft) = synthetic_pair(7, 256, 4, profile(0.9, 0.7, 3.0)).unwrap();
        let states: Vec<bool> = (0..20_000).map(|p| draft.disagrees(p)).collect();
        let mut runs = Vec::new();
        let mut current = 0u32;
        for &d in &states {
            if d {
                current += 1;
            } else if current > 0 {
                runs.push(current);
                current = 0;
            }
        }
        let mean = runs.iter().map(|&r| f64::from(r)).sum::<f64>() / runs.len() as f64;
        assert!((2.4..=3.6).contains(&mean), "mean burst length {mean}");
    }

    #[test]
    fn disagreeing_positions_hide_target_token_at_rank_two() {
        let (target, draft) = synthetic_pair(5, 256, 4, profile(0.5, 0.7, 2.0)).unwrap();
        let mut ctx = Vec::new();
        let mut disagreements = 0u32;
        let mut at_rank_two = 0u32;
        for _ in 0..4_000 {
            let t = target.query(&ctx).unwrap().argmax();
            let d = draft.query(&ctx).unwrap();
            if d.argmax() != t {
                disagreements += 1;
                if d.rank_of(t) == Some(1) {
                    at_rank_two += 1;
                }
                assert!(d.rank_of(t).is_some(), "target token stays in the draft top-k");
            }
            ctx.push(t);
        }
        let frac = f64::from(at_rank_two) / f64::from(disagreements);
        assert!((0.65..=0.75).contains(&frac), "rank-two fraction {frac}");
    }

    #[test]
    fn confidence_separates_agreement_from_bursts() {
        let (target, draft) = synthetic_pair(13, 256, 4, profile(0.85, 0.7, 2.0)).unwrap();
        let mut ctx = Vec::new();
        for p in 0..500 {
            let d = draft.query(&ctx).unwrap();
            if draft.disagrees(p) {
                assert!((0.15..0.6).contains(&d.top1_prob()));
            } else {
                assert!((0.6..=0.95).contains(&d.top1_prob()));
            }
            ctx.push(target.query(&ctx).unwrap().argmax());
        }
    }

    #[test]
    fn rejects_tiny_vocab_and_bad_profile() {
        assert!(SyntheticTarget::new(0, 3, 4).is_err());
        assert!(AgreementProfile::new(1.2, 0.5, 2.0).is_err());
        assert!(AgreementProfile::new(0.9, 0.5, 0.5).is_err());
    }
}
