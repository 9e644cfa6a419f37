//! Draft-sequence recycling: merge retained rejected suffixes into fresh
//! drafting instead of re-predicting them.
//!
//! After a failed round the rejected suffix beyond the correction is kept as
//! *sequence 1*. The next round regenerates from the corrected prefix as
//! *sequence 2* while sequence 1 keeps extending in the same parallel draft
//! steps (disagreements cluster, so the two usually re-align within a couple
//! of tokens). The first regenerated token that matches a retained token
//! within the merge window grafts the chains: regeneration stops and the
//! whole retained tail is adopted without re-drafting it.

use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::models::ModelHandle;
use crate::tree::{DraftTree, Origin};
use crate::types::TokenId;

use super::{PathTok, StrategyConfig};

/// Result of one recycled drafting phase.
#[derive(Debug, Clone)]
pub struct RecycleOutcome {
    /// The two-branch tree: retained trunk plus regeneration, grafted on
    /// merge.
    pub tree: DraftTree,
    /// Best-path tokens ready for linear verification.
    pub path: Vec<PathTok>,
    /// `(regenerated index, retained index)` of the merge, if any.
    pub merged_at: Option<(usize, usize)>,
    /// Retained tokens adopted into the submitted path this round.
    pub steps_saved: u64,
}

fn tip_alive(t: &PathTok, tau: Option<f64>, eos: Option<TokenId>) -> bool {
    eos != Some(t.token) && tau.map_or(true, |cut| t.prob >= cut)
}

/// Drafts one round with recycling. `retained` is the previous round's
/// rejected suffix (minus the disproved head); `cap` bounds the submitted
/// path length; `tau = None` disables truncation (tree-strategy pass one).
pub fn recycle_round(
    draft: &mut ModelHandle,
    prefix: &[TokenId],
    retained: &[PathTok],
    cfg: &StrategyConfig,
    cap: usize,
    tau: Option<f64>,
    metrics: &mut RunMetrics,
) -> Result<RecycleOutcome> {
    if retained.is_empty() {
        return Err(Error::EmptyDraft);
    }
    if cap == 0 {
        return Err(Error::Config("recycled round needs a positive cap".into()));
    }
    let w = cfg.merge_window;
    let eos = cfg.eos;
    let mut seq1: Vec<PathTok> = retained.iter().take(cap).cloned().collect();
    let retained_len = seq1.len();
    let mut ext_active =
        seq1.len() < cap && seq1.last().is_some_and(|t| tip_alive(t, tau, eos));
    let mut seq2: Vec<PathTok> = Vec::new();
    let mut merged: Option<(usize, usize)> = None;
    let mut regen_active = true;

    // Parallel phase: one draft call per step covering the regeneration tip
    // and (while it lives) the retained sequence's extension tip.
    while regen_active {
        let mut contexts = Vec::with_capacity(2);
        let mut ctx2: Vec<TokenId> = prefix.to_vec();
        ctx2.extend(seq2.iter().map(|t| t.token));
        contexts.push(ctx2);
        if ext_active {
            let mut ctx1: Vec<TokenId> = prefix.to_vec();
            ctx1.extend(seq1.iter().map(|t| t.token));
            contexts.push(ctx1);
        }
        let width = if cfg.free_retention {
            1
        } else {
            contexts.len() as u64
        };
        let results = draft.batch_queries(&contexts, width)?;

        let d2 = results[0].clone();
        let j = seq2.len();
        let t2 = d2.argmax();
        let p2 = d2.top1_prob();
        seq2.push(PathTok {
            token: t2,
            prob: p2,
            reused: false,
            dist: d2,
        });
        if !tip_alive(&seq2[j], tau, eos) {
            // End-of-sequence or sub-threshold: regeneration stops without
            // merging, so the threshold's truncation semantics stay exact.
            regen_active = false;
        } else {
            let lo = j.saturating_sub(w);
            let hi = (j + w).min(retained_len - 1);
            let mut best: Option<usize> = None;
            for jp in lo..=hi.max(lo) {
                if jp < retained_len && seq1[jp].token == t2 {
                    let better = match best {
                        None => true,
                        Some(b) => {
                            let (da, db) = (j.abs_diff(jp), j.abs_diff(b));
                            da < db || (da == db && jp < b)
                        }
                    };
                    if better {
                        best = Some(jp);
                    }
                }
            }
            if let Some(jp) = best {
                merged = Some((j, jp));
                regen_active = false;
            } else if seq2.len() == cap {
                regen_active = false;
            }
        }

        if contexts.len() == 2 {
            let d1 = results[1].clone();
            let t1 = d1.argmax();
            let p1 = d1.top1_prob();
            seq1.push(PathTok {
                token: t1,
                prob: p1,
                reused: false,
                dist: d1,
            });
            if seq1.len() >= cap || !tip_alive(seq1.last().expect("just pushed"), tau, eos) {
                ext_active = false;
            }
        }
    }

    // Post-merge phase: the composite tip is sequence 1's tip; keep
    // extending it at single width until its own stop.
    if merged.is_some() {
        while ext_active {
            let mut ctx1: Vec<TokenId> = prefix.to_vec();
            ctx1.extend(seq1.iter().map(|t| t.token));
            let d1 = draft.next_distribution(&ctx1)?;
            let t1 = d1.argmax();
            let p1 = d1.top1_prob();
            seq1.push(PathTok {
                token: t1,
                prob: p1,
                reused: false,
                dist: d1,
            });
            if seq1.len() >= cap || !tip_alive(seq1.last().expect("just pushed"), tau, eos) {
                ext_active = false;
            }
        }
    }

    let mut path: Vec<PathTok> = match merged {
        Some((j, jp)) => {
            let mut p = seq2[..=j].to_vec();
            for (i, t) in seq1.iter().enumerate().skip(jp + 1) {
                let mut t = t.clone();
                if i < retained_len {
                    t.reused = true;
                }
                p.push(t);
            }
            p
        }
        None => seq2.clone(),
    };
    path.truncate(cap);
    if let Some(e) = eos {
        if let Some(i) = path.iter().position(|t| t.token == e) {
            path.truncate(i + 1);
        }
    }
    let steps_saved = path.iter().filter(|t| t.reused).count() as u64;
    metrics.draft_steps_saved += steps_saved;
    if let (Some(cut), Some(last)) = (tau, path.last()) {
        if last.prob < cut && eos != Some(last.token) {
            metrics.truncations += 1;
        }
    }

    let mut tree = DraftTree::new(prefix.len());
    let mut seq1_ids = Vec::with_capacity(seq1.len());
    let mut prev: Option<usize> = None;
    for t in &seq1 {
        let id = match prev {
            None => tree.push_root(t.token, t.prob, Origin::Trunk),
            Some(p) => tree.push_child(p, t.token, t.prob, Origin::Trunk),
        };
        seq1_ids.push(id);
        prev = Some(id);
    }
    let mut seq2_ids = Vec::with_capacity(seq2.len());
    let mut prev: Option<usize> = None;
    for t in &seq2 {
        let id = match prev {
            None => tree.push_root(t.token, t.prob, Origin::Regen),
            Some(p) => tree.push_child(p, t.token, t.prob, Origin::Regen),
        };
        seq2_ids.push(id);
        prev = Some(id);
    }
    if let Some((j, jp)) = merged {
        tree.graft(seq2_ids[j], seq1_ids[jp], w)?;
    }

    Ok(RecycleOutcome {
        tree,
        path,
        merged_at: merged,
        steps_saved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CallCounter, TokenModel};
    use crate::strategies::StrategyKind;
    use crate::types::{DistEntry, Distribution};

    /// Position-table model: argmax and its probability per position.
    struct Rows {
        rows: Vec<(u32, f64)>,
    }

    impl TokenModel for Rows {
        fn vocab_size(&self) -> u32 {
            4096
        }

        fn top_k(&self) -> usize {
            2
        }

        fn query(&self, context: &[TokenId]) -> Result<Distribution> {
            let (t, p) = self.rows[context.len() % self.rows.len()];
            Distribution::new(vec![
                DistEntry {
                    token: TokenId(t),
                    prob: p,
                },
                DistEntry {
                    token: TokenId(t + 500),
                    prob: 0.05,
                },
            ])
        }
    }

    fn tok(t: u32) -> TokenId {
        TokenId(t)
    }

    fn pt(t: u32, p: f64) -> PathTok {
        PathTok {
            token: tok(t),
            prob: p,
            reused: false,
            dist: Distribution::new(vec![DistEntry {
                token: tok(t),
                prob: p,
            }])
            .unwrap(),
        }
    }

    fn cfg() -> StrategyConfig {
        StrategyConfig::new(StrategyKind::AspRecycle)
    }

    #[test]
    fn immediate_resync_adopts_the_retained_tail() {
        // Prefix [A=1, X=2] was just committed; retained suffix [C=30, E=40]
        // sits at positions 2 and 3. The draft's positional table regenerates
        // C at position 2, so the very first parallel step grafts and adopts
        // E without re-drafting it.
        let draft_model = Rows {
            rows: vec![(10, 0.9), (20, 0.9), (30, 0.9), (40, 0.9), (50, 0.9), (60, 0.9)],
        };
        let mut dh = ModelHandle::new(&draft_model);
        let mut m = RunMetrics::default();
        let retained = vec![pt(30, 0.9), pt(40, 0.9)];
        let out = recycle_round(
            &mut dh,
            &[tok(1), tok(2)],
            &retained,
            &cfg(),
            4,
            Some(0.4),
            &mut m,
        )
        .unwrap();
        assert_eq!(out.merged_at, Some((0, 0)));
        assert_eq!(out.steps_saved, 1);
        assert_eq!(m.draft_steps_saved, 1);
        let tokens: Vec<u32> = out.path.iter().map(|t| t.token.0).collect();
        assert_eq!(tokens, vec![30, 40, 50, 60]);
        let reused: Vec<bool> = out.path.iter().map(|t| t.reused).collect();
        assert_eq!(reused, vec![false, true, false, false]);
        // One parallel step of width two, then one single extension step.
        assert_eq!(dh.counter, CallCounter { calls: 2, tokens: 3 });
        assert_eq!(out.tree.aliases.len(), 1);
    }

    #[test]
    fn no_match_falls_back_to_plain_redrafting() {
        // Retained tokens never reappear in the regenerated stream: the
        // round degenerates to the regeneration chain with zero reuse.
        let draft_model = Rows {
            rows: vec![(10, 0.9), (20, 0.9), (30, 0.9), (40, 0.9), (50, 0.9)],
        };
        let mut dh = ModelHandle::new(&draft_model);
        let mut m = RunMetrics::default();
        let retained = vec![pt(777, 0.9), pt(888, 0.9)];
        let out = recycle_round(
            &mut dh,
            &[tok(1), tok(2)],
            &retained,
            &cfg(),
            3,
            Some(0.4),
            &mut m,
        )
        .unwrap();
        assert_eq!(out.merged_at, None);
        assert_eq!(out.steps_saved, 0);
        let tokens: Vec<u32> = out.path.iter().map(|t| t.token.0).collect();
        assert_eq!(tokens, vec![30, 40, 50]);
        assert!(out.path.iter().all(|t| !t.reused));
        assert!(out.tree.aliases.is_empty());
    }

    #[test]
    fn sub_threshold_regeneration_truncates_without_merging() {
        // The first regenerated token sits below tau even though it matches
        // the retained head; truncation wins so the adaptive threshold
        // semantics stay exact.
        let draft_model = Rows {
            rows: vec![(10, 0.9), (20, 0.9), (30, 0.2), (40, 0.9)],
        };
        let mut dh = ModelHandle::new(&draft_model);
        let mut m = RunMetrics::default();
        let retained = vec![pt(30, 0.2), pt(40, 0.9)];
        let out = recycle_round(
            &mut dh,
            &[tok(1), tok(2)],
            &retained,
            &cfg(),
            4,
            Some(0.4),
            &mut m,
        )
        .unwrap();
        assert_eq!(out.merged_at, None);
        let tokens: Vec<u32> = out.path.iter().map(|t| t.token.0).collect();
        assert_eq!(tokens, vec![30]);
        assert_eq!(m.truncations, 1);
    }

    #[test]
    fn free_retention_charges_single_width() {
        let draft_model = Rows {
            rows: vec![(10, 0.9), (20, 0.9), (30, 0.9), (40, 0.9), (50, 0.9), (60, 0.9)],
        };
        let mut honest = RunMetrics::default();
        let mut dh1 = ModelHandle::new(&draft_model);
        let retained = vec![pt(30, 0.9), pt(40, 0.9)];
        recycle_round(
            &mut dh1,
            &[tok(1), tok(2)],
            &retained,
            &cfg(),
            4,
            Some(0.4),
            &mut honest,
        )
        .unwrap();
        let mut c = cfg();
        c.free_retention = true;
        let mut free = RunMetrics::default();
        let mut dh2 = ModelHandle::new(&draft_model);
        recycle_round(
            &mut dh2,
            &[tok(1), tok(2)],
            &retained,
            &c,
            4,
            Some(0.4),
            &mut free,
        )
        .unwrap();
        assert_eq!(dh1.counter.calls, dh2.counter.calls);
        assert!(dh2.counter.tokens < dh1.counter.tokens);
    }

    #[test]
    fn rejects_empty_retention() {
        let draft_model = Rows {
            rows: vec![(10, 0.9)],
        };
        let mut dh = ModelHandle::new(&draft_model);
        let mut m = RunMetrics::default();
        assert!(matches!(
            recycle_round(&mut dh, &[], &[], &cfg(), 4, None, &mut m),
            Err(Error::EmptyDraft)
        ));
    }
}
