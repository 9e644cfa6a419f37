//! Two-pass sparse-tree prediction.
//!
//! Pass one drafts the greedy trunk to the full cap — low-confidence
//! positions are *marked*, not truncated — reusing the recycling machinery
//! when a rejected suffix was retained from the previous round. Pass two
//! spends a bounded branch budget at the most uncertain marks: each branch
//! starts with the marked position's rank-`branch_k` candidate as a sibling
//! of the marked node and extends greedily, grafting back onto the trunk or
//! an earlier branch when its tokens re-align, and marking its own
//! low-confidence positions so deeper failures can branch too. The
//! materialized tree is verified in one masked target pass; the winning
//! path's rejected continuation is retained for the next round.

use crate::error::Result;
use crate::mask::build_attention_mask;
use crate::metrics::RunMetrics;
use crate::models::{ModelHandle, TokenModel};
use crate::tree::{DraftTree, Origin};
use crate::types::{Sequence, TokenId};
use crate::verify::verify_tree;

use super::{
    draft_chain, recycle_round, tail_step, PathTok, Session, StrategyConfig, UncertaintyMark,
};

/// Picks and removes the most uncertain mark: lowest top-1 probability,
/// ties by position.
fn pop_most_uncertain(marks: &mut Vec<UncertaintyMark>) -> Option<UncertaintyMark> {
    if marks.is_empty() {
        return None;
    }
    let mut best = 0;
    for i in 1..marks.len() {
        let a = &marks[i];
        let b = &marks[best];
        if a.top1_prob < b.top1_prob
            || (a.top1_prob == b.top1_prob && a.position < b.position)
        {
            best = i;
        }
    }
    Some(marks.remove(best))
}

/// Graft targets for a fresh branch node: same token within the merge
/// window, trunk nodes first, then closest position, then lowest id.
fn graft_candidates(tree: &DraftTree, node: usize, window: usize) -> Vec<usize> {
    let token = tree.nodes[node].token;
    let pos = tree.nodes[node].position;
    let mut cands: Vec<usize> = (0..tree.len())
        .filter(|&i| {
            i != node && tree.nodes[i].token == token && tree.nodes[i].position.abs_diff(pos) <= window
        })
        .collect();
    cands.sort_by_key(|&i| {
        (
            tree.nodes[i].origin != Origin::Trunk,
            tree.nodes[i].position.abs_diff(pos),
            i,
        )
    });
    cands
}

/// Decodes with tree-structured speculation per round.
pub fn decode_tsp(
    draft: &dyn TokenModel,
    target: &dyn TokenModel,
    prompt: &Sequence,
    cfg: &StrategyConfig,
) -> Result<(Sequence, RunMetrics)> {
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

        // Pass one: the trunk, full length, no truncation.
        let trunk: Vec<PathTok> = if retained.is_empty() {
            draft_chain(&mut dh, &s.seq, cap, None, cfg.eos, &mut s.metrics)?
        } else {
            recycle_round(&mut dh, &s.seq, &retained, cfg, cap, None, &mut s.metrics)?.path
        };

        let mut tree = DraftTree::new(s.seq.len());
        // Per-node side tables (indexed like tree.nodes): source distribution
        // and whether the token arrived through a graft.
        let mut dists = Vec::new();
        let mut reused = Vec::new();
        let mut marks: Vec<UncertaintyMark> = Vec::new();
        let mut prev: Option<usize> = None;
        for t in &trunk {
            let id = match prev {
                None => tree.push_root(t.token, t.prob, Origin::Trunk),
                Some(p) => tree.push_child(p, t.token, t.prob, Origin::Trunk),
            };
            dists.push(t.dist.clone());
            reused.push(t.reused);
            if t.prob < cfg.tau && cfg.eos != Some(t.token) {
                marks.push(UncertaintyMark {
                    position: tree.nodes[id].position,
                    candidates: t.dist.entries()[1..].to_vec(),
                    source_node: id,
                    top1_prob: t.prob,
                });
            }
            prev = Some(id);
        }

        // Pass two: branch at the most uncertain marks.
        let mut spawned = 0usize;
        while spawned < cfg.max_branches && tree.len() < cfg.max_tree_nodes {
            let Some(mark) = pop_most_uncertain(&mut marks) else {
                break;
            };
            let Some(cand) = mark.candidates.get(cfg.branch_k - 2) else {
                continue;
            };
            let root = match tree.nodes[mark.source_node].parent {
                Some(p) => tree.push_child(p, cand.token, cand.prob, Origin::Branch),
                None => tree.push_root(cand.token, cand.prob, Origin::Branch),
            };
            dists.push(dists[mark.source_node].clone());
            reused.push(false);
            spawned += 1;
            s.metrics.marks_spawned += 1;

            let mut tip = root;
            loop {
                if tree.len() >= cfg.max_tree_nodes
                    || tree.depth(tip) + 1 >= cap
                    || cfg.eos == Some(tree.nodes[tip].token)
                {
                    break;
                }
                let mut ctx = s.seq.clone();
                for &n in &tree.path_to(tip) {
                    ctx.push(tree.nodes[n].token);
                }
                let d = dh.next_distribution(&ctx)?;
                let t = d.argmax();
                let p = d.top1_prob();
                let node = tree.push_child(tip, t, p, Origin::Branch);
                dists.push(d.clone());
                reused.push(false);
                let mut grafted = false;
                for c in graft_candidates(&tree, node, cfg.merge_window) {
                    if tree.graft(node, c, cfg.merge_window).is_ok() {
                        grafted = true;
                        break;
                    }
                }
                if grafted {
                    // The branch re-joined previously drafted content; stop
                    // extending it.
                    break;
                }
                if p < cfg.tau && cfg.eos != Some(t) {
                    marks.push(UncertaintyMark {
                        position: tree.nodes[node].position,
                        candidates: d.entries()[1..].to_vec(),
                        source_node: node,
                        top1_prob: p,
                    });
                }
                tip = node;
            }
        }

        let (mtree, prov) = tree.materialize(cfg.max_tree_nodes)?;
        let mask = build_attention_mask(&mtree)?;
        let outcome = verify_tree(&mut th, &s.prefix(), &mtree, &mask)?;

        let node_reused =
            |n: usize| -> bool { prov[n].via_alias || reused[prov[n].source] };
        let mut pairs: Vec<(TokenId, bool)> = outcome
            .accepted
            .iter()
            .zip(&outcome.accepted_node_ids)
            .map(|(&t, &n)| (t, node_reused(n)))
            .collect();
        pairs.push((outcome.correction, false));

        // Rank bookkeeping against the trunk: where did the trunk first
        // diverge from the committed greedy tokens, and was the committed
        // token the trunk's rank-two candidate there?
        let committed = outcome.committed();
        for (i, t) in trunk.iter().enumerate() {
            let Some(&c) = committed.get(i) else {
                break;
            };
            if t.token != c {
                s.metrics.first_fail_total += 1;
                if t.dist.rank_of(c) == Some(1) {
                    s.metrics.first_fail_rank2 += 1;
                }
                break;
            }
        }

        s.commit(&pairs);
        retained.clear();
        if !s.done && !outcome.fully_accepted && outcome.rejected_node_ids.len() > 1 {
            for &n in &outcome.rejected_node_ids[1..] {
                retained.push(PathTok {
                    token: mtree.nodes[n].token,
                    prob: mtree.nodes[n].prob,
                    reused: node_reused(n),
                    dist: dists[prov[n].source].clone(),
                });
            }
        }
    }
    Ok(s.into_output(Some(&dh), &th))
}
