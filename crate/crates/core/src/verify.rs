//! Target-side verification kernels under greedy acceptance.
//!
//! Both kernels charge exactly one target forward call whose batch width
//! covers every submitted node plus one slot for the correction/bonus
//! distribution. Internally they walk the target's greedy path lazily —
//! token by token along the accepted chain — which computes the identical
//! outcome: a batched masked forward returns, at every node, the same
//! distribution a sequential walk of that node's ancestor path would, so the
//! greedy comparison consumes the same values either way. The lazy walk is
//! what lets replayed trace models verify trees whose side branches leave the
//! recorded path.

use crate::error::{Error, Result};
use crate::mask::{check_mask, AttentionMask};
use crate::models::ModelHandle;
use crate::tree::{DraftTree, Origin};
use crate::types::{Sequence, TokenId};

/// What a verification round established.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationOutcome {
    /// Longest accepted root path, in order.
    pub accepted: Vec<TokenId>,
    /// Target argmax at the first failure, or the bonus token when all
    /// accepted.
    pub correction: TokenId,
    /// Node ids (or draft indices, for linear drafts) along the winning
    /// accepted path.
    pub accepted_node_ids: Vec<usize>,
    /// The submitted continuation below the failure point, outermost first;
    /// empty on full acceptance.
    pub rejected_node_ids: Vec<usize>,
    pub fully_accepted: bool,
}

impl VerificationOutcome {
    /// Tokens the round commits: accepted prefix plus correction/bonus.
    pub fn committed(&self) -> Vec<TokenId> {
        let mut out = self.accepted.clone();
        out.push(self.correction);
        out
    }
}

/// Verifies a linear draft after `prefix`; one call, width `draft.len() + 1`.
///
/// Node ids index into `draft`.
pub fn verify_linear(
    target: &mut ModelHandle,
    prefix: &Sequence,
    draft: &[TokenId],
) -> Result<VerificationOutcome> {
    if draft.is_empty() {
        return Err(Error::EmptyDraft);
    }
    target.record_forward(draft.len() as u64 + 1);
    let mut ctx = prefix.tokens.clone();
    let mut accepted = Vec::new();
    for (i, &d) in draft.iter().enumerate() {
        let g = target.raw_query(&ctx)?.argmax();
        if d != g {
            return Ok(VerificationOutcome {
                accepted,
                correction: g,
                accepted_node_ids: (0..i).collect(),
                rejected_node_ids: (i..draft.len()).collect(),
                fully_accepted: false,
            });
        }
        accepted.push(g);
        ctx.push(g);
    }
    let bonus = target.raw_query(&ctx)?.argmax();
    Ok(VerificationOutcome {
        accepted,
        correction: bonus,
        accepted_node_ids: (0..draft.len()).collect(),
        rejected_node_ids: Vec::new(),
        fully_accepted: true,
    })
}

/// Tie-break rank for same-length accepted paths: trunk first, then lowest
/// node index.
fn preference_key(tree: &DraftTree, node: usize) -> (u8, usize) {
    let trunk = if tree.nodes[node].origin == Origin::Trunk {
        0
    } else {
        1
    };
    (trunk, node)
}

/// Draft-preferred descendant chain from `node` (exclusive) to a leaf:
/// trunk-origin child first, then highest draft probability, then lowest
/// index.
fn preferred_chain(tree: &DraftTree, mut frontier: Vec<usize>) -> Vec<usize> {
    let mut out = Vec::new();
    while !frontier.is_empty() {
        let best = *frontier
            .iter()
            .min_by(|&&a, &&b| {
                preference_key(tree, a)
                    .0
                    .cmp(&preference_key(tree, b).0)
                    .then(
                        tree.nodes[b]
                            .prob
                            .partial_cmp(&tree.nodes[a].prob)
                            .expect("finite probs"),
                    )
                    .then(a.cmp(&b))
            })
            .expect("non-empty frontier");
        out.push(best);
        frontier = tree.children(best);
    }
    out
}

/// Verifies a draft tree after `prefix`; one call, width `node count + 1`.
///
/// Among all root-to-node paths the outcome reports the one with maximal
/// accepted length under the greedy rule, ties broken trunk-first then by
/// lowest node index. `rejected_node_ids` is the draft-preferred continuation
/// below the failure point, ready for recycling. The tree must be fully
/// materialized: alias edges are rejected here.
pub fn verify_tree(
    target: &mut ModelHandle,
    prefix: &Sequence,
    tree: &DraftTree,
    mask: &AttentionMask,
) -> Result<VerificationOutcome> {
    if tree.len() == 0 {
        return Err(Error::MalformedTree("empty tree".into()));
    }
    if !tree.aliases.is_empty() {
        return Err(Error::MalformedTree(
            "tree carries unexpanded alias edges; materialize before verification".into(),
        ));
    }
    check_mask(tree, mask)?;
    if prefix.end_position() != tree.root_prefix_len {
        return Err(Error::Config(format!(
            "prefix ends at position {} but tree roots sit at {}",
            prefix.end_position(),
            tree.root_prefix_len
        )));
    }
    target.record_forward(tree.len() as u64 + 1);

    let mut ctx = prefix.tokens.clone();
    let mut accepted = Vec::new();
    // Chains of node ids ending at each live frontier node. Same-token
    // siblings can both match a position; all survivors advance so their
    // differing subtrees stay reachable.
    let mut frontier: Vec<Vec<usize>> = tree
        .roots()
        .into_iter()
        .map(|r| vec![r])
        .collect();
    let mut winner: Vec<usize> = Vec::new();
    loop {
        let g = target.raw_query(&ctx)?.argmax();
        if frontier.is_empty() {
            // Past a leaf: g is the bonus token.
            return Ok(finish(tree, accepted, g, winner));
        }
        let matched: Vec<Vec<usize>> = frontier
            .iter()
            .filter(|chain| tree.nodes[*chain.last().expect("non-empty chain")].token == g)
            .cloned()
            .collect();
        if matched.is_empty() {
            return Ok(finish(tree, accepted, g, winner));
        }
        winner = matched
            .iter()
            .min_by_key(|chain| preference_key(tree, *chain.last().expect("non-empty chain")))
            .expect("non-empty matched")
            .clone();
        accepted.push(g);
        ctx.push(g);
        frontier = matched
            .iter()
            .flat_map(|chain| {
                let last = *chain.last().expect("non-empty chain");
                tree.children(last).into_iter().map(move |c| {
                    let mut next = chain.clone();
                    next.push(c);
                    next
                })
            })
            .collect();
    }
}

fn finish(
    tree: &DraftTree,
    accepted: Vec<TokenId>,
    correction: TokenId,
    winner: Vec<usize>,
) -> VerificationOutcome {
    let below = match winner.last() {
        Some(&w) => tree.children(w),
        None => tree.roots(),
    };
    let fully_accepted = below.is_empty();
    let rejected_node_ids = if fully_accepted {
        Vec::new()
    } else {
        preferred_chain(tree, below)
    };
    VerificationOutcome {
        accepted,
        correction,
        accepted_node_ids: winner,
        rejected_node_ids,
        fully_accepted,
    }
}
