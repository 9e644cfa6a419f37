//! Ancestor-visibility masks for batched tree decoding.
//!
//! Row `i` of the mask is the set of tree slots token `i` may attend to: the
//! node itself plus its strict ancestors. Processing a whole tree in one
//! masked forward pass is then equivalent to running each root-to-node path
//! sequentially, which is the property batched verification relies on.

use crate::error::{Error, Result};
use crate::tree::DraftTree;

/// Square boolean visibility matrix over tree nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n: usize,
    bits: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.n
    }

    /// True when node `i` may attend to node `j`.
    pub fn visible(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    /// Number of visible slots in row `i`; equals `depth(i) + 1`.
    pub fn row_count(&self, i: usize) -> usize {
        self.bits[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    pub fn row(&self, i: usize) -> Vec<bool> {
        self.bits[i * self.n..(i + 1) * self.n].to_vec()
    }
}

/// Builds the ancestor-visibility mask of `tree`.
///
/// Because nodes are stored in topological order the mask is lower-triangular:
/// a node can only see slots with smaller indices (and itself).
pub fn build_attention_mask(tree: &DraftTree) -> Result<AttentionMask> {
    tree.validate()?;
    let n = tree.len();
    let mut bits = vec![false; n * n];
    for i in 0..n {
        if let Some(p) = tree.nodes[i].parent {
            // parent row is already complete thanks to topological order
            let (head, tail) = bits.split_at_mut(i * n);
            tail[..n].copy_from_slice(&head[p * n..p * n + n]);
        }
        bits[i * n + i] = true;
    }
    Ok(AttentionMask { n, bits })
}

/// Checks that `mask` is exactly the ancestor mask of `tree`.
pub fn check_mask(tree: &DraftTree, mask: &AttentionMask) -> Result<()> {
    if mask.size() != tree.len() {
        return Err(Error::MaskMismatch(format!(
            "mask is {}x{} but the tree has {} nodes",
            mask.size(),
            mask.size(),
            tree.len()
        )));
    }
    let expected = build_attention_mask(tree)?;
    if expected != *mask {
        return Err(Error::MaskMismatch(
            "mask rows do not match the tree's ancestor structure".into(),
        ));
    }
    Ok(())
}
