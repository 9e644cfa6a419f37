//! Draft trees: the shared structure speculative strategies build and verify.
//!
//! A tree is a forest of drafted tokens hanging off a committed prefix. Nodes
//! are append-only, so a parent always has a lower index than its children and
//! any node order is already topological. Grafting records an *alias edge*
//! instead of copying nodes: the continuation of one node is adopted as the
//! continuation of another, which is how previously drafted work gets reused
//! without re-running the draft model.

use crate::error::{Error, Result};
use crate::types::{Sequence, TokenId};

/// How a node entered the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    /// Main greedy path of the round.
    Trunk,
    /// Alternative candidate spawned at an uncertainty point.
    Branch,
    /// Regenerated after a failed verification.
    Regen,
}

/// One drafted token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DraftNode {
    pub token: TokenId,
    /// Index of the parent node; `None` for roots sitting directly on the prefix.
    pub parent: Option<usize>,
    /// Absolute position of the token in the transcript.
    pub position: usize,
    /// Probability the draft model assigned to this token when it was emitted.
    pub prob: f64,
    pub origin: Origin,
}

/// Alias edge added by [`DraftTree::graft`]: the logical children of `to`
/// also continue `from`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliasEdge {
    pub from: usize,
    pub to: usize,
}

/// Provenance entry produced by [`DraftTree::materialize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaterializedFrom {
    /// Index of the source node in the original tree.
    pub source: usize,
    /// True when the route to this node crossed at least one alias edge,
    /// i.e. the token was reused rather than freshly drafted on this route.
    pub via_alias: bool,
}

/// Forest of drafted tokens rooted at absolute position `root_prefix_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct DraftTree {
    pub nodes: Vec<DraftNode>,
    /// Length of the committed prefix; every root sits at this position.
    pub root_prefix_len: usize,
    pub aliases: Vec<AliasEdge>,
}

impl DraftTree {
    pub fn new(root_prefix_len: usize) -> Self {
        Self {
            nodes: Vec::new(),
            root_prefix_len,
            aliases: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends a root node at the prefix boundary.
    pub fn push_root(&mut self, token: TokenId, prob: f64, origin: Origin) -> usize {
        self.nodes.push(DraftNode {
            token,
            parent: None,
            position: self.root_prefix_len,
            prob,
            origin,
        });
        self.nodes.len() - 1
    }

    /// Appends a child of `parent`; its position is the parent's plus one.
    pub fn push_child(&mut self, parent: usize, token: TokenId, prob: f64, origin: Origin) -> usize {
        debug_assert!(parent < self.nodes.len());
        let position = self.nodes[parent].position + 1;
        self.nodes.push(DraftNode {
            token,
            parent: Some(parent),
            position,
            prob,
            origin,
        });
        self.nodes.len() - 1
    }

    /// Physical children of `idx`, ascending.
    pub fn children(&self, idx: usize) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].parent == Some(idx))
            .collect()
    }

    /// Parentless nodes, ascending.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].parent.is_none())
            .collect()
    }

    /// Children including alias-adopted continuations, in deterministic order:
    /// physical children first, then adopted ones alias by alias.
    pub fn logical_children(&self, idx: usize) -> Vec<usize> {
        let mut out = self.children(idx);
        for alias in &self.aliases {
            if alias.from == idx {
                out.extend(self.logical_children(alias.to));
            }
        }
        out
    }

    /// Physical root-to-node path, inclusive.
    pub fn path_to(&self, idx: usize) -> Vec<usize> {
        let mut path = vec![idx];
        let mut cur = idx;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Number of strict ancestors of `idx`.
    pub fn depth(&self, idx: usize) -> usize {
        self.path_to(idx).len() - 1
    }

    /// True if `target` is reachable from `start` by walking logical children.
    fn reaches(&self, start: usize, target: usize) -> bool {
        let mut stack = self.logical_children(start);
        let mut seen = vec![false; self.nodes.len()];
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if !seen[n] {
                seen[n] = true;
                stack.extend(self.logical_children(n));
            }
        }
        false
    }

    /// Checks structural invariants: topological parent links, consecutive
    /// positions, roots at the prefix boundary, a single trunk path, and
    /// acyclic alias adoption.
    pub fn validate(&self) -> Result<()> {
        let mut trunk_roots = 0usize;
        for (i, n) in self.nodes.iter().enumerate() {
            match n.parent {
                None => {
                    if n.position != self.root_prefix_len {
                        return Err(Error::MalformedTree(format!(
                            "root {i} at position {} instead of {}",
                            n.position, self.root_prefix_len
                        )));
                    }
                    if n.origin == Origin::Trunk {
                        trunk_roots += 1;
                    }
                }
                Some(p) => {
                    if p >= i {
                        return Err(Error::MalformedTree(format!(
                            "node {i} has parent {p}, breaking topological order"
                        )));
                    }
                    if n.position != self.nodes[p].position + 1 {
                        return Err(Error::MalformedTree(format!(
                            "node {i} at position {} but parent sits at {}",
                            n.position, self.nodes[p].position
                        )));
                    }
                }
            }
        }
        if trunk_roots > 1 {
            return Err(Error::MalformedTree("multiple trunk roots".into()));
        }
        for (i, _) in self.nodes.iter().enumerate() {
            let trunk_children = self
                .children(i)
                .into_iter()
                .filter(|&c| self.nodes[c].origin == Origin::Trunk)
                .count();
            if trunk_children > 1 {
                return Err(Error::MalformedTree(format!(
                    "node {i} has {trunk_children} trunk children; the trunk must stay a path"
                )));
            }
        }
        for alias in &self.aliases {
            if alias.from >= self.nodes.len() || alias.to >= self.nodes.len() {
                return Err(Error::MalformedTree("alias edge out of range".into()));
            }
            if self.reaches(alias.to, alias.from) {
                return Err(Error::MalformedTree(format!(
                    "alias {} -> {} closes a cycle",
                    alias.from, alias.to
                )));
            }
        }
        Ok(())
    }

    /// Adopts the continuation of `trunk_node` as the continuation of
    /// `branch_tip` by recording an alias edge. Both must carry the same token
    /// and sit within `window` positions of each other. No nodes are copied,
    /// so the node count never grows. Grafting a node onto itself is a no-op.
    pub fn graft(&mut self, branch_tip: usize, trunk_node: usize, window: usize) -> Result<()> {
        if branch_tip >= self.nodes.len() || trunk_node >= self.nodes.len() {
            return Err(Error::MalformedTree(format!(
                "graft indices {branch_tip}/{trunk_node} out of range"
            )));
        }
        if branch_tip == trunk_node {
            return Ok(());
        }
        let b = &self.nodes[branch_tip];
        let t = &self.nodes[trunk_node];
        if b.token != t.token {
            return Err(Error::MergeMismatch(format!(
                "tokens {} and {} differ at the merge point",
                b.token, t.token
            )));
        }
        if b.position.abs_diff(t.position) > window {
            return Err(Error::MergeMismatch(format!(
                "positions {} and {} are more than {window} apart",
                b.position, t.position
            )));
        }
        if self.reaches(branch_tip, trunk_node) {
            return Err(Error::MalformedTree(
                "trunk node is a descendant of the branch tip".into(),
            ));
        }
        if self.reaches(trunk_node, branch_tip) {
            return Err(Error::MalformedTree(
                "graft would close a cycle".into(),
            ));
        }
        self.aliases.push(AliasEdge {
            from: branch_tip,
            to: trunk_node,
        });
        Ok(())
    }

    /// Number of distinct nodes adopted by following logical children of
    /// `trunk_node`; this is the drafting work a graft onto it reuses.
    pub fn adopted_size(&self, trunk_node: usize) -> usize {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = self.logical_children(trunk_node);
        let mut count = 0;
        while let Some(n) = stack.pop() {
            if !seen[n] {
                seen[n] = true;
                count += 1;
                stack.extend(self.logical_children(n));
            }
        }
        count
    }

    /// Expands alias edges into a plain tree whose physical paths are the
    /// logical paths of `self`, with positions renumbered to stay consecutive
    /// along every path. Traversal is depth-first in deterministic child
    /// order; expansion stops once `cap` nodes have been emitted, dropping the
    /// deepest remaining continuations. Returns the expanded tree plus the
    /// provenance of every new node.
    pub fn materialize(&self, cap: usize) -> Result<(DraftTree, Vec<MaterializedFrom>)> {
        self.validate()?;
        let mut out = DraftTree::new(self.root_prefix_len);
        let mut prov: Vec<MaterializedFrom> = Vec::new();
        // Stack of (source node, new parent, route crossed an alias).
        let mut stack: Vec<(usize, Option<usize>, bool)> = Vec::new();
        let roots: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].parent.is_none())
            .collect();
        for &r in roots.iter().rev() {
            stack.push((r, None, false));
        }
        while let Some((src, new_parent, via_alias)) = stack.pop() {
            if out.nodes.len() >= cap {
                break;
            }
            let node = self.nodes[src];
            let idx = match new_parent {
                None => out.push_root(node.token, node.prob, node.origin),
                Some(p) => out.push_child(p, node.token, node.prob, node.origin),
            };
            prov.push(MaterializedFrom { source: src, via_alias });
            let phys = self.children(src);
            let mut edges: Vec<(usize, bool)> = phys.into_iter().map(|c| (c, false)).collect();
            for alias in &self.aliases {
                if alias.from == src {
                    edges.extend(
                        self.logical_children(alias.to)
                            .into_iter()
                            .map(|c| (c, true)),
                    );
                }
            }
            for &(child, aliased) in edges.iter().rev() {
                stack.push((child, Some(idx), via_alias || aliased));
            }
        }
        Ok((out, prov))
    }

    /// All root-to-leaf logical token paths with renumbered positions.
    /// Intended for tests and small trees; expansion is exponential in the
    /// number of shared suffixes.
    pub fn logical_paths(&self) -> Vec<Vec<(TokenId, usize)>> {
        let mut paths = Vec::new();
        let roots: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].parent.is_none())
            .collect();
        for r in roots {
            let mut current = Vec::new();
            self.walk_paths(r, self.root_prefix_len, &mut current, &mut paths);
        }
        paths
    }

    fn walk_paths(
        &self,
        node: usize,
        position: usize,
        current: &mut Vec<(TokenId, usize)>,
        paths: &mut Vec<Vec<(TokenId, usize)>>,
    ) {
        current.push((self.nodes[node].token, position));
        let next = self.logical_children(node);
        if next.is_empty() {
            paths.push(current.clone());
        } else {
            for c in next {
                self.walk_paths(c, position + 1, current, paths);
            }
        }
        current.pop();
    }
}

/// Builds the degenerate path tree for a linear draft.
pub fn tree_from_sequence(seq: &Sequence) -> Result<DraftTree> {
    if seq.is_empty() {
        return Err(Error::EmptyDraft);
    }
    let mut tree = DraftTree::new(seq.base_position);
    let mut parent = None;
    for &tok in &seq.tokens {
        let idx = match parent {
            None => tree.push_root(tok, 1.0, Origin::Trunk),
            Some(p) => tree.push_child(p, tok, 1.0, Origin::Trunk),
        };
        parent = Some(idx);
    }
    Ok(tree)
}
