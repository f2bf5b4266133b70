//! Bipartite graph with per-right-node color labels, plus the hidden ground
//! truth used by generators and the evaluator.
//!
//! Node ids are dense 0-based integers per side; colors are dense 0-based
//! integers in `[0, d)`. The wild color is represented out of band (see
//! [`TrueColor`] and [`Verdict`]), never as color index `d`, so it cannot leak
//! into probability-vector arithmetic.

use thiserror::Error;

/// Dense 0-based color index, valid for a graph with `num_colors > index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ColorId(pub u32);

impl ColorId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Per-right-node output of every repair algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// The proposed label is accepted.
    KeepPrior,
    /// The node should carry this color instead of its proposed label.
    /// Invariant: the color differs from the proposed label.
    Relabel(ColorId),
    /// The node's neighborhood is uninformative.
    Wild,
}

impl Verdict {
    /// Builds a verdict from a chosen color, normalizing `Relabel(proposed)`
    /// to `KeepPrior` so the `Relabel` invariant holds.
    #[inline]
    pub fn from_color(color: ColorId, proposed: ColorId) -> Verdict {
        if color == proposed {
            Verdict::KeepPrior
        } else {
            Verdict::Relabel(color)
        }
    }
}

/// Hidden true color of a right node: a real color or the wild symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrueColor {
    Color(ColorId),
    Wild,
}

impl TrueColor {
    #[inline]
    pub fn is_wild(self) -> bool {
        matches!(self, TrueColor::Wild)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("{side} node id {id} out of range (count {count})")]
    OutOfRangeId {
        side: &'static str,
        id: u32,
        count: usize,
    },
    #[error("expected {expected} right-node labels, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },
    #[error("color {color} out of range (num_colors {num_colors})")]
    ColorOutOfRange { color: u32, num_colors: usize },
}

/// Immutable bipartite adjacency with `d` colors and proposed right-node
/// labels. Safe to share across threads; all algorithms only read it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipartiteGraph {
    left_count: usize,
    right_count: usize,
    num_colors: usize,
    /// Sorted, deduplicated left-neighbor ids per right node.
    right_adj: Vec<Vec<u32>>,
    /// Exact transpose of `right_adj`, also sorted.
    left_adj: Vec<Vec<u32>>,
    proposed: Vec<ColorId>,
}

impl BipartiteGraph {
    /// Builds a graph from an edge list and one proposed label per right node.
    /// Duplicate edges are stored once; adjacency comes out sorted with a
    /// consistent transpose.
    pub fn build(
        left_count: usize,
        right_count: usize,
        num_colors: usize,
        edges: &[(u32, u32)],
        labels: Vec<ColorId>,
    ) -> Result<Self, GraphError> {
        if labels.len() != right_count {
            return Err(GraphError::LabelCountMismatch {
                expected: right_count,
                got: labels.len(),
            });
        }
        for &c in &labels {
            if c.index() >= num_colors {
                return Err(GraphError::ColorOutOfRange {
                    color: c.0,
                    num_colors,
                });
            }
        }
        let mut right_adj = vec![Vec::new(); right_count];
        for &(l, r) in edges {
            if l as usize >= left_count {
                return Err(GraphError::OutOfRangeId {
                    side: "left",
                    id: l,
                    count: left_count,
                });
            }
            if r as usize >= right_count {
                return Err(GraphError::OutOfRangeId {
                    side: "right",
                    id: r,
                    count: right_count,
                });
            }
            right_adj[r as usize].push(l);
        }
        for adj in &mut right_adj {
            adj.sort_unstable();
            adj.dedup();
        }
        let mut left_adj = vec![Vec::new(); left_count];
        for (r, adj) in right_adj.iter().enumerate() {
            for &l in adj {
                left_adj[l as usize].push(r as u32);
            }
        }
        // Right ids were visited in increasing order, so the transpose is
        // already sorted.
        Ok(BipartiteGraph {
            left_count,
            right_count,
            num_colors,
            right_adj,
            left_adj,
            proposed: labels,
        })
    }

    #[inline]
    pub fn left_count(&self) -> usize {
        self.left_count
    }

    #[inline]
    pub fn right_count(&self) -> usize {
        self.right_count
    }

    #[inline]
    pub fn num_colors(&self) -> usize {
        self.num_colors
    }

    pub fn edge_count(&self) -> usize {
        self.right_adj.iter().map(Vec::len).sum()
    }

    #[inline]
    pub fn left_neighbors(&self, l: u32) -> &[u32] {
        &self.left_adj[l as usize]
    }

    #[inline]
    pub fn right_neighbors(&self, r: u32) -> &[u32] {
        &self.right_adj[r as usize]
    }

    #[inline]
    pub fn left_degree(&self, l: u32) -> usize {
        self.left_adj[l as usize].len()
    }

    #[inline]
    pub fn right_degree(&self, r: u32) -> usize {
        self.right_adj[r as usize].len()
    }

    #[inline]
    pub fn proposed_label(&self, r: u32) -> ColorId {
        self.proposed[r as usize]
    }

    #[inline]
    pub fn proposed_labels(&self) -> &[ColorId] {
        &self.proposed
    }

    pub fn has_edge(&self, l: u32, r: u32) -> bool {
        self.right_adj
            .get(r as usize)
            .is_some_and(|adj| adj.binary_search(&l).is_ok())
    }

    /// All edges as `(left, right)` pairs in (right, left) sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.right_adj
            .iter()
            .enumerate()
            .flat_map(|(r, adj)| adj.iter().map(move |&l| (l, r as u32)))
    }

    /// Read-only auxiliary-graph overlay (one absorbing node per right node).
    pub fn auxiliary_view(&self) -> AuxiliaryView<'_> {
        AuxiliaryView { graph: self }
    }
}

/// Overlay adding one degree-1 absorbing node per right node, colored with
/// that node's proposed label. The underlying graph is not modified.
#[derive(Clone, Copy, Debug)]
pub struct AuxiliaryView<'a> {
    graph: &'a BipartiteGraph,
}

impl<'a> AuxiliaryView<'a> {
    pub fn graph(&self) -> &'a BipartiteGraph {
        self.graph
    }

    /// Number of auxiliary nodes, equal to the right count.
    pub fn aux_count(&self) -> usize {
        self.graph.right_count
    }

    /// Fixed color of auxiliary node `i`: the proposed label of right node `i`.
    pub fn aux_color(&self, i: u32) -> ColorId {
        self.graph.proposed_label(i)
    }

    /// The single neighbor of auxiliary node `i` is right node `i`.
    pub fn aux_neighbor(&self, i: u32) -> u32 {
        i
    }

    /// Each auxiliary node has degree 1 by construction.
    pub fn aux_degree(&self, _i: u32) -> usize {
        1
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TruthError {
    #[error("truth covers {got} right nodes, graph has {expected}")]
    RightCountMismatch { expected: usize, got: usize },
    #[error("truth covers {got} left nodes, graph has {expected}")]
    LeftCountMismatch { expected: usize, got: usize },
    #[error("misattributed edge ({l},{r}) is not a graph edge")]
    MisattributedNotEdge { l: u32, r: u32 },
    #[error("wild right node {r} has a misattributed-edge entry")]
    WildWithMisattribution { r: u32 },
}

/// Hidden truth for a generated instance: true right colors (possibly wild),
/// true left colors, and the misattributed-edge set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    pub true_right: Vec<TrueColor>,
    pub true_left: Vec<ColorId>,
    /// Sorted `(left, right)` pairs, a subset of the graph edges.
    misattributed: Vec<(u32, u32)>,
}

impl GroundTruth {
    pub fn new(
        true_right: Vec<TrueColor>,
        true_left: Vec<ColorId>,
        mut misattributed: Vec<(u32, u32)>,
    ) -> Self {
        misattributed.sort_unstable();
        misattributed.dedup();
        GroundTruth {
            true_right,
            true_left,
            misattributed,
        }
    }

    pub fn misattributed_edges(&self) -> &[(u32, u32)] {
        &self.misattributed
    }

    pub fn is_misattributed(&self, l: u32, r: u32) -> bool {
        self.misattributed.binary_search(&(l, r)).is_ok()
    }

    pub fn is_wild(&self, r: u32) -> bool {
        self.true_right[r as usize].is_wild()
    }

    /// Fraction of edges at non-wild right nodes that are misattributed.
    pub fn misattribution_fraction(&self, graph: &BipartiteGraph) -> f64 {
        let informative: usize = (0..graph.right_count() as u32)
            .filter(|&r| !self.is_wild(r))
            .map(|r| graph.right_degree(r))
            .sum();
        if informative == 0 {
            0.0
        } else {
            self.misattributed.len() as f64 / informative as f64
        }
    }

    /// Checks the structural invariants against the owning graph.
    pub fn validate(&self, graph: &BipartiteGraph) -> Result<(), TruthError> {
        if self.true_right.len() != graph.right_count() {
            return Err(TruthError::RightCountMismatch {
                expected: graph.right_count(),
                got: self.true_right.len(),
            });
        }
        if self.true_left.len() != graph.left_count() {
            return Err(TruthError::LeftCountMismatch {
                expected: graph.left_count(),
                got: self.true_left.len(),
            });
        }
        for &(l, r) in &self.misattributed {
            if !graph.has_edge(l, r) {
                return Err(TruthError::MisattributedNotEdge { l, r });
            }
            if self.is_wild(r) {
                return Err(TruthError::WildWithMisattribution { r });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn figure_fixture_builds_with_transpose() {
        let (g, truth) = fixtures::figure_graph();
        assert_eq!(g.left_count(), 11);
        assert_eq!(g.right_count(), 11);
        assert_eq!(g.num_colors(), 3);
        // Mislabeled first node and green-labeled wild last node.
        assert_eq!(g.proposed_label(0), ColorId(2));
        assert_eq!(g.proposed_label(10), ColorId(0));
        assert_eq!(truth.true_right[0], TrueColor::Color(ColorId(0)));
        assert_eq!(truth.true_right[10], TrueColor::Wild);
        truth.validate(&g).unwrap();
        // Transpose consistency both ways.
        for l in 0..g.left_count() as u32 {
            for &r in g.left_neighbors(l) {
                assert!(g.right_neighbors(r).contains(&l));
            }
        }
        for r in 0..g.right_count() as u32 {
            for &l in g.right_neighbors(r) {
                assert!(g.left_neighbors(l).contains(&r));
            }
        }
    }

    #[test]
    fn empty_edge_set_is_valid() {
        let g = BipartiteGraph::build(1, 1, 1, &[], vec![ColorId(0)]).unwrap();
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.left_degree(0), 0);
        assert_eq!(g.right_degree(0), 0);
    }

    #[test]
    fn duplicate_edges_stored_once() {
        let g =
            BipartiteGraph::build(1, 1, 1, &[(0, 0), (0, 0)], vec![ColorId(0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn out_of_range_ids_rejected() {
        let err = BipartiteGraph::build(2, 2, 1, &[(2, 0)], vec![ColorId(0); 2]).unwrap_err();
        assert_eq!(
            err,
            GraphError::OutOfRangeId {
                side: "left",
                id: 2,
                count: 2
            }
        );
        let err = BipartiteGraph::build(2, 2, 1, &[(0, 5)], vec![ColorId(0); 2]).unwrap_err();
        assert!(matches!(err, GraphError::OutOfRangeId { side: "right", .. }));
    }

    #[test]
    fn label_count_mismatch_rejected() {
        let err = BipartiteGraph::build(1, 2, 1, &[], vec![ColorId(0)]).unwrap_err();
        assert_eq!(
            err,
            GraphError::LabelCountMismatch {
                expected: 2,
                got: 1
            }
        );
    }

    #[test]
    fn auxiliary_view_matches_construction() {
        let (g, _) = fixtures::figure_graph();
        let aux = g.auxiliary_view();
        assert_eq!(aux.aux_count(), 11);
        for i in 0..11u32 {
            assert_eq!(aux.aux_degree(i), 1);
            assert_eq!(aux.aux_neighbor(i), i);
            assert_eq!(aux.aux_color(i), g.proposed_label(i));
        }
    }

    #[test]
    fn auxiliary_view_of_empty_graph() {
        let g = BipartiteGraph::build(3, 0, 2, &[], vec![]).unwrap();
        assert_eq!(g.auxiliary_view().aux_count(), 0);
    }

    #[test]
    fn verdict_normalizes_relabel_to_prior() {
        assert_eq!(
            Verdict::from_color(ColorId(1), ColorId(1)),
            Verdict::KeepPrior
        );
        assert_eq!(
            Verdict::from_color(ColorId(2), ColorId(1)),
            Verdict::Relabel(ColorId(2))
        );
    }

    #[test]
    fn truth_invariants_enforced() {
        let (g, _) = fixtures::figure_graph();
        // A misattribution entry on a wild node must be rejected.
        let bad = GroundTruth::new(
            (0..11)
                .map(|r| {
                    if r == 10 {
                        TrueColor::Wild
                    } else {
                        TrueColor::Color(ColorId(0))
                    }
                })
                .collect(),
            vec![ColorId(0); 11],
            vec![(2, 10)], // (l3, y11) is an edge but y11 is wild
        );
        assert_eq!(
            bad.validate(&g).unwrap_err(),
            TruthError::WildWithMisattribution { r: 10 }
        );
        // A non-edge must be rejected.
        let bad = GroundTruth::new(
            vec![TrueColor::Color(ColorId(0)); 11],
            vec![ColorId(0); 11],
            vec![(0, 5)],
        );
        assert!(matches!(
            bad.validate(&g).unwrap_err(),
            TruthError::MisattributedNotEdge { .. }
        ));
    }
}
