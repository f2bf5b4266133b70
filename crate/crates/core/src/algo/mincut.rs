//! Per-color binary labeling by s-t minimum cut, consolidated across colors.
//!
//! For each color `c`, the graph is embedded in a flow network: the source
//! feeds every right node labeled `c` (capacity `pi0`), every other right
//! node drains to the sink (capacity `pi1`), and each bipartite edge becomes
//! a unit-capacity arc pair. The minimum cut then minimizes
//! `sum pi0*(1-x) + sum pi1*x + sum [x_i != x_j]` over binary assignments.
//!
//! Capacities are quarter-integral (`pi` defaults are 0.75 and 0.5 times the
//! degree), so everything is scaled by 4 into exact integers.

use rayon::prelude::*;

use super::{bad_key, parse_value, AlgoError, Overrides};
use crate::graph::{BipartiteGraph, ColorId, Verdict};

const SCALE: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct CutParams {
    /// Penalty for dropping the prior color, as a multiple of the degree.
    pub pi0_mult: f64,
    /// Penalty for adopting a new color, as a multiple of the degree.
    pub pi1_mult: f64,
}

impl Default for CutParams {
    fn default() -> Self {
        CutParams {
            pi0_mult: 0.75,
            pi1_mult: 0.5,
        }
    }
}

impl CutParams {
    pub fn from_overrides(ov: &Overrides) -> Result<Self, AlgoError> {
        let mut p = CutParams::default();
        for (key, value) in ov.scoped("cut") {
            match key {
                "pi0" | "pi0_mult" => p.pi0_mult = parse_value(key, value)?,
                "pi1" | "pi1_mult" => p.pi1_mult = parse_value(key, value)?,
                _ => return Err(bad_key("cut", key)),
            }
        }
        Ok(p)
    }
}

#[derive(Clone, Debug)]
struct Arc {
    to: u32,
    rev: u32,
    cap: i64,
    orig_cap: i64,
}

/// s-t flow network over `{s, t} + L + R` with integer (quarter-scaled)
/// capacities. Node ids: 0 = s, 1 = t, `2 + l` for left nodes,
/// `2 + left_count + r` for right nodes.
#[derive(Clone, Debug)]
pub struct FlowNetwork {
    adj: Vec<Vec<Arc>>,
    left_count: usize,
    /// Forward arcs only (reverse bookkeeping arcs excluded).
    pub arc_count: usize,
}

pub const SOURCE: u32 = 0;
pub const SINK: u32 = 1;

impl FlowNetwork {
    pub fn new(node_count: usize, left_count: usize) -> FlowNetwork {
        FlowNetwork {
            adj: vec![Vec::new(); node_count],
            left_count,
            arc_count: 0,
        }
    }

    #[inline]
    pub fn left_node(&self, l: u32) -> u32 {
        2 + l
    }

    #[inline]
    pub fn right_node(&self, r: u32) -> u32 {
        2 + self.left_count as u32 + r
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Directed arc `u -> v` with a zero-capacity residual partner.
    pub fn add_arc(&mut self, u: u32, v: u32, cap: i64) {
        let ru = self.adj[v as usize].len() as u32;
        let rv = self.adj[u as usize].len() as u32;
        self.adj[u as usize].push(Arc {
            to: v,
            rev: ru,
            cap,
            orig_cap: cap,
        });
        self.adj[v as usize].push(Arc {
            to: u,
            rev: rv,
            cap: 0,
            orig_cap: 0,
        });
        self.arc_count += 1;
    }

    /// Arc pair with capacity `cap` in each direction.
    pub fn add_arc_pair(&mut self, u: u32, v: u32, cap: i64) {
        let ru = self.adj[v as usize].len() as u32;
        let rv = self.adj[u as usize].len() as u32;
        self.adj[u as usize].push(Arc {
            to: v,
            rev: ru,
            cap,
            orig_cap: cap,
        });
        self.adj[v as usize].push(Arc {
            to: u,
            rev: rv,
            cap,
            orig_cap: cap,
        });
        self.arc_count += 2;
    }

    /// Dinic max flow (shortest augmenting paths in blocking-flow phases).
    fn max_flow(&mut self, s: u32, t: u32) -> i64 {
        let n = self.adj.len();
        let mut total = 0i64;
        let mut level = vec![-1i32; n];
        let mut queue = std::collections::VecDeque::new();
        loop {
            level.fill(-1);
            level[s as usize] = 0;
            queue.clear();
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for arc in &self.adj[u as usize] {
                    if arc.cap > 0 && level[arc.to as usize] < 0 {
                        level[arc.to as usize] = level[u as usize] + 1;
                        queue.push_back(arc.to);
                    }
                }
            }
            if level[t as usize] < 0 {
                return total;
            }
            let mut iter = vec![0usize; n];
            // Iterative DFS: `path` holds (node, arc index into adj[node]).
            let mut path: Vec<(u32, usize)> = Vec::new();
            let mut u = s;
            loop {
                if u == t {
                    let mut bottleneck = i64::MAX;
                    for &(node, ai) in &path {
                        bottleneck = bottleneck.min(self.adj[node as usize][ai].cap);
                    }
                    total += bottleneck;
                    let mut retreat_to = None;
                    for (depth, &(node, ai)) in path.iter().enumerate() {
                        let arc_to;
                        let arc_rev;
                        {
                            let arc = &mut self.adj[node as usize][ai];
                            arc.cap -= bottleneck;
                            arc_to = arc.to;
                            arc_rev = arc.rev;
                        }
                        self.adj[arc_to as usize][arc_rev as usize].cap += bottleneck;
                        if self.adj[node as usize][ai].cap == 0 && retreat_to.is_none() {
                            retreat_to = Some(depth);
                        }
                    }
                    let depth = retreat_to.unwrap();
                    path.truncate(depth);
                    u = path.last().map_or(s, |&(n, ai)| self.adj[n as usize][ai].to);
                    continue;
                }
                let ui = u as usize;
                let mut advanced = false;
                while iter[ui] < self.adj[ui].len() {
                    let ai = iter[ui];
                    let arc = &self.adj[ui][ai];
                    if arc.cap > 0 && level[arc.to as usize] == level[ui] + 1 {
                        path.push((u, ai));
                        u = arc.to;
                        advanced = true;
                        break;
                    }
                    iter[ui] += 1;
                }
                if !advanced {
                    level[ui] = -1;
                    match path.pop() {
                        Some((prev, _)) => u = prev,
                        None => break,
                    }
                }
            }
        }
    }

    /// Nodes reachable from `s` in the residual network (the minimal
    /// minimum-cut source side).
    fn residual_reachable(&self, s: u32) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        let mut stack = vec![s];
        seen[s as usize] = true;
        while let Some(u) = stack.pop() {
            for arc in &self.adj[u as usize] {
                if arc.cap > 0 && !seen[arc.to as usize] {
                    seen[arc.to as usize] = true;
                    stack.push(arc.to);
                }
            }
        }
        seen
    }
}

#[derive(Clone, Debug)]
pub struct CutResult {
    /// Max-flow value in quarter units.
    pub value_quarters: i64,
    /// Source-side membership per network node id.
    pub source_side: Vec<bool>,
}

impl CutResult {
    pub fn value(&self) -> f64 {
        self.value_quarters as f64 / SCALE
    }
}

/// Builds the per-color s-t network: `s -> r` (capacity `pi0`) for right
/// nodes labeled `color`, `r -> t` (capacity `pi1`) otherwise, and a
/// unit-capacity arc pair per bipartite edge.
pub fn build_network(graph: &BipartiteGraph, color: ColorId, params: &CutParams) -> FlowNetwork {
    let mut net = FlowNetwork::new(2 + graph.left_count() + graph.right_count(), graph.left_count());
    for r in 0..graph.right_count() as u32 {
        let deg = graph.right_degree(r) as f64;
        if graph.proposed_label(r) == color {
            let cap = (params.pi0_mult * deg * SCALE).round() as i64;
            net.add_arc(SOURCE, net.right_node(r), cap);
        } else {
            let cap = (params.pi1_mult * deg * SCALE).round() as i64;
            net.add_arc(net.right_node(r), SINK, cap);
        }
    }
    for (l, r) in graph.edges() {
        net.add_arc_pair(net.left_node(l), net.right_node(r), SCALE as i64);
    }
    net
}

/// Solves the minimum s-t cut. The returned cut value equals the sum of
/// original capacities crossing the (source side, rest) partition exactly.
pub fn min_cut(network: &FlowNetwork) -> CutResult {
    let mut net = network.clone();
    let value_quarters = net.max_flow(SOURCE, SINK);
    let source_side = net.residual_reachable(SOURCE);
    // Max-flow/min-cut duality, checked exactly.
    let mut crossing = 0i64;
    for (u, arcs) in net.adj.iter().enumerate() {
        if !source_side[u] {
            continue;
        }
        for arc in arcs {
            if !source_side[arc.to as usize] {
                crossing += arc.orig_cap;
            }
        }
    }
    assert_eq!(
        crossing, value_quarters,
        "cut capacity must equal the max-flow value"
    );
    CutResult {
        value_quarters,
        source_side,
    }
}

/// Merges the d per-color source memberships into verdicts: membership in
/// exactly one source set assigns that color, zero or several mark the node
/// wild.
pub fn consolidate(memberships: &[Vec<bool>], graph: &BipartiteGraph) -> Vec<Verdict> {
    (0..graph.right_count() as u32)
        .map(|r| {
            let mut found: Option<usize> = None;
            let mut count = 0;
            for (c, m) in memberships.iter().enumerate() {
                if m[r as usize] {
                    count += 1;
                    found = Some(c);
                }
            }
            match (count, found) {
                (1, Some(c)) => Verdict::from_color(ColorId(c as u32), graph.proposed_label(r)),
                _ => Verdict::Wild,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct MincutOutcome {
    pub verdicts: Vec<Verdict>,
    /// Per-color minimum cut values (unscaled).
    pub cut_values: Vec<f64>,
}

pub fn run_mincut(graph: &BipartiteGraph, params: &CutParams) -> MincutOutcome {
    let d = graph.num_colors();
    let mut labeled = vec![false; d];
    for r in 0..graph.right_count() as u32 {
        labeled[graph.proposed_label(r).index()] = true;
    }
    let results: Vec<(f64, Vec<bool>)> = (0..d)
        .into_par_iter()
        .map(|c| {
            if !labeled[c] {
                // No node carries this label; the cut is trivially empty and
                // the source side is just {s}.
                return (0.0, vec![false; graph.right_count()]);
            }
            let net = build_network(graph, ColorId(c as u32), params);
            let cut = min_cut(&net);
            let rights: Vec<bool> = (0..graph.right_count() as u32)
                .map(|r| cut.source_side[net.right_node(r) as usize])
                .collect();
            (cut.value(), rights)
        })
        .collect();
    let cut_values: Vec<f64> = results.iter().map(|(v, _)| *v).collect();
    let memberships: Vec<Vec<bool>> = results.into_iter().map(|(_, m)| m).collect();
    MincutOutcome {
        verdicts: consolidate(&memberships, graph),
        cut_values,
    }
}

/// Brute-force oracle: the cut objective minimized over all binary
/// assignments, in quarter units. Only feasible for tiny graphs.
pub fn brute_force_objective(graph: &BipartiteGraph, color: ColorId, params: &CutParams) -> i64 {
    let left = graph.left_count();
    let right = graph.right_count();
    let n = left + right;
    assert!(n <= 20, "brute force is exponential in node count");
    let pi: Vec<(i64, bool)> = (0..right as u32)
        .map(|r| {
            let deg = graph.right_degree(r) as f64;
            if graph.proposed_label(r) == color {
                ((params.pi0_mult * deg * SCALE).round() as i64, true)
            } else {
                ((params.pi1_mult * deg * SCALE).round() as i64, false)
            }
        })
        .collect();
    let mut best = i64::MAX;
    for mask in 0u64..(1 << n) {
        let x = |node: usize| (mask >> node) & 1 == 1;
        let mut cost = 0i64;
        for r in 0..right {
            let (p, in_color) = pi[r];
            let xr = x(left + r);
            if in_color && !xr {
                cost += p;
            }
            if !in_color && xr {
                cost += p;
            }
        }
        for (l, r) in graph.edges() {
            if x(l as usize) != x(left + r as usize) {
                cost += SCALE as i64;
            }
        }
        best = best.min(cost);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gen::{self, GenParams, Model};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn figure_network_source_arcs() {
        let (g, _) = fixtures::figure_graph();
        let net = build_network(&g, ColorId(0), &CutParams::default());
        // Exactly the four green-labeled right nodes hang off the source.
        assert_eq!(net.adj[SOURCE as usize].len(), 4);
        assert_eq!(net.arc_count, 2 * g.edge_count() + g.right_count());
    }

    #[test]
    fn zero_edge_graph_has_only_terminal_arcs() {
        let g = crate::graph::BipartiteGraph::build(2, 3, 2, &[], vec![ColorId(0); 3]).unwrap();
        let net = build_network(&g, ColorId(0), &CutParams::default());
        assert_eq!(net.arc_count, 3);
    }

    #[test]
    fn single_arc_network() {
        let mut net = FlowNetwork::new(2, 0);
        net.add_arc(SOURCE, SINK, 3);
        let cut = min_cut(&net);
        assert_eq!(cut.value_quarters, 3);
        assert!(cut.source_side[SOURCE as usize]);
        assert!(!cut.source_side[SINK as usize]);
    }

    /// Unit example: one right node labeled c with a single otherwise
    /// unconstrained left neighbor. Enumerating the four assignments of
    /// {l, r}: (1,1) costs 0, (0,1) costs 1, (1,0) costs 1.75, (0,0) costs
    /// 0.75 — so the minimum is 0 and both nodes sit on the source side.
    #[test]
    fn unit_example_prefers_keeping_the_prior() {
        let g = crate::graph::BipartiteGraph::build(1, 1, 1, &[(0, 0)], vec![ColorId(0)]).unwrap();
        let params = CutParams::default();
        let net = build_network(&g, ColorId(0), &params);
        let cut = min_cut(&net);
        assert_eq!(
            cut.value_quarters,
            brute_force_objective(&g, ColorId(0), &params)
        );
        assert_eq!(cut.value_quarters, 0);
        assert!(cut.source_side[net.right_node(0) as usize]);
        assert!(cut.source_side[net.left_node(0) as usize]);
    }

    #[test]
    fn random_networks_match_partition_enumeration() {
        // 8-node networks: s, t, and six middle nodes; compare against the
        // minimum over all 2^6 partitions.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..40 {
            let mut net = FlowNetwork::new(8, 0);
            let mut arcs: Vec<(u32, u32, i64)> = Vec::new();
            for u in 0..8u32 {
                for v in 0..8u32 {
                    if u == v || v == SOURCE || u == SINK {
                        continue;
                    }
                    if rng.random_bool(0.4) {
                        let cap = rng.random_range(1..6);
                        net.add_arc(u, v, cap);
                        arcs.push((u, v, cap));
                    }
                }
            }
            let cut = min_cut(&net);
            let mut best = i64::MAX;
            for mask in 0u32..(1 << 6) {
                let side = |n: u32| -> bool {
                    match n {
                        SOURCE => true,
                        SINK => false,
                        m => (mask >> (m - 2)) & 1 == 1,
                    }
                };
                let cost: i64 = arcs
                    .iter()
                    .filter(|&&(u, v, _)| side(u) && !side(v))
                    .map(|&(_, _, c)| c)
                    .sum();
                best = best.min(cost);
            }
            assert_eq!(cut.value_quarters, best);
        }
    }

    #[test]
    fn huge_prior_penalty_forces_priors() {
        let (g, _) = fixtures::figure_graph();
        let params = CutParams {
            pi0_mult: 1000.0,
            pi1_mult: 0.5,
        };
        for c in 0..3u32 {
            let net = build_network(&g, ColorId(c), &params);
            let cut = min_cut(&net);
            for r in 0..g.right_count() as u32 {
                if g.proposed_label(r) == ColorId(c) {
                    assert!(
                        cut.source_side[net.right_node(r) as usize],
                        "color {c} node {r} must stay on the source side"
                    );
                }
            }
        }
    }

    #[test]
    fn conflict_free_consolidation_is_clean() {
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 3;
        params.left_count = 120;
        params.right_count = 45;
        params.seed = 5;
        let (g, _) = gen::gen_sequential(&params).unwrap();
        let out = run_mincut(&g, &CutParams::default());
        assert!(out.verdicts.iter().all(|v| *v == Verdict::KeepPrior));
    }

    #[test]
    fn membership_in_no_source_set_is_wild() {
        // Node 0 lands in zero source sets, node 1 only in its own color's.
        let memberships = vec![vec![false, false], vec![false, true]];
        let g = fixtures::shared_left_pair();
        let verdicts = consolidate(&memberships, &g);
        assert_eq!(verdicts[0], Verdict::Wild);
        assert_eq!(verdicts[1], Verdict::KeepPrior);
        // Membership in two sets is wild as well.
        let both = vec![vec![true, false], vec![true, false]];
        let verdicts = consolidate(&both, &g);
        assert_eq!(verdicts[0], Verdict::Wild);
    }
}
