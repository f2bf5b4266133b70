//! Difficulty metrics: color and degree distributions, component count,
//! average color degree, and the monochromatic 2-path signal-to-noise ratio.

use crate::graph::BipartiteGraph;

/// One row of difficulty metrics for a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyReport {
    pub edge_count: usize,
    /// Proposed-label counts per color.
    pub color_histogram: Vec<usize>,
    pub left_avg_degree: f64,
    pub left_max_degree: usize,
    pub right_avg_degree: f64,
    pub right_max_degree: usize,
    pub component_count: usize,
    /// Mean number of distinct proposed labels seen by a left node
    /// (degree-0 left nodes excluded).
    pub avg_color_degree: f64,
    /// Fraction of ordered right-left-right paths between distinct right
    /// nodes whose proposed labels agree. 1.0 when no such path exists.
    pub snr_2path: f64,
}

impl DifficultyReport {
    pub fn header() -> &'static str {
        "Edges\tLAvg\tLMax\tRAvg\tRMax\tColorDeg\tComps\tSNR"
    }

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.2}\t{}\t{:.2}\t{}\t{:.2}\t{}\t{:.2}",
            self.edge_count,
            self.left_avg_degree,
            self.left_max_degree,
            self.right_avg_degree,
            self.right_max_degree,
            self.avg_color_degree,
            self.component_count,
            self.snr_2path
        )
    }
}

/// Closed-form lower-bound estimate of the 2-path SNR from known error
/// rates: `((1-lambda)(1-alpha)(1-omega))^2`.
pub fn snr_estimate(omega: f64, lambda: f64, alpha: f64) -> f64 {
    let x = (1.0 - lambda) * (1.0 - alpha) * (1.0 - omega);
    x * x
}

/// Computes all difficulty metrics in one pass over the graph.
pub fn difficulty(graph: &BipartiteGraph) -> DifficultyReport {
    let left = graph.left_count();
    let right = graph.right_count();
    let d = graph.num_colors();

    let mut color_histogram = vec![0usize; d];
    for r in 0..right as u32 {
        color_histogram[graph.proposed_label(r).index()] += 1;
    }

    let edge_count = graph.edge_count();
    let left_max_degree = (0..left as u32)
        .map(|l| graph.left_degree(l))
        .max()
        .unwrap_or(0);
    let right_max_degree = (0..right as u32)
        .map(|r| graph.right_degree(r))
        .max()
        .unwrap_or(0);
    let left_avg_degree = if left == 0 {
        0.0
    } else {
        edge_count as f64 / left as f64
    };
    let right_avg_degree = if right == 0 {
        0.0
    } else {
        edge_count as f64 / right as f64
    };

    // Ordered 2-paths r -> l -> r' with r' != r, counted per left node from
    // its neighbor-label tallies.
    let mut mono: u64 = 0;
    let mut total: u64 = 0;
    let mut color_deg_sum: u64 = 0;
    let mut left_nonzero: u64 = 0;
    let mut tally = vec![0u64; d];
    for l in 0..left as u32 {
        let neighbors = graph.left_neighbors(l);
        if neighbors.is_empty() {
            continue;
        }
        left_nonzero += 1;
        let n = neighbors.len() as u64;
        total += n * (n - 1);
        let mut distinct = 0u64;
        for &r in neighbors {
            let c = graph.proposed_label(r).index();
            if tally[c] == 0 {
                distinct += 1;
            }
            tally[c] += 1;
        }
        color_deg_sum += distinct;
        for &r in neighbors {
            let c = graph.proposed_label(r).index();
            if tally[c] > 0 {
                mono += tally[c] * (tally[c] - 1);
                tally[c] = 0;
            }
        }
    }
    let snr_2path = if total == 0 {
        1.0
    } else {
        mono as f64 / total as f64
    };
    let avg_color_degree = if left_nonzero == 0 {
        0.0
    } else {
        color_deg_sum as f64 / left_nonzero as f64
    };

    DifficultyReport {
        edge_count,
        color_histogram,
        left_avg_degree,
        left_max_degree,
        right_avg_degree,
        right_max_degree,
        component_count: component_count(graph),
        avg_color_degree,
        snr_2path,
    }
}

/// Connected components of the bipartite graph, counting isolated nodes.
pub fn component_count(graph: &BipartiteGraph) -> usize {
    let left = graph.left_count();
    let right = graph.right_count();
    let n = left + right;
    if n == 0 {
        return 0;
    }
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut count = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(v) = stack.pop() {
            if v < left {
                for &r in graph.left_neighbors(v as u32) {
                    let u = left + r as usize;
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            } else {
                for &l in graph.right_neighbors((v - left) as u32) {
                    let u = l as usize;
                    if !seen[u] {
                        seen[u] = true;
                        stack.push(u);
                    }
                }
            }
        }
    }
    count
}
