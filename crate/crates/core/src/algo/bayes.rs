//! Iterated Bayes updates over the two sides under a conditional
//! independence approximation. Beliefs are `(d+1)`-vectors with index 0
//! reserved for wildness. An edge from `v` to `w` supports color `i` at `v`
//! if `w` looks like color `i`, looks wild, or the edge is misattributed;
//! wildness at `v` is supported exactly when `w` looks like a random draw
//! from the color prior. All products run in log space with max-subtraction,
//! since degree-100 nodes underflow direct products.

use rayon::prelude::*;

use super::{bad_key, parse_value, AlgoError, Overrides};
use crate::graph::{BipartiteGraph, ColorId, Verdict};
use crate::metrics;

#[derive(Clone, Debug)]
pub struct BayesParams {
    /// Misattribution estimate; `None` derives it from the measured 2-path
    /// SNR (see [`default_alpha_hat`]).
    pub alpha_hat: Option<f64>,
    /// Prior probability that a node is wild (the `pi_0` entry of the color
    /// prior; the remaining mass is spread over the colors).
    pub wild_prior: f64,
    /// Weight colors by their label frequency instead of uniformly.
    pub frequency_weighted_prior: bool,
    /// Right-node initialization: (proposed label, wild, spread over the
    /// other colors).
    pub right_init: (f64, f64, f64),
    pub max_sweeps: usize,
    /// Stop when the largest per-entry belief change falls below this.
    pub tolerance: f64,
}

impl Default for BayesParams {
    fn default() -> Self {
        BayesParams {
            alpha_hat: None,
            wild_prior: 0.15,
            frequency_weighted_prior: false,
            right_init: (0.34, 0.30, 0.36),
            max_sweeps: 50,
            tolerance: 1e-6,
        }
    }
}

impl BayesParams {
    pub fn from_overrides(ov: &Overrides) -> Result<Self, AlgoError> {
        let mut p = BayesParams::default();
        for (key, value) in ov.scoped("nba") {
            match key {
                "alpha" | "alpha_hat" => p.alpha_hat = Some(parse_value(key, value)?),
                "wild_prior" | "pi0" => p.wild_prior = parse_value(key, value)?,
                "frequency_weighted_prior" => {
                    p.frequency_weighted_prior = parse_value(key, value)?
                }
                "p_match" => p.right_init.0 = parse_value(key, value)?,
                "p_wild" => p.right_init.1 = parse_value(key, value)?,
                "p_other" => p.right_init.2 = parse_value(key, value)?,
                "max_sweeps" => p.max_sweeps = parse_value(key, value)?,
                "tolerance" => p.tolerance = parse_value(key, value)?,
                _ => return Err(bad_key("nba", key)),
            }
        }
        Ok(p)
    }
}

/// Attributes all measured 2-path noise to misattribution:
/// `1 - sqrt(snr_2path)`, an intentional over-estimate of the raw edge
/// error rate.
pub fn noise_alpha_estimate(graph: &BipartiteGraph) -> f64 {
    (1.0 - metrics::difficulty(graph).snr_2path.sqrt()).clamp(0.0, 0.999)
}

/// Default per-edge misattribution factor. The raw noise estimate
/// `1 - sqrt(snr_2path)` prices an unexplained edge at the *total* error
/// rate, which at large `d` dwarfs the per-color prior `pi_c` a wild node
/// pays for the same edge and makes the wild posterior unreachable. Two
/// corrections keep the hypotheses on a common footing: the `(1-pi_0)/d`
/// factor converts total misattribution mass into the share of one specific
/// alternative color, and squaring the noise term damps the 2-path rate
/// toward a per-edge rate (on geometric graphs noisy paths are strongly
/// correlated, so the 2-path statistic over-counts single-edge noise).
pub fn default_alpha_hat(graph: &BipartiteGraph, wild_prior: f64) -> f64 {
    let d = graph.num_colors().max(1) as f64;
    let noise = noise_alpha_estimate(graph);
    (noise * noise * (1.0 - wild_prior) / d).clamp(0.0, 0.999)
}

/// The per-neighbor factor supporting color `i`: `q + (1-q) * alpha` with
/// `q = p_i + p_wild` taken from the neighbor's belief.
pub fn neighbor_factor(belief: &[f64], color: ColorId, alpha_hat: f64) -> f64 {
    let q = belief[color.index() + 1] + belief[0];
    q + (1.0 - q) * alpha_hat
}

/// The per-neighbor factor supporting wildness: the color prior dotted with
/// the neighbor's belief.
pub fn wild_factor(belief: &[f64], color_prior: &[f64]) -> f64 {
    debug_assert_eq!(belief.len(), color_prior.len());
    belief
        .iter()
        .zip(color_prior)
        .map(|(p, pi)| p * pi)
        .sum()
}

/// One Bayes update of a node from its neighbors' beliefs, in log space.
/// Returns the normalized posterior and whether the all-zero fallback to
/// the node's own prior fired.
pub fn update_node(
    prior: &[f64],
    neighbors: &[&[f64]],
    alpha_hat: f64,
    color_prior: &[f64],
) -> (Vec<f64>, bool) {
    let d1 = prior.len();
    if neighbors.is_empty() {
        return (prior.to_vec(), false);
    }
    let mut log_post = vec![0.0f64; d1];
    for (k, lp) in log_post.iter_mut().enumerate() {
        *lp = prior[k].ln();
    }
    for w in neighbors {
        log_post[0] += wild_factor(w, color_prior).ln();
        for i in 1..d1 {
            log_post[i] += neighbor_factor(w, ColorId((i - 1) as u32), alpha_hat).ln();
        }
    }
    normalize_log(&mut log_post, prior)
}

/// Exponentiates after max-subtraction and normalizes; falls back to the
/// prior when every entry underflowed to zero.
fn normalize_log(log_post: &mut [f64], prior: &[f64]) -> (Vec<f64>, bool) {
    let m = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return (prior.to_vec(), true);
    }
    let mut out: Vec<f64> = log_post.iter().map(|&lp| (lp - m).exp()).collect();
    let sum: f64 = out.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return (prior.to_vec(), true);
    }
    for v in &mut out {
        *v /= sum;
    }
    (out, false)
}

#[derive(Clone, Debug)]
pub struct BayesOutcome {
    pub verdicts: Vec<Verdict>,
    /// Final right-node beliefs, `(d+1)` entries per node, wild first.
    pub right_beliefs: Vec<f64>,
    pub sweeps: usize,
    pub alpha_used: f64,
    /// Nodes whose posterior underflowed and fell back to their prior.
    pub fallback_nodes: Vec<u32>,
}

#[derive(Clone, Copy)]
enum Side {
    Left,
    Right,
}

struct SweepCtx<'a> {
    graph: &'a BipartiteGraph,
    d1: usize,
    alpha: f64,
    color_prior: Vec<f64>,
}

impl SweepCtx<'_> {
    /// Per-source-node log factors: slot 0 the wild factor, slot `i` the
    /// color factor, so a target just sums its neighbors' rows.
    fn log_table(&self, beliefs: &[f64], count: usize) -> Vec<f64> {
        let d1 = self.d1;
        let mut table = vec![0.0f64; count * d1];
        table
            .par_chunks_mut(d1)
            .zip(beliefs.par_chunks(d1))
            .for_each(|(row, p)| {
                row[0] = wild_factor(p, &self.color_prior).ln();
                let q0 = p[0];
                for i in 1..d1 {
                    let q = p[i] + q0;
                    row[i] = (q + (1.0 - q) * self.alpha).ln();
                }
            });
        table
    }

    /// Updates one side from the other side's log-factor table. Returns the
    /// max per-entry change and the fallback nodes.
    fn update_side(
        &self,
        side: Side,
        beliefs: &mut Vec<f64>,
        priors: &[f64],
        table: &[f64],
        count: usize,
    ) -> (f64, Vec<u32>) {
        let d1 = self.d1;
        let old = std::mem::replace(beliefs, vec![0.0; count * d1]);
        let results: Vec<(f64, bool)> = beliefs
            .par_chunks_mut(d1)
            .enumerate()
            .map(|(v, out)| {
                let prior = &priors[v * d1..(v + 1) * d1];
                let ns = match side {
                    Side::Left => self.graph.left_neighbors(v as u32),
                    Side::Right => self.graph.right_neighbors(v as u32),
                };
                if ns.is_empty() {
                    out.copy_from_slice(&old[v * d1..(v + 1) * d1]);
                    return (0.0, false);
                }
                let mut log_post: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
                for &w in ns {
                    let row = &table[w as usize * d1..(w as usize + 1) * d1];
                    for (lp, f) in log_post.iter_mut().zip(row) {
                        *lp += f;
                    }
                }
                let (post, fell_back) = normalize_log(&mut log_post, prior);
                debug_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let mut delta = 0.0f64;
                for (k, &p) in post.iter().enumerate() {
                    delta = delta.max((p - old[v * d1 + k]).abs());
                    out[k] = p;
                }
                (delta, fell_back)
            })
            .collect();
        let mut max_delta = 0.0f64;
        let mut fallbacks = Vec::new();
        for (v, (delta, fb)) in results.into_iter().enumerate() {
            max_delta = max_delta.max(delta);
            if fb {
                fallbacks.push(v as u32);
            }
        }
        (max_delta, fallbacks)
    }
}

pub fn run_naive_bayes(graph: &BipartiteGraph, params: &BayesParams) -> BayesOutcome {
    let d = graph.num_colors();
    let d1 = d + 1;
    let left = graph.left_count();
    let right = graph.right_count();
    let alpha = params
        .alpha_hat
        .unwrap_or_else(|| default_alpha_hat(graph, params.wild_prior));

    let mut color_prior = vec![0.0f64; d1];
    color_prior[0] = params.wild_prior;
    if params.frequency_weighted_prior {
        // Laplace-smoothed label frequencies keep unused colors nonzero.
        let mut counts = vec![1.0f64; d];
        for r in 0..right as u32 {
            counts[graph.proposed_label(r).index()] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        for (i, c) in counts.iter().enumerate() {
            color_prior[i + 1] = (1.0 - params.wild_prior) * c / total;
        }
    } else {
        for v in color_prior.iter_mut().skip(1) {
            *v = (1.0 - params.wild_prior) / d as f64;
        }
    }

    // Frozen per-node priors: the proposed label enters only here, never as
    // a repeated per-sweep factor.
    let left_prior: Vec<f64> = vec![1.0 / d1 as f64; left * d1];
    let mut right_prior = vec![0.0f64; right * d1];
    let (p_match, p_wild, p_other) = params.right_init;
    for r in 0..right as u32 {
        let row = &mut right_prior[r as usize * d1..(r as usize + 1) * d1];
        row[0] = p_wild;
        row[graph.proposed_label(r).index() + 1] = p_match;
        if d > 1 {
            let spread = p_other / (d - 1) as f64;
            for (i, v) in row.iter_mut().enumerate().skip(1) {
                if i != graph.proposed_label(r).index() + 1 {
                    *v = spread;
                }
            }
        }
        let sum: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }

    let mut left_beliefs = left_prior.clone();
    let mut right_beliefs = right_prior.clone();

    let ctx = SweepCtx {
        graph,
        d1,
        alpha,
        color_prior,
    };

    let mut sweeps = 0;
    let mut fallback_nodes: Vec<u32> = Vec::new();
    while sweeps < params.max_sweeps {
        sweeps += 1;
        // Left side from the current right beliefs, then right side from the
        // fresh left beliefs.
        let right_table = ctx.log_table(&right_beliefs, right);
        let (dl, mut fl) =
            ctx.update_side(Side::Left, &mut left_beliefs, &left_prior, &right_table, left);
        let left_table = ctx.log_table(&left_beliefs, left);
        let (dr, fr) = ctx.update_side(
            Side::Right,
            &mut right_beliefs,
            &right_prior,
            &left_table,
            right,
        );
        fallback_nodes.append(&mut fl);
        fallback_nodes.extend(fr);
        if dl.max(dr) < params.tolerance {
            break;
        }
    }
    fallback_nodes.sort_unstable();
    fallback_nodes.dedup();

    let verdicts: Vec<Verdict> = (0..right as u32)
        .map(|r| {
            let row = &right_beliefs[r as usize * d1..(r as usize + 1) * d1];
            let mut best = 0usize;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            if best == 0 {
                Verdict::Wild
            } else {
                Verdict::from_color(ColorId((best - 1) as u32), graph.proposed_label(r))
            }
        })
        .collect();

    BayesOutcome {
        verdicts,
        right_beliefs,
        sweeps,
        alpha_used: alpha,
        fallback_nodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{self, GenParams, Model};
    use approx::assert_abs_diff_eq;

    #[test]
    fn neighbor_factor_certain_cases() {
        // Certain matching color or certain wildness both yield factor 1.
        let e1 = [0.0, 1.0, 0.0]; // d = 2, certain of color 0
        assert_abs_diff_eq!(neighbor_factor(&e1, ColorId(0), 0.7), 1.0);
        let wild = [1.0, 0.0, 0.0];
        assert_abs_diff_eq!(neighbor_factor(&wild, ColorId(1), 0.3), 1.0);
        // A certainly-mismatched neighbor is explained only by
        // misattribution.
        let e2 = [0.0, 0.0, 1.0];
        assert_abs_diff_eq!(neighbor_factor(&e2, ColorId(0), 0.2), 0.2);
    }

    #[test]
    fn wild_factor_cases() {
        let d = 3;
        let uniform = vec![1.0 / (d as f64 + 1.0); d + 1];
        let belief = [0.1, 0.2, 0.3, 0.4];
        assert_abs_diff_eq!(
            wild_factor(&belief, &uniform),
            1.0 / (d as f64 + 1.0),
            epsilon = 1e-12
        );
        // Point-mass belief selects one prior entry.
        let prior = [0.1, 0.2, 0.3, 0.4];
        let e2 = [0.0, 0.0, 1.0, 0.0];
        assert_abs_diff_eq!(wild_factor(&e2, &prior), 0.3, epsilon = 1e-12);
        // 0.45*0.5 + 0.45*0.5 = 0.45.
        let prior = [0.1, 0.45, 0.45];
        let belief = [0.0, 0.5, 0.5];
        assert_abs_diff_eq!(wild_factor(&belief, &prior), 0.45, epsilon = 1e-12);
    }

    #[test]
    fn update_node_hand_example() {
        // d = 2, neighbors e1 and e2, uniform node prior, alpha 0.2,
        // color prior (0.2, 0.4, 0.4): products are (0.16, 0.2, 0.2)
        // normalizing to (0.2857..., 0.3571..., 0.3571...).
        let prior = [1.0 / 3.0; 3];
        let e1 = [0.0, 1.0, 0.0];
        let e2 = [0.0, 0.0, 1.0];
        let pi = [0.2, 0.4, 0.4];
        let (post, fb) = update_node(&prior, &[&e1, &e2], 0.2, &pi);
        assert!(!fb);
        assert_abs_diff_eq!(post[0], 0.16 / 0.56, epsilon = 1e-9);
        assert_abs_diff_eq!(post[1], 0.2 / 0.56, epsilon = 1e-9);
        assert_abs_diff_eq!(post[2], 0.2 / 0.56, epsilon = 1e-9);
        assert_abs_diff_eq!(post[0], 0.2857, epsilon = 1e-4);
        assert_abs_diff_eq!(post[1], 0.3571, epsilon = 1e-4);
    }

    #[test]
    fn certain_neighbors_annihilate_other_colors() {
        // Uniform prior over the colors with no wild mass: unanimous
        // neighbors leave a point posterior.
        let prior = [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]; // d = 3
        let e2 = [0.0, 0.0, 1.0, 0.0];
        let pi = [0.25; 4];
        let (post, _) = update_node(&prior, &[&e2, &e2, &e2], 0.0, &pi);
        assert_abs_diff_eq!(post[2], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn degree_zero_node_keeps_belief() {
        let prior = [0.5, 0.3, 0.2];
        let (post, fb) = update_node(&prior, &[], 0.1, &[0.2, 0.4, 0.4]);
        assert_eq!(post, prior.to_vec());
        assert!(!fb);
    }

    #[test]
    fn log_space_matches_direct_products() {
        // Direct-product reference on a small case.
        let prior = [0.2, 0.5, 0.3];
        let n1 = [0.1, 0.6, 0.3];
        let n2 = [0.05, 0.2, 0.75];
        let pi = [0.15, 0.425, 0.425];
        let alpha = 0.23;
        let (post, _) = update_node(&prior, &[&n1, &n2], alpha, &pi);
        let mut direct = vec![
            prior[0] * wild_factor(&n1, &pi) * wild_factor(&n2, &pi),
            prior[1]
                * neighbor_factor(&n1, ColorId(0), alpha)
                * neighbor_factor(&n2, ColorId(0), alpha),
            prior[2]
                * neighbor_factor(&n1, ColorId(1), alpha)
                * neighbor_factor(&n2, ColorId(1), alpha),
        ];
        let sum: f64 = direct.iter().sum();
        for v in &mut direct {
            *v /= sum;
        }
        for (a, b) in post.iter().zip(&direct) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn color_permutation_equivariance() {
        let prior = [0.1, 0.2, 0.3, 0.4];
        let n1 = [0.1, 0.6, 0.1, 0.2];
        let pi = [0.15, 0.3, 0.25, 0.3];
        let alpha = 0.2;
        let (post, _) = update_node(&prior, &[&n1], alpha, &pi);
        // Swap colors 0 and 2 (slots 1 and 3) everywhere.
        let swap = |v: &[f64]| [v[0], v[3], v[2], v[1]];
        let (post_swapped, _) = update_node(&swap(&prior), &[&swap(&n1)], alpha, &swap(&pi));
        let expect = swap(&post);
        for (a, b) in post_swapped.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn monochromatic_neighborhood_concentrates_belief() {
        // With alpha 0 and no wild mass in the prior, agreeing neighbors
        // strictly sharpen the posterior toward their color.
        let prior = [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let n = [0.0, 0.8, 0.1, 0.1];
        let pi = [0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        let (post, _) = update_node(&prior, &[&n, &n, &n], 0.0, &pi);
        assert!(post[1] > prior[1]);
    }

    #[test]
    fn all_zero_posterior_falls_back_to_prior() {
        let prior = [0.0, 0.5, 0.5];
        let e1 = [0.0, 1.0, 0.0];
        let e2 = [0.0, 0.0, 1.0];
        // alpha 0 and disjoint certainties zero out every hypothesis; the
        // wild entry is also zero because the prior gives it no mass.
        let (post, fb) = update_node(&prior, &[&e1, &e2], 0.0, &[0.0, 0.5, 0.5]);
        assert!(fb);
        assert_eq!(post, prior.to_vec());
    }

    #[test]
    fn conflict_free_recovers_labels_quickly() {
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 4;
        params.left_count = 160;
        params.right_count = 60;
        params.seed = 8;
        let (g, _) = gen::gen_sequential(&params).unwrap();
        let bp = BayesParams {
            max_sweeps: 3,
            ..BayesParams::default()
        };
        let out = run_naive_bayes(&g, &bp);
        assert!(out.verdicts.iter().all(|v| *v == Verdict::KeepPrior));
    }
}
