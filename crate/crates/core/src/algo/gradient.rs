//! Constrained quadratic best fit by projected gradient descent, one problem
//! per color, via two-phase message passing: right nodes compute residuals
//! `(mean of neighbor values) - prior`, left nodes accumulate the weighted
//! residuals of their right neighbors and step against them, clamped to
//! `[0, 1]`. The renormalized variant projects each left node's color vector
//! back to the probability simplex after every sweep.

use rayon::prelude::*;

use super::{bad_key, parse_value, AlgoError, Overrides};
use crate::graph::{BipartiteGraph, ColorId, Verdict};

#[derive(Clone, Debug)]
pub struct GradientParams {
    /// Step size; `None` picks `0.5 / B` where `B` is the largest row sum of
    /// the rescaled Gram matrix, which guarantees monotone descent.
    pub step_size: Option<f64>,
    /// Prior strength: right-node targets are `rho` on the labeled color.
    pub rho: f64,
    /// Stop when the per-sweep objective decrease falls below this.
    pub tolerance: f64,
    pub max_sweeps: usize,
    /// Project per-left-node color vectors to the simplex after each sweep.
    pub renormalize: bool,
    /// A right node whose best per-color score stays below this is wild.
    pub wild_threshold: f64,
}

impl Default for GradientParams {
    fn default() -> Self {
        GradientParams {
            step_size: None,
            rho: 1.0,
            tolerance: 1e-7,
            max_sweeps: 300,
            renormalize: true,
            wild_threshold: 0.4,
        }
    }
}

impl GradientParams {
    pub fn from_overrides(ov: &Overrides) -> Result<Self, AlgoError> {
        let mut p = GradientParams::default();
        for (key, value) in ov.scoped("grd") {
            match key {
                "eta" | "step_size" => p.step_size = Some(parse_value(key, value)?),
                "rho" => p.rho = parse_value(key, value)?,
                "tolerance" => p.tolerance = parse_value(key, value)?,
                "max_sweeps" => p.max_sweeps = parse_value(key, value)?,
                "renormalize" => p.renormalize = parse_value(key, value)?,
                "wild_threshold" | "tau_g" => p.wild_threshold = parse_value(key, value)?,
                _ => return Err(bad_key("grd", key)),
            }
        }
        Ok(p)
    }
}

/// Quadratic loss for one color: `sum over right nodes of
/// ((sum of neighbor values)/deg - y)^2` with `y = rho` on nodes labeled
/// `color` and 0 elsewhere. Degree-0 right nodes contribute nothing.
pub fn loss(graph: &BipartiteGraph, x: &[f64], color: ColorId, rho: f64) -> f64 {
    debug_assert_eq!(x.len(), graph.left_count());
    let mut total = 0.0;
    for r in 0..graph.right_count() as u32 {
        let neighbors = graph.right_neighbors(r);
        if neighbors.is_empty() {
            continue;
        }
        let mean = neighbors.iter().map(|&l| x[l as usize]).sum::<f64>() / neighbors.len() as f64;
        let y = if graph.proposed_label(r) == color { rho } else { 0.0 };
        let diff = mean - y;
        total += diff * diff;
    }
    total
}

/// Analytic gradient of [`loss`] with respect to the left values, computed
/// by the two-phase message pass: each right node emits
/// `(2/deg)((sum x)/deg - y)` and each left node sums its neighbors'
/// messages.
pub fn gradient_at(graph: &BipartiteGraph, x: &[f64], color: ColorId, rho: f64) -> Vec<f64> {
    let mut message = vec![0.0f64; graph.right_count()];
    for r in 0..graph.right_count() as u32 {
        let neighbors = graph.right_neighbors(r);
        if neighbors.is_empty() {
            continue;
        }
        let deg = neighbors.len() as f64;
        let mean = neighbors.iter().map(|&l| x[l as usize]).sum::<f64>() / deg;
        let y = if graph.proposed_label(r) == color { rho } else { 0.0 };
        message[r as usize] = 2.0 / deg * (mean - y);
    }
    (0..graph.left_count() as u32)
        .map(|l| {
            graph
                .left_neighbors(l)
                .iter()
                .map(|&r| message[r as usize])
                .sum()
        })
        .collect()
}

/// Largest row sum of the rescaled Gram matrix `U^T U`, i.e.
/// `max over left nodes of sum over right neighbors of 1/deg`. The default
/// step size `0.5 / B` keeps projected descent monotone.
fn gram_row_bound(graph: &BipartiteGraph) -> f64 {
    (0..graph.left_count() as u32)
        .map(|l| {
            graph
                .left_neighbors(l)
                .iter()
                .map(|&r| 1.0 / graph.right_degree(r) as f64)
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct GradientOutcome {
    pub verdicts: Vec<Verdict>,
    /// Final left values per color (`num_colors` vectors of `left_count`).
    pub x: Vec<Vec<f64>>,
    /// Total objective (summed over colors) after each sweep.
    pub objective_trace: Vec<f64>,
    /// Fitted per-color score at each right node.
    pub right_scores: Vec<Vec<f64>>,
    /// Total quadratic loss at each right node (diagnostic ranking).
    pub node_loss: Vec<f64>,
    pub mean_node_loss: f64,
    pub step_size: f64,
    pub sweeps: usize,
}

pub fn run_gradient(
    graph: &BipartiteGraph,
    params: &GradientParams,
) -> Result<GradientOutcome, AlgoError> {
    let d = graph.num_colors();
    let left = graph.left_count();
    let auto_step = params.step_size.is_none();
    let bound = gram_row_bound(graph);
    let mut eta = params
        .step_size
        .unwrap_or(if bound > 0.0 { 0.5 / bound } else { 0.5 });

    let mut restarts = 0;
    'restart: loop {
        let mut x: Vec<Vec<f64>> = vec![vec![0.5; left]; d];
        let mut trace: Vec<f64> = Vec::new();
        let mut rises = 0usize;
        let mut sweeps = 0usize;
        while sweeps < params.max_sweeps {
            sweeps += 1;
            x.par_iter_mut().enumerate().for_each(|(c, xc)| {
                let grad = gradient_at(graph, xc, ColorId(c as u32), params.rho);
                for (xi, gi) in xc.iter_mut().zip(grad) {
                    *xi = (*xi - eta * gi).clamp(0.0, 1.0);
                }
            });
            if params.renormalize {
                for l in 0..left {
                    let sum: f64 = (0..d).map(|c| x[c][l]).sum();
                    if sum > 0.0 {
                        for xc in x.iter_mut() {
                            xc[l] /= sum;
                        }
                    }
                }
            }
            let per_color: Vec<f64> = x
                .par_iter()
                .enumerate()
                .map(|(c, xc)| loss(graph, xc, ColorId(c as u32), params.rho))
                .collect();
            let obj: f64 = per_color.iter().sum();
            if let Some(&prev) = trace.last() {
                if obj > prev {
                    rises += 1;
                    if rises >= 5 {
                        if auto_step && restarts < 3 {
                            restarts += 1;
                            eta *= 0.5;
                            continue 'restart;
                        }
                        return Err(AlgoError::DivergenceDetected(rises));
                    }
                } else {
                    rises = 0;
                    if prev - obj < params.tolerance {
                        trace.push(obj);
                        break;
                    }
                }
            }
            trace.push(obj);
        }

        // Verdicts from the fitted right-node scores.
        let right = graph.right_count();
        let mut right_scores: Vec<Vec<f64>> = vec![vec![0.0; right]; d];
        for (c, scores) in right_scores.iter_mut().enumerate() {
            for r in 0..right as u32 {
                let neighbors = graph.right_neighbors(r);
                if neighbors.is_empty() {
                    continue;
                }
                scores[r as usize] = neighbors.iter().map(|&l| x[c][l as usize]).sum::<f64>()
                    / neighbors.len() as f64;
            }
        }
        let mut node_loss = vec![0.0f64; right];
        for r in 0..right {
            for (c, scores) in right_scores.iter().enumerate() {
                let y = if graph.proposed_label(r as u32).index() == c {
                    params.rho
                } else {
                    0.0
                };
                let diff = scores[r] - y;
                node_loss[r] += diff * diff;
            }
        }
        let verdicts: Vec<Verdict> = (0..right as u32)
            .map(|r| {
                if graph.right_degree(r) == 0 {
                    return Verdict::KeepPrior;
                }
                let mut best_c = 0usize;
                let mut best = f64::NEG_INFINITY;
                for (c, scores) in right_scores.iter().enumerate() {
                    if scores[r as usize] > best {
                        best = scores[r as usize];
                        best_c = c;
                    }
                }
                if best < params.wild_threshold {
                    Verdict::Wild
                } else {
                    Verdict::from_color(ColorId(best_c as u32), graph.proposed_label(r))
                }
            })
            .collect();
        let mean_node_loss = if right == 0 {
            0.0
        } else {
            node_loss.iter().sum::<f64>() / right as f64
        };
        return Ok(GradientOutcome {
            verdicts,
            x,
            objective_trace: trace,
            right_scores,
            node_loss,
            mean_node_loss,
            step_size: eta,
            sweeps,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::gen::{self, GenParams, Model};
    use crate::graph::BipartiteGraph;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loss_is_zero_on_exact_fit() {
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 3;
        params.left_count = 90;
        params.right_count = 30;
        params.seed = 2;
        let (g, truth) = gen::gen_sequential(&params).unwrap();
        for c in 0..3u32 {
            let x: Vec<f64> = truth
                .true_left
                .iter()
                .map(|&tc| if tc == ColorId(c) { 1.0 } else { 0.0 })
                .collect();
            assert_abs_diff_eq!(loss(&g, &x, ColorId(c), 1.0), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_single_right_node() {
        let g = BipartiteGraph::build(2, 1, 1, &[(0, 0), (1, 0)], vec![ColorId(0)]).unwrap();
        assert_abs_diff_eq!(
            loss(&g, &[0.5, 0.5], ColorId(0), 1.0),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn loss_matches_dense_algebra() {
        // 3 left, 2 right hand graph checked against an explicit
        // (UX - Y)^T (UX - Y) evaluation.
        let g = BipartiteGraph::build(
            3,
            2,
            2,
            &[(0, 0), (1, 0), (1, 1), (2, 1)],
            vec![ColorId(0), ColorId(1)],
        )
        .unwrap();
        let x = [0.9, 0.3, 0.1];
        let u = nalgebra::DMatrix::from_row_slice(2, 3, &[0.5, 0.5, 0.0, 0.0, 0.5, 0.5]);
        let xv = nalgebra::DVector::from_row_slice(&x);
        for (c, y) in [(0u32, [1.0, 0.0]), (1u32, [0.0, 1.0])] {
            let yv = nalgebra::DVector::from_row_slice(&y);
            let resid = &u * &xv - yv;
            let expected = (resid.transpose() * resid)[(0, 0)];
            assert_abs_diff_eq!(loss(&g, &x, ColorId(c), 1.0), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 2;
        params.left_count = 12;
        params.right_count = 8;
        params.lambda = 0.3;
        params.alpha = 0.2;
        params.seed = 21;
        let (g, _) = gen::gen_sequential(&params).unwrap();
        let x: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let grad = gradient_at(&g, &x, ColorId(0), 1.0);
        let h = 1e-5;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&g, &xp, ColorId(0), 1.0) - loss(&g, &xm, ColorId(0), 1.0)) / (2.0 * h);
            let denom = grad[i].abs().max(1e-8);
            assert!(
                (grad[i] - fd).abs() / denom < 1e-4,
                "component {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn conflict_free_converges_to_exact_fit() {
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 3;
        params.left_count = 90;
        params.right_count = 30;
        params.seed = 4;
        let (g, truth) = gen::gen_sequential(&params).unwrap();
        let gp = GradientParams {
            renormalize: false,
            max_sweeps: 4000,
            tolerance: 1e-12,
            ..GradientParams::default()
        };
        let out = run_gradient(&g, &gp).unwrap();
        assert!(
            out.objective_trace.last().unwrap() < &1e-6,
            "final objective {}",
            out.objective_trace.last().unwrap()
        );
        // Converged x recovers the true indicator on every covered node.
        for (l, &tc) in truth.true_left.iter().enumerate() {
            if g.left_degree(l as u32) == 0 {
                continue;
            }
            for c in 0..3 {
                let want = if tc.index() == c { 1.0 } else { 0.0 };
                assert!(
                    (out.x[c][l] - want).abs() < 1e-2,
                    "x[{c}][{l}] = {}",
                    out.x[c][l]
                );
            }
        }
        assert!(out.verdicts.iter().all(|v| *v == Verdict::KeepPrior));
    }

    /// Dense projected-gradient reference run to machine-level convergence.
    fn dense_projected_gradient(
        g: &BipartiteGraph,
        color: ColorId,
        rho: f64,
        eta: f64,
    ) -> Vec<f64> {
        let mut x = vec![0.5; g.left_count()];
        for _ in 0..200_000 {
            let grad = gradient_at(g, &x, color, rho);
            let mut moved = 0.0f64;
            for (xi, gi) in x.iter_mut().zip(grad) {
                let nx = (*xi - eta * gi).clamp(0.0, 1.0);
                moved = moved.max((nx - *xi).abs());
                *xi = nx;
            }
            if moved < 1e-12 {
                break;
            }
        }
        x
    }

    #[test]
    fn small_instance_matches_projected_gradient_oracle() {
        let g = BipartiteGraph::build(
            2,
            2,
            2,
            &[(0, 0), (1, 0), (1, 1)],
            vec![ColorId(0), ColorId(1)],
        )
        .unwrap();
        let gp = GradientParams {
            renormalize: false,
            tolerance: 1e-14,
            max_sweeps: 100_000,
            ..GradientParams::default()
        };
        let out = run_gradient(&g, &gp).unwrap();
        for c in 0..2u32 {
            let oracle = dense_projected_gradient(&g, ColorId(c), 1.0, out.step_size);
            for l in 0..2 {
                assert!(
                    (out.x[c as usize][l] - oracle[l]).abs() < 1e-4,
                    "color {c} left {l}: {} vs {}",
                    out.x[c as usize][l],
                    oracle[l]
                );
            }
        }
    }

    #[test]
    fn objective_monotone_at_default_step() {
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 3;
        params.left_count = 60;
        params.right_count = 30;
        params.lambda = 0.25;
        params.alpha = 0.15;
        params.omega = 0.1;
        params.seed = 9;
        let (g, _) = gen::gen_sequential(&params).unwrap();
        let gp = GradientParams {
            renormalize: false,
            ..GradientParams::default()
        };
        let out = run_gradient(&g, &gp).unwrap();
        for w in out.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
        }
        // Box feasibility.
        for xc in &out.x {
            for &v in xc {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn distinct_initializations_reach_same_objective() {
        // Convexity: the all-0 and all-0.5 starts land on objectives within
        // 1e-6 of each other.
        let mut params = GenParams::new(Model::Sequential);
        params.num_colors = 2;
        params.left_count = 30;
        params.right_count = 20;
        params.lambda = 0.3;
        params.seed = 13;
        let (g, _) = gen::gen_sequential(&params).unwrap();
        let run_from = |init: f64| -> f64 {
            let mut x = vec![init; g.left_count()];
            let eta = 0.5 / super::gram_row_bound(&g);
            for _ in 0..100_000 {
                let grad = gradient_at(&g, &x, ColorId(0), 1.0);
                let mut moved = 0.0f64;
                for (xi, gi) in x.iter_mut().zip(grad) {
                    let nx = (*xi - eta * gi).clamp(0.0, 1.0);
                    moved = moved.max((nx - *xi).abs());
                    *xi = nx;
                }
                if moved < 1e-13 {
                    break;
                }
            }
            loss(&g, &x, ColorId(0), 1.0)
        };
        let a = run_from(0.0);
        let b = run_from(0.5);
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn renormalized_vectors_stay_on_simplex() {
        let (g, _) = fixtures::figure_graph();
        let out = run_gradient(&g, &GradientParams::default()).unwrap();
        for l in 0..g.left_count() {
            if g.left_degree(l as u32) == 0 {
                continue;
            }
            let sum: f64 = (0..g.num_colors()).map(|c| out.x[c][l]).sum();
            assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-9, "sum {sum}");
        }
    }
}
