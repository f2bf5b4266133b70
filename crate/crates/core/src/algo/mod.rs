//! The repair algorithms and their shared run contract.
//!
//! Every algorithm consumes an immutable [`BipartiteGraph`] and produces one
//! [`Verdict`] per right node plus algorithm-specific diagnostics. Sweeps are
//! side-synchronous and double-buffered, so results are deterministic
//! regardless of the rayon thread count.

pub mod bayes;
pub mod gradient;
pub mod harmonic;
pub mod mincut;
pub mod multinomial;
pub mod voting;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::graph::{BipartiteGraph, Verdict};

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("bad parameter {key}: {msg}")]
    BadParam { key: String, msg: String },
    #[error("objective increased for {0} consecutive sweeps; step size too large")]
    DivergenceDetected(usize),
    #[error("harmonic system is singular (component without an absorbing node)")]
    SingularSystem,
}

/// Algorithm selector. Short codes match the report rows: `trv`, `vot`,
/// `grd`, `cut`, `nba`, `hfn`, `mba`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum AlgorithmKind {
    Trivial,
    Voting,
    Gradient,
    MinCut,
    NaiveBayes,
    Harmonic,
    Multinomial,
}

impl AlgorithmKind {
    pub fn all() -> [AlgorithmKind; 7] {
        [
            AlgorithmKind::Trivial,
            AlgorithmKind::Voting,
            AlgorithmKind::Gradient,
            AlgorithmKind::MinCut,
            AlgorithmKind::NaiveBayes,
            AlgorithmKind::Harmonic,
            AlgorithmKind::Multinomial,
        ]
    }

    pub fn parse(s: &str) -> Result<AlgorithmKind, AlgoError> {
        match s.to_ascii_lowercase().as_str() {
            "trv" | "trivial" => Ok(AlgorithmKind::Trivial),
            "vot" | "voting" => Ok(AlgorithmKind::Voting),
            "grd" | "gradient" => Ok(AlgorithmKind::Gradient),
            "cut" | "mincut" => Ok(AlgorithmKind::MinCut),
            "nba" | "naive-bayes" | "naivebayes" => Ok(AlgorithmKind::NaiveBayes),
            "hfn" | "harmonic" => Ok(AlgorithmKind::Harmonic),
            "mba" | "multinomial" => Ok(AlgorithmKind::Multinomial),
            other => Err(AlgoError::UnknownAlgorithm(other.to_string())),
        }
    }

    /// Row label used in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmKind::Trivial => "TRV.",
            AlgorithmKind::Voting => "VOT.",
            AlgorithmKind::Gradient => "GRD.",
            AlgorithmKind::MinCut => "CUT.",
            AlgorithmKind::NaiveBayes => "N.BA.",
            AlgorithmKind::Harmonic => "H.FN.",
            AlgorithmKind::Multinomial => "M.BA.",
        }
    }

    /// Short code used on the command line and in override scopes.
    pub fn code(&self) -> &'static str {
        match self {
            AlgorithmKind::Trivial => "trv",
            AlgorithmKind::Voting => "vot",
            AlgorithmKind::Gradient => "grd",
            AlgorithmKind::MinCut => "cut",
            AlgorithmKind::NaiveBayes => "nba",
            AlgorithmKind::Harmonic => "hfn",
            AlgorithmKind::Multinomial => "mba",
        }
    }
}

/// Per-algorithm parameter overrides, parsed from `algo.key=value` entries.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    entries: BTreeMap<(String, String), String>,
}

impl Overrides {
    pub fn parse<I, S>(items: I) -> Result<Overrides, AlgoError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut entries = BTreeMap::new();
        for item in items {
            let item = item.as_ref();
            let (path, value) = item.split_once('=').ok_or_else(|| AlgoError::BadParam {
                key: item.to_string(),
                msg: "expected algo.key=value".into(),
            })?;
            let (algo, key) = path.split_once('.').ok_or_else(|| AlgoError::BadParam {
                key: item.to_string(),
                msg: "expected algo.key=value".into(),
            })?;
            AlgorithmKind::parse(algo)?;
            entries.insert(
                (algo.trim().to_string(), key.trim().to_string()),
                value.trim().to_string(),
            );
        }
        Ok(Overrides { entries })
    }

    /// `(key, value)` pairs scoped to one algorithm code.
    pub fn scoped<'a>(&'a self, code: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> {
        self.entries
            .iter()
            .filter(move |((a, _), _)| a == code)
            .map(|((_, k), v)| (k.as_str(), v.as_str()))
    }
}

pub(crate) fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, AlgoError> {
    value.parse().map_err(|_| AlgoError::BadParam {
        key: key.to_string(),
        msg: format!("cannot parse {value:?}"),
    })
}

pub(crate) fn bad_key(scope: &str, key: &str) -> AlgoError {
    AlgoError::BadParam {
        key: format!("{scope}.{key}"),
        msg: "unknown parameter".into(),
    }
}

/// Outcome of one algorithm run over one instance.
#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub kind: AlgorithmKind,
    pub verdicts: Vec<Verdict>,
    pub elapsed: Duration,
    /// Human-readable diagnostic key/value pairs (sweep counts, residuals).
    pub diagnostics: Vec<(String, String)>,
}

/// Runs one algorithm with defaults modified by `overrides`, timing the
/// solve only (pre-parsing of parameters is excluded).
pub fn run(
    kind: AlgorithmKind,
    graph: &BipartiteGraph,
    overrides: &Overrides,
) -> Result<AlgorithmRun, AlgoError> {
    let start;
    let (verdicts, diagnostics) = match kind {
        AlgorithmKind::Trivial => {
            start = Instant::now();
            (crate::eval::trivial_baseline(graph), Vec::new())
        }
        AlgorithmKind::Voting => {
            let params = voting::VotingParams::from_overrides(overrides)?;
            start = Instant::now();
            let out = voting::run_voting(graph, &params);
            (
                out.verdicts,
                vec![
                    ("sweeps".into(), out.sweeps.to_string()),
                    (
                        "objective".into(),
                        format!("{:.2}", out.objective_trace.last().copied().unwrap_or(0.0)),
                    ),
                ],
            )
        }
        AlgorithmKind::Gradient => {
            let params = gradient::GradientParams::from_overrides(overrides)?;
            start = Instant::now();
            let out = gradient::run_gradient(graph, &params)?;
            (
                out.verdicts,
                vec![
                    ("sweeps".into(), out.sweeps.to_string()),
                    ("eta".into(), format!("{:.3e}", out.step_size)),
                    (
                        "objective".into(),
                        format!("{:.6}", out.objective_trace.last().copied().unwrap_or(0.0)),
                    ),
                    ("mean_node_loss".into(), format!("{:.6}", out.mean_node_loss)),
                ],
            )
        }
        AlgorithmKind::MinCut => {
            let params = mincut::CutParams::from_overrides(overrides)?;
            start = Instant::now();
            let out = mincut::run_mincut(graph, &params);
            (
                out.verdicts,
                vec![(
                    "total_cut_value".into(),
                    format!("{:.2}", out.cut_values.iter().sum::<f64>()),
                )],
            )
        }
        AlgorithmKind::NaiveBayes => {
            let params = bayes::BayesParams::from_overrides(overrides)?;
            start = Instant::now();
            let out = bayes::run_naive_bayes(graph, &params);
            (
                out.verdicts,
                vec![
                    ("sweeps".into(), out.sweeps.to_string()),
                    ("alpha_hat".into(), format!("{:.4}", out.alpha_used)),
                    ("fallbacks".into(), out.fallback_nodes.len().to_string()),
                ],
            )
        }
        AlgorithmKind::Harmonic => {
            let params = harmonic::HarmonicParams::from_overrides(overrides)?;
            start = Instant::now();
            let out = harmonic::run_harmonic(graph, &params)?;
            (
                out.verdicts,
                vec![
                    ("half_steps".into(), out.half_steps.to_string()),
                    (
                        "final_deficit".into(),
                        format!("{:.2e}", out.deficit_trace.last().copied().unwrap_or(0.0)),
                    ),
                ],
            )
        }
        AlgorithmKind::Multinomial => {
            let params = multinomial::MultinomialParams::from_overrides(overrides)?;
            start = Instant::now();
            let out = multinomial::run_multinomial(graph, &params);
            (
                out.verdicts,
                vec![
                    ("iterations".into(), params.iterations.to_string()),
                    (
                        "fixed_point_residual".into(),
                        format!("{:.4}", out.final_residual),
                    ),
                ],
            )
        }
    };
    Ok(AlgorithmRun {
        kind,
        verdicts,
        elapsed: start.elapsed(),
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_codes() {
        assert_eq!(AlgorithmKind::parse("vot").unwrap(), AlgorithmKind::Voting);
        assert_eq!(AlgorithmKind::parse("N.BA").is_err(), true);
        assert!(matches!(
            AlgorithmKind::parse("nope"),
            Err(AlgoError::UnknownAlgorithm(_))
        ));
    }

    #[test]
    fn overrides_parse_and_scope() {
        let ov = Overrides::parse(["vot.tau=0.3", "cut.pi0=0.8"]).unwrap();
        let vot: Vec<_> = ov.scoped("vot").collect();
        assert_eq!(vot, vec![("tau", "0.3")]);
        assert!(Overrides::parse(["vot.tau"]).is_err());
        assert!(Overrides::parse(["bogus.key=1"]).is_err());
    }
}
