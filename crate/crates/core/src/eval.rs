//! Judging verdicts against ground truth: the per-run confusion table with
//! weak/strong correctness, the trivial keep-everything baseline, and table
//! rendering (TSV and aligned text) plus mean/stddev aggregation over seeds.

use thiserror::Error;

use crate::graph::{BipartiteGraph, GroundTruth, TrueColor, Verdict};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("verdict count {got} does not match right count {expected}")]
    CountMismatch { expected: usize, got: usize },
}

/// Hidden truth category of a right node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TruthClass {
    /// True color equals the proposed label.
    Normal,
    /// True color differs from the proposed label (and is not wild).
    Misclassified,
    Wild,
}

pub fn truth_class(graph: &BipartiteGraph, truth: &GroundTruth, r: u32) -> TruthClass {
    match truth.true_right[r as usize] {
        TrueColor::Wild => TruthClass::Wild,
        TrueColor::Color(c) => {
            if c == graph.proposed_label(r) {
                TruthClass::Normal
            } else {
                TruthClass::Misclassified
            }
        }
    }
}

/// The baseline that keeps every prior label.
pub fn trivial_baseline(graph: &BipartiteGraph) -> Vec<Verdict> {
    vec![Verdict::KeepPrior; graph.right_count()]
}

/// One confusion-table row. Conditional fields are fractions within their
/// verdict class and sum to 1 when the class is nonempty; `W:W` reads "true
/// wild given classified wild".
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionReport {
    pub algorithm: String,
    /// Wall-clock seconds of the solve, stored at full precision and
    /// displayed as whole seconds.
    pub elapsed_secs: f64,
    pub wild_count: usize,
    pub w_w: f64,
    pub m_w: f64,
    pub n_w: f64,
    pub prior_count: usize,
    pub n_p: f64,
    pub m_p: f64,
    pub w_p: f64,
    pub relabel_count: usize,
    pub c_r: f64,
    pub m_r: f64,
    pub w_r: f64,
    pub n_r: f64,
    pub weak: f64,
    pub strong: f64,
}

/// Scores verdicts against the hidden truth.
pub fn judge(
    algorithm: &str,
    elapsed_secs: f64,
    verdicts: &[Verdict],
    graph: &BipartiteGraph,
    truth: &GroundTruth,
) -> Result<ConfusionReport, EvalError> {
    let right = graph.right_count();
    if verdicts.len() != right {
        return Err(EvalError::CountMismatch {
            expected: right,
            got: verdicts.len(),
        });
    }
    let mut wild = [0usize; 3]; // indexed by TruthClass as [normal, misclass, wild]
    let mut prior = [0usize; 3];
    let mut relabel = [0usize; 3];
    let mut relabel_correct = 0usize;
    let mut weak_hits = 0usize;
    let mut strong_hits = 0usize;

    for r in 0..right as u32 {
        let tc = truth_class(graph, truth, r);
        let ti = match tc {
            TruthClass::Normal => 0,
            TruthClass::Misclassified => 1,
            TruthClass::Wild => 2,
        };
        // Normalize a relabel pointing at the proposed label.
        let verdict = match verdicts[r as usize] {
            Verdict::Relabel(c) => Verdict::from_color(c, graph.proposed_label(r)),
            v => v,
        };
        match verdict {
            Verdict::Wild => {
                wild[ti] += 1;
                if tc != TruthClass::Normal {
                    weak_hits += 1;
                }
                if tc == TruthClass::Wild {
                    strong_hits += 1;
                }
            }
            Verdict::KeepPrior => {
                prior[ti] += 1;
                if tc == TruthClass::Normal {
                    weak_hits += 1;
                    strong_hits += 1;
                }
            }
            Verdict::Relabel(c) => {
                relabel[ti] += 1;
                if tc != TruthClass::Normal {
                    weak_hits += 1;
                }
                if truth.true_right[r as usize] == TrueColor::Color(c) {
                    relabel_correct += 1;
                    strong_hits += 1;
                }
            }
        }
    }

    let frac = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let w = wild.iter().sum::<usize>();
    let p = prior.iter().sum::<usize>();
    let rl = relabel.iter().sum::<usize>();
    let total = right.max(1);
    Ok(ConfusionReport {
        algorithm: algorithm.to_string(),
        elapsed_secs,
        wild_count: w,
        w_w: frac(wild[2], w),
        m_w: frac(wild[1], w),
        n_w: frac(wild[0], w),
        prior_count: p,
        n_p: frac(prior[0], p),
        m_p: frac(prior[1], p),
        w_p: frac(prior[2], p),
        relabel_count: rl,
        c_r: frac(relabel_correct, rl),
        // A correct relabel always lands in the misclassified truth class,
        // so the subtraction cannot underflow.
        m_r: frac(relabel[1] - relabel_correct, rl),
        w_r: frac(relabel[2], rl),
        n_r: frac(relabel[0], rl),
        weak: frac(weak_hits, total),
        strong: frac(strong_hits, total),
    })
}

pub const COLUMNS: [&str; 17] = [
    "A", "T", "W", "W:W", "M:W", "N:W", "P", "N:P", "M:P", "W:P", "R", "C:R", "M:R", "W:R",
    "N:R", "Wk", "Str",
];

impl ConfusionReport {
    /// Numeric cells in column order (everything except the name).
    pub fn values(&self) -> [f64; 16] {
        [
            self.elapsed_secs,
            self.wild_count as f64,
            self.w_w,
            self.m_w,
            self.n_w,
            self.prior_count as f64,
            self.n_p,
            self.m_p,
            self.w_p,
            self.relabel_count as f64,
            self.c_r,
            self.m_r,
            self.w_r,
            self.n_r,
            self.weak,
            self.strong,
        ]
    }

    pub fn tsv_header() -> String {
        COLUMNS.join("\t")
    }

    pub fn tsv_row(&self) -> String {
        format!(
            "{}\t{:.3}\t{}\t{:.2}\t{:.2}\t{:.2}\t{}\t{:.2}\t{:.2}\t{:.2}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}",
            self.algorithm,
            self.elapsed_secs,
            self.wild_count,
            self.w_w,
            self.m_w,
            self.n_w,
            self.prior_count,
            self.n_p,
            self.m_p,
            self.w_p,
            self.relabel_count,
            self.c_r,
            self.m_r,
            self.w_r,
            self.n_r,
            self.weak,
            self.strong
        )
    }
}

/// Aligned text table in the canonical column order, timings rounded to
/// whole seconds.
pub fn format_table(reports: &[ConfusionReport]) -> String {
    let mut rows: Vec<Vec<String>> = vec![COLUMNS.iter().map(|s| s.to_string()).collect()];
    for rep in reports {
        rows.push(vec![
            rep.algorithm.clone(),
            format!("{}", rep.elapsed_secs.round() as i64),
            rep.wild_count.to_string(),
            format!("{:.2}", rep.w_w),
            format!("{:.2}", rep.m_w),
            format!("{:.2}", rep.n_w),
            rep.prior_count.to_string(),
            format!("{:.2}", rep.n_p),
            format!("{:.2}", rep.m_p),
            format!("{:.2}", rep.w_p),
            rep.relabel_count.to_string(),
            format!("{:.2}", rep.c_r),
            format!("{:.2}", rep.m_r),
            format!("{:.2}", rep.w_r),
            format!("{:.2}", rep.n_r),
            format!("{:.2}", rep.weak),
            format!("{:.2}", rep.strong),
        ]);
    }
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(1))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| format!("{cell:>width$}", width = widths[c]))
            .collect();
        out.push_str(&line.join("  "));
        out.push('\n');
    }
    out
}

/// Per-cell mean and sample standard deviation over repeated runs of the
/// same algorithm.
pub fn aggregate(reports: &[ConfusionReport]) -> Option<(ConfusionReport, [f64; 16])> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mut mean = [0.0f64; 16];
    for rep in reports {
        for (m, v) in mean.iter_mut().zip(rep.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut sd = [0.0f64; 16];
    if reports.len() > 1 {
        for rep in reports {
            for (s, (v, m)) in sd.iter_mut().zip(rep.values().iter().zip(&mean)) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut sd {
            *s = (*s / (n - 1.0)).sqrt();
        }
    }
    let rep = ConfusionReport {
        algorithm: first.algorithm.clone(),
        elapsed_secs: mean[0],
        wild_count: mean[1].round() as usize,
        w_w: mean[2],
        m_w: mean[3],
        n_w: mean[4],
        prior_count: mean[5].round() as usize,
        n_p: mean[6],
        m_p: mean[7],
        w_p: mean[8],
        relabel_count: mean[9].round() as usize,
        c_r: mean[10],
        m_r: mean[11],
        w_r: mean[12],
        n_r: mean[13],
        weak: mean[14],
        strong: mean[15],
    };
    Some((rep, sd))
}
