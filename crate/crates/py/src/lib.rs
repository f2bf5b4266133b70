//! Python bindings: generation, the `.bpg` format, difficulty metrics, the
//! repair algorithms, and confusion-table judging.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use bpg_core::algo::{self, AlgorithmKind, Overrides};
use bpg_core::eval;
use bpg_core::gen::{DecayKernel, GenParams, Model};
use bpg_core::graph::{BipartiteGraph, ColorId, GroundTruth, TrueColor, Verdict};
use bpg_core::{io, metrics};

#[pyclass(name = "Graph")]
#[derive(Clone)]
struct PyGraph {
    inner: BipartiteGraph,
}

#[pymethods]
impl PyGraph {
    /// Build a graph from an edge list and one label per right node.
    #[new]
    fn new(
        left_count: usize,
        right_count: usize,
        num_colors: usize,
        edges: Vec<(u32, u32)>,
        labels: Vec<u32>,
    ) -> PyResult<Self> {
        let labels = labels.into_iter().map(ColorId).collect();
        BipartiteGraph::build(left_count, right_count, num_colors, &edges, labels)
            .map(|inner| PyGraph { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn left_count(&self) -> usize {
        self.inner.left_count()
    }

    #[getter]
    fn right_count(&self) -> usize {
        self.inner.right_count()
    }

    #[getter]
    fn num_colors(&self) -> usize {
        self.inner.num_colors()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn proposed_labels(&self) -> Vec<u32> {
        self.inner.proposed_labels().iter().map(|c| c.0).collect()
    }

    fn edges(&self) -> Vec<(u32, u32)> {
        self.inner.edges().collect()
    }

    fn right_neighbors(&self, r: u32) -> Vec<u32> {
        self.inner.right_neighbors(r).to_vec()
    }

    fn left_neighbors(&self, l: u32) -> Vec<u32> {
        self.inner.left_neighbors(l).to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(left={}, right={}, colors={}, edges={})",
            self.inner.left_count(),
            self.inner.right_count(),
            self.inner.num_colors(),
            self.inner.edge_count()
        )
    }
}

#[pyclass(name = "Truth")]
#[derive(Clone)]
struct PyTruth {
    inner: GroundTruth,
}

#[pymethods]
impl PyTruth {
    /// True right colors; wild nodes are None.
    fn true_right(&self) -> Vec<Option<u32>> {
        self.inner
            .true_right
            .iter()
            .map(|t| match t {
                TrueColor::Wild => None,
                TrueColor::Color(c) => Some(c.0),
            })
            .collect()
    }

    fn true_left(&self) -> Vec<u32> {
        self.inner.true_left.iter().map(|c| c.0).collect()
    }

    fn misattributed_edges(&self) -> Vec<(u32, u32)> {
        self.inner.misattributed_edges().to_vec()
    }

    fn wild_count(&self) -> usize {
        self.inner.true_right.iter().filter(|t| t.is_wild()).count()
    }
}

fn build_params(
    model: &str,
    preset: Option<&str>,
    kwargs: Option<&Bound<'_, PyDict>>,
) -> PyResult<GenParams> {
    let model =
        Model::parse(model).ok_or_else(|| PyValueError::new_err(format!("unknown model {model:?}")))?;
    let mut params = match preset {
        Some("small") => GenParams::small(model),
        Some("large") => GenParams::large(model),
        Some(other) => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
        None => GenParams::new(model),
    };
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            match key.as_str() {
                "colors" => params.num_colors = v.extract()?,
                "left" => params.left_count = v.extract()?,
                "right" => params.right_count = v.extract()?,
                "omega" => params.omega = v.extract()?,
                "lambda" | "lam" => params.lambda = v.extract()?,
                "alpha" => params.alpha = v.extract()?,
                "chi" => params.chi = v.extract()?,
                "left_seed_degree" => params.left_seed_degree = v.extract()?,
                "mean_right_degree" => params.mean_right_degree = v.extract()?,
                "seed" => params.seed = v.extract()?,
                "kernel" => {
                    let s: String = v.extract()?;
                    params.kernel = DecayKernel::parse(&s)
                        .ok_or_else(|| PyValueError::new_err(format!("bad kernel {s:?}")))?;
                }
                other => {
                    return Err(PyValueError::new_err(format!("unknown parameter {other:?}")))
                }
            }
        }
    }
    Ok(params)
}

/// Generate an instance; returns (Graph, Truth).
#[pyfunction]
#[pyo3(signature = (model, preset=None, **kwargs))]
fn generate(
    model: &str,
    preset: Option<&str>,
    kwargs: Option<&Bound<'_, PyDict>>,
) -> PyResult<(PyGraph, PyTruth)> {
    let params = build_params(model, preset, kwargs)?;
    let (graph, truth) =
        bpg_core::gen::generate(&params).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((PyGraph { inner: graph }, PyTruth { inner: truth }))
}

/// Load a `.bpg` file; returns (Graph, Truth or None).
#[pyfunction]
fn load(path: &str) -> PyResult<(PyGraph, Option<PyTruth>)> {
    let (graph, truth) = io::load_file(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok((
        PyGraph { inner: graph },
        truth.map(|inner| PyTruth { inner }),
    ))
}

/// Save a graph (with optional truth) as a canonical `.bpg` file.
#[pyfunction]
#[pyo3(signature = (path, graph, truth=None))]
fn save(path: &str, graph: &PyGraph, truth: Option<&PyTruth>) -> PyResult<()> {
    io::save_file(path, &graph.inner, truth.map(|t| &t.inner), &[])
        .map_err(|e| PyIOError::new_err(e.to_string()))
}

/// Difficulty metrics as a dict.
#[pyfunction]
fn difficulty<'py>(py: Python<'py>, graph: &PyGraph) -> PyResult<Bound<'py, PyDict>> {
    let rep = metrics::difficulty(&graph.inner);
    let d = PyDict::new(py);
    d.set_item("edges", rep.edge_count)?;
    d.set_item("left_avg_degree", rep.left_avg_degree)?;
    d.set_item("left_max_degree", rep.left_max_degree)?;
    d.set_item("right_avg_degree", rep.right_avg_degree)?;
    d.set_item("right_max_degree", rep.right_max_degree)?;
    d.set_item("color_degree", rep.avg_color_degree)?;
    d.set_item("components", rep.component_count)?;
    d.set_item("snr_2path", rep.snr_2path)?;
    d.set_item("color_histogram", rep.color_histogram)?;
    Ok(d)
}

/// Closed-form SNR lower bound from known error rates.
#[pyfunction]
fn snr_estimate(omega: f64, lambda: f64, alpha: f64) -> f64 {
    metrics::snr_estimate(omega, lambda, alpha)
}

fn verdict_tuple(v: Verdict) -> (String, Option<u32>) {
    match v {
        Verdict::KeepPrior => ("prior".into(), None),
        Verdict::Wild => ("wild".into(), None),
        Verdict::Relabel(c) => ("relabel".into(), Some(c.0)),
    }
}

/// Run one algorithm (code: trv, vot, grd, cut, nba, hfn, mba). Returns a
/// dict with verdicts [(kind, color)], elapsed seconds, and diagnostics.
#[pyfunction]
#[pyo3(signature = (graph, algorithm, overrides=None))]
fn run_algorithm<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    algorithm: &str,
    overrides: Option<Vec<String>>,
) -> PyResult<Bound<'py, PyDict>> {
    let kind =
        AlgorithmKind::parse(algorithm).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let ov = Overrides::parse(overrides.unwrap_or_default())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let run = algo::run(kind, &graph.inner, &ov).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("algorithm", kind.label())?;
    d.set_item("elapsed", run.elapsed.as_secs_f64())?;
    d.set_item(
        "verdicts",
        run.verdicts.iter().map(|&v| verdict_tuple(v)).collect::<Vec<_>>(),
    )?;
    let diag = PyDict::new(py);
    for (k, v) in &run.diagnostics {
        diag.set_item(k, v)?;
    }
    d.set_item("diagnostics", diag)?;
    Ok(d)
}

/// Judge verdicts (as produced by `run_algorithm`) against the truth;
/// returns the confusion-table row as a dict.
#[pyfunction]
#[pyo3(signature = (graph, truth, verdicts, name="run", elapsed=0.0))]
fn judge<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    truth: &PyTruth,
    verdicts: Vec<(String, Option<u32>)>,
    name: &str,
    elapsed: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let parsed: Vec<Verdict> = verdicts
        .into_iter()
        .map(|(kind, color)| match (kind.as_str(), color) {
            ("prior", _) => Ok(Verdict::KeepPrior),
            ("wild", _) => Ok(Verdict::Wild),
            ("relabel", Some(c)) => Ok(Verdict::Relabel(ColorId(c))),
            other => Err(PyValueError::new_err(format!("bad verdict {other:?}"))),
        })
        .collect::<PyResult<_>>()?;
    let rep = eval::judge(name, elapsed, &parsed, &graph.inner, &truth.inner)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    let d = PyDict::new(py);
    d.set_item("A", rep.algorithm)?;
    d.set_item("T", rep.elapsed_secs)?;
    d.set_item("W", rep.wild_count)?;
    d.set_item("W:W", rep.w_w)?;
    d.set_item("M:W", rep.m_w)?;
    d.set_item("N:W", rep.n_w)?;
    d.set_item("P", rep.prior_count)?;
    d.set_item("N:P", rep.n_p)?;
    d.set_item("M:P", rep.m_p)?;
    d.set_item("W:P", rep.w_p)?;
    d.set_item("R", rep.relabel_count)?;
    d.set_item("C:R", rep.c_r)?;
    d.set_item("M:R", rep.m_r)?;
    d.set_item("W:R", rep.w_r)?;
    d.set_item("N:R", rep.n_r)?;
    d.set_item("Wk", rep.weak)?;
    d.set_item("Str", rep.strong)?;
    Ok(d)
}

#[pymodule]
fn bpg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyTruth>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(save, m)?)?;
    m.add_function(wrap_pyfunction!(difficulty, m)?)?;
    m.add_function(wrap_pyfunction!(snr_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(run_algorithm, m)?)?;
    m.add_function(wrap_pyfunction!(judge, m)?)?;
    Ok(())
}
