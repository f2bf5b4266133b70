//! `bpg` command line: generate noisy bipartite instances, run the repair
//! algorithms over them, and print difficulty metrics and confusion tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use bpg_core::algo::{self, AlgorithmKind, Overrides};
use bpg_core::eval::{self, ConfusionReport};
use bpg_core::gen::{self, DecayKernel, GenParams, Model};
use bpg_core::graph::{BipartiteGraph, GroundTruth, Verdict};
use bpg_core::io;
use bpg_core::metrics;

#[derive(Parser)]
#[command(name = "bpg", version, about = "Labeled bipartite graph repair benchmark")]
struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend
    /// on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate `.bpg` instance files with ground truth
    Generate(GenerateArgs),
    /// Run algorithms over instances and emit confusion tables
    Run(RunArgs),
    /// Print the difficulty metrics row for an instance file
    Metrics { path: PathBuf },
}

#[derive(Args, Clone, Default)]
struct InstanceArgs {
    /// Generator model: sequential, circle, power
    #[arg(long)]
    model: Option<String>,
    /// Benchmark shape: small (5100/1700/70) or large (25500/8500/350)
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    colors: Option<usize>,
    #[arg(long)]
    left: Option<usize>,
    #[arg(long)]
    right: Option<usize>,
    /// Target wild fraction
    #[arg(long)]
    omega: Option<f64>,
    /// Target mislabel fraction
    #[arg(long)]
    lambda: Option<f64>,
    /// Target misattribution fraction (sequential model)
    #[arg(long)]
    alpha: Option<f64>,
    /// Distance kernel: threshold:R, step:R,IN,OUT, or exp:RATE
    #[arg(long)]
    kernel: Option<String>,
    /// Preferential-attachment smoothing (power model)
    #[arg(long)]
    chi: Option<f64>,
    #[arg(long)]
    left_seed_degree: Option<usize>,
    #[arg(long)]
    mean_right_degree: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to draw
    #[arg(long)]
    repeat: Option<usize>,
    /// Flat key=value config file; command-line flags win on conflict
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Output directory
    #[arg(long, default_value = "instances")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Input `.bpg` files; alternatively give generator flags
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    /// Comma-separated algorithm codes (trv,vot,grd,cut,nba,hfn,mba) or "all"
    #[arg(long, default_value = "all")]
    algos: String,
    /// Per-algorithm parameter override, e.g. --set vot.tau=0.3
    #[arg(long = "set")]
    set: Vec<String>,
    /// Directory for report files (otherwise stdout only)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print TSV rows in addition to the aligned table
    #[arg(long)]
    tsv: bool,
    #[command(flatten)]
    instance: InstanceArgs,
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .ok();
    }
    let result = match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Run(args) => cmd_run(args),
        Command::Metrics { path } => cmd_metrics(&path),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .map_err(CliError::Runtime)?;
    let mut map = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected key=value", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Resolves instance arguments (config file first, flags override) into
/// generator parameters plus the seed list.
fn resolve_params(args: &InstanceArgs) -> Result<(GenParams, Vec<u64>, Vec<String>), CliError> {
    let config = match &args.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    let from_cfg = |key: &str| config.get(key).cloned();
    let model_str = args
        .model
        .clone()
        .or_else(|| from_cfg("model"))
        .ok_or_else(|| usage("--model is required (sequential, circle, power)"))?;
    let model = Model::parse(&model_str)
        .ok_or_else(|| usage(format!("unknown model {model_str:?}")))?;

    let preset = args.preset.clone().or_else(|| from_cfg("preset"));
    let mut params = match preset.as_deref() {
        Some("small") => GenParams::small(model),
        Some("large") => GenParams::large(model),
        Some(other) => return Err(usage(format!("unknown preset {other:?}"))),
        None => GenParams::new(model),
    };

    macro_rules! set_num {
        ($field:ident, $key:literal, $ty:ty) => {
            if let Some(v) = args.$field {
                params.$field = v;
            } else if let Some(s) = from_cfg($key) {
                params.$field = s
                    .parse::<$ty>()
                    .map_err(|_| usage(format!(concat!("bad ", $key, " value {:?}"), s)))?;
            }
        };
    }
    if let Some(v) = args.colors {
        params.num_colors = v;
    } else if let Some(s) = from_cfg("colors") {
        params.num_colors = s
            .parse()
            .map_err(|_| usage(format!("bad colors value {s:?}")))?;
    }
    if let Some(v) = args.left {
        params.left_count = v;
    } else if let Some(s) = from_cfg("left") {
        params.left_count = s
            .parse()
            .map_err(|_| usage(format!("bad left value {s:?}")))?;
    }
    if let Some(v) = args.right {
        params.right_count = v;
    } else if let Some(s) = from_cfg("right") {
        params.right_count = s
            .parse()
            .map_err(|_| usage(format!("bad right value {s:?}")))?;
    }
    set_num!(omega, "omega", f64);
    set_num!(lambda, "lambda", f64);
    set_num!(alpha, "alpha", f64);
    set_num!(chi, "chi", f64);
    set_num!(left_seed_degree, "left_seed_degree", usize);
    set_num!(mean_right_degree, "mean_right_degree", f64);
    if let Some(k) = args.kernel.clone().or_else(|| from_cfg("kernel")) {
        params.kernel =
            DecayKernel::parse(&k).ok_or_else(|| usage(format!("unparseable kernel {k:?}")))?;
    }
    let seed = args
        .seed
        .or_else(|| from_cfg("seed").and_then(|s| s.parse().ok()))
        .unwrap_or(1);
    params.seed = seed;
    let repeat = args
        .repeat
        .or_else(|| from_cfg("repeat").and_then(|s| s.parse().ok()))
        .unwrap_or(1)
        .max(1);
    let seeds: Vec<u64> = (0..repeat as u64).map(|i| seed + i).collect();

    let warnings = params
        .validate()
        .map_err(|e| usage(e.to_string()))?;
    let extra_sets: Vec<String> = config
        .iter()
        .filter(|(k, _)| k.contains('.'))
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    Ok((params, seeds, extra_sets))
}

fn instance_name(params: &GenParams, seed: u64) -> String {
    format!(
        "{}_{}c_{}x{}_s{}",
        params.model.name(),
        params.num_colors,
        params.left_count,
        params.right_count,
        seed
    )
}

fn cmd_generate(args: GenerateArgs) -> Result<(), CliError> {
    let (base, seeds, _) = resolve_params(&args.instance)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(CliError::Runtime)?;
    let mut manifest = String::new();
    for (k, v) in base.key_values() {
        if k != "seed" {
            writeln!(manifest, "{k}={v}").unwrap();
        }
    }
    writeln!(manifest, "seeds={}", seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")).unwrap();
    for &seed in &seeds {
        let params = GenParams { seed, ..base.clone() };
        let (graph, truth) = gen::generate(&params)
            .context("generation failed")
            .map_err(CliError::Runtime)?;
        let name = instance_name(&params, seed);
        let path = args.out.join(format!("{name}.bpg"));
        let comments: Vec<String> = params
            .key_values()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        io::save_file(&path, &graph, Some(&truth), &comments)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CliError::Runtime)?;
        writeln!(manifest, "file={}", path.display()).unwrap();
        println!("wrote {}", path.display());
    }
    let manifest_path = args.out.join("manifest.txt");
    fs::write(&manifest_path, manifest)
        .with_context(|| format!("writing {}", manifest_path.display()))
        .map_err(CliError::Runtime)?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn parse_algos(spec: &str) -> Result<Vec<AlgorithmKind>, CliError> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(AlgorithmKind::all().to_vec());
    }
    spec.split(',')
        .map(|tok| AlgorithmKind::parse(tok.trim()).map_err(|e| usage(e.to_string())))
        .collect()
}

struct Instance {
    name: String,
    graph: BipartiteGraph,
    truth: Option<GroundTruth>,
}

fn load_instances(args: &RunArgs) -> Result<Vec<Instance>, CliError> {
    if !args.inputs.is_empty() {
        let mut out = Vec::new();
        for path in &args.inputs {
            let (graph, truth) = io::load_file(path)
                .with_context(|| format!("loading {}", path.display()))
                .map_err(CliError::Runtime)?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "instance".into());
            out.push(Instance { name, graph, truth });
        }
        return Ok(out);
    }
    if args.instance.model.is_none() && args.instance.config.is_none() {
        return Err(usage("provide --in files or generator flags (--model ...)"));
    }
    let (base, seeds, _) = resolve_params(&args.instance)?;
    let mut out = Vec::new();
    for &seed in &seeds {
        let params = GenParams { seed, ..base.clone() };
        let (graph, truth) = gen::generate(&params)
            .context("generation failed")
            .map_err(CliError::Runtime)?;
        out.push(Instance {
            name: instance_name(&params, seed),
            graph,
            truth: Some(truth),
        });
    }
    Ok(out)
}

fn verdict_cell(v: Verdict) -> String {
    match v {
        Verdict::KeepPrior => "prior".into(),
        Verdict::Wild => "wild".into(),
        Verdict::Relabel(c) => format!("relabel {}", c.0),
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let algos = parse_algos(&args.algos)?;
    let mut set_entries = args.set.clone();
    if let Some(cfg) = &args.instance.config {
        for (k, v) in read_config(cfg)? {
            if k.contains('.') {
                set_entries.push(format!("{k}={v}"));
            }
        }
    }
    let overrides = Overrides::parse(&set_entries).map_err(|e| usage(e.to_string()))?;
    let instances = load_instances(&args)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::Runtime)?;
    }

    // reports[algo] -> rows across instances, for aggregation.
    let mut per_algo: BTreeMap<AlgorithmKind, Vec<ConfusionReport>> = BTreeMap::new();
    for inst in &instances {
        println!("== {} ==", inst.name);
        let difficulty = metrics::difficulty(&inst.graph);
        println!("{}", bpg_core::metrics::DifficultyReport::header());
        println!("{}", difficulty.tsv_row());

        let mut reports: Vec<ConfusionReport> = Vec::new();
        let mut verdict_dump = String::new();
        for &kind in &algos {
            let run = algo::run(kind, &inst.graph, &overrides)
                .map_err(|e| usage(e.to_string()))?;
            let diag: Vec<String> = run
                .diagnostics
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            if !diag.is_empty() {
                println!("# {} {}", kind.label(), diag.join(" "));
            }
            match &inst.truth {
                Some(truth) => {
                    let rep = eval::judge(
                        kind.label(),
                        run.elapsed.as_secs_f64(),
                        &run.verdicts,
                        &inst.graph,
                        truth,
                    )
                    .context("judging failed")
                    .map_err(CliError::Runtime)?;
                    per_algo.entry(kind).or_default().push(rep.clone());
                    reports.push(rep);
                }
                None => {
                    writeln!(verdict_dump, "# {}", kind.label()).unwrap();
                    for (r, v) in run.verdicts.iter().enumerate() {
                        writeln!(verdict_dump, "{r}\t{}", verdict_cell(*v)).unwrap();
                    }
                }
            }
        }

        if !reports.is_empty() {
            print!("{}", eval::format_table(&reports));
            if args.tsv {
                println!("{}", ConfusionReport::tsv_header());
                for rep in &reports {
                    println!("{}", rep.tsv_row());
                }
            }
        }
        if !verdict_dump.is_empty() {
            println!("(no truth section: emitting verdicts only)");
            print!("{verdict_dump}");
        }

        if let Some(dir) = &args.out {
            let mut tsv = String::new();
            writeln!(tsv, "{}", ConfusionReport::tsv_header()).unwrap();
            for rep in &reports {
                writeln!(tsv, "{}", rep.tsv_row()).unwrap();
            }
            write_file(dir.join(format!("{}.report.tsv", inst.name)), &tsv)?;
            write_file(
                dir.join(format!("{}.report.txt", inst.name)),
                &eval::format_table(&reports),
            )?;
            let mut met = String::new();
            writeln!(met, "{}", bpg_core::metrics::DifficultyReport::header()).unwrap();
            writeln!(met, "{}", difficulty.tsv_row()).unwrap();
            write_file(dir.join(format!("{}.metrics.tsv", inst.name)), &met)?;
            if !verdict_dump.is_empty() {
                write_file(dir.join(format!("{}.verdicts.tsv", inst.name)), &verdict_dump)?;
            }
        }
    }

    if instances.len() > 1 && !per_algo.is_empty() {
        println!("== aggregate over {} instances (mean, sd) ==", instances.len());
        let mut tsv = String::new();
        let sd_header: Vec<String> = eval::COLUMNS[1..]
            .iter()
            .map(|c| format!("{c}_sd"))
            .collect();
        writeln!(
            tsv,
            "{}\t{}",
            ConfusionReport::tsv_header(),
            sd_header.join("\t")
        )
        .unwrap();
        let mut mean_rows = Vec::new();
        for (_, rows) in per_algo.iter() {
            if let Some((mean, sd)) = eval::aggregate(rows) {
                let sd_cells: Vec<String> = sd.iter().map(|v| format!("{v:.3}")).collect();
                writeln!(tsv, "{}\t{}", mean.tsv_row(), sd_cells.join("\t")).unwrap();
                mean_rows.push(mean);
            }
        }
        print!("{}", eval::format_table(&mean_rows));
        if args.tsv {
            print!("{tsv}");
        }
        if let Some(dir) = &args.out {
            write_file(dir.join("aggregate.tsv"), &tsv)?;
        }
    }
    Ok(())
}

fn write_file(path: PathBuf, content: &str) -> Result<(), CliError> {
    fs::write(&path, content)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Runtime)
}

fn cmd_metrics(path: &Path) -> Result<(), CliError> {
    let (graph, _) = io::load_file(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(CliError::Runtime)?;
    let report = metrics::difficulty(&graph);
    println!("{}", bpg_core::metrics::DifficultyReport::header());
    println!("{}", report.tsv_row());
    Ok(())
}
