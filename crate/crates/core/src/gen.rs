//! Synthetic instance generators: sequential, circle, and power-law circle
//! models with controlled wildness, mislabeling, and misattribution rates.
//!
//! Generation is deterministic: identical [`GenParams`] (including the seed)
//! produce bit-identical graphs. Each instance uses a single sequential RNG
//! stream; parallelism across instances comes from independent seeds.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use thiserror::Error;

use crate::graph::{BipartiteGraph, ColorId, GroundTruth, TrueColor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Sequential,
    Circle,
    PowerCircle,
}

impl Model {
    pub fn parse(s: &str) -> Option<Model> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" | "seq" => Some(Model::Sequential),
            "circle" => Some(Model::Circle),
            "power" | "power-circle" | "powercircle" => Some(Model::PowerCircle),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Sequential => "sequential",
            Model::Circle => "circle",
            Model::PowerCircle => "power",
        }
    }
}

/// Non-increasing edge-weight kernel evaluated on circular distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayKernel {
    Exponential { rate: f64 },
    Step { radius: f64, inside: f64, outside: f64 },
    Threshold { radius: f64 },
}

impl DecayKernel {
    pub fn eval(&self, dist: f64) -> f64 {
        match *self {
            DecayKernel::Exponential { rate } => (-rate * dist).exp(),
            DecayKernel::Step {
                radius,
                inside,
                outside,
            } => {
                if dist < radius {
                    inside
                } else {
                    outside
                }
            }
            DecayKernel::Threshold { radius } => {
                if dist < radius {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Parses `threshold:R`, `step:R,IN,OUT`, or `exp:RATE`.
    pub fn parse(s: &str) -> Option<DecayKernel> {
        let (kind, args) = s.split_once(':')?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|t| t.trim().parse().ok())
            .collect::<Option<_>>()?;
        match (kind.trim(), nums.as_slice()) {
            ("threshold", [r]) => Some(DecayKernel::Threshold { radius: *r }),
            ("step", [r, i, o]) => Some(DecayKernel::Step {
                radius: *r,
                inside: *i,
                outside: *o,
            }),
            ("exp" | "exponential", [rate]) => Some(DecayKernel::Exponential { rate: *rate }),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            DecayKernel::Exponential { rate } => format!("exp:{rate}"),
            DecayKernel::Step {
                radius,
                inside,
                outside,
            } => format!("step:{radius},{inside},{outside}"),
            DecayKernel::Threshold { radius } => format!("threshold:{radius}"),
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        let ok = match *self {
            DecayKernel::Exponential { rate } => rate > 0.0,
            DecayKernel::Step {
                radius,
                inside,
                outside,
            } => radius > 0.0 && inside >= outside && outside >= 0.0 && inside > 0.0,
            DecayKernel::Threshold { radius } => radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(GenError::InvalidParams(format!(
                "kernel {} is not a valid non-increasing nonnegative weight",
                self.describe()
            )))
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Clone, Debug)]
pub struct GenParams {
    pub model: Model,
    pub num_colors: usize,
    pub left_count: usize,
    pub right_count: usize,
    /// Target wild fraction.
    pub omega: f64,
    /// Target mislabel fraction.
    pub lambda: f64,
    /// Target misattributed-edge fraction (sequential model only; the circle
    /// models realize misattribution implicitly through the kernel).
    pub alpha: f64,
    pub kernel: DecayKernel,
    /// Preferential-attachment smoothing constant (power model).
    pub chi: f64,
    /// Per-left-node seed degree for the power model's first wiring step.
    pub left_seed_degree: usize,
    /// Mean right degree: Erdős–Rényi block density in the sequential model,
    /// Poisson degree mean in the circle model.
    pub mean_right_degree: f64,
    pub seed: u64,
}

impl GenParams {
    pub fn new(model: Model) -> GenParams {
        GenParams {
            model,
            num_colors: 3,
            left_count: 300,
            right_count: 100,
            omega: 0.0,
            lambda: 0.0,
            alpha: 0.0,
            kernel: DecayKernel::Threshold { radius: 0.125 },
            chi: 0.25,
            left_seed_degree: 1,
            mean_right_degree: match model {
                Model::Sequential => 10.0,
                _ => 11.4,
            },
            seed: 0,
        }
    }

    /// The small benchmark shape: 5100 left, 1700 right, 70 colors.
    pub fn small(model: Model) -> GenParams {
        GenParams {
            num_colors: 70,
            left_count: 5100,
            right_count: 1700,
            ..GenParams::new(model)
        }
    }

    /// The large benchmark shape: five times the small counts.
    pub fn large(model: Model) -> GenParams {
        GenParams {
            num_colors: 350,
            left_count: 25500,
            right_count: 8500,
            ..GenParams::new(model)
        }
    }

    /// Flat key=value form, echoed into generated file headers and manifests.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("model".into(), self.model.name().into()),
            ("colors".into(), self.num_colors.to_string()),
            ("left".into(), self.left_count.to_string()),
            ("right".into(), self.right_count.to_string()),
            ("omega".into(), self.omega.to_string()),
            ("lambda".into(), self.lambda.to_string()),
        ];
        match self.model {
            Model::Sequential => {
                kv.push(("alpha".into(), self.alpha.to_string()));
                kv.push((
                    "mean_right_degree".into(),
                    self.mean_right_degree.to_string(),
                ));
            }
            Model::Circle => {
                kv.push(("kernel".into(), self.kernel.describe()));
                kv.push((
                    "mean_right_degree".into(),
                    self.mean_right_degree.to_string(),
                ));
            }
            Model::PowerCircle => {
                kv.push(("kernel".into(), self.kernel.describe()));
                kv.push(("chi".into(), self.chi.to_string()));
                kv.push(("left_seed_degree".into(), self.left_seed_degree.to_string()));
            }
        }
        kv.push(("seed".into(), self.seed.to_string()));
        kv
    }

    /// Range checks. Returns advisory warnings for odd but legal settings.
    pub fn validate(&self) -> Result<Vec<String>, GenError> {
        fn unit(name: &str, v: f64) -> Result<(), GenError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(GenError::InvalidParams(format!("{name}={v} outside [0,1]")))
            }
        }
        unit("omega", self.omega)?;
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        if self.num_colors == 0 {
            return Err(GenError::InvalidParams("num_colors must be >= 1".into()));
        }
        match self.model {
            Model::Sequential | Model::Circle => {
                if self.mean_right_degree <= 0.0 {
                    return Err(GenError::InvalidParams(
                        "mean_right_degree must be > 0".into(),
                    ));
                }
            }
            Model::PowerCircle => {
                if self.chi <= 0.0 {
                    return Err(GenError::InvalidParams("chi must be > 0".into()));
                }
            }
        }
        if matches!(self.model, Model::Circle | Model::PowerCircle) {
            self.kernel.validate()?;
        }
        let mut warnings = Vec::new();
        if self.omega + self.lambda >= 1.0 {
            warnings.push(format!(
                "omega + lambda = {} leaves almost no clean nodes",
                self.omega + self.lambda
            ));
        }
        Ok(warnings)
    }
}

/// Generates an instance under `params.model`.
pub fn generate(params: &GenParams) -> Result<(BipartiteGraph, GroundTruth), GenError> {
    match params.model {
        Model::Sequential => gen_sequential(params),
        Model::Circle => gen_circle(params),
        Model::PowerCircle => gen_power_circle(params),
    }
}

/// Heavy-tail degree draw with `P(Z > z) = 1/z`, truncated to `[1, cap]`.
pub fn sample_heavy_tail_degree<R: Rng>(rng: &mut R, cap: usize) -> usize {
    let u: f64 = rng.random();
    if u <= 0.0 || u < 1.0 / cap as f64 {
        return cap.max(1);
    }
    ((1.0 / u).ceil() as usize).clamp(1, cap.max(1))
}

fn circular_distance(a: f64, b: f64, circumference: f64) -> f64 {
    let d = (a - b).abs();
    d.min(circumference - d)
}

/// Splits `n` items into `d` near-equal contiguous blocks.
fn block_ranges(n: usize, d: usize) -> Vec<(usize, usize)> {
    let base = n / d;
    let extra = n % d;
    let mut out = Vec::with_capacity(d);
    let mut start = 0;
    for i in 0..d {
        let len = base + usize::from(i < extra);
        out.push((start, start + len));
        start += len;
    }
    out
}

/// Points on a circle, sorted by position, supporting window queries and
/// kernel-weighted sampling without replacement.
struct CirclePoints {
    /// (position, id) sorted by position.
    sorted: Vec<(f64, u32)>,
    circumference: f64,
}

impl CirclePoints {
    fn new(positions: &[f64], ids: impl Iterator<Item = u32>, circumference: f64) -> CirclePoints {
        let mut sorted: Vec<(f64, u32)> = ids.map(|i| (positions[i as usize], i)).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        CirclePoints {
            sorted,
            circumference,
        }
    }

    fn len(&self) -> usize {
        self.sorted.len()
    }

    /// Ids with position within `radius` of `center` (arc distance), in
    /// sorted-position order.
    fn window(&self, center: f64, radius: f64) -> Vec<u32> {
        if self.sorted.is_empty() {
            return Vec::new();
        }
        if 2.0 * radius >= self.circumference {
            return self.sorted.iter().map(|&(_, i)| i).collect();
        }
        let lo = center - radius;
        let hi = center + radius;
        let mut out = Vec::new();
        let push_range = |a: f64, b: f64, out: &mut Vec<u32>| {
            let start = self.sorted.partition_point(|&(p, _)| p < a);
            let end = self.sorted.partition_point(|&(p, _)| p < b);
            out.extend(self.sorted[start..end].iter().map(|&(_, i)| i));
        };
        if lo < 0.0 {
            push_range(lo + self.circumference, self.circumference, &mut out);
            push_range(0.0, hi, &mut out);
        } else if hi >= self.circumference {
            push_range(lo, self.circumference, &mut out);
            push_range(0.0, hi - self.circumference, &mut out);
        } else {
            push_range(lo, hi, &mut out);
        }
        out
    }

    /// Draws up to `k` distinct ids with probability proportional to
    /// `kernel(distance to center)`, excluding `exclude`.
    fn sample_weighted<R: Rng>(
        &self,
        rng: &mut R,
        center: f64,
        k: usize,
        kernel: &DecayKernel,
        exclude: &dyn Fn(u32) -> bool,
    ) -> Vec<u32> {
        match *kernel {
            DecayKernel::Threshold { radius } => {
                let pool: Vec<u32> = self
                    .window(center, radius)
                    .into_iter()
                    .filter(|&i| !exclude(i))
                    .collect();
                sample_distinct(rng, &pool, k)
            }
            DecayKernel::Step {
                radius,
                inside,
                outside,
            } => {
                if outside == 0.0 {
                    let pool: Vec<u32> = self
                        .window(center, radius)
                        .into_iter()
                        .filter(|&i| !exclude(i))
                        .collect();
                    return sample_distinct(rng, &pool, k);
                }
                let win: HashSet<u32> = self.window(center, radius).into_iter().collect();
                let mut in_pool = Vec::new();
                let mut out_pool = Vec::new();
                for &(_, i) in &self.sorted {
                    if exclude(i) {
                        continue;
                    }
                    if win.contains(&i) {
                        in_pool.push(i);
                    } else {
                        out_pool.push(i);
                    }
                }
                sample_two_tier(rng, in_pool, inside, out_pool, outside, k)
            }
            DecayKernel::Exponential { rate } => {
                // Weighted reservoir (largest u^(1/w) keys).
                let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
                for &(p, i) in &self.sorted {
                    if exclude(i) {
                        continue;
                    }
                    let w = (-rate * circular_distance(p, center, self.circumference)).exp();
                    if w <= 0.0 {
                        continue;
                    }
                    let u: f64 = rng.random();
                    let key = u.ln() / w;
                    if heap.len() < k {
                        heap.push((key, i));
                        if heap.len() == k {
                            heap.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        }
                    } else if k > 0 && key > heap[0].0 {
                        // Replace the smallest key, keeping the vec sorted.
                        let pos = heap.partition_point(|&(x, _)| x < key);
                        heap.remove(0);
                        heap.insert(pos - 1, (key, i));
                    }
                }
                heap.into_iter().map(|(_, i)| i).collect()
            }
        }
    }
}

/// Uniform sample of `min(k, pool.len())` distinct entries from `pool`.
fn sample_distinct<R: Rng>(rng: &mut R, pool: &[u32], k: usize) -> Vec<u32> {
    let k = k.min(pool.len());
    index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

/// Sequential weighted draw from two uniform-weight groups without
/// replacement.
fn sample_two_tier<R: Rng>(
    rng: &mut R,
    mut a: Vec<u32>,
    wa: f64,
    mut b: Vec<u32>,
    wb: f64,
    k: usize,
) -> Vec<u32> {
    let k = k.min(a.len() + b.len());
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let ta = a.len() as f64 * wa;
        let tb = b.len() as f64 * wb;
        let from_a = tb == 0.0 || (ta > 0.0 && rng.random::<f64>() * (ta + tb) < ta);
        let pool = if from_a { &mut a } else { &mut b };
        let idx = rng.random_range(0..pool.len());
        out.push(pool.swap_remove(idx));
    }
    out
}

/// Uniform distinct sample from `0..n` avoiding `exclude`.
fn sample_uniform_excluding<R: Rng>(
    rng: &mut R,
    n: usize,
    k: usize,
    exclude: &HashSet<u32>,
) -> Vec<u32> {
    let avail = n.saturating_sub(exclude.len());
    let k = k.min(avail);
    if k == 0 {
        return Vec::new();
    }
    let mut out: Vec<u32> = Vec::with_capacity(k);
    let mut taken: HashSet<u32> = HashSet::with_capacity(k);
    let mut attempts = 0usize;
    let cap = 20 * k + 100;
    while out.len() < k && attempts < cap {
        attempts += 1;
        let c = rng.random_range(0..n) as u32;
        if exclude.contains(&c) || taken.contains(&c) {
            continue;
        }
        taken.insert(c);
        out.push(c);
    }
    if out.len() < k {
        // Dense fallback over the explicit complement.
        let pool: Vec<u32> = (0..n as u32)
            .filter(|c| !exclude.contains(c) && !taken.contains(c))
            .collect();
        out.extend(sample_distinct(rng, &pool, k - out.len()));
    }
    out
}

fn mislabel<R: Rng>(rng: &mut R, current: u32, num_colors: usize) -> u32 {
    // Uniform over the other colors; a "mislabel" never lands on the
    // current color.
    debug_assert!(num_colors >= 2);
    let c = rng.random_range(0..num_colors as u32 - 1);
    if c >= current {
        c + 1
    } else {
        c
    }
}

/// Sequential model: disjoint conflict-free color blocks, then wilds, then
/// edge misattribution, then label corruption, in that order.
pub fn gen_sequential(params: &GenParams) -> Result<(BipartiteGraph, GroundTruth), GenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = params.num_colors;
    let left = params.left_count;
    let right = params.right_count;

    let wild_count = ((params.omega * right as f64).round() as usize).min(right);
    let tame_count = right - wild_count;

    let left_blocks = block_ranges(left, d);
    let right_blocks = block_ranges(tame_count, d);

    let mut true_left = vec![ColorId(0); left];
    for (color, &(s, e)) in left_blocks.iter().enumerate() {
        for l in s..e {
            true_left[l] = ColorId(color as u32);
        }
    }

    let mut true_right = Vec::with_capacity(right);
    let mut labels = Vec::with_capacity(right);
    let mut edges: Vec<(u32, u32)> = Vec::new();

    // Step 1: one Erdős–Rényi bipartite block per color.
    for (color, &(rs, re)) in right_blocks.iter().enumerate() {
        let (ls, le) = left_blocks[color];
        let block_left = le - ls;
        let p = if block_left == 0 {
            0.0
        } else {
            (params.mean_right_degree / block_left as f64).min(1.0)
        };
        for r in rs..re {
            true_right.push(TrueColor::Color(ColorId(color as u32)));
            labels.push(ColorId(color as u32));
            if block_left == 0 || p == 0.0 {
                continue;
            }
            let deg = Binomial::new(block_left as u64, p)
                .expect("valid binomial")
                .sample(&mut rng) as usize;
            for idx in index::sample(&mut rng, block_left, deg) {
                edges.push(((ls + idx) as u32, r as u32));
            }
        }
    }

    // Step 2: wild nodes wired to uniformly random left nodes.
    let typical_block = left_blocks.first().map(|&(s, e)| e - s).unwrap_or(0);
    let p_wild = if typical_block == 0 {
        0.0
    } else {
        (params.mean_right_degree / typical_block as f64).min(1.0)
    };
    for r in tame_count..right {
        true_right.push(TrueColor::Wild);
        labels.push(ColorId(rng.random_range(0..d as u32)));
        if typical_block == 0 || p_wild == 0.0 || left == 0 {
            continue;
        }
        let deg = Binomial::new(typical_block as u64, p_wild)
            .expect("valid binomial")
            .sample(&mut rng) as usize;
        for idx in index::sample(&mut rng, left, deg.min(left)) {
            edges.push((idx as u32, r as u32));
        }
    }

    // Step 3: rewire each informative edge with probability alpha.
    let mut right_adj: Vec<Vec<u32>> = vec![Vec::new(); right];
    for &(l, r) in &edges {
        right_adj[r as usize].push(l);
    }
    let mut misattr: Vec<(u32, u32)> = Vec::new();
    if params.alpha > 0.0 && left > 0 {
        for r in 0..tame_count {
            let current = std::mem::take(&mut right_adj[r]);
            let mut kept: HashSet<u32> = HashSet::new();
            let mut drawn: Vec<u32> = Vec::new();
            for l in current {
                if rng.random_bool(params.alpha) {
                    drawn.push(rng.random_range(0..left) as u32);
                } else {
                    kept.insert(l);
                }
            }
            for l in drawn {
                misattr.push((l, r as u32));
                kept.insert(l);
            }
            let mut rebuilt: Vec<u32> = kept.into_iter().collect();
            rebuilt.sort_unstable();
            right_adj[r] = rebuilt;
        }
    }

    // Step 4: corrupt labels.
    if d >= 2 {
        for label in labels.iter_mut() {
            if rng.random_bool(params.lambda) {
                *label = ColorId(mislabel(&mut rng, label.0, d));
            }
        }
    }

    let final_edges: Vec<(u32, u32)> = right_adj
        .iter()
        .enumerate()
        .flat_map(|(r, adj)| adj.iter().map(move |&l| (l, r as u32)))
        .collect();
    let graph = BipartiteGraph::build(left, right, d, &final_edges, labels)
        .expect("generator produced a valid graph");
    let truth = GroundTruth::new(true_right, true_left, misattr);
    debug_assert!(truth.validate(&graph).is_ok());
    Ok((graph, truth))
}

/// Circle model: positions on a circle of circumference `d` determine true
/// colors; neighborhoods are distance-biased through the kernel, or uniform
/// for wild nodes.
pub fn gen_circle(params: &GenParams) -> Result<(BipartiteGraph, GroundTruth), GenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = params.num_colors;
    let circ = d as f64;
    let left = params.left_count;
    let right = params.right_count;

    let left_pos: Vec<f64> = (0..left).map(|_| rng.random::<f64>() * circ).collect();
    let right_pos: Vec<f64> = (0..right).map(|_| rng.random::<f64>() * circ).collect();
    let true_left: Vec<ColorId> = left_pos
        .iter()
        .map(|&p| ColorId((p.floor() as usize).min(d - 1) as u32))
        .collect();
    let positional_color: Vec<u32> = right_pos
        .iter()
        .map(|&p| (p.floor() as usize).min(d - 1) as u32)
        .collect();

    let wild: Vec<bool> = (0..right).map(|_| rng.random_bool(params.omega)).collect();

    let mut labels: Vec<ColorId> = positional_color.iter().map(|&c| ColorId(c)).collect();
    if d >= 2 {
        for label in labels.iter_mut() {
            if rng.random_bool(params.lambda) {
                *label = ColorId(mislabel(&mut rng, label.0, d));
            }
        }
    }

    let lefts = CirclePoints::new(&left_pos, 0..left as u32, circ);
    let degree_law = Poisson::new(params.mean_right_degree).expect("positive mean");
    let mut edges: Vec<(u32, u32)> = Vec::new();
    let no_exclude = |_: u32| false;
    for r in 0..right {
        let deg = (degree_law.sample(&mut rng) as usize).min(left);
        if deg == 0 {
            continue;
        }
        let neighbors = if wild[r] {
            sample_distinct(&mut rng, &(0..left as u32).collect::<Vec<_>>(), deg)
        } else {
            lefts.sample_weighted(&mut rng, right_pos[r], deg, &params.kernel, &no_exclude)
        };
        for l in neighbors {
            edges.push((l, r as u32));
        }
    }

    let true_right: Vec<TrueColor> = (0..right)
        .map(|r| {
            if wild[r] {
                TrueColor::Wild
            } else {
                TrueColor::Color(ColorId(positional_color[r]))
            }
        })
        .collect();
    let misattr: Vec<(u32, u32)> = edges
        .iter()
        .copied()
        .filter(|&(l, r)| {
            !wild[r as usize] && true_left[l as usize].0 != positional_color[r as usize]
        })
        .collect();

    let graph = BipartiteGraph::build(left, right, d, &edges, labels)
        .expect("generator produced a valid graph");
    let truth = GroundTruth::new(true_right, true_left, misattr);
    debug_assert!(truth.validate(&graph).is_ok());
    Ok((graph, truth))
}

/// Power-law circle model: colors drawn by preferential attachment, left
/// nodes seeded with a fixed degree floor, right degrees drawn from the
/// heavy-tail law `P(Z > z) = 1/z`.
pub fn gen_power_circle(params: &GenParams) -> Result<(BipartiteGraph, GroundTruth), GenError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let d = params.num_colors;
    let circ = d as f64;
    let left = params.left_count;
    let right = params.right_count;

    // Colors by preferential attachment with smoothing chi; rights first,
    // then lefts, sharing the same evolving counts.
    let mut counts = vec![0usize; d];
    let draw_color = |rng: &mut ChaCha8Rng, counts: &mut Vec<usize>| -> u32 {
        let total: f64 = counts.iter().sum::<usize>() as f64 + params.chi * d as f64;
        let mut t = rng.random::<f64>() * total;
        for (j, &c) in counts.iter().enumerate() {
            let w = c as f64 + params.chi;
            if t < w {
                counts[j] += 1;
                return j as u32;
            }
            t -= w;
        }
        let j = d - 1;
        counts[j] += 1;
        j as u32
    };

    let mut positional_color = Vec::with_capacity(right);
    let mut right_pos = Vec::with_capacity(right);
    for _ in 0..right {
        let c = draw_color(&mut rng, &mut counts);
        positional_color.push(c);
        right_pos.push(c as f64 + rng.random::<f64>());
    }
    let mut true_left = Vec::with_capacity(left);
    let mut left_pos = Vec::with_capacity(left);
    for _ in 0..left {
        let c = draw_color(&mut rng, &mut counts);
        true_left.push(ColorId(c));
        left_pos.push(c as f64 + rng.random::<f64>());
    }

    let wild: Vec<bool> = (0..right).map(|_| rng.random_bool(params.omega)).collect();

    let mut labels: Vec<ColorId> = positional_color.iter().map(|&c| ColorId(c)).collect();
    if d >= 2 {
        for label in labels.iter_mut() {
            if rng.random_bool(params.lambda) {
                *label = ColorId(mislabel(&mut rng, label.0, d));
            }
        }
    }

    let rights_all = CirclePoints::new(&right_pos, 0..right as u32, circ);
    let rights_tame = CirclePoints::new(
        &right_pos,
        (0..right as u32).filter(|&r| !wild[r as usize]),
        circ,
    );
    let lefts_all = CirclePoints::new(&left_pos, 0..left as u32, circ);

    let mut right_adj: Vec<HashSet<u32>> = vec![HashSet::new(); right];
    let mut left_adj: Vec<Vec<u32>> = vec![Vec::new(); left];

    // Step 1: each left node picks a fixed number of right neighbors.
    let mut step1: Vec<(u32, u32)> = Vec::new();
    for l in 0..left as u32 {
        let chosen = rights_all.sample_weighted(
            &mut rng,
            left_pos[l as usize],
            params.left_seed_degree,
            &params.kernel,
            &|_| false,
        );
        for r in chosen {
            if right_adj[r as usize].insert(l) {
                left_adj[l as usize].push(r);
                step1.push((l, r));
            }
        }
    }

    // Wild nodes must not keep color-biased seed edges: each such edge moves
    // to a uniformly random left node, and the original left node redraws a
    // replacement among tame rights so its degree floor is preserved.
    for &(l, r) in &step1 {
        if !wild[r as usize] {
            continue;
        }
        right_adj[r as usize].remove(&l);
        left_adj[l as usize].retain(|&x| x != r);
        let replacement = sample_uniform_excluding(&mut rng, left, 1, &right_adj[r as usize]);
        for nl in replacement {
            right_adj[r as usize].insert(nl);
            left_adj[nl as usize].push(r);
        }
        if rights_tame.len() > 0 {
            let have: HashSet<u32> = left_adj[l as usize].iter().copied().collect();
            let redraw = rights_tame.sample_weighted(
                &mut rng,
                left_pos[l as usize],
                1,
                &params.kernel,
                &|cand| have.contains(&cand),
            );
            let redraw = if redraw.is_empty() {
                // No tame right in kernel range; fall back to a uniform one.
                let pool: Vec<u32> = rights_tame
                    .sorted
                    .iter()
                    .map(|&(_, i)| i)
                    .filter(|c| !have.contains(c))
                    .collect();
                sample_distinct(&mut rng, &pool, 1)
            } else {
                redraw
            };
            for nr in redraw {
                right_adj[nr as usize].insert(l);
                left_adj[l as usize].push(nr);
            }
        }
    }

    // Step 2: top each right node's degree up to a heavy-tail draw.
    for r in 0..right {
        let target = sample_heavy_tail_degree(&mut rng, left);
        let cur = right_adj[r].len();
        if cur >= target {
            continue;
        }
        let need = target - cur;
        let added = if wild[r] {
            sample_uniform_excluding(&mut rng, left, need, &right_adj[r])
        } else {
            lefts_all.sample_weighted(&mut rng, right_pos[r], need, &params.kernel, &|cand| {
                right_adj[r].contains(&cand)
            })
        };
        for l in added {
            right_adj[r].insert(l);
        }
    }

    let mut edges: Vec<(u32, u32)> = Vec::new();
    for (r, adj) in right_adj.iter().enumerate() {
        let mut ls: Vec<u32> = adj.iter().copied().collect();
        ls.sort_unstable();
        for l in ls {
            edges.push((l, r as u32));
        }
    }

    let true_right: Vec<TrueColor> = (0..right)
        .map(|r| {
            if wild[r] {
                TrueColor::Wild
            } else {
                TrueColor::Color(ColorId(positional_color[r]))
            }
        })
        .collect();
    let misattr: Vec<(u32, u32)> = edges
        .iter()
        .copied()
        .filter(|&(l, r)| {
            !wild[r as usize] && true_left[l as usize].0 != positional_color[r as usize]
        })
        .collect();

    let graph = BipartiteGraph::build(left, right, d, &edges, labels)
        .expect("generator produced a valid graph");
    let truth = GroundTruth::new(true_right, true_left, misattr);
    debug_assert!(truth.validate(&graph).is_ok());
    Ok((graph, truth))
}
