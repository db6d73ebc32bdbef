//! Offline change point detection with a kernelised mean-change cost.
//!
//! Samples are compared through an RBF kernel whose bandwidth defaults to
//! the median heuristic. Search is bottom-up: start from a fine grid of
//! breakpoints and repeatedly merge the adjacent pair of segments whose
//! merge raises the cost the least, until the total cost would exceed the
//! residual budget `epsilon`.

use thiserror::Error;

use crate::proximity::SignatureSeries;

/// Upper bound on the number of sample pairs the median heuristic looks at.
pub const MEDIAN_MAX_PAIRS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum CpdError {
    #[error("vectors of dimension {0} and {1} cannot be compared")]
    DimensionMismatch(usize, usize),
    #[error("signal has no samples")]
    EmptySignal,
    #[error("signal data of length {len} is not a multiple of dimension {dim}")]
    Ragged { len: usize, dim: usize },
    #[error("segment [{a}, {b}) is empty or outside a signal of length {len}")]
    BadSegment { a: usize, b: usize, len: usize },
    #[error("invalid breakpoints {0:?}")]
    BadBreakpoints(Vec<usize>),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Equal-dimension real vectors `x_1..x_l`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    dim: usize,
    data: Vec<f64>,
}

impl Signal {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, CpdError> {
        if dim == 0 || data.is_empty() {
            return Err(CpdError::EmptySignal);
        }
        if data.len() % dim != 0 {
            return Err(CpdError::Ragged { len: data.len(), dim });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, CpdError> {
        let dim = rows.first().ok_or(CpdError::EmptySignal)?.as_ref().len();
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(CpdError::DimensionMismatch(dim, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    /// One-dimensional signal.
    pub fn from_scalars(values: &[f64]) -> Result<Self, CpdError> {
        Self::new(1, values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    fn is_constant(&self) -> bool {
        let first = self.sample(0);
        self.samples().all(|s| s == first)
    }

    /// Every sample scaled to unit Euclidean norm; zero samples stay zero.
    pub fn normalized(&self) -> Signal {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(self.dim) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Signal { dim: self.dim, data }
    }
}

/// Unit-normalises every row of a signature series.
///
/// A series without columns becomes a one-dimensional all-zero signal so it
/// still has one sample per timestamp.
pub fn normalize(series: &SignatureSeries) -> Signal {
    let rows = series.num_rows().max(1);
    if series.num_cols() == 0 {
        return Signal { dim: 1, data: vec![0.0; rows] };
    }
    Signal {
        dim: series.num_cols(),
        data: series.values().to_vec(),
    }
    .normalized()
}

/// Breakpoints `0 < k_1 < ... < k_K = l`; the last always equals the
/// signal length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segmentation {
    breakpoints: Vec<usize>,
}

impl Segmentation {
    pub fn new(breakpoints: Vec<usize>, len: usize) -> Result<Self, CpdError> {
        let ok = breakpoints.last() == Some(&len)
            && breakpoints.first().is_some_and(|&k| k > 0)
            && breakpoints.windows(2).all(|w| w[0] < w[1]);
        if ok {
            Ok(Self { breakpoints })
        } else {
            Err(CpdError::BadBreakpoints(breakpoints))
        }
    }

    pub fn single(len: usize) -> Self {
        Self { breakpoints: vec![len] }
    }

    pub fn breakpoints(&self) -> &[usize] {
        &self.breakpoints
    }

    /// Breakpoints without the trailing signal length: the change points.
    pub fn change_points(&self) -> &[usize] {
        &self.breakpoints[..self.breakpoints.len() - 1]
    }

    pub fn num_segments(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(0)
            .chain(self.breakpoints.iter().copied())
            .zip(self.breakpoints.iter().copied())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpdConfig {
    pub min_size: usize,
    pub jump: usize,
    /// Residual budget: merging stops before the total cost exceeds it.
    pub epsilon: f64,
    /// RBF bandwidth; the median heuristic is used when absent.
    pub gamma: Option<f64>,
}

impl Default for CpdConfig {
    fn default() -> Self {
        Self { min_size: 1, jump: 1, epsilon: 5.0, gamma: None }
    }
}

impl CpdConfig {
    pub fn validate(&self) -> Result<(), CpdError> {
        if self.min_size == 0 {
            return Err(CpdError::Config("min_size must be at least 1".into()));
        }
        if self.jump == 0 {
            return Err(CpdError::Config("jump must be at least 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(CpdError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g > 0.0) {
                return Err(CpdError::Config(format!("gamma must be finite and positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// `exp(-gamma * ||x1 - x2||^2)`.
pub fn rbf(x1: &[f64], x2: &[f64], gamma: f64) -> Result<f64, CpdError> {
    if x1.len() != x2.len() {
        return Err(CpdError::DimensionMismatch(x1.len(), x2.len()));
    }
    Ok((-gamma * sq_dist(x1, x2)).exp())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bandwidth {
    pub gamma: f64,
    /// All samples identical; `gamma` is the fallback 1.
    pub constant: bool,
}

/// `gamma = 1 / median ||x_i - x_j||^2` over pairs `i < j`.
///
/// Long signals use an evenly strided subset of at most
/// [`MEDIAN_MAX_PAIRS`] pairs. A zero median (or a constant signal) falls
/// back to `gamma = 1`.
pub fn median_heuristic(signal: &Signal) -> Bandwidth {
    let n = signal.len();
    if n < 2 || signal.is_constant() {
        return Bandwidth { gamma: 1.0, constant: true };
    }
    let total = n * (n - 1) / 2;
    let stride = total.div_ceil(MEDIAN_MAX_PAIRS);
    let mut d = Vec::with_capacity(total / stride + 1);
    let mut k = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if k % stride == 0 {
                d.push(sq_dist(signal.sample(i), signal.sample(j)));
            }
            k += 1;
        }
    }
    d.sort_by(f64::total_cmp);
    let m = d.len();
    let median = if m % 2 == 1 { d[m / 2] } else { 0.5 * (d[m / 2 - 1] + d[m / 2]) };
    let gamma = if median > 0.0 { 1.0 / median } else { 1.0 };
    Bandwidth { gamma, constant: false }
}

/// Kernel mean-change cost of `signal[a..b]`:
/// `(b - a) - (1 / (b - a)) Σ_{i,j} rbf(x_i, x_j)`.
pub fn segment_cost(signal: &Signal, a: usize, b: usize, gamma: f64) -> Result<f64, CpdError> {
    if a >= b || b > signal.len() {
        return Err(CpdError::BadSegment { a, b, len: signal.len() });
    }
    let mut sum = 0.0;
    for i in a..b {
        for j in a..b {
            sum += rbf(signal.sample(i), signal.sample(j), gamma)?;
        }
    }
    let m = (b - a) as f64;
    Ok(m - sum / m)
}

/// Sum of segment costs.
pub fn total_cost(signal: &Signal, seg: &Segmentation, gamma: f64) -> Result<f64, CpdError> {
    seg.segments().map(|(a, b)| segment_cost(signal, a, b, gamma)).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CpdOutcome {
    pub segmentation: Segmentation,
    pub gamma: f64,
    pub cost: f64,
    /// Signal was constant; detection was skipped.
    pub constant: bool,
    /// Signal was shorter than `2 * min_size`; detection was skipped.
    pub too_short: bool,
}

/// Gram matrix over the whole signal.
struct Gram {
    n: usize,
    k: Vec<f64>,
}

impl Gram {
    fn new(signal: &Signal, gamma: f64) -> Self {
        let n = signal.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in i + 1..n {
                let v = (-gamma * sq_dist(signal.sample(i), signal.sample(j))).exp();
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        Self { n, k }
    }

    fn block(&self, rows: (usize, usize), cols: (usize, usize)) -> f64 {
        (rows.0..rows.1)
            .map(|i| self.k[i * self.n + cols.0..i * self.n + cols.1].iter().sum::<f64>())
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct Seg {
    start: usize,
    end: usize,
    /// Σ_{i,j in segment} k(x_i, x_j)
    gram_sum: f64,
}

impl Seg {
    fn cost(&self) -> f64 {
        let m = (self.end - self.start) as f64;
        (m - self.gram_sum / m).max(0.0)
    }
}

fn merged(gram: &Gram, l: &Seg, r: &Seg) -> Seg {
    let cross = gram.block((l.start, l.end), (r.start, r.end));
    Seg {
        start: l.start,
        end: r.end,
        gram_sum: l.gram_sum + r.gram_sum + 2.0 * cross,
    }
}

/// Initial grid: multiples of `jump` keeping every segment at least
/// `min_size` long.
fn initial_breakpoints(len: usize, min_size: usize, jump: usize) -> Vec<usize> {
    let mut bkps = Vec::new();
    let mut last = 0;
    for k in (jump..len).step_by(jump) {
        if k - last >= min_size && len - k >= min_size {
            bkps.push(k);
            last = k;
        }
    }
    bkps.push(len);
    bkps
}

/// Bottom-up segmentation under a total-cost budget.
///
/// Ties between equally cheap merges go to the leftmost pair, so the result
/// is deterministic.
pub fn bottom_up(signal: &Signal, cfg: &CpdConfig) -> Result<CpdOutcome, CpdError> {
    cfg.validate()?;
    let n = signal.len();
    let bw = match cfg.gamma {
        Some(gamma) => Bandwidth { gamma, constant: signal.is_constant() },
        None => median_heuristic(signal),
    };
    let trivial = |constant, too_short| CpdOutcome {
        segmentation: Segmentation::single(n),
        gamma: bw.gamma,
        cost: 0.0,
        constant,
        too_short,
    };
    if n < 2 * cfg.min_size {
        log::warn!("signal of length {n} is shorter than 2 * min_size = {}", 2 * cfg.min_size);
        let mut out = trivial(bw.constant, true);
        out.cost = segment_cost(signal, 0, n, bw.gamma)?;
        return Ok(out);
    }
    if bw.constant {
        return Ok(trivial(true, false));
    }

    let gram = Gram::new(signal, bw.gamma);
    let bkps = initial_breakpoints(n, cfg.min_size, cfg.jump);
    let mut segs: Vec<Seg> = std::iter::once(0)
        .chain(bkps.iter().copied())
        .zip(bkps.iter().copied())
        .map(|(a, b)| Seg { start: a, end: b, gram_sum: gram.block((a, b), (a, b)) })
        .collect();
    let mut total: f64 = segs.iter().map(Seg::cost).sum();
    // candidate[i] merges segs[i] and segs[i + 1]
    let mut candidates: Vec<Seg> = segs.windows(2).map(|w| merged(&gram, &w[0], &w[1])).collect();

    while !candidates.is_empty() {
        let (best, gain) = candidates
            .iter()
            .enumerate()
            .map(|(i, m)| (i, m.cost() - segs[i].cost() - segs[i + 1].cost()))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if total + gain > cfg.epsilon {
            break;
        }
        total += gain;
        let m = candidates.remove(best);
        segs[best] = m;
        segs.remove(best + 1);
        if best > 0 {
            candidates[best - 1] = merged(&gram, &segs[best - 1], &segs[best]);
        }
        if best + 1 < segs.len() {
            candidates[best] = merged(&gram, &segs[best], &segs[best + 1]);
        }
    }

    let breakpoints = segs.iter().map(|s| s.end).collect();
    Ok(CpdOutcome {
        segmentation: Segmentation::new(breakpoints, n)?,
        gamma: bw.gamma,
        cost: total.max(0.0),
        constant: false,
        too_short: false,
    })
}
