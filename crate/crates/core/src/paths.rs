//! Path functionals (variation, oscillation, jumps) on sampled paths, the
//! lacunary difference operators `S_N` and their maximal operator, and the
//! discrete Hardy and Hardy-Littlewood operators that dominate them.

use serde::{Deserialize, Serialize};

use crate::basis::JacobiParams;
use crate::error::{ensure, Error, Result};
use crate::heat::{KernelCache, Method};
use crate::signal::Signal;

/// Longest path `brute_variation` accepts.
pub const BRUTE_MAX_LEN: usize = 16;

// Relative slack when checking declared lacunary ratios.
const RATIO_SLACK: f64 = 1e-12;

/// Strictly increasing positive sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        ensure!(times.len() >= 2, Error::Size("time grid needs at least 2 points".into()));
        ensure!(
            times[0] > 0.0 && times.iter().all(|t| t.is_finite()),
            Error::ParameterDomain("grid times must be positive and finite".into())
        );
        ensure!(
            times.windows(2).all(|w| w[0] < w[1]),
            Error::ParameterDomain("grid times must be strictly increasing".into())
        );
        Ok(Self { times })
    }

    /// `count` log-uniform times from `t_min` to `t_max` inclusive.
    pub fn geometric(t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        ensure!(count >= 2, Error::Size("time grid needs at least 2 points".into()));
        ensure!(
            t_min > 0.0 && t_max > t_min && t_max.is_finite(),
            Error::ParameterDomain(format!("need 0 < t_min < t_max, got {t_min}, {t_max}"))
        );
        let span = (t_max / t_min).ln();
        let last = count - 1;
        let times = (0..count)
            .map(|k| if k == last { t_max } else { t_min * (span * k as f64 / last as f64).exp() })
            .collect();
        Self::new(times)
    }

    /// The grid with the geometric midpoint inserted in every gap.
    pub fn refined(&self) -> Self {
        let mut times = Vec::with_capacity(2 * self.times.len() - 1);
        for w in self.times.windows(2) {
            times.push(w[0]);
            times.push((w[0] * w[1]).sqrt());
        }
        times.push(*self.times.last().expect("non-empty grid"));
        Self { times }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_min(&self) -> f64 {
        self.times[0]
    }

    pub fn t_max(&self) -> f64 {
        self.times[self.times.len() - 1]
    }
}

/// Values of a path `t -> a_t` at the times of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        ensure!(
            grid.len() == values.len(),
            Error::Size(format!("{} values for a grid of {}", values.len(), grid.len()))
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            Error::Numeric("path value is not finite".into())
        );
        Ok(Self { grid, values })
    }

    /// Path on the grid `1, 2, ..., len`; handy when only the value order
    /// matters.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let grid = TimeGrid::new((1..=values.len()).map(|k| k as f64).collect())?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Strictly decreasing positive band endpoints `t_1 > t_2 > ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSequence {
    times: Vec<f64>,
}

impl BandSequence {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        ensure!(times.len() >= 2, Error::Size("band sequence needs at least 2 times".into()));
        ensure!(
            times.iter().all(|&t| t > 0.0 && t.is_finite()),
            Error::ParameterDomain("band times must be positive and finite".into())
        );
        ensure!(
            times.windows(2).all(|w| w[0] > w[1]),
            Error::ParameterDomain("band times must be strictly decreasing".into())
        );
        Ok(Self { times })
    }

    /// `t_j = 2^{-j}` for `j = first..=last`.
    pub fn dyadic(first: i32, last: i32) -> Result<Self> {
        Self::new((first..=last).map(|j| 2f64.powi(-j)).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}

/// Positive times `a_j`, `j = first..=last`, with consecutive ratios at
/// least `ratio` (and at most `ratio^2` when `pinned`).
#[derive(Debug, Clone, PartialEq)]
pub struct LacunarySequence {
    first: i64,
    values: Vec<f64>,
    ratio: f64,
    pinned: bool,
}

impl LacunarySequence {
    pub fn new(first: i64, values: Vec<f64>, ratio: f64, pinned: bool) -> Result<Self> {
        ensure!(
            ratio > 1.0 && ratio.is_finite(),
            Error::ParameterDomain(format!("lacunary ratio must exceed 1, got {ratio}"))
        );
        ensure!(!values.is_empty(), Error::Size("empty lacunary sequence".into()));
        ensure!(
            values.iter().all(|&a| a > 0.0 && a.is_finite()),
            Error::ParameterDomain("lacunary times must be positive and finite".into())
        );
        for w in values.windows(2) {
            let q = w[1] / w[0];
            ensure!(
                q >= ratio * (1.0 - RATIO_SLACK),
                Error::ParameterDomain(format!("consecutive ratio {q} below {ratio}"))
            );
            ensure!(
                !pinned || q <= ratio * ratio * (1.0 + RATIO_SLACK),
                Error::ParameterDomain(format!("consecutive ratio {q} above {}", ratio * ratio))
            );
        }
        Ok(Self { first, values, ratio, pinned })
    }

    /// `a_j = ratio^j` for `j = first..=last`, pinned to `[ratio, ratio^2]`.
    pub fn geometric(ratio: f64, first: i64, last: i64) -> Result<Self> {
        ensure!(first <= last, Error::Size(format!("empty index range {first}..={last}")));
        let values = (first..=last).map(|j| ratio.powi(j as i32)).collect();
        Self::new(first, values, ratio, true)
    }

    pub fn first(&self) -> i64 {
        self.first
    }

    pub fn last(&self) -> i64 {
        self.first + self.values.len() as i64 - 1
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn pinned(&self) -> bool {
        self.pinned
    }

    pub fn contains(&self, j: i64) -> bool {
        j >= self.first && j <= self.last()
    }

    pub fn get(&self, j: i64) -> Result<f64> {
        ensure!(
            self.contains(j),
            Error::Domain(format!("index {j} outside {}..={}", self.first, self.last()))
        );
        Ok(self.values[(j - self.first) as usize])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Summation window `N1 <= j <= N2` with `N1 < N2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceWindow {
    n1: i64,
    n2: i64,
}

impl DifferenceWindow {
    pub fn new(n1: i64, n2: i64) -> Result<Self> {
        ensure!(n1 < n2, Error::ParameterDomain(format!("window needs N1 < N2, got {n1}, {n2}")));
        Ok(Self { n1, n2 })
    }

    pub fn n1(&self) -> i64 {
        self.n1
    }

    pub fn n2(&self) -> i64 {
        self.n2
    }
}

/// Bounded coefficients `b_j` multiplying the semigroup differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coefficients {
    Ones,
    /// `(-1)^j`
    Alternating,
    Explicit { first: i64, values: Vec<f64> },
}

impl Coefficients {
    pub fn value(&self, j: i64) -> Result<f64> {
        match self {
            Coefficients::Ones => Ok(1.0),
            Coefficients::Alternating => Ok(if j.rem_euclid(2) == 0 { 1.0 } else { -1.0 }),
            Coefficients::Explicit { first, values } => {
                let k = j - first;
                ensure!(
                    k >= 0 && (k as usize) < values.len(),
                    Error::Domain(format!("no coefficient for index {j}"))
                );
                Ok(values[k as usize])
            }
        }
    }
}

/// Which part of the signal the maximal difference operator sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cutoff {
    Full,
    /// `m` with `n/2 <= m <= 3n/2`
    Local,
    /// the complement of the local part
    Global,
}

impl Cutoff {
    pub fn keeps(&self, n: usize, m: usize) -> bool {
        let local = n <= 2 * m && 2 * m <= 3 * n;
        match self {
            Cutoff::Full => true,
            Cutoff::Local => local,
            Cutoff::Global => !local,
        }
    }
}

fn check_rho(rho: f64) -> Result<()> {
    ensure!(
        rho > 1.0 && rho.is_finite(),
        Error::ParameterDomain(format!("rho must exceed 1, got {rho}"))
    );
    Ok(())
}

/// Endpoints plus strict local extrema, after merging equal neighbours.
/// For `rho >= 1` some optimal chain uses only these points: an interior
/// chain point on a monotone run either lies between its chain neighbours
/// (drop it, by superadditivity of `z^rho`) or is a chain extremum (slide it
/// along the run, which only enlarges both increments).
fn turning_points(values: &[f64]) -> Vec<f64> {
    let mut merged: Vec<f64> = Vec::with_capacity(values.len());
    for &v in values {
        if merged.last() != Some(&v) {
            merged.push(v);
        }
    }
    if merged.len() <= 2 {
        return merged;
    }
    let mut out = Vec::with_capacity(merged.len());
    out.push(merged[0]);
    for w in merged.windows(3) {
        if (w[1] - w[0]) * (w[2] - w[1]) < 0.0 {
            out.push(w[1]);
        }
    }
    out.push(merged[merged.len() - 1]);
    out
}

/// `max_i V[i]` with `V[i] = max_{j<i} V[j] + |a_i - a_j|^rho`.
fn chain_dp(values: &[f64], rho: f64) -> f64 {
    let mut best = vec![0.0f64; values.len()];
    let mut top = 0.0f64;
    for i in 1..values.len() {
        let mut v = 0.0f64;
        for j in 0..i {
            v = v.max(best[j] + (values[i] - values[j]).abs().powf(rho));
        }
        best[i] = v;
        top = top.max(v);
    }
    top
}

/// Exact `rho`-variation of the sampled path: the supremum over all
/// increasing subsequences of `(sum |a_{j+1} - a_j|^rho)^{1/rho}`.
pub fn rho_variation(path: &SampledPath, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(variation_of(&path.values, rho))
}

pub(crate) fn variation_of(values: &[f64], rho: f64) -> f64 {
    chain_dp(&turning_points(values), rho).powf(1.0 / rho)
}

/// The same quantity as `rho_variation` by dynamic programming over every
/// grid point, without compression.
pub fn rho_variation_dense(path: &SampledPath, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(chain_dp(&path.values, rho).powf(1.0 / rho))
}

/// Exhaustive maximum over all subsequences; a test oracle.
pub fn brute_variation(path: &SampledPath, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let len = path.len();
    ensure!(
        len <= BRUTE_MAX_LEN,
        Error::Size(format!("brute force limited to {BRUTE_MAX_LEN} points, got {len}"))
    );
    let mut best = 0.0f64;
    for mask in 1u32..(1 << len) {
        let mut prev: Option<f64> = None;
        let mut sum = 0.0;
        for (i, &v) in path.values.iter().enumerate() {
            if mask & (1 << i) != 0 {
                if let Some(p) = prev {
                    sum += (v - p).abs().powf(rho);
                }
                prev = Some(v);
            }
        }
        best = best.max(sum);
    }
    Ok(best.powf(1.0 / rho))
}

/// `(sum_j sup |a_e - a_e'|^2)^{1/2}`, the sup over grid times `e, e'` in
/// `[t_{j+1}, t_j]`.
pub fn oscillation(path: &SampledPath, bands: &BandSequence) -> Result<f64> {
    let times = path.grid.times();
    let (lo, hi) = (path.grid.t_min(), path.grid.t_max());
    let b = bands.times();
    ensure!(
        b[0] <= hi && b[b.len() - 1] >= lo,
        Error::Domain(format!(
            "bands [{}, {}] outside the grid span [{lo}, {hi}]",
            b[b.len() - 1],
            b[0]
        ))
    );
    let mut sum = 0.0;
    for w in b.windows(2) {
        let (top, bottom) = (w[0], w[1]);
        let start = times.partition_point(|&t| t < bottom);
        let end = times.partition_point(|&t| t <= top);
        if end >= start + 2 {
            let band = &path.values[start..end];
            let max = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = band.iter().copied().fold(f64::INFINITY, f64::min);
            sum += (max - min).powi(2);
        }
    }
    Ok(sum.sqrt())
}

/// Largest number of disjoint grid pairs `s_1 < t_1 <= s_2 < t_2 <= ...`
/// with `|a_{t_i} - a_{s_i}| > lambda`. The greedy scan closes each pair at
/// the earliest possible time, which is optimal.
pub fn jump_count(path: &SampledPath, lambda: f64) -> Result<usize> {
    ensure!(
        lambda > 0.0 && lambda.is_finite(),
        Error::ParameterDomain(format!("lambda must be positive, got {lambda}"))
    );
    Ok(jumps_of(&path.values, lambda))
}

pub(crate) fn jumps_of(values: &[f64], lambda: f64) -> usize {
    let Some(&first) = values.first() else {
        return 0;
    };
    let (mut lo, mut hi) = (first, first);
    let mut count = 0;
    for &v in &values[1..] {
        if v - lo > lambda || hi - v > lambda {
            count += 1;
            lo = v;
            hi = v;
        } else {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    count
}

/// Exhaustive pairing search; a test oracle for `jump_count`.
pub fn brute_jump_count(path: &SampledPath, lambda: f64) -> Result<usize> {
    ensure!(
        lambda > 0.0 && lambda.is_finite(),
        Error::ParameterDomain(format!("lambda must be positive, got {lambda}"))
    );
    ensure!(
        path.len() <= BRUTE_MAX_LEN,
        Error::Size(format!("brute force limited to {BRUTE_MAX_LEN} points"))
    );
    fn best(values: &[f64], from: usize, lambda: f64) -> usize {
        let mut top = 0;
        for s in from..values.len() {
            for t in s + 1..values.len() {
                if (values[t] - values[s]).abs() > lambda {
                    top = top.max(1 + best(values, t, lambda));
                }
            }
        }
        top
    }
    Ok(best(&path.values, 0, lambda))
}

/// `lambda * jump_count^{1/rho}`.
pub fn jump_functional(path: &SampledPath, lambda: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    let count = jump_count(path, lambda)?;
    Ok(lambda * (count as f64).powf(1.0 / rho))
}

/// `t -> W_t f(n)` sampled on the grid.
pub fn heat_path(
    cache: &KernelCache,
    params: JacobiParams,
    f: &Signal,
    n: usize,
    grid: &TimeGrid,
    size: usize,
) -> Result<SampledPath> {
    ensure!(f.len() <= size, Error::Truncation { end: f.len(), size });
    ensure!(n < size, Error::Size(format!("index {n} outside truncation {size}")));
    let values = grid
        .times()
        .iter()
        .map(|&t| {
            let k = cache.kernel(params, t, size, Method::Quadrature)?;
            Ok(row_dot(k.entries().row(n).as_slice().expect("row-major kernel"), f, |_| true))
        })
        .collect::<Result<Vec<f64>>>()?;
    SampledPath::new(grid.clone(), values)
}

fn row_dot(row: &[f64], f: &Signal, keep: impl Fn(usize) -> bool) -> f64 {
    f.values()
        .iter()
        .zip(row)
        .enumerate()
        .filter(|(m, _)| keep(*m))
        .map(|(_, (a, b))| a * b)
        .sum()
}

/// Per-`j` differences `b_j (W_{a_{j+1}} - W_{a_j}) (f cutoff)(n)` for
/// `j = lo..=hi`.
#[allow(clippy::too_many_arguments)]
fn lacunary_differences(
    cache: &KernelCache,
    params: JacobiParams,
    lac: &LacunarySequence,
    bcoef: &Coefficients,
    (lo, hi): (i64, i64),
    f: &Signal,
    n: usize,
    size: usize,
    cutoff: Cutoff,
) -> Result<Vec<f64>> {
    ensure!(f.len() <= size, Error::Truncation { end: f.len(), size });
    ensure!(n < size, Error::Size(format!("index {n} outside truncation {size}")));
    ensure!(
        lac.contains(lo) && lac.contains(hi + 1),
        Error::Domain(format!(
            "window {lo}..={hi} needs times a_{lo}..a_{} but the sequence covers {}..={}",
            hi + 1,
            lac.first(),
            lac.last()
        ))
    );
    let heat = |j: i64| -> Result<f64> {
        let k = cache.kernel(params, lac.get(j)?, size, Method::Quadrature)?;
        let row = k.entries().row(n);
        Ok(row_dot(row.as_slice().expect("row-major kernel"), f, |m| cutoff.keeps(n, m)))
    };
    let mut prev = heat(lo)?;
    let mut out = Vec::with_capacity((hi - lo + 1) as usize);
    for j in lo..=hi {
        let next = heat(j + 1)?;
        out.push(bcoef.value(j)? * (next - prev));
        prev = next;
    }
    Ok(out)
}

/// `S_N f(n) = sum_{j=N1}^{N2} b_j (W_{a_{j+1}} f(n) - W_{a_j} f(n))`.
#[allow(clippy::too_many_arguments)]
pub fn difference_sum(
    cache: &KernelCache,
    params: JacobiParams,
    window: DifferenceWindow,
    lac: &LacunarySequence,
    bcoef: &Coefficients,
    f: &Signal,
    n: usize,
    size: usize,
) -> Result<f64> {
    let d = lacunary_differences(
        cache,
        params,
        lac,
        bcoef,
        (window.n1, window.n2),
        f,
        n,
        size,
        Cutoff::Full,
    )?;
    Ok(d.iter().sum())
}

/// The kernel `Q_N(n, m) = sum_j b_j (K_{a_{j+1}}(n, m) - K_{a_j}(n, m))` of
/// `difference_sum`.
#[allow(clippy::too_many_arguments)]
pub fn qn_kernel(
    cache: &KernelCache,
    params: JacobiParams,
    window: DifferenceWindow,
    lac: &LacunarySequence,
    bcoef: &Coefficients,
    n: usize,
    m: usize,
    size: usize,
) -> Result<f64> {
    ensure!(m < size, Error::Size(format!("index {m} outside truncation {size}")));
    difference_sum(cache, params, window, lac, bcoef, &Signal::delta(m), n, size)
}

/// `max |S_N f(n)|` over windows `lo <= N1 < N2 <= hi`, with `f` restricted
/// by `cutoff` around `n`.
#[allow(clippy::too_many_arguments)]
pub fn s_star_range(
    cache: &KernelCache,
    params: JacobiParams,
    (lo, hi): (i64, i64),
    lac: &LacunarySequence,
    bcoef: &Coefficients,
    f: &Signal,
    n: usize,
    size: usize,
    cutoff: Cutoff,
) -> Result<f64> {
    ensure!(lo < hi, Error::ParameterDomain(format!("no window fits in {lo}..={hi}")));
    let d = lacunary_differences(cache, params, lac, bcoef, (lo, hi), f, n, size, cutoff)?;
    Ok(max_window_sum(&d))
}

/// `max |sum_{j=N1}^{N2} d_j|` over `N1 < N2`, by prefix sums.
pub(crate) fn max_window_sum(d: &[f64]) -> f64 {
    let mut prefix = Vec::with_capacity(d.len() + 1);
    prefix.push(0.0);
    for &v in d {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    let mut best = 0.0f64;
    for i in 0..d.len() {
        for k in i + 2..=d.len() {
            best = best.max((prefix[k] - prefix[i]).abs());
        }
    }
    best
}

/// `S_{*,M}` with windows inside `[-M, M]`.
#[allow(clippy::too_many_arguments)]
pub fn s_star(
    cache: &KernelCache,
    params: JacobiParams,
    m_window: i64,
    lac: &LacunarySequence,
    bcoef: &Coefficients,
    f: &Signal,
    n: usize,
    size: usize,
    cutoff: Cutoff,
) -> Result<f64> {
    ensure!(m_window > 0, Error::ParameterDomain(format!("M must be positive, got {m_window}")));
    s_star_range(cache, params, (-m_window, m_window), lac, bcoef, f, n, size, cutoff)
}

/// `(1/n) sum_{m<n} |f(m)|`; zero at `n = 0`, where the average is empty.
pub fn hardy_upper(f: &Signal, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    f.values().iter().take(n).map(|v| v.abs()).sum::<f64>() / n as f64
}

/// `sum_{m>n} |f(m)| / m`.
pub fn hardy_lower(f: &Signal, n: usize) -> f64 {
    f.values()
        .iter()
        .enumerate()
        .skip(n + 1)
        .map(|(m, v)| v.abs() / m as f64)
        .sum()
}

/// Centered maximal average of `g` over balls `{m >= 0 : |m - n| < r}`.
fn maximal_of(g: &[f64], n: usize) -> f64 {
    let len = g.len();
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0.0);
    for &v in g {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    let sum = |a: usize, b: usize| prefix[b.min(len)] - prefix[a.min(len)];
    // Past this radius the ball holds the whole support and only grows.
    let r_max = (n + 1).max(len.saturating_sub(n)).max(1);
    let mut best = 0.0f64;
    for r in 1..=r_max {
        let a = (n + 1).saturating_sub(r);
        let b = n + r;
        best = best.max(sum(a, b) / (b - a) as f64);
    }
    best
}

/// Centered Hardy-Littlewood maximal function on the non-negative integers.
pub fn hl_maximal(f: &Signal, n: usize) -> f64 {
    let g: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    maximal_of(&g, n)
}

/// `M_q f = (M |f|^q)^{1/q}`.
pub fn hl_maximal_q(f: &Signal, n: usize, q: f64) -> Result<f64> {
    ensure!(q > 1.0 && q.is_finite(), Error::ParameterDomain(format!("q must exceed 1, got {q}")));
    let g: Vec<f64> = f.values().iter().map(|v| v.abs().powf(q)).collect();
    Ok(maximal_of(&g, n).powf(1.0 / q))
}
