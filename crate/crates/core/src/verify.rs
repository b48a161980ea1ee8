//! Executable versions of the kernel estimates: each check computes the best
//! empirical constant at several truncation sizes and calls the constant
//! stable when it settles between the two largest sizes.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{normalization, ortho_table, JacobiParams};
use crate::error::{ensure, Error, Result};
use crate::heat::{HeatKernel, KernelCache, Method};
use crate::paths::{
    hl_maximal, hl_maximal_q, max_window_sum, variation_of, Coefficients,
    LacunarySequence, TimeGrid,
};
use crate::signal::Signal;
use crate::weights::ProbePolicy;

/// Largest ratio between the constants at the two largest sizes that still
/// counts as stable.
pub const STABLE_RATIO: f64 = 1.10;

/// Default time grid of the kernel estimates: 96 log-uniform points.
pub const DEFAULT_GRID: (f64, f64, usize) = (1e-3, 1e2, 96);

/// Slack allowed when checking the variation against its majorant.
pub const MAJORANT_SLACK: f64 = 1e-10;

/// Denominators below this are skipped in the Cotlar ratio.
pub const COTLAR_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Growing,
    Failed,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Growing => "growing",
            Verdict::Failed => "failed",
        }
    }
}

/// Whether a check is expected to come out stable or growing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    Positive,
    Negative,
}

/// A further constant tracked alongside the main one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub constants: Vec<f64>,
    pub stability_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate_name: String,
    pub params: JacobiParams,
    pub control: Control,
    pub sizes: Vec<usize>,
    pub constants: Vec<f64>,
    pub stability_ratio: f64,
    pub verdict: Verdict,
    /// Wall-clock seconds. Kept out of the serialized report so reruns are
    /// byte-identical.
    #[serde(skip)]
    pub runtime: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub secondary: Vec<Series>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl EstimateReport {
    /// Report from per-size constants; the verdict is the worst over the
    /// main and secondary series.
    pub fn from_constants(
        name: &str,
        params: JacobiParams,
        sizes: Vec<usize>,
        constants: Vec<f64>,
        secondary: Vec<Series>,
    ) -> Self {
        let stability_ratio = stability_ratio(&constants);
        let mut verdict = verdict_for(&constants);
        for s in &secondary {
            verdict = worse(verdict, verdict_for(&s.constants));
        }
        Self {
            estimate_name: name.to_string(),
            params,
            control: Control::Positive,
            sizes,
            constants,
            stability_ratio,
            verdict,
            runtime: 0.0,
            secondary,
            diagnostics: BTreeMap::new(),
            message: None,
        }
    }

    pub fn failed(name: &str, params: JacobiParams, sizes: Vec<usize>, err: &Error) -> Self {
        Self {
            estimate_name: name.to_string(),
            params,
            control: Control::Positive,
            sizes,
            constants: Vec::new(),
            stability_ratio: f64::NAN,
            verdict: Verdict::Failed,
            runtime: 0.0,
            secondary: Vec::new(),
            diagnostics: BTreeMap::new(),
            message: Some(err.to_string()),
        }
    }

    pub fn with_control(mut self, control: Control) -> Self {
        self.control = control;
        self
    }

    /// Forces a failed verdict, e.g. when an invariant was violated.
    pub fn fail(&mut self, message: String) {
        self.verdict = Verdict::Failed;
        self.message = Some(message);
    }

    /// The verdict this report's control expects.
    pub fn meets_expectation(&self) -> bool {
        match self.control {
            Control::Positive => self.verdict == Verdict::Stable,
            Control::Negative => self.verdict == Verdict::Growing,
        }
    }

    pub fn largest_constant(&self) -> f64 {
        self.constants.last().copied().unwrap_or(f64::NAN)
    }
}

/// `constant(largest) / constant(second largest)`; `1` when both vanish.
pub fn stability_ratio(constants: &[f64]) -> f64 {
    match constants {
        [.., prev, last] => {
            if *prev == 0.0 && *last == 0.0 {
                1.0
            } else {
                last / prev
            }
        }
        _ => f64::NAN,
    }
}

pub fn verdict_for(constants: &[f64]) -> Verdict {
    if constants.len() < 2 || constants.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Verdict::Failed;
    }
    if stability_ratio(constants) <= STABLE_RATIO {
        Verdict::Stable
    } else {
        Verdict::Growing
    }
}

fn worse(a: Verdict, b: Verdict) -> Verdict {
    match (a, b) {
        (Verdict::Failed, _) | (_, Verdict::Failed) => Verdict::Failed,
        (Verdict::Growing, _) | (_, Verdict::Growing) => Verdict::Growing,
        _ => Verdict::Stable,
    }
}

fn series(name: &str, constants: Vec<f64>) -> Series {
    Series { name: name.to_string(), stability_ratio: stability_ratio(&constants), constants }
}

/// Runs `body`, turning an error into a failed report and recording the
/// wall-clock time.
pub fn timed(
    name: &str,
    params: JacobiParams,
    sizes: &[usize],
    body: impl FnOnce() -> Result<EstimateReport>,
) -> EstimateReport {
    let start = Instant::now();
    let mut report = match body() {
        Ok(r) => r,
        Err(e) => EstimateReport::failed(name, params, sizes.to_vec(), &e),
    };
    report.runtime = start.elapsed().as_secs_f64();
    report
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    ensure!(sizes.len() >= 2, Error::Size("need at least two truncation sizes".into()));
    ensure!(
        sizes.windows(2).all(|w| w[0] < w[1]) && sizes[0] >= 4,
        Error::Size("sizes must be strictly increasing and at least 4".into())
    );
    Ok(())
}

/// Upper estimate of `int_0^inf |g'(t)| dt` from samples of `g` and `g'` on
/// a grid. Each panel takes the larger of the trapezoid rule in `log t` and
/// `|g(t_{i+1}) - g(t_i)|`, which the panel integral always dominates. The
/// tails use `|g'(t)| <= C t^{-3/2}` past `t_max` and the first sample
/// before `t_min`; `g(0)` and `g(inf) = 0` bound them from below.
pub fn derivative_majorant(times: &[f64], g: &[f64], dg: &[f64], g0: f64) -> f64 {
    let last = times.len() - 1;
    let mut total = (times[0] * dg[0].abs()).max((g[0] - g0).abs());
    for i in 0..last {
        let h = (times[i + 1] / times[i]).ln();
        let trap = 0.5 * h * (times[i] * dg[i].abs() + times[i + 1] * dg[i + 1].abs());
        total += trap.max((g[i + 1] - g[i]).abs());
    }
    total + (2.0 * times[last] * dg[last].abs()).max(g[last].abs())
}

/// Kernel and derivative matrices at every grid time.
struct KernelPaths {
    times: Vec<f64>,
    k: Vec<Arc<HeatKernel>>,
    dk: Vec<Arc<HeatKernel>>,
}

impl KernelPaths {
    fn new(cache: &KernelCache, params: JacobiParams, grid: &TimeGrid, size: usize) -> Result<Self> {
        let k = grid
            .times()
            .par_iter()
            .map(|&t| cache.kernel(params, t, size, Method::Quadrature))
            .collect::<Result<Vec<_>>>()?;
        let dk = grid
            .times()
            .par_iter()
            .map(|&t| cache.kernel_dt(params, t, size))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times: grid.times().to_vec(), k, dk })
    }

    fn path(&self, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let g = self.k.iter().map(|k| k.entry(n, m)).collect();
        let dg = self.dk.iter().map(|k| k.entry(n, m)).collect();
        (g, dg)
    }

    /// Path of `K_t(n+1, m) - K_t(n, m)` and its derivative.
    fn difference_path(&self, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
        let g = self.k.iter().map(|k| k.entry(n + 1, m) - k.entry(n, m)).collect();
        let dg = self.dk.iter().map(|k| k.entry(n + 1, m) - k.entry(n, m)).collect();
        (g, dg)
    }
}

#[derive(Default, Clone, Copy)]
struct PairMax {
    majorant: f64,
    variation: f64,
    violations: usize,
    pairs: usize,
    excluded: usize,
}

impl PairMax {
    fn merge(self, o: Self) -> Self {
        Self {
            majorant: self.majorant.max(o.majorant),
            variation: self.variation.max(o.variation),
            violations: self.violations + o.violations,
            pairs: self.pairs + o.pairs,
            excluded: self.excluded + o.excluded,
        }
    }
}

fn finish_pair_report(
    name: &str,
    params: JacobiParams,
    sizes: &[usize],
    cells: Vec<PairMax>,
) -> EstimateReport {
    let majorant: Vec<f64> = cells.iter().map(|c| c.majorant).collect();
    let variation: Vec<f64> = cells.iter().map(|c| c.variation).collect();
    let violations: usize = cells.iter().map(|c| c.violations).sum();
    let mut report = EstimateReport::from_constants(
        name,
        params,
        sizes.to_vec(),
        majorant,
        vec![series("variation", variation)],
    );
    let last = cells.last().copied().unwrap_or_default();
    report.diagnostics.insert("pairs_checked".into(), last.pairs as f64);
    report.diagnostics.insert("majorant_violations".into(), violations as f64);
    if last.excluded > 0 {
        report.diagnostics.insert("pairs_excluded_by_region".into(), last.excluded as f64);
    }
    if violations > 0 {
        report.fail(format!("{violations} kernel paths have variation above the derivative majorant"));
    }
    report
}

/// Kernel decay: `C_N = max |n - m| * ||K_t(n, m)||` over `1 <= n != m <= N`,
/// with the norm bounded by the derivative majorant (main constant) and
/// computed as the exact grid `rho`-variation (secondary constant).
pub fn verify_kernel_decay(
    cache: &KernelCache,
    params: JacobiParams,
    sizes: &[usize],
    grid: &TimeGrid,
    rho: f64,
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    let mut cells = Vec::new();
    for &size in sizes {
        let paths = KernelPaths::new(cache, params, grid, size + 2)?;
        let cell = (1..=size)
            .into_par_iter()
            .map(|n| {
                let mut acc = PairMax::default();
                for m in (1..=size).filter(|&m| m != n) {
                    let (g, dg) = paths.path(n, m);
                    let d = n.abs_diff(m) as f64;
                    let maj = derivative_majorant(&paths.times, &g, &dg, 0.0);
                    let var = variation_of(&g, rho);
                    acc.majorant = acc.majorant.max(d * maj);
                    acc.variation = acc.variation.max(d * var);
                    acc.violations += usize::from(var > maj + MAJORANT_SLACK);
                    acc.pairs += 1;
                }
                acc
            })
            .reduce(PairMax::default, PairMax::merge);
        cells.push(cell);
    }
    Ok(finish_pair_report("kernel_decay", params, sizes, cells))
}

/// Region where the smoothness estimate applies to `(n, l = n + 1, m)`:
/// `|n - m| > 2 |n - l|` and `m/2 <= n, l <= 3m/2`.
pub fn smoothness_region(n: usize, m: usize) -> bool {
    n.abs_diff(m) > 2 && m <= 2 * n && 2 * (n + 1) <= 3 * m
}

/// Kernel smoothness: `C_N = max |n - m|^2 * ||K_t(n+1, m) - K_t(n, m)||`
/// over `1 <= n, m <= N` in `smoothness_region`.
pub fn verify_kernel_smoothness(
    cache: &KernelCache,
    params: JacobiParams,
    sizes: &[usize],
    grid: &TimeGrid,
    rho: f64,
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    let mut cells = Vec::new();
    for &size in sizes {
        let paths = KernelPaths::new(cache, params, grid, size + 2)?;
        let cell = (1..=size)
            .into_par_iter()
            .map(|n| {
                let mut acc = PairMax::default();
                for m in 1..=size {
                    if n.abs_diff(m) <= 2 {
                        continue;
                    }
                    if !smoothness_region(n, m) {
                        acc.excluded += 1;
                        continue;
                    }
                    let (g, dg) = paths.difference_path(n, m);
                    let d2 = (n.abs_diff(m) as f64).powi(2);
                    let maj = derivative_majorant(&paths.times, &g, &dg, 0.0);
                    let var = variation_of(&g, rho);
                    acc.majorant = acc.majorant.max(d2 * maj);
                    acc.variation = acc.variation.max(d2 * var);
                    acc.violations += usize::from(var > maj + MAJORANT_SLACK);
                    acc.pairs += 1;
                }
                acc
            })
            .reduce(PairMax::default, PairMax::merge);
        cells.push(cell);
    }
    Ok(finish_pair_report("kernel_smoothness", params, sizes, cells))
}

/// `C_N = max_{n != m} |n - m|^3 max_t |d/dt K_t(n, m)|` over
/// `0 <= n, m < N`.
pub fn verify_dt_sup(
    cache: &KernelCache,
    params: JacobiParams,
    sizes: &[usize],
    grid: &TimeGrid,
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    let mut constants = Vec::new();
    let mut nonfinite = 0usize;
    for &size in sizes {
        let dk = grid
            .times()
            .par_iter()
            .map(|&t| cache.kernel_dt(params, t, size))
            .collect::<Result<Vec<_>>>()?;
        let mut sup = Array2::<f64>::zeros((size, size));
        for k in &dk {
            for ((i, j), v) in k.entries().indexed_iter() {
                if !v.is_finite() {
                    nonfinite += 1;
                }
                sup[[i, j]] = sup[[i, j]].max(v.abs());
            }
        }
        let c = sup
            .indexed_iter()
            .filter(|((n, m), _)| n != m)
            .map(|((n, m), v)| (n.abs_diff(m) as f64).powi(3) * v)
            .fold(0.0, f64::max);
        constants.push(c);
    }
    let mut report = EstimateReport::from_constants("dt_sup", params, sizes.to_vec(), constants, vec![]);
    if nonfinite > 0 {
        report.fail(format!("{nonfinite} non-finite derivative samples"));
    }
    Ok(report)
}

/// `D_j = b_j (K_{a_{j+1}} - K_{a_j})` for `j = lo..=hi`.
fn lacunary_blocks(
    cache: &KernelCache,
    params: JacobiParams,
    lac: &LacunarySequence,
    coef: &Coefficients,
    (lo, hi): (i64, i64),
    size: usize,
) -> Result<Vec<Array2<f64>>> {
    ensure!(
        lac.contains(lo) && lac.contains(hi + 1),
        Error::Domain(format!(
            "indices {lo}..={} not all in the lacunary sequence {}..={}",
            hi + 1,
            lac.first(),
            lac.last()
        ))
    );
    let kernels = (lo..=hi + 1)
        .into_par_iter()
        .map(|j| cache.kernel(params, lac.get(j)?, size, Method::Quadrature))
        .collect::<Result<Vec<_>>>()?;
    (lo..=hi)
        .map(|j| {
            let i = (j - lo) as usize;
            let b = coef.value(j)?;
            Ok((kernels[i + 1].entries() - kernels[i].entries()) * b)
        })
        .collect()
}

/// `P_i = D_lo + ... + D_{lo+i-1}`, so window `(N1, N2)` is
/// `P_{N2+1-lo} - P_{N1-lo}`.
fn prefix_blocks(blocks: &[Array2<f64>]) -> Vec<Array2<f64>> {
    let shape = blocks[0].raw_dim();
    let mut out = vec![Array2::zeros(shape)];
    for b in blocks {
        let next = out.last().expect("non-empty prefix") + b;
        out.push(next);
    }
    out
}

/// The two kernel constants of one window's `Q_N` on `0..size`.
fn qn_constants(q: &Array2<f64>, size: usize) -> (f64, f64) {
    let mut decay = 0.0f64;
    let mut smooth = 0.0f64;
    for n in 0..size {
        for m in 0..size {
            if n != m {
                decay = decay.max(n.abs_diff(m) as f64 * q[[n, m]].abs());
            }
            if smoothness_region(n, m) {
                let d2 = (n.abs_diff(m) as f64).powi(2);
                smooth = smooth.max(d2 * (q[[n + 1, m]] - q[[n, m]]).abs());
            }
        }
    }
    (decay, smooth)
}

/// Kernel bounds for `Q_N`: `|n - m| |Q_N(n, m)|` (main) and
/// `|n - m|^2 |Q_N(n+1, m) - Q_N(n, m)|` (secondary), pooled over all
/// windows `-M <= N1 < N2 <= M`. The diagnostic `window_uniformity` is the
/// pooled constant at `M` over the one at `M - 1`.
pub fn verify_qn_bounds(
    cache: &KernelCache,
    params: JacobiParams,
    lac: &LacunarySequence,
    coef: &Coefficients,
    m_window: i64,
    sizes: &[usize],
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    ensure!(m_window >= 2, Error::ParameterDomain(format!("M must be >= 2, got {m_window}")));
    let (lo, hi) = (-m_window, m_window);
    let mut decay = Vec::new();
    let mut smooth = Vec::new();
    let mut uniformity = Vec::new();
    for &size in sizes {
        let blocks = lacunary_blocks(cache, params, lac, coef, (lo, hi), size + 1)?;
        let prefix = prefix_blocks(&blocks);
        let windows: Vec<(i64, i64)> =
            (lo..hi).flat_map(|a| (a + 1..=hi).map(move |b| (a, b))).collect();
        let per_window: Vec<((i64, i64), (f64, f64))> = windows
            .par_iter()
            .map(|&(a, b)| {
                let q = &prefix[(b + 1 - lo) as usize] - &prefix[(a - lo) as usize];
                ((a, b), qn_constants(&q, size))
            })
            .collect();
        let pooled = |inner: bool| {
            per_window
                .iter()
                .filter(|((a, b), _)| !inner || (*a > lo && *b < hi))
                .fold((0.0f64, 0.0f64), |acc, (_, c)| (acc.0.max(c.0), acc.1.max(c.1)))
        };
        let (d, s) = pooled(false);
        let (d_in, s_in) = pooled(true);
        decay.push(d);
        smooth.push(s);
        uniformity.push((stability_ratio(&[d_in, d]), stability_ratio(&[s_in, s])));
    }
    let mut report = EstimateReport::from_constants(
        "qn_bounds",
        params,
        sizes.to_vec(),
        decay,
        vec![series("smoothness", smooth)],
    );
    let (ud, us) = *uniformity.last().expect("at least two sizes");
    report.diagnostics.insert("window_uniformity_decay".into(), ud);
    report.diagnostics.insert("window_uniformity_smoothness".into(), us);
    if report.verdict == Verdict::Stable && (ud > STABLE_RATIO || us > STABLE_RATIO) {
        report.verdict = Verdict::Growing;
        report.message = Some("constants grow with the window range".into());
    }
    Ok(report)
}

/// Tail bounds along a `(lambda, lambda^2)`-lacunary sequence with
/// `lambda` its declared ratio:
/// (i) `sqrt(a_k) |sum_{j=k}^{M} v_j (K_{a_{j+1}} - K_{a_j})|` over all
/// `k, n, m` (main constant);
/// (ii) `lambda^{k-l+1} sqrt(a_k) |sum_{j=-M}^{l-1} ...|` over
/// `k >= l > -M` and `|n - m| > c sqrt(a_k)` with `c = region` (secondary).
/// Diagnostics repeat (ii) at `c = 2` and `c = 4`.
pub fn verify_lacunary_tail(
    cache: &KernelCache,
    params: JacobiParams,
    lac: &LacunarySequence,
    coef: &Coefficients,
    m_window: i64,
    sizes: &[usize],
    region: f64,
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    ensure!(lac.pinned(), Error::ParameterDomain("the tail bounds need a pinned sequence".into()));
    ensure!(m_window >= 1, Error::ParameterDomain(format!("M must be >= 1, got {m_window}")));
    let lambda = lac.ratio();
    let (lo, hi) = (-m_window, m_window);
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut sensitivity: BTreeMap<String, f64> = BTreeMap::new();
    for &size in sizes {
        let blocks = lacunary_blocks(cache, params, lac, coef, (lo, hi), size)?;
        let prefix = prefix_blocks(&blocks);
        let total = prefix.last().expect("non-empty prefix");
        // (i): the sum from k to M is total - P_{k-lo}.
        let c1 = (lo..=hi)
            .map(|k| {
                let s = total - &prefix[(k - lo) as usize];
                lac.get(k).map(|a| a.sqrt() * s.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        first.push(c1);
        let second_at = |c: f64| -> Result<f64> {
            let mut best = 0.0f64;
            for k in lo + 1..=hi {
                let ak = lac.get(k)?;
                let reach = c * ak.sqrt();
                for l in lo + 1..=k {
                    let p = &prefix[(l - lo) as usize];
                    let scale = lambda.powi((k - l + 1) as i32) * ak.sqrt();
                    for ((n, m), v) in p.indexed_iter() {
                        if n.abs_diff(m) as f64 > reach {
                            best = best.max(scale * v.abs());
                        }
                    }
                }
            }
            Ok(best)
        };
        second.push(second_at(region)?);
        for c in [2.0, 4.0] {
            sensitivity.insert(format!("region_c{c}"), second_at(c)?);
        }
    }
    let mut report = EstimateReport::from_constants(
        "lacunary_tail",
        params,
        sizes.to_vec(),
        first,
        vec![series("far_region", second)],
    );
    report.diagnostics = sensitivity;
    report.diagnostics.insert("region_c".into(), region);
    Ok(report)
}

/// Per-index data of the local maximal difference operator for one probe:
/// `S_{*,M,loc} f(n)` and `S_{(-M,M),loc} f(n)`.
fn local_differences(
    kernels: &[Arc<HeatKernel>],
    coefs: &[f64],
    f: &Signal,
    size: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut star = Vec::with_capacity(size);
    let mut full = Vec::with_capacity(size);
    let mut heat = vec![0.0; kernels.len()];
    let mut d = vec![0.0; coefs.len()];
    for n in 0..size {
        let (a, b) = (n.div_ceil(2), (3 * n / 2).min(size - 1));
        for (h, k) in heat.iter_mut().zip(kernels) {
            let row = k.entries().row(n);
            *h = (a..=b).map(|m| row[m] * f.get(m)).sum();
        }
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = coefs[j] * (heat[j + 1] - heat[j]);
        }
        star.push(max_window_sum(&d));
        full.push(d.iter().sum());
    }
    (star, full)
}

/// Cotlar inequality: the constant is the largest ratio
/// `S_{*,M,loc} f(n) / (M(S_{(-M,M),loc} f)(n) + M_q f(n))` over probes and
/// indices. Indices with a denominator below `COTLAR_FLOOR` are skipped and
/// counted.
#[allow(clippy::too_many_arguments)]
pub fn verify_cotlar(
    cache: &KernelCache,
    params: JacobiParams,
    m_window: i64,
    lac: &LacunarySequence,
    coef: &Coefficients,
    q: f64,
    probes: &ProbePolicy,
    sizes: &[usize],
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    ensure!(m_window >= 1, Error::ParameterDomain(format!("M must be >= 1, got {m_window}")));
    ensure!(q > 1.0, Error::ParameterDomain(format!("q must exceed 1, got {q}")));
    let (lo, hi) = (-m_window, m_window);
    ensure!(
        lac.contains(lo) && lac.contains(hi + 1),
        Error::Domain("lacunary sequence does not cover the window".into())
    );
    let coefs: Vec<f64> = (lo..=hi).map(|j| coef.value(j)).collect::<Result<_>>()?;
    let mut constants = Vec::new();
    let mut skipped = 0usize;
    for &size in sizes {
        let kernels = (lo..=hi + 1)
            .map(|j| cache.kernel(params, lac.get(j)?, size, Method::Quadrature))
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<(f64, usize)> = probes
            .probes(size)
            .par_iter()
            .map(|f| {
                let (star, full) = local_differences(&kernels, &coefs, f, size);
                let mut best = 0.0f64;
                let mut skip = 0usize;
                let g = Signal::new(full);
                for (n, s) in star.iter().enumerate() {
                    let den = hl_maximal(&g, n) + hl_maximal_q(f, n, q).expect("q > 1");
                    if den < COTLAR_FLOOR {
                        skip += 1;
                    } else {
                        best = best.max(s / den);
                    }
                }
                (best, skip)
            })
            .collect();
        constants.push(cells.iter().map(|c| c.0).fold(0.0, f64::max));
        skipped = cells.iter().map(|c| c.1).sum();
    }
    let mut report = EstimateReport::from_constants("cotlar", params, sizes.to_vec(), constants, vec![]);
    report.diagnostics.insert("skipped_indices".into(), skipped as f64);
    report.diagnostics.insert("q".into(), q);
    Ok(report)
}

/// Endpoint bound for classical Jacobi polynomials: for each degree cap `K`
/// the constant is the max over `1 <= k <= K` and the interior points
/// `x_i = cos(pi (i + 1/2) / x_count)` of
/// `|P_k(x)| sqrt(k) (1-x)^{a/2+1/4} (1+x)^{b/2+1/4}`.
pub fn verify_poly_bound(params: JacobiParams, degree_caps: &[usize], x_count: usize) -> Result<EstimateReport> {
    ensure!(degree_caps.len() >= 2, Error::Size("need at least two degree caps".into()));
    ensure!(
        degree_caps.windows(2).all(|w| w[0] < w[1]) && degree_caps[0] >= 1,
        Error::Size("degree caps must be strictly increasing and positive".into())
    );
    ensure!(x_count >= 2, Error::Size("need at least two x points".into()));
    let top = *degree_caps.last().expect("non-empty caps");
    let (a, b) = (params.alpha(), params.beta());
    let inv_w: Vec<f64> = (0..=top).map(|k| 1.0 / normalization(params, k)).collect();
    // best[k] = max over x for degree k.
    let best = (0..x_count)
        .into_par_iter()
        .map(|i| {
            let x = (std::f64::consts::PI * (i as f64 + 0.5) / x_count as f64).cos();
            let envelope = (1.0 - x).powf(0.5 * a + 0.25) * (1.0 + x).powf(0.5 * b + 0.25);
            let p = ortho_table(params, top, x);
            (0..=top)
                .map(|k| if k == 0 { 0.0 } else { (p[k] * inv_w[k]).abs() * (k as f64).sqrt() * envelope })
                .collect::<Vec<f64>>()
        })
        .reduce(
            || vec![0.0; top + 1],
            |u, v| u.iter().zip(&v).map(|(x, y)| x.max(*y)).collect(),
        );
    let constants: Vec<f64> = degree_caps
        .iter()
        .map(|&cap| best[1..=cap].iter().copied().fold(0.0, f64::max))
        .collect();
    let mut report = EstimateReport::from_constants("poly_bound", params, degree_caps.to_vec(), constants, vec![]);
    report.diagnostics.insert("x_points".into(), x_count as f64);
    Ok(report)
}

/// Entrywise minimum of the kernel over the grid. In the positivity regime a
/// minimum below `-1e-12` fails the report; outside it the value is only
/// reported.
pub fn kernel_positivity(
    cache: &KernelCache,
    params: JacobiParams,
    sizes: &[usize],
    grid: &TimeGrid,
) -> Result<EstimateReport> {
    check_sizes(sizes)?;
    let mut negative_parts = Vec::new();
    let mut minimum = f64::INFINITY;
    for &size in sizes {
        let min = grid
            .times()
            .par_iter()
            .map(|&t| {
                let k = cache.kernel(params, t, size, Method::Quadrature)?;
                Ok(k.entries().iter().copied().fold(f64::INFINITY, f64::min))
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        minimum = minimum.min(min);
        negative_parts.push((-min).max(0.0));
    }
    let mut report = EstimateReport {
        verdict: Verdict::Stable,
        stability_ratio: stability_ratio(&negative_parts),
        ..EstimateReport::from_constants("kernel_positivity", params, sizes.to_vec(), negative_parts, vec![])
    };
    report.diagnostics.insert("min_entry".into(), minimum);
    report
        .diagnostics
        .insert("positivity_regime".into(), f64::from(u8::from(params.positivity_regime())));
    if params.positivity_regime() && minimum < -1e-12 {
        report.fail(format!("negative kernel entry {minimum:e} in the positivity regime"));
    }
    Ok(report)
}
