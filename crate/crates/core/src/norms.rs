//! Empirical weighted norms of the variational operators built from the heat
//! semigroup, swept over truncation sizes.
//!
//! For each size `N` every probe's heat image is sampled once on a nested
//! geometric time grid reaching `N^2`, so the paths see the whole life of the
//! kernel on `0..N`. All operators and weights then reuse those samples.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::JacobiParams;
use crate::error::{ensure, Error, Result};
use crate::heat::{KernelCache, DEFAULT_ORDER_TOL};
use crate::paths::{jumps_of, max_window_sum, variation_of, Coefficients, LacunarySequence, TimeGrid};
use crate::signal::Signal;
use crate::verify::{Control, EstimateReport, Verdict};
use crate::weights::{norm_ratio, weak_ratio, ProbePolicy, WeightSeq};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Variation,
    Oscillation,
    Jump,
    SStar,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::Variation, Operator::Oscillation, Operator::Jump, Operator::SStar];

    pub fn name(&self) -> &'static str {
        match self {
            Operator::Variation => "variation",
            Operator::Oscillation => "oscillation",
            Operator::Jump => "jump",
            Operator::SStar => "s_star",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Weight on `0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightSpec {
    Constant(f64),
    /// `(n + 1)^gamma`
    Power(f64),
    /// Values for `n = 0, 1, ...`; must cover every size used.
    Explicit(Vec<f64>),
}

impl WeightSpec {
    pub fn build(&self, len: usize) -> Result<WeightSeq> {
        match self {
            WeightSpec::Constant(c) => WeightSeq::constant(*c, len),
            WeightSpec::Power(gamma) => WeightSeq::power(*gamma, len),
            WeightSpec::Explicit(values) => {
                ensure!(
                    values.len() >= len,
                    Error::Size(format!("explicit weight has {} entries, need {len}", values.len()))
                );
                WeightSeq::new(values[..len].to_vec())
            }
        }
    }

    pub fn tag(&self) -> String {
        match self {
            WeightSpec::Constant(c) if *c == 1.0 => "unit".into(),
            WeightSpec::Constant(c) => format!("const{c}"),
            WeightSpec::Power(gamma) => format!("pow{gamma}"),
            WeightSpec::Explicit(_) => "explicit".into(),
        }
    }
}

/// Norm being estimated: strong `l^p(w)` or weak `l^1(w)` over unit masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NormMode {
    Strong { p: f64 },
    Weak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormCase {
    pub operator: Operator,
    pub mode: NormMode,
    pub weight: WeightSpec,
    #[serde(default = "positive")]
    pub control: Control,
}

fn positive() -> Control {
    Control::Positive
}

impl NormCase {
    pub fn strong(operator: Operator, p: f64, weight: WeightSpec) -> Self {
        Self { operator, mode: NormMode::Strong { p }, weight, control: Control::Positive }
    }

    pub fn weak(operator: Operator, weight: WeightSpec) -> Self {
        Self { operator, mode: NormMode::Weak, weight, control: Control::Positive }
    }

    pub fn negative(mut self) -> Self {
        self.control = Control::Negative;
        self
    }

    pub fn name(&self) -> String {
        let mode = match self.mode {
            NormMode::Strong { p } => format!("p{p}"),
            NormMode::Weak => "weak11".into(),
        };
        format!("{}_{}_{}", self.operator, mode, self.weight.tag())
    }

    fn p(&self) -> f64 {
        match self.mode {
            NormMode::Strong { p } => p,
            NormMode::Weak => 1.0,
        }
    }
}

/// Shape of the sweep, shared by every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub rho: f64,
    pub t_min: f64,
    pub per_decade: usize,
    /// Oscillation bands are delimited by every `band_stride`-th grid time,
    /// counted down from the top.
    pub band_stride: usize,
    pub lambdas: Vec<f64>,
    pub lacunary_ratio: f64,
    pub m_window: i64,
    pub coefficients: Coefficients,
    pub quadrature_tol: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            rho: 2.5,
            t_min: 1e-3,
            per_decade: 19,
            band_stride: 4,
            lambdas: (-5..=2).map(|k| 2f64.powi(k)).collect(),
            lacunary_ratio: 2.0,
            m_window: 6,
            coefficients: Coefficients::Alternating,
            quadrature_tol: DEFAULT_ORDER_TOL,
        }
    }
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.rho > 2.0, Error::ParameterDomain(format!("rho must exceed 2, got {}", self.rho)));
        ensure!(self.t_min > 0.0, Error::ParameterDomain("t_min must be positive".into()));
        ensure!(self.per_decade >= 1 && self.band_stride >= 1, Error::ParameterDomain("grid density and band stride must be positive".into()));
        ensure!(
            !self.lambdas.is_empty() && self.lambdas.iter().all(|l| *l > 0.0 && l.is_finite()),
            Error::ParameterDomain("jump levels must be positive".into())
        );
        ensure!(self.m_window >= 1, Error::ParameterDomain("M must be positive".into()));
        ensure!(self.quadrature_tol > 0.0, Error::ParameterDomain("quadrature tolerance must be positive".into()));
        ensure!(self.lacunary_ratio > 1.0, Error::ParameterDomain("lacunary ratio must exceed 1".into()));
        Ok(())
    }

    /// Times `t_min 10^{k / per_decade}` for `k = 0, 1, ...` up to the first
    /// one at or past `t_max`. Grids for different `t_max` are prefixes of
    /// one another.
    pub fn grid(&self, t_max: f64) -> Result<TimeGrid> {
        let decades = (t_max / self.t_min).log10();
        let count = (decades * self.per_decade as f64 - 1e-9).ceil().max(1.0) as usize + 1;
        TimeGrid::new((0..count).map(|k| self.t_min * 10f64.powf(k as f64 / self.per_decade as f64)).collect())
    }

    pub fn lacunary(&self) -> Result<LacunarySequence> {
        LacunarySequence::geometric(self.lacunary_ratio, -self.m_window, self.m_window + 1)
    }

}

/// One line of the norms table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub case: String,
    pub operator: Operator,
    pub p: f64,
    pub weight: String,
    pub size: usize,
    pub norm_estimate: f64,
    pub weak11_estimate: f64,
}

/// Operator images of every probe: `images[variant][probe]`. Only the jump
/// operator has several variants, one per level.
pub type Images = Vec<Vec<Signal>>;

/// Heat images `W_t f(n)` stored by probe, then index, then time.
struct HeatSamples {
    size: usize,
    times: usize,
    data: Vec<f64>,
}

impl HeatSamples {
    fn path(&self, probe: usize, n: usize) -> &[f64] {
        let start = (probe * self.size + n) * self.times;
        &self.data[start..start + self.times]
    }
}

/// Images of all probes under `K` (rows of `K` for unit masses, since the
/// kernel is symmetric).
fn apply_all(k: &ndarray::Array2<f64>, probes: &[Signal], deltas: usize) -> Vec<Vec<f64>> {
    probes
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if i < deltas {
                k.row(i).to_vec()
            } else {
                k.dot(&ndarray::ArrayView1::from(f.values())).to_vec()
            }
        })
        .collect()
}

fn heat_samples(
    cache: &KernelCache,
    params: JacobiParams,
    grid: &TimeGrid,
    probes: &[Signal],
    deltas: usize,
    size: usize,
) -> Result<HeatSamples> {
    let engine = cache.engine(params, size)?;
    let times = grid.len();
    let mut data = vec![0.0; probes.len() * size * times];
    for (ti, &t) in grid.times().iter().enumerate() {
        let img = apply_all(engine.kernel(t)?.entries(), probes, deltas);
        data.par_chunks_mut(size * times).zip(&img).for_each(|(chunk, v)| {
            for (n, x) in v.iter().enumerate() {
                chunk[n * times + ti] = *x;
            }
        });
    }
    Ok(HeatSamples { size, times, data })
}

/// `(sum_j (max - min over band j)^2)^{1/2}` with bands delimited by grid
/// indices in decreasing order.
fn oscillation_by_index(values: &[f64], bounds: &[usize]) -> f64 {
    bounds
        .windows(2)
        .map(|w| {
            let band = &values[w[1]..=w[0]];
            let max = band.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = band.iter().copied().fold(f64::INFINITY, f64::min);
            (max - min).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn band_bounds(times: usize, stride: usize) -> Vec<usize> {
    let mut b: Vec<usize> = (0..times).rev().step_by(stride).collect();
    if b.last() != Some(&0) {
        b.push(0);
    }
    b
}

fn path_images(samples: &HeatSamples, probes: usize, op: Operator, s: &SweepSettings) -> Images {
    let variants = if op == Operator::Jump { s.lambdas.len() } else { 1 };
    let bounds = band_bounds(samples.times, s.band_stride);
    let per_probe: Vec<Vec<Vec<f64>>> = (0..probes)
        .into_par_iter()
        .map(|probe| {
            let mut out = vec![Vec::with_capacity(samples.size); variants];
            for n in 0..samples.size {
                let path = samples.path(probe, n);
                match op {
                    Operator::Variation => out[0].push(variation_of(path, s.rho)),
                    Operator::Oscillation => out[0].push(oscillation_by_index(path, &bounds)),
                    Operator::Jump => {
                        for (v, &l) in out.iter_mut().zip(&s.lambdas) {
                            v.push(l * (jumps_of(path, l) as f64).powf(1.0 / s.rho));
                        }
                    }
                    Operator::SStar => unreachable!("S_* is not a path operator"),
                }
            }
            out
        })
        .collect();
    (0..variants)
        .map(|v| per_probe.iter().map(|p| Signal::new(p[v].clone())).collect())
        .collect()
}

fn s_star_images(
    cache: &KernelCache,
    params: JacobiParams,
    probes: &[Signal],
    deltas: usize,
    size: usize,
    s: &SweepSettings,
) -> Result<Images> {
    let lac = s.lacunary()?;
    let coef = &s.coefficients;
    let (lo, hi) = (-s.m_window, s.m_window);
    let engine = cache.engine(params, size)?;
    let heat = (lo..=hi + 1)
        .into_par_iter()
        .map(|j| Ok(apply_all(engine.kernel(lac.get(j)?)?.entries(), probes, deltas)))
        .collect::<Result<Vec<_>>>()?;
    let b: Vec<f64> = (lo..=hi).map(|j| coef.value(j)).collect::<Result<_>>()?;
    let images = (0..probes.len())
        .into_par_iter()
        .map(|probe| {
            let mut d = vec![0.0; b.len()];
            let v = (0..size)
                .map(|n| {
                    for (j, dj) in d.iter_mut().enumerate() {
                        *dj = b[j] * (heat[j + 1][probe][n] - heat[j][probe][n]);
                    }
                    max_window_sum(&d)
                })
                .collect();
            Signal::new(v)
        })
        .collect();
    Ok(vec![images])
}

/// Images of every probe under `op` at truncation `size`.
pub fn operator_images(
    params: JacobiParams,
    op: Operator,
    size: usize,
    settings: &SweepSettings,
    probes: &ProbePolicy,
) -> Result<(Vec<Signal>, Images)> {
    let (signals, mut images) = all_images(params, &[op], size, settings, probes)?;
    Ok((signals, images.pop().expect("one operator")))
}

/// Per-index values of every operator for one signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorRow {
    pub n: usize,
    pub variation: f64,
    pub oscillation: f64,
    /// `lambda * Lambda^{1/rho}` for each level in the settings.
    pub jumps: Vec<f64>,
    pub s_star: f64,
    /// `min over lambda of 2^{1+1/rho} V_rho - lambda Lambda^{1/rho}`.
    pub margin: f64,
}

/// Operator values of `W_t f(n)` on `grid` for `n < f.len()`. The truncation
/// is the signal length; an empty signal gives an empty table.
pub fn operator_table(
    params: JacobiParams,
    f: &Signal,
    grid: &TimeGrid,
    settings: &SweepSettings,
) -> Result<Vec<OperatorRow>> {
    settings.validate()?;
    let size = f.len();
    if size == 0 {
        return Ok(Vec::new());
    }
    let probes = [f.clone()];
    let lac_top = settings.lacunary()?.get(settings.m_window + 1)?;
    let cache = KernelCache::with_tolerance(grid.t_max().max(lac_top), settings.quadrature_tol)?;
    let samples = heat_samples(&cache, params, grid, &probes, 0, size)?;
    let s_star = s_star_images(&cache, params, &probes, 0, size, settings)?;
    let bounds = band_bounds(grid.len(), settings.band_stride);
    let factor = 2f64.powf(1.0 + 1.0 / settings.rho);
    Ok((0..size)
        .map(|n| {
            let path = samples.path(0, n);
            let variation = variation_of(path, settings.rho);
            let jumps: Vec<f64> = settings
                .lambdas
                .iter()
                .map(|&l| l * (jumps_of(path, l) as f64).powf(1.0 / settings.rho))
                .collect();
            let margin = jumps.iter().map(|j| factor * variation - j).fold(f64::INFINITY, f64::min);
            OperatorRow {
                n,
                variation,
                oscillation: oscillation_by_index(path, &bounds),
                jumps,
                s_star: s_star[0][0].get(n),
                margin,
            }
        })
        .collect())
}

type SizeImages = (Vec<Signal>, Vec<Images>);

fn all_images(
    params: JacobiParams,
    ops: &[Operator],
    size: usize,
    settings: &SweepSettings,
    policy: &ProbePolicy,
) -> Result<SizeImages> {
    settings.validate()?;
    ensure!(size >= 2, Error::Size(format!("truncation size must be at least 2, got {size}")));
    let probes = policy.probes(size);
    let deltas = if policy.deltas { size } else { 0 };
    let lac_top = settings.lacunary()?.get(settings.m_window + 1)?;
    let t_top = ((size * size) as f64).max(lac_top);
    let cache = KernelCache::with_tolerance(t_top, settings.quadrature_tol)?;
    let path_ops: Vec<Operator> = ops.iter().copied().filter(|o| *o != Operator::SStar).collect();
    let samples = if path_ops.is_empty() {
        None
    } else {
        let grid = settings.grid((size * size) as f64)?;
        Some(heat_samples(&cache, params, &grid, &probes, deltas, size)?)
    };
    let images = ops
        .iter()
        .map(|&op| match op {
            Operator::SStar => s_star_images(&cache, params, &probes, deltas, size, settings),
            _ => Ok(path_images(samples.as_ref().expect("sampled"), probes.len(), op, settings)),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((probes, images))
}

/// Strong and weak estimates of one case from precomputed images.
fn estimates(
    case: &NormCase,
    probes: &[Signal],
    deltas: usize,
    images: &Images,
    size: usize,
) -> Result<(f64, f64)> {
    let w = case.weight.build(size)?;
    let p = case.p();
    let mut strong = 0.0f64;
    let mut weak = 0.0f64;
    for variant in images {
        for (i, (f, tf)) in probes.iter().zip(variant).enumerate() {
            if let Some(r) = norm_ratio(f, tf, p, &w)? {
                strong = strong.max(r);
            }
            if i < deltas {
                if let Some(r) = weak_ratio(f, tf, &w)? {
                    weak = weak.max(r);
                }
            }
        }
    }
    Ok((strong, weak))
}

/// Runs every case at every size, computing each operator's images once per
/// size. Returns one report per case and the full table.
pub fn theorem_sweep(
    params: JacobiParams,
    cases: &[NormCase],
    sizes: &[usize],
    settings: &SweepSettings,
    policy: &ProbePolicy,
) -> Result<(Vec<EstimateReport>, Vec<NormRow>)> {
    ensure!(sizes.len() >= 2, Error::Size("need at least two truncation sizes".into()));
    ensure!(sizes.windows(2).all(|w| w[0] < w[1]), Error::Size("sizes must increase".into()));
    for c in cases {
        if let NormMode::Strong { p } = c.mode {
            ensure!(p > 1.0 && p.is_finite(), Error::ParameterDomain(format!("p must exceed 1, got {p}")));
        }
    }
    ensure!(
        !cases.iter().any(|c| c.mode == NormMode::Weak) || policy.deltas,
        Error::ParameterDomain("weak-type estimates need unit-mass probes".into())
    );
    let mut ops: Vec<Operator> = Vec::new();
    for c in cases {
        if !ops.contains(&c.operator) {
            ops.push(c.operator);
        }
    }
    // estimates[case][size] = (strong, weak)
    let mut table = vec![Vec::with_capacity(sizes.len()); cases.len()];
    for &size in sizes {
        let (probes, images) = all_images(params, &ops, size, settings, policy)?;
        let deltas = if policy.deltas { size } else { 0 };
        let per_case = cases
            .par_iter()
            .map(|c| {
                let idx = ops.iter().position(|o| *o == c.operator).expect("collected");
                estimates(c, &probes, deltas, &images[idx], size)
            })
            .collect::<Result<Vec<_>>>()?;
        for (row, e) in table.iter_mut().zip(per_case) {
            row.push(e);
        }
    }
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for (case, est) in cases.iter().zip(&table) {
        let constants: Vec<f64> = est
            .iter()
            .map(|&(s, w)| if case.mode == NormMode::Weak { w } else { s })
            .collect();
        let mut report =
            EstimateReport::from_constants(&case.name(), params, sizes.to_vec(), constants, vec![])
                .with_control(case.control);
        report.diagnostics.insert("p".into(), case.p());
        if let WeightSpec::Power(gamma) = &case.weight {
            report.diagnostics.insert("gamma".into(), *gamma);
        }
        reports.push(report);
        for (&size, &(s, w)) in sizes.iter().zip(est) {
            rows.push(NormRow {
                case: case.name(),
                operator: case.operator,
                p: case.p(),
                weight: case.weight.tag(),
                size,
                norm_estimate: s,
                weak11_estimate: w,
            });
        }
    }
    Ok((reports, rows))
}

/// The standard battery: every operator on `l^2`, `l^1.5((n+1)^0.3)` and
/// `l^3((n+1)^1.5)`, and weak `(1,1)` with `(n+1)^{-1/2}`.
///
/// For `alpha < 0` it adds the growing control `l^2((n+1)^2)` for the
/// variation operator. The variation of `t -> K_t(n, 0)` decays like
/// `n^{-alpha-3/2}`, so the squared weighted norm of the image of `delta_0`
/// behaves like `sum n^{-2 alpha - 1}`: a power of `N` only when `alpha < 0`,
/// and too slow to see at these sizes otherwise.
pub fn standard_cases(params: JacobiParams) -> Vec<NormCase> {
    let mut cases = Vec::new();
    for op in Operator::ALL {
        cases.push(NormCase::strong(op, 2.0, WeightSpec::Constant(1.0)));
        cases.push(NormCase::strong(op, 1.5, WeightSpec::Power(0.3)));
        cases.push(NormCase::strong(op, 3.0, WeightSpec::Power(1.5)));
        cases.push(NormCase::weak(op, WeightSpec::Power(-0.5)));
    }
    if params.alpha() < 0.0 {
        cases.push(NormCase::strong(Operator::Variation, 2.0, WeightSpec::Power(2.0)).negative());
    }
    cases
}

/// Overall verdict of a batch: `Failed` if any report failed or missed its
/// expected outcome.
pub fn batch_verdict(reports: &[EstimateReport]) -> Verdict {
    if reports.iter().any(|r| r.verdict == Verdict::Failed) {
        Verdict::Failed
    } else if reports.iter().all(EstimateReport::meets_expectation) {
        Verdict::Stable
    } else {
        Verdict::Growing
    }
}
