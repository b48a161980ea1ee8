//! The heat semigroup `W_t = e^{tJ}` and its kernel
//!
//! ```text
//! K_t(n, m) = int e^{-t(1-x)} p_n(x) p_m(x) dmu(x)
//! ```
//!
//! computed two ways: Gauss-Jacobi quadrature on a table of orthonormal
//! polynomial values, and diagonalization of a larger finite section of `J`.
//! The two are independent and serve as oracles for each other.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::basis::{build_generator, ortho_poly_at_one, CoefficientCache, JacobiParams};
use crate::eigen::{eigen_tridiagonal, Vectors};
use crate::error::{ensure, Error, Result};
use crate::quadrature::{auto_order, build_rule, QuadratureRule};
use crate::signal::Signal;

/// Default absolute tolerance handed to `auto_order`.
pub const DEFAULT_ORDER_TOL: f64 = 1e-12;

/// Ratio between the spectral truncation and the requested block size.
pub const SPECTRAL_RATIO: usize = 4;

// e^{-745} underflows to zero, so nodes beyond this exponent contribute nothing.
const EXP_CUTOFF: f64 = 745.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Quadrature,
    Spectral,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::Spectral => "spectral",
        }
    }
}

/// The `size x size` block of `K_t` with the discretization used to get it.
#[derive(Debug, Clone)]
pub struct HeatKernel {
    params: JacobiParams,
    t: f64,
    method: Method,
    // Quadrature order or spectral truncation size; 0 for the exact t = 0 identity.
    resolution: usize,
    entries: Array2<f64>,
}

impl HeatKernel {
    pub fn params(&self) -> JacobiParams {
        self.params
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Quadrature order or spectral truncation size.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn entry(&self, n: usize, m: usize) -> f64 {
        self.entries[[n, m]]
    }

    /// `W_t f` restricted to `0..size`.
    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        let size = self.size();
        ensure!(f.len() <= size, Error::Truncation { end: f.len(), size });
        let v = Array1::from(f.resized(size));
        Ok(Signal::new(self.entries.dot(&v).to_vec()))
    }

    fn identity(params: JacobiParams, method: Method, size: usize) -> Self {
        Self { params, t: 0.0, method, resolution: 0, entries: Array2::eye(size) }
    }
}

fn check_time(t: f64) -> Result<()> {
    ensure!(
        t > 0.0 && t.is_finite(),
        Error::ParameterDomain(format!("time must be positive and finite, got {t}"))
    );
    Ok(())
}

fn check_rule(params: JacobiParams, rule: &QuadratureRule, n_max: usize) -> Result<()> {
    ensure!(
        rule.params() == params,
        Error::ParameterDomain("quadrature rule built for different parameters".into())
    );
    ensure!(
        rule.order() > n_max,
        Error::Convergence(format!(
            "quadrature order {} cannot resolve index {n_max}",
            rule.order()
        ))
    );
    Ok(())
}

fn entry_with(
    params: JacobiParams,
    t: f64,
    n: usize,
    m: usize,
    rule: &QuadratureRule,
    factor: impl Fn(f64) -> f64,
) -> Result<f64> {
    check_time(t)?;
    let top = n.max(m);
    check_rule(params, rule, top)?;
    let cache = CoefficientCache::new(params, top + 1);
    let mut p = vec![0.0; top + 1];
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let s = t * (1.0 - x);
        if s > EXP_CUTOFF {
            continue;
        }
        cache.fill_ortho(x, &mut p);
        acc += w * factor(x) * (-s).exp() * (p[n] * p[m]);
    }
    Ok(acc)
}

/// `K_t(n, m)` by the given rule.
pub fn kernel_entry(
    params: JacobiParams,
    t: f64,
    n: usize,
    m: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    entry_with(params, t, n, m, rule, |_| 1.0)
}

/// `d/dt K_t(n, m) = -int (1-x) e^{-t(1-x)} p_n p_m dmu`.
pub fn kernel_dt_entry(
    params: JacobiParams,
    t: f64,
    n: usize,
    m: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    entry_with(params, t, n, m, rule, |x| -(1.0 - x))
}

/// Quadrature rule plus the table of `p_n` at its nodes, for assembling many
/// kernel matrices of one size.
#[derive(Debug, Clone)]
pub struct KernelEngine {
    params: JacobiParams,
    rule: QuadratureRule,
    // table[[q, n]] = p_n(x_q)
    table: Array2<f64>,
}

impl KernelEngine {
    /// Engine for indices `0..size` and times up to `t_max`, with the order
    /// picked by `auto_order`.
    pub fn new(params: JacobiParams, size: usize, t_max: f64, tol: f64) -> Result<Self> {
        ensure!(size >= 1, Error::Size("kernel size must be >= 1".into()));
        let order = auto_order(params, size - 1, t_max, tol)?;
        Self::with_rule(build_rule(params, order)?, size)
    }

    pub fn with_rule(rule: QuadratureRule, size: usize) -> Result<Self> {
        ensure!(size >= 1, Error::Size("kernel size must be >= 1".into()));
        let params = rule.params();
        check_rule(params, &rule, size - 1)?;
        let cache = CoefficientCache::new(params, size);
        let mut table = Array2::zeros((rule.order(), size));
        for (q, mut row) in table.axis_iter_mut(Axis(0)).enumerate() {
            cache.fill_ortho(rule.nodes()[q], row.as_slice_mut().expect("row-major table"));
        }
        ensure!(
            table.iter().all(|v| v.is_finite()),
            Error::Numeric("orthonormal table overflowed".into())
        );
        Ok(Self { params, rule, table })
    }

    pub fn params(&self) -> JacobiParams {
        self.params
    }

    pub fn size(&self) -> usize {
        self.table.ncols()
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    /// `P^T diag(d) P` for the non-negative node factors `d`; nodes with a
    /// zero factor are skipped. The result is symmetrized exactly.
    fn gram(&self, d: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        let (x, w) = (self.rule.nodes(), self.rule.weights());
        let keep: Vec<(usize, f64)> = (0..x.len())
            .map(|q| (q, d(x[q], w[q])))
            .filter(|&(_, v)| v > 0.0)
            .collect();
        let mut s = Array2::zeros((keep.len(), self.size()));
        for (r, &(q, v)) in keep.iter().enumerate() {
            let root = v.sqrt();
            s.row_mut(r).assign(&self.table.row(q).mapv(|p| p * root));
        }
        let mut k = s.t().dot(&s);
        let n = k.nrows();
        for i in 0..n {
            for j in 0..i {
                k[[i, j]] = k[[j, i]];
            }
        }
        k
    }

    pub fn kernel(&self, t: f64) -> Result<HeatKernel> {
        if t == 0.0 {
            return Ok(HeatKernel::identity(self.params, Method::Quadrature, self.size()));
        }
        check_time(t)?;
        let mut entries = self.gram(|x, w| {
            let s = t * (1.0 - x);
            if s > EXP_CUTOFF { 0.0 } else { w * (-s).exp() }
        });
        clamp_to_bound(&mut entries, t);
        Ok(HeatKernel {
            params: self.params,
            t,
            method: Method::Quadrature,
            resolution: self.order(),
            entries,
        })
    }

    /// The matrix of `d/dt K_t(n, m)`.
    pub fn kernel_dt(&self, t: f64) -> Result<Array2<f64>> {
        check_time(t)?;
        let g = self.gram(|x, w| {
            let s = t * (1.0 - x);
            if s > EXP_CUTOFF { 0.0 } else { w * (1.0 - x) * (-s).exp() }
        });
        Ok(-g)
    }

    /// Rows `0..=n_max` of `K_t` only, as a `(n_max + 1) x size` array.
    pub fn kernel_rows(&self, t: f64, n_max: usize) -> Result<Array2<f64>> {
        check_time(t)?;
        ensure!(
            n_max < self.size(),
            Error::Size(format!("row {n_max} outside kernel of size {}", self.size()))
        );
        let (x, w) = (self.rule.nodes(), self.rule.weights());
        let d = Array1::from_iter(x.iter().zip(w).map(|(&x, &w)| {
            let s = t * (1.0 - x);
            if s > EXP_CUTOFF { 0.0 } else { w * (-s).exp() }
        }));
        let left = self.table.slice(ndarray::s![.., 0..=n_max]).to_owned();
        let scaled = &left * &d.insert_axis(Axis(1));
        let mut rows = scaled.t().dot(&self.table);
        clamp_to_bound(&mut rows, t);
        Ok(rows)
    }
}

/// Upper bound on `|K_t(n, m)|` for `|n - m| = d`. Since `J + I` has norm at
/// most 1 and bandwidth 1, `|K_t(n, m)| <= e^{-t} sum_{k >= d} t^k / k!`, the
/// Poisson tail, bounded here by its first term over `1 - t / (d + 1)`.
pub fn off_diagonal_bound(t: f64, d: usize) -> f64 {
    let df = d as f64;
    if d == 0 || df + 1.0 <= t {
        return 1.0;
    }
    let ln = df * t.ln() - ln_gamma(df + 1.0) - t - (1.0 - t / (df + 1.0)).ln();
    // Slack covers the rounding in the log-space evaluation.
    (ln.exp() * (1.0 + 1e-10)).min(1.0)
}

/// Clamps entries whose true values lie below the rounding floor. With
/// `|K| <= B` known, clamping to `[-B, B]` never moves an entry away from the
/// exact value, and it removes the noise that dominates far off-diagonal
/// entries.
fn clamp_to_bound(k: &mut Array2<f64>, t: f64) {
    let width = k.nrows().max(k.ncols());
    let mut bounds = Vec::with_capacity(width);
    for d in 0..width {
        let b = off_diagonal_bound(t, d);
        bounds.push(b);
        if b == 0.0 {
            break;
        }
    }
    for ((i, j), v) in k.indexed_iter_mut() {
        let b = bounds.get(i.abs_diff(j)).copied().unwrap_or(0.0);
        *v = v.clamp(-b, b);
    }
}

/// Kernel block from the spectral decomposition of the `truncation x
/// truncation` section of `J`: `K = V e^{t Lambda} V^T`, top-left corner.
pub fn spectral_kernel(
    params: JacobiParams,
    t: f64,
    size: usize,
    truncation: usize,
) -> Result<HeatKernel> {
    ensure!(size >= 1, Error::Size("kernel size must be >= 1".into()));
    ensure!(
        truncation >= size && truncation >= 2,
        Error::Size(format!("truncation {truncation} smaller than block {size}"))
    );
    if t == 0.0 {
        return Ok(HeatKernel::identity(params, Method::Spectral, size));
    }
    check_time(t)?;
    let gen = build_generator(params, truncation)?;
    let eig = eigen_tridiagonal(gen.diagonal(), gen.offdiagonal(), Vectors::Full)?;
    // v[[n, j]] = component n of eigenvector j, scaled by e^{t lambda_j / 2}.
    let mut v = Array2::zeros((size, truncation));
    for j in 0..truncation {
        let scale = (0.5 * t * eig.values()[j]).exp();
        let vec = eig.vector(j);
        for n in 0..size {
            v[[n, j]] = vec[n] * scale;
        }
    }
    let mut entries = v.dot(&v.t());
    for i in 0..size {
        for j in 0..i {
            entries[[i, j]] = entries[[j, i]];
        }
    }
    Ok(HeatKernel { params, t, method: Method::Spectral, resolution: truncation, entries })
}

/// `K_t` on `0..size` by the requested method, with the default order
/// policy (quadrature) or truncation ratio (spectral). `t = 0` yields the
/// exact identity.
pub fn kernel_matrix(params: JacobiParams, t: f64, size: usize, method: Method) -> Result<HeatKernel> {
    ensure!(size >= 1, Error::Size("kernel size must be >= 1".into()));
    if t != 0.0 {
        check_time(t)?;
    }
    match method {
        Method::Quadrature => {
            if t == 0.0 {
                return Ok(HeatKernel::identity(params, method, size));
            }
            KernelEngine::new(params, size, t.max(1.0), DEFAULT_ORDER_TOL)?.kernel(t)
        }
        Method::Spectral => spectral_kernel(params, t, size, (SPECTRAL_RATIO * size).max(2)),
    }
}

/// `W_t f` on `0..size`.
pub fn apply_heat(params: JacobiParams, t: f64, f: &Signal, size: usize) -> Result<Signal> {
    ensure!(f.len() <= size, Error::Truncation { end: f.len(), size });
    kernel_matrix(params, t, size, Method::Quadrature)?.apply(f)
}

/// Relative failure of the row-sum identity `sum_m K_t(n, m) p_m(1) = p_n(1)`
/// when the sum is cut at `size`.
pub fn markov_defect(params: JacobiParams, t: f64, n: usize, size: usize) -> Result<f64> {
    ensure!(
        4 * n <= size,
        Error::Size(format!("row {n} too close to the truncation {size} (need n <= N/4)"))
    );
    if t == 0.0 {
        return Ok(0.0);
    }
    let engine = KernelEngine::new(params, size, t.max(1.0), DEFAULT_ORDER_TOL)?;
    let rows = engine.kernel_rows(t, n)?;
    let sum: f64 = (0..size).map(|m| rows[[n, m]] * ortho_poly_at_one(params, m)).sum();
    let target = ortho_poly_at_one(params, n);
    Ok((sum - target).abs() / target)
}

/// Max-entry size of `K_t K_s - K_{t+s}` on the top-left `size / 4` block.
pub fn semigroup_defect(params: JacobiParams, t: f64, s: f64, size: usize) -> Result<f64> {
    ensure!(size >= 4, Error::Size(format!("semigroup check needs N >= 4, got {size}")));
    ensure!(
        t >= 0.0 && s >= 0.0,
        Error::ParameterDomain(format!("times must be non-negative, got {t}, {s}"))
    );
    let engine = KernelEngine::new(params, size, (t + s).max(1.0), DEFAULT_ORDER_TOL)?;
    let kt = engine.kernel(t)?;
    let ks = engine.kernel(s)?;
    let kts = engine.kernel(t + s)?;
    let product = kt.entries().dot(ks.entries());
    let block = size / 4;
    let mut worst = 0.0f64;
    for i in 0..block {
        for j in 0..block {
            worst = worst.max((product[[i, j]] - kts.entry(i, j)).abs());
        }
    }
    Ok(worst)
}

/// Kernel of the conjugated semigroup `W~_t g = W_t(g p(1)) / p(1)`.
pub fn tilde_kernel(kernel: &HeatKernel) -> Array2<f64> {
    let params = kernel.params();
    let v: Vec<f64> = (0..kernel.size()).map(|n| ortho_poly_at_one(params, n)).collect();
    let mut out = kernel.entries().clone();
    for ((n, m), e) in out.indexed_iter_mut() {
        *e *= v[m] / v[n];
    }
    out
}

/// `W~_t g` on the kernel's index range.
pub fn apply_tilde(kernel: &HeatKernel, g: &Signal) -> Result<Signal> {
    let size = kernel.size();
    ensure!(g.len() <= size, Error::Truncation { end: g.len(), size });
    let v = Array1::from(g.resized(size));
    Ok(Signal::new(tilde_kernel(kernel).dot(&v).to_vec()))
}

/// `sum_n f(n) p_n(x)`.
pub fn fourier_transform(params: JacobiParams, f: &Signal, x: f64) -> Result<f64> {
    ensure!(
        (-1.0..=1.0).contains(&x),
        Error::Domain(format!("x = {x} outside [-1, 1]"))
    );
    if f.is_empty() {
        return Ok(0.0);
    }
    let cache = CoefficientCache::new(params, f.len());
    let mut p = vec![0.0; f.len()];
    cache.fill_ortho(x, &mut p);
    Ok(f.values().iter().zip(&p).map(|(a, b)| a * b).sum())
}

/// `| ||f||^2 - int |F f|^2 dmu |` with the integral taken by `rule`, which
/// must be exact for the degree `2 (len - 1)` integrand.
pub fn parseval_defect(params: JacobiParams, f: &Signal, rule: &QuadratureRule) -> Result<f64> {
    ensure!(
        rule.params() == params,
        Error::ParameterDomain("quadrature rule built for different parameters".into())
    );
    ensure!(
        f.len() <= rule.order(),
        Error::Size(format!(
            "rule of order {} is not exact for signals of length {}",
            rule.order(),
            f.len()
        ))
    );
    let norm2: f64 = f.values().iter().map(|v| v * v).sum();
    let mut integral = 0.0;
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let v = fourier_transform(params, f, x)?;
        integral += w * v * v;
    }
    Ok((norm2 - integral).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct EngineKey {
    alpha: u64,
    beta: u64,
    size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct KernelKey {
    engine: EngineKey,
    t: u64,
    method: Method,
    derivative: bool,
}

fn engine_key(params: JacobiParams, size: usize) -> EngineKey {
    EngineKey { alpha: params.alpha().to_bits(), beta: params.beta().to_bits(), size }
}

/// Shared cache of quadrature engines and kernel matrices, keyed by
/// `(params, t, size, method)`. Reads are concurrent; a miss computes
/// outside the lock and the first writer wins.
#[derive(Debug)]
pub struct KernelCache {
    t_max: f64,
    tol: f64,
    engines: RwLock<HashMap<EngineKey, Arc<KernelEngine>>>,
    kernels: RwLock<HashMap<KernelKey, Arc<HeatKernel>>>,
}

impl KernelCache {
    /// Cache serving times in `(0, t_max]`.
    pub fn new(t_max: f64) -> Result<Self> {
        Self::with_tolerance(t_max, DEFAULT_ORDER_TOL)
    }

    pub fn with_tolerance(t_max: f64, tol: f64) -> Result<Self> {
        check_time(t_max)?;
        ensure!(tol > 0.0, Error::ParameterDomain(format!("tol must be positive, got {tol}")));
        Ok(Self {
            t_max,
            tol,
            engines: RwLock::new(HashMap::new()),
            kernels: RwLock::new(HashMap::new()),
        })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn engine(&self, params: JacobiParams, size: usize) -> Result<Arc<KernelEngine>> {
        let key = engine_key(params, size);
        if let Some(e) = self.engines.read().expect("engine cache poisoned").get(&key) {
            return Ok(Arc::clone(e));
        }
        let built = Arc::new(KernelEngine::new(params, size, self.t_max, self.tol)?);
        let mut map = self.engines.write().expect("engine cache poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(built)))
    }

    fn lookup(
        &self,
        key: KernelKey,
        compute: impl FnOnce() -> Result<HeatKernel>,
    ) -> Result<Arc<HeatKernel>> {
        if let Some(k) = self.kernels.read().expect("kernel cache poisoned").get(&key) {
            return Ok(Arc::clone(k));
        }
        let built = Arc::new(compute()?);
        let mut map = self.kernels.write().expect("kernel cache poisoned");
        Ok(Arc::clone(map.entry(key).or_insert(built)))
    }

    fn check_range(&self, t: f64) -> Result<()> {
        ensure!(
            t <= self.t_max,
            Error::Domain(format!("time {t} beyond the cache range {}", self.t_max))
        );
        Ok(())
    }

    pub fn kernel(
        &self,
        params: JacobiParams,
        t: f64,
        size: usize,
        method: Method,
    ) -> Result<Arc<HeatKernel>> {
        self.check_range(t)?;
        let key = KernelKey {
            engine: engine_key(params, size),
            t: t.to_bits(),
            method,
            derivative: false,
        };
        self.lookup(key, || match method {
            Method::Quadrature => self.engine(params, size)?.kernel(t),
            Method::Spectral => kernel_matrix(params, t, size, method),
        })
    }

    /// `d/dt K_t` by quadrature, stored as a kernel record at time `t`.
    pub fn kernel_dt(&self, params: JacobiParams, t: f64, size: usize) -> Result<Arc<HeatKernel>> {
        self.check_range(t)?;
        let key = KernelKey {
            engine: engine_key(params, size),
            t: t.to_bits(),
            method: Method::Quadrature,
            derivative: true,
        };
        self.lookup(key, || {
            let engine = self.engine(params, size)?;
            Ok(HeatKernel {
                params,
                t,
                method: Method::Quadrature,
                resolution: engine.order(),
                entries: engine.kernel_dt(t)?,
            })
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.read().expect("kernel cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
