//! Jacobi polynomials, their orthonormal versions and the discrete Jacobi
//! operator acting on sequences over the non-negative integers.
//!
//! The orthonormal polynomials `p_n = w_n P_n` are eigenfunctions of the
//! symmetric tridiagonal operator
//!
//! ```text
//! (J f)(n) = a_{n-1} f(n-1) + b_n f(n) + a_n f(n+1),   (J f)(0) = b_0 f(0) + a_0 f(1)
//! ```
//!
//! with `J p_.(x) = (x - 1) p_.(x)`. All gamma-function ratios are formed in
//! log space and exponentiated once.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{ensure, Error, Result};
use crate::signal::Signal;

/// The Jacobi parameter pair `(alpha, beta)`, both `> -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct JacobiParams {
    alpha: f64,
    beta: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawParams> for JacobiParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        JacobiParams::new(raw.alpha, raw.beta)
    }
}

impl From<JacobiParams> for RawParams {
    fn from(p: JacobiParams) -> Self {
        RawParams { alpha: p.alpha, beta: p.beta }
    }
}

impl JacobiParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        ensure!(
            alpha.is_finite() && beta.is_finite() && alpha > -1.0 && beta > -1.0,
            Error::ParameterDomain(format!("need alpha, beta > -1, got ({alpha}, {beta})"))
        );
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `alpha >= beta >= -1/2`: the hypothesis under which the heat kernel
    /// is entrywise non-negative.
    pub fn positivity_regime(&self) -> bool {
        self.alpha >= self.beta && self.beta >= -0.5
    }

    /// `alpha, beta >= -1/2`: the range covered by the boundedness theorems.
    pub fn theorem_regime(&self) -> bool {
        self.alpha >= -0.5 && self.beta >= -0.5
    }

    /// Short filesystem-safe identifier, e.g. `a-0.5_b0.5`.
    pub fn tag(&self) -> String {
        format!("a{}_b{}", self.alpha, self.beta)
    }

    /// Total mass `2^{a+b+1} B(a+1, b+1)` of `(1-x)^a (1+x)^b dx` on (-1, 1).
    pub fn total_mass(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        ((a + b + 1.0) * std::f64::consts::LN_2 + ln_gamma(a + 1.0) + ln_gamma(b + 1.0)
            - ln_gamma(a + b + 2.0))
        .exp()
    }
}

fn check_x(x: f64) -> Result<()> {
    ensure!(
        (-1.0..=1.0).contains(&x),
        Error::Domain(format!("x = {x} outside [-1, 1]"))
    );
    Ok(())
}

/// Classical Jacobi polynomial `P_n^{(a,b)}(x)` by the three-term recurrence.
pub fn jacobi_poly(params: JacobiParams, n: usize, x: f64) -> Result<f64> {
    check_x(x)?;
    Ok(jacobi_poly_unchecked(params, n, x))
}

pub(crate) fn jacobi_poly_unchecked(params: JacobiParams, n: usize, x: f64) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    // Explicit degree one: the generic recurrence divides by n + a + b, which
    // vanishes at n = 1 when a + b = -1.
    let mut cur = 0.5 * (a + b + 2.0) * x + 0.5 * (a - b);
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c1 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c2 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c3 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let next = (c2 * cur - c3 * prev) / c1;
        prev = cur;
        cur = next;
    }
    cur
}

fn ln_normalization(params: JacobiParams, n: usize) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    let ln_scale = (a + b + 1.0) * std::f64::consts::LN_2;
    if n == 0 {
        return 0.5
            * (ln_gamma(a + b + 2.0) - ln_scale - ln_gamma(a + 1.0) - ln_gamma(b + 1.0));
    }
    let n = n as f64;
    0.5 * ((2.0 * n + a + b + 1.0).ln() + ln_gamma(n + 1.0) + ln_gamma(n + a + b + 1.0)
        - ln_scale
        - ln_gamma(n + a + 1.0)
        - ln_gamma(n + b + 1.0))
}

/// The factor `w_n` making `w_n P_n` unit-norm in `L^2(mu_{a,b})`.
pub fn normalization(params: JacobiParams, n: usize) -> f64 {
    ln_normalization(params, n).exp()
}

/// Orthonormal polynomial `p_n(x) = w_n P_n(x)`.
pub fn ortho_poly(params: JacobiParams, n: usize, x: f64) -> Result<f64> {
    Ok(normalization(params, n) * jacobi_poly(params, n, x)?)
}

/// `p_n(1) = w_n binom(n + a, n)`, evaluated in log space.
pub fn ortho_poly_at_one(params: JacobiParams, n: usize) -> f64 {
    let a = params.alpha;
    let nf = n as f64;
    let ln_binom = ln_gamma(nf + a + 1.0) - ln_gamma(a + 1.0) - ln_gamma(nf + 1.0);
    (ln_normalization(params, n) + ln_binom).exp()
}

/// Off-diagonal coefficient `a_n` of the Jacobi operator.
pub fn coeff_a(params: JacobiParams, n: usize) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    if n == 0 {
        return 2.0 / (a + b + 2.0) * ((a + 1.0) * (b + 1.0) / (a + b + 3.0)).sqrt();
    }
    let n = n as f64;
    let s = 2.0 * n + a + b;
    let num = (n + 1.0) * (n + a + 1.0) * (n + b + 1.0) * (n + a + b + 1.0);
    let den = (s + 1.0) * (s + 3.0);
    2.0 / (s + 2.0) * (num / den).sqrt()
}

/// Diagonal coefficient `b_n` of the Jacobi operator.
pub fn coeff_b(params: JacobiParams, n: usize) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    if n == 0 {
        return -(2.0 * a + 2.0) / (a + b + 2.0);
    }
    let s = 2.0 * n as f64 + a + b;
    (b * b - a * a) / (s * (s + 2.0)) - 1.0
}

/// All orthonormal values `p_0(x), ..., p_{n_max}(x)` from the eigenrelation
/// `a_n p_{n+1} = (x - 1 - b_n) p_n - a_{n-1} p_{n-1}`.
pub fn ortho_table(params: JacobiParams, n_max: usize, x: f64) -> Vec<f64> {
    let gen = CoefficientCache::new(params, n_max + 1);
    let mut out = vec![0.0; n_max + 1];
    gen.fill_ortho(x, &mut out);
    out
}

/// Precomputed `a_n`, `b_n` for repeated table evaluation.
#[derive(Debug, Clone)]
pub(crate) struct CoefficientCache {
    p0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl CoefficientCache {
    pub(crate) fn new(params: JacobiParams, len: usize) -> Self {
        Self {
            p0: normalization(params, 0),
            a: (0..len).map(|n| coeff_a(params, n)).collect(),
            b: (0..len).map(|n| coeff_b(params, n)).collect(),
        }
    }

    /// Writes `p_0(x) .. p_{out.len()-1}(x)`.
    pub(crate) fn fill_ortho(&self, x: f64, out: &mut [f64]) {
        if out.is_empty() {
            return;
        }
        out[0] = self.p0;
        if out.len() == 1 {
            return;
        }
        let y = x - 1.0;
        out[1] = (y - self.b[0]) * out[0] / self.a[0];
        for n in 1..out.len() - 1 {
            out[n + 1] = ((y - self.b[n]) * out[n] - self.a[n - 1] * out[n - 1]) / self.a[n];
        }
    }
}

/// Finite section of the Jacobi operator on indices `0..size`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalGenerator {
    params: JacobiParams,
    diagonal: Vec<f64>,
    offdiagonal: Vec<f64>,
}

impl TridiagonalGenerator {
    pub fn params(&self) -> JacobiParams {
        self.params
    }

    pub fn size(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn offdiagonal(&self) -> &[f64] {
        &self.offdiagonal
    }

    /// Dense entry `(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diagonal[i],
            1 => self.offdiagonal[i.min(j)],
            _ => 0.0,
        }
    }
}

pub fn build_generator(params: JacobiParams, size: usize) -> Result<TridiagonalGenerator> {
    ensure!(size >= 2, Error::Size(format!("generator needs N >= 2, got {size}")));
    Ok(TridiagonalGenerator {
        params,
        diagonal: (0..size).map(|n| coeff_b(params, n)).collect(),
        offdiagonal: (0..size - 1).map(|n| coeff_a(params, n)).collect(),
    })
}

/// `J f` on the truncation. Exact for signals supported in `0..size`, except
/// that the value `(J f)(size)` is not represented.
pub fn apply_generator(gen: &TridiagonalGenerator, f: &Signal) -> Result<Signal> {
    let size = gen.size();
    ensure!(
        f.len() <= size,
        Error::Truncation { end: f.len(), size }
    );
    let v = f.resized(size);
    let (a, b) = (&gen.offdiagonal, &gen.diagonal);
    let out = (0..size)
        .map(|n| {
            let mut acc = b[n] * v[n];
            if n > 0 {
                acc += a[n - 1] * v[n - 1];
            }
            if n + 1 < size {
                acc += a[n] * v[n + 1];
            }
            acc
        })
        .collect();
    Ok(Signal::new(out))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(a: f64, b: f64) -> JacobiParams {
        JacobiParams::new(a, b).unwrap()
    }

    #[test]
    fn rejects_parameters_at_or_below_minus_one() {
        assert!(matches!(JacobiParams::new(-1.0, 0.0), Err(Error::ParameterDomain(_))));
        assert!(matches!(JacobiParams::new(0.0, -1.5), Err(Error::ParameterDomain(_))));
        assert!(JacobiParams::new(f64::NAN, 0.0).is_err());
        assert!(JacobiParams::new(-0.99, -0.99).is_ok());
    }

    #[test]
    fn regime_flags() {
        assert!(params(0.5, 0.0).positivity_regime());
        assert!(!params(0.0, 0.5).positivity_regime());
        assert!(params(0.0, 0.5).theorem_regime());
        assert!(!params(-0.6, -0.7).theorem_regime());
        assert!(params(-0.5, -0.5).positivity_regime());
    }

    #[test]
    fn polynomial_examples() {
        assert_eq!(jacobi_poly(params(0.3, 1.7), 0, 0.2).unwrap(), 1.0);
        assert_relative_eq!(jacobi_poly(params(2.0, 1.0), 1, 0.0).unwrap(), 0.5);
        assert_relative_eq!(jacobi_poly(params(0.0, 0.0), 3, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert!(matches!(jacobi_poly(params(0.0, 0.0), 3, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn polynomial_matches_mpmath_values() {
        // Reference values from mpmath.jacobi at 40 digits.
        let cases = [
            (2.5, 0.5, 7, 0.3, 0.862_129_348_437_499_9),
            (-0.5, -0.5, 10, -0.7, -0.017_591_522_693_164_172),
            (0.5, -0.5, 40, 0.9, -0.218_934_834_251_672_34),
            (1.3, -0.7, 150, -0.25, -0.025_210_881_385_181_132),
        ];
        for (a, b, n, x, want) in cases {
            let got = jacobi_poly(params(a, b), n, x).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-11);
        }
    }

    #[test]
    fn normalization_examples() {
        assert_relative_eq!(normalization(params(0.0, 0.0), 0), 0.5f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(
            normalization(params(-0.5, -0.5), 0),
            1.0 / std::f64::consts::PI.sqrt(),
            max_relative = 1e-14
        );
        let cases = [
            (2.5, 0.5, 7, 1.137_385_544_483_668_9, 76.955_128_292_220_97),
            (0.5, -0.5, 40, 6.344_349_953_316_304_5, 45.699_356_267_368_26),
            (1.3, -0.7, 150, 9.944_462_058_537_896_6, 5_805.605_909_726_228),
        ];
        for (a, b, n, w, p1) in cases {
            assert_relative_eq!(normalization(params(a, b), n), w, max_relative = 1e-12);
            assert_relative_eq!(ortho_poly_at_one(params(a, b), n), p1, max_relative = 1e-12);
        }
        // Large degree: no overflow, w_n ~ sqrt(n) for a = b = 0.
        let big = normalization(params(0.0, 0.0), 1_000_000);
        assert_relative_eq!(big, 1_000.000_249_999_968_75, max_relative = 1e-8);
    }

    #[test]
    fn ortho_poly_at_one_is_consistent() {
        for (a, b) in [(0.0, 0.0), (2.5, 0.5), (-0.5, -0.5), (0.5, -0.5)] {
            let p = params(a, b);
            assert_relative_eq!(ortho_poly_at_one(p, 0), normalization(p, 0), max_relative = 1e-14);
            for n in 0..=100 {
                let direct = ortho_poly(p, n, 1.0).unwrap();
                assert_relative_eq!(ortho_poly_at_one(p, n), direct, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn endpoint_growth_rate() {
        // p_n(1) ~ c n^{a + 1/2}: the ratio p_{2n}(1) / p_n(1) tends to 2^{a + 1/2}.
        let p = params(1.5, 0.0);
        let ratio = |n: usize| ortho_poly_at_one(p, 2 * n) / ortho_poly_at_one(p, n);
        let target = 2f64.powf(2.0);
        let e10 = (ratio(10) - target).abs();
        let e1000 = (ratio(1000) - target).abs();
        assert!(e1000 < e10 / 50.0, "{e10} {e1000}");
        assert!(e1000 < 1e-2);
    }

    #[test]
    fn coefficient_examples() {
        let cheb = params(-0.5, -0.5);
        assert_relative_eq!(coeff_a(cheb, 0), 0.5f64.sqrt(), max_relative = 1e-15);
        for n in 1..50 {
            assert!((coeff_a(cheb, n) - 0.5).abs() <= 1e-14);
            assert!((coeff_b(cheb, n) + 1.0).abs() <= 1e-14);
        }
        assert!((coeff_b(cheb, 0) + 1.0).abs() <= 1e-14);
        assert_relative_eq!(coeff_b(params(1.0, 0.0), 0), -4.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn general_formula_agrees_with_dedicated_zero_branch() {
        // Away from a + b = -1 the n >= 1 closed forms also hold at n = 0.
        let p = params(1.2, 0.4);
        let (a, b) = (p.alpha, p.beta);
        let s = a + b;
        let a0 = 2.0 / (s + 2.0) * ((a + 1.0) * (b + 1.0) * (s + 1.0) / ((s + 1.0) * (s + 3.0))).sqrt();
        let b0 = (b * b - a * a) / (s * (s + 2.0)) - 1.0;
        assert_relative_eq!(coeff_a(p, 0), a0, max_relative = 1e-14);
        assert_relative_eq!(coeff_b(p, 0), b0, max_relative = 1e-14);
    }

    #[test]
    fn generator_layout() {
        let gen = build_generator(params(-0.5, -0.5), 3).unwrap();
        for d in gen.diagonal() {
            assert!((d + 1.0).abs() < 1e-15);
        }
        assert_relative_eq!(gen.offdiagonal()[0], 0.5f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(gen.offdiagonal()[1], 0.5, max_relative = 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(gen.entry(i, j), gen.entry(j, i));
            }
        }
        assert!(matches!(build_generator(params(0.0, 0.0), 1), Err(Error::Size(_))));
    }

    #[test]
    fn generator_columns() {
        let gen = build_generator(params(-0.5, -0.5), 6).unwrap();
        let out = apply_generator(&gen, &Signal::delta(1)).unwrap();
        let want = [0.5f64.sqrt(), -1.0, 0.5, 0.0, 0.0, 0.0];
        for (g, w) in out.values().iter().zip(want) {
            assert!((g - w).abs() < 1e-15);
        }
        let zero = apply_generator(&gen, &Signal::zeros(4)).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
        assert!(matches!(
            apply_generator(&gen, &Signal::zeros(7)),
            Err(Error::Truncation { end: 7, size: 6 })
        ));
    }

    #[test]
    fn eigenrelation_residual() {
        let size = 200;
        for (a, b) in [(0.0, 0.0), (2.5, 0.5), (-0.5, -0.5), (0.5, -0.5), (-0.3, 1.9)] {
            let p = params(a, b);
            let gen = build_generator(p, size).unwrap();
            for x in [-0.9, -0.3, 0.0, 0.4, 0.99] {
                let f: Vec<f64> = (0..size).map(|n| ortho_poly(p, n, x).unwrap()).collect();
                let jf = apply_generator(&gen, &Signal::new(f.clone())).unwrap();
                for n in 0..size - 1 {
                    let res = (jf[n] - (x - 1.0) * f[n]).abs();
                    assert!(res <= 1e-9 * f[n].abs().max(1.0), "a={a} b={b} x={x} n={n} res={res}");
                }
            }
        }
    }

    #[test]
    fn ortho_table_matches_pointwise_evaluation() {
        for (a, b) in [(0.0, 0.0), (2.5, 0.5), (-0.5, -0.5), (-0.7, 0.3)] {
            let p = params(a, b);
            for x in [-1.0, -0.95, 0.1, 0.77, 1.0] {
                let table = ortho_table(p, 200, x);
                for (n, &v) in table.iter().enumerate() {
                    let direct = ortho_poly(p, n, x).unwrap();
                    assert!((v - direct).abs() <= 1e-10 * direct.abs().max(1.0), "n={n} x={x}");
                }
            }
        }
    }

    #[test]
    fn total_mass_legendre_and_chebyshev() {
        assert_relative_eq!(params(0.0, 0.0).total_mass(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(params(-0.5, -0.5).total_mass(), std::f64::consts::PI, max_relative = 1e-14);
    }
}
