//! Gauss-Jacobi rules for `dmu(x) = (1-x)^a (1+x)^b dx`. Nodes are the
//! eigenvalues of the orthonormal recurrence matrix (Golub-Welsch), polished
//! by Newton steps on the recurrence. Weights use the Christoffel form
//! `1 / sum_j p_j(x)^2`, which at the polished nodes is a few digits more
//! accurate than squared eigenvector components.

use crate::basis::{coeff_a, coeff_b, CoefficientCache, JacobiParams};
use crate::eigen::{eigen_tridiagonal, Vectors};
use crate::error::{ensure, Error, Result};

/// Largest order `auto_order` may try.
pub const MAX_ORDER: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    params: JacobiParams,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn params(&self) -> JacobiParams {
        self.params
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.order() - 1
    }
}

pub fn build_rule(params: JacobiParams, order: usize) -> Result<QuadratureRule> {
    ensure!(order >= 1, Error::Size("quadrature order must be >= 1".into()));
    // x p_n = a_n p_{n+1} + (b_n + 1) p_n + a_{n-1} p_{n-1}
    let diag: Vec<f64> = (0..order).map(|n| coeff_b(params, n) + 1.0).collect();
    let off: Vec<f64> = (0..order - 1).map(|n| coeff_a(params, n)).collect();
    let eig = eigen_tridiagonal(&diag, &off, Vectors::None)?;
    let a_last = coeff_a(params, order - 1);
    let nodes: Vec<f64> = eig
        .values()
        .iter()
        .map(|&x| polish(&diag, &off, a_last, x))
        .collect();
    let cache = CoefficientCache::new(params, order);
    let mut p = vec![0.0; order];
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            cache.fill_ortho(x, &mut p);
            1.0 / p.iter().map(|v| v * v).sum::<f64>()
        })
        .collect();

    ensure!(
        nodes.iter().all(|&x| x > -1.0 && x < 1.0),
        Error::Numeric(format!("order {order}: node outside (-1, 1)"))
    );
    ensure!(
        nodes.windows(2).all(|w| w[0] < w[1]),
        Error::Numeric(format!("order {order}: nodes not strictly increasing"))
    );
    ensure!(
        weights.iter().all(|&w| w > 0.0 && w.is_finite()),
        Error::Numeric(format!("order {order}: non-positive weight"))
    );
    Ok(QuadratureRule { params, nodes, weights })
}

/// Newton steps on the degree-`order` orthonormal polynomial, whose zeros
/// are the nodes. Steps that are not small corrections are rejected.
fn polish(diag: &[f64], off: &[f64], a_last: f64, mut x: f64) -> f64 {
    for _ in 0..2 {
        let (mut prev, mut cur) = (0.0, 1.0);
        let (mut dprev, mut dcur) = (0.0, 0.0);
        for n in 0..diag.len() {
            let back = if n > 0 { off[n - 1] } else { 0.0 };
            let fwd = if n + 1 < diag.len() { off[n] } else { a_last };
            let next = ((x - diag[n]) * cur - back * prev) / fwd;
            let dnext = ((x - diag[n]) * dcur + cur - back * dprev) / fwd;
            (prev, cur, dprev, dcur) = (cur, next, dcur, dnext);
        }
        let step = cur / dcur;
        if !step.is_finite() || step.abs() > 1e-10 {
            break;
        }
        x -= step;
    }
    x
}

/// `sum_k w_k f(x_k)`; fails if `f` is not finite at some node.
pub fn integrate(rule: &QuadratureRule, f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(x);
        ensure!(v.is_finite(), Error::Numeric(format!("integrand is {v} at node {x}")));
        acc += w * v;
    }
    Ok(acc)
}

/// `K_t(n, n) = int e^{-t(1-x)} p_n(x)^2 dmu` by the given rule.
pub(crate) fn diagonal_kernel(rule: &QuadratureRule, n: usize, t: f64) -> f64 {
    let cache = CoefficientCache::new(rule.params, n + 1);
    let mut p = vec![0.0; n + 1];
    let mut acc = 0.0;
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        cache.fill_ortho(x, &mut p);
        acc += w * (-t * (1.0 - x)).exp() * p[n] * p[n];
    }
    acc
}

/// Smallest order `Q = (n_max + 16) 2^k` for which the diagonal kernel entry
/// at `n_max` changes by less than `tol` between `Q` and `2Q`, at both
/// `t = t_max` and `t = 1e-3`.
pub fn auto_order(params: JacobiParams, n_max: usize, t_max: f64, tol: f64) -> Result<usize> {
    ensure!(
        t_max > 0.0 && t_max.is_finite(),
        Error::ParameterDomain(format!("t_max must be positive, got {t_max}"))
    );
    ensure!(tol > 0.0, Error::ParameterDomain(format!("tol must be positive, got {tol}")));
    let times = [t_max, 1e-3];
    let mut order = n_max + 16;
    let mut rule = build_rule(params, order)?;
    loop {
        let doubled = 2 * order;
        ensure!(
            doubled <= MAX_ORDER,
            Error::Convergence(format!(
                "quadrature order exceeded {MAX_ORDER} (n_max = {n_max}, t_max = {t_max})"
            ))
        );
        let finer = build_rule(params, doubled)?;
        let change = times
            .iter()
            .map(|&t| (diagonal_kernel(&rule, n_max, t) - diagonal_kernel(&finer, n_max, t)).abs())
            .fold(0.0, f64::max);
        if change < tol {
            return Ok(order);
        }
        order = doubled;
        rule = finer;
    }
}
