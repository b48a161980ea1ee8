//! Muckenhoupt constants of weight sequences, weighted `l^p` and weak `l^1`
//! norms, and empirical operator norms over a fixed family of probes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::signal::Signal;

/// Growth ratio at or below which a finite-range class constant counts as
/// stable.
pub const CLASS_STABLE_RATIO: f64 = 1.05;

/// A positive weight on `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSeq {
    values: Vec<f64>,
}

impl WeightSeq {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        ensure!(!values.is_empty(), Error::Size("empty weight".into()));
        ensure!(
            values.iter().all(|&w| w > 0.0 && w.is_finite()),
            Error::ParameterDomain("weights must be positive and finite".into())
        );
        Ok(Self { values })
    }

    pub fn constant(c: f64, len: usize) -> Result<Self> {
        Self::new(vec![c; len])
    }

    /// `(n + 1)^gamma`
    pub fn power(gamma: f64, len: usize) -> Result<Self> {
        Self::from_fn(len, |n| (n as f64 + 1.0).powf(gamma))
    }

    pub fn from_fn(len: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((0..len).map(f).collect())
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

fn check_range(w: &WeightSeq, range_end: usize) -> Result<()> {
    ensure!(
        range_end >= 1 && range_end <= w.len(),
        Error::Size(format!("range end {range_end} outside 1..={}", w.len()))
    );
    Ok(())
}

fn prefix(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    for v in values {
        out.push(out[out.len() - 1] + v);
    }
    out
}

/// `sup (m-n+1)^{-p} (sum w) (sum w^{-1/(p-1)})^{p-1}` over intervals
/// `[n, m]` inside `[0, range_end)`.
pub fn ap_constant(w: &WeightSeq, p: f64, range_end: usize) -> Result<f64> {
    ensure!(p > 1.0 && p.is_finite(), Error::ParameterDomain(format!("p must exceed 1, got {p}")));
    check_range(w, range_end)?;
    let vals = &w.values[..range_end];
    let direct = prefix(vals.iter().copied());
    let dual = prefix(vals.iter().map(|v| v.powf(-1.0 / (p - 1.0))));
    let best = (0..range_end)
        .into_par_iter()
        .map(|n| {
            let mut top = 0.0f64;
            for m in n..range_end {
                let len = (m - n + 1) as f64;
                let a = direct[m + 1] - direct[n];
                let b = dual[m + 1] - dual[n];
                top = top.max((a / len) * (b / len).powf(p - 1.0));
            }
            top
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// `sup (average of w over I) * max_{k in I} 1/w_k` over intervals inside
/// `[0, range_end)`.
pub fn a1_constant(w: &WeightSeq, range_end: usize) -> Result<f64> {
    check_range(w, range_end)?;
    let vals = &w.values[..range_end];
    let best = (0..range_end)
        .into_par_iter()
        .map(|n| {
            let (mut sum, mut min, mut top) = (0.0, f64::INFINITY, 0.0f64);
            for (k, &v) in vals[n..].iter().enumerate() {
                sum += v;
                min = min.min(v);
                top = top.max(sum / (k + 1) as f64 / min);
            }
            top
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassVerdict {
    Stable,
    Diverging,
}

/// Compares the constants at the two largest ranges against
/// `CLASS_STABLE_RATIO`.
pub fn class_verdict(constants: &[f64]) -> Result<(f64, ClassVerdict)> {
    ensure!(constants.len() >= 2, Error::Size("need constants at two ranges".into()));
    let (prev, last) = (constants[constants.len() - 2], constants[constants.len() - 1]);
    let ratio = last / prev;
    let verdict = if ratio <= CLASS_STABLE_RATIO { ClassVerdict::Stable } else { ClassVerdict::Diverging };
    Ok((ratio, verdict))
}

fn check_support(f: &Signal, w: &WeightSeq) -> Result<()> {
    ensure!(
        f.effective_support() <= w.len(),
        Error::Truncation { end: f.effective_support(), size: w.len() }
    );
    Ok(())
}

/// `(sum |f(n)|^p w_n)^{1/p}`.
pub fn weighted_norm(f: &Signal, p: f64, w: &WeightSeq) -> Result<f64> {
    ensure!(p >= 1.0 && p.is_finite(), Error::ParameterDomain(format!("p must be >= 1, got {p}")));
    check_support(f, w)?;
    let sum: f64 = f.values().iter().zip(&w.values).map(|(v, wn)| v.abs().powf(p) * wn).sum();
    Ok(sum.powf(1.0 / p))
}

/// `sup_{lambda > 0} lambda * w({n : |f(n)| > lambda})`. The supremum is the
/// limit as `lambda` rises to a value `v` of `|f|`, namely `v * w({|f| >= v})`.
pub fn weak_quasinorm(f: &Signal, w: &WeightSeq) -> Result<f64> {
    check_support(f, w)?;
    let mut pairs: Vec<(f64, f64)> = f
        .values()
        .iter()
        .zip(&w.values)
        .map(|(v, wn)| (v.abs(), *wn))
        .filter(|(v, _)| *v > 0.0)
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut mass = 0.0;
    let mut best = 0.0f64;
    let mut i = 0;
    while i < pairs.len() {
        let level = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == level {
            mass += pairs[i].1;
            i += 1;
        }
        best = best.max(level * mass);
    }
    Ok(best)
}

/// Test signals for empirical operator norms: every unit mass plus seeded
/// random sign and Gaussian signals. Each random probe draws its entries
/// from its own stream, so the probes at length `N` are prefixes of those
/// at any larger length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbePolicy {
    pub deltas: bool,
    pub rademacher: usize,
    pub gaussian: usize,
    pub seed: u64,
}

impl Default for ProbePolicy {
    fn default() -> Self {
        Self { deltas: true, rademacher: 10, gaussian: 10, seed: 0 }
    }
}

impl ProbePolicy {
    pub fn probes(&self, len: usize) -> Vec<Signal> {
        let mut out = Vec::new();
        if self.deltas {
            out.extend((0..len).map(|m| Signal::new(Signal::delta(m).resized(len))));
        }
        let coin = Bernoulli::new(0.5).expect("valid probability");
        for k in 0..self.rademacher {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(2 * k as u64);
            let v = (0..len).map(|_| if coin.sample(&mut rng) { 1.0 } else { -1.0 }).collect();
            out.push(Signal::new(v));
        }
        for k in 0..self.gaussian {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(2 * k as u64 + 1);
            let v = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            out.push(Signal::new(v));
        }
        out
    }
}

/// `||T f||_{p,w} / ||f||_{p,w}` for one probe; `None` for a zero probe.
pub fn norm_ratio(f: &Signal, tf: &Signal, p: f64, w: &WeightSeq) -> Result<Option<f64>> {
    let den = weighted_norm(f, p, w)?;
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(weighted_norm(tf, p, w)? / den))
}

/// `||T f||_{1,inf,w} / ||f||_{1,w}` for one probe; `None` for a zero probe.
pub fn weak_ratio(f: &Signal, tf: &Signal, w: &WeightSeq) -> Result<Option<f64>> {
    let den = weighted_norm(f, 1.0, w)?;
    if den == 0.0 {
        return Ok(None);
    }
    Ok(Some(weak_quasinorm(tf, w)? / den))
}

/// Lower bound for the `l^p(w)` operator norm of `op`: the largest norm
/// ratio over the probes. Zero probes are skipped.
pub fn operator_norm_estimate(
    op: impl Fn(&Signal) -> Result<Signal>,
    p: f64,
    w: &WeightSeq,
    probes: &[Signal],
) -> Result<f64> {
    let mut best = 0.0f64;
    for f in probes {
        if let Some(r) = norm_ratio(f, &op(f)?, p, w)? {
            best = best.max(r);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::ortho_poly_at_one;
    use crate::heat::{apply_tilde, KernelEngine, DEFAULT_ORDER_TOL};
    use crate::JacobiParams;
    use proptest::prelude::*;

    #[test]
    fn ap_examples() {
        let ones = WeightSeq::constant(1.0, 50).unwrap();
        for p in [1.2, 2.0, 5.0] {
            assert_eq!(ap_constant(&ones, p, 50).unwrap(), 1.0);
        }
        let w = WeightSeq::new(vec![1.0, 2.0]).unwrap();
        assert!((ap_constant(&w, 2.0, 2).unwrap() - 1.125).abs() < 1e-15);
        assert!(ap_constant(&w, 1.0, 2).is_err());
        assert!(ap_constant(&w, 2.0, 3).is_err());
    }

    #[test]
    fn a1_examples() {
        let ones = WeightSeq::constant(3.0, 20).unwrap();
        assert_eq!(a1_constant(&ones, 20).unwrap(), 1.0);
        let w = WeightSeq::new(vec![2.0, 1.0]).unwrap();
        assert_eq!(a1_constant(&w, 2).unwrap(), 1.5);
    }

    fn constants(gamma: f64, p: Option<f64>) -> Vec<f64> {
        let w = WeightSeq::power(gamma, 512).unwrap();
        [128, 256, 512]
            .iter()
            .map(|&r| match p {
                Some(p) => ap_constant(&w, p, r).unwrap(),
                None => a1_constant(&w, r).unwrap(),
            })
            .collect()
    }

    #[test]
    fn power_weight_membership_by_growth_ratio() {
        // p = 1.5: gamma = p - 1 -+ 0.1.
        let inside = constants(0.4, Some(1.5));
        let outside = constants(0.6, Some(1.5));
        assert_eq!(class_verdict(&inside).unwrap().1, ClassVerdict::Stable);
        assert_eq!(class_verdict(&outside).unwrap().1, ClassVerdict::Diverging);
        // Wider margins for larger p.
        assert_eq!(class_verdict(&constants(1.0, Some(3.0))).unwrap().1, ClassVerdict::Stable);
        assert_eq!(class_verdict(&constants(3.0, Some(3.0))).unwrap().1, ClassVerdict::Diverging);
        // Decreasing powers are in A_1; increasing ones are not.
        assert_eq!(class_verdict(&constants(-0.5, None)).unwrap().1, ClassVerdict::Stable);
        assert_eq!(class_verdict(&constants(0.5, None)).unwrap().1, ClassVerdict::Diverging);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn ap_constants_are_nested(logs in proptest::collection::vec(-2.0f64..2.0, 2..40)) {
            let w = WeightSeq::new(logs.iter().map(|v| v.exp()).collect()).unwrap();
            let len = w.len();
            let mut prev = f64::INFINITY;
            for p in [1.2, 1.5, 2.0, 3.0, 6.0] {
                let c = ap_constant(&w, p, len).unwrap();
                prop_assert!(c >= 1.0 - 1e-12);
                prop_assert!(c <= prev * (1.0 + 1e-12));
                prev = c;
            }
            prop_assert!(a1_constant(&w, len).unwrap() >= prev * (1.0 - 1e-12));
        }

        #[test]
        fn weak_norm_below_strong_norm(
            vals in proptest::collection::vec(-3.0f64..3.0, 1..30),
            logs in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            let f = Signal::new(vals.clone());
            let w = WeightSeq::new(logs[..vals.len()].iter().map(|v| v.exp()).collect()).unwrap();
            let weak = weak_quasinorm(&f, &w).unwrap();
            prop_assert!(weak <= weighted_norm(&f, 1.0, &w).unwrap() * (1.0 + 1e-12));
            let c = 2.5;
            let scaled = f.map(|v| -c * v);
            for p in [1.0, 1.7, 3.0] {
                let a = weighted_norm(&scaled, p, &w).unwrap();
                let b = c * weighted_norm(&f, p, &w).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
            }
        }
    }

    #[test]
    fn norm_examples() {
        let w = WeightSeq::new(vec![4.0, 1.0, 2.0]).unwrap();
        for p in [1.0, 2.0, 3.5] {
            assert!((weighted_norm(&Signal::delta(0), p, &w).unwrap() - 4f64.powf(1.0 / p)).abs() < 1e-15);
        }
        let f = Signal::new(vec![1.0, -2.0, 0.5]);
        let ones = WeightSeq::constant(1.0, 3).unwrap();
        assert_eq!(weighted_norm(&f, 1.0, &ones).unwrap(), 3.5);
        assert!(weighted_norm(&f, 0.5, &ones).is_err());
        assert!(weighted_norm(&Signal::delta(3), 1.0, &ones).is_err());
        // Trailing zeros past the weight are harmless.
        assert_eq!(weighted_norm(&Signal::new(vec![1.0, 0.0, 0.0, 0.0]), 2.0, &ones).unwrap(), 1.0);
    }

    #[test]
    fn weak_quasinorm_examples() {
        let ones = WeightSeq::constant(1.0, 4).unwrap();
        assert_eq!(weak_quasinorm(&Signal::delta(0), &ones).unwrap(), 1.0);
        let harmonic = Signal::new(vec![1.0, 0.5, 1.0 / 3.0, 0.25]);
        assert!((weak_quasinorm(&harmonic, &ones).unwrap() - 1.0).abs() < 1e-15);
        let w = WeightSeq::new(vec![0.5, 3.0, 1.0, 1.0]).unwrap();
        let single = Signal::new(vec![0.0, -2.0]);
        assert_eq!(weak_quasinorm(&single, &w).unwrap(), weighted_norm(&single, 1.0, &w).unwrap());
        assert_eq!(weak_quasinorm(&Signal::zeros(4), &w).unwrap(), 0.0);
    }

    #[test]
    fn probes_are_seeded_and_prefix_consistent() {
        let policy = ProbePolicy { deltas: true, rademacher: 3, gaussian: 2, seed: 42 };
        let short = policy.probes(10);
        let long = policy.probes(25);
        assert_eq!(short.len(), 15);
        assert_eq!(long.len(), 30);
        for k in 0..5 {
            assert_eq!(&long[25 + k].values()[..10], short[10 + k].values());
        }
        assert_eq!(policy.probes(10), short);
        let other = ProbePolicy { seed: 43, ..policy }.probes(10);
        assert_ne!(other[10], short[10]);
        assert!(short[10].values().iter().all(|v| v.abs() == 1.0));
    }

    #[test]
    fn operator_norm_examples() {
        let w = WeightSeq::power(0.7, 30).unwrap();
        let probes = ProbePolicy::default().probes(30);
        for p in [1.0, 2.0, 4.0] {
            let id = operator_norm_estimate(|f| Ok(f.clone()), p, &w, &probes).unwrap();
            assert!((id - 1.0).abs() < 1e-14);
            let twice = operator_norm_estimate(|f| Ok(f.map(|v| 2.0 * v)), p, &w, &probes).unwrap();
            assert!((twice - 2.0).abs() < 1e-14);
        }
        let with_zero = [probes.clone(), vec![Signal::zeros(30)]].concat();
        let est = operator_norm_estimate(|f| Ok(f.map(|v| v * v)), 2.0, &w, &with_zero).unwrap();
        let fewer = operator_norm_estimate(|f| Ok(f.map(|v| v * v)), 2.0, &w, &probes[..20]).unwrap();
        assert!(est >= fewer);
    }

    #[test]
    fn tilde_semigroup_is_a_contraction_in_weighted_l2() {
        let size = 80;
        for (a, b) in [(0.0, 0.0), (2.5, 0.5), (-0.5, -0.5)] {
            let params = JacobiParams::new(a, b).unwrap();
            let engine = KernelEngine::new(params, size, 10.0, DEFAULT_ORDER_TOL).unwrap();
            let w = WeightSeq::from_fn(size, |n| ortho_poly_at_one(params, n).powi(2)).unwrap();
            // Probes supported away from the truncation edge.
            let probes: Vec<Signal> = ProbePolicy::default()
                .probes(20)
                .into_iter()
                .map(|f| Signal::new(f.resized(size)))
                .collect();
            for t in [0.1, 1.0, 10.0] {
                let k = engine.kernel(t).unwrap();
                let est = operator_norm_estimate(|f| apply_tilde(&k, f), 2.0, &w, &probes).unwrap();
                assert!(est <= 1.0 + 1e-8, "({a},{b}) t={t}: {est}");
            }
        }
    }
}
