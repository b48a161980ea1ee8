//! Run configuration: one JSON document, every field optional, unknown keys
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use jhl_core::heat::{Method, DEFAULT_ORDER_TOL};
use jhl_core::norms::{NormCase, Operator, SweepSettings, WeightSpec};
use jhl_core::paths::{Coefficients, TimeGrid};
use jhl_core::verify::DEFAULT_GRID;
use jhl_core::weights::ProbePolicy;
use jhl_core::{JacobiParams, Signal};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `(alpha, beta)` pairs.
    pub params: Vec<(f64, f64)>,
    /// Truncation sizes of the kernel estimates.
    pub sizes: Vec<usize>,
    pub t_grid: GridSpec,
    pub rho: f64,
    pub lambdas: Vec<f64>,
    /// Exponents of the strong norm cases, paired with `weights`.
    pub p_list: Vec<f64>,
    pub weights: Vec<WeightConfig>,
    /// Weight of the weak-type `(1,1)` cases.
    pub weak_weight: WeightConfig,
    pub lacunary: LacunarySpec,
    pub b_coefficients: Coefficients,
    pub quadrature_tol: f64,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub kernel: KernelSection,
    pub operators: OperatorSection,
    pub verify: VerifySection,
    pub norms: NormsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let (min, max, count) = DEFAULT_GRID;
        let sweep = SweepSettings::default();
        Self {
            params: vec![(-0.5, -0.5), (0.0, 0.0), (2.5, 0.5)],
            sizes: vec![32, 64, 128],
            t_grid: GridSpec { min, max, count, geometric: true },
            rho: sweep.rho,
            lambdas: sweep.lambdas,
            p_list: vec![2.0, 1.5, 3.0],
            weights: vec![WeightConfig::Constant(1.0), WeightConfig::Power(0.3), WeightConfig::Power(1.5)],
            weak_weight: WeightConfig::Power(-0.5),
            lacunary: LacunarySpec { ratio: 2.0, window: 6 },
            b_coefficients: Coefficients::Alternating,
            quadrature_tol: DEFAULT_ORDER_TOL,
            seed: 0,
            workers: None,
            out: PathBuf::from("out"),
            kernel: KernelSection::default(),
            operators: OperatorSection::default(),
            verify: VerifySection::default(),
            norms: NormsSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Log-uniform when true, uniform otherwise.
    pub geometric: bool,
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid, CliError> {
        if self.geometric {
            return Ok(TimeGrid::geometric(self.min, self.max, self.count)?);
        }
        if self.count < 2 {
            return Err(CliError::Config("t_grid.count must be at least 2".into()));
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        let mut times: Vec<f64> = (0..self.count).map(|i| self.min + step * i as f64).collect();
        times[self.count - 1] = self.max;
        Ok(TimeGrid::new(times)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightConfig {
    Constant(f64),
    /// `(n + 1)^gamma`
    Power(f64),
    Explicit(Vec<f64>),
    /// Whitespace- or comma-separated values, one per index.
    File(PathBuf),
}

impl WeightConfig {
    pub fn resolve(&self) -> Result<WeightSpec, CliError> {
        Ok(match self {
            WeightConfig::Constant(c) => WeightSpec::Constant(*c),
            WeightConfig::Power(g) => WeightSpec::Power(*g),
            WeightConfig::Explicit(v) => WeightSpec::Explicit(v.clone()),
            WeightConfig::File(path) => WeightSpec::Explicit(read_values(path)?),
        })
    }
}

fn read_values(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read weight file {}: {e}", path.display())))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad value {s:?} in {}: {e}", path.display())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LacunarySpec {
    /// `a_j = ratio^j`
    pub ratio: f64,
    /// `M`: windows live in `[-M, M]`.
    pub window: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub size: usize,
    pub times: Vec<f64>,
    pub method: Method,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { size: 30, times: vec![0.1, 1.0, 10.0], method: Method::Quadrature }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalSpec {
    Delta { index: usize, length: usize },
    Values(Vec<f64>),
}

impl SignalSpec {
    pub fn build(&self) -> Result<Signal, CliError> {
        match self {
            SignalSpec::Delta { index, length } => {
                if index >= length {
                    return Err(CliError::Config(format!("delta index {index} outside length {length}")));
                }
                Ok(Signal::new(Signal::delta(*index).resized(*length)))
            }
            SignalSpec::Values(v) => Ok(Signal::new(v.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSection {
    pub signal: SignalSpec,
    pub band_stride: usize,
}

impl Default for OperatorSection {
    fn default() -> Self {
        Self { signal: SignalSpec::Delta { index: 0, length: 64 }, band_stride: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    KernelDecay,
    KernelSmoothness,
    DtSup,
    QnBounds,
    LacunaryTail,
    Cotlar,
    PolyBound,
    KernelPositivity,
    TheoremNorms,
}

impl Estimate {
    pub const ALL: [Estimate; 9] = [
        Estimate::KernelDecay,
        Estimate::KernelSmoothness,
        Estimate::DtSup,
        Estimate::QnBounds,
        Estimate::LacunaryTail,
        Estimate::Cotlar,
        Estimate::PolyBound,
        Estimate::KernelPositivity,
        Estimate::TheoremNorms,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimate::KernelDecay => "kernel_decay",
            Estimate::KernelSmoothness => "kernel_smoothness",
            Estimate::DtSup => "dt_sup",
            Estimate::QnBounds => "qn_bounds",
            Estimate::LacunaryTail => "lacunary_tail",
            Estimate::Cotlar => "cotlar",
            Estimate::PolyBound => "poly_bound",
            Estimate::KernelPositivity => "kernel_positivity",
            Estimate::TheoremNorms => "theorem_norms",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub estimates: Vec<Estimate>,
    pub poly_degrees: Vec<usize>,
    pub x_points: usize,
    pub cotlar_window: i64,
    pub cotlar_q: f64,
    pub cotlar_random_probes: usize,
    /// `C` in the far region `|n - m| > C sqrt(a_k)` of the tail bound.
    pub tail_region: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            estimates: Estimate::ALL.to_vec(),
            poly_degrees: vec![100, 200, 400],
            x_points: 4000,
            cotlar_window: 4,
            cotlar_q: 1.5,
            cotlar_random_probes: 20,
            tail_region: 1.0,
        }
    }
}

/// Whether the growing control joins the norm sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeControl {
    /// Only where it is visible at desk sizes (`alpha < 0`).
    Auto,
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormsSection {
    pub sizes: Vec<usize>,
    pub operators: Vec<Operator>,
    pub weak: bool,
    pub negative_control: NegativeControl,
    pub deltas: bool,
    pub rademacher: usize,
    pub gaussian: usize,
    pub t_min: f64,
    pub per_decade: usize,
    pub band_stride: usize,
}

impl Default for NormsSection {
    fn default() -> Self {
        let s = SweepSettings::default();
        Self {
            sizes: vec![128, 256, 512],
            operators: Operator::ALL.to_vec(),
            weak: true,
            negative_control: NegativeControl::Auto,
            deltas: true,
            rademacher: 10,
            gaussian: 10,
            t_min: s.t_min,
            per_decade: s.per_decade,
            band_stride: s.band_stride,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.params.is_empty() {
            return bad("params must not be empty".into());
        }
        for &(a, b) in &self.params {
            JacobiParams::new(a, b).map_err(|e| CliError::Config(e.to_string()))?;
        }
        if self.sizes.len() < 2 || self.sizes.windows(2).any(|w| w[0] >= w[1]) || self.sizes[0] < 4 {
            return bad("sizes must be at least two strictly increasing values >= 4".into());
        }
        self.t_grid.build().map_err(|e| CliError::Config(format!("t_grid: {e}")))?;
        if self.p_list.len() != self.weights.len() {
            return bad(format!(
                "p_list has {} entries but weights has {}",
                self.p_list.len(),
                self.weights.len()
            ));
        }
        if self.p_list.iter().any(|p| !(*p > 1.0 && p.is_finite())) {
            return bad("every p must exceed 1".into());
        }
        if !(self.quadrature_tol > 0.0) {
            return bad("quadrature_tol must be positive".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be positive".into());
        }
        if self.kernel.size == 0 || self.kernel.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("kernel needs a positive size and non-negative times".into());
        }
        if self.operators.band_stride == 0 {
            return bad("operators.band_stride must be positive".into());
        }
        let v = &self.verify;
        if v.poly_degrees.len() < 2 || v.poly_degrees.windows(2).any(|w| w[0] >= w[1]) || v.poly_degrees[0] == 0 {
            return bad("verify.poly_degrees must be at least two increasing positive values".into());
        }
        if v.x_points < 2 || v.cotlar_window < 1 || v.cotlar_window > self.lacunary.window || !(v.cotlar_q > 1.0) {
            return bad("verify: need x_points >= 2, 1 <= cotlar_window <= lacunary.window, cotlar_q > 1".into());
        }
        if !(v.tail_region > 0.0) {
            return bad("verify.tail_region must be positive".into());
        }
        let n = &self.norms;
        if n.sizes.len() < 2 || n.sizes.windows(2).any(|w| w[0] >= w[1]) || n.sizes[0] < 2 {
            return bad("norms.sizes must be at least two strictly increasing values >= 2".into());
        }
        if n.weak && !n.deltas {
            return bad("weak-type norms need unit-mass probes (norms.deltas)".into());
        }
        self.sweep_settings(self.operators.band_stride)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sweep_settings(n.band_stride)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn jacobi_params(&self) -> Vec<JacobiParams> {
        self.params
            .iter()
            .map(|&(a, b)| JacobiParams::new(a, b).expect("validated"))
            .collect()
    }

    pub fn sweep_settings(&self, band_stride: usize) -> SweepSettings {
        SweepSettings {
            rho: self.rho,
            t_min: self.norms.t_min,
            per_decade: self.norms.per_decade,
            band_stride,
            lambdas: self.lambdas.clone(),
            lacunary_ratio: self.lacunary.ratio,
            m_window: self.lacunary.window,
            coefficients: self.b_coefficients.clone(),
            quadrature_tol: self.quadrature_tol,
        }
    }

    pub fn probe_policy(&self) -> ProbePolicy {
        ProbePolicy {
            deltas: self.norms.deltas,
            rademacher: self.norms.rademacher,
            gaussian: self.norms.gaussian,
            seed: self.seed,
        }
    }

    /// Norm cases for one parameter pair.
    pub fn norm_cases(&self, params: JacobiParams) -> Result<Vec<NormCase>, CliError> {
        let strong: Vec<(f64, WeightSpec)> = self
            .p_list
            .iter()
            .zip(&self.weights)
            .map(|(&p, w)| w.resolve().map(|w| (p, w)))
            .collect::<Result<_, _>>()?;
        let weak = self.weak_weight.resolve()?;
        let mut cases = Vec::new();
        for &op in &self.norms.operators {
            for (p, w) in &strong {
                cases.push(NormCase::strong(op, *p, w.clone()));
            }
            if self.norms.weak {
                cases.push(NormCase::weak(op, weak.clone()));
            }
        }
        let negative = match self.norms.negative_control {
            NegativeControl::Auto => params.alpha() < 0.0,
            NegativeControl::Always => true,
            NegativeControl::Never => false,
        };
        if negative {
            cases.push(NormCase::strong(Operator::Variation, 2.0, WeightSpec::Power(2.0)).negative());
        }
        Ok(cases)
    }

    pub fn method(&self) -> Method {
        self.kernel.method
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.t_grid.build().unwrap().len(), 96);
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.weights[1] = WeightConfig::Explicit(vec![1.0, 2.5]);
        cfg.b_coefficients = Coefficients::Explicit { first: -2, values: vec![0.5, 1.0] };
        cfg.workers = Some(3);
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(RunConfig::from_json(r#"{"sizez": [1]}"#), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"kernel": {"sise": 3}}"#), Err(CliError::Config(_))));
        assert!(RunConfig::from_json(r#"{"params": [[-1.5, 0]]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"sizes": [64, 32]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"p_list": [2]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"rho": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"workers": 0}"#).is_err());
        assert!(RunConfig::from_json("[").is_err());
    }

    #[test]
    fn weight_and_coefficient_syntax() {
        let cfg = RunConfig::from_json(
            r#"{"p_list": [2], "weights": [{"power": 0.5}], "weak_weight": {"constant": 2},
                "b_coefficients": "ones", "kernel": {"method": "spectral"}}"#,
        )
        .unwrap();
        assert_eq!(cfg.weights[0].resolve().unwrap(), WeightSpec::Power(0.5));
        assert_eq!(cfg.b_coefficients, Coefficients::Ones);
        assert_eq!(cfg.method(), Method::Spectral);
    }

    #[test]
    fn weight_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.txt");
        fs::write(&path, "1, 2\n3.5 4").unwrap();
        assert_eq!(
            WeightConfig::File(path).resolve().unwrap(),
            WeightSpec::Explicit(vec![1.0, 2.0, 3.5, 4.0])
        );
        assert!(WeightConfig::File(dir.path().join("missing")).resolve().is_err());
    }

    #[test]
    fn negative_control_follows_alpha() {
        let cfg = RunConfig::default();
        let cheb = cfg.norm_cases(JacobiParams::new(-0.5, -0.5).unwrap()).unwrap();
        let leg = cfg.norm_cases(JacobiParams::new(0.0, 0.0).unwrap()).unwrap();
        assert_eq!(cheb.len(), leg.len() + 1);
        assert_eq!(leg.len(), 16);
        assert_eq!(cheb.last().unwrap().name(), "variation_p2_pow2");
    }

    #[test]
    fn uniform_grid() {
        let g = GridSpec { min: 0.5, max: 2.0, count: 4, geometric: false }.build().unwrap();
        assert_eq!(g.times(), &[0.5, 1.0, 1.5, 2.0]);
    }
}
