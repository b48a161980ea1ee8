//! The four commands. Each writes `<out>/<command>/config.json` and then one
//! directory per parameter pair.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use jhl_core::basis::build_generator;
use jhl_core::heat::{kernel_matrix, markov_defect, semigroup_defect, spectral_kernel, KernelCache, KernelEngine, Method, SPECTRAL_RATIO};
use jhl_core::norms::{batch_verdict, operator_table, theorem_sweep, NormRow};
use jhl_core::paths::LacunarySequence;
use jhl_core::verify::{self, timed, EstimateReport, Verdict};
use jhl_core::weights::ProbePolicy;
use jhl_core::JacobiParams;
use serde::Serialize;

use crate::config::{Estimate, RunConfig};
use crate::output::{ensure_dir, float, write_csv, write_json};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Kernel,
    Operators,
    Verify,
    Norms,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Kernel => "kernel",
            Command::Operators => "operators",
            Command::Verify => "verify",
            Command::Norms => "norms",
        }
    }
}

/// What a run produced. `failures` lists reports that missed their expected
/// verdict.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    pub failures: Vec<String>,
}

impl Outcome {
    /// Turns missed expectations into a verification error.
    pub fn into_result(self) -> Result<Self, CliError> {
        if self.failures.is_empty() {
            Ok(self)
        } else {
            Err(CliError::Verification(format!(
                "{} report(s) missed their expected verdict: {}",
                self.failures.len(),
                self.failures.join(", ")
            )))
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let root = ensure_dir(cfg.out.join(cmd.name()))?;
    let mut outcome = Outcome::default();
    let config_path = root.join("config.json");
    write_json(&config_path, cfg)?;
    outcome.files.push(config_path);
    match cmd {
        Command::Kernel => kernel(cfg, &root, &mut outcome)?,
        Command::Operators => operators(cfg, &root, &mut outcome)?,
        Command::Verify => verify(cfg, &root, &mut outcome)?,
        Command::Norms => norms(cfg, &root, &mut outcome)?,
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct KernelDefects {
    t: f64,
    kernel_file: String,
    dt_file: String,
    markov: f64,
    semigroup: f64,
    cross_method: f64,
}

#[derive(Serialize)]
struct KernelSidecar {
    params: JacobiParams,
    method: Method,
    size: usize,
    order: usize,
    spectral_truncation: usize,
    quadrature_tol: f64,
    defects: Vec<KernelDefects>,
}

fn matrix_rows(m: &jhl_core::heat::HeatKernel) -> impl Iterator<Item = Vec<String>> + '_ {
    m.entries()
        .indexed_iter()
        .map(|((i, j), v)| vec![i.to_string(), j.to_string(), float(*v)])
}

fn kernel(cfg: &RunConfig, root: &std::path::Path, out: &mut Outcome) -> Result<(), CliError> {
    let size = cfg.kernel.size;
    let header: Vec<String> = ["row", "col", "value"].map(String::from).to_vec();
    let t_max = cfg.kernel.times.iter().copied().fold(1.0, f64::max);
    for params in cfg.jacobi_params() {
        let dir = ensure_dir(root.join(params.tag()))?;
        let engine = KernelEngine::new(params, size, t_max, cfg.quadrature_tol)?;
        let check = 4 * size;
        let mut defects = Vec::new();
        for &t in &cfg.kernel.times {
            let k = match cfg.kernel.method {
                Method::Quadrature => engine.kernel(t)?,
                Method::Spectral => spectral_kernel(params, t, size, SPECTRAL_RATIO * size)?,
            };
            let dk = if t == 0.0 {
                let g = build_generator(params, size)?;
                generator_entries(&g, size)
            } else {
                engine.kernel_dt(t)?.into_iter().collect()
            };
            let kernel_file = format!("kernel_t{t}.csv");
            let dt_file = format!("dt_t{t}.csv");
            write_csv(&dir.join(&kernel_file), &header, matrix_rows(&k))?;
            write_csv(
                &dir.join(&dt_file),
                &header,
                dk.iter().enumerate().map(|(idx, v)| {
                    vec![(idx / size).to_string(), (idx % size).to_string(), float(*v)]
                }),
            )?;
            out.files.push(dir.join(&kernel_file));
            out.files.push(dir.join(&dt_file));
            let markov = (0..size)
                .map(|n| markov_defect(params, t, n, check))
                .collect::<Result<Vec<_>, _>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let semigroup = semigroup_defect(params, t, t, check)?;
            let quad = kernel_matrix(params, t, size, Method::Quadrature)?;
            let spec = kernel_matrix(params, t, size, Method::Spectral)?;
            let cross = (quad.entries() - spec.entries()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            out.summary.push(format!(
                "{} t={t}: markov {markov:.3e} semigroup {semigroup:.3e} cross-method {cross:.3e}",
                params.tag()
            ));
            defects.push(KernelDefects { t, kernel_file, dt_file, markov, semigroup, cross_method: cross });
        }
        let sidecar = KernelSidecar {
            params,
            method: cfg.kernel.method,
            size,
            order: engine.order(),
            spectral_truncation: SPECTRAL_RATIO * size,
            quadrature_tol: cfg.quadrature_tol,
            defects,
        };
        let path = dir.join("kernel.json");
        write_json(&path, &sidecar)?;
        out.files.push(path);
    }
    Ok(())
}

/// Row-major entries of the generator, the derivative of `K_t` at `t = 0`.
fn generator_entries(g: &jhl_core::basis::TridiagonalGenerator, size: usize) -> Vec<f64> {
    (0..size * size).map(|idx| g.entry(idx / size, idx % size)).collect()
}

fn operators(cfg: &RunConfig, root: &std::path::Path, out: &mut Outcome) -> Result<(), CliError> {
    let signal = cfg.operators.signal.build()?;
    let grid = cfg.t_grid.build()?;
    let settings = cfg.sweep_settings(cfg.operators.band_stride);
    let mut header: Vec<String> = ["n", "variation", "oscillation"].map(String::from).to_vec();
    header.extend(settings.lambdas.iter().map(|l| format!("jump_{l}")));
    header.extend(["s_star", "margin"].map(String::from));
    for params in cfg.jacobi_params() {
        let dir = ensure_dir(root.join(params.tag()))?;
        let rows = operator_table(params, &signal, &grid, &settings)?;
        let negative = rows.iter().filter(|r| r.margin < 0.0).count();
        out.summary.push(format!("{}: {} rows, {negative} negative margins", params.tag(), rows.len()));
        let path = dir.join("operators.csv");
        write_csv(
            &path,
            &header,
            rows.iter().map(|r| {
                let mut v = vec![r.n.to_string(), float(r.variation), float(r.oscillation)];
                v.extend(r.jumps.iter().map(|j| float(*j)));
                v.push(float(r.s_star));
                v.push(float(r.margin));
                v
            }),
        )?;
        out.files.push(path);
    }
    Ok(())
}

/// Reports of every enabled estimate for one parameter pair, in config
/// order.
pub fn verify_reports(cfg: &RunConfig, params: JacobiParams) -> Result<Vec<EstimateReport>, CliError> {
    let grid = cfg.t_grid.build()?;
    let m = cfg.lacunary.window;
    let lac = LacunarySequence::geometric(cfg.lacunary.ratio, -m, m + 1)?;
    let t_top = grid.t_max().max(lac.get(m + 1)?);
    let cache = KernelCache::with_tolerance(t_top, cfg.quadrature_tol)?;
    let sizes = &cfg.sizes;
    let v = &cfg.verify;
    let coef = &cfg.b_coefficients;
    let mut reports = Vec::new();
    for est in &v.estimates {
        let name = est.name();
        match est {
            Estimate::KernelDecay => reports.push(timed(name, params, sizes, || {
                verify::verify_kernel_decay(&cache, params, sizes, &grid, cfg.rho)
            })),
            Estimate::KernelSmoothness => reports.push(timed(name, params, sizes, || {
                verify::verify_kernel_smoothness(&cache, params, sizes, &grid, cfg.rho)
            })),
            Estimate::DtSup => reports.push(timed(name, params, sizes, || {
                verify::verify_dt_sup(&cache, params, sizes, &grid)
            })),
            Estimate::QnBounds => reports.push(timed(name, params, sizes, || {
                verify::verify_qn_bounds(&cache, params, &lac, coef, m, sizes)
            })),
            Estimate::LacunaryTail => reports.push(timed(name, params, sizes, || {
                verify::verify_lacunary_tail(
                    &cache,
                    params,
                    &lac,
                    &jhl_core::paths::Coefficients::Ones,
                    m,
                    sizes,
                    v.tail_region,
                )
            })),
            Estimate::Cotlar => {
                let half = v.cotlar_random_probes / 2;
                let probes = ProbePolicy {
                    deltas: true,
                    rademacher: v.cotlar_random_probes - half,
                    gaussian: half,
                    seed: cfg.seed,
                };
                reports.push(timed(name, params, sizes, || {
                    verify::verify_cotlar(&cache, params, v.cotlar_window, &lac, coef, v.cotlar_q, &probes, sizes)
                }))
            }
            Estimate::PolyBound => reports.push(timed(name, params, &v.poly_degrees, || {
                verify::verify_poly_bound(params, &v.poly_degrees, v.x_points)
            })),
            Estimate::KernelPositivity => reports.push(timed(name, params, sizes, || {
                verify::kernel_positivity(&cache, params, sizes, &grid)
            })),
            Estimate::TheoremNorms => {
                let cases = cfg.norm_cases(params)?;
                let start = Instant::now();
                let settings = cfg.sweep_settings(cfg.norms.band_stride);
                match theorem_sweep(params, &cases, &cfg.norms.sizes, &settings, &cfg.probe_policy()) {
                    Ok((mut rs, _)) => {
                        // The cases share one sweep; each carries its total time.
                        let elapsed = start.elapsed().as_secs_f64();
                        for r in &mut rs {
                            r.runtime = elapsed;
                        }
                        reports.extend(rs);
                    }
                    Err(e) => {
                        let mut r = EstimateReport::failed(name, params, cfg.norms.sizes.clone(), &e);
                        r.runtime = start.elapsed().as_secs_f64();
                        reports.push(r);
                    }
                }
            }
        }
    }
    Ok(reports)
}

fn summary_header() -> Vec<String> {
    ["params", "estimate", "control", "verdict", "constant", "stability_ratio"].map(String::from).to_vec()
}

fn summary_row(r: &EstimateReport) -> Vec<String> {
    vec![
        r.params.tag(),
        r.estimate_name.clone(),
        format!("{:?}", r.control).to_lowercase(),
        r.verdict.name().to_string(),
        float(r.largest_constant()),
        float(r.stability_ratio),
    ]
}

fn record_reports(
    reports: &[EstimateReport],
    dir: &std::path::Path,
    out: &mut Outcome,
) -> Result<(), CliError> {
    let timings: BTreeMap<&str, f64> = reports.iter().map(|r| (r.estimate_name.as_str(), r.runtime)).collect();
    let path = dir.join("timings.json");
    write_json(&path, &timings)?;
    out.files.push(path);
    for r in reports {
        out.summary.push(format!(
            "{:<12} {:<28} {:<8} {:<8} constant {:.6e} ratio {:.4}",
            r.params.tag(),
            r.estimate_name,
            format!("{:?}", r.control).to_lowercase(),
            r.verdict.name(),
            r.largest_constant(),
            r.stability_ratio
        ));
        if !r.meets_expectation() {
            out.failures.push(format!("{}/{}", r.params.tag(), r.estimate_name));
        }
    }
    Ok(())
}

fn verify(cfg: &RunConfig, root: &std::path::Path, out: &mut Outcome) -> Result<(), CliError> {
    let mut all = Vec::new();
    for params in cfg.jacobi_params() {
        let dir = ensure_dir(root.join(params.tag()))?;
        let reports = verify_reports(cfg, params)?;
        for r in &reports {
            let path = dir.join(format!("{}.json", r.estimate_name));
            write_json(&path, r)?;
            out.files.push(path);
        }
        record_reports(&reports, &dir, out)?;
        all.extend(reports);
    }
    let path = root.join("summary.csv");
    write_csv(&path, &summary_header(), all.iter().map(summary_row))?;
    out.files.push(path);
    Ok(())
}

fn norms(cfg: &RunConfig, root: &std::path::Path, out: &mut Outcome) -> Result<(), CliError> {
    let settings = cfg.sweep_settings(cfg.norms.band_stride);
    let header: Vec<String> =
        ["case", "operator", "p", "weight", "size", "norm_estimate", "weak11_estimate", "stability_ratio"]
            .map(String::from)
            .to_vec();
    let mut all = Vec::new();
    for params in cfg.jacobi_params() {
        let dir = ensure_dir(root.join(params.tag()))?;
        let cases = cfg.norm_cases(params)?;
        let start = Instant::now();
        let (mut reports, rows) = theorem_sweep(params, &cases, &cfg.norms.sizes, &settings, &cfg.probe_policy())?;
        let elapsed = start.elapsed().as_secs_f64();
        for r in &mut reports {
            r.runtime = elapsed;
        }
        let ratio: BTreeMap<&str, f64> =
            reports.iter().map(|r| (r.estimate_name.as_str(), r.stability_ratio)).collect();
        let path = dir.join("norms.csv");
        write_csv(&path, &header, rows.iter().map(|r: &NormRow| {
            vec![
                r.case.clone(),
                r.operator.to_string(),
                float(r.p),
                r.weight.clone(),
                r.size.to_string(),
                float(r.norm_estimate),
                float(r.weak11_estimate),
                float(ratio[r.case.as_str()]),
            ]
        }))?;
        out.files.push(path);
        let path = dir.join("reports.json");
        write_json(&path, &reports)?;
        out.files.push(path);
        record_reports(&reports, &dir, out)?;
        if batch_verdict(&reports) == Verdict::Failed {
            out.summary.push(format!("{}: at least one failed report", params.tag()));
        }
        all.extend(reports);
    }
    let path = root.join("summary.csv");
    write_csv(&path, &summary_header(), all.iter().map(summary_row))?;
    out.files.push(path);
    Ok(())
}
