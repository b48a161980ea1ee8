//! Acceptance suite. Each criterion runs against its time budget and prints
//! one PASS/FAIL line; the process fails if any criterion does.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use jhl::config::{Estimate, RunConfig};
use jhl_core::basis::{apply_generator, build_generator, coeff_a, coeff_b, ortho_poly, ortho_table};
use jhl_core::heat::{kernel_matrix, markov_defect, semigroup_defect, KernelCache, Method};
use jhl_core::norms::theorem_sweep;
use jhl_core::paths::{
    brute_jump_count, brute_variation, heat_path, jump_count, oscillation, rho_variation, BandSequence,
    SampledPath,
};
use jhl_core::quadrature::build_rule;
use jhl_core::verify::{kernel_positivity, Control, Verdict};
use jhl_core::{JacobiParams, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

const FOUR_PAIRS: [(f64, f64); 4] = [(-0.5, -0.5), (0.0, 0.0), (0.5, -0.5), (2.5, 0.5)];

fn pair(a: f64, b: f64) -> JacobiParams {
    JacobiParams::new(a, b).expect("valid parameters")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn orthonormality() -> Check {
    let mut worst = 0.0f64;
    for (a, b) in FOUR_PAIRS {
        let p = pair(a, b);
        let rule = build_rule(p, 64).map_err(err)?;
        let mut gram = vec![vec![0.0; 51]; 51];
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let v = ortho_table(p, 50, x);
            for n in 0..=50 {
                for m in 0..=50 {
                    gram[n][m] += w * v[n] * v[m];
                }
            }
        }
        for (n, row) in gram.iter().enumerate() {
            for (m, &g) in row.iter().enumerate() {
                worst = worst.max((g - if n == m { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    if worst <= 1e-10 {
        Ok(format!("max Gram defect {worst:.2e}"))
    } else {
        Err(format!("max Gram defect {worst:.2e} > 1e-10"))
    }
}

fn eigenrelation() -> Check {
    let size = 200;
    let mut worst = 0.0f64;
    for (a, b) in FOUR_PAIRS {
        let p = pair(a, b);
        let gen = build_generator(p, size).map_err(err)?;
        for x in [-0.9, -0.3, 0.0, 0.4, 0.99] {
            let f = (0..size).map(|n| ortho_poly(p, n, x)).collect::<Result<Vec<_>, _>>().map_err(err)?;
            let jf = apply_generator(&gen, &Signal::new(f.clone())).map_err(err)?;
            for n in 0..=198 {
                let res = (jf[n] - (x - 1.0) * f[n]).abs() / f[n].abs().max(1.0);
                worst = worst.max(res);
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max relative residual {worst:.2e}"))
    } else {
        Err(format!("max relative residual {worst:.2e} > 1e-9"))
    }
}

fn chebyshev() -> Check {
    let p = pair(-0.5, -0.5);
    let mut worst = (coeff_a(p, 0) - 0.5f64.sqrt()).abs();
    for n in 0..2000 {
        worst = worst.max((coeff_b(p, n) + 1.0).abs());
        if n >= 1 {
            worst = worst.max((coeff_a(p, n) - 0.5).abs());
        }
    }
    if worst <= 1e-14 {
        Ok(format!("max coefficient error {worst:.2e} over n < 2000"))
    } else {
        Err(format!("max coefficient error {worst:.2e} > 1e-14"))
    }
}

fn kernels() -> Check {
    let times = [0.1, 1.0, 10.0];
    let (mut cross, mut markov, mut semigroup) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in FOUR_PAIRS {
        let p = pair(a, b);
        for t in times {
            let q = kernel_matrix(p, t, 30, Method::Quadrature).map_err(err)?;
            let s = kernel_matrix(p, t, 30, Method::Spectral).map_err(err)?;
            let d = (q.entries() - s.entries()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            cross = cross.max(d);
            for n in 0..=20 {
                markov = markov.max(markov_defect(p, t, n, 400).map_err(err)?);
            }
        }
        for (t, s) in [(0.1, 0.1), (0.1, 1.0), (1.0, 1.0), (1.0, 10.0), (10.0, 10.0)] {
            semigroup = semigroup.max(semigroup_defect(p, t, s, 120).map_err(err)?);
        }
    }

    let grid = RunConfig::default().t_grid.build().map_err(err)?;
    let cache = KernelCache::new(grid.t_max()).map_err(err)?;
    let mut min_entry = f64::INFINITY;
    let mut checked = 0;
    for (a, b) in FOUR_PAIRS.into_iter().chain([(1.0, 1.0), (3.0, -0.5), (1.5, 0.2)]) {
        let p = pair(a, b);
        if !p.positivity_regime() {
            continue;
        }
        checked += 1;
        let r = kernel_positivity(&cache, p, &[32, 64], &grid).map_err(err)?;
        min_entry = min_entry.min(r.diagnostics["min_entry"]);
        if r.verdict != Verdict::Stable {
            return Err(format!("positivity report for {} is {}", p.tag(), r.verdict.name()));
        }
    }

    let summary = format!(
        "cross-method {cross:.2e}, Markov {markov:.2e}, semigroup {semigroup:.2e}, \
         min entry {min_entry:.2e} over {checked} pairs"
    );
    if cross <= 1e-8 && markov <= 1e-8 && semigroup <= 1e-8 && min_entry >= -1e-12 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn path_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..1000 {
        let len = rng.random_range(2..=12);
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let path = SampledPath::from_values(values).map_err(err)?;
        let rho = [1.5, 2.0, 2.5, 4.0][k % 4];
        let dp = rho_variation(&path, rho).map_err(err)?;
        let brute = brute_variation(&path, rho).map_err(err)?;
        worst = worst.max((dp - brute).abs() / brute.max(1.0));
    }
    if worst > 1e-12 {
        return Err(format!("variation mismatch {worst:.2e}"));
    }

    let mut paths = 0;
    for len in 2..=10 {
        for bits in 0u32..(1 << len) {
            let values: Vec<f64> = (0..len).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            let path = SampledPath::from_values(values).map_err(err)?;
            for lambda in [0.5, 1.5] {
                let greedy = jump_count(&path, lambda).map_err(err)?;
                let brute = brute_jump_count(&path, lambda).map_err(err)?;
                if greedy != brute {
                    return Err(format!("jump count {greedy} != {brute} at len {len}, bits {bits:b}"));
                }
            }
            paths += 1;
        }
    }
    Ok(format!("variation max error {worst:.2e} on 1000 paths, jumps exact on {paths} sign paths"))
}

fn path_inequalities() -> Check {
    let cfg = RunConfig::default();
    let grid = cfg.t_grid.build().map_err(err)?;
    let cache = KernelCache::new(grid.t_max()).map_err(err)?;
    let bands = BandSequence::dyadic(-6, 9).map_err(err)?;
    let factor = 2f64.powf(1.0 + 1.0 / cfg.rho);
    let size = 64;
    let (mut paths, mut violations) = (0, 0);
    for &(a, b) in &cfg.params {
        let p = pair(a, b);
        for m in 0..=32 {
            let f = Signal::new(Signal::delta(m).resized(size));
            for n in 0..size {
                let path = heat_path(&cache, p, &f, n, &grid, size).map_err(err)?;
                let v_rho = rho_variation(&path, cfg.rho).map_err(err)?;
                let v_two = rho_variation(&path, 2.0).map_err(err)?;
                for &lambda in &cfg.lambdas {
                    let count = jump_count(&path, lambda).map_err(err)? as f64;
                    if lambda * count.powf(1.0 / cfg.rho) > factor * v_rho * (1.0 + 1e-12) {
                        violations += 1;
                    }
                }
                if oscillation(&path, &bands).map_err(err)? > v_two * (1.0 + 1e-12) {
                    violations += 1;
                }
                paths += 1;
            }
        }
    }
    let summary = format!("{violations} violations on {paths} heat paths");
    if violations == 0 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn verify_estimates() -> Check {
    let mut cfg = RunConfig::default();
    cfg.verify.estimates = vec![
        Estimate::KernelDecay,
        Estimate::KernelSmoothness,
        Estimate::DtSup,
        Estimate::QnBounds,
        Estimate::LacunaryTail,
        Estimate::Cotlar,
        Estimate::PolyBound,
    ];
    let mut worst = 0.0f64;
    let mut count = 0;
    let mut unstable = Vec::new();
    for p in cfg.jacobi_params() {
        for r in jhl::commands::verify_reports(&cfg, p).map_err(err)? {
            count += 1;
            worst = worst.max(r.stability_ratio);
            if r.verdict != Verdict::Stable {
                unstable.push(format!("{}/{} ({:.3})", p.tag(), r.estimate_name, r.stability_ratio));
            }
        }
    }
    if unstable.is_empty() && count == 21 {
        Ok(format!("{count} reports stable, worst ratio {worst:.4}"))
    } else {
        Err(format!("{count} reports, not stable: {}", unstable.join(", ")))
    }
}

fn theorem_sweeps() -> Check {
    let cfg = RunConfig::default();
    let settings = cfg.sweep_settings(cfg.norms.band_stride);
    let policy = cfg.probe_policy();
    let (mut stable, mut growing, mut misses) = (0, 0, Vec::new());
    for p in cfg.jacobi_params() {
        let cases = cfg.norm_cases(p).map_err(err)?;
        let (reports, _) = theorem_sweep(p, &cases, &cfg.norms.sizes, &settings, &policy).map_err(err)?;
        for r in &reports {
            match (r.control, r.verdict) {
                (Control::Positive, Verdict::Stable) => stable += 1,
                (Control::Negative, Verdict::Growing) => growing += 1,
                _ => misses.push(format!("{}/{} {} ({:.3})", p.tag(), r.estimate_name, r.verdict.name(), r.stability_ratio)),
            }
        }
    }
    let summary = format!("{stable} positive cases stable, {growing} negative controls growing");
    if misses.is_empty() && growing > 0 {
        Ok(summary)
    } else {
        Err(format!("{summary}; missed: {}", misses.join(", ")))
    }
}

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).expect("readable output dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "timings.json") {
                let bytes = fs::read(&path).expect("readable output");
                out.insert(path.strip_prefix(root).expect("under root").to_path_buf(), bytes);
            }
        }
    }
    out
}

fn jhl(args: &[&str]) -> Result<(i32, Duration), String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_jhl")).args(args).output().map_err(err)?;
    Ok((status.status.code().unwrap_or(-1), start.elapsed()))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = dir.path().join("config.json");
    let mut cfg = RunConfig { sizes: vec![16, 32], ..RunConfig::default() };
    cfg.verify.estimates.retain(|e| *e != Estimate::TheoremNorms);
    cfg.verify.poly_degrees = vec![20, 40];
    cfg.norms.sizes = vec![16, 32];
    cfg.seed = 11;
    fs::write(&config, cfg.to_json()).map_err(err)?;
    let config = config.to_str().ok_or("non-UTF-8 temp path")?;

    let out = dir.path().join("out");
    let other = dir.path().join("other");
    let (out_s, other_s) = (out.to_str().ok_or("non-UTF-8 temp path")?, other.to_str().ok_or("non-UTF-8 temp path")?);
    let mut files = 0;
    for cmd in ["kernel", "operators", "verify", "norms"] {
        let mut runs = Vec::new();
        for (target, workers) in [(out_s, "1"), (out_s, "1"), (other_s, "4")] {
            let (code, _) = jhl(&[cmd, "--config", config, "--out", target, "--workers", workers])?;
            if code != 0 && code != 4 {
                return Err(format!("{cmd} exited with {code}"));
            }
            runs.push((code, snapshot(&Path::new(target).join(cmd))));
        }
        if runs[0] != runs[1] {
            return Err(format!("{cmd} outputs differ between identical reruns"));
        }
        // The echoed config records the worker count and output path.
        for (_, files) in runs.iter_mut() {
            files.remove(Path::new("config.json"));
        }
        if runs[0] != runs[2] {
            return Err(format!("{cmd} outputs depend on the worker count"));
        }
        files += runs[0].1.len();
    }

    let mut empty = RunConfig::default();
    empty.operators.signal = jhl::config::SignalSpec::Values(Vec::new());
    let empty_config = dir.path().join("empty.json");
    fs::write(&empty_config, empty.to_json()).map_err(err)?;
    let out = dir.path().join("overhead");
    let (code, elapsed) = jhl(&[
        "operators",
        "--config",
        empty_config.to_str().ok_or("non-UTF-8 temp path")?,
        "--out",
        out.to_str().ok_or("non-UTF-8 temp path")?,
    ])?;
    let summary = format!("{files} files identical across reruns and worker counts, startup overhead {:.3}s", elapsed.as_secs_f64());
    if code == 0 && elapsed < Duration::from_secs(1) {
        Ok(summary)
    } else {
        Err(summary)
    }
}

struct Criterion {
    number: usize,
    name: &'static str,
    budget: Duration,
    check: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion { number: 1, name: "orthonormality", budget: Duration::from_secs(10), check: orthonormality },
        Criterion { number: 2, name: "eigenrelation", budget: Duration::from_secs(5), check: eigenrelation },
        Criterion { number: 3, name: "chebyshev coefficients", budget: Duration::from_secs(1), check: chebyshev },
        Criterion { number: 4, name: "kernel oracles", budget: Duration::from_secs(60), check: kernels },
        Criterion { number: 5, name: "path functional oracles", budget: Duration::from_secs(30), check: path_oracles },
        Criterion { number: 6, name: "path inequalities", budget: Duration::from_secs(60), check: path_inequalities },
        Criterion { number: 7, name: "estimate stability", budget: Duration::from_secs(900), check: verify_estimates },
        Criterion { number: 8, name: "theorem sweeps", budget: Duration::from_secs(1200), check: theorem_sweeps },
        Criterion { number: 9, name: "determinism", budget: Duration::from_secs(60), check: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let result = (c.check)();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over budget")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {} ({}): {} [{:.2}s of {}s]",
            if ok { "PASS" } else { "FAIL" },
            c.number,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
