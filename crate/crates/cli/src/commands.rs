//! The four experiment commands and their CSV artifacts.

use std::fmt::Write as _;
use std::path::Path;

use qglab::ergodicity::{
    self, convergence_sweep, derive_seed, edge_constant_to_csv, edge_function_to_csv, Observable,
    SweepConfig,
};
use qglab::graph::{adjacency_spectrum, generate_graph, Graph};
use qglab::quantum::{band_spectrum_from, kirchhoff_residual};
use qglab::tree::{default_scan_n, find_bands, kappa_from_basis, kesten_mckay_mass, psi_density_grid};
use qglab::validate::run_identity_suite;

use crate::config::{ConfigError, ExperimentConfig, ObservableKind};

/// Command failure, mapped onto the documented exit codes.
#[derive(Debug)]
pub enum RunError {
    /// Exit code 2.
    Config(ConfigError),
    /// Exit code 3.
    Numerical(qglab::Error),
    /// Exit code 3: `n` identity checks failed.
    Identity(usize),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<qglab::Error> for RunError {
    fn from(e: qglab::Error) -> Self {
        RunError::Numerical(e)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Identity(_) => 3,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
            RunError::Identity(n) => write!(f, "{n} identity check(s) failed"),
        }
    }
}

/// All numeric CSV fields carry 17 significant digits.
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(out_dir: &Path, name: &str, content: &str) -> Result<(), RunError> {
    std::fs::create_dir_all(out_dir).map_err(|e| RunError::Numerical(e.into()))?;
    std::fs::write(out_dir.join(name), content).map_err(|e| RunError::Numerical(e.into()))?;
    Ok(())
}

fn config_err(field: &str, message: impl Into<String>) -> RunError {
    RunError::Config(ConfigError { field: field.into(), message: message.into() })
}

/// `bands`: scan the λ-range, write the band table, the Dirichlet set and a
/// mid-band density profile per band.
pub fn cmd_bands(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    let model = cfg.build_model()?;
    let scan = default_scan_n(cfg.lambda_range);
    let structure = find_bands(&model, cfg.lambda_range, scan)?;

    let mut bands_csv = String::from("index,lo,hi,w_lo,w_hi,direction\n");
    for b in &structure.bands {
        let _ = writeln!(
            bands_csv,
            "{},{},{},{},{},{}",
            b.index + 1,
            fmt_f(b.lo),
            fmt_f(b.hi),
            fmt_f(model.w(b.lo)),
            fmt_f(model.w(b.hi)),
            b.direction.as_str()
        );
    }
    write_file(out_dir, "bands.csv", &bands_csv)?;

    let mut dir_csv = String::from("index,lambda\n");
    for (i, d) in structure.dirichlet.iter().enumerate() {
        let _ = writeln!(dir_csv, "{},{}", i + 1, fmt_f(*d));
    }
    write_file(out_dir, "dirichlet.csv", &dir_csv)?;

    let mut psi_csv = String::from("lambda,x,psi\n");
    for b in &structure.bands {
        let lambda = b.sample(0.5);
        let basis = model.basis(lambda);
        let kappa = kappa_from_basis(&model, &basis)?;
        let grid = psi_density_grid(&model, &basis, kappa);
        let n = basis.grid_n();
        for (i, v) in grid.iter().enumerate() {
            let x = model.length() * i as f64 / n as f64;
            let _ = writeln!(psi_csv, "{},{},{}", fmt_f(lambda), fmt_f(x), fmt_f(*v));
        }
    }
    write_file(out_dir, "psi_density.csv", &psi_csv)?;

    println!(
        "bands: {} fixed band(s), {} Dirichlet point(s) in [{}, {}]",
        structure.bands.len(),
        structure.dirichlet.len(),
        cfg.lambda_range.0,
        cfg.lambda_range.1
    );
    for b in &structure.bands {
        println!(
            "  band {}: λ ∈ ({:.6}, {:.6}), w {} from {:.6} to {:.6}",
            b.index + 1,
            b.lo,
            b.hi,
            b.direction.as_str(),
            model.w(b.lo),
            model.w(b.hi)
        );
    }
    Ok(())
}

fn selected_band<'a>(
    cfg: &ExperimentConfig,
    structure: &'a qglab::tree::BandStructure,
) -> Result<&'a qglab::tree::Band, RunError> {
    structure.bands.get(cfg.band_index - 1).ok_or_else(|| {
        config_err(
            "band.index",
            format!(
                "band {} requested but only {} band(s) found in ({}, {})",
                cfg.band_index,
                structure.bands.len(),
                cfg.lambda_range.0,
                cfg.lambda_range.1
            ),
        )
    })
}

/// `spectrum`: band spectrum of a single graph, with Kirchhoff residual
/// columns and a Kesten-McKay count summary.
pub fn cmd_spectrum(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    if cfg.sizes.len() != 1 {
        return Err(config_err("graph.sizes", "spectrum needs exactly one graph size"));
    }
    if cfg.q == 1 && (cfg.alpha != 0.0 || cfg.potential != crate::config::PotentialSpec::Zero) {
        return Err(config_err(
            "model.q",
            "q = 1 (cycle graphs) supports only α = 0 and U = 0; the band machinery degenerates otherwise",
        ));
    }
    let model = cfg.build_model()?;
    let structure = find_bands(&model, cfg.lambda_range, default_scan_n(cfg.lambda_range))?;
    let band = selected_band(cfg, &structure)?;
    let n = cfg.sizes[0];
    let g = generate_graph(cfg.kind, n, cfg.degree, cfg.seed)?;
    let spectrum = adjacency_spectrum(&g)?;
    let pairs = band_spectrum_from(&g, &model, band, &spectrum)?;

    let mut csv = String::from("band,lambda,m,multiplicity_index,kirchhoff_continuity,kirchhoff_current\n");
    let mut mult = 0usize;
    for (i, p) in pairs.iter().enumerate() {
        if i > 0 && (p.lambda - pairs[i - 1].lambda).abs() < 1e-12 {
            mult += 1;
        } else {
            mult = 0;
        }
        let (cont, curr) = kirchhoff_residual(&g, p, &model);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            cfg.band_index,
            fmt_f(p.lambda),
            fmt_f(p.m),
            mult,
            fmt_f(cont),
            fmt_f(curr)
        );
    }
    write_file(out_dir, "spectrum.csv", &csv)?;

    for (i, p) in pairs.iter().take(cfg.psi_dump).enumerate() {
        let mut dump = String::from("edge,x,psi\n");
        let gn = p.basis.grid_n();
        for e in 0..g.n_undirected() {
            let samples = p.edge_samples(&g, e);
            for (j, v) in samples.iter().enumerate() {
                let x = model.length() * j as f64 / gn as f64;
                let _ = writeln!(dump, "{e},{},{}", fmt_f(x), fmt_f(*v));
            }
        }
        write_file(out_dir, &format!("psi_{i:03}.csv"), &dump)?;
    }

    let (wlo, whi) = band.w_interval(&model);
    let mass = kesten_mckay_mass(model.q(), wlo, whi);
    let frac = pairs.len() as f64 / n as f64;
    println!(
        "spectrum: N = {n}, N(I) = {}, N(I)/N = {:.6}, Kesten-McKay mass of w(I) = {:.6}, relative deviation = {:.2}%",
        pairs.len(),
        frac,
        mass,
        100.0 * (frac - mass).abs() / mass
    );
    Ok(())
}

fn observable_generator(
    cfg: &ExperimentConfig,
) -> impl Fn(&Graph, &mut rand_chacha::ChaCha8Rng) -> qglab::Result<Observable> + Sync + '_ {
    let kind = cfg.observable;
    let grid_n = cfg.grid_n;
    let length = cfg.length;
    move |g, rng| {
        Ok(match kind {
            ObservableKind::EdgeConstant => ergodicity::random_pm1_edge_constant(g, rng),
            ObservableKind::EdgeFunction => ergodicity::sign_modulated_sine(g, length, grid_n, rng),
            ObservableKind::PathKernel => {
                ergodicity::random_separable_kernel_k2(g, grid_n.min(64), rng)
            }
        })
    }
}

/// `sweep`: the convergence experiment over ascending sizes.
pub fn cmd_sweep(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    if cfg.sizes.len() < 2 {
        return Err(config_err("graph.sizes", "sweep needs at least two ascending sizes"));
    }
    if cfg.trials == 0 {
        return Err(config_err("run.trials", "sweep needs trials ≥ 1"));
    }
    let model = cfg.build_model()?;
    // resolve the band early for a clear error before the heavy run
    let structure = find_bands(&model, cfg.lambda_range, default_scan_n(cfg.lambda_range))?;
    let _ = selected_band(cfg, &structure)?;

    let sweep_cfg = SweepConfig {
        kind: cfg.kind,
        sizes: cfg.sizes.clone(),
        degree: cfg.degree,
        model: model.clone(),
        lambda_range: cfg.lambda_range,
        band_index: cfg.band_index - 1,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let gen = observable_generator(cfg);
    let table = convergence_sweep(&sweep_cfg, &gen)?;

    let mut rows = String::from("N,trial,band,N_I,variance\n");
    for r in &table.rows {
        let _ = writeln!(rows, "{},{},{},{},{}", r.n, r.trial, r.band_index + 1, r.n_band, fmt_f(r.variance));
    }
    write_file(out_dir, "sweep.csv", &rows)?;

    let mut summary = String::from("N,mean_variance,stderr,trials\n");
    for s in &table.summaries {
        let _ = writeln!(summary, "{},{},{},{}", s.n, fmt_f(s.mean_variance), fmt_f(s.stderr), s.trials);
    }
    write_file(out_dir, "summary.csv", &summary)?;

    if cfg.observable_dump {
        let n0 = cfg.sizes[0];
        let g = generate_graph(cfg.kind, n0, cfg.degree, derive_seed(cfg.seed, n0, 0, 0xA5))?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand_chacha::rand_core::SeedableRng>::seed_from_u64(
            derive_seed(cfg.seed, n0, 0, 0x0B),
        );
        let obs = gen(&g, &mut rng)?;
        let (name, text) = match &obs {
            Observable::EdgeConstant(v) => ("observable_edge_constant.csv", edge_constant_to_csv(v)),
            Observable::EdgeFunction(s) => ("observable_edge_function.csv", edge_function_to_csv(s)),
            Observable::PathKernel(k) => {
                let mut t = String::from("path_id,coeff\n");
                if let qglab::ergodicity::KernelStorage::Separable { coeff, .. } = &k.storage {
                    for (i, c) in coeff.iter().enumerate() {
                        let _ = writeln!(t, "{i},{}", fmt_f(*c));
                    }
                }
                ("observable_path_kernel.csv", t)
            }
        };
        write_file(out_dir, name, &text)?;
    }

    println!(
        "sweep: {} sizes × {} trials, observable = {}",
        cfg.sizes.len(),
        cfg.trials,
        cfg.observable.as_str()
    );
    for s in &table.summaries {
        println!("  N = {:5}: mean variance {:.6e} ± {:.2e} ({} trials)", s.n, s.mean_variance, s.stderr, s.trials);
    }
    println!("decay ratio (mean variance, largest/smallest N): {:.6}", table.decay_ratio());
    Ok(())
}

/// `validate`: run the identity suite at the configured tolerances. Exit is
/// nonzero iff any identity fails.
pub fn cmd_validate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<(), RunError> {
    let model = cfg.build_model()?;
    let graph_n = *cfg.sizes.first().unwrap_or(&50);
    let checks = run_identity_suite(&model, cfg.lambda_range, graph_n, cfg.seed)?;

    let mut csv = String::from("check,measured,bound,relation,status\n");
    let mut failures = 0usize;
    for c in &checks {
        let rel = if c.upper { "le" } else { "ge" };
        let status = if c.passed { "pass" } else { "fail" };
        let _ = writeln!(csv, "{},{},{},{rel},{status}", c.name, fmt_f(c.measured), fmt_f(c.bound));
        let sym = if c.upper { "≤" } else { "≥" };
        println!(
            "{} {}: {:.3e} {} {:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            sym,
            c.bound
        );
        if !c.passed {
            failures += 1;
        }
    }
    write_file(out_dir, "validate.csv", &csv)?;

    if failures > 0 {
        return Err(RunError::Identity(failures));
    }
    println!("all {} identity checks passed", checks.len());
    Ok(())
}
