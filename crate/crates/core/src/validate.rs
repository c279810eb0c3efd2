//! The exact-identity suite: every structural identity the library relies
//! on, measured at the configured grid and reported with its tolerance.
//! One failed check means the configuration (usually the grid) cannot
//! support the claimed accuracy.

use num_complex::Complex64;

use crate::edge_ode::{edge_basis_rk4, unit_moments};
use crate::graph::{adjacency_spectrum, generate_graph, GraphKind};
use crate::quad::simpson;
use crate::quantum::{band_spectrum_from, kirchhoff_residual, metric_norm_sq, nb_lift};
use crate::tree::{
    default_scan_n, find_bands, green_tree_discrete, invert_w_on_band, kappa_from_basis, mu_pm,
    psi_correlator_from_basis, psi_density_from_basis, psi_density_grid, spherical,
    spherical_closed, tree_adjacency_resolvent_cf, TreeModel,
};
use crate::{Error, Result};

/// Outcome of one identity check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    /// Measured residual (or ratio, for order checks).
    pub measured: f64,
    /// The bound it is compared against.
    pub bound: f64,
    /// `true` when the measured value must be ≤ the bound, `false` for ≥.
    pub upper: bool,
    pub passed: bool,
}

impl CheckResult {
    fn le(name: &'static str, measured: f64, bound: f64) -> Self {
        CheckResult { name, measured, bound, upper: true, passed: measured <= bound }
    }

    fn ge(name: &'static str, measured: f64, bound: f64) -> Self {
        CheckResult { name, measured, bound, upper: false, passed: measured >= bound }
    }
}

/// Documented ODE tolerance for the identity suite: `1e-8` from grid 1024
/// up, `1e-6` otherwise (coarser grids are expected to fail).
pub fn tol_ode(grid_n: usize) -> f64 {
    if grid_n >= 1024 {
        1e-8
    } else {
        1e-6
    }
}

/// Run every identity check for the given model. `lambda_range` selects the
/// band used for the spectral checks; `graph_n` and `seed` fix the test
/// graph for the finite-graph identities.
pub fn run_identity_suite(
    model: &TreeModel,
    lambda_range: (f64, f64),
    graph_n: usize,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let grid_n = model.potential().grid_n();
    let tol = tol_ode(grid_n);
    let u = model.potential();

    // edge-identity sweep (RK4 route, exercising the integrator even for U = 0)
    let mut wronskian: f64 = 0.0;
    let mut symmetry: f64 = 0.0;
    let mut reflection: f64 = 0.0;
    for i in 0..40 {
        let lam = 0.1 + 29.9 * i as f64 / 39.0;
        let b = edge_basis_rk4(u, lam);
        let (w, sym, refl) = b.identity_residuals();
        wronskian = wronskian.max(w);
        symmetry = symmetry.max(sym);
        reflection = reflection.max(refl);
    }
    out.push(CheckResult::le("wronskian", wronskian, tol));
    out.push(CheckResult::le("c_equals_s_prime", symmetry, tol));
    out.push(CheckResult::le("reflection_identity", reflection, tol));

    // integrator order: Wronskian error must drop ≥ 8× when halving the step
    // (measured at moderate grids, away from the roundoff floor)
    {
        let coarse = u.with_grid(128)?;
        let fine = u.with_grid(256)?;
        let ec = edge_basis_rk4(&coarse, 7.3).identity_residuals().0;
        let ef = edge_basis_rk4(&fine, 7.3).identity_residuals().0;
        let ratio = if ef > 0.0 { ec / ef } else { f64::INFINITY };
        out.push(CheckResult::ge("rk4_order_ratio", ratio, 8.0));
    }

    // band structure for the spectral checks
    let scan = default_scan_n(lambda_range);
    let structure = find_bands(model, lambda_range, scan)?;
    let band = structure
        .bands
        .first()
        .ok_or_else(|| Error::Parse(format!("no spectral band inside {lambda_range:?}")))?;

    // μ± root identities on band samples
    let mut mu_prod: f64 = 0.0;
    let mut mu_sum: f64 = 0.0;
    let mut mu_mod: f64 = 0.0;
    let qf = model.q() as f64;
    for t in 1..20 {
        let lam = band.sample(t as f64 / 20.0);
        let (p, m) = mu_pm(model, lam)?;
        mu_prod = mu_prod.max((p * m - Complex64::new(1.0 / qf, 0.0)).norm());
        mu_sum = mu_sum.max(((p + m) * qf - Complex64::new(model.w(lam), 0.0)).norm());
        mu_mod = mu_mod.max((m.norm_sqr() - 1.0 / qf).abs());
    }
    out.push(CheckResult::le("mu_product", mu_prod, 1e-12));
    out.push(CheckResult::le("mu_sum", mu_sum, 1e-12));
    out.push(CheckResult::le("mu_modulus", mu_mod, 1e-12));

    // resolvent identity against the self-consistent tree resolvent
    {
        let mut dev: f64 = 0.0;
        for (i, d) in [(1, 0), (2, 1), (3, 2), (4, 3), (5, 4), (6, 2)] {
            let gamma = Complex64::new(0.7 * i as f64, 0.4 + 0.15 * i as f64);
            let (e, w) = model.w_complex(gamma);
            let direct = green_tree_discrete(model, gamma, d)?;
            let oracle = -e.s * tree_adjacency_resolvent_cf(model.q(), w, d, 1e-14)?;
            dev = dev.max((direct - oracle).norm());
        }
        out.push(CheckResult::le("resolvent_factorization", dev, 1e-10));
    }

    // spherical-function identities on band-1 samples
    {
        let mut ratio_dev: f64 = 0.0;
        for t in [0.2, 0.45, 0.7] {
            let lam = band.sample(t);
            let g0 = green_tree_discrete(model, Complex64::new(lam, 0.0), 0)?.im;
            for d in 0..=5 {
                let gd = green_tree_discrete(model, Complex64::new(lam, 0.0), d)?.im;
                ratio_dev = ratio_dev.max((gd / g0 - spherical(model.q(), model.w(lam), d)).abs());
            }
        }
        out.push(CheckResult::le("spherical_resolvent_ratio", ratio_dev, 1e-10));

        let mut closed_dev: f64 = 0.0;
        let edge = 2.0 * qf.sqrt() - 0.01;
        for i in 0..20 {
            let m = -edge + 2.0 * edge * i as f64 / 19.0;
            for d in 0..=30 {
                closed_dev =
                    closed_dev.max((spherical(model.q(), m, d) - spherical_closed(model.q(), m, d)).abs());
            }
        }
        out.push(CheckResult::le("spherical_closed_form", closed_dev, 1e-10));
    }

    // limit-density identities
    {
        let mut int_dev: f64 = 0.0;
        let mut diag_dev: f64 = 0.0;
        let mut pos_ok = true;
        for t in 1..=20 {
            let lam = band.sample(t as f64 / 21.0);
            let basis = model.basis(lam);
            let kap = kappa_from_basis(model, &basis)?;
            let grid = psi_density_grid(model, &basis, kap);
            pos_ok &= grid.iter().all(|v| *v > 0.0);
            let integral = simpson(&grid, model.length())?;
            int_dev = int_dev.max((integral - 2.0 / (qf + 1.0)).abs());
            let x = model.length() * t as f64 / 23.0;
            let c = psi_correlator_from_basis(model, &basis, kap, 1, x, x)?;
            let dens = psi_density_from_basis(model, &basis, kap, x);
            diag_dev = diag_dev.max((2.0 * c - dens).abs());
        }
        out.push(CheckResult::le("psi_integral", int_dev, 1e-8));
        out.push(CheckResult::le("psi_correlator_diagonal", diag_dev, 1e-10));
        out.push(CheckResult::le("psi_positivity", if pos_ok { 0.0 } else { 1.0 }, 0.5));
        if model.alpha() == 0.0 && model.potential().is_zero() {
            let lam = band.sample(0.37);
            let basis = model.basis(lam);
            let kap = kappa_from_basis(model, &basis)?;
            let uniform = 2.0 / (model.length() * (qf + 1.0));
            let mut dev: f64 = 0.0;
            for i in 0..=10 {
                let x = model.length() * i as f64 / 10.0;
                dev = dev.max((psi_density_from_basis(model, &basis, kap, x) - uniform).abs());
            }
            out.push(CheckResult::le("psi_uniform_free", dev, 1e-10));
        }
    }

    // finite-graph identities on a seeded instance
    {
        let kind = if model.degree() == 2 { GraphKind::Cycle } else { GraphKind::RandomRegular };
        let g = generate_graph(kind, graph_n, model.degree(), seed)?;
        let spectrum = adjacency_spectrum(&g)?;
        let pairs = band_spectrum_from(&g, model, band, &spectrum)?;
        if pairs.is_empty() {
            return Err(Error::EmptyBandSpectrum);
        }
        let a = g.adjacency_matrix();
        let mut secular: f64 = 0.0;
        let mut eigen: f64 = 0.0;
        let mut norm_dev: f64 = 0.0;
        let mut ring_norm_dev: f64 = 0.0;
        let mut current: f64 = 0.0;
        let mut nb_res: f64 = 0.0;
        for p in &pairs {
            secular = secular.max((model.w(p.lambda) - p.m).abs());
            let psi = nalgebra::DVector::from_column_slice(&p.psi_ring);
            eigen = eigen.max((&a * &psi - p.m * &psi).norm());
            norm_dev = norm_dev.max((metric_norm_sq(&g, p)? - 1.0).abs());
            ring_norm_dev = ring_norm_dev.max((p.ring_norm_sq() - 1.0 / p.kappa).abs());
            let (_, curr) = kirchhoff_residual(&g, p, model);
            current = current.max(curr);
            let lift = nb_lift(&g, p)?;
            nb_res = nb_res.max(lift.residual_f).max(lift.residual_f_star);
        }
        out.push(CheckResult::le("secular_round_trip", secular, 1e-10));
        out.push(CheckResult::le("discrete_eigen_relation", eigen, 1e-8));
        out.push(CheckResult::le("metric_normalization", norm_dev, 1e-5));
        out.push(CheckResult::le("vertex_trace_norm", ring_norm_dev, 1e-8));
        out.push(CheckResult::le("kirchhoff_current", current, 1e-7));
        out.push(CheckResult::le("nonbacktracking_residual", nb_res, 1e-10));
    }

    // band edges stable under a 10× finer rescan
    {
        let fine = find_bands(model, lambda_range, 10 * scan)?;
        let mut dev = f64::INFINITY;
        if fine.bands.len() == structure.bands.len() {
            dev = 0.0;
            for (a, b) in structure.bands.iter().zip(&fine.bands) {
                dev = dev.max((a.lo - b.lo).abs()).max((a.hi - b.hi).abs());
            }
        }
        out.push(CheckResult::le("band_rescan_stability", dev, 1e-9));
    }

    // inverting w on fresh interior targets round-trips through the band
    {
        let (ilo, ihi) = band.w_interval(model);
        let mut dev: f64 = 0.0;
        for t in 1..12 {
            let m = ilo + (ihi - ilo) * t as f64 / 12.0;
            if (m.abs() - model.band_threshold()).abs() < 1e-6 {
                continue;
            }
            let lam = invert_w_on_band(model, band, m)?;
            dev = dev.max((model.w(lam) - m).abs());
        }
        out.push(CheckResult::le("secular_inversion", dev, 1e-10));
    }

    // κ stays positive and matches its moment assembly
    {
        let lam = band.sample(0.41);
        let basis = model.basis(lam);
        let kap = kappa_from_basis(model, &basis)?;
        let (_, ib, ic) = unit_moments(&basis)?;
        let manual = ((qf + 1.0) * ic + model.w(lam) * ib) / (basis.s * basis.s);
        out.push(CheckResult::le("kappa_moments", (kap - manual).abs(), 1e-12));
        out.push(CheckResult::le("kappa_positive", if kap > 0.0 { 0.0 } else { 1.0 }, 0.5));
    }

    Ok(out)
}
