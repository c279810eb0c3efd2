//! Eigenfunction observables and quantum-variance experiments.
//!
//! Expectations `⟨ψ_n, f ψ_n⟩` are computed through the discrete
//! decompositions (vertex-trace contractions of quadrature moments), never
//! by sampling alone; the direct-quadrature routes live alongside as
//! oracles. Variances compare each eigenpair against the infinite-tree
//! limit average of its energy, and convergence sweeps drive the whole
//! machine over growing seeded graph families.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::edge_ode::{observable_moments, unit_moments, EdgeBasis};
use crate::graph::{adjacency_spectrum, generate_graph, Graph, GraphKind, SpectralData};
use crate::quad::{simpson, simpson_product, simpson_weights};
use crate::quantum::{band_spectrum_from, nb_lift, Eigenpair};
use crate::tree::{
    find_bands, kappa_from_basis, psi_correlator_from_basis, psi_correlator_green, psi_density_grid,
    spherical, Band, BandStructure, TreeModel,
};
use crate::{Error, Result};

/// Hard cap on the non-backtracking path order of kernel observables.
pub const PATH_ORDER_CAP: usize = 4;

/// Memory guard for dense kernel tables (bytes).
pub const KERNEL_MEMORY_GUARD: usize = 2 << 30;

const BOUND_TOL: f64 = 1.0 + 1e-12;

/// An observable on the metric graph.
#[derive(Debug, Clone)]
pub enum Observable {
    /// One value per undirected edge, in `[-1, 1]`.
    EdgeConstant(Vec<f64>),
    /// Grid samples per undirected edge (canonical orientation), `|f| ≤ 1`.
    EdgeFunction(Vec<Vec<f64>>),
    /// Integral kernel over non-backtracking k-paths.
    PathKernel(PathKernel),
}

/// Kernel observable of order `k ≥ 1`: one kernel `K_p(x, y)` per
/// enumerated directed non-backtracking k-path, with `x` along the first
/// edge of the path (measured from its origin) and `y` along the last.
#[derive(Debug, Clone)]
pub struct PathKernel {
    pub k: usize,
    pub storage: KernelStorage,
}

#[derive(Debug, Clone)]
pub enum KernelStorage {
    /// Per-path dense tables, row-major `(grid_n + 1)²`, row = x index.
    Dense { tables: Vec<Vec<f64>>, grid_n: usize },
    /// `K_p(x, y) = coeff[p] · u(x) · v(y)` on a shared sample grid.
    Separable { coeff: Vec<f64>, u: Vec<f64>, v: Vec<f64> },
}

impl Observable {
    pub fn edge_constant(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| v.abs() > BOUND_TOL || !v.is_finite()) {
            return Err(Error::InvalidObservable(format!("edge constant {v} outside [-1, 1]")));
        }
        Ok(Observable::EdgeConstant(values))
    }

    pub fn edge_function(samples: Vec<Vec<f64>>) -> Result<Self> {
        for (e, f) in samples.iter().enumerate() {
            if f.len() < 3 || (f.len() - 1) % 2 != 0 {
                return Err(Error::OddGrid(f.len().saturating_sub(1)));
            }
            if f.len() != samples[0].len() {
                return Err(Error::GridMismatch { expected: samples[0].len(), got: f.len() });
            }
            if let Some(v) = f.iter().find(|v| v.abs() > BOUND_TOL || !v.is_finite()) {
                return Err(Error::InvalidObservable(format!("edge {e}: sample {v} outside [-1, 1]")));
            }
        }
        Ok(Observable::EdgeFunction(samples))
    }

    pub fn path_kernel_dense(k: usize, tables: Vec<Vec<f64>>, grid_n: usize) -> Result<Self> {
        check_order(k, tables.len(), grid_n)?;
        let want = (grid_n + 1) * (grid_n + 1);
        for t in &tables {
            if t.len() != want {
                return Err(Error::GridMismatch { expected: want, got: t.len() });
            }
            if let Some(v) = t.iter().find(|v| v.abs() > BOUND_TOL || !v.is_finite()) {
                return Err(Error::InvalidObservable(format!("kernel value {v} outside [-1, 1]")));
            }
        }
        Ok(Observable::PathKernel(PathKernel { k, storage: KernelStorage::Dense { tables, grid_n } }))
    }

    pub fn path_kernel_separable(k: usize, coeff: Vec<f64>, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        check_order(k, coeff.len(), u.len().saturating_sub(1))?;
        if u.len() != v.len() || u.len() < 3 || (u.len() - 1) % 2 != 0 {
            return Err(Error::GridMismatch { expected: u.len(), got: v.len() });
        }
        let bound = |xs: &[f64]| xs.iter().all(|x| x.abs() <= BOUND_TOL && x.is_finite());
        if !bound(&coeff) || !bound(&u) || !bound(&v) {
            return Err(Error::InvalidObservable("separable kernel factors must stay in [-1, 1]".into()));
        }
        Ok(Observable::PathKernel(PathKernel {
            k,
            storage: KernelStorage::Separable { coeff, u, v },
        }))
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Observable::EdgeConstant(_) => "edge_constant",
            Observable::EdgeFunction(_) => "edge_function",
            Observable::PathKernel(_) => "path_kernel",
        }
    }
}

fn check_order(k: usize, n_paths: usize, grid_n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Parse("path kernels need order k ≥ 1".into()));
    }
    let bytes = n_paths.saturating_mul((grid_n + 1) * (grid_n + 1)).saturating_mul(8);
    if k > PATH_ORDER_CAP || bytes > KERNEL_MEMORY_GUARD {
        return Err(Error::PathOrderCap { k, cap: PATH_ORDER_CAP, bytes });
    }
    Ok(())
}

fn check_dims(g: &Graph, obs: &Observable) -> Result<()> {
    let ok = match obs {
        Observable::EdgeConstant(c) => c.len() == g.n_undirected(),
        Observable::EdgeFunction(f) => f.len() == g.n_undirected(),
        Observable::PathKernel(k) => match &k.storage {
            KernelStorage::Dense { tables, .. } => tables.len() == g.nb_path_count(k.k),
            KernelStorage::Separable { coeff, .. } => coeff.len() == g.nb_path_count(k.k),
        },
    };
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{} observable does not match graph (N = {}, |E| = {})",
            obs.kind_name(),
            g.n_vertices(),
            g.n_undirected()
        )))
    }
}

// ---------------------------------------------------------------------------
// expectations of edge observables
// ---------------------------------------------------------------------------

/// `⟨ψ_n, f ψ_n⟩` through the vertex-trace contraction: per undirected edge
/// `(u, v)` the moments `A = ∫f S²(L-t)`, `B = ∫f S(L-t)S(t)`, `C = ∫f S²(t)`
/// contract as `(A·ψ̊(u)² + 2B·ψ̊(u)ψ̊(v) + C·ψ̊(v)²)/s²`.
pub fn expectation_edge(g: &Graph, pair: &Eigenpair, obs: &Observable) -> Result<f64> {
    check_dims(g, obs)?;
    let s2 = pair.basis.s * pair.basis.s;
    let ring = &pair.psi_ring;
    match obs {
        Observable::EdgeConstant(c) => {
            let (_, ib, ic) = unit_moments(&pair.basis)?;
            let mut acc = 0.0;
            for (e, &(u, v)) in g.undirected_edges().iter().enumerate() {
                let (po, pt) = (ring[u as usize], ring[v as usize]);
                acc += c[e] * (ic * (po * po + pt * pt) + 2.0 * ib * po * pt);
            }
            Ok(acc / s2)
        }
        Observable::EdgeFunction(f) => {
            let mut acc = 0.0;
            for (e, &(u, v)) in g.undirected_edges().iter().enumerate() {
                let (a, b, c) = observable_moments(&pair.basis, &f[e])?;
                let (po, pt) = (ring[u as usize], ring[v as usize]);
                acc += a * po * po + 2.0 * b * po * pt + c * pt * pt;
            }
            Ok(acc / s2)
        }
        Observable::PathKernel(_) => Err(Error::InvalidObservable(
            "path kernels go through expectation_kernel".into(),
        )),
    }
}

/// Direct-quadrature oracle for [`expectation_edge`]: sample `|ψ|² f` on
/// every edge and Simpson it. Deliberately ignorant of the moment route.
pub fn expectation_edge_quadrature(g: &Graph, pair: &Eigenpair, obs: &Observable) -> Result<f64> {
    check_dims(g, obs)?;
    let n = pair.basis.grid_n();
    let len = pair.basis.length;
    let mut acc = 0.0;
    for e in 0..g.n_undirected() {
        let psi = pair.edge_samples(g, e);
        let sq: Vec<f64> = match obs {
            Observable::EdgeConstant(c) => psi.iter().map(|p| c[e] * p * p).collect(),
            Observable::EdgeFunction(f) => (0..=n).map(|i| f[e][i] * psi[i] * psi[i]).collect(),
            Observable::PathKernel(_) => {
                return Err(Error::InvalidObservable("not an edge observable".into()))
            }
        };
        acc += simpson(&sq, len)?;
    }
    Ok(acc)
}

/// Limit average of an edge observable at energy λ: the flat edge mean for
/// constants (the λ-dependence integrates away), the `Ψ_λ`-weighted mean
/// for functions.
pub fn limit_average_from(
    g: &Graph,
    model: &TreeModel,
    basis: &EdgeBasis,
    kappa: f64,
    obs: &Observable,
) -> Result<f64> {
    check_dims(g, obs)?;
    match obs {
        Observable::EdgeConstant(c) => Ok(c.iter().sum::<f64>() / c.len() as f64),
        Observable::EdgeFunction(f) => {
            let psi = psi_density_grid(model, basis, kappa);
            let mut acc = 0.0;
            for fe in f {
                acc += simpson_product(fe, &psi, model.length())?;
            }
            Ok(acc / g.n_vertices() as f64)
        }
        Observable::PathKernel(_) => Err(Error::InvalidObservable(
            "path kernels go through limit_kernel_average".into(),
        )),
    }
}

pub fn limit_average(g: &Graph, model: &TreeModel, lambda: f64, obs: &Observable) -> Result<f64> {
    let basis = model.basis(lambda);
    let kappa = kappa_from_basis(model, &basis)?;
    limit_average_from(g, model, &basis, kappa, obs)
}

// ---------------------------------------------------------------------------
// kernel observables
// ---------------------------------------------------------------------------

/// The four per-path kernel quadratures against the `S ⊗ S` products:
/// `m1 = ∬K·S(L-r)S(L-s)`, `m2 = ∬K·S(r)S(s)`, `j = ∬K·S(L-r)S(s)`,
/// `p = ∬K·S(r)S(L-s)`.
struct PathIntegrals {
    m1: Vec<f64>,
    m2: Vec<f64>,
    j: Vec<f64>,
    p: Vec<f64>,
}

fn kernel_path_integrals(kernel: &PathKernel, basis: &EdgeBasis) -> Result<PathIntegrals> {
    match &kernel.storage {
        KernelStorage::Dense { tables, grid_n } => {
            let gn = *grid_n;
            let len = basis.length;
            let w = simpson_weights(gn, len)?;
            // weighted S values on the kernel grid
            let mut wl = Vec::with_capacity(gn + 1); // w_i · S(L - x_i)
            let mut ws = Vec::with_capacity(gn + 1); // w_i · S(x_i)
            for i in 0..=gn {
                let x = len * i as f64 / gn as f64;
                wl.push(w[i] * basis.s_at(len - x));
                ws.push(w[i] * basis.s_at(x));
            }
            let np = tables.len();
            let mut out = PathIntegrals {
                m1: Vec::with_capacity(np),
                m2: Vec::with_capacity(np),
                j: Vec::with_capacity(np),
                p: Vec::with_capacity(np),
            };
            let cols = gn + 1;
            for t in tables {
                // two mat-vecs give all four bilinear forms
                let mut kwl = vec![0.0; cols];
                let mut kws = vec![0.0; cols];
                for (i, row) in t.chunks_exact(cols).enumerate() {
                    let mut al = 0.0;
                    let mut asum = 0.0;
                    for jx in 0..cols {
                        al += row[jx] * wl[jx];
                        asum += row[jx] * ws[jx];
                    }
                    kwl[i] = al;
                    kws[i] = asum;
                }
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                out.m1.push(dot(&wl, &kwl));
                out.j.push(dot(&wl, &kws));
                out.p.push(dot(&ws, &kwl));
                out.m2.push(dot(&ws, &kws));
            }
            Ok(out)
        }
        KernelStorage::Separable { coeff, u, v } => {
            let gn = u.len() - 1;
            let len = basis.length;
            let mut sl = Vec::with_capacity(gn + 1);
            let mut ss = Vec::with_capacity(gn + 1);
            for i in 0..=gn {
                let x = len * i as f64 / gn as f64;
                sl.push(basis.s_at(len - x));
                ss.push(basis.s_at(x));
            }
            let ul = simpson_product(u, &sl, len)?;
            let us = simpson_product(u, &ss, len)?;
            let vl = simpson_product(v, &sl, len)?;
            let vs = simpson_product(v, &ss, len)?;
            let np = coeff.len();
            let mut out = PathIntegrals {
                m1: Vec::with_capacity(np),
                m2: Vec::with_capacity(np),
                j: Vec::with_capacity(np),
                p: Vec::with_capacity(np),
            };
            for &c in coeff {
                out.m1.push(c * ul * vl);
                out.m2.push(c * us * vs);
                out.j.push(c * ul * vs);
                out.p.push(c * us * vl);
            }
            Ok(out)
        }
    }
}

/// `⟨ψ_n, K_k ψ_n⟩` through the discrete path decomposition: per path
/// `(x_0, …, x_k)` the four kernel quadratures contract against the vertex
/// trace as `½(ψ̊(x_0)ψ̊(x_{k-1})·m1 + ψ̊(x_1)ψ̊(x_k)·m2 +
/// ψ̊(x_0)ψ̊(x_k)·j + ψ̊(x_1)ψ̊(x_{k-1})·p)/s²`.
pub fn expectation_kernel(g: &Graph, pair: &Eigenpair, obs: &Observable) -> Result<f64> {
    let kernel = match obs {
        Observable::PathKernel(k) => k,
        _ => return Err(Error::InvalidObservable("expectation_kernel needs a path kernel".into())),
    };
    check_dims(g, obs)?;
    let ints = kernel_path_integrals(kernel, &pair.basis)?;
    let paths = g.nb_paths(kernel.k);
    let ring = &pair.psi_ring;
    let k = kernel.k;
    let mut acc = 0.0;
    for (pi, path) in paths.iter().enumerate() {
        let x0 = ring[path[0] as usize];
        let x1 = ring[path[1] as usize];
        let xk1 = ring[path[k - 1] as usize];
        let xk = ring[path[k] as usize];
        acc += x0 * xk1 * ints.m1[pi] + x1 * xk * ints.m2[pi] + x0 * xk * ints.j[pi] + x1 * xk1 * ints.p[pi];
    }
    Ok(0.5 * acc / (pair.basis.s * pair.basis.s))
}

/// Double-quadrature oracle: reconstruct ψ on both end edges of every path
/// and integrate the kernel against the product directly (the sum runs over
/// both orientations, hence the final ½).
pub fn expectation_kernel_quadrature(g: &Graph, pair: &Eigenpair, obs: &Observable) -> Result<f64> {
    let kernel = match obs {
        Observable::PathKernel(k) => k,
        _ => return Err(Error::InvalidObservable("expectation_kernel needs a path kernel".into())),
    };
    check_dims(g, obs)?;
    let basis = &pair.basis;
    let len = basis.length;
    let (gn, kernel_at): (usize, Box<dyn Fn(usize, usize, usize) -> f64>) = match &kernel.storage {
        KernelStorage::Dense { tables, grid_n } => {
            let cols = grid_n + 1;
            (*grid_n, Box::new(move |p, i, j| tables[p][i * cols + j]))
        }
        KernelStorage::Separable { coeff, u, v } => {
            (u.len() - 1, Box::new(move |p, i, j| coeff[p] * u[i] * v[j]))
        }
    };
    let w = simpson_weights(gn, len)?;
    let sl: Vec<f64> = (0..=gn).map(|i| basis.s_at(len - len * i as f64 / gn as f64)).collect();
    let ss: Vec<f64> = (0..=gn).map(|i| basis.s_at(len * i as f64 / gn as f64)).collect();
    let ring = &pair.psi_ring;
    let paths = g.nb_paths(kernel.k);
    let k = kernel.k;
    let mut acc = 0.0;
    for (pi, path) in paths.iter().enumerate() {
        let (a0, a1) = (ring[path[0] as usize], ring[path[1] as usize]);
        let (b0, b1) = (ring[path[k - 1] as usize], ring[path[k] as usize]);
        // ψ along the first and last edges, in path coordinates
        let psi_first: Vec<f64> = (0..=gn).map(|i| (sl[i] * a0 + ss[i] * a1) / basis.s).collect();
        let psi_last: Vec<f64> = (0..=gn).map(|i| (sl[i] * b0 + ss[i] * b1) / basis.s).collect();
        for i in 0..=gn {
            let mut inner = 0.0;
            for j in 0..=gn {
                inner += kernel_at(pi, i, j) * psi_last[j] * w[j];
            }
            acc += w[i] * psi_first[i] * inner;
        }
    }
    Ok(0.5 * acc)
}

/// Limit average of a kernel observable: `(1/N) Σ_paths ∬K_p·Ψ_{λ,k}`. The
/// correlator decomposes over the same four per-path integrals with
/// spherical-function weights `Φ(k-1), Φ(k-1), Φ(k), Φ(|k-2|)`.
pub fn limit_kernel_average_from(
    g: &Graph,
    model: &TreeModel,
    basis: &EdgeBasis,
    kappa: f64,
    obs: &Observable,
) -> Result<f64> {
    let kernel = match obs {
        Observable::PathKernel(k) => k,
        _ => return Err(Error::InvalidObservable("limit_kernel_average needs a path kernel".into())),
    };
    check_dims(g, obs)?;
    let k = kernel.k;
    let q = model.q();
    let w = (q as f64 + 1.0) * basis.c + model.alpha() * basis.s;
    let ints = kernel_path_integrals(kernel, basis)?;
    let phi_m = spherical(q, w, k - 1);
    let phi_j = spherical(q, w, k);
    let phi_p = spherical(q, w, if k >= 2 { k - 2 } else { 1 });
    #[cfg(debug_assertions)]
    {
        // the spherical-weight form must agree with the Green's-function
        // representation of the correlator
        let x = 0.31 * basis.length;
        let y = 0.67 * basis.length;
        let a = psi_correlator_from_basis(model, basis, kappa, k, x, y).unwrap();
        let b = psi_correlator_green(model, basis.lambda, k, x, y).unwrap();
        debug_assert!((a - b).abs() < 1e-8, "correlator routes disagree: {a} vs {b}");
    }
    let mut acc = 0.0;
    for pi in 0..ints.m1.len() {
        acc += (ints.m1[pi] + ints.m2[pi]) * phi_m + ints.j[pi] * phi_j + ints.p[pi] * phi_p;
    }
    Ok(acc / (2.0 * kappa * basis.s * basis.s * g.n_vertices() as f64))
}

pub fn limit_kernel_average(g: &Graph, model: &TreeModel, lambda: f64, obs: &Observable) -> Result<f64> {
    let basis = model.basis(lambda);
    let kappa = kappa_from_basis(model, &basis)?;
    limit_kernel_average_from(g, model, &basis, kappa, obs)
}

// ---------------------------------------------------------------------------
// quantum variance
// ---------------------------------------------------------------------------

/// Per-band variance of the deviations between eigenfunction expectations
/// and their limit averages.
#[derive(Debug, Clone)]
pub struct VarianceReport {
    pub band_index: usize,
    pub n_vertices: usize,
    /// Number of band eigenvalues `N(I)`.
    pub n_band: usize,
    /// Mean of the squared deviations.
    pub variance: f64,
    /// `(λ_n, |⟨ψ,fψ⟩ - ⟨f⟩_λ|²)` per eigenpair, λ ascending.
    pub per_eigenvalue: Vec<(f64, f64)>,
}

impl VarianceReport {
    fn new(band_index: usize, n_vertices: usize, per_eigenvalue: Vec<(f64, f64)>) -> Self {
        let n_band = per_eigenvalue.len();
        let variance = per_eigenvalue.iter().map(|(_, d)| d).sum::<f64>() / n_band as f64;
        VarianceReport { band_index, n_vertices, n_band, variance, per_eigenvalue }
    }
}

/// Expectation and limit average with the kind-appropriate route.
pub fn expectation_and_limit(
    g: &Graph,
    model: &TreeModel,
    pair: &Eigenpair,
    obs: &Observable,
) -> Result<(f64, f64)> {
    match obs {
        Observable::PathKernel(_) => Ok((
            expectation_kernel(g, pair, obs)?,
            limit_kernel_average_from(g, model, &pair.basis, pair.kappa, obs)?,
        )),
        _ => Ok((
            expectation_edge(g, pair, obs)?,
            limit_average_from(g, model, &pair.basis, pair.kappa, obs)?,
        )),
    }
}

/// Quantum variance over the band spectrum of a precomputed decomposition.
pub fn quantum_variance_from(
    g: &Graph,
    model: &TreeModel,
    band: &Band,
    obs: &Observable,
    spectrum: &SpectralData,
) -> Result<VarianceReport> {
    check_dims(g, obs)?;
    let pairs = band_spectrum_from(g, model, band, spectrum)?;
    if pairs.is_empty() {
        return Err(Error::EmptyBandSpectrum);
    }
    let mut per = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let (exp, lim) = expectation_and_limit(g, model, pair, obs)?;
        let dev = exp - lim;
        per.push((pair.lambda, dev * dev));
    }
    Ok(VarianceReport::new(band.index, g.n_vertices(), per))
}

pub fn quantum_variance(
    g: &Graph,
    model: &TreeModel,
    band: &Band,
    obs: &Observable,
) -> Result<VarianceReport> {
    let spectrum = adjacency_spectrum(g)?;
    quantum_variance_from(g, model, band, obs, &spectrum)
}

// ---------------------------------------------------------------------------
// diagnostic (discrete / non-backtracking) variances
// ---------------------------------------------------------------------------

/// Discrete quantum variance `(1/N_I) Σ_n |⟨ψ̊_n, K_G^{λ_n} ψ̊_n⟩|²` for a
/// family of k-path observables (`k ≥ 0`), one per band eigenvalue.
pub fn discrete_variance(
    g: &Graph,
    pairs: &[Eigenpair],
    k: usize,
    family: &dyn Fn(&Eigenpair) -> Vec<f64>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyBandSpectrum);
    }
    let paths = g.nb_paths(k);
    let mut acc = 0.0;
    for pair in pairs {
        let kv = family(pair);
        if kv.len() != paths.len() {
            return Err(Error::DimensionMismatch(format!(
                "family produced {} entries for {} k-paths",
                kv.len(),
                paths.len()
            )));
        }
        let mut c = 0.0;
        for (pi, path) in paths.iter().enumerate() {
            let x0 = pair.psi_ring[path[0] as usize];
            let xk = pair.psi_ring[*path.last().unwrap() as usize];
            c += x0 * kv[pi] * xk;
        }
        acc += c * c;
    }
    Ok(acc / pairs.len() as f64)
}

/// Both diagnostic variances for a k-path observable family (`k ≥ 1`):
/// the discrete one over vertex traces and the non-backtracking one over
/// the edge lifts, `(1/N_I) Σ_j |⟨f_j*, K_B^{λ_j} f_j⟩|²`.
pub fn diagnostic_variances(
    g: &Graph,
    pairs: &[Eigenpair],
    k: usize,
    family: &dyn Fn(&Eigenpair) -> Vec<f64>,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::Parse(
            "the non-backtracking contraction needs k ≥ 1; use discrete_variance for k = 0".into(),
        ));
    }
    let var_i = discrete_variance(g, pairs, k, family)?;
    let paths = g.nb_paths(k);
    let mut acc = 0.0;
    for pair in pairs {
        let kv = family(pair);
        let lift = nb_lift(g, pair)?;
        let mut c = Complex64::new(0.0, 0.0);
        for (pi, path) in paths.iter().enumerate() {
            let b1 = g.directed_index(path[0], path[1]).expect("path edge");
            let bk = g.directed_index(path[k - 1], path[k]).expect("path edge");
            c += lift.f_star[b1].conj() * kv[pi] * lift.f[bk];
        }
        acc += c.norm_sqr();
    }
    Ok((var_i, acc / pairs.len() as f64))
}

// ---------------------------------------------------------------------------
// observable generators (seeded families for sweeps and benchmarks)
// ---------------------------------------------------------------------------

/// Random ±1 value per undirected edge.
pub fn random_pm1_edge_constant(g: &Graph, rng: &mut ChaCha8Rng) -> Observable {
    let values = (0..g.n_undirected())
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Observable::EdgeConstant(values)
}

/// Sign-modulated sine profile: `ε_e · sin(2πx/L)` with random `ε_e = ±1`.
pub fn sign_modulated_sine(g: &Graph, length: f64, grid_n: usize, rng: &mut ChaCha8Rng) -> Observable {
    let base: Vec<f64> = (0..=grid_n)
        .map(|i| (2.0 * std::f64::consts::PI * i as f64 / grid_n as f64).sin())
        .collect();
    let _ = length;
    let samples = (0..g.n_undirected())
        .map(|_| {
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            base.iter().map(|v| sign * v).collect()
        })
        .collect();
    Observable::EdgeFunction(samples)
}

/// Random smooth `|f| ≤ 1` edge profiles: a three-term Fourier sum with
/// random coefficients, normalized to sup-norm ≤ 1.
pub fn random_smooth_edge_function(
    g: &Graph,
    grid_n: usize,
    rng: &mut ChaCha8Rng,
) -> Observable {
    let samples = (0..g.n_undirected())
        .map(|_| {
            let a0: f64 = rng.gen_range(-1.0..1.0);
            let a1: f64 = rng.gen_range(-1.0..1.0);
            let a2: f64 = rng.gen_range(-1.0..1.0);
            let b1: f64 = rng.gen_range(-1.0..1.0);
            let norm = a0.abs() + a1.abs() + a2.abs() + b1.abs() + 1e-9;
            (0..=grid_n)
                .map(|i| {
                    let t = 2.0 * std::f64::consts::PI * i as f64 / grid_n as f64;
                    (a0 + a1 * t.cos() + a2 * (2.0 * t).cos() + b1 * t.sin()) / norm
                })
                .collect()
        })
        .collect();
    Observable::EdgeFunction(samples)
}

/// Separable k = 2 kernel family: `K_p(x,y) = ε_p sin(πx/L) sin(πy/L)` with
/// random `ε_p = ±1` per directed 2-path.
pub fn random_separable_kernel_k2(g: &Graph, grid_n: usize, rng: &mut ChaCha8Rng) -> Observable {
    let profile: Vec<f64> = (0..=grid_n)
        .map(|i| (std::f64::consts::PI * i as f64 / grid_n as f64).sin())
        .collect();
    let coeff = (0..g.nb_path_count(2))
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Observable::path_kernel_separable(2, coeff, profile.clone(), profile)
        .expect("profile stays within bounds")
}

// ---------------------------------------------------------------------------
// convergence sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kind: GraphKind,
    pub sizes: Vec<usize>,
    pub degree: usize,
    pub model: TreeModel,
    pub lambda_range: (f64, f64),
    /// 0-based index into the bands found over `lambda_range`.
    pub band_index: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n: usize,
    pub trial: usize,
    pub band_index: usize,
    pub n_band: usize,
    pub variance: f64,
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub n: usize,
    pub mean_variance: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<SweepSummary>,
}

impl SweepTable {
    /// Ratio of the last summary's mean variance to the first's.
    pub fn decay_ratio(&self) -> f64 {
        match (self.summaries.first(), self.summaries.last()) {
            (Some(a), Some(b)) if a.mean_variance > 0.0 => b.mean_variance / a.mean_variance,
            _ => f64::NAN,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut x = z;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Deterministic per-cell stream seed.
pub fn derive_seed(seed: u64, n: usize, trial: usize, salt: u64) -> u64 {
    let mut h = splitmix(seed ^ 0xD6E8_FEB8_6659_FD93);
    h = splitmix(h ^ n as u64);
    h = splitmix(h ^ trial as u64);
    h = splitmix(h ^ salt);
    h
}

/// Run the variance experiment over growing graph sizes. Each `(N, trial)`
/// cell owns its RNG stream derived from `(seed, N, trial)`, so the output
/// is identical under any parallel schedule; observables are regenerated
/// per cell.
pub fn convergence_sweep(
    cfg: &SweepConfig,
    obs_gen: &(dyn Fn(&Graph, &mut ChaCha8Rng) -> Result<Observable> + Sync),
) -> Result<SweepTable> {
    if cfg.sizes.is_empty() || cfg.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Parse("sweep sizes must be nonempty and strictly ascending".into()));
    }
    if cfg.trials == 0 {
        return Err(Error::Parse("sweep needs trials ≥ 1".into()));
    }
    let structure: BandStructure =
        find_bands(&cfg.model, cfg.lambda_range, crate::tree::default_scan_n(cfg.lambda_range))?;
    let band = structure.bands.get(cfg.band_index).ok_or_else(|| {
        Error::Parse(format!(
            "band index {} out of range: {} bands in ({}, {})",
            cfg.band_index,
            structure.bands.len(),
            cfg.lambda_range.0,
            cfg.lambda_range.1
        ))
    })?;

    let cells: Vec<(usize, usize)> = cfg
        .sizes
        .iter()
        .flat_map(|&n| (0..cfg.trials).map(move |t| (n, t)))
        .collect();

    let results: Vec<Result<SweepRow>> = cells
        .par_iter()
        .map(|&(n, trial)| -> Result<SweepRow> {
            let run = || -> Result<SweepRow> {
                let g = generate_graph(cfg.kind, n, cfg.degree, derive_seed(cfg.seed, n, trial, 0xA5))?;
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, n, trial, 0x0B));
                let obs = obs_gen(&g, &mut rng)?;
                let spectrum = adjacency_spectrum(&g)?;
                let report = quantum_variance_from(&g, &cfg.model, band, &obs, &spectrum)?;
                Ok(SweepRow {
                    n,
                    trial,
                    band_index: band.index,
                    n_band: report.n_band,
                    variance: report.variance,
                })
            };
            run().map_err(|e| e.with_context(format!("N = {n}, trial = {trial}")))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        rows.push(r?);
    }

    let mut summaries = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let vars: Vec<f64> = rows.iter().filter(|r| r.n == n).map(|r| r.variance).collect();
        let t = vars.len();
        let mean = vars.iter().sum::<f64>() / t as f64;
        let stderr = if t > 1 {
            let ss = vars.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1) as f64;
            (ss / t as f64).sqrt()
        } else {
            0.0
        };
        summaries.push(SweepSummary { n, mean_variance: mean, stderr, trials: t });
    }
    Ok(SweepTable { rows, summaries })
}

// ---------------------------------------------------------------------------
// observable interchange formats
// ---------------------------------------------------------------------------

/// EdgeConstant CSV: header `edge_id,value`.
pub fn edge_constant_to_csv(values: &[f64]) -> String {
    let mut out = String::from("edge_id,value\n");
    for (e, v) in values.iter().enumerate() {
        out.push_str(&format!("{e},{v:.16e}\n"));
    }
    out
}

/// EdgeFunction CSV: per-edge sample blocks, header `edge_id,sample_index,value`.
pub fn edge_function_to_csv(samples: &[Vec<f64>]) -> String {
    let mut out = String::from("edge_id,sample_index,value\n");
    for (e, f) in samples.iter().enumerate() {
        for (i, v) in f.iter().enumerate() {
            out.push_str(&format!("{e},{i},{v:.16e}\n"));
        }
    }
    out
}

pub fn edge_constant_from_csv(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if ln == 0 {
            if line.trim() != "edge_id,value" {
                return Err(Error::Parse("expected header 'edge_id,value'".into()));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let e: usize = it
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad edge id on line {}", ln + 1)))?;
        let v: f64 = it
            .next()
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad value on line {}", ln + 1)))?;
        if e != values.len() {
            return Err(Error::Parse(format!("edge ids must be consecutive, got {e}")));
        }
        values.push(v);
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_ode::Potential;
    use crate::graph::{generate_graph, GraphKind};
    use crate::tree::default_scan_n;

    fn free_model(q: usize, grid_n: usize) -> TreeModel {
        TreeModel::new(q, 0.0, Potential::zero(1.0, grid_n).unwrap()).unwrap()
    }

    fn band1(model: &TreeModel) -> Band {
        let range = (0.01, 9.0);
        find_bands(model, range, default_scan_n(range)).unwrap().bands.remove(0)
    }

    fn k4_setup() -> (Graph, TreeModel, Band, Vec<Eigenpair>) {
        let g = generate_graph(GraphKind::Complete, 4, 3, 0).unwrap();
        let model = free_model(2, 128);
        let band = band1(&model);
        let spectrum = adjacency_spectrum(&g).unwrap();
        let pairs = band_spectrum_from(&g, &model, &band, &spectrum).unwrap();
        (g, model, band, pairs)
    }

    #[test]
    fn unit_observable_gives_unit_expectation() {
        let (g, model, _, pairs) = k4_setup();
        let ones = Observable::edge_function(vec![vec![1.0; 129]; g.n_undirected()]).unwrap();
        for p in &pairs {
            let e = expectation_edge(&g, p, &ones).unwrap();
            assert!((e - 1.0).abs() < 1e-10, "⟨ψ, ψ⟩ = {e}");
            let lim = limit_average_from(&g, &model, &p.basis, p.kappa, &ones).unwrap();
            assert!((lim - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn expectation_matches_quadrature_oracle() {
        let (g, _, _, pairs) = k4_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // indicator of one edge
        let mut ind = vec![0.0; g.n_undirected()];
        ind[2] = 1.0;
        let obs_list = vec![
            Observable::edge_constant(ind).unwrap(),
            random_pm1_edge_constant(&g, &mut rng),
            {
                // f(x) = x/L per edge
                let f: Vec<f64> = (0..=128).map(|i| i as f64 / 128.0).collect();
                Observable::edge_function(vec![f; g.n_undirected()]).unwrap()
            },
            random_smooth_edge_function(&g, 128, &mut rng),
        ];
        for obs in &obs_list {
            for p in &pairs {
                let alg = expectation_edge(&g, p, obs).unwrap();
                let quad = expectation_edge_quadrature(&g, p, obs).unwrap();
                assert!((alg - quad).abs() < 1e-7, "{alg} vs {quad}");
            }
        }
    }

    #[test]
    fn limit_average_flat_cases() {
        let (g, model, _, pairs) = k4_setup();
        // a ≡ 1
        let ones = Observable::edge_constant(vec![1.0; 6]).unwrap();
        assert_eq!(limit_average(&g, &model, 2.0, &ones).unwrap(), 1.0);
        // half +1 half -1 cancels
        let half = Observable::edge_constant(vec![1.0, 1.0, 1.0, -1.0, -1.0, -1.0]).unwrap();
        assert_eq!(limit_average(&g, &model, 2.0, &half).unwrap(), 0.0);
        // U = 0, α = 0: ⟨f⟩_λ = (2/(L(q+1)N))·Σ_e ∫f
        let f: Vec<f64> = (0..=128).map(|i| (i as f64 / 128.0).powi(2)).collect();
        let integral = simpson(&f, 1.0).unwrap();
        let obs = Observable::edge_function(vec![f; 6]).unwrap();
        let expect = 2.0 / (1.0 * 3.0 * 4.0) * 6.0 * integral;
        let lim = limit_average_from(&g, &model, &pairs[0].basis, pairs[0].kappa, &obs).unwrap();
        assert!((lim - expect).abs() < 1e-12);
    }

    #[test]
    fn kernel_expectation_matches_double_quadrature() {
        let (g, _, _, pairs) = k4_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gn = 64usize;
        for k in 1..=2usize {
            let np = g.nb_path_count(k);
            let tables: Vec<Vec<f64>> = (0..np)
                .map(|_| (0..(gn + 1) * (gn + 1)).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let obs = Observable::path_kernel_dense(k, tables, gn).unwrap();
            for p in &pairs {
                let alg = expectation_kernel(&g, p, &obs).unwrap();
                let quad = expectation_kernel_quadrature(&g, p, &obs).unwrap();
                assert!((alg - quad).abs() < 1e-6, "k = {k}: {alg} vs {quad}");
            }
        }
    }

    #[test]
    fn kernel_zero_gives_zero() {
        let (g, model, _, pairs) = k4_setup();
        let gn = 32;
        let np = g.nb_path_count(2);
        let obs = Observable::path_kernel_dense(2, vec![vec![0.0; (gn + 1) * (gn + 1)]; np], gn).unwrap();
        assert_eq!(expectation_kernel(&g, &pairs[0], &obs).unwrap(), 0.0);
        assert_eq!(limit_kernel_average(&g, &model, pairs[0].lambda, &obs).unwrap(), 0.0);
    }

    #[test]
    fn kernel_k1_separable_consistency() {
        // for K_b = g ⊗ g on each directed edge, 2⟨ψ, K₁ψ⟩ = Σ_b (∫g·ψ_b)²
        let (g, _, _, pairs) = k4_setup();
        let gn = 128usize;
        let prof: Vec<f64> = (0..=gn).map(|i| (std::f64::consts::PI * i as f64 / gn as f64).sin()).collect();
        let obs = Observable::path_kernel_separable(
            1,
            vec![1.0; g.nb_path_count(1)],
            prof.clone(),
            prof.clone(),
        )
        .unwrap();
        for p in &pairs {
            let alg = expectation_kernel(&g, p, &obs).unwrap();
            let mut direct = 0.0;
            for b in 0..g.n_directed() {
                let (o, t) = g.directed_edge(b);
                let psi: Vec<f64> = (0..=gn)
                    .map(|i| {
                        let x = i as f64 / gn as f64;
                        crate::quantum::eval_psi(&p.basis, p.psi_ring[o as usize], p.psi_ring[t as usize], x)
                    })
                    .collect();
                let ip = simpson_product(&prof, &psi, 1.0).unwrap();
                direct += ip * ip;
            }
            assert!((2.0 * alg - direct).abs() < 1e-9, "{alg} vs {}", direct / 2.0);
        }
    }

    #[test]
    fn kernel_k2_constant_oracle() {
        // K ≡ 1 on 2-paths: ½ Σ (∫ψ over b₁ pattern)(∫ψ over b₂ pattern)
        let (g, _, _, pairs) = k4_setup();
        let gn = 64usize;
        let ones: Vec<f64> = vec![1.0; gn + 1];
        let obs = Observable::path_kernel_separable(2, vec![1.0; g.nb_path_count(2)], ones.clone(), ones)
            .unwrap();
        for p in &pairs {
            let alg = expectation_kernel(&g, p, &obs).unwrap();
            let quad = expectation_kernel_quadrature(&g, p, &obs).unwrap();
            assert!((alg - quad).abs() < 1e-8);
        }
    }

    #[test]
    fn kernel_diagonal_limit_consistency() {
        // (1/N)Σ_b ∫f·2Ψ_{λ,1}(x,x) dx equals the EdgeFunction limit average
        let (g, model, _, pairs) = k4_setup();
        let p = &pairs[0];
        let gn = p.basis.grid_n();
        let f: Vec<f64> = (0..=gn).map(|i| (i as f64 / gn as f64).cos()).collect();
        let obs = Observable::edge_function(vec![f.clone(); g.n_undirected()]).unwrap();
        let lim_edge = limit_average_from(&g, &model, &p.basis, p.kappa, &obs).unwrap();
        let mut acc = 0.0;
        for _e in 0..g.n_directed() {
            let diag: Vec<f64> = (0..=gn)
                .map(|i| {
                    let x = i as f64 / gn as f64;
                    2.0 * psi_correlator_from_basis(&model, &p.basis, p.kappa, 1, x, x).unwrap()
                })
                .collect();
            acc += simpson_product(&f, &diag, 1.0).unwrap();
        }
        // directed edges double-count relative to the undirected sum
        let lim_kernel = acc / (2.0 * g.n_vertices() as f64);
        assert!((lim_edge - lim_kernel).abs() < 1e-10);
    }

    #[test]
    fn variance_zero_for_unit_function() {
        let (g, model, band, _) = k4_setup();
        let ones = Observable::edge_function(vec![vec![1.0; 129]; 6]).unwrap();
        let rep = quantum_variance(&g, &model, &band, &ones).unwrap();
        assert!(rep.variance < 1e-20, "variance = {}", rep.variance);
        assert_eq!(rep.n_band, 3);
        // report internal consistency
        let mean = rep.per_eigenvalue.iter().map(|(_, d)| d).sum::<f64>() / rep.n_band as f64;
        assert_eq!(mean, rep.variance);
    }

    #[test]
    fn variance_scale_law() {
        let (g, model, band, _) = k4_setup();
        let spectrum = adjacency_spectrum(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let base: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = base.iter().map(|v| 0.5 * v).collect();
        let v1 = quantum_variance_from(
            &g,
            &model,
            &band,
            &Observable::edge_constant(base).unwrap(),
            &spectrum,
        )
        .unwrap()
        .variance;
        let v2 = quantum_variance_from(
            &g,
            &model,
            &band,
            &Observable::edge_constant(scaled).unwrap(),
            &spectrum,
        )
        .unwrap()
        .variance;
        assert!((v2 - 0.25 * v1).abs() < 1e-12, "{v2} vs {}", 0.25 * v1);
    }

    #[test]
    fn eigenspace_trace_invariance() {
        // Σ over an orthonormal eigenspace basis of ⟨ψ_i, aψ_i⟩ is invariant
        // under orthonormal remixing (K₄'s triple eigenspace)
        let (g, _, _, pairs) = k4_setup();
        assert_eq!(pairs.len(), 3);
        let mut ind = vec![0.0; 6];
        ind[0] = 1.0;
        let obs = Observable::edge_constant(ind).unwrap();
        let trace = |ps: &[Eigenpair]| -> f64 {
            ps.iter().map(|p| expectation_edge(&g, p, &obs).unwrap()).sum()
        };
        let base = trace(&pairs);
        for seed in [1u64, 2] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = nalgebra::DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
            let qr = m.qr();
            let qmat = qr.q();
            let mixed: Vec<Eigenpair> = (0..3)
                .map(|i| {
                    let mut p = pairs[i].clone();
                    p.psi_ring = (0..4)
                        .map(|v| (0..3).map(|j| qmat[(j, i)] * pairs[j].psi_ring[v]).sum())
                        .collect();
                    p
                })
                .collect();
            let remixed = trace(&mixed);
            assert!((base - remixed).abs() < 1e-10, "{base} vs {remixed}");
        }
    }

    #[test]
    fn sk_family_contraction_is_spherical() {
        // (S_k)_G acts on an adjacency eigenvector as Φ_k(m)·identity
        let model = free_model(2, 128);
        let band = band1(&model);
        let g = generate_graph(GraphKind::RandomRegular, 30, 3, 4).unwrap();
        let spectrum = adjacency_spectrum(&g).unwrap();
        let pairs = band_spectrum_from(&g, &model, &band, &spectrum).unwrap();
        for k in 1..=3usize {
            let sk = 1.0 / (3.0 * 2.0f64.powi(k as i32 - 1));
            let n_paths = g.nb_path_count(k);
            let family = move |_: &Eigenpair| vec![sk; n_paths];
            for p in &pairs {
                let kv = family(p);
                let paths = g.nb_paths(k);
                let mut c = 0.0;
                for (pi, path) in paths.iter().enumerate() {
                    c += p.psi_ring[path[0] as usize] * kv[pi] * p.psi_ring[*path.last().unwrap() as usize];
                }
                let expect = spherical(2, p.m, k) * p.ring_norm_sq();
                assert!((c - expect).abs() < 1e-10, "k = {k}: {c} vs {expect}");
            }
        }
    }

    #[test]
    fn diagnostic_variances_zero_family() {
        let (g, _, _, pairs) = k4_setup();
        let family = |_: &Eigenpair| vec![0.0; g.nb_path_count(2)];
        let (v, vnb) = diagnostic_variances(&g, &pairs, 2, &family).unwrap();
        assert_eq!((v, vnb), (0.0, 0.0));
        assert!(diagnostic_variances(&g, &pairs, 0, &family).is_err());
    }

    #[test]
    fn lemma_constant_bound_on_variance() {
        // for locally constant mean-zero observables the metric variance is
        // controlled by the discrete variances of K_f and M_f with the
        // explicit a_{n,L}, b_{n,L} factors
        let model = free_model(2, 128);
        let band = band1(&model);
        let g = generate_graph(GraphKind::RandomRegular, 40, 3, 6).unwrap();
        let spectrum = adjacency_spectrum(&g).unwrap();
        let pairs = band_spectrum_from(&g, &model, &band, &spectrum).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut c: Vec<f64> = (0..g.n_undirected()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = c.iter().sum::<f64>() / c.len() as f64;
        for v in &mut c {
            *v -= mean; // mean-zero, still within [-1, 1] after recentering
            *v = v.clamp(-1.0, 1.0);
        }
        let obs = Observable::edge_constant(c.clone()).unwrap();
        let rep = quantum_variance_from(&g, &model, &band, &obs, &spectrum).unwrap();

        // K_f ∈ H₀: K_f(x) = Σ_{y~x} c_(x,y); M_f ∈ H₁: M_f(x0,x1) = c_(x0,x1)
        let kf: Vec<f64> = (0..g.n_vertices())
            .map(|v| g.out_edges(v).iter().map(|&b| c[g.undirected_of(b as usize)]).sum())
            .collect();
        let kf_mean = kf.iter().sum::<f64>() / kf.len() as f64;
        let kf_centered: Vec<f64> = kf.iter().map(|v| v - kf_mean).collect();
        let paths1 = g.nb_paths(1);
        let mf: Vec<f64> = paths1
            .iter()
            .map(|p| c[g.undirected_of(g.directed_index(p[0], p[1]).unwrap())])
            .collect();
        let mf_mean = mf.iter().sum::<f64>() / g.n_vertices() as f64; // ⟨M⟩ = (1/N)ΣK(path)
        let sk1 = 1.0 / 3.0;
        let mf_centered: Vec<f64> = mf.iter().map(|v| v - mf_mean * sk1).collect();

        let var_k = discrete_variance(&g, &pairs, 0, &|_| kf_centered.clone()).unwrap();
        let var_m = discrete_variance(&g, &pairs, 1, &|_| mf_centered.clone()).unwrap();

        // a_{n,L} = ∫S²/s², b_{n,L} = 2∫S(L-t)S(t)/s², maximized over the band pairs
        let mut a_max: f64 = 0.0;
        let mut b_max: f64 = 0.0;
        for p in &pairs {
            let (_, ib, ic) = unit_moments(&p.basis).unwrap();
            let s2 = p.basis.s * p.basis.s;
            a_max = a_max.max(ic / s2);
            b_max = b_max.max(2.0 * ib.abs() / s2);
        }
        let bound = 0.75 * (2.0 * a_max * a_max * var_k + b_max * b_max * var_m);
        assert!(
            rep.variance <= bound + 1e-12,
            "variance {} exceeds discrete bound {}",
            rep.variance,
            bound
        );
    }

    #[test]
    fn sweep_is_deterministic_and_contextual() {
        let model = free_model(2, 64);
        let cfg = SweepConfig {
            kind: GraphKind::RandomRegular,
            sizes: vec![20, 40],
            degree: 3,
            model: model.clone(),
            lambda_range: (0.01, 9.0),
            band_index: 0,
            trials: 2,
            seed: 7,
        };
        let gen = |g: &Graph, rng: &mut ChaCha8Rng| Ok(random_pm1_edge_constant(g, rng));
        let a = convergence_sweep(&cfg, &gen).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
        let b = pool.install(|| convergence_sweep(&cfg, &gen).unwrap());
        assert_eq!(a.rows.len(), b.rows.len());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.variance.to_bits(), y.variance.to_bits());
            assert_eq!(x.n_band, y.n_band);
        }
        assert_eq!(a.summaries.len(), 2);

        // single-size single-trial cycle run exercises the q = 1 path
        let cfg1 = SweepConfig {
            kind: GraphKind::Cycle,
            sizes: vec![10],
            degree: 2,
            model: free_model(1, 64),
            lambda_range: (1e-4, 9.5),
            band_index: 0,
            trials: 1,
            seed: 1,
        };
        let t = convergence_sweep(&cfg1, &gen).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].n_band, 8);
    }

    #[test]
    fn sweep_validates_input() {
        let model = free_model(2, 64);
        let mut cfg = SweepConfig {
            kind: GraphKind::RandomRegular,
            sizes: vec![40, 20],
            degree: 3,
            model,
            lambda_range: (0.01, 9.0),
            band_index: 0,
            trials: 1,
            seed: 0,
        };
        let gen = |g: &Graph, rng: &mut ChaCha8Rng| Ok(random_pm1_edge_constant(g, rng));
        assert!(convergence_sweep(&cfg, &gen).is_err()); // not ascending
        cfg.sizes = vec![20, 40];
        cfg.trials = 0;
        assert!(convergence_sweep(&cfg, &gen).is_err());
    }

    #[test]
    fn sweep_error_carries_cell_context() {
        let model = free_model(2, 64);
        let cfg = SweepConfig {
            kind: GraphKind::RandomRegular,
            sizes: vec![21, 41], // odd n·degree: generation must fail
            degree: 3,
            model,
            lambda_range: (0.01, 9.0),
            band_index: 0,
            trials: 1,
            seed: 0,
        };
        let gen = |g: &Graph, rng: &mut ChaCha8Rng| Ok(random_pm1_edge_constant(g, rng));
        match convergence_sweep(&cfg, &gen) {
            Err(Error::Context { context, .. }) => assert!(context.contains("N = 21")),
            other => panic!("expected contextual error, got {other:?}"),
        }
    }

    #[test]
    fn observable_bounds_enforced() {
        assert!(Observable::edge_constant(vec![1.5]).is_err());
        assert!(Observable::edge_function(vec![vec![0.0, 2.0, 0.0]]).is_err());
        assert!(Observable::path_kernel_dense(5, vec![], 16).is_err()); // k cap
        let too_big = Observable::path_kernel_dense(2, vec![vec![0.0; 1]; 1], 100_000);
        assert!(too_big.is_err());
    }

    #[test]
    fn observable_csv_round_trip() {
        let values = vec![0.5, -1.0, 0.25];
        let text = edge_constant_to_csv(&values);
        let back = edge_constant_from_csv(&text).unwrap();
        assert_eq!(values, back);
        let ef = edge_function_to_csv(&[vec![0.0, 0.5, 1.0]]);
        assert!(ef.starts_with("edge_id,sample_index,value\n"));
    }

    #[test]
    fn correlator_debug_route_agreement_on_limit() {
        // limit_kernel_average runs its debug cross-check internally; make
        // sure it also numerically matches a brute-force Ψ_{λ,2} quadrature
        let (g, model, _, pairs) = k4_setup();
        let p = &pairs[0];
        let gn = 64usize;
        let ones = vec![1.0; gn + 1];
        let obs = Observable::path_kernel_separable(2, vec![1.0; g.nb_path_count(2)], ones.clone(), ones)
            .unwrap();
        let fast = limit_kernel_average_from(&g, &model, &p.basis, p.kappa, &obs).unwrap();
        let w = simpson_weights(gn, 1.0).unwrap();
        let mut per_path = 0.0;
        for i in 0..=gn {
            for j in 0..=gn {
                let x = i as f64 / gn as f64;
                let y = j as f64 / gn as f64;
                per_path +=
                    w[i] * w[j] * crate::tree::psi_correlator(&model, p.lambda, 2, x, y).unwrap();
            }
        }
        let brute = per_path * g.nb_path_count(2) as f64 / g.n_vertices() as f64;
        assert!((fast - brute).abs() < 1e-9, "{fast} vs {brute}");
    }
}
