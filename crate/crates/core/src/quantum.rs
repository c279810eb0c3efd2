//! Finite quantum graphs assembled from the secular correspondence: the
//! adjacency eigenpairs `(m_j, φ_j)` with `m_j` inside `w(band)` are pulled
//! back to quantum-graph eigenvalues `λ_j = w⁻¹(m_j)` with vertex traces
//! `ψ̊_j = φ_j / √κ_{λ_j}`, from which the metric eigenfunctions are
//! reconstructed edge by edge.

use num_complex::Complex64;

use crate::edge_ode::EdgeBasis;
use crate::graph::{Graph, SpectralData};
use crate::quad::simpson;
use crate::tree::{invert_w_on_band, kappa_from_basis, mu_pm_band, Band, TreeModel};
use crate::{Error, Result};

/// A quantum-graph eigenvalue with its discrete vertex trace and the edge
/// basis needed for on-demand metric reconstruction.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    /// Adjacency eigenvalue `m = w(λ)`.
    pub m: f64,
    /// Vertex trace `ψ̊`, scaled so the metric L² norm is 1.
    pub psi_ring: Vec<f64>,
    pub band_index: usize,
    pub kappa: f64,
    pub basis: EdgeBasis,
}

impl Eigenpair {
    /// `‖ψ̊‖²`, which must equal `1/κ_λ`.
    pub fn ring_norm_sq(&self) -> f64 {
        self.psi_ring.iter().map(|v| v * v).sum()
    }

    /// Metric eigenfunction samples on the shared grid along the canonical
    /// orientation of undirected edge `e`.
    pub fn edge_samples(&self, g: &Graph, e: usize) -> Vec<f64> {
        let (u, v) = g.undirected_edges()[e];
        let po = self.psi_ring[u as usize];
        let pt = self.psi_ring[v as usize];
        let s = &self.basis.s_samples;
        let n = self.basis.grid_n();
        (0..=n).map(|i| (s[n - i] * po + s[i] * pt) / self.basis.s).collect()
    }
}

fn check_model_graph(g: &Graph, model: &TreeModel) -> Result<()> {
    if g.degree() != model.degree() {
        return Err(Error::DegreeMismatch { degree: g.degree(), expected: model.degree() });
    }
    if model.q() == 1 && (model.alpha() != 0.0 || !model.potential().is_zero()) {
        return Err(Error::UnsupportedCycleModel(format!(
            "alpha = {}, potential form {:?}",
            model.alpha(),
            model.potential().form()
        )));
    }
    Ok(())
}

/// Band spectrum from a precomputed adjacency decomposition: every
/// eigenvalue strictly inside `w(band)` (and at least `1e-9` away from the
/// degenerate edges `|m| = 2√q`) is inverted through the secular map.
/// Result is sorted by λ ascending.
pub fn band_spectrum_from(
    g: &Graph,
    model: &TreeModel,
    band: &Band,
    spectrum: &SpectralData,
) -> Result<Vec<Eigenpair>> {
    check_model_graph(g, model)?;
    let ts = model.band_threshold();
    let (ilo, ihi) = band.w_interval(model);
    let mut pairs: Vec<Eigenpair> = Vec::new();
    let mut cached: Option<(f64, f64, EdgeBasis, f64)> = None; // (m, λ, basis, κ)
    for (j, &m) in spectrum.eigenvalues.iter().enumerate() {
        if (m.abs() - ts).abs() < 1e-9 {
            continue;
        }
        if m <= ilo || m >= ihi {
            continue;
        }
        // degenerate eigenvalues sit adjacent in the sorted list; reuse the
        // λ-solve and basis for them
        let (lambda, basis, kap) = match &cached {
            Some((mc, l, b, k)) if *mc == m => (*l, b.clone(), *k),
            _ => {
                let lambda = invert_w_on_band(model, band, m)?;
                let basis = model.basis(lambda);
                let kap = kappa_from_basis(model, &basis)?;
                cached = Some((m, lambda, basis.clone(), kap));
                (lambda, basis, kap)
            }
        };
        let scale = 1.0 / kap.sqrt();
        let psi_ring: Vec<f64> = spectrum.eigenvector(j).iter().map(|v| v * scale).collect();
        pairs.push(Eigenpair { lambda, m, psi_ring, band_index: band.index, kappa: kap, basis });
    }
    pairs.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    Ok(pairs)
}

/// Convenience wrapper that diagonalizes the graph first.
pub fn band_spectrum(g: &Graph, model: &TreeModel, band: &Band) -> Result<Vec<Eigenpair>> {
    let spectrum = crate::graph::adjacency_spectrum(g)?;
    band_spectrum_from(g, model, band, &spectrum)
}

/// Metric eigenfunction value from the vertex endpoint values:
/// `ψ(x) = (S_λ(L-x)·ψ(o) + S_λ(x)·ψ(t)) / s(λ)`.
pub fn eval_psi(basis: &EdgeBasis, psi_o: f64, psi_t: f64, x: f64) -> f64 {
    (basis.s_at(basis.length - x) * psi_o + basis.s_at(x) * psi_t) / basis.s
}

/// Eigenfunction value at position `x` along the canonical orientation of
/// undirected edge `e`.
pub fn eval_eigenfunction(g: &Graph, pair: &Eigenpair, e: usize, x: f64) -> f64 {
    let (u, v) = g.undirected_edges()[e];
    eval_psi(&pair.basis, pair.psi_ring[u as usize], pair.psi_ring[v as usize], x)
}

/// Simpson L² norm of the reconstructed metric eigenfunction over the whole
/// graph; the end-to-end check of the normalization identity.
pub fn metric_norm_sq(g: &Graph, pair: &Eigenpair) -> Result<f64> {
    let mut total = 0.0;
    for e in 0..g.n_undirected() {
        let samples = pair.edge_samples(g, e);
        let sq: Vec<f64> = samples.iter().map(|v| v * v).collect();
        total += simpson(&sq, pair.basis.length)?;
    }
    Ok(total)
}

/// Kirchhoff residuals of a (candidate) eigenpair: the maximal vertex-value
/// disagreement of the edge reconstructions, and the maximal current defect
/// `|Σ_out ψ'(0) - Σ_in ψ'(L) - αψ(v)|`.
///
/// Derivatives come from the ODE endpoint data, not numerical
/// differentiation: `ψ'_b(0) = (ψ̊(t_b) - s'·ψ̊(o_b)) / s` along each
/// directed edge, and the undirected Kirchhoff sum equals the sum of
/// `ψ'_b(0)` over the out-edges of `v`.
pub fn kirchhoff_residual(g: &Graph, pair: &Eigenpair, model: &TreeModel) -> (f64, f64) {
    kirchhoff_residual_of(g, &pair.basis, &pair.psi_ring, model.alpha())
}

pub fn kirchhoff_residual_of(g: &Graph, basis: &EdgeBasis, psi_ring: &[f64], alpha: f64) -> (f64, f64) {
    let n = basis.grid_n();
    let s = basis.s;
    let sp = basis.s_prime;
    let s0 = basis.s_samples[0];
    let sl = basis.s_samples[n];
    let mut continuity: f64 = 0.0;
    for b in 0..g.n_directed() {
        let (o, t) = g.directed_edge(b);
        let (po, pt) = (psi_ring[o as usize], psi_ring[t as usize]);
        let at0 = (sl * po + s0 * pt) / s;
        let atl = (s0 * po + sl * pt) / s;
        continuity = continuity.max((at0 - po).abs()).max((atl - pt).abs());
    }
    let mut current: f64 = 0.0;
    for v in 0..g.n_vertices() {
        let mut acc = 0.0;
        for &b in g.out_edges(v) {
            let (_, t) = g.directed_edge(b as usize);
            acc += (psi_ring[t as usize] - sp * psi_ring[v]) / s;
        }
        current = current.max((acc - alpha * psi_ring[v]).abs());
    }
    (continuity, current)
}

/// Non-backtracking lifts of a vertex eigenvector and their eigen-residuals.
#[derive(Debug, Clone)]
pub struct NbLift {
    /// `f(b) = ψ̊(t_b) - μ⁻ ψ̊(o_b)`.
    pub f: Vec<Complex64>,
    /// `f*(b) = ψ̊(o_b) - μ⁻ ψ̊(t_b)`.
    pub f_star: Vec<Complex64>,
    pub mu_minus: Complex64,
    /// `‖μ⁻𝓑f - f‖₂`.
    pub residual_f: f64,
    /// `‖μ⁻𝓑*f* - f*‖₂`.
    pub residual_f_star: f64,
}

/// Lift the vertex trace to the directed edges. For a true eigenpair both
/// residuals vanish: `μ⁻𝓑f = f` and `μ⁻𝓑*f* = f*`.
pub fn nb_lift(g: &Graph, pair: &Eigenpair) -> Result<NbLift> {
    let (_, mu_minus) = mu_pm_band(g.q(), pair.m, pair.basis.s)?;
    nb_lift_of(g, &pair.psi_ring, mu_minus)
}

pub fn nb_lift_of(g: &Graph, psi_ring: &[f64], mu_minus: Complex64) -> Result<NbLift> {
    if psi_ring.len() != g.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "vertex vector length {} vs {} vertices",
            psi_ring.len(),
            g.n_vertices()
        )));
    }
    let nb = g.n_directed();
    let mut f = Vec::with_capacity(nb);
    let mut f_star = Vec::with_capacity(nb);
    for b in 0..nb {
        let (o, t) = g.directed_edge(b);
        let (po, pt) = (psi_ring[o as usize], psi_ring[t as usize]);
        f.push(Complex64::new(pt, 0.0) - mu_minus * po);
        f_star.push(Complex64::new(po, 0.0) - mu_minus * pt);
    }
    let bf = g.nb_apply(&f)?;
    let bsf = g.nb_apply_adjoint(&f_star)?;
    let residual_f = f
        .iter()
        .zip(&bf)
        .map(|(fi, bi)| (mu_minus * bi - fi).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let residual_f_star = f_star
        .iter()
        .zip(&bsf)
        .map(|(fi, bi)| (mu_minus * bi - fi).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(NbLift { f, f_star, mu_minus, residual_f, residual_f_star })
}

/// One edge of a Dirichlet cycle eigenfunction.
#[derive(Debug, Clone, Copy)]
pub struct CycleEdge {
    /// Undirected edge index in the graph.
    pub edge: usize,
    /// Whether the traversal direction matches the canonical orientation.
    pub forward: bool,
    /// Sign of `S_λ` along the traversal direction.
    pub sign: f64,
}

/// A metric eigenfunction supported on a cycle, built from the Dirichlet
/// solution `S_λ` (with `s(λ) = 0`): `±S_λ(x)` along the cycle's edges and
/// identically zero elsewhere.
#[derive(Debug, Clone)]
pub struct CycleEigenfunction {
    pub lambda: f64,
    pub basis: EdgeBasis,
    pub edges: Vec<CycleEdge>,
    n_edges_total: usize,
}

impl CycleEigenfunction {
    /// Eigenfunction value at `x` along the canonical orientation of
    /// undirected edge `e`; zero off the cycle.
    pub fn eval(&self, e: usize, x: f64) -> f64 {
        for ce in &self.edges {
            if ce.edge == e {
                let pos = if ce.forward { x } else { self.basis.length - x };
                return ce.sign * self.basis.s_at(pos);
            }
        }
        0.0
    }

    /// Grid samples along the canonical orientation of edge `e`.
    pub fn edge_samples(&self, e: usize) -> Vec<f64> {
        let n = self.basis.grid_n();
        for ce in &self.edges {
            if ce.edge == e {
                return (0..=n)
                    .map(|i| {
                        let idx = if ce.forward { i } else { n - i };
                        ce.sign * self.basis.s_samples[idx]
                    })
                    .collect();
            }
        }
        vec![0.0; n + 1]
    }

    /// Max Kirchhoff current defect over all vertices.
    pub fn kirchhoff_current_max(&self, g: &Graph, alpha: f64) -> f64 {
        // vertex values all vanish (s(λ) = 0), so continuity is automatic
        // and the α-term drops; sum ψ'_b(0) over out-edges per vertex
        let mut deriv_out = vec![0.0; g.n_vertices()];
        for ce in &self.edges {
            let (u, v) = g.undirected_edges()[ce.edge];
            let (from, to) = if ce.forward { (u, v) } else { (v, u) };
            // along traversal: ψ = sign·S, so ψ'(0) = sign·S'(0) = sign,
            // and seen from the far end ψ'(0) = -sign·S'(L) = -sign·s'
            deriv_out[from as usize] += ce.sign * self.basis.s_prime_samples[0];
            deriv_out[to as usize] -= ce.sign * self.basis.s_prime;
        }
        let _ = alpha; // ψ(v) = 0 at every vertex
        deriv_out.iter().fold(0.0f64, |m, d| m.max(d.abs()))
    }

    /// `true` if the function vanishes identically on edge `e`.
    pub fn vanishes_on(&self, e: usize) -> bool {
        self.edges.iter().all(|ce| ce.edge != e)
    }

    pub fn n_off_cycle_edges(&self) -> usize {
        self.n_edges_total - self.edges.len()
    }
}

/// Build the cycle-supported eigenfunction at the `n`-th Dirichlet
/// eigenvalue. `cycle` lists the vertices in traversal order (closed walk
/// implied); it must be simple, of even length, and each consecutive pair
/// must be an edge of the graph.
///
/// Signs follow `ε_i = s'(λ)^i`: current conservation at the shared vertex
/// of consecutive cycle edges requires `ε_i = s'(λ)·ε_{i-1}`, and
/// `s'(λ) = ±1` at Dirichlet points by the Wronskian and potential symmetry.
/// Even length makes the pattern consistent around the cycle for either
/// sign.
pub fn dirichlet_cycle_eigenfunction(
    g: &Graph,
    cycle: &[u32],
    model: &TreeModel,
    n: usize,
) -> Result<CycleEigenfunction> {
    if g.degree() != model.degree() {
        return Err(Error::DegreeMismatch { degree: g.degree(), expected: model.degree() });
    }
    let len = cycle.len();
    if len < 3 {
        return Err(Error::Parse(format!("cycle must have at least 3 vertices, got {len}")));
    }
    if len % 2 != 0 {
        return Err(Error::OddCycle(len));
    }
    let mut seen = std::collections::HashSet::new();
    for &v in cycle {
        if !seen.insert(v) {
            return Err(Error::Parse(format!("cycle revisits vertex {v}")));
        }
        if v as usize >= g.n_vertices() {
            return Err(Error::Parse(format!("cycle vertex {v} out of range")));
        }
    }

    let lambda = crate::tree::nth_dirichlet(model, n)?;
    let basis = model.basis(lambda);
    if basis.s.abs() > 1e-8 * model.length() {
        return Err(Error::Parse(format!(
            "λ = {lambda} is not a Dirichlet point (s = {:.3e})",
            basis.s
        )));
    }
    // s'(λ)² = 1 at Dirichlet points (Wronskian + symmetry)
    let rho = basis.s_prime.signum();
    debug_assert!((basis.s_prime.abs() - 1.0).abs() < 1e-8);

    let undirected = g.undirected_edges();
    let mut edges = Vec::with_capacity(len);
    let mut sign = 1.0;
    for i in 0..len {
        let from = cycle[i];
        let to = cycle[(i + 1) % len];
        let key = if from < to { (from, to) } else { (to, from) };
        let edge = undirected
            .binary_search(&key)
            .map_err(|_| Error::Parse(format!("({from}, {to}) is not an edge of the graph")))?;
        edges.push(CycleEdge { edge, forward: from < to, sign });
        sign *= rho;
    }
    Ok(CycleEigenfunction { lambda, basis, edges, n_edges_total: g.n_undirected() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_ode::Potential;
    use crate::graph::{adjacency_spectrum, generate_graph, GraphKind};
    use crate::tree::{default_scan_n, find_bands};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn free_model(q: usize, grid_n: usize) -> TreeModel {
        TreeModel::new(q, 0.0, Potential::zero(1.0, grid_n).unwrap()).unwrap()
    }

    fn k4_band_pairs() -> (Graph, TreeModel, Vec<Eigenpair>) {
        let g = generate_graph(GraphKind::Complete, 4, 3, 0).unwrap();
        let model = free_model(2, 256);
        let bs = find_bands(&model, (0.01, 9.0), default_scan_n((0.01, 9.0))).unwrap();
        let pairs = band_spectrum(&g, &model, &bs.bands[0]).unwrap();
        (g, model, pairs)
    }

    #[test]
    fn k4_three_pairs_in_band_one() {
        let (_, model, pairs) = k4_band_pairs();
        // m = 3 lies outside w(band 1) = (-2√2, 2√2); the triple m = -1 maps
        // to λ = arccos(-1/3)²
        assert_eq!(pairs.len(), 3);
        let expect = (-1.0f64 / 3.0).acos().powi(2);
        for p in &pairs {
            assert!((p.lambda - expect).abs() < 1e-10);
            assert!((p.m + 1.0).abs() < 1e-12);
            assert!((model.w(p.lambda) - p.m).abs() < 1e-10); // secular round trip
            assert!((p.ring_norm_sq() - 1.0 / p.kappa).abs() < 1e-8);
        }
    }

    #[test]
    fn band_spectrum_rejects_mismatched_model() {
        let g = generate_graph(GraphKind::Cycle, 6, 2, 0).unwrap();
        let model = free_model(2, 256); // degree 3 model on a degree-2 graph
        let bs = find_bands(&model, (0.01, 9.0), 18_000).unwrap();
        assert!(matches!(
            band_spectrum(&g, &model, &bs.bands[0]),
            Err(Error::DegreeMismatch { .. })
        ));
        // q = 1 with a coupling constant is rejected
        let bad = TreeModel::new(1, 0.5, Potential::zero(1.0, 256).unwrap()).unwrap();
        let bs1 = find_bands(&bad, (0.01, 9.5), 19_000).unwrap();
        assert!(matches!(
            band_spectrum(&g, &bad, &bs1.bands[0]),
            Err(Error::UnsupportedCycleModel(_))
        ));
    }

    #[test]
    fn cycle_q1_free_pipeline_works() {
        let g = generate_graph(GraphKind::Cycle, 10, 2, 0).unwrap();
        let model = free_model(1, 256);
        let bs = find_bands(&model, (1e-4, 9.5), 19_000).unwrap();
        let pairs = band_spectrum(&g, &model, &bs.bands[0]).unwrap();
        // m = ±2 dropped (band edges), the rest map to λ = (2πk/10)²
        assert_eq!(pairs.len(), 8);
        for p in &pairs {
            assert!((model.w(p.lambda) - p.m).abs() < 1e-10);
        }
    }

    #[test]
    fn eval_endpoints_match_ring() {
        let (g, _, pairs) = k4_band_pairs();
        for p in &pairs {
            for e in 0..g.n_undirected() {
                let (u, v) = g.undirected_edges()[e];
                let at0 = eval_eigenfunction(&g, p, e, 0.0);
                let atl = eval_eigenfunction(&g, p, e, 1.0);
                assert!((at0 - p.psi_ring[u as usize]).abs() < 1e-14);
                assert!((atl - p.psi_ring[v as usize]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eval_closed_form_reduction() {
        // ψ̊(o) = 1, ψ̊(t) = 0, λ = π²/4: ψ(x) = cos(πx/2), so ψ(1/2) = √2/2
        let model = free_model(2, 256);
        let basis = model.basis(PI * PI / 4.0);
        let v = eval_psi(&basis, 1.0, 0.0, 0.5);
        assert!((v - 2.0f64.sqrt() / 2.0).abs() < 1e-13);
    }

    #[test]
    fn metric_norm_is_one() {
        let (g, _, pairs) = k4_band_pairs();
        for p in &pairs {
            let norm = metric_norm_sq(&g, p).unwrap();
            assert!((norm - 1.0).abs() < 1e-6, "norm² = {norm}");
        }
    }

    #[test]
    fn discrete_eigen_relation() {
        let (g, _, pairs) = k4_band_pairs();
        let a = g.adjacency_matrix();
        for p in &pairs {
            let psi = nalgebra::DVector::from_column_slice(&p.psi_ring);
            let res = (&a * &psi - p.m * &psi).norm();
            assert!(res < 1e-8, "‖Aψ̊ - mψ̊‖ = {res}");
        }
    }

    #[test]
    fn kirchhoff_residual_k4() {
        let (g, model, pairs) = k4_band_pairs();
        for p in &pairs {
            let (cont, curr) = kirchhoff_residual(&g, p, &model);
            assert!(cont < 1e-12, "continuity {cont}");
            assert!(curr < 1e-8, "current {curr}");
        }
    }

    #[test]
    fn kirchhoff_alpha_random_graph() {
        // α = 0.5 on a random cubic graph at grid 1024
        let g = generate_graph(GraphKind::RandomRegular, 50, 3, 3).unwrap();
        let model = TreeModel::new(2, 0.5, Potential::zero(1.0, 1024).unwrap()).unwrap();
        let bs = find_bands(&model, (0.01, 9.0), 18_000).unwrap();
        let pairs = band_spectrum(&g, &model, &bs.bands[0]).unwrap();
        assert!(!pairs.is_empty());
        for p in &pairs {
            let (_, curr) = kirchhoff_residual(&g, p, &model);
            assert!(curr < 1e-7, "current residual {curr}");
        }
    }

    #[test]
    fn kirchhoff_negative_control() {
        // a random vector is far from satisfying current conservation
        let (g, model, pairs) = k4_band_pairs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let fake: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, curr) = kirchhoff_residual_of(&g, &pairs[0].basis, &fake, model.alpha());
        assert!(curr > 1e-3, "random vector current residual {curr} suspiciously small");
    }

    #[test]
    fn nb_lift_eigen_relations() {
        let (g, _, pairs) = k4_band_pairs();
        for p in &pairs {
            let lift = nb_lift(&g, p).unwrap();
            assert!(lift.residual_f <= 1e-10, "residual {}", lift.residual_f);
            assert!(lift.residual_f_star <= 1e-10);
            // ι-relation f* = ιf holds exactly by construction
            for b in 0..g.n_directed() {
                assert_eq!(lift.f_star[b], lift.f[g.reverse(b)]);
            }
        }
    }

    #[test]
    fn nb_lift_negative_control() {
        let (g, _, pairs) = k4_band_pairs();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let fake: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lift = nb_lift_of(&g, &fake, pairs[0].mu_lift_for_test()).unwrap();
        assert!(lift.residual_f > 1e-2);
    }

    #[test]
    fn nb_lift_on_seeded_random_graphs() {
        let model = free_model(2, 256);
        let bs = find_bands(&model, (0.01, 9.0), 18_000).unwrap();
        for seed in 0..10 {
            let g = generate_graph(GraphKind::RandomRegular, 40, 3, seed).unwrap();
            let spectrum = adjacency_spectrum(&g).unwrap();
            let pairs = band_spectrum_from(&g, &model, &bs.bands[0], &spectrum).unwrap();
            for p in &pairs {
                let lift = nb_lift(&g, p).unwrap();
                assert!(lift.residual_f <= 1e-10, "seed {seed}: {}", lift.residual_f);
                assert!(lift.residual_f_star <= 1e-10);
            }
        }
    }

    #[test]
    fn band_eigenvectors_orthogonal() {
        let model = free_model(2, 256);
        let bs = find_bands(&model, (0.01, 9.0), 18_000).unwrap();
        let g = generate_graph(GraphKind::RandomRegular, 60, 3, 2).unwrap();
        let pairs = band_spectrum(&g, &model, &bs.bands[0]).unwrap();
        for i in 0..pairs.len() {
            for j in (i + 1)..pairs.len() {
                if (pairs[i].lambda - pairs[j].lambda).abs() > 1e-12 {
                    let dot: f64 = pairs[i]
                        .psi_ring
                        .iter()
                        .zip(&pairs[j].psi_ring)
                        .map(|(a, b)| a * b)
                        .sum();
                    assert!(dot.abs() < 1e-8, "⟨ψ̊_{i}, ψ̊_{j}⟩ = {dot}");
                }
            }
        }
    }

    #[test]
    fn dirichlet_cycle_on_k4() {
        // a 4-cycle inside K₄ at λ = π² carries ±sin(πx)
        let g = generate_graph(GraphKind::Complete, 4, 3, 0).unwrap();
        let model = free_model(2, 512);
        let cyc = dirichlet_cycle_eigenfunction(&g, &[0, 1, 2, 3], &model, 1).unwrap();
        assert!((cyc.lambda - PI * PI).abs() < 1e-8);
        assert_eq!(cyc.edges.len(), 4);
        assert_eq!(cyc.n_off_cycle_edges(), 2);
        // current conservation: S' alternates
        let res = cyc.kirchhoff_current_max(&g, 0.0);
        assert!(res < 1e-8, "cycle Kirchhoff residual {res}");
        // edge-wise the function is ±sin(πx)/π = ±S_λ
        let v = cyc.eval(cyc.edges[0].edge, 0.25);
        assert!((v.abs() - (PI * 0.25).sin() / PI).abs() < 1e-10);
        // support: vanishes identically on the two chords
        for e in 0..g.n_undirected() {
            if cyc.vanishes_on(e) {
                for i in 0..=8 {
                    assert_eq!(cyc.eval(e, i as f64 / 8.0), 0.0);
                }
            }
        }
        // ⟨ψ, aψ⟩ = 0 for the indicator of an off-cycle edge
        let off_edge = (0..g.n_undirected()).find(|&e| cyc.vanishes_on(e)).unwrap();
        let samples = cyc.edge_samples(off_edge);
        let sq: Vec<f64> = samples.iter().map(|v| v * v).collect();
        assert_eq!(simpson(&sq, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn dirichlet_cycle_rejects_odd() {
        let g = generate_graph(GraphKind::Complete, 4, 3, 0).unwrap();
        let model = free_model(2, 256);
        assert!(matches!(
            dirichlet_cycle_eigenfunction(&g, &[0, 1, 2], &model, 1),
            Err(Error::OddCycle(3))
        ));
    }

    #[test]
    fn dirichlet_cycle_even_index_constant_signs() {
        // at the 2nd Dirichlet point s' = +1, so the consistent pattern is
        // constant signs rather than alternating ones
        let g = generate_graph(GraphKind::Complete, 4, 3, 0).unwrap();
        let model = free_model(2, 512);
        let cyc = dirichlet_cycle_eigenfunction(&g, &[0, 1, 2, 3], &model, 2).unwrap();
        assert!((cyc.lambda - 4.0 * PI * PI).abs() < 1e-7);
        let res = cyc.kirchhoff_current_max(&g, 0.0);
        assert!(res < 1e-7, "cycle Kirchhoff residual {res}");
        assert!(cyc.edges.iter().all(|e| e.sign == 1.0));
    }

    impl Eigenpair {
        fn mu_lift_for_test(&self) -> Complex64 {
            mu_pm_band(2, self.m, self.basis.s).unwrap().1
        }
    }
}
