//! Spectral theory of the infinite equilateral `(q+1)`-regular quantum tree:
//! the secular function `w(λ) = (q+1)c(λ) + αs(λ)`, its band structure and
//! Dirichlet set, the roots `μ±` of `qx² - wx + 1 = 0`, discrete Green's
//! functions, spherical functions, the normalization `κ_λ` and the limit
//! densities `Ψ_λ`, `Ψ_{λ,k}`.

use num_complex::Complex64;

use crate::edge_ode::{
    edge_basis, endpoint_data, endpoint_data_complex, unit_moments, EdgeBasis, Endpoints, Potential,
};
use crate::{Error, Result};

/// The infinite-tree model: branching `q`, Kirchhoff coupling `α` and the
/// shared symmetric edge potential (which owns the edge length and grid).
#[derive(Debug, Clone)]
pub struct TreeModel {
    q: usize,
    alpha: f64,
    potential: Potential,
}

impl TreeModel {
    pub fn new(q: usize, alpha: f64, potential: Potential) -> Result<Self> {
        if q < 1 {
            return Err(Error::Parse(format!("branching q must be ≥ 1, got {q}")));
        }
        Ok(TreeModel { q, alpha, potential })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn degree(&self) -> usize {
        self.q + 1
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn length(&self) -> f64 {
        self.potential.length()
    }

    /// `2√q`, the band threshold for `|w|`.
    pub fn band_threshold(&self) -> f64 {
        2.0 * (self.q as f64).sqrt()
    }

    /// Full basis solve at λ.
    pub fn basis(&self, lambda: f64) -> EdgeBasis {
        edge_basis(&self.potential, lambda)
    }

    /// Endpoint data only (cheap path for scans and root solves).
    pub fn endpoints(&self, lambda: f64) -> Endpoints<f64> {
        endpoint_data(&self.potential, lambda)
    }

    /// Secular value `w(λ) = (q+1)c(λ) + αs(λ)`.
    pub fn w(&self, lambda: f64) -> f64 {
        let e = self.endpoints(lambda);
        self.w_from(&e)
    }

    pub fn w_from(&self, e: &Endpoints<f64>) -> f64 {
        (self.q as f64 + 1.0) * e.c + self.alpha * e.s
    }

    /// Secular value at complex energy γ, with the endpoint data.
    pub fn w_complex(&self, gamma: Complex64) -> (Endpoints<Complex64>, Complex64) {
        let e = endpoint_data_complex(&self.potential, gamma);
        let w = e.c * (self.q as f64 + 1.0) + e.s * self.alpha;
        (e, w)
    }

    /// Same model on a different shared grid.
    pub fn with_grid(&self, grid_n: usize) -> Result<Self> {
        Ok(TreeModel { q: self.q, alpha: self.alpha, potential: self.potential.with_grid(grid_n)? })
    }
}

/// How a band endpoint was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandEdgeKind {
    /// `|w| = 2√q` crossing.
    Crossing,
    /// Interior extremum of `w` splitting a σ₁ component into fixed bands.
    Extremum,
    /// Clipped by the requested scan range.
    RangeClip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Increasing => "increasing",
            Direction::Decreasing => "decreasing",
        }
    }
}

/// A fixed band: a maximal open λ-interval with `|w| < 2√q` on which `w` is
/// strictly monotone.
#[derive(Debug, Clone)]
pub struct Band {
    pub index: usize,
    pub lo: f64,
    pub hi: f64,
    pub direction: Direction,
    pub lo_kind: BandEdgeKind,
    pub hi_kind: BandEdgeKind,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, lambda: f64) -> bool {
        lambda > self.lo && lambda < self.hi
    }

    /// λ at relative position `frac ∈ (0, 1)` inside the band.
    pub fn sample(&self, frac: f64) -> f64 {
        self.lo + frac * (self.hi - self.lo)
    }

    /// Image interval `(min w, max w)` over the band.
    pub fn w_interval(&self, model: &TreeModel) -> (f64, f64) {
        let wl = model.w(self.lo);
        let wh = model.w(self.hi);
        (wl.min(wh), wl.max(wh))
    }
}

/// Output of the band scan: fixed bands plus the Dirichlet set σ₂ found in
/// the scanned range.
#[derive(Debug, Clone)]
pub struct BandStructure {
    pub bands: Vec<Band>,
    pub dirichlet: Vec<f64>,
}

/// Default scan resolution: 2000 points per unit of λ, floored at 200.
pub fn default_scan_n(range: (f64, f64)) -> usize {
    let len = (range.1 - range.0).max(0.0);
    ((2000.0 * len).ceil() as usize).max(200)
}

const ROOT_TOL: f64 = 1e-13;
const MAX_BISECT: usize = 200;

fn bisect_root(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= ROOT_TOL * mid.abs().max(1.0) {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fa > 0.0) == (fm > 0.0) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b)
}

/// Golden-section extremum refinement on `[a, b]`.
fn golden_extremum(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, maximize: bool) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let sgn = if maximize { 1.0 } else { -1.0 };
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = sgn * f(x1);
    let mut f2 = sgn * f(x2);
    for _ in 0..MAX_BISECT {
        if (b - a).abs() <= ROOT_TOL * b.abs().max(1.0) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = sgn * f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = sgn * f(x2);
        }
    }
    0.5 * (a + b)
}

/// Scan `w` and `s` over `lambda_range` and return the fixed bands and the
/// Dirichlet points. Band edges and σ₂ roots are bisected to ~1e-12;
/// σ₁ components are split at interior extrema of `w` so that every returned
/// band carries a strictly monotone `w`.
pub fn find_bands(model: &TreeModel, lambda_range: (f64, f64), scan_n: usize) -> Result<BandStructure> {
    if scan_n < 100 {
        return Err(Error::ScanTooCoarse(format!("scan_n = {scan_n} < 100")));
    }
    let (lo, hi) = lambda_range;
    if !(hi > lo) {
        return Ok(BandStructure { bands: Vec::new(), dirichlet: Vec::new() });
    }
    let ts = model.band_threshold();
    let n = scan_n;
    let step = (hi - lo) / (n - 1) as f64;
    let lambdas: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
    let endpoints: Vec<Endpoints<f64>> = lambdas.iter().map(|&l| model.endpoints(l)).collect();
    let ws: Vec<f64> = endpoints.iter().map(|e| model.w_from(e)).collect();
    let ss: Vec<f64> = endpoints.iter().map(|e| e.s).collect();

    let w_of = |l: f64| model.w(l);
    let s_of = |l: f64| model.endpoints(l).s;

    // Dirichlet roots: sign changes of s
    let mut dirichlet = Vec::new();
    for i in 1..n {
        if ss[i - 1] == 0.0 {
            dirichlet.push(lambdas[i - 1]);
        } else if ss[i - 1] * ss[i] < 0.0 {
            dirichlet.push(bisect_root(&|l| s_of(l), lambdas[i - 1], lambdas[i]));
        }
    }
    if *ss.last().unwrap() == 0.0 {
        dirichlet.push(*lambdas.last().unwrap());
    }
    dirichlet.dedup_by(|a, b| (*a - *b).abs() < 1e-10);

    // |w| = 2√q crossings
    let mut cuts = vec![lo];
    for i in 1..n {
        for sign in [1.0, -1.0] {
            let f = |l: f64| w_of(l) - sign * ts;
            let (ga, gb) = (ws[i - 1] - sign * ts, ws[i] - sign * ts);
            if ga == 0.0 {
                cuts.push(lambdas[i - 1]);
            } else if ga * gb < 0.0 {
                cuts.push(bisect_root(&f, lambdas[i - 1], lambdas[i]));
            }
        }
    }
    cuts.push(hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    // classify the intervals between cuts; keep σ₁ components
    let mut bands: Vec<Band> = Vec::new();
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b - a < 1e-10 {
            continue;
        }
        let mid = 0.5 * (a + b);
        if w_of(mid).abs() >= ts {
            continue;
        }
        let a_kind = if (a - lo).abs() < 1e-12 { BandEdgeKind::RangeClip } else { BandEdgeKind::Crossing };
        let b_kind = if (b - hi).abs() < 1e-12 { BandEdgeKind::RangeClip } else { BandEdgeKind::Crossing };

        // interior extrema of w split the component into fixed bands
        let mut splits = vec![(a, a_kind)];
        let i0 = lambdas.partition_point(|&l| l <= a);
        let i1 = lambdas.partition_point(|&l| l < b);
        let idx: Vec<usize> = (i0..i1).collect();
        for t in 1..idx.len().saturating_sub(1) {
            let (im, i, ip) = (idx[t - 1], idx[t], idx[t + 1]);
            let d1 = ws[i] - ws[im];
            let d2 = ws[ip] - ws[i];
            if d1 > 0.0 && d2 < 0.0 {
                let x = golden_extremum(&w_of, lambdas[im], lambdas[ip], true);
                if x > a + 1e-10 && x < b - 1e-10 {
                    splits.push((x, BandEdgeKind::Extremum));
                }
            } else if d1 < 0.0 && d2 > 0.0 {
                let x = golden_extremum(&w_of, lambdas[im], lambdas[ip], false);
                if x > a + 1e-10 && x < b - 1e-10 {
                    splits.push((x, BandEdgeKind::Extremum));
                }
            }
        }
        splits.push((b, b_kind));
        splits.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        splits.dedup_by(|p, q| (p.0 - q.0).abs() < 1e-9);

        for sw in splits.windows(2) {
            let (sa, ka) = sw[0];
            let (sb, kb) = sw[1];
            if sb - sa < 1e-9 {
                continue;
            }
            let wa = w_of(sa);
            let wb = w_of(sb);
            let direction = if wb > wa { Direction::Increasing } else { Direction::Decreasing };
            // monotonicity spot-check; failure means the scan missed features
            let probes = 24;
            let mut prev = wa;
            for t in 1..probes {
                let l = sa + (sb - sa) * t as f64 / probes as f64;
                let wl = w_of(l);
                let ok = match direction {
                    Direction::Increasing => wl >= prev - 1e-12,
                    Direction::Decreasing => wl <= prev + 1e-12,
                };
                if !ok {
                    return Err(Error::ScanTooCoarse(format!(
                        "w is not monotone inside candidate band ({sa}, {sb})"
                    )));
                }
                prev = wl;
            }
            bands.push(Band { index: 0, lo: sa, hi: sb, direction, lo_kind: ka, hi_kind: kb });
        }
    }

    for (i, b) in bands.iter_mut().enumerate() {
        b.index = i;
    }

    // σ₂ never sits strictly inside a band (σ₁ and σ₂ are disjoint);
    // seeing one means the scan resolution lied to us.
    for b in &bands {
        for &d in &dirichlet {
            if d > b.lo + 1e-9 && d < b.hi - 1e-9 {
                return Err(Error::ScanTooCoarse(format!(
                    "Dirichlet point λ = {d} inside band ({}, {})",
                    b.lo, b.hi
                )));
            }
        }
    }

    Ok(BandStructure { bands, dirichlet })
}

/// The `n`-th Dirichlet eigenvalue (1-based): the `n`-th root of `s(λ) = 0`.
pub fn nth_dirichlet(model: &TreeModel, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parse("Dirichlet index is 1-based".into()));
    }
    let l = model.length();
    let pi = std::f64::consts::PI;
    let u_bound = model.potential().samples().iter().fold(0.0f64, |m, u| m.max(u.abs()));
    // Dirichlet eigenvalues of -d²/dx² + U lie within |U|_∞ of (kπ/L)²
    let hi = ((n as f64 + 2.0) * pi / l).powi(2) + u_bound + 1.0;
    let lo = -(u_bound + 1.0);
    let scan = ((hi - lo) * 400.0).ceil() as usize;
    let structure = find_bands(model, (lo, hi), scan.max(200))?;
    structure
        .dirichlet
        .get(n - 1)
        .copied()
        .ok_or_else(|| Error::Parse(format!("could not locate Dirichlet eigenvalue #{n}")))
}

/// Unique λ in the band with `w(λ) = m`. `m` must lie strictly inside the
/// open image `w(band)`; values within `1e-9` of the degenerate edges
/// `|m| = 2√q` are rejected.
pub fn invert_w_on_band(model: &TreeModel, band: &Band, m: f64) -> Result<f64> {
    let ts = model.band_threshold();
    if (m.abs() - ts).abs() < 1e-9 {
        return Err(Error::DegenerateBandEdge { m, tol: 1e-9 });
    }
    let (ilo, ihi) = band.w_interval(model);
    if m <= ilo || m >= ihi {
        return Err(Error::OutsideBandImage { m, lo: ilo, hi: ihi });
    }
    let f = |l: f64| model.w(l) - m;
    let lambda = bisect_root(&f, band.lo, band.hi);
    let back = model.w(lambda);
    if (back - m).abs() > 1e-10 {
        return Err(Error::ScanTooCoarse(format!(
            "secular inversion round trip |w(λ) - m| = {:.3e} at m = {m}",
            (back - m).abs()
        )));
    }
    Ok(lambda)
}

/// Roots `μ±` of `qx² - wx + 1 = 0` for real λ inside a band (`w² < 4q`),
/// with the `λ + i0` branch fixed by `sign(Im μ⁻) = sign(s(λ))` — the choice
/// that keeps `Im G^{λ+i0}(o,o) ≥ 0`.
pub fn mu_pm_band(q: usize, w: f64, s: f64) -> Result<(Complex64, Complex64)> {
    let qf = q as f64;
    let disc = 4.0 * qf - w * w;
    if disc <= 0.0 {
        return Err(Error::DegenerateBandEdge { m: w, tol: 0.0 });
    }
    let root = disc.sqrt();
    let sign = if s >= 0.0 { 1.0 } else { -1.0 };
    let mu_minus = Complex64::new(w / (2.0 * qf), sign * root / (2.0 * qf));
    let mu_plus = mu_minus.conj();
    Ok((mu_plus, mu_minus))
}

/// Roots `μ±` at complex energy (or real energy outside the band):
/// `μ⁻` is the small-modulus root, the continuous limit from ℂ⁺.
/// Returns `(μ⁺, μ⁻)`.
pub fn mu_pm_general(q: usize, w: Complex64) -> Result<(Complex64, Complex64)> {
    let qf = q as f64;
    let sq = (w * w - 4.0 * qf).sqrt();
    let r1 = (w + sq) / (2.0 * qf);
    let r2 = (w - sq) / (2.0 * qf);
    let (big, small) = if r1.norm() >= r2.norm() { (r1, r2) } else { (r2, r1) };
    if (big.norm() - small.norm()).abs() < 1e-12 * big.norm().max(1.0) {
        return Err(Error::DegenerateBandEdge { m: w.re, tol: 1e-12 });
    }
    Ok((big, small))
}

/// Band-branch `μ±` at real λ: `(μ⁺, μ⁻)`.
pub fn mu_pm(model: &TreeModel, lambda: f64) -> Result<(Complex64, Complex64)> {
    let e = model.endpoints(lambda);
    let w = model.w_from(&e);
    mu_pm_band(model.q(), w, e.s)
}

/// Spherical function `Φ_m(d)` of the `(q+1)`-regular combinatorial tree
/// by the three-term recursion `Φ(d) = (m·Φ(d-1) - Φ(d-2))/q`, seeded by
/// `Φ(0) = 1`, `Φ(1) = m/(q+1)`.
pub fn spherical(q: usize, m: f64, d: usize) -> f64 {
    let qf = q as f64;
    match d {
        0 => 1.0,
        1 => m / (qf + 1.0),
        _ => {
            let mut prev = 1.0;
            let mut cur = m / (qf + 1.0);
            for _ in 2..=d {
                let next = (m * cur - prev) / qf;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Closed Chebyshev form of the spherical function, valid for `|m| ≤ 2√q`:
/// `Φ_m(d) = q^{-d/2} (2/(q+1)·cos dθ + (q-1)/(q+1)·sin((d+1)θ)/sin θ)`
/// with `θ = arccos(m / 2√q)`. Independent cross-check of the recursion.
pub fn spherical_closed(q: usize, m: f64, d: usize) -> f64 {
    let qf = q as f64;
    let x = m / (2.0 * qf.sqrt());
    debug_assert!(x.abs() <= 1.0 + 1e-12);
    let theta = x.clamp(-1.0, 1.0).acos();
    let p = (d as f64 * theta).cos();
    let qq = if theta.sin().abs() < 1e-9 {
        // sin((d+1)θ)/sin θ → (d+1)(±1)^d at θ ∈ {0, π}
        let s: f64 = if theta < 0.5 { 1.0 } else { -1.0 };
        (d as f64 + 1.0) * s.powi(d as i32)
    } else {
        ((d as f64 + 1.0) * theta).sin() / theta.sin()
    };
    qf.powf(-(d as f64) / 2.0) * (2.0 / (qf + 1.0) * p + (qf - 1.0) / (qf + 1.0) * qq)
}

/// Discrete Green's function of the quantum tree between vertices at
/// distance `d`:
///
/// `G_T^γ(v, w) = -s(γ) · (μ⁻)^d / ((q+1)μ⁻ - w(γ))`.
///
/// `Im γ ≠ 0` uses the small-modulus branch of `μ⁻`; `Im γ = 0` is read as
/// the boundary value `λ + i0` with the band branch rule (and the
/// small-modulus real root outside σ₁, where the boundary value extends as
/// long as the denominator stays away from its pole at `w = ±(q+1)`).
pub fn green_tree_discrete(model: &TreeModel, gamma: Complex64, d: usize) -> Result<Complex64> {
    let qf = model.q() as f64;
    let (s, w, mu_minus) = if gamma.im == 0.0 {
        let lambda = gamma.re;
        let e = model.endpoints(lambda);
        let w = model.w_from(&e);
        // at σ₂ the kernel has a pole for interior points; reject outright
        if e.s.abs() < 1e-9 * model.length() {
            return Err(Error::NearDirichlet { lambda, s_abs: e.s.abs() });
        }
        let disc = 4.0 * qf - w * w;
        let mu = if disc > 1e-12 {
            mu_pm_band(model.q(), w, e.s)?.1
        } else if disc < -1e-12 {
            let root = (-disc).sqrt();
            Complex64::new((w - w.signum() * root) / (2.0 * qf), 0.0)
        } else {
            return Err(Error::DegenerateBandEdge { m: w, tol: 1e-12 });
        };
        (Complex64::new(e.s, 0.0), Complex64::new(w, 0.0), mu)
    } else {
        let (e, w) = model.w_complex(gamma);
        let (_, mu) = mu_pm_general(model.q(), w)?;
        (e.s, w, mu)
    };
    let denom = mu_minus * (qf + 1.0) - w;
    if denom.norm() < 1e-8 {
        return Err(Error::NearDirichlet { lambda: gamma.re, s_abs: s.norm() });
    }
    Ok(-s * mu_minus.powu(d as u32) / denom)
}

/// Green's function of the *adjacency operator* of the `(q+1)`-regular
/// combinatorial tree by fixed-point iteration of the rooted-resolvent
/// self-consistency `g = 1/(-z - q·g)` — the continued-fraction route,
/// deliberately independent of the closed form used elsewhere:
///
/// `G(o,o) = 1/(-z - (q+1)g)`, `G(d) = (-g)^d · G(o,o)`.
pub fn tree_adjacency_resolvent_cf(q: usize, z: Complex64, d: usize, tol: f64) -> Result<Complex64> {
    if z.im == 0.0 {
        return Err(Error::Eigensolver(
            "tree resolvent fixed point needs Im z ≠ 0; use an η-sequence for boundary values".into(),
        ));
    }
    if z.im < 0.0 {
        // reflection G(z̄) = conj G(z) keeps the iteration in ℂ⁺
        return Ok(tree_adjacency_resolvent_cf(q, z.conj(), d, tol)?.conj());
    }
    let qf = q as f64;
    let mut g = Complex64::new(0.0, 1.0);
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let mut result = None;
    for _ in 0..5_000_000usize {
        let next = Complex64::new(1.0, 0.0) / (-z - g * qf);
        let delta = (next - g).norm();
        if delta < tol {
            result = Some(next);
            break;
        }
        if delta < best * 0.9999 {
            best = delta;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best > 4096 {
            // Roundoff floor: near the spectrum the multiplier approaches -1
            // and the iteration settles into a period-2 cycle of width
            // ~ulp/Im z straddling the fixed point. Averaging the two cycle
            // points cancels the alternating error.
            result = Some((g + next) * 0.5);
            break;
        }
        g = next;
    }
    let g = result.ok_or_else(|| {
        Error::Eigensolver(format!("tree resolvent fixed point did not reach {tol:.1e} at z = {z}"))
    })?;
    let residual = (g * g * qf + z * g + Complex64::new(1.0, 0.0)).norm();
    if residual > 1e-11 {
        return Err(Error::Eigensolver(format!(
            "tree resolvent self-consistency residual {residual:.3e} at z = {z}"
        )));
    }
    let g_oo = Complex64::new(1.0, 0.0) / (-z - g * (qf + 1.0));
    Ok((-g).powu(d as u32) * g_oo)
}

/// Guard for formulas dividing by `s²(λ)`.
fn check_not_dirichlet(model: &TreeModel, basis: &EdgeBasis) -> Result<()> {
    if basis.s.abs() < 1e-9 * model.length() {
        return Err(Error::NearDirichlet { lambda: basis.lambda, s_abs: basis.s.abs() });
    }
    Ok(())
}

/// Normalization constant tying metric and vertex norms:
/// `κ_λ = (q+1)/s² ∫S² + w/s² ∫S(L-t)S(t)`.
pub fn kappa_from_basis(model: &TreeModel, basis: &EdgeBasis) -> Result<f64> {
    check_not_dirichlet(model, basis)?;
    let (_, b, c) = unit_moments(basis)?;
    let w = (model.q() as f64 + 1.0) * basis.c + model.alpha() * basis.s;
    let s2 = basis.s * basis.s;
    let kappa = ((model.q() as f64 + 1.0) * c + w * b) / s2;
    debug_assert!(kappa > 0.0, "κ_λ = {kappa} must be positive on bands");
    Ok(kappa)
}

pub fn kappa(model: &TreeModel, lambda: f64) -> Result<f64> {
    kappa_from_basis(model, &model.basis(lambda))
}

/// Limit density of eigenfunction mass along an edge:
/// `Ψ_λ(x) = (S²(L-x) + S²(x) + (2w/(q+1))·S(L-x)S(x)) / (κ_λ s²)`.
pub fn psi_density_from_basis(model: &TreeModel, basis: &EdgeBasis, kappa: f64, x: f64) -> f64 {
    let w = (model.q() as f64 + 1.0) * basis.c + model.alpha() * basis.s;
    let s2 = basis.s * basis.s;
    let sx = basis.s_at(x);
    let slx = basis.s_at(basis.length - x);
    (slx * slx + sx * sx + 2.0 * w / (model.q() as f64 + 1.0) * slx * sx) / (kappa * s2)
}

pub fn psi_density(model: &TreeModel, lambda: f64, x: f64) -> Result<f64> {
    let basis = model.basis(lambda);
    let kappa = kappa_from_basis(model, &basis)?;
    Ok(psi_density_from_basis(model, &basis, kappa, x))
}

/// Ψ_λ on the shared grid (for quadrature and CSV dumps).
pub fn psi_density_grid(model: &TreeModel, basis: &EdgeBasis, kappa: f64) -> Vec<f64> {
    let n = basis.grid_n();
    let w = (model.q() as f64 + 1.0) * basis.c + model.alpha() * basis.s;
    let s2 = basis.s * basis.s;
    let s = &basis.s_samples;
    (0..=n)
        .map(|i| {
            (s[n - i] * s[n - i] + s[i] * s[i] + 2.0 * w / (model.q() as f64 + 1.0) * s[n - i] * s[i])
                / (kappa * s2)
        })
        .collect()
}

/// Two-point limit correlator `Ψ_{λ,k}(x, y)` for a non-backtracking k-path,
/// assembled from `S_λ` and the spherical function of `w(λ)`; the `k = 1`
/// and `k ≥ 2` arms use their respective expansions.
pub fn psi_correlator_from_basis(
    model: &TreeModel,
    basis: &EdgeBasis,
    kappa: f64,
    k: usize,
    x: f64,
    y: f64,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parse("path order k must be ≥ 1".into()));
    }
    let q = model.q();
    let w = (q as f64 + 1.0) * basis.c + model.alpha() * basis.s;
    let s2 = basis.s * basis.s;
    let l = basis.length;
    let sx = basis.s_at(x);
    let slx = basis.s_at(l - x);
    let sy = basis.s_at(y);
    let sly = basis.s_at(l - y);
    let val = if k == 1 {
        slx * sly + sx * sy + (slx * sy + sx * sly) * spherical(q, w, 1)
    } else {
        slx * sy * spherical(q, w, k)
            + (slx * sly + sx * sy) * spherical(q, w, k - 1)
            + sx * sly * spherical(q, w, k - 2)
    };
    Ok(val / (2.0 * kappa * s2))
}

pub fn psi_correlator(model: &TreeModel, lambda: f64, k: usize, x: f64, y: f64) -> Result<f64> {
    let basis = model.basis(lambda);
    let kappa = kappa_from_basis(model, &basis)?;
    psi_correlator_from_basis(model, &basis, kappa, k, x, y)
}

/// Green's-function route to the same correlator: the ratio
/// `Im G^{λ+i0}(x̃, ỹ) / Im G^{λ+i0}(o, o)` with every vertex-pair Green
/// value evaluated through [`green_tree_discrete`]. Cross-validation of
/// [`psi_correlator`].
pub fn psi_correlator_green(model: &TreeModel, lambda: f64, k: usize, x: f64, y: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parse("path order k must be ≥ 1".into()));
    }
    let basis = model.basis(lambda);
    let kappa = kappa_from_basis(model, &basis)?;
    check_not_dirichlet(model, &basis)?;
    let gamma = Complex64::new(lambda, 0.0);
    let g = |d: usize| -> Result<f64> { Ok(green_tree_discrete(model, gamma, d)?.im) };
    let g0 = g(0)?;
    let l = basis.length;
    let sx = basis.s_at(x);
    let slx = basis.s_at(l - x);
    let sy = basis.s_at(y);
    let sly = basis.s_at(l - y);
    let s2 = basis.s * basis.s;
    let num = if k == 1 {
        (slx * sly + sx * sy) * g0 + (slx * sy + sx * sly) * g(1)?
    } else {
        slx * sy * g(k)? + (slx * sly + sx * sy) * g(k - 1)? + sx * sly * g(k - 2)?
    };
    Ok(num / (2.0 * kappa * s2 * g0))
}

/// Kesten-McKay spectral density of the `(q+1)`-regular tree adjacency
/// operator at `m`, supported on `|m| ≤ 2√q`.
pub fn kesten_mckay_density(q: usize, m: f64) -> f64 {
    let qf = q as f64;
    let supp = 4.0 * qf - m * m;
    if supp <= 0.0 {
        return 0.0;
    }
    (qf + 1.0) * supp.sqrt() / (2.0 * std::f64::consts::PI * ((qf + 1.0) * (qf + 1.0) - m * m))
}

/// Kesten-McKay mass of the interval `[a, b]`, via the substitution
/// `m = 2√q sin t` that removes the square-root edge singularity, then
/// composite Simpson.
pub fn kesten_mckay_mass(q: usize, a: f64, b: f64) -> f64 {
    let qf = q as f64;
    let edge = 2.0 * qf.sqrt();
    let a = a.clamp(-edge, edge);
    let b = b.clamp(-edge, edge);
    if b <= a {
        return 0.0;
    }
    let ta = (a / edge).asin();
    let tb = (b / edge).asin();
    let n = 4096;
    let h = (tb - ta) / n as f64;
    let integrand = |t: f64| {
        let c2 = t.cos() * t.cos();
        // (q+1)² - 4q sin²t = (q-1)² + 4q cos²t; the 0/0 at q = 1, cos t = 0
        // has limit (q+1)/(2π)
        let denom = (qf - 1.0) * (qf - 1.0) + 4.0 * qf * c2;
        if denom == 0.0 {
            (qf + 1.0) / (2.0 * std::f64::consts::PI)
        } else {
            (qf + 1.0) * 4.0 * qf * c2 / (2.0 * std::f64::consts::PI * denom)
        }
    };
    let mut acc = integrand(ta) + integrand(tb);
    for i in 1..n {
        let t = ta + i as f64 * h;
        acc += integrand(t) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn free_model(q: usize) -> TreeModel {
        TreeModel::new(q, 0.0, Potential::zero(1.0, 256).unwrap()).unwrap()
    }

    fn cos_model(q: usize, alpha: f64) -> TreeModel {
        TreeModel::new(q, alpha, Potential::cosine(1.0, 512).unwrap()).unwrap()
    }

    #[test]
    fn secular_values_free() {
        let m = free_model(2);
        assert!((m.w(PI * PI / 4.0)).abs() < 1e-14); // 3cos(π/2) = 0
        assert!((m.w(0.0) - 3.0).abs() < 1e-14);
        let ma = TreeModel::new(2, 1.0, Potential::zero(1.0, 256).unwrap()).unwrap();
        assert!((ma.w(PI * PI / 4.0) - 2.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn mu_branch_and_identities() {
        // w = 0, s > 0 at λ = π²/4: μ∓ = ±i/√2
        let m = free_model(2);
        let (mu_p, mu_m) = mu_pm(&m, PI * PI / 4.0).unwrap();
        assert!((mu_m - Complex64::new(0.0, 1.0 / 2.0f64.sqrt())).norm() < 1e-14);
        assert!((mu_p - Complex64::new(0.0, -1.0 / 2.0f64.sqrt())).norm() < 1e-14);
        assert!((mu_m.norm_sqr() - 0.5).abs() < 1e-14);

        // product/sum identities across the band
        for t in 1..40 {
            let lam = 0.2 + t as f64 * 0.18;
            let w = m.w(lam);
            if w.abs() >= m.band_threshold() {
                continue;
            }
            let (p, mm) = mu_pm(&m, lam).unwrap();
            assert!((p * mm - Complex64::new(0.5, 0.0)).norm() < 1e-12);
            assert!(((p + mm) * 2.0 - Complex64::new(w, 0.0)).norm() < 1e-12);
            assert!((mm.norm_sqr() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mu_general_small_root() {
        let w = Complex64::new(3.1, 0.4);
        let (big, small) = mu_pm_general(2, w).unwrap();
        assert!(small.norm() < 1.0 / 2.0f64.sqrt());
        assert!(big.norm() > 1.0 / 2.0f64.sqrt());
        assert!((big * small - Complex64::new(0.5, 0.0)).norm() < 1e-13);
        assert!(((big + small) * 2.0 - w).norm() < 1e-13);
    }

    #[test]
    fn free_band_structure() {
        // q = 2, L = 1, α = 0, U = 0: band 1 = [θ², (π-θ)²], θ = arccos(2√2/3)
        let m = free_model(2);
        let theta = (2.0 * 2.0f64.sqrt() / 3.0).acos();
        let bs = find_bands(&m, (0.01, 9.0), default_scan_n((0.01, 9.0))).unwrap();
        assert_eq!(bs.bands.len(), 1);
        let b = &bs.bands[0];
        assert!((b.lo - theta * theta).abs() < 1e-9, "lo = {}", b.lo);
        assert!((b.hi - (PI - theta) * (PI - theta)).abs() < 1e-9, "hi = {}", b.hi);
        assert_eq!(b.direction, Direction::Decreasing);
        assert!(bs.dirichlet.is_empty()); // π² ≈ 9.87 is outside the range

        // second band on [9, 40], σ₂ points at π², 4π²
        let bs2 = find_bands(&m, (9.0, 40.0), default_scan_n((9.0, 40.0))).unwrap();
        assert_eq!(bs2.bands.len(), 1);
        let b2 = &bs2.bands[0];
        assert!((b2.lo - (PI + theta).powi(2)).abs() < 1e-9);
        assert!((b2.hi - (2.0 * PI - theta).powi(2)).abs() < 1e-9);
        assert_eq!(b2.direction, Direction::Increasing);
        assert_eq!(bs2.dirichlet.len(), 2);
        assert!((bs2.dirichlet[0] - PI * PI).abs() < 1e-9);
        assert!((bs2.dirichlet[1] - 4.0 * PI * PI).abs() < 1e-9);
    }

    #[test]
    fn bands_stable_under_finer_rescan() {
        let m = cos_model(2, 0.5);
        let range = (0.1, 12.0);
        let coarse = find_bands(&m, range, default_scan_n(range)).unwrap();
        let fine = find_bands(&m, range, 10 * default_scan_n(range)).unwrap();
        assert_eq!(coarse.bands.len(), fine.bands.len());
        for (a, b) in coarse.bands.iter().zip(&fine.bands) {
            assert!((a.lo - b.lo).abs() < 1e-9);
            assert!((a.hi - b.hi).abs() < 1e-9);
            assert_eq!(a.direction, b.direction);
        }
        // every band: |w| < 2√q strictly inside
        for b in &fine.bands {
            for t in 1..50 {
                let lam = b.sample(t as f64 / 50.0);
                assert!(m.w(lam).abs() < m.band_threshold());
            }
        }
    }

    #[test]
    fn scan_too_coarse_is_detected() {
        let m = free_model(2);
        assert!(matches!(find_bands(&m, (0.01, 9.0), 50), Err(Error::ScanTooCoarse(_))));
    }

    #[test]
    fn empty_range_gives_empty_tables() {
        let m = free_model(2);
        let bs = find_bands(&m, (5.0, 5.0), 200).unwrap();
        assert!(bs.bands.is_empty() && bs.dirichlet.is_empty());
    }

    #[test]
    fn invert_w_round_trip() {
        let m = free_model(2);
        let bs = find_bands(&m, (0.01, 9.0), 18_000).unwrap();
        let b = &bs.bands[0];
        // m = 0 → λ = π²/4
        let lam = invert_w_on_band(&m, b, 0.0).unwrap();
        assert!((lam - PI * PI / 4.0).abs() < 1e-10);
        // m = 3cos(1) → λ = 1
        let lam = invert_w_on_band(&m, b, 3.0 * 1.0f64.cos()).unwrap();
        assert!((lam - 1.0).abs() < 1e-10);
        // random round trips
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (ilo, ihi) = b.w_interval(&m);
        for _ in 0..100 {
            let mv = rng.gen_range(ilo + 1e-6..ihi - 1e-6);
            let lam = invert_w_on_band(&m, b, mv).unwrap();
            assert!((m.w(lam) - mv).abs() <= 1e-10);
        }
        // error paths
        assert!(invert_w_on_band(&m, b, 2.9).is_err());
        assert!(invert_w_on_band(&m, b, 2.0 * 2.0f64.sqrt()).is_err());
    }

    #[test]
    fn spherical_examples() {
        assert_eq!(spherical(2, 0.0, 0), 1.0);
        assert!((spherical(2, 0.9, 1) - 0.3).abs() < 1e-15);
        assert!((spherical(2, 0.0, 2) + 0.5).abs() < 1e-15);
        assert!((spherical(2, 0.0, 4) - 0.25).abs() < 1e-15);
        assert!((spherical_closed(2, 0.0, 4) - 0.25).abs() < 1e-13);
    }

    #[test]
    fn spherical_recursion_matches_closed_form() {
        for q in [2usize, 3, 5] {
            let edge = 2.0 * (q as f64).sqrt() - 0.01;
            for i in 0..40 {
                let m = -edge + 2.0 * edge * i as f64 / 39.0;
                for d in 0..=30 {
                    let a = spherical(q, m, d);
                    let b = spherical_closed(q, m, d);
                    assert!((a - b).abs() < 1e-10, "q={q} m={m} d={d}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn green_boundary_value_free_model() {
        // Im G(o,o) = 2√2/(3π) at λ = π²/4 (w = 0, s = 2/π, μ⁻ = i/√2)
        let m = free_model(2);
        let g = green_tree_discrete(&m, Complex64::new(PI * PI / 4.0, 0.0), 0).unwrap();
        assert!((g.im - 2.0 * 2.0f64.sqrt() / (3.0 * PI)).abs() < 1e-13);
        assert!(g.re.abs() < 1e-13);
    }

    #[test]
    fn green_matches_continued_fraction_oracle() {
        // quantum resolvent = -s(γ) × combinatorial resolvent at w(γ), on ℂ⁺
        let m = free_model(2);
        let gamma = Complex64::new(2.0, 0.5);
        let (e, w) = m.w_complex(gamma);
        for d in 0..=6 {
            let direct = green_tree_discrete(&m, gamma, d).unwrap();
            let oracle = -e.s * tree_adjacency_resolvent_cf(2, w, d, 1e-14).unwrap();
            assert!((direct - oracle).norm() < 1e-10, "d = {d}: {direct} vs {oracle}");
        }
    }

    #[test]
    fn green_oracle_under_potential() {
        let m = cos_model(2, 0.5);
        let gamma = Complex64::new(3.0, 0.8);
        let (e, w) = m.w_complex(gamma);
        for d in 0..=4 {
            let direct = green_tree_discrete(&m, gamma, d).unwrap();
            let oracle = -e.s * tree_adjacency_resolvent_cf(2, w, d, 1e-14).unwrap();
            assert!((direct - oracle).norm() < 1e-10);
        }
    }

    #[test]
    fn green_boundary_matches_oracle_by_continuity() {
        // λ + i0 branch vs the oracle at small η > 0, with linear Richardson
        // extrapolation in η (error O(η²))
        let m = free_model(2);
        for lam in [1.0, PI * PI / 4.0, 4.0] {
            for d in 0..=3 {
                let direct = green_tree_discrete(&m, Complex64::new(lam, 0.0), d).unwrap();
                let eta = 1e-3;
                let at_eta = |eta: f64| {
                    let gamma = Complex64::new(lam, eta);
                    let (es, w) = m.w_complex(gamma);
                    -es.s * tree_adjacency_resolvent_cf(2, w, d, 1e-13).unwrap()
                };
                let extrap = at_eta(eta) * 2.0 - at_eta(2.0 * eta);
                assert!(
                    (direct - extrap).norm() < 1e-5,
                    "λ = {lam}, d = {d}: {direct} vs extrapolated {extrap}"
                );
            }
        }
    }

    #[test]
    fn green_spherical_ratio() {
        // Im G(v,w) / Im G(o,o) = Φ_{w(λ)}(d)
        let m = free_model(2);
        let lam = PI * PI / 4.0;
        let g0 = green_tree_discrete(&m, Complex64::new(lam, 0.0), 0).unwrap().im;
        for d in 0..=5 {
            let gd = green_tree_discrete(&m, Complex64::new(lam, 0.0), d).unwrap().im;
            let phi = spherical(2, m.w(lam), d);
            assert!((gd / g0 - phi).abs() < 1e-10, "d = {d}");
        }
    }

    #[test]
    fn green_positive_imaginary_part_on_bands() {
        for model in [free_model(2), cos_model(2, 0.5)] {
            let bs = find_bands(&model, (0.1, 12.0), default_scan_n((0.1, 12.0))).unwrap();
            assert!(!bs.bands.is_empty());
            for b in &bs.bands {
                for t in 1..30 {
                    let lam = b.sample(t as f64 / 30.0);
                    let g = green_tree_discrete(&model, Complex64::new(lam, 0.0), 0).unwrap();
                    assert!(g.im > 0.0, "Im G(o,o) must be positive at λ = {lam}");
                }
            }
        }
    }

    #[test]
    fn green_rejects_band_edge_and_pole() {
        let m = free_model(2);
        // w = ±2√q exactly (band edge)
        let theta = (2.0 * 2.0f64.sqrt() / 3.0).acos();
        assert!(green_tree_discrete(&m, Complex64::new(theta * theta, 0.0), 0).is_err());
        // σ₂ pole at λ = π² (w = -(q+1))
        assert!(green_tree_discrete(&m, Complex64::new(PI * PI, 0.0), 0).is_err());
    }

    #[test]
    fn kappa_free_model_is_constant() {
        // κ = (q+1)L/2 for U ≡ 0, α = 0
        let m = free_model(2);
        for lam in [0.5, 1.0, PI * PI / 4.0, 3.0, 6.0] {
            let k = kappa(&m, lam).unwrap();
            assert!((k - 1.5).abs() < 1e-10, "κ({lam}) = {k}");
        }
    }

    #[test]
    fn kappa_moments_path() {
        // κ = 3/(4/π²)·(2/π²) at λ = π²/4 via the explicit moments (w = 0)
        let m = free_model(2);
        let basis = m.basis(PI * PI / 4.0);
        let (_, _, c) = unit_moments(&basis).unwrap();
        let manual = 3.0 * c / (basis.s * basis.s);
        assert!((manual - kappa(&m, PI * PI / 4.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn kappa_positive_with_potential() {
        let m = cos_model(2, 0.0);
        let bs = find_bands(&m, (0.1, 12.0), default_scan_n((0.1, 12.0))).unwrap();
        let b = &bs.bands[0];
        for t in 1..=200 {
            let lam = b.sample(t as f64 / 201.0);
            let basis = m.basis(lam);
            let k = kappa_from_basis(&m, &basis).unwrap();
            assert!(k > 0.0);
            // lower bound (q+1-|w|)/s² ∫S²
            let (_, _, c) = unit_moments(&basis).unwrap();
            let bound = (3.0 - m.w(lam).abs()) * c / (basis.s * basis.s);
            assert!(k >= bound - 1e-12);
        }
    }

    #[test]
    fn kappa_rejects_dirichlet_points() {
        let m = free_model(2);
        assert!(matches!(kappa(&m, PI * PI), Err(Error::NearDirichlet { .. })));
    }

    #[test]
    fn psi_density_free_is_uniform() {
        let m = free_model(2);
        for lam in [0.5, 2.0, 5.0] {
            for x in [0.0, 0.21, 0.5, 0.77, 1.0] {
                let p = psi_density(&m, lam, x).unwrap();
                assert!((p - 2.0 / 3.0).abs() < 1e-10, "Ψ({lam}, {x}) = {p}");
            }
        }
    }

    #[test]
    fn psi_density_integral_and_symmetry() {
        for model in [cos_model(2, 0.5), cos_model(2, 0.0)] {
            let bs = find_bands(&model, (0.1, 12.0), default_scan_n((0.1, 12.0))).unwrap();
            let b = &bs.bands[0];
            let lam = b.sample(0.5);
            let basis = model.basis(lam);
            let kap = kappa_from_basis(&model, &basis).unwrap();
            let grid = psi_density_grid(&model, &basis, kap);
            let integral = crate::quad::simpson(&grid, model.length()).unwrap();
            assert!((integral - 2.0 / 3.0).abs() < 1e-8, "∫Ψ = {integral}");
            // symmetry Ψ(L-x) = Ψ(x)
            let a = psi_density_from_basis(&model, &basis, kap, 0.3);
            let c = psi_density_from_basis(&model, &basis, kap, 0.7);
            assert!((a - c).abs() < 1e-12);
            // strict positivity on the band
            for (i, v) in grid.iter().enumerate() {
                assert!(*v > 0.0, "Ψ at node {i} not positive");
            }
        }
    }

    #[test]
    fn correlator_diagonal_and_symmetry() {
        for model in [free_model(2), cos_model(2, 0.5)] {
            let bs = find_bands(&model, (0.1, 12.0), default_scan_n((0.1, 12.0))).unwrap();
            let b = &bs.bands[0];
            for t in 1..=25 {
                let lam = b.sample(t as f64 / 26.0);
                let basis = model.basis(lam);
                let kap = kappa_from_basis(&model, &basis).unwrap();
                let x = 0.038 * t as f64;
                // 2·Ψ_{λ,1}(x,x) = Ψ_λ(x)
                let c = psi_correlator_from_basis(&model, &basis, kap, 1, x, x).unwrap();
                let d = psi_density_from_basis(&model, &basis, kap, x);
                assert!((2.0 * c - d).abs() < 1e-10);
                // symmetry in the arguments
                let xy = psi_correlator_from_basis(&model, &basis, kap, 1, 0.2, 0.9).unwrap();
                let yx = psi_correlator_from_basis(&model, &basis, kap, 1, 0.9, 0.2).unwrap();
                assert!((xy - yx).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlator_free_value() {
        // U = 0, α = 0, k = 1, x = y: Ψ_{λ,1} = 1/3 (half of 2/3)
        let m = free_model(2);
        let v = psi_correlator(&m, 2.0, 1, 0.4, 0.4).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn correlator_matches_green_route() {
        for model in [free_model(2), cos_model(2, 0.5)] {
            let bs = find_bands(&model, (0.1, 12.0), default_scan_n((0.1, 12.0))).unwrap();
            let b = &bs.bands[0];
            for k in 1..=4usize {
                for t in [0.25, 0.5, 0.8] {
                    let lam = b.sample(t);
                    let via_phi = psi_correlator(&model, lam, k, 0.3, 0.62).unwrap();
                    let via_green = psi_correlator_green(&model, lam, k, 0.3, 0.62).unwrap();
                    assert!(
                        (via_phi - via_green).abs() < 1e-10,
                        "k = {k}, λ = {lam}: {via_phi} vs {via_green}"
                    );
                }
            }
        }
    }

    #[test]
    fn dirichlet_indexing() {
        let m = free_model(2);
        for n in 1..=3 {
            let lam = nth_dirichlet(&m, n).unwrap();
            assert!((lam - (n as f64 * PI).powi(2)).abs() < 1e-8, "σ₂[{n}] = {lam}");
        }
    }

    #[test]
    fn kesten_mckay_totals() {
        // full support carries unit mass
        for q in [1usize, 2, 3] {
            let edge = 2.0 * (q as f64).sqrt();
            let mass = kesten_mckay_mass(q, -edge, edge);
            assert!((mass - 1.0).abs() < 1e-10, "q = {q}: mass = {mass}");
        }
        // q = 1 is the arcsine law: mass of [0, 2] is 1/2, of [-1, 1] is 1/3
        assert!((kesten_mckay_mass(1, 0.0, 2.0) - 0.5).abs() < 1e-10);
        assert!((kesten_mckay_mass(1, -1.0, 1.0) - 1.0 / 3.0).abs() < 1e-10);
        // density vanishes off the support
        assert_eq!(kesten_mckay_density(2, 3.0), 0.0);
    }
}
