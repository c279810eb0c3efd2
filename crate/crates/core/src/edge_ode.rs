//! Edge eigenproblem `-ψ'' + Uψ = λψ` on `[0, L]` for symmetric potentials.
//!
//! The basis pair `(C_λ, S_λ)` satisfies the identity initial conditions
//! `C(0)=1, C'(0)=0, S(0)=0, S'(0)=1`. For `U ≡ 0` the closed forms
//! `C = cos(√λ x)`, `S = sin(√λ x)/√λ` are evaluated stably for all real λ
//! (hyperbolic continuation for λ < 0, power series near λ = 0); for other
//! potentials a fixed-step RK4 integrates `(C, C', S, S')` jointly over the
//! shared grid.

use num_complex::Complex64;

use crate::quad::{cubic_interp, simpson_product};
use crate::{Error, Result};

/// Symmetry tolerance enforced at potential construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialForm {
    /// U ≡ 0; the basis has closed trigonometric forms.
    Zero,
    /// U(x) = amp · cos(2πx/L).
    Cosine,
    /// Arbitrary symmetric samples on the grid.
    Sampled,
}

/// Symmetric edge potential sampled on the shared uniform grid.
#[derive(Debug, Clone)]
pub struct Potential {
    form: PotentialForm,
    amplitude: f64,
    length: f64,
    grid_n: usize,
    samples: Vec<f64>,
    /// Values at half-steps, needed by the RK4 stages.
    mid_samples: Vec<f64>,
}

impl Potential {
    /// The free potential U ≡ 0.
    pub fn zero(length: f64, grid_n: usize) -> Result<Self> {
        Self::check_grid(length, grid_n)?;
        Ok(Potential {
            form: PotentialForm::Zero,
            amplitude: 0.0,
            length,
            grid_n,
            samples: vec![0.0; grid_n + 1],
            mid_samples: vec![0.0; grid_n],
        })
    }

    /// U(x) = cos(2πx/L), the standard non-trivial symmetric test potential.
    pub fn cosine(length: f64, grid_n: usize) -> Result<Self> {
        Self::cosine_scaled(length, grid_n, 1.0)
    }

    /// U(x) = amp · cos(2πx/L).
    pub fn cosine_scaled(length: f64, grid_n: usize, amplitude: f64) -> Result<Self> {
        Self::check_grid(length, grid_n)?;
        let f = |x: f64| amplitude * (2.0 * std::f64::consts::PI * x / length).cos();
        let h = length / grid_n as f64;
        let samples = (0..=grid_n).map(|i| f(i as f64 * h)).collect();
        let mid_samples = (0..grid_n).map(|i| f((i as f64 + 0.5) * h)).collect();
        Ok(Potential {
            form: PotentialForm::Cosine,
            amplitude,
            length,
            grid_n,
            samples,
            mid_samples,
        })
    }

    /// Build from raw samples on a uniform grid including both endpoints.
    /// Rejects non-symmetric data: the identities `c = s'` and the
    /// reflection identity for `S_λ(L-x)` require `U(L-x) = U(x)`.
    pub fn from_samples(length: f64, samples: Vec<f64>) -> Result<Self> {
        let grid_n = samples.len().checked_sub(1).ok_or(Error::OddGrid(0))?;
        Self::check_grid(length, grid_n)?;
        for i in 0..=grid_n / 2 {
            let dev = (samples[i] - samples[grid_n - i]).abs();
            if dev > SYMMETRY_TOL {
                return Err(Error::NonSymmetricPotential { deviation: dev, index: i, tol: SYMMETRY_TOL });
            }
        }
        let h = length / grid_n as f64;
        let mid_samples = (0..grid_n)
            .map(|i| cubic_interp(&samples, length, (i as f64 + 0.5) * h))
            .collect();
        Ok(Potential {
            form: PotentialForm::Sampled,
            amplitude: 0.0,
            length,
            grid_n,
            samples,
            mid_samples,
        })
    }

    fn check_grid(length: f64, grid_n: usize) -> Result<()> {
        if grid_n == 0 || grid_n % 2 != 0 {
            return Err(Error::OddGrid(grid_n));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::Parse(format!("edge length must be positive, got {length}")));
        }
        Ok(())
    }

    pub fn form(&self) -> PotentialForm {
        self.form
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, PotentialForm::Zero)
            || (matches!(self.form, PotentialForm::Cosine) && self.amplitude == 0.0)
    }

    /// Same potential resampled on a different grid.
    pub fn with_grid(&self, grid_n: usize) -> Result<Self> {
        match self.form {
            PotentialForm::Zero => Potential::zero(self.length, grid_n),
            PotentialForm::Cosine => Potential::cosine_scaled(self.length, grid_n, self.amplitude),
            PotentialForm::Sampled => {
                Self::check_grid(self.length, grid_n)?;
                let h = self.length / grid_n as f64;
                let samples = (0..=grid_n)
                    .map(|i| cubic_interp(&self.samples, self.length, i as f64 * h))
                    .collect();
                Potential::from_samples(self.length, samples)
            }
        }
    }

    /// Parse the CSV interchange format: header `x,u`, uniform grid
    /// including both endpoints.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut xs = Vec::new();
        let mut us = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if ln == 0 {
                if line != "x,u" {
                    return Err(Error::Parse(format!("potential CSV must start with header 'x,u', got '{line}'")));
                }
                continue;
            }
            let mut it = line.split(',');
            let x: f64 = it
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing x", ln + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let u: f64 = it
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing u", ln + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            xs.push(x);
            us.push(u);
        }
        if xs.len() < 3 {
            return Err(Error::Parse("potential CSV needs at least 3 samples".into()));
        }
        if xs[0].abs() > 1e-12 {
            return Err(Error::Parse("potential grid must start at x = 0".into()));
        }
        let length = *xs.last().unwrap();
        let n = xs.len() - 1;
        let h = length / n as f64;
        for (i, &x) in xs.iter().enumerate() {
            if (x - i as f64 * h).abs() > 1e-9 * length.max(1.0) {
                return Err(Error::Parse(format!("potential grid is not uniform at row {i}")));
            }
        }
        Potential::from_samples(length, us)
    }

    pub fn to_csv_string(&self) -> String {
        let h = self.length / self.grid_n as f64;
        let mut out = String::from("x,u\n");
        for (i, u) in self.samples.iter().enumerate() {
            out.push_str(&format!("{:.16e},{:.16e}\n", i as f64 * h, u));
        }
        out
    }
}

/// Scalar admitted by the RK4 integrator: `f64` for the spectral axis,
/// `Complex64` for resolvent energies γ ∈ ℂ⁺.
pub trait OdeScalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Mul<f64, Output = Self>
    + From<f64>
{
    fn abs_sq(self) -> f64;
}

impl OdeScalar for f64 {
    fn abs_sq(self) -> f64 {
        self * self
    }
}

impl OdeScalar for Complex64 {
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
}

/// Endpoint data `(c, s, c', s')` of the basis pair at `x = L`.
#[derive(Debug, Clone, Copy)]
pub struct Endpoints<T> {
    pub c: T,
    pub s: T,
    pub c_prime: T,
    pub s_prime: T,
}

/// Basis pair sampled on the shared grid, plus endpoint data.
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    pub lambda: f64,
    pub length: f64,
    pub c: f64,
    pub s: f64,
    pub c_prime: f64,
    pub s_prime: f64,
    pub c_samples: Vec<f64>,
    pub s_samples: Vec<f64>,
    pub c_prime_samples: Vec<f64>,
    pub s_prime_samples: Vec<f64>,
    /// Set when `S`, `C` admit the closed trigonometric forms (U ≡ 0), in
    /// which case off-grid evaluation is exact instead of interpolated.
    closed_zero: bool,
}

impl EdgeBasis {
    pub fn grid_n(&self) -> usize {
        self.s_samples.len() - 1
    }

    /// S_λ(x) at arbitrary x ∈ [0, L].
    pub fn s_at(&self, x: f64) -> f64 {
        if self.closed_zero {
            phase_pair(self.lambda, x).1
        } else {
            cubic_interp(&self.s_samples, self.length, x)
        }
    }

    /// C_λ(x) at arbitrary x ∈ [0, L].
    pub fn c_at(&self, x: f64) -> f64 {
        if self.closed_zero {
            phase_pair(self.lambda, x).0
        } else {
            cubic_interp(&self.c_samples, self.length, x)
        }
    }

    /// S'_λ(x) at arbitrary x ∈ [0, L].
    pub fn s_prime_at(&self, x: f64) -> f64 {
        if self.closed_zero {
            phase_pair(self.lambda, x).0
        } else {
            cubic_interp(&self.s_prime_samples, self.length, x)
        }
    }

    pub fn endpoints(&self) -> Endpoints<f64> {
        Endpoints { c: self.c, s: self.s, c_prime: self.c_prime, s_prime: self.s_prime }
    }

    /// Measured residuals of the three structural identities:
    /// `(|cs' - sc' - 1|, |c - s'|, max_i |s·C_i - c·S_i - S_{n-i}|)`.
    pub fn identity_residuals(&self) -> (f64, f64, f64) {
        let wronskian = (self.c * self.s_prime - self.s * self.c_prime - 1.0).abs();
        let symmetry = (self.c - self.s_prime).abs();
        let n = self.grid_n();
        let mut reflection: f64 = 0.0;
        for i in 0..=n {
            let r = self.s * self.c_samples[i] - self.c * self.s_samples[i] - self.s_samples[n - i];
            reflection = reflection.max(r.abs());
        }
        (wronskian, symmetry, reflection)
    }
}

/// Stable evaluation of `(cos(√λ x), sin(√λ x)/√λ)` for all real λ.
pub fn phase_pair(lambda: f64, x: f64) -> (f64, f64) {
    let t = lambda * x * x;
    if t.abs() < 1e-4 {
        // truncated power series in t = λx²; removes the 0/0 at λ = 0
        let c = 1.0 - t / 2.0 * (1.0 - t / 12.0 * (1.0 - t / 30.0 * (1.0 - t / 56.0)));
        let s = x * (1.0 - t / 6.0 * (1.0 - t / 20.0 * (1.0 - t / 42.0 * (1.0 - t / 72.0))));
        (c, s)
    } else if lambda > 0.0 {
        let r = lambda.sqrt();
        ((r * x).cos(), (r * x).sin() / r)
    } else {
        let r = (-lambda).sqrt();
        ((r * x).cosh(), (r * x).sinh() / r)
    }
}

/// Complex counterpart of [`phase_pair`]; both entries are even in `√γ`,
/// so the branch of the square root is immaterial.
pub fn phase_pair_complex(gamma: Complex64, x: f64) -> (Complex64, Complex64) {
    let t = gamma * (x * x);
    if t.norm() < 1e-4 {
        let one = Complex64::new(1.0, 0.0);
        let c = one - t * 0.5 * (one - t / 12.0 * (one - t / 30.0 * (one - t / 56.0)));
        let s = (one - t / 6.0 * (one - t / 20.0 * (one - t / 42.0 * (one - t / 72.0)))) * x;
        (c, s)
    } else {
        let z = gamma.sqrt();
        let zx = z * x;
        (zx.cos(), zx.sin() / z)
    }
}

/// RK4 sweep of `v'' = (U - λ)v` for the two initial conditions jointly.
/// Returns per-node samples of `(C, C', S, S')`.
fn rk4_sweep<T: OdeScalar>(u: &Potential, lambda: T) -> [Vec<T>; 4] {
    let n = u.grid_n;
    let h = u.length / n as f64;
    let zero = T::from(0.0);
    let one = T::from(1.0);

    let mut c = Vec::with_capacity(n + 1);
    let mut cp = Vec::with_capacity(n + 1);
    let mut s = Vec::with_capacity(n + 1);
    let mut sp = Vec::with_capacity(n + 1);
    c.push(one);
    cp.push(zero);
    s.push(zero);
    sp.push(one);

    let mut y = [one, zero, zero, one]; // (C, C', S, S')

    // y' = (C', k C, S', k S) with k(x) = U(x) - λ
    let deriv = |y: &[T; 4], k: T| [y[1], k * y[0], y[3], k * y[2]];

    for i in 0..n {
        let k0 = T::from(u.samples[i]) - lambda;
        let km = T::from(u.mid_samples[i]) - lambda;
        let k1v = T::from(u.samples[i + 1]) - lambda;

        let k1 = deriv(&y, k0);
        let y2 = add_scaled(&y, &k1, h / 2.0);
        let k2 = deriv(&y2, km);
        let y3 = add_scaled(&y, &k2, h / 2.0);
        let k3 = deriv(&y3, km);
        let y4 = add_scaled(&y, &k3, h);
        let k4 = deriv(&y4, k1v);

        for j in 0..4 {
            y[j] = y[j] + (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (h / 6.0);
        }
        c.push(y[0]);
        cp.push(y[1]);
        s.push(y[2]);
        sp.push(y[3]);
    }
    [c, cp, s, sp]
}

fn add_scaled<T: OdeScalar>(y: &[T; 4], k: &[T; 4], f: f64) -> [T; 4] {
    [y[0] + k[0] * f, y[1] + k[1] * f, y[2] + k[2] * f, y[3] + k[3] * f]
}

/// Solve the edge eigenproblem at spectral parameter λ.
///
/// Closed forms are used for `U ≡ 0`; other potentials go through RK4 on
/// the potential's grid.
pub fn edge_basis(u: &Potential, lambda: f64) -> EdgeBasis {
    if u.is_zero() {
        closed_zero_basis(u, lambda)
    } else {
        rk4_basis(u, lambda)
    }
}

/// Force the RK4 path regardless of the potential form (used by the
/// closed-form/RK4 agreement checks and convergence-order tests).
pub fn edge_basis_rk4(u: &Potential, lambda: f64) -> EdgeBasis {
    rk4_basis(u, lambda)
}

fn closed_zero_basis(u: &Potential, lambda: f64) -> EdgeBasis {
    let n = u.grid_n;
    let h = u.length / n as f64;
    let mut c_samples = Vec::with_capacity(n + 1);
    let mut s_samples = Vec::with_capacity(n + 1);
    let mut c_prime_samples = Vec::with_capacity(n + 1);
    let mut s_prime_samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = i as f64 * h;
        let (cv, sv) = phase_pair(lambda, x);
        c_samples.push(cv);
        s_samples.push(sv);
        c_prime_samples.push(-lambda * sv); // C' = -λ S for U ≡ 0
        s_prime_samples.push(cv); // S' = C for U ≡ 0
    }
    EdgeBasis {
        lambda,
        length: u.length,
        c: c_samples[n],
        s: s_samples[n],
        c_prime: c_prime_samples[n],
        s_prime: s_prime_samples[n],
        c_samples,
        s_samples,
        c_prime_samples,
        s_prime_samples,
        closed_zero: true,
    }
}

fn rk4_basis(u: &Potential, lambda: f64) -> EdgeBasis {
    let [c, cp, s, sp] = rk4_sweep(u, lambda);
    let n = u.grid_n;
    EdgeBasis {
        lambda,
        length: u.length,
        c: c[n],
        s: s[n],
        c_prime: cp[n],
        s_prime: sp[n],
        c_samples: c,
        s_samples: s,
        c_prime_samples: cp,
        s_prime_samples: sp,
        closed_zero: false,
    }
}

/// Endpoint data only — the cheap path for band scans and root solves.
pub fn endpoint_data(u: &Potential, lambda: f64) -> Endpoints<f64> {
    if u.is_zero() {
        let (c, s) = phase_pair(lambda, u.length);
        Endpoints { c, s, c_prime: -lambda * s, s_prime: c }
    } else {
        let [c, cp, s, sp] = rk4_sweep(u, lambda);
        let n = u.grid_n;
        Endpoints { c: c[n], s: s[n], c_prime: cp[n], s_prime: sp[n] }
    }
}

/// Endpoint data at complex energy γ (resolvent computations).
pub fn endpoint_data_complex(u: &Potential, gamma: Complex64) -> Endpoints<Complex64> {
    if u.is_zero() {
        let (c, s) = phase_pair_complex(gamma, u.length);
        Endpoints { c, s, c_prime: -gamma * s, s_prime: c }
    } else {
        let [c, cp, s, sp] = rk4_sweep(u, gamma);
        let n = u.grid_n;
        Endpoints { c: c[n], s: s[n], c_prime: cp[n], s_prime: sp[n] }
    }
}

/// Monodromy (transfer) matrix `[[c, s], [c', s']]`; det = 1 up to the ODE
/// tolerance by the Wronskian identity.
pub fn monodromy(basis: &EdgeBasis) -> [[f64; 2]; 2] {
    [[basis.c, basis.s], [basis.c_prime, basis.s_prime]]
}

pub fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// The three quadrature moments of an observable sample vector against the
/// basis function `S_λ`:
///
/// `A = ∫ f(t) S²(L-t) dt`, `B = ∫ f(t) S(L-t) S(t) dt`, `C = ∫ f(t) S²(t) dt`,
///
/// all composite-Simpson on the shared grid. Callers apply the `1/s²`
/// prefactor.
pub fn observable_moments(basis: &EdgeBasis, f_samples: &[f64]) -> Result<(f64, f64, f64)> {
    let n = basis.grid_n();
    if f_samples.len() != n + 1 {
        return Err(Error::GridMismatch { expected: n + 1, got: f_samples.len() });
    }
    let s = &basis.s_samples;
    let a_v: Vec<f64> = (0..=n).map(|i| s[n - i] * s[n - i]).collect();
    let b_v: Vec<f64> = (0..=n).map(|i| s[n - i] * s[i]).collect();
    let c_v: Vec<f64> = (0..=n).map(|i| s[i] * s[i]).collect();
    let a = simpson_product(f_samples, &a_v, basis.length)?;
    let b = simpson_product(f_samples, &b_v, basis.length)?;
    let c = simpson_product(f_samples, &c_v, basis.length)?;
    Ok((a, b, c))
}

/// Moments of `f ≡ 1`: `(∫S²(L-t), ∫S(L-t)S(t), ∫S²(t))`.
pub fn unit_moments(basis: &EdgeBasis) -> Result<(f64, f64, f64)> {
    let ones = vec![1.0; basis.grid_n() + 1];
    observable_moments(basis, &ones)
}
