//! Finite `(q+1)`-regular combinatorial graphs: construction, directed-edge
//! indexing, dense adjacency eigendecomposition, non-backtracking action and
//! the expander / Benjamini-Schramm diagnostics.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Graph families the generator knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    /// Configuration-model random regular graph (simple, connected).
    RandomRegular,
    /// N-cycle (degree 2).
    Cycle,
    /// Complete graph K_n (degree n-1).
    Complete,
    /// The Petersen graph (n = 10, degree 3).
    Petersen,
}

impl GraphKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "random_regular" => Ok(GraphKind::RandomRegular),
            "cycle" => Ok(GraphKind::Cycle),
            "complete" => Ok(GraphKind::Complete),
            "petersen" => Ok(GraphKind::Petersen),
            other => Err(Error::Parse(format!("unknown graph kind '{other}'"))),
        }
    }
}

/// A simple connected regular graph with directed-edge structure.
///
/// Directed edges are stored in reversal pairs: the canonical orientation of
/// undirected edge `i` sits at index `2i`, its reversal at `2i + 1`, so
/// `reverse(b) = b ^ 1`.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    degree: usize,
    adjacency: Vec<Vec<u32>>,
    undirected: Vec<(u32, u32)>,
    directed: Vec<(u32, u32)>,
    /// Directed edges with origin v, sorted by index.
    vertex_out: Vec<Vec<u32>>,
}

impl Graph {
    /// Build from an undirected edge list; validates simplicity, regularity
    /// and connectivity.
    pub fn from_edges(n: usize, degree: usize, edges: &[(u32, u32)]) -> Result<Self> {
        let mut adjacency = vec![Vec::with_capacity(degree); n];
        for &(u, v) in edges {
            let (u, v) = (u as usize, v as usize);
            if u >= n || v >= n {
                return Err(Error::InfeasibleGraph(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(Error::InfeasibleGraph(format!("self-loop at vertex {u}")));
            }
            adjacency[u].push(v as u32);
            adjacency[v].push(u as u32);
        }
        for (v, nb) in adjacency.iter_mut().enumerate() {
            nb.sort_unstable();
            if nb.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InfeasibleGraph(format!("multi-edge at vertex {v}")));
            }
            if nb.len() != degree {
                return Err(Error::InfeasibleGraph(format!(
                    "vertex {v} has degree {} (expected {degree})",
                    nb.len()
                )));
            }
        }
        if !is_connected(&adjacency) {
            return Err(Error::InfeasibleGraph("graph is not connected".into()));
        }

        let mut undirected: Vec<(u32, u32)> = edges
            .iter()
            .map(|&(u, v)| if u < v { (u, v) } else { (v, u) })
            .collect();
        undirected.sort_unstable();

        let mut directed = Vec::with_capacity(2 * undirected.len());
        for &(u, v) in &undirected {
            directed.push((u, v));
            directed.push((v, u));
        }
        let mut vertex_out = vec![Vec::with_capacity(degree); n];
        for (b, &(o, _)) in directed.iter().enumerate() {
            vertex_out[o as usize].push(b as u32);
        }
        Ok(Graph { n, degree, adjacency, undirected, directed, vertex_out })
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Branching number of the covering tree.
    pub fn q(&self) -> usize {
        self.degree - 1
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adjacency[v]
    }

    pub fn n_undirected(&self) -> usize {
        self.undirected.len()
    }

    pub fn n_directed(&self) -> usize {
        self.directed.len()
    }

    pub fn undirected_edges(&self) -> &[(u32, u32)] {
        &self.undirected
    }

    /// Origin and terminus of directed edge `b`.
    pub fn directed_edge(&self, b: usize) -> (u32, u32) {
        self.directed[b]
    }

    /// Index of the reversal of directed edge `b`.
    pub fn reverse(&self, b: usize) -> usize {
        b ^ 1
    }

    /// Directed edges with origin `v`.
    pub fn out_edges(&self, v: usize) -> &[u32] {
        &self.vertex_out[v]
    }

    /// Undirected edge index carrying directed edge `b`.
    pub fn undirected_of(&self, b: usize) -> usize {
        b / 2
    }

    /// Directed-edge index of the ordered pair `(from, to)`, if adjacent.
    pub fn directed_index(&self, from: u32, to: u32) -> Option<usize> {
        let key = if from < to { (from, to) } else { (to, from) };
        let i = self.undirected.binary_search(&key).ok()?;
        Some(if from < to { 2 * i } else { 2 * i + 1 })
    }

    /// Whether `b` is the canonical orientation of its undirected edge.
    pub fn is_canonical(&self, b: usize) -> bool {
        b % 2 == 0
    }

    /// Non-backtracking action `(𝓑 f)(b) = Σ_{b⁺} f(b⁺)` over the outgoing
    /// edges of `b`, excluding the reversal.
    pub fn nb_apply(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        if f.len() != self.directed.len() {
            return Err(Error::DimensionMismatch(format!(
                "nb_apply expects {} directed-edge entries, got {}",
                self.directed.len(),
                f.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); f.len()];
        for (b, &(_, t)) in self.directed.iter().enumerate() {
            let rev = b ^ 1;
            let mut acc = Complex64::new(0.0, 0.0);
            for &bp in &self.vertex_out[t as usize] {
                if bp as usize != rev {
                    acc += f[bp as usize];
                }
            }
            out[b] = acc;
        }
        Ok(out)
    }

    /// Adjoint action `𝓑* = ι𝓑ι`: sums over incoming edges of `o_b`,
    /// excluding the reversal.
    pub fn nb_apply_adjoint(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        if f.len() != self.directed.len() {
            return Err(Error::DimensionMismatch(format!(
                "nb_apply_adjoint expects {} directed-edge entries, got {}",
                self.directed.len(),
                f.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); f.len()];
        for (b, &(o, _)) in self.directed.iter().enumerate() {
            let rev = b ^ 1;
            let mut acc = Complex64::new(0.0, 0.0);
            // incoming edges of o_b are reversals of out-edges of o_b
            for &bo in &self.vertex_out[o as usize] {
                let inc = (bo ^ 1) as usize;
                if inc != rev {
                    acc += f[inc];
                }
            }
            out[b] = acc;
        }
        Ok(out)
    }

    /// Dense adjacency matrix.
    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (v, nb) in self.adjacency.iter().enumerate() {
            for &u in nb {
                a[(v, u as usize)] = 1.0;
            }
        }
        a
    }

    /// Eigenvalues of the adjacency matrix, descending (no eigenvectors;
    /// much cheaper than the full decomposition for counting).
    pub fn adjacency_eigenvalues(&self) -> Vec<f64> {
        let (mut d, mut e) = nalgebra::linalg::SymmetricTridiagonal::new(self.adjacency_matrix())
            .unpack_tridiagonal();
        let mut ev = Vec::new();
        if tql2(d.as_mut_slice(), e.as_mut_slice(), None).is_ok() {
            ev = d.as_slice().to_vec();
        }
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        ev
    }

    /// Enumerate non-backtracking paths of length `k` as vertex sequences
    /// `(x_0, …, x_k)`; `k = 0` yields the vertices, `k = 1` the directed
    /// edges. Ordering is deterministic: lexicographic in the successive
    /// directed-edge indices.
    pub fn nb_paths(&self, k: usize) -> Vec<Vec<u32>> {
        if k == 0 {
            return (0..self.n as u32).map(|v| vec![v]).collect();
        }
        let mut paths: Vec<Vec<u32>> = self
            .directed
            .iter()
            .map(|&(o, t)| vec![o, t])
            .collect();
        for _ in 1..k {
            let mut next = Vec::with_capacity(paths.len() * self.q().max(1));
            for p in &paths {
                let last = *p.last().unwrap() as usize;
                let prev = p[p.len() - 2];
                for &b in &self.vertex_out[last] {
                    let (_, t) = self.directed[b as usize];
                    if t != prev {
                        let mut np = p.clone();
                        np.push(t);
                        next.push(np);
                    }
                }
            }
            paths = next;
        }
        paths
    }

    /// Number of non-backtracking k-paths: `N(q+1)q^{k-1}` for `k ≥ 1`.
    pub fn nb_path_count(&self, k: usize) -> usize {
        if k == 0 {
            self.n
        } else {
            self.n_directed() * self.q().pow((k - 1) as u32)
        }
    }

    /// Serialize to the text edge-list interchange format:
    /// header `n degree`, then one `u v` pair per line (canonical order).
    pub fn to_edge_list_string(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.degree);
        for &(u, v) in &self.undirected {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }

    pub fn from_edge_list_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty edge list".into()))?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("bad edge-list header".into()))?;
        let degree: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("bad edge-list header".into()))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let u: u32 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad edge line '{line}'")))?;
            let v: u32 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse(format!("bad edge line '{line}'")))?;
            edges.push((u, v));
        }
        Graph::from_edges(n, degree, &edges)
    }
}

fn is_connected(adjacency: &[Vec<u32>]) -> bool {
    let n = adjacency.len();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = stack.pop() {
        for &u in &adjacency[v] {
            if !seen[u as usize] {
                seen[u as usize] = true;
                count += 1;
                stack.push(u as usize);
            }
        }
    }
    count == n
}

/// Generate a graph of the requested family. Deterministic for a fixed
/// `(kind, n, degree, seed)` tuple.
pub fn generate_graph(kind: GraphKind, n: usize, degree: usize, seed: u64) -> Result<Graph> {
    match kind {
        GraphKind::Complete => {
            if degree + 1 != n {
                return Err(Error::InfeasibleGraph(format!("complete graph needs degree = n - 1, got n = {n}, degree = {degree}")));
            }
            let mut edges = Vec::new();
            for u in 0..n as u32 {
                for v in (u + 1)..n as u32 {
                    edges.push((u, v));
                }
            }
            Graph::from_edges(n, degree, &edges)
        }
        GraphKind::Cycle => {
            if degree != 2 {
                return Err(Error::InfeasibleGraph(format!("cycle needs degree = 2, got {degree}")));
            }
            if n < 3 {
                return Err(Error::InfeasibleGraph(format!("cycle needs n ≥ 3, got {n}")));
            }
            let edges: Vec<(u32, u32)> = (0..n as u32).map(|v| (v, (v + 1) % n as u32)).collect();
            Graph::from_edges(n, degree, &edges)
        }
        GraphKind::Petersen => {
            if n != 10 || degree != 3 {
                return Err(Error::InfeasibleGraph(format!("petersen is fixed at n = 10, degree = 3; got n = {n}, degree = {degree}")));
            }
            let mut edges = Vec::new();
            for i in 0..5u32 {
                edges.push((i, (i + 1) % 5)); // outer pentagon
                edges.push((i, i + 5)); // spokes
                edges.push((i + 5, (i + 2) % 5 + 5)); // inner pentagram
            }
            Graph::from_edges(n, degree, &edges)
        }
        GraphKind::RandomRegular => random_regular(n, degree, seed),
    }
}

/// Configuration (pairing) model with full rejection of loops, multi-edges
/// and disconnected outcomes.
fn random_regular(n: usize, degree: usize, seed: u64) -> Result<Graph> {
    if n * degree % 2 != 0 {
        return Err(Error::InfeasibleGraph(format!("n·degree = {} is odd", n * degree)));
    }
    if n <= degree {
        return Err(Error::InfeasibleGraph(format!("need n > degree, got n = {n}, degree = {degree}")));
    }
    if degree == 0 {
        return Err(Error::InfeasibleGraph("degree must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = 10 * n;
    let mut stubs: Vec<u32> = Vec::with_capacity(n * degree);
    for v in 0..n as u32 {
        for _ in 0..degree {
            stubs.push(v);
        }
    }
    for attempt in 1..=max_attempts {
        stubs.shuffle(&mut rng);
        if let Some(edges) = pair_stubs(&stubs, n) {
            if let Ok(g) = Graph::from_edges(n, degree, &edges) {
                return Ok(g);
            }
        }
        if attempt == max_attempts {
            break;
        }
    }
    Err(Error::RetryBudgetExhausted { n, degree, attempts: max_attempts })
}

/// Pair consecutive stubs; reject on loops or repeated pairs.
fn pair_stubs(stubs: &[u32], n: usize) -> Option<Vec<(u32, u32)>> {
    let m = stubs.len() / 2;
    let mut edges = Vec::with_capacity(m);
    let mut seen = std::collections::HashSet::with_capacity(m);
    for i in 0..m {
        let (u, v) = (stubs[2 * i], stubs[2 * i + 1]);
        if u == v {
            return None;
        }
        let key = if u < v { (u, v) } else { (v, u) };
        if !seen.insert(key) {
            return None;
        }
        let _ = n;
        edges.push(key);
    }
    Some(edges)
}

/// Full symmetric eigendecomposition of the adjacency matrix.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Eigenvalues sorted descending: `m_1 ≥ … ≥ m_N`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, column `j` pairing with `eigenvalues[j]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralData {
    pub fn eigenvector(&self, j: usize) -> nalgebra::DVectorView<'_, f64> {
        self.eigenvectors.column(j)
    }
}

/// Eigensolver residual tolerance, relative to the operator norm `q + 1`.
pub const TOL_EIG: f64 = 1e-10;

/// Implicit-shift QL iteration on a symmetric tridiagonal matrix with
/// optional accumulation of the transformations (tql2 lineage). `d` holds
/// the diagonal, `e` the `n-1` couplings; on success `d` contains the
/// eigenvalues and the columns of `z` the eigenvectors.
fn tql2(d: &mut [f64], e: &mut [f64], mut z: Option<&mut DMatrix<f64>>) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    // sentinel coupling past the end
    let mut e: Vec<f64> = {
        let mut v = e.to_vec();
        v.push(0.0);
        v
    };
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::Eigensolver(format!(
                    "QL iteration did not deflate row {l} after 100 sweeps"
                )));
            }
            // Wilkinson shift
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r } else { -r });
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    // rotation annihilated early; deflate and retry
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zm) = z.as_deref_mut() {
                    for k in 0..n {
                        f = zm[(k, i + 1)];
                        zm[(k, i + 1)] = s * zm[(k, i)] + c * f;
                        zm[(k, i)] = c * zm[(k, i)] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Dense symmetric eigendecomposition of the adjacency matrix: Householder
/// tridiagonalization followed by implicit-shift QL with accumulated
/// rotations. Sorted descending and residual-checked
/// (`‖Aφ - mφ‖ ≤ TOL_EIG · (q+1)`).
pub fn adjacency_spectrum(g: &Graph) -> Result<SpectralData> {
    let a = g.adjacency_matrix();
    let (mut q, mut d, mut e) = nalgebra::linalg::SymmetricTridiagonal::new(a.clone()).unpack();
    tql2(d.as_mut_slice(), e.as_mut_slice(), Some(&mut q))?;

    let mut order: Vec<usize> = (0..g.n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut eigenvectors = DMatrix::zeros(g.n, g.n);
    for (col, &i) in order.iter().enumerate() {
        eigenvectors.set_column(col, &q.column(i));
    }

    let norm = (g.degree) as f64;
    for j in 0..g.n {
        let v = eigenvectors.column(j);
        let res = (&a * v - eigenvalues[j] * v).norm();
        if res > TOL_EIG * norm {
            return Err(Error::Eigensolver(format!(
                "residual {res:.3e} for eigenvalue {} exceeds {:.1e}",
                eigenvalues[j],
                TOL_EIG * norm
            )));
        }
    }
    Ok(SpectralData { eigenvalues, eigenvectors })
}

/// Spectral gap `β = 1 - max_{j≥2} |m_j| / (q+1)`; positive iff the instance
/// certifies the expander condition.
pub fn spectral_gap(spectrum: &SpectralData, degree: usize) -> f64 {
    let sub = spectrum
        .eigenvalues
        .iter()
        .skip(1)
        .map(|m| m.abs())
        .fold(0.0f64, f64::max);
    1.0 - sub / degree as f64
}

/// Per-vertex injectivity radii and the cumulative fractions
/// `#{x : ρ(x) < r} / N`.
#[derive(Debug, Clone)]
pub struct InjectivityProfile {
    /// ρ_G(x) capped at `r_max`.
    pub rho: Vec<usize>,
    /// `fractions[r] = #{x : ρ(x) < r} / N` for `0 ≤ r ≤ r_max`.
    pub fractions: Vec<f64>,
}

/// Largest ρ ≤ r_max such that the induced ball `B(x, ρ)` is acyclic
/// (edge count = vertex count - 1), per vertex.
pub fn injectivity_profile(g: &Graph, r_max: usize) -> InjectivityProfile {
    let n = g.n;
    let mut rho = vec![0usize; n];
    let mut depth = vec![usize::MAX; n];
    for x in 0..n {
        // BFS out to r_max, tracking per-radius vertex and edge counts
        depth.iter_mut().for_each(|d| *d = usize::MAX);
        depth[x] = 0;
        let mut frontier = vec![x as u32];
        let mut ball: Vec<u32> = vec![x as u32];
        let mut vertices_at = vec![1usize];
        for d in 1..=r_max {
            let mut next = Vec::new();
            for &v in &frontier {
                for &u in g.neighbors(v as usize) {
                    if depth[u as usize] == usize::MAX {
                        depth[u as usize] = d;
                        next.push(u);
                        ball.push(u);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            vertices_at.push(ball.len());
            frontier = next;
        }
        // edges inside B(x, r): both endpoints at depth ≤ r
        let reached = vertices_at.len() - 1;
        let mut edges_at = vec![0usize; reached + 1];
        for &v in &ball {
            let dv = depth[v as usize];
            for &u in g.neighbors(v as usize) {
                let du = depth[u as usize];
                if du != usize::MAX && (u as usize) > (v as usize) {
                    let r = dv.max(du);
                    if r <= reached {
                        edges_at[r] += 1;
                    }
                }
            }
        }
        let mut cum_edges = 0usize;
        let mut best = 0usize;
        for r in 1..=reached {
            cum_edges += edges_at[r];
            if cum_edges == vertices_at[r] - 1 {
                best = r;
            } else {
                break;
            }
        }
        rho[x] = best.min(r_max);
    }
    let mut fractions = Vec::with_capacity(r_max + 1);
    for r in 0..=r_max {
        let count = rho.iter().filter(|&&p| p < r).count();
        fractions.push(count as f64 / n as f64);
    }
    InjectivityProfile { rho, fractions }
}
