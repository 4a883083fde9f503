//! Communication topology: weight matrix, Laplacian, spectrum, and the
//! consensus-subspace projector.
//!
//! Weights follow the receiver-row convention: `weights[(i, v)]` is the gain
//! g_iv agent i applies to what it hears from in-neighbor v (edge v → i).
//! The Laplacian is L = D − W with D the diagonal of row sums, so L·1 = 0.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::num::{cast, Scalar};

/// Relative tolerance for treating a Laplacian eigenvalue as zero and for
/// clustering nearly equal eigenvalues.
const EIG_TOL: f64 = 1e-8;

/// EIG_TOL with a floor tied to the scalar's precision so single-precision
/// eigensolves (round-off ~1e-6) still recognize their zero eigenvalue.
fn eig_tol<T: Scalar>() -> T {
    cast::<T>(EIG_TOL).max(T::default_epsilon() * cast::<T>(256.0))
}

/// A communication graph together with its spectral data.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    /// Number of agents.
    pub n: usize,
    /// Weight matrix, receiver-row convention.
    pub weights: DMatrix<T>,
    /// Whether the graph is directed (weights need not be symmetric).
    pub directed: bool,
    /// Graph Laplacian L = diag(row sums) − W.
    pub laplacian: DMatrix<T>,
    /// Eigenvalues of L sorted lexicographically by (re, im); real for
    /// undirected graphs.
    pub eigenvalues: Vec<Complex<T>>,
    /// Real part of the second-sorted eigenvalue (algebraic connectivity for
    /// undirected graphs); `None` for a single agent.
    pub lambda2_real: Option<T>,
    /// Right null vector of L: the all-ones consensus direction.
    pub phi1: DVector<T>,
    /// Left null vector of L scaled so ψ₁ᵀφ₁ = 1; meaningful for connected
    /// graphs.
    pub psi1: DVector<T>,
}

/// Norms and clustering data of a similarity that (block-)diagonalizes L,
/// used by the tuning-constant chains.
#[derive(Clone, Debug)]
pub struct ModalBasis<T: Scalar> {
    /// Column basis (eigenvectors, or Schur vectors on fallback).
    pub basis: DMatrix<Complex<T>>,
    /// ∞-norm of the basis matrix.
    pub norm_inf: T,
    /// ∞-norm of its inverse.
    pub inv_norm_inf: T,
    /// 2-norm condition number estimate.
    pub cond2: T,
    /// Largest eigenvalue-cluster size at relative tolerance 1e−8.
    pub cluster_max: usize,
    /// True when eigenvector construction was abandoned for an orthogonal
    /// Schur basis (repeated or defective spectrum).
    pub schur_fallback: bool,
}

/// Builds a network from a weight matrix, validating structure and computing
/// the Laplacian spectrum and null vectors.
pub fn build_network<T: Scalar>(weights: DMatrix<T>, directed: bool) -> Result<Network<T>> {
    let n = weights.nrows();
    if n == 0 || weights.ncols() != n {
        return Err(Error::InvalidNetwork(format!(
            "weight matrix must be square and nonempty, got {}x{}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    let mut max_w = T::zero();
    for i in 0..n {
        for j in 0..n {
            let w = weights[(i, j)];
            if !w.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "weight ({},{}) is not finite",
                    i + 1,
                    j + 1
                )));
            }
            if w < T::zero() {
                return Err(Error::InvalidNetwork(format!(
                    "negative weight {} at ({},{})",
                    w.to_f64().unwrap_or(f64::NAN),
                    i + 1,
                    j + 1
                )));
            }
            if i == j && w != T::zero() {
                return Err(Error::InvalidNetwork(format!(
                    "self-loop weight at node {}",
                    i + 1
                )));
            }
            if w > max_w {
                max_w = w;
            }
        }
    }
    if !directed {
        let tol = cast::<T>(1e-12) * max_w.max(T::one());
        for i in 0..n {
            for j in i + 1..n {
                if (weights[(i, j)] - weights[(j, i)]).abs() > tol {
                    return Err(Error::InvalidNetwork(format!(
                        "undirected graph has asymmetric weights at ({},{})",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
    }

    let mut laplacian = -weights.clone();
    for i in 0..n {
        let row_sum = weights.row(i).iter().fold(T::zero(), |a, &b| a + b);
        laplacian[(i, i)] = row_sum;
    }

    let eigenvalues = sorted_spectrum(&laplacian, directed);
    let lambda2_real = if n >= 2 { Some(eigenvalues[1].re) } else { None };
    let phi1 = DVector::from_element(n, T::one());
    let psi1 = left_null_vector(&laplacian, directed);

    Ok(Network {
        n,
        weights,
        directed,
        laplacian,
        eigenvalues,
        lambda2_real,
        phi1,
        psi1,
    })
}

fn sorted_spectrum<T: Scalar>(laplacian: &DMatrix<T>, directed: bool) -> Vec<Complex<T>> {
    let mut eigs: Vec<Complex<T>> = if directed {
        laplacian.clone().complex_eigenvalues().iter().copied().collect()
    } else {
        let sym = nalgebra::SymmetricEigen::new(symmetrize(laplacian));
        sym.eigenvalues
            .iter()
            .map(|&v| Complex::new(v, T::zero()))
            .collect()
    };
    eigs.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
    });
    eigs
}

fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * cast::<T>(0.5)
}

fn left_null_vector<T: Scalar>(laplacian: &DMatrix<T>, directed: bool) -> DVector<T> {
    let n = laplacian.nrows();
    if !directed {
        return DVector::from_element(n, T::one() / cast::<T>(n as f64));
    }
    // ψ₁ spans the null space of Lᵀ: the right singular vector of Lᵀ for the
    // smallest singular value.
    let svd = nalgebra::SVD::new(laplacian.transpose(), true, true);
    let (Some(v_t), sv) = (svd.v_t, svd.singular_values) else {
        return DVector::from_element(n, T::one() / cast::<T>(n as f64));
    };
    let mut min_idx = 0;
    for i in 1..sv.len() {
        if sv[i] < sv[min_idx] {
            min_idx = i;
        }
    }
    let v = v_t.row(min_idx).transpose();
    let sum = v.iter().fold(T::zero(), |a, &b| a + b);
    if sum.abs() < cast::<T>(1e-8) {
        // Orthogonal to the consensus direction: only happens for graphs
        // without a rooted spanning tree, which fail connectivity_check.
        return DVector::from_element(n, T::one() / cast::<T>(n as f64));
    }
    v / sum
}

impl<T: Scalar> Network<T> {
    /// Spectral scale used by zero/cluster tolerances.
    fn eig_scale(&self) -> T {
        self.eigenvalues
            .iter()
            .fold(T::one(), |a, v| a.max(v.modulus()))
    }

    /// Magnitude below which a Laplacian eigenvalue counts as zero.
    pub fn zero_tolerance(&self) -> T {
        eig_tol::<T>() * self.eig_scale()
    }

    /// Count of (numerically) zero Laplacian eigenvalues.
    pub fn zero_eigenvalue_count(&self) -> usize {
        let tol = self.zero_tolerance();
        self.eigenvalues.iter().filter(|v| v.modulus() <= tol).count()
    }

    /// Reachability-based connectivity: BFS for undirected graphs, existence
    /// of a root reaching every node for directed graphs.
    pub fn reachable_connected(&self) -> bool {
        let n = self.n;
        if n == 1 {
            return true;
        }
        let reach_from = |root: usize| -> usize {
            let mut seen = vec![false; n];
            let mut stack = vec![root];
            seen[root] = true;
            let mut count = 1;
            while let Some(u) = stack.pop() {
                for w in 0..n {
                    // edge u → w exists when receiver w weights sender u
                    if !seen[w] && self.weights[(w, u)] > T::zero() {
                        seen[w] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
            count
        };
        if self.directed {
            (0..n).any(|r| reach_from(r) == n)
        } else {
            reach_from(0) == n
        }
    }

    /// Connectivity verdict cross-checked two ways: reachability and the
    /// multiplicity of the zero Laplacian eigenvalue. Disagreement (possible
    /// only for numerically borderline spectra) is surfaced as an error.
    pub fn connectivity_check(&self) -> Result<bool> {
        let reachable = self.reachable_connected();
        let zero_count = self.zero_eigenvalue_count();
        let spectral = zero_count == 1;
        if reachable != spectral {
            return Err(Error::ConnectivityMismatch {
                reachable,
                zero_count,
            });
        }
        Ok(reachable)
    }

    /// Projects one state component across agents onto the disagreement
    /// subspace: δ = (I − φ₁ψ₁ᵀ)x.
    pub fn disagreement(&self, x: &DVector<T>) -> DVector<T> {
        let mean = self.psi1.dot(x);
        x - &self.phi1 * mean
    }

    /// ∞-norm of the disagreement of one component.
    pub fn disagreement_inf(&self, x: &DVector<T>) -> T {
        self.disagreement(x).amax()
    }

    /// Whether this topology supports oscillator orders m ≥ 2: undirected
    /// always; directed only with a real positive nonzero spectrum and a
    /// well-conditioned eigenbasis.
    pub fn supports_high_order(&self, m: usize) -> Result<()> {
        if m <= 1 || !self.directed {
            return Ok(());
        }
        let scale = self.eig_scale();
        let tol = eig_tol::<T>() * scale;
        for ev in &self.eigenvalues {
            if ev.modulus() <= tol {
                continue;
            }
            if ev.im.abs() > tol || ev.re <= tol {
                return Err(Error::UnsupportedTopology {
                    m,
                    reason: format!(
                        "directed graph needs a real positive nonzero spectrum, found {}+{}i",
                        ev.re.to_f64().unwrap_or(f64::NAN),
                        ev.im.to_f64().unwrap_or(f64::NAN)
                    ),
                });
            }
        }
        let basis = self.modal_basis()?;
        if basis.cond2 > cast::<T>(1e6) {
            return Err(Error::UnsupportedTopology {
                m,
                reason: format!(
                    "eigenbasis condition {:.3e} exceeds 1e6",
                    basis.cond2.to_f64().unwrap_or(f64::NAN)
                ),
            });
        }
        Ok(())
    }

    /// Builds the modal basis used by the tuning constants: eigenvectors with
    /// the zero-eigenvalue column pinned to 1/√N, unit 2-norm elsewhere.
    /// Falls back to the orthogonal Schur basis when the eigenproblem is
    /// defective or too ill-conditioned.
    pub fn modal_basis(&self) -> Result<ModalBasis<T>> {
        let n = self.n;
        let scale = self.eig_scale();
        let tol = eig_tol::<T>() * scale;

        // Largest cluster of nearly equal eigenvalues.
        let mut cluster_max = 1usize;
        for i in 0..n {
            let mut size = 0usize;
            for j in 0..n {
                if (self.eigenvalues[i] - self.eigenvalues[j]).modulus() <= tol {
                    size += 1;
                }
            }
            cluster_max = cluster_max.max(size);
        }

        let candidate = if self.directed {
            self.eigvec_basis_directed(tol)
        } else {
            Some(self.eigvec_basis_symmetric())
        };

        if let Some(basis) = candidate {
            if let Some(mb) = finish_basis(basis, cluster_max, false) {
                if mb.cond2 <= cast::<T>(1e8) {
                    return Ok(mb);
                }
            }
        }

        // Orthogonal Schur fallback: always well-conditioned.
        let schur = nalgebra::Schur::new(self.laplacian.clone());
        let (q, _t) = schur.unpack();
        let qc = q.map(|x| Complex::new(x, T::zero()));
        finish_basis(qc, cluster_max, true).ok_or(Error::SingularSystem {
            context: "modal basis construction",
        })
    }

    fn eigvec_basis_symmetric(&self) -> DMatrix<Complex<T>> {
        let n = self.n;
        let sym = nalgebra::SymmetricEigen::new(symmetrize(&self.laplacian));
        let mut pairs: Vec<(T, DVector<T>)> = (0..n)
            .map(|i| (sym.eigenvalues[i], sym.eigenvectors.column(i).into_owned()))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let mut u = DMatrix::zeros(n, n);
        for (idx, (_, vec)) in pairs.into_iter().enumerate() {
            u.set_column(idx, &vec);
        }
        // Pin the consensus column to the positive normalization.
        let inv_sqrt = T::one() / cast::<T>(n as f64).sqrt();
        for i in 0..n {
            u[(i, 0)] = inv_sqrt;
        }
        u.map(|x| Complex::new(x, T::zero()))
    }

    fn eigvec_basis_directed(&self, zero_tol: T) -> Option<DMatrix<Complex<T>>> {
        let n = self.n;
        let lc: DMatrix<Complex<T>> = self.laplacian.map(|x| Complex::new(x, T::zero()));
        let ident = DMatrix::<Complex<T>>::identity(n, n);
        let mut u = DMatrix::<Complex<T>>::zeros(n, n);
        let inv_sqrt = T::one() / cast::<T>(n as f64).sqrt();
        for (idx, ev) in self.eigenvalues.iter().enumerate() {
            if ev.modulus() <= zero_tol {
                for i in 0..n {
                    u[(i, idx)] = Complex::new(inv_sqrt, T::zero());
                }
                continue;
            }
            let col = inverse_iteration(&lc, &ident, *ev)?;
            u.set_column(idx, &col);
        }
        Some(u)
    }
}

fn finish_basis<T: Scalar>(
    basis: DMatrix<Complex<T>>,
    cluster_max: usize,
    schur_fallback: bool,
) -> Option<ModalBasis<T>> {
    let inv = basis.clone().try_inverse()?;
    let sv = nalgebra::SVD::new(basis.clone(), false, false).singular_values;
    let (mut smax, mut smin) = (sv[0], sv[0]);
    for &s in sv.iter() {
        smax = smax.max(s);
        smin = smin.min(s);
    }
    if smin <= T::zero() {
        return None;
    }
    Some(ModalBasis {
        norm_inf: complex_inf_norm(&basis),
        inv_norm_inf: complex_inf_norm(&inv),
        cond2: smax / smin,
        cluster_max,
        schur_fallback,
        basis,
    })
}

fn complex_inf_norm<T: Scalar>(m: &DMatrix<Complex<T>>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        let mut row_sum = T::zero();
        for j in 0..m.ncols() {
            row_sum += m[(i, j)].modulus();
        }
        worst = worst.max(row_sum);
    }
    worst
}

fn inverse_iteration<T: Scalar>(
    lc: &DMatrix<Complex<T>>,
    ident: &DMatrix<Complex<T>>,
    ev: Complex<T>,
) -> Option<DVector<Complex<T>>> {
    let n = lc.nrows();
    let scale = ev.modulus().max(T::one());
    for attempt in 0..2 {
        let jitter = cast::<T>(1e-10) * scale * cast::<T>(10f64.powi(attempt));
        let shift = ev + Complex::new(jitter, jitter * cast::<T>(0.7));
        let lu = (lc - ident * shift).lu();
        let mut v = DVector::from_fn(n, |i, _| {
            Complex::new(
                T::one() + cast::<T>(0.01) * cast::<T>((i + 1) as f64),
                cast::<T>(0.003) * cast::<T>(((i * i) % 7 + 1) as f64),
            )
        });
        let mut ok = true;
        for _ in 0..5 {
            match lu.solve(&v) {
                Some(next) => {
                    let norm = next.norm();
                    if norm <= T::zero() || !norm.is_finite() {
                        ok = false;
                        break;
                    }
                    v = next / Complex::new(norm, T::zero());
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Some(v);
        }
    }
    None
}

/// One random graph draw: edge probability `p`, unit weights. Undirected
/// graphs draw each unordered pair once; directed graphs draw every ordered
/// pair independently.
pub fn random_graph<T: Scalar, R: Rng>(
    rng: &mut R,
    n: usize,
    p: f64,
    directed: bool,
) -> DMatrix<T> {
    let mut w = DMatrix::zeros(n, n);
    if directed {
        for i in 0..n {
            for v in 0..n {
                if i != v && rng.gen::<f64>() < p {
                    w[(i, v)] = T::one();
                }
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen::<f64>() < p {
                    w[(i, j)] = T::one();
                    w[(j, i)] = T::one();
                }
            }
        }
    }
    w
}

/// Draws seeded random graphs until one is connected (undirected) or has a
/// rooted spanning tree (directed). Returns the network and the number of
/// draws consumed.
pub fn find_connected_graph<T: Scalar>(
    n: usize,
    p: f64,
    seed: u64,
    directed: bool,
) -> Result<(Network<T>, u64)> {
    if n == 0 {
        return Err(Error::InvalidNetwork("need at least one agent".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter {
            name: "edge_prob",
            reason: format!("{p} outside [0, 1]"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=10_000u64 {
        let weights = random_graph::<T, _>(&mut rng, n, p, directed);
        let net = build_network(weights, directed)?;
        if net.connectivity_check()? {
            return Ok((net, attempt));
        }
    }
    Err(Error::Infeasible(format!(
        "no connected graph found in 10000 draws (n={n}, p={p})"
    )))
}

/// Builds a weight matrix from 1-based (sender, receiver, weight) triples.
/// For undirected graphs each triple sets both directions.
pub fn weights_from_edges<T: Scalar>(
    n: Option<usize>,
    edges: &[(usize, usize, T)],
    directed: bool,
) -> Result<DMatrix<T>> {
    let max_idx = edges.iter().map(|&(i, j, _)| i.max(j)).max().unwrap_or(0);
    let n = match n {
        Some(n) => {
            if max_idx > n {
                return Err(Error::InvalidNetwork(format!(
                    "edge index {max_idx} exceeds declared agent count {n}"
                )));
            }
            n
        }
        None => max_idx,
    };
    if n == 0 {
        return Err(Error::InvalidNetwork("empty edge list and no agent count".into()));
    }
    let mut w = DMatrix::zeros(n, n);
    for &(sender, receiver, weight) in edges {
        if sender == 0 || receiver == 0 {
            return Err(Error::InvalidNetwork("edge indices are 1-based".into()));
        }
        if sender == receiver {
            return Err(Error::InvalidNetwork(format!(
                "self-loop edge at node {sender}"
            )));
        }
        w[(receiver - 1, sender - 1)] = weight;
        if !directed {
            w[(sender - 1, receiver - 1)] = weight;
        }
    }
    Ok(w)
}
