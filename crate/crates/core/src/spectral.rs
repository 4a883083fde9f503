//! Spectral verification of the graded closed loop.
//!
//! For each nonzero network eigenvalue λ the per-mode closed loop is
//! A − λ·b·kᵀ with the ε-graded gains k. Its eigensolve is numerically
//! treacherous near ε → 0 (the matrix limits to a defective rotation block
//! stack), so the radius is computed on a balanced similarity transform that
//! spreads the grading evenly: diagonal blocks unchanged, superdiagonal
//! √ε·I₂, bottom row carrying −λc·ε^{(m−j)/2} (ε for the top pair). The
//! balanced matrix depends smoothly on √ε and its eigensolve stays
//! well-conditioned at any ε of interest.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gains::{grade_gains, CoeffSet};
use crate::model::SystemModel;
use crate::num::{cast, Scalar};

/// Per-mode closed loop A − λ·b·kᵀ with explicit (already graded) gains.
pub fn closed_loop_matrix<T: Scalar>(
    model: &SystemModel<T>,
    k: &DVector<T>,
    lambda: Complex<T>,
) -> DMatrix<Complex<T>> {
    let n = 2 * model.m;
    let mut out = model.a.map(|v| Complex::new(v, T::zero()));
    for col in 0..n {
        out[(n - 1, col)] -= lambda * k[col];
    }
    out
}

/// Balanced similarity of the graded closed loop (see module docs).
pub fn balanced_closed_loop<T: Scalar>(
    set: &CoeffSet<T>,
    lambda: Complex<T>,
    epsilon: T,
) -> DMatrix<Complex<T>> {
    let m = set.m;
    let n = 2 * m;
    let (s, c) = (set.theta.sin(), set.theta.cos());
    let sqrt_eps = epsilon.sqrt();
    let zero = Complex::new(T::zero(), T::zero());
    let mut b = DMatrix::from_element(n, n, zero);
    for blk in 0..m {
        let r = 2 * blk;
        b[(r, r)] = Complex::new(c, T::zero());
        b[(r, r + 1)] = Complex::new(s, T::zero());
        b[(r + 1, r)] = Complex::new(-s, T::zero());
        b[(r + 1, r + 1)] = Complex::new(c, T::zero());
        if blk + 1 < m {
            b[(r, r + 2)] = Complex::new(sqrt_eps, T::zero());
            b[(r + 1, r + 3)] = Complex::new(sqrt_eps, T::zero());
        }
    }
    for j in 1..=m {
        let scale = if j < m {
            sqrt_eps.powi((m - j) as i32)
        } else {
            epsilon
        };
        b[(n - 1, 2 * j - 2)] -= lambda * (set.c[2 * j - 2] * scale);
        b[(n - 1, 2 * j - 1)] -= lambda * (set.c[2 * j - 1] * scale);
    }
    b
}

/// Spectral radius of a complex square matrix. Real matrices (all imaginary
/// parts exactly zero) go straight to the real eigensolver; otherwise the
/// matrix is embedded as the 2n×2n real block form [[X, −Y], [Y, X]], whose
/// spectrum is that of X+𝚥Y together with its conjugate.
pub fn spectral_radius_complex<T: Scalar>(mat: &DMatrix<Complex<T>>) -> T {
    let n = mat.nrows();
    let all_real = mat.iter().all(|v| v.im == T::zero());
    let eigs = if all_real {
        mat.map(|v| v.re).complex_eigenvalues()
    } else {
        let mut embed = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                embed[(i, j)] = mat[(i, j)].re;
                embed[(i, j + n)] = -mat[(i, j)].im;
                embed[(i + n, j)] = mat[(i, j)].im;
                embed[(i + n, j + n)] = mat[(i, j)].re;
            }
        }
        embed.complex_eigenvalues()
    };
    eigs.iter().fold(T::zero(), |a, v| a.max(v.modulus()))
}

/// Spectral radius of the graded per-mode closed loop, via the balanced form.
pub fn graded_radius<T: Scalar>(set: &CoeffSet<T>, lambda: Complex<T>, epsilon: T) -> T {
    spectral_radius_complex(&balanced_closed_loop(set, lambda, epsilon))
}

/// First-order term of ρ(ε) = 1 + slope·ε + o(ε) for the graded loop.
pub fn predicted_slope<T: Scalar>(set: &CoeffSet<T>, lambda: Complex<T>) -> T {
    let half = cast::<T>(0.5);
    match set.m {
        1 => {
            let (s, c) = (set.theta.sin(), set.theta.cos());
            -half * lambda.re * (set.c[1] * c - set.c[0] * s)
        }
        2 => half * lambda.re * set.r_m.expect("m >= 2 carries R_m"),
        _ => {
            let first = lambda.re * set.r_m.expect("m >= 2 carries R_m")
                + set.slope_offset.expect("m >= 3 carries slope offset");
            let unit_conj = Complex::new(set.theta.cos(), -set.theta.sin());
            let root_worst = set
                .roots
                .iter()
                .map(|t| cast::<T>(2.0) * (*t * unit_conj).re)
                .fold(None::<T>, |a, v| Some(a.map_or(v, |b| b.max(v))))
                .expect("m >= 3 has at least one root");
            half * first.max(root_worst)
        }
    }
}

/// Radius-vs-ε verdict for one eigenvalue.
#[derive(Clone, Debug)]
pub struct SpectralReport<T: Scalar> {
    pub lambda: Complex<T>,
    pub epsilons: Vec<T>,
    pub radii: Vec<T>,
    /// Fitted first-order slope: mean of (ρ − 1)/ε over the probes.
    pub slope_fit: T,
    pub predicted_slope: T,
    /// Whether the balanced loop at the smallest probe has pairwise-distinct
    /// eigenvalues (only assessed for real λ; reported true otherwise).
    pub eigen_distinct: bool,
    /// Worst observed/bound ratios from a power-bound run, when attached.
    pub power_margins: Vec<T>,
}

/// Sweeps the radius over a decreasing ε grid and fits the slope.
pub fn radius_expansion_check<T: Scalar>(
    set: &CoeffSet<T>,
    lambda: Complex<T>,
    epsilons: &[T],
) -> Result<SpectralReport<T>> {
    if epsilons.is_empty() {
        return Err(Error::InvalidParameter {
            name: "epsilons",
            reason: "need at least one probe".into(),
        });
    }
    for pair in epsilons.windows(2) {
        if pair[1] >= pair[0] {
            return Err(Error::InvalidParameter {
                name: "epsilons",
                reason: "probes must strictly decrease".into(),
            });
        }
    }
    if epsilons.iter().any(|&e| e <= T::zero() || e >= T::one()) {
        return Err(Error::InvalidParameter {
            name: "epsilons",
            reason: "probes must lie in (0, 1)".into(),
        });
    }

    let radii: Vec<T> = epsilons
        .iter()
        .map(|&e| graded_radius(set, lambda, e))
        .collect();
    let mut acc = T::zero();
    for (&rho, &eps) in radii.iter().zip(epsilons) {
        acc += (rho - T::one()) / eps;
    }
    let slope_fit = acc / cast::<T>(epsilons.len() as f64);

    let eigen_distinct = if lambda.im == T::zero() {
        let smallest = *epsilons.last().expect("nonempty");
        let eigs = balanced_closed_loop(set, lambda, smallest)
            .map(|v| v.re)
            .complex_eigenvalues();
        let mut distinct = true;
        'outer: for i in 0..eigs.len() {
            for j in (i + 1)..eigs.len() {
                if (eigs[i] - eigs[j]).modulus() <= cast::<T>(1e-10) {
                    distinct = false;
                    break 'outer;
                }
            }
        }
        distinct
    } else {
        true
    };

    Ok(SpectralReport {
        lambda,
        epsilons: epsilons.to_vec(),
        radii,
        slope_fit,
        predicted_slope: predicted_slope(set, lambda),
        eigen_distinct,
        power_margins: Vec::new(),
    })
}

/// Coefficient M_j of the modal power bound
/// |ξ_s pair j| ≤ ‖ξ‖∞ · M_j · ρ^s · ε^{e_j} for eigenvalue λ > 0.
pub fn power_bound_coefficient<T: Scalar>(set: &CoeffSet<T>, lambda: T, j: usize) -> T {
    let m = set.m;
    debug_assert!(m >= 2 && j >= 1 && j <= m);
    if j == m {
        cast::<T>(2.5)
    } else if j == m - 1 {
        cast::<T>(3.0) / (cast::<T>(2.0) * lambda).sqrt()
    } else {
        let mut sum = T::zero();
        for n in 1..=(m - 2) {
            let num = set.roots[n - 1].modulus().powi(j as i32 - 1);
            let mut den = T::one();
            for k in 1..=(m - 2) {
                if k != n {
                    den *= (set.roots[k - 1] - set.roots[n - 1]).modulus();
                }
            }
            sum += num / den;
        }
        if j == m - 2 {
            sum += T::one();
        }
        cast::<T>(2.5) / lambda * sum
    }
}

/// Exponent e_j of ε in the modal power bound: j − m + 1 for j ≤ m−2,
/// −1/2 for j = m−1, 0 for the top pair.
pub fn power_bound_exponent<T: Scalar>(m: usize, j: usize) -> T {
    debug_assert!(j >= 1 && j <= m);
    if j + 1 == m {
        cast::<T>(-0.5)
    } else if j == m {
        T::zero()
    } else {
        cast::<T>(j as f64 - m as f64 + 1.0)
    }
}

/// Monte-Carlo check of the modal power bound: iterates v ← (A − λbkᵀ)v from
/// random unit-∞ starts and records, per coordinate pair, the worst ratio of
/// observed entry magnitude to the bound. Ratios ≤ 1 certify the bound on the
/// sample; slightly above 1 would still be within the bound's slack
/// conventions, so callers choose their own margin.
pub fn power_bound_check<T: Scalar>(
    model: &SystemModel<T>,
    set: &CoeffSet<T>,
    lambda: T,
    epsilon: T,
    s_max: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let m = set.m;
    if m < 2 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "modal power bound is stated for m >= 2".into(),
        });
    }
    if lambda <= T::zero() {
        return Err(Error::InvalidParameter {
            name: "lambda",
            reason: "modal power bound needs a positive real eigenvalue".into(),
        });
    }
    if trials == 0 {
        return Err(Error::InvalidParameter {
            name: "trials",
            reason: "need at least one trial".into(),
        });
    }
    let n = 2 * m;
    let k = grade_gains(set, epsilon);
    let mut a_cl = model.a.clone();
    for col in 0..n {
        a_cl[(n - 1, col)] -= lambda * k[col];
    }
    let rho = graded_radius(set, Complex::new(lambda, T::zero()), epsilon);

    let coeffs: Vec<T> = (1..=m)
        .map(|j| power_bound_coefficient(set, lambda, j))
        .collect();
    let eps_pows: Vec<T> = (1..=m)
        .map(|j| epsilon.powf(power_bound_exponent::<T>(m, j)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = vec![T::zero(); m];
    for _ in 0..trials {
        let mut xi = DVector::<T>::zeros(n);
        loop {
            for e in xi.iter_mut() {
                *e = cast::<T>(rng.gen_range(-1.0..1.0f64));
            }
            if xi.amax() > cast::<T>(1e-3) {
                break;
            }
        }
        let scale = xi.amax();
        xi /= scale;
        let mut v = xi;
        let mut rho_pow = T::one();
        for _s in 0..=s_max {
            for j in 1..=m {
                let obs = v[2 * j - 2].abs().max(v[2 * j - 1].abs());
                let bound = coeffs[j - 1] * rho_pow * eps_pows[j - 1];
                let ratio = obs / bound;
                if ratio > worst[j - 1] {
                    worst[j - 1] = ratio;
                }
            }
            v = &a_cl * v;
            rho_pow *= rho;
        }
    }
    Ok(worst)
}
