//! Coupling-gain design: coefficient recipes, the ε-grading, feasibility
//! inequalities for the scaling decay, and the minimum zoom scale p₀.
//!
//! The coefficient vector c fixes the shape of the feedback; the scalar ε
//! grades it into the actual gains k so the closed-loop spectral radius sits
//! at 1 + slope·ε + o(ε) with negative slope. Feasibility of a given ε is a
//! set of explicit inequalities (different for first-order and higher-order
//! agents) plus the directly verified radius gate ρ_i < 1 − ε/2.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::combin::factorial;
use crate::error::{Error, Result};
use crate::model::SystemModel;
use crate::network::Network;
use crate::num::{cast, Scalar};
use crate::spectral;

/// Coefficient vector with the design metadata the downstream checks need.
#[derive(Clone, Debug)]
pub struct CoeffSet<T: Scalar> {
    pub m: usize,
    pub theta: T,
    /// Design parameter h ∈ (0, λ₂] steering how much decay the top
    /// coefficient pair buys.
    pub h: T,
    /// Coefficients c_1 … c_{2m} (0-based storage).
    pub c: DVector<T>,
    /// Top-pair decay constant R_m (m ≥ 2 only).
    pub r_m: Option<T>,
    /// Constant offset H in the higher-order slope bound (m ≥ 3 only).
    pub slope_offset: Option<T>,
    /// Roots ϑ_n = −n·e^{jθ} of the coefficient polynomial, n = 1…m−2.
    pub roots: Vec<Complex<T>>,
}

/// Builds the coefficient vector per the standard recipes.
pub fn select_coefficients<T: Scalar>(m: usize, theta: T, h: T) -> Result<CoeffSet<T>> {
    if m < 1 || m > crate::model::MAX_ORDER {
        return Err(Error::OrderOutOfRange {
            m,
            max: crate::model::MAX_ORDER,
        });
    }
    let (s, c) = (theta.sin(), theta.cos());
    if s.abs().to_f64().unwrap_or(0.0) < crate::model::MIN_SIN_ABS {
        return Err(Error::DegenerateAngle {
            theta: theta.to_f64().unwrap_or(f64::NAN),
            sin_abs: s.abs().to_f64().unwrap_or(0.0),
            min: crate::model::MIN_SIN_ABS,
        });
    }
    if h <= T::zero() {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: "design parameter must be positive".into(),
        });
    }

    let mut coeffs = DVector::zeros(2 * m);
    let mut r_m = None;
    let mut slope_offset = None;
    let mut roots = Vec::new();

    match m {
        1 => {
            coeffs[0] = -s / h;
            coeffs[1] = c / h;
        }
        2 => {
            let two = cast::<T>(2.0);
            coeffs[0] = -(two * theta).sin();
            coeffs[1] = (two * theta).cos();
            let amp = cast::<T>(4.0) / h + T::one();
            coeffs[2] = -amp * s;
            coeffs[3] = amp * c;
        }
        _ => {
            // Expand e^{2jθ}·∏_{k=1}^{m−2}(ϑ + k·e^{jθ}); the ϑ^{j−1}
            // coefficient is c_{2j} − c_{2j−1}·𝚥 for j = 1…m−1.
            let unit = Complex::new(c, s);
            let lead = unit * unit;
            let mut poly: Vec<Complex<T>> = vec![lead];
            for k in 1..=(m - 2) {
                let root_term = unit * cast::<T>(k as f64);
                let mut next = vec![Complex::new(T::zero(), T::zero()); poly.len() + 1];
                for (d, &p) in poly.iter().enumerate() {
                    next[d + 1] += p;
                    next[d] += p * root_term;
                }
                poly = next;
            }
            for j in 1..m {
                let w = poly[j - 1];
                coeffs[2 * j - 2] = -w.im;
                coeffs[2 * j - 1] = w.re;
            }
            let big_h = cast::<T>(((m - 1) * (m - 2)) as f64 / 2.0);
            let amp = (cast::<T>(2.0) * big_h + cast::<T>(4.0)) / h + T::one();
            coeffs[2 * m - 2] = -amp * s;
            coeffs[2 * m - 1] = amp * c;
            slope_offset = Some(big_h);
            roots = (1..=(m - 2))
                .map(|n| -unit * cast::<T>(n as f64))
                .collect();
        }
    }
    if m >= 2 {
        let half = cast::<T>(0.5);
        r_m = Some(half + half * (coeffs[2 * m - 2] * s - coeffs[2 * m - 1] * c));
    }

    Ok(CoeffSet {
        m,
        theta,
        h,
        c: coeffs,
        r_m,
        slope_offset,
        roots,
    })
}

/// Grades coefficients into gains: pair j gets ε^{m−j} for j < m and ε for
/// the top pair.
pub fn grade_gains<T: Scalar>(set: &CoeffSet<T>, epsilon: T) -> DVector<T> {
    let m = set.m;
    let mut k = set.c.clone();
    for j in 1..=m {
        let power = if j < m { (m - j) as i32 } else { 1 };
        let scale = epsilon.powi(power);
        k[2 * j - 2] *= scale;
        k[2 * j - 1] *= scale;
    }
    k
}

/// Default design parameter: half the algebraic connectivity for first-order
/// agents (leaving slope margin below the −ε/2 gate), the full connectivity
/// for higher orders.
pub fn default_h<T: Scalar>(m: usize, network: &Network<T>) -> Result<T> {
    let lambda2 = network.lambda2_real.ok_or_else(|| {
        Error::Infeasible("single-agent network has no nonzero eigenvalue to tune against".into())
    })?;
    if lambda2 <= cast::<T>(1e-10) {
        return Err(Error::Infeasible(
            "nonpositive algebraic connectivity: graph is disconnected".into(),
        ));
    }
    Ok(if m == 1 {
        lambda2 / cast::<T>(2.0)
    } else {
        lambda2
    })
}

/// The constant chains gating the ε-search inequalities.
#[derive(Clone, Debug)]
pub enum ConstantSet<T: Scalar> {
    /// First-order chain: output-error amplification C₀, spectral magnitude
    /// Λ, the recursive C(k) chain up to the largest eigenvalue cluster, and
    /// the aggregate C̄.
    FirstOrder {
        c0: T,
        lambda_abs: T,
        chain_final: T,
        c_bar: T,
        u_norm: T,
        u_inv_norm: T,
        cluster_max: usize,
    },
    /// Higher-order constants: extreme input-correction entry b*, extreme
    /// coefficient c*, largest eigenvalue λ_N with its power envelope Λ, and
    /// the aggregate C̄.
    HighOrder {
        b_star: T,
        c_star: T,
        lambda_max: T,
        big_lambda: T,
        c_bar: T,
        u_inv_norm: T,
        s_norm: T,
    },
}

fn inf_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..m.nrows() {
        let mut row = T::zero();
        for j in 0..m.ncols() {
            row += m[(i, j)].abs();
        }
        worst = worst.max(row);
    }
    worst
}

/// Derives the constant chain for the given model/network/coefficients.
pub fn derive_constants<T: Scalar>(
    model: &SystemModel<T>,
    network: &Network<T>,
    set: &CoeffSet<T>,
) -> Result<ConstantSet<T>> {
    let zero_tol = network.zero_tolerance();
    if set.m == 1 {
        let basis = network.modal_basis()?;
        let (s, c) = (set.theta.sin(), set.theta.cos());
        let _ = c;
        let c0 = cast::<T>(0.5) * set.c[0].abs()
            + cast::<T>(1.5) * (set.c[1] / s).abs();
        let lambda_abs = network
            .eigenvalues
            .iter()
            .filter(|v| v.modulus() > zero_tol)
            .fold(T::zero(), |a, v| a.max(v.modulus()));
        let coeff_sum = set.c[0].abs() + set.c[1].abs();
        // C(1), then the recursion once per extra member of the largest
        // eigenvalue cluster.
        let mut chain = basis.inv_norm_inf + cast::<T>(2.0) * c0 * lambda_abs * basis.norm_inf;
        for _ in 2..=basis.cluster_max {
            chain = basis.inv_norm_inf
                + cast::<T>(2.0) * c0 * (lambda_abs + T::one()) * basis.norm_inf
                + cast::<T>(10.0) * coeff_sum * chain;
        }
        let c_bar = cast::<T>(5.0) * coeff_sum * chain + c0 * basis.norm_inf;
        Ok(ConstantSet::FirstOrder {
            c0,
            lambda_abs,
            chain_final: chain,
            c_bar,
            u_norm: basis.norm_inf,
            u_inv_norm: basis.inv_norm_inf,
            cluster_max: basis.cluster_max,
        })
    } else {
        let basis = network.modal_basis()?;
        let b_star = model.input_columns.amax();
        let c_star = set.c.amax();
        let lambda_max = network
            .eigenvalues
            .iter()
            .fold(T::zero(), |a, v| a.max(v.re));
        let big_lambda = lambda_max.sqrt().max(lambda_max.powf(cast::<T>(1.5)));
        let s_norm = inf_norm(&model.recovery);
        let c_bar = cast::<T>(9.0) / cast::<T>(2.0).sqrt()
            * (basis.inv_norm_inf
                + cast::<T>(5.0)
                    * c_star
                    * cast::<T>(set.m as f64)
                    * cast::<T>(network.n as f64)
                    * (s_norm + cast::<T>(2.0)));
        Ok(ConstantSet::HighOrder {
            b_star,
            c_star,
            lambda_max,
            big_lambda,
            c_bar,
            u_inv_norm: basis.inv_norm_inf,
            s_norm,
        })
    }
}

/// One inequality of the feasibility set; passes when lhs ≤ rhs.
#[derive(Clone, Debug)]
pub struct IneqCheck<T: Scalar> {
    pub id: String,
    pub lhs: T,
    pub rhs: T,
}

impl<T: Scalar> IneqCheck<T> {
    pub fn pass(&self) -> bool {
        self.lhs <= self.rhs
    }
    pub fn margin(&self) -> T {
        self.rhs - self.lhs
    }
}

/// One spectral-radius gate entry; passes when ρ < bound.
#[derive(Clone, Debug)]
pub struct RadiusCheck<T: Scalar> {
    pub lambda: Complex<T>,
    pub rho: T,
    pub bound: T,
}

impl<T: Scalar> RadiusCheck<T> {
    pub fn pass(&self) -> bool {
        self.rho < self.bound
    }
}

/// Full feasibility verdict for one ε.
#[derive(Clone, Debug)]
pub struct FeasibilityReport<T: Scalar> {
    pub epsilon: T,
    pub gamma: T,
    pub inequalities: Vec<IneqCheck<T>>,
    pub radius: Vec<RadiusCheck<T>>,
}

impl<T: Scalar> FeasibilityReport<T> {
    pub fn inequalities_pass(&self) -> bool {
        self.inequalities.iter().all(IneqCheck::pass)
    }
    pub fn radius_pass(&self) -> bool {
        self.radius.iter().all(RadiusCheck::pass)
    }
    pub fn feasible(&self) -> bool {
        self.inequalities_pass() && self.radius_pass()
    }
    /// Identifier of the first failing check, if any.
    pub fn first_failing(&self) -> Option<String> {
        if let Some(c) = self.inequalities.iter().find(|c| !c.pass()) {
            return Some(c.id.clone());
        }
        self.radius
            .iter()
            .find(|r| !r.pass())
            .map(|r| format!("radius gate at eigenvalue {:.6}", r.lambda.re.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Evaluates the full inequality set and radius gate at one (ε, γ) point.
pub fn evaluate_epsilon<T: Scalar>(
    model: &SystemModel<T>,
    network: &Network<T>,
    set: &CoeffSet<T>,
    constants: &ConstantSet<T>,
    epsilon: T,
    gamma: T,
    strengthened: bool,
) -> FeasibilityReport<T> {
    let mut inequalities = Vec::new();
    let (s, c) = (set.theta.sin(), set.theta.cos());
    let n_agents = cast::<T>(network.n as f64);
    let zero_tol = network.zero_tolerance();

    match constants {
        ConstantSet::FirstOrder {
            c0: _,
            lambda_abs,
            chain_final: _,
            c_bar,
            u_norm,
            u_inv_norm: _,
            ..
        } => {
            let csc_abs = (T::one() / s).abs();
            inequalities.push(IneqCheck {
                id: "error-growth".into(),
                lhs: (*lambda_abs + T::one()) * *c_bar * epsilon,
                rhs: cast::<T>(0.5) * gamma * csc_abs * *u_norm,
            });
            inequalities.push(IneqCheck {
                id: "zoom-headroom".into(),
                lhs: (T::one() / gamma)
                    * (cast::<T>(2.0) * c.abs() + T::one() / gamma),
                rhs: cast::<T>(2.0) * c.abs() + cast::<T>(1.5),
            });
            inequalities.push(IneqCheck {
                id: "neighbor-coupling".into(),
                lhs: (n_agents - T::one()) * *c_bar * (*lambda_abs + T::one()) * epsilon,
                rhs: cast::<T>(0.25) * csc_abs * gamma.powi(3),
            });
        }
        ConstantSet::HighOrder {
            b_star,
            c_star,
            lambda_max,
            big_lambda,
            c_bar,
            ..
        } => {
            let m = set.m;
            let sqrt_eps = epsilon.sqrt();
            if strengthened {
                // Single compact dominance check replacing the per-eigenvalue
                // family. The cross-root products are lower-bounded by
                // q_min = min_n (n−1)!(m−2−n)!.
                let mut q_min = T::one();
                if m >= 3 {
                    let mut best: Option<i64> = None;
                    for n in 1..=(m - 2) as u32 {
                        let v = factorial(n - 1).unwrap_or(i64::MAX)
                            * factorial((m as u32 - 2) - n).unwrap_or(i64::MAX);
                        best = Some(best.map_or(v, |b: i64| b.min(v)));
                    }
                    if let Some(b) = best {
                        q_min = cast::<T>(b as f64);
                    }
                }
                let mut double_sum = T::zero();
                for j in 1..=m.saturating_sub(2) {
                    for n in 1..=m - 2 {
                        double_sum +=
                            cast::<T>(n as f64).powi(j as i32 - 1) / q_min;
                    }
                }
                let lambda2 = network.lambda2_real.unwrap_or(T::zero());
                inequalities.push(IneqCheck {
                    id: "pair-dominance-strong".into(),
                    lhs: cast::<T>(5.0)
                        * *c_star
                        * (double_sum + T::one() + *lambda_max)
                        * sqrt_eps,
                    rhs: cast::<T>(3.0) * (lambda2 / cast::<T>(2.0)).sqrt(),
                });
            } else {
                for (idx, ev) in network.eigenvalues.iter().enumerate() {
                    if ev.modulus() <= zero_tol {
                        continue;
                    }
                    let lam = ev.re;
                    let mut off_sum = T::zero();
                    for j in 1..=m {
                        if j == m - 1 {
                            continue;
                        }
                        off_sum += spectral::power_bound_coefficient(set, lam, j);
                    }
                    inequalities.push(IneqCheck {
                        id: format!("pair-dominance-{}", idx + 1),
                        lhs: cast::<T>(2.0) * *c_star * off_sum * sqrt_eps,
                        rhs: spectral::power_bound_coefficient(set, lam, m - 1),
                    });
                }
            }
            let l_sum = model.averaging.iter().fold(T::zero(), |a, v| a + v.abs());
            inequalities.push(IneqCheck {
                id: "window-sum".into(),
                lhs: l_sum / gamma.powi(2 * m as i32),
                rhs: crate::model::l_abs_sum_bound(m, set.theta) + cast::<T>(0.5),
            });
            inequalities.push(IneqCheck {
                id: "input-coupling".into(),
                lhs: cast::<T>((2 * m - 1) as f64)
                    * *b_star
                    * (n_agents - T::one())
                    * *big_lambda
                    * *c_bar
                    * sqrt_eps,
                rhs: gamma.powi(4 * m as i32 - 1) / cast::<T>(8.0),
            });
        }
    }

    let mut radius = Vec::new();
    for ev in &network.eigenvalues {
        if ev.modulus() <= zero_tol {
            continue;
        }
        let rho = spectral::graded_radius(set, *ev, epsilon);
        radius.push(RadiusCheck {
            lambda: *ev,
            rho,
            bound: T::one() - epsilon / cast::<T>(2.0),
        });
    }

    FeasibilityReport {
        epsilon,
        gamma,
        inequalities,
        radius,
    }
}

/// Halving search for a feasible ε starting from 0.1 (at most 60 halvings),
/// with γ = 1 − ε/4 at each probe.
pub fn select_epsilon<T: Scalar>(
    model: &SystemModel<T>,
    network: &Network<T>,
    set: &CoeffSet<T>,
    constants: &ConstantSet<T>,
    strengthened: bool,
) -> Result<(T, FeasibilityReport<T>)> {
    let mut epsilon = cast::<T>(0.1);
    let mut last: Option<FeasibilityReport<T>> = None;
    for _ in 0..=60 {
        let gamma = T::one() - epsilon / cast::<T>(4.0);
        let report = evaluate_epsilon(model, network, set, constants, epsilon, gamma, strengthened);
        if report.feasible() {
            return Ok((epsilon, report));
        }
        last = Some(report);
        epsilon /= cast::<T>(2.0);
    }
    let failing = last
        .and_then(|r| r.first_failing())
        .unwrap_or_else(|| "unknown".into());
    Err(Error::Infeasible(format!(
        "no feasible epsilon after 60 halvings from 0.1; first failing check: {failing}"
    )))
}

/// Minimum zoom scale: max(4C*/(3γ), C_δ*) for first-order agents,
/// (√2+1)^{2m}·max(C*, C_δ*) for higher orders.
pub fn p0_minimum<T: Scalar>(m: usize, gamma: T, c_star: T, c_delta_star: T) -> Result<T> {
    if c_star <= T::zero() || c_delta_star <= T::zero() {
        return Err(Error::InvalidParameter {
            name: "initial-state bounds",
            reason: "C* and C_delta* must be positive".into(),
        });
    }
    if gamma <= T::zero() || gamma >= T::one() {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: "scaling decay must lie in (0, 1)".into(),
        });
    }
    Ok(if m == 1 {
        (cast::<T>(4.0) * c_star / (cast::<T>(3.0) * gamma)).max(c_delta_star)
    } else {
        (cast::<T>(2.0).sqrt() + T::one()).powi(2 * m as i32) * c_star.max(c_delta_star)
    })
}

/// Options steering [`design_plan`].
#[derive(Clone, Debug, Default)]
pub struct PlanOptions<T: Scalar> {
    /// Design parameter; defaults per [`default_h`].
    pub h: Option<T>,
    /// Forced ε: skips the halving search. The radius gate is still verified;
    /// inequality margins are reported but not enforced (they are sufficient
    /// conditions, far from necessary).
    pub epsilon: Option<T>,
    /// Forced γ; defaults to 1 − ε/4.
    pub gamma: Option<T>,
    /// Use the compact dominance inequality instead of the per-eigenvalue
    /// family (m ≥ 2 search only).
    pub strengthened: bool,
    /// Initial-state bound for the p₀ formula.
    pub c_star: Option<T>,
    /// Initial-disagreement bound for the p₀ formula.
    pub c_delta_star: Option<T>,
}

/// Complete gain design for one model/network pair.
#[derive(Clone, Debug)]
pub struct GainPlan<T: Scalar> {
    pub m: usize,
    pub theta: T,
    pub h: T,
    pub c: DVector<T>,
    pub k: DVector<T>,
    pub epsilon: T,
    pub gamma: T,
    /// Present when both initial-state bounds were supplied.
    pub p0_min: Option<T>,
    pub r_m: Option<T>,
    pub slope_offset: Option<T>,
    pub roots: Vec<Complex<T>>,
    pub constants: ConstantSet<T>,
    pub feasibility: FeasibilityReport<T>,
    pub forced_epsilon: bool,
}

/// Assembles coefficients, constants, ε (searched or forced), γ, gains and
/// the minimum p₀ into one plan.
pub fn design_plan<T: Scalar>(
    model: &SystemModel<T>,
    network: &Network<T>,
    opts: &PlanOptions<T>,
) -> Result<GainPlan<T>> {
    network.supports_high_order(model.m)?;
    let h = match opts.h {
        Some(h) => h,
        None => default_h(model.m, network)?,
    };
    let set = select_coefficients(model.m, model.theta, h)?;
    let constants = derive_constants(model, network, &set)?;

    let (epsilon, feasibility, forced) = match opts.epsilon {
        Some(eps) => {
            if eps <= T::zero() || eps >= T::one() {
                return Err(Error::InvalidParameter {
                    name: "epsilon",
                    reason: "must lie in (0, 1)".into(),
                });
            }
            let gamma = opts.gamma.unwrap_or(T::one() - eps / cast::<T>(4.0));
            let report =
                evaluate_epsilon(model, network, &set, &constants, eps, gamma, opts.strengthened);
            if !report.radius_pass() {
                return Err(Error::Infeasible(format!(
                    "forced epsilon {} fails the spectral-radius gate",
                    eps.to_f64().unwrap_or(f64::NAN)
                )));
            }
            (eps, report, true)
        }
        None => {
            let (eps, report) =
                select_epsilon(model, network, &set, &constants, opts.strengthened)?;
            (eps, report, false)
        }
    };
    let gamma = opts
        .gamma
        .unwrap_or(T::one() - epsilon / cast::<T>(4.0));
    let k = grade_gains(&set, epsilon);
    let p0_min = match (opts.c_star, opts.c_delta_star) {
        (Some(cs), Some(cd)) => Some(p0_minimum(model.m, gamma, cs, cd)?),
        _ => None,
    };

    Ok(GainPlan {
        m: set.m,
        theta: set.theta,
        h: set.h,
        c: set.c.clone(),
        k,
        epsilon,
        gamma,
        p0_min,
        r_m: set.r_m,
        slope_offset: set.slope_offset,
        roots: set.roots,
        constants,
        feasibility,
        forced_epsilon: forced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_system;
    use crate::network::{build_network, weights_from_edges};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3};

    #[test]
    fn first_order_recipe() {
        let set = select_coefficients(1, FRAC_PI_2, 1.0f64).unwrap();
        assert_relative_eq!(set.c[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(set.c[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn second_order_recipe_reference_values() {
        // h = 0.8299 at θ = π/3: c ≈ [−0.86603, −0.5, −5.04013, 2.90996].
        let set = select_coefficients(2, FRAC_PI_3, 0.8299f64).unwrap();
        assert_relative_eq!(set.c[0], -0.866025403784, epsilon = 1e-9);
        assert_relative_eq!(set.c[1], -0.5, epsilon = 1e-9);
        assert_relative_eq!(set.c[2], -5.04013, epsilon = 1e-4);
        assert_relative_eq!(set.c[3], 2.90996, epsilon = 1e-4);
        // R₂ = −2/h both ways.
        assert_relative_eq!(set.r_m.unwrap(), -2.0 / 0.8299, epsilon = 1e-10);
    }

    #[test]
    fn higher_order_polynomial_structure() {
        for m in 3..=6usize {
            let th = 0.9f64;
            let set = select_coefficients(m, th, 0.7).unwrap();
            // Second pair from the top is always (−sin2θ, cos2θ).
            assert_relative_eq!(set.c[2 * m - 4], -(2.0 * th).sin(), epsilon = 1e-12);
            assert_relative_eq!(set.c[2 * m - 3], (2.0 * th).cos(), epsilon = 1e-12);
            // Coefficient polynomial vanishes at every declared root.
            for root in &set.roots {
                let mut val = Complex::new(0.0, 0.0);
                let mut pw = Complex::new(1.0, 0.0);
                for j in 1..m {
                    let w = Complex::new(set.c[2 * j - 1], -set.c[2 * j - 2]);
                    val += w * pw;
                    pw *= *root;
                }
                assert!(val.modulus() <= 1e-9, "m={m}: |p(ϑ)| = {:e}", val.modulus());
            }
            // R_m = −(H+2)/h via the construction.
            let h_big = ((m - 1) * (m - 2)) as f64 / 2.0;
            assert_relative_eq!(set.r_m.unwrap(), -(h_big + 2.0) / 0.7, epsilon = 1e-10);
            assert_relative_eq!(set.slope_offset.unwrap(), h_big, epsilon = 1e-12);
        }
    }

    #[test]
    fn grading_pattern() {
        let set = select_coefficients(3, 1.1f64, 0.5).unwrap();
        let eps = 0.01;
        let k = grade_gains(&set, eps);
        for j in 1..=3usize {
            let expect = if j < 3 { eps.powi((3 - j) as i32) } else { eps };
            assert_relative_eq!(k[2 * j - 2] / set.c[2 * j - 2], expect, epsilon = 1e-12);
            assert_relative_eq!(k[2 * j - 1] / set.c[2 * j - 1], expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn p0_values() {
        // (√2+1)⁴·0.29 ≈ 9.85, consistent with a round 10.
        let p = p0_minimum(2, 0.9975f64, 0.29, 0.29).unwrap();
        assert!((p - 9.853).abs() < 0.01, "p0 = {p}");
        assert_relative_eq!(p0_minimum(1, 1.0 - 1e-12, 3.0, 1.0).unwrap(), 4.0, epsilon = 1e-6);
        assert!(p0_minimum(1, 0.99, 0.0, 1.0).is_err());
    }

    #[test]
    fn two_node_first_order_search_feasible() {
        // Two nodes, λ₂ = 2, θ = π/2, default h = 1.
        let w = weights_from_edges(Some(2), &[(1, 2, 1.0)], false).unwrap();
        let net = build_network(w, false).unwrap();
        let model = build_system(1, FRAC_PI_2).unwrap();
        let h = default_h(1, &net).unwrap();
        assert_relative_eq!(h, 1.0, epsilon = 1e-12);
        let set = select_coefficients(1, FRAC_PI_2, h).unwrap();
        let consts = derive_constants(&model, &net, &set).unwrap();
        let (eps, report) = select_epsilon(&model, &net, &set, &consts, false).unwrap();
        assert!(report.feasible());
        assert!(eps > 0.0 && eps < 0.1);
        for rc in &report.radius {
            assert!(rc.rho < 1.0 - eps / 2.0);
        }
    }

    #[test]
    fn forced_epsilon_keeps_radius_gate() {
        let (net, _) = crate::network::find_connected_graph::<f64>(5, 0.5, 2, false).unwrap();
        let model = build_system(2, FRAC_PI_3).unwrap();
        let opts = PlanOptions {
            epsilon: Some(0.01),
            ..Default::default()
        };
        let plan = design_plan(&model, &net, &opts).unwrap();
        assert!(plan.forced_epsilon);
        assert!(plan.feasibility.radius_pass());
        assert_relative_eq!(plan.gamma, 0.9975, epsilon = 1e-12);
        // Inequality margins are reported even though not enforced here.
        assert!(!plan.feasibility.inequalities.is_empty());
    }

    #[test]
    fn infeasible_epsilon_rejected() {
        let (net, _) = crate::network::find_connected_graph::<f64>(5, 0.5, 2, false).unwrap();
        let model = build_system(2, FRAC_PI_3).unwrap();
        let opts = PlanOptions {
            epsilon: Some(0.9),
            ..Default::default()
        };
        assert!(matches!(
            design_plan(&model, &net, &opts),
            Err(Error::Infeasible(_)) | Err(Error::InvalidParameter { .. })
        ));
    }
}
