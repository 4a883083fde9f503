//! Verification subcommands: each prints its findings and returns exit code
//! 0 only if every gate it is responsible for holds.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use anyhow::Result;
use qosc::nalgebra::Complex;

use qosc::gains::select_coefficients;
use qosc::model::{build_system, l_abs_sum_bound, l_closed_form, l_direct_refined};
use qosc::quantizer::{bits_for_levels, minimal_levels};
use qosc::spectral::{power_bound_check, radius_expansion_check};

use crate::config::Config;

/// Window-coefficient closed form against the direct recovery-row
/// combination, plus the absolute-sum identity, over an angle grid clear of
/// the degenerate sin θ = 0 axis.
pub fn verify_lemma3(m_max: usize, theta_steps: usize) -> Result<i32> {
    let lo = 0.05f64.asin();
    let hi = PI - lo;
    let mut failures = 0usize;
    for m in 1..=m_max {
        let mut worst = 0.0f64;
        for i in 0..theta_steps {
            let theta = if theta_steps == 1 {
                FRAC_PI_2
            } else {
                lo + (hi - lo) * i as f64 / (theta_steps - 1) as f64
            };
            let direct = l_direct_refined(m, theta)?;
            let closed = l_closed_form::<f64>(m, theta)?;
            let rel = (&direct - &closed).amax() / closed.amax();
            let sum: f64 = closed.iter().map(|v| v.abs()).sum();
            let bound = l_abs_sum_bound(m, theta);
            let sum_rel = (sum - bound).abs() / bound;
            worst = worst.max(rel).max(sum_rel);
            if rel > 1e-9 || sum_rel > 1e-9 {
                failures += 1;
                eprintln!(
                    "verify-lemma3: m={m} theta={theta:.6}: closed-form deviation {rel:.3e}, sum deviation {sum_rel:.3e}"
                );
            }
        }
        println!("m={m}: {theta_steps} angles, worst relative deviation {worst:.3e}");
    }
    if failures > 0 {
        eprintln!("verify-lemma3: {failures} grid points outside 1e-9");
        return Ok(1);
    }
    println!("verify-lemma3: ok");
    Ok(0)
}

/// Spectral-radius expansion report; CSV columns
/// m,theta,lambda,epsilon,rho,predicted_rho,slope_fit,predicted_slope.
pub fn spectral_check(config: &Path) -> Result<i32> {
    let cfg = Config::load(config)?;
    let m = cfg.get_usize("system", "m")?;
    let theta = cfg.get_theta("system", "theta")?;
    let lambdas = cfg.get_f64_list("spectral", "lambdas")?;
    let probes = cfg.get_f64_list_or("spectral", "probes", &[1e-3, 3e-4, 1e-4, 3e-5])?;
    let h_fixed = cfg.get_auto_f64("spectral", "h")?;

    println!("m,theta,lambda,epsilon,rho,predicted_rho,slope_fit,predicted_slope");
    let mut failures = 0usize;
    for &lambda in &lambdas {
        let h = h_fixed.unwrap_or(lambda);
        let set = select_coefficients(m, theta, h)?;
        let report = radius_expansion_check(&set, Complex::new(lambda, 0.0), &probes)?;
        for (&eps, &rho) in report.epsilons.iter().zip(report.radii.iter()) {
            let predicted_rho = 1.0 + report.predicted_slope * eps;
            println!(
                "{m},{theta},{lambda},{eps},{rho},{predicted_rho},{},{}",
                report.slope_fit, report.predicted_slope
            );
            if !(rho < 1.0 - eps / 2.0) {
                failures += 1;
                eprintln!(
                    "spectral-check: lambda={lambda} epsilon={eps}: rho {rho:.9} fails the 1 - eps/2 gate"
                );
            }
        }
        let rel = (report.slope_fit - report.predicted_slope).abs() / report.predicted_slope.abs();
        if rel > 0.10 {
            failures += 1;
            eprintln!(
                "spectral-check: lambda={lambda}: fitted slope {:.6} vs predicted {:.6} ({:.1}% off)",
                report.slope_fit,
                report.predicted_slope,
                100.0 * rel
            );
        }
    }
    Ok(if failures > 0 { 1 } else { 0 })
}

/// Matrix-power bounds for the balanced closed loop; reports the worst
/// observed/bound ratio per coordinate pair and gates at the documented 1.2
/// slack.
pub fn power_bounds(config: &Path) -> Result<i32> {
    let cfg = Config::load(config)?;
    let m = cfg.get_usize("system", "m")?;
    let theta = cfg.get_theta("system", "theta")?;
    let lambda = cfg.get_f64("power", "lambda")?;
    let h = cfg.get_auto_f64("power", "h")?.unwrap_or(lambda);
    let epsilon = cfg.get_f64("power", "epsilon")?;
    let s_max = cfg.get_usize_or("power", "s_max", 2000)?;
    let trials = cfg.get_usize_or("power", "trials", 100)?;
    let seed = cfg.get_u64_or("power", "seed", 0)?;

    let model = build_system(m, theta)?;
    let set = select_coefficients(m, theta, h)?;
    let ratios = power_bound_check(&model, &set, lambda, epsilon, s_max, trials, seed)?;
    let mut failures = 0usize;
    for (j, r) in ratios.iter().enumerate() {
        println!("pair_{} = {}", j + 1, r);
        if !(*r <= 1.2) {
            failures += 1;
            eprintln!("power-bounds: pair {} ratio {r:.4} exceeds 1.2", j + 1);
        }
    }
    if failures == 0 {
        println!("power-bounds: ok");
    }
    Ok(if failures > 0 { 1 } else { 0 })
}

/// Minimal steady alphabet across orders and angles; CSV columns
/// m,theta,m_steady,bits, with the m ≤ bits ≤ 2m bracket enforced.
pub fn rate_table(m_max: usize) -> Result<i32> {
    let mut thetas: Vec<f64> = (1..=98).map(|k| PI * k as f64 / 99.0).collect();
    thetas.push(FRAC_PI_2);
    thetas.push(0.92f64.acos());
    thetas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thetas.dedup();

    println!("m,theta,m_steady,bits");
    let mut failures = 0usize;
    for m in 1..=m_max {
        for &theta in &thetas {
            let levels = minimal_levels::<f64>(m, theta)?;
            let bits = bits_for_levels(levels) as usize;
            println!("{m},{theta},{levels},{bits}");
            if bits < m || bits > 2 * m {
                failures += 1;
                eprintln!("rate-table: m={m} theta={theta:.6}: bits {bits} outside [{m}, {}]", 2 * m);
            }
        }
    }
    if failures > 0 {
        return Ok(1);
    }
    Ok(0)
}
