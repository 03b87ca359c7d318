//! The excess-risk bound for the selected iterate, evaluated term by term.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::Radius;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: usize,
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub t: usize,
    pub eps_gd: f64,
    pub r_gd: Radius,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub tau_n: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub tau_0: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub tau_1: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub b_eff: f64,
    /// `max{4, ρ, sup‖Ū∞‖}`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub r: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub delta: f64,
    /// `K_bin(p_y, φ(f(·; Ū∞)))`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub k_bin: f64,
    /// `(e^{τ1+τ0} − 1)·R(Ū∞)`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub reference_error: f64,
    /// `e^{τ1} R² ε_gd`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub optimization_error: f64,
    /// `e^{τ1} (ρB + R) τ_n`.
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub generalization_error: f64,
    #[serde(with = "crate::serde_ext::ext_f64")]
    pub total: f64,
    /// `total > ln 2`.
    pub vacuous: bool,
    /// `τ1 > 2`, outside the range where the bound is stated.
    pub tau_1_out_of_range: bool,
}

/// Evaluates, in order,
///
/// * `τ_n = 80(d ln(e m² d³/δ))^{3/2}/√n`
/// * `τ_0 = 6ρd ln(e m d²/δ) + 20R√(d ln(e m² d³/δ))/m^{1/4}`
/// * `B = min{R_gd, 3R/ρ + (4e/ρ)√t √(e^{τ0}·r₀ + Rτ_n)}` with `r₀` the
///   empirical reference risk when given, else `ref_risk`
/// * `τ_1 = 100ρB^{4/3}√(d ln(e n m² d³/δ))/m^{1/6}`
///
/// and the total `K_bin + (e^{τ1+τ0}−1)R(Ū∞) + e^{τ1}R²ε_gd + e^{τ1}(ρB+R)τ_n`.
pub fn compute_bound_terms(
    cfg: &BoundInputs,
    r_sup: f64,
    ref_risk: f64,
    ref_kl: f64,
    emp_ref_risk: Option<f64>,
) -> Result<BoundTerms> {
    if cfg.m == 0 || cfg.n == 0 || cfg.d == 0 || cfg.t == 0 {
        return Err(Error::invalid("m, n, d and t must be positive"));
    }
    if !(cfg.rho > 0.0 && cfg.eps_gd > 0.0) {
        return Err(Error::invalid("rho and eps_gd must be positive"));
    }
    if !(cfg.delta > 0.0 && cfg.delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    if !(r_sup >= 0.0 && ref_risk >= 0.0 && ref_kl >= 0.0) || emp_ref_risk.is_some_and(|r| !(r >= 0.0)) {
        return Err(Error::invalid("norm bound and risks must be nonnegative"));
    }
    let (m, n, d, rho, delta) = (cfg.m as f64, cfg.n as f64, cfg.d as f64, cfg.rho, cfg.delta);
    let r = 4f64.max(rho).max(r_sup);
    let log_m2d3 = (E * m * m * d.powi(3) / delta).ln();
    let tau_n = 80.0 * (d * log_m2d3).powf(1.5) / n.sqrt();
    let tau_0 = 6.0 * rho * d * (E * m * d * d / delta).ln() + 20.0 * r * (d * log_m2d3).sqrt() / m.powf(0.25);
    let r0 = emp_ref_risk.unwrap_or(ref_risk);
    let b_formula = 3.0 * r / rho + (4.0 * E / rho) * (cfg.t as f64).sqrt() * (tau_0.exp() * r0 + r * tau_n).sqrt();
    let b_eff = b_formula.min(cfg.r_gd.value());
    let tau_1 = 100.0 * rho * b_eff.powf(4.0 / 3.0) * (d * (E * n * m * m * d.powi(3) / delta).ln()).sqrt() / m.powf(1.0 / 6.0);
    let grow = tau_1.exp();
    let reference_error = if ref_risk == 0.0 {
        0.0
    } else {
        (tau_1 + tau_0).exp_m1() * ref_risk
    };
    let optimization_error = grow * r * r * cfg.eps_gd;
    let generalization_error = grow * (rho * b_eff + r) * tau_n;
    let total = ref_kl + reference_error + optimization_error + generalization_error;
    Ok(BoundTerms {
        tau_n,
        tau_0,
        tau_1,
        b_eff,
        r,
        delta,
        k_bin: ref_kl,
        reference_error,
        optimization_error,
        generalization_error,
        total,
        vacuous: !(total <= LN_2),
        tau_1_out_of_range: tau_1 > 2.0,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn desk() -> BoundInputs {
        BoundInputs {
            m: 4096,
            n: 4096,
            d: 2,
            rho: 4096f64.powf(-0.125),
            t: 8,
            eps_gd: 1.0 / 64.0,
            r_gd: Radius::Infinite,
            delta: 0.05,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn pinned_desk_config() {
        let b = compute_bound_terms(&desk(), 4.0 * 2f64.sqrt(), 0.55, 0.0, None).unwrap();
        assert!(rel(b.r, 5.6568542494923801952) < 1e-15);
        assert!(rel(b.tau_n, 382.64933557056872227) < 1e-12);
        assert!(rel(b.tau_0, 153.43480058546715965) < 1e-12);
        assert!(rel(b.b_eff, 1.3414343344850905103e35) < 1e-12);
        assert!(rel(b.tau_1, 4.7813378702089108073e48) < 1e-12);
        assert!(b.vacuous && b.tau_1_out_of_range);
        assert_eq!(b.total, f64::INFINITY);
    }

    #[test]
    fn small_radius_takes_min_branch() {
        let mut c = desk();
        c.r_gd = Radius::Finite(1e-3);
        let b = compute_bound_terms(&c, 1.0, 0.5, 0.0, None).unwrap();
        assert_eq!(b.b_eff, 1e-3);
    }

    #[test]
    fn monotone_in_width() {
        let mut prev: Option<BoundTerms> = None;
        for k in 8..=16 {
            let mut c = desk();
            c.m = 1 << k;
            c.r_gd = Radius::Finite(2.0);
            let b = compute_bound_terms(&c, 1.0, 0.5, 0.0, None).unwrap();
            let width_part = b.tau_0 - 6.0 * c.rho * 2.0 * (E * c.m as f64 * 4.0 / 0.05).ln();
            if let Some(p) = prev {
                let p_width = p.tau_0 - 6.0 * c.rho * 2.0 * (E * (c.m / 2) as f64 * 4.0 / 0.05).ln();
                assert!(b.tau_1 < p.tau_1);
                assert!(width_part < p_width);
            }
            prev = Some(b);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut c = desk();
        c.delta = 1.0;
        assert!(compute_bound_terms(&c, 1.0, 0.5, 0.0, None).is_err());
        assert!(compute_bound_terms(&desk(), 1.0, -0.5, 0.0, None).is_err());
    }
}
