//! Logistic loss, sigmoid, binary KL and the calibration chain.
//!
//! For a predictor `f` and conditional model `p_y`, the excess logistic risk
//! equals the binary KL between `p_y` and `φ(f)`, and bounds the L2
//! calibration error and the excess zero-one risk:
//!
//! ```text
//! ½ (R_z(f) − R̄_z)²  ≤  2 ∫ (φ(f) − p_y)² dμ  ≤  K_bin(p_y, φ(f))  =  R(f) − R̄
//! ```
//!
//! On a discrete weighted point set every member of the chain is an exact sum,
//! so [`RiskBreakdown::chain_violation`] can check it to rounding precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CondProb(f64);

impl CondProb {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(CondProb(p))
    }

    /// Clamps into `[0, 1]`; NaN maps to 1/2.
    pub fn clamped(p: f64) -> Self {
        if p.is_nan() {
            CondProb(0.5)
        } else {
            CondProb(p.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

/// `ℓ(r) = ln(1 + e^{−r})`.
#[inline]
pub fn logistic_loss(margin: f64) -> f64 {
    if margin < -30.0 {
        -margin + margin.exp().ln_1p()
    } else {
        (-margin).exp().ln_1p()
    }
}

/// `ℓ'(r) = −φ(−r)`.
#[inline]
pub fn logistic_loss_derivative(margin: f64) -> f64 {
    -sigmoid(-margin)
}

/// `φ(r) = 1 / (1 + e^{−r})`.
#[inline]
pub fn sigmoid(r: f64) -> f64 {
    if r >= 0.0 {
        1.0 / (1.0 + (-r).exp())
    } else {
        let e = r.exp();
        e / (1.0 + e)
    }
}

/// Log-odds `ln(p / (1 − p))`, the pointwise Bayes-optimal logistic predictor.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `sgn(r) = 2·1[r ≥ 0] − 1`, so `sgn(0) = +1`.
#[inline]
pub fn sgn(r: f64) -> f64 {
    if r >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `x ln x` with `0 ln 0 = 0`.
#[inline]
fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Binary entropy in nats; the pointwise Bayes logistic risk at `p`.
pub fn binary_entropy(p: f64) -> f64 {
    -(xlnx(p) + xlnx(1.0 - p))
}

/// Returns `(ℓ(−a)/ℓ(−b), e^{a−b})` for `a ≥ b`; the first never exceeds the second.
pub fn multiplicative_ratio_bound(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a >= b) {
        return Err(Error::invalid(format!("requires a >= b, got a={a}, b={b}")));
    }
    Ok((logistic_loss(-a) / logistic_loss(-b), (a - b).exp()))
}

/// Binary KL divergence `p ln(p/q) + (1−p) ln((1−p)/(1−q))`.
///
/// Returns `None` for an infinite divergence, i.e. `q ∈ {0, 1}` while `p`
/// puts mass on the other outcome.
pub fn binary_kl(p: CondProb, q: CondProb) -> Option<f64> {
    let (p, q) = (p.get(), q.get());
    let term = |a: f64, b: f64| -> Option<f64> {
        if a == 0.0 {
            Some(0.0)
        } else if b == 0.0 {
            None
        } else {
            Some(a * (a / b).ln())
        }
    };
    let kl = term(p, q)? + term(1.0 - p, 1.0 - q)?;
    Some(kl.max(0.0))
}

/// Binary KL between `p` and `φ(margin)`, evaluated through log-probabilities
/// `ln φ(r) = −ℓ(r)` so it stays finite for any finite margin.
pub fn binary_kl_logit(p: f64, margin: f64) -> f64 {
    let pos = if p == 0.0 { 0.0 } else { p * (p.ln() + logistic_loss(margin)) };
    let q = 1.0 - p;
    let neg = if q == 0.0 { 0.0 } else { q * (q.ln() + logistic_loss(-margin)) };
    (pos + neg).max(0.0)
}

/// One point of a weighted evaluation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPrediction {
    pub margin: f64,
    pub p_y: CondProb,
    pub weight: f64,
}

/// Risk quantities of a predictor against a known conditional model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub logistic_risk: f64,
    pub excess_logistic: f64,
    pub binary_kl: f64,
    pub l2_calibration_sq: f64,
    pub zero_one_risk: f64,
    pub excess_zero_one: f64,
}

pub const WEIGHT_SUM_TOL: f64 = 1e-9;

pub fn risk_breakdown(points: &[WeightedPrediction]) -> Result<RiskBreakdown> {
    let sum: f64 = points.iter().map(|p| p.weight).sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL || points.iter().any(|p| p.weight < 0.0) {
        return Err(Error::WeightsNotNormalized { sum });
    }

    let mut out = RiskBreakdown {
        logistic_risk: 0.0,
        excess_logistic: 0.0,
        binary_kl: 0.0,
        l2_calibration_sq: 0.0,
        zero_one_risk: 0.0,
        excess_zero_one: 0.0,
    };
    let mut bayes = 0.0;
    for pt in points {
        let (f, p, w) = (pt.margin, pt.p_y.get(), pt.weight);
        out.logistic_risk += w * (p * logistic_loss(f) + (1.0 - p) * logistic_loss(-f));
        bayes += w * binary_entropy(p);
        out.binary_kl += w * binary_kl_logit(p, f);
        let d = sigmoid(f) - p;
        out.l2_calibration_sq += w * d * d;
        let wrong = if sgn(f) > 0.0 { 1.0 - p } else { p };
        out.zero_one_risk += w * wrong;
        if sgn(f) != sgn(2.0 * p - 1.0) {
            out.excess_zero_one += w * (2.0 * p - 1.0).abs();
        }
    }
    out.excess_logistic = out.logistic_risk - bayes;
    Ok(out)
}

/// Bayes risks `(R̄, R̄_z)` of a weighted set of conditional probabilities.
pub fn bayes_risks(points: &[(f64, f64)]) -> (f64, f64) {
    points.iter().fold((0.0, 0.0), |(r, z), &(p, w)| {
        (r + w * binary_entropy(p), z + w * p.min(1.0 - p))
    })
}

impl RiskBreakdown {
    /// Largest violation of the chain
    /// `½ excess_z² ≤ 2 l2 ≤ binary_kl = excess_logistic`; `≤ 0` when it holds exactly.
    pub fn chain_violation(&self) -> f64 {
        let a = 0.5 * self.excess_zero_one * self.excess_zero_one - 2.0 * self.l2_calibration_sq;
        let b = 2.0 * self.l2_calibration_sq - self.binary_kl;
        let c = (self.binary_kl - self.excess_logistic).abs();
        a.max(b).max(c)
    }

    pub fn chain_holds(&self, tol: f64) -> bool {
        self.chain_violation() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn cp(p: f64) -> CondProb {
        CondProb::new(p).unwrap()
    }

    fn single(margin: f64, p: f64) -> RiskBreakdown {
        risk_breakdown(&[WeightedPrediction {
            margin,
            p_y: cp(p),
            weight: 1.0,
        }])
        .unwrap()
    }

    #[test]
    fn logistic_loss_values() {
        assert_eq!(logistic_loss(0.0), LN_2);
        let v = logistic_loss(50.0);
        assert!(v > 0.0 && v < 1e-20);
        assert!((logistic_loss(-1.0) - 1.313_261_687_518_222_8).abs() < 1e-15);
        assert!(logistic_loss(-1e4).is_finite());
        assert!((logistic_loss(-1e4) - 1e4).abs() < 1e-9);
        // both branches agree across the switch point
        assert!((logistic_loss(-30.0) - logistic_loss(-30.000_000_001)).abs() < 1e-8);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        for r in [-40.0, -3.3, -1e-3, 0.7, 12.0, 700.0] {
            assert!((sigmoid(r) + sigmoid(-r) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ratio_bound_examples() {
        assert_eq!(multiplicative_ratio_bound(0.0, 0.0).unwrap(), (1.0, 1.0));
        let (r, b) = multiplicative_ratio_bound(1.0, 0.0).unwrap();
        assert!((r - 1.894_636_123_972_011_5).abs() < 1e-12);
        assert!((b - std::f64::consts::E).abs() < 1e-15);
        let (r, b) = multiplicative_ratio_bound(5.0, -5.0).unwrap();
        assert!((r - 745.562_997_453_115_6).abs() < 1e-9);
        assert!((b - 22_026.465_794_806_718).abs() < 1e-8);
        assert!(multiplicative_ratio_bound(-1.0, 0.0).is_err());
    }

    #[test]
    fn binary_kl_examples() {
        assert_eq!(binary_kl(cp(0.3), cp(0.3)), Some(0.0));
        let v = binary_kl(cp(0.75), cp(0.5)).unwrap();
        assert!((v - 0.130_812_035_941_136_97).abs() < 1e-15);
        assert!((binary_kl(cp(1.0), cp(0.5)).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(binary_kl(cp(0.5), cp(1.0)), None);
        assert_eq!(binary_kl(cp(0.0), cp(0.0)), Some(0.0));
        assert_eq!(binary_kl(cp(1.0), cp(1.0)), Some(0.0));
        assert!(CondProb::new(1.2).is_err());
    }

    #[test]
    fn logit_form_matches_direct_form() {
        for &p in &[0.0, 0.1, 0.5, 0.9, 1.0] {
            for &f in &[-4.0, -0.2, 0.0, 1.3, 6.0] {
                let direct = binary_kl(cp(p), cp(sigmoid(f))).unwrap();
                assert!((direct - binary_kl_logit(p, f)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn breakdown_examples() {
        let b = single(0.0, 0.5);
        assert!((b.logistic_risk - LN_2).abs() < 1e-15);
        assert!(b.excess_logistic.abs() < 1e-15);
        assert_eq!(b.l2_calibration_sq, 0.0);

        let b = single(0.0, 0.75);
        assert!((b.excess_logistic - 0.130_812_035_941_136_97).abs() < 1e-12);
        assert_eq!(b.excess_zero_one, 0.0);

        let b = single(-2.0, 0.75);
        assert!((b.excess_zero_one - 0.5).abs() < 1e-15);
        assert!((b.zero_one_risk - 0.75).abs() < 1e-15);
    }

    #[test]
    fn breakdown_rejects_unnormalized_weights() {
        let pts = [WeightedPrediction {
            margin: 0.0,
            p_y: cp(0.5),
            weight: 0.9,
        }];
        assert!(matches!(
            risk_breakdown(&pts),
            Err(Error::WeightsNotNormalized { .. })
        ));
    }

    #[test]
    fn bayes_predictor_has_zero_excess() {
        for &p in &[0.05, 0.3, 0.5, 0.75, 0.99] {
            let b = single(logit(p), p);
            assert!(b.excess_logistic.abs() < 1e-14);
            assert!(b.l2_calibration_sq < 1e-30);
            assert_eq!(b.excess_zero_one, 0.0);
        }
    }

    #[test]
    fn pinsker_on_grid() {
        for i in 1..100 {
            for k in 1..100 {
                let (p, q) = (i as f64 / 100.0, k as f64 / 100.0);
                let kl = binary_kl(cp(p), cp(q)).unwrap();
                assert!(kl >= 2.0 * (p - q) * (p - q) - 1e-12);
                if i == k {
                    assert!(kl.abs() < 1e-12);
                } else {
                    assert!(kl > 1e-12);
                }
            }
        }
    }

    #[test]
    fn loss_is_decreasing_convex_and_lipschitz() {
        let h = 1e-4;
        let mut prev_slope = -1.0 - 1e-9;
        for i in -400..=400 {
            let r = i as f64 * 0.05;
            let slope = (logistic_loss(r + h) - logistic_loss(r - h)) / (2.0 * h);
            assert!((-1.0 - 1e-9..=1e-12).contains(&slope), "slope {slope} at {r}");
            assert!(slope >= prev_slope - 1e-9);
            prev_slope = slope;
        }
    }

    #[test]
    fn sigmoid_is_negative_loss_derivative() {
        let h = 1e-5;
        for i in -100..=100 {
            let r = i as f64 * 0.13;
            let fd = (logistic_loss(-(r + h)) - logistic_loss(-(r - h))) / (2.0 * h);
            assert!((fd - sigmoid(r)).abs() < 1e-6);
            assert!((logistic_loss_derivative(r) + sigmoid(-r)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn ratio_never_exceeds_exponential(b in -60.0f64..60.0, gap in 0.0f64..60.0) {
            let (r, bound) = multiplicative_ratio_bound(b + gap, b).unwrap();
            prop_assert!(r <= bound * (1.0 + 1e-12));
        }

        #[test]
        fn chain_holds_on_random_discrete_measures(
            pts in proptest::collection::vec((-8.0f64..8.0, 0.0f64..=1.0, 0.0f64..1.0), 1..40)
        ) {
            let total: f64 = pts.iter().map(|p| p.2).sum::<f64>() + 1e-3;
            let preds: Vec<_> = pts.iter().map(|&(f, p, w)| WeightedPrediction {
                margin: f, p_y: cp(p), weight: (w + 1e-3 / pts.len() as f64) / total,
            }).collect();
            let b = risk_breakdown(&preds).unwrap();
            prop_assert!(b.chain_holds(1e-9), "{b:?}");
        }
    }
}
