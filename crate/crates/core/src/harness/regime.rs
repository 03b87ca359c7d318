//! Parameter schedules for the easy, clairvoyant and worst-case regimes and
//! for the consistency schedule indexed by sample size.

use serde::{Deserialize, Serialize};

use super::ceil_tol;
use crate::distributions::DistributionSpec;
use crate::error::{Error, Result};
use crate::reference::WeightMap;
use crate::trainer::Radius;

pub const DESK_CAP: usize = 1 << 16;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_MC_FEATURES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Easy,
    Clairvoyant,
    Worstcase,
    Consistency,
}

impl Regime {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "easy" => Regime::Easy,
            "clairvoyant" => Regime::Clairvoyant,
            "worstcase" => Regime::Worstcase,
            "consistency" => Regime::Consistency,
            _ => {
                return Err(Error::Unknown {
                    kind: "regime",
                    name: name.to_string(),
                })
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Easy => "easy",
            Regime::Clairvoyant => "clairvoyant",
            Regime::Worstcase => "worstcase",
            Regime::Consistency => "consistency",
        }
    }

    /// Whether `ρ` is tied to the width as `m^{−1/8}`.
    pub fn rho_from_width(self) -> bool {
        !matches!(self, Regime::Easy)
    }
}

/// Inputs to [`derive_regime`] beyond the regime and `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeExtras {
    /// The reference radius `R`.
    pub r: f64,
    pub m_cap: usize,
    pub n_cap: usize,
}

impl Default for RegimeExtras {
    fn default() -> Self {
        RegimeExtras {
            r: 4.0,
            m_cap: DESK_CAP,
            n_cap: DESK_CAP,
        }
    }
}

/// A fully derived experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub eps: Option<f64>,
    pub xi: Option<f64>,
    pub r: f64,
    pub rho: f64,
    pub m: usize,
    pub n: usize,
    pub eta: f64,
    pub t: usize,
    pub eps_gd: f64,
    pub r_gd: Radius,
    /// Set when `m` or `n` was clipped to the desk caps.
    pub capped: bool,
    pub seed: u64,
    pub seeds: usize,
    pub distribution: DistributionSpec,
    pub augment: bool,
    pub reference: WeightMap,
    pub delta: f64,
    pub mc_features: usize,
    pub eval_nodes: usize,
}

/// Catalog (i) at `c = 2` with its matched teacher on augmented inputs.
pub fn default_task() -> (DistributionSpec, WeightMap) {
    (
        DistributionSpec::Logistic1d { c: 2.0, lo: -1.0, hi: 1.0 },
        WeightMap::BiasTeacher {
            weights: vec![2.0],
            intercept: 0.0,
        },
    )
}

fn cap(value: f64, limit: usize) -> (usize, bool) {
    let v = ceil_tol(value).max(1.0);
    if v > limit as f64 {
        (limit, true)
    } else {
        (v as usize, false)
    }
}

/// `ρ = m^{−1/8}`.
pub fn rho_for_width(m: usize) -> f64 {
    (m as f64).powf(-0.125)
}

fn base(regime: Regime, rho: f64, m: usize, n: usize, t: usize, eps_gd: f64, r_gd: Radius, r: f64, capped: bool) -> RegimeConfig {
    let (distribution, reference) = default_task();
    RegimeConfig {
        regime,
        eps: None,
        xi: None,
        r,
        rho,
        m,
        n,
        eta: 4.0 / (rho * rho),
        t,
        eps_gd,
        r_gd,
        capped,
        seed: 0,
        seeds: 10,
        distribution,
        augment: true,
        reference,
        delta: DEFAULT_DELTA,
        mc_features: DEFAULT_MC_FEATURES,
        eval_nodes: crate::distributions::MIN_QUADRATURE_NODES,
    }
}

/// Schedules for a target accuracy `ε ∈ (0, 1/2]`:
///
/// | regime | `ρ` | `m` | `R_gd` |
/// |---|---|---|---|
/// | easy | 1 | `⌈R^8⌉` | ∞ |
/// | clairvoyant | `m^{−1/8}` | `⌈ε^{−8}⌉` | `R/ρ` |
/// | worstcase | `m^{−1/8}` | `⌈ε^{−40/3}⌉` | ∞ |
///
/// and in all three `ε_gd = ε`, `t = ⌈1/(8ε)⌉`, `n = ⌈1/ε²⌉`, `η = 4/ρ²`.
/// `ρ` is computed from the (possibly capped) width.
pub fn derive_regime(regime: Regime, eps: f64, extras: RegimeExtras) -> Result<RegimeConfig> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::invalid(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    if !(extras.r > 0.0) {
        return Err(Error::invalid("R must be positive"));
    }
    let m_formula = match regime {
        Regime::Easy => extras.r.powi(8),
        Regime::Clairvoyant => eps.powi(-8),
        Regime::Worstcase => eps.powf(-40.0 / 3.0),
        Regime::Consistency => return Err(Error::invalid("use derive_consistency for the consistency schedule")),
    };
    let (m, m_capped) = cap(m_formula, extras.m_cap);
    let (n, n_capped) = cap(1.0 / (eps * eps), extras.n_cap);
    let rho = if regime.rho_from_width() { rho_for_width(m) } else { 1.0 };
    let r_gd = match regime {
        Regime::Clairvoyant => Radius::Finite(extras.r / rho),
        _ => Radius::Infinite,
    };
    let t = ceil_tol(1.0 / (8.0 * eps)).max(1.0) as usize;
    let mut cfg = base(regime, rho, m, n, t, eps, r_gd, extras.r, m_capped || n_capped);
    cfg.eps = Some(eps);
    Ok(cfg)
}

/// `m = n^{(40/3)(1−ξ)}`, `ρ = m^{−1/8}`, `η = 4/ρ²`, `ε_gd = n^{ξ−1}`,
/// `t = ⌈n^{1−ξ}/8⌉`, `R_gd = ∞`.
pub fn derive_consistency(n: usize, xi: f64, extras: RegimeExtras) -> Result<RegimeConfig> {
    if n < 2 {
        return Err(Error::invalid("the consistency schedule needs n >= 2"));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::invalid(format!("xi must lie in (0, 1), got {xi}")));
    }
    let nf = n as f64;
    let (m, m_capped) = cap(nf.powf(40.0 / 3.0 * (1.0 - xi)), extras.m_cap);
    let rho = rho_for_width(m);
    let t = ceil_tol(nf.powf(1.0 - xi) / 8.0).max(1.0) as usize;
    let mut cfg = base(
        Regime::Consistency,
        rho,
        m,
        n,
        t,
        nf.powf(xi - 1.0),
        Radius::Infinite,
        extras.r,
        m_capped || n > extras.n_cap,
    );
    cfg.n = n.min(extras.n_cap);
    cfg.xi = Some(xi);
    Ok(cfg)
}

impl RegimeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.t == 0 {
            return Err(Error::invalid("m, n and t must be positive"));
        }
        if !(self.rho > 0.0 && self.eta > 0.0 && self.eps_gd > 0.0) {
            return Err(Error::invalid("rho, eta and eps_gd must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if self.seeds == 0 || self.mc_features == 0 {
            return Err(Error::invalid("seeds and mc_features must be positive"));
        }
        self.distribution.validate()
    }

    /// Overrides the width, keeping `ρ = m^{−1/8}` and `η = 4/ρ²` where the regime ties them.
    pub fn with_width(mut self, m: usize) -> Self {
        self.m = m;
        if self.regime.rho_from_width() {
            self.set_rho(rho_for_width(m));
        }
        self
    }

    pub fn set_rho(&mut self, rho: f64) {
        self.rho = rho;
        self.eta = 4.0 / (rho * rho);
    }

    /// Builds a config from flat JSON: `regime` plus `eps` (or `n` and `xi`
    /// for the consistency schedule) are derived first, then every other
    /// field present overrides the derived value.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Malformed("config must be a JSON object".into()))?;
        let num = |k: &str| obj.get(k).and_then(|v| v.as_f64());
        let uint = |k: &str| -> Result<Option<usize>> {
            match obj.get(k) {
                None => Ok(None),
                Some(v) => v
                    .as_u64()
                    .map(|u| Some(u as usize))
                    .ok_or_else(|| Error::Malformed(format!("`{k}` must be a nonnegative integer"))),
            }
        };
        let regime = Regime::from_name(obj.get("regime").and_then(|v| v.as_str()).unwrap_or("easy"))?;
        let mut extras = RegimeExtras::default();
        if let Some(r) = num("r") {
            extras.r = r;
        }
        let mut cfg = match regime {
            Regime::Consistency => derive_consistency(
                uint("n")?.ok_or_else(|| Error::Malformed("consistency config needs `n`".into()))?,
                num("xi").ok_or_else(|| Error::Malformed("consistency config needs `xi`".into()))?,
                extras,
            )?,
            _ => derive_regime(
                regime,
                num("eps").ok_or_else(|| Error::Malformed("regime config needs `eps`".into()))?,
                extras,
            )?,
        };
        if let Some(m) = uint("m")? {
            cfg = cfg.with_width(m);
        }
        if let Some(n) = uint("n")? {
            cfg.n = n;
        }
        if let Some(rho) = num("rho") {
            cfg.set_rho(rho);
        }
        if let Some(eta) = num("eta") {
            cfg.eta = eta;
        }
        if let Some(t) = uint("t")? {
            cfg.t = t;
        }
        if let Some(e) = num("eps_gd") {
            cfg.eps_gd = e;
        }
        if let Some(v) = obj.get("r_gd") {
            cfg.r_gd = serde_json::from_value(v.clone())?;
        }
        if let Some(s) = obj.get("seed").and_then(|v| v.as_u64()) {
            cfg.seed = s;
        }
        if let Some(s) = uint("seeds")? {
            cfg.seeds = s;
        }
        if let Some(v) = obj.get("distribution") {
            cfg.distribution = serde_json::from_value(v.clone())?;
        }
        if let Some(v) = obj.get("reference") {
            cfg.reference = serde_json::from_value(v.clone())?;
        }
        if let Some(v) = obj.get("augment").and_then(|v| v.as_bool()) {
            cfg.augment = v;
        }
        if let Some(d) = num("delta") {
            cfg.delta = d;
        }
        if let Some(k) = uint("mc_features")? {
            cfg.mc_features = k;
        }
        if let Some(k) = uint("eval_nodes")? {
            cfg.eval_nodes = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn easy_example() {
        let c = derive_regime(Regime::Easy, 1.0 / 80.0, RegimeExtras::default()).unwrap();
        assert_eq!((c.rho, c.m, c.t, c.n, c.eta), (1.0, 65536, 10, 6400, 4.0));
        assert!(!c.capped);
        assert_eq!(c.r_gd, Radius::Infinite);
        let big = derive_regime(Regime::Easy, 0.1, RegimeExtras { r: 5.0, ..Default::default() }).unwrap();
        assert_eq!(big.m, DESK_CAP);
        assert!(big.capped);
    }

    #[test]
    fn clairvoyant_example() {
        let c = derive_regime(Regime::Clairvoyant, 0.5, RegimeExtras::default()).unwrap();
        assert_eq!((c.m, c.rho, c.eta, c.t, c.n), (256, 0.5, 16.0, 1, 4));
        assert_eq!(c.r_gd, Radius::Finite(8.0));
        assert_eq!(c.eps_gd, 0.5);
    }

    #[test]
    fn worstcase_example() {
        let c = derive_regime(Regime::Worstcase, 0.5, RegimeExtras::default()).unwrap();
        assert_eq!(c.r_gd, Radius::Infinite);
        assert_eq!(c.m, 10322);
        assert_eq!(serde_json::to_value(c.r_gd).unwrap(), serde_json::json!("inf"));
        let capped = derive_regime(Regime::Worstcase, 0.25, RegimeExtras::default()).unwrap();
        assert_eq!(capped.m, DESK_CAP);
        assert!(capped.capped);
        assert_eq!(capped.rho, 0.25);
    }

    #[test]
    fn regime_errors() {
        assert!(derive_regime(Regime::Easy, 0.0, RegimeExtras::default()).is_err());
        assert!(derive_regime(Regime::Easy, 0.6, RegimeExtras::default()).is_err());
        assert!(matches!(Regime::from_name("lazy"), Err(Error::Unknown { .. })));
    }

    #[test]
    fn consistency_examples() {
        let c = derive_consistency(256, 0.925, RegimeExtras::default()).unwrap();
        assert_eq!((c.m, c.rho, c.eta, c.t), (256, 0.5, 16.0, 1));
        assert!((c.eps_gd - 0.6597539553864471).abs() < 1e-15);
        assert_eq!(c.r_gd, Radius::Infinite);
        assert_eq!(c, derive_consistency(256, 0.925, RegimeExtras::default()).unwrap());

        let limit = derive_consistency(1000, 1.0 - 1e-12, RegimeExtras::default()).unwrap();
        assert_eq!((limit.m, limit.t), (1, 1));

        for (n, t) in [(256, 2), (1024, 4), (4096, 8)] {
            let c = derive_consistency(n, 0.5, RegimeExtras::default()).unwrap();
            assert_eq!((c.m, c.rho, c.eta, c.t, c.n), (DESK_CAP, 0.25, 64.0, t, n));
            assert!(c.capped);
        }
        assert!(derive_consistency(256, 1.0, RegimeExtras::default()).is_err());
        assert!(derive_consistency(1, 0.5, RegimeExtras::default()).is_err());
    }

    #[test]
    fn eta_rho_squared_is_four() {
        for regime in [Regime::Easy, Regime::Clairvoyant, Regime::Worstcase] {
            for k in 1..=40 {
                let c = derive_regime(regime, 0.5 / k as f64, RegimeExtras::default()).unwrap();
                assert!((c.eta * c.rho * c.rho - 4.0).abs() < 1e-12);
                assert!(c.t >= 1);
            }
        }
        for k in 1..20 {
            let c = derive_consistency(1 << k.min(16), k as f64 / 20.0, RegimeExtras::default()).unwrap();
            assert!((c.eta * c.rho * c.rho - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn json_config_round_trip() {
        let v = serde_json::json!({"regime": "clairvoyant", "eps": 0.5, "m": 4096, "seed": 7});
        let c = RegimeConfig::from_json(&v).unwrap();
        assert_eq!((c.m, c.seed), (4096, 7));
        assert_eq!(c.rho, rho_for_width(4096));
        assert!((c.rho - 0.5f64.powf(1.5)).abs() < 1e-16 && (c.eta - 32.0).abs() < 1e-12);
        let back: RegimeConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let cons = RegimeConfig::from_json(&serde_json::json!({"regime": "consistency", "n": 256, "xi": 0.5})).unwrap();
        assert_eq!(cons.t, 2);
        assert!(RegimeConfig::from_json(&serde_json::json!({"regime": "easy"})).is_err());
        assert!(RegimeConfig::from_json(&serde_json::json!({"regime": "easy", "eps": 0.1, "m": -3})).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn regimes_tie_step_to_scale(eps in 1e-3f64..=0.5, k in 0usize..3, r in 1.0f64..8.0) {
                let regime = [Regime::Easy, Regime::Clairvoyant, Regime::Worstcase][k];
                let extras = RegimeExtras { r, ..Default::default() };
                let c = derive_regime(regime, eps, extras).unwrap();
                prop_assert!((c.eta * c.rho * c.rho - 4.0).abs() < 1e-12);
                prop_assert!(c.m >= 1 && c.t >= 1 && c.n >= 1);
                prop_assert!(c.m <= DESK_CAP && c.n <= DESK_CAP);
                prop_assert_eq!(c.clone(), derive_regime(regime, eps, extras).unwrap());
                prop_assert!((c.clone().with_width(100).eta * c.clone().with_width(100).rho.powi(2) - 4.0).abs() < 1e-12);
            }

            #[test]
            fn consistency_ties_step_to_scale(n in 2usize..=65_536, xi in 0.01f64..0.99) {
                let c = derive_consistency(n, xi, RegimeExtras::default()).unwrap();
                prop_assert!((c.eta * c.rho * c.rho - 4.0).abs() < 1e-12);
                prop_assert!(c.m >= 1 && c.t >= 1);
                prop_assert_eq!(c.r_gd, Radius::Infinite);
                prop_assert_eq!(c.capped, ceil_tol((n as f64).powf(40.0 / 3.0 * (1.0 - xi))) > DESK_CAP as f64);
            }
        }
    }
}
