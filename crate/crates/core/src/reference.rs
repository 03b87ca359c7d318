//! Infinite-width random-feature reference models and their finite-width
//! samples coupled to a network's initialization.
//!
//! A model is a weight map `Ū∞: R^d → R^d`; its predictor is
//! `f(x; Ū∞) = E_v ⟨Ū∞(v), x⟩ 1[vᵀx ≥ 0]` for `v ~ N(0, I)`, estimated here by
//! Monte Carlo over a feature sample shared by every input.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distributions::PopulationEvaluator;
use crate::engine::{EngineKind, Head, PointSet};
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::metrics::logistic_loss;
use crate::network::{Network, NetworkId};
use crate::seed::{self, derive_seed, stream};

pub const DEFAULT_MC_FEATURES: usize = 100_000;
pub const SPOT_CHECKS: usize = 10_000;

/// Built-in weight maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightMap {
    Zero { dim: usize },
    Constant { vector: Vec<f64> },
    /// Constant `2βu`, whose predictor is `β⟨u, x⟩`.
    Teacher { direction: Vec<f64>, logit_scale: f64 },
    /// Constant `2√2 (w, b)` on augmented inputs `(x, 1)/√2`; predictor `⟨w, x⟩ + b`.
    BiasTeacher { weights: Vec<f64>, intercept: f64 },
    /// `v ↦ c·u·1[uᵀv ≥ 0]`.
    Halfspace { direction: Vec<f64>, scale: f64 },
}

impl WeightMap {
    pub fn dim(&self) -> usize {
        match self {
            WeightMap::Zero { dim } => *dim,
            WeightMap::Constant { vector } => vector.len(),
            WeightMap::Teacher { direction, .. } | WeightMap::Halfspace { direction, .. } => direction.len(),
            WeightMap::BiasTeacher { weights, .. } => weights.len() + 1,
        }
    }

    /// `sup_v ‖Ū∞(v)‖`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            WeightMap::Zero { .. } => 0.0,
            WeightMap::Halfspace { direction, scale } => scale.abs() * norm(direction),
            _ => norm(&self.constant().unwrap_or_default()),
        }
    }

    /// The value of a constant map.
    pub fn constant(&self) -> Option<Vec<f64>> {
        match self {
            WeightMap::Zero { dim } => Some(vec![0.0; *dim]),
            WeightMap::Constant { vector } => Some(vector.clone()),
            WeightMap::Teacher { direction, logit_scale } => {
                Some(direction.iter().map(|u| 2.0 * logit_scale * u).collect())
            }
            WeightMap::BiasTeacher { weights, intercept } => {
                let c = 2.0 * std::f64::consts::SQRT_2;
                Some(weights.iter().chain(std::iter::once(intercept)).map(|w| c * w).collect())
            }
            WeightMap::Halfspace { .. } => None,
        }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            WeightMap::Zero { .. } => out.fill(0.0),
            WeightMap::Halfspace { direction, scale } => {
                let on = dot(direction, v) >= 0.0;
                for (o, u) in out.iter_mut().zip(direction) {
                    *o = if on { scale * u } else { 0.0 };
                }
            }
            _ => out.copy_from_slice(&self.constant().expect("constant map")),
        }
    }

    /// `f(x; Ū∞)` in closed form.
    pub fn closed_form(&self, x: &[f64]) -> f64 {
        match self {
            WeightMap::Halfspace { direction, scale } => {
                let ux = dot(direction, x);
                let (nu, nx) = (norm(direction), norm(x));
                if nu == 0.0 || nx == 0.0 {
                    return 0.0;
                }
                let angle = (ux / (nu * nx)).clamp(-1.0, 1.0).acos();
                scale * ux * (std::f64::consts::PI - angle) / (2.0 * std::f64::consts::PI)
            }
            _ => 0.5 * dot(&self.constant().expect("constant map"), x),
        }
    }
}

type MapFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum MapImpl {
    Builtin(WeightMap),
    Custom(Arc<MapFn>),
}

/// A monte-carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone)]
pub struct InfiniteWidthModel {
    map: MapImpl,
    dim: usize,
    r_sup: f64,
    scale: f64,
    mc_features: usize,
    mc_seed: u64,
    features: Arc<OnceLock<(Matrix, Matrix)>>,
}

impl fmt::Debug for InfiniteWidthModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.map {
            MapImpl::Builtin(w) => format!("{w:?}"),
            MapImpl::Custom(_) => "custom".to_string(),
        };
        f.debug_struct("InfiniteWidthModel")
            .field("map", &name)
            .field("dim", &self.dim)
            .field("r_sup", &self.r_sup)
            .field("scale", &self.scale)
            .field("mc_features", &self.mc_features)
            .field("mc_seed", &self.mc_seed)
            .finish()
    }
}

impl InfiniteWidthModel {
    pub fn new(map: WeightMap, mc_features: usize, mc_seed: u64) -> Result<Self> {
        if let WeightMap::Teacher { direction, .. } | WeightMap::Halfspace { direction, .. } = &map {
            if direction.is_empty() {
                return Err(Error::invalid("direction must be nonempty"));
            }
        }
        if map.dim() == 0 {
            return Err(Error::invalid("weight map must have positive dimension"));
        }
        let dim = map.dim();
        let r_sup = map.sup_norm();
        let model = Self::build(MapImpl::Builtin(map), dim, r_sup, mc_features, mc_seed)?;
        Ok(model)
    }

    /// A user-supplied map with a declared norm bound, spot-checked on
    /// [`SPOT_CHECKS`] Gaussian draws.
    pub fn from_fn(
        dim: usize,
        r_sup: f64,
        mc_features: usize,
        mc_seed: u64,
        map: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(r_sup >= 0.0) || !r_sup.is_finite() {
            return Err(Error::invalid("norm bound must be finite and nonnegative"));
        }
        Self::build(MapImpl::Custom(Arc::new(map)), dim, r_sup, mc_features, mc_seed)
    }

    fn build(map: MapImpl, dim: usize, r_sup: f64, mc_features: usize, mc_seed: u64) -> Result<Self> {
        if dim == 0 || mc_features == 0 {
            return Err(Error::invalid("dimension and feature count must be positive"));
        }
        let model = InfiniteWidthModel {
            map,
            dim,
            r_sup,
            scale: 1.0,
            mc_features,
            mc_seed,
            features: Arc::new(OnceLock::new()),
        };
        let mut rng = seed::rng(derive_seed(mc_seed, &[stream::MC_FEATURES, 1]));
        let mut v = vec![0.0; dim];
        let mut out = vec![0.0; dim];
        for _ in 0..SPOT_CHECKS {
            v.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            model.eval_map(&v, &mut out);
            let n = norm(&out);
            if !(n <= r_sup * (1.0 + 1e-12) + 1e-300) {
                return Err(Error::invalid(format!("weight map norm {n} exceeds its bound {r_sup}")));
            }
        }
        Ok(model)
    }

    /// The model with map `k·Ū∞`, sharing the feature sample.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.scale *= k;
        out.r_sup *= k.abs();
        out.features = Arc::new(OnceLock::new());
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_sup(&self) -> f64 {
        self.r_sup
    }

    pub fn mc_features(&self) -> usize {
        self.mc_features
    }

    pub fn mc_seed(&self) -> u64 {
        self.mc_seed
    }

    pub fn builtin(&self) -> Option<&WeightMap> {
        match &self.map {
            MapImpl::Builtin(w) => Some(w),
            MapImpl::Custom(_) => None,
        }
    }

    /// `Ū∞(v)` written into `out`.
    pub fn eval_map(&self, v: &[f64], out: &mut [f64]) {
        match &self.map {
            MapImpl::Builtin(w) => w.apply(v, out),
            MapImpl::Custom(f) => f(v, out),
        }
        if self.scale != 1.0 {
            out.iter_mut().for_each(|o| *o *= self.scale);
        }
    }

    /// The shared Monte Carlo sample `(v_i, Ū∞(v_i))`.
    fn features(&self) -> &(Matrix, Matrix) {
        self.features.get_or_init(|| {
            let (m, d) = (self.mc_features, self.dim);
            let mut rng = seed::rng(derive_seed(self.mc_seed, &[stream::MC_FEATURES, 0]));
            let v: Vec<f64> = (0..m * d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let v = Matrix::from_vec(m, d, v).expect("shape");
            let mut u = Matrix::zeros(m, d);
            for i in 0..m {
                self.eval_map(v.row(i), u.row_mut(i));
            }
            (v, u)
        })
    }

    /// Monte Carlo estimate of `f(x; Ū∞)`.
    pub fn infinite_forward(&self, x: &[f64]) -> Result<Estimate> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let (v, u) = self.features();
        let m = self.mc_features as f64;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for i in 0..self.mc_features {
            if dot(v.row(i), x) >= 0.0 {
                let t = dot(u.row(i), x);
                sum += t;
                sum_sq += t * t;
            }
        }
        let mean = sum / m;
        let var = if self.mc_features > 1 {
            ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(Estimate {
            value: mean,
            se: (var / m).sqrt(),
        })
    }

    pub fn infinite_margins(&self, points: &PointSet) -> Result<Vec<Estimate>> {
        points.iter().map(|x| self.infinite_forward(x)).collect()
    }
}

/// The canonical finite-width reference `ū_j = a_j Ū∞(w_{0,j})/(ρ√m) + w_{0,j}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledReference {
    pub ubar: Matrix,
    pub source: NetworkId,
}

pub fn sample_reference(model: &InfiniteWidthModel, net: &Network) -> Result<SampledReference> {
    if model.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: model.dim(),
        });
    }
    let w0 = net.init_weights();
    let m = net.width();
    let c = 1.0 / (net.rho() * (m as f64).sqrt());
    let mut ubar = w0.clone();
    let mut buf = vec![0.0; model.dim()];
    for j in 0..m {
        model.eval_map(w0.row(j), &mut buf);
        let a = net.signs()[j];
        for (u, b) in ubar.row_mut(j).iter_mut().zip(&buf) {
            *u += a * b * c;
        }
    }
    let moved = net.rho() * ubar.dist(w0);
    if moved > model.r_sup() * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::invalid(format!(
            "sampled reference moved {moved} > bound {}",
            model.r_sup()
        )));
    }
    Ok(SampledReference { ubar, source: net.id() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub m: usize,
    pub rho: f64,
    pub frozen_risk: f64,
    pub infinite_risk: f64,
    /// `max(frozen/infinite, infinite/frozen)`.
    pub gap: f64,
    /// Bound on the Monte Carlo error of `infinite_risk` from the feature sample.
    pub se: f64,
}

/// Population logistic risk of the infinite-width predictor, with a bound on
/// its feature-sampling error (the per-point loss is 1-Lipschitz in the margin).
pub fn infinite_population_risk(model: &InfiniteWidthModel, eval: &PopulationEvaluator) -> Result<(f64, f64)> {
    let est = model.infinite_margins(eval.inputs())?;
    let margins: Vec<f64> = est.iter().map(|e| e.value).collect();
    let risk = eval.risk_from_margins(&margins)?.breakdown.logistic_risk;
    let se = est.iter().zip(eval.weights()).map(|(e, w)| w * e.se).sum();
    Ok((risk, se))
}

/// Compares `R^{(0)}(Ū)` with `R(Ū∞)` on the evaluator's points.
pub fn gap_experiment(model: &InfiniteWidthModel, net: &Network, eval: &PopulationEvaluator) -> Result<GapReport> {
    let (infinite_risk, se) = infinite_population_risk(model, eval)?;
    gap_with_infinite(model, net, eval, infinite_risk, se)
}

/// As [`gap_experiment`] with a precomputed infinite-width risk.
pub fn gap_with_infinite(
    model: &InfiniteWidthModel,
    net: &Network,
    eval: &PopulationEvaluator,
    infinite_risk: f64,
    se: f64,
) -> Result<GapReport> {
    let reference = sample_reference(model, net)?;
    let head = Head {
        scale: net.scale(),
        signs: net.signs(),
    };
    let margins = eval.network_margins(head, net.init_weights(), &reference.ubar, EngineKind::Auto);
    let frozen_risk = eval.risk_from_margins(&margins)?.breakdown.logistic_risk;
    Ok(GapReport {
        m: net.width(),
        rho: net.rho(),
        frozen_risk,
        infinite_risk,
        gap: risk_gap(frozen_risk, infinite_risk)?,
        se,
    })
}

pub fn risk_gap(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::DegenerateRisk(format!("risks {a} and {b} must be positive")));
    }
    Ok((a / b).max(b / a))
}

/// Pointwise logistic risk `p ℓ(f) + (1−p) ℓ(−f)`.
pub fn pointwise_risk(p: f64, f: f64) -> f64 {
    p * logistic_loss(f) + (1.0 - p) * logistic_loss(-f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Distribution, DistributionSpec, EvalScheme};
    use proptest::prelude::*;

    fn constant(c: Vec<f64>, m: usize) -> InfiniteWidthModel {
        InfiniteWidthModel::new(WeightMap::Constant { vector: c }, m, 9).unwrap()
    }

    #[test]
    fn zero_map_and_zero_input() {
        let z = InfiniteWidthModel::new(WeightMap::Zero { dim: 3 }, 1000, 1).unwrap();
        assert_eq!(z.infinite_forward(&[0.3, 0.1, -0.5]).unwrap().value, 0.0);
        let c = constant(vec![1.0, 2.0, 3.0], 1000);
        assert_eq!(c.infinite_forward(&[0.0; 3]).unwrap(), Estimate { value: 0.0, se: 0.0 });
    }

    #[test]
    fn constant_map_halves_inner_product() {
        let c = vec![1.5, -2.0];
        let model = constant(c.clone(), DEFAULT_MC_FEATURES);
        for x in [[0.6, 0.3], [-0.2, 0.9], [0.7, -0.7]] {
            let e = model.infinite_forward(&x).unwrap();
            let exact = 0.5 * dot(&c, &x);
            assert!((e.value - exact).abs() < 4.0 * e.se, "{e:?} vs {exact}");
            assert_eq!(exact, WeightMap::Constant { vector: c.clone() }.closed_form(&x));
        }
    }

    #[test]
    fn halfspace_map_matches_closed_form() {
        let map = WeightMap::Halfspace {
            direction: vec![0.6, 0.8],
            scale: 3.0,
        };
        let model = InfiniteWidthModel::new(map.clone(), DEFAULT_MC_FEATURES, 2).unwrap();
        for x in [[0.6, 0.8], [1.0, 0.0], [-0.5, 0.5], [-0.6, -0.8]] {
            let e = model.infinite_forward(&x).unwrap();
            assert!((e.value - map.closed_form(&x)).abs() < 4.0 * e.se + 1e-15, "{x:?} {e:?}");
        }
        assert_eq!(map.closed_form(&[-0.6, -0.8]), 0.0);
    }

    #[test]
    fn teachers_reproduce_their_logits() {
        let t = WeightMap::Teacher {
            direction: vec![0.0, 1.0],
            logit_scale: 2.5,
        };
        assert_eq!(t.constant().unwrap(), vec![0.0, 5.0]);
        assert!((t.closed_form(&[0.3, 0.4]) - 1.0).abs() < 1e-15);
        let b = WeightMap::BiasTeacher {
            weights: vec![2.0],
            intercept: 0.0,
        };
        assert!((b.sup_norm() - 4.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
        let x = 0.37;
        let aug = [x / std::f64::consts::SQRT_2, 1.0 / std::f64::consts::SQRT_2];
        assert!((b.closed_form(&aug) - 2.0 * x).abs() < 1e-15);
    }

    #[test]
    fn custom_map_spot_check() {
        let ok = InfiniteWidthModel::from_fn(2, 1.0, 10, 0, |v, out| {
            let n = norm(v).max(1.0);
            out.iter_mut().zip(v).for_each(|(o, x)| *o = x / n);
        });
        assert!(ok.is_ok());
        let bad = InfiniteWidthModel::from_fn(2, 1.0, 10, 0, |v, out| out.copy_from_slice(v));
        assert!(bad.is_err());
    }

    #[test]
    fn zero_map_reference_is_init() {
        let net = Network::init(32, 3, 0.7, 4).unwrap();
        let z = InfiniteWidthModel::new(WeightMap::Zero { dim: 3 }, 10, 1).unwrap();
        let r = sample_reference(&z, &net).unwrap();
        assert_eq!(&r.ubar, net.init_weights());
        let x = [0.2, -0.1, 0.5];
        let frozen = net.freeze_init().forward(&r.ubar, &x).unwrap();
        assert_eq!(frozen, net.forward(&x).unwrap());
        assert!(sample_reference(&constant(vec![1.0, 1.0], 10), &net).is_err());
    }

    #[test]
    fn frozen_reference_decomposes() {
        let c = vec![0.4, -1.1];
        let net = Network::init(64, 2, 0.5, 8).unwrap();
        let r = sample_reference(&constant(c.clone(), 10), &net).unwrap();
        let x = [0.3, 0.6];
        let frozen = net.freeze_init().forward(&r.ubar, &x).unwrap();
        let m = net.width();
        let active = (0..m).filter(|&j| dot(net.init_weights().row(j), &x) >= 0.0).count();
        let expected = net.forward(&x).unwrap() + dot(&c, &x) * active as f64 / m as f64;
        assert!((frozen - expected).abs() < 1e-12);
    }

    #[test]
    fn gap_is_one_for_identical_risks_and_rejects_zero() {
        assert_eq!(risk_gap(0.4, 0.4).unwrap(), 1.0);
        assert!(matches!(risk_gap(0.0, 0.4), Err(Error::DegenerateRisk(_))));
    }

    #[test]
    fn zero_map_gap_on_fair_coin() {
        let dist = Distribution::new(DistributionSpec::Constant { p: 0.5, lo: -1.0, hi: 1.0 }, true).unwrap();
        let eval = dist.evaluator(EvalScheme::Quadrature { nodes: 512 }).unwrap();
        let model = InfiniteWidthModel::new(WeightMap::Zero { dim: 2 }, 100, 1).unwrap();
        let (mut big, mut small) = (0.0, 0.0);
        for seed in 0..5 {
            big += gap_experiment(&model, &Network::init(256, 2, 1.0, seed).unwrap(), &eval).unwrap().gap;
            let g = gap_experiment(&model, &Network::init(256, 2, 0.01, seed).unwrap(), &eval).unwrap();
            assert!((g.infinite_risk - std::f64::consts::LN_2).abs() < 1e-12);
            small += g.gap;
        }
        assert!(small < big);
        assert!(small / 5.0 - 1.0 < 1e-3);
    }

    #[test]
    fn deterministic_and_linear() {
        let model = constant(vec![0.5, 1.0], 2000);
        let x = [0.2, 0.7];
        let a = model.infinite_forward(&x).unwrap();
        assert_eq!(a, constant(vec![0.5, 1.0], 2000).infinite_forward(&x).unwrap());
        assert_eq!(model.scaled(2.0).infinite_forward(&x).unwrap().value, 2.0 * a.value);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn reference_stays_within_bound(
            c in prop::collection::vec(-3.0f64..3.0, 3),
            m in 1usize..64,
            rho in 0.01f64..4.0,
            seed in any::<u64>(),
            halfspace in any::<bool>(),
        ) {
            let map = if halfspace {
                WeightMap::Halfspace { direction: c.clone(), scale: 1.3 }
            } else {
                WeightMap::Constant { vector: c.clone() }
            };
            let model = InfiniteWidthModel::new(map, 10, seed).unwrap();
            let net = Network::init(m, 3, rho, seed).unwrap();
            let r = sample_reference(&model, &net).unwrap();
            prop_assert!(rho * r.ubar.dist(net.init_weights()) <= model.r_sup() * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn estimate_is_cauchy_schwarz_bounded(
            c in prop::collection::vec(-3.0f64..3.0, 2),
            x in prop::collection::vec(-0.7f64..0.7, 2),
            seed in any::<u64>(),
        ) {
            let model = InfiniteWidthModel::new(WeightMap::Constant { vector: c }, 300, seed).unwrap();
            let e = model.infinite_forward(&x).unwrap();
            prop_assert!(e.value.abs() <= model.r_sup() * norm(&x) * (1.0 + 1e-12));
        }
    }
}
