//! Frozen-feature norm experiment: train the linear model `f^{(0)}(·; V)` by
//! gradient descent from `W0` until `ρ‖V − W0‖/√n` reaches a target, then
//! report the radius and held-out errors. Intended for IDX class pairs.

use serde::{Deserialize, Serialize};

use crate::distributions::LabeledSample;
use crate::engine::{Engine, EngineKind, Head};
use crate::error::{Error, Result};
use crate::metrics::{logistic_loss, sgn};
use crate::network::Network;
use crate::trainer::{train_frozen_until, Radius, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrozenNormConfig {
    pub m: usize,
    pub rho: f64,
    /// Stop once `ρ‖V − W0‖/√n ≥ target_ratio`.
    pub target_ratio: f64,
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for FrozenNormConfig {
    fn default() -> Self {
        FrozenNormConfig {
            m: 1024,
            rho: 1.0,
            target_ratio: 0.5,
            max_steps: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenNormReport {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub steps: usize,
    /// `ρ‖V − W0‖`.
    pub r_estimate: f64,
    pub ratio: f64,
    pub reached: bool,
    pub train_logistic: f64,
    pub test_logistic: f64,
    pub test_zero_one: f64,
    pub preprocessing: String,
}

pub fn frozen_norm_experiment(train: &LabeledSample, test: &LabeledSample, cfg: &FrozenNormConfig) -> Result<FrozenNormReport> {
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            got: test.dim(),
        });
    }
    if test.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = train.len();
    let mut net = Network::init(cfg.m, train.dim(), cfg.rho, cfg.seed)?;
    let tc = TrainConfig {
        eta: 4.0 / (cfg.rho * cfg.rho),
        t_max: cfg.max_steps,
        eps_gd: 1.0,
        r_gd: Radius::Infinite,
        seed: cfg.seed,
        monitors: false,
    };
    let stop = cfg.target_ratio * (n as f64).sqrt() / cfg.rho;
    let traj = train_frozen_until(&mut net, train, &tc, stop)?;
    let last = traj.records.last().expect("nonempty trajectory");
    let r_estimate = cfg.rho * last.dist_init;
    let head = Head {
        scale: net.scale(),
        signs: net.signs(),
    };
    let mut preds = vec![0.0; test.len()];
    Engine::new(test.inputs(), EngineKind::Auto).predict(head, net.init_weights(), net.weights(), &mut preds);
    let k = test.len() as f64;
    let test_logistic = preds.iter().zip(test.labels()).map(|(f, y)| logistic_loss(y * f)).sum::<f64>() / k;
    let test_zero_one = preds.iter().zip(test.labels()).filter(|(f, y)| sgn(**f) != **y).count() as f64 / k;
    Ok(FrozenNormReport {
        n,
        m: cfg.m,
        rho: cfg.rho,
        steps: traj.steps(),
        r_estimate,
        ratio: r_estimate / (n as f64).sqrt(),
        reached: last.dist_init >= stop,
        train_logistic: last.emp_risk,
        test_logistic,
        test_zero_one,
        preprocessing: "pixels / 255 / sqrt(d), then divided by max(1, norm)".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Distribution, DistributionSpec};

    #[test]
    fn stops_at_target_ratio() {
        let d = Distribution::new(DistributionSpec::SphereCapTeacher { dim: 5, beta: 8.0, min_cos: -1.0 }, false).unwrap();
        let train = d.sample(400, 1).unwrap();
        let test = d.sample(400, 2).unwrap();
        let cfg = FrozenNormConfig {
            m: 128,
            target_ratio: 0.3,
            ..Default::default()
        };
        let r = frozen_norm_experiment(&train, &test, &cfg).unwrap();
        assert!(r.reached);
        assert!(r.ratio >= 0.3);
        assert!(r.test_zero_one < 0.35, "{r:?}");
        assert!(r.train_logistic < std::f64::consts::LN_2);
    }
}
