//! One end-to-end run: sample, initialize, train, select `W≤t`, evaluate,
//! check the monitors and evaluate the bound.

use serde::{Deserialize, Serialize};

use super::bounds::{compute_bound_terms, BoundInputs, BoundTerms};
use super::regime::RegimeConfig;
use crate::distributions::{Distribution, EvalScheme, LabeledSample, PopulationEvaluator, PopulationRisk};
use crate::engine::{EngineKind, Head};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::network::Network;
use crate::reference::{infinite_population_risk, sample_reference, InfiniteWidthModel};
use crate::seed::{derive_seed, stream};
use crate::trainer::{frozen_empirical_risk, train, train_frozen, MonitorVerdicts, Radius, TrainConfig, TrainStatus, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MONITOR_VIOLATION: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Seeds of one run, all derived from `root`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub root: u64,
    pub data: u64,
    pub network: u64,
    pub mc_features: u64,
    pub evaluator: u64,
}

impl RunSeeds {
    pub fn new(root: u64) -> Self {
        RunSeeds {
            root,
            data: derive_seed(root, &[stream::DATA]),
            network: derive_seed(root, &[stream::NETWORK]),
            mc_features: derive_seed(root, &[stream::MC_FEATURES]),
            evaluator: derive_seed(root, &[stream::EVALUATOR]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSummary {
    pub r_sup: f64,
    /// `R(Ū∞)` on the evaluation points.
    pub risk: f64,
    pub risk_se: f64,
    /// `R(Ū∞) − R̄`.
    pub k_bin: f64,
    /// `R̂^{(0)}(Ū)` on the training sample.
    pub empirical_frozen_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub reference: String,
    pub lhs: f64,
    pub rhs: f64,
    pub worst_prefix_excess: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: RegimeConfig,
    pub seeds: RunSeeds,
    pub status: TrainStatus,
    pub engine: String,
    pub selected: Option<usize>,
    pub selected_dist_init: Option<f64>,
    pub selected_emp_risk: Option<f64>,
    /// Population risks of `W≤t` under `φ(f(x; W≤t))`.
    pub population: Option<PopulationRisk>,
    pub bayes_logistic: f64,
    pub bayes_zero_one: f64,
    pub reference: ReferenceSummary,
    /// Monitors run only when `η ≤ 4/ρ²`.
    pub monitors_enabled: bool,
    pub monitors: MonitorVerdicts,
    pub regret: Vec<RegretSummary>,
    pub bound: BoundTerms,
    /// `true` unless the bound is vacuous or the measured excess respects it.
    pub bound_consistent: bool,
}

impl ExperimentReport {
    pub fn monitors_pass(&self) -> bool {
        self.monitors.all_pass()
    }

    /// 0 on success, 2 on a monitor violation, 3 on divergence.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            TrainStatus::Diverged { .. } => EXIT_DIVERGED,
            TrainStatus::Completed if !self.monitors_pass() => EXIT_MONITOR_VIOLATION,
            TrainStatus::Completed => EXIT_OK,
        }
    }

    pub fn excess_logistic(&self) -> Option<f64> {
        self.population.map(|p| p.breakdown.excess_logistic)
    }
}

/// Everything a run produces, including the trajectory and final weights.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub trajectory: Trajectory,
    pub network: Network,
    pub sample: LabeledSample,
}

pub fn evaluator_for(dist: &Distribution, cfg: &RegimeConfig, seeds: &RunSeeds) -> Result<PopulationEvaluator> {
    let scheme = match dist.default_scheme(seeds.evaluator) {
        EvalScheme::Quadrature { .. } => EvalScheme::Quadrature { nodes: cfg.eval_nodes },
        other => other,
    };
    dist.evaluator(scheme)
}

pub fn network_population_risk(net: &Network, weights: &Matrix, eval: &PopulationEvaluator) -> Result<PopulationRisk> {
    let head = Head {
        scale: net.scale(),
        signs: net.signs(),
    };
    eval.risk_from_margins(&eval.network_margins(head, weights, weights, EngineKind::Auto))
}

pub fn run_experiment(cfg: &RegimeConfig) -> Result<ExperimentReport> {
    Ok(run_experiment_full(cfg)?.report)
}

pub fn run_experiment_full(cfg: &RegimeConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let seeds = RunSeeds::new(cfg.seed);
    let dist = Distribution::new(cfg.distribution.clone(), cfg.augment)?;
    let sample = dist.sample(cfg.n, seeds.data)?;
    let eval = evaluator_for(&dist, cfg, &seeds)?;
    let mut net = Network::init(cfg.m, dist.input_dim(), cfg.rho, seeds.network)?;

    let model = InfiniteWidthModel::new(cfg.reference.clone(), cfg.mc_features, seeds.mc_features)?;
    let ubar = sample_reference(&model, &net)?.ubar;
    let (ref_risk, ref_se) = infinite_population_risk(&model, &eval)?;
    let (bayes_logistic, bayes_zero_one) = eval.bayes_risks();
    let emp_ref = frozen_empirical_risk(&net, net.init_weights(), &ubar, &sample)?;

    let w0 = net.init_weights().clone();
    let tc = TrainConfig {
        eta: cfg.eta,
        t_max: cfg.t,
        eps_gd: cfg.eps_gd,
        r_gd: cfg.r_gd,
        seed: cfg.seed,
        monitors: cfg.eta * cfg.rho * cfg.rho <= 4.0 * (1.0 + 1e-12),
    };
    let traj = train(&mut net, &sample, &tc, &[&w0, &ubar])?;
    let monitors = traj.verdicts(cfg.r_gd);
    let regret = ["W0", "Ubar"]
        .iter()
        .enumerate()
        .filter_map(|(k, name)| {
            traj.regret_certificate(k).ok().map(|c| RegretSummary {
                reference: name.to_string(),
                lhs: c.lhs,
                rhs: c.rhs,
                worst_prefix_excess: c.worst_prefix_excess,
                holds: c.holds,
            })
        })
        .collect();
    let population = match &traj.selected_weights {
        Some(w) if matches!(traj.status, TrainStatus::Completed) => Some(network_population_risk(&net, w, &eval)?),
        _ => None,
    };
    let k_bin = (ref_risk - bayes_logistic).max(0.0);
    let bound = compute_bound_terms(
        &BoundInputs {
            m: cfg.m,
            n: cfg.n,
            d: dist.input_dim(),
            rho: cfg.rho,
            t: cfg.t,
            eps_gd: cfg.eps_gd,
            r_gd: cfg.r_gd,
            delta: cfg.delta,
        },
        model.r_sup(),
        ref_risk,
        k_bin,
        Some(emp_ref),
    )?;
    let bound_consistent = bound.vacuous
        || population.is_none_or(|p| p.breakdown.excess_logistic <= bound.total);
    let report = ExperimentReport {
        config: cfg.clone(),
        seeds,
        status: traj.status.clone(),
        engine: traj.engine.clone(),
        selected: traj.selected,
        selected_dist_init: traj.selected_record().map(|r| r.dist_init),
        selected_emp_risk: traj.selected_record().map(|r| r.emp_risk),
        population,
        bayes_logistic,
        bayes_zero_one,
        reference: ReferenceSummary {
            r_sup: model.r_sup(),
            risk: ref_risk,
            risk_se: ref_se,
            k_bin,
            empirical_frozen_risk: emp_ref,
        },
        monitors_enabled: tc.monitors,
        monitors,
        regret,
        bound,
        bound_consistent,
    };
    Ok(ExperimentRun {
        report,
        trajectory: traj,
        network: net,
        sample,
    })
}

/// Result of training the frozen-at-`W0` linear model on the same sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub steps: usize,
    pub emp_risk: f64,
    pub grad_norm: f64,
    pub population: PopulationRisk,
}

/// Gradient descent on `V ↦ R̂^{(0)}(V)` from `W0` with `η = 4/ρ²`, until
/// `‖∇‖ ≤ grad_tol` or `max_steps`. Uses the same sample, network and
/// evaluator as [`run_experiment`] for this config.
pub fn frozen_oracle(cfg: &RegimeConfig, max_steps: usize, grad_tol: f64) -> Result<OracleReport> {
    cfg.validate()?;
    let seeds = RunSeeds::new(cfg.seed);
    let dist = Distribution::new(cfg.distribution.clone(), cfg.augment)?;
    let sample = dist.sample(cfg.n, seeds.data)?;
    let eval = evaluator_for(&dist, cfg, &seeds)?;
    let mut net = Network::init(cfg.m, dist.input_dim(), cfg.rho, seeds.network)?;
    let tc = TrainConfig {
        eta: 4.0 / (cfg.rho * cfg.rho),
        t_max: 1,
        eps_gd: cfg.eps_gd,
        r_gd: Radius::Infinite,
        seed: cfg.seed,
        monitors: false,
    };
    let mut steps = 0;
    let mut last = None;
    // chunks of 50 steps keep the trajectory small
    while steps < max_steps {
        let chunk = (max_steps - steps).min(50);
        let t = train_frozen(&mut net, &sample, &TrainConfig { t_max: chunk, ..tc }, &[])?;
        let rec = t.records.last().cloned().expect("nonempty trajectory");
        steps += chunk;
        let done = t.records.iter().any(|r| r.grad_norm <= grad_tol);
        last = Some(rec);
        if done {
            break;
        }
    }
    let rec = last.expect("at least one chunk");
    let head = Head {
        scale: net.scale(),
        signs: net.signs(),
    };
    let margins = eval.network_margins(head, net.init_weights(), net.weights(), EngineKind::Auto);
    Ok(OracleReport {
        steps,
        emp_risk: rec.emp_risk,
        grad_norm: rec.grad_norm,
        population: eval.risk_from_margins(&margins)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::regime::{derive_regime, Regime, RegimeExtras};

    fn small() -> RegimeConfig {
        let mut c = derive_regime(Regime::Clairvoyant, 0.5, RegimeExtras::default()).unwrap();
        c.n = 256;
        c.t = 5;
        c.mc_features = 2000;
        c
    }

    #[test]
    fn small_run_passes_monitors_and_round_trips() {
        let r = run_experiment(&small()).unwrap();
        assert_eq!(r.exit_code(), EXIT_OK);
        assert!(r.monitors_pass());
        assert!(r.population.is_some());
        assert!(r.bound.vacuous);
        assert!(r.bound_consistent);
        assert_eq!(r.regret.len(), 2);
        let text = serde_json::to_string(&r).unwrap();
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn runs_are_reproducible() {
        let a = run_experiment(&small()).unwrap();
        let b = run_experiment(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 1;
        assert_ne!(run_experiment(&other).unwrap().population, a.population);
    }

    #[test]
    fn divergence_maps_to_exit_code() {
        let mut c = small();
        c.eta = 1e9;
        c.t = 20;
        let run = run_experiment_full(&c).unwrap();
        assert!(matches!(run.report.status, TrainStatus::Diverged { .. }));
        assert_eq!(run.report.exit_code(), EXIT_DIVERGED);
    }

    #[test]
    fn oracle_reduces_gradient() {
        let o = frozen_oracle(&small(), 200, 1e-12).unwrap();
        assert_eq!(o.steps, 200);
        assert!(o.population.breakdown.excess_logistic >= 0.0);
    }
}
