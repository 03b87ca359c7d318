//! Monte Carlo checks of the concentration and linearization bounds used in
//! the analysis: Gaussian row counts, activation flips, the linearization gap
//! over the sphere, frozen-risk ratios along a run and the generalization gap.
//!
//! Bound constants are evaluated exactly as stated, so most bounds are far
//! from tight at these sizes.

use std::f64::consts::E;

use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::distributions::{Distribution, DistributionSpec, EvalScheme, LabeledSample, PopulationEvaluator};
use crate::engine::{Engine, EngineKind, Head, PointSet};
use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::network::Network;
use crate::reference::{sample_reference, InfiniteWidthModel, WeightMap};
use crate::seed::{self, derive_seed, stream};
use crate::summary::{log_log_slope, median};
use crate::trainer::{frozen_empirical_risk, train, Radius, TrainConfig, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    GaussCount,
    FlipCount,
    SphereGap,
    RiskRatio,
    GenGap,
}

impl LemmaId {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "gauss-count" => LemmaId::GaussCount,
            "flip-count" => LemmaId::FlipCount,
            "sphere-gap" => LemmaId::SphereGap,
            "risk-ratio" => LemmaId::RiskRatio,
            "gen-gap" => LemmaId::GenGap,
            _ => {
                return Err(Error::Unknown {
                    kind: "lemma",
                    name: name.to_string(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Pass iff `freq ≤ nominal + 3√(nominal(1−nominal)/trials)`.
pub fn verdict(frequency: f64, nominal: f64, trials: usize) -> Verdict {
    let slack = 3.0 * (nominal * (1.0 - nominal) / trials.max(1) as f64).sqrt();
    if frequency <= nominal + slack {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaCheckReport {
    pub lemma: LemmaId,
    pub trials: usize,
    pub failures: usize,
    pub observed_frequency: f64,
    pub nominal: f64,
    pub observed_max: f64,
    pub observed_median: f64,
    /// Bound value; per-trial bounds are reported through their median.
    pub bound: f64,
    pub verdict: Verdict,
    pub details: serde_json::Value,
}

impl LemmaCheckReport {
    fn new(lemma: LemmaId, stats: &[f64], bounds: &[f64], nominal: f64, details: serde_json::Value) -> Self {
        let trials = stats.len();
        let failures = stats.iter().zip(bounds).filter(|(s, b)| s > b).count();
        let observed_frequency = failures as f64 / trials.max(1) as f64;
        LemmaCheckReport {
            lemma,
            trials,
            failures,
            observed_frequency,
            nominal,
            observed_max: stats.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            observed_median: median(stats),
            bound: median(bounds),
            verdict: verdict(observed_frequency, nominal, trials),
            details,
        }
    }
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seed::rng(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape")
}

fn random_unit(d: usize, seed: u64) -> Vec<f64> {
    let v = gaussian_matrix(1, d, seed).as_slice().to_vec();
    let n = norm(&v);
    v.iter().map(|x| x / n).collect()
}

/// `mτ + √(8mτ ln(1/δ))`.
pub fn gauss_count_bound(m: usize, tau: f64, delta: f64) -> f64 {
    let mt = m as f64 * tau;
    mt + (8.0 * mt * (1.0 / delta).ln()).sqrt()
}

/// `E #{j : |w_jᵀx| ≤ τ‖x‖} = m(2Φ(τ) − 1)`.
pub fn gauss_count_expected(m: usize, tau: f64) -> f64 {
    m as f64 * erf(tau / std::f64::consts::SQRT_2)
}

/// Counts `#{j : |w_jᵀx| ≤ τ‖x‖}` over fresh `m × d` Gaussian matrices.
pub fn gaussian_row_count_check(m: usize, d: usize, tau: f64, trials: usize, delta: f64, seed: u64) -> Result<LemmaCheckReport> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid("tau must lie in (0, 1)"));
    }
    check_common(m, d, trials, delta)?;
    let x = random_unit(d, derive_seed(seed, &[stream::DATA]));
    let counts: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = gaussian_matrix(m, d, derive_seed(seed, &[stream::NETWORK, t as u64]));
            (0..m).filter(|&j| dot(w.row(j), &x).abs() <= tau).count() as f64
        })
        .collect();
    let bound = gauss_count_bound(m, tau, delta);
    let mean = counts.iter().sum::<f64>() / trials as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (trials as f64 - 1.0).max(1.0);
    let details = serde_json::json!({
        "m": m, "d": d, "tau": tau, "delta": delta,
        "mean_count": mean,
        "mean_count_se": (var / trials as f64).sqrt(),
        "expected_count": gauss_count_expected(m, tau),
    });
    Ok(LemmaCheckReport::new(LemmaId::GaussCount, &counts, &vec![bound; trials], 3.0 * delta, details))
}

fn check_common(m: usize, d: usize, trials: usize, delta: f64) -> Result<()> {
    if m == 0 || d == 0 || trials == 0 {
        return Err(Error::invalid("m, d and trials must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipStats {
    pub m: usize,
    pub max: usize,
    pub mean: f64,
    pub max_fraction: f64,
    /// `‖W_after − W_before‖`.
    pub r_v: f64,
    pub r: f64,
    pub bound: f64,
}

/// `rm + √(8rm ln(1/δ)) + R_V²/r²` at `r = R_V^{2/3} m^{−1/3}`; zero when `R_V = 0`.
pub fn flip_bound(m: usize, r_v: f64, delta: f64) -> (f64, f64) {
    if r_v == 0.0 {
        return (0.0, 0.0);
    }
    let mf = m as f64;
    let r = r_v.powf(2.0 / 3.0) * mf.powf(-1.0 / 3.0);
    (r, r * mf + (8.0 * r * mf * (1.0 / delta).ln()).sqrt() + r_v * r_v / (r * r))
}

/// Per-example counts of rows whose activation differs between two matrices.
pub fn activation_flip_count(before: &Matrix, after: &Matrix, sample: &PointSet, delta: f64) -> Result<FlipStats> {
    before.same_shape(after)?;
    if sample.dim() != before.cols() {
        return Err(Error::DimensionMismatch {
            expected: before.cols(),
            got: sample.dim(),
        });
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let m = before.rows();
    let counts: Vec<usize> = sample
        .iter()
        .map(|x| {
            (0..m)
                .filter(|&j| (dot(before.row(j), x) >= 0.0) != (dot(after.row(j), x) >= 0.0))
                .count()
        })
        .collect();
    let max = counts.iter().copied().max().unwrap_or(0);
    let r_v = before.dist(after);
    let (r, bound) = flip_bound(m, r_v, delta);
    Ok(FlipStats {
        m,
        max,
        mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        max_fraction: max as f64 / m as f64,
        r_v,
        r,
        bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SphereMode {
    Grid,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereGapReport {
    /// Largest gap found; a lower bound on the supremum.
    pub sup_gap: f64,
    pub points: usize,
    pub mode: SphereMode,
    pub r_v: f64,
    pub bound: f64,
}

/// `25ρR_V^{4/3}√(ln(edm/δ))/m^{1/6}`.
pub fn sphere_gap_bound(rho: f64, r_v: f64, d: usize, m: usize, delta: f64) -> f64 {
    let mf = m as f64;
    25.0 * rho * r_v.powf(4.0 / 3.0) * (E * d as f64 * mf / delta).ln().sqrt() / mf.powf(1.0 / 6.0)
}

/// Points on the unit sphere: a regular grid for `d ≤ 3` (`resolution` angles,
/// or a Fibonacci lattice of `resolution²` points when `d = 3`), else
/// `mc_points` uniform draws.
pub fn sphere_points(d: usize, resolution: usize, mc_points: usize, seed: u64) -> (PointSet, SphereMode) {
    let rows: Vec<Vec<f64>> = match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..resolution)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / resolution as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let n = resolution * resolution;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let g = gaussian_matrix(mc_points, d, seed);
            (0..mc_points)
                .map(|i| {
                    let n = norm(g.row(i));
                    g.row(i).iter().map(|v| v / n).collect()
                })
                .collect()
        }
    };
    let mode = if d <= 3 { SphereMode::Grid } else { SphereMode::MonteCarlo };
    (PointSet::new(Matrix::from_rows(&rows).expect("rows")), mode)
}

/// `sup_x |f(x; V) − ⟨∇f(x; W0), V⟩|` over sphere points (both sides are
/// positively homogeneous in `x`, so the sphere carries the unit-ball supremum).
pub fn sphere_linearization_gap(net: &Network, v: &Matrix, resolution: usize, seed: u64, delta: f64) -> Result<SphereGapReport> {
    net.weights().same_shape(v)?;
    let d = net.input_dim();
    let (points, mode) = sphere_points(d, resolution.max(1), 100_000, seed);
    let engine = Engine::new(&points, EngineKind::Dense);
    let head = Head {
        scale: net.scale(),
        signs: net.signs(),
    };
    let mut full = vec![0.0; points.len()];
    let mut lin = vec![0.0; points.len()];
    engine.predict(head, v, v, &mut full);
    engine.predict(head, net.init_weights(), v, &mut lin);
    let sup_gap = full.iter().zip(&lin).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let r_v = v.dist(net.init_weights());
    Ok(SphereGapReport {
        sup_gap,
        points: points.len(),
        mode,
        r_v,
        bound: sphere_gap_bound(net.rho(), r_v, d, net.width(), delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskRatioReport {
    pub max_ratio: f64,
    /// `(i, j)` attaining `R̂^{(i)}(B)/R̂^{(j)}(B)`.
    pub argmax: (usize, usize),
    pub iterates: usize,
    pub r_b: f64,
    pub r_v: f64,
    pub bound: f64,
}

/// `exp(6ρ(R_B + 2R_V)R_V^{1/3} ln(e/δ)^{1/4}/m^{1/6})`.
pub fn risk_ratio_bound(rho: f64, r_b: f64, r_v: f64, m: usize, delta: f64) -> f64 {
    (6.0 * rho * (r_b + 2.0 * r_v) * r_v.powf(1.0 / 3.0) * (E / delta).ln().powf(0.25) / (m as f64).powf(1.0 / 6.0)).exp()
}

/// `R̂^{(i)}(B)/R̂^{(j)}(B)` from a trajectory that monitored `B` as reference `reference`.
pub fn risk_ratio(traj: &Trajectory, reference: usize, i: usize, j: usize) -> Result<f64> {
    let get = |k: usize| -> Result<f64> {
        traj.records
            .get(k)
            .and_then(|r| r.ref_frozen_risks.get(reference).copied())
            .ok_or_else(|| Error::invalid(format!("no frozen risk for iterate {k}, reference {reference}")))
    };
    Ok(get(i)? / get(j)?)
}

/// Max over iterate pairs within `r_v` of the frozen-risk ratio at `B`.
pub fn risk_ratio_check(traj: &Trajectory, reference: usize, r_b: f64, r_v: f64, m: usize, delta: f64) -> Result<RiskRatioReport> {
    let within: Vec<(usize, f64)> = traj
        .records
        .iter()
        .filter(|r| r.dist_init <= r_v)
        .map(|r| {
            r.ref_frozen_risks
                .get(reference)
                .map(|&v| (r.iter, v))
                .ok_or_else(|| Error::invalid("trajectory did not monitor this reference"))
        })
        .collect::<Result<_>>()?;
    if within.is_empty() {
        return Err(Error::invalid("no iterate within the radius"));
    }
    let hi = within.iter().copied().fold(within[0], |a, b| if b.1 > a.1 { b } else { a });
    let lo = within.iter().copied().fold(within[0], |a, b| if b.1 < a.1 { b } else { a });
    Ok(RiskRatioReport {
        max_ratio: hi.1 / lo.1,
        argmax: (hi.0, lo.0),
        iterates: within.len(),
        r_b,
        r_v,
        bound: risk_ratio_bound(traj.rho, r_b, r_v, m, delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenGapReport {
    pub n: usize,
    pub population: f64,
    pub empirical: f64,
    /// `population − empirical`.
    pub gap: f64,
    pub population_se: Option<f64>,
    pub r_v: f64,
    pub bound: f64,
}

/// `80ρR_V(d ln(em²d³/δ))^{3/2}/√n`.
pub fn gen_gap_bound(rho: f64, r_v: f64, d: usize, m: usize, n: usize, delta: f64) -> f64 {
    let (mf, df) = (m as f64, d as f64);
    80.0 * rho * r_v * (df * (E * mf * mf * df.powi(3) / delta).ln()).powf(1.5) / (n as f64).sqrt()
}

/// Population minus empirical risk of the frozen-at-`W0` predictor at `V`.
pub fn generalization_gap(net: &Network, v: &Matrix, train: &LabeledSample, eval: &PopulationEvaluator, delta: f64) -> Result<GenGapReport> {
    let empirical = frozen_empirical_risk(net, net.init_weights(), v, train)?;
    let head = Head {
        scale: net.scale(),
        signs: net.signs(),
    };
    let margins = eval.network_margins(head, net.init_weights(), v, EngineKind::Auto);
    let pop = eval.risk_from_margins(&margins)?;
    let r_v = v.dist(net.init_weights());
    Ok(GenGapReport {
        n: train.len(),
        population: pop.breakdown.logistic_risk,
        empirical,
        gap: pop.breakdown.logistic_risk - empirical,
        population_se: pop.se,
        r_v,
        bound: gen_gap_bound(net.rho(), r_v, net.input_dim(), net.width(), train.len(), delta),
    })
}

/// `W0 + r·Δ/‖Δ‖` for a Gaussian direction `Δ`.
pub fn perturbed_init(net: &Network, radius: f64, seed: u64) -> Matrix {
    let delta = gaussian_matrix(net.width(), net.input_dim(), derive_seed(seed, &[stream::PERTURBATION]));
    let mut v = net.init_weights().clone();
    v.axpy(radius / delta.frobenius(), &delta);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSweep {
    pub ns: Vec<usize>,
    /// `abs_gaps[k][s]`: `|gap|` at `ns[k]` for seed `s`.
    pub abs_gaps: Vec<Vec<f64>>,
    pub medians: Vec<f64>,
    pub bounds: Vec<f64>,
    pub slope: Option<f64>,
}

/// Frozen-feature generalization gap at a fixed `V` at `radius` from `W0`,
/// over a grid of sample sizes; samples are nested prefixes per seed.
pub fn gen_gap_sweep(
    dist: &Distribution,
    m: usize,
    rho: f64,
    radius: f64,
    ns: &[usize],
    seeds: usize,
    root: u64,
    delta: f64,
) -> Result<GenSweep> {
    let n_max = *ns.iter().max().ok_or_else(|| Error::invalid("empty sample-size grid"))?;
    let eval = dist.evaluator(dist.default_scheme(derive_seed(root, &[stream::EVALUATOR])))?;
    let per_seed: Vec<Vec<(f64, f64)>> = (0..seeds as u64)
        .into_par_iter()
        .map(|s| -> Result<Vec<(f64, f64)>> {
            let seed = derive_seed(root, &[s]);
            let net = Network::init(m, dist.input_dim(), rho, derive_seed(seed, &[stream::NETWORK]))?;
            let v = perturbed_init(&net, radius, seed);
            let sample = dist.sample(n_max, derive_seed(seed, &[stream::DATA]))?;
            ns.iter()
                .map(|&n| {
                    let r = generalization_gap(&net, &v, &sample.prefix(n), &eval, delta)?;
                    Ok((r.gap.abs(), r.bound))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let abs_gaps: Vec<Vec<f64>> = (0..ns.len()).map(|k| per_seed.iter().map(|s| s[k].0).collect()).collect();
    let bounds: Vec<f64> = (0..ns.len()).map(|k| per_seed[0][k].1).collect();
    let medians: Vec<f64> = abs_gaps.iter().map(|g| median(g)).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    Ok(GenSweep {
        ns: ns.to_vec(),
        slope: log_log_slope(&xs, &medians),
        abs_gaps,
        medians,
        bounds,
    })
}

/// Parameters for the `lemma-check` runners; unused fields are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LemmaCheckConfig {
    pub m: usize,
    pub d: usize,
    pub n: usize,
    pub tau: f64,
    pub trials: usize,
    pub delta: f64,
    pub rho: f64,
    pub steps: usize,
    pub radius: f64,
    pub resolution: usize,
    pub distribution: DistributionSpec,
    pub seed: u64,
}

impl Default for LemmaCheckConfig {
    fn default() -> Self {
        LemmaCheckConfig {
            m: 1000,
            d: 2,
            n: 1024,
            tau: 0.1,
            trials: 1000,
            delta: 0.05,
            rho: 1.0,
            steps: 50,
            radius: 1.0,
            resolution: 720,
            distribution: DistributionSpec::Logistic1d { c: 2.0, lo: -1.0, hi: 1.0 },
            seed: 0,
        }
    }
}

/// One trained run on the configured distribution (augmented), monitoring
/// the sampled constant-teacher reference.
fn pinned_run(cfg: &LemmaCheckConfig, trial: u64) -> Result<(Network, LabeledSample, Trajectory, Matrix)> {
    let dist = Distribution::new(cfg.distribution.clone(), true)?;
    let seed = derive_seed(cfg.seed, &[trial]);
    let sample = dist.sample(cfg.n, derive_seed(seed, &[stream::DATA]))?;
    let mut net = Network::init(cfg.m, dist.input_dim(), cfg.rho, derive_seed(seed, &[stream::NETWORK]))?;
    let mut teacher = vec![0.0; dist.input_dim()];
    teacher[0] = 1.0;
    let model = InfiniteWidthModel::new(WeightMap::Constant { vector: teacher }, 1, seed)?;
    let b = sample_reference(&model, &net)?.ubar;
    let tc = TrainConfig {
        eta: 4.0 / (cfg.rho * cfg.rho),
        t_max: cfg.steps,
        eps_gd: 1.0,
        r_gd: Radius::Infinite,
        seed,
        monitors: true,
    };
    let traj = train(&mut net, &sample, &tc, &[&b])?;
    Ok((net, sample, traj, b))
}

pub fn run_lemma_check(lemma: LemmaId, cfg: &LemmaCheckConfig) -> Result<LemmaCheckReport> {
    check_common(cfg.m, cfg.d, cfg.trials, cfg.delta)?;
    match lemma {
        LemmaId::GaussCount => gaussian_row_count_check(cfg.m, cfg.d, cfg.tau, cfg.trials, cfg.delta, cfg.seed),
        LemmaId::FlipCount => {
            let runs: Vec<FlipStats> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| {
                    let (net, sample, _, _) = pinned_run(cfg, t)?;
                    activation_flip_count(net.init_weights(), net.weights(), sample.inputs(), cfg.delta)
                })
                .collect::<Result<_>>()?;
            let stats: Vec<f64> = runs.iter().map(|r| r.max as f64).collect();
            let bounds: Vec<f64> = runs.iter().map(|r| r.bound).collect();
            let details = serde_json::json!({
                "m": cfg.m, "n": cfg.n, "rho": cfg.rho, "steps": cfg.steps,
                "max_fraction": runs.iter().map(|r| r.max_fraction).fold(0.0, f64::max),
                "median_r_v": median(&runs.iter().map(|r| r.r_v).collect::<Vec<_>>()),
            });
            Ok(LemmaCheckReport::new(LemmaId::FlipCount, &stats, &bounds, cfg.delta, details))
        }
        LemmaId::SphereGap => {
            let runs: Vec<SphereGapReport> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(cfg.seed, &[t]);
                    let net = Network::init(cfg.m, cfg.d, cfg.rho, derive_seed(seed, &[stream::NETWORK]))?;
                    let v = perturbed_init(&net, cfg.radius, seed);
                    sphere_linearization_gap(&net, &v, cfg.resolution, seed, cfg.delta)
                })
                .collect::<Result<_>>()?;
            let stats: Vec<f64> = runs.iter().map(|r| r.sup_gap).collect();
            let bounds: Vec<f64> = runs.iter().map(|r| r.bound).collect();
            let details = serde_json::json!({
                "m": cfg.m, "d": cfg.d, "rho": cfg.rho, "radius": cfg.radius,
                "points": runs[0].points, "mode": runs[0].mode,
            });
            Ok(LemmaCheckReport::new(LemmaId::SphereGap, &stats, &bounds, cfg.delta, details))
        }
        LemmaId::RiskRatio => {
            let runs: Vec<RiskRatioReport> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| {
                    let (net, _, traj, b) = pinned_run(cfg, t)?;
                    let r_v = traj.records.iter().map(|r| r.dist_init).fold(0.0, f64::max);
                    risk_ratio_check(&traj, 0, b.dist(net.init_weights()), r_v, cfg.m, cfg.delta)
                })
                .collect::<Result<_>>()?;
            let stats: Vec<f64> = runs.iter().map(|r| r.max_ratio).collect();
            let bounds: Vec<f64> = runs.iter().map(|r| r.bound).collect();
            let details = serde_json::json!({ "m": cfg.m, "n": cfg.n, "rho": cfg.rho, "steps": cfg.steps });
            Ok(LemmaCheckReport::new(LemmaId::RiskRatio, &stats, &bounds, cfg.delta, details))
        }
        LemmaId::GenGap => {
            let dist = Distribution::new(cfg.distribution.clone(), true)?;
            let eval = dist.evaluator(EvalScheme::Quadrature { nodes: 2048 })?;
            let runs: Vec<GenGapReport> = (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| {
                    let seed = derive_seed(cfg.seed, &[t]);
                    let net = Network::init(cfg.m, dist.input_dim(), cfg.rho, derive_seed(seed, &[stream::NETWORK]))?;
                    let v = perturbed_init(&net, cfg.radius, seed);
                    let sample = dist.sample(cfg.n, derive_seed(seed, &[stream::DATA]))?;
                    generalization_gap(&net, &v, &sample, &eval, cfg.delta)
                })
                .collect::<Result<_>>()?;
            let stats: Vec<f64> = runs.iter().map(|r| r.gap).collect();
            let bounds: Vec<f64> = runs.iter().map(|r| r.bound).collect();
            let details = serde_json::json!({ "m": cfg.m, "n": cfg.n, "rho": cfg.rho, "radius": cfg.radius });
            // the bound holds with probability 1 − 6δ
            Ok(LemmaCheckReport::new(LemmaId::GenGap, &stats, &bounds, (6.0 * cfg.delta).min(1.0), details))
        }
    }
}
