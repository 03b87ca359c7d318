//! Synthetic distributions with a known conditional probability `p_y`,
//! samplers, and population risk evaluators.
//!
//! One-dimensional marginals are uniform on `[lo, hi]` and are evaluated by
//! composite Gauss–Legendre quadrature; the d-dimensional sphere-cap family
//! is evaluated by seeded Monte Carlo with a reported standard error.
//! Population quantities are always computed against the exact `p_y`.
//!
//! Built-in catalog:
//!
//! | name | marginal | `p_y(x)` | `R̄` | `R̄_z` |
//! |------|----------|----------|-----|-------|
//! | `logistic-1d` | U[lo,hi] | `φ(c·x)` | quadrature (`ln 2` at `c = 0`) | closed form |
//! | `step-1d` | U[lo,hi] | `0.3 + 0.4·1[x > 0]` | `H(0.3)` | `0.3` |
//! | `smooth-step-1d` | U[lo,hi] | `0.3 + 0.4·φ(x/width)` | quadrature | quadrature |
//! | `constant` | U[lo,hi] | `p` | `H(p)` | `min(p, 1−p)` |
//! | `sphere-cap-teacher` | uniform on `{‖x‖ = 1, x₁ ≥ min_cos}` | `φ(β⟨u, x⟩)` | Monte Carlo | Monte Carlo |
//!
//! `H` is the binary entropy in nats.

mod idx;
pub mod quadrature;

pub use idx::{class_pair_sample, load_idx, parse_images, parse_labels, IdxImages};

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineKind, Head, PointSet};
use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};
use crate::metrics::{self, binary_entropy, logistic_loss, sigmoid, CondProb, RiskBreakdown, WeightedPrediction};
use crate::seed;

/// Minimum node count for one-dimensional quadrature.
pub const MIN_QUADRATURE_NODES: usize = 512;

fn neg_one() -> f64 {
    -1.0
}

fn one() -> f64 {
    1.0
}

/// Which built-in family and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Logistic1d {
        c: f64,
        #[serde(default = "neg_one")]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    Step1d {
        #[serde(default = "neg_one")]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    SmoothStep1d {
        width: f64,
        #[serde(default = "neg_one")]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    Constant {
        p: f64,
        #[serde(default = "neg_one")]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
    },
    SphereCapTeacher {
        dim: usize,
        beta: f64,
        #[serde(default)]
        min_cos: f64,
    },
}

pub struct CatalogEntry {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub description: &'static str,
}

pub fn builtin_distributions() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "logistic-1d",
            params: &["c", "lo", "hi"],
            description: "uniform marginal, p_y = sigmoid(c x); realizable by a linear teacher",
        },
        CatalogEntry {
            name: "step-1d",
            params: &["lo", "hi"],
            description: "uniform marginal, p_y = 0.3 + 0.4 [x > 0]; discontinuous and noisy",
        },
        CatalogEntry {
            name: "smooth-step-1d",
            params: &["width", "lo", "hi"],
            description: "uniform marginal, p_y = 0.3 + 0.4 sigmoid(x / width); continuous step",
        },
        CatalogEntry {
            name: "constant",
            params: &["p", "lo", "hi"],
            description: "uniform marginal, p_y = p; pure label noise",
        },
        CatalogEntry {
            name: "sphere-cap-teacher",
            params: &["dim", "beta", "min_cos"],
            description: "uniform on a unit-sphere cap around e_1, p_y = sigmoid(beta <e_1, x>)",
        },
    ]
}

impl DistributionSpec {
    /// Looks a family up by catalog name; missing parameters take defaults.
    pub fn from_name(name: &str, params: &std::collections::BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
        let (lo, hi) = (get("lo", -1.0), get("hi", 1.0));
        Ok(match name {
            "logistic-1d" => DistributionSpec::Logistic1d { c: get("c", 2.0), lo, hi },
            "step-1d" => DistributionSpec::Step1d { lo, hi },
            "smooth-step-1d" => DistributionSpec::SmoothStep1d {
                width: get("width", 0.1),
                lo,
                hi,
            },
            "constant" => DistributionSpec::Constant { p: get("p", 0.75), lo, hi },
            "sphere-cap-teacher" => DistributionSpec::SphereCapTeacher {
                dim: get("dim", 3.0) as usize,
                beta: get("beta", 2.0),
                min_cos: get("min_cos", 0.0),
            },
            other => {
                return Err(Error::Unknown {
                    kind: "distribution",
                    name: other.to_string(),
                })
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            DistributionSpec::Logistic1d { .. } => "logistic-1d",
            DistributionSpec::Step1d { .. } => "step-1d",
            DistributionSpec::SmoothStep1d { .. } => "smooth-step-1d",
            DistributionSpec::Constant { .. } => "constant",
            DistributionSpec::SphereCapTeacher { .. } => "sphere-cap-teacher",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let interval = |lo: f64, hi: f64| {
            if !(lo < hi) || lo < -1.0 || hi > 1.0 {
                Err(Error::invalid(format!("interval [{lo}, {hi}] must lie in [-1, 1]")))
            } else {
                Ok(())
            }
        };
        match *self {
            DistributionSpec::Logistic1d { lo, hi, .. } | DistributionSpec::Step1d { lo, hi } => interval(lo, hi),
            DistributionSpec::SmoothStep1d { width, lo, hi } => {
                if !(width > 0.0) {
                    return Err(Error::invalid("width must be positive"));
                }
                interval(lo, hi)
            }
            DistributionSpec::Constant { p, lo, hi } => {
                CondProb::new(p)?;
                interval(lo, hi)
            }
            DistributionSpec::SphereCapTeacher { dim, min_cos, .. } => {
                if dim < 2 {
                    return Err(Error::invalid("sphere cap needs dim >= 2"));
                }
                if !(-1.0..=0.9).contains(&min_cos) {
                    return Err(Error::invalid("min_cos must lie in [-1, 0.9]"));
                }
                Ok(())
            }
        }
    }
}

/// How population risks are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvalScheme {
    Quadrature { nodes: usize },
    MonteCarlo { points: usize, seed: u64 },
}

/// A joint distribution of `(x, y)` with known `p_y`, optionally presenting
/// bias-augmented inputs `(x, 1)/√2` to models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub spec: DistributionSpec,
    pub augment: bool,
}

/// Labeled points; `labels` are ±1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    inputs: PointSet,
    labels: Vec<f64>,
    seed: Option<u64>,
}

impl LabeledSample {
    pub fn new(inputs: PointSet, labels: Vec<f64>, seed: Option<u64>) -> Self {
        assert_eq!(inputs.len(), labels.len());
        LabeledSample { inputs, labels, seed }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &PointSet {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.inputs.dim()
    }

    /// First `n` examples.
    pub fn prefix(&self, n: usize) -> LabeledSample {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        LabeledSample {
            inputs: self.inputs.select(&idx),
            labels: self.labels[..n].to_vec(),
            seed: self.seed,
        }
    }

    /// Raw scalar coordinates of one-dimensional samples.
    pub fn coords_1d(&self) -> Option<&[f64]> {
        self.inputs.line().map(|l| l.coords.as_slice())
    }
}

impl Distribution {
    pub fn new(spec: DistributionSpec, augment: bool) -> Result<Self> {
        spec.validate()?;
        Ok(Distribution { spec, augment })
    }

    pub fn is_1d(&self) -> bool {
        !matches!(self.spec, DistributionSpec::SphereCapTeacher { .. })
    }

    pub fn raw_dim(&self) -> usize {
        match self.spec {
            DistributionSpec::SphereCapTeacher { dim, .. } => dim,
            _ => 1,
        }
    }

    /// Dimension of the model inputs (after augmentation).
    pub fn input_dim(&self) -> usize {
        self.raw_dim() + usize::from(self.augment)
    }

    /// Support of a one-dimensional marginal.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self.spec {
            DistributionSpec::Logistic1d { lo, hi, .. }
            | DistributionSpec::Step1d { lo, hi }
            | DistributionSpec::SmoothStep1d { lo, hi, .. }
            | DistributionSpec::Constant { lo, hi, .. } => Some((lo, hi)),
            DistributionSpec::SphereCapTeacher { .. } => None,
        }
    }

    /// `p_y` at a raw (unaugmented) point, clamped into `[0, 1]`.
    pub fn cond_prob(&self, x: &[f64]) -> f64 {
        let p = match self.spec {
            DistributionSpec::Logistic1d { c, .. } => sigmoid(c * x[0]),
            DistributionSpec::Step1d { .. } => {
                if x[0] > 0.0 {
                    0.7
                } else {
                    0.3
                }
            }
            DistributionSpec::SmoothStep1d { width, .. } => 0.3 + 0.4 * sigmoid(x[0] / width),
            DistributionSpec::Constant { p, .. } => p,
            DistributionSpec::SphereCapTeacher { beta, .. } => sigmoid(beta * x[0]),
        };
        CondProb::clamped(p).get()
    }

    /// Bayes-optimal logistic predictor `ln(p_y/(1−p_y))` at a raw point.
    pub fn bayes_margin(&self, x: &[f64]) -> f64 {
        metrics::logit(self.cond_prob(x))
    }

    fn draw_raw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self.spec {
            DistributionSpec::SphereCapTeacher { dim, min_cos, .. } => loop {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = norm(&v);
                if n == 0.0 {
                    continue;
                }
                let x: Vec<f64> = v.iter().map(|a| a / n).collect();
                if x[0] >= min_cos {
                    break x;
                }
            },
            _ => {
                let (lo, hi) = self.support().expect("one-dimensional");
                vec![rng.gen_range(lo..hi)]
            }
        }
    }

    /// Turns raw points into model inputs.
    pub fn inputs_from_raw(&self, raw: &[Vec<f64>]) -> PointSet {
        for x in raw {
            let n = norm(x);
            assert!(n <= 1.0 + 1e-12, "sampled point outside the unit ball: {n}");
        }
        if self.is_1d() {
            let coords = raw.iter().map(|x| x[0]).collect();
            let (origin, direction) = if self.augment {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                (vec![0.0, s], vec![s, 0.0])
            } else {
                (vec![0.0], vec![1.0])
            };
            PointSet::on_line(origin, direction, coords).expect("consistent line")
        } else {
            let d = self.input_dim();
            let mut data = Vec::with_capacity(raw.len() * d);
            for x in raw {
                if self.augment {
                    data.extend(crate::network::augment(x, true).expect("unit ball").into_vec());
                } else {
                    data.extend_from_slice(x);
                }
            }
            PointSet::new(Matrix::from_vec(raw.len(), d, data).expect("consistent shape"))
        }
    }

    /// `n` iid draws; each point's `x` is drawn before its label uniform.
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledSample> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mut rng = seed::rng(seed);
        let mut raw = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x = self.draw_raw(&mut rng);
            let u: f64 = rng.gen();
            labels.push(if u < self.cond_prob(&x) { 1.0 } else { -1.0 });
            raw.push(x);
        }
        Ok(LabeledSample::new(self.inputs_from_raw(&raw), labels, Some(seed)))
    }

    /// Quadrature for one-dimensional families, Monte Carlo otherwise.
    pub fn default_scheme(&self, mc_seed: u64) -> EvalScheme {
        if self.is_1d() {
            EvalScheme::Quadrature {
                nodes: MIN_QUADRATURE_NODES,
            }
        } else {
            EvalScheme::MonteCarlo {
                points: 100_000,
                seed: mc_seed,
            }
        }
    }

    pub fn evaluator(&self, scheme: EvalScheme) -> Result<PopulationEvaluator> {
        match scheme {
            EvalScheme::Quadrature { nodes } => {
                let (lo, hi) = self
                    .support()
                    .ok_or_else(|| Error::invalid("quadrature needs a one-dimensional marginal"))?;
                if nodes < MIN_QUADRATURE_NODES {
                    return Err(Error::invalid(format!(
                        "quadrature needs at least {MIN_QUADRATURE_NODES} nodes"
                    )));
                }
                let rule = quadrature::composite_gauss_legendre(lo, hi, nodes, &[0.0]);
                let width = hi - lo;
                let raw: Vec<Vec<f64>> = rule.iter().map(|&(x, _)| vec![x]).collect();
                let weights = rule.iter().map(|&(_, w)| w / width).collect();
                Ok(PopulationEvaluator {
                    p_y: raw.iter().map(|x| self.cond_prob(x)).collect(),
                    inputs: self.inputs_from_raw(&raw),
                    raw,
                    weights,
                    scheme,
                })
            }
            EvalScheme::MonteCarlo { points, seed } => {
                if points == 0 {
                    return Err(Error::EmptySample);
                }
                let mut rng = seed::rng(seed);
                let raw: Vec<Vec<f64>> = (0..points).map(|_| self.draw_raw(&mut rng)).collect();
                Ok(PopulationEvaluator {
                    p_y: raw.iter().map(|x| self.cond_prob(x)).collect(),
                    inputs: self.inputs_from_raw(&raw),
                    raw,
                    weights: vec![1.0 / points as f64; points],
                    scheme,
                })
            }
        }
    }

    /// Closed-form `(R̄, R̄_z)` where both are available.
    pub fn bayes_closed_form(&self) -> Option<(f64, f64)> {
        Some((self.bayes_logistic_closed_form()?, self.bayes_zero_one_closed_form()?))
    }

    /// Closed-form `R̄`.
    pub fn bayes_logistic_closed_form(&self) -> Option<f64> {
        match self.spec {
            DistributionSpec::Constant { p, .. } => Some(binary_entropy(p)),
            DistributionSpec::Step1d { .. } => Some(binary_entropy(0.3)),
            DistributionSpec::Logistic1d { c: 0.0, .. } => Some(std::f64::consts::LN_2),
            _ => None,
        }
    }

    /// Closed-form `R̄_z`.
    pub fn bayes_zero_one_closed_form(&self) -> Option<f64> {
        match self.spec {
            DistributionSpec::Constant { p, .. } => Some(p.min(1.0 - p)),
            DistributionSpec::Step1d { .. } => Some(0.3),
            DistributionSpec::Logistic1d { c, lo, hi } => {
                if c == 0.0 {
                    return Some(0.5);
                }
                // ∫_0^t φ(−|c|x) dx = t − (ln(1 + e^{|c|t}) − ln 2)/|c|
                let c = c.abs();
                let g = |t: f64| t - (logistic_loss(-c * t) - std::f64::consts::LN_2) / c;
                let mass = |t: f64| if t >= 0.0 { g(t) } else { -g(-t) };
                Some((mass(hi) - mass(lo)) / (hi - lo))
            }
            _ => None,
        }
    }
}

/// Weighted point set with exact `p_y`, weights summing to one.
#[derive(Debug, Clone)]
pub struct PopulationEvaluator {
    inputs: PointSet,
    raw: Vec<Vec<f64>>,
    p_y: Vec<f64>,
    weights: Vec<f64>,
    scheme: EvalScheme,
}

/// Population risk with its evaluation provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRisk {
    pub breakdown: RiskBreakdown,
    /// Monte Carlo standard error of the logistic risk; `None` under quadrature.
    pub se: Option<f64>,
    pub scheme: EvalScheme,
}

impl PopulationEvaluator {
    pub fn inputs(&self) -> &PointSet {
        &self.inputs
    }

    pub fn raw_points(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn p_y(&self) -> &[f64] {
        &self.p_y
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> EvalScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(R̄, R̄_z)` of the evaluation measure.
    pub fn bayes_risks(&self) -> (f64, f64) {
        let pts: Vec<(f64, f64)> = self.p_y.iter().copied().zip(self.weights.iter().copied()).collect();
        metrics::bayes_risks(&pts)
    }

    pub fn risk_from_margins(&self, margins: &[f64]) -> Result<PopulationRisk> {
        if margins.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: margins.len(),
            });
        }
        let preds: Vec<WeightedPrediction> = margins
            .iter()
            .zip(&self.p_y)
            .zip(&self.weights)
            .map(|((&margin, &p), &weight)| WeightedPrediction {
                margin,
                p_y: CondProb::clamped(p),
                weight,
            })
            .collect();
        let breakdown = metrics::risk_breakdown(&preds)?;
        let se = match self.scheme {
            EvalScheme::Quadrature { .. } => None,
            EvalScheme::MonteCarlo { .. } => {
                let n = self.len() as f64;
                let terms: Vec<f64> = margins
                    .iter()
                    .zip(&self.p_y)
                    .map(|(&f, &p)| p * logistic_loss(f) + (1.0 - p) * logistic_loss(-f))
                    .collect();
                let mean = terms.iter().sum::<f64>() / n;
                let var = terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1.0).max(1.0);
                Some((var / n).sqrt())
            }
        };
        Ok(PopulationRisk {
            breakdown,
            se,
            scheme: self.scheme,
        })
    }

    /// Population risk of an arbitrary predictor of the model input.
    pub fn population_risk(&self, predictor: impl Fn(&[f64]) -> f64) -> Result<PopulationRisk> {
        let margins: Vec<f64> = self.inputs.iter().map(predictor).collect();
        self.risk_from_margins(&margins)
    }

    /// Margins of `f^{mask}(·; values)` on the evaluation points.
    pub fn network_margins(&self, head: Head<'_>, mask: &Matrix, values: &Matrix, engine: EngineKind) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        Engine::new(&self.inputs, engine).predict(head, mask, values, &mut out);
        out
    }
}

/// One-dimensional helpers used by the interpolation experiments.
impl Distribution {
    /// `μ_x([a, b])` for the uniform marginal.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (lo, hi) = self.support().expect("one-dimensional");
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            0.0
        } else {
            (b - a) / (hi - lo)
        }
    }

    /// Bayes labels `(left of 0, right of 0)`.
    fn bayes_sides(&self) -> (f64, f64) {
        match self.spec {
            DistributionSpec::Constant { p, .. } => {
                let s = metrics::sgn(2.0 * p - 1.0);
                (s, s)
            }
            DistributionSpec::Logistic1d { c, .. } if c < 0.0 => (1.0, -1.0),
            DistributionSpec::Logistic1d { c: 0.0, .. } => (1.0, 1.0),
            _ => (-1.0, 1.0),
        }
    }

    /// `∫_0^t |2p_y − 1| dx` as an odd function of `t` (Lebesgue measure).
    fn abs_margin_antiderivative(&self, t: f64) -> f64 {
        // ln cosh(y), stable for large |y|
        let lncosh = |y: f64| {
            let a = y.abs();
            a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
        };
        let h = |t: f64| -> f64 {
            match self.spec {
                DistributionSpec::Constant { p, .. } => (2.0 * p - 1.0).abs() * t,
                DistributionSpec::Step1d { .. } => 0.4 * t,
                DistributionSpec::Logistic1d { c, .. } => {
                    if c == 0.0 {
                        0.0
                    } else {
                        2.0 / c.abs() * lncosh(c * t / 2.0)
                    }
                }
                DistributionSpec::SmoothStep1d { width, .. } => 0.8 * width * lncosh(t / (2.0 * width)),
                DistributionSpec::SphereCapTeacher { .. } => unreachable!("one-dimensional only"),
            }
        };
        if t >= 0.0 {
            h(t)
        } else {
            -h(-t)
        }
    }

    /// Excess zero-one mass `∫_a^b |2p_y − 1| 1[label ≠ Bayes label] dμ_x`
    /// of predicting the constant `label` on `[a, b]`.
    pub fn excess_zero_one_on(&self, a: f64, b: f64, label: f64) -> f64 {
        let (lo, hi) = self.support().expect("one-dimensional");
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            return 0.0;
        }
        let (left, right) = self.bayes_sides();
        let integral = |u: f64, v: f64| {
            if v <= u {
                0.0
            } else {
                self.abs_margin_antiderivative(v) - self.abs_margin_antiderivative(u)
            }
        };
        let mut total = 0.0;
        if label != left {
            total += integral(a, b.min(0.0));
        }
        if label != right {
            total += integral(a.max(0.0), b);
        }
        total / (hi - lo)
    }

    /// Interval on which `p_y` stays away from `{0, ½, 1}`, with its Bayes
    /// label and `c₁ = min |p_y − ½|` there.
    pub fn declared_interval(&self) -> Option<DeclaredInterval> {
        let (lo, hi) = self.support()?;
        let make = |a: f64, b: f64| {
            let pa = self.cond_prob(&[a]);
            let pb = self.cond_prob(&[b]);
            let c1 = (pa - 0.5).abs().min((pb - 0.5).abs());
            DeclaredInterval {
                lo: a,
                hi: b,
                bayes_label: metrics::sgn(2.0 * self.cond_prob(&[0.5 * (a + b)]) - 1.0),
                c1,
            }
        };
        match self.spec {
            DistributionSpec::Constant { p, .. } => {
                if p == 0.0 || p == 0.5 || p == 1.0 {
                    None
                } else {
                    Some(make(lo, hi))
                }
            }
            DistributionSpec::Logistic1d { c: 0.0, .. } => None,
            DistributionSpec::SphereCapTeacher { .. } => None,
            _ => {
                if hi > 0.0 {
                    let start = lo.max(0.0);
                    Some(make(start + 0.5 * (hi - start), hi))
                } else {
                    Some(make(lo, lo + 0.5 * (hi - lo)))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredInterval {
    pub lo: f64,
    pub hi: f64,
    pub bayes_label: f64,
    pub c1: f64,
}
