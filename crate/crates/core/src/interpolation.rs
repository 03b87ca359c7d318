//! One-dimensional interpolating rules (1-NN, a piecewise-linear interpolant)
//! against a smoothed k-NN rule, with exact excess zero-one risk.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Distribution, LabeledSample};
use crate::error::{Error, Result};
use crate::metrics::sgn;
use crate::seed::{derive_seed, stream};
use crate::summary::{summarize, Summary};

/// Training points sorted by position, labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample1D {
    x: Vec<f64>,
    y: Vec<f64>,
    perm: Vec<usize>,
}

impl SortedSample1D {
    pub fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptySample);
        }
        if xs.len() != ys.len() {
            return Err(Error::DimensionMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        if xs.iter().any(|x| !x.is_finite()) || ys.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::invalid("positions must be finite and labels ±1"));
        }
        let mut perm: Vec<usize> = (0..xs.len()).collect();
        perm.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
        Ok(SortedSample1D {
            x: perm.iter().map(|&i| xs[i]).collect(),
            y: perm.iter().map(|&i| ys[i]).collect(),
            perm,
        })
    }

    pub fn from_sample(sample: &LabeledSample) -> Result<Self> {
        let xs = sample
            .coords_1d()
            .ok_or_else(|| Error::invalid("sample is not one-dimensional"))?;
        Self::new(xs, sample.labels())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// `perm[i]` is the draw index of the `i`-th sorted point.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }
}

/// A sign-valued rule, constant on `(breaks[i−1], breaks[i]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    pub breaks: Vec<f64>,
    pub labels: Vec<f64>,
}

impl PiecewiseConstant {
    fn new(breaks: Vec<f64>, labels: Vec<f64>) -> Self {
        debug_assert_eq!(breaks.len() + 1, labels.len());
        let mut out = PiecewiseConstant {
            breaks: Vec::with_capacity(breaks.len()),
            labels: vec![labels[0]],
        };
        for (b, l) in breaks.into_iter().zip(labels.into_iter().skip(1)) {
            if l != *out.labels.last().unwrap() {
                out.breaks.push(b);
                out.labels.push(l);
            }
        }
        out
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.labels[self.breaks.partition_point(|&b| b < x)]
    }

    /// `(lo, hi, label)` pieces, the outer ones unbounded.
    pub fn pieces(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.labels.len();
        (0..n).map(move |i| {
            let lo = if i == 0 { f64::NEG_INFINITY } else { self.breaks[i - 1] };
            let hi = if i + 1 == n { f64::INFINITY } else { self.breaks[i] };
            (lo, hi, self.labels[i])
        })
    }

    /// Exact excess zero-one risk under a one-dimensional distribution.
    pub fn excess_zero_one(&self, dist: &Distribution) -> f64 {
        self.pieces().map(|(a, b, l)| dist.excess_zero_one_on(a, b, l)).sum()
    }
}

/// Nearest-neighbor rule; a query at a midpoint goes to the left neighbor.
pub fn one_nn_rule(sample: &SortedSample1D) -> PiecewiseConstant {
    let breaks = sample.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    PiecewiseConstant::new(breaks, sample.y.clone())
}

/// `2⌈ln n / 2⌉ + 1`.
pub fn default_k(n: usize) -> usize {
    2 * ((n.max(1) as f64).ln() / 2.0).ceil() as usize + 1
}

/// Majority vote over the `k` nearest points. In one dimension the neighbors
/// form a window `[l, l+k)`, which moves past `(x_l + x_{l+k})/2`.
pub fn knn_rule(sample: &SortedSample1D, k: usize) -> Result<PiecewiseConstant> {
    let n = sample.len();
    if k == 0 || k.is_multiple_of(2) || k > n {
        return Err(Error::invalid(format!("k must be odd and in 1..={n}, got {k}")));
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + sample.y[i];
    }
    let labels = (0..=n - k).map(|l| sgn(prefix[l + k] - prefix[l])).collect();
    let breaks = (0..n - k).map(|l| 0.5 * (sample.x[l] + sample.x[l + k])).collect();
    Ok(PiecewiseConstant::new(breaks, labels))
}

/// Piecewise-linear interpolation of the labels, constant beyond the ends.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInterpolant {
    x: Vec<f64>,
    y: Vec<f64>,
}

pub fn linear_interpolant(sample: &SortedSample1D) -> LinearInterpolant {
    LinearInterpolant {
        x: sample.x.clone(),
        y: sample.y.clone(),
    }
}

impl LinearInterpolant {
    pub fn value(&self, q: f64) -> f64 {
        let n = self.x.len();
        let i = self.x.partition_point(|&v| v < q);
        if i == 0 {
            return self.y[0];
        }
        if i == n {
            return self.y[n - 1];
        }
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        if x1 == x0 {
            return self.y[i];
        }
        let t = (q - x0) / (x1 - x0);
        self.y[i - 1] + t * (self.y[i] - self.y[i - 1])
    }

    /// `sgn ∘ value`, up to the measure-zero crossing points.
    pub fn sign_rule(&self) -> PiecewiseConstant {
        let breaks = self.x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        PiecewiseConstant::new(breaks, self.y.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrongPairReport {
    pub lo: f64,
    pub hi: f64,
    /// Sorted indices `(i, i+1)` with both labels opposite to the Bayes label.
    pub pairs: Vec<(usize, usize)>,
    pub covered_mass: f64,
    pub bayes_label: f64,
    pub c1: f64,
}

impl WrongPairReport {
    /// `2 c₁ · covered_mass`, a lower bound on the excess of any local interpolant.
    pub fn excess_lower_bound(&self) -> f64 {
        2.0 * self.c1 * self.covered_mass
    }
}

pub fn wrong_pairs(sample: &SortedSample1D, dist: &Distribution) -> Result<WrongPairReport> {
    let interval = dist
        .declared_interval()
        .ok_or_else(|| Error::invalid("distribution declares no interval bounded away from 0, 1/2 and 1"))?;
    let wrong = -interval.bayes_label;
    let inside = |x: f64| x >= interval.lo && x <= interval.hi;
    let mut pairs = Vec::new();
    let mut covered_mass = 0.0;
    for i in 0..sample.len().saturating_sub(1) {
        let (a, b) = (sample.x[i], sample.x[i + 1]);
        if inside(a) && inside(b) && sample.y[i] == wrong && sample.y[i + 1] == wrong {
            pairs.push((i, i + 1));
            covered_mass += dist.mass(a, b);
        }
    }
    Ok(WrongPairReport {
        lo: interval.lo,
        hi: interval.hi,
        pairs,
        covered_mass,
        bayes_label: interval.bayes_label,
        c1: interval.c1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    OneNn,
    Knn,
    Linear,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::OneNn, Rule::Knn, Rule::Linear];

    pub fn name(self) -> &'static str {
        match self {
            Rule::OneNn => "1nn",
            Rule::Knn => "knn",
            Rule::Linear => "linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub n: usize,
    pub trial: usize,
    pub rule: Rule,
    pub k: usize,
    pub excess_z: f64,
    /// `None` when the distribution declares no interval.
    pub covered_mass: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub rule: Rule,
    pub excess_z: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub seed: u64,
    pub rows: Vec<TrialRow>,
    pub summary: Vec<CellSummary>,
}

impl ComparisonTable {
    pub fn cell(&self, n: usize, rule: Rule) -> Option<&Summary> {
        self.summary.iter().find(|c| c.n == n && c.rule == rule).map(|c| &c.excess_z)
    }

    /// CSV `n,trial,rule,excess_z,covered_mass`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,trial,rule,excess_z,covered_mass")?;
        for r in &self.rows {
            let mass = r.covered_mass.map(|m| format!("{m:.16e}")).unwrap_or_default();
            writeln!(out, "{},{},{},{:.16e},{}", r.n, r.trial, r.rule.name(), r.excess_z, mass)?;
        }
        Ok(())
    }
}

/// Per-trial seed `derive_seed(seed, [DATA, n, trial])`.
pub fn trial_seed(seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(seed, &[stream::DATA, n as u64, trial as u64])
}

/// Runs `trials` independent samples per `n` and scores each rule exactly.
pub fn excess_risk_comparison(dist: &Distribution, n_grid: &[usize], trials: usize, seed: u64) -> Result<ComparisonTable> {
    if !dist.is_1d() || dist.augment {
        return Err(Error::invalid("the comparison needs a raw one-dimensional distribution"));
    }
    if n_grid.contains(&0) || trials == 0 {
        return Err(Error::invalid("sample sizes and trial count must be positive"));
    }
    let declared = dist.declared_interval().is_some();
    let jobs: Vec<(usize, usize)> = n_grid.iter().flat_map(|&n| (0..trials).map(move |t| (n, t))).collect();
    let per_job: Vec<Vec<TrialRow>> = jobs
        .par_iter()
        .map(|&(n, trial)| -> Result<Vec<TrialRow>> {
            let sample = SortedSample1D::from_sample(&dist.sample(n, trial_seed(seed, n, trial))?)?;
            let covered_mass = if declared {
                Some(wrong_pairs(&sample, dist)?.covered_mass)
            } else {
                None
            };
            let k = default_k(n).min(if n % 2 == 1 { n } else { n - 1 });
            Ok(Rule::ALL
                .iter()
                .map(|&rule| {
                    let (rule_k, pc) = match rule {
                        Rule::OneNn => (1, one_nn_rule(&sample)),
                        Rule::Knn => (k, knn_rule(&sample, k).expect("valid k")),
                        Rule::Linear => (1, linear_interpolant(&sample).sign_rule()),
                    };
                    TrialRow {
                        n,
                        trial,
                        rule,
                        k: rule_k,
                        excess_z: pc.excess_zero_one(dist),
                        covered_mass,
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let rows: Vec<TrialRow> = per_job.into_iter().flatten().collect();
    let mut summary = Vec::new();
    for &n in n_grid {
        for rule in Rule::ALL {
            let v: Vec<f64> = rows.iter().filter(|r| r.n == n && r.rule == rule).map(|r| r.excess_z).collect();
            if let Some(s) = summarize(&v) {
                summary.push(CellSummary { n, rule, excess_z: s });
            }
        }
    }
    Ok(ComparisonTable { seed, rows, summary })
}
