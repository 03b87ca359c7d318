//! Multi-seed sweeps over one axis of a configuration, and the consistency
//! schedule indexed by sample size.
//!
//! Seeds: run `s` of cell `k` uses root seed `derive_seed(base.seed, [k, s])`,
//! so cells never share a seed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::run_experiment;
use super::regime::{derive_consistency, derive_regime, RegimeConfig, RegimeExtras};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::summary::{summarize, Summary};

pub const MIN_VALUES: usize = 2;
pub const MIN_SEEDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    N,
    M,
    Eps,
}

impl Axis {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "n" => Axis::N,
            "m" => Axis::M,
            "eps" => Axis::Eps,
            _ => {
                return Err(Error::Unknown {
                    kind: "axis",
                    name: name.to_string(),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub cell: usize,
    pub seed_index: usize,
    pub seed: u64,
    pub excess_logistic: f64,
    pub l2_calibration_sq: f64,
    pub excess_zero_one: f64,
    pub monitors_pass: bool,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub config: RegimeConfig,
    pub excess_logistic: Option<Summary>,
    pub l2_calibration_sq: Option<Summary>,
    pub excess_zero_one: Option<Summary>,
    pub monitor_failures: usize,
    pub divergences: usize,
}

/// Trend of the median excess logistic risk along the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub non_increasing: bool,
    pub strictly_decreasing: bool,
    pub last_over_first: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub root_seed: u64,
    pub seeds: usize,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
    pub trend: Trend,
}

impl SweepTable {
    pub fn medians(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| c.excess_logistic.map_or(f64::NAN, |s| s.median))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "value,seed,excess_logistic,l2_calibration_sq,excess_zero_one,monitors_pass,exit_code")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{},{}",
                r.value,
                r.seed,
                r.excess_logistic,
                r.l2_calibration_sq,
                r.excess_zero_one,
                u8::from(r.monitors_pass),
                r.exit_code
            )?;
        }
        Ok(())
    }
}

pub fn cell_seed(root: u64, cell: usize, seed_index: usize) -> u64 {
    derive_seed(root, &[cell as u64, seed_index as u64])
}

/// Varies one axis of `base`. For `eps` the regime is re-derived (keeping
/// the base distribution and reference); `m` keeps `ρ` tied to the width
/// where the regime does.
pub fn sweep(base: &RegimeConfig, axis: Axis, values: &[f64], seeds: usize) -> Result<SweepTable> {
    let cells = values
        .iter()
        .map(|&v| -> Result<(f64, RegimeConfig)> {
            let cfg = match axis {
                Axis::N => RegimeConfig {
                    n: positive_int(v)?,
                    ..base.clone()
                },
                Axis::M => base.clone().with_width(positive_int(v)?),
                Axis::Eps => {
                    let extras = RegimeExtras {
                        r: base.r,
                        ..Default::default()
                    };
                    RegimeConfig {
                        seed: base.seed,
                        distribution: base.distribution.clone(),
                        augment: base.augment,
                        reference: base.reference.clone(),
                        delta: base.delta,
                        mc_features: base.mc_features,
                        eval_nodes: base.eval_nodes,
                        ..derive_regime(base.regime, v, extras)?
                    }
                }
            };
            Ok((v, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    run_cells(axis_name(axis), base.seed, cells, seeds)
}

/// The consistency schedule at each `n`, sharing the template's task.
pub fn consistency_sweep(template: &RegimeConfig, ns: &[usize], xi: f64, seeds: usize) -> Result<SweepTable> {
    let cells = ns
        .iter()
        .map(|&n| -> Result<(f64, RegimeConfig)> {
            let extras = RegimeExtras {
                r: template.r,
                ..Default::default()
            };
            let derived = derive_consistency(n, xi, extras)?;
            Ok((
                n as f64,
                RegimeConfig {
                    distribution: template.distribution.clone(),
                    augment: template.augment,
                    reference: template.reference.clone(),
                    delta: template.delta,
                    mc_features: template.mc_features,
                    eval_nodes: template.eval_nodes,
                    seed: template.seed,
                    ..derived
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    run_cells("n", template.seed, cells, seeds)
}

fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::N => "n",
        Axis::M => "m",
        Axis::Eps => "eps",
    }
}

fn positive_int(v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(Error::invalid(format!("expected a positive integer, got {v}")))
    }
}

fn run_cells(axis: &str, root: u64, cells: Vec<(f64, RegimeConfig)>, seeds: usize) -> Result<SweepTable> {
    if cells.len() < MIN_VALUES {
        return Err(Error::invalid(format!("a sweep needs at least {MIN_VALUES} values")));
    }
    if seeds < MIN_SEEDS {
        return Err(Error::invalid(format!("a sweep needs at least {MIN_SEEDS} seeds")));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|k| (0..seeds).map(move |s| (k, s))).collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(k, s)| -> Result<SweepRow> {
            let (value, base) = &cells[k];
            let seed = cell_seed(root, k, s);
            let report = run_experiment(&RegimeConfig { seed, ..base.clone() })?;
            let b = report.population.map(|p| p.breakdown);
            Ok(SweepRow {
                value: *value,
                cell: k,
                seed_index: s,
                seed,
                excess_logistic: b.map_or(f64::NAN, |b| b.excess_logistic),
                l2_calibration_sq: b.map_or(f64::NAN, |b| b.l2_calibration_sq),
                excess_zero_one: b.map_or(f64::NAN, |b| b.excess_zero_one),
                monitors_pass: report.monitors_pass(),
                exit_code: report.exit_code(),
            })
        })
        .collect::<Result<_>>()?;
    let summaries: Vec<SweepCell> = cells
        .into_iter()
        .enumerate()
        .map(|(k, (value, config))| {
            let mine: Vec<&SweepRow> = rows.iter().filter(|r| r.cell == k).collect();
            let col = |f: fn(&SweepRow) -> f64| summarize(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
            SweepCell {
                value,
                config,
                excess_logistic: col(|r| r.excess_logistic),
                l2_calibration_sq: col(|r| r.l2_calibration_sq),
                excess_zero_one: col(|r| r.excess_zero_one),
                monitor_failures: mine.iter().filter(|r| !r.monitors_pass).count(),
                divergences: mine.iter().filter(|r| r.exit_code == super::experiment::EXIT_DIVERGED).count(),
            }
        })
        .collect();
    let med: Vec<f64> = summaries
        .iter()
        .map(|c| c.excess_logistic.map_or(f64::NAN, |s| s.median))
        .collect();
    let trend = Trend {
        non_increasing: med.windows(2).all(|w| w[1] <= w[0]),
        strictly_decreasing: med.windows(2).all(|w| w[1] < w[0]),
        last_over_first: med[med.len() - 1] / med[0],
    };
    Ok(SweepTable {
        axis: axis.to_string(),
        root_seed: root,
        seeds,
        rows,
        cells: summaries,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::regime::Regime;

    fn base() -> RegimeConfig {
        let mut c = derive_regime(Regime::Clairvoyant, 0.5, RegimeExtras::default()).unwrap();
        c.n = 64;
        c.t = 2;
        c.mc_features = 500;
        c
    }

    #[test]
    fn rejects_small_sweeps() {
        assert!(sweep(&base(), Axis::N, &[64.0], 5).is_err());
        assert!(sweep(&base(), Axis::N, &[64.0, 128.0], 4).is_err());
        assert!(sweep(&base(), Axis::N, &[64.5, 128.0], 5).is_err());
        assert!(matches!(Axis::from_name("k"), Err(Error::Unknown { .. })));
    }

    #[test]
    fn seeds_are_disjoint_across_cells() {
        let t = sweep(&base(), Axis::M, &[64.0, 128.0], 5).unwrap();
        let mut seeds: Vec<u64> = t.rows.iter().map(|r| r.seed).collect();
        seeds.sort();
        seeds.dedup();
        assert_eq!(seeds.len(), 10);
        assert_eq!(t.cells[1].config.m, 128);
        assert_eq!(t.cells[1].config.rho, 128f64.powf(-0.125));
        assert!(t.rows.iter().all(|r| r.monitors_pass));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 11);
    }

    #[test]
    fn eps_axis_rederives() {
        let t = sweep(&base(), Axis::Eps, &[0.5, 0.25], 5).unwrap();
        assert_eq!(t.cells[1].config.t, 1);
        assert_eq!(t.cells[1].config.n, 16);
        assert_eq!(t.cells[0].config.m, 256);
    }
}
