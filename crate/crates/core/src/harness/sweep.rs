//! Seed sweeps.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::netsim::{run_with, ConfigError, Recording, RunOptions, ScenarioConfig};
use crate::types::Timeslot;

use super::report::{report, RunReport};

/// The per-seed line of a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub passed: bool,
    pub violations: usize,
    pub durations: Vec<Timeslot>,
    /// `v0` of the first recovery.
    pub v0: Option<u32>,
    pub failed_checks: Vec<String>,
}

/// Empirical `P(v0 > d)` against the geometric bound `(f/n)^d` plus three
/// binomial standard deviations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub d: u32,
    pub observed: f64,
    pub bound: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: usize,
    pub passed_runs: usize,
    pub violation_histogram: Vec<usize>,
    /// Recovery durations at the 50th, 90th and 99th percentile, and the max.
    pub duration_quantiles: Option<[Timeslot; 4]>,
    pub v0_tail: Vec<TailPoint>,
    pub outcomes: Vec<SeedOutcome>,
    /// The full report when the sweep has a single seed.
    pub single: Option<Box<RunReport>>,
    pub passed: bool,
}

pub fn sweep(template: &ScenarioConfig, seeds: Range<u64>) -> Result<SweepReport, ConfigError> {
    template.validate()?;
    let opts = RunOptions {
        recording: Recording::Summary,
        check_agreement: true,
    };
    let reports: Vec<RunReport> = seeds
        .into_par_iter()
        .map(|seed| {
            let cfg = ScenarioConfig {
                seed,
                ..template.clone()
            };
            run_with(&cfg, opts).map(|t| report(&t))
        })
        .collect::<Result<_, _>>()?;
    Ok(aggregate(template, reports))
}

pub fn aggregate(template: &ScenarioConfig, mut reports: Vec<RunReport>) -> SweepReport {
    reports.sort_by_key(|r| r.seed);
    let outcomes: Vec<SeedOutcome> = reports
        .iter()
        .map(|r| SeedOutcome {
            seed: r.seed,
            passed: r.passed,
            violations: r.violations,
            durations: r.recoveries.iter().filter_map(|m| m.duration).collect(),
            v0: r.recoveries.first().and_then(|m| m.v0),
            failed_checks: r.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
        })
        .collect();
    let mut histogram = Vec::new();
    for o in &outcomes {
        if histogram.len() <= o.violations {
            histogram.resize(o.violations + 1, 0);
        }
        histogram[o.violations] += 1;
    }
    let mut durations: Vec<Timeslot> = outcomes.iter().flat_map(|o| o.durations.iter().copied()).collect();
    durations.sort_unstable();
    let quantile = |q: f64| durations[((durations.len() - 1) as f64 * q).round() as usize];
    let duration_quantiles =
        (!durations.is_empty()).then(|| [quantile(0.5), quantile(0.9), quantile(0.99), *durations.last().unwrap()]);
    let v0s: Vec<u32> = outcomes.iter().filter_map(|o| o.v0).collect();
    let rho = template.faulty_set().len() as f64 / template.n as f64;
    let v0_tail: Vec<TailPoint> = if v0s.is_empty() {
        Vec::new()
    } else {
        (1..=5)
            .map(|d| {
                let n = v0s.len() as f64;
                let observed = v0s.iter().filter(|&&v| v > d).count() as f64 / n;
                let p = rho.powi(d as i32);
                let bound = p + 3.0 * (p * (1.0 - p) / n).sqrt();
                TailPoint {
                    d,
                    observed,
                    bound,
                    passed: observed <= bound,
                }
            })
            .collect()
    };
    let passed_runs = outcomes.iter().filter(|o| o.passed).count();
    let passed = passed_runs == outcomes.len() && v0_tail.iter().all(|p| p.passed);
    let single = (reports.len() == 1).then(|| Box::new(reports.remove(0)));
    SweepReport {
        runs: outcomes.len(),
        passed_runs,
        violation_histogram: histogram,
        duration_quantiles,
        v0_tail,
        outcomes,
        single,
        passed,
    }
}

impl SweepReport {
    pub fn table(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "runs {}  passed {}", self.runs, self.passed_runs);
        let _ = writeln!(out, "violations per run: {:?}", self.violation_histogram);
        if let Some([p50, p90, p99, max]) = self.duration_quantiles {
            let _ = writeln!(out, "recovery duration p50 {p50} p90 {p90} p99 {p99} max {max}");
        }
        for p in &self.v0_tail {
            let mark = if p.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "  {mark}  P(v0 > {}) = {:.4} <= {:.4}",
                p.d, p.observed, p.bound
            );
        }
        for o in self.outcomes.iter().filter(|o| !o.passed) {
            let _ = writeln!(out, "  FAIL  seed {}: {}", o.seed, o.failed_checks.join(", "));
        }
        out
    }
}
