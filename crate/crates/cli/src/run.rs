//! Executing the tests of a scenario.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use amenable_sas::diagnostics::{
    dye_douglass_bounds, ergodicity_scan, folner_mean, gross_tail_scan, kvn_density_set, null_average,
    podgorski_weron_check, positive_pointwise_average, psi_phi, weak_mixing_scan, BoundedGroupFunction, CylinderEvent,
    FinSuppProb, MixingReport, NullAverageConfig, PointwiseConfig, ReportDetails, TraceRow,
};
use amenable_sas::error::Result;
use amenable_sas::groups::{FolnerSequence, DEFAULT_BUDGET};
use amenable_sas::stable::{char_fn, empirical_char_fn, sample_path, LinearCombination, SpectralProcess};
use serde::Serialize;
use serde_json::{json, Value};

use crate::scenario::{Scenario, TestSpec, SCHEMA_VERSION};

/// Sandwich gaps may grow by this much between consecutive `N` and still count as shrinking.
pub const GAP_JITTER: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    /// Replaces the Følner and ψ evaluation budgets.
    pub budget: Option<u64>,
}

/// What a completed test reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestReport {
    pub verdict: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistent: Option<bool>,
    pub n_max: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, Value>,
    #[serde(skip)]
    pub rows: Vec<TraceRow>,
}

#[derive(Clone, Debug)]
pub struct TestOutcome {
    pub index: usize,
    pub test: &'static str,
    /// `NN-name`, also the stem of the trace file.
    pub label: String,
    pub result: std::result::Result<TestReport, String>,
    pub wall_clock: Duration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Default,
    Scenario,
    Flag,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub seed_source: SeedSource,
    /// Seeds actually used, keyed by test label (and `eval` for the α-norm fallback).
    pub seeds: BTreeMap<String, u64>,
    pub tests: Vec<TestOutcome>,
}

impl RunSummary {
    pub fn completed(&self) -> usize {
        self.tests.iter().filter(|t| t.result.is_ok()).count()
    }

    /// An empty test list succeeds; otherwise at least one test must complete.
    pub fn success(&self) -> bool {
        self.tests.is_empty() || self.completed() > 0
    }
}

/// Runs every test in declaration order. A failing test records its error
/// and the run continues.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> RunSummary {
    let mut s = scenario.clone();
    let seed_source = match (opts.seed, s.seed) {
        (Some(seed), _) => {
            s.seed = Some(seed);
            SeedSource::Flag
        }
        (None, Some(_)) => SeedSource::Scenario,
        (None, None) => SeedSource::Default,
    };
    let mut seeds = BTreeMap::new();
    if s.eval.mc_samples.is_some() {
        seeds.insert("eval".to_string(), s.eval_seed());
    }
    let setup = s.process().and_then(|p| Ok((p, s.sequence(opts.budget)?)));
    let budget = opts.budget.or(s.folner.budget).unwrap_or(DEFAULT_BUDGET);
    let mut tests = Vec::with_capacity(s.tests.len());
    for (index, spec) in s.tests.iter().enumerate() {
        let label = format!("{index:02}-{}", spec.name());
        let seed = s.test_seed(index);
        if spec.seed().is_some() {
            seeds.insert(label.clone(), seed);
        }
        let start = Instant::now();
        let result = match &setup {
            Ok((p, seq)) => {
                let ctx = Ctx { s: &s, p, seq, budget, seed };
                ctx.run(spec).map_err(|e| e.to_string())
            }
            Err(e) => Err(e.to_string()),
        };
        tests.push(TestOutcome { index, test: spec.name(), label, result, wall_clock: start.elapsed() });
    }
    RunSummary { schema_version: SCHEMA_VERSION, seed: s.effective_seed(), seed_source, seeds, tests }
}

struct Ctx<'a> {
    s: &'a Scenario,
    p: &'a SpectralProcess,
    seq: &'a FolnerSequence,
    budget: u64,
    seed: u64,
}

fn from_mixing(r: MixingReport) -> TestReport {
    let mut details = BTreeMap::new();
    match &r.details {
        ReportDetails::None | ReportDetails::Pointwise { .. } => {}
        ReportDetails::TailCurves { curves } => {
            let summary: Vec<Value> = curves
                .iter()
                .map(|c| {
                    let max = c.values.iter().map(|v| v.1).fold(0.0, f64::max);
                    json!({"k": [c.k.0, c.k.1], "eps": c.eps, "max": max})
                })
                .collect();
            details.insert("tail_curves".into(), Value::Array(summary));
        }
        ReportDetails::Null { event_mass, eta, samples, max_w } => {
            details.insert("event_mass".into(), json!(event_mass));
            details.insert("eta".into(), json!(eta));
            details.insert("samples".into(), json!(samples));
            details.insert("max_w".into(), json!(max_w));
        }
    }
    if let Some(last) = r.trace.last() {
        if last.stderr > 0.0 {
            details.insert("stderr".into(), json!(last.stderr));
        }
    }
    TestReport {
        verdict: r.verdict.name().to_string(),
        consistent: Some(r.consistent),
        n_max: r.n_max,
        tolerance: Some(r.tolerance),
        target: Some(r.target),
        residual: Some(r.residual),
        details,
        rows: r.rows(),
    }
}

impl Ctx<'_> {
    fn comb(&self, name: &str) -> &LinearCombination {
        &self.s.combinations[name]
    }

    fn psi(&self, name: &str) -> Result<BoundedGroupFunction> {
        Ok(psi_phi(self.p, self.comb(name))?.with_budget(self.budget))
    }

    fn run(&self, spec: &TestSpec) -> Result<TestReport> {
        let n_default = self.s.folner.n_max;
        let d = *self.p.descriptor();
        match spec {
            TestSpec::Ergodicity { comb, tolerance, n_max } => {
                Ok(from_mixing(ergodicity_scan(self.p, self.comb(comb), self.seq, n_max.unwrap_or(n_default), *tolerance)?))
            }
            TestSpec::WeakMixing { f1, f2, tolerance, n_max, grid } => Ok(from_mixing(weak_mixing_scan(
                self.p,
                self.comb(f1),
                self.comb(f2),
                self.seq,
                n_max.unwrap_or(n_default),
                *tolerance,
                grid,
            )?)),
            TestSpec::StrongMixing { k, eps, g_max, tolerance } => {
                Ok(from_mixing(gross_tail_scan(self.p, *k, *eps, *g_max, *tolerance)?))
            }
            TestSpec::NullAverage { eta, event, samples, tolerance, n_max, .. } => {
                let cfg = NullAverageConfig {
                    eta: *eta,
                    event: event.clone().unwrap_or_else(|| CylinderEvent::default_for(self.p)),
                    samples: *samples,
                    seed: self.seed,
                    tolerance: *tolerance,
                };
                Ok(from_mixing(null_average(self.p, self.seq, n_max.unwrap_or(n_default), &cfg)?))
            }
            TestSpec::PositivePointwise { n_values, samples, sigmas, .. } => {
                let n_values = if n_values.is_empty() { vec![n_default] } else { n_values.clone() };
                let cfg = PointwiseConfig { samples: *samples, seed: self.seed, sigmas: *sigmas };
                Ok(from_mixing(positive_pointwise_average(self.p, self.seq, &n_values, &cfg)?))
            }
            TestSpec::FolnerMean { comb, shifts, n_max } => {
                let shifts = shifts.clone().unwrap_or_else(|| d.generators());
                let r = folner_mean(&self.psi(comb)?, self.seq, n_max.unwrap_or(n_default), &shifts)?;
                let mut details = BTreeMap::new();
                details.insert("estimate".into(), json!(r.estimate));
                details.insert("left_gap".into(), json!(r.left_gap.last()));
                details.insert("right_gap".into(), json!(r.right_gap.last()));
                if let Some(note) = &r.note {
                    details.insert("note".into(), json!(note));
                }
                Ok(TestReport {
                    verdict: if r.partial { "partial" } else { "estimated" }.into(),
                    consistent: None,
                    n_max: r.n_values.last().copied().unwrap_or(0),
                    tolerance: None,
                    target: None,
                    residual: None,
                    details,
                    rows: r.rows(),
                })
            }
            TestSpec::DyeDouglass { comb, n_values, shifts } => {
                let psi = self.psi(comb)?;
                let n_values = if n_values.is_empty() { vec![n_default] } else { n_values.clone() };
                let shifts = shifts.clone().unwrap_or_else(|| {
                    let mut s = vec![d.identity()];
                    s.extend(d.generators());
                    s
                });
                let mut rows = Vec::new();
                let mut gaps = Vec::new();
                for &n in &n_values {
                    let p = FinSuppProb::uniform(self.seq.set(n)?)?;
                    let r = dye_douglass_bounds(&psi, &[p], &shifts, &d)?;
                    gaps.push(r.left_gap().max(r.right_gap()));
                    rows.extend(r.rows().into_iter().map(|row| TraceRow { index: n.to_string(), ..row }));
                }
                let shrinking = gaps.windows(2).all(|w| w[1] <= w[0] + GAP_JITTER);
                let mut details = BTreeMap::new();
                details.insert("gaps".into(), json!(gaps));
                details.insert("n_values".into(), json!(n_values));
                Ok(TestReport {
                    verdict: if shrinking { "gap-shrinking" } else { "gap-not-shrinking" }.into(),
                    consistent: Some(shrinking),
                    n_max: *n_values.last().expect("non-empty"),
                    tolerance: Some(GAP_JITTER),
                    target: Some(0.0),
                    residual: gaps.last().copied(),
                    details,
                    rows,
                })
            }
            TestSpec::PodgorskiWeron { comb, c_grid, tolerance, n_max } => {
                let n = n_max.unwrap_or(n_default);
                let r = podgorski_weron_check(&self.psi(comb)?, self.seq, c_grid, n, *tolerance)?;
                let mut details = BTreeMap::new();
                details.insert("holds".into(), json!(r.holds));
                details.insert("equivalent".into(), json!(r.equivalent));
                Ok(TestReport {
                    verdict: if r.equivalent { "equivalence-holds" } else { "equivalence-fails" }.into(),
                    consistent: Some(r.equivalent),
                    n_max: n,
                    tolerance: Some(*tolerance),
                    target: None,
                    residual: None,
                    details,
                    rows: r.rows(),
                })
            }
            TestSpec::Kvn { combs, indicators, min_density, n_max } => {
                let mut psis = combs.iter().map(|c| self.psi(c)).collect::<Result<Vec<_>>>()?;
                for (i, set) in indicators.iter().enumerate() {
                    psis.push(BoundedGroupFunction::indicator(format!("indicator {i}"), set.clone()).with_budget(self.budget));
                }
                let n = n_max.unwrap_or(n_default);
                let set = kvn_density_set(&psis, self.seq, n)?;
                let density = set.densities.last().copied().unwrap_or(0.0);
                let reached = density >= *min_density;
                let mut details = BTreeMap::new();
                details.insert("m_max".into(), json!(set.m_max));
                details.insert("tail_max".into(), json!(set.tail_max));
                details.insert("thresholds".into(), json!(set.thresholds));
                Ok(TestReport {
                    verdict: if reached { "density-reached" } else { "density-short" }.into(),
                    consistent: Some(reached),
                    n_max: n,
                    tolerance: Some(1.0 - min_density),
                    target: Some(1.0),
                    residual: Some(1.0 - density),
                    details,
                    rows: set.rows(),
                })
            }
            TestSpec::PathLaw { radius, series_length, paths, combs, sigmas, .. } => {
                let window = self.seq.set(*radius)?;
                let ps = sample_path(self.p, &window, *series_length, *paths, self.seed)?;
                let mut rows = Vec::new();
                let mut all = true;
                let mut bounds = BTreeMap::new();
                for name in combs {
                    let comb = self.comb(name);
                    let est = empirical_char_fn(&ps, comb)?;
                    let exact = char_fn(self.p, comb)?;
                    all &= est.agrees_with(exact, *sigmas);
                    bounds.insert(name.clone(), json!({"truncation_bound": est.truncation_bound, "stderr_re": est.stderr_re, "stderr_im": est.stderr_im}));
                    rows.push(TraceRow {
                        test: "path-law-re".into(),
                        index: name.clone(),
                        value: est.value.re,
                        target: exact,
                        residual: (est.value.re - exact).abs(),
                    });
                    rows.push(TraceRow {
                        test: "path-law-im".into(),
                        index: name.clone(),
                        value: est.value.im,
                        target: 0.0,
                        residual: est.value.im.abs(),
                    });
                }
                let mut details = BTreeMap::new();
                details.insert("combinations".into(), Value::Object(bounds.into_iter().collect()));
                details.insert("control_mass".into(), json!(ps.control_mass));
                if let Some(w) = &ps.warning {
                    details.insert("warning".into(), json!(w));
                }
                Ok(TestReport {
                    verdict: if all { "path-law-consistent" } else { "path-law-inconsistent" }.into(),
                    consistent: Some(all),
                    n_max: *radius,
                    tolerance: Some(*sigmas),
                    target: None,
                    residual: None,
                    details,
                    rows,
                })
            }
        }
    }
}
