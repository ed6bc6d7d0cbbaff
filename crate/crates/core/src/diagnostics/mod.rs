//! Ergodic-theoretic diagnostics for spectral processes.
//!
//! Every limit statement is turned into a finite trace over a Følner sequence
//! (or over word-length shells) together with a target, the residual at the
//! last index and a verdict at an explicit tolerance. Reports never claim a
//! limit; they carry the largest index they looked at.
//!
//! Translations act on group functions by `(λ_h ψ)(g) = ψ(h·g)` and
//! `(ρ_h ψ)(g) = ψ(g·h)`, and on linear combinations by moving the
//! coefficient of `X_k` to `X_{g·k}`.

mod folner;
mod mixing;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use folner::{
    dye_douglass_bounds, folner_mean, kvn_density_set, podgorski_weron_check, DensitySet, DyeDouglassReport,
    FolnerMeanReport, PodgorskiWeronReport, PwTrace, SandwichRow,
};
pub use mixing::{
    ergodicity_scan, gross_tail_scan, null_average, positive_pointwise_average, tail_function, weak_mixing_scan,
    CylinderEvent, NullAverageConfig, PointwiseConfig, TailCurve, TailGrid,
};

use crate::error::{invalid, Error, Result};
use crate::groups::{FolnerSequence, GroupElement, DEFAULT_BUDGET};
use crate::stable::{alpha_norm, char_fn, LinearCombination, SpectralProcess};

/// Default tolerance for verdicts on Følner averages.
pub const DEFAULT_TOLERANCE: f64 = 1e-2;
/// Tolerance for quantities that are evaluated exactly.
pub const EXACT_TOLERANCE: f64 = 1e-6;

type Evaluator = dyn Fn(&GroupElement) -> Result<f64> + Send + Sync;

/// A real function on the group with a declared bound `|ψ| ≤ bound`.
#[derive(Clone)]
pub struct BoundedGroupFunction {
    label: String,
    bound: f64,
    budget: u64,
    eval: Arc<Evaluator>,
    cache: Option<Arc<Mutex<HashMap<GroupElement, f64>>>>,
}

impl fmt::Debug for BoundedGroupFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedGroupFunction")
            .field("label", &self.label)
            .field("bound", &self.bound)
            .field("budget", &self.budget)
            .finish()
    }
}

impl BoundedGroupFunction {
    pub fn new(
        label: impl Into<String>,
        bound: f64,
        eval: impl Fn(&GroupElement) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        BoundedGroupFunction { label: label.into(), bound, budget: DEFAULT_BUDGET, eval: Arc::new(eval), cache: None }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant {c}"), c.abs(), move |_| Ok(c))
    }

    /// Indicator of a finite set.
    pub fn indicator(label: impl Into<String>, set: Vec<GroupElement>) -> Self {
        let set: std::collections::HashSet<GroupElement> = set.into_iter().collect();
        Self::new(label, 1.0, move |g| Ok(if set.contains(g) { 1.0 } else { 0.0 }))
    }

    /// Remembers every value it computes.
    pub fn cached(mut self) -> Self {
        self.cache = Some(Arc::new(Mutex::new(HashMap::new())));
        self
    }

    /// Largest number of evaluation points a diagnostic may request.
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// `ψ(g)`, checked against the declared bound.
    pub fn eval(&self, g: &GroupElement) -> Result<f64> {
        if let Some(cache) = &self.cache {
            if let Some(v) = cache.lock().expect("cache lock").get(g) {
                return Ok(*v);
            }
        }
        let v = (self.eval)(g)?;
        if !v.is_finite() || v.abs() > self.bound * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::Diagnostic(format!(
                "{}: |ψ({g})| = {} exceeds the declared bound {}",
                self.label,
                v.abs(),
                self.bound
            )));
        }
        if let Some(cache) = &self.cache {
            cache.lock().expect("cache lock").insert(g.clone(), v);
        }
        Ok(v)
    }

    fn check_budget(&self, points: u64) -> Result<()> {
        if points > self.budget {
            return Err(Error::Budget { what: format!("evaluations of {}", self.label), needed: points, budget: self.budget });
        }
        Ok(())
    }
}

/// `ψ_φ(g) = exp(−‖λ_g φ − φ‖_α^α)` for `φ = Σ c_h X_h`.
pub fn psi_phi(p: &SpectralProcess, comb: &LinearCombination) -> Result<BoundedGroupFunction> {
    alpha_norm(p, comb)?;
    let p = p.clone();
    let comb = comb.clone();
    let desc = *p.descriptor();
    Ok(BoundedGroupFunction::new("psi_phi", 1.0, move |g| char_fn(&p, &comb.shifted(&desc, g)?.minus(&comb))).cached())
}

/// A finitely supported probability measure on the group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProb", into = "RawProb")]
pub struct FinSuppProb {
    support: Vec<GroupElement>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawProb {
    support: Vec<GroupElement>,
    weights: Vec<f64>,
}

impl TryFrom<RawProb> for FinSuppProb {
    type Error = Error;
    fn try_from(r: RawProb) -> Result<Self> {
        FinSuppProb::new(r.support, r.weights)
    }
}

impl From<FinSuppProb> for RawProb {
    fn from(p: FinSuppProb) -> Self {
        RawProb { support: p.support, weights: p.weights }
    }
}

impl FinSuppProb {
    pub fn new(support: Vec<GroupElement>, weights: Vec<f64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: weights.len() });
        }
        if support.is_empty() {
            return invalid("probability support is empty");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("probability weights must be non-negative");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("probability weights sum to {total}, not 1"));
        }
        Ok(FinSuppProb { support, weights })
    }

    /// The uniform measure `p_F` on a finite set.
    pub fn uniform(set: Vec<GroupElement>) -> Result<Self> {
        if set.is_empty() {
            return invalid("probability support is empty");
        }
        let w = 1.0 / set.len() as f64;
        let n = set.len();
        let mut weights = vec![w; n];
        // rounding error goes to the last atom
        let rest: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - rest;
        FinSuppProb::new(set, weights)
    }

    pub fn support(&self) -> &[GroupElement] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Which test a [`MixingReport`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    Ergodicity,
    WeakMixing,
    StrongMixing,
    NullAverage,
    PositivePointwise,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::Ergodicity => "ergodicity",
            TestKind::WeakMixing => "weak-mixing",
            TestKind::StrongMixing => "strong-mixing",
            TestKind::NullAverage => "null-average",
            TestKind::PositivePointwise => "positive-pointwise",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentWithErgodic,
    NonErgodic,
    WeakMixingConsistent,
    NotWeakMixing,
    ConsistentWithStrongMixing,
    NotStrongMixing,
    NullConsistent,
    PositiveConsistent,
    PointwiseConsistent,
    PointwiseInconsistent,
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::ConsistentWithErgodic => "consistent-with-ergodic",
            Verdict::NonErgodic => "non-ergodic",
            Verdict::WeakMixingConsistent => "weak-mixing-consistent",
            Verdict::NotWeakMixing => "not-weak-mixing",
            Verdict::ConsistentWithStrongMixing => "consistent-with-strong-mixing",
            Verdict::NotStrongMixing => "not-strong-mixing",
            Verdict::NullConsistent => "null-consistent",
            Verdict::PositiveConsistent => "positive-consistent",
            Verdict::PointwiseConsistent => "pointwise-consistent",
            Verdict::PointwiseInconsistent => "pointwise-inconsistent",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// One point of a trace: `index` is a Følner index `N` or a shell radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub index: usize,
    pub value: f64,
    pub stderr: f64,
}

/// Extra output attached to some scans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportDetails {
    None,
    TailCurves { curves: Vec<TailCurve> },
    Null { event_mass: f64, eta: f64, samples: u64, max_w: f64 },
    Pointwise { points: Vec<Vec<f64>>, n_values: Vec<usize> },
}

/// A trace with a target and a verdict; `consistent ⇔ residual ≤ tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingReport {
    pub test: TestKind,
    pub trace: Vec<TracePoint>,
    pub target: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub consistent: bool,
    pub verdict: Verdict,
    pub n_max: usize,
    pub details: ReportDetails,
}

impl MixingReport {
    fn new(test: TestKind, trace: Vec<TracePoint>, target: f64, tolerance: f64, n_max: usize) -> Self {
        let last = trace.last().map_or(target, |t| t.value);
        let residual = (last - target).abs();
        let consistent = residual <= tolerance;
        MixingReport {
            test,
            trace,
            target,
            residual,
            tolerance,
            consistent,
            verdict: Verdict::Inconclusive,
            n_max,
            details: ReportDetails::None,
        }
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        self.trace
            .iter()
            .map(|t| TraceRow {
                test: self.test.name().to_string(),
                index: t.index.to_string(),
                value: t.value,
                target: self.target,
                residual: (t.value - self.target).abs(),
            })
            .collect()
    }

    pub fn verdict_block(&self) -> VerdictBlock {
        VerdictBlock {
            test: self.test.name().to_string(),
            n_max: self.n_max,
            tolerance: self.tolerance,
            verdict: self.verdict.name().to_string(),
        }
    }
}

/// One CSV line `(test, index, value, target, residual)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub test: String,
    pub index: String,
    pub value: f64,
    pub target: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictBlock {
    pub test: String,
    pub n_max: usize,
    pub tolerance: f64,
    pub verdict: String,
}

/// `F_1, F_2 ∖ F_1, …, F_{n_max} ∖ F_{n_max−1}`; the sets must be nested.
pub(crate) fn layers(seq: &FolnerSequence, n_max: usize) -> Result<Vec<Vec<GroupElement>>> {
    if n_max == 0 {
        return invalid("N_max must be at least 1");
    }
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let set = seq.set(n)?;
        let fresh: Vec<GroupElement> = if n == 1 { set } else { set.into_iter().filter(|g| !seq.contains(n - 1, g)).collect() };
        out.push(fresh);
    }
    Ok(out)
}

/// Per-`N` averages, minima and maxima of `f` over nested layers.
pub(crate) struct LayerStats {
    pub means: Vec<f64>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

pub(crate) fn layer_stats(layers: &[Vec<GroupElement>], mut f: impl FnMut(&GroupElement) -> Result<f64>) -> Result<LayerStats> {
    let mut sum = 0.0;
    let mut count = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut stats = LayerStats { means: Vec::new(), mins: Vec::new(), maxs: Vec::new() };
    for layer in layers {
        for g in layer {
            let v = f(g)?;
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        count += layer.len();
        stats.means.push(if count == 0 { 0.0 } else { sum / count as f64 });
        stats.mins.push(lo);
        stats.maxs.push(hi);
    }
    Ok(stats)
}
