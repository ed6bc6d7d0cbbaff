//! Ergodicity, weak-mixing and strong-mixing scans, and the null/positive
//! averages of the dual action.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{layers, psi_phi, layer_stats, BoundedGroupFunction, MixingReport, ReportDetails, TestKind, TracePoint, Verdict};
use crate::error::{invalid, Error, Result};
use crate::groups::{FolnerSequence, GroupElement};
use crate::measure::cylinder_integrate;
use crate::rng;
use crate::stable::{alpha_norm, char_fn, LinearCombination, SpectralProcess};
use crate::systems::{StateFunction, SystemKind};

fn trace_from(means: &[f64]) -> Vec<TracePoint> {
    means.iter().enumerate().map(|(i, v)| TracePoint { index: i + 1, value: *v, stderr: 0.0 }).collect()
}

/// `trace_N = E_{F_N}(ψ_φ)` against `exp(−2‖φ‖_α^α)`.
pub fn ergodicity_scan(
    p: &SpectralProcess,
    comb: &LinearCombination,
    seq: &FolnerSequence,
    n_max: usize,
    tolerance: f64,
) -> Result<MixingReport> {
    let psi = psi_phi(p, comb)?;
    let l = layers(seq, n_max)?;
    let stats = layer_stats(&l, |g| psi.eval(g))?;
    let target = (-2.0 * alpha_norm(p, comb)?.power).exp();
    let mut r = MixingReport::new(TestKind::Ergodicity, trace_from(&stats.means), target, tolerance, n_max);
    r.verdict = if r.consistent { Verdict::ConsistentWithErgodic } else { Verdict::NonErgodic };
    Ok(r)
}

/// Grid of `(K, ε)` pairs for the tail curves `μ(|f₁| ∈ K, |u_g f₂| > ε)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailGrid {
    pub intervals: Vec<(f64, f64)>,
    pub eps: Vec<f64>,
}

impl Default for TailGrid {
    fn default() -> Self {
        TailGrid { intervals: vec![(0.5, 2.0)], eps: vec![0.5] }
    }
}

impl TailGrid {
    pub fn empty() -> Self {
        TailGrid { intervals: Vec::new(), eps: Vec::new() }
    }

    fn validate(&self) -> Result<()> {
        for (lo, hi) in &self.intervals {
            check_interval(*lo, *hi)?;
        }
        if self.eps.iter().any(|e| !(*e > 0.0)) {
            return invalid("ε must be positive");
        }
        Ok(())
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return invalid(format!("K = [{lo}, {hi}] must be a compact interval with positive infimum"));
    }
    Ok(())
}

/// `g ↦ μ(|f₁| ∈ K, |u_g f₂| > ε)` over the Følner set `F_{N_max}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub k: (f64, f64),
    pub eps: f64,
    pub values: Vec<(GroupElement, f64)>,
}

/// `g ↦ μ(|f₁| ∈ K, |u_g f₂| > ε)`, bounded by `μ(|f₁| ∈ K)`.
pub fn tail_function(
    p: &SpectralProcess,
    f1: &LinearCombination,
    f2: &LinearCombination,
    k: (f64, f64),
    eps: f64,
) -> Result<BoundedGroupFunction> {
    check_interval(k.0, k.1)?;
    if !(eps > 0.0) {
        return invalid("ε must be positive");
    }
    let in_k = move |x: f64| (k.0..=k.1).contains(&x.abs());
    let bound = p.model(&[f1.terms().to_vec()])?.integrate(p.eval_mode(), |v| in_k(v[0]) as u8 as f64)?.value;
    let (p, f1, f2) = (p.clone(), f1.clone(), f2.clone());
    let desc = *p.descriptor();
    Ok(BoundedGroupFunction::new(format!("tail K=[{},{}] eps={eps}", k.0, k.1), bound, move |g| {
        let moved = f2.shifted(&desc, g)?;
        let model = p.model(&[f1.terms().to_vec(), moved.terms().to_vec()])?;
        Ok(model.integrate(p.eval_mode(), |v| (in_k(v[0]) && v[1].abs() > eps) as u8 as f64)?.value)
    })
    .cached())
}

/// `trace_N = E_{F_N} |exp(−‖f₁ + u_g f₂‖^α) − exp(−‖f₁‖^α)·exp(−‖f₂‖^α)|` against 0.
#[allow(clippy::too_many_arguments)]
pub fn weak_mixing_scan(
    p: &SpectralProcess,
    f1: &LinearCombination,
    f2: &LinearCombination,
    seq: &FolnerSequence,
    n_max: usize,
    tolerance: f64,
    grid: &TailGrid,
) -> Result<MixingReport> {
    grid.validate()?;
    let desc = *p.descriptor();
    let product = char_fn(p, f1)? * char_fn(p, f2)?;
    let l = layers(seq, n_max)?;
    let stats = layer_stats(&l, |g| {
        let sum = LinearCombination::from_terms(
            f1.terms().iter().chain(f2.shifted(&desc, g)?.terms()).cloned().collect(),
        )?;
        Ok((char_fn(p, &sum)? - product).abs())
    })?;
    let mut curves = Vec::new();
    for &k in &grid.intervals {
        for &eps in &grid.eps {
            let f = tail_function(p, f1, f2, k, eps)?;
            let values = l.iter().flatten().map(|g| Ok((g.clone(), f.eval(g)?))).collect::<Result<Vec<_>>>()?;
            curves.push(TailCurve { k, eps, values });
        }
    }
    let mut r = MixingReport::new(TestKind::WeakMixing, trace_from(&stats.means), 0.0, tolerance, n_max);
    r.verdict = if r.consistent { Verdict::WeakMixingConsistent } else { Verdict::NotWeakMixing };
    r.details = ReportDetails::TailCurves { curves };
    Ok(r)
}

/// Shell maxima of `g ↦ μ(|f₀|^α ∈ K, |u_g f₀|^α > ε)` over word-length shells
/// `0..=g_max`; the verdict reads the last shell.
pub fn gross_tail_scan(
    p: &SpectralProcess,
    k: (f64, f64),
    eps: f64,
    g_max: usize,
    tolerance: f64,
) -> Result<MixingReport> {
    check_interval(k.0, k.1)?;
    if !(eps > 0.0) {
        return invalid("ε must be positive");
    }
    let alpha = p.alpha();
    let desc = *p.descriptor();
    let shells = desc.shells(g_max, crate::groups::DEFAULT_BUDGET)?;
    let e = desc.identity();
    let mut trace = Vec::with_capacity(shells.len());
    for (r, shell) in shells.iter().enumerate() {
        let mut top: f64 = 0.0;
        for g in shell {
            let model = p.model(&[vec![(e.clone(), 1.0)], vec![(g.clone(), 1.0)]])?;
            let v = model.integrate(p.eval_mode(), |v| {
                let a = v[0].abs().powf(alpha);
                (a >= k.0 && a <= k.1 && v[1].abs().powf(alpha) > eps) as u8 as f64
            })?;
            top = top.max(v.value);
        }
        trace.push(TracePoint { index: r, value: top, stderr: 0.0 });
    }
    let mut r = MixingReport::new(TestKind::StrongMixing, trace, 0.0, tolerance, g_max);
    r.verdict = if r.consistent { Verdict::ConsistentWithStrongMixing } else { Verdict::NotStrongMixing };
    Ok(r)
}

/// The conditioning event `E` of a null-average scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case")]
pub enum CylinderEvent {
    /// `{ω : ω_{window[i]} = bits[i]}`; an empty window is the whole space.
    Cylinder { window: Vec<GroupElement>, bits: Vec<u8> },
    Elements { elements: Vec<GroupElement> },
    Atoms { atoms: Vec<usize> },
}

impl CylinderEvent {
    /// The whole space for probability kinds, `{e}` for counting systems.
    pub fn default_for(p: &SpectralProcess) -> Self {
        match p.system().kind() {
            SystemKind::BernoulliShift { .. } => CylinderEvent::Cylinder { window: Vec::new(), bits: Vec::new() },
            SystemKind::CountingTranslation => CylinderEvent::Elements { elements: vec![p.descriptor().identity()] },
            SystemKind::FiniteInvariant { weights, .. } => CylinderEvent::Atoms { atoms: (0..weights.len()).collect() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullAverageConfig {
    pub eta: f64,
    pub event: CylinderEvent,
    pub samples: u64,
    pub seed: u64,
    pub tolerance: f64,
}

fn abs_pow_table(f: &[f64], alpha: f64) -> Vec<f64> {
    f.iter().map(|v| v.abs().powf(alpha)).collect()
}

/// `μ_E(W_N > η)` with `W_N = (1/|F_N|) Σ_{g∈F_N} â_g |f₀|^α`, for `N = 1..=n_max`.
///
/// Counting and finite systems are evaluated exactly; Bernoulli systems by
/// Monte Carlo over `ω` drawn from `μ` conditioned on the cylinder `E`.
pub fn null_average(p: &SpectralProcess, seq: &FolnerSequence, n_max: usize, cfg: &NullAverageConfig) -> Result<MixingReport> {
    if !(cfg.eta > 0.0) {
        return invalid("η must be positive");
    }
    let alpha = p.alpha();
    let desc = *p.descriptor();
    let sys = p.system();
    let l = layers(seq, n_max)?;
    let sizes: Vec<f64> = l
        .iter()
        .scan(0usize, |a, x| {
            *a += x.len();
            Some(*a as f64)
        })
        .collect();
    // exceed[N−1] accumulates the mass of points with W_N > η
    let mut exceed = vec![0.0; n_max];
    let mut exceed_sq = vec![0.0; n_max];
    let mut max_w: f64 = 0.0;
    let mut visit = |weight: f64, contrib: &mut dyn FnMut(&GroupElement) -> f64| {
        let mut sum = 0.0;
        for (i, layer) in l.iter().enumerate() {
            for g in layer {
                sum += contrib(g);
            }
            let w = sum / sizes[i];
            max_w = max_w.max(w);
            if w > cfg.eta {
                exceed[i] += weight;
                exceed_sq[i] += weight * weight;
            }
        }
    };

    let (event_mass, samples, mc) = match (sys.kind(), p.f0(), &cfg.event) {
        (SystemKind::CountingTranslation, StateFunction::Group { function }, CylinderEvent::Elements { elements }) => {
            if elements.is_empty() {
                return invalid("event E is empty");
            }
            let mut set = elements.clone();
            set.sort();
            set.dedup();
            let mass = set.len() as f64;
            for x in &set {
                desc.check(x)?;
                visit(1.0 / mass, &mut |g| function.get(&desc.mul_unchecked(x, g)).abs().powf(alpha));
            }
            (mass, set.len() as u64, false)
        }
        (SystemKind::FiniteInvariant { weights, .. }, StateFunction::Atoms { values }, CylinderEvent::Atoms { atoms }) => {
            if atoms.iter().any(|a| *a >= weights.len()) {
                return invalid("event atom out of range");
            }
            let mut set = atoms.clone();
            set.sort();
            set.dedup();
            let mass: f64 = set.iter().map(|a| weights[*a]).sum();
            if mass <= 0.0 {
                return invalid("event E has zero mass");
            }
            let f = abs_pow_table(values, alpha);
            for &a in &set {
                visit(weights[a] / mass, &mut |g| f[sys.finite_step(g, a)]);
            }
            (mass, set.len() as u64, false)
        }
        (
            SystemKind::BernoulliShift { measure },
            StateFunction::Cylinder { function },
            CylinderEvent::Cylinder { window, bits },
        ) => {
            if window.len() != bits.len() || bits.iter().any(|b| *b > 1) {
                return invalid("event bits must be 0/1 with one bit per window coordinate");
            }
            if cfg.samples == 0 {
                return invalid("null average needs at least one sample");
            }
            let mut slots: HashMap<GroupElement, usize> = HashMap::new();
            let mut coords: Vec<GroupElement> = Vec::new();
            let mut slot = |h: GroupElement| -> usize {
                *slots.entry(h.clone()).or_insert_with(|| {
                    coords.push(h);
                    coords.len() - 1
                })
            };
            struct Compiled {
                f_bits: Vec<usize>,
                rn: Vec<(usize, [f64; 2])>,
            }
            let mut compiled: HashMap<GroupElement, Compiled> = HashMap::new();
            for g in l.iter().flatten() {
                let f_bits = function.window().iter().map(|k| slot(desc.mul_unchecked(g, k))).collect();
                let rn = sys.rn_factors(g)?.into_iter().map(|(h, lr)| (slot(h), lr)).collect();
                compiled.insert(g.clone(), Compiled { f_bits, rn });
            }
            let fixed: Vec<(usize, u8)> = window.iter().zip(bits).map(|(h, b)| (slot(h.clone()), *b)).collect();
            let mass: f64 = window.iter().zip(bits).map(|(h, b)| measure.rho(h, *b)).product();
            if mass <= 0.0 {
                return invalid("event E has zero mass");
            }
            let p0: Vec<f64> = coords.iter().map(|h| measure.p0(h)).collect();
            let fabs = abs_pow_table(function.table(), alpha);
            let mut rng = rng::stream(cfg.seed, rng::streams::NULL_AVERAGE);
            let mut omega = vec![0u8; coords.len()];
            for _ in 0..cfg.samples {
                for (b, q) in omega.iter_mut().zip(&p0) {
                    *b = (rng.random::<f64>() >= *q) as u8;
                }
                for (s, b) in &fixed {
                    omega[*s] = *b;
                }
                visit(1.0, &mut |g| {
                    let c = &compiled[g];
                    let idx = c.f_bits.iter().enumerate().fold(0usize, |acc, (k, s)| acc | ((omega[*s] as usize) << k));
                    let fv = fabs[idx];
                    if fv == 0.0 {
                        return 0.0;
                    }
                    let lr: f64 = c.rn.iter().map(|(s, l)| l[omega[*s] as usize]).sum();
                    lr.exp() * fv
                });
            }
            (mass, cfg.samples, true)
        }
        _ => return invalid("event and function do not match the system's state space"),
    };

    let n = samples as f64;
    let trace: Vec<TracePoint> = exceed
        .iter()
        .map(|v| if mc { v / n } else { *v })
        .enumerate()
        .map(|(i, v)| TracePoint {
            index: i + 1,
            value: v,
            stderr: if mc && n > 1.0 { (v * (1.0 - v) / (n - 1.0)).max(0.0).sqrt() } else { 0.0 },
        })
        .collect();
    let mut r = MixingReport::new(TestKind::NullAverage, trace, 0.0, cfg.tolerance, n_max);
    let last = r.trace.last().map_or(0.0, |t| t.value);
    let half = r.trace[(n_max - 1) / 2].value;
    r.verdict = if r.consistent {
        Verdict::NullConsistent
    } else if (last - half).abs() <= 0.1 * last {
        Verdict::PositiveConsistent
    } else {
        Verdict::Inconclusive
    };
    r.details = ReportDetails::Null { event_mass, eta: cfg.eta, samples, max_w };
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseConfig {
    pub samples: u64,
    pub seed: u64,
    /// Agreement is asserted within this many standard errors.
    pub sigmas: f64,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        PointwiseConfig { samples: 1_000, seed: 0, sigmas: 3.0 }
    }
}

/// Per-point ergodic averages `(1/|F_N|) Σ_{g∈F_N} |f₀|^α∘a_g` at `N ∈ n_values`,
/// compared with `∫|f₀|^α dμ`. Only measure-preserving probability systems.
pub fn positive_pointwise_average(
    p: &SpectralProcess,
    seq: &FolnerSequence,
    n_values: &[usize],
    cfg: &PointwiseConfig,
) -> Result<MixingReport> {
    let sys = p.system();
    if !(sys.is_probability() && sys.is_measure_preserving()) {
        return Err(Error::Unsupported("pointwise averages need a measure-preserving probability system".into()));
    }
    if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) || n_values[0] == 0 {
        return invalid("N list must be non-empty, positive and increasing");
    }
    let alpha = p.alpha();
    let desc = *p.descriptor();
    let n_last = *n_values.last().expect("non-empty");
    let l = layers(seq, n_last)?;
    let sizes: Vec<f64> = l
        .iter()
        .scan(0usize, |a, x| {
            *a += x.len();
            Some(*a as f64)
        })
        .collect();
    let averages = |contrib: &mut dyn FnMut(&GroupElement) -> f64| -> Vec<f64> {
        let mut sum = 0.0;
        let mut out = Vec::with_capacity(n_values.len());
        let mut next = 0;
        for (i, layer) in l.iter().enumerate() {
            for g in layer {
                sum += contrib(g);
            }
            if next < n_values.len() && n_values[next] == i + 1 {
                out.push(sum / sizes[i]);
                next += 1;
            }
        }
        out
    };

    // weights are `None` for equally weighted Monte Carlo points
    let (points, weights, target): (Vec<Vec<f64>>, Option<Vec<f64>>, f64) = match (sys.kind(), p.f0()) {
        (SystemKind::FiniteInvariant { weights, .. }, StateFunction::Atoms { values }) => {
            let f = abs_pow_table(values, alpha);
            let pts = (0..weights.len()).map(|a| averages(&mut |g| f[sys.finite_step(g, a)])).collect();
            let target = weights.iter().zip(&f).map(|(w, v)| w * v).sum();
            (pts, Some(weights.clone()), target)
        }
        (SystemKind::BernoulliShift { measure }, StateFunction::Cylinder { function }) => {
            if cfg.samples < 2 {
                return invalid("pointwise averages need at least 2 samples");
            }
            let target = cylinder_integrate(measure, &function.abs_pow(alpha))?.value;
            let mut slots: HashMap<GroupElement, usize> = HashMap::new();
            let mut coords: Vec<GroupElement> = Vec::new();
            let mut compiled: HashMap<GroupElement, Vec<usize>> = HashMap::new();
            for g in l.iter().flatten() {
                let bits = function
                    .window()
                    .iter()
                    .map(|k| {
                        let h = desc.mul_unchecked(g, k);
                        *slots.entry(h.clone()).or_insert_with(|| {
                            coords.push(h);
                            coords.len() - 1
                        })
                    })
                    .collect();
                compiled.insert(g.clone(), bits);
            }
            let p0: Vec<f64> = coords.iter().map(|h| measure.p0(h)).collect();
            let fabs = abs_pow_table(function.table(), alpha);
            let mut rng = rng::stream(cfg.seed, rng::streams::POINTWISE);
            let mut omega = vec![0u8; coords.len()];
            let mut pts = Vec::with_capacity(cfg.samples as usize);
            for _ in 0..cfg.samples {
                for (b, q) in omega.iter_mut().zip(&p0) {
                    *b = (rng.random::<f64>() >= *q) as u8;
                }
                pts.push(averages(&mut |g| {
                    let idx = compiled[g].iter().enumerate().fold(0usize, |acc, (k, s)| acc | ((omega[*s] as usize) << k));
                    fabs[idx]
                }));
            }
            (pts, None, target)
        }
        _ => return Err(Error::Unsupported("pointwise averages need a Bernoulli or finite system".into())),
    };

    let monte_carlo = matches!(sys.kind(), SystemKind::BernoulliShift { .. });
    let n = points.len() as f64;
    let trace: Vec<TracePoint> = (0..n_values.len())
        .map(|j| {
            let mean: f64 = match &weights {
                Some(w) => points.iter().zip(w).map(|(p, w)| w * p[j]).sum(),
                None => points.iter().map(|p| p[j]).sum::<f64>() / n,
            };
            let stderr = if monte_carlo {
                let var = points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                0.0
            };
            TracePoint { index: n_values[j], value: mean, stderr }
        })
        .collect();
    let tolerance = cfg.sigmas * trace.last().map_or(0.0, |t| t.stderr);
    let mut r = MixingReport::new(TestKind::PositivePointwise, trace, target, tolerance, n_last);
    r.verdict = if r.consistent { Verdict::PointwiseConsistent } else { Verdict::PointwiseInconsistent };
    r.details = ReportDetails::Pointwise { points, n_values: n_values.to_vec() };
    Ok(r)
}
