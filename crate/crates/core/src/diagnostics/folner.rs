//! Følner means, Dye–Douglass sandwiches, the Podgórski–Weron equivalence and
//! Koopman–von Neumann density sets.

use serde::{Deserialize, Serialize};

use super::{layer_stats, layers, BoundedGroupFunction, FinSuppProb, TraceRow};
use crate::error::{invalid, Error, Result};
use crate::groups::{FolnerSequence, GroupElement};

/// Følner averages of `ψ` and of its translates over a finite shift window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerMeanReport {
    pub label: String,
    pub n_values: Vec<usize>,
    /// `E_{F_N}(ψ)`.
    pub means: Vec<f64>,
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
    pub shifts: Vec<GroupElement>,
    /// `left[i][N−1] = E_{F_N}(λ_{h_i} ψ)`.
    pub left: Vec<Vec<f64>>,
    /// `right[i][N−1] = E_{F_N}(ρ_{h_i} ψ)`.
    pub right: Vec<Vec<f64>>,
    /// `sup_h |E_{F_N}(λ_h ψ) − Ê|`.
    pub left_gap: Vec<f64>,
    /// `sup_h |E_{F_N}(ρ_h ψ) − Ê|`.
    pub right_gap: Vec<f64>,
    /// `Ê = E_{F_{N_max}}(ψ)` for the largest completed `N`.
    pub estimate: f64,
    /// Set when the evaluation budget stopped the scan before the requested `N_max`.
    pub partial: bool,
    pub note: Option<String>,
}

impl FolnerMeanReport {
    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows: Vec<TraceRow> = self
            .n_values
            .iter()
            .zip(&self.means)
            .map(|(n, m)| TraceRow {
                test: "folner-mean".into(),
                index: n.to_string(),
                value: *m,
                target: self.estimate,
                residual: (m - self.estimate).abs(),
            })
            .collect();
        rows.extend(self.n_values.iter().enumerate().map(|(i, n)| {
            let gap = self.left_gap[i].max(self.right_gap[i]);
            TraceRow { test: "folner-mean-gap".into(), index: n.to_string(), value: gap, target: 0.0, residual: gap }
        }));
        rows
    }
}

/// Largest `N ≤ n_max` whose sets fit the sequence budget and whose
/// `|F_N|·(1 + 2|H|)` evaluations fit the function budget.
fn affordable(psi: &BoundedGroupFunction, seq: &FolnerSequence, n_max: usize, per_point: u64) -> Result<(usize, Option<Error>)> {
    for n in 1..=n_max {
        let size = seq.size(n)?;
        let err = if size > seq.budget() {
            Some(Error::Budget { what: format!("|F_{n}|"), needed: size, budget: seq.budget() })
        } else {
            psi.check_budget(size.saturating_mul(per_point)).err()
        };
        if let Some(e) = err {
            if n == 1 {
                return Err(e);
            }
            return Ok((n - 1, Some(e)));
        }
    }
    Ok((n_max, None))
}

/// Følner averages of `ψ`, `λ_h ψ` and `ρ_h ψ` for `N = 1..=n_max`, `h ∈ shifts`.
pub fn folner_mean(
    psi: &BoundedGroupFunction,
    seq: &FolnerSequence,
    n_max: usize,
    shifts: &[GroupElement],
) -> Result<FolnerMeanReport> {
    let d = *seq.descriptor();
    for h in shifts {
        d.check(h)?;
    }
    let (n_eff, stop) = affordable(psi, seq, n_max, 1 + 2 * shifts.len() as u64)?;
    let l = layers(seq, n_eff)?;
    let base = layer_stats(&l, |g| psi.eval(g))?;
    let mut left = Vec::with_capacity(shifts.len());
    let mut right = Vec::with_capacity(shifts.len());
    for h in shifts {
        left.push(layer_stats(&l, |g| psi.eval(&d.mul_unchecked(h, g)))?.means);
        right.push(layer_stats(&l, |g| psi.eval(&d.mul_unchecked(g, h)))?.means);
    }
    let estimate = *base.means.last().expect("at least one layer");
    let gap = |rows: &[Vec<f64>], i: usize| rows.iter().map(|r| (r[i] - estimate).abs()).fold(0.0, f64::max);
    let left_gap = (0..n_eff).map(|i| gap(&left, i)).collect();
    let right_gap = (0..n_eff).map(|i| gap(&right, i)).collect();
    Ok(FolnerMeanReport {
        label: psi.label().to_string(),
        n_values: (1..=n_eff).collect(),
        means: base.means,
        mins: base.mins,
        maxs: base.maxs,
        shifts: shifts.to_vec(),
        left,
        right,
        left_gap,
        right_gap,
        estimate,
        partial: stop.is_some(),
        note: stop.map(|e| format!("stopped at N = {n_eff} of {n_max}: {e}")),
    })
}

/// `min_h`/`max_h` of `E_p(λ_h ψ)` and `E_p(ρ_h ψ)` for one probability `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub support_size: usize,
    pub left_min: f64,
    pub left_max: f64,
    pub right_min: f64,
    pub right_max: f64,
}

/// Finite-window estimates of the Dye–Douglass functionals `λ^±`, `ρ^±`.
/// Both the sup over `p` and the inf over `h` are restricted, so none of the
/// four values is a one-sided bound on the true functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyeDouglassReport {
    pub label: String,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub rows: Vec<SandwichRow>,
    pub shifts: Vec<GroupElement>,
}

impl DyeDouglassReport {
    pub fn left_gap(&self) -> f64 {
        self.lambda_plus - self.lambda_minus
    }

    pub fn right_gap(&self) -> f64 {
        self.rho_plus - self.rho_minus
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        let row = |test: &str, value: f64| TraceRow {
            test: test.into(),
            index: self.rows.len().to_string(),
            value,
            target: 0.0,
            residual: value.abs(),
        };
        vec![
            row("dye-douglass-lambda-minus", self.lambda_minus),
            row("dye-douglass-lambda-plus", self.lambda_plus),
            row("dye-douglass-rho-minus", self.rho_minus),
            row("dye-douglass-rho-plus", self.rho_plus),
            row("dye-douglass-gap", self.left_gap().max(self.right_gap())),
        ]
    }
}

/// `λ̂⁻ = max_p min_h E_p(λ_h ψ)`, `λ̂⁺ = min_p max_h E_p(λ_h ψ)` and the same
/// with right translates.
pub fn dye_douglass_bounds(
    psi: &BoundedGroupFunction,
    p_list: &[FinSuppProb],
    shifts: &[GroupElement],
    desc: &crate::groups::GroupDescriptor,
) -> Result<DyeDouglassReport> {
    if shifts.is_empty() {
        return invalid("shift window is empty");
    }
    if p_list.is_empty() {
        return invalid("probability list is empty");
    }
    for h in shifts {
        desc.check(h)?;
    }
    let points: u64 = p_list.iter().map(|p| p.support().len() as u64).sum::<u64>() * 2 * shifts.len() as u64;
    psi.check_budget(points)?;
    let mut rows = Vec::with_capacity(p_list.len());
    for p in p_list {
        let expect = |f: &dyn Fn(&GroupElement) -> GroupElement| -> Result<f64> {
            let mut s = 0.0;
            for (x, w) in p.support().iter().zip(p.weights()) {
                s += w * psi.eval(&f(x))?;
            }
            Ok(s)
        };
        let mut row = SandwichRow {
            support_size: p.support().len(),
            left_min: f64::INFINITY,
            left_max: f64::NEG_INFINITY,
            right_min: f64::INFINITY,
            right_max: f64::NEG_INFINITY,
        };
        for h in shifts {
            let l = expect(&|x| desc.mul_unchecked(h, x))?;
            let r = expect(&|x| desc.mul_unchecked(x, h))?;
            row.left_min = row.left_min.min(l);
            row.left_max = row.left_max.max(l);
            row.right_min = row.right_min.min(r);
            row.right_max = row.right_max.max(r);
        }
        rows.push(row);
    }
    let fold = |f: fn(&SandwichRow) -> f64, init: f64, pick: fn(f64, f64) -> f64| rows.iter().map(f).fold(init, pick);
    Ok(DyeDouglassReport {
        label: psi.label().to_string(),
        lambda_minus: fold(|r| r.left_min, f64::NEG_INFINITY, f64::max),
        lambda_plus: fold(|r| r.left_max, f64::INFINITY, f64::min),
        rho_minus: fold(|r| r.right_min, f64::NEG_INFINITY, f64::max),
        rho_plus: fold(|r| r.right_max, f64::INFINITY, f64::min),
        rows,
        shifts: shifts.to_vec(),
    })
}

/// Traces of `(1/|F_N|)Σ|exp(cψ)−1|` and `(1/|F_N|)Σ exp(cψ)` for one `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwTrace {
    pub c: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    /// Last value of `first` within tolerance of 0.
    pub first_vanishes: bool,
    /// Last value of `second` within tolerance of 1.
    pub second_to_one: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PodgorskiWeronReport {
    pub label: String,
    pub n_max: usize,
    pub tolerance: f64,
    pub traces: Vec<PwTrace>,
    /// For every `c`, both traces reach their targets or neither does.
    pub equivalent: bool,
    /// Every `c` reaches both targets.
    pub holds: bool,
}

impl PodgorskiWeronReport {
    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::new();
        for t in &self.traces {
            for (i, (a, b)) in t.first.iter().zip(&t.second).enumerate() {
                let index = format!("{}@c={}", i + 1, t.c);
                rows.push(TraceRow {
                    test: "podgorski-weron-abs".into(),
                    index: index.clone(),
                    value: *a,
                    target: 0.0,
                    residual: a.abs(),
                });
                rows.push(TraceRow { test: "podgorski-weron-exp".into(), index, value: *b, target: 1.0, residual: (b - 1.0).abs() });
            }
        }
        rows
    }
}

pub fn podgorski_weron_check(
    psi: &BoundedGroupFunction,
    seq: &FolnerSequence,
    c_grid: &[f64],
    n_max: usize,
    tolerance: f64,
) -> Result<PodgorskiWeronReport> {
    if c_grid.is_empty() || c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
        return invalid("c grid must be a non-empty list of positive numbers");
    }
    psi.check_budget(seq.size(n_max)?)?;
    let l = layers(seq, n_max)?;
    let values: Vec<Vec<f64>> = l.iter().map(|layer| layer.iter().map(|g| psi.eval(g)).collect()).collect::<Result<_>>()?;
    let mut traces = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let mut it = values.iter().flatten();
        let first = layer_stats(&l, |_| Ok((c * it.next().expect("value per element")).exp_m1().abs()))?.means;
        let mut it = values.iter().flatten();
        let second = layer_stats(&l, |_| Ok((c * it.next().expect("value per element")).exp()))?.means;
        let first_vanishes = first.last().is_some_and(|v| v.abs() <= tolerance);
        let second_to_one = second.last().is_some_and(|v| (v - 1.0).abs() <= tolerance);
        traces.push(PwTrace { c, first, second, first_vanishes, second_to_one });
    }
    Ok(PodgorskiWeronReport {
        label: psi.label().to_string(),
        n_max,
        tolerance,
        equivalent: traces.iter().all(|t| t.first_vanishes == t.second_to_one),
        holds: traces.iter().all(|t| t.first_vanishes && t.second_to_one),
        traces,
    })
}

/// The set `D = F_{N_max} ∖ E` from the Koopman–von Neumann construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySet {
    /// `F_{N_max}` in lexicographic order.
    pub window: Vec<GroupElement>,
    pub members: Vec<bool>,
    /// `|D ∩ F_N| / |F_N|` for `N = 1..=N_max`.
    pub densities: Vec<f64>,
    /// `(m, t_m)` for `m = 2..=M`.
    pub thresholds: Vec<(usize, usize)>,
    pub m_max: usize,
    /// Largest `max_k ψ_k` on `D ∩ (F_{N_max} ∖ F_{t_M})`; at most `1/M` by construction.
    pub tail_max: f64,
    /// `full_means[k][N−1] = E_{F_N}(ψ_k)`.
    pub full_means: Vec<Vec<f64>>,
    /// `restricted_means[k][N−1]` = mean of `ψ_k` over `D ∩ F_N`.
    pub restricted_means: Vec<Vec<f64>>,
}

impl DensitySet {
    pub fn contains(&self, g: &GroupElement) -> bool {
        self.window.binary_search(g).is_ok_and(|i| self.members[i])
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        self.densities
            .iter()
            .enumerate()
            .map(|(i, d)| TraceRow {
                test: "kvn-density".into(),
                index: (i + 1).to_string(),
                value: *d,
                target: 1.0,
                residual: 1.0 - d,
            })
            .collect()
    }
}

/// Extracts a set of full density along which every `ψ_k` tends to 0.
///
/// With `E_m = ∪_k {ψ_k > 1/m}`, thresholds are `t_1 = 0` and `t_m` the least
/// `N > t_{m−1}` with `|E_m ∩ F_{N'}| < |F_{N'}|/m` for all `N' ∈ [N, N_max]`.
/// `E = ∪_{m=2}^{M} E_m ∩ (F_{t_{m+1}} ∖ F_{t_m})` with `t_{M+1} = N_max`.
pub fn kvn_density_set(psis: &[BoundedGroupFunction], seq: &FolnerSequence, n_max: usize) -> Result<DensitySet> {
    if psis.is_empty() {
        return invalid("no functions given");
    }
    for psi in psis {
        psi.check_budget(seq.size(n_max)?)?;
    }
    let l = layers(seq, n_max)?;
    // (element, entry index N, per-function values)
    let mut points: Vec<(GroupElement, usize, Vec<f64>)> = Vec::new();
    for (i, layer) in l.iter().enumerate() {
        for g in layer {
            let vals = psis
                .iter()
                .map(|psi| {
                    let v = psi.eval(g)?;
                    if v < 0.0 {
                        return Err(Error::Diagnostic(format!("{} is negative at {g}", psi.label())));
                    }
                    Ok(v)
                })
                .collect::<Result<Vec<f64>>>()?;
            points.push((g.clone(), i + 1, vals));
        }
    }
    let sizes: Vec<usize> = l
        .iter()
        .scan(0usize, |acc, layer| {
            *acc += layer.len();
            Some(*acc)
        })
        .collect();
    let vmax: Vec<f64> = points.iter().map(|p| p.2.iter().cloned().fold(0.0, f64::max)).collect();

    // per-N counts of a level set, cumulative over layers
    let level_counts = |pred: &dyn Fn(usize) -> bool| {
        let mut per_layer = vec![0usize; n_max];
        for (i, p) in points.iter().enumerate() {
            if pred(i) {
                per_layer[p.1 - 1] += 1;
            }
        }
        let mut acc = 0;
        per_layer
            .into_iter()
            .map(|c| {
                acc += c;
                acc
            })
            .collect::<Vec<usize>>()
    };

    let mut thresholds: Vec<(usize, usize)> = Vec::new();
    let mut prev = 0usize;
    let mut m = 2usize;
    loop {
        let level = 1.0 / m as f64;
        let counts = level_counts(&|i| vmax[i] > level);
        let last_bad = (1..=n_max).rev().find(|&n| counts[n - 1] as f64 >= sizes[n - 1] as f64 * level).unwrap_or(0);
        let t = (prev + 1).max(last_bad + 1);
        if t > n_max {
            if m == 2 {
                let (k, dens) = psis
                    .iter()
                    .enumerate()
                    .map(|(k, _)| {
                        let c = level_counts(&|i| points[i].2[k] > 0.5);
                        (k, c[n_max - 1] as f64 / sizes[n_max - 1] as f64)
                    })
                    .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                return Err(Error::Diagnostic(format!(
                    "averages of {} do not vanish on the tested range: the level set {{ψ > 1/2}} (m = 2) has density {dens:.4} at N = {n_max}",
                    psis[k].label()
                )));
            }
            break;
        }
        thresholds.push((m, t));
        prev = t;
        m += 1;
    }
    let m_max = thresholds.last().expect("m = 2 threshold").0;
    let t_of = |m: usize| thresholds.iter().find(|x| x.0 == m).map_or(n_max, |x| x.1);

    let excluded = |i: usize| {
        let entry = points[i].1;
        // band m: t_m < entry ≤ t_{m+1}
        let band = thresholds.iter().rev().find(|(_, t)| *t < entry).map(|(m, _)| *m);
        match band {
            Some(m) if entry <= t_of(m + 1) => vmax[i] > 1.0 / m as f64,
            _ => false,
        }
    };
    let member: Vec<bool> = (0..points.len()).map(|i| !excluded(i)).collect();
    let in_d = level_counts(&|i| member[i]);
    let densities = (0..n_max).map(|n| in_d[n] as f64 / sizes[n] as f64).collect();
    let t_last = t_of(m_max);
    let tail_max =
        (0..points.len()).filter(|&i| member[i] && points[i].1 > t_last).map(|i| vmax[i]).fold(0.0, f64::max);

    let mut full_means = Vec::with_capacity(psis.len());
    let mut restricted_means = Vec::with_capacity(psis.len());
    for k in 0..psis.len() {
        let (mut full, mut restricted) = (vec![0.0; n_max], vec![0.0; n_max]);
        for (i, p) in points.iter().enumerate() {
            full[p.1 - 1] += p.2[k];
            if member[i] {
                restricted[p.1 - 1] += p.2[k];
            }
        }
        let (mut a, mut b) = (0.0, 0.0);
        for n in 0..n_max {
            a += full[n];
            b += restricted[n];
            full[n] = a / sizes[n] as f64;
            restricted[n] = if in_d[n] == 0 { 0.0 } else { b / in_d[n] as f64 };
        }
        full_means.push(full);
        restricted_means.push(restricted);
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|a, b| points[*a].0.cmp(&points[*b].0));
    Ok(DensitySet {
        window: order.iter().map(|&i| points[i].0.clone()).collect(),
        members: order.iter().map(|&i| member[i]).collect(),
        densities,
        thresholds,
        m_max,
        tail_max,
        full_means,
        restricted_means,
    })
}
