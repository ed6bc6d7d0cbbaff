//! Symmetric α-stable processes `X_g = ∫ u_g f₀ dM` over a non-singular system.
//!
//! The law of every finite linear combination is known in closed form,
//! `E exp(i Σ c_h X_h) = exp(−‖Σ c_h u_h f₀‖_α^α)`, so [`char_fn`] is exact up to
//! the integration mode. Paths are sampled from a truncated LePage series
//!
//! `X_g ≈ (C_α m)^{1/α} Σ_{j≤J} ε_j Γ_j^{-1/α} (u_g f₀)(V_j)`
//!
//! with unit-rate Poisson arrivals `Γ_j`, Rademacher signs `ε_j` and `V_j` drawn
//! from the control measure normalized by its mass `m`. The series remainder
//! `R` is conditionally symmetric given the first `J` terms, so
//! `|E e^{iφ(X)} − E e^{iφ(X_J)}| ≤ E R²/2`, which is reported as the truncation
//! bound of every empirical characteristic function.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::groups::{GroupDescriptor, GroupElement};
use crate::measure::{configuration_weights, IntegrationMode};
use crate::rng;
use crate::systems::{check_alpha, EvalMode, JointModel, NonSingularSystem, StateFunction, SystemKind};

/// Largest number of Bernoulli coordinates tabulated for path sampling.
pub const PATH_TABLE_CAP: usize = 16;
/// Draws used to estimate second moments when the control law is not tabulated.
const MOMENT_DRAWS: u64 = 200_000;

/// A finite linear combination `Σ_h c_h X_h`, stored sorted by element.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCombination", into = "RawCombination")]
pub struct LinearCombination {
    terms: Vec<(GroupElement, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawCombination {
    support: Vec<GroupElement>,
    coeffs: Vec<f64>,
}

impl TryFrom<RawCombination> for LinearCombination {
    type Error = Error;
    fn try_from(r: RawCombination) -> Result<Self> {
        LinearCombination::new(r.support, r.coeffs)
    }
}

impl From<LinearCombination> for RawCombination {
    fn from(c: LinearCombination) -> Self {
        let (support, coeffs) = c.terms.into_iter().unzip();
        RawCombination { support, coeffs }
    }
}

impl LinearCombination {
    pub fn new(support: Vec<GroupElement>, coeffs: Vec<f64>) -> Result<Self> {
        if support.len() != coeffs.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: coeffs.len() });
        }
        Self::from_terms(support.into_iter().zip(coeffs).collect())
    }

    /// Merges repeated elements by adding their coefficients.
    pub fn from_terms(mut terms: Vec<(GroupElement, f64)>) -> Result<Self> {
        if terms.iter().any(|(_, c)| !c.is_finite()) {
            return invalid("coefficients must be finite");
        }
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(GroupElement, f64)> = Vec::with_capacity(terms.len());
        for (g, c) in terms {
            match out.last_mut() {
                Some(last) if last.0 == g => last.1 += c,
                _ => out.push((g, c)),
            }
        }
        Ok(LinearCombination { terms: out })
    }

    pub fn zero() -> Self {
        LinearCombination::default()
    }

    pub fn single(g: GroupElement, c: f64) -> Self {
        LinearCombination { terms: vec![(g, c)] }
    }

    pub fn terms(&self) -> &[(GroupElement, f64)] {
        &self.terms
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.terms.iter().map(|t| &t.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == 0.0)
    }

    pub fn scaled(&self, t: f64) -> Self {
        LinearCombination { terms: self.terms.iter().map(|(g, c)| (g.clone(), t * c)).collect() }
    }

    /// The combination with coefficient `c_h` at `g·h`.
    pub fn shifted(&self, desc: &GroupDescriptor, g: &GroupElement) -> Result<Self> {
        desc.check(g)?;
        Self::from_terms(self.terms.iter().map(|(h, c)| (desc.mul_unchecked(g, h), *c)).collect())
    }

    /// `self − other`.
    pub fn minus(&self, other: &LinearCombination) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|(g, c)| (g.clone(), -c)));
        Self::from_terms(terms).expect("finite coefficients")
    }
}

/// The process `X_g = ∫ u_g f₀ dM` for a fixed system and α.
#[derive(Clone, Debug)]
pub struct SpectralProcess {
    alpha: f64,
    f0: StateFunction,
    system: NonSingularSystem,
    mode: EvalMode,
}

impl SpectralProcess {
    /// A process with exact integration; `f₀ ≡ 0` is allowed and gives the zero process.
    pub fn new(alpha: f64, f0: StateFunction, system: NonSingularSystem) -> Result<Self> {
        check_alpha(alpha)?;
        system.check_function(&f0)?;
        Ok(SpectralProcess { alpha, f0, system, mode: EvalMode::default() })
    }

    pub fn with_eval_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }

    /// Enables the Monte Carlo fallback above the exact enumeration cap.
    pub fn with_mc_fallback(mut self, samples: u64, seed: u64) -> Self {
        self.mode.mc_samples = Some(samples);
        self.mode.seed = seed;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f0(&self) -> &StateFunction {
        &self.f0
    }

    pub fn system(&self) -> &NonSingularSystem {
        &self.system
    }

    pub fn eval_mode(&self) -> &EvalMode {
        &self.mode
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        self.system.descriptor()
    }

    /// Joint model of the rows `Σ c u_h f₀`.
    pub fn model(&self, rows: &[Vec<(GroupElement, f64)>]) -> Result<JointModel> {
        JointModel::build(&self.system, self.alpha, &self.f0, rows)
    }
}

/// An α-norm with the standard error of its α-th power.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    /// `‖φ‖_α`.
    pub value: f64,
    /// `‖φ‖_α^α`.
    pub power: f64,
    /// Standard error of `power`; zero in exact mode.
    pub stderr: f64,
    pub mode: IntegrationMode,
}

impl NormEstimate {
    fn from_power(power: f64, stderr: f64, mode: IntegrationMode, alpha: f64) -> Self {
        let power = power.max(0.0);
        NormEstimate { value: power.powf(1.0 / alpha), power, stderr, mode }
    }
}

/// `∫ |c·u_h f₀|^α dμ` on a Bernoulli shift, reading only the coordinates `h·W`.
/// RN factors outside `h·W` integrate to one and are skipped.
fn single_term_bernoulli(p: &SpectralProcess, h: &GroupElement, c: f64) -> Result<Option<f64>> {
    let (SystemKind::BernoulliShift { measure }, StateFunction::Cylinder { function }) = (p.system.kind(), &p.f0)
    else {
        return Ok(None);
    };
    let d = p.descriptor();
    d.check(h)?;
    let coords: Vec<GroupElement> = function.window().iter().map(|k| d.mul_unchecked(h, k)).collect();
    if coords.len() > p.mode.exact_cap {
        return Ok(None);
    }
    let rn = p.system.rn_factors(h)?;
    let lr: Vec<[f64; 2]> =
        coords.iter().map(|x| rn.iter().find(|(j, _)| j == x).map_or([0.0, 0.0], |(_, l)| *l)).collect();
    let p0: Vec<f64> = coords.iter().map(|x| measure.p0(x)).collect();
    let weights = configuration_weights(&p0);
    let abs_c = c.abs().powf(p.alpha);
    let mut total = 0.0;
    for (idx, w) in weights.iter().enumerate() {
        let fv = function.eval_index(idx);
        if fv == 0.0 {
            continue;
        }
        let log_rn: f64 = lr.iter().enumerate().map(|(k, l)| l[(idx >> k) & 1]).sum();
        total += w * log_rn.exp() * abs_c * fv.abs().powf(p.alpha);
    }
    Ok(Some(total))
}

/// `‖Σ_h c_h u_h f₀‖_α` in `L^α(μ)`.
pub fn alpha_norm(p: &SpectralProcess, comb: &LinearCombination) -> Result<NormEstimate> {
    let alpha = p.alpha;
    for g in comb.support() {
        p.descriptor().check(g)?;
    }
    let terms: Vec<(GroupElement, f64)> = comb.terms.iter().filter(|(_, c)| *c != 0.0).cloned().collect();
    if terms.is_empty() || p.f0.is_zero() {
        return Ok(NormEstimate::from_power(0.0, 0.0, IntegrationMode::Exact, alpha));
    }
    if let [(h, c)] = terms.as_slice() {
        if let Some(power) = single_term_bernoulli(p, h, *c)? {
            return Ok(NormEstimate::from_power(power, 0.0, IntegrationMode::Exact, alpha));
        }
    }
    let model = p.model(&[terms])?;
    let est = model.integrate(&p.mode, |v| v[0].abs().powf(alpha))?;
    Ok(NormEstimate::from_power(est.value, est.stderr, est.mode, alpha))
}

/// `E exp(i Σ c_h X_h) = exp(−‖Σ c_h u_h f₀‖_α^α)`.
pub fn char_fn(p: &SpectralProcess, comb: &LinearCombination) -> Result<f64> {
    Ok((-alpha_norm(p, comb)?.power).exp())
}

/// The LePage constant `C_α = (1−α)/(Γ(2−α)·cos(πα/2))`, with `C₁ = 2/π`.
pub fn lepage_constant(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-12 {
        return 2.0 / PI;
    }
    (1.0 - alpha) / (gamma(2.0 - alpha) * (PI * alpha / 2.0).cos())
}

/// `Σ_{j>J} E Γ_j^{-2/α} = Γ(J+1−p)/((p−1)·Γ(J))` with `p = 2/α`.
pub fn lepage_tail_sum(alpha: f64, series_length: usize) -> f64 {
    let p = 2.0 / alpha;
    let j = series_length as f64;
    if j + 1.0 - p <= 0.0 {
        return f64::INFINITY;
    }
    (ln_gamma(j + 1.0 - p) - ln_gamma(j)).exp() / (p - 1.0)
}

/// `n` iid draws with characteristic function `exp(−σ^α |θ|^α)`, by the
/// Chambers–Mallows–Stuck transform.
pub fn sample_sas_scalar(alpha: f64, sigma: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return invalid(format!("α must lie in (0,2], got {alpha}"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return invalid(format!("scale must be positive, got {sigma}"));
    }
    let mut rng = rng::stream(seed, rng::streams::SAS_SCALAR);
    Ok((0..n)
        .map(|_| {
            let v = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            if (alpha - 1.0).abs() < 1e-12 {
                return sigma * v.tan();
            }
            let w: f64 = Exp1.sample(&mut rng);
            let x = (alpha * v).sin() / v.cos().powf(1.0 / alpha)
                * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
            sigma * x
        })
        .collect())
}

/// One sampled path on a window.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub window: Arc<[GroupElement]>,
    pub values: Vec<f64>,
    pub series_length: usize,
    /// Seed of this path's random stream.
    pub seed: u64,
    /// Largest `|J-th term|` over the window, relative to the largest `|X_g|`.
    pub last_term_ratio: f64,
}

/// A batch of paths with the data needed to bound truncation error.
#[derive(Clone, Debug)]
pub struct PathSet {
    pub window: Arc<[GroupElement]>,
    pub paths: Vec<PathSample>,
    pub series_length: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Total mass `m` of the control measure that was sampled.
    pub control_mass: f64,
    /// `(C_α m)^{1/α}`.
    pub scale: f64,
    /// `E_V[(u_g f₀)(V)·(u_h f₀)(V)]` over the window, row-major.
    moments: Vec<f64>,
    /// Whether `moments` is exact rather than a Monte Carlo estimate.
    pub moments_exact: bool,
    pub warning: Option<String>,
}

impl PathSet {
    /// `E R²/2` for `φ = Σ c_g X_g`, with `R` the series remainder after `J` terms.
    pub fn truncation_bound(&self, comb: &LinearCombination) -> Result<f64> {
        let idx = self.indices(comb)?;
        let k = self.window.len();
        let mut q = 0.0;
        for (a, ca) in &idx {
            for (b, cb) in &idx {
                q += ca * cb * self.moments[a * k + b];
            }
        }
        Ok(0.5 * self.scale * self.scale * q.max(0.0) * lepage_tail_sum(self.alpha, self.series_length))
    }

    fn indices(&self, comb: &LinearCombination) -> Result<Vec<(usize, f64)>> {
        comb.terms
            .iter()
            .map(|(g, c)| match self.window.binary_search(g) {
                Ok(i) => Ok((i, *c)),
                Err(_) => invalid(format!("{g} is not in the path window")),
            })
            .collect()
    }
}

/// `n` paths of the truncated LePage series with `J` terms on `window`.
pub fn sample_path(
    p: &SpectralProcess,
    window: &[GroupElement],
    series_length: usize,
    n: usize,
    seed: u64,
) -> Result<PathSet> {
    if window.is_empty() {
        return invalid("path window is empty");
    }
    if series_length == 0 {
        return invalid("series length must be positive");
    }
    let mut win: Vec<GroupElement> = window.to_vec();
    win.sort();
    win.dedup();
    for g in &win {
        p.descriptor().check(g)?;
    }
    let window: Arc<[GroupElement]> = win.into();
    let k = window.len();
    let warning = (series_length < 100).then(|| format!("series length {series_length} is below 100"));
    let inv_alpha = 1.0 / p.alpha;

    let rows: Vec<Vec<(GroupElement, f64)>> = window.iter().map(|g| vec![(g.clone(), 1.0)]).collect();
    let model = p.model(&rows)?;
    let zero = p.f0.is_zero() || (model.is_atomic() && model.size() == 0);
    let control_mass = if zero { 0.0 } else { model.total_mass() };
    let scale = (lepage_constant(p.alpha) * control_mass).powf(inv_alpha);

    let zero_paths = |window: &Arc<[GroupElement]>| {
        (0..n)
            .map(|i| PathSample {
                window: window.clone(),
                values: vec![0.0; k],
                series_length,
                seed: rng::child_seed(seed, i as u64),
                last_term_ratio: 0.0,
            })
            .collect()
    };
    if zero {
        return Ok(PathSet {
            paths: zero_paths(&window),
            window,
            series_length,
            seed,
            alpha: p.alpha,
            control_mass,
            scale,
            moments: vec![0.0; k * k],
            moments_exact: true,
            warning,
        });
    }

    let mut sampler = model.control_sampler(PATH_TABLE_CAP)?;
    let moments_exact = sampler.is_tabulated();
    let moments = sampler.moment_matrix(&mut rng::stream(seed, rng::streams::TAIL), MOMENT_DRAWS);

    let mut out = vec![0.0; k];
    let mut paths = Vec::with_capacity(n);
    for i in 0..n {
        let path_seed = rng::child_seed(seed, i as u64);
        let mut rng = rng::stream(path_seed, rng::streams::LEPAGE);
        let mut acc = vec![0.0; k];
        let mut arrival = 0.0f64;
        let mut signs = 0u64;
        let mut last = 0.0f64;
        for j in 0..series_length {
            if j % 64 == 0 {
                signs = rng.random();
            }
            let e: f64 = Exp1.sample(&mut rng);
            arrival += e;
            let mut w = arrival.powf(-inv_alpha);
            if signs & 1 == 1 {
                w = -w;
            }
            signs >>= 1;
            let v = sampler.draw(&mut rng, &mut out);
            for (a, x) in acc.iter_mut().zip(v) {
                *a += w * x;
            }
            if j + 1 == series_length {
                last = v.iter().fold(0.0f64, |m, x| m.max((w * x).abs()));
            }
        }
        for a in acc.iter_mut() {
            *a *= scale;
        }
        last *= scale;
        let top = acc.iter().fold(last, |m, x| m.max(x.abs()));
        paths.push(PathSample {
            window: window.clone(),
            values: acc,
            series_length,
            seed: path_seed,
            last_term_ratio: if top > 0.0 { last / top } else { 0.0 },
        });
    }
    Ok(PathSet {
        window,
        paths,
        series_length,
        seed,
        alpha: p.alpha,
        control_mass,
        scale,
        moments,
        moments_exact,
        warning,
    })
}

/// Mean of `exp(i Σ c_g X_g)` over paths with componentwise standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharFnEstimate {
    pub value: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// Bound on the bias from truncating the series.
    pub truncation_bound: f64,
    pub paths: usize,
}

impl CharFnEstimate {
    /// `|estimate − exact| ≤ k·stderr + truncation bound` in both components.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        (self.value.re - exact).abs() <= k * self.stderr_re + self.truncation_bound
            && self.value.im.abs() <= k * self.stderr_im + self.truncation_bound
    }
}

pub fn empirical_char_fn(paths: &PathSet, comb: &LinearCombination) -> Result<CharFnEstimate> {
    let idx = paths.indices(comb)?;
    let n = paths.paths.len();
    if n == 0 {
        return invalid("no paths");
    }
    if idx.iter().all(|(_, c)| *c == 0.0) {
        return Ok(CharFnEstimate {
            value: Complex64::new(1.0, 0.0),
            stderr_re: 0.0,
            stderr_im: 0.0,
            truncation_bound: 0.0,
            paths: n,
        });
    }
    let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
    for path in &paths.paths {
        let phi: f64 = idx.iter().map(|(i, c)| c * path.values[*i]).sum();
        let (s, c) = phi.sin_cos();
        sc += c;
        ss += s;
        sc2 += c * c;
        ss2 += s * s;
    }
    let nf = n as f64;
    let (mc, ms) = (sc / nf, ss / nf);
    let se = |m2: f64, m: f64| if n > 1 { ((m2 / nf - m * m).max(0.0) / (nf - 1.0)).sqrt() } else { 0.0 };
    Ok(CharFnEstimate {
        value: Complex64::new(mc, ms),
        stderr_re: se(sc2, mc),
        stderr_im: se(ss2, ms),
        truncation_bound: paths.truncation_bound(comb)?,
        paths: n,
    })
}
