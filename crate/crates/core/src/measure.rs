//! Product Bernoulli measures on `{0,1}^G`.
//!
//! A measure is given by its parameter function `g ↦ ρ_g(0)`. Functions of a
//! configuration are cylinder functions: a finite window `W` and a table of
//! `2^|W|` values, bit `i` of the table index being the coordinate at `W[i]`.
//! Integrals are exact by enumeration up to [`EXACT_CAP`] window coordinates
//! and Monte Carlo beyond.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::groups::{FolnerSequence, GroupDescriptor, GroupElement};
use crate::rng;

/// Largest window integrated by exhaustive enumeration.
pub const EXACT_CAP: usize = 22;

/// Largest window a cylinder table may have.
pub const TABLE_CAP: usize = 24;

/// Closed-form or tabulated parameter families for `ρ_g(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BernoulliParam {
    /// `ρ_g(0) = p0` for every `g`.
    Constant { p0: f64 },
    /// `ρ_g(0) = 1/2 + min(cap, amplitude · (offset + ‖g‖₁)^(-exponent))`.
    PowerDecay {
        amplitude: f64,
        offset: f64,
        exponent: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cap: Option<f64>,
    },
    /// Explicit values on finitely many elements, `default` elsewhere.
    Table { entries: Vec<(GroupElement, f64)>, default: f64 },
}

/// Where a measure differs from a shift-invariant one.
#[derive(Clone, Debug, PartialEq)]
pub enum NonUniformity {
    /// The parameter is constant.
    None,
    /// The parameter equals the default off these elements.
    Finite(Vec<GroupElement>),
    /// The parameter varies on an infinite set and decays to 1/2.
    Decaying,
}

#[derive(Serialize, Deserialize)]
struct MeasureSpec {
    descriptor: GroupDescriptor,
    param: BernoulliParam,
}

/// The product measure `⊗_g ρ_g` on `{0,1}^G`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MeasureSpec", into = "MeasureSpec")]
pub struct ProductBernoulliMeasure {
    descriptor: GroupDescriptor,
    param: BernoulliParam,
    table: HashMap<GroupElement, f64>,
}

impl PartialEq for ProductBernoulliMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.descriptor == other.descriptor && self.param == other.param
    }
}

impl TryFrom<MeasureSpec> for ProductBernoulliMeasure {
    type Error = Error;
    fn try_from(s: MeasureSpec) -> Result<Self> {
        ProductBernoulliMeasure::new(s.descriptor, s.param)
    }
}

impl From<ProductBernoulliMeasure> for MeasureSpec {
    fn from(m: ProductBernoulliMeasure) -> Self {
        MeasureSpec { descriptor: m.descriptor, param: m.param }
    }
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("{what} must lie in (0,1), got {p}"));
    }
    Ok(())
}

impl ProductBernoulliMeasure {
    pub fn new(descriptor: GroupDescriptor, param: BernoulliParam) -> Result<Self> {
        descriptor.validate()?;
        let mut table = HashMap::new();
        match &param {
            BernoulliParam::Constant { p0 } => check_probability(*p0, "p0")?,
            BernoulliParam::PowerDecay { amplitude, offset, exponent, cap } => {
                if !(amplitude.is_finite() && *offset >= 0.0 && *exponent > 0.0) {
                    return invalid("power decay needs finite amplitude, offset ≥ 0 and exponent > 0");
                }
                let peak = match (*offset > 0.0, cap) {
                    (_, Some(c)) if *c >= 0.0 => c.min(amplitude.abs() * offset.powf(-exponent)),
                    (true, None) => amplitude.abs() * offset.powf(-exponent),
                    _ => return invalid("power decay with zero offset needs a non-negative cap"),
                };
                check_probability(0.5 + peak, "largest ρ_g(0)")?;
                check_probability(0.5 - peak, "smallest ρ_g(0)")?;
            }
            BernoulliParam::Table { entries, default } => {
                check_probability(*default, "default")?;
                for (g, p) in entries {
                    descriptor.check(g)?;
                    check_probability(*p, &format!("ρ_{g}(0)"))?;
                    if table.insert(g.clone(), *p).is_some() {
                        return invalid(format!("duplicate table entry for {g}"));
                    }
                }
            }
        }
        Ok(ProductBernoulliMeasure { descriptor, param, table })
    }

    /// The shift-invariant measure with `ρ_g(0) = 1/2`.
    pub fn uniform(descriptor: GroupDescriptor) -> Self {
        ProductBernoulliMeasure::new(descriptor, BernoulliParam::Constant { p0: 0.5 })
            .expect("1/2 is a valid parameter")
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.descriptor
    }

    pub fn param(&self) -> &BernoulliParam {
        &self.param
    }

    /// `ρ_g(0)`.
    pub fn p0(&self, g: &GroupElement) -> f64 {
        match &self.param {
            BernoulliParam::PowerDecay { .. } => 0.5 + self.deviation(g),
            BernoulliParam::Constant { p0 } => *p0,
            BernoulliParam::Table { default, .. } => *self.table.get(g).unwrap_or(default),
        }
    }

    /// `ρ_g(0) − 1/2`, evaluated without the rounding of `p0(g) − 0.5`.
    pub fn deviation(&self, g: &GroupElement) -> f64 {
        match &self.param {
            BernoulliParam::PowerDecay { amplitude, offset, exponent, cap } => {
                let v = amplitude * (offset + g.l1_norm() as f64).powf(-exponent);
                match cap {
                    Some(c) => v.clamp(-c, *c),
                    None => v,
                }
            }
            _ => self.p0(g) - 0.5,
        }
    }

    /// `ρ_g(bit)`.
    pub fn rho(&self, g: &GroupElement, bit: u8) -> f64 {
        let p = self.p0(g);
        if bit == 0 {
            p
        } else {
            1.0 - p
        }
    }

    pub fn nonuniformity(&self) -> NonUniformity {
        match &self.param {
            BernoulliParam::Constant { .. } => NonUniformity::None,
            BernoulliParam::PowerDecay { .. } => NonUniformity::Decaying,
            BernoulliParam::Table { entries, default } => {
                let mut keys: Vec<_> =
                    entries.iter().filter(|(_, p)| p != default).map(|(g, _)| g.clone()).collect();
                keys.sort();
                if keys.is_empty() {
                    NonUniformity::None
                } else {
                    NonUniformity::Finite(keys)
                }
            }
        }
    }

    /// True when the measure is invariant under every shift.
    pub fn is_invariant(&self) -> bool {
        self.nonuniformity() == NonUniformity::None
    }

    /// Bound on `max_i |log ρ_g(i) - log ρ_h(i)|`.
    pub fn log_ratio_bound(&self, g: &GroupElement, h: &GroupElement) -> f64 {
        (0..2u8)
            .map(|i| (self.rho(g, i).ln() - self.rho(h, i).ln()).abs())
            .fold(0.0, f64::max)
    }
}

/// A function of finitely many coordinates, tabulated on `{0,1}^W`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCylinder")]
pub struct CylinderFunction {
    window: Vec<GroupElement>,
    table: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCylinder {
    window: Vec<GroupElement>,
    table: Vec<f64>,
}

impl TryFrom<RawCylinder> for CylinderFunction {
    type Error = Error;
    fn try_from(r: RawCylinder) -> Result<Self> {
        CylinderFunction::new(r.window, r.table)
    }
}

impl CylinderFunction {
    pub fn new(window: Vec<GroupElement>, table: Vec<f64>) -> Result<Self> {
        if window.len() > TABLE_CAP {
            return invalid(format!("cylinder window of {} exceeds {TABLE_CAP}", window.len()));
        }
        if table.len() != 1usize << window.len() {
            return invalid(format!(
                "table has {} entries, window of {} needs {}",
                table.len(),
                window.len(),
                1usize << window.len()
            ));
        }
        let mut sorted = window.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != window.len() {
            return invalid("cylinder window has repeated coordinates");
        }
        if table.iter().any(|v| !v.is_finite()) {
            return invalid("cylinder table has non-finite values");
        }
        Ok(CylinderFunction { window, table })
    }

    pub fn constant(c: f64) -> Self {
        CylinderFunction { window: Vec::new(), table: vec![c] }
    }

    /// `σ ↦ σ_h`.
    pub fn coordinate(h: GroupElement) -> Self {
        CylinderFunction { window: vec![h], table: vec![0.0, 1.0] }
    }

    /// Tabulates `f` over `{0,1}^W`; the slice passed to `f` is ordered like `window`.
    pub fn from_fn(window: Vec<GroupElement>, f: impl Fn(&[u8]) -> f64) -> Result<Self> {
        if window.len() > TABLE_CAP {
            return invalid(format!("cylinder window of {} exceeds {TABLE_CAP}", window.len()));
        }
        let w = window.len();
        let mut bits = vec![0u8; w];
        let table = (0..1usize << w)
            .map(|idx| {
                for (i, b) in bits.iter_mut().enumerate() {
                    *b = ((idx >> i) & 1) as u8;
                }
                f(&bits)
            })
            .collect();
        CylinderFunction::new(window, table)
    }

    pub fn window(&self) -> &[GroupElement] {
        &self.window
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn eval_index(&self, idx: usize) -> f64 {
        self.table[idx]
    }

    pub fn eval(&self, config: &Configuration) -> Result<f64> {
        let mut idx = 0usize;
        let mut missing = Vec::new();
        for (i, h) in self.window.iter().enumerate() {
            match config.get(h) {
                Some(b) => idx |= (b as usize) << i,
                None => missing.push(h.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::MissingCoordinates { missing });
        }
        Ok(self.table[idx])
    }

    /// `σ ↦ |f(σ)|^α`.
    pub fn abs_pow(&self, alpha: f64) -> Self {
        CylinderFunction {
            window: self.window.clone(),
            table: self.table.iter().map(|v| v.abs().powf(alpha)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|v| *v == 0.0)
    }
}

/// A `{0,1}`-valued configuration on a finite window.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Configuration(BTreeMap<GroupElement, u8>);

impl Configuration {
    pub fn new() -> Self {
        Configuration(BTreeMap::new())
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (GroupElement, u8)>) -> Self {
        Configuration(pairs.into_iter().collect())
    }

    pub fn get(&self, h: &GroupElement) -> Option<u8> {
        self.0.get(h).copied()
    }

    pub fn insert(&mut self, h: GroupElement, bit: u8) {
        self.0.insert(h, bit);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, &u8)> {
        self.0.iter()
    }
}

/// How an integral was evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationMode {
    Exact,
    MonteCarlo,
}

/// Value of an integral with its standard error (zero in exact mode).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: u64,
    pub mode: IntegrationMode,
}

impl IntegrationEstimate {
    pub fn exact(value: f64, points: u64) -> Self {
        IntegrationEstimate { value, stderr: 0.0, samples: points, mode: IntegrationMode::Exact }
    }
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub(crate) fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Standard error of the mean.
    pub(crate) fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }

    pub(crate) fn estimate(&self) -> IntegrationEstimate {
        IntegrationEstimate {
            value: self.mean,
            stderr: self.stderr(),
            samples: self.n,
            mode: IntegrationMode::MonteCarlo,
        }
    }
}

/// Probabilities of all `2^k` configurations of independent bits with
/// `P(bit i = 0) = p0[i]`, indexed like cylinder tables.
pub(crate) fn configuration_weights(p0: &[f64]) -> Vec<f64> {
    let mut w = Vec::with_capacity(1 << p0.len());
    w.push(1.0);
    for &p in p0 {
        let half = w.len();
        for j in 0..half {
            w.push(w[j] * (1.0 - p));
        }
        for x in w.iter_mut().take(half) {
            *x *= p;
        }
    }
    w
}

/// Exact `∫ f dμ` by enumeration of the window.
pub fn cylinder_integrate(m: &ProductBernoulliMeasure, f: &CylinderFunction) -> Result<IntegrationEstimate> {
    let w = f.window.len();
    if w > EXACT_CAP {
        return Err(Error::WindowTooLarge { coords: w, cap: EXACT_CAP });
    }
    let p0: Vec<f64> = f.window.iter().map(|h| m.p0(h)).collect();
    let weights = configuration_weights(&p0);
    let value = weights.iter().zip(&f.table).map(|(w, v)| w * v).sum();
    Ok(IntegrationEstimate::exact(value, weights.len() as u64))
}

/// Monte Carlo `∫ f dμ` from `n` independent configurations.
pub fn mc_integrate(
    m: &ProductBernoulliMeasure,
    f: &CylinderFunction,
    n: u64,
    seed: u64,
) -> Result<IntegrationEstimate> {
    if n < 2 {
        return invalid("Monte Carlo integration needs at least 2 samples");
    }
    let p0: Vec<f64> = f.window.iter().map(|h| m.p0(h)).collect();
    let mut rng = rng::stream(seed, rng::streams::MC_INTEGRATE);
    let mut acc = Welford::default();
    for _ in 0..n {
        let idx = p0
            .iter()
            .enumerate()
            .fold(0usize, |idx, (i, p)| idx | (((rng.random::<f64>() >= *p) as usize) << i));
        acc.push(f.table[idx]);
    }
    Ok(acc.estimate())
}

/// Independent draws of the coordinates in `window`.
pub fn sample_configuration(m: &ProductBernoulliMeasure, window: &[GroupElement], seed: u64) -> Configuration {
    let mut rng = rng::stream(seed, rng::streams::CONFIGURATION);
    Configuration::from_pairs(
        window.iter().map(|h| (h.clone(), (rng.random::<f64>() >= m.p0(h)) as u8)),
    )
}

/// Heuristic reading of partial-sum growth over nested windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KakutaniVerdict {
    ConvergentLooking,
    DivergentLooking,
    Inconclusive,
}

/// Kakutani partial sums over nested prefixes of a window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KakutaniReport {
    /// Full-window sum.
    pub total: f64,
    /// `(prefix size, partial sum)` at halving prefix sizes, ascending.
    pub partial_sums: Vec<(usize, f64)>,
    /// Increment over the last doubling divided by the one before it.
    pub increment_ratio: Option<f64>,
    pub verdict: KakutaniVerdict,
    pub window_size: usize,
}

/// `Σ_{g∈window} Σ_i (√ρ_g(i) − √ϱ_g(i))²`.
///
/// The window is ordered by `‖g‖₁` then coordinates and the sum is recorded
/// at prefix sizes `|W|, |W|/2, |W|/4, …`. An increment ratio over the last two
/// doublings at most 0.75 reads as convergent, at least 0.9 as divergent.
pub fn kakutani_sum(
    m1: &ProductBernoulliMeasure,
    m2: &ProductBernoulliMeasure,
    window: &[GroupElement],
) -> KakutaniReport {
    let mut order: Vec<&GroupElement> = window.iter().collect();
    order.sort_by(|a, b| a.l1_norm().cmp(&b.l1_norm()).then_with(|| a.cmp(b)));
    let n = order.len();
    let mut marks = Vec::new();
    let mut k = n;
    while k >= 1 {
        marks.push(k);
        k /= 2;
    }
    marks.reverse();
    marks.dedup();

    let mut partial_sums = Vec::with_capacity(marks.len());
    let mut sum = 0.0;
    let mut next = 0;
    for (i, g) in order.iter().enumerate() {
        for bit in 0..2u8 {
            let d = m1.rho(g, bit).sqrt() - m2.rho(g, bit).sqrt();
            sum += d * d;
        }
        if next < marks.len() && i + 1 == marks[next] {
            partial_sums.push((i + 1, sum));
            next += 1;
        }
    }

    let increment_ratio = (partial_sums.len() >= 3).then(|| {
        let l = partial_sums.len();
        let (a, b, c) = (partial_sums[l - 3].1, partial_sums[l - 2].1, partial_sums[l - 1].1);
        if b - a > 0.0 {
            (c - b) / (b - a)
        } else if c - b > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    });
    let verdict = if sum == 0.0 {
        KakutaniVerdict::ConvergentLooking
    } else {
        match increment_ratio {
            Some(r) if r <= 0.75 => KakutaniVerdict::ConvergentLooking,
            Some(r) if r >= 0.9 => KakutaniVerdict::DivergentLooking,
            _ => KakutaniVerdict::Inconclusive,
        }
    };
    KakutaniReport { total: sum, partial_sums, increment_ratio, verdict, window_size: n }
}

/// Hellinger affinity of the shifted measure with the original on a window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HellingerReport {
    pub value: f64,
    pub log_value: f64,
    pub window_size: usize,
}

/// `Π_{h∈window} Σ_i √(ρ_{g⁻¹h}(i) ρ_h(i))`, the affinity `∫√(dρ∘s_g/dρ) dρ`
/// restricted to the window.
///
/// Each factor is at most 1, so the value can only decrease as the window
/// grows; factors are clamped at 1 against rounding.
pub fn hellinger_affinity(m: &ProductBernoulliMeasure, g: &GroupElement, window: &[GroupElement]) -> Result<HellingerReport> {
    let desc = m.descriptor();
    desc.check(g)?;
    let g_inv = desc.inv_unchecked(g);
    let mut log_value = 0.0;
    for h in window {
        desc.check(h)?;
        let k = desc.mul_unchecked(&g_inv, h);
        let (a, b) = (m.p0(&k), m.p0(h));
        let factor = (a * b).sqrt() + ((1.0 - a) * (1.0 - b)).sqrt();
        log_value += factor.ln().min(0.0);
    }
    Ok(HellingerReport { value: log_value.exp(), log_value, window_size: window.len() })
}

/// The perturbation `Ψ` in `ρ_g(0) = 1/2 + Ψ(g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PsiProfile {
    Constant { value: f64 },
    /// `Ψ(g) = amplitude · (offset + ‖g‖₁)^(-exponent)`.
    PowerDecay { amplitude: f64, offset: f64, exponent: f64 },
}

impl Default for PsiProfile {
    /// `Ψ(g) = 1 / (3 √(1 + ‖g‖₁))`.
    fn default() -> Self {
        PsiProfile::PowerDecay { amplitude: 1.0 / 3.0, offset: 1.0, exponent: 0.5 }
    }
}

impl PsiProfile {
    pub fn psi(&self, g: &GroupElement) -> f64 {
        match *self {
            PsiProfile::Constant { value } => value,
            PsiProfile::PowerDecay { amplitude, offset, exponent } => {
                amplitude * (offset + g.l1_norm() as f64).powf(-exponent)
            }
        }
    }

    /// Largest value of `Ψ`, attained at the identity.
    pub fn sup(&self) -> f64 {
        match *self {
            PsiProfile::Constant { value } => value,
            PsiProfile::PowerDecay { amplitude, offset, exponent } => amplitude * offset.powf(-exponent),
        }
    }

    /// Requires `0 < Ψ ≤ 1/3`.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PsiProfile::Constant { value } => value > 0.0,
            PsiProfile::PowerDecay { amplitude, offset, exponent } => {
                amplitude > 0.0 && offset > 0.0 && exponent > 0.0
            }
        };
        if !ok || !(self.sup() <= 1.0 / 3.0) {
            return invalid(format!("Ψ must take values in (0, 1/3], profile {self:?} does not"));
        }
        Ok(())
    }

    fn as_param(&self) -> BernoulliParam {
        match *self {
            PsiProfile::Constant { value } => BernoulliParam::Constant { p0: 0.5 + value },
            PsiProfile::PowerDecay { amplitude, offset, exponent } => {
                BernoulliParam::PowerDecay { amplitude, offset, exponent, cap: None }
            }
        }
    }
}

/// Window sizes used for the Ψ diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiDiagnosticsConfig {
    /// Box indices for the partial sums of `Ψ²`.
    pub square_sum_n: Vec<usize>,
    /// Box indices for the partial sums of `exp(−45‖c_g‖²)`.
    pub conservativity_n: Vec<usize>,
    /// Box index of the window over which `‖c_g‖²` is truncated.
    pub norm_window_n: usize,
}

impl PsiDiagnosticsConfig {
    pub fn default_for(desc: &GroupDescriptor) -> Self {
        match *desc {
            GroupDescriptor::Lattice { dim: 1 } => PsiDiagnosticsConfig {
                square_sum_n: (4..=14).map(|k| 1 << k).collect(),
                conservativity_n: (1..=6).map(|k| 1 << k).collect(),
                norm_window_n: 2048,
            },
            GroupDescriptor::Lattice { dim: 2 } => PsiDiagnosticsConfig {
                square_sum_n: (1..=6).map(|k| 1 << k).collect(),
                conservativity_n: vec![1, 2, 4, 8],
                norm_window_n: 32,
            },
            GroupDescriptor::Lattice { .. } => PsiDiagnosticsConfig {
                square_sum_n: vec![1, 2, 4],
                conservativity_n: vec![1],
                norm_window_n: 2,
            },
            GroupDescriptor::Heisenberg => PsiDiagnosticsConfig {
                square_sum_n: vec![1, 2, 4, 8],
                conservativity_n: vec![1, 2],
                norm_window_n: 4,
            },
        }
    }
}

/// Partial sums tracking the properties the Ψ-construction relies on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiDiagnostics {
    /// `(|F_N|, Σ_{g∈F_N} Ψ(g)²)`, expected to grow without bound.
    pub square_sums: Vec<(u64, f64)>,
    /// `(|F_N|, Σ_{g∈F_N} exp(−45‖c_g‖²))`, reported only.
    pub conservativity_sums: Vec<(u64, f64)>,
    /// `‖c_g‖² = Σ_h (Ψ(h) − Ψ(gh))²` truncated to `h ∈ F_{norm_window_n}`,
    /// for `g` in the largest conservativity box.
    pub c_norms: Vec<(GroupElement, f64)>,
    pub norm_window_size: u64,
}

/// A Ψ-perturbed product measure and its diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiMeasure {
    pub measure: ProductBernoulliMeasure,
    pub profile: PsiProfile,
    pub diagnostics: PsiDiagnostics,
}

/// `ρ_g(0) = 1/2 + Ψ(g)` with default diagnostic windows.
pub fn build_psi_measure(desc: GroupDescriptor, profile: &PsiProfile) -> Result<PsiMeasure> {
    build_psi_measure_with(desc, profile, &PsiDiagnosticsConfig::default_for(&desc))
}

/// `ρ_g(0) = 1/2 + Ψ(g)` with explicit diagnostic windows.
pub fn build_psi_measure_with(
    desc: GroupDescriptor,
    profile: &PsiProfile,
    config: &PsiDiagnosticsConfig,
) -> Result<PsiMeasure> {
    profile.validate()?;
    let measure = ProductBernoulliMeasure::new(desc, profile.as_param())?;
    let boxes = FolnerSequence::boxes(desc)?;

    let mut square_sums = Vec::new();
    for &n in &config.square_sum_n {
        let s: f64 = boxes.set(n)?.iter().map(|g| profile.psi(g).powi(2)).sum();
        square_sums.push((boxes.size(n)?, s));
    }

    let h_window = boxes.set(config.norm_window_n)?;
    let psi_h: Vec<f64> = h_window.iter().map(|h| profile.psi(h)).collect();
    let mut c_norms = Vec::new();
    let mut conservativity_sums = Vec::new();
    if let Some(&n_big) = config.conservativity_n.iter().max() {
        let cost = boxes.size(n_big)?.saturating_mul(h_window.len() as u64);
        if cost > boxes.budget() {
            return Err(Error::Budget { what: "Ψ cocycle norms".into(), needed: cost, budget: boxes.budget() });
        }
        for g in boxes.set(n_big)? {
            let norm: f64 = h_window
                .iter()
                .zip(&psi_h)
                .map(|(h, p)| (p - profile.psi(&desc.mul_unchecked(&g, h))).powi(2))
                .sum();
            c_norms.push((g, norm));
        }
        for &n in &config.conservativity_n {
            let s: f64 = c_norms
                .iter()
                .filter(|(g, _)| boxes.contains(n, g))
                .map(|(_, c)| (-45.0 * c).exp())
                .sum();
            conservativity_sums.push((boxes.size(n)?, s));
        }
    }
    Ok(PsiMeasure {
        measure,
        profile: profile.clone(),
        diagnostics: PsiDiagnostics {
            square_sums,
            conservativity_sums,
            c_norms,
            norm_window_size: h_window.len() as u64,
        },
    })
}
