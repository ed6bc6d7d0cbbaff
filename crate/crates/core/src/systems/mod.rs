//! Non-singular G-systems: actions, Radon–Nikodym cocycles, sign cocycles,
//! the Koopman operator `u_g f = c_g (a′_g)^{1/α} f∘a_g` and the dual action
//! `â_g f = a′_g f∘a_g`.
//!
//! All actions are written as right actions, `act(gh, ω) = act(h, act(g, ω))`:
//!
//! * Bernoulli shift: `(s_g ω)_h = ω_{gh}`.
//! * Counting translation on `G`: `x ↦ x·g`.
//! * Finite systems: `i ↦ i + φ(g) mod n` for a homomorphism `φ: G → ℤ`.
//!
//! With this convention `g ↦ u_g` is a left action on `L^α`, so the index
//! shift `λ_g` on linear combinations is an isometry for every group.
//!
//! The Radon–Nikodym derivative of the Bernoulli shift is
//! `a′_g(ω) = Π_h ρ_{g⁻¹h}(ω_h) / ρ_h(ω_h)`, truncated to `h ∈ B_R ∪ g·B_R`
//! for decaying parameter families and exact for tabulated ones. It satisfies
//! `a′_{gh} = (a′_h∘a_g)·a′_g` and `∫ (â_g f)·b dμ = ∫ f·(b∘a_{g⁻¹}) dμ`.

mod joint;

use std::sync::{Arc, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use joint::{ControlSampler, EvalMode, JointModel};

use crate::error::{invalid, Error, Result};
use crate::groups::{GroupDescriptor, GroupElement, DEFAULT_BUDGET};
use crate::measure::{Configuration, CylinderFunction, NonUniformity, ProductBernoulliMeasure};
use crate::rng;

/// A finitely supported real function on the group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(GroupElement, f64)>", into = "Vec<(GroupElement, f64)>")]
pub struct GroupFunction {
    entries: Vec<(GroupElement, f64)>,
}

impl TryFrom<Vec<(GroupElement, f64)>> for GroupFunction {
    type Error = Error;
    fn try_from(v: Vec<(GroupElement, f64)>) -> Result<Self> {
        GroupFunction::new(v)
    }
}

impl From<GroupFunction> for Vec<(GroupElement, f64)> {
    fn from(f: GroupFunction) -> Self {
        f.entries
    }
}

impl GroupFunction {
    /// Zero entries are dropped; repeated elements are an error.
    pub fn new(mut entries: Vec<(GroupElement, f64)>) -> Result<Self> {
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return invalid("group function has non-finite values");
        }
        entries.retain(|(_, v)| *v != 0.0);
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return invalid("group function lists an element twice");
        }
        Ok(GroupFunction { entries })
    }

    /// Indicator of `{g}`.
    pub fn delta(g: GroupElement) -> Self {
        GroupFunction { entries: vec![(g, 1.0)] }
    }

    pub fn get(&self, x: &GroupElement) -> f64 {
        self.entries
            .binary_search_by(|(g, _)| g.cmp(x))
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.entries.iter().map(|(g, _)| g)
    }

    pub fn entries(&self) -> &[(GroupElement, f64)] {
        &self.entries
    }
}

/// A real function on the state space of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case")]
pub enum StateFunction {
    /// Function of finitely many Bernoulli coordinates.
    Cylinder { function: CylinderFunction },
    /// Finitely supported function on `G` (counting systems).
    Group { function: GroupFunction },
    /// Values on the atoms of a finite system.
    Atoms { values: Vec<f64> },
}

impl StateFunction {
    pub fn cylinder(f: CylinderFunction) -> Self {
        StateFunction::Cylinder { function: f }
    }

    pub fn group(f: GroupFunction) -> Self {
        StateFunction::Group { function: f }
    }

    pub fn atoms(values: Vec<f64>) -> Self {
        StateFunction::Atoms { values }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            StateFunction::Cylinder { function } => function.is_zero(),
            StateFunction::Group { function } => function.entries.is_empty(),
            StateFunction::Atoms { values } => values.iter().all(|v| *v == 0.0),
        }
    }
}

/// The finite quotient action of a finite system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum FiniteAction {
    /// Every element acts as the identity.
    Trivial,
    /// `i ↦ i + Σ_j k_j x_j(g) mod n`, where `x(g)` are the abelian coordinates.
    Rotation { coefficients: Vec<i64> },
}

/// The measure model and action of a system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    BernoulliShift { measure: ProductBernoulliMeasure },
    CountingTranslation,
    FiniteInvariant { weights: Vec<f64>, action: FiniteAction },
}

/// A ±1-valued function defining a coboundary sign cocycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "on", rename_all = "snake_case")]
pub enum SignFunction {
    Cylinder { function: CylinderFunction },
    /// `-1` on the listed elements, `+1` elsewhere.
    Group { negative: Vec<GroupElement> },
    Atoms { signs: Vec<i8> },
}

/// The ±1 cocycle `c_g(ω)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sign", rename_all = "snake_case")]
pub enum SignCocycle {
    #[default]
    Trivial,
    /// `c_g = (-1)^{Σ_j k_j x_j(g)}`, constant in `ω`.
    Character { parities: Vec<i64> },
    /// `c_g(ω) = s(ω)·s(a_g ω)`.
    Coboundary { function: SignFunction },
}

/// A point of the state space.
#[derive(Clone, Debug, PartialEq)]
pub enum MeasurePoint {
    Configuration(Configuration),
    Element(GroupElement),
    Atom(usize),
}

#[derive(Serialize, Deserialize)]
struct SystemSpec {
    descriptor: GroupDescriptor,
    #[serde(flatten)]
    kind: SystemKind,
    #[serde(default)]
    sign: SignCocycle,
    #[serde(default)]
    truncation_radius: Option<usize>,
}

/// A group action on a measure model with its RN and sign cocycles.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "SystemSpec", into = "SystemSpec")]
pub struct NonSingularSystem {
    descriptor: GroupDescriptor,
    kind: SystemKind,
    sign: SignCocycle,
    truncation_radius: usize,
    ball: OnceLock<Arc<Vec<GroupElement>>>,
}

impl PartialEq for NonSingularSystem {
    fn eq(&self, other: &Self) -> bool {
        self.descriptor == other.descriptor
            && self.kind == other.kind
            && self.sign == other.sign
            && self.truncation_radius == other.truncation_radius
    }
}

impl TryFrom<SystemSpec> for NonSingularSystem {
    type Error = Error;
    fn try_from(s: SystemSpec) -> Result<Self> {
        let mut sys = NonSingularSystem::new(s.descriptor, s.kind)?;
        if let Some(r) = s.truncation_radius {
            sys = sys.with_truncation_radius(r);
        }
        sys.with_sign(s.sign)
    }
}

impl From<NonSingularSystem> for SystemSpec {
    fn from(s: NonSingularSystem) -> Self {
        SystemSpec {
            descriptor: s.descriptor,
            kind: s.kind,
            sign: s.sign,
            truncation_radius: Some(s.truncation_radius),
        }
    }
}

/// Default RN truncation radius: 64 on ℤ, 16 on ℤ^d for d ≥ 2, 8 on H₃(ℤ).
pub fn default_truncation_radius(desc: &GroupDescriptor) -> usize {
    match *desc {
        GroupDescriptor::Lattice { dim: 1 } => 64,
        GroupDescriptor::Lattice { .. } => 16,
        GroupDescriptor::Heisenberg => 8,
    }
}

/// A Radon–Nikodym value with the estimated influence of truncation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnValue {
    pub value: f64,
    pub log_value: f64,
    /// Estimated `Σ |log factor|` over the annulus just outside the
    /// truncation window; zero when the product is exact.
    pub tail_estimate: f64,
}

/// Result of [`cocycle_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocycleCheck {
    /// Max over samples of `|a′_{gh} − (a′_h∘a_g)·a′_g| / a′_{gh}`.
    pub max_relative_error: f64,
    /// `c_{gh} = (c_h∘a_g)·c_g` held on every sample.
    pub sign_identity_holds: bool,
    pub samples: u64,
}

impl NonSingularSystem {
    pub fn new(descriptor: GroupDescriptor, kind: SystemKind) -> Result<Self> {
        descriptor.validate()?;
        match &kind {
            SystemKind::BernoulliShift { measure } => {
                if *measure.descriptor() != descriptor {
                    return invalid("measure and system are defined on different groups");
                }
            }
            SystemKind::CountingTranslation => {}
            SystemKind::FiniteInvariant { weights, action } => {
                if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return invalid("finite system needs non-negative weights");
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return invalid(format!("finite system weights sum to {total}, not 1"));
                }
                if let FiniteAction::Rotation { coefficients } = action {
                    if coefficients.len() != descriptor.abelian_rank() {
                        return invalid(format!(
                            "rotation needs {} coefficients",
                            descriptor.abelian_rank()
                        ));
                    }
                }
            }
        }
        let sys = NonSingularSystem {
            descriptor,
            truncation_radius: default_truncation_radius(&descriptor),
            kind,
            sign: SignCocycle::Trivial,
            ball: OnceLock::new(),
        };
        if let SystemKind::FiniteInvariant { weights, .. } = &sys.kind {
            for s in descriptor.generators() {
                for i in 0..weights.len() {
                    if (weights[sys.finite_step(&s, i)] - weights[i]).abs() > 1e-12 {
                        return invalid("finite action does not preserve the weights");
                    }
                }
            }
        }
        Ok(sys)
    }

    /// Counting measure on `G` with the translation action.
    pub fn counting(descriptor: GroupDescriptor) -> Self {
        NonSingularSystem::new(descriptor, SystemKind::CountingTranslation).expect("valid descriptor")
    }

    pub fn bernoulli(measure: ProductBernoulliMeasure) -> Self {
        let d = *measure.descriptor();
        NonSingularSystem::new(d, SystemKind::BernoulliShift { measure }).expect("matching descriptor")
    }

    /// Finite probability space on which every element acts trivially.
    pub fn finite_trivial(descriptor: GroupDescriptor, weights: Vec<f64>) -> Result<Self> {
        NonSingularSystem::new(descriptor, SystemKind::FiniteInvariant { weights, action: FiniteAction::Trivial })
    }

    pub fn with_truncation_radius(mut self, r: usize) -> Self {
        self.truncation_radius = r;
        self.ball = OnceLock::new();
        self
    }

    /// Installs a sign cocycle after checking its values and the cocycle
    /// identity on generator pairs.
    pub fn with_sign(mut self, sign: SignCocycle) -> Result<Self> {
        match &sign {
            SignCocycle::Trivial => {}
            SignCocycle::Character { parities } => {
                if parities.len() != self.descriptor.abelian_rank() {
                    return invalid("character parity vector has the wrong length");
                }
            }
            SignCocycle::Coboundary { function } => match (function, &self.kind) {
                (SignFunction::Cylinder { function }, SystemKind::BernoulliShift { .. }) => {
                    if function.table().iter().any(|v| v.abs() != 1.0) {
                        return invalid("sign function must take values ±1");
                    }
                }
                (SignFunction::Group { negative }, SystemKind::CountingTranslation) => {
                    for g in negative {
                        self.descriptor.check(g)?;
                    }
                }
                (SignFunction::Atoms { signs }, SystemKind::FiniteInvariant { weights, .. }) => {
                    if signs.len() != weights.len() || signs.iter().any(|s| s.abs() != 1) {
                        return invalid("atom signs must be ±1, one per atom");
                    }
                }
                _ => return invalid("sign function does not match the system kind"),
            },
        }
        if sign == SignCocycle::Trivial {
            self.sign = sign;
            return Ok(self);
        }
        self.sign = sign;
        let gens = self.descriptor.generators();
        for g in &gens {
            for h in &gens {
                for w in check_points(&self, g, h, 8, 0, false)? {
                    if !sign_identity_at(&self, g, h, &w)? {
                        return invalid("sign function fails the cocycle identity");
                    }
                }
            }
        }
        Ok(self)
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.descriptor
    }

    pub fn kind(&self) -> &SystemKind {
        &self.kind
    }

    pub fn sign(&self) -> &SignCocycle {
        &self.sign
    }

    pub fn truncation_radius(&self) -> usize {
        self.truncation_radius
    }

    /// True when `a′ ≡ 1`.
    pub fn is_measure_preserving(&self) -> bool {
        match &self.kind {
            SystemKind::BernoulliShift { measure } => measure.is_invariant(),
            _ => true,
        }
    }

    /// True when the reference measure is a probability.
    pub fn is_probability(&self) -> bool {
        !matches!(self.kind, SystemKind::CountingTranslation)
    }

    pub fn measure(&self) -> Option<&ProductBernoulliMeasure> {
        match &self.kind {
            SystemKind::BernoulliShift { measure } => Some(measure),
            _ => None,
        }
    }

    fn radius_ball(&self) -> Result<Arc<Vec<GroupElement>>> {
        if let Some(b) = self.ball.get() {
            return Ok(b.clone());
        }
        let ball = Arc::new(self.descriptor.ball(self.truncation_radius, DEFAULT_BUDGET)?);
        Ok(self.ball.get_or_init(|| ball).clone())
    }

    pub(crate) fn finite_shift(&self, g: &GroupElement) -> i64 {
        match &self.kind {
            SystemKind::FiniteInvariant { action: FiniteAction::Rotation { coefficients }, .. } => self
                .descriptor
                .abelian_coords(g)
                .iter()
                .zip(coefficients)
                .map(|(x, k)| x * k)
                .sum(),
            _ => 0,
        }
    }

    pub(crate) fn finite_step(&self, g: &GroupElement, i: usize) -> usize {
        match &self.kind {
            SystemKind::FiniteInvariant { weights, .. } => {
                let n = weights.len() as i64;
                (i as i64 + self.finite_shift(g)).rem_euclid(n) as usize
            }
            _ => i,
        }
    }

    /// Coordinates `h` with a non-trivial factor `ρ_{g⁻¹h}(·)/ρ_h(·)` inside
    /// the RN window, with the log factors for bit values 0 and 1.
    pub fn rn_factors(&self, g: &GroupElement) -> Result<Vec<(GroupElement, [f64; 2])>> {
        let SystemKind::BernoulliShift { measure } = &self.kind else {
            return Ok(Vec::new());
        };
        let mut window: Vec<GroupElement> = match measure.nonuniformity() {
            NonUniformity::None => return Ok(Vec::new()),
            NonUniformity::Finite(keys) => {
                let mut w = keys.clone();
                w.extend(keys.iter().map(|k| self.descriptor.mul_unchecked(g, k)));
                w
            }
            NonUniformity::Decaying => {
                let ball = self.radius_ball()?;
                let mut w: Vec<GroupElement> = ball.to_vec();
                w.extend(ball.iter().map(|k| self.descriptor.mul_unchecked(g, k)));
                w
            }
        };
        window.sort();
        window.dedup();
        let g_inv = self.descriptor.inv_unchecked(g);
        Ok(window
            .into_iter()
            .filter_map(|h| {
                let k = self.descriptor.mul_unchecked(&g_inv, &h);
                let (a, b) = (measure.p0(&k), measure.p0(&h));
                (a != b).then(|| (h, [a.ln() - b.ln(), (1.0 - a).ln() - (1.0 - b).ln()]))
            })
            .collect())
    }

    /// Sum of `max_i |log ρ_{g⁻¹h}(i) − log ρ_h(i)|` over `h` in the annulus
    /// `(B_{2R} ∪ g·B_{2R}) ∖ (B_R ∪ g·B_R)`; zero for exact products.
    pub fn rn_tail_estimate(&self, g: &GroupElement) -> Result<f64> {
        let SystemKind::BernoulliShift { measure } = &self.kind else {
            return Ok(0.0);
        };
        if measure.nonuniformity() != NonUniformity::Decaying {
            return Ok(0.0);
        }
        let d = &self.descriptor;
        let shells = d.shells(2 * self.truncation_radius, DEFAULT_BUDGET)?;
        let inner: std::collections::HashSet<GroupElement> = shells[..=self.truncation_radius]
            .iter()
            .flatten()
            .flat_map(|k| [k.clone(), d.mul_unchecked(g, k)])
            .collect();
        let mut outer: Vec<GroupElement> = shells
            .iter()
            .flatten()
            .flat_map(|k| [k.clone(), d.mul_unchecked(g, k)])
            .filter(|h| !inner.contains(h))
            .collect();
        outer.sort();
        outer.dedup();
        let g_inv = d.inv_unchecked(g);
        Ok(outer.iter().map(|h| measure.log_ratio_bound(&d.mul_unchecked(&g_inv, h), h)).sum())
    }

    /// Checks that `f` lives on this system's state space.
    pub fn check_function(&self, f: &StateFunction) -> Result<()> {
        match (f, &self.kind) {
            (StateFunction::Cylinder { function }, SystemKind::BernoulliShift { .. }) => {
                function.window().iter().try_for_each(|h| self.descriptor.check(h))
            }
            (StateFunction::Group { function }, SystemKind::CountingTranslation) => {
                function.support().try_for_each(|h| self.descriptor.check(h))
            }
            (StateFunction::Atoms { values }, SystemKind::FiniteInvariant { weights, .. }) => {
                if values.len() != weights.len() || values.iter().any(|v| !v.is_finite()) {
                    return invalid("atom function needs one finite value per atom");
                }
                Ok(())
            }
            _ => invalid("function does not live on this system's state space"),
        }
    }

    fn check_point(&self, w: &MeasurePoint) -> Result<()> {
        match (w, &self.kind) {
            (MeasurePoint::Configuration(c), SystemKind::BernoulliShift { .. }) => {
                c.iter().try_for_each(|(h, _)| self.descriptor.check(h))
            }
            (MeasurePoint::Element(x), SystemKind::CountingTranslation) => self.descriptor.check(x),
            (MeasurePoint::Atom(i), SystemKind::FiniteInvariant { weights, .. }) if *i < weights.len() => Ok(()),
            _ => invalid("point does not belong to this system's state space"),
        }
    }

    fn sign_at(&self, g: &GroupElement, w: &MeasurePoint) -> Result<f64> {
        match &self.sign {
            SignCocycle::Trivial => Ok(1.0),
            SignCocycle::Character { parities } => Ok(character_sign(&self.descriptor, parities, g)),
            SignCocycle::Coboundary { function } => {
                let s = |p: &MeasurePoint| -> Result<f64> {
                    Ok(match (function, p) {
                        (SignFunction::Cylinder { function }, MeasurePoint::Configuration(c)) => function.eval(c)?,
                        (SignFunction::Group { negative }, MeasurePoint::Element(x)) => {
                            if negative.contains(x) {
                                -1.0
                            } else {
                                1.0
                            }
                        }
                        (SignFunction::Atoms { signs }, MeasurePoint::Atom(i)) => signs[*i] as f64,
                        _ => return invalid("sign function does not match the point"),
                    })
                };
                Ok(s(w)? * s(&act(self, g, w)?)?)
            }
        }
    }
}

pub(crate) fn character_sign(desc: &GroupDescriptor, parities: &[i64], g: &GroupElement) -> f64 {
    let s: i64 = desc.abelian_coords(g).iter().zip(parities).map(|(x, k)| x * k).sum();
    if s.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `a_g(ω)`.
pub fn act(sys: &NonSingularSystem, g: &GroupElement, w: &MeasurePoint) -> Result<MeasurePoint> {
    sys.descriptor.check(g)?;
    sys.check_point(w)?;
    let d = &sys.descriptor;
    Ok(match w {
        MeasurePoint::Configuration(c) => {
            // (s_g ω)_k = ω_{gk}: the value at h moves to g⁻¹h.
            let g_inv = d.inv_unchecked(g);
            MeasurePoint::Configuration(Configuration::from_pairs(
                c.iter().map(|(h, b)| (d.mul_unchecked(&g_inv, h), *b)),
            ))
        }
        MeasurePoint::Element(x) => MeasurePoint::Element(d.mul_unchecked(x, g)),
        MeasurePoint::Atom(i) => MeasurePoint::Atom(sys.finite_step(g, *i)),
    })
}

/// `a′_g(ω) = dμ∘a_g/dμ (ω)`.
pub fn rn_derivative(sys: &NonSingularSystem, g: &GroupElement, w: &MeasurePoint) -> Result<RnValue> {
    sys.descriptor.check(g)?;
    sys.check_point(w)?;
    let MeasurePoint::Configuration(c) = w else {
        return Ok(RnValue { value: 1.0, log_value: 0.0, tail_estimate: 0.0 });
    };
    let factors = sys.rn_factors(g)?;
    let mut log_value = 0.0;
    let mut missing = Vec::new();
    for (h, lr) in &factors {
        match c.get(h) {
            Some(b) => log_value += lr[b as usize],
            None => missing.push(h.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCoordinates { missing });
    }
    Ok(RnValue { value: log_value.exp(), log_value, tail_estimate: sys.rn_tail_estimate(g)? })
}

fn eval_state(f: &StateFunction, w: &MeasurePoint) -> Result<f64> {
    match (f, w) {
        (StateFunction::Cylinder { function }, MeasurePoint::Configuration(c)) => function.eval(c),
        (StateFunction::Group { function }, MeasurePoint::Element(x)) => Ok(function.get(x)),
        (StateFunction::Atoms { values }, MeasurePoint::Atom(i)) => Ok(values[*i]),
        _ => invalid("function and point live on different spaces"),
    }
}

/// Which transfer operator a [`PointOperator`] applies.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Transfer {
    Koopman { alpha: f64 },
    Dual,
}

/// A pointwise evaluator for `u_g f` or `â_g f`.
#[derive(Clone, Debug)]
pub struct PointOperator<'a> {
    sys: &'a NonSingularSystem,
    f: &'a StateFunction,
    g: GroupElement,
    transfer: Transfer,
}

impl PointOperator<'_> {
    pub fn eval(&self, w: &MeasurePoint) -> Result<f64> {
        let inner = eval_state(self.f, &act(self.sys, &self.g, w)?)?;
        let rn = rn_derivative(self.sys, &self.g, w)?;
        Ok(match self.transfer {
            Transfer::Koopman { alpha } => {
                self.sys.sign_at(&self.g, w)? * (rn.log_value / alpha).exp() * inner
            }
            Transfer::Dual => rn.value * inner,
        })
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return invalid(format!("α must lie in (0,2), got {alpha}"));
    }
    Ok(())
}

/// `ω ↦ c_g(ω)·a′_g(ω)^{1/α}·f(a_g ω)`.
pub fn koopman_u<'a>(
    sys: &'a NonSingularSystem,
    alpha: f64,
    f: &'a StateFunction,
    g: &GroupElement,
) -> Result<PointOperator<'a>> {
    check_alpha(alpha)?;
    sys.descriptor.check(g)?;
    sys.check_function(f)?;
    Ok(PointOperator { sys, f, g: g.clone(), transfer: Transfer::Koopman { alpha } })
}

/// `ω ↦ a′_g(ω)·f(a_g ω)`.
pub fn dual_apply<'a>(sys: &'a NonSingularSystem, f: &'a StateFunction, g: &GroupElement) -> Result<PointOperator<'a>> {
    sys.descriptor.check(g)?;
    sys.check_function(f)?;
    Ok(PointOperator { sys, f, g: g.clone(), transfer: Transfer::Dual })
}

/// Coordinates read by the sign cocycle at `g` on Bernoulli systems.
fn sign_window(sys: &NonSingularSystem, g: &GroupElement) -> Vec<GroupElement> {
    match &sys.sign {
        SignCocycle::Coboundary { function: SignFunction::Cylinder { function } } => {
            let mut w = function.window().to_vec();
            w.extend(function.window().iter().map(|k| sys.descriptor.mul_unchecked(g, k)));
            w
        }
        _ => Vec::new(),
    }
}

/// States at which the cocycle identities for `(g, h)` are evaluated. With
/// `rn` set, Bernoulli configurations also cover the RN windows.
fn check_points(
    sys: &NonSingularSystem,
    g: &GroupElement,
    h: &GroupElement,
    n: u64,
    seed: u64,
    rn: bool,
) -> Result<Vec<MeasurePoint>> {
    let d = &sys.descriptor;
    let gh = d.mul_unchecked(g, h);
    Ok(match &sys.kind {
        SystemKind::BernoulliShift { measure } => {
            let mut rng = rng::stream(seed, rng::streams::COCYCLE_CHECK);
            let mut window: Vec<GroupElement> = Vec::new();
            if rn {
                window.extend(sys.rn_factors(&gh)?.into_iter().map(|x| x.0));
                window.extend(sys.rn_factors(g)?.into_iter().map(|x| x.0));
                window.extend(sys.rn_factors(h)?.into_iter().map(|x| d.mul_unchecked(g, &x.0)));
            }
            window.extend(sign_window(sys, &gh));
            window.extend(sign_window(sys, g));
            window.extend(sign_window(sys, h).into_iter().map(|k| d.mul_unchecked(g, &k)));
            window.sort();
            window.dedup();
            (0..n)
                .map(|_| {
                    MeasurePoint::Configuration(Configuration::from_pairs(
                        window.iter().map(|k| (k.clone(), (rng.random::<f64>() >= measure.p0(k)) as u8)),
                    ))
                })
                .collect()
        }
        SystemKind::CountingTranslation => {
            let mut pts = vec![MeasurePoint::Element(d.identity())];
            if let SignCocycle::Coboundary { function: SignFunction::Group { negative } } = &sys.sign {
                for x in negative {
                    pts.push(MeasurePoint::Element(x.clone()));
                    pts.push(MeasurePoint::Element(d.mul_unchecked(x, &d.inv_unchecked(g))));
                    pts.push(MeasurePoint::Element(d.mul_unchecked(x, &d.inv_unchecked(&gh))));
                }
            }
            pts
        }
        SystemKind::FiniteInvariant { weights, .. } => (0..weights.len()).map(MeasurePoint::Atom).collect(),
    })
}

fn sign_identity_at(sys: &NonSingularSystem, g: &GroupElement, h: &GroupElement, w: &MeasurePoint) -> Result<bool> {
    let gh = sys.descriptor.mul_unchecked(g, h);
    let moved = act(sys, g, w)?;
    Ok(sys.sign_at(&gh, w)? == sys.sign_at(h, &moved)? * sys.sign_at(g, w)?)
}

/// Samples states and reports the chain-rule error
/// `|a′_{gh} − (a′_h∘a_g)·a′_g| / a′_{gh}` and the sign identity
/// `c_{gh} = (c_h∘a_g)·c_g`.
pub fn cocycle_check(
    sys: &NonSingularSystem,
    g: &GroupElement,
    h: &GroupElement,
    n: u64,
    seed: u64,
) -> Result<CocycleCheck> {
    if n == 0 {
        return invalid("cocycle check needs at least one sample");
    }
    let d = &sys.descriptor;
    d.check(g)?;
    d.check(h)?;
    let gh = d.mul_unchecked(g, h);
    let points = check_points(sys, g, h, n, seed, true)?;
    let mut max_err: f64 = 0.0;
    let mut signs_ok = true;
    for w in &points {
        let a_gh = rn_derivative(sys, &gh, w)?;
        let a_g = rn_derivative(sys, g, w)?;
        let a_h = rn_derivative(sys, h, &act(sys, g, w)?)?;
        let rel = (a_gh.value - a_h.value * a_g.value).abs() / a_gh.value;
        max_err = max_err.max(rel);
        signs_ok &= sign_identity_at(sys, g, h, w)?;
    }
    Ok(CocycleCheck { max_relative_error: max_err, sign_identity_holds: signs_ok, samples: points.len() as u64 })
}
