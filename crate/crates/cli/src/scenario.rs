//! JSON scenario documents.
//!
//! A scenario names a group, a Følner sequence, a non-singular system, the
//! index α, the generating function `f₀`, a table of named linear
//! combinations and an ordered list of diagnostics. Several fields accept
//! string shorthands (`"group": "Z"`, `"system": "counting"`,
//! `"f0": "delta_e"`, `"tests": ["ergodicity"]`); parsing expands them, and
//! serialization always writes the expanded form, so a parsed scenario
//! serializes to a document that parses back to the same value.

use std::collections::BTreeMap;
use std::fmt;

use amenable_sas::diagnostics::{CylinderEvent, TailGrid, DEFAULT_TOLERANCE, EXACT_TOLERANCE};
use amenable_sas::groups::{FolnerScheme, FolnerSequence, GroupDescriptor, GroupElement, DEFAULT_BUDGET};
use amenable_sas::measure::{build_psi_measure, BernoulliParam, CylinderFunction, ProductBernoulliMeasure, PsiProfile, EXACT_CAP};
use amenable_sas::rng::child_seed;
use amenable_sas::stable::{LinearCombination, SpectralProcess};
use amenable_sas::systems::{
    EvalMode, FiniteAction, GroupFunction, NonSingularSystem, SignCocycle, StateFunction, SystemKind,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u32 = 1;

const EVAL_SEED_LABEL: u64 = u64::MAX;

/// Name of the combination added when a scenario declares none.
pub const DEFAULT_COMB: &str = "e";

/// One problem found while validating a scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Every problem found in a scenario document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioErrors(pub Vec<FieldError>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioErrors {}

#[derive(Default)]
struct Errors(Vec<FieldError>);

impl Errors {
    fn push(&mut self, field: impl Into<String>, message: impl fmt::Display) {
        self.0.push(FieldError { field: field.into(), message: message.to_string() });
    }

    fn decode<T: DeserializeOwned>(&mut self, field: &str, v: Value) -> Option<T> {
        serde_json::from_value(v).map_err(|e| self.push(field, e)).ok()
    }
}

/// The Følner sequence of a scenario and the largest index scans use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FolnerSpec {
    #[serde(flatten)]
    pub scheme: FolnerScheme,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

/// Measure model and action, without the group (taken from the scenario).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKindSpec {
    CountingTranslation,
    BernoulliShift {
        measure: BernoulliParam,
    },
    /// Bernoulli shift with `ρ_g(0) = 1/2 + Ψ(g)`.
    PsiBernoulli {
        #[serde(default)]
        profile: PsiProfile,
    },
    FiniteInvariant {
        weights: Vec<f64>,
        #[serde(default = "trivial_action")]
        action: FiniteAction,
    },
}

fn trivial_action() -> FiniteAction {
    FiniteAction::Trivial
}

fn is_trivial_sign(s: &SignCocycle) -> bool {
    *s == SignCocycle::Trivial
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(flatten)]
    pub kind: SystemKindSpec,
    #[serde(default, skip_serializing_if = "is_trivial_sign")]
    pub sign: SignCocycle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<usize>,
}

impl SystemSpec {
    pub fn build(&self, desc: GroupDescriptor) -> amenable_sas::error::Result<NonSingularSystem> {
        let kind = match &self.kind {
            SystemKindSpec::CountingTranslation => SystemKind::CountingTranslation,
            SystemKindSpec::BernoulliShift { measure } => {
                SystemKind::BernoulliShift { measure: ProductBernoulliMeasure::new(desc, measure.clone())? }
            }
            SystemKindSpec::PsiBernoulli { profile } => {
                SystemKind::BernoulliShift { measure: build_psi_measure(desc, profile)?.measure }
            }
            SystemKindSpec::FiniteInvariant { weights, action } => {
                SystemKind::FiniteInvariant { weights: weights.clone(), action: action.clone() }
            }
        };
        let mut sys = NonSingularSystem::new(desc, kind)?.with_sign(self.sign.clone())?;
        if let Some(r) = self.truncation_radius {
            sys = sys.with_truncation_radius(r);
        }
        Ok(sys)
    }
}

/// Exact-enumeration cap and optional Monte Carlo fallback for α-norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    #[serde(default = "default_exact_cap")]
    pub exact_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<u64>,
    /// Seed of the fallback; derived from the scenario seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_exact_cap() -> usize {
    EXACT_CAP
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec { exact_cap: EXACT_CAP, mc_samples: None, seed: None }
    }
}

fn default_comb() -> String {
    DEFAULT_COMB.into()
}

fn default_combs() -> Vec<String> {
    vec![default_comb()]
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

fn exact_tolerance() -> f64 {
    EXACT_TOLERANCE
}

fn default_k() -> (f64, f64) {
    (0.5, 2.0)
}

fn half() -> f64 {
    0.5
}

fn default_g_max() -> usize {
    6
}

fn default_null_samples() -> u64 {
    10_000
}

fn default_pointwise_samples() -> u64 {
    1_000
}

fn three() -> f64 {
    3.0
}

fn default_c_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_min_density() -> f64 {
    0.99
}

fn default_radius() -> usize {
    1
}

fn default_series_length() -> usize {
    1_000
}

fn default_paths() -> usize {
    10_000
}

/// One requested diagnostic. Every parameter has a default, so the bare
/// name is a valid test entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSpec {
    Ergodicity {
        #[serde(default = "default_comb")]
        comb: String,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
    WeakMixing {
        #[serde(default = "default_comb")]
        f1: String,
        #[serde(default = "default_comb")]
        f2: String,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
        #[serde(default)]
        grid: TailGrid,
    },
    StrongMixing {
        #[serde(default = "default_k")]
        k: (f64, f64),
        #[serde(default = "half")]
        eps: f64,
        #[serde(default = "default_g_max")]
        g_max: usize,
        #[serde(default = "exact_tolerance")]
        tolerance: f64,
    },
    NullAverage {
        #[serde(default = "half")]
        eta: f64,
        /// Defaults to the whole space on probability kinds and `{e}` on counting.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        event: Option<CylinderEvent>,
        #[serde(default = "default_null_samples")]
        samples: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
    PositivePointwise {
        /// Defaults to the scenario's `n_max` alone.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        n_values: Vec<usize>,
        #[serde(default = "default_pointwise_samples")]
        samples: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default = "three")]
        sigmas: f64,
    },
    FolnerMean {
        #[serde(default = "default_comb")]
        comb: String,
        /// Defaults to the generators of the group.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shifts: Option<Vec<GroupElement>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
    DyeDouglass {
        #[serde(default = "default_comb")]
        comb: String,
        /// Each `N` contributes the uniform probability on `F_N`; defaults to `n_max`.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        n_values: Vec<usize>,
        /// Defaults to the identity and the generators.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shifts: Option<Vec<GroupElement>>,
    },
    PodgorskiWeron {
        #[serde(default = "default_comb")]
        comb: String,
        #[serde(default = "default_c_grid")]
        c_grid: Vec<f64>,
        #[serde(default = "default_tolerance")]
        tolerance: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
    /// Density-one set avoiding the large values of several ψ functions.
    Kvn {
        /// `ψ_φ` for each named combination.
        #[serde(default = "default_combs")]
        combs: Vec<String>,
        /// Indicators of finite sets, added after the `ψ_φ`.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        indicators: Vec<Vec<GroupElement>>,
        #[serde(default = "default_min_density")]
        min_density: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_max: Option<usize>,
    },
    /// LePage paths on `F_radius` against the exact characteristic function.
    PathLaw {
        #[serde(default = "default_radius")]
        radius: usize,
        #[serde(default = "default_series_length")]
        series_length: usize,
        #[serde(default = "default_paths")]
        paths: usize,
        #[serde(default = "default_combs")]
        combs: Vec<String>,
        #[serde(default = "three")]
        sigmas: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
}

impl TestSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TestSpec::Ergodicity { .. } => "ergodicity",
            TestSpec::WeakMixing { .. } => "weak-mixing",
            TestSpec::StrongMixing { .. } => "strong-mixing",
            TestSpec::NullAverage { .. } => "null-average",
            TestSpec::PositivePointwise { .. } => "positive-pointwise",
            TestSpec::FolnerMean { .. } => "folner-mean",
            TestSpec::DyeDouglass { .. } => "dye-douglass",
            TestSpec::PodgorskiWeron { .. } => "podgorski-weron",
            TestSpec::Kvn { .. } => "kvn",
            TestSpec::PathLaw { .. } => "path-law",
        }
    }

    /// The explicit seed of a sampling test, if any.
    pub fn seed(&self) -> Option<Option<u64>> {
        match self {
            TestSpec::NullAverage { seed, .. }
            | TestSpec::PositivePointwise { seed, .. }
            | TestSpec::PathLaw { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    fn combs(&self) -> Vec<(&'static str, &String)> {
        match self {
            TestSpec::Ergodicity { comb, .. }
            | TestSpec::FolnerMean { comb, .. }
            | TestSpec::DyeDouglass { comb, .. }
            | TestSpec::PodgorskiWeron { comb, .. } => vec![("comb", comb)],
            TestSpec::WeakMixing { f1, f2, .. } => vec![("f1", f1), ("f2", f2)],
            TestSpec::Kvn { combs, .. } | TestSpec::PathLaw { combs, .. } => combs.iter().map(|c| ("combs", c)).collect(),
            TestSpec::StrongMixing { .. } | TestSpec::NullAverage { .. } | TestSpec::PositivePointwise { .. } => Vec::new(),
        }
    }

    /// Largest Følner index the test reads.
    fn max_index(&self, default: usize) -> usize {
        match self {
            TestSpec::Ergodicity { n_max, .. }
            | TestSpec::WeakMixing { n_max, .. }
            | TestSpec::NullAverage { n_max, .. }
            | TestSpec::FolnerMean { n_max, .. }
            | TestSpec::PodgorskiWeron { n_max, .. }
            | TestSpec::Kvn { n_max, .. } => n_max.unwrap_or(default),
            TestSpec::PositivePointwise { n_values, .. } | TestSpec::DyeDouglass { n_values, .. } => {
                n_values.iter().copied().max().unwrap_or(default)
            }
            TestSpec::PathLaw { radius, .. } => *radius,
            TestSpec::StrongMixing { .. } => 0,
        }
    }
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scenario {
    pub schema_version: u32,
    /// Absent means the documented default 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub group: GroupDescriptor,
    pub folner: FolnerSpec,
    pub system: SystemSpec,
    pub alpha: f64,
    pub f0: StateFunction,
    pub eval: EvalSpec,
    pub combinations: BTreeMap<String, LinearCombination>,
    pub tests: Vec<TestSpec>,
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Scenario::from_value(v).map_err(serde::de::Error::custom)
    }
}

const FIELDS: [&str; 10] =
    ["schema_version", "seed", "group", "folner", "system", "alpha", "f0", "eval", "combinations", "tests"];

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioErrors> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| ScenarioErrors(vec![FieldError { field: "document".into(), message: e.to_string() }]))?;
    Scenario::from_value(v)
}

/// Canonical pretty-printed JSON.
pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string_pretty(s).expect("scenario values serialize")
}

pub fn parse_group(text: &str) -> Option<GroupDescriptor> {
    let t = text.trim();
    match t.to_ascii_lowercase().as_str() {
        "z" => return Some(GroupDescriptor::integers()),
        "h3" | "heisenberg" => return Some(GroupDescriptor::heisenberg()),
        _ => {}
    }
    let dim = t.strip_prefix(['Z', 'z'])?;
    let dim = dim.strip_prefix('^').unwrap_or(dim);
    dim.parse::<usize>().ok().filter(|d| *d >= 1).map(GroupDescriptor::lattice)
}

fn system_shorthand(name: &str) -> Option<SystemKindSpec> {
    Some(match name {
        "counting" => SystemKindSpec::CountingTranslation,
        "uniform_bernoulli" => SystemKindSpec::BernoulliShift { measure: BernoulliParam::Constant { p0: 0.5 } },
        "psi_bernoulli" => SystemKindSpec::PsiBernoulli { profile: PsiProfile::default() },
        "trivial" => SystemKindSpec::FiniteInvariant { weights: vec![1.0], action: FiniteAction::Trivial },
        _ => return None,
    })
}

fn f0_shorthand(name: &str, desc: &GroupDescriptor, kind: &SystemKindSpec) -> Result<StateFunction, String> {
    let e = desc.identity();
    match (name, kind) {
        ("delta_e", SystemKindSpec::CountingTranslation) => Ok(StateFunction::group(GroupFunction::delta(e))),
        ("coordinate_e", SystemKindSpec::BernoulliShift { .. } | SystemKindSpec::PsiBernoulli { .. }) => {
            Ok(StateFunction::cylinder(CylinderFunction::coordinate(e)))
        }
        ("one", SystemKindSpec::BernoulliShift { .. } | SystemKindSpec::PsiBernoulli { .. }) => {
            Ok(StateFunction::cylinder(CylinderFunction::constant(1.0)))
        }
        ("one", SystemKindSpec::FiniteInvariant { weights, .. }) => Ok(StateFunction::atoms(vec![1.0; weights.len()])),
        ("delta_e" | "coordinate_e" | "one", _) => Err(format!("shorthand {name:?} does not apply to this system")),
        _ => Err(format!("unknown shorthand {name:?}; expected delta_e, coordinate_e or one")),
    }
}

impl Scenario {
    pub fn from_value(v: Value) -> Result<Scenario, ScenarioErrors> {
        let Value::Object(mut map) = v else {
            return Err(ScenarioErrors(vec![FieldError {
                field: "document".into(),
                message: "expected a JSON object".into(),
            }]));
        };
        let mut errs = Errors::default();
        for key in map.keys() {
            if !FIELDS.contains(&key.as_str()) {
                errs.push(key.clone(), "unknown field");
            }
        }
        let mut required = |key: &str, errs: &mut Errors| {
            let v = map.remove(key);
            if v.is_none() {
                errs.push(key, "missing field");
            }
            v
        };
        let group_v = required("group", &mut errs);
        let folner_v = required("folner", &mut errs);
        let system_v = required("system", &mut errs);
        let alpha_v = required("alpha", &mut errs);
        let f0_v = required("f0", &mut errs);

        let schema_version = match map.remove("schema_version") {
            None => SCHEMA_VERSION,
            Some(v) => errs.decode::<u32>("schema_version", v).unwrap_or(SCHEMA_VERSION),
        };
        if schema_version != SCHEMA_VERSION {
            errs.push("schema_version", format!("unsupported version {schema_version}, expected {SCHEMA_VERSION}"));
        }
        let seed = map.remove("seed").and_then(|v| errs.decode::<u64>("seed", v));

        let group = group_v.and_then(|v| match v {
            Value::String(s) => parse_group(&s).or_else(|| {
                errs.push("group", format!("unknown group {s:?}; expected Z, Z2, Z^d or H3"));
                None
            }),
            v => errs.decode::<GroupDescriptor>("group", v),
        });
        if let Some(g) = &group {
            if let Err(e) = g.validate() {
                errs.push("group", e);
            }
        }

        let folner = folner_v.and_then(|mut v| {
            if let Value::Object(m) = &mut v {
                m.entry("scheme").or_insert_with(|| Value::String("box".into()));
            }
            errs.decode::<FolnerSpec>("folner", v)
        });

        let system = system_v.and_then(|v| match v {
            Value::String(s) => match system_shorthand(&s) {
                Some(kind) => Some(SystemSpec { kind, sign: SignCocycle::Trivial, truncation_radius: None }),
                None => errs.decode::<SystemSpec>("system", Value::Object(Map::from_iter([("kind".into(), Value::String(s))]))),
            },
            Value::Object(mut m) => {
                if let Some(Value::String(s)) = m.get("sign") {
                    let tagged = Value::Object(Map::from_iter([("sign".to_string(), Value::String(s.clone()))]));
                    m.insert("sign".into(), tagged);
                }
                errs.decode::<SystemSpec>("system", Value::Object(m))
            }
            v => errs.decode::<SystemSpec>("system", v),
        });

        let alpha = alpha_v.and_then(|v| errs.decode::<f64>("alpha", v));
        if let Some(a) = alpha {
            if !(a > 0.0 && a < 2.0) {
                errs.push("alpha", format!("α must lie in (0, 2), got {a}; α = 2 is the Gaussian case and is not supported"));
            }
        }

        let f0 = match (f0_v, &group, &system) {
            (Some(Value::String(s)), Some(g), Some(sys)) => {
                f0_shorthand(&s, g, &sys.kind).map_err(|e| errs.push("f0", e)).ok()
            }
            (Some(Value::String(_)), _, _) => None,
            (Some(v), _, _) => errs.decode::<StateFunction>("f0", v),
            (None, _, _) => None,
        };

        let eval = map.remove("eval").map_or(Some(EvalSpec::default()), |v| errs.decode::<EvalSpec>("eval", v));

        let combinations = match map.remove("combinations") {
            None => group.map(|g| BTreeMap::from([(default_comb(), LinearCombination::single(g.identity(), 1.0))])),
            Some(v) => errs.decode::<BTreeMap<String, LinearCombination>>("combinations", v),
        };

        let tests = match map.remove("tests") {
            None => Some(Vec::new()),
            Some(Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for (i, item) in items.into_iter().enumerate() {
                    let item = match item {
                        Value::String(s) => Value::Object(Map::from_iter([("test".to_string(), Value::String(s))])),
                        v => v,
                    };
                    if let Some(t) = errs.decode::<TestSpec>(&format!("tests[{i}]"), item) {
                        out.push(t);
                    }
                }
                Some(out)
            }
            Some(_) => {
                errs.push("tests", "expected an array");
                None
            }
        };

        if let (Some(group), Some(folner), Some(system), Some(alpha), Some(f0), Some(eval), Some(combinations), Some(tests)) =
            (group, folner, system, alpha, f0, eval, combinations, tests)
        {
            if errs.0.is_empty() {
                let folner = normalize_folner(group, folner);
                let s = Scenario { schema_version, seed, group, folner, system, alpha, f0, eval, combinations, tests };
                s.check(&mut errs);
                if errs.0.is_empty() {
                    return Ok(s);
                }
            }
        }
        Err(ScenarioErrors(errs.0))
    }

    /// Cross-field consistency: every window, name and cap the tests use.
    fn check(&self, errs: &mut Errors) {
        let d = self.group;
        let seq = match self.sequence(None) {
            Ok(seq) => Some(seq),
            Err(e) => {
                errs.push("folner", e);
                None
            }
        };
        if self.folner.n_max == 0 {
            errs.push("folner.n_max", "must be at least 1");
        }
        let limit = seq.as_ref().and_then(|s| s.max_index());
        if let Some(limit) = limit {
            if self.folner.n_max > limit {
                errs.push("folner.n_max", format!("exceeds the {limit} windows of the user scheme"));
            }
        }
        let process = match self.process() {
            Ok(p) => Some(p),
            Err(e) => {
                errs.push("system", e);
                None
            }
        };
        if process.is_none() {
            return;
        }
        for (name, comb) in &self.combinations {
            for g in comb.support() {
                if let Err(e) = d.check(g) {
                    errs.push(format!("combinations.{name}"), e);
                }
            }
        }
        for (i, t) in self.tests.iter().enumerate() {
            let field = format!("tests[{i}]");
            for (key, name) in t.combs() {
                if !self.combinations.contains_key(name) {
                    errs.push(format!("{field}.{key}"), format!("no combination named {name:?}"));
                }
            }
            let idx = t.max_index(self.folner.n_max);
            if let Some(limit) = limit {
                if idx > limit {
                    errs.push(field.clone(), format!("reads F_{idx} but the user scheme has {limit} windows"));
                }
            }
            self.check_test(t, &field, errs);
        }
    }

    fn check_test(&self, t: &TestSpec, field: &str, errs: &mut Errors) {
        let d = self.group;
        let increasing = |v: &[usize]| v.first().map_or(true, |f| *f > 0) && v.windows(2).all(|w| w[0] < w[1]);
        let check_elements = |errs: &mut Errors, key: &str, els: &[GroupElement]| {
            for g in els {
                if let Err(e) = d.check(g) {
                    errs.push(format!("{field}.{key}"), e);
                }
            }
        };
        let check_tol = |errs: &mut Errors, tol: f64| {
            if !(tol >= 0.0 && tol.is_finite()) {
                errs.push(format!("{field}.tolerance"), "must be a non-negative number");
            }
        };
        match t {
            TestSpec::Ergodicity { tolerance, n_max, .. } | TestSpec::PodgorskiWeron { tolerance, n_max, .. } => {
                check_tol(errs, *tolerance);
                if *n_max == Some(0) {
                    errs.push(format!("{field}.n_max"), "must be at least 1");
                }
            }
            TestSpec::WeakMixing { tolerance, grid, n_max, .. } => {
                check_tol(errs, *tolerance);
                if *n_max == Some(0) {
                    errs.push(format!("{field}.n_max"), "must be at least 1");
                }
                if grid.intervals.iter().any(|(lo, hi)| !(*lo > 0.0 && lo <= hi && hi.is_finite()))
                    || grid.eps.iter().any(|e| !(*e > 0.0))
                {
                    errs.push(format!("{field}.grid"), "intervals need 0 < lo ≤ hi < ∞ and ε > 0");
                }
            }
            TestSpec::StrongMixing { k, eps, tolerance, .. } => {
                check_tol(errs, *tolerance);
                if !(k.0 > 0.0 && k.0 <= k.1 && k.1.is_finite()) {
                    errs.push(format!("{field}.k"), "K = [lo, hi] needs 0 < lo ≤ hi < ∞");
                }
                if !(*eps > 0.0) {
                    errs.push(format!("{field}.eps"), "must be positive");
                }
            }
            TestSpec::NullAverage { eta, event, samples, tolerance, n_max, .. } => {
                check_tol(errs, *tolerance);
                if !(*eta > 0.0) {
                    errs.push(format!("{field}.eta"), "must be positive");
                }
                if *samples < 2 {
                    errs.push(format!("{field}.samples"), "need at least 2");
                }
                if *n_max == Some(0) {
                    errs.push(format!("{field}.n_max"), "must be at least 1");
                }
                match event {
                    Some(CylinderEvent::Cylinder { window, bits }) => {
                        check_elements(errs, "event.window", window);
                        if window.len() != bits.len() || bits.iter().any(|b| *b > 1) {
                            errs.push(format!("{field}.event"), "needs one bit (0 or 1) per window element");
                        }
                    }
                    Some(CylinderEvent::Elements { elements }) => check_elements(errs, "event.elements", elements),
                    Some(CylinderEvent::Atoms { .. }) | None => {}
                }
            }
            TestSpec::PositivePointwise { n_values, samples, sigmas, .. } => {
                if !increasing(n_values) {
                    errs.push(format!("{field}.n_values"), "must be positive and strictly increasing");
                }
                if *samples < 2 {
                    errs.push(format!("{field}.samples"), "need at least 2");
                }
                if !(*sigmas > 0.0) {
                    errs.push(format!("{field}.sigmas"), "must be positive");
                }
            }
            TestSpec::FolnerMean { shifts, n_max, .. } => {
                check_elements(errs, "shifts", shifts.as_deref().unwrap_or_default());
                if *n_max == Some(0) {
                    errs.push(format!("{field}.n_max"), "must be at least 1");
                }
            }
            TestSpec::DyeDouglass { n_values, shifts, .. } => {
                if !increasing(n_values) {
                    errs.push(format!("{field}.n_values"), "must be positive and strictly increasing");
                }
                if let Some(s) = shifts {
                    if s.is_empty() {
                        errs.push(format!("{field}.shifts"), "must not be empty");
                    }
                    check_elements(errs, "shifts", s);
                }
            }
            TestSpec::Kvn { combs, indicators, min_density, n_max } => {
                if combs.is_empty() && indicators.is_empty() {
                    errs.push(field.to_string(), "needs at least one ψ");
                }
                for set in indicators {
                    check_elements(errs, "indicators", set);
                }
                if !(0.0..=1.0).contains(min_density) {
                    errs.push(format!("{field}.min_density"), "must lie in [0, 1]");
                }
                if *n_max == Some(0) {
                    errs.push(format!("{field}.n_max"), "must be at least 1");
                }
            }
            TestSpec::PathLaw { radius, series_length, paths, combs, sigmas, .. } => {
                if *radius == 0 || *series_length == 0 || *paths < 2 {
                    errs.push(field.to_string(), "radius and series_length must be positive, paths at least 2");
                }
                if combs.is_empty() {
                    errs.push(format!("{field}.combs"), "must not be empty");
                }
                if !(*sigmas > 0.0) {
                    errs.push(format!("{field}.sigmas"), "must be positive");
                }
            }
        }
    }

    /// The Følner sequence, with the budget override applied when given.
    pub fn sequence(&self, budget: Option<u64>) -> amenable_sas::error::Result<FolnerSequence> {
        let budget = budget.or(self.folner.budget).unwrap_or(DEFAULT_BUDGET);
        Ok(FolnerSequence::new(self.group, self.folner.scheme.clone())?.with_budget(budget))
    }

    pub fn process(&self) -> amenable_sas::error::Result<SpectralProcess> {
        let sys = self.system.build(self.group)?;
        sys.check_function(&self.f0)?;
        let mode = EvalMode {
            exact_cap: self.eval.exact_cap,
            mc_samples: self.eval.mc_samples,
            seed: self.eval_seed(),
        };
        Ok(SpectralProcess::new(self.alpha, self.f0.clone(), sys)?.with_eval_mode(mode))
    }

    /// The seed everything else is derived from.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Seed of the Monte Carlo fallback for α-norms.
    pub fn eval_seed(&self) -> u64 {
        self.eval.seed.unwrap_or_else(|| child_seed(self.effective_seed(), EVAL_SEED_LABEL))
    }

    /// Seed of the `index`-th test when it does not set one.
    pub fn test_seed(&self, index: usize) -> u64 {
        self.tests[index].seed().flatten().unwrap_or_else(|| child_seed(self.effective_seed(), index as u64))
    }
}

fn normalize_folner(group: GroupDescriptor, mut f: FolnerSpec) -> FolnerSpec {
    if group == GroupDescriptor::heisenberg() && f.scheme == FolnerScheme::Box {
        f.scheme = FolnerScheme::HeisenbergBox;
    }
    f
}
