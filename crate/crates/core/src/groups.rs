//! Group arithmetic for the integer lattices ℤ^d and the discrete Heisenberg
//! group, word-metric balls, and Følner sequences.
//!
//! Elements are plain coordinate vectors. Heisenberg elements are triples
//! `(a, b, c)` standing for the upper unitriangular matrix with entries
//! `a, b` on the superdiagonal and `c` in the corner, so that
//!
//! ```text
//! (a, b, c) · (a', b', c') = (a + a', b + b', c + c' + a·b')
//! (a, b, c)⁻¹             = (-a, -b, a·b - c)
//! ```

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{invalid, Error, Partial, Result};

/// Default cap on the number of elements any single enumeration may touch.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// A group element stored as its integer coordinates.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(SmallVec<[i64; 4]>);

impl GroupElement {
    pub fn new(coords: &[i64]) -> Self {
        GroupElement(SmallVec::from_slice(coords))
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sum of absolute coordinates.
    pub fn l1_norm(&self) -> u64 {
        self.0.iter().map(|c| c.unsigned_abs()).sum()
    }
}

impl From<i64> for GroupElement {
    fn from(n: i64) -> Self {
        GroupElement::new(&[n])
    }
}

impl From<Vec<i64>> for GroupElement {
    fn from(v: Vec<i64>) -> Self {
        GroupElement(SmallVec::from_vec(v))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// The concrete groups supported by the toolkit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GroupDescriptor {
    /// ℤ^d with componentwise addition.
    Lattice { dim: usize },
    /// The discrete Heisenberg group H₃(ℤ).
    Heisenberg,
}

impl GroupDescriptor {
    pub fn integers() -> Self {
        GroupDescriptor::Lattice { dim: 1 }
    }

    pub fn lattice(dim: usize) -> Self {
        GroupDescriptor::Lattice { dim }
    }

    pub fn heisenberg() -> Self {
        GroupDescriptor::Heisenberg
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            GroupDescriptor::Lattice { dim } if dim == 0 || dim > 8 => {
                invalid(format!("lattice dimension must be in 1..=8, got {dim}"))
            }
            _ => Ok(()),
        }
    }

    /// Number of coordinates of an element.
    pub fn dim(&self) -> usize {
        match *self {
            GroupDescriptor::Lattice { dim } => dim,
            GroupDescriptor::Heisenberg => 3,
        }
    }

    pub fn is_abelian(&self) -> bool {
        matches!(self, GroupDescriptor::Lattice { .. })
    }

    pub fn name(&self) -> String {
        match *self {
            GroupDescriptor::Lattice { dim: 1 } => "Z".to_string(),
            GroupDescriptor::Lattice { dim } => format!("Z{dim}"),
            GroupDescriptor::Heisenberg => "Heisenberg".to_string(),
        }
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement(SmallVec::from_elem(0, self.dim()))
    }

    pub fn check(&self, g: &GroupElement) -> Result<()> {
        if g.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: g.len(),
            });
        }
        Ok(())
    }

    pub fn mul(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(self.mul_unchecked(a, b))
    }

    pub fn inv(&self, a: &GroupElement) -> Result<GroupElement> {
        self.check(a)?;
        Ok(self.inv_unchecked(a))
    }

    /// Group product without length validation.
    pub fn mul_unchecked(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        match self {
            GroupDescriptor::Lattice { .. } => {
                GroupElement(a.0.iter().zip(b.0.iter()).map(|(x, y)| x + y).collect())
            }
            GroupDescriptor::Heisenberg => {
                let (x, y) = (&a.0, &b.0);
                GroupElement(SmallVec::from_slice(&[
                    x[0] + y[0],
                    x[1] + y[1],
                    x[2] + y[2] + x[0] * y[1],
                ]))
            }
        }
    }

    /// Group inverse without length validation.
    pub fn inv_unchecked(&self, a: &GroupElement) -> GroupElement {
        match self {
            GroupDescriptor::Lattice { .. } => GroupElement(a.0.iter().map(|x| -x).collect()),
            GroupDescriptor::Heisenberg => {
                let x = &a.0;
                GroupElement(SmallVec::from_slice(&[-x[0], -x[1], x[0] * x[1] - x[2]]))
            }
        }
    }

    /// Symmetric generating set: ±e_i on ℤ^d, (±1,0,0) and (0,±1,0) on H₃(ℤ).
    pub fn generators(&self) -> Vec<GroupElement> {
        let d = match *self {
            GroupDescriptor::Lattice { dim } => dim,
            GroupDescriptor::Heisenberg => 2,
        };
        let mut gens = Vec::with_capacity(2 * d);
        for i in 0..d {
            for s in [1, -1] {
                let mut c = SmallVec::from_elem(0, self.dim());
                c[i] = s;
                gens.push(GroupElement(c));
            }
        }
        gens
    }

    /// Image in the free abelian quotient: all coordinates on ℤ^d, `(a, b)` on H₃(ℤ).
    pub fn abelian_coords<'a>(&self, g: &'a GroupElement) -> &'a [i64] {
        match self {
            GroupDescriptor::Lattice { .. } => g.coords(),
            GroupDescriptor::Heisenberg => &g.coords()[..2],
        }
    }

    pub fn abelian_rank(&self) -> usize {
        match *self {
            GroupDescriptor::Lattice { dim } => dim,
            GroupDescriptor::Heisenberg => 2,
        }
    }

    /// Word-metric spheres of radius `0..=radius`, each sorted by coordinates.
    pub fn shells(&self, radius: usize, budget: u64) -> Result<Vec<Vec<GroupElement>>> {
        let gens = self.generators();
        let id = self.identity();
        let mut seen: HashSet<GroupElement> = HashSet::from([id.clone()]);
        let mut shells = vec![vec![id]];
        for r in 1..=radius {
            let mut next = Vec::new();
            for g in &shells[r - 1] {
                for s in &gens {
                    let h = self.mul_unchecked(g, s);
                    if seen.insert(h.clone()) {
                        next.push(h);
                    }
                }
            }
            if seen.len() as u64 > budget {
                return Err(Error::Budget {
                    what: format!("word ball of radius {radius}"),
                    needed: seen.len() as u64,
                    budget,
                });
            }
            next.sort();
            shells.push(next);
        }
        Ok(shells)
    }

    /// Word-metric ball of the given radius, ordered by shell then coordinates.
    pub fn ball(&self, radius: usize, budget: u64) -> Result<Vec<GroupElement>> {
        Ok(self.shells(radius, budget)?.into_iter().flatten().collect())
    }
}

/// Group product under the descriptor's law.
pub fn mul(a: &GroupElement, b: &GroupElement, desc: &GroupDescriptor) -> Result<GroupElement> {
    desc.mul(a, b)
}

/// Group inverse under the descriptor's law.
pub fn inv(a: &GroupElement, desc: &GroupDescriptor) -> Result<GroupElement> {
    desc.inv(a)
}

/// How the sets `F_N` are generated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum FolnerScheme {
    /// `[-N, N]^d` on ℤ^d.
    Box,
    /// `{|a| ≤ N, |b| ≤ N, |c| ≤ N²}` on H₃(ℤ).
    HeisenbergBox,
    /// Explicit nested windows; `windows[N - 1]` is `F_N`.
    UserWindow { windows: Vec<Vec<GroupElement>> },
}

/// Side of a translation in defect computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Deserialize)]
struct RawFolner {
    descriptor: GroupDescriptor,
    scheme: FolnerScheme,
    #[serde(default = "default_budget")]
    budget: u64,
}

fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

/// A Følner sequence `F_1 ⊂ F_2 ⊂ …` for a supported group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFolner")]
pub struct FolnerSequence {
    descriptor: GroupDescriptor,
    scheme: FolnerScheme,
    budget: u64,
}

impl TryFrom<RawFolner> for FolnerSequence {
    type Error = Error;

    fn try_from(raw: RawFolner) -> Result<Self> {
        FolnerSequence::new(raw.descriptor, raw.scheme).map(|s| s.with_budget(raw.budget))
    }
}

impl FolnerSequence {
    /// Validates the scheme against the group. User windows must be nested and
    /// duplicate free; they are stored sorted.
    pub fn new(descriptor: GroupDescriptor, scheme: FolnerScheme) -> Result<Self> {
        descriptor.validate()?;
        let scheme = match scheme {
            FolnerScheme::Box if descriptor.is_abelian() => FolnerScheme::Box,
            FolnerScheme::HeisenbergBox if descriptor == GroupDescriptor::Heisenberg => {
                FolnerScheme::HeisenbergBox
            }
            FolnerScheme::UserWindow { windows } => {
                FolnerScheme::UserWindow { windows: normalize_windows(&descriptor, windows)? }
            }
            other => {
                return invalid(format!(
                    "scheme {other:?} does not apply to group {}",
                    descriptor.name()
                ))
            }
        };
        Ok(FolnerSequence { descriptor, scheme, budget: DEFAULT_BUDGET })
    }

    /// The standard box scheme for the group.
    pub fn boxes(descriptor: GroupDescriptor) -> Result<Self> {
        let scheme = if descriptor.is_abelian() {
            FolnerScheme::Box
        } else {
            FolnerScheme::HeisenbergBox
        };
        FolnerSequence::new(descriptor, scheme)
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn descriptor(&self) -> &GroupDescriptor {
        &self.descriptor
    }

    pub fn scheme(&self) -> &FolnerScheme {
        &self.scheme
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Largest available index, `None` for unbounded schemes.
    pub fn max_index(&self) -> Option<usize> {
        match &self.scheme {
            FolnerScheme::UserWindow { windows } => Some(windows.len()),
            _ => None,
        }
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n == 0 {
            return invalid("Følner index must be at least 1");
        }
        if let Some(max) = self.max_index() {
            if n > max {
                return invalid(format!("Følner index {n} exceeds the {max} user windows"));
            }
        }
        Ok(())
    }

    /// `|F_N|` without enumerating.
    pub fn size(&self, n: usize) -> Result<u64> {
        self.check_index(n)?;
        let side = 2 * n as u64 + 1;
        Ok(match &self.scheme {
            FolnerScheme::Box => side.pow(self.descriptor.dim() as u32),
            FolnerScheme::HeisenbergBox => side * side * (2 * (n as u64) * (n as u64) + 1),
            FolnerScheme::UserWindow { windows } => windows[n - 1].len() as u64,
        })
    }

    /// `F_N` in lexicographic coordinate order.
    pub fn set(&self, n: usize) -> Result<Vec<GroupElement>> {
        let size = self.size(n)?;
        if size > self.budget {
            return Err(Error::Budget {
                what: format!("F_{n}"),
                needed: size,
                budget: self.budget,
            });
        }
        let n_i = n as i64;
        Ok(match &self.scheme {
            FolnerScheme::Box => {
                let ranges = vec![(-n_i, n_i); self.descriptor.dim()];
                product_of_ranges(&ranges)
            }
            FolnerScheme::HeisenbergBox => {
                product_of_ranges(&[(-n_i, n_i), (-n_i, n_i), (-n_i * n_i, n_i * n_i)])
            }
            FolnerScheme::UserWindow { windows } => windows[n - 1].clone(),
        })
    }

    /// Membership `g ∈ F_N`.
    pub fn contains(&self, n: usize, g: &GroupElement) -> bool {
        let n_i = n as i64;
        match &self.scheme {
            FolnerScheme::Box => g.coords().iter().all(|c| c.abs() <= n_i),
            FolnerScheme::HeisenbergBox => {
                let c = g.coords();
                c[0].abs() <= n_i && c[1].abs() <= n_i && c[2].abs() <= n_i * n_i
            }
            FolnerScheme::UserWindow { windows } => {
                n >= 1 && n <= windows.len() && windows[n - 1].binary_search(g).is_ok()
            }
        }
    }

    /// `|gF_N △ F_N| / |F_N|` (left) or `|F_N g △ F_N| / |F_N|` (right),
    /// counted exactly by enumerating `F_N`.
    pub fn defect(&self, n: usize, g: &GroupElement, side: Side) -> Result<f64> {
        self.descriptor.check(g)?;
        let set = self.set(n)?;
        // |gF| = |F|, so the symmetric difference is twice |gF \ F|.
        let outside = set
            .iter()
            .filter(|x| {
                let y = match side {
                    Side::Left => self.descriptor.mul_unchecked(g, x),
                    Side::Right => self.descriptor.mul_unchecked(x, g),
                };
                !self.contains(n, &y)
            })
            .count();
        Ok(2.0 * outside as f64 / set.len() as f64)
    }

    /// Tempered ratios `|∪_{K≤N} F_K⁻¹F_{N+1}| / |F_{N+1}|` for `N = 1..=n_max`.
    ///
    /// The sequence is nested, so the union equals its `K = N` term.
    pub fn tempered_check(
        &self,
        n_max: usize,
        threshold: f64,
    ) -> std::result::Result<TemperedReport, Box<Partial<TemperedReport>>> {
        let mut report = TemperedReport {
            n_values: Vec::new(),
            ratios: Vec::new(),
            max_ratio: 0.0,
            threshold,
            within_threshold: true,
        };
        let fail = |error: Error, report: TemperedReport| Box::new(Partial { error, partial: report });
        if n_max == 0 {
            return Err(fail(Error::InvalidInput("n_max must be at least 1".into()), report));
        }
        for n in 1..=n_max {
            let step = (|| -> Result<f64> {
                let (a, b) = (self.size(n)?, self.size(n + 1)?);
                if a.saturating_mul(b) > self.budget {
                    return Err(Error::Budget {
                        what: format!("F_{n}⁻¹F_{}", n + 1),
                        needed: a.saturating_mul(b),
                        budget: self.budget,
                    });
                }
                let inner = self.set(n)?;
                let outer = self.set(n + 1)?;
                let mut union = HashSet::with_capacity(outer.len() * 4);
                for k in &inner {
                    let k_inv = self.descriptor.inv_unchecked(k);
                    for f in &outer {
                        union.insert(self.descriptor.mul_unchecked(&k_inv, f));
                    }
                }
                Ok(union.len() as f64 / outer.len() as f64)
            })();
            match step {
                Ok(ratio) => {
                    report.n_values.push(n);
                    report.ratios.push(ratio);
                    report.max_ratio = report.max_ratio.max(ratio);
                    report.within_threshold = report.max_ratio <= threshold;
                }
                Err(e) => return Err(fail(e, report)),
            }
        }
        Ok(report)
    }

    /// Smallest `N ≤ n_limit` with the word ball of `radius` inside `F_N`.
    /// The sequence is nested, so the ball then stays inside every later set.
    pub fn exhaustion_index(&self, radius: usize, n_limit: usize) -> Result<Option<usize>> {
        let ball = self.descriptor.ball(radius, self.budget)?;
        let limit = self.max_index().map_or(n_limit, |m| m.min(n_limit));
        Ok((1..=limit).find(|&n| ball.iter().all(|g| self.contains(n, g))))
    }
}

/// Per-index tempered ratios of a Følner sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperedReport {
    pub n_values: Vec<usize>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub threshold: f64,
    pub within_threshold: bool,
}

/// `F_N` for the given sequence.
pub fn folner_set(seq: &FolnerSequence, n: usize) -> Result<Vec<GroupElement>> {
    seq.set(n)
}

/// Exact left or right Følner defect.
pub fn folner_defect(seq: &FolnerSequence, n: usize, g: &GroupElement, side: Side) -> Result<f64> {
    seq.defect(n, g, side)
}

/// Tempered ratios for `N = 1..=n_max` with verdict `max ≤ threshold`.
pub fn tempered_check(
    seq: &FolnerSequence,
    n_max: usize,
    threshold: f64,
) -> std::result::Result<TemperedReport, Box<Partial<TemperedReport>>> {
    seq.tempered_check(n_max, threshold)
}

fn product_of_ranges(ranges: &[(i64, i64)]) -> Vec<GroupElement> {
    let mut out = vec![GroupElement(SmallVec::new())];
    for &(lo, hi) in ranges {
        let mut next = Vec::with_capacity(out.len() * (hi - lo + 1) as usize);
        for prefix in &out {
            for v in lo..=hi {
                let mut c = prefix.0.clone();
                c.push(v);
                next.push(GroupElement(c));
            }
        }
        out = next;
    }
    out
}

fn normalize_windows(
    desc: &GroupDescriptor,
    windows: Vec<Vec<GroupElement>>,
) -> Result<Vec<Vec<GroupElement>>> {
    if windows.is_empty() {
        return invalid("user Følner sequence needs at least one window");
    }
    let mut out: Vec<Vec<GroupElement>> = Vec::with_capacity(windows.len());
    for (i, mut w) in windows.into_iter().enumerate() {
        for g in &w {
            desc.check(g)?;
        }
        w.sort();
        let before = w.len();
        w.dedup();
        if w.len() != before {
            return invalid(format!("window F_{} contains duplicates", i + 1));
        }
        if w.is_empty() {
            return invalid(format!("window F_{} is empty", i + 1));
        }
        if let Some(prev) = out.last() {
            if let Some(g) = prev.iter().find(|g| w.binary_search(g).is_err()) {
                return invalid(format!("windows are not nested: {g} ∈ F_{} but not F_{}", i, i + 1));
            }
        }
        out.push(w);
    }
    Ok(out)
}
