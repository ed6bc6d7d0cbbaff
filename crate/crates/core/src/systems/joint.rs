//! Joint evaluation of several Koopman sums `Σ_h c_h u_h f₀` on one state space.
//!
//! Counting and finite systems reduce to finitely many weighted atoms. Bernoulli
//! systems are compiled to the set of coordinates the sums read; each term keeps
//! the bit positions of its shifted cylinder window, its RN log factors and its
//! sign. Integrals enumerate all configurations up to the exact cap and fall
//! back to Monte Carlo when allowed.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use super::{character_sign, check_alpha, NonSingularSystem, SignCocycle, SignFunction, StateFunction, SystemKind};
use crate::error::{invalid, Error, Result};
use crate::groups::GroupElement;
use crate::measure::{configuration_weights, IntegrationEstimate, Welford, EXACT_CAP};
use crate::rng;

/// How integrals over a joint model are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalMode {
    /// Largest number of Bernoulli coordinates enumerated exactly.
    pub exact_cap: usize,
    /// Monte Carlo sample count used above the cap; `None` makes that an error.
    pub mc_samples: Option<u64>,
    pub seed: u64,
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode { exact_cap: EXACT_CAP, mc_samples: None, seed: 0 }
    }
}

#[derive(Clone, Debug)]
enum TermSign {
    Constant(f64),
    /// `s(ω)·s(s_h ω)` with `s` tabulated on a cylinder window.
    Coboundary { here: Vec<u32>, moved: Vec<u32> },
}

#[derive(Clone, Debug)]
struct Term {
    coef: f64,
    f_bits: Vec<u32>,
    rn: Vec<(u32, [f64; 2])>,
    sign: TermSign,
}

#[derive(Clone, Debug)]
enum Space {
    Atoms { masses: Vec<f64>, values: Vec<f64> },
    Bits { coords: Vec<GroupElement>, p0: Vec<f64>, rows: Vec<Vec<Term>>, f0: Vec<f64>, sign: Vec<f64>, inv_alpha: f64 },
}

/// Several Koopman sums evaluated jointly, atom by atom.
#[derive(Clone, Debug)]
pub struct JointModel {
    rows: usize,
    space: Space,
}

fn merge_terms(row: &[(GroupElement, f64)]) -> Vec<(GroupElement, f64)> {
    let mut v: Vec<(GroupElement, f64)> = row.to_vec();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    let mut out: Vec<(GroupElement, f64)> = Vec::with_capacity(v.len());
    for (g, c) in v {
        match out.last_mut() {
            Some(last) if last.0 == g => last.1 += c,
            _ => out.push((g, c)),
        }
    }
    out.retain(|(_, c)| *c != 0.0);
    out
}

impl JointModel {
    /// Compiles `rows[r] = Σ_{(h,c)} c·u_h f₀`.
    pub fn build(
        sys: &NonSingularSystem,
        alpha: f64,
        f0: &StateFunction,
        rows: &[Vec<(GroupElement, f64)>],
    ) -> Result<Self> {
        check_alpha(alpha)?;
        sys.check_function(f0)?;
        let d = *sys.descriptor();
        let rows: Vec<Vec<(GroupElement, f64)>> = rows.iter().map(|r| merge_terms(r)).collect();
        for (h, c) in rows.iter().flatten() {
            d.check(h)?;
            if !c.is_finite() {
                return invalid("coefficients must be finite");
            }
        }
        let n_rows = rows.len();
        let constant_sign = |h: &GroupElement| match sys.sign() {
            SignCocycle::Character { parities } => character_sign(&d, parities, h),
            _ => 1.0,
        };

        let space = match (sys.kind(), f0) {
            (SystemKind::CountingTranslation, StateFunction::Group { function }) => {
                let mut atoms: Vec<GroupElement> = Vec::new();
                for (h, _) in rows.iter().flatten() {
                    let h_inv = d.inv_unchecked(h);
                    atoms.extend(function.support().map(|y| d.mul_unchecked(y, &h_inv)));
                }
                atoms.sort();
                atoms.dedup();
                let negative: &[GroupElement] = match sys.sign() {
                    SignCocycle::Coboundary { function: SignFunction::Group { negative } } => negative,
                    _ => &[],
                };
                let s = |x: &GroupElement| if negative.contains(x) { -1.0 } else { 1.0 };
                let mut values = vec![0.0; atoms.len() * n_rows];
                for (a, x) in atoms.iter().enumerate() {
                    for (r, row) in rows.iter().enumerate() {
                        values[a * n_rows + r] = row
                            .iter()
                            .map(|(h, c)| {
                                let xh = d.mul_unchecked(x, h);
                                let sign = constant_sign(h) * if negative.is_empty() { 1.0 } else { s(x) * s(&xh) };
                                c * sign * function.get(&xh)
                            })
                            .sum();
                    }
                }
                Space::Atoms { masses: vec![1.0; atoms.len()], values }
            }
            (SystemKind::FiniteInvariant { weights, .. }, StateFunction::Atoms { values: f }) => {
                let signs: Option<&[i8]> = match sys.sign() {
                    SignCocycle::Coboundary { function: SignFunction::Atoms { signs } } => Some(signs),
                    _ => None,
                };
                let mut values = vec![0.0; weights.len() * n_rows];
                for i in 0..weights.len() {
                    for (r, row) in rows.iter().enumerate() {
                        values[i * n_rows + r] = row
                            .iter()
                            .map(|(h, c)| {
                                let j = sys.finite_step(h, i);
                                let sign = constant_sign(h) * signs.map_or(1.0, |s| (s[i] * s[j]) as f64);
                                c * sign * f[j]
                            })
                            .sum();
                    }
                }
                Space::Atoms { masses: weights.clone(), values }
            }
            (SystemKind::BernoulliShift { measure }, StateFunction::Cylinder { function }) => {
                let mut index: HashMap<GroupElement, u32> = HashMap::new();
                let mut coords: Vec<GroupElement> = Vec::new();
                let mut slot = |h: GroupElement| -> u32 {
                    *index.entry(h.clone()).or_insert_with(|| {
                        coords.push(h);
                        (coords.len() - 1) as u32
                    })
                };
                let sign_window: Option<&[GroupElement]> = match sys.sign() {
                    SignCocycle::Coboundary { function: SignFunction::Cylinder { function } } => {
                        Some(function.window())
                    }
                    _ => None,
                };
                let mut compiled = Vec::with_capacity(n_rows);
                for row in &rows {
                    let mut terms = Vec::with_capacity(row.len());
                    for (h, c) in row {
                        let f_bits = function.window().iter().map(|k| slot(d.mul_unchecked(h, k))).collect();
                        let rn = sys.rn_factors(h)?.into_iter().map(|(j, lr)| (slot(j), lr)).collect();
                        let sign = match sign_window {
                            Some(w) => TermSign::Coboundary {
                                here: w.iter().map(|k| slot(k.clone())).collect(),
                                moved: w.iter().map(|k| slot(d.mul_unchecked(h, k))).collect(),
                            },
                            None => TermSign::Constant(constant_sign(h)),
                        };
                        terms.push(Term { coef: *c, f_bits, rn, sign });
                    }
                    compiled.push(terms);
                }
                let sign = match sys.sign() {
                    SignCocycle::Coboundary { function: SignFunction::Cylinder { function } } => {
                        function.table().to_vec()
                    }
                    _ => Vec::new(),
                };
                let p0 = coords.iter().map(|h| measure.p0(h)).collect();
                Space::Bits {
                    coords,
                    p0,
                    rows: compiled,
                    f0: function.table().to_vec(),
                    sign,
                    inv_alpha: 1.0 / alpha,
                }
            }
            _ => return invalid("function does not live on this system's state space"),
        };
        Ok(JointModel { rows: n_rows, space })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of Bernoulli coordinates read, or of atoms for atomic spaces.
    pub fn size(&self) -> usize {
        match &self.space {
            Space::Atoms { masses, .. } => masses.len(),
            Space::Bits { coords, .. } => coords.len(),
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.space, Space::Atoms { .. })
    }

    /// Total mass of the state space seen by the model: the number of atoms
    /// for counting systems, 1 for probability systems.
    pub fn total_mass(&self) -> f64 {
        match &self.space {
            Space::Atoms { masses, .. } => masses.iter().sum(),
            Space::Bits { .. } => 1.0,
        }
    }

    fn eval_bits(&self, bits: &[u8], out: &mut [f64]) {
        let Space::Bits { rows, f0, sign, inv_alpha, .. } = &self.space else { unreachable!() };
        let read = |positions: &[u32]| {
            positions.iter().enumerate().fold(0usize, |idx, (k, p)| idx | ((bits[*p as usize] as usize) << k))
        };
        for (r, row) in rows.iter().enumerate() {
            let mut v = 0.0;
            for t in row {
                let fv = f0[read(&t.f_bits)];
                if fv == 0.0 {
                    continue;
                }
                let lr: f64 = t.rn.iter().map(|(p, l)| l[bits[*p as usize] as usize]).sum();
                let s = match &t.sign {
                    TermSign::Constant(s) => *s,
                    TermSign::Coboundary { here, moved } => sign[read(here)] * sign[read(moved)],
                };
                v += t.coef * s * (lr * inv_alpha).exp() * fv;
            }
            out[r] = v;
        }
    }

    /// Calls `visit(mass, values)` for every atom; Bernoulli models must fit `cap`.
    pub fn for_each_atom(&self, cap: usize, mut visit: impl FnMut(f64, &[f64])) -> Result<()> {
        match &self.space {
            Space::Atoms { masses, values } => {
                for (a, m) in masses.iter().enumerate() {
                    visit(*m, &values[a * self.rows..(a + 1) * self.rows]);
                }
            }
            Space::Bits { coords, p0, .. } => {
                let k = coords.len();
                if k > cap {
                    return Err(Error::WindowTooLarge { coords: k, cap });
                }
                let weights = configuration_weights(p0);
                let mut bits = vec![0u8; k];
                let mut out = vec![0.0; self.rows];
                for (idx, w) in weights.iter().enumerate() {
                    for (i, b) in bits.iter_mut().enumerate() {
                        *b = ((idx >> i) & 1) as u8;
                    }
                    self.eval_bits(&bits, &mut out);
                    visit(*w, &out);
                }
            }
        }
        Ok(())
    }

    fn sample_bits(&self, rng: &mut ChaCha8Rng, bits: &mut [u8], out: &mut [f64]) {
        let Space::Bits { p0, .. } = &self.space else { unreachable!() };
        for (b, p) in bits.iter_mut().zip(p0) {
            *b = (rng.random::<f64>() >= *p) as u8;
        }
        self.eval_bits(bits, out);
    }

    /// `∫ func(rows(ω)) dμ(ω)`; `func` must vanish at the zero vector for counting systems.
    pub fn integrate(&self, mode: &EvalMode, mut func: impl FnMut(&[f64]) -> f64) -> Result<IntegrationEstimate> {
        if self.is_atomic() || self.size() <= mode.exact_cap {
            let mut total = 0.0;
            let mut points = 0u64;
            self.for_each_atom(mode.exact_cap, |m, v| {
                total += m * func(v);
                points += 1;
            })?;
            return Ok(IntegrationEstimate::exact(total, points));
        }
        let Some(n) = mode.mc_samples else {
            return Err(Error::WindowTooLarge { coords: self.size(), cap: mode.exact_cap });
        };
        if n < 2 {
            return invalid("Monte Carlo fallback needs at least 2 samples");
        }
        let mut rng = rng::stream(mode.seed, rng::streams::ALPHA_NORM);
        let mut bits = vec![0u8; self.size()];
        let mut out = vec![0.0; self.rows];
        let mut acc = Welford::default();
        for _ in 0..n {
            self.sample_bits(&mut rng, &mut bits, &mut out);
            acc.push(func(&out));
        }
        Ok(acc.estimate())
    }

    /// A sampler for the control measure normalized to a probability.
    /// Bernoulli models with at most `table_cap` coordinates are tabulated.
    pub fn control_sampler(&self, table_cap: usize) -> Result<ControlSampler<'_>> {
        if !self.is_atomic() && self.size() > table_cap {
            return Ok(ControlSampler::Direct { model: self, bits: vec![0; self.size()] });
        }
        let mut masses = Vec::new();
        let mut values = Vec::new();
        self.for_each_atom(table_cap, |m, v| {
            if m > 0.0 {
                masses.push(m);
                values.extend_from_slice(v);
            }
        })?;
        if masses.is_empty() {
            return invalid("control measure has no atoms");
        }
        let total: f64 = masses.iter().sum();
        let probs = masses.iter().map(|m| m / total).collect();
        let alias = WeightedAliasIndex::new(masses).map_err(|e| Error::InvalidInput(format!("control measure: {e}")))?;
        Ok(ControlSampler::Table { alias, probs, values, rows: self.rows })
    }
}

/// Draws `V` from the normalized control measure and reports the row values at `V`.
#[derive(Debug)]
pub enum ControlSampler<'a> {
    Table { alias: WeightedAliasIndex<f64>, probs: Vec<f64>, values: Vec<f64>, rows: usize },
    Direct { model: &'a JointModel, bits: Vec<u8> },
}

impl ControlSampler<'_> {
    /// Row values at a fresh draw; `out` is scratch space of one entry per row.
    pub fn draw<'b>(&'b mut self, rng: &mut ChaCha8Rng, out: &'b mut [f64]) -> &'b [f64] {
        match self {
            ControlSampler::Table { alias, values, rows, .. } => {
                let a = alias.sample(rng);
                &values[a * *rows..(a + 1) * *rows]
            }
            ControlSampler::Direct { model, bits } => {
                model.sample_bits(rng, bits, out);
                out
            }
        }
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self, ControlSampler::Table { .. })
    }

    /// `Q[r][s] = E_V[row_r(V)·row_s(V)]`, row-major: exact for tabulated
    /// samplers, estimated from `n` draws otherwise.
    pub fn moment_matrix(&mut self, rng: &mut ChaCha8Rng, n: u64) -> Vec<f64> {
        let add = |q: &mut [f64], v: &[f64], p: f64| {
            let k = v.len();
            for r in 0..k {
                for s in 0..k {
                    q[r * k + s] += p * v[r] * v[s];
                }
            }
        };
        match self {
            ControlSampler::Table { probs, values, rows, .. } => {
                let k = *rows;
                let mut q = vec![0.0; k * k];
                for (a, p) in probs.iter().enumerate() {
                    add(&mut q, &values[a * k..(a + 1) * k], *p);
                }
                q
            }
            ControlSampler::Direct { model, bits } => {
                let k = model.rows();
                let mut q = vec![0.0; k * k];
                let mut out = vec![0.0; k];
                let n = n.max(1);
                for _ in 0..n {
                    model.sample_bits(rng, bits, &mut out);
                    add(&mut q, &out, 1.0 / n as f64);
                }
                q
            }
        }
    }
}
