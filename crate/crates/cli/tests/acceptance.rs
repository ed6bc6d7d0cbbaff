//! Acceptance criteria 1–12, one PASS/FAIL line each. Run with
//! `cargo test -p amenable-sas-cli --test acceptance`.

mod common;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::error::Error;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use amenable_sas::diagnostics::{
    dye_douglass_bounds, ergodicity_scan, gross_tail_scan, kvn_density_set, null_average, positive_pointwise_average,
    psi_phi, weak_mixing_scan, BoundedGroupFunction, CylinderEvent, FinSuppProb, NullAverageConfig, PointwiseConfig,
    ReportDetails, TailGrid, Verdict,
};
use amenable_sas::groups::{FolnerSequence, GroupDescriptor, GroupElement, Side};
use amenable_sas::measure::{
    build_psi_measure, cylinder_integrate, BernoulliParam, Configuration, CylinderFunction, ProductBernoulliMeasure,
    PsiProfile,
};
use amenable_sas::stable::{alpha_norm, char_fn, empirical_char_fn, sample_path, LinearCombination, SpectralProcess};
use amenable_sas::systems::{
    cocycle_check, koopman_u, rn_derivative, FiniteAction, GroupFunction, MeasurePoint, NonSingularSystem,
    SignCocycle, SignFunction, StateFunction, SystemKind,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use sas_cli::emit::emit;
use sas_cli::run::{run_scenario, RunOptions};
use sas_cli::scenario::{parse_scenario, serialize_scenario};

type Outcome = Result<(bool, String), Box<dyn Error>>;

fn z(n: i64) -> GroupElement {
    GroupElement::from(n)
}

fn runner(label: &str) -> TestRunner {
    let mut seed = [0u8; 32];
    for (s, b) in seed.iter_mut().zip(label.bytes()) {
        *s = b;
    }
    TestRunner::new_with_rng(Config { failure_persistence: None, ..Config::default() }, TestRng::from_seed(RngAlgorithm::ChaCha, &seed))
}

fn draw<S: Strategy>(r: &mut TestRunner, s: S) -> S::Value {
    s.new_tree(r).expect("strategy generates").current()
}

fn iid(alpha: f64) -> SpectralProcess {
    SpectralProcess::new(
        alpha,
        StateFunction::group(GroupFunction::delta(z(0))),
        NonSingularSystem::counting(GroupDescriptor::integers()),
    )
    .unwrap()
}

/// `ρ_0(0) = 0.6`, `ρ_1(0) = 0.3`, `1/2` elsewhere; `f₀ = ω_0`.
fn bernoulli(alpha: f64) -> SpectralProcess {
    let m = ProductBernoulliMeasure::new(
        GroupDescriptor::integers(),
        BernoulliParam::Table { entries: vec![(z(0), 0.6), (z(1), 0.3)], default: 0.5 },
    )
    .unwrap();
    SpectralProcess::new(alpha, StateFunction::cylinder(CylinderFunction::coordinate(z(0))), NonSingularSystem::bernoulli(m))
        .unwrap()
}

/// One atom, trivial action, `f₀ ≡ 1`.
fn trivial(alpha: f64) -> SpectralProcess {
    let sys = NonSingularSystem::finite_trivial(GroupDescriptor::integers(), vec![1.0]).unwrap();
    SpectralProcess::new(alpha, StateFunction::atoms(vec![1.0]), sys).unwrap()
}

fn z_boxes() -> FolnerSequence {
    FolnerSequence::boxes(GroupDescriptor::integers()).unwrap()
}

fn comb_on(support: std::ops::RangeInclusive<i64>, terms: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = LinearCombination> {
    prop::collection::btree_map(support, -1.5f64..1.5, terms)
        .prop_map(|m| LinearCombination::from_terms(m.into_iter().map(|(g, c)| (z(g), c)).collect()).unwrap())
}

/// Sum of `ρ(ω)·F(ω)` over every configuration on `window`.
fn enumerate(m: &ProductBernoulliMeasure, window: &[GroupElement], mut f: impl FnMut(&MeasurePoint) -> f64) -> f64 {
    let mut window = window.to_vec();
    window.sort();
    window.dedup();
    (0..1usize << window.len())
        .map(|idx| {
            let bit = |i: usize| ((idx >> i) & 1) as u8;
            let w = MeasurePoint::Configuration(Configuration::from_pairs(window.iter().enumerate().map(|(i, h)| (h.clone(), bit(i)))));
            let weight: f64 = window.iter().enumerate().map(|(i, h)| m.rho(h, bit(i))).product();
            weight * f(&w)
        })
        .sum()
}

/// `∫|f|^α dμ` from the cylinder table.
fn cylinder_norm(m: &ProductBernoulliMeasure, f: &CylinderFunction, alpha: f64) -> f64 {
    let w = f.window();
    f.table()
        .iter()
        .enumerate()
        .map(|(idx, v)| {
            let weight: f64 = w.iter().enumerate().map(|(k, h)| m.rho(h, ((idx >> k) & 1) as u8)).product();
            weight * v.abs().powf(alpha)
        })
        .sum()
}

fn c1_characteristic_functional() -> Outcome {
    let window: Vec<GroupElement> = (-2..=2).map(z).collect();
    let mut r = runner("criterion 1");
    let (paths, terms, per_alpha) = (100_000, 10_000, 300.0);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut slowest: f64 = 0.0;
    for alpha in [0.8, 1.2, 1.5] {
        let start = Instant::now();
        for (name, p) in [("iid", iid(alpha)), ("bernoulli", bernoulli(alpha))] {
            let set = sample_path(&p, &window, terms, paths, draw(&mut r, any::<u64>()))?;
            for _ in 0..5 {
                let comb = draw(&mut r, comb_on(-2..=2, 1..=4));
                let est = empirical_char_fn(&set, &comb)?;
                let exact = char_fn(&p, &comb)?;
                let re = (est.value.re - exact).abs() / (3.0 * est.stderr_re + est.truncation_bound);
                let im = est.value.im.abs() / (3.0 * est.stderr_im + est.truncation_bound);
                worst = worst.max(re).max(im);
                if !est.agrees_with(exact, 3.0) {
                    failures.push(format!("{name} α={alpha}: {:.4} vs {exact:.4}", est.value.re));
                }
            }
        }
        slowest = slowest.max(start.elapsed().as_secs_f64());
    }
    let pass = failures.is_empty() && slowest <= per_alpha;
    Ok((
        pass,
        format!(
            "30 combinations, worst |Δ|/(3σ + bound) = {worst:.3}, slowest α took {slowest:.0} s (limit {per_alpha:.0} s){}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    ))
}

fn c2_isometry() -> Outcome {
    let mut r = runner("criterion 2");
    let alphas = prop::sample::select(vec![0.8, 1.2, 1.5]);
    let mut worst_exact: f64 = 0.0;

    // Constant Bernoulli on ℤ², enumerating u_g f pointwise.
    let d2 = GroupDescriptor::lattice(2);
    let el2 = || prop::collection::vec(-2i64..=2, 2).prop_map(GroupElement::from);
    for _ in 0..20 {
        let p0 = draw(&mut r, 0.1f64..0.9);
        let m = ProductBernoulliMeasure::new(d2, BernoulliParam::Constant { p0 })?;
        let sys = NonSingularSystem::bernoulli(m.clone());
        let window: Vec<GroupElement> = draw(&mut r, prop::collection::btree_set(el2(), 1..=3)).into_iter().collect();
        let table = draw(&mut r, prop::collection::vec(-3.0f64..3.0, 1usize << window.len()));
        let f = CylinderFunction::new(window, table)?;
        let g = GroupElement::from(draw(&mut r, prop::collection::vec(-50i64..=50, 2)));
        let alpha = draw(&mut r, alphas.clone());
        let sf = StateFunction::cylinder(f.clone());
        let u = koopman_u(&sys, alpha, &sf, &g)?;
        let gw: Vec<GroupElement> = f.window().iter().map(|k| d2.mul(&g, k).unwrap()).collect();
        let lhs = enumerate(&m, &gw, |w| u.eval(w).unwrap().abs().powf(alpha));
        let rhs = cylinder_norm(&m, &f, alpha);
        worst_exact = worst_exact.max((lhs - rhs).abs());
    }

    // Counting measure on the Heisenberg group.
    let h = GroupDescriptor::heisenberg();
    let el3 = || (-5i64..=5, -5i64..=5, -9i64..=9).prop_map(|(a, b, c)| GroupElement::from(vec![a, b, c]));
    for _ in 0..15 {
        let entries: Vec<(GroupElement, f64)> =
            draw(&mut r, prop::collection::btree_map(el3(), -3.0f64..3.0, 1..6)).into_iter().collect();
        let sys = NonSingularSystem::counting(h);
        let sf = StateFunction::group(GroupFunction::new(entries.clone())?);
        let g = draw(&mut r, el3());
        let alpha = draw(&mut r, alphas.clone());
        let u = koopman_u(&sys, alpha, &sf, &g)?;
        let g_inv = h.inv(&g)?;
        let lhs: f64 = entries
            .iter()
            .map(|(x, _)| u.eval(&MeasurePoint::Element(h.mul(x, &g_inv).unwrap())).unwrap().abs().powf(alpha))
            .sum();
        let rhs: f64 = entries.iter().map(|(_, v)| v.abs().powf(alpha)).sum();
        worst_exact = worst_exact.max((lhs - rhs).abs());
    }

    // Rotation of 7 atoms by ℤ².
    for _ in 0..15 {
        let weights = vec![1.0 / 7.0; 7];
        let coefficients = draw(&mut r, prop::collection::vec(-3i64..=3, 2));
        let sys = NonSingularSystem::new(d2, SystemKind::FiniteInvariant { weights: weights.clone(), action: FiniteAction::Rotation { coefficients } })?;
        let values = draw(&mut r, prop::collection::vec(-3.0f64..3.0, 7));
        let sf = StateFunction::atoms(values.clone());
        let g = GroupElement::from(draw(&mut r, prop::collection::vec(-100i64..=100, 2)));
        let alpha = draw(&mut r, alphas.clone());
        let u = koopman_u(&sys, alpha, &sf, &g)?;
        let lhs: f64 = (0..7).map(|i| weights[i] * u.eval(&MeasurePoint::Atom(i)).unwrap().abs().powf(alpha)).sum();
        let rhs: f64 = (0..7).map(|i| weights[i] * values[i].abs().powf(alpha)).sum();
        worst_exact = worst_exact.max((lhs - rhs).abs());
    }

    // Ψ-Bernoulli on ℤ with R = 64: the RN product factorizes over coordinates.
    let psi = build_psi_measure(GroupDescriptor::integers(), &PsiProfile::default())?;
    let m = psi.measure.clone();
    let sys = NonSingularSystem::bernoulli(m.clone());
    let mut worst_psi: f64 = 0.0;
    let mut psi_ok = sys.truncation_radius() == 64;
    let mut largest_tail: f64 = 0.0;
    for _ in 0..10 {
        let window: Vec<GroupElement> = draw(&mut r, prop::collection::btree_set(-3i64..=3, 1..=3)).into_iter().map(z).collect();
        let table = draw(&mut r, prop::collection::vec(-3.0f64..3.0, 1usize << window.len()));
        let f = CylinderFunction::new(window, table)?;
        let g = z(draw(&mut r, -300i64..=300));
        let alpha = draw(&mut r, alphas.clone());
        let factors: HashMap<GroupElement, [f64; 2]> = sys.rn_factors(&g)?.into_iter().collect();
        let gw: Vec<GroupElement> = f.window().iter().map(|k| z(g.coords()[0] + k.coords()[0])).collect();
        let outside: f64 = factors
            .iter()
            .filter(|(h, _)| !gw.contains(h))
            .map(|(h, l)| m.rho(h, 0) * l[0].exp() + m.rho(h, 1) * l[1].exp())
            .product();
        let inside: f64 = f
            .table()
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let weight: f64 = gw
                    .iter()
                    .enumerate()
                    .map(|(k, h)| {
                        let b = (idx >> k) & 1;
                        m.rho(h, b as u8) * factors.get(h).map_or(1.0, |l| l[b].exp())
                    })
                    .product();
                weight * v.abs().powf(alpha)
            })
            .sum();
        let lhs = outside * inside;
        let rhs = cylinder_norm(&m, &f, alpha);
        let tail = sys.rn_tail_estimate(&g)?;
        largest_tail = largest_tail.max(tail);
        let p = SpectralProcess::new(alpha, StateFunction::cylinder(f), sys.clone())?;
        let lib = alpha_norm(&p, &LinearCombination::single(g.clone(), 1.0))?.power;
        let gap = (lhs - rhs).abs().max((lib - rhs).abs());
        worst_psi = worst_psi.max(gap);
        psi_ok &= gap <= tail + 1e-3;
    }
    Ok((
        worst_exact <= 1e-9 && psi_ok,
        format!(
            "50 measure-preserving cases max |Δ| = {worst_exact:.1e} (≤ 1e-9); 10 Ψ-Bernoulli cases at R=64 max |Δ| = {worst_psi:.1e} (≤ tail + 1e-3, largest tail {largest_tail:.1e})"
        ),
    ))
}

fn c3_chain_rule() -> Outcome {
    let mut r = runner("criterion 3");
    let mut worst_oracle: f64 = 0.0;
    let mut worst_chain: f64 = 0.0;
    let mut signs = true;
    let mut cases = 0;
    for heis in [false, true] {
        let d = if heis { GroupDescriptor::heisenberg() } else { GroupDescriptor::integers() };
        let el = move || {
            prop::collection::vec(-3i64..=3, d.dim()).prop_map(GroupElement::from)
        };
        for _ in 0..100 {
            let entries: Vec<(GroupElement, f64)> =
                draw(&mut r, prop::collection::btree_map(el(), 0.05f64..0.95, 1..5)).into_iter().collect();
            let default = draw(&mut r, 0.2f64..0.8);
            let m = ProductBernoulliMeasure::new(d, BernoulliParam::Table { entries: entries.clone(), default })?;
            let sys = NonSingularSystem::bernoulli(m.clone());
            let (g, h) = (draw(&mut r, el()), draw(&mut r, el()));

            // a′_g(ω) = Π_{k ∈ K ∪ gK} ρ_{g⁻¹k}(ω_k)/ρ_k(ω_k)
            let g_inv = d.inv(&g)?;
            let mut support: Vec<GroupElement> = entries.iter().map(|(k, _)| k.clone()).collect();
            support.extend(entries.iter().map(|(k, _)| d.mul(&g, k).unwrap()));
            support.sort();
            support.dedup();
            let bits = draw(&mut r, prop::collection::vec(0u8..=1, support.len()));
            let omega = Configuration::from_pairs(support.iter().cloned().zip(bits.iter().copied()));
            let oracle: f64 = support
                .iter()
                .zip(&bits)
                .map(|(k, b)| m.rho(&d.mul(&g_inv, k).unwrap(), *b) / m.rho(k, *b))
                .product();
            let got = rn_derivative(&sys, &g, &MeasurePoint::Configuration(omega))?.value;
            worst_oracle = worst_oracle.max((got - oracle).abs() / oracle);

            let c = cocycle_check(&sys, &g, &h, 32, draw(&mut r, any::<u64>()))?;
            worst_chain = worst_chain.max(c.max_relative_error);
            signs &= c.sign_identity_holds;

            let s = CylinderFunction::new(vec![d.identity(), d.generators()[0].clone()], vec![1.0, -1.0, -1.0, 1.0])?;
            let signed = sys.clone().with_sign(SignCocycle::Coboundary { function: SignFunction::Cylinder { function: s } })?;
            let c = cocycle_check(&signed, &g, &h, 32, 1)?;
            worst_chain = worst_chain.max(c.max_relative_error);
            signs &= c.sign_identity_holds;
            if !heis {
                let parities = draw(&mut r, prop::collection::vec(0i64..=1, 1));
                let c = cocycle_check(&sys.with_sign(SignCocycle::Character { parities })?, &g, &h, 8, 2)?;
                signs &= c.sign_identity_holds;
            }
            cases += 1;
        }
    }
    Ok((
        worst_oracle <= 1e-12 && worst_chain <= 1e-12 && signs,
        format!(
            "{cases} table measures on ℤ and H₃: RN vs product oracle {worst_oracle:.1e}, chain rule {worst_chain:.1e} (≤ 1e-12), sign identity {}",
            if signs { "exact" } else { "violated" }
        ),
    ))
}

fn c4_ergodicity() -> Outcome {
    let seq = z_boxes();
    let e = LinearCombination::single(z(0), 1.0);
    let envelope = 1.0 - (-2.0f64).exp();
    let mut ok = true;
    let mut last = Vec::new();
    for alpha in [0.8, 1.2, 1.5] {
        let rep = ergodicity_scan(&iid(alpha), &e, &seq, 200, 1e-2)?;
        for t in &rep.trace {
            // F_N meets the identity shell {e} in one point.
            let bound = envelope / seq.size(t.index)? as f64;
            ok &= (t.value - rep.target).abs() <= bound + 1e-12;
        }
        ok &= rep.residual <= 1e-2 && rep.verdict == Verdict::ConsistentWithErgodic;
        last.push(format!("{:.2e}", rep.residual));
    }
    let rep = ergodicity_scan(&trivial(1.5), &e, &seq, 200, 1e-2)?;
    let ones = rep.trace.iter().all(|t| t.value == 1.0);
    ok &= ones && rep.target < 1.0 && rep.verdict == Verdict::NonErgodic;
    Ok((
        ok,
        format!(
            "iid residual at N=200 for α ∈ {{0.8, 1.2, 1.5}}: {} within the (1−e⁻²)/|F_N| envelope; trivial action trace ≡ 1 {} vs target {:.4}, {}",
            last.join(", "),
            if ones { "holds" } else { "fails" },
            rep.target,
            rep.verdict.name()
        ),
    ))
}

fn c5_weak_mixing() -> Outcome {
    let mut r = runner("criterion 5");
    let seq = z_boxes();
    let e = LinearCombination::single(z(0), 1.0);
    let mut combs = vec![e.clone()];
    for _ in 0..4 {
        combs.push(draw(&mut r, comb_on(-3..=3, 1..=3)));
    }
    let p = iid(1.5);
    let mut iid_max: f64 = 0.0;
    for c in &combs {
        let rep = weak_mixing_scan(&p, c, c, &seq, 200, 1e-2, &TailGrid::empty())?;
        iid_max = iid_max.max(rep.trace.last().map_or(f64::INFINITY, |t| t.value));
    }

    // Trivial action: the gap depends on s = Σ c_h only, and is ≥ 0.05 for s ∈ [0.3, 1.1] at α = 1.5.
    let mut trivial_combs = vec![e];
    while trivial_combs.len() < 5 {
        let c = draw(&mut r, comb_on(-3..=3, 1..=3));
        let s: f64 = c.terms().iter().map(|(_, v)| v).sum();
        if s.abs() < 0.1 {
            continue;
        }
        trivial_combs.push(c.scaled(draw(&mut r, 0.3f64..1.1) / s));
    }
    let p = trivial(1.5);
    let mut gap = f64::INFINITY;
    for c in &trivial_combs {
        let rep = weak_mixing_scan(&p, c, c, &seq, 200, 1e-2, &TailGrid::empty())?;
        gap = gap.min(rep.trace.iter().map(|t| t.value).fold(f64::INFINITY, f64::min));
    }
    Ok((
        iid_max <= 1e-2 && gap >= 0.05,
        format!("iid trace at N=200 max {iid_max:.2e} over 5 combinations (≤ 1e-2); trivial action trace ≥ {gap:.4} over 5 nonzero combinations (≥ 0.05)"),
    ))
}

fn c6_gross() -> Outcome {
    let iid_rep = gross_tail_scan(&iid(1.3), (0.5, 2.0), 0.5, 6, 1e-6)?;
    let beyond: Vec<f64> = iid_rep.trace.iter().filter(|t| t.index >= 1).map(|t| t.value).collect();
    let iid_ok = !beyond.is_empty() && beyond.iter().all(|v| *v == 0.0);
    let tr = gross_tail_scan(&trivial(1.3), (0.5, 2.0), 0.5, 6, 1e-6)?;
    let first = tr.trace[0].value;
    let tr_ok = first > 0.0 && tr.trace.iter().all(|t| t.value == first);
    Ok((
        iid_ok && tr_ok && iid_rep.verdict == Verdict::ConsistentWithStrongMixing,
        format!(
            "iid shell max beyond the identity shell: {beyond:?}; trivial action shell max constant {first} over {} shells",
            tr.trace.len()
        ),
    ))
}

fn c7_null_positive() -> Outcome {
    let seq = z_boxes();
    let one = StateFunction::cylinder(CylinderFunction::constant(1.0));
    let cfg = |p: &SpectralProcess| NullAverageConfig {
        eta: 0.5,
        event: CylinderEvent::default_for(p),
        samples: 10_000,
        seed: 7,
        tolerance: 1e-2,
    };
    let uniform = SpectralProcess::new(1.2, one.clone(), NonSingularSystem::bernoulli(ProductBernoulliMeasure::uniform(GroupDescriptor::integers())))?;
    let rep = null_average(&uniform, &seq, 100, &cfg(&uniform))?;
    let max_w = match rep.details {
        ReportDetails::Null { max_w, .. } => max_w,
        _ => f64::NAN,
    };
    let positive = rep.verdict == Verdict::PositiveConsistent && max_w == 1.0 && rep.trace.iter().all(|t| t.value == 1.0);

    let psi = build_psi_measure(GroupDescriptor::integers(), &PsiProfile::default())?;
    let p = SpectralProcess::new(1.2, one, NonSingularSystem::bernoulli(psi.measure))?;
    let rep = null_average(&p, &seq, 100, &cfg(&p))?;
    let v: Vec<f64> = [10, 30, 100].iter().map(|n| rep.trace[n - 1].value).collect();
    let decreasing = v.windows(2).all(|w| w[1] < w[0]);
    let ten_percent = v.windows(2).all(|w| w[1] <= 0.9 * w[0]);
    Ok((
        positive && decreasing && (ten_percent || v[2] < 0.1),
        format!(
            "uniform Bernoulli: {}, W_N ≡ 1 {}; Ψ-Bernoulli μ_E(W_N > 0.5) at N = 10, 30, 100: {:.4}, {:.4}, {:.4}",
            Verdict::PositiveConsistent.name(),
            if max_w == 1.0 { "exactly" } else { "fails" },
            v[0],
            v[1],
            v[2]
        ),
    ))
}

fn c8_pointwise() -> Outcome {
    let m = ProductBernoulliMeasure::uniform(GroupDescriptor::integers());
    let f = CylinderFunction::coordinate(z(0));
    let oracle = cylinder_integrate(&m, &f.abs_pow(1.0))?.value;
    let p = SpectralProcess::new(1.0, StateFunction::cylinder(f), NonSingularSystem::bernoulli(m))?;
    let rep = positive_pointwise_average(&p, &z_boxes(), &[1000], &PointwiseConfig { samples: 1000, seed: 8, sigmas: 3.0 })?;
    let t = rep.trace[0];
    Ok((
        oracle == 0.5 && (t.value - oracle).abs() <= 3.0 * t.stderr,
        format!("N=1000 mean {:.5} ± {:.5} vs cylinder_integrate {oracle} ({:.2} σ)", t.value, t.stderr, (t.value - oracle).abs() / t.stderr),
    ))
}

fn c9_gram() -> Outcome {
    let mut r = runner("criterion 9");
    let psi = build_psi_measure(GroupDescriptor::integers(), &PsiProfile::default())?;
    let heis = GroupDescriptor::heisenberg();
    let el3 = || (-3i64..=3, -3i64..=3, -6i64..=6).prop_map(|(a, b, c)| GroupElement::from(vec![a, b, c]));
    let mut min_eig = f64::INFINITY;
    for i in 0..20 {
        let alpha = draw(&mut r, prop::sample::select(vec![0.8, 1.2, 1.5, 1.9]));
        let ints = |r: &mut TestRunner, k: i64| -> Vec<GroupElement> {
            draw(r, prop::collection::btree_set(-k..=k, 3..=8)).into_iter().map(z).collect()
        };
        let (p, comb, points): (SpectralProcess, LinearCombination, Vec<GroupElement>) = match i % 5 {
            0 => (bernoulli(alpha), draw(&mut r, comb_on(-3..=3, 1..=3)), ints(&mut r, 10)),
            1 => {
                let f0 = GroupFunction::new(vec![(heis.identity(), 1.0), (GroupElement::from(vec![1, 0, 0]), -0.6)])?;
                let p = SpectralProcess::new(alpha, StateFunction::group(f0), NonSingularSystem::counting(heis))?;
                let comb = LinearCombination::from_terms(draw(&mut r, prop::collection::vec((el3(), -1.5f64..1.5), 1..=3)))?;
                (p, comb, draw(&mut r, prop::collection::btree_set(el3(), 3..=8)).into_iter().collect())
            }
            2 => {
                let d2 = GroupDescriptor::lattice(2);
                let coefficients = draw(&mut r, prop::collection::vec(-3i64..=3, 2));
                let sys = NonSingularSystem::new(d2, SystemKind::FiniteInvariant { weights: vec![0.2; 5], action: FiniteAction::Rotation { coefficients } })?;
                let p = SpectralProcess::new(alpha, StateFunction::atoms(draw(&mut r, prop::collection::vec(-2.0f64..2.0, 5))), sys)?;
                let el2 = || prop::collection::vec(-4i64..=4, 2).prop_map(GroupElement::from);
                let comb = LinearCombination::from_terms(draw(&mut r, prop::collection::vec((el2(), -1.5f64..1.5), 1..=3)))?;
                (p, comb, draw(&mut r, prop::collection::btree_set(el2(), 3..=8)).into_iter().collect())
            }
            3 => (iid(alpha), draw(&mut r, comb_on(-3..=3, 1..=3)), ints(&mut r, 6)),
            _ => {
                // The exact evaluator caps the window at 22 coordinates, so R = 64 does not fit.
                let sys = NonSingularSystem::bernoulli(psi.measure.clone()).with_truncation_radius(3);
                let p = SpectralProcess::new(alpha, StateFunction::cylinder(CylinderFunction::coordinate(z(0))), sys)?;
                (p, draw(&mut r, comb_on(-1..=1, 1..=2)), ints(&mut r, 2))
            }
        };
        let d = *p.descriptor();
        let psi_f = psi_phi(&p, &comb)?;
        let n = points.len();
        let mut entries = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                entries[a * n + b] = psi_f.eval(&d.mul(&d.inv(&points[b])?, &points[a])?)?;
            }
        }
        let m = DMatrix::from_row_slice(n, n, &entries);
        min_eig = min_eig.min(m.symmetric_eigen().eigenvalues.min());
    }
    Ok((min_eig >= -1e-8, format!("smallest eigenvalue over 20 Gram matrices (table Bernoulli, counting H₃, finite rotation, iid, Ψ-Bernoulli at R=3) {min_eig:.3e} (≥ −1e-8)")))
}

/// `|g·F △ F|` and `|F·g △ F|` by hashing, with `F` built from explicit loops.
fn brute_defects(d: &GroupDescriptor, n: i64) -> Vec<(GroupElement, f64, f64)> {
    let set: Vec<GroupElement> = match *d {
        GroupDescriptor::Heisenberg => {
            let mut v = Vec::new();
            for a in -n..=n {
                for b in -n..=n {
                    for c in -n * n..=n * n {
                        v.push(GroupElement::from(vec![a, b, c]));
                    }
                }
            }
            v
        }
        GroupDescriptor::Lattice { dim } => {
            let mut v = vec![Vec::new()];
            for _ in 0..dim {
                v = v.into_iter().flat_map(|p: Vec<i64>| (-n..=n).map(move |x| [p.clone(), vec![x]].concat())).collect();
            }
            v.into_iter().map(GroupElement::from).collect()
        }
    };
    let members: HashSet<&GroupElement> = set.iter().collect();
    let sym_diff = |moved: Vec<GroupElement>| -> usize {
        let moved_set: HashSet<&GroupElement> = moved.iter().collect();
        moved.iter().filter(|x| !members.contains(x)).count() + set.iter().filter(|x| !moved_set.contains(x)).count()
    };
    let mut gens = d.generators();
    gens.push(d.identity());
    gens.into_iter()
        .map(|g| {
            let left = sym_diff(set.iter().map(|x| d.mul(&g, x).unwrap()).collect());
            let right = sym_diff(set.iter().map(|x| d.mul(x, &g).unwrap()).collect());
            (g, left as f64 / set.len() as f64, right as f64 / set.len() as f64)
        })
        .collect()
}

fn c10_folner() -> Outcome {
    let mut mismatches = 0;
    let mut checked = 0;
    for d in [GroupDescriptor::integers(), GroupDescriptor::lattice(2), GroupDescriptor::heisenberg()] {
        let seq = FolnerSequence::boxes(d)?;
        for n in 1..=20usize {
            for (g, left, right) in brute_defects(&d, n as i64) {
                mismatches += (seq.defect(n, &g, Side::Left)? != left) as usize;
                mismatches += (seq.defect(n, &g, Side::Right)? != right) as usize;
                checked += 2;
            }
        }
    }

    let tempered = z_boxes().tempered_check(100, 3.0).map_err(|e| e.error.to_string())?;
    let finite = tempered.ratios.iter().all(|r| r.is_finite() && *r >= 1.0 && *r <= 2.0);
    let steps: Vec<f64> = tempered.ratios.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let stable = steps.last().is_some_and(|s| *s < 1e-3) && steps.windows(2).all(|w| w[1] <= w[0]);

    let p = iid(1.5);
    let d = *p.descriptor();
    let psi = psi_phi(&p, &LinearCombination::single(z(0), 1.0))?;
    let mut shifts = vec![d.identity()];
    shifts.extend(d.generators());
    let mut gaps = Vec::new();
    for n in [10usize, 30, 100] {
        let rep = dye_douglass_bounds(&psi, &[FinSuppProb::uniform(z_boxes().set(n)?)?], &shifts, &d)?;
        gaps.push(rep.left_gap().max(rep.right_gap()));
    }
    let shrinking = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-3);
    Ok((
        mismatches == 0 && finite && stable && shrinking,
        format!(
            "{checked} defects vs brute force on ℤ, ℤ², H₃ (N ≤ 20): {mismatches} mismatches; ℤ tempered ratios in [1, 2], last step {:.1e}; Dye–Douglass gap at N = 10, 30, 100: {:.2e}, {:.2e}, {:.2e}",
            steps.last().copied().unwrap_or(f64::NAN),
            gaps[0],
            gaps[1],
            gaps[2]
        ),
    ))
}

fn c11_kvn() -> Outcome {
    let powers = |base: i64, sign: i64| -> Vec<GroupElement> {
        std::iter::successors(Some(1i64), |x| x.checked_mul(base)).take_while(|x| *x <= 1000).map(|x| z(sign * x)).collect()
    };
    let psis = [
        BoundedGroupFunction::indicator("powers of 4", powers(4, 1)),
        BoundedGroupFunction::indicator("negated powers of 5", powers(5, -1)),
    ];
    let set = kvn_density_set(&psis, &z_boxes(), 500)?;
    let density = *set.densities.last().ok_or("empty density trace")?;
    let bound = 1.0 / set.m_max as f64;
    Ok((
        density >= 0.99 && set.tail_max <= bound,
        format!("density at N=500 {density:.4} (≥ 0.99); max ψ on D beyond the first threshold {} ≤ 1/m_max = {bound:.2e}", set.tail_max),
    ))
}

const DETERMINISM: &str = r#"{
    "seed": 12,
    "group": "Z",
    "folner": {"n_max": 40},
    "system": "uniform_bernoulli",
    "alpha": 1.2,
    "f0": "coordinate_e",
    "combinations": {"e": {"support": [[0]], "coeffs": [1.0]}, "pair": {"support": [[0], [2]], "coeffs": [1.0, -0.5]}},
    "tests": [
        "ergodicity",
        {"test": "weak-mixing", "f1": "pair", "f2": "e"},
        {"test": "null-average", "samples": 2000},
        {"test": "positive-pointwise", "n_values": [10, 40], "samples": 200},
        {"test": "path-law", "radius": 2, "combs": ["e", "pair"], "paths": 1000, "series_length": 300},
        {"test": "dye-douglass", "n_values": [5, 20, 40]}
    ]
}"#;

fn files(dir: &Path) -> std::io::Result<BTreeMap<String, Vec<u8>>> {
    std::fs::read_dir(dir)?
        .map(|e| {
            let e = e?;
            Ok((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?))
        })
        .collect()
}

fn c12_determinism() -> Outcome {
    let s = parse_scenario(DETERMINISM).map_err(|e| e.to_string())?;
    let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
    let first = run_scenario(&s, &RunOptions::default());
    emit(&first, a.path())?;
    emit(&run_scenario(&s, &RunOptions::default()), b.path())?;
    let (fa, fb) = (files(a.path())?, files(b.path())?);
    let identical = fa == fb && first.completed() == s.tests.len();

    let mut runner = TestRunner::new_with_rng(Config { failure_persistence: None, ..Config::with_cases(100) }, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let round_trips = std::cell::Cell::new(0);
    let result = runner.run(&common::scenario(), |s| {
        let text = serialize_scenario(&s);
        let back = parse_scenario(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back, s);
        round_trips.set(round_trips.get() + 1);
        Ok(())
    });
    Ok((
        identical && result.is_ok() && round_trips.get() == 100,
        format!(
            "rerun of a {}-test scenario: {} files {}; {} randomized scenarios round-trip{}",
            s.tests.len(),
            fa.len(),
            if identical { "byte-identical" } else { "differ" },
            round_trips.get(),
            result.err().map_or(String::new(), |e| format!(" (failure: {e})"))
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("characteristic functional", c1_characteristic_functional),
        ("Koopman isometry", c2_isometry),
        ("cocycle chain rule", c3_chain_rule),
        ("ergodicity discrimination", c4_ergodicity),
        ("weak mixing discrimination", c5_weak_mixing),
        ("Gross strong-mixing test", c6_gross),
        ("null/positive discrimination", c7_null_positive),
        ("positive-branch pointwise averages", c8_pointwise),
        ("positive definiteness of ψ_φ", c9_gram),
        ("Følner machinery", c10_folner),
        ("Koopman–von Neumann extraction", c11_kvn),
        ("determinism and round-trip", c12_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let k = i + 1;
        if only.is_some_and(|o| o != k) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        failed += !pass as usize;
        println!(
            "criterion {k:2} {} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria fail");
        ExitCode::FAILURE
    }
}
