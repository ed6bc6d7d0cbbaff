//! Scenario generators shared by the round-trip test and the acceptance suite.

use std::collections::BTreeMap;

use amenable_sas::diagnostics::{CylinderEvent, TailGrid};
use amenable_sas::groups::{FolnerScheme, GroupDescriptor, GroupElement};
use amenable_sas::measure::{BernoulliParam, CylinderFunction, PsiProfile};
use amenable_sas::stable::LinearCombination;
use amenable_sas::systems::{FiniteAction, GroupFunction, SignCocycle, StateFunction};
use proptest::prelude::*;
use sas_cli::scenario::{EvalSpec, FolnerSpec, Scenario, SystemKindSpec, SystemSpec, TestSpec, SCHEMA_VERSION};

fn groups() -> impl Strategy<Value = GroupDescriptor> {
    prop::sample::select(vec![
        GroupDescriptor::integers(),
        GroupDescriptor::lattice(2),
        GroupDescriptor::lattice(3),
        GroupDescriptor::heisenberg(),
    ])
}

fn element(d: GroupDescriptor) -> impl Strategy<Value = GroupElement> {
    prop::collection::vec(-4i64..=4, d.dim()).prop_map(GroupElement::from)
}

fn elements(d: GroupDescriptor, n: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<GroupElement>> {
    prop::collection::btree_set(element(d), n).prop_map(|s| s.into_iter().collect())
}

/// `F_k = {(j, 0, …) : |j| ≤ k}`.
fn user_windows(d: GroupDescriptor, count: usize) -> Vec<Vec<GroupElement>> {
    (1..=count as i64)
        .map(|k| {
            (-k..=k)
                .map(|j| {
                    let mut c = vec![0; d.dim()];
                    c[0] = j;
                    GroupElement::from(c)
                })
                .collect()
        })
        .collect()
}

fn folner(d: GroupDescriptor) -> impl Strategy<Value = FolnerSpec> {
    let boxed = if d == GroupDescriptor::heisenberg() { FolnerScheme::HeisenbergBox } else { FolnerScheme::Box };
    prop_oneof![
        (1usize..=40, prop::option::of(1_000u64..10_000_000))
            .prop_map(move |(n_max, budget)| FolnerSpec { scheme: boxed.clone(), n_max, budget }),
        (1usize..=6).prop_map(move |n| FolnerSpec {
            scheme: FolnerScheme::UserWindow { windows: user_windows(d, n) },
            n_max: n,
            budget: None,
        }),
    ]
}

fn bernoulli_param(d: GroupDescriptor) -> impl Strategy<Value = BernoulliParam> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|p0| BernoulliParam::Constant { p0 }),
        (prop::collection::btree_map(element(d), 0.1f64..0.9, 0..4), 0.2f64..0.8)
            .prop_map(|(e, default)| BernoulliParam::Table { entries: e.into_iter().collect(), default }),
        (0.01f64..0.3, 1.0f64..3.0, 1.1f64..3.0).prop_map(|(amplitude, offset, exponent)| {
            BernoulliParam::PowerDecay { amplitude, offset, exponent, cap: None }
        }),
    ]
}

/// A system together with a state function it accepts.
fn system_and_f0(d: GroupDescriptor) -> impl Strategy<Value = (SystemSpec, StateFunction)> {
    let plain = |kind| SystemSpec { kind, sign: SignCocycle::Trivial, truncation_radius: None };
    let counting = prop::collection::btree_map(element(d), -2.0f64..2.0, 1..4).prop_map(move |m| {
        let f = GroupFunction::new(m.into_iter().collect()).unwrap();
        (plain(SystemKindSpec::CountingTranslation), StateFunction::group(f))
    });
    let cylinder = || {
        (elements(d, 1..=2), prop::collection::vec(-2.0f64..2.0, 4)).prop_map(|(w, t)| {
            let n = 1usize << w.len();
            CylinderFunction::new(w, t[..n].to_vec()).unwrap()
        })
    };
    let bernoulli = (bernoulli_param(d), cylinder(), prop::option::of(4usize..64)).prop_map(move |(measure, f, r)| {
        let spec = SystemSpec { kind: SystemKindSpec::BernoulliShift { measure }, sign: SignCocycle::Trivial, truncation_radius: r };
        (spec, StateFunction::cylinder(f))
    });
    let psi = (cylinder(), 0.2f64..0.9).prop_map(move |(f, exponent)| {
        let profile = PsiProfile::PowerDecay { amplitude: 1.0 / 3.0, offset: 1.0, exponent };
        (plain(SystemKindSpec::PsiBernoulli { profile }), StateFunction::cylinder(f))
    });
    let lattice = d != GroupDescriptor::heisenberg();
    let finite = (2usize..6, prop::bool::ANY, prop::collection::vec(-3i64..3, d.dim()), prop::collection::vec(-2.0f64..2.0, 6))
        .prop_map(move |(n, rotate, coefficients, values)| {
            let action = if rotate && lattice { FiniteAction::Rotation { coefficients } } else { FiniteAction::Trivial };
            let kind = SystemKindSpec::FiniteInvariant { weights: vec![1.0 / n as f64; n], action };
            (plain(kind), StateFunction::atoms(values[..n].to_vec()))
        });
    let signed = (prop::collection::vec(0i64..2, d.dim()), prop::collection::btree_map(element(d), -2.0f64..2.0, 1..3))
        .prop_map(move |(parities, m)| {
            let f = GroupFunction::new(m.into_iter().collect()).unwrap();
            let spec = SystemSpec {
                kind: SystemKindSpec::CountingTranslation,
                sign: SignCocycle::Character { parities },
                truncation_radius: None,
            };
            (spec, StateFunction::group(f))
        });
    if lattice {
        prop_oneof![counting, bernoulli, psi, finite, signed].boxed()
    } else {
        prop_oneof![counting, bernoulli, psi, finite].boxed()
    }
}

fn combination(d: GroupDescriptor) -> impl Strategy<Value = LinearCombination> {
    prop::collection::vec((element(d), -2.0f64..2.0), 1..4).prop_map(|t| LinearCombination::from_terms(t).unwrap())
}

fn test_spec(d: GroupDescriptor, names: Vec<String>, n_max: usize) -> impl Strategy<Value = TestSpec> {
    let name = prop::sample::select(names);
    let n_opt = prop::option::of(1..=n_max);
    let tol = 0.0f64..0.1;
    let seed = prop::option::of(any::<u64>());
    let increasing = prop::collection::btree_set(1..=n_max, 0..3).prop_map(|s| s.into_iter().collect::<Vec<_>>());
    prop_oneof![
        (name.clone(), tol.clone(), n_opt.clone())
            .prop_map(|(comb, tolerance, n_max)| TestSpec::Ergodicity { comb, tolerance, n_max }),
        (name.clone(), name.clone(), tol.clone(), n_opt.clone(), prop::bool::ANY).prop_map(|(f1, f2, tolerance, n_max, empty)| {
            let grid = if empty { TailGrid::empty() } else { TailGrid::default() };
            TestSpec::WeakMixing { f1, f2, tolerance, n_max, grid }
        }),
        (0.1f64..1.0, 1.0f64..3.0, 0.1f64..1.0, 1usize..8, tol.clone())
            .prop_map(|(lo, hi, eps, g_max, tolerance)| TestSpec::StrongMixing { k: (lo, hi), eps, g_max, tolerance }),
        (0.1f64..2.0, prop::option::of(elements(d, 0..=2)), 2u64..5000, seed.clone(), tol.clone(), n_opt.clone()).prop_map(
            |(eta, event, samples, seed, tolerance, n_max)| {
                let event = event.map(|elements| CylinderEvent::Elements { elements });
                TestSpec::NullAverage { eta, event, samples, seed, tolerance, n_max }
            }
        ),
        (increasing.clone(), 2u64..5000, seed.clone(), 1.0f64..5.0)
            .prop_map(|(n_values, samples, seed, sigmas)| TestSpec::PositivePointwise { n_values, samples, seed, sigmas }),
        (name.clone(), prop::option::of(elements(d, 1..=3)), n_opt.clone())
            .prop_map(|(comb, shifts, n_max)| TestSpec::FolnerMean { comb, shifts, n_max }),
        (name.clone(), increasing, prop::option::of(elements(d, 1..=3)))
            .prop_map(|(comb, n_values, shifts)| TestSpec::DyeDouglass { comb, n_values, shifts }),
        (name.clone(), prop::collection::vec(0.1f64..4.0, 1..4), tol, n_opt.clone())
            .prop_map(|(comb, c_grid, tolerance, n_max)| TestSpec::PodgorskiWeron { comb, c_grid, tolerance, n_max }),
        (prop::collection::vec(name.clone(), 1..3), prop::collection::vec(elements(d, 1..=3), 0..2), 0.5f64..1.0, n_opt)
            .prop_map(|(combs, indicators, min_density, n_max)| TestSpec::Kvn { combs, indicators, min_density, n_max }),
        (1..=n_max, 1usize..2000, 2usize..5000, prop::collection::vec(name, 1..3), 1.0f64..5.0, seed).prop_map(
            |(radius, series_length, paths, combs, sigmas, seed)| TestSpec::PathLaw {
                radius,
                series_length,
                paths,
                combs,
                sigmas,
                seed
            }
        ),
    ]
}

/// Valid scenarios over every group, system kind and test.
pub fn scenario() -> impl Strategy<Value = Scenario> {
    groups().prop_flat_map(|d| {
        (folner(d), system_and_f0(d), prop::collection::btree_map("[a-z]{1,6}", combination(d), 1..4)).prop_flat_map(
            move |(folner, (system, f0), combinations)| {
                let names: Vec<String> = combinations.keys().cloned().collect();
                let tests = prop::collection::vec(test_spec(d, names, folner.n_max), 0..5);
                let eval = (prop::option::of(100u64..100_000), prop::option::of(any::<u64>()), 4usize..23)
                    .prop_map(|(mc_samples, seed, exact_cap)| EvalSpec { exact_cap, mc_samples, seed });
                (
                    Just(folner),
                    Just(system),
                    Just(f0),
                    Just(combinations),
                    tests,
                    eval,
                    prop::option::of(any::<u64>()),
                    0.05f64..1.99,
                )
                    .prop_map(move |(folner, system, f0, combinations, tests, eval, seed, alpha)| Scenario {
                        schema_version: SCHEMA_VERSION,
                        seed,
                        group: d,
                        folner,
                        system,
                        alpha,
                        f0,
                        eval,
                        combinations: combinations.into_iter().collect::<BTreeMap<_, _>>(),
                        tests,
                    })
            },
        )
    })
}
