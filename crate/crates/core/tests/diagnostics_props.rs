use amenable_sas::diagnostics::{
    dye_douglass_bounds, ergodicity_scan, folner_mean, gross_tail_scan, kvn_density_set, psi_phi, weak_mixing_scan,
    BoundedGroupFunction, FinSuppProb, TailGrid, Verdict,
};
use amenable_sas::groups::{FolnerSequence, GroupDescriptor, GroupElement};
use amenable_sas::measure::{BernoulliParam, CylinderFunction, ProductBernoulliMeasure};
use amenable_sas::stable::{LinearCombination, SpectralProcess};
use amenable_sas::systems::{GroupFunction, NonSingularSystem, StateFunction};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn z(n: i64) -> GroupElement {
    GroupElement::from(n)
}

fn bernoulli_process(alpha: f64) -> SpectralProcess {
    let m = ProductBernoulliMeasure::new(
        GroupDescriptor::integers(),
        BernoulliParam::Table { entries: vec![(z(0), 0.6), (z(1), 0.3)], default: 0.5 },
    )
    .unwrap();
    SpectralProcess::new(alpha, StateFunction::cylinder(CylinderFunction::coordinate(z(0))), NonSingularSystem::bernoulli(m))
        .unwrap()
}

fn heis_counting(alpha: f64) -> SpectralProcess {
    let d = GroupDescriptor::heisenberg();
    let f0 = GroupFunction::new(vec![(d.identity(), 1.0), (GroupElement::from(vec![0, 1, 0]), -0.7)]).unwrap();
    SpectralProcess::new(alpha, StateFunction::group(f0), NonSingularSystem::counting(d)).unwrap()
}

fn iid(alpha: f64) -> SpectralProcess {
    SpectralProcess::new(
        alpha,
        StateFunction::group(GroupFunction::delta(z(0))),
        NonSingularSystem::counting(GroupDescriptor::integers()),
    )
    .unwrap()
}

fn heis() -> impl Strategy<Value = GroupElement> {
    (-3i64..3, -3i64..3, -5i64..5).prop_map(|(a, b, c)| GroupElement::from(vec![a, b, c]))
}

fn comb_on_z() -> impl Strategy<Value = LinearCombination> {
    prop::collection::btree_map(-3i64..3, -1.5f64..1.5, 1..=3)
        .prop_map(|m| LinearCombination::from_terms(m.into_iter().map(|(g, c)| (z(g), c)).collect()).unwrap())
}

fn comb_on_heis() -> impl Strategy<Value = LinearCombination> {
    prop::collection::vec((heis(), -1.5f64..1.5), 1..=3).prop_map(|t| LinearCombination::from_terms(t).unwrap())
}

fn min_eigenvalue(d: &GroupDescriptor, psi: &BoundedGroupFunction, points: &[GroupElement]) -> f64 {
    let n = points.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let x = d.mul(&d.inv(&points[j]).unwrap(), &points[i]).unwrap();
        psi.eval(&x).unwrap()
    });
    m.symmetric_eigen().eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn psi_gram_matrices_are_positive_semidefinite_on_z(
        comb in comb_on_z(),
        points in prop::collection::btree_set(-8i64..8, 1..=5),
        alpha in prop::sample::select(vec![0.8, 1.2, 1.5]),
    ) {
        let p = bernoulli_process(alpha);
        let psi = psi_phi(&p, &comb).unwrap();
        let points: Vec<GroupElement> = points.into_iter().map(z).collect();
        let lo = min_eigenvalue(p.descriptor(), &psi, &points);
        prop_assert!(lo >= -1e-8, "{lo}");
    }

    #[test]
    fn psi_gram_matrices_are_positive_semidefinite_on_heisenberg(
        comb in comb_on_heis(),
        points in prop::collection::vec(heis(), 1..=5),
        alpha in prop::sample::select(vec![0.8, 1.2, 1.5]),
    ) {
        let p = heis_counting(alpha);
        let psi = psi_phi(&p, &comb).unwrap();
        let lo = min_eigenvalue(p.descriptor(), &psi, &points);
        prop_assert!(lo >= -1e-8, "{lo}");
    }

    #[test]
    fn psi_is_symmetric_under_inversion(comb in comb_on_heis(), g in heis()) {
        let p = heis_counting(1.3);
        let d = *p.descriptor();
        let psi = psi_phi(&p, &comb).unwrap();
        let (a, b) = (psi.eval(&g).unwrap(), psi.eval(&d.inv(&g).unwrap()).unwrap());
        prop_assert!((a - b).abs() <= 1e-9);
        prop_assert_eq!(psi.eval(&d.identity()).unwrap(), 1.0);
    }

    #[test]
    fn bernoulli_psi_is_symmetric_under_inversion(comb in comb_on_z(), g in -10i64..10) {
        let p = bernoulli_process(0.9);
        let psi = psi_phi(&p, &comb).unwrap();
        prop_assert!((psi.eval(&z(g)).unwrap() - psi.eval(&z(-g)).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn ergodicity_trace_is_the_folner_mean_of_psi(comb in comb_on_heis()) {
        let p = heis_counting(1.1);
        let seq = FolnerSequence::boxes(*p.descriptor()).unwrap();
        let scan = ergodicity_scan(&p, &comb, &seq, 3, 1e-2).unwrap();
        let mean = folner_mean(&psi_phi(&p, &comb).unwrap(), &seq, 3, &[]).unwrap();
        let trace: Vec<f64> = scan.trace.iter().map(|t| t.value).collect();
        prop_assert_eq!(trace, mean.means);
    }

    #[test]
    fn sandwich_brackets_the_plain_average(
        values in prop::collection::vec(0.0f64..1.0, 41),
        shifts in prop::collection::btree_set(-5i64..5, 0..4),
    ) {
        let table: Vec<(i64, f64)> = (-20..=20).zip(values).collect();
        let lookup = table.clone();
        let psi = BoundedGroupFunction::new("table", 1.0, move |g| {
            let x = g.coords()[0];
            Ok(lookup.iter().find(|(k, _)| *k == x).map_or(0.0, |(_, v)| *v))
        });
        let d = GroupDescriptor::integers();
        let mut shifts: Vec<GroupElement> = shifts.into_iter().map(z).collect();
        shifts.push(d.identity());
        let p_list: Vec<FinSuppProb> =
            [2i64, 5, 9].iter().map(|&n| FinSuppProb::uniform((-n..=n).map(z).collect()).unwrap()).collect();
        let report = dye_douglass_bounds(&psi, &p_list, &shifts, &d).unwrap();
        for (row, p) in report.rows.iter().zip(&p_list) {
            let mean: f64 = p.support().iter().zip(p.weights()).map(|(g, w)| w * psi.eval(g).unwrap()).sum();
            prop_assert!(row.left_min <= mean + 1e-15 && mean <= row.left_max + 1e-15);
            prop_assert!(row.right_min <= mean + 1e-15 && mean <= row.right_max + 1e-15);
        }
    }
}

#[test]
fn density_set_avoids_sparse_peaks() {
    let powers = |base: i64, sign: i64| -> Vec<GroupElement> {
        std::iter::successors(Some(1i64), |x| x.checked_mul(base)).take_while(|x| *x <= 1000).map(|x| z(sign * x)).collect()
    };
    let psis = [
        BoundedGroupFunction::indicator("powers of 4", powers(4, 1)),
        BoundedGroupFunction::indicator("negated powers of 5", powers(5, -1)),
    ];
    let seq = FolnerSequence::boxes(GroupDescriptor::integers()).unwrap();
    let set = kvn_density_set(&psis, &seq, 500).unwrap();
    let last = *set.densities.last().unwrap();
    assert!(last > 0.95, "{last}");
    assert!(set.tail_max <= 1.0 / set.m_max as f64);
    for k in 0..psis.len() {
        let full = *set.full_means[k].last().unwrap();
        let restricted = *set.restricted_means[k].last().unwrap();
        assert!(restricted <= full, "ψ_{k}: {restricted} > {full}");
    }
    for x in [4i64, 16, 64, 256, -5, -25, -125] {
        let far_enough = set.thresholds.first().is_some_and(|(_, t)| x.unsigned_abs() as usize > *t);
        if far_enough {
            assert!(!set.contains(&z(x)), "{x} is a peak");
        }
    }
}

#[test]
fn iid_strong_mixing_implies_weak_mixing() {
    let p = iid(1.3);
    let strong = gross_tail_scan(&p, (0.5, 2.0), 0.5, 6, 1e-6).unwrap();
    assert_eq!(strong.verdict, Verdict::ConsistentWithStrongMixing);
    let seq = FolnerSequence::boxes(*p.descriptor()).unwrap();
    let e = LinearCombination::single(z(0), 1.0);
    let n_max = 30;
    // Only g = e contributes, and the summand is at most 1, so the average is at most 1/|F_N|.
    let tolerance = 1.0 / seq.size(n_max).unwrap() as f64;
    let weak = weak_mixing_scan(&p, &e, &e, &seq, n_max, tolerance, &TailGrid::empty()).unwrap();
    assert_eq!(weak.verdict, Verdict::WeakMixingConsistent);
}
