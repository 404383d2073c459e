use wellapprox::approx::{DenominatorSet, ProblemInstance};
use wellapprox::measure::{build_measure, BuildConfig};
use wellapprox::slab::{lattice_lemma_check, LatticeCheckConfig, LatticeMeasure, SlabFamily, StageMeasure};
use wellapprox::Error;

fn one_stage() -> wellapprox::measure::MeasureStage {
    let inst = ProblemInstance::power_law(1, 1, 1.0, vec![0.0]).unwrap();
    build_measure(&inst, 0.45, BuildConfig { k_max: 1, ..BuildConfig::default() }).unwrap()
}

#[test]
fn first_stage_satisfies_the_sandwich() {
    let stage = one_stage();
    let mu = StageMeasure::new(&stage).unwrap();
    let zero = mu.transform(&[0]).unwrap();
    assert!((zero.re - 1.0).abs() < 1e-9 && zero.im.abs() < 1e-9);
    for (delta, q) in [(0.1, 1i64), (0.2, 3), (0.05, 5)] {
        let fam = SlabFamily::new(delta, &[q], vec![0.0]).unwrap();
        let cfg = LatticeCheckConfig { samples: 200_000, seed: 5, ..Default::default() };
        let rep = lattice_lemma_check(&mu, &fam, &cfg).unwrap();
        assert!(rep.sum_upper_cutoff.is_finite() && rep.sum_upper_cutoff > 0.0, "{rep:?}");
        assert!(rep.std_err > 0.0 && rep.ci_lo <= rep.estimate && rep.estimate <= rep.ci_hi);
        assert!(rep.within_band, "{rep:?}");
    }
}

#[test]
fn slab_width_at_one_half_is_rejected() {
    assert!(matches!(SlabFamily::new(0.5, &[1], vec![0.0]), Err(Error::Argument(_))));
}

#[test]
fn scale_search_without_admissible_scales_stops_early() {
    let members = [vec![1i64], vec![2]].into_iter().map(Into::into).collect();
    let inst = ProblemInstance::new(
        1,
        1,
        DenominatorSet::Members { n: 1, members },
        wellapprox::approx::ApproxFunction::power(1, 1.0),
        vec![0.0],
    )
    .unwrap();
    let cfg = BuildConfig { k_max: 1, k_cap: 10, ..BuildConfig::default() };
    let partial = build_measure(&inst, 0.45, cfg).unwrap_err();
    assert!(matches!(partial.error, Error::NotFound(_) | Error::DegenerateScale { .. }), "{}", partial.error);
}
