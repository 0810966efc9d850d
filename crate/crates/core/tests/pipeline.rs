use ldperc_core::branching::germ_statistics;
use ldperc_core::experiments::{
    coupled_samples, filtered_poisson_check, germ_samples, martingale_check, tree_samples, yule_cf_check, CoupleSamples,
};
use ldperc_core::limit::{ld_cdf, LimitLaw, LimitSpec};
use ldperc_core::rng::purpose;
use ldperc_core::stats::{ks_one_sample, SampleSet};
use ldperc_core::tree::p_of;
use ldperc_core::{BranchingParams, Family, SeedSplitter, TreeModel};

#[test]
fn coupling_matches_direct_percolation_for_ternary_trees() {
    let params = BranchingParams::new(Family::BAry { b: 3 }, 0.8, 200).unwrap();
    let report = CoupleSamples::run(&params, 20_000, 21).unwrap().report().unwrap();
    assert!(report.ks.statistic <= report.ks.threshold_at(1e-3), "{report:?}");
}

#[test]
fn coupling_matches_direct_percolation_for_scale_free_trees() {
    let params = BranchingParams::new(Family::ScaleFree { a: -0.4 }, 1.2, 150).unwrap();
    let report = CoupleSamples::run(&params, 20_000, 22).unwrap().report().unwrap();
    assert!(report.ks.statistic <= report.ks.threshold_at(1e-3), "{report:?}");
}

#[test]
fn scale_free_without_cuts_covers_the_tree() {
    let params = BranchingParams::with_p(Family::ScaleFree { a: 0.0 }, 40, 1.0).unwrap();
    for (outcome, cluster) in coupled_samples(&params, 20, 1).unwrap() {
        assert_eq!(cluster, 41);
        assert_eq!(outcome.final_state.mutations, 0);
    }
}

#[test]
fn germ_deltas_are_ordered() {
    let params = BranchingParams::new(Family::BAry { b: 2 }, 1.0, 1_000).unwrap();
    for g in germ_samples(&params, 500, 3).unwrap() {
        match g.delta0 {
            Some(d0) => assert!(g.delta <= d0),
            None => assert!(g.extinct),
        }
    }
    let pure = BranchingParams::with_p(Family::BAry { b: 2 }, 1_000, 1.0).unwrap();
    let g = germ_statistics(&pure, &mut SeedSplitter::new(1).stream(purpose::GERM, 0)).unwrap();
    assert_eq!((g.delta0, g.delta), (Some(0.0), 0.0));
}

#[test]
fn normalized_populations_are_martingales() {
    for family in [Family::BAry { b: 3 }, Family::ScaleFree { a: 1.0 }] {
        let params = BranchingParams::with_p(family, 1, 0.6).unwrap();
        let r = martingale_check(&params, 1.0, 100_000, 9).unwrap();
        assert!((r.total_mean - r.expected).abs() <= 5.0 * r.total_se, "{r:?}");
        assert!((r.ancestral_mean - r.expected).abs() <= 5.0 * r.ancestral_se, "{r:?}");
    }
}

#[test]
fn yule_cf_matches_simulation() {
    for family in [Family::BAry { b: 4 }, Family::ScaleFree { a: 0.5 }] {
        for row in yule_cf_check(family, 0.7, &[0.05, 0.3, 1.2], 50_000, 10).unwrap() {
            assert!(row.z <= 5.0, "{family:?}: {row:?}");
        }
    }
}

#[test]
fn mutant_cf_equals_product_over_mutation_times() {
    let params = BranchingParams::with_p(Family::BAry { b: 2 }, 1, 0.7).unwrap();
    for row in filtered_poisson_check(&params, 1.0, &[0.2, 0.5], 50_000, 11).unwrap() {
        assert!(row.z_path_product <= 5.0, "{row:?}");
        assert!(row.compensated.z_score_exact(num_complex::Complex64::new(1.0, 0.0)) <= 5.0, "{row:?}");
    }
}

#[test]
fn inverse_transform_sample_passes_one_sample_ks() {
    let law = LimitLaw::new(LimitSpec::urt(1.0).unwrap(), 1e-12).unwrap();
    let x: SampleSet = (0..400).map(|i| law.quantile((i as f64 + 0.5) / 400.0, 1e-9).unwrap()).collect();
    let r = ks_one_sample(&x, |v| law.cdf(v, 1e-9).unwrap()).unwrap();
    assert!(r.statistic <= 0.5 / 400.0 + 1e-6, "{r:?}");
    assert!((ld_cdf(0.0, 1e-9).unwrap() - law.cdf(-law.scale * law.shift, 1e-9).map(|f| 1.0 - f).unwrap()).abs() < 1e-8);
}

#[test]
fn root_fraction_approaches_its_limit() {
    let n = 200_000;
    let c = 0.7;
    let samples = tree_samples(TreeModel::BAry { b: 3 }, n, p_of(c, n).unwrap(), 200, 12, false).unwrap();
    let set: SampleSet = samples.iter().map(|r| r.root_cluster as f64 / n as f64).collect();
    let median = ldperc_core::stats::summarize(&set, &[]).unwrap().median;
    let center = LimitSpec::bary(3, c).unwrap().center();
    assert!((median - center).abs() < 0.1, "{median} vs {center}");
}
