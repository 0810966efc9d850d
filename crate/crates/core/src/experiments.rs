//! Replica fan-out and the canned checks built on top of the simulators.
//!
//! Replica `i` of every experiment draws from
//! `SeedSplitter::stream(purpose, i)`, so results do not depend on how the
//! replicas are scheduled over threads.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::branching::{
    ancestral_path, cluster_from_coupling, germ_statistics, run_for_time, run_from, BranchingOutcome,
    BranchingParams, BranchingState, Family, GermSample, Mode, StopRule,
};
use crate::error::{param, Result};
use crate::limit::{recenter, yule_cf, yule_cf_scalefree, LimitLaw};
use crate::quad::{integrate_complex, QuadOptions};
use crate::rng::{purpose, SeedSplitter};
use crate::stats::{empirical_cf, ks_two_sample, summarize, CfEstimate, KsReport, SampleSet, SampleSummary, Summary, DEFAULT_QUANTILES};
use crate::tree::{percolate, PercolationResult, TreeModel};

/// Runs `f(0), …, f(reps − 1)` on the current rayon pool, in index order.
pub fn replicate<T, F>(reps: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..reps).into_par_iter().map(f).collect()
}

/// As [`replicate`] for fallible replicas; the first error by index wins.
pub fn try_replicate<T, F>(reps: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    replicate(reps, f).into_iter().collect()
}

pub fn tree_samples(model: TreeModel, n: u64, p: f64, reps: u64, seed: u64, want_largest: bool) -> Result<Vec<PercolationResult>> {
    let split = SeedSplitter::new(seed);
    try_replicate(reps, |i| percolate(model, n, p, &mut split.stream(purpose::TREE, i), want_largest))
}

/// Branching runs to the tree-size time, each paired with its coupled cluster.
/// Scale-free runs start with the seed edge percolated, matching the trees.
pub fn coupled_samples(params: &BranchingParams, reps: u64, seed: u64) -> Result<Vec<(BranchingOutcome, u64)>> {
    let split = SeedSplitter::new(seed);
    let stop = StopRule::at_tree_size(params);
    try_replicate(reps, |i| {
        let mut rng = split.stream(purpose::BRANCHING, i);
        let start = BranchingState::initial_with_seed_edge(params, Mode::Jump, &mut rng);
        let outcome = run_from(start, params, stop, &mut rng)?;
        let cluster = cluster_from_coupling(&outcome, params)?;
        Ok((outcome, cluster))
    })
}

pub fn germ_samples(params: &BranchingParams, reps: u64, seed: u64) -> Result<Vec<GermSample>> {
    let split = SeedSplitter::new(seed);
    try_replicate(reps, |i| germ_statistics(params, &mut split.stream(purpose::GERM, i)))
}

pub fn tree_model(family: &Family) -> TreeModel {
    match *family {
        Family::BAry { b } => TreeModel::BAry { b },
        Family::ScaleFree { a } => TreeModel::ScaleFree { a },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupleReport {
    pub ks: KsReport,
    pub threshold_1e3: f64,
    pub direct: SampleSummary,
    pub coupled: SampleSummary,
}

/// Root-cluster sizes from direct percolation and from the branching coupling.
pub struct CoupleSamples {
    pub direct: Vec<PercolationResult>,
    pub coupled: Vec<(BranchingOutcome, u64)>,
}

impl CoupleSamples {
    pub fn run(params: &BranchingParams, reps: u64, seed: u64) -> Result<Self> {
        let direct = tree_samples(tree_model(&params.family), params.n, params.p, reps, seed, false)?;
        let coupled = coupled_samples(params, reps, seed)?;
        Ok(Self { direct, coupled })
    }

    pub fn report(&self) -> Result<CoupleReport> {
        let x: SampleSet = self.direct.iter().map(|r| r.root_cluster as f64).collect();
        let y: SampleSet = self.coupled.iter().map(|&(_, c)| c as f64).collect();
        let ks = ks_two_sample(&x, &y)?;
        Ok(CoupleReport {
            ks,
            threshold_1e3: ks.threshold_at(1e-3),
            direct: summarize(&x, &DEFAULT_QUANTILES)?,
            coupled: summarize(&y, &DEFAULT_QUANTILES)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfComparison {
    pub theta: f64,
    pub empirical: CfEstimate,
    pub reference: CfEstimate,
    /// Largest componentwise deviation in combined standard errors.
    pub z: f64,
}

fn yule_params(family: Family, p: f64) -> Result<BranchingParams> {
    BranchingParams::with_p(family, 1, p)
}

/// Continuous-time Yule samples `Z(t)` (no mutations).
pub fn yule_samples(family: Family, t: f64, reps: u64, seed: u64) -> Result<Vec<f64>> {
    let params = yule_params(family, 1.0)?;
    let split = SeedSplitter::new(seed);
    Ok(replicate(reps, |i| {
        let start = BranchingState::initial(&family, Mode::ContinuousTime);
        run_for_time(start, &params, t, &mut split.stream(purpose::YULE, i)).total_value(&family)
    }))
}

/// CF of the mutant-progeny Yule process for `family` at time `t`.
pub fn family_yule_cf(family: &Family, theta: f64, t: f64) -> Complex64 {
    match *family {
        Family::BAry { b } => yule_cf(theta, t, b),
        Family::ScaleFree { a } => yule_cf_scalefree(theta, t, a),
    }
}

/// Empirical CF of simulated `Z(t)` against the closed form. A scale-free
/// system starts from `2 + 2a`, two independent copies of the mutant start
/// `1 + a`, so its reference CF is squared.
pub fn yule_cf_check(family: Family, t: f64, thetas: &[f64], reps: u64, seed: u64) -> Result<Vec<CfComparison>> {
    if !(t >= 0.0) {
        return param(format!("time t = {t} must be nonnegative"));
    }
    let samples = SampleSet::new(yule_samples(family, t, reps, seed)?)?;
    Ok(empirical_cf(&samples, thetas)?
        .into_iter()
        .map(|e| {
            let exact = match family {
                Family::BAry { .. } => family_yule_cf(&family, e.theta, t),
                Family::ScaleFree { .. } => family_yule_cf(&family, e.theta, t).powi(2),
            };
            let reference = CfEstimate { theta: e.theta, value: exact, se_re: 0.0, se_im: 0.0 };
            CfComparison { theta: e.theta, empirical: e, reference, z: e.z_score_exact(exact) }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// Sample mean and standard error of `e^{−jump·t} Z(t)`.
    pub total_mean: f64,
    pub total_se: f64,
    /// Sample mean and standard error of `e^{−r t} Z₀(t)` with `r` the ancestral growth rate.
    pub ancestral_mean: f64,
    pub ancestral_se: f64,
    /// Common expectation `Z(0)`.
    pub expected: f64,
}

/// Both normalized populations have expectation equal to the start mass.
pub fn martingale_check(params: &BranchingParams, t: f64, reps: u64, seed: u64) -> Result<MartingaleReport> {
    let family = params.family;
    let a = family.a_value();
    let jump = family.jump().value(a);
    let ancestral_rate = match family {
        Family::BAry { b } => f64::from(b) * params.p - 1.0,
        Family::ScaleFree { a } => 1.0 + params.p * (1.0 + a),
    };
    let split = SeedSplitter::new(seed);
    let finals = replicate(reps, |i| {
        run_for_time(BranchingState::initial(&family, Mode::ContinuousTime), params, t, &mut split.stream(purpose::YULE, i))
    });
    let total: Summary = finals.iter().map(|s| (-jump * t).exp() * s.total_value(&family)).collect();
    let anc: Summary = finals.iter().map(|s| (-ancestral_rate * t).exp() * s.z0_value(&family)).collect();
    Ok(MartingaleReport {
        total_mean: total.mean,
        total_se: total.standard_error(),
        ancestral_mean: anc.mean,
        ancestral_se: anc.standard_error(),
        expected: family.start_mass().value(a),
    })
}

/// `G(s) = ∫₀ˢ (φ_r(θ) − 1) dr` on a uniform grid, evaluated by cubic
/// Hermite interpolation using `G' = φ − 1`.
struct CumulativeCf<'a> {
    family: &'a Family,
    theta: f64,
    step: f64,
    values: Vec<Complex64>,
}

impl<'a> CumulativeCf<'a> {
    fn new(family: &'a Family, theta: f64, t: f64, cells: usize) -> Result<Self> {
        let step = t / cells as f64;
        let mut values = Vec::with_capacity(cells + 1);
        values.push(Complex64::new(0.0, 0.0));
        let mut acc = Complex64::new(0.0, 0.0);
        let opts = QuadOptions::new(1e-15, 1e-13);
        for k in 0..cells {
            let (lo, hi) = (k as f64 * step, (k + 1) as f64 * step);
            acc += integrate_complex(|r| family_yule_cf(family, theta, r) - 1.0, lo, hi, opts)?.value;
            values.push(acc);
        }
        Ok(Self { family, theta, step, values })
    }

    fn derivative(&self, s: f64) -> Complex64 {
        family_yule_cf(self.family, self.theta, s) - 1.0
    }

    fn at(&self, s: f64) -> Complex64 {
        let cells = self.values.len() - 1;
        let k = ((s / self.step).floor() as usize).min(cells - 1);
        let (s0, s1) = (k as f64 * self.step, (k + 1) as f64 * self.step);
        let h = self.step;
        let u = ((s - s0) / h).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = (
            2.0 * u.powi(3) - 3.0 * u * u + 1.0,
            u.powi(3) - 2.0 * u * u + u,
            -2.0 * u.powi(3) + 3.0 * u * u,
            u.powi(3) - u * u,
        );
        self.values[k] * h00 + self.derivative(s0) * (h10 * h) + self.values[k + 1] * h01 + self.derivative(s1) * (h11 * h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilteredPoissonRow {
    pub theta: f64,
    /// (A) Empirical CF of the simulated mutant mass.
    pub direct: CfEstimate,
    /// (B) Average over ancestral paths of `exp((1−p)∫₀ᵗ Z₀(t−s)(φ_s − 1) ds)`.
    pub conditional: CfEstimate,
    /// Deviation of (B) from (A) in combined standard errors.
    pub z: f64,
    /// (C) Average over the same paths of `∏ φ_{t−a_i}` over their mutation times `a_i`.
    pub path_product: CfEstimate,
    /// Deviation of (C) from (A) in combined standard errors.
    pub z_path_product: f64,
    /// Mean of `∏ φ_{t−a_i} · exp(−(1−p)∫₀ᵗ Z₀(t−s)(φ_s − 1) ds)`, which is 1.
    pub compensated: CfEstimate,
}

/// Estimators of `E[e^{iθ Z_m(t)}]` from independent simulations: the
/// empirical CF of simulated mutant mass (A) and the conditional-Poisson
/// average over ancestral-only paths (B). Mutation events are the ancestral
/// path's own marked jumps, so the exact conditional CF given a path is the
/// product (C); it is reported alongside.
pub fn filtered_poisson_check(params: &BranchingParams, t: f64, thetas: &[f64], reps: u64, seed: u64) -> Result<Vec<FilteredPoissonRow>> {
    if !(t > 0.0) {
        return param(format!("time t = {t} must be positive"));
    }
    let family = params.family;
    let split = SeedSplitter::new(seed);
    let mutant: SampleSet = replicate(reps, |i| {
        let start = BranchingState::initial(&family, Mode::ContinuousTime);
        run_for_time(start, params, t, &mut split.stream(purpose::BRANCHING, i)).z_mut_value(&family)
    })
    .into_iter()
    .collect();
    let paths = replicate(reps, |i| ancestral_path(params, t, &mut split.stream(purpose::ANCESTRAL_PATH, i)));
    let direct = empirical_cf(&mutant, thetas)?;
    let rate = 1.0 - params.p;

    thetas
        .iter()
        .zip(direct)
        .map(|(&theta, direct)| {
            let g = CumulativeCf::new(&family, theta, t, 2048)?;
            let per_path: Vec<(Complex64, Complex64)> = paths
                .iter()
                .map(|path| {
                    // Piece k holds z on [u_k, u_{k+1}) and contributes
                    // z·(G(t − u_k) − G(t − u_{k+1})).
                    let mut exponent = Complex64::new(0.0, 0.0);
                    let mut product = Complex64::new(1.0, 0.0);
                    for (k, pt) in path.iter().enumerate() {
                        let next = path.get(k + 1).map_or(t, |q| q.time);
                        exponent += pt.z0 * (g.at(t - pt.time) - g.at(t - next));
                        if pt.mutation {
                            product *= family_yule_cf(&family, theta, t - pt.time);
                        }
                    }
                    (rate * exponent, product)
                })
                .collect();
            let conditional = CfEstimate::from_complex(theta, per_path.iter().map(|&(e, _)| e.exp()))?;
            let path_product = CfEstimate::from_complex(theta, per_path.iter().map(|&(_, p)| p))?;
            let compensated = CfEstimate::from_complex(theta, per_path.iter().map(|&(e, p)| p * (-e).exp()))?;
            Ok(FilteredPoissonRow {
                theta,
                direct,
                conditional,
                z: direct.z_score_against(&conditional),
                path_product,
                z_path_product: direct.z_score_against(&path_product),
                compensated,
            })
        })
        .collect()
}

/// `sup_θ |ψ̂(θ) − ψ(θ)|` between the empirical CF of recentered samples and
/// the limit CF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfDiscrepancy {
    pub n: u64,
    pub replicas: u64,
    pub sup: f64,
    pub per_theta: Vec<(f64, f64)>,
    pub median: f64,
}

pub fn cf_discrepancy(recentered: &SampleSet, law: &LimitLaw, thetas: &[f64], n: u64) -> Result<CfDiscrepancy> {
    let est = empirical_cf(recentered, thetas)?;
    let per_theta: Vec<(f64, f64)> = est.iter().map(|e| (e.theta, (e.value - law.cf(e.theta)).norm())).collect();
    let sup = per_theta.iter().map(|&(_, d)| d).fold(0.0, f64::max);
    Ok(CfDiscrepancy {
        n,
        replicas: recentered.len() as u64,
        sup,
        per_theta,
        median: summarize(recentered, &[])?.median,
    })
}

/// Recentered root-cluster ratios `C₀/n` obtained through the coupling.
pub fn recentered_root_clusters(params: &BranchingParams, law: &LimitLaw, reps: u64, seed: u64) -> Result<SampleSet> {
    let n = params.n;
    let samples = coupled_samples(params, reps, seed)?;
    let values = samples
        .iter()
        .map(|&(_, c)| recenter(c as f64 / n as f64, n, &law.spec))
        .collect::<Result<Vec<_>>>()?;
    SampleSet::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn replicate_preserves_order_across_pools() {
        let f = |i: u64| SeedSplitter::new(3).stream(purpose::TREE, i).next_u64();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| replicate(200, f));
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| replicate(200, f));
        assert_eq!(one, four);
    }

    #[test]
    fn cumulative_table_matches_quadrature() {
        let family = Family::BAry { b: 2 };
        let g = CumulativeCf::new(&family, 0.5, 1.0, 64).unwrap();
        for s in [0.0, 0.013, 0.5, 0.77, 1.0] {
            let exact = integrate_complex(|r| yule_cf(0.5, r, 2) - 1.0, 0.0, s, QuadOptions::new(1e-14, 1e-14)).unwrap().value;
            assert!((g.at(s) - exact).norm() < 1e-9, "s={s}");
        }
    }

    #[test]
    fn coupled_clusters_are_bounded() {
        for family in [Family::BAry { b: 3 }, Family::ScaleFree { a: 0.5 }] {
            let params = BranchingParams::new(family, 1.0, 50).unwrap();
            for (outcome, c) in coupled_samples(&params, 200, 11).unwrap() {
                assert!(c >= 1 && c <= 51);
                assert_eq!(outcome.derived_cluster, Some(c));
            }
        }
    }
}
