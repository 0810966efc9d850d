use ldperc_core::branching::{run_until, GermSample};
use ldperc_core::experiments::{
    filtered_poisson_check, germ_samples, martingale_check, tree_samples, yule_cf_check, CoupleReport, CoupleSamples,
};
use ldperc_core::limit::{germ_recenter, kappa_alpha_prime, kappa_beta, recenter, LimitLaw, LimitSpec, SeriesResult};
use ldperc_core::rng::purpose;
use ldperc_core::stats::{summarize, SampleSet, SampleSummary, DEFAULT_QUANTILES};
use ldperc_core::{BranchingParams, Family, Mass, Mode, SeedSplitter, StopReason, StopRule, TreeModel};
use num_complex::Complex64;
use serde::Serialize;

use crate::args::*;
use crate::error::CliError;
use crate::output::{emit, float, ReplicaRow, Table};

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Percolate(a) => percolate(&a),
        Command::Branch(a) => branch(&a),
        Command::CoupleCheck(a) => couple_check(&a),
        Command::Germ(a) => germ(&a),
        Command::Limit(a) => limit(&a),
        Command::Kappa(a) => kappa(&a),
        Command::CfCheck(a) => cf_check(&a),
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// Runs `f` on a dedicated pool; replica order, and hence output, does not
/// depend on the thread count.
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

fn model_name(model: &TreeModel) -> &'static str {
    model.name()
}

fn b_or_a(family: &Family) -> String {
    match *family {
        Family::BAry { b } => b.to_string(),
        Family::ScaleFree { a } => float(a),
    }
}

fn mass_cell(mass: Mass, family: &Family) -> String {
    match family {
        Family::BAry { .. } => mass.units.to_string(),
        Family::ScaleFree { a } => float(mass.value(*a)),
    }
}

fn summary_of(values: impl IntoIterator<Item = f64>) -> Result<Option<SampleSummary>, CliError> {
    let set = SampleSet::new(values.into_iter().collect())?;
    if set.is_empty() {
        return Ok(None);
    }
    Ok(Some(summarize(&set, &DEFAULT_QUANTILES)?))
}

#[derive(Serialize)]
struct PercolateSummary<'a> {
    command: &'static str,
    config: &'a PercolateArgs,
    p: Option<f64>,
    root_fraction: Option<SampleSummary>,
    largest_fraction: Option<SampleSummary>,
    statistic: Option<SampleSummary>,
}

fn percolate(args: &PercolateArgs) -> Result<(), CliError> {
    args.run.validate()?;
    let model = args.model.tree_model()?;
    let c = args.model.c()?;
    let n = args.model.n()?;
    // A single-vertex b-ary tree has no edges, so p plays no role.
    let p = match (model, n) {
        (TreeModel::BAry { .. }, 1) => None,
        _ => Some(ldperc_core::tree::p_of(c, n)?),
    };
    let spec = match args.statistic {
        Statistic::Raw => None,
        Statistic::Recentered => Some(args.model.limit_spec(None)?),
        Statistic::Germ => return usage("--statistic germ applies only to the germ subcommand"),
    };
    let urt_recentered = spec.is_some() && model == TreeModel::UniformRecursive;
    let want_largest = args.largest || urt_recentered;
    let results = with_threads(args.run.threads, || {
        tree_samples(model, n, p.unwrap_or(1.0), args.run.reps, args.run.seed, want_largest)
    })??;

    let nf = n as f64;
    let family_label = match model {
        TreeModel::BAry { b } => b.to_string(),
        TreeModel::ScaleFree { a } => float(a),
        TreeModel::UniformRecursive => String::new(),
    };
    let mut rows = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        let statistic = match &spec {
            None => r.root_cluster as f64 / nf,
            Some(spec) => {
                // Uniform recursive trees are recentered through their largest cluster.
                let size = if urt_recentered { r.largest_cluster.unwrap_or(0) } else { r.root_cluster };
                recenter(size as f64 / nf, n, spec)?
            }
        };
        rows.push(ReplicaRow {
            replica: i as u64,
            model: model_name(&model),
            b_or_a: family_label.clone(),
            c: Some(c),
            n: Some(n),
            p,
            root_cluster: Some(r.root_cluster),
            largest_cluster: r.largest_cluster,
            statistic_value: Some(statistic),
            ..Default::default()
        });
    }
    let summary = PercolateSummary {
        command: "percolate",
        config: args,
        p,
        root_fraction: summary_of(results.iter().map(|r| r.root_cluster as f64 / nf))?,
        largest_fraction: if want_largest {
            summary_of(results.iter().filter_map(|r| r.largest_cluster).map(|v| v as f64 / nf))?
        } else {
            None
        },
        statistic: summary_of(rows.iter().filter_map(|r| r.statistic_value))?,
    };
    emit(&args.output, &Table::replicas(&rows), &summary)
}

#[derive(Serialize)]
struct BranchSummary<'a> {
    command: &'static str,
    config: &'a BranchArgs,
    p: f64,
    target: f64,
    extinct: u64,
    z0: Option<SampleSummary>,
    z_mut: Option<SampleSummary>,
    mutations: Option<SampleSummary>,
    derived_cluster: Option<SampleSummary>,
    time: Option<SampleSummary>,
    statistic: Option<SampleSummary>,
}

fn branch(args: &BranchArgs) -> Result<(), CliError> {
    args.run.validate()?;
    let params = args.model.params()?;
    let family = params.family;
    let a = family.a_value();
    let target = args.target.unwrap_or_else(|| params.total_at_size());
    let stop = match args.stop {
        StopKind::Total => StopRule::TotalReaches(target),
        StopKind::Ancestral => StopRule::AncestralReaches(target),
    };
    let mode = match args.mode {
        ModeKind::Jump => Mode::Jump,
        ModeKind::Continuous => Mode::ContinuousTime,
    };
    let spec = match args.statistic {
        Statistic::Raw => None,
        Statistic::Recentered => {
            if args.stop != StopKind::Total || args.target.is_some() {
                return usage("--statistic recentered needs the default total-mass stop at tree size n");
            }
            let theorem = match family {
                Family::BAry { .. } => TheoremKind::T2,
                Family::ScaleFree { .. } => TheoremKind::T3,
            };
            Some(args.model.limit_spec(Some(theorem))?)
        }
        Statistic::Germ => return usage("--statistic germ applies only to the germ subcommand"),
    };
    let split = SeedSplitter::new(args.run.seed);
    let outcomes = with_threads(args.run.threads, || {
        ldperc_core::experiments::try_replicate(args.run.reps, |i| {
            run_until(&params, stop, mode, &mut split.stream(purpose::BRANCHING, i))
        })
    })??;

    let nf = params.n as f64;
    let mut rows = Vec::with_capacity(outcomes.len());
    for (i, o) in outcomes.iter().enumerate() {
        let s = &o.final_state;
        let statistic = match (&spec, family) {
            (None, _) => s.z0.value(a) / nf,
            (Some(spec), Family::BAry { .. }) => recenter(s.z0.value(a) / nf, params.n, spec)?,
            (Some(spec), Family::ScaleFree { .. }) => {
                recenter(o.derived_cluster.unwrap_or(0) as f64 / nf, params.n, spec)?
            }
        };
        rows.push(ReplicaRow {
            replica: i as u64,
            model: model_name(&ldperc_core::experiments::tree_model(&family)),
            b_or_a: b_or_a(&family),
            c: params.c,
            n: Some(params.n),
            p: Some(params.p),
            root_cluster: o.derived_cluster,
            z0: mass_cell(s.z0, &family),
            z_mut: mass_cell(s.z_mut, &family),
            mutations: Some(s.mutations),
            statistic_value: Some(statistic),
            extinct: Some(o.stopped_by == StopReason::AncestralExtinct),
            ..Default::default()
        });
    }
    let summary = BranchSummary {
        command: "branch",
        config: args,
        p: params.p,
        target,
        extinct: outcomes.iter().filter(|o| o.stopped_by == StopReason::AncestralExtinct).count() as u64,
        z0: summary_of(outcomes.iter().map(|o| o.final_state.z0.value(a)))?,
        z_mut: summary_of(outcomes.iter().map(|o| o.final_state.z_mut.value(a)))?,
        mutations: summary_of(outcomes.iter().map(|o| o.final_state.mutations as f64))?,
        derived_cluster: summary_of(outcomes.iter().filter_map(|o| o.derived_cluster).map(|c| c as f64))?,
        time: summary_of(outcomes.iter().filter_map(|o| o.final_state.time))?,
        statistic: summary_of(rows.iter().filter_map(|r| r.statistic_value))?,
    };
    emit(&args.output, &Table::replicas(&rows), &summary)
}

#[derive(Serialize)]
struct CoupleSummary<'a> {
    command: &'static str,
    config: &'a CoupleArgs,
    p: f64,
    report: CoupleReport,
}

fn couple_check(args: &CoupleArgs) -> Result<(), CliError> {
    args.run.validate()?;
    let params = args.model.params()?;
    let family = params.family;
    let samples = with_threads(args.run.threads, || CoupleSamples::run(&params, args.run.reps, args.run.seed))??;
    let report = samples.report()?;
    // Row i pairs the i-th direct tree (root_cluster) with the i-th branching
    // run (final state, coupled cluster as statistic_value).
    let rows: Vec<ReplicaRow> = samples
        .direct
        .iter()
        .zip(&samples.coupled)
        .enumerate()
        .map(|(i, (d, (o, cluster)))| ReplicaRow {
            replica: i as u64,
            model: model_name(&ldperc_core::experiments::tree_model(&family)),
            b_or_a: b_or_a(&family),
            c: params.c,
            n: Some(params.n),
            p: Some(params.p),
            root_cluster: Some(d.root_cluster),
            z0: mass_cell(o.final_state.z0, &family),
            z_mut: mass_cell(o.final_state.z_mut, &family),
            mutations: Some(o.final_state.mutations),
            statistic_value: Some(*cluster as f64),
            ..Default::default()
        })
        .collect();
    let summary = CoupleSummary { command: "couple-check", config: args, p: params.p, report };
    emit(&args.output, &Table::replicas(&rows), &summary)
}

#[derive(Serialize)]
struct GermSummary<'a> {
    command: &'static str,
    config: &'a GermArgs,
    p: f64,
    threshold: f64,
    replicas: u64,
    extinct: u64,
    /// Δ_n over all replicas.
    delta_unconditioned: Option<SampleSummary>,
    /// Δ_n over replicas whose ancestral population survived to its threshold.
    delta_conditioned: Option<SampleSummary>,
    /// Δ_{0,n}, defined only on survival.
    delta0_conditioned: Option<SampleSummary>,
    statistic_conditioned: Option<SampleSummary>,
}

fn germ(args: &GermArgs) -> Result<(), CliError> {
    args.run.validate()?;
    let params = args.model.params()?;
    let family = params.family;
    let spec = match args.statistic {
        Statistic::Raw => None,
        Statistic::Germ | Statistic::Recentered => Some(args.model.limit_spec(None)?),
    };
    let samples: Vec<GermSample> = with_threads(args.run.threads, || germ_samples(&params, args.run.reps, args.run.seed))??;
    let statistic = |g: &GermSample| -> Result<Option<f64>, CliError> {
        Ok(match (g.delta0, &spec) {
            (None, _) => None,
            (Some(d), None) => Some(d),
            (Some(d), Some(spec)) => Some(germ_recenter(d, params.n, spec)?),
        })
    };
    let mut rows = Vec::with_capacity(samples.len());
    for (i, g) in samples.iter().enumerate() {
        rows.push(ReplicaRow {
            replica: i as u64,
            model: model_name(&ldperc_core::experiments::tree_model(&family)),
            b_or_a: b_or_a(&family),
            c: params.c,
            n: Some(params.n),
            p: Some(params.p),
            z_mut: float(g.delta),
            statistic_value: statistic(g)?,
            extinct: Some(g.extinct),
            ..Default::default()
        });
    }
    let survived = || samples.iter().filter(|g| !g.extinct);
    let summary = GermSummary {
        command: "germ",
        config: args,
        p: params.p,
        threshold: samples.first().map_or(f64::NAN, |g| g.threshold),
        replicas: samples.len() as u64,
        extinct: samples.iter().filter(|g| g.extinct).count() as u64,
        delta_unconditioned: summary_of(samples.iter().map(|g| g.delta))?,
        delta_conditioned: summary_of(survived().map(|g| g.delta))?,
        delta0_conditioned: summary_of(survived().filter_map(|g| g.delta0))?,
        statistic_conditioned: summary_of(rows.iter().filter_map(|r| r.statistic_value))?,
    };
    emit(&args.output, &Table::replicas(&rows), &summary)
}

#[derive(Serialize)]
struct LimitRow {
    x: f64,
    cdf: f64,
}

#[derive(Serialize)]
struct LimitSummary<'a> {
    command: &'static str,
    config: &'a LimitArgs,
    spec: LimitSpec,
    center: f64,
    scale: f64,
    shift: f64,
    table: Vec<LimitRow>,
}

fn limit(args: &LimitArgs) -> Result<(), CliError> {
    if args.model.n.is_some() {
        return usage("--n does not apply to the limit subcommand");
    }
    let spec = args.model.limit_spec(args.theorem)?;
    let law = LimitLaw::new(spec, (args.tol * 1e-2).max(1e-14))?;
    let grid = match &args.x_grid {
        Some(g) if g.is_empty() => return usage("--x-grid must not be empty"),
        Some(g) => g.clone(),
        // Images of z = −3, −2.5, …, 3 under x = −s(z + shift), ascending.
        None => (0..=12).rev().map(|k| -law.scale * (-3.0 + 0.5 * k as f64 + law.shift)).collect(),
    };
    let mut table = Table::new(&["x", "cdf"]);
    let mut rows = Vec::with_capacity(grid.len());
    for &x in &grid {
        let cdf = law.cdf(x, args.tol)?;
        table.push(vec![float(x), float(cdf)]);
        rows.push(LimitRow { x, cdf });
    }
    let summary = LimitSummary {
        command: "limit",
        config: args,
        spec,
        center: spec.center(),
        scale: law.scale,
        shift: law.shift,
        table: rows,
    };
    emit(&args.output, &table, &summary)
}

#[derive(Serialize)]
struct KappaSummary<'a> {
    command: &'static str,
    config: &'a KappaArgs,
    shape: f64,
    result: SeriesResult<f64>,
}

fn kappa(args: &KappaArgs) -> Result<(), CliError> {
    let family = family_of(args.model, args.b, args.a)?;
    family.validate()?;
    let shape = family.shape();
    let result = match family {
        Family::BAry { .. } => kappa_beta(shape, args.tol)?,
        Family::ScaleFree { .. } => kappa_alpha_prime(shape, args.tol)?,
    };
    let mut table = Table::new(&["model", "b_or_a", "shape", "value", "tail_bound", "terms"]);
    table.push(vec![
        model_name(&ldperc_core::experiments::tree_model(&family)).to_string(),
        b_or_a(&family),
        float(shape),
        float(result.value),
        float(result.tail_bound),
        result.terms.to_string(),
    ]);
    emit(&args.output, &table, &KappaSummary { command: "kappa", config: args, shape, result })
}

#[derive(Serialize)]
struct CfSummary<'a, T: Serialize> {
    command: &'static str,
    config: &'a CfCheckArgs,
    rows: T,
}

fn complex_cells(z: Complex64) -> [String; 2] {
    [float(z.re), float(z.im)]
}

fn cf_check(args: &CfCheckArgs) -> Result<(), CliError> {
    args.run.validate()?;
    let family = family_of(args.model, args.b, args.a)?;
    family.validate()?;
    if args.theta_grid.is_empty() {
        return usage("--theta-grid must not be empty");
    }
    let (reps, seed, thetas) = (args.run.reps, args.run.seed, &args.theta_grid);
    match args.kind {
        CfKind::Yule => {
            let rows = with_threads(args.run.threads, || yule_cf_check(family, args.t, thetas, reps, seed))??;
            let mut table = Table::new(&["theta", "empirical_re", "empirical_im", "se_re", "se_im", "analytic_re", "analytic_im", "z"]);
            for r in &rows {
                let mut cells = vec![float(r.theta)];
                cells.extend(complex_cells(r.empirical.value));
                cells.extend([float(r.empirical.se_re), float(r.empirical.se_im)]);
                cells.extend(complex_cells(r.reference.value));
                cells.push(float(r.z));
                table.push(cells);
            }
            emit(&args.output, &table, &CfSummary { command: "cf-check", config: args, rows })
        }
        CfKind::FilteredPoisson => {
            let params = BranchingParams::with_p(family, 1, args.p)?;
            let rows = with_threads(args.run.threads, || filtered_poisson_check(&params, args.t, thetas, reps, seed))??;
            let mut table = Table::new(&[
                "theta", "direct_re", "direct_im", "direct_se_re", "direct_se_im", "conditional_re", "conditional_im",
                "conditional_se_re", "conditional_se_im", "z", "path_product_re", "path_product_im", "z_path_product",
            ]);
            for r in &rows {
                let mut cells = vec![float(r.theta)];
                cells.extend(complex_cells(r.direct.value));
                cells.extend([float(r.direct.se_re), float(r.direct.se_im)]);
                cells.extend(complex_cells(r.conditional.value));
                cells.extend([float(r.conditional.se_re), float(r.conditional.se_im), float(r.z)]);
                cells.extend(complex_cells(r.path_product.value));
                cells.push(float(r.z_path_product));
                table.push(cells);
            }
            emit(&args.output, &table, &CfSummary { command: "cf-check", config: args, rows })
        }
        CfKind::Martingale => {
            let params = BranchingParams::with_p(family, 1, args.p)?;
            let r = with_threads(args.run.threads, || martingale_check(&params, args.t, reps, seed))??;
            let mut table = Table::new(&["t", "total_mean", "total_se", "ancestral_mean", "ancestral_se", "expected"]);
            table.push(vec![
                float(args.t),
                float(r.total_mean),
                float(r.total_se),
                float(r.ancestral_mean),
                float(r.ancestral_se),
                float(r.expected),
            ]);
            emit(&args.output, &table, &CfSummary { command: "cf-check", config: args, rows: r })
        }
    }
}
