use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ldperc_core::limit::LimitSpec;
use ldperc_core::{BranchingParams, Family, TreeModel};
use serde::Serialize;

use crate::error::CliError;

/// Percolation on random recursive trees and the coupled Yule branching system.
#[derive(Debug, Parser)]
#[command(name = "ldperc", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grow percolated trees and report cluster sizes.
    Percolate(PercolateArgs),
    /// Run the branching system with rare mutations.
    Branch(BranchArgs),
    /// Compare direct root clusters with coupling-derived ones (two-sample KS).
    CoupleCheck(CoupleArgs),
    /// Mutant counts at the germ thresholds.
    Germ(GermArgs),
    /// Tabulate the CDF of a limit law.
    Limit(LimitArgs),
    /// Evaluate κ_β or κ'_α with its tail bound.
    Kappa(KappaArgs),
    /// Empirical versus analytic characteristic functions.
    CfCheck(CfCheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Bary,
    Scalefree,
    Urt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopKind {
    Total,
    Ancestral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Jump,
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Raw,
    Recentered,
    Germ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoremKind {
    T1,
    T2,
    T3,
    E19,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CfKind {
    /// Yule process CF at time t.
    Yule,
    /// Mutant-mass CF: direct versus conditional-Poisson estimators.
    FilteredPoisson,
    /// Normalized total and ancestral populations.
    Martingale,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "bary")]
    pub model: ModelKind,
    /// Arity (b-ary trees only); defaults to 2.
    #[arg(long)]
    pub b: Option<u32>,
    /// Attachment offset (scale-free trees only); defaults to 0.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Rate constant in p = 1 − c/ln n.
    #[arg(long)]
    pub c: Option<f64>,
    /// Tree size.
    #[arg(long)]
    pub n: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, default_value_t = 1000)]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "csv")]
    pub output: OutputFormat,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PercolateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Also compute the largest cluster (union-find over all vertices).
    #[arg(long)]
    pub largest: bool,
    #[arg(long, value_enum, default_value = "raw")]
    pub statistic: Statistic,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BranchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "total")]
    pub stop: StopKind,
    /// Mass target of the stop rule; defaults to the mass at tree size n.
    #[arg(long)]
    pub target: Option<f64>,
    #[arg(long, value_enum, default_value = "jump")]
    pub mode: ModeKind,
    #[arg(long, value_enum, default_value = "raw")]
    pub statistic: Statistic,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoupleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GermArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_enum, default_value = "raw")]
    pub statistic: Statistic,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LimitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Limit theorem; defaults to t1, t3 or e19 according to the model.
    #[arg(long, value_enum)]
    pub theorem: Option<TheoremKind>,
    /// Points at which to evaluate the CDF; defaults to a grid covering the bulk.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KappaArgs {
    #[arg(long, value_enum, default_value = "bary")]
    pub model: ModelKind,
    #[arg(long)]
    pub b: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CfCheckArgs {
    #[arg(long, value_enum, default_value = "yule")]
    pub kind: CfKind,
    #[arg(long, value_enum, default_value = "bary")]
    pub model: ModelKind,
    #[arg(long)]
    pub b: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Clonal probability for the mutation diagnostics.
    #[arg(long, default_value_t = 0.7)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0.1,0.5,1")]
    pub theta_grid: Vec<f64>,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

pub fn family_of(model: ModelKind, b: Option<u32>, a: Option<f64>) -> Result<Family, CliError> {
    match model {
        ModelKind::Bary => {
            if a.is_some() {
                return usage("--a applies only to --model scalefree");
            }
            Ok(Family::BAry { b: b.unwrap_or(2) })
        }
        ModelKind::Scalefree => {
            if b.is_some() {
                return usage("--b applies only to --model bary");
            }
            Ok(Family::ScaleFree { a: a.unwrap_or(0.0) })
        }
        ModelKind::Urt => usage("this subcommand needs --model bary or scalefree"),
    }
}

impl ModelArgs {
    pub fn tree_model(&self) -> Result<TreeModel, CliError> {
        match self.model {
            ModelKind::Urt => {
                if self.a.is_some() || self.b.is_some() {
                    return usage("--b and --a do not apply to --model urt");
                }
                Ok(TreeModel::UniformRecursive)
            }
            other => Ok(match family_of(other, self.b, self.a)? {
                Family::BAry { b } => TreeModel::BAry { b },
                Family::ScaleFree { a } => TreeModel::ScaleFree { a },
            }),
        }
    }

    pub fn family(&self) -> Result<Family, CliError> {
        family_of(self.model, self.b, self.a)
    }

    pub fn c(&self) -> Result<f64, CliError> {
        self.c.map_or_else(|| usage("--c is required"), Ok)
    }

    pub fn n(&self) -> Result<u64, CliError> {
        self.n.map_or_else(|| usage("--n is required"), Ok)
    }

    /// Limit law associated with the model (and, for b-ary systems, the theorem).
    pub fn limit_spec(&self, theorem: Option<TheoremKind>) -> Result<LimitSpec, CliError> {
        let c = self.c()?;
        let theorem = theorem.unwrap_or(match self.model {
            ModelKind::Bary => TheoremKind::T1,
            ModelKind::Scalefree => TheoremKind::T3,
            ModelKind::Urt => TheoremKind::E19,
        });
        let spec = match (theorem, self.model) {
            (TheoremKind::T1 | TheoremKind::T2, ModelKind::Bary) => {
                let Family::BAry { b } = self.family()? else { unreachable!() };
                if theorem == TheoremKind::T1 {
                    LimitSpec::bary(b, c)
                } else {
                    LimitSpec::branching(b, c)
                }
            }
            (TheoremKind::T3, ModelKind::Scalefree) => {
                let Family::ScaleFree { a } = self.family()? else { unreachable!() };
                LimitSpec::scalefree(a, c)
            }
            (TheoremKind::E19, ModelKind::Urt) => {
                self.tree_model()?;
                LimitSpec::urt(c)
            }
            _ => return usage(format!("theorem {theorem:?} does not apply to model {:?}", self.model)),
        };
        Ok(spec?)
    }

    pub fn params(&self) -> Result<BranchingParams, CliError> {
        let family = self.family()?;
        Ok(BranchingParams::new(family, self.c()?, self.n()?)?)
    }
}

impl RunArgs {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.reps == 0 {
            return usage("--reps must be at least 1");
        }
        Ok(())
    }
}
