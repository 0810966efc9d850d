//! Yule process with rare mutations, simulated as an aggregated embedded jump chain.
//!
//! Only the ancestral mass, the total mutant mass and the number of mutation
//! events are tracked. Every mutant sub-population reproduces at unit rate per
//! unit mass with a fixed jump size, so the individual mutant sizes never
//! influence the ancestral dynamics, the total, or the mutation count.
//!
//! Masses of the scale-free system are stored as `units + a_units·a` with both
//! coefficients integral. This keeps the coupling identities exact for any
//! real `a`.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::tree::p_of;

/// The two branching systems: b-ary Yule jumps of size `b − 1`, or the
/// scale-free system with jumps of size `2 + a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Family {
    BAry { b: u32 },
    ScaleFree { a: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Family::BAry { b } if b < 2 => param(format!("arity b = {b} must be at least 2")),
            Family::ScaleFree { a } if !(a > -1.0) || !a.is_finite() => {
                param(format!("scale-free parameter a = {a} must be finite and > -1"))
            }
            _ => Ok(()),
        }
    }

    /// The real `a` used to evaluate masses (zero for b-ary systems, whose
    /// masses never carry `a` units).
    pub fn a_value(&self) -> f64 {
        match *self {
            Family::BAry { .. } => 0.0,
            Family::ScaleFree { a } => a,
        }
    }

    /// Mass added to the whole system by every jump.
    pub fn jump(&self) -> Mass {
        match *self {
            Family::BAry { b } => Mass::units(u64::from(b - 1)),
            Family::ScaleFree { .. } => Mass::new(2, 1),
        }
    }

    /// Ancestral mass at time zero: `b`, resp. `2 + 2a` (the seed tree {0, 1}).
    pub fn start_mass(&self) -> Mass {
        match *self {
            Family::BAry { b } => Mass::units(u64::from(b)),
            Family::ScaleFree { .. } => Mass::new(2, 2),
        }
    }

    /// `β = b/(b−1)` for b-ary systems, `α = (1+a)/(2+a)` for scale-free ones.
    pub fn shape(&self) -> f64 {
        match *self {
            Family::BAry { b } => f64::from(b) / f64::from(b - 1),
            Family::ScaleFree { a } => (1.0 + a) / (2.0 + a),
        }
    }
}

/// A mass `units + a_units·a`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mass {
    pub units: u64,
    pub a_units: u64,
}

impl Mass {
    pub const ZERO: Mass = Mass { units: 0, a_units: 0 };

    pub const fn new(units: u64, a_units: u64) -> Self {
        Self { units, a_units }
    }

    pub const fn units(units: u64) -> Self {
        Self { units, a_units: 0 }
    }

    #[inline]
    pub fn value(&self, a: f64) -> f64 {
        self.units as f64 + self.a_units as f64 * a
    }

    pub fn is_zero(&self) -> bool {
        self.units == 0 && self.a_units == 0
    }
}

impl std::ops::Add for Mass {
    type Output = Mass;
    fn add(self, rhs: Mass) -> Mass {
        Mass::new(self.units + rhs.units, self.a_units + rhs.a_units)
    }
}

impl std::ops::AddAssign for Mass {
    fn add_assign(&mut self, rhs: Mass) {
        self.units += rhs.units;
        self.a_units += rhs.a_units;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingParams {
    pub family: Family,
    /// Percolation rate constant; `None` when `p` was set directly.
    pub c: Option<f64>,
    /// Target tree size.
    pub n: u64,
    /// Clonal reproduction probability.
    pub p: f64,
}

impl BranchingParams {
    /// Parameters in the supercritical regime `p = 1 − c/ln n`.
    pub fn new(family: Family, c: f64, n: u64) -> Result<Self> {
        family.validate()?;
        let p = p_of(c, n)?;
        Ok(Self { family, c: Some(c), n, p })
    }

    /// Bypasses `p = 1 − c/ln n`; for diagnostics that need a fixed `p`
    /// (including the degenerate `p = 1`).
    pub fn with_p(family: Family, n: u64, p: f64) -> Result<Self> {
        family.validate()?;
        if n == 0 {
            return param("target size n must be at least 1");
        }
        if !(0.0..=1.0).contains(&p) {
            return param(format!("p = {p} must lie in [0, 1]"));
        }
        Ok(Self { family, c: None, n, p })
    }

    pub fn shape(&self) -> f64 {
        self.family.shape()
    }

    /// Total mass of the system when the coupled tree has size `n`:
    /// `(b−1)n + 1`, resp. `(2+a)n + a`.
    pub fn total_at_size(&self) -> f64 {
        let n = self.n as f64;
        match self.family {
            Family::BAry { b } => f64::from(b - 1) * n + 1.0,
            Family::ScaleFree { a } => (2.0 + a) * n + a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingState {
    pub z0: Mass,
    pub z_mut: Mass,
    /// Number of mutation events; equals the half-edge count of the root cluster.
    pub mutations: u64,
    /// Elapsed time, present only in continuous-time mode.
    pub time: Option<f64>,
    pub steps: u64,
}

impl BranchingState {
    pub fn initial(family: &Family, mode: Mode) -> Self {
        Self {
            z0: family.start_mass(),
            z_mut: Mass::ZERO,
            mutations: 0,
            time: match mode {
                Mode::Jump => None,
                Mode::ContinuousTime => Some(0.0),
            },
            steps: 0,
        }
    }

    /// Scale-free start where the seed edge {0, 1} is itself percolated:
    /// with probability `1 − p` the root keeps only its own weight `1 + a`
    /// and vertex 1 founds the first mutant population. For b-ary systems
    /// there is no seed edge and this is [`BranchingState::initial`].
    pub fn initial_with_seed_edge<R: Rng + ?Sized>(params: &BranchingParams, mode: Mode, rng: &mut R) -> Self {
        let mut state = Self::initial(&params.family, mode);
        if let Family::ScaleFree { .. } = params.family {
            let intact = rng.gen::<f64>() < params.p;
            if !intact {
                state.z0 = Mass::new(1, 1);
                state.z_mut = Mass::new(1, 1);
                state.mutations = 1;
            }
        }
        state
    }

    pub fn total(&self) -> Mass {
        self.z0 + self.z_mut
    }

    pub fn z0_value(&self, family: &Family) -> f64 {
        self.z0.value(family.a_value())
    }

    pub fn z_mut_value(&self, family: &Family) -> f64 {
        self.z_mut.value(family.a_value())
    }

    pub fn total_value(&self, family: &Family) -> f64 {
        self.total().value(family.a_value())
    }

    /// Checks every structural invariant of the aggregated chain.
    pub fn check_invariants(&self, family: &Family) -> Result<()> {
        let fail = |what: &str| Err(Error::Invariant(format!("{what}: {self:?}")));
        let start = family.start_mass();
        let jump = family.jump();
        let total = self.total();
        // A percolated scale-free seed edge counts as one mutation before any step.
        let seed_allowance = u64::from(matches!(family, Family::ScaleFree { .. }));
        if total.units != start.units + jump.units * self.steps
            || total.a_units != start.a_units + jump.a_units * self.steps
        {
            return fail("mass conservation");
        }
        if self.mutations > self.steps + seed_allowance {
            return fail("more mutations than steps");
        }
        if !self.z_mut.is_zero() && self.mutations == 0 {
            return fail("mutant mass without a mutation event");
        }
        match *family {
            Family::BAry { b } => {
                if self.z0.a_units != 0 || self.z_mut.a_units != 0 {
                    return fail("b-ary mass carries a-units");
                }
                let num = self.z0.units + self.mutations;
                if num == 0 || (num - 1) % u64::from(b - 1) != 0 {
                    return fail("coupling integrality (z0 - 1 + M) mod (b-1)");
                }
            }
            Family::ScaleFree { .. } => {
                // (z0 − M + 2)/(2 + a) is an integer as a formal expression in a.
                let lhs = self.z0.units + 2;
                if lhs < self.mutations
                    || lhs - self.mutations != 2 * self.z0.a_units
                    || self.z0.a_units == 0
                {
                    return fail("coupling integrality (z0 - M + 2)/(2+a)");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Jump,
    ContinuousTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// Stop when the total mass equals the target.
    TotalReaches(f64),
    /// Stop when the ancestral mass first reaches (or jumps over) the target.
    AncestralReaches(f64),
}

impl StopRule {
    /// Total-mass rule for the tree of size `n`.
    pub fn at_tree_size(params: &BranchingParams) -> Self {
        StopRule::TotalReaches(params.total_at_size())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    RuleMet,
    AncestralExtinct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingOutcome {
    pub final_state: BranchingState,
    pub stopped_by: StopReason,
    /// Root-cluster size via the coupling identity (total-mass rules only).
    pub derived_cluster: Option<u64>,
}

/// One embedded-jump transition, advancing the clock first in continuous-time mode.
///
/// # Panics
///
/// If the system is empty; no valid start leads there.
#[inline]
pub fn step<R: Rng + ?Sized>(state: &mut BranchingState, params: &BranchingParams, rng: &mut R) {
    if state.time.is_some() {
        let total = state.total_value(&params.family);
        assert!(total > 0.0, "step called on an empty system");
        let hold: f64 = rng.sample(Exp1);
        if let Some(t) = state.time.as_mut() {
            *t += hold / total;
        }
    }
    jump(state, params, rng);
}

#[inline]
fn jump<R: Rng + ?Sized>(state: &mut BranchingState, params: &BranchingParams, rng: &mut R) {
    match params.family {
        Family::BAry { b } => {
            let total = state.z0.units + state.z_mut.units;
            assert!(total > 0, "step called on an empty system");
            let ancestral_acts = rng.gen_range(0..total) < state.z0.units;
            if ancestral_acts {
                if rng.gen::<f64>() < params.p {
                    state.z0.units += u64::from(b - 1);
                } else {
                    state.z0.units -= 1;
                    state.z_mut.units += u64::from(b);
                    state.mutations += 1;
                }
            } else {
                state.z_mut.units += u64::from(b - 1);
            }
        }
        Family::ScaleFree { a } => {
            let z0 = state.z0.value(a);
            let total = z0 + state.z_mut.value(a);
            assert!(total > 0.0, "step called on an empty system");
            let ancestral_acts = rng.gen::<f64>() * total < z0;
            if ancestral_acts {
                if rng.gen::<f64>() < params.p {
                    state.z0 += Mass::new(2, 1);
                } else {
                    // The cut edge leaves a half-edge of weight 1 on the clone
                    // side and founds a mutant population of mass 1 + a.
                    state.z0 += Mass::units(1);
                    state.z_mut += Mass::new(1, 1);
                    state.mutations += 1;
                }
            } else {
                state.z_mut += Mass::new(2, 1);
            }
        }
    }
    state.steps += 1;
}

/// Number of jumps needed to bring the total from `from` to `target`, or a
/// parameter error when `target` is not in the arithmetic class of the family.
fn steps_to_total(family: &Family, from: &BranchingState, target: f64) -> Result<u64> {
    let a = family.a_value();
    let jump = family.jump().value(a);
    let current = from.total_value(family);
    let k = (target - current) / jump;
    let k_round = k.round();
    let tol = 1e-9 * target.abs().max(1.0);
    if k_round < 0.0 || (current + k_round * jump - target).abs() > tol {
        return param(format!(
            "total target {target} is not reachable from {current} by jumps of {jump}"
        ));
    }
    Ok(k_round as u64)
}

/// Runs from the family's canonical start.
pub fn run_until<R: Rng + ?Sized>(
    params: &BranchingParams,
    stop: StopRule,
    mode: Mode,
    rng: &mut R,
) -> Result<BranchingOutcome> {
    run_from(BranchingState::initial(&params.family, mode), params, stop, rng)
}

/// Runs from an arbitrary valid state until `stop` holds, or until the
/// ancestral population dies out under an ancestral rule.
pub fn run_from<R: Rng + ?Sized>(
    mut state: BranchingState,
    params: &BranchingParams,
    stop: StopRule,
    rng: &mut R,
) -> Result<BranchingOutcome> {
    let family = params.family;
    match stop {
        StopRule::TotalReaches(target) => {
            let k = steps_to_total(&family, &state, target)?;
            for _ in 0..k {
                step(&mut state, params, rng);
            }
            let derived = coupled_cluster(&state, &family)?;
            Ok(BranchingOutcome {
                final_state: state,
                stopped_by: StopReason::RuleMet,
                derived_cluster: Some(derived),
            })
        }
        StopRule::AncestralReaches(target) => {
            if !(target > 0.0) || !target.is_finite() {
                return param(format!("ancestral target {target} must be positive"));
            }
            if matches!(family, Family::BAry { .. }) && target.fract() != 0.0 {
                return param(format!("b-ary ancestral target {target} must be an integer"));
            }
            let a = family.a_value();
            let reached = |s: &BranchingState| s.z0.value(a) >= target - 1e-9 * target;
            while !reached(&state) {
                if state.z0.is_zero() {
                    return Ok(BranchingOutcome {
                        final_state: state,
                        stopped_by: StopReason::AncestralExtinct,
                        derived_cluster: None,
                    });
                }
                step(&mut state, params, rng);
            }
            Ok(BranchingOutcome {
                final_state: state,
                stopped_by: StopReason::RuleMet,
                derived_cluster: None,
            })
        }
    }
}

/// Continuous-time evolution up to time `t`: returns the state holding at `t`.
pub fn run_for_time<R: Rng + ?Sized>(
    mut state: BranchingState,
    params: &BranchingParams,
    t: f64,
    rng: &mut R,
) -> BranchingState {
    let family = params.family;
    let mut now = state.time.unwrap_or(0.0);
    loop {
        let total = state.total_value(&family);
        let hold: f64 = rng.sample(Exp1);
        let next = now + hold / total;
        if next > t {
            state.time = Some(t);
            return state;
        }
        jump(&mut state, params, rng);
        now = next;
        state.time = Some(now);
    }
}

/// Root-cluster size from the coupling identities: `(z0 − 1 + M)/(b − 1)`
/// for b-ary systems and `(z0 − M + 2)/(2 + a)` for scale-free ones.
pub fn cluster_from_coupling(outcome: &BranchingOutcome, params: &BranchingParams) -> Result<u64> {
    if outcome.stopped_by != StopReason::RuleMet {
        return param("coupling needs an outcome stopped by its total-mass rule");
    }
    let cluster = coupled_cluster(&outcome.final_state, &params.family)?;
    let tree_size = outcome.final_state.steps + 1;
    let max = match params.family {
        Family::BAry { .. } => tree_size,
        Family::ScaleFree { .. } => tree_size + 1,
    };
    if cluster == 0 || cluster > max {
        return Err(Error::Invariant(format!("coupled cluster {cluster} outside [1, {max}]")));
    }
    Ok(cluster)
}

pub(crate) fn coupled_cluster(state: &BranchingState, family: &Family) -> Result<u64> {
    match *family {
        Family::BAry { b } => {
            let num = state.z0.units + state.mutations;
            let d = u64::from(b - 1);
            if num == 0 || (num - 1) % d != 0 {
                return Err(Error::Invariant(format!("b-ary coupling not integral: {state:?}")));
            }
            Ok((num - 1) / d)
        }
        Family::ScaleFree { .. } => {
            let lhs = state.z0.units + 2;
            if lhs < state.mutations || lhs - state.mutations != 2 * state.z0.a_units {
                return Err(Error::Invariant(format!("scale-free coupling not integral: {state:?}")));
            }
            Ok(state.z0.a_units)
        }
    }
}

/// Mutant counts at the germ thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GermSample {
    /// Mutant mass when the ancestral mass first reaches the threshold;
    /// `None` when the ancestral population died out first.
    pub delta0: Option<f64>,
    /// Mutant mass when the total mass reaches the threshold.
    pub delta: f64,
    pub extinct: bool,
    pub threshold: f64,
}

/// `⌊ln⁴ n⌋`.
pub fn germ_level(n: u64) -> u64 {
    (n as f64).ln().powi(4).floor() as u64
}

/// Germ threshold `(b−1)⌊ln⁴n⌋ + 1`, resp. `(2+a)⌊ln⁴n⌋ + a`.
pub fn germ_threshold(params: &BranchingParams) -> Result<f64> {
    let level = germ_level(params.n);
    if level < 1 {
        return param(format!("n = {} too small: floor(ln^4 n) must be at least 1", params.n));
    }
    let level = level as f64;
    Ok(match params.family {
        Family::BAry { b } => f64::from(b - 1) * level + 1.0,
        Family::ScaleFree { a } => (2.0 + a) * level + a,
    })
}

/// Both germ statistics from a single trajectory.
pub fn germ_statistics<R: Rng + ?Sized>(params: &BranchingParams, rng: &mut R) -> Result<GermSample> {
    let threshold = germ_threshold(params)?;
    let family = params.family;
    let a = family.a_value();
    let mut state = BranchingState::initial(&family, Mode::Jump);
    // The total hits the threshold exactly after ⌊ln⁴n⌋ − 1 jumps.
    let total_steps = steps_to_total(&family, &state, threshold)?;
    let eps = 1e-9 * threshold;
    let mut delta = None;
    let mut delta0 = None;
    let mut extinct = false;
    loop {
        if delta.is_none() && state.steps == total_steps {
            delta = Some(state.z_mut.value(a));
        }
        if delta0.is_none() && !extinct {
            if state.z0.value(a) >= threshold - eps {
                delta0 = Some(state.z_mut.value(a));
            } else if state.z0.is_zero() {
                extinct = true;
            }
        }
        if delta.is_some() && (delta0.is_some() || extinct) {
            break;
        }
        step(&mut state, params, rng);
    }
    Ok(GermSample {
        delta0,
        delta: delta.expect("total threshold is always reached"),
        extinct,
        threshold,
    })
}

/// One piece of a piecewise-constant ancestral path: from `time` on the
/// ancestral mass is `z0`; `mutation` marks pieces opened by a mutation event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub time: f64,
    pub z0: f64,
    pub mutation: bool,
}

/// Ancestral path on `[0, t]`, starting with `(0, start mass)`.
pub type AncestralPath = Vec<PathPoint>;

/// Simulates the ancestral population alone in continuous time up to `t`.
/// Its law does not depend on the mutant sub-populations.
pub fn ancestral_path<R: Rng + ?Sized>(params: &BranchingParams, t: f64, rng: &mut R) -> AncestralPath {
    let family = params.family;
    let a = family.a_value();
    let mut z0 = family.start_mass();
    let mut now = 0.0;
    let mut path = vec![PathPoint { time: 0.0, z0: z0.value(a), mutation: false }];
    loop {
        let rate = z0.value(a);
        if rate <= 0.0 {
            return path;
        }
        let hold: f64 = rng.sample(Exp1);
        now += hold / rate;
        if now > t {
            return path;
        }
        let clonal = rng.gen::<f64>() < params.p;
        match family {
            Family::BAry { b } => {
                if clonal {
                    z0.units += u64::from(b - 1);
                } else {
                    z0.units -= 1;
                }
            }
            Family::ScaleFree { .. } => {
                z0 += if clonal { Mass::new(2, 1) } else { Mass::units(1) };
            }
        }
        path.push(PathPoint { time: now, z0: z0.value(a), mutation: !clonal });
    }
}
