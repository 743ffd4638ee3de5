//! Update kernels and group schedules.
//!
//! All kernels mutate the state in place and report the decision through
//! [`StepResult`]; a rejected step leaves `x` untouched (momentum may still
//! be refreshed or negated, which is part of the kernel definition, not a
//! side effect).
//!
//! Randomness is consumed in a fixed documented order per kernel so that
//! runs are reproducible from the seed:
//! * `rwm_update`: one normal per coordinate (proposal), then the decision.
//! * `hmc_update`: one normal per subset coordinate (momentum refresh), the
//!   jitter Gamma draw when enabled, then the decision.
//! * `persistent_langevin_update`: like `hmc_update` with a partial
//!   refresh.
//! * `binary_gibbs_update`: one uniform per discrete coordinate.
//!
//! A decision under the `NonReversible` policy draws nothing unless the
//! policy's noise half-width is positive; under `Standard` it draws one
//! uniform.

use std::ops::Range;

use crate::chain::{
    accept_standard_draw, accept_with_slice, advance_slice, AcceptancePolicy, ChainState,
    RngHandle,
};
use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// Random-walk Metropolis tuning: per-coordinate proposal standard
/// deviation.
#[derive(Clone, Copy, Debug)]
pub struct RwmParams {
    pub sigma: f64,
}

/// Tuning for the dynamics-based kernels.
#[derive(Clone, Debug)]
pub struct DynamicsParams {
    /// Leapfrog stepsize.
    pub eta: f64,
    /// Leapfrog steps per trajectory. Used by `hmc_update`;
    /// `persistent_langevin_update` always takes exactly one step.
    pub leapfrog_steps: usize,
    /// Momentum persistence in `[0, 1)`: refresh is
    /// `p <- alpha p + sqrt(1 - alpha^2) n`. Zero means full refresh.
    pub alpha: f64,
    /// When positive, each trajectory divides `eta` by the square root of a
    /// `Gamma(shape/2, mean 1)` draw (see [`jitter_stepsize`]). Zero
    /// disables jitter.
    pub jitter_shape: f64,
    /// Continuous coordinates the kernel moves; `None` means all. Other
    /// coordinates and their momenta are left untouched.
    pub coord_subset: Option<Range<usize>>,
}

impl DynamicsParams {
    pub fn new(eta: f64, leapfrog_steps: usize, alpha: f64) -> Self {
        Self {
            eta,
            leapfrog_steps,
            alpha,
            jitter_shape: 0.0,
            coord_subset: None,
        }
    }
}

/// Outcome of one kernel application.
#[derive(Clone, Copy, Debug)]
pub struct StepResult {
    pub rejected: bool,
    /// Log ratio the decision tested (`-inf` for a diverged trajectory).
    pub log_ratio: f64,
    /// The uniform the decision compared against the ratio: `|v|` after the
    /// advance under `NonReversible`, the fresh draw under `Standard`.
    pub decision_u: f64,
}

/// Shared accept/reject step. Under `NonReversible` the retained variable
/// is advanced first and rescaled on acceptance; the advanced value
/// persists on rejection.
fn decide(
    v: &mut f64,
    policy: &AcceptancePolicy,
    log_ratio: f64,
    rng: &mut RngHandle,
) -> Result<(bool, f64)> {
    match policy {
        AcceptancePolicy::Standard => {
            let d = accept_standard_draw(rng, log_ratio)?;
            Ok((d.accepted, d.u))
        }
        AcceptancePolicy::NonReversible { .. } => {
            let advanced = advance_slice(*v, policy, rng);
            let u = advanced.abs();
            let d = accept_with_slice(advanced, log_ratio)?;
            *v = d.new_v;
            Ok((d.accepted, u))
        }
    }
}

/// Propose `x* ~ N(x, sigma^2 I)` and accept via the policy.
pub fn rwm_update(
    state: &mut ChainState,
    target: &dyn TargetModel,
    params: &RwmParams,
    policy: &AcceptancePolicy,
    rng: &mut RngHandle,
) -> Result<StepResult> {
    if !(params.sigma > 0.0) {
        return Err(Error::BadParam {
            name: "sigma",
            why: format!("must be positive, got {}", params.sigma),
        });
    }
    let mut x_star = state.x.clone();
    for xi in x_star.iter_mut() {
        *xi += params.sigma * rng.standard_normal();
    }
    let logpi_star = target.log_density(&x_star, &state.w);
    if logpi_star.is_nan() {
        return Err(Error::NonFinite {
            context: "proposal log density",
        });
    }
    let kinetic = state.kinetic();
    let log_ratio = logpi_star - (state.cached_logpi + kinetic);
    let (accepted, u) = decide(&mut state.v, policy, log_ratio, rng)?;
    if accepted {
        state.x = x_star;
        state.cached_logpi = logpi_star - kinetic;
    }
    Ok(StepResult {
        rejected: !accepted,
        log_ratio,
        decision_u: u,
    })
}

fn resolve_subset(subset: &Option<Range<usize>>, dim: usize) -> Result<Range<usize>> {
    match subset {
        None => Ok(0..dim),
        Some(r) => {
            if r.start >= r.end || r.end > dim {
                Err(Error::BadSubset {
                    start: r.start,
                    end: r.end,
                    dim,
                })
            } else {
                Ok(r.clone())
            }
        }
    }
}

fn subset_finite(values: &[f64], subset: &Range<usize>) -> bool {
    values[subset.clone()].iter().all(|g| g.is_finite())
}

/// `n_steps` leapfrog steps, reusing the end-of-step gradient as the next
/// step's start gradient (`n_steps + 1` evaluations in total). Errors on a
/// non-finite gradient; trajectory callers turn that into a rejection.
fn leapfrog_n(
    x: &mut [f64],
    p: &mut [f64],
    eta: f64,
    n_steps: usize,
    target: &dyn TargetModel,
    w: &[bool],
    subset: &Range<usize>,
    grad: &mut Vec<f64>,
) -> Result<()> {
    grad.resize(x.len(), 0.0);
    target.gradient(x, w, grad);
    if !subset_finite(grad, subset) {
        return Err(Error::NonFinite {
            context: "gradient",
        });
    }
    let half = 0.5 * eta;
    for _ in 0..n_steps {
        for i in subset.clone() {
            p[i] += half * grad[i];
        }
        for i in subset.clone() {
            x[i] += eta * p[i];
        }
        target.gradient(x, w, grad);
        if !subset_finite(grad, subset) {
            return Err(Error::NonFinite {
                context: "gradient",
            });
        }
        for i in subset.clone() {
            p[i] += half * grad[i];
        }
    }
    Ok(())
}

/// One leapfrog step: half momentum kick, full position step, half kick.
/// Volume preserving, and together with momentum negation an involution.
/// Restricted to `coord_subset` when given.
pub fn leapfrog(
    x: &mut [f64],
    p: &mut [f64],
    eta: f64,
    target: &dyn TargetModel,
    w: &[bool],
    coord_subset: Option<&Range<usize>>,
) -> Result<()> {
    if x.len() != p.len() {
        return Err(Error::DimMismatch {
            what: "p",
            expected: x.len(),
            got: p.len(),
        });
    }
    let subset = resolve_subset(&coord_subset.cloned(), x.len())?;
    let mut grad = Vec::new();
    leapfrog_n(x, p, eta, 1, target, w, &subset, &mut grad)
}

/// Divide `eta` by the square root of `G ~ Gamma(shape/2, mean 1)`.
///
/// `shape` is the configured jitter value (e.g. 30 gives a Gamma with
/// shape 15); larger values concentrate the factor near 1. One draw per
/// trajectory.
pub fn jitter_stepsize(eta: f64, shape: f64, rng: &mut RngHandle) -> Result<f64> {
    if !(shape > 0.0) {
        return Err(Error::BadParam {
            name: "jitter_shape",
            why: format!("must be positive, got {shape}"),
        });
    }
    let g = rng.gamma_mean_one(0.5 * shape)?;
    Ok(eta / g.sqrt())
}

fn full_kinetic(p: &[f64]) -> f64 {
    0.5 * p.iter().map(|pi| pi * pi).sum::<f64>()
}

/// Run a trajectory on scratch copies of `(x, p)` and return
/// `(x_end, p_end, log_ratio, end_potential, end_kinetic)`. A diverged
/// trajectory comes back with `log_ratio = -inf`.
#[allow(clippy::too_many_arguments)]
fn propose_trajectory(
    state: &ChainState,
    target: &dyn TargetModel,
    eta: f64,
    n_steps: usize,
    subset: &Range<usize>,
    h0: f64,
) -> (Vec<f64>, Vec<f64>, f64, f64, f64) {
    let mut x_new = state.x.clone();
    let mut p_new = state.p.as_ref().expect("momentum checked by caller").clone();
    let mut grad = Vec::new();
    match leapfrog_n(
        &mut x_new, &mut p_new, eta, n_steps, target, &state.w, subset, &mut grad,
    ) {
        Ok(()) => {
            let pot1 = target.log_density(&x_new, &state.w);
            let k1 = full_kinetic(&p_new);
            let h1 = k1 - pot1;
            let log_ratio = if h1.is_finite() {
                h0 - h1
            } else {
                f64::NEG_INFINITY
            };
            (x_new, p_new, log_ratio, pot1, k1)
        }
        Err(_) => (x_new, p_new, f64::NEG_INFINITY, f64::NAN, f64::NAN),
    }
}

/// Hamiltonian Monte Carlo update: full momentum refresh on the subset, a
/// trajectory of `leapfrog_steps` steps (stepsize jittered once per
/// trajectory when enabled), momentum negated in the proposal, and the
/// decision taken on the joint density of `(x, p)`.
///
/// On rejection `x` and `p` revert to their pre-trajectory values (with the
/// refreshed momentum). A trajectory that produces a non-finite energy is a
/// rejection, not an error.
pub fn hmc_update(
    state: &mut ChainState,
    target: &dyn TargetModel,
    params: &DynamicsParams,
    policy: &AcceptancePolicy,
    rng: &mut RngHandle,
) -> Result<StepResult> {
    validate_dynamics(params)?;
    let dim = target.dim_continuous();
    let subset = resolve_subset(&params.coord_subset, dim)?;
    if state.p.is_none() {
        return Err(Error::NoMomentum);
    }

    let pot = state.potential_logpi();
    {
        let p = state.p.as_mut().unwrap();
        for i in subset.clone() {
            p[i] = rng.standard_normal();
        }
    }
    let k0 = state.kinetic();
    state.cached_logpi = pot - k0;
    let h0 = k0 - pot;

    let eta = if params.jitter_shape > 0.0 {
        jitter_stepsize(params.eta, params.jitter_shape, rng)?
    } else {
        params.eta
    };

    let (x_new, mut p_new, log_ratio, pot1, k1) =
        propose_trajectory(state, target, eta, params.leapfrog_steps, &subset, h0);

    let (accepted, u) = decide(&mut state.v, policy, log_ratio, rng)?;
    if accepted {
        for i in subset {
            p_new[i] = -p_new[i];
        }
        state.x = x_new;
        state.p = Some(p_new);
        state.cached_logpi = pot1 - k1;
    }
    Ok(StepResult {
        rejected: !accepted,
        log_ratio,
        decision_u: u,
    })
}

/// Persistent-momentum Langevin update:
/// 1. partial momentum refresh `p <- alpha p + sqrt(1 - alpha^2) n`;
/// 2. one leapfrog step, momentum negated in the proposal;
/// 3. accept or reject on the joint density of `(x, p)`;
/// 4. negate the momentum unconditionally.
///
/// The two negations cancel on acceptance, so the chain keeps moving in a
/// persistent direction and only a rejection reverses it: the outgoing
/// momentum is then the negation of the refreshed incoming momentum.
/// Implemented as a conditional sign flip with exactly that net effect.
pub fn persistent_langevin_update(
    state: &mut ChainState,
    target: &dyn TargetModel,
    params: &DynamicsParams,
    policy: &AcceptancePolicy,
    rng: &mut RngHandle,
) -> Result<StepResult> {
    validate_dynamics(params)?;
    let dim = target.dim_continuous();
    let subset = resolve_subset(&params.coord_subset, dim)?;
    if state.p.is_none() {
        return Err(Error::NoMomentum);
    }

    let pot = state.potential_logpi();
    {
        let p = state.p.as_mut().unwrap();
        if params.alpha == 0.0 {
            for i in subset.clone() {
                p[i] = rng.standard_normal();
            }
        } else {
            let fresh = (1.0 - params.alpha * params.alpha).sqrt();
            for i in subset.clone() {
                p[i] = params.alpha * p[i] + fresh * rng.standard_normal();
            }
        }
    }
    let k0 = state.kinetic();
    state.cached_logpi = pot - k0;
    let h0 = k0 - pot;

    let eta = if params.jitter_shape > 0.0 {
        jitter_stepsize(params.eta, params.jitter_shape, rng)?
    } else {
        params.eta
    };

    let (x_new, p_new, log_ratio, pot1, k1) =
        propose_trajectory(state, target, eta, 1, &subset, h0);

    let (accepted, u) = decide(&mut state.v, policy, log_ratio, rng)?;
    if accepted {
        state.x = x_new;
        state.p = Some(p_new);
        state.cached_logpi = pot1 - k1;
    } else {
        let p = state.p.as_mut().unwrap();
        for i in subset {
            p[i] = -p[i];
        }
    }
    Ok(StepResult {
        rejected: !accepted,
        log_ratio,
        decision_u: u,
    })
}

fn validate_dynamics(params: &DynamicsParams) -> Result<()> {
    if !(params.eta > 0.0) {
        return Err(Error::BadParam {
            name: "eta",
            why: format!("must be positive, got {}", params.eta),
        });
    }
    if params.leapfrog_steps == 0 {
        return Err(Error::BadParam {
            name: "leapfrog_steps",
            why: "must be at least 1".into(),
        });
    }
    if !(0.0..1.0).contains(&params.alpha) {
        return Err(Error::BadParam {
            name: "alpha",
            why: format!("must be in [0, 1), got {}", params.alpha),
        });
    }
    if params.jitter_shape < 0.0 || params.jitter_shape.is_nan() {
        return Err(Error::BadParam {
            name: "jitter_shape",
            why: format!("must be zero or positive, got {}", params.jitter_shape),
        });
    }
    Ok(())
}

/// Resample every discrete coordinate from its conditional given `x` and
/// refresh the cached log density. Leaves `x`, `p` and `v` untouched.
pub fn binary_gibbs_update(
    state: &mut ChainState,
    target: &dyn TargetModel,
    rng: &mut RngHandle,
) -> Result<()> {
    if target.dim_discrete() == 0 {
        return Err(Error::NoDiscreteCoords);
    }
    target.sample_discrete(&state.x, rng, &mut state.w)?;
    state.recompute_logpi(target);
    Ok(())
}

/// One kernel application inside a schedule.
#[derive(Clone, Debug)]
pub enum ScheduleOp {
    Rwm(RwmParams),
    Hmc(DynamicsParams),
    PersistentLangevin(DynamicsParams),
    BinaryGibbs,
}

/// Nested repeat structure executed once per recorded group.
#[derive(Clone, Debug)]
pub enum ScheduleNode {
    Op(ScheduleOp),
    Repeat { count: usize, body: Vec<ScheduleNode> },
}

/// The updates making up one recorded group.
#[derive(Clone, Debug)]
pub struct UpdateSchedule {
    pub nodes: Vec<ScheduleNode>,
}

impl UpdateSchedule {
    /// A flat group of `count` identical updates.
    pub fn repeated(op: ScheduleOp, count: usize) -> Self {
        Self {
            nodes: vec![ScheduleNode::Repeat {
                count,
                body: vec![ScheduleNode::Op(op)],
            }],
        }
    }

    /// Accept/reject decisions per group (Gibbs sweeps do not count).
    pub fn decisions_per_group(&self) -> usize {
        Self::count(&self.nodes, &|op| match op {
            ScheduleOp::BinaryGibbs => 0,
            _ => 1,
        })
    }

    /// Leapfrog steps per group; the cost unit for gradient-based kernels.
    pub fn leapfrogs_per_group(&self) -> usize {
        Self::count(&self.nodes, &|op| match op {
            ScheduleOp::Hmc(p) => p.leapfrog_steps,
            ScheduleOp::PersistentLangevin(_) => 1,
            _ => 0,
        })
    }

    fn count(nodes: &[ScheduleNode], weight: &dyn Fn(&ScheduleOp) -> usize) -> usize {
        nodes
            .iter()
            .map(|n| match n {
                ScheduleNode::Op(op) => weight(op),
                ScheduleNode::Repeat { count, body } => count * Self::count(body, weight),
            })
            .sum()
    }
}

/// Snapshot recorded at the end of each group.
#[derive(Clone, Debug)]
pub struct GroupRecord {
    pub x: Vec<f64>,
    /// Potential energy `U = -log pi(x, w)` at the group end.
    pub energy: f64,
    /// Rejected decisions in the group.
    pub rejections: u32,
    /// Accept/reject decisions in the group.
    pub decisions: u32,
}

impl GroupRecord {
    pub fn rejection_fraction(&self) -> f64 {
        if self.decisions == 0 {
            0.0
        } else {
            f64::from(self.rejections) / f64::from(self.decisions)
        }
    }
}

/// Run `groups` schedule executions, handing each [`GroupRecord`] to
/// `on_record` and each kernel decision to `on_update`. Streaming variant
/// of [`run_schedule`] for long chains where keeping every record would be
/// wasteful.
pub fn run_groups(
    state: &mut ChainState,
    target: &dyn TargetModel,
    schedule: &UpdateSchedule,
    policy: &AcceptancePolicy,
    groups: usize,
    rng: &mut RngHandle,
    on_record: &mut dyn FnMut(GroupRecord),
    on_update: &mut dyn FnMut(&ScheduleOp, &StepResult),
) -> Result<()> {
    for _ in 0..groups {
        let mut tally = (0u32, 0u32);
        exec_group(&schedule.nodes, state, target, policy, rng, &mut tally, on_update)?;
        on_record(GroupRecord {
            x: state.x.clone(),
            energy: state.energy(),
            rejections: tally.0,
            decisions: tally.1,
        });
    }
    Ok(())
}

fn exec_group(
    nodes: &[ScheduleNode],
    state: &mut ChainState,
    target: &dyn TargetModel,
    policy: &AcceptancePolicy,
    rng: &mut RngHandle,
    tally: &mut (u32, u32),
    on_update: &mut dyn FnMut(&ScheduleOp, &StepResult),
) -> Result<()> {
    for node in nodes {
        match node {
            ScheduleNode::Op(op) => {
                match op {
                    ScheduleOp::BinaryGibbs => {
                        binary_gibbs_update(state, target, rng)?;
                    }
                    ScheduleOp::Rwm(params) => {
                        let r = rwm_update(state, target, params, policy, rng)?;
                        tally.1 += 1;
                        tally.0 += u32::from(r.rejected);
                        on_update(op, &r);
                    }
                    ScheduleOp::Hmc(params) => {
                        let r = hmc_update(state, target, params, policy, rng)?;
                        tally.1 += 1;
                        tally.0 += u32::from(r.rejected);
                        on_update(op, &r);
                    }
                    ScheduleOp::PersistentLangevin(params) => {
                        let r = persistent_langevin_update(state, target, params, policy, rng)?;
                        tally.1 += 1;
                        tally.0 += u32::from(r.rejected);
                        on_update(op, &r);
                    }
                }
            }
            ScheduleNode::Repeat { count, body } => {
                for _ in 0..*count {
                    exec_group(body, state, target, policy, rng, tally, on_update)?;
                }
            }
        }
    }
    Ok(())
}

/// Run `groups` schedule executions and collect one record per group.
pub fn run_schedule(
    state: &mut ChainState,
    target: &dyn TargetModel,
    schedule: &UpdateSchedule,
    policy: &AcceptancePolicy,
    groups: usize,
    rng: &mut RngHandle,
) -> Result<Vec<GroupRecord>> {
    let mut records = Vec::with_capacity(groups);
    run_groups(
        state,
        target,
        schedule,
        policy,
        groups,
        rng,
        &mut |rec| records.push(rec),
        &mut |_, _| {},
    )?;
    Ok(records)
}
