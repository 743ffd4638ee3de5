//! Chain state and the retained acceptance variable.
//!
//! The Metropolis accept/reject test `u < pi(x*)/pi(x)` is viewed here
//! through an auxiliary variable `v` kept in the state across updates,
//! with `u = |v|`. Two policies implement the test:
//!
//! * [`AcceptancePolicy::Standard`]: a fresh `u ~ Uniform[0,1)` is drawn for
//!   every decision and discarded afterwards.
//! * [`AcceptancePolicy::NonReversible`]: `v` is first translated by
//!   `delta` plus optional uniform noise and wrapped back into `[-1, 1]`
//!   ([`advance_slice`]), then `u = |v|` decides the move. On acceptance
//!   `v` is rescaled by the density ratio ([`accept_with_slice`]) so that
//!   `|v| * pi(x)` stays constant across the move. The wrapped translation
//!   is a measure-preserving bijection of `[-1, 1]`, so uniform `v` stays
//!   uniform and the joint chain leaves `pi(x) * Uniform(v)` invariant
//!   while suppressing random-walk behaviour in the acceptance variable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::targets::TargetModel;

/// Seedable RNG used everywhere in the crate.
///
/// Same seed, same build: bit-identical draw sequence. The draw order of
/// every kernel is fixed and documented there, which makes whole runs
/// reproducible from the experiment seed alone.
#[derive(Clone, Debug)]
pub struct RngHandle {
    rng: ChaCha8Rng,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    /// Uniform on `[-1, 1)`.
    pub fn uniform_signed(&mut self) -> f64 {
        2.0 * self.rng.random::<f64>() - 1.0
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Gamma with the given shape, scaled to mean 1.
    pub fn gamma_mean_one(&mut self, shape: f64) -> Result<f64> {
        let gamma = Gamma::new(shape, 1.0 / shape).map_err(|e| Error::BadParam {
            name: "shape",
            why: e.to_string(),
        })?;
        Ok(gamma.sample(&mut self.rng))
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }
}

/// Full state of one chain.
///
/// Invariants maintained by the kernels:
/// * `v` is in `[-1, 1]`;
/// * `p`, when present, has the same length as `x`;
/// * `cached_logpi` equals the target log density at `(x, w)` minus the
///   kinetic term `|p|^2 / 2` when `p` is present.
#[derive(Clone, Debug)]
pub struct ChainState {
    /// Continuous coordinates.
    pub x: Vec<f64>,
    /// Discrete (binary) coordinates; empty for fully continuous targets.
    pub w: Vec<bool>,
    /// Momentum, present only for dynamics-based kernels.
    pub p: Option<Vec<f64>>,
    /// Retained acceptance variable, uniform on `[-1, 1]` at stationarity.
    pub v: f64,
    /// Log joint density of the current state (including the momentum term
    /// when `p` is present), cached to avoid re-evaluation.
    pub cached_logpi: f64,
}

impl ChainState {
    /// Kinetic energy `|p|^2 / 2`, zero when no momentum is carried.
    pub fn kinetic(&self) -> f64 {
        match &self.p {
            Some(p) => 0.5 * p.iter().map(|pi| pi * pi).sum::<f64>(),
            None => 0.0,
        }
    }

    /// Log target density at `(x, w)` alone, reconstructed from the cache.
    pub fn potential_logpi(&self) -> f64 {
        self.cached_logpi + self.kinetic()
    }

    /// Potential energy `U = -log pi(x, w)`.
    pub fn energy(&self) -> f64 {
        -self.potential_logpi()
    }

    /// Recompute `cached_logpi` from scratch.
    pub fn recompute_logpi(&mut self, target: &dyn TargetModel) {
        self.cached_logpi = target.log_density(&self.x, &self.w) - self.kinetic();
    }
}

/// How accept/reject decisions consume randomness.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AcceptancePolicy {
    /// Fresh uniform per decision.
    Standard,
    /// Persistent `v`, translated by `delta` (plus uniform noise on
    /// `[-noise_half_width, noise_half_width]` when the half width is
    /// positive) before each decision.
    NonReversible { delta: f64, noise_half_width: f64 },
}

/// Outcome of a slice-based acceptance test.
#[derive(Clone, Copy, Debug)]
pub struct AcceptDecision {
    pub accepted: bool,
    /// Value `v` takes after the decision: rescaled on acceptance,
    /// unchanged on rejection.
    pub new_v: f64,
}

/// Largest f64 strictly below 1; keeps `|new_v| < 1` after a rescale whose
/// exact value would round to 1.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn wrap_into_unit(mut t: f64) -> f64 {
    // Cheap reduction first so huge shifts don't spin the loops.
    if t.abs() > 3.0 {
        t = (t + 1.0).rem_euclid(2.0) - 1.0;
    }
    while t > 1.0 {
        t -= 2.0;
    }
    while t < -1.0 {
        t += 2.0;
    }
    t
}

/// Translate `v` by the policy's `delta` plus noise and wrap the result
/// back into `[-1, 1]` by shifts of 2.
///
/// Under the `Standard` policy `v` is returned unchanged. No noise draw is
/// consumed when `noise_half_width` is zero, so noiseless runs stay
/// reproducible independently of the noise code path.
///
/// Panics if the shift is non-finite (callers validate `delta` upfront).
pub fn advance_slice(v: f64, policy: &AcceptancePolicy, rng: &mut RngHandle) -> f64 {
    match *policy {
        AcceptancePolicy::Standard => v,
        AcceptancePolicy::NonReversible {
            delta,
            noise_half_width,
        } => {
            debug_assert!((-1.0..=1.0).contains(&v), "v out of [-1,1]: {v}");
            let noise = if noise_half_width > 0.0 {
                noise_half_width * rng.uniform_signed()
            } else {
                0.0
            };
            let t = v + delta + noise;
            assert!(t.is_finite(), "non-finite slice shift");
            wrap_into_unit(t)
        }
    }
}

/// Accept/reject against the retained variable: accept iff
/// `log|v| < log_ratio` (strict, so a ratio of `-inf` always rejects and
/// `v = 0` accepts anything else).
///
/// On acceptance `v` is rescaled by the inverse density ratio, in log
/// domain: `new_v = sign(v) * exp(log|v| - log_ratio)`. This keeps
/// `|v| * pi(x)` invariant across the move and guarantees the reverse move
/// would also be accepted.
pub fn accept_with_slice(v: f64, log_ratio: f64) -> Result<AcceptDecision> {
    if log_ratio.is_nan() {
        return Err(Error::NanLogRatio);
    }
    debug_assert!((-1.0..=1.0).contains(&v), "v out of [-1,1]: {v}");
    let log_u = v.abs().ln();
    let accepted = log_u < log_ratio;
    let new_v = if !accepted {
        v
    } else if v == 0.0 {
        0.0
    } else {
        let mag = (log_u - log_ratio).exp();
        // mag < 1 mathematically; clamp the rounding edge case.
        v.signum() * mag.min(BELOW_ONE)
    };
    Ok(AcceptDecision { accepted, new_v })
}

pub(crate) struct StandardDraw {
    pub accepted: bool,
    /// The uniform consumed by the decision (recorded for traces).
    pub u: f64,
}

pub(crate) fn accept_standard_draw(rng: &mut RngHandle, log_ratio: f64) -> Result<StandardDraw> {
    if log_ratio.is_nan() {
        return Err(Error::NanLogRatio);
    }
    let u = rng.uniform();
    // log_ratio >= 0 always accepts; skipping the comparison avoids
    // exponentiating large ratios.
    let accepted = log_ratio >= 0.0 || u.ln() < log_ratio;
    Ok(StandardDraw { accepted, u })
}

/// Plain Metropolis test with a fresh uniform: accept iff
/// `log(u) < log_ratio` for `u ~ Uniform[0,1)`.
pub fn accept_standard(rng: &mut RngHandle, log_ratio: f64) -> Result<bool> {
    accept_standard_draw(rng, log_ratio).map(|d| d.accepted)
}

/// Build a fresh chain state: `v ~ Uniform[-1, 1)`, then `p ~ N(0, I)` when
/// requested (in that order), and the log density cache filled in.
pub fn init_state(
    target: &dyn TargetModel,
    x0: &[f64],
    w0: &[bool],
    with_momentum: bool,
    rng: &mut RngHandle,
) -> Result<ChainState> {
    if x0.len() != target.dim_continuous() {
        return Err(Error::DimMismatch {
            what: "x0",
            expected: target.dim_continuous(),
            got: x0.len(),
        });
    }
    if w0.len() != target.dim_discrete() {
        return Err(Error::DimMismatch {
            what: "w0",
            expected: target.dim_discrete(),
            got: w0.len(),
        });
    }
    let v = rng.uniform_signed();
    let p = if with_momentum {
        Some((0..x0.len()).map(|_| rng.standard_normal()).collect())
    } else {
        None
    };
    let mut state = ChainState {
        x: x0.to_vec(),
        w: w0.to_vec(),
        p,
        v,
        cached_logpi: 0.0,
    };
    state.recompute_logpi(target);
    if !state.cached_logpi.is_finite() {
        return Err(Error::NonFinite {
            context: "initial log density",
        });
    }
    Ok(state)
}
