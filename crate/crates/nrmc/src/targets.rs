//! Benchmark target distributions.
//!
//! All log densities are unnormalized. Gradients are with respect to the
//! continuous coordinates only; discrete coordinates are resampled through
//! [`TargetModel::sample_discrete`].

use crate::chain::RngHandle;
use crate::error::{Error, Result};

/// Potential/log-density values.
pub type EnergyValue = f64;

/// A target distribution over continuous coordinates `x` and optional
/// binary coordinates `w`.
pub trait TargetModel: Send + Sync {
    fn dim_continuous(&self) -> usize;

    fn dim_discrete(&self) -> usize {
        0
    }

    /// Unnormalized log density at `(x, w)`.
    fn log_density(&self, x: &[f64], w: &[bool]) -> EnergyValue;

    /// Gradient of `log_density` with respect to `x`, written into `out`.
    fn gradient(&self, x: &[f64], w: &[bool], out: &mut [f64]);

    /// Replace all entries of `w` with a draw from their conditional
    /// distribution given `x`.
    fn sample_discrete(&self, _x: &[f64], _rng: &mut RngHandle, _w: &mut [bool]) -> Result<()> {
        Err(Error::NoDiscreteCoords)
    }

    /// Reference expectations of named scalars, for diagnostics that use a
    /// known mean. Names match the harness scalar names.
    fn known_means(&self) -> Vec<(&'static str, f64)> {
        Vec::new()
    }
}

/// Look up a named entry of [`TargetModel::known_means`].
pub fn known_mean(target: &dyn TargetModel, name: &str) -> Option<f64> {
    target
        .known_means()
        .into_iter()
        .find(|(n, _)| *n == name)
        .map(|(_, m)| m)
}

/// Product of `dim` standard normals: `U = sum x_i^2 / 2`.
pub struct IidGaussian {
    dim: usize,
}

/// `dim` standard normals, build with [`iid_gaussian`].
pub fn iid_gaussian(dim: usize) -> Result<IidGaussian> {
    if dim == 0 {
        return Err(Error::BadParam {
            name: "dim",
            why: "must be at least 1".into(),
        });
    }
    Ok(IidGaussian { dim })
}

impl TargetModel for IidGaussian {
    fn dim_continuous(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64], _w: &[bool]) -> f64 {
        -0.5 * x.iter().map(|xi| xi * xi).sum::<f64>()
    }

    fn gradient(&self, x: &[f64], _w: &[bool], out: &mut [f64]) {
        for (o, xi) in out.iter_mut().zip(x) {
            *o = -xi;
        }
    }

    fn known_means(&self) -> Vec<(&'static str, f64)> {
        vec![("coord0", 0.0), ("energy", self.dim as f64 / 2.0)]
    }
}

/// Gaussian made of independent pairs `(x_a, x_b)` with unit marginal
/// variance and correlation `rho` within each pair:
/// `U = sum over pairs (x_a^2 - 2 rho x_a x_b + x_b^2) / (2 (1 - rho^2))`.
pub struct CorrelatedPairsGaussian {
    dim: usize,
    rho: f64,
    inv_one_minus_rho2: f64,
}

/// Build with an even `dim` and `|rho| < 1`.
pub fn correlated_pairs_gaussian(dim: usize, rho: f64) -> Result<CorrelatedPairsGaussian> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::BadParam {
            name: "dim",
            why: format!("must be even and positive, got {dim}"),
        });
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::BadParam {
            name: "rho",
            why: format!("must satisfy |rho| < 1, got {rho}"),
        });
    }
    Ok(CorrelatedPairsGaussian {
        dim,
        rho,
        inv_one_minus_rho2: 1.0 / (1.0 - rho * rho),
    })
}

impl CorrelatedPairsGaussian {
    pub fn rho(&self) -> f64 {
        self.rho
    }
}

impl TargetModel for CorrelatedPairsGaussian {
    fn dim_continuous(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64], _w: &[bool]) -> f64 {
        let mut q = 0.0;
        for pair in x.chunks_exact(2) {
            let (a, b) = (pair[0], pair[1]);
            q += a * a - 2.0 * self.rho * a * b + b * b;
        }
        -0.5 * q * self.inv_one_minus_rho2
    }

    fn gradient(&self, x: &[f64], _w: &[bool], out: &mut [f64]) {
        for i in (0..x.len()).step_by(2) {
            let (a, b) = (x[i], x[i + 1]);
            out[i] = -(a - self.rho * b) * self.inv_one_minus_rho2;
            out[i + 1] = -(b - self.rho * a) * self.inv_one_minus_rho2;
        }
    }

    fn known_means(&self) -> Vec<(&'static str, f64)> {
        vec![("coord0", 0.0), ("energy", self.dim as f64 / 2.0)]
    }
}

/// Two tightly coupled continuous coordinates plus binary observations:
/// `x0 ~ N(0,1)`, `x1 | x0 ~ N(x0, sd^2)` with `sd = 0.04`, and `n_flips`
/// binary variables with `P(w_i = 1 | x0) = 1 / (1 + exp(x0))`.
///
/// `U = x0^2/2 + (x1 - x0)^2 / (2 sd^2)
///    + sum_i [softplus(x0) - (1 - w_i) x0]`.
pub struct MixedLogisticModel {
    n_flips: usize,
    sd: f64,
}

/// The mixed continuous/binary benchmark target (20 binary variables,
/// conditional sd 0.04).
pub fn mixed_logistic_model() -> MixedLogisticModel {
    MixedLogisticModel {
        n_flips: 20,
        sd: 0.04,
    }
}

/// Reference value of `P(-0.5 < x0 < 1.5)` under the mixed model,
/// `Phi(1.5) - Phi(-0.5)`.
pub const MIXED_INDICATOR_MEAN: f64 = 0.6246553;

/// `log(1 + exp(t))`, stable over the whole f64 range.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + exp(-t))`, stable over the whole f64 range.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl MixedLogisticModel {
    /// `P(w_i = 1 | x0)`.
    pub fn flip_probability(&self, x0: f64) -> f64 {
        sigmoid(-x0)
    }
}

impl TargetModel for MixedLogisticModel {
    fn dim_continuous(&self) -> usize {
        2
    }

    fn dim_discrete(&self) -> usize {
        self.n_flips
    }

    fn log_density(&self, x: &[f64], w: &[bool]) -> f64 {
        let (x0, x1) = (x[0], x[1]);
        let resid = (x1 - x0) / self.sd;
        let zeros = w.iter().filter(|&&wi| !wi).count() as f64;
        let flips = self.n_flips as f64 * softplus(x0) - zeros * x0;
        -(0.5 * x0 * x0 + 0.5 * resid * resid + flips)
    }

    fn gradient(&self, x: &[f64], w: &[bool], out: &mut [f64]) {
        let (x0, x1) = (x[0], x[1]);
        let inv_var = 1.0 / (self.sd * self.sd);
        let zeros = w.iter().filter(|&&wi| !wi).count() as f64;
        let du0 = x0 - (x1 - x0) * inv_var + self.n_flips as f64 * sigmoid(x0) - zeros;
        let du1 = (x1 - x0) * inv_var;
        out[0] = -du0;
        out[1] = -du1;
    }

    fn sample_discrete(&self, x: &[f64], rng: &mut RngHandle, w: &mut [bool]) -> Result<()> {
        if w.len() != self.n_flips {
            return Err(Error::DimMismatch {
                what: "w",
                expected: self.n_flips,
                got: w.len(),
            });
        }
        let q = self.flip_probability(x[0]);
        for wi in w.iter_mut() {
            *wi = rng.bernoulli(q);
        }
        Ok(())
    }

    fn known_means(&self) -> Vec<(&'static str, f64)> {
        vec![("coord0", 0.0), ("indicator", MIXED_INDICATOR_MEAN)]
    }
}

/// Compare the analytic gradient against central differences with step `h`.
/// Returns the largest error over coordinates, relative to
/// `max(1, |gradient|)` per coordinate.
pub fn finite_difference_gradient_check(
    target: &dyn TargetModel,
    x: &[f64],
    w: &[bool],
    h: f64,
) -> Result<f64> {
    if x.len() != target.dim_continuous() {
        return Err(Error::DimMismatch {
            what: "x",
            expected: target.dim_continuous(),
            got: x.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::BadParam {
            name: "h",
            why: format!("must be positive, got {h}"),
        });
    }
    let mut grad = vec![0.0; x.len()];
    target.gradient(x, w, &mut grad);
    let mut xt = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        xt[i] = x[i] + h;
        let up = target.log_density(&xt, w);
        xt[i] = x[i] - h;
        let down = target.log_density(&xt, w);
        xt[i] = x[i];
        let fd = (up - down) / (2.0 * h);
        let err = (fd - grad[i]).abs() / grad[i].abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
