use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Linear, NnError};

/// Largest admissible `|rho|`.
pub const RHO_LIMIT: f64 = 1.0 - 1e-6;

/// Smallest standard deviation used when sampling.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Bivariate normal over the next displacement (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: [f64; 2],
    pub sigma: [f64; 2],
    pub rho: f64,
}

impl GaussianParams {
    pub fn is_valid(&self) -> bool {
        self.sigma[0] > 0.0 && self.sigma[1] > 0.0 && self.rho.abs() < 1.0 && self.mu.iter().all(|m| m.is_finite())
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let [sx, sy] = self.sigma;
        let cxy = self.rho * sx * sy;
        [[sx * sx, cxy], [cxy, sy * sy]]
    }
}

/// Maps the five raw head outputs to distribution parameters:
/// `mu = (o1, o2)`, `sigma = exp(o3, o4)`, `rho = tanh(o5)` clamped to
/// `RHO_LIMIT`.
pub fn gaussian_from_raw(raw: &[f64; 5]) -> GaussianParams {
    GaussianParams {
        mu: [raw[0], raw[1]],
        sigma: [raw[2].exp(), raw[3].exp()],
        rho: raw[4].tanh().clamp(-RHO_LIMIT, RHO_LIMIT),
    }
}

pub fn gaussian_head(h: &[f64], head: &Linear) -> Result<GaussianParams, NnError> {
    if head.out_dim != 5 {
        return Err(NnError::ShapeMismatch(format!(
            "head must have 5 outputs, has {}",
            head.out_dim
        )));
    }
    let raw = head.forward(h)?;
    Ok(gaussian_from_raw(&[raw[0], raw[1], raw[2], raw[3], raw[4]]))
}

fn nll_core(dx: f64, dy: f64, log_sx: f64, log_sy: f64, sx: f64, sy: f64, rho: f64) -> f64 {
    let q = 1.0 - rho * rho;
    let ux = dx / sx;
    let uy = dy / sy;
    let z = ux * ux + uy * uy - 2.0 * rho * ux * uy;
    TAU.ln() + log_sx + log_sy + 0.5 * q.ln() + z / (2.0 * q)
}

/// `-log N(target; mu, Sigma)`.
pub fn nll(params: &GaussianParams, target: [f64; 2]) -> Result<f64, NnError> {
    let [sx, sy] = params.sigma;
    if !(sx > 0.0 && sy > 0.0) {
        return Err(NnError::NumericalOverflow(format!(
            "non-positive sigma {:?}",
            params.sigma
        )));
    }
    let rho = params.rho.clamp(-RHO_LIMIT, RHO_LIMIT);
    let v = nll_core(
        target[0] - params.mu[0],
        target[1] - params.mu[1],
        sx.ln(),
        sy.ln(),
        sx,
        sy,
        rho,
    );
    if v.is_finite() {
        Ok(v)
    } else {
        Err(NnError::NumericalOverflow(format!("nll is {v}")))
    }
}

/// NLL of `target` under the distribution encoded by raw head outputs, and
/// its gradient with respect to those outputs.
pub fn nll_raw_with_grad(raw: &[f64; 5], target: [f64; 2]) -> (f64, [f64; 5]) {
    let (sx, sy) = (raw[2].exp(), raw[3].exp());
    let t = raw[4].tanh();
    let clamped = t.abs() > RHO_LIMIT;
    let rho = t.clamp(-RHO_LIMIT, RHO_LIMIT);
    let q = 1.0 - rho * rho;
    let (dx, dy) = (target[0] - raw[0], target[1] - raw[1]);
    let (ux, uy) = (dx / sx, dy / sy);
    let z = ux * ux + uy * uy - 2.0 * rho * ux * uy;
    let loss = nll_core(dx, dy, raw[2], raw[3], sx, sy, rho);
    let ax = (ux - rho * uy) / q;
    let ay = (uy - rho * ux) / q;
    let d_rho = -rho / q - ux * uy / q + rho * z / (q * q);
    let grad = [
        -ax / sx,
        -ay / sy,
        1.0 - ux * ax,
        1.0 - uy * ay,
        if clamped { 0.0 } else { d_rho * (1.0 - t * t) },
    ];
    (loss, grad)
}

/// Draws one displacement through the Cholesky factor of the covariance.
pub fn sample<R: Rng + ?Sized>(params: &GaussianParams, rng: &mut R) -> [f64; 2] {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let sx = params.sigma[0].max(SIGMA_FLOOR);
    let sy = params.sigma[1].max(SIGMA_FLOOR);
    let rho = params.rho.clamp(-RHO_LIMIT, RHO_LIMIT);
    [
        params.mu[0] + sx * z1,
        params.mu[1] + sy * (rho * z1 + (1.0 - rho * rho).sqrt() * z2),
    ]
}
