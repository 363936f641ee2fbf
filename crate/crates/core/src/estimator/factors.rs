//! Continuous-time point-to-surfel factor.
//!
//! The residual couples a raw point at time `t_s` to its two bracketing
//! knots through pose interpolation:
//!
//! `r = n^T (R_s f + p_s - mu)` with
//! `R_s = R_m Exp(s Log(R_m^-1 R_m1))` and `p_s = (1-s) p_m + s p_m1`.

use nalgebra::RowVector3;

use crate::deskew::PtsCoeff;
use crate::geometry::{left_jacobian_inv, right_jacobian, right_jacobian_inv, skew, Rotation};
#[cfg(test)]
use crate::geometry::Vec3;
use crate::preint::StateEstimate;

pub type RowVec3 = RowVector3<f64>;

/// Whitened residual and Jacobians with respect to the bracketing poses.
/// Rotation perturbations act on the right, translations additively.
#[derive(Debug, Clone, Copy)]
pub struct PtsFactorEval {
    pub residual: f64,
    pub j_theta_m: RowVec3,
    pub j_p_m: RowVec3,
    pub j_theta_m1: RowVec3,
    pub j_p_m1: RowVec3,
}

/// Evaluate one PTS factor, whitened by `1 / sigma`.
pub fn pts_factor_eval(
    coeff: &PtsCoeff,
    xm: &StateEstimate,
    xm1: &StateEstimate,
    sigma: f64,
) -> PtsFactorEval {
    let s = coeff.s;
    let inv_sigma = coeff.weight / sigma;
    let phi = xm.rot.inverse().compose(&xm1.rot).log();
    let interp = Rotation::exp(&(phi * s));
    let rm = xm.rot.matrix();
    let a = interp.matrix();
    let f = coeff.point;
    let world = xm.rot.compose(&interp).rotate(&f) + xm.pos * (1.0 - s) + xm1.pos * s;
    let residual = coeff.normal.dot(&(world - coeff.mean)) * inv_sigma;

    let n_t = coeff.normal.transpose();
    let jr_s = right_jacobian(&(phi * s));
    // chain rule through the interpolated rotation
    let d_m = -rm * skew(&(a * f)) + rm * a * skew(&f) * (jr_s * s) * left_jacobian_inv(&phi);
    let d_m1 = -rm * a * skew(&f) * (jr_s * s) * right_jacobian_inv(&phi);

    PtsFactorEval {
        residual,
        j_theta_m: n_t * d_m * inv_sigma,
        j_p_m: n_t * ((1.0 - s) * inv_sigma),
        j_theta_m1: n_t * d_m1 * inv_sigma,
        j_p_m1: n_t * (s * inv_sigma),
    }
}

/// Factor counts of one window cost build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FactorCounts {
    pub preintegration: usize,
    pub point_to_surfel: usize,
    pub prior: usize,
    /// True when no PTS factor survived association; the cost is then
    /// IMU-only and the lidar leaves the estimate unconstrained.
    pub degenerate_geometry: bool,
}

impl FactorCounts {
    pub fn total(&self) -> usize {
        self.preintegration + self.point_to_surfel + self.prior
    }
}
