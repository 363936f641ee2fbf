//! Dense Levenberg-Marquardt solver over the window knots.
//!
//! Each knot contributes a 15-dof block in `(dtheta, dv, dp, dbg, dba)`
//! order. Preintegration factors couple consecutive knots, point-to-surfel
//! factors couple the pose components of consecutive knots, and an optional
//! diagonal prior anchors the head knot after marginalization. The robust
//! cost uses a Huber loss on the raw point-to-surfel distances.

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, SMatrix, SVector};

use crate::deskew::AssociationSet;
use crate::geometry::right_jacobian_inv;
use crate::preint::{ImuNoise, Mat15, PreintError, Preintegration, StateEstimate, Vec15};

use super::factors::{pts_factor_eval, FactorCounts};
use super::window::SolverConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeReport {
    pub outer_iterations: usize,
    /// Accepted LM steps summed over the outer iterations.
    pub inner_iterations: usize,
    /// Robust cost before the first step of the first outer iteration.
    pub initial_cost: f64,
    pub final_cost: f64,
    pub factor_counts: FactorCounts,
    /// Point-to-surfel coefficients of the last association pass.
    pub associations: usize,
    /// Points dropped for falling outside the pose coverage.
    pub dropped_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    Preint(PreintError),
    /// Damped normal equations could not be factorized.
    Singular,
    EmptyWindow,
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Preint(e) => write!(f, "preintegration factor failed: {e}"),
            SolveError::Singular => write!(f, "damped normal equations singular"),
            SolveError::EmptyWindow => write!(f, "no states to optimize"),
        }
    }
}

impl From<PreintError> for SolveError {
    fn from(e: PreintError) -> Self {
        SolveError::Preint(e)
    }
}

/// Diagonal prior on the head knot, in retract order.
#[derive(Debug, Clone)]
pub(crate) struct HeadPrior {
    pub reference: StateEstimate,
    /// Square-root information per component.
    pub sqrt_info: Vec15,
}

impl HeadPrior {
    fn residual(&self, x: &StateEstimate) -> (Vec15, Mat15) {
        let r_theta = self.reference.rot.inverse().compose(&x.rot).log();
        let mut r = Vec15::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&r_theta);
        r.fixed_rows_mut::<3>(3).copy_from(&(x.vel - self.reference.vel));
        r.fixed_rows_mut::<3>(6).copy_from(&(x.pos - self.reference.pos));
        r.fixed_rows_mut::<3>(9)
            .copy_from(&(x.bias_gyro - self.reference.bias_gyro));
        r.fixed_rows_mut::<3>(12)
            .copy_from(&(x.bias_accel - self.reference.bias_accel));
        let mut j = Mat15::identity();
        j.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&right_jacobian_inv(&r_theta));
        for k in 0..15 {
            r[k] *= self.sqrt_info[k];
            let mut row = j.row_mut(k);
            row *= self.sqrt_info[k];
        }
        (r, j)
    }
}

fn huber_cost(raw: f64, delta: f64) -> f64 {
    let a = raw.abs();
    if a <= delta {
        raw * raw
    } else {
        2.0 * delta * a - delta * delta
    }
}

fn huber_weight(raw: f64, delta: f64) -> f64 {
    let a = raw.abs();
    if a <= delta {
        1.0
    } else {
        libm::sqrt(delta / a)
    }
}

/// Robust total cost at the given states.
fn total_cost(
    states: &[StateEstimate],
    preints: &[Preintegration],
    assoc: &AssociationSet,
    prior: Option<&HeadPrior>,
    noise: &ImuNoise,
    cfg: &SolverConfig,
) -> Result<f64, SolveError> {
    let mut cost = 0.0;
    for (i, pre) in preints.iter().enumerate() {
        let r = pre.residual(&states[i], &states[i + 1], noise)?;
        cost += r.residual.norm_squared();
    }
    let inv_var = 1.0 / (cfg.lidar_sigma * cfg.lidar_sigma);
    for m in 0..assoc.num_intervals() {
        for c in assoc.interval(m) {
            let eval = pts_factor_eval(c, &states[m], &states[m + 1], cfg.lidar_sigma);
            let raw = eval.residual * cfg.lidar_sigma;
            cost += huber_cost(raw, cfg.huber_delta) * inv_var;
        }
    }
    if let Some(p) = prior {
        let (r, _) = p.residual(&states[0]);
        cost += r.norm_squared();
    }
    Ok(0.5 * cost)
}

/// Rank update of the normal equations from one factor touching the listed
/// knot blocks.
fn scatter<const R: usize>(
    h: &mut DMatrix<f64>,
    g: &mut DVector<f64>,
    blocks: &[(usize, SMatrix<f64, R, 15>)],
    r: &SVector<f64, R>,
) {
    for (bi, ji) in blocks {
        let gi = ji.transpose() * r;
        for k in 0..15 {
            g[bi * 15 + k] -= gi[k];
        }
        for (bj, jj) in blocks {
            let hij = ji.transpose() * jj;
            for a in 0..15 {
                for b in 0..15 {
                    h[(bi * 15 + a, bj * 15 + b)] += hij[(a, b)];
                }
            }
        }
    }
}

fn build_normal_equations(
    states: &[StateEstimate],
    preints: &[Preintegration],
    assoc: &AssociationSet,
    prior: Option<&HeadPrior>,
    noise: &ImuNoise,
    cfg: &SolverConfig,
) -> Result<(DMatrix<f64>, DVector<f64>, FactorCounts), SolveError> {
    let dim = 15 * states.len();
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    let mut counts = FactorCounts::default();

    for (i, pre) in preints.iter().enumerate() {
        let r = pre.residual(&states[i], &states[i + 1], noise)?;
        scatter(&mut h, &mut g, &[(i, r.jac_m), (i + 1, r.jac_m1)], &r.residual);
        counts.preintegration += 1;
    }

    for m in 0..assoc.num_intervals() {
        for c in assoc.interval(m) {
            let eval = pts_factor_eval(c, &states[m], &states[m + 1], cfg.lidar_sigma);
            let raw = eval.residual * cfg.lidar_sigma;
            let w = huber_weight(raw, cfg.huber_delta);
            let mut row_m = SMatrix::<f64, 1, 15>::zeros();
            row_m.fixed_view_mut::<1, 3>(0, 0).copy_from(&eval.j_theta_m);
            row_m.fixed_view_mut::<1, 3>(0, 6).copy_from(&eval.j_p_m);
            let mut row_m1 = SMatrix::<f64, 1, 15>::zeros();
            row_m1.fixed_view_mut::<1, 3>(0, 0).copy_from(&eval.j_theta_m1);
            row_m1.fixed_view_mut::<1, 3>(0, 6).copy_from(&eval.j_p_m1);
            scatter(
                &mut h,
                &mut g,
                &[(m, row_m * w), (m + 1, row_m1 * w)],
                &SVector::<f64, 1>::new(eval.residual * w),
            );
            counts.point_to_surfel += 1;
        }
    }
    counts.degenerate_geometry = counts.point_to_surfel == 0;

    if let Some(p) = prior {
        let (r, j) = p.residual(&states[0]);
        scatter(&mut h, &mut g, &[(0, j)], &r);
        counts.prior += 1;
    }
    Ok((h, g, counts))
}

pub(crate) struct LmOutcome {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub counts: FactorCounts,
}

/// Run the damped Gauss-Newton loop until convergence or the iteration
/// budget runs out. `states` is updated in place with every accepted step.
pub(crate) fn lm_optimize(
    states: &mut [StateEstimate],
    preints: &[Preintegration],
    assoc: &AssociationSet,
    prior: Option<&HeadPrior>,
    noise: &ImuNoise,
    cfg: &SolverConfig,
) -> Result<LmOutcome, SolveError> {
    if states.is_empty() {
        return Err(SolveError::EmptyWindow);
    }
    debug_assert_eq!(states.len(), preints.len() + 1);
    debug_assert_eq!(assoc.num_intervals(), preints.len());

    let dim = 15 * states.len();
    let mut cost = total_cost(states, preints, assoc, prior, noise, cfg)?;
    let initial_cost = cost;
    let mut lambda = cfg.lambda_init;
    let mut iterations = 0;
    let mut counts = FactorCounts::default();
    let mut converged = false;

    for _ in 0..cfg.inner_iterations {
        let (h, g, c) = build_normal_equations(states, preints, assoc, prior, noise, cfg)?;
        counts = c;
        let mut accepted = false;
        for _ in 0..8 {
            let mut damped = h.clone();
            for k in 0..dim {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-9);
            }
            let Some(chol) = Cholesky::new(damped) else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&g);
            let candidate: Vec<StateEstimate> = states
                .iter()
                .enumerate()
                .map(|(i, x)| x.retract(&delta.fixed_rows::<15>(15 * i).into_owned()))
                .collect();
            let new_cost = total_cost(&candidate, preints, assoc, prior, noise, cfg)?;
            if new_cost <= cost {
                let rel = (cost - new_cost) / cost.max(1e-18);
                states.copy_from_slice(&candidate);
                cost = new_cost;
                lambda = (lambda * 0.3).max(1e-12);
                iterations += 1;
                accepted = true;
                if rel < 1e-10 || delta.norm() < 1e-12 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted || converged {
            break;
        }
    }

    Ok(LmOutcome {
        initial_cost,
        final_cost: cost,
        iterations,
        counts,
    })
}
