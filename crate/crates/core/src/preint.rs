//! IMU state propagation and on-manifold preintegration.
//!
//! Propagation integrates the kinematics with gravity using the midpoint
//! rule over consecutive samples. Preintegration accumulates the gravity-free
//! relative motion over one knot interval together with first-order bias
//! Jacobians and a 15x15 covariance with block order
//! `(dtheta, dv, dp, dbg, dba)`. The same block order is used for residuals
//! and state perturbations throughout the crate (rotation perturbed on the
//! right, everything else additive).

use alloc::vec::Vec;
use core::fmt;

use nalgebra::{SMatrix, SVector};

use crate::deskew::PropagatedPoseSeq;
use crate::geometry::{right_jacobian, right_jacobian_inv, skew, Mat3, Pose, Rotation, Timestamp, Vec3};

pub type Mat15 = SMatrix<f64, 15, 15>;
pub type Vec15 = SVector<f64, 15>;

/// One gyro + accelerometer sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: Timestamp,
    /// Angular rate, body frame (rad/s).
    pub gyro: Vec3,
    /// Specific force, body frame (m/s^2).
    pub accel: Vec3,
}

/// Sensor noise model plus the world-frame gravity vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoise {
    /// Gyro noise density (rad/s/sqrt(Hz)).
    pub gyro_noise: f64,
    /// Accelerometer noise density (m/s^2/sqrt(Hz)).
    pub accel_noise: f64,
    /// Gyro bias random walk (rad/s^2/sqrt(Hz)).
    pub gyro_walk: f64,
    /// Accelerometer bias random walk (m/s^3/sqrt(Hz)).
    pub accel_walk: f64,
    pub gravity: Vec3,
}

impl Default for ImuNoise {
    fn default() -> Self {
        ImuNoise {
            gyro_noise: 1e-3,
            accel_noise: 1e-2,
            gyro_walk: 1e-5,
            accel_walk: 1e-4,
            gravity: Vec3::new(0.0, 0.0, -9.81),
        }
    }
}

/// Full state at one knot: orientation, position, velocity, IMU biases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEstimate {
    pub rot: Rotation,
    pub pos: Vec3,
    pub vel: Vec3,
    pub bias_gyro: Vec3,
    pub bias_accel: Vec3,
}

impl StateEstimate {
    pub fn identity() -> Self {
        StateEstimate {
            rot: Rotation::identity(),
            pos: Vec3::zeros(),
            vel: Vec3::zeros(),
            bias_gyro: Vec3::zeros(),
            bias_accel: Vec3::zeros(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose::new(self.rot, self.pos)
    }

    /// Apply a local perturbation in `(dtheta, dv, dp, dbg, dba)` order.
    pub fn retract(&self, delta: &Vec15) -> StateEstimate {
        StateEstimate {
            rot: self.rot.compose(&Rotation::exp(&Vec3::new(delta[0], delta[1], delta[2]))),
            vel: self.vel + Vec3::new(delta[3], delta[4], delta[5]),
            pos: self.pos + Vec3::new(delta[6], delta[7], delta[8]),
            bias_gyro: self.bias_gyro + Vec3::new(delta[9], delta[10], delta[11]),
            bias_accel: self.bias_accel + Vec3::new(delta[12], delta[13], delta[14]),
        }
    }
}

impl Default for StateEstimate {
    fn default() -> Self {
        Self::identity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreintError {
    EmptyInterval,
    UnorderedSamples,
    SingularCovariance,
}

impl fmt::Display for PreintError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreintError::EmptyInterval => write!(f, "no IMU samples in interval"),
            PreintError::UnorderedSamples => write!(f, "IMU samples not strictly increasing"),
            PreintError::SingularCovariance => write!(f, "preintegration covariance singular"),
        }
    }
}

fn check_ordered(samples: &[ImuSample]) -> Result<(), PreintError> {
    if samples.is_empty() {
        return Err(PreintError::EmptyInterval);
    }
    if samples.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(PreintError::UnorderedSamples);
    }
    Ok(())
}

/// Forward-propagate `x0` through the samples with gravity, emitting a pose
/// at every sample time. The first sample's time is taken as the time of
/// `x0`.
pub fn propagate(
    x0: &StateEstimate,
    samples: &[ImuSample],
    noise: &ImuNoise,
) -> Result<(PropagatedPoseSeq, StateEstimate), PreintError> {
    check_ordered(samples)?;
    let mut x = *x0;
    let mut entries = Vec::with_capacity(samples.len());
    entries.push((samples[0].t, x.pose()));
    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        let omega = (w[0].gyro + w[1].gyro) * 0.5 - x.bias_gyro;
        let acc_b = (w[0].accel + w[1].accel) * 0.5 - x.bias_accel;
        // evaluate the body-to-world rotation at mid-step
        let rot_mid = x.rot.compose(&Rotation::exp(&(omega * (0.5 * dt))));
        let acc_w = rot_mid.rotate(&acc_b) + noise.gravity;
        x.pos += x.vel * dt + acc_w * (0.5 * dt * dt);
        x.vel += acc_w * dt;
        x.rot = x.rot.compose(&Rotation::exp(&(omega * dt)));
        entries.push((w[1].t, x.pose()));
    }
    Ok((PropagatedPoseSeq::new(entries).map_err(|_| PreintError::UnorderedSamples)?, x))
}

/// Exact algebraic inverse of [`propagate`]: given the state at the last
/// sample time, recover the earlier states.
pub fn propagate_backward(
    x1: &StateEstimate,
    samples: &[ImuSample],
    noise: &ImuNoise,
) -> Result<(PropagatedPoseSeq, StateEstimate), PreintError> {
    check_ordered(samples)?;
    let mut x = *x1;
    let mut entries = Vec::with_capacity(samples.len());
    entries.push((samples[samples.len() - 1].t, x.pose()));
    for w in samples.windows(2).rev() {
        let dt = w[1].t - w[0].t;
        let omega = (w[0].gyro + w[1].gyro) * 0.5 - x.bias_gyro;
        let acc_b = (w[0].accel + w[1].accel) * 0.5 - x.bias_accel;
        // invert the forward step: rotation first, then the world
        // acceleration matches the forward (mid-step) evaluation point
        x.rot = x.rot.compose(&Rotation::exp(&(omega * dt)).inverse());
        let rot_mid = x.rot.compose(&Rotation::exp(&(omega * (0.5 * dt))));
        let acc_w = rot_mid.rotate(&acc_b) + noise.gravity;
        x.vel -= acc_w * dt;
        x.pos -= x.vel * dt + acc_w * (0.5 * dt * dt);
        entries.push((w[0].t, x.pose()));
    }
    entries.reverse();
    Ok((PropagatedPoseSeq::new(entries).map_err(|_| PreintError::UnorderedSamples)?, x))
}

/// Gravity-free accumulated relative motion over one knot interval.
#[derive(Debug, Clone)]
pub struct Preintegration {
    pub delta_rot: Rotation,
    pub delta_vel: Vec3,
    pub delta_pos: Vec3,
    pub dt: f64,
    /// 15x15 covariance in `(dtheta, dv, dp, dbg, dba)` order.
    pub covariance: Mat15,
    // first-order bias Jacobians
    pub dr_dbg: Mat3,
    pub dv_dbg: Mat3,
    pub dv_dba: Mat3,
    pub dp_dbg: Mat3,
    pub dp_dba: Mat3,
    /// Linearization biases.
    pub bias_gyro: Vec3,
    pub bias_accel: Vec3,
}

/// Build a preintegration from the samples spanning one knot interval.
/// Gravity never enters the accumulation; only the noise densities are read
/// from `noise`.
pub fn preintegrate(
    samples: &[ImuSample],
    bias_gyro: &Vec3,
    bias_accel: &Vec3,
    noise: &ImuNoise,
) -> Result<Preintegration, PreintError> {
    check_ordered(samples)?;
    if samples.len() < 2 {
        return Err(PreintError::EmptyInterval);
    }

    let mut delta_rot = Rotation::identity();
    let mut delta_vel = Vec3::zeros();
    let mut delta_pos = Vec3::zeros();
    let mut dr_dbg = Mat3::zeros();
    let mut dv_dbg = Mat3::zeros();
    let mut dv_dba = Mat3::zeros();
    let mut dp_dbg = Mat3::zeros();
    let mut dp_dba = Mat3::zeros();
    let mut cov = Mat15::zeros();
    let mut dt_total = 0.0;

    for w in samples.windows(2) {
        let dt = w[1].t - w[0].t;
        dt_total += dt;
        let omega = (w[0].gyro + w[1].gyro) * 0.5 - bias_gyro;
        let acc = (w[0].accel + w[1].accel) * 0.5 - bias_accel;
        let step = omega * dt;
        let step_rot = Rotation::exp(&step);
        // accel is rotated by the mid-step orientation, matching propagate()
        let rot_m = delta_rot.compose(&Rotation::exp(&(step * 0.5))).matrix();
        let jr = right_jacobian(&step);
        let acc_skew = skew(&acc);

        // covariance first (uses pre-step quantities)
        let mut a = Mat15::identity();
        a.fixed_view_mut::<3, 3>(0, 0).copy_from(&step_rot.matrix().transpose());
        a.fixed_view_mut::<3, 3>(0, 9).copy_from(&(-jr * dt));
        a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-rot_m * acc_skew * dt));
        a.fixed_view_mut::<3, 3>(3, 12).copy_from(&(-rot_m * dt));
        a.fixed_view_mut::<3, 3>(6, 0).copy_from(&(-rot_m * acc_skew * (0.5 * dt * dt)));
        a.fixed_view_mut::<3, 3>(6, 3).copy_from(&(Mat3::identity() * dt));
        a.fixed_view_mut::<3, 3>(6, 12).copy_from(&(-rot_m * (0.5 * dt * dt)));

        let sg = noise.gyro_noise * noise.gyro_noise / dt; // discrete white noise
        let sa = noise.accel_noise * noise.accel_noise / dt;
        let bjg = jr * dt;
        let bja = rot_m * dt;
        let bpa = rot_m * (0.5 * dt * dt);
        let mut q = Mat15::zeros();
        q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(bjg * bjg.transpose() * sg));
        q.fixed_view_mut::<3, 3>(3, 3).copy_from(&(bja * bja.transpose() * sa));
        q.fixed_view_mut::<3, 3>(6, 6).copy_from(&(bpa * bpa.transpose() * sa));
        q.fixed_view_mut::<3, 3>(3, 6).copy_from(&(bja * bpa.transpose() * sa));
        q.fixed_view_mut::<3, 3>(6, 3).copy_from(&(bpa * bja.transpose() * sa));
        for i in 0..3 {
            q[(9 + i, 9 + i)] = noise.gyro_walk * noise.gyro_walk * dt;
            q[(12 + i, 12 + i)] = noise.accel_walk * noise.accel_walk * dt;
        }
        cov = a * cov * a.transpose() + q;
        cov = (cov + cov.transpose()) * 0.5;

        // bias Jacobians (order matters: p uses old v, v uses old R)
        dp_dbg += dv_dbg * dt - rot_m * acc_skew * dr_dbg * (0.5 * dt * dt);
        dp_dba += dv_dba * dt - rot_m * (0.5 * dt * dt);
        dv_dbg += -rot_m * acc_skew * dr_dbg * dt;
        dv_dba += -rot_m * dt;
        dr_dbg = step_rot.matrix().transpose() * dr_dbg - jr * dt;

        // accumulate
        delta_pos += delta_vel * dt + rot_m * acc * (0.5 * dt * dt);
        delta_vel += rot_m * acc * dt;
        delta_rot = delta_rot.compose(&step_rot);
    }

    Ok(Preintegration {
        delta_rot,
        delta_vel,
        delta_pos,
        dt: dt_total,
        covariance: cov,
        dr_dbg,
        dv_dbg,
        dv_dba,
        dp_dbg,
        dp_dba,
        bias_gyro: *bias_gyro,
        bias_accel: *bias_accel,
    })
}

/// Residual and Jacobians of one preintegration factor, whitened by the
/// inverse Cholesky factor of the covariance.
#[derive(Debug, Clone)]
pub struct PreintResidual {
    pub residual: Vec15,
    pub jac_m: Mat15,
    pub jac_m1: Mat15,
}

impl Preintegration {
    /// Bias deviation beyond which the first-order correction is considered
    /// stale and the preintegration should be rebuilt.
    pub const RELINEARIZE_THRESHOLD: f64 = 1e-2;

    pub fn bias_deviation(&self, x: &StateEstimate) -> f64 {
        (x.bias_gyro - self.bias_gyro)
            .norm()
            .max((x.bias_accel - self.bias_accel).norm())
    }

    /// On-manifold residual between two states, with gravity reinstated and
    /// the bias deviation applied through the stored Jacobians.
    pub fn residual(
        &self,
        xm: &StateEstimate,
        xm1: &StateEstimate,
        noise: &ImuNoise,
    ) -> Result<PreintResidual, PreintError> {
        let dbg = xm.bias_gyro - self.bias_gyro;
        let dba = xm.bias_accel - self.bias_accel;
        let g = noise.gravity;
        let dt = self.dt;

        let corr = self.dr_dbg * dbg;
        let delta_rot_c = self.delta_rot.compose(&Rotation::exp(&corr));
        let delta_vel_c = self.delta_vel + self.dv_dbg * dbg + self.dv_dba * dba;
        let delta_pos_c = self.delta_pos + self.dp_dbg * dbg + self.dp_dba * dba;

        let rm_t = xm.rot.matrix().transpose();
        let r_theta = delta_rot_c
            .inverse()
            .compose(&xm.rot.inverse().compose(&xm1.rot))
            .log();
        let v_term = rm_t * (xm1.vel - xm.vel - g * dt);
        let p_term = rm_t * (xm1.pos - xm.pos - xm.vel * dt - g * (0.5 * dt * dt));
        let r_v = v_term - delta_vel_c;
        let r_p = p_term - delta_pos_c;

        let mut r = Vec15::zeros();
        r.fixed_rows_mut::<3>(0).copy_from(&r_theta);
        r.fixed_rows_mut::<3>(3).copy_from(&r_v);
        r.fixed_rows_mut::<3>(6).copy_from(&r_p);
        r.fixed_rows_mut::<3>(9).copy_from(&(xm1.bias_gyro - xm.bias_gyro));
        r.fixed_rows_mut::<3>(12).copy_from(&(xm1.bias_accel - xm.bias_accel));

        let jri = right_jacobian_inv(&r_theta);
        let rm1t_rm = xm1.rot.inverse().compose(&xm.rot).matrix();

        let mut jm = Mat15::zeros();
        jm.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-jri * rm1t_rm));
        // d r_theta / d bg_m through the first-order rotation correction
        let exp_neg_r = Rotation::exp(&(-r_theta)).matrix();
        let jbg = -jri * exp_neg_r * right_jacobian(&corr) * self.dr_dbg;
        jm.fixed_view_mut::<3, 3>(0, 9).copy_from(&jbg);
        jm.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&v_term));
        jm.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-rm_t));
        jm.fixed_view_mut::<3, 3>(3, 9).copy_from(&(-self.dv_dbg));
        jm.fixed_view_mut::<3, 3>(3, 12).copy_from(&(-self.dv_dba));
        jm.fixed_view_mut::<3, 3>(6, 0).copy_from(&skew(&p_term));
        jm.fixed_view_mut::<3, 3>(6, 3).copy_from(&(-rm_t * dt));
        jm.fixed_view_mut::<3, 3>(6, 6).copy_from(&(-rm_t));
        jm.fixed_view_mut::<3, 3>(6, 9).copy_from(&(-self.dp_dbg));
        jm.fixed_view_mut::<3, 3>(6, 12).copy_from(&(-self.dp_dba));
        jm.fixed_view_mut::<3, 3>(9, 9).copy_from(&(-Mat3::identity()));
        jm.fixed_view_mut::<3, 3>(12, 12).copy_from(&(-Mat3::identity()));

        let mut jm1 = Mat15::zeros();
        jm1.fixed_view_mut::<3, 3>(0, 0).copy_from(&jri);
        jm1.fixed_view_mut::<3, 3>(3, 3).copy_from(&rm_t);
        jm1.fixed_view_mut::<3, 3>(6, 6).copy_from(&rm_t);
        jm1.fixed_view_mut::<3, 3>(9, 9).copy_from(&Mat3::identity());
        jm1.fixed_view_mut::<3, 3>(12, 12).copy_from(&Mat3::identity());

        // whiten by the inverse Cholesky factor of the covariance
        let chol = nalgebra::Cholesky::new(self.covariance)
            .ok_or(PreintError::SingularCovariance)?;
        let l = chol.l();
        let r_w = l.solve_lower_triangular(&r).ok_or(PreintError::SingularCovariance)?;
        let jm_w = l.solve_lower_triangular(&jm).ok_or(PreintError::SingularCovariance)?;
        let jm1_w = l
            .solve_lower_triangular(&jm1)
            .ok_or(PreintError::SingularCovariance)?;

        Ok(PreintResidual {
            residual: r_w,
            jac_m: jm_w,
            jac_m1: jm1_w,
        })
    }
}

/// Extract the samples covering `[t0, t1]`, synthesizing linearly
/// interpolated boundary samples at exactly `t0` and `t1`. The source buffer
/// must bracket the interval.
pub fn slice_interval(samples: &[ImuSample], t0: Timestamp, t1: Timestamp) -> Option<Vec<ImuSample>> {
    if samples.is_empty() || samples[0].t > t0 || samples[samples.len() - 1].t < t1 {
        return None;
    }
    let lerp = |t: Timestamp| -> ImuSample {
        let idx = samples.partition_point(|s| s.t <= t);
        if idx == 0 {
            return samples[0];
        }
        if idx == samples.len() {
            return samples[idx - 1];
        }
        let (a, b) = (&samples[idx - 1], &samples[idx]);
        let s = (t - a.t) / (b.t - a.t);
        ImuSample {
            t,
            gyro: a.gyro * (1.0 - s) + b.gyro * s,
            accel: a.accel * (1.0 - s) + b.accel * s,
        }
    };
    let mut out = Vec::new();
    out.push(lerp(t0));
    for s in samples.iter().filter(|s| s.t > t0 && s.t < t1) {
        out.push(*s);
    }
    if t1 > out[out.len() - 1].t {
        out.push(lerp(t1));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn noise() -> ImuNoise {
        ImuNoise::default()
    }

    fn sample_sinusoid(t: f64) -> (Vec3, Vec3) {
        // smooth body rates and specific forces
        let gyro = Vec3::new(
            0.4 * (3.0 * t).sin(),
            0.3 * (2.0 * t + 0.5).cos(),
            0.5 * (1.5 * t).sin(),
        );
        let accel = Vec3::new(
            0.8 * (2.5 * t).cos(),
            0.6 * (1.7 * t).sin(),
            9.81 + 0.5 * (2.2 * t).cos(),
        );
        (gyro, accel)
    }

    fn sinusoid_samples(rate: f64, duration: f64) -> Vec<ImuSample> {
        let n = (duration * rate) as usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 / rate;
                let (gyro, accel) = sample_sinusoid(t);
                ImuSample { t, gyro, accel }
            })
            .collect()
    }

    #[test]
    fn propagate_equilibrium() {
        let g = noise().gravity;
        let rot = Rotation::exp(&Vec3::new(0.2, -0.1, 0.3));
        let x0 = StateEstimate {
            rot,
            pos: Vec3::new(1.0, 2.0, 3.0),
            vel: Vec3::zeros(),
            bias_gyro: Vec3::zeros(),
            bias_accel: Vec3::zeros(),
        };
        let samples: Vec<ImuSample> = (0..=400)
            .map(|i| ImuSample {
                t: i as f64 * 0.0025,
                gyro: Vec3::zeros(),
                accel: rot.inverse().rotate(&(-g)),
            })
            .collect();
        let (_, x1) = propagate(&x0, &samples, &noise()).unwrap();
        assert_relative_eq!(x1.pos, x0.pos, epsilon = 1e-9);
        assert_relative_eq!(x1.vel, x0.vel, epsilon = 1e-9);
    }

    #[test]
    fn propagate_constant_acceleration() {
        let g = noise().gravity;
        let a_w = Vec3::new(1.0, 0.0, 0.0);
        let x0 = StateEstimate::identity();
        let dt_total = 0.5;
        let samples: Vec<ImuSample> = (0..=200)
            .map(|i| ImuSample {
                t: i as f64 * dt_total / 200.0,
                gyro: Vec3::zeros(),
                accel: a_w - g,
            })
            .collect();
        let (_, x1) = propagate(&x0, &samples, &noise()).unwrap();
        assert_relative_eq!(x1.pos, a_w * 0.5 * dt_total * dt_total, epsilon = 1e-9);
        assert_relative_eq!(x1.vel, a_w * dt_total, epsilon = 1e-9);
    }

    #[test]
    fn propagate_unordered_errors() {
        let s = ImuSample {
            t: 0.0,
            gyro: Vec3::zeros(),
            accel: Vec3::zeros(),
        };
        let out = propagate(&StateEstimate::identity(), &[s, s], &noise());
        assert_eq!(out.err(), Some(PreintError::UnorderedSamples));
    }

    #[test]
    fn backward_round_trip() {
        let samples = sinusoid_samples(400.0, 0.25);
        let x0 = StateEstimate {
            rot: Rotation::exp(&Vec3::new(0.1, 0.2, -0.3)),
            pos: Vec3::new(1.0, -1.0, 0.5),
            vel: Vec3::new(0.3, 0.1, -0.2),
            bias_gyro: Vec3::new(0.01, -0.02, 0.005),
            bias_accel: Vec3::new(0.05, 0.02, -0.03),
        };
        let (_, x1) = propagate(&x0, &samples, &noise()).unwrap();
        let (seq, back) = propagate_backward(&x1, &samples, &noise()).unwrap();
        assert_relative_eq!(back.pos, x0.pos, epsilon = 1e-9);
        assert_relative_eq!(back.vel, x0.vel, epsilon = 1e-9);
        assert!(back.rot.angle_to(&x0.rot) < 1e-9);
        assert_eq!(seq.first_time(), Some(samples[0].t));
    }

    #[test]
    fn backward_zero_motion() {
        let g = noise().gravity;
        let samples: Vec<ImuSample> = (0..=100)
            .map(|i| ImuSample {
                t: i as f64 * 0.0025,
                gyro: Vec3::zeros(),
                accel: -g,
            })
            .collect();
        let x1 = StateEstimate::identity();
        let (_, x0) = propagate_backward(&x1, &samples, &noise()).unwrap();
        assert_relative_eq!(x0.pos, Vec3::zeros(), epsilon = 1e-12);
        assert!(x0.rot.angle() < 1e-12);
    }

    #[test]
    fn backward_constant_rotation() {
        let omega = Vec3::new(0.0, 0.0, 1.0);
        let dt = 0.1;
        let samples: Vec<ImuSample> = (0..=40)
            .map(|i| ImuSample {
                t: i as f64 * dt / 40.0,
                gyro: omega,
                accel: -noise().gravity,
            })
            .collect();
        let x1 = StateEstimate::identity();
        let (_, x0) = propagate_backward(&x1, &samples, &noise()).unwrap();
        assert!(x0.rot.angle_to(&Rotation::exp(&(-omega * dt))) < 1e-9);
    }

    #[test]
    fn preintegrate_zero_input() {
        let samples: Vec<ImuSample> = (0..=10)
            .map(|i| ImuSample {
                t: i as f64 * 0.0025,
                gyro: Vec3::zeros(),
                accel: Vec3::zeros(),
            })
            .collect();
        let p = preintegrate(&samples, &Vec3::zeros(), &Vec3::zeros(), &noise()).unwrap();
        assert!(p.delta_rot.angle() < 1e-15);
        assert_eq!(p.delta_vel, Vec3::zeros());
        assert_eq!(p.delta_pos, Vec3::zeros());
    }

    #[test]
    fn preintegrate_constant_accel_closed_form() {
        let a = Vec3::new(0.5, -0.3, 1.0);
        let dt = 0.1;
        let samples: Vec<ImuSample> = (0..=40)
            .map(|i| ImuSample {
                t: i as f64 * dt / 40.0,
                gyro: Vec3::zeros(),
                accel: a,
            })
            .collect();
        let p = preintegrate(&samples, &Vec3::zeros(), &Vec3::zeros(), &noise()).unwrap();
        assert_relative_eq!(p.delta_vel, a * dt, epsilon = 1e-12);
        assert_relative_eq!(p.delta_pos, a * (0.5 * dt * dt), epsilon = 1e-12);
    }

    /// Fine-step oracle: integrate the linearly interpolated signal at 10x
    /// the sample rate with plain Euler-on-manifold steps.
    fn fine_integrate(samples: &[ImuSample], bg: &Vec3, ba: &Vec3, substeps: usize) -> (Rotation, Vec3, Vec3) {
        let mut rot = Rotation::identity();
        let mut vel = Vec3::zeros();
        let mut pos = Vec3::zeros();
        for w in samples.windows(2) {
            let dt = (w[1].t - w[0].t) / substeps as f64;
            for k in 0..substeps {
                let s0 = (k as f64 + 0.5) / substeps as f64;
                let gyro = w[0].gyro * (1.0 - s0) + w[1].gyro * s0 - bg;
                let accel = w[0].accel * (1.0 - s0) + w[1].accel * s0 - ba;
                let acc = rot.compose(&Rotation::exp(&(gyro * (0.5 * dt)))).rotate(&accel);
                pos += vel * dt + acc * (0.5 * dt * dt);
                vel += acc * dt;
                rot = rot.compose(&Rotation::exp(&(gyro * dt)));
            }
        }
        (rot, vel, pos)
    }

    #[test]
    fn preintegrate_matches_fine_oracle() {
        let samples = sinusoid_samples(400.0, 0.1);
        let bg = Vec3::new(0.002, -0.001, 0.003);
        let ba = Vec3::new(0.02, 0.01, -0.015);
        let p = preintegrate(&samples, &bg, &ba, &noise()).unwrap();
        let (rot, vel, pos) = fine_integrate(&samples, &bg, &ba, 10);
        assert!(p.delta_rot.angle_to(&rot) < 1e-6, "rot err {}", p.delta_rot.angle_to(&rot));
        assert!((p.delta_vel - vel).norm() < 1e-6, "vel err {}", (p.delta_vel - vel).norm());
        assert!((p.delta_pos - pos).norm() < 1e-6, "pos err {}", (p.delta_pos - pos).norm());
    }

    #[test]
    fn preintegration_gravity_independent() {
        let samples = sinusoid_samples(400.0, 0.1);
        let mut n2 = noise();
        n2.gravity = Vec3::new(3.0, -1.0, 22.0);
        let a = preintegrate(&samples, &Vec3::zeros(), &Vec3::zeros(), &noise()).unwrap();
        let b = preintegrate(&samples, &Vec3::zeros(), &Vec3::zeros(), &n2).unwrap();
        assert_eq!(a.delta_rot, b.delta_rot);
        assert_eq!(a.delta_vel, b.delta_vel);
        assert_eq!(a.delta_pos, b.delta_pos);
    }

    #[test]
    fn covariance_symmetric_psd() {
        let samples = sinusoid_samples(400.0, 0.2);
        let p = preintegrate(&samples, &Vec3::zeros(), &Vec3::zeros(), &noise()).unwrap();
        let c = p.covariance;
        assert!((c - c.transpose()).norm() < 1e-15);
        let eig = nalgebra::SymmetricEigen::new(c);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-12 * c.trace(), "min eig {min}");
    }

    #[test]
    fn residual_zero_at_propagated_state() {
        let samples = sinusoid_samples(400.0, 0.1);
        let bg = Vec3::new(0.001, 0.002, -0.001);
        let ba = Vec3::new(0.01, -0.02, 0.01);
        let x0 = StateEstimate {
            rot: Rotation::exp(&Vec3::new(0.3, -0.2, 0.1)),
            pos: Vec3::new(0.5, 1.0, -0.5),
            vel: Vec3::new(0.2, -0.1, 0.3),
            bias_gyro: bg,
            bias_accel: ba,
        };
        let (_, x1) = propagate(&x0, &samples, &noise()).unwrap();
        let pre = preintegrate(&samples, &bg, &ba, &noise()).unwrap();
        let res = pre.residual(&x0, &x1, &noise()).unwrap();
        assert!(res.residual.norm() < 1e-8 * pre.covariance.norm().recip().max(1.0) + 1e-5,
            "residual norm {}", res.residual.norm());
        // unwhitened check via direct reconstruction
        let rm_t = x0.rot.matrix().transpose();
        let rv = rm_t * (x1.vel - x0.vel - noise().gravity * pre.dt) - pre.delta_vel;
        assert!(rv.norm() < 1e-8, "raw velocity residual {}", rv.norm());
    }

    #[test]
    fn residual_position_perturbation_linear() {
        let samples = sinusoid_samples(400.0, 0.1);
        let x0 = StateEstimate::identity();
        let (_, x1) = propagate(&x0, &samples, &noise()).unwrap();
        let pre = preintegrate(&samples, &Vec3::zeros(), &Vec3::zeros(), &noise()).unwrap();
        let base = pre.residual(&x0, &x1, &noise()).unwrap();
        let delta = 1e-4;
        let mut x1p = x1;
        x1p.pos.x += delta;
        let pert = pre.residual(&x0, &x1p, &noise()).unwrap();
        let diff = pert.residual - base.residual;
        let expect = pert.jac_m1.column(6) * delta;
        assert_relative_eq!(diff, expect, epsilon = 1e-8);
        // before whitening only the position block moves: reconstruct it
        let raw_shift = x0.rot.matrix().transpose() * Vec3::new(delta, 0.0, 0.0);
        let l = nalgebra::Cholesky::new(pre.covariance).unwrap().l();
        let mut raw = Vec15::zeros();
        raw.fixed_rows_mut::<3>(6).copy_from(&raw_shift);
        let expect_white = l.solve_lower_triangular(&raw).unwrap();
        assert_relative_eq!(diff, expect_white, epsilon = 1e-8);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let mut rng = StdRng::seed_from_u64(51);
        let samples = sinusoid_samples(400.0, 0.05);
        for trial in 0..100 {
            let rand_vec = |rng: &mut StdRng, s: f64| {
                Vec3::new(
                    rng.gen_range(-s..s),
                    rng.gen_range(-s..s),
                    rng.gen_range(-s..s),
                )
            };
            let bg = rand_vec(&mut rng, 0.01);
            let ba = rand_vec(&mut rng, 0.05);
            let pre = preintegrate(&samples, &bg, &ba, &noise()).unwrap();
            let xm = StateEstimate {
                rot: Rotation::exp(&rand_vec(&mut rng, 1.0)),
                pos: rand_vec(&mut rng, 2.0),
                vel: rand_vec(&mut rng, 1.0),
                bias_gyro: bg + rand_vec(&mut rng, 0.005),
                bias_accel: ba + rand_vec(&mut rng, 0.02),
            };
            let xm1 = StateEstimate {
                rot: Rotation::exp(&rand_vec(&mut rng, 1.0)),
                pos: rand_vec(&mut rng, 2.0),
                vel: rand_vec(&mut rng, 1.0),
                bias_gyro: xm.bias_gyro + rand_vec(&mut rng, 0.001),
                bias_accel: xm.bias_accel + rand_vec(&mut rng, 0.005),
            };
            let base = pre.residual(&xm, &xm1, &noise()).unwrap();
            let h = 1e-6;
            for k in 0..15 {
                let mut dp = Vec15::zeros();
                dp[k] = h;
                let mut dm = Vec15::zeros();
                dm[k] = -h;
                // state m
                let rp = pre.residual(&xm.retract(&dp), &xm1, &noise()).unwrap().residual;
                let rm = pre.residual(&xm.retract(&dm), &xm1, &noise()).unwrap().residual;
                let fd = (rp - rm) / (2.0 * h);
                let an = base.jac_m.column(k);
                let denom = fd.norm().max(1.0);
                assert!(
                    (fd - an).norm() / denom < 1e-5,
                    "trial {trial} jac_m col {k}: fd {fd:?} vs an {an:?}"
                );
                // state m+1
                let rp = pre.residual(&xm, &xm1.retract(&dp), &noise()).unwrap().residual;
                let rm = pre.residual(&xm, &xm1.retract(&dm), &noise()).unwrap().residual;
                let fd = (rp - rm) / (2.0 * h);
                let an = base.jac_m1.column(k);
                let denom = fd.norm().max(1.0);
                assert!(
                    (fd - an).norm() / denom < 1e-5,
                    "trial {trial} jac_m1 col {k}"
                );
            }
        }
    }

    #[test]
    fn slice_interval_boundaries() {
        let samples = sinusoid_samples(100.0, 1.0);
        let sliced = slice_interval(&samples, 0.105, 0.305).unwrap();
        assert_eq!(sliced[0].t, 0.105);
        assert_eq!(sliced[sliced.len() - 1].t, 0.305);
        assert!(sliced.windows(2).all(|w| w[1].t > w[0].t));
        assert!(slice_interval(&samples, -0.5, 0.3).is_none());
    }
}
