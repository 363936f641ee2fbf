//! Absolute trajectory error between an estimate and ground truth.
//!
//! Poses are matched by nearest timestamp within a tolerance; the error is
//! the translational residual per matched pair, optionally after a best-fit
//! rigid alignment (rotation plus translation, no scale).

use nalgebra::Matrix3;

use slict_core::{Pose, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Align {
    /// Compare poses in their native frames.
    None,
    /// Least-squares rigid alignment of the estimate onto ground truth.
    Rigid,
}

#[derive(Debug, Clone)]
pub struct AteReport {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// RMS error per world axis after alignment.
    pub per_axis: Vec3,
    pub matched: usize,
    pub alignment: Align,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AteError {
    /// Fewer matched pairs than the minimum needed for the requested mode.
    TooFewMatches { matched: usize, needed: usize },
}

impl core::fmt::Display for AteError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AteError::TooFewMatches { matched, needed } => {
                write!(f, "only {matched} matched pose pairs, need {needed}")
            }
        }
    }
}

impl std::error::Error for AteError {}

/// Nearest ground-truth index for each estimate time, within `tol` seconds.
fn match_pairs(
    estimate: &[(f64, Pose)],
    truth: &[(f64, Pose)],
    tol: f64,
) -> Vec<(Vec3, Vec3)> {
    let mut pairs = Vec::new();
    for (t, est) in estimate {
        // truth is sorted by time, binary search for the bracketing pair
        let idx = truth.partition_point(|(tt, _)| tt < t);
        let mut best: Option<(f64, usize)> = None;
        for cand in [idx.wrapping_sub(1), idx] {
            if let Some((tt, _)) = truth.get(cand) {
                let d = (tt - t).abs();
                if d <= tol && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, cand));
                }
            }
        }
        if let Some((_, j)) = best {
            pairs.push((est.translation, truth[j].1.translation));
        }
    }
    pairs
}

/// Umeyama closed-form rigid fit mapping `src` onto `dst` (no scale).
fn rigid_fit(src: &[Vec3], dst: &[Vec3]) -> Pose {
    let n = src.len() as f64;
    let cs: Vec3 = src.iter().sum::<Vec3>() / n;
    let cd: Vec3 = dst.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (d - cd) * (s - cs).transpose();
    }
    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = Rotation::from_matrix(&(u * s * vt));
    let t = cd - r.rotate(&cs);
    Pose::new(r, t)
}

/// Evaluate translational ATE. `tol` is the timestamp matching tolerance in
/// seconds. Rigid alignment needs at least 3 matched pairs.
pub fn evaluate_ate(
    estimate: &[(f64, Pose)],
    truth: &[(f64, Pose)],
    tol: f64,
    alignment: Align,
) -> Result<AteReport, AteError> {
    let pairs = match_pairs(estimate, truth, tol);
    let needed = match alignment {
        Align::None => 1,
        Align::Rigid => 3,
    };
    if pairs.len() < needed {
        return Err(AteError::TooFewMatches {
            matched: pairs.len(),
            needed,
        });
    }

    let transform = match alignment {
        Align::None => Pose::identity(),
        Align::Rigid => {
            let src: Vec<Vec3> = pairs.iter().map(|(e, _)| *e).collect();
            let dst: Vec<Vec3> = pairs.iter().map(|(_, g)| *g).collect();
            rigid_fit(&src, &dst)
        }
    };

    let mut errors: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut sq_sum = 0.0;
    let mut axis_sq = Vec3::zeros();
    for (e, g) in &pairs {
        let d = transform.transform_point(e) - g;
        let norm = d.norm();
        errors.push(norm);
        sq_sum += norm * norm;
        axis_sq += d.component_mul(&d);
    }
    errors.sort_by(f64::total_cmp);
    let n = errors.len();
    let median = if n % 2 == 1 {
        errors[n / 2]
    } else {
        0.5 * (errors[n / 2 - 1] + errors[n / 2])
    };
    Ok(AteReport {
        rmse: (sq_sum / n as f64).sqrt(),
        mean: errors.iter().sum::<f64>() / n as f64,
        median,
        max: *errors.last().expect("nonempty"),
        per_axis: (axis_sq / n as f64).map(f64::sqrt),
        matched: n,
        alignment,
    })
}
