//! Incremental second-moment statistics and derived plane attributes.
//!
//! Each octree node stores the point count `N`, the coordinate sum `S` and
//! the centered second-moment matrix `C`. Merging and removal use the
//! Welford-style update, so a parent's stats always equal the merge of its
//! children without revisiting raw points.

use crate::geometry::{Mat3, Vec3};
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfelError {
    /// Attempted to remove more points than a node holds.
    InvalidRemoval,
    /// Fewer than three points; no plane fit possible.
    InsufficientPoints,
    /// Covariance trace below resolution; eigenvectors meaningless.
    DegenerateSurfel,
}

impl fmt::Display for SurfelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfelError::InvalidRemoval => write!(f, "removal exceeds stored point count"),
            SurfelError::InsufficientPoints => write!(f, "fewer than 3 points in surfel"),
            SurfelError::DegenerateSurfel => write!(f, "degenerate surfel covariance"),
        }
    }
}

/// Raw moments of the points in one voxel: count, sum, centered second moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfelStats {
    pub n: u64,
    pub s: Vec3,
    pub c: Mat3,
}

impl SurfelStats {
    pub fn empty() -> Self {
        SurfelStats {
            n: 0,
            s: Vec3::zeros(),
            c: Mat3::zeros(),
        }
    }

    /// Stats of a single point: N = 1, C = 0.
    pub fn from_point(p: &Vec3) -> Self {
        SurfelStats {
            n: 1,
            s: *p,
            c: Mat3::zeros(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Merge two disjoint point sets.
    ///
    /// `C = Ca + Cb + alpha * beta * beta^T` with
    /// `alpha = 1 / (Na * Nb * (Na + Nb))` and `beta = Nb * Sa - Na * Sb`.
    pub fn merge(&self, other: &SurfelStats) -> SurfelStats {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let na = self.n as f64;
        let nb = other.n as f64;
        let alpha = 1.0 / (na * nb * (na + nb));
        let beta = other.n as f64 * self.s - self.n as f64 * other.s;
        SurfelStats {
            n: self.n + other.n,
            s: self.s + other.s,
            c: self.c + other.c + alpha * beta * beta.transpose(),
        }
    }

    /// Algebraic inverse of [`merge`](Self::merge): remove a previously
    /// merged child. Count and sum are reduced first, then the cross term is
    /// recomputed from the reduced stats.
    pub fn remove(&self, child: &SurfelStats) -> Result<SurfelStats, SurfelError> {
        if child.n > self.n {
            return Err(SurfelError::InvalidRemoval);
        }
        if child.n == 0 {
            return Ok(*self);
        }
        if child.n == self.n {
            return Ok(SurfelStats::empty());
        }
        let n = self.n - child.n;
        let s = self.s - child.s;
        let ni = n as f64;
        let nn = child.n as f64;
        let alpha = 1.0 / (ni * nn * (ni + nn));
        let beta = nn * s - ni * child.s;
        let mut c = self.c - child.c - alpha * beta * beta.transpose();
        if n == 1 {
            c = Mat3::zeros();
        }
        Ok(SurfelStats { n, s, c })
    }

    pub fn add_point(&self, p: &Vec3) -> SurfelStats {
        self.merge(&SurfelStats::from_point(p))
    }

    pub fn remove_point(&self, p: &Vec3) -> Result<SurfelStats, SurfelError> {
        self.remove(&SurfelStats::from_point(p))
    }

    pub fn mean(&self) -> Vec3 {
        self.s / self.n as f64
    }
}

/// Plane parameters derived from [`SurfelStats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfelAttributes {
    pub mean: Vec3,
    pub covariance: Mat3,
    /// Eigenvalues of the covariance, ascending.
    pub eigenvalues: [f64; 3],
    /// Unit eigenvector of the smallest eigenvalue.
    pub normal: Vec3,
    /// Plane offset `c = -n^T mu`.
    pub offset: f64,
    /// `2 (l1 - l0) / (l0 + l1 + l2)`, in [0, 1].
    pub planarity: f64,
}

impl SurfelAttributes {
    /// The normal is not unique when the two smallest eigenvalues coincide;
    /// such nodes must not be used for association.
    pub fn normal_is_unique(&self) -> bool {
        self.eigenvalues[1] - self.eigenvalues[0] > 1e-12
    }
}

/// Compute mean, covariance, eigenstructure and planarity of a surfel.
///
/// `viewpoint`, when given, orients the normal so it faces the observing
/// sensor (`n^T (viewpoint - mean) >= 0`); otherwise the sign is fixed by
/// making the largest-magnitude component positive.
pub fn derive_attributes(
    stats: &SurfelStats,
    viewpoint: Option<&Vec3>,
) -> Result<SurfelAttributes, SurfelError> {
    if stats.n < 3 {
        return Err(SurfelError::InsufficientPoints);
    }
    let mean = stats.mean();
    let covariance = stats.c / (stats.n - 1) as f64;
    if covariance.trace() < 1e-12 {
        return Err(SurfelError::DegenerateSurfel);
    }
    let eig = covariance.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = [
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    ];
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    normal.normalize_mut();
    match viewpoint {
        Some(vp) => {
            if normal.dot(&(vp - mean)) < 0.0 {
                normal = -normal;
            }
        }
        None => {
            let k = normal.iamax();
            if normal[k] < 0.0 {
                normal = -normal;
            }
        }
    }
    let sum = eigenvalues[0] + eigenvalues[1] + eigenvalues[2];
    let planarity = (2.0 * (eigenvalues[1] - eigenvalues[0]) / sum).clamp(0.0, 1.0);
    debug_assert!((0.0..=1.0).contains(&planarity));
    Ok(SurfelAttributes {
        mean,
        covariance,
        eigenvalues,
        normal,
        offset: -normal.dot(&mean),
        planarity,
    })
}
