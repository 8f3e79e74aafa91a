use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereFit {
    pub center: [f64; 3],
    pub radius: f64,
    /// RMS of |p − c| − R divided by R.
    pub residual: f64,
}

/// Algebraic least-squares sphere through `points`, refined by one
/// Gauss–Newton step on the geometric distance.
pub fn fit_sphere(points: &[Vec3<f64>]) -> Option<SphereFit> {
    let n = points.len();
    if n < 4 {
        return None;
    }
    // |p|² = 2c·p + (R² − |c|²)
    let a = Mat::<f64>::from_fn(n, 4, |i, j| if j < 3 { 2.0 * points[i][j] } else { 1.0 });
    let b = Mat::<f64>::from_fn(n, 1, |i, _| points[i].norm_squared());
    let x = a.qr().solve_lstsq(&b);
    let mut c = Vec3::new(x[(0, 0)], x[(1, 0)], x[(2, 0)]);
    let r2 = x[(3, 0)] + c.norm_squared();
    if !(r2 > 0.0) {
        return None;
    }
    let mut r = r2.sqrt();
    // One Gauss–Newton step on d_i = |p_i − c| − R.
    let dist: Vec<f64> = points.iter().map(|p| (*p - c).norm()).collect();
    let j = Mat::<f64>::from_fn(n, 4, |i, k| {
        if k < 3 {
            -(points[i][k] - c[k]) / dist[i]
        } else {
            -1.0
        }
    });
    let res = Mat::<f64>::from_fn(n, 1, |i, _| -(dist[i] - r));
    let step = j.qr().solve_lstsq(&res);
    c = c + Vec3::new(step[(0, 0)], step[(1, 0)], step[(2, 0)]);
    r += step[(3, 0)];
    let ms = points.iter().map(|p| ((*p - c).norm() - r).powi(2)).sum::<f64>() / n as f64;
    (r > 0.0 && r.is_finite()).then(|| SphereFit { center: [c.x, c.y, c.z], radius: r, residual: ms.sqrt() / r })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{ellipsoid, make_icosphere};

    #[test]
    fn recovers_offset_sphere() {
        let m = make_icosphere(3, 2.5, Vec3::new(1.0, -2.0, 0.5)).unwrap();
        let f = fit_sphere(m.vertices()).unwrap();
        assert!((f.radius - 2.5).abs() < 1e-10);
        assert!((f.center[0] - 1.0).abs() < 1e-10 && (f.center[1] + 2.0).abs() < 1e-10);
        assert!(f.residual < 1e-12);
    }

    #[test]
    fn ellipsoid_has_large_residual() {
        let m = ellipsoid(3, [2.0, 1.0, 1.0]).unwrap();
        assert!(fit_sphere(m.vertices()).unwrap().residual > 0.05);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_sphere(&[Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)]).is_none());
    }
}
