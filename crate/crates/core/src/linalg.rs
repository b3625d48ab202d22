//! Small dense helpers shared by the fitters and the Hough pipeline.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::geometry::{Point3, Vector3};

/// Eigen-decomposition of a symmetric 3x3 matrix with eigenvalues ascending.
pub fn sym_eigen_sorted(m: &Matrix3<f64>) -> ([f64; 3], [Vector3; 3]) {
    let eig = SymmetricEigen::new(*m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = idx.map(|i| eig.eigenvalues[i]);
    let vectors = idx.map(|i| eig.eigenvectors.column(i).into_owned());
    (values, vectors)
}

/// Covariance (divided by N) of `points` about `center`.
pub fn scatter_about(points: &[Point3], center: &Point3) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    for p in points {
        let d = p - center;
        m += d * d.transpose();
    }
    m / points.len().max(1) as f64
}

/// Second-moment matrix of a set of directions.
pub fn direction_scatter<'a>(dirs: impl IntoIterator<Item = &'a Vector3>) -> (Matrix3<f64>, usize) {
    let mut m = Matrix3::zeros();
    let mut n = 0;
    for d in dirs {
        m += d * d.transpose();
        n += 1;
    }
    (m / n.max(1) as f64, n)
}

/// Algebraic least-squares circle through 2D points, returned as
/// `(center_x, center_y, radius)`. `None` if the points are (numerically)
/// collinear or too few.
pub fn fit_circle_2d(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let (mx, my) = points.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let scale = points
        .iter()
        .map(|(x, y)| (x - mx).hypot(y - my))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    // x^2 + y^2 + D x + E y + F = 0 on centered, scaled coordinates
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (x, y) in points {
        let (u, v) = ((x - mx) / scale, (y - my) / scale);
        let row = nalgebra::Vector3::new(u, v, 1.0);
        ata += row * row.transpose();
        atb += row * (-(u * u + v * v));
    }
    let (values, _) = sym_eigen_sorted(&ata);
    if values[0] <= values[2] * 1e-12 {
        return None;
    }
    let sol = ata.cholesky()?.solve(&atb);
    let (cu, cv) = (-sol.x / 2.0, -sol.y / 2.0);
    let r_sq = cu * cu + cv * cv - sol.z;
    if !(r_sq > 0.0) || !r_sq.is_finite() {
        return None;
    }
    Some((mx + cu * scale, my + cv * scale, r_sq.sqrt() * scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_fit_recovers_exact_arc() {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.05;
                (3.0 + 2.0 * t.cos(), -1.0 + 2.0 * t.sin())
            })
            .collect();
        let (cx, cy, r) = fit_circle_2d(&pts).unwrap();
        assert!((cx - 3.0).abs() < 1e-8 && (cy + 1.0).abs() < 1e-8 && (r - 2.0).abs() < 1e-8);
    }

    #[test]
    fn circle_fit_rejects_collinear() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 2.0 * i as f64)).collect();
        assert!(fit_circle_2d(&pts).is_none());
    }

    #[test]
    fn eigen_sorted_ascending() {
        let m = Matrix3::from_diagonal(&Vector3::new(3.0, 1.0, 2.0));
        let (vals, vecs) = sym_eigen_sorted(&m);
        assert_eq!(vals, [1.0, 2.0, 3.0]);
        assert!((vecs[0].y.abs() - 1.0).abs() < 1e-12);
    }
}
