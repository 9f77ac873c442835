use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights with `sum_i w_i g(x_i) ≈ E[g(Z)]`, `Z ~ N(0, 1)`, exact for
/// polynomials of degree `< 2k`. Built from the Jacobi matrix of the Hermite
/// polynomials (Golub-Welsch).
pub fn gauss_hermite_normal(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1, "quadrature needs at least one node");
    let mut j = DMatrix::zeros(k, k);
    for i in 1..k {
        let off = (i as f64 / 2.0).sqrt();
        j[(i, i - 1)] = off;
        j[(i - 1, i)] = off;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i] * std::f64::consts::SQRT_2, v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    pairs.into_iter().map(|(x, w)| (x, w / total)).unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_moments_exact() {
        let (x, w) = gauss_hermite_normal(10);
        let moment = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((moment(0) - 1.0).abs() < 1e-14);
        assert!(moment(1).abs() < 1e-14);
        assert!((moment(2) - 1.0).abs() < 1e-13);
        assert!(moment(3).abs() < 1e-13);
        assert!((moment(4) - 3.0).abs() < 1e-12);
        assert!((moment(6) - 15.0).abs() < 1e-11);
        assert!((moment(18) - 34459425.0).abs() / 34459425.0 < 1e-10);
    }

    #[test]
    fn known_three_point_rule() {
        let (x, w) = gauss_hermite_normal(3);
        let r3 = 3f64.sqrt();
        for (a, b) in x.iter().zip([-r3, 0.0, r3]) {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in w.iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn smooth_expectation() {
        // E[cos Z] = exp(-1/2)
        let (x, w) = gauss_hermite_normal(30);
        let e: f64 = x.iter().zip(&w).map(|(x, w)| w * x.cos()).sum();
        assert!((e - (-0.5f64).exp()).abs() < 1e-13);
    }
}
