use faer::{Mat, MatRef};

use super::FeatureMap;
use crate::error::Result;
use crate::linalg;

/// Gram matrix `K(phi, phi)` with its jittered lower Cholesky factor.
#[derive(Debug, Clone)]
pub struct GramFactor {
    matrix: Mat<f64>,
    chol: Mat<f64>,
    jitter: f64,
}

/// Assembles `K(phi, phi)` and factors it.
pub fn assemble_gram(features: &FeatureMap) -> Result<GramFactor> {
    let n = features.len();
    let mut m = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let fj = &features.functionals[j];
        for i in j..n {
            let v = features.functionals[i].pair(fj, &features.kernel);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    GramFactor::from_matrix(m)
}

impl GramFactor {
    pub fn from_matrix(matrix: Mat<f64>) -> Result<Self> {
        let (chol, jitter) = linalg::jittered_cholesky(matrix.as_ref())?;
        log::debug!("gram of dim {} factored with jitter {jitter:e}", matrix.nrows());
        Ok(Self { matrix, chol, jitter })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.matrix.as_ref()
    }

    pub fn chol(&self) -> MatRef<'_, f64> {
        self.chol.as_ref()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// `(K + jitter I)^{-1} z`.
    pub fn solve(&self, z: &[f64]) -> Vec<f64> {
        let mut w = self.whiten(z);
        linalg::solve_lower_transpose(self.chol(), &mut w);
        w
    }

    /// `L^{-1} z`.
    pub fn whiten(&self, z: &[f64]) -> Vec<f64> {
        let mut w = z.to_vec();
        linalg::solve_lower(self.chol(), &mut w);
        w
    }

    /// `L w`.
    pub fn color(&self, w: &[f64]) -> Vec<f64> {
        linalg::mat_vec(self.chol(), w)
    }

    /// `L^{-T} w`, the representer coefficients of `z = L w`.
    pub fn coefficients_from_whitened(&self, w: &[f64]) -> Vec<f64> {
        let mut a = w.to_vec();
        linalg::solve_lower_transpose(self.chol(), &mut a);
        a
    }

    /// RKHS norm `sqrt(z^T (K + jitter I)^{-1} z)` of the minimal interpolant.
    pub fn norm(&self, z: &[f64]) -> f64 {
        linalg::norm2(&self.whiten(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{feature_map_g, feature_map_u, CollocationSet, Functional, GridSpec};
    use crate::kernels::ProductKernel;

    fn small_grid() -> CollocationSet {
        CollocationSet::grid(GridSpec {
            x_lo: -3.0,
            x_hi: 3.0,
            n_x: 6,
            n_t: 5,
        })
        .unwrap()
    }

    #[test]
    fn gram_is_symmetric_entrywise() {
        let k = ProductKernel::new(1.5, 0.4).unwrap();
        let f = feature_map_g(&small_grid(), k);
        let g = assemble_gram(&f).unwrap();
        for i in 0..f.len() {
            for j in 0..f.len() {
                let a = f.functionals[i].pair(&f.functionals[j], &k);
                let b = f.functionals[j].pair(&f.functionals[i], &k);
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
                assert_eq!(g.matrix()[(i, j)], g.matrix()[(j, i)]);
            }
        }
    }

    #[test]
    fn factor_reconstructs() {
        let k = ProductKernel::new(1.5, 0.4).unwrap();
        let g = assemble_gram(&feature_map_u(&small_grid(), k)).unwrap();
        let err = linalg::reconstruction_error(g.matrix(), g.chol(), g.jitter());
        assert!(err < 1e-10, "{err}");
        let z: Vec<f64> = (0..g.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let w = g.whiten(&z);
        let back = g.color(&w);
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() < 1e-8);
        }
        let alpha = g.solve(&z);
        let alpha2 = g.coefficients_from_whitened(&w);
        for (a, b) in alpha.iter().zip(&alpha2) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn duplicated_point_gets_jitter() {
        let k = ProductKernel::new(1.0, 1.0).unwrap();
        let f = FeatureMap::new(
            vec![Functional::eval((0.0, 0.5)), Functional::eval((0.0, 0.5))],
            k,
        );
        let g = assemble_gram(&f).unwrap();
        assert!(g.jitter() > 0.0);
        assert!(g.jitter() <= 1e-4);
    }
}
