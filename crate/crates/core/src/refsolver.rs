//! Minimal-norm potential for the geometric path: the function `u` of least
//! RKHS norm with `-d/dx(mu du/dx) = mu (l - E_mu[l])` at every collocation
//! point, where `mu = eta^(1-t) pi^t` and `l = log(pi/eta)`.

use serde::{Deserialize, Serialize};

use crate::collocation::{
    assemble_gram, CollocationSet, FeatureMap, Functional, GradientField, GramFactor, GridSpec, Op,
    Representer, SpaceTime, Term,
};
use crate::densities::{GeometricPath, QuadratureRule};
use crate::error::{Error, Result};
use crate::kernels::ProductKernel;

/// `L_j u = -mu_j s_j du/dx - mu_j d2u/dx2` at each interior point.
pub fn reference_features(c: &CollocationSet, path: &GeometricPath, kernel: ProductKernel) -> Result<FeatureMap> {
    let functionals = c
        .interior
        .iter()
        .map(|&(x, t)| {
            let mu = path.log_unnorm(x, t).exp();
            let s = path.ingredients(x, t).score;
            Functional::weighted([
                Term {
                    coef: -mu * s,
                    op: Op::SpaceDeriv,
                    at: (x, t),
                },
                Term {
                    coef: -mu,
                    op: Op::SpaceLaplacian,
                    at: (x, t),
                },
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMap::new(functionals, kernel))
}

/// `E_{mu(t)}[l]` at each distinct time of the set.
pub fn mean_log_ratio(c: &CollocationSet, path: &GeometricPath, rule: &QuadratureRule) -> Result<Vec<f64>> {
    c.times.iter().map(|&t| path.expectation(None, t, rule)).collect()
}

/// `f_j = mu_j (l_j - E_{mu(t_j)}[l])`.
pub fn reference_rhs(c: &CollocationSet, path: &GeometricPath, rule: &QuadratureRule) -> Result<Vec<f64>> {
    let means = mean_log_ratio(c, path, rule)?;
    Ok(c
        .interior
        .iter()
        .zip(&c.time_index)
        .map(|(&(x, t), &k)| {
            let mu = path.log_unnorm(x, t).exp();
            mu * (path.ingredients(x, t).ell - means[k])
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct ReferenceSolution {
    potential: Representer,
    gram: GramFactor,
    rhs: Vec<f64>,
    norm: f64,
    path: GeometricPath,
    colloc: CollocationSet,
}

pub fn solve_reference(
    c: &CollocationSet,
    path: &GeometricPath,
    kernel: ProductKernel,
    rule: &QuadratureRule,
) -> Result<ReferenceSolution> {
    rule.validate()?;
    let features = reference_features(c, path, kernel)?;
    let rhs = reference_rhs(c, path, rule)?;
    let gram = assemble_gram(&features)?;
    let norm = gram.norm(&rhs);
    if !norm.is_finite() {
        return Err(Error::Solver("reference potential has non-finite norm".into()));
    }
    let potential = Representer::interpolate(features, &gram, &rhs)?;
    log::info!(
        "reference potential: {} functionals, jitter {:e}, norm {norm:.6e}",
        gram.dim(),
        gram.jitter()
    );
    Ok(ReferenceSolution {
        potential,
        gram,
        rhs,
        norm,
        path: path.clone(),
        colloc: c.clone(),
    })
}

impl ReferenceSolution {
    pub fn potential(&self) -> &Representer {
        &self.potential
    }

    pub fn gram(&self) -> &GramFactor {
        &self.gram
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// RKHS norm of the potential.
    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.colloc
    }

    /// `(u, du/dx)` at `y`.
    pub fn eval(&self, y: SpaceTime) -> (f64, f64) {
        (self.potential.value(y), self.potential.eval(Op::SpaceDeriv, y))
    }

    pub fn velocity_field(&self) -> GradientField<'_> {
        GradientField(&self.potential)
    }

    /// `L_j u` at every collocation point.
    pub fn operator_values(&self) -> Vec<f64> {
        self.potential
            .features()
            .apply(&|op, y| self.potential.eval(op, y))
    }

    pub fn record(&self) -> ReferenceRecord {
        ReferenceRecord {
            kernel: self.potential.features().kernel,
            grid: self.colloc.grid,
            path: self.path.clone(),
            points: self.colloc.interior.clone(),
            rhs: self.rhs.clone(),
            coefficients: self.potential.coefficients().to_vec(),
            jitter: self.gram.jitter(),
            norm: self.norm,
        }
    }
}

/// Serializable snapshot of a reference solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub kernel: ProductKernel,
    pub grid: Option<GridSpec>,
    pub path: GeometricPath,
    pub points: Vec<SpaceTime>,
    pub rhs: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub jitter: f64,
    pub norm: f64,
}

impl ReferenceRecord {
    /// Rebuilds the potential from the stored coefficients.
    pub fn potential(&self) -> Result<Representer> {
        let c = CollocationSet::from_points(self.points.clone(), Vec::new())?;
        let features = reference_features(&c, &self.path, self.kernel)?;
        Representer::new(features, self.coefficients.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::GaussianMixture;

    fn shift_path(a: f64) -> GeometricPath {
        GeometricPath::new(
            GaussianMixture::normal(0.0, 1.0).unwrap(),
            GaussianMixture::normal(a, 1.0).unwrap(),
        )
    }

    fn grid(n_x: usize, n_t: usize) -> CollocationSet {
        CollocationSet::grid(GridSpec {
            x_lo: -4.0,
            x_hi: 4.0,
            n_x,
            n_t,
        })
        .unwrap()
    }

    #[test]
    fn identity_path_gives_zero_potential() {
        let c = grid(8, 5);
        let path = shift_path(0.0);
        let k = ProductKernel::new(2.0, 0.5).unwrap();
        let sol = solve_reference(&c, &path, k, &QuadratureRule::default()).unwrap();
        assert!(sol.rhs().iter().all(|&f| f.abs() < 1e-12));
        assert!(sol.norm() < 1e-10);
        assert!(sol.eval((0.3, 0.4)).1.abs() < 1e-10);
    }

    #[test]
    fn rhs_uses_centred_log_ratio() {
        let a = 1.0;
        let c = grid(5, 3);
        let path = shift_path(a);
        let f = reference_rhs(&c, &path, &QuadratureRule::default()).unwrap();
        for ((&(x, t), fj), _) in c.interior.iter().zip(&f).zip(&c.time_index) {
            // mu = exp(-(x^2 - 2 t a x + t a^2)/2) / sqrt(2 pi), l = a x - a^2/2,
            // E[l] = a^2 t - a^2/2
            let mu = (-(x * x - 2.0 * t * a * x + t * a * a) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
            let expected = mu * (a * x - a * a * t);
            assert!((fj - expected).abs() < 1e-10 * (1.0 + expected.abs()), "{fj} vs {expected}");
        }
    }

    #[test]
    fn operator_reproduces_rhs_up_to_jitter() {
        let c = grid(7, 4);
        let path = shift_path(1.0);
        let k = ProductKernel::new(2.5, 0.6).unwrap();
        let sol = solve_reference(&c, &path, k, &QuadratureRule::default()).unwrap();
        let lu = sol.operator_values();
        let alpha = sol.potential().coefficients();
        let eps = sol.gram().jitter();
        let scale = sol.rhs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // (K + eps I) alpha = f
        for ((a, f), al) in lu.iter().zip(sol.rhs()).zip(alpha) {
            assert!((a + eps * al - f).abs() <= 1e-8 * scale, "{a} vs {f}");
        }
    }

    #[test]
    fn record_rebuilds_potential() {
        let c = grid(5, 3);
        let path = shift_path(0.7);
        let k = ProductKernel::new(2.0, 0.5).unwrap();
        let sol = solve_reference(&c, &path, k, &QuadratureRule::default()).unwrap();
        let rec = sol.record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: ReferenceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        let u = back.potential().unwrap();
        let y = (0.25, 0.5);
        assert_eq!(u.eval(Op::SpaceDeriv, y), sol.eval(y).1);
    }
}
