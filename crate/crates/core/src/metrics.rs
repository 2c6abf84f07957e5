//! Sample-quality metrics and RKHS-norm diagnostics.

use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::collocation::{GramFactor, Op, Representer};
use crate::error::{Error, Result};
use crate::kernels::Matern52;

/// Midpoint of the two target modes.
pub const DEFAULT_LEFT_THRESHOLD: f64 = -2.0;

/// Fraction of samples strictly below `threshold`.
pub fn fraction_left(samples: &[f64], threshold: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    Ok(samples.iter().filter(|&&x| x < threshold).count() as f64 / samples.len() as f64)
}

pub fn sample_mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(samples: &[f64]) -> f64 {
    let m = sample_mean(samples);
    samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (samples.len() - 1) as f64
}

/// `(|mean - m| / |m|, |var - v| / |v|)` with the unbiased sample variance.
pub fn moment_errors(samples: &[f64], true_mean: f64, true_var: f64) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("moment errors need at least two samples".into()));
    }
    if true_mean == 0.0 || true_var == 0.0 {
        return Err(Error::InvalidArgument(
            "relative moment errors are undefined for a zero true moment".into(),
        ));
    }
    let m = sample_mean(samples);
    let v = sample_variance(samples);
    Ok(((m - true_mean).abs() / true_mean.abs(), (v - true_var).abs() / true_var.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise distance of the pooled sample.
    MedianHeuristic,
}

/// Median of `|x_i - x_j|`, `i < j`, over the pooled sample; 1 if that is zero.
pub fn median_bandwidth(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push((pooled[i] - pooled[j]).abs());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, &mut med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let med = if d.len() % 2 == 0 {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + med)
    } else {
        med
    };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Biased (V-statistic) MMD with a Gaussian kernel; returns the square
/// root of the clamped squared estimate.
pub fn mmd(a: &[f64], b: &[f64], bandwidth: Bandwidth) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("mmd needs two nonempty samples".into()));
    }
    let h = match bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::InvalidArgument(format!("bandwidth {h} is not positive"))),
        Bandwidth::MedianHeuristic => median_bandwidth(a, b),
    };
    let inv = 1.0 / (2.0 * h * h);
    let mean_k = |p: &[f64], q: &[f64]| -> f64 {
        let mut s = 0.0;
        for x in p {
            for y in q {
                s += (-(x - y) * (x - y) * inv).exp();
            }
        }
        s / (p.len() * q.len()) as f64
    };
    let v = mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b);
    Ok(v.max(0.0).sqrt())
}

/// Spatial kernel Gram on a grid, factored once and reused along a curve.
pub struct SpatialNorm {
    grid: Vec<f64>,
    gram: GramFactor,
}

impl SpatialNorm {
    pub fn new(grid: Vec<f64>, kx: Matern52) -> Result<Self> {
        let n = grid.len();
        let mut sorted = grid.clone();
        sorted.sort_by(f64::total_cmp);
        if n == 0 || sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("spatial grid must be nonempty with distinct points".into()));
        }
        let m = Mat::<f64>::from_fn(n, n, |i, j| kx.eval(grid[i], grid[j]));
        Ok(Self {
            gram: GramFactor::from_matrix(m)?,
            grid,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// `sqrt(f^T K_x^{-1} f)` for values `f` on the grid.
    pub fn norm_of_values(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.grid.len() {
            return Err(Error::DimensionMismatch {
                what: "grid values",
                expected: self.grid.len(),
                got: f.len(),
            });
        }
        Ok(self.gram.norm(f))
    }

    pub fn norm_at(&self, u: &Representer, t: f64) -> Result<f64> {
        let mut f = vec![0.0; self.grid.len()];
        u.eval_at_time(Op::Eval, &self.grid, t, &mut f);
        self.norm_of_values(&f)
    }

    /// `(t, |u(., t)|)` for every `t` in `times`.
    pub fn curve(&self, u: &Representer, times: &[f64]) -> Result<Vec<(f64, f64)>> {
        times.iter().map(|&t| Ok((t, self.norm_at(u, t)?))).collect()
    }
}

pub fn spatial_rkhs_norm(u: &Representer, t: f64, x_grid: &[f64], kx: Matern52) -> Result<f64> {
    SpatialNorm::new(x_grid.to_vec(), kx)?.norm_at(u, t)
}

/// Exact norm of the slice `x -> u(x, t)` in the spatial RKHS.
///
/// Every feature of `u` is a product of a spatial kernel section (possibly
/// differentiated in its second argument) and a time factor, so a slice is a
/// finite combination of spatial sections `d^s K_x(., x_i)`. Their Gram
/// matrix does not depend on `t` and is built once.
pub struct SliceNorm {
    gram: Mat<f64>,
    /// `(atom, weight, time order, t_i)` per kernel term.
    terms: Vec<(usize, f64, u8, f64)>,
    kt: Matern52,
}

impl SliceNorm {
    pub fn new(u: &Representer) -> Self {
        let features = u.features();
        let kernel = features.kernel;
        let mut index = std::collections::HashMap::new();
        let mut atoms: Vec<(u8, f64)> = Vec::new();
        let mut terms = Vec::new();
        for (phi, &a) in features.functionals.iter().zip(u.coefficients()) {
            for term in phi.terms() {
                let (s, tau) = term.op.orders();
                let x = term.at.0;
                let id = *index.entry((s, x.to_bits())).or_insert_with(|| {
                    atoms.push((s, x));
                    atoms.len() - 1
                });
                terms.push((id, a * term.coef, tau, term.at.1));
            }
        }
        let kx = kernel.space;
        let gram = Mat::<f64>::from_fn(atoms.len(), atoms.len(), |i, j| {
            kx.deriv(atoms[i].0, atoms[j].0, atoms[i].1, atoms[j].1)
        });
        Self {
            gram,
            terms,
            kt: kernel.time,
        }
    }

    pub fn norm_at(&self, t: f64) -> f64 {
        let n = self.gram.nrows();
        let mut w = vec![0.0; n];
        for &(id, weight, tau, ti) in &self.terms {
            w[id] += weight * self.kt.deriv(0, tau, t, ti);
        }
        let mut q = 0.0;
        for j in 0..n {
            let col = self.gram.col(j);
            let s: f64 = (0..n).map(|i| col[i] * w[i]).sum();
            q += w[j] * s;
        }
        q.max(0.0).sqrt()
    }

    pub fn curve(&self, times: &[f64]) -> Vec<(f64, f64)> {
        times.iter().map(|&t| (t, self.norm_at(t))).collect()
    }
}

/// `sqrt(z^T (K + jitter I)^{-1} z)`.
pub fn spacetime_rkhs_norm(z: &[f64], gram: &GramFactor) -> Result<f64> {
    if z.len() != gram.dim() {
        return Err(Error::DimensionMismatch {
            what: "collocation values",
            expected: gram.dim(),
            got: z.len(),
        });
    }
    Ok(gram.norm(z))
}

/// max / min of the norm values of a curve.
pub fn curve_ratio(curve: &[(f64, f64)]) -> f64 {
    let max = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let min = curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    max / min
}

pub fn write_curve_csv<W: Write>(curve: &[(f64, f64)], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,norm")?;
    for (t, n) in curve {
        writeln!(w, "{t},{n}")?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fraction_left: f64,
    pub rel_err_mean: f64,
    pub rel_err_var: f64,
    pub mmd: f64,
    pub rkhs_norm_spacetime: Option<f64>,
    pub spatial_norm_curve: Option<Vec<(f64, f64)>>,
}

impl MetricsReport {
    /// Sample metrics of `samples` against the target moments and fresh
    /// target draws `truth`.
    pub fn from_samples(
        samples: &[f64],
        truth: &[f64],
        target_mean: f64,
        target_var: f64,
        threshold: f64,
    ) -> Result<Self> {
        let (rel_err_mean, rel_err_var) = moment_errors(samples, target_mean, target_var)?;
        let report = Self {
            fraction_left: fraction_left(samples, threshold)?,
            rel_err_mean,
            rel_err_var,
            mmd: mmd(samples, truth, Bandwidth::MedianHeuristic)?,
            rkhs_norm_spacetime: None,
            spatial_norm_curve: None,
        };
        report.check_finite()?;
        Ok(report)
    }

    fn check_finite(&self) -> Result<()> {
        let mut values = vec![self.fraction_left, self.rel_err_mean, self.rel_err_var, self.mmd];
        values.extend(self.rkhs_norm_spacetime);
        if let Some(c) = &self.spatial_norm_curve {
            values.extend(c.iter().map(|p| p.1));
        }
        if values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Solver("metrics contain non-finite values".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collocation::{assemble_gram, FeatureMap, Functional, Term};
    use crate::densities::GaussianMixture;
    use crate::kernels::ProductKernel;
    use crate::linalg;

    #[test]
    fn fraction_left_examples() {
        assert_eq!(fraction_left(&[-5.0, -3.0], -2.0).unwrap(), 1.0);
        assert_eq!(fraction_left(&[-5.0, -2.0, 0.0, 1.0], -2.0).unwrap(), 0.25);
        assert!(fraction_left(&[], 0.0).is_err());
    }

    #[test]
    fn moment_error_examples() {
        let (m, _) = moment_errors(&[-5.0, -3.0], -4.0, 33.0).unwrap();
        assert_eq!(m, 0.0);
        let (m, v) = moment_errors(&[-8.0; 10], -4.0, 33.0).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(v, 1.0);
        assert!(moment_errors(&[1.0, 2.0], 0.0, 1.0).is_err());
        assert!(moment_errors(&[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn mmd_identities() {
        let a = GaussianMixture::normal(0.0, 1.0).unwrap().sample(300, 1);
        let b = GaussianMixture::normal(0.5, 1.0).unwrap().sample(200, 2);
        assert!(mmd(&a, &a, Bandwidth::MedianHeuristic).unwrap() <= 1e-12);
        let ab = mmd(&a, &b, Bandwidth::MedianHeuristic).unwrap();
        let ba = mmd(&b, &a, Bandwidth::MedianHeuristic).unwrap();
        assert!((ab - ba).abs() < 1e-14);
        assert!(ab > 0.0);
        assert!(mmd(&a, &b, Bandwidth::Fixed(0.0)).is_err());
    }

    #[test]
    fn median_bandwidth_small_case() {
        // pooled {0, 1, 3}: distances 1, 3, 2
        assert_eq!(median_bandwidth(&[0.0, 1.0], &[3.0]), 2.0);
        // pooled {0, 1, 2, 4}: distances 1,2,4,1,3,2 -> median (2 + 2) / 2
        assert_eq!(median_bandwidth(&[0.0, 1.0], &[2.0, 4.0]), 2.0);
        assert_eq!(median_bandwidth(&[1.0], &[1.0]), 1.0);
    }

    #[test]
    fn spatial_norm_of_kernel_section_is_one() {
        let kx = Matern52::new(1.2).unwrap();
        let k = ProductKernel::new(1.2, 1.0).unwrap();
        // u(x, t) = Kx(x, 0.5) Kt(t, 0.3) evaluated at t = 0.3
        let f = FeatureMap::new(vec![Functional::eval((0.5, 0.3))], k);
        let u = Representer::new(f, vec![1.0]).unwrap();
        let grid: Vec<f64> = (0..11).map(|i| -2.0 + 0.5 * i as f64).collect();
        let n = spatial_rkhs_norm(&u, 0.3, &grid, kx).unwrap();
        assert!((n - 1.0).abs() < 1e-6, "{n}");
        // absolute homogeneity
        let f2 = FeatureMap::new(vec![Functional::eval((0.5, 0.3))], k);
        let u2 = Representer::new(f2, vec![-2.0]).unwrap();
        let n2 = spatial_rkhs_norm(&u2, 0.3, &grid, kx).unwrap();
        assert!((n2 - 2.0 * n).abs() < 1e-10);
        let zero = Representer::new(FeatureMap::new(vec![Functional::eval((0.0, 0.0))], k), vec![0.0]).unwrap();
        assert_eq!(spatial_rkhs_norm(&zero, 0.5, &grid, kx).unwrap(), 0.0);
    }

    #[test]
    fn slice_norm_closed_forms() {
        let l = 1.2;
        let k = ProductKernel::new(l, 0.4).unwrap();
        let single = |f: Functional| {
            let u = Representer::new(FeatureMap::new(vec![f], k), vec![1.0]).unwrap();
            SliceNorm::new(&u).norm_at(0.3)
        };
        // |d^s K(., x)|^2 = (-1)^s K^(2s)(0): 1, 5 / (3 l^2), 25 / l^4
        assert!((single(Functional::eval((0.5, 0.3))) - 1.0).abs() < 1e-14);
        let d1 = single(Functional::space_deriv((-1.0, 0.3)));
        assert!((d1 - (5.0 / (3.0 * l * l)).sqrt()).abs() < 1e-12, "{d1}");
        let d2 = single(Functional::space_laplacian((2.0, 0.3)));
        assert!((d2 - 5.0 / (l * l)).abs() < 1e-12, "{d2}");
        // time factor enters multiplicatively
        let shifted = single(Functional::eval((0.5, 0.7)));
        assert!((shifted - k.time.eval(0.3, 0.7)).abs() < 1e-14);
    }

    #[test]
    fn slice_norm_bounds_grid_projection() {
        let k = ProductKernel::new(1.2, 0.4).unwrap();
        let smooth = vec![
            Functional::eval((0.5, 0.3)),
            Functional::space_deriv((-1.0, 0.7)),
            Functional::time_deriv((0.5, 0.9)),
        ];
        let mut rough = smooth.clone();
        rough.push(
            Functional::weighted([
                Term { coef: 0.7, op: Op::SpaceDeriv, at: (0.0, 0.5) },
                Term { coef: -1.3, op: Op::SpaceLaplacian, at: (0.0, 0.5) },
            ])
            .unwrap(),
        );
        let coarse: Vec<f64> = (0..7).map(|i| -3.0 + i as f64).collect();
        let fine: Vec<f64> = (0..97).map(|i| -12.0 + 0.25 * i as f64).collect();
        let coarse = SpatialNorm::new(coarse, k.space).unwrap();
        let fine = SpatialNorm::new(fine, k.space).unwrap();
        let su = Representer::new(FeatureMap::new(smooth, k), vec![1.0, -0.5, 0.3]).unwrap();
        let ru = Representer::new(FeatureMap::new(rough, k), vec![1.0, -0.5, 0.3, 1.1]).unwrap();
        for t in [0.0, 0.35, 1.0] {
            let e = SliceNorm::new(&su).norm_at(t);
            let nf = fine.norm_at(&su, t).unwrap();
            assert!((e - nf).abs() <= 5e-3 * e, "t={t}: {e} vs {nf}");
            let e = SliceNorm::new(&ru).norm_at(t);
            for grid in [&coarse, &fine] {
                let n = grid.norm_at(&ru, t).unwrap();
                assert!(n <= e * (1.0 + 1e-8), "projection exceeds the norm at t={t}");
            }
        }
    }

    #[test]
    fn spacetime_norm_of_gram_column() {
        let k = ProductKernel::new(1.0, 0.5).unwrap();
        let f = FeatureMap::new(
            vec![
                Functional::eval((0.0, 0.0)),
                Functional::space_deriv((1.0, 0.5)),
                Functional::time_deriv((-1.0, 1.0)),
            ],
            k,
        );
        let g = assemble_gram(&f).unwrap();
        let z: Vec<f64> = (0..3).map(|i| g.matrix()[(i, 0)]).collect();
        // z^T K^{-1} z = K_11 up to the jitter
        let n = spacetime_rkhs_norm(&z, &g).unwrap();
        assert!((n - g.matrix()[(0, 0)].sqrt()).abs() < 1e-8);
        let direct = {
            let a = g.solve(&z);
            linalg::dot(&z, &a).sqrt()
        };
        assert!((n - direct).abs() < 1e-10);
        assert_eq!(spacetime_rkhs_norm(&[0.0; 3], &g).unwrap(), 0.0);
        assert!(spacetime_rkhs_norm(&[0.0; 2], &g).is_err());
    }

    #[test]
    fn curve_csv_and_ratio() {
        let c = vec![(0.0, 2.0), (0.5, 20.0), (1.0, 4.0)];
        assert_eq!(curve_ratio(&c), 10.0);
        let mut buf = Vec::new();
        write_curve_csv(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,norm\n0,2\n0.5,20\n1,4\n");
    }
}
