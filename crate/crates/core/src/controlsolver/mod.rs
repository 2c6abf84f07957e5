//! Joint learning of a potential `u` and a tilt `g` by penalized least
//! squares over their collocation values.
//!
//! The unknowns are `z_u = [d2u/dx2 ; du/dx]` and
//! `z_g = [dg/dt ; g on the boundary ; dg/dx]` at the collocation points,
//! plus one log-normalizer derivative `c_n` per distinct time. The
//! constraint at interior point `j` is
//!
//! `F_j = l_j + dg/dt - c_n + (s_j + dg/dx) du/dx + d2u/dx2 = 0`,
//!
//! the continuity equation for the tilted path `mu e^g` transported by
//! `v = du/dx`. The objective is
//! `|z_u|^2_K + lambda_g |z_g|^2_K + lambda_pde |F|^2 + lambda_bc |g_b|^2`,
//! minimized in whitened coordinates `w = L^{-1} z`.

mod lm;

pub use lm::{solve_control, LmConfig, SolveReport, StopReason};

use faer::Mat;
use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::collocation::{
    assemble_gram, feature_map_g, feature_map_u, CollocationSet, FeatureMap, GradientField, GramFactor,
    GridSpec, Op, Representer, SpaceTime,
};
use crate::densities::{GeometricPath, QuadratureRule};
use crate::error::{Error, Result};
use crate::kernels::ProductKernel;
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyConfig {
    pub lambda_g: f64,
    pub lambda_pde: f64,
    pub lambda_bc: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            lambda_g: 51.8,
            lambda_pde: 2.63e5,
            lambda_bc: 6.01e4,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_g", self.lambda_g),
            ("lambda_pde", self.lambda_pde),
            ("lambda_bc", self.lambda_bc),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Collocation values of `u` and `g` and the per-time constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub z_u: Vec<f64>,
    pub z_g: Vec<f64>,
    pub c: Vec<f64>,
}

/// Problem data shared across iterations: collocation set, path
/// ingredients, feature maps and factored Gram matrices.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    colloc: CollocationSet,
    path: GeometricPath,
    features_u: FeatureMap,
    features_g: FeatureMap,
    gram_u: GramFactor,
    gram_g: GramFactor,
    ell: Vec<f64>,
    score: Vec<f64>,
}

/// Sparse rows `(column, coefficient)` with at most two entries each.
#[derive(Debug, Clone)]
pub(crate) struct Selection {
    rows: Vec<SmallVec<[(usize, f64); 2]>>,
    ncols: usize,
}

impl Selection {
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(i, c)| c * v[i]).sum())
            .collect()
    }

    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for (row, &yi) in self.rows.iter().zip(y) {
            for &(i, c) in row {
                out[i] += c * yi;
            }
        }
        out
    }

    /// `P (K + jitter I) P^T`.
    fn sandwich(&self, gram: &GramFactor) -> Mat<f64> {
        let k = gram.matrix();
        let eps = gram.jitter();
        let m = self.rows.len();
        let mut out = Mat::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let mut acc = 0.0;
                for &(i, ci) in &self.rows[a] {
                    for &(j, cj) in &self.rows[b] {
                        let kij = k[(i, j)] + if i == j { eps } else { 0.0 };
                        acc += ci * cj * kij;
                    }
                }
                out[(a, b)] = acc;
                out[(b, a)] = acc;
            }
        }
        out
    }

    fn dense(&self) -> Mat<f64> {
        let mut out = Mat::<f64>::zeros(self.rows.len(), self.ncols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(i, c) in row {
                out[(r, i)] += c;
            }
        }
        out
    }
}

/// Whitened coordinates `(L_u^{-1} z_u, L_g^{-1} z_g, c)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Whitened {
    pub w_u: Vec<f64>,
    pub w_g: Vec<f64>,
    pub c: Vec<f64>,
}

impl ControlProblem {
    pub fn new(colloc: CollocationSet, path: GeometricPath, kernel: ProductKernel) -> Result<Self> {
        let features_u = feature_map_u(&colloc, kernel);
        let features_g = feature_map_g(&colloc, kernel);
        let gram_u = assemble_gram(&features_u)?;
        let gram_g = assemble_gram(&features_g)?;
        log::info!(
            "control problem: J = {}, boundary = {}, times = {}, jitter u {:e}, jitter g {:e}",
            colloc.n_interior(),
            colloc.n_boundary(),
            colloc.n_times(),
            gram_u.jitter(),
            gram_g.jitter()
        );
        let (ell, score) = colloc
            .interior
            .iter()
            .map(|&(x, t)| {
                let ing = path.ingredients(x, t);
                (ing.ell, ing.score)
            })
            .unzip();
        Ok(Self {
            colloc,
            path,
            features_u,
            features_g,
            gram_u,
            gram_g,
            ell,
            score,
        })
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.colloc
    }

    pub fn path(&self) -> &GeometricPath {
        &self.path
    }

    pub fn gram_u(&self) -> &GramFactor {
        &self.gram_u
    }

    pub fn gram_g(&self) -> &GramFactor {
        &self.gram_g
    }

    pub fn n_interior(&self) -> usize {
        self.colloc.n_interior()
    }

    pub fn n_boundary(&self) -> usize {
        self.colloc.n_boundary()
    }

    pub fn n_times(&self) -> usize {
        self.colloc.n_times()
    }

    pub fn dim_u(&self) -> usize {
        self.features_u.len()
    }

    pub fn dim_g(&self) -> usize {
        self.features_g.len()
    }

    /// Length of the residual vector.
    pub fn n_residuals(&self) -> usize {
        self.dim_u() + self.dim_g() + self.n_interior() + self.n_boundary()
    }

    /// Number of unknowns `(w_u, w_g, c)`.
    pub fn n_unknowns(&self) -> usize {
        self.dim_u() + self.dim_g() + self.n_times()
    }

    pub fn zero_state(&self) -> ControlState {
        ControlState {
            z_u: vec![0.0; self.dim_u()],
            z_g: vec![0.0; self.dim_g()],
            c: vec![0.0; self.n_times()],
        }
    }

    fn check_state(&self, s: &ControlState) -> Result<()> {
        for (what, expected, got) in [
            ("z_u", self.dim_u(), s.z_u.len()),
            ("z_g", self.dim_g(), s.z_g.len()),
            ("c", self.n_times(), s.c.len()),
        ] {
            if expected != got {
                return Err(Error::DimensionMismatch { what, expected, got });
            }
        }
        Ok(())
    }

    pub(crate) fn whiten(&self, s: &ControlState) -> Result<Whitened> {
        self.check_state(s)?;
        Ok(Whitened {
            w_u: self.gram_u.whiten(&s.z_u),
            w_g: self.gram_g.whiten(&s.z_g),
            c: s.c.clone(),
        })
    }

    pub(crate) fn color(&self, w: &Whitened) -> ControlState {
        ControlState {
            z_u: self.gram_u.color(&w.w_u),
            z_g: self.gram_g.color(&w.w_g),
            c: w.c.clone(),
        }
    }

    /// `F_j` at every interior point.
    pub fn pde_residuals(&self, s: &ControlState) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(self.constraint(s))
    }

    fn constraint(&self, s: &ControlState) -> Vec<f64> {
        let j = self.n_interior();
        let jb = self.n_boundary();
        (0..j)
            .map(|k| {
                let lap_u = s.z_u[k];
                let grad_u = s.z_u[j + k];
                let dt_g = s.z_g[k];
                let grad_g = s.z_g[j + jb + k];
                self.ell[k] + dt_g - s.c[self.colloc.time_index[k]] + (self.score[k] + grad_g) * grad_u + lap_u
            })
            .collect()
    }

    /// Boundary values of `g`.
    pub fn boundary_values<'a>(&self, s: &'a ControlState) -> &'a [f64] {
        let j = self.n_interior();
        &s.z_g[j..j + self.n_boundary()]
    }

    /// `[w_u ; sqrt(lambda_g) w_g ; sqrt(lambda_pde) F ; sqrt(lambda_bc) g_b]`.
    pub fn residual_vector(&self, s: &ControlState, pen: &PenaltyConfig) -> Result<Vec<f64>> {
        let w = self.whiten(s)?;
        Ok(self.residual_whitened(&w, s, pen))
    }

    /// `(w_u, w_g, c)` stacked; the coordinates of [`ControlProblem::jacobian`].
    pub fn whitened_vector(&self, s: &ControlState) -> Result<Vec<f64>> {
        let w = self.whiten(s)?;
        Ok([w.w_u, w.w_g, w.c].concat())
    }

    /// Residual vector at stacked whitened coordinates.
    pub fn residual_at(&self, x: &[f64], pen: &PenaltyConfig) -> Result<Vec<f64>> {
        let (nu, ng) = (self.dim_u(), self.dim_g());
        if x.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch {
                what: "whitened unknowns",
                expected: self.n_unknowns(),
                got: x.len(),
            });
        }
        let w = Whitened {
            w_u: x[..nu].to_vec(),
            w_g: x[nu..nu + ng].to_vec(),
            c: x[nu + ng..].to_vec(),
        };
        let s = self.color(&w);
        Ok(self.residual_whitened(&w, &s, pen))
    }

    fn residual_whitened(&self, w: &Whitened, s: &ControlState, pen: &PenaltyConfig) -> Vec<f64> {
        let sg = pen.lambda_g.sqrt();
        let sp = pen.lambda_pde.sqrt();
        let sb = pen.lambda_bc.sqrt();
        let mut r = Vec::with_capacity(self.n_residuals());
        r.extend_from_slice(&w.w_u);
        r.extend(w.w_g.iter().map(|v| sg * v));
        r.extend(self.constraint(s).iter().map(|f| sp * f));
        r.extend(self.boundary_values(s).iter().map(|b| sb * b));
        r
    }

    /// Sum of squared residuals.
    pub fn objective(&self, s: &ControlState, pen: &PenaltyConfig) -> Result<f64> {
        Ok(self.residual_vector(s, pen)?.iter().map(|v| v * v).sum())
    }

    /// Block sums `(|w_u|^2 + lambda_g |w_g|^2, lambda_pde |F|^2, lambda_bc |g_b|^2)`.
    pub(crate) fn blocks(&self, w: &Whitened, s: &ControlState, pen: &PenaltyConfig) -> [f64; 3] {
        let reg = dot(&w.w_u, &w.w_u) + pen.lambda_g * dot(&w.w_g, &w.w_g);
        let f = self.constraint(s);
        let bc = self.boundary_values(s);
        [reg, pen.lambda_pde * dot(&f, &f), pen.lambda_bc * dot(bc, bc)]
    }

    /// Rows of `dF/dz_u` and `d(constraints)/dz_g` at `s`, scaled by the
    /// square-root penalties. Both have `J + J_b` rows; the boundary rows of
    /// the `u` block are empty.
    pub(crate) fn selections(&self, s: &ControlState, pen: &PenaltyConfig) -> (Selection, Selection) {
        let j = self.n_interior();
        let jb = self.n_boundary();
        let sp = pen.lambda_pde.sqrt();
        let sb = pen.lambda_bc.sqrt();
        let mut pu = Vec::with_capacity(j + jb);
        let mut pg = Vec::with_capacity(j + jb);
        for k in 0..j {
            let grad_u = s.z_u[j + k];
            let grad_g = s.z_g[j + jb + k];
            pu.push(smallvec![(k, sp), (j + k, sp * (self.score[k] + grad_g))]);
            pg.push(smallvec![(k, sp), (j + jb + k, sp * grad_u)]);
        }
        for i in 0..jb {
            pu.push(SmallVec::new());
            pg.push(smallvec![(j + i, sb)]);
        }
        (
            Selection {
                rows: pu,
                ncols: self.dim_u(),
            },
            Selection {
                rows: pg,
                ncols: self.dim_g(),
            },
        )
    }

    /// Column of `-sqrt(lambda_pde)` entries picking `c_n` for each PDE row.
    pub(crate) fn c_columns(&self, pen: &PenaltyConfig) -> Mat<f64> {
        let sp = pen.lambda_pde.sqrt();
        let m = self.n_interior() + self.n_boundary();
        let mut b = Mat::<f64>::zeros(m, self.n_times());
        for (k, &n) in self.colloc.time_index.iter().enumerate() {
            b[(k, n)] = -sp;
        }
        b
    }

    /// Dense Jacobian of the residual vector with respect to `(w_u, w_g, c)`.
    pub fn jacobian(&self, s: &ControlState, pen: &PenaltyConfig) -> Result<Mat<f64>> {
        self.check_state(s)?;
        let (nu, ng, nc) = (self.dim_u(), self.dim_g(), self.n_times());
        let (pu, pg) = self.selections(s, pen);
        let bu = matmul(&pu.dense(), &self.gram_u);
        let bg = matmul(&pg.dense(), &self.gram_g);
        let bc = self.c_columns(pen);
        let sg = pen.lambda_g.sqrt();
        let mut jac = Mat::<f64>::zeros(self.n_residuals(), self.n_unknowns());
        for i in 0..nu {
            jac[(i, i)] = 1.0;
        }
        for i in 0..ng {
            jac[(nu + i, nu + i)] = sg;
        }
        let off = nu + ng;
        for r in 0..bu.nrows() {
            for col in 0..nu {
                jac[(off + r, col)] = bu[(r, col)];
            }
            for col in 0..ng {
                jac[(off + r, nu + col)] = bg[(r, col)];
            }
            for col in 0..nc {
                jac[(off + r, nu + ng + col)] = bc[(r, col)];
            }
        }
        Ok(jac)
    }

    /// Minimal-norm functions matching the collocation values in `s`.
    pub fn reconstruct(&self, s: &ControlState) -> Result<(Representer, Representer)> {
        self.check_state(s)?;
        let u = Representer::interpolate(self.features_u.clone(), &self.gram_u, &s.z_u)?;
        let g = Representer::interpolate(self.features_g.clone(), &self.gram_g, &s.z_g)?;
        Ok((u, g))
    }
}

fn matmul(p: &Mat<f64>, gram: &GramFactor) -> Mat<f64> {
    let l = gram.chol();
    let mut out = Mat::<f64>::zeros(p.nrows(), l.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), faer::Accum::Replace, p.as_ref(), l, 1.0, linalg::PAR);
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    linalg::dot(a, b)
}

/// Learned potential and tilt.
#[derive(Debug, Clone)]
pub struct ControlSolution {
    pub state: ControlState,
    pub report: SolveReport,
    /// Penalties in force at the end of the solve.
    pub penalties: PenaltyConfig,
    u: Representer,
    g: Representer,
    norm_u: f64,
    norm_g: f64,
    jitter_u: f64,
    jitter_g: f64,
    path: GeometricPath,
    grid: Option<GridSpec>,
}

impl ControlSolution {
    pub(crate) fn assemble(
        problem: &ControlProblem,
        state: ControlState,
        report: SolveReport,
        penalties: PenaltyConfig,
    ) -> Result<Self> {
        let (u, g) = problem.reconstruct(&state)?;
        Ok(Self {
            norm_u: problem.gram_u.norm(&state.z_u),
            norm_g: problem.gram_g.norm(&state.z_g),
            jitter_u: problem.gram_u.jitter(),
            jitter_g: problem.gram_g.jitter(),
            path: problem.path.clone(),
            grid: problem.colloc.grid,
            state,
            report,
            penalties,
            u,
            g,
        })
    }

    pub fn potential(&self) -> &Representer {
        &self.u
    }

    pub fn tilt(&self) -> &Representer {
        &self.g
    }

    /// `(|u|, |g|)` in the space-time RKHS.
    pub fn norms(&self) -> (f64, f64) {
        (self.norm_u, self.norm_g)
    }

    pub fn jitters(&self) -> (f64, f64) {
        (self.jitter_u, self.jitter_g)
    }

    pub fn path(&self) -> &GeometricPath {
        &self.path
    }

    pub fn velocity_field(&self) -> GradientField<'_> {
        GradientField(&self.u)
    }

    /// `(u, du/dx, g)` at `y`.
    pub fn eval(&self, y: SpaceTime) -> (f64, f64, f64) {
        (self.u.value(y), self.u.eval(Op::SpaceDeriv, y), self.g.value(y))
    }

    /// `log mu(x, t) + g(x, t)`.
    pub fn tilted_log_unnorm(&self, x: f64, t: f64) -> f64 {
        self.path.log_unnorm(x, t) + self.g.value((x, t))
    }

    /// `g(x, t)` for every `x` at a fixed `t`.
    pub fn tilt_on(&self, xs: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; xs.len()];
        self.g.eval_at_time(Op::Eval, xs, t, &mut out);
        out
    }

    /// `log Z(t)` of the tilted path.
    pub fn tilted_log_normalizer(&self, t: f64, rule: &QuadratureRule) -> Result<f64> {
        let g = self.tilt_on(&rule.abscissae(), t);
        self.path.log_normalizer_tabulated(Some(&g), t, rule)
    }

    /// Normalized tilted density at `xs`.
    pub fn tilted_density(&self, xs: &[f64], t: f64, rule: &QuadratureRule) -> Result<Vec<f64>> {
        let log_z = self.tilted_log_normalizer(t, rule)?;
        let g = self.tilt_on(xs, t);
        Ok(xs
            .iter()
            .zip(&g)
            .map(|(&x, gx)| (self.path.log_unnorm(x, t) + gx - log_z).exp())
            .collect())
    }

    /// Mass of the normalized tilted path below `threshold`.
    pub fn tilted_mass_below(&self, threshold: f64, t: f64, rule: &QuadratureRule) -> Result<f64> {
        let g = self.tilt_on(&rule.abscissae(), t);
        self.path.mass_below(threshold, Some(&g), t, rule)
    }

    pub fn record(&self) -> ControlRecord {
        ControlRecord {
            kernel: self.u.features().kernel,
            grid: self.grid,
            path: self.path.clone(),
            penalties: self.penalties,
            state: self.state.clone(),
            coefficients_u: self.u.coefficients().to_vec(),
            coefficients_g: self.g.coefficients().to_vec(),
            jitter_u: self.jitter_u,
            jitter_g: self.jitter_g,
            norm_u: self.norm_u,
            norm_g: self.norm_g,
            report: self.report.clone(),
        }
    }
}

/// Serializable snapshot of a learned solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub kernel: ProductKernel,
    pub grid: Option<GridSpec>,
    pub path: GeometricPath,
    pub penalties: PenaltyConfig,
    pub state: ControlState,
    pub coefficients_u: Vec<f64>,
    pub coefficients_g: Vec<f64>,
    pub jitter_u: f64,
    pub jitter_g: f64,
    pub norm_u: f64,
    pub norm_g: f64,
    pub report: SolveReport,
}

impl ControlRecord {
    /// Rebuilds `(u, g)` from the stored coefficients without refactoring.
    pub fn representers(&self) -> Result<(Representer, Representer)> {
        let grid = self
            .grid
            .ok_or_else(|| Error::InvalidArgument("record carries no grid".into()))?;
        let c = CollocationSet::grid(grid)?;
        let u = Representer::new(feature_map_u(&c, self.kernel), self.coefficients_u.clone())?;
        let g = Representer::new(feature_map_g(&c, self.kernel), self.coefficients_g.clone())?;
        Ok((u, g))
    }
}
