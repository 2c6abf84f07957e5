//! Collocation point sets, linear functionals on the space-time RKHS, and the
//! feature maps for the potential `u` and the tilt `g`.

mod gram;
mod representer;

pub use gram::{assemble_gram, GramFactor};
pub use representer::{GradientField, Representer};

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{Error, Result};
use crate::kernels::{DerivOrder, ProductKernel};

/// A point `(x, t)`.
pub type SpaceTime = (f64, f64);

/// Elementary derivative operator applied at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Eval,
    TimeDeriv,
    SpaceDeriv,
    SpaceLaplacian,
}

impl Op {
    /// `(space order, time order)`.
    pub const fn orders(self) -> (u8, u8) {
        match self {
            Op::Eval => (0, 0),
            Op::TimeDeriv => (0, 1),
            Op::SpaceDeriv => (1, 0),
            Op::SpaceLaplacian => (2, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub op: Op,
    pub at: SpaceTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalKind {
    Eval,
    TimeDeriv,
    SpaceDeriv,
    SpaceLaplacian,
    WeightedCombo,
}

/// A bounded linear functional: a finite weighted sum of point derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    terms: SmallVec<[Term; 2]>,
    combo: bool,
}

impl Functional {
    pub fn point(op: Op, at: SpaceTime) -> Self {
        Self {
            terms: smallvec![Term { coef: 1.0, op, at }],
            combo: false,
        }
    }

    pub fn eval(at: SpaceTime) -> Self {
        Self::point(Op::Eval, at)
    }

    pub fn time_deriv(at: SpaceTime) -> Self {
        Self::point(Op::TimeDeriv, at)
    }

    pub fn space_deriv(at: SpaceTime) -> Self {
        Self::point(Op::SpaceDeriv, at)
    }

    pub fn space_laplacian(at: SpaceTime) -> Self {
        Self::point(Op::SpaceLaplacian, at)
    }

    pub fn weighted(terms: impl IntoIterator<Item = Term>) -> Result<Self> {
        let terms: SmallVec<[Term; 2]> = terms.into_iter().collect();
        if let Some(bad) = terms.iter().find(|t| !t.coef.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite functional coefficient {} for {:?}",
                bad.coef, bad.op
            )));
        }
        Ok(Self { terms, combo: true })
    }

    pub fn kind(&self) -> FunctionalKind {
        if self.combo {
            return FunctionalKind::WeightedCombo;
        }
        match self.terms[0].op {
            Op::Eval => FunctionalKind::Eval,
            Op::TimeDeriv => FunctionalKind::TimeDeriv,
            Op::SpaceDeriv => FunctionalKind::SpaceDeriv,
            Op::SpaceLaplacian => FunctionalKind::SpaceLaplacian,
        }
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Applies the functional to a function described by its point
    /// derivatives `f(op, (x, t))`.
    pub fn apply(&self, f: &dyn Fn(Op, SpaceTime) -> f64) -> f64 {
        self.terms.iter().map(|t| t.coef * f(t.op, t.at)).sum()
    }

    /// This functional applied to the left kernel argument and `other` to the right.
    #[inline]
    pub fn pair(&self, other: &Functional, kernel: &ProductKernel) -> f64 {
        let mut acc = 0.0;
        for a in &self.terms {
            for b in &other.terms {
                let order = DerivOrder::from_parts(a.op.orders(), b.op.orders());
                acc += a.coef * b.coef * kernel.deriv(order, a.at, b.at);
            }
        }
        acc
    }

    /// `op` applied in `y` to `y -> self(K(y, .))`.
    #[inline]
    pub fn section(&self, op: Op, y: SpaceTime, kernel: &ProductKernel) -> f64 {
        self.terms
            .iter()
            .map(|b| b.coef * kernel.deriv(DerivOrder::from_parts(op.orders(), b.op.orders()), y, b.at))
            .sum()
    }
}

/// Uniform tensor grid description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub n_t: usize,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_x < 2 || self.n_t < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs n_x >= 2 and n_t >= 2, got {} x {}",
                self.n_x, self.n_t
            )));
        }
        if !(self.x_lo.is_finite() && self.x_hi.is_finite() && self.x_lo < self.x_hi) {
            return Err(Error::InvalidArgument(format!(
                "spatial interval [{}, {}] is empty",
                self.x_lo, self.x_hi
            )));
        }
        Ok(())
    }

    pub fn x_points(&self) -> Vec<f64> {
        uniform(self.x_lo, self.x_hi, self.n_x)
    }

    pub fn t_points(&self) -> Vec<f64> {
        uniform(0.0, 1.0, self.n_t)
    }

    /// Spatial interval `[-2s - 3, s + 3]`.
    pub fn symmetric_domain(s: f64) -> (f64, f64) {
        (-2.0 * s - 3.0, s + 3.0)
    }
}

pub(crate) fn uniform(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let last = n - 1;
    (0..n)
        .map(|i| {
            if i == last {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last as f64
            }
        })
        .collect()
}

/// Interior and boundary collocation points with the distinct-time table.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub interior: Vec<SpaceTime>,
    pub boundary: Vec<SpaceTime>,
    /// For each interior point, the index of its time in `times`.
    pub time_index: Vec<usize>,
    /// Distinct interior times, ascending.
    pub times: Vec<f64>,
    pub grid: Option<GridSpec>,
}

impl CollocationSet {
    /// Tensor grid: `x` outer, `t` inner. Boundary points are the spatial
    /// grid at `t = 0` followed by the spatial grid at `t = 1`.
    pub fn grid(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        let xs = spec.x_points();
        let ts = spec.t_points();
        let mut interior = Vec::with_capacity(xs.len() * ts.len());
        let mut time_index = Vec::with_capacity(xs.len() * ts.len());
        for &x in &xs {
            for (k, &t) in ts.iter().enumerate() {
                interior.push((x, t));
                time_index.push(k);
            }
        }
        let boundary = [0.0, 1.0]
            .iter()
            .flat_map(|&t| xs.iter().map(move |&x| (x, t)))
            .collect();
        Ok(Self {
            interior,
            boundary,
            time_index,
            times: ts,
            grid: Some(spec),
        })
    }

    pub fn from_points(interior: Vec<SpaceTime>, boundary: Vec<SpaceTime>) -> Result<Self> {
        if interior.is_empty() {
            return Err(Error::InvalidArgument("no interior collocation points".into()));
        }
        if interior.iter().chain(&boundary).any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::InvalidArgument("non-finite collocation point".into()));
        }
        let mut times: Vec<f64> = interior.iter().map(|p| p.1).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let time_index = interior
            .iter()
            .map(|p| times.binary_search_by(|t| t.total_cmp(&p.1)).expect("time present"))
            .collect();
        Ok(Self {
            interior,
            boundary,
            time_index,
            times,
            grid: None,
        })
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_boundary(&self) -> usize {
        self.boundary.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }
}

/// Ordered list of functionals paired with the kernel they act through.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    pub functionals: Vec<Functional>,
    pub kernel: ProductKernel,
}

impl FeatureMap {
    pub fn new(functionals: Vec<Functional>, kernel: ProductKernel) -> Self {
        Self { functionals, kernel }
    }

    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    pub fn apply(&self, f: &dyn Fn(Op, SpaceTime) -> f64) -> Vec<f64> {
        self.functionals.iter().map(|phi| phi.apply(f)).collect()
    }

    /// Row of `op` applied to `y -> K(y, phi)`; `Op::Eval` gives `K(y, phi)`.
    pub fn eval_row(&self, op: Op, y: SpaceTime) -> Vec<f64> {
        self.functionals
            .iter()
            .map(|phi| phi.section(op, y, &self.kernel))
            .collect()
    }
}

/// `[Laplacian u at interior] ++ [grad u at interior]`.
pub fn feature_map_u(c: &CollocationSet, kernel: ProductKernel) -> FeatureMap {
    let lap = c.interior.iter().map(|&p| Functional::space_laplacian(p));
    let grad = c.interior.iter().map(|&p| Functional::space_deriv(p));
    FeatureMap::new(lap.chain(grad).collect(), kernel)
}

/// `[dg/dt at interior] ++ [g at boundary] ++ [grad g at interior]`.
pub fn feature_map_g(c: &CollocationSet, kernel: ProductKernel) -> FeatureMap {
    let dt = c.interior.iter().map(|&p| Functional::time_deriv(p));
    let bc = c.boundary.iter().map(|&p| Functional::eval(p));
    let grad = c.interior.iter().map(|&p| Functional::space_deriv(p));
    FeatureMap::new(dt.chain(bc).chain(grad).collect(), kernel)
}
