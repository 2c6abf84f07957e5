use super::{FeatureMap, GramFactor, Op, SpaceTime};
use crate::error::{Error, Result};
use crate::transport::VelocityField;

/// `f(y) = sum_i alpha_i phi_i(K(y, .))`.
#[derive(Debug, Clone)]
pub struct Representer {
    features: FeatureMap,
    coefficients: Vec<f64>,
}

impl Representer {
    pub fn new(features: FeatureMap, coefficients: Vec<f64>) -> Result<Self> {
        if features.len() != coefficients.len() {
            return Err(Error::DimensionMismatch {
                what: "representer coefficients",
                expected: features.len(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            features,
            coefficients,
        })
    }

    /// Minimal-norm function whose functional values are `z`.
    pub fn interpolate(features: FeatureMap, gram: &GramFactor, z: &[f64]) -> Result<Self> {
        if z.len() != gram.dim() {
            return Err(Error::DimensionMismatch {
                what: "interpolation values",
                expected: gram.dim(),
                got: z.len(),
            });
        }
        Self::new(features, gram.solve(z))
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `op f` at `y`.
    pub fn eval(&self, op: Op, y: SpaceTime) -> f64 {
        let k = &self.features.kernel;
        self.features
            .functionals
            .iter()
            .zip(&self.coefficients)
            .map(|(phi, a)| a * phi.section(op, y, k))
            .sum()
    }

    pub fn value(&self, y: SpaceTime) -> f64 {
        self.eval(Op::Eval, y)
    }

    /// `op f` at every `(x, t)` for a fixed `t`. Time factors are shared
    /// across the batch.
    pub fn eval_at_time(&self, op: Op, xs: &[f64], t: f64, out: &mut [f64]) {
        assert_eq!(xs.len(), out.len());
        let k = &self.features.kernel;
        let (sl, tl) = op.orders();
        // (weight, space order on right, centre)
        let mut atoms: Vec<(f64, u8, f64)> = Vec::with_capacity(self.coefficients.len());
        for (phi, &a) in self.features.functionals.iter().zip(&self.coefficients) {
            for term in phi.terms() {
                let (sr, tr) = term.op.orders();
                let w = a * term.coef * k.time.deriv(tl, tr, t, term.at.1);
                if w != 0.0 {
                    atoms.push((w, sr, term.at.0));
                }
            }
        }
        for (x, o) in xs.iter().zip(out.iter_mut()) {
            *o = atoms
                .iter()
                .map(|&(w, sr, c)| w * k.space.deriv(sl, sr, *x, c))
                .sum();
        }
    }

    /// Term-by-term evaluation through the full product kernel.
    #[cfg(test)]
    fn eval_slow(&self, op: Op, y: SpaceTime) -> f64 {
        use crate::kernels::DerivOrder;
        let k = &self.features.kernel;
        let mut acc = 0.0;
        for (phi, a) in self.features.functionals.iter().zip(&self.coefficients) {
            for term in phi.terms() {
                let o = DerivOrder::from_parts(op.orders(), term.op.orders());
                acc += a * term.coef * k.deriv(o, y, term.at);
            }
        }
        acc
    }
}

/// The velocity `x -> d/dx u(x, t)` of a potential.
#[derive(Debug, Clone, Copy)]
pub struct GradientField<'a>(pub &'a Representer);

impl VelocityField for GradientField<'_> {
    fn velocity(&self, x: f64, t: f64) -> f64 {
        self.0.eval(Op::SpaceDeriv, (x, t))
    }

    fn velocities(&self, xs: &[f64], t: f64, out: &mut [f64]) {
        self.0.eval_at_time(Op::SpaceDeriv, xs, t, out);
    }
}
