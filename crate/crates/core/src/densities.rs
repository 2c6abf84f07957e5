//! One-dimensional Gaussian mixtures, the geometric annealing path between
//! two of them, and trapezoid quadrature for expectations along the path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Weighted mixture of univariate normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    components: Vec<Component>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;
    fn try_from(spec: MixtureSpec) -> Result<Self> {
        GaussianMixture::new(spec.components)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(m: GaussianMixture) -> Self {
        MixtureSpec {
            components: m.components,
        }
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::InvalidMixture(format!(
                    "component {i} has non-positive weight {}",
                    c.weight
                )));
            }
            if !(c.std.is_finite() && c.std > 0.0) {
                return Err(Error::InvalidMixture(format!(
                    "component {i} has non-positive std {}",
                    c.std
                )));
            }
            if !c.mean.is_finite() {
                return Err(Error::InvalidMixture(format!("component {i} has non-finite mean")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![Component {
            weight: 1.0,
            mean,
            std,
        }])
    }

    /// Builds from `(weight, mean, std)` triples.
    pub fn from_triples(triples: &[(f64, f64, f64)]) -> Result<Self> {
        Self::new(
            triples
                .iter()
                .map(|&(weight, mean, std)| Component { weight, mean, std })
                .collect(),
        )
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let second: f64 = self
            .components
            .iter()
            .map(|c| c.weight * (c.std * c.std + c.mean * c.mean))
            .sum();
        second - m * m
    }

    fn component_log_terms(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.components.iter().map(move |c| {
            let z = (x - c.mean) / c.std;
            c.weight.ln() - 0.5 * z * z - c.std.ln() - LN_SQRT_2PI
        })
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        log_sum_exp(self.component_log_terms(x))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// d/dx log p(x), as the responsibility-weighted average of component scores.
    pub fn score(&self, x: f64) -> f64 {
        let lse = self.log_pdf(x);
        if !lse.is_finite() {
            // every component underflowed; fall back to the nearest one
            let nearest = self
                .components
                .iter()
                .min_by(|a, b| {
                    let za = ((x - a.mean) / a.std).abs();
                    let zb = ((x - b.mean) / b.std).abs();
                    za.total_cmp(&zb)
                })
                .expect("nonempty");
            return -(x - nearest.mean) / (nearest.std * nearest.std);
        }
        self.components
            .iter()
            .zip(self.component_log_terms(x))
            .map(|(c, l)| (l - lse).exp() * (-(x - c.mean) / (c.std * c.std)))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * std_normal_cdf((x - c.mean) / c.std))
            .sum()
    }

    /// Survival function 1 - cdf(x), accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * std_normal_cdf(-(x - c.mean) / c.std))
            .sum()
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidArgument(format!("quantile level {p} outside (0, 1)")));
        }
        if p <= 0.5 {
            Ok(self.invert(p, Tail::Lower))
        } else {
            Ok(self.invert(1.0 - p, Tail::Upper))
        }
    }

    /// Solves `cdf(x) = level` (lower tail) or `sf(x) = level` (upper tail)
    /// by bisection on a bracket covering every component, then Newton polish.
    pub(crate) fn invert(&self, level: f64, tail: Tail) -> f64 {
        // residual is increasing in x for both tails
        let residual = |x: f64| match tail {
            Tail::Lower => self.cdf(x) - level,
            Tail::Upper => level - self.sf(x),
        };
        let (mut lo, mut hi) = self.support_bracket();
        while residual(lo) > 0.0 {
            lo -= hi - lo;
        }
        while residual(hi) < 0.0 {
            hi += hi - lo;
        }
        let scale = self.components.iter().map(|c| c.std).fold(f64::INFINITY, f64::min);
        let mut iter = 0;
        while hi - lo > 1e-3 * scale && iter < 200 {
            let mid = 0.5 * (lo + hi);
            if residual(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iter += 1;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..60 {
            let r = residual(x);
            if r == 0.0 {
                break;
            }
            if r < 0.0 {
                lo = lo.max(x);
            } else {
                hi = hi.min(x);
            }
            let d = self.pdf(x);
            let mut next = if d > 0.0 { x - r / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step <= 1e-14 * (1.0 + x.abs()) || hi - lo <= 1e-14 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    fn support_bracket(&self) -> (f64, f64) {
        let lo = self
            .components
            .iter()
            .map(|c| c.mean - 40.0 * c.std)
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .components
            .iter()
            .map(|c| c.mean + 40.0 * c.std)
            .fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Draws `n` i.i.d. samples. The component is picked by inverse CDF on
    /// the weights from one uniform, followed by one standard normal draw.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cumulative = Vec::with_capacity(self.components.len());
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            cumulative.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let k = cumulative
                    .iter()
                    .position(|&cw| u < cw)
                    .unwrap_or(self.components.len() - 1);
                let z: f64 = rng.sample(StandardNormal);
                let c = &self.components[k];
                c.mean + c.std * z
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Tail {
    Lower,
    Upper,
}

pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub(crate) fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let terms: smallvec::SmallVec<[f64; 8]> = terms.collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Known quantities of the constraint at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ingredients {
    /// log(pi / eta)(x)
    pub ell: f64,
    /// (1 - t) d/dx log eta(x) + t d/dx log pi(x)
    pub score: f64,
}

/// mu(t) proportional to eta^(1-t) pi^t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricPath {
    pub eta: GaussianMixture,
    pub pi: GaussianMixture,
}

impl GeometricPath {
    pub fn new(eta: GaussianMixture, pi: GaussianMixture) -> Self {
        Self { eta, pi }
    }

    pub fn log_unnorm(&self, x: f64, t: f64) -> f64 {
        (1.0 - t) * self.eta.log_pdf(x) + t * self.pi.log_pdf(x)
    }

    pub fn ingredients(&self, x: f64, t: f64) -> Ingredients {
        Ingredients {
            ell: self.pi.log_pdf(x) - self.eta.log_pdf(x),
            score: (1.0 - t) * self.eta.score(x) + t * self.pi.score(x),
        }
    }

    /// E over the (optionally tilted) normalized path at time `t` of
    /// `log(pi/eta) + dg/dt`. The tilt closure returns `(g, dg/dt)` at `x`.
    pub fn expectation(
        &self,
        tilt: Option<&dyn Fn(f64) -> (f64, f64)>,
        t: f64,
        rule: &QuadratureRule,
    ) -> Result<f64> {
        let nodes = self.weighted_nodes(tilt, t, rule)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for node in &nodes {
            num += node.weight * node.integrand;
            den += node.weight;
        }
        Ok(num / den)
    }

    /// Z(t) = integral of exp(log_unnorm + g).
    pub fn normalizer(
        &self,
        tilt: Option<&dyn Fn(f64) -> (f64, f64)>,
        t: f64,
        rule: &QuadratureRule,
    ) -> Result<f64> {
        let (nodes, shift) = self.weighted_nodes_with_shift(tilt, t, rule)?;
        let total: f64 = nodes.iter().map(|n| n.weight).sum();
        Ok(total * shift.exp())
    }

    /// `log Z(t)` of `mu(t) e^g` with `g` tabulated at the rule's nodes.
    pub fn log_normalizer_tabulated(&self, g: Option<&[f64]>, t: f64, rule: &QuadratureRule) -> Result<f64> {
        if let Some(g) = g {
            if g.len() != rule.nodes {
                return Err(Error::DimensionMismatch {
                    what: "tabulated tilt",
                    expected: rule.nodes,
                    got: g.len(),
                });
            }
        }
        let mut logs = Vec::with_capacity(rule.nodes);
        for (k, (x, w)) in rule.points().enumerate() {
            let l = self.log_unnorm(x, t) + g.map_or(0.0, |g| g[k]);
            if !l.is_finite() {
                return Err(Error::Quadrature { node: k, x, t });
            }
            logs.push((l, w));
        }
        let shift = logs.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        Ok(shift + logs.iter().map(|&(l, w)| w * (l - shift).exp()).sum::<f64>().ln())
    }

    /// Mass of the normalized `mu(t) e^g` below `threshold`, by the same rule.
    pub fn mass_below(&self, threshold: f64, g: Option<&[f64]>, t: f64, rule: &QuadratureRule) -> Result<f64> {
        let log_z = self.log_normalizer_tabulated(g, t, rule)?;
        Ok(rule
            .points()
            .enumerate()
            .filter(|(_, (x, _))| *x < threshold)
            .map(|(k, (x, w))| w * (self.log_unnorm(x, t) + g.map_or(0.0, |g| g[k]) - log_z).exp())
            .sum())
    }

    fn weighted_nodes(
        &self,
        tilt: Option<&dyn Fn(f64) -> (f64, f64)>,
        t: f64,
        rule: &QuadratureRule,
    ) -> Result<Vec<WeightedNode>> {
        Ok(self.weighted_nodes_with_shift(tilt, t, rule)?.0)
    }

    fn weighted_nodes_with_shift(
        &self,
        tilt: Option<&dyn Fn(f64) -> (f64, f64)>,
        t: f64,
        rule: &QuadratureRule,
    ) -> Result<(Vec<WeightedNode>, f64)> {
        let mut logs = Vec::with_capacity(rule.nodes);
        let mut integrands = Vec::with_capacity(rule.nodes);
        for (k, (x, _)) in rule.points().enumerate() {
            let (g, dg) = tilt.map_or((0.0, 0.0), |f| f(x));
            let lw = self.log_unnorm(x, t) + g;
            let f = self.pi.log_pdf(x) - self.eta.log_pdf(x) + dg;
            if !lw.is_finite() || !f.is_finite() {
                return Err(Error::Quadrature { node: k, x, t });
            }
            logs.push(lw);
            integrands.push(f);
        }
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let nodes = rule
            .points()
            .zip(logs.iter().zip(&integrands))
            .map(|((_, w), (&lw, &f))| WeightedNode {
                weight: w * (lw - shift).exp(),
                integrand: f,
            })
            .collect();
        Ok((nodes, shift))
    }
}

struct WeightedNode {
    weight: f64,
    integrand: f64,
}

/// Composite trapezoid rule on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureRule {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            lower: -30.0,
            upper: 30.0,
            nodes: 4001,
        }
    }
}

impl QuadratureRule {
    pub fn new(lower: f64, upper: f64, nodes: usize) -> Result<Self> {
        let rule = Self { lower, upper, nodes };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::InvalidArgument(format!(
                "quadrature interval [{}, {}] is empty",
                self.lower, self.upper
            )));
        }
        if self.nodes < 3 {
            return Err(Error::InvalidArgument(format!(
                "quadrature needs at least 3 nodes, got {}",
                self.nodes
            )));
        }
        Ok(())
    }

    /// Same interval, `2 * nodes - 1` nodes (halved spacing).
    pub fn refined(&self) -> Self {
        Self {
            nodes: 2 * self.nodes - 1,
            ..*self
        }
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.nodes - 1) as f64
    }

    /// `(node, weight)` pairs.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = self.spacing();
        let last = self.nodes - 1;
        (0..self.nodes).map(move |k| {
            let x = if k == last { self.upper } else { self.lower + h * k as f64 };
            let w = if k == 0 || k == last { 0.5 * h } else { h };
            (x, w)
        })
    }

    pub fn abscissae(&self) -> Vec<f64> {
        self.points().map(|p| p.0).collect()
    }

    /// Does the interval cover every component mean +/- 8 std?
    pub fn covers(&self, m: &GaussianMixture) -> bool {
        m.components()
            .iter()
            .all(|c| c.mean - 8.0 * c.std >= self.lower && c.mean + 8.0 * c.std <= self.upper)
    }
}
