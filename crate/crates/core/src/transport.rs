//! Particle transport under a velocity field and the monotone (McCann)
//! interpolation between two mixtures on the line.

use std::io::Write;

use crate::densities::{GaussianMixture, Tail};
use crate::error::{Error, Result};

pub trait VelocityField {
    fn velocity(&self, x: f64, t: f64) -> f64;

    fn velocities(&self, xs: &[f64], t: f64, out: &mut [f64]) {
        for (x, o) in xs.iter().zip(out.iter_mut()) {
            *o = self.velocity(*x, t);
        }
    }
}

/// Adapts a closure `(x, t) -> v`.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, f64) -> f64> VelocityField for FnField<F> {
    fn velocity(&self, x: f64, t: f64) -> f64 {
        (self.0)(x, t)
    }
}

/// Positions of every particle at every time step, stored particle-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    times: Vec<f64>,
    positions: Vec<f64>,
    n_particles: usize,
    pub seed: Option<u64>,
}

impl TrajectorySet {
    pub fn new(times: Vec<f64>, n_particles: usize, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != times.len() * n_particles {
            return Err(Error::DimensionMismatch {
                what: "trajectory positions",
                expected: times.len() * n_particles,
                got: positions.len(),
            });
        }
        Ok(Self {
            times,
            positions,
            n_particles,
            seed: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn position(&self, particle: usize, step: usize) -> f64 {
        self.positions[particle * self.times.len() + step]
    }

    pub fn path(&self, particle: usize) -> &[f64] {
        let n = self.times.len();
        &self.positions[particle * n..(particle + 1) * n]
    }

    /// Positions of all particles at one step.
    pub fn snapshot(&self, step: usize) -> Vec<f64> {
        (0..self.n_particles).map(|p| self.position(p, step)).collect()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.snapshot(0)
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.snapshot(self.n_steps())
    }

    /// Writes `particle,t,x` rows, particle-major.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "particle,t,x")?;
        for p in 0..self.n_particles {
            for (t, x) in self.times.iter().zip(self.path(p)) {
                writeln!(w, "{p},{t},{x}")?;
            }
        }
        w.flush()
    }
}

/// Uniform time grid `k / n` on [0, 1] for a step that divides 1.
pub fn time_grid(dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} outside (0, 1]")));
    }
    let n = (1.0 / dt).round();
    if (n * dt - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("time step {dt} does not divide [0, 1]")));
    }
    let n = n as usize;
    Ok((0..=n).map(|k| k as f64 / n as f64).collect())
}

/// Forward Euler `x_{k+1} = x_k + dt v(x_k, t_k)` from `t = 0` to `t = 1`.
pub fn euler_transport(v: &dyn VelocityField, init: &[f64], dt: f64) -> Result<TrajectorySet> {
    let times = time_grid(dt)?;
    let n_t = times.len();
    let h = 1.0 / (n_t - 1) as f64;
    let n = init.len();
    let mut positions = vec![0.0; n * n_t];
    let mut current = init.to_vec();
    let mut vel = vec![0.0; n];
    for (k, &t) in times.iter().enumerate() {
        for (p, &x) in current.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinitePosition { particle: p, t });
            }
            positions[p * n_t + k] = x;
        }
        if k + 1 == n_t {
            break;
        }
        v.velocities(&current, t, &mut vel);
        for (x, u) in current.iter_mut().zip(&vel) {
            *x += h * u;
        }
    }
    TrajectorySet::new(times, n, positions)
}

/// Monotone map `T = Q_pi o F_eta`, evaluated in whichever tail keeps the
/// probability level away from 1.
pub fn mccann_map(eta: &GaussianMixture, pi: &GaussianMixture, x: f64) -> Result<f64> {
    transfer(eta, pi, x)
}

/// `T^{-1} = Q_eta o F_pi`.
pub fn mccann_inverse(eta: &GaussianMixture, pi: &GaussianMixture, y: f64) -> Result<f64> {
    transfer(pi, eta, y)
}

fn transfer(from: &GaussianMixture, to: &GaussianMixture, x: f64) -> Result<f64> {
    let lower = from.cdf(x);
    let (level, tail) = if lower <= 0.5 {
        (lower, Tail::Lower)
    } else {
        (from.sf(x), Tail::Upper)
    };
    if level.is_nan() || level <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "point {x} lies beyond the representable tail of the source distribution"
        )));
    }
    Ok(to.invert(level, tail))
}

/// Position at time `t` of the particle that starts at `x0`.
pub fn mccann_position(eta: &GaussianMixture, pi: &GaussianMixture, x0: f64, t: f64) -> Result<f64> {
    Ok((1.0 - t) * x0 + t * mccann_map(eta, pi, x0)?)
}

/// Eulerian velocity of the displacement interpolation at `(x, t)`:
/// `T(x0) - x0` where `x0` solves `(1 - t) x0 + t T(x0) = x`.
pub fn mccann_velocity(eta: &GaussianMixture, pi: &GaussianMixture, x: f64, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("time {t} outside [0, 1]")));
    }
    if t == 1.0 {
        return Ok(x - mccann_inverse(eta, pi, x)?);
    }
    let x0 = solve_start(eta, pi, x, t)?;
    Ok(mccann_map(eta, pi, x0)? - x0)
}

fn solve_start(eta: &GaussianMixture, pi: &GaussianMixture, x: f64, t: f64) -> Result<f64> {
    // h is strictly increasing with slope >= 1 - t
    let h = |z: f64| -> Result<f64> { Ok((1.0 - t) * z + t * mccann_map(eta, pi, z)? - x) };
    let mut width = 1.0;
    let mut lo = x - width;
    let mut hi = x + width;
    let mut expansions = 0;
    while h(lo)? > 0.0 || h(hi)? < 0.0 {
        width *= 2.0;
        lo = x - width;
        hi = x + width;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Bracket(format!("no start point bracket for x = {x}, t = {t}")));
        }
    }
    let mut z = 0.5 * (lo + hi);
    for _ in 0..200 {
        let tz = mccann_map(eta, pi, z)?;
        let r = (1.0 - t) * z + t * tz - x;
        if r == 0.0 {
            return Ok(z);
        }
        if r < 0.0 {
            lo = z;
        } else {
            hi = z;
        }
        let slope = (1.0 - t) + t * (eta.log_pdf(z) - pi.log_pdf(tz)).exp();
        let mut next = z - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - z).abs();
        z = next;
        if step <= 1e-13 * (1.0 + z.abs()) || hi - lo <= 1e-13 * (1.0 + z.abs()) {
            return Ok(z);
        }
    }
    Ok(z)
}

/// Velocity field of the displacement interpolation.
#[derive(Debug, Clone)]
pub struct McCannField<'a> {
    pub eta: &'a GaussianMixture,
    pub pi: &'a GaussianMixture,
}

impl VelocityField for McCannField<'_> {
    fn velocity(&self, x: f64, t: f64) -> f64 {
        mccann_velocity(self.eta, self.pi, x, t).unwrap_or(f64::NAN)
    }
}

/// Trajectories `(1 - t) x0 + t T(x0)` on the grid of step `dt`.
pub fn mccann_trajectories(
    eta: &GaussianMixture,
    pi: &GaussianMixture,
    init: &[f64],
    dt: f64,
) -> Result<TrajectorySet> {
    let times = time_grid(dt)?;
    let mut positions = Vec::with_capacity(init.len() * times.len());
    for &x0 in init {
        let y = mccann_map(eta, pi, x0)?;
        positions.extend(times.iter().map(|&t| (1.0 - t) * x0 + t * y));
    }
    TrajectorySet::new(times, init.len(), positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_mode() -> GaussianMixture {
        GaussianMixture::from_triples(&[(2.0 / 3.0, -8.0, 1.0), (1.0 / 3.0, 4.0, 1.0)]).unwrap()
    }

    #[test]
    fn constant_field_translates() {
        let v = FnField(|_x: f64, _t: f64| 2.0);
        let tr = euler_transport(&v, &[0.0, 1.5], 0.01).unwrap();
        assert_eq!(tr.n_steps(), 100);
        assert!((tr.position(0, 100) - 2.0).abs() < 1e-12);
        assert!((tr.position(1, 100) - 3.5).abs() < 1e-12);
        assert_eq!(tr.times()[7], 0.07);
    }

    #[test]
    fn linear_field_matches_euler_product() {
        let v = FnField(|x: f64, _t: f64| x);
        let tr = euler_transport(&v, &[1.0], 0.01).unwrap();
        assert!((tr.terminal()[0] - 1.01f64.powi(100)).abs() < 1e-12);
    }

    #[test]
    fn bad_step_rejected() {
        let v = FnField(|_x: f64, _t: f64| 0.0);
        assert!(euler_transport(&v, &[0.0], 0.3).is_err());
        assert!(euler_transport(&v, &[0.0], 0.0).is_err());
    }

    #[test]
    fn non_finite_velocity_reported() {
        let v = FnField(|x: f64, t: f64| if t > 0.5 && x > 0.0 { f64::INFINITY } else { 1.0 });
        match euler_transport(&v, &[-10.0, 0.0], 0.1) {
            Err(Error::NonFinitePosition { particle, .. }) => assert_eq!(particle, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gaussian_map_is_affine() {
        let eta = GaussianMixture::normal(0.0, 1.0).unwrap();
        let pi = GaussianMixture::normal(3.0, 2.0).unwrap();
        for &x in &[-3.0, -0.5, 0.0, 1.2, 4.0] {
            assert!((mccann_map(&eta, &pi, x).unwrap() - (3.0 + 2.0 * x)).abs() < 1e-9);
        }
        assert!((mccann_map(&eta, &pi, 0.0).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identity_when_endpoints_agree() {
        let m = two_mode();
        for &x in &[-9.0, -8.0, 0.0, 3.0, 5.5] {
            assert!((mccann_map(&m, &m, x).unwrap() - x).abs() < 1e-9);
            assert!(mccann_velocity(&m, &m, x, 0.4).unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn mass_split_point() {
        let eta = GaussianMixture::normal(0.0, 1.0).unwrap();
        let pi = two_mode();
        let x_star = eta.quantile(2.0 / 3.0).unwrap();
        assert!((x_star - 0.430_727_299_295_457_5).abs() < 1e-9);
        let y = mccann_map(&eta, &pi, x_star).unwrap();
        assert!((pi.cdf(y) - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn velocity_consistent_with_positions() {
        let eta = GaussianMixture::normal(0.0, 1.0).unwrap();
        let pi = two_mode();
        for &x0 in &[-2.0, -0.3, 0.43, 1.0, 2.5] {
            let y = mccann_map(&eta, &pi, x0).unwrap();
            for &t in &[0.0, 0.25, 0.5, 0.9, 1.0] {
                let xt = mccann_position(&eta, &pi, x0, t).unwrap();
                let v = mccann_velocity(&eta, &pi, xt, t).unwrap();
                assert!((v - (y - x0)).abs() < 1e-6 * (1.0 + (y - x0).abs()), "x0={x0} t={t}");
            }
        }
    }

    #[test]
    fn csv_layout() {
        let tr = TrajectorySet::new(vec![0.0, 0.5, 1.0], 2, vec![0.0, 0.1, 0.2, 1.0, 1.5, 2.0]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "particle,t,x");
        assert_eq!(lines[1], "0,0,0");
        assert_eq!(lines[4], "1,0,1");
        assert_eq!(lines.len(), 7);
        assert_eq!(tr.terminal(), vec![0.2, 2.0]);
    }
}
