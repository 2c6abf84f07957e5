//! End-to-end runs of the reference, learned and McCann pipelines, and the
//! files each of them emits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collocation::{uniform, CollocationSet, Representer};
use crate::config::ExperimentConfig;
use crate::controlsolver::{solve_control, ControlProblem, ControlSolution, StopReason};
use crate::densities::GeometricPath;
use crate::error::{Error, Result};
use crate::kernels::ProductKernel;
use crate::metrics::{MetricsReport, SliceNorm, SpatialNorm};
use crate::refsolver::{solve_reference, ReferenceSolution};
use crate::transport::{euler_transport, mccann_trajectories, TrajectorySet};

/// Display grid for the tilt and path exports.
pub const DISPLAY_NX: usize = 200;
pub const DISPLAY_NT: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Reference,
    Learn,
    Mccann,
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Reference => "reference",
            Command::Learn => "learn",
            Command::Mccann => "mccann",
            Command::All => "all",
        }
    }
}

/// Initial particles, fresh target draws, and an independent second target
/// draw used for the ground-truth row.
#[derive(Debug, Clone)]
pub struct Samples {
    pub initial: Vec<f64>,
    pub truth: Vec<f64>,
    pub truth_alt: Vec<f64>,
}

pub struct Experiment {
    pub config: ExperimentConfig,
    path: GeometricPath,
    colloc: CollocationSet,
    kernel: ProductKernel,
    samples: Samples,
}

pub struct ReferenceRun {
    pub solution: ReferenceSolution,
    pub trajectories: TrajectorySet,
    pub metrics: MetricsReport,
}

pub struct LearnedRun {
    pub solution: ControlSolution,
    pub trajectories: TrajectorySet,
    pub metrics: MetricsReport,
}

pub struct McCannRun {
    pub trajectories: TrajectorySet,
    pub metrics: MetricsReport,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let path = GeometricPath::new(config.eta.clone(), config.pi.clone());
        let colloc = CollocationSet::grid(config.grid)?;
        let kernel = config.kernel();
        let t = &config.transport;
        let samples = Samples {
            initial: config.eta.sample(t.n_particles, t.seed),
            truth: config.pi.sample(t.n_particles, t.seed.wrapping_add(1)),
            truth_alt: config.pi.sample(t.n_particles, t.seed.wrapping_add(2)),
        };
        Ok(Self {
            config,
            path,
            colloc,
            kernel,
            samples,
        })
    }

    pub fn path(&self) -> &GeometricPath {
        &self.path
    }

    pub fn collocation(&self) -> &CollocationSet {
        &self.colloc
    }

    pub fn kernel(&self) -> ProductKernel {
        self.kernel
    }

    pub fn samples(&self) -> &Samples {
        &self.samples
    }

    fn sample_metrics(&self, samples: &[f64], truth: &[f64]) -> Result<MetricsReport> {
        MetricsReport::from_samples(
            samples,
            truth,
            self.config.pi.mean(),
            self.config.pi.variance(),
            self.config.metrics.left_threshold,
        )
    }

    pub fn spatial_norm(&self) -> Result<SpatialNorm> {
        SpatialNorm::new(self.config.grid.x_points(), self.kernel.space)
    }

    /// Exact spatial RKHS norm of `u(., t)` on the collocation times.
    pub fn norm_curve(&self, u: &Representer) -> Vec<(f64, f64)> {
        SliceNorm::new(u).curve(&self.config.grid.t_points())
    }

    fn with_trajectory_seed(&self, mut tr: TrajectorySet) -> TrajectorySet {
        tr.seed = Some(self.config.transport.seed);
        tr
    }

    pub fn solve_reference(&self) -> Result<ReferenceSolution> {
        solve_reference(&self.colloc, &self.path, self.kernel, &self.config.quadrature)
    }

    pub fn control_problem(&self) -> Result<ControlProblem> {
        ControlProblem::new(self.colloc.clone(), self.path.clone(), self.kernel)
    }

    pub fn solve_control(&self) -> Result<ControlSolution> {
        let problem = self.control_problem()?;
        solve_control(
            &problem,
            &problem.zero_state(),
            self.config.penalties,
            &self.config.lm,
            self.config.warmup_balancing,
        )
    }

    pub fn run_reference(&self) -> Result<ReferenceRun> {
        let solution = self.solve_reference()?;
        let trajectories = self.with_trajectory_seed(euler_transport(
            &solution.velocity_field(),
            &self.samples.initial,
            self.config.transport.dt,
        )?);
        let mut metrics = self.sample_metrics(&trajectories.terminal(), &self.samples.truth)?;
        metrics.rkhs_norm_spacetime = Some(solution.norm());
        metrics.spatial_norm_curve = Some(self.norm_curve(solution.potential()));
        Ok(ReferenceRun {
            solution,
            trajectories,
            metrics,
        })
    }

    pub fn run_learn(&self) -> Result<LearnedRun> {
        let solution = self.solve_control()?;
        self.finish_learn(solution)
    }

    /// Transport and metrics for an already solved control problem.
    pub fn finish_learn(&self, solution: ControlSolution) -> Result<LearnedRun> {
        let trajectories = self.with_trajectory_seed(euler_transport(
            &solution.velocity_field(),
            &self.samples.initial,
            self.config.transport.dt,
        )?);
        let mut metrics = self.sample_metrics(&trajectories.terminal(), &self.samples.truth)?;
        metrics.rkhs_norm_spacetime = Some(solution.norms().0);
        metrics.spatial_norm_curve = Some(self.norm_curve(solution.potential()));
        Ok(LearnedRun {
            solution,
            trajectories,
            metrics,
        })
    }

    pub fn run_mccann(&self) -> Result<McCannRun> {
        let trajectories = self.with_trajectory_seed(mccann_trajectories(
            &self.config.eta,
            &self.config.pi,
            &self.samples.initial,
            self.config.transport.dt,
        )?);
        let metrics = self.sample_metrics(&trajectories.terminal(), &self.samples.truth)?;
        Ok(McCannRun {
            trajectories,
            metrics,
        })
    }

    pub fn ground_truth_metrics(&self) -> Result<MetricsReport> {
        self.sample_metrics(&self.samples.truth, &self.samples.truth_alt)
    }

    fn display_axes(&self) -> (Vec<f64>, Vec<f64>) {
        (
            uniform(self.config.grid.x_lo, self.config.grid.x_hi, DISPLAY_NX),
            uniform(0.0, 1.0, DISPLAY_NT),
        )
    }

    /// `x,t,exp_g` rows, time-major.
    pub fn write_tilting_grid<W: Write>(&self, sol: &ControlSolution, mut w: W) -> Result<()> {
        let (xs, ts) = self.display_axes();
        let io = |e| Error::io("tilting_grid.csv", e);
        writeln!(w, "x,t,exp_g").map_err(io)?;
        for &t in &ts {
            let g = sol.tilt_on(&xs, t);
            for (x, gx) in xs.iter().zip(&g) {
                writeln!(w, "{x},{t},{}", gx.exp()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// `x,t,mu,rho_g` rows with both densities normalized, time-major.
    pub fn write_path_grid<W: Write>(&self, sol: &ControlSolution, mut w: W) -> Result<()> {
        let (xs, ts) = self.display_axes();
        let rule = &self.config.quadrature;
        let io = |e| Error::io("path_grid.csv", e);
        writeln!(w, "x,t,mu,rho_g").map_err(io)?;
        for &t in &ts {
            let log_z = self.path.log_normalizer_tabulated(None, t, rule)?;
            let rho = sol.tilted_density(&xs, t, rule)?;
            for (&x, r) in xs.iter().zip(&rho) {
                let mu = (self.path.log_unnorm(x, t) - log_z).exp();
                writeln!(w, "{x},{t},{mu},{r}").map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub fraction_left: f64,
    pub rel_err_mean: f64,
    pub rel_err_var: f64,
    pub mmd: f64,
    pub rkhs_norm: Option<f64>,
}

impl TableRow {
    fn new(method: &str, m: &MetricsReport) -> Self {
        Self {
            method: method.to_string(),
            fraction_left: m.fraction_left,
            rel_err_mean: m.rel_err_mean,
            rel_err_var: m.rel_err_var,
            mmd: m.mmd,
            rkhs_norm: m.rkhs_norm_spacetime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub left_threshold: f64,
    pub target_mean: f64,
    pub target_variance: f64,
    pub n_samples: usize,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    pub final_objective: f64,
    pub final_pde_residual_rms: f64,
    pub final_bc_residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Jitters {
    pub reference: Option<f64>,
    pub control_u: Option<f64>,
    pub control_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub version: String,
    pub config: ExperimentConfig,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub jitters: Jitters,
    pub solver: Option<SolverSummary>,
    pub files: Vec<FileEntry>,
}

/// Files written by one command. Dropped without `commit`, every file
/// written so far is removed.
pub struct OutputSet {
    dir: PathBuf,
    written: Vec<String>,
    committed: bool,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            committed: false,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn names(&self) -> &[String] {
        &self.written
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.written.push(name.to_string());
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::io(name, e.into()))?;
            writeln!(w).map_err(|e| Error::io(name, e))
        })
    }

    pub fn entries(&self) -> Result<Vec<FileEntry>> {
        self.written
            .iter()
            .map(|name| {
                let path = self.dir.join(name);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Ok(FileEntry {
                    name: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect()
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        self.written.iter().map(|n| self.dir.join(n)).collect()
    }
}

impl Drop for OutputSet {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for name in &self.written {
            let _ = std::fs::remove_file(self.dir.join(name));
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn write_trajectories(out: &mut OutputSet, name: &str, tr: &TrajectorySet) -> Result<()> {
    out.write_with(name, |w| tr.write_csv(w).map_err(|e| Error::io(name, e)))
}

fn write_curve(out: &mut OutputSet, name: &str, m: &MetricsReport) -> Result<()> {
    let curve = m.spatial_norm_curve.as_deref().unwrap_or(&[]);
    out.write_with(name, |w| {
        crate::metrics::write_curve_csv(curve, w).map_err(|e| Error::io(name, e))
    })
}

pub fn emit_reference(out: &mut OutputSet, run: &ReferenceRun) -> Result<()> {
    out.write_json("reference_solution.json", &run.solution.record())?;
    write_trajectories(out, "reference_trajectories.csv", &run.trajectories)?;
    out.write_json("reference_metrics.json", &run.metrics)?;
    write_curve(out, "reference_norms.csv", &run.metrics)
}

pub fn emit_learned(exp: &Experiment, out: &mut OutputSet, run: &LearnedRun) -> Result<()> {
    out.write_json("control_solution.json", &run.solution.record())?;
    write_trajectories(out, "learned_trajectories.csv", &run.trajectories)?;
    out.write_json("learned_metrics.json", &run.metrics)?;
    write_curve(out, "learned_norms.csv", &run.metrics)?;
    out.write_with("tilting_grid.csv", |w| exp.write_tilting_grid(&run.solution, w))?;
    out.write_with("path_grid.csv", |w| exp.write_path_grid(&run.solution, w))
}

pub fn emit_mccann(out: &mut OutputSet, run: &McCannRun) -> Result<()> {
    write_trajectories(out, "mccann_trajectories.csv", &run.trajectories)?;
    out.write_json("mccann_metrics.json", &run.metrics)
}

/// Runs `cmd` and writes its files into `dir`. On error every file written
/// by this call is removed.
pub fn run_command(cmd: Command, config: ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let started = unix_now();
    let exp = Experiment::new(config)?;
    let mut out = OutputSet::create(dir)?;
    let mut jitters = Jitters::default();
    let mut solver = None;
    let mut reference = None;
    let mut learned = None;
    let mut mccann = None;

    if matches!(cmd, Command::Reference | Command::All) {
        log::info!("solving the reference problem");
        let run = exp.run_reference()?;
        emit_reference(&mut out, &run)?;
        jitters.reference = Some(run.solution.gram().jitter());
        reference = Some(run.metrics);
    }
    if matches!(cmd, Command::Learn | Command::All) {
        log::info!("solving the control problem");
        let run = exp.run_learn()?;
        emit_learned(&exp, &mut out, &run)?;
        let (ju, jg) = run.solution.jitters();
        jitters.control_u = Some(ju);
        jitters.control_g = Some(jg);
        let r = &run.solution.report;
        solver = Some(SolverSummary {
            iterations: r.iterations,
            converged: r.converged,
            reason: r.reason,
            final_objective: r.final_objective,
            final_pde_residual_rms: r.final_pde_residual_rms,
            final_bc_residual_rms: r.final_bc_residual_rms,
        });
        learned = Some(run.metrics);
    }
    if matches!(cmd, Command::Mccann | Command::All) {
        log::info!("computing the McCann interpolation");
        let run = exp.run_mccann()?;
        emit_mccann(&mut out, &run)?;
        mccann = Some(run.metrics);
    }
    if cmd == Command::All {
        let rows = [
            ("reference", reference.as_ref()),
            ("learned", learned.as_ref()),
            ("mccann", mccann.as_ref()),
        ];
        let mut table: Vec<TableRow> = rows
            .iter()
            .map(|(name, m)| TableRow::new(name, m.expect("stage ran")))
            .collect();
        table.push(TableRow::new("ground_truth", &exp.ground_truth_metrics()?));
        let t1 = Table1 {
            left_threshold: exp.config.metrics.left_threshold,
            target_mean: exp.config.pi.mean(),
            target_variance: exp.config.pi.variance(),
            n_samples: exp.config.transport.n_particles,
            rows: table,
        };
        out.write_json("table1.json", &t1)?;
        let manifest = RunManifest {
            command: cmd,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: exp.config.clone(),
            started_unix: started,
            finished_unix: unix_now(),
            jitters,
            solver,
            files: out.entries()?,
        };
        out.write_json("manifest.json", &manifest)?;
    }
    Ok(out.commit())
}
