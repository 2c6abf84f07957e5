//! Experiment configuration, read from JSON with unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collocation::GridSpec;
use crate::controlsolver::{LmConfig, PenaltyConfig};
use crate::densities::{GaussianMixture, QuadratureRule};
use crate::error::{Error, Result};
use crate::kernels::ProductKernel;
use crate::metrics::DEFAULT_LEFT_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSpec {
    /// Defaults to `180 / n_x`.
    pub sigma_x: Option<f64>,
    /// Defaults to `1 / sqrt(n_t)`.
    pub sigma_t: Option<f64>,
    /// Matérn smoothness; only 2.5 is supported.
    pub nu: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            sigma_x: None,
            sigma_t: None,
            nu: 2.5,
        }
    }
}

impl KernelSpec {
    pub fn resolve(&self, grid: &GridSpec) -> Result<ProductKernel> {
        if self.nu != 2.5 {
            return Err(Error::Config(format!(
                "only Matérn smoothness 2.5 is implemented, got {}",
                self.nu
            )));
        }
        let sx = self.sigma_x.unwrap_or(180.0 / grid.n_x as f64);
        let st = self.sigma_t.unwrap_or(1.0 / (grid.n_t as f64).sqrt());
        ProductKernel::new(sx, st).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSpec {
    pub dt: f64,
    pub n_particles: usize,
    pub seed: u64,
}

impl Default for TransportSpec {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_particles: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSpec {
    pub left_threshold: f64,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            left_threshold: DEFAULT_LEFT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub eta: GaussianMixture,
    pub pi: GaussianMixture,
    pub grid: GridSpec,
    pub kernels: KernelSpec,
    pub penalties: PenaltyConfig,
    pub warmup_balancing: bool,
    pub lm: LmConfig,
    pub transport: TransportSpec,
    pub quadrature: QuadratureRule,
    pub metrics: MetricsSpec,
    pub outputs: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let (x_lo, x_hi) = GridSpec::symmetric_domain(4.0);
        Self {
            eta: GaussianMixture::normal(0.0, 1.0).expect("valid"),
            pi: GaussianMixture::from_triples(&[(2.0 / 3.0, -8.0, 1.0), (1.0 / 3.0, 4.0, 1.0)])
                .expect("valid"),
            grid: GridSpec {
                x_lo,
                x_hi,
                n_x: 50,
                n_t: 51,
            },
            kernels: KernelSpec::default(),
            penalties: PenaltyConfig::default(),
            warmup_balancing: false,
            lm: LmConfig::default(),
            transport: TransportSpec::default(),
            quadrature: QuadratureRule::default(),
            metrics: MetricsSpec::default(),
            outputs: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.grid.validate().map_err(cfg)?;
        self.kernels.resolve(&self.grid)?;
        self.penalties.validate().map_err(cfg)?;
        self.lm.validate().map_err(cfg)?;
        self.quadrature.validate().map_err(cfg)?;
        for (name, m) in [("eta", &self.eta), ("pi", &self.pi)] {
            if !self.quadrature.covers(m) {
                return Err(Error::Config(format!(
                    "quadrature interval [{}, {}] does not cover {name} +/- 8 std",
                    self.quadrature.lower, self.quadrature.upper
                )));
            }
        }
        crate::transport::time_grid(self.transport.dt).map_err(cfg)?;
        if self.transport.n_particles < 2 {
            return Err(Error::Config("transport needs at least two particles".into()));
        }
        if !self.metrics.left_threshold.is_finite() {
            return Err(Error::Config("left threshold must be finite".into()));
        }
        Ok(())
    }

    pub fn kernel(&self) -> ProductKernel {
        self.kernels.resolve(&self.grid).expect("validated")
    }
}
