//! Experiment configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::ConvexDomain;
use crate::error::{Error, Result};
use crate::functions::Analytic;
use crate::measure::QuadratureSpec;
use crate::oracle::Reflection;
use crate::report::sha256_hex;
use crate::solver::{FreeAxis, GridSpec};

/// Smallest accepted `--resolution` (grid cells per unit length).
pub const MIN_RESOLUTION: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    #[default]
    Solve,
    Verify,
    Sweep,
    Equivalence,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Starting point; the origin when absent.
    pub x0: Option<Vec<f64>>,
    pub n_paths: usize,
    pub dt: f64,
    /// Horizon; `20 / lambda` when absent.
    pub t_max: Option<f64>,
    pub reflection: Reflection,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { x0: None, n_paths: 100_000, dt: 1e-3, t_max: None, reflection: Reflection::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    /// Lambda values swept; the top-level `lambda` when empty.
    pub lambdas: Vec<f64>,
    /// Hermite modes per free axis.
    pub modes: usize,
    pub record_timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { dims: (1..=5).collect(), lambdas: vec![], modes: 4, record_timing: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquivalenceConfig {
    pub extra_dims: usize,
    /// Hermite modes per free axis of the direct solve.
    pub modes: usize,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self { extra_dims: 1, modes: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub lambda: f64,
    pub seed: u64,
    pub format: Format,
    pub output_dir: PathBuf,
    pub domain: ConvexDomain,
    pub rhs: Analytic,
    pub grid: GridSpec,
    /// Radial nodes for centered balls in two or more dimensions.
    pub radial_nodes: usize,
    pub quadrature: QuadratureSpec,
    pub oracle: OracleConfig,
    pub sweep: SweepConfig,
    pub equivalence: EquivalenceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            command: Command::default(),
            lambda: 1.0,
            seed: 0,
            format: Format::default(),
            output_dir: PathBuf::from("out"),
            domain: ConvexDomain::half_space(vec![1.0], 0.0).expect("unit normal"),
            rhs: Analytic::constant(1.0),
            grid: GridSpec::default(),
            radial_nodes: 257,
            quadrature: QuadratureSpec::default(),
            oracle: OracleConfig::default(),
            sweep: SweepConfig::default(),
            equivalence: EquivalenceConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub command: Option<Command>,
    pub output_dir: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub resolution: Option<u32>,
    pub seed: Option<u64>,
    pub dims: Option<Vec<usize>>,
    pub format: Option<Format>,
}

/// Parses `a..b` (inclusive) or a single dimension.
pub fn parse_dims(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("invalid dimension range {text:?}, expected a..b"));
    let (a, b) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse().map_err(|_| bad())?, b.trim_start_matches('=').trim().parse().map_err(|_| bad())?),
        None => {
            let n = text.trim().parse().map_err(|_| bad())?;
            (n, n)
        }
    };
    if a == 0 || b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// File (or defaults), then flags; validated afterwards.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = o.command {
            self.command = c;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(l) = o.lambda {
            self.lambda = l;
        }
        if let Some(r) = o.resolution {
            self.grid.spacing = 1.0 / f64::from(r);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.dims {
            self.sweep.dims = d.clone();
        }
        if let Some(f) = o.format {
            self.format = f;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return err(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.grid.spacing > 0.0 && self.grid.spacing <= 1.0 / f64::from(MIN_RESOLUTION)) {
            return err(format!("grid spacing must lie in (0, 1/{MIN_RESOLUTION}], got {}", self.grid.spacing));
        }
        if !(self.grid.truncation >= 2.0 && self.grid.truncation.is_finite()) {
            return err(format!("grid truncation must be at least 2, got {}", self.grid.truncation));
        }
        if let FreeAxis::Hermite { modes } = self.grid.free_axis {
            if modes == 0 {
                return err("Hermite free axes need at least one mode".into());
            }
        }
        if self.radial_nodes < 32 {
            return err(format!("radial_nodes must be at least 32, got {}", self.radial_nodes));
        }
        self.quadrature.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.rhs.min_dim() > self.domain.dim() {
            return err(format!(
                "right-hand side needs {} coordinates but the domain has {}",
                self.rhs.min_dim(),
                self.domain.dim()
            ));
        }
        let o = &self.oracle;
        if o.n_paths < 2 || !(o.dt > 0.0 && o.dt < 1.0) {
            return err(format!("oracle needs n_paths >= 2 and 0 < dt < 1, got {} and {}", o.n_paths, o.dt));
        }
        if let Some(x0) = &o.x0 {
            if x0.len() != self.domain.dim() {
                return err(format!("oracle x0 has {} coordinates, domain has {}", x0.len(), self.domain.dim()));
            }
        }
        if let Some(t) = o.t_max {
            if !(t * self.lambda >= crate::oracle::MIN_DISCOUNT_HORIZON) {
                return err(format!("oracle t_max * lambda must be at least 20, got {}", t * self.lambda));
            }
        }
        let s = &self.sweep;
        if s.dims.is_empty() || s.dims.iter().any(|&n| n == 0 || n > crate::cylinder::MAX_SWEEP_DIM) {
            return err(format!("sweep dims must lie in 1..={}", crate::cylinder::MAX_SWEEP_DIM));
        }
        if s.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) || s.modes == 0 {
            return err("sweep lambdas must be positive and modes at least one".into());
        }
        if self.equivalence.modes == 0 {
            return err("equivalence modes must be at least one".into());
        }
        Ok(())
    }

    /// Digest of the configuration without its output directory, so that the
    /// same experiment written to two places carries the same hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }

    pub fn sweep_lambdas(&self) -> Vec<f64> {
        if self.sweep.lambdas.is_empty() {
            vec![self.lambda]
        } else {
            self.sweep.lambdas.clone()
        }
    }
}
