//! Experiment configuration files (TOML).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kfim_core::model::{DENSE_MAX_L, MAX_L};
use kfim_core::spectral::{default_filter_spec, FilterSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SchmidtStats,
    GevFit,
    WishartReference,
    Eth,
    Autocorr,
    Otoc,
    PolfedCheck,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    #[default]
    Kfim,
    Coe,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Kfim => "kfim",
            Model::Coe => "coe",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMethod {
    /// Dense up to D = 2^10, tridiagonal above.
    #[default]
    Auto,
    Dense,
    Tridiagonal,
}

/// Wishart λ_max reference samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub draws: usize,
    /// Matrix dimension; defaults to 2^18.
    #[serde(default = "default_reference_dim")]
    pub dim: usize,
    #[serde(default)]
    pub method: ReferenceMethod,
}

fn default_reference_dim() -> usize {
    1 << 18
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterOverrides {
    pub kappa: Option<usize>,
    pub krylov_dim: Option<usize>,
    pub residue_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Chain lengths. For wishart-reference, L selects D = 2^{L/2}.
    #[serde(default)]
    pub sizes: Vec<usize>,
    /// Realizations per L.
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Per-L overrides of `realizations`, keyed by L.
    #[serde(default)]
    pub realizations_by_l: BTreeMap<String, usize>,
    /// Derive realization counts from the full-scale eigenvector totals.
    #[serde(default)]
    pub full_scale: bool,
    /// Eigenpairs nearest the target phase kept per realization.
    #[serde(default = "default_eigenpairs")]
    pub eigenpairs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Model,
    #[serde(default = "default_quarter_pi")]
    pub coupling: f64,
    #[serde(default = "default_quarter_pi")]
    pub kick: f64,
    #[serde(default = "default_target")]
    pub target_phase: f64,
    #[serde(default)]
    pub filter: FilterOverrides,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_t_max")]
    pub t_max: usize,
    /// Random vectors for the stochastic OTOC trace; exact trace when absent.
    #[serde(default)]
    pub stochastic_vectors: Option<usize>,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    /// Write every rescaled Schmidt value to spectra.csv.
    #[serde(default = "default_true")]
    pub store_spectra: bool,
    /// Input CSV files for gev-fit.
    #[serde(default)]
    pub input: Vec<PathBuf>,
    pub output: PathBuf,
}

fn default_realizations() -> usize {
    100
}
fn default_eigenpairs() -> usize {
    32
}
fn default_quarter_pi() -> f64 {
    FRAC_PI_4
}
fn default_target() -> f64 {
    FRAC_PI_2
}
fn default_bins() -> usize {
    100
}
fn default_t_max() -> usize {
    100
}
fn default_true() -> bool {
    true
}

/// Total eigenvectors per L in the full-scale study.
pub const FULL_SCALE_EIGENVECTORS: [(usize, usize); 10] = [
    (8, 1_000_000),
    (9, 500_000),
    (10, 500_000),
    (11, 500_000),
    (12, 300_000),
    (13, 179_000),
    (14, 101_600),
    (15, 72_400),
    (16, 51_200),
    (18, 40_960),
];

impl ExperimentConfig {
    /// Parses a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        for p in &mut cfg.input {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn realizations_for(&self, l: usize) -> usize {
        if let Some(&n) = self.realizations_by_l.get(&l.to_string()) {
            return n;
        }
        if self.full_scale {
            if let Some(&(_, total)) = FULL_SCALE_EIGENVECTORS.iter().find(|(pl, _)| *pl == l) {
                return total.div_ceil(self.eigenpairs.max(1));
            }
        }
        self.realizations
    }

    pub fn filter_spec(&self, l: usize) -> FilterSpec {
        let mut s = default_filter_spec(l);
        s.target_phase = self.target_phase;
        if let Some(k) = self.filter.kappa {
            s.kappa = k;
        }
        if let Some(k) = self.filter.krylov_dim {
            s.krylov_dim = k;
        }
        if let Some(t) = self.filter.residue_threshold {
            s.residue_threshold = t;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind::*;
        if self.kind == GevFit {
            if self.input.is_empty() {
                bail!("gev-fit needs at least one `input` CSV");
            }
            return Ok(());
        }
        if self.sizes.is_empty() {
            bail!("`sizes` must list at least one chain length");
        }
        for &l in &self.sizes {
            if !(2..=MAX_L).contains(&l) {
                bail!("chain length {l} outside [2, {MAX_L}]");
            }
        }
        for key in self.realizations_by_l.keys() {
            let l: usize = key.parse().with_context(|| format!("realizations_by_l key `{key}` is not an integer"))?;
            if !self.sizes.contains(&l) {
                bail!("realizations_by_l names L={l}, which is not in `sizes`");
            }
        }
        for &l in &self.sizes {
            if self.realizations_for(l) == 0 {
                bail!("zero realizations requested for L={l}");
            }
        }
        if self.eigenpairs == 0 {
            bail!("`eigenpairs` must be positive");
        }
        if self.bins == 0 {
            bail!("`bins` must be positive");
        }
        if ![self.coupling, self.kick, self.target_phase].iter().all(|x| x.is_finite()) {
            bail!("coupling, kick and target_phase must be finite");
        }
        for &l in &self.sizes {
            self.filter_spec(l).validate().context("filter overrides")?;
        }
        let dense_only = |what: &str, max: usize| -> Result<()> {
            if let Some(&l) = self.sizes.iter().find(|&&l| l > max) {
                bail!("{what} is limited to L <= {max}, got {l}");
            }
            Ok(())
        };
        if self.model == Model::Coe {
            dense_only("the COE model", DENSE_MAX_L)?;
        }
        match self.kind {
            SchmidtStats | WishartReference => {
                if let Some(&l) = self.sizes.iter().find(|&&l| l % 2 != 0) {
                    bail!("{:?} needs even chain lengths, got {l}", self.kind);
                }
            }
            Eth => {
                if self.eigenpairs < 2 {
                    bail!("eth needs at least 2 eigenpairs per realization");
                }
            }
            Otoc => {
                if self.stochastic_vectors.is_none() || self.model == Model::Coe {
                    dense_only("the exact OTOC trace", kfim_core::dynamics::OTOC_DENSE_MAX_L)?;
                }
                if self.stochastic_vectors == Some(0) {
                    bail!("`stochastic_vectors` must be positive");
                }
            }
            PolfedCheck => {
                if self.model != Model::Kfim {
                    bail!("polfed-check runs on the kfim model only");
                }
                dense_only("polfed-check (dense reference)", DENSE_MAX_L)?;
            }
            Autocorr | GevFit => {}
        }
        if let Some(r) = &self.reference {
            if r.draws == 0 || r.dim < 2 {
                bail!("reference needs draws >= 1 and dim >= 2");
            }
        }
        Ok(())
    }
}
