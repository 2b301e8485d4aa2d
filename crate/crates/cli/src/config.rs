//! Experiment configuration: a TOML document whose every key has a default,
//! so an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use pbdw_core::synthetic::{Family, ManifoldSpec};
use pbdw_core::update::Generator;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub manifold: ManifoldConfig,
    pub background: BackgroundConfig,
    pub observation: ObservationConfig,
    pub update: UpdateConfig,
    pub placement: PlacementConfig,
    pub mconv: MconvConfig,
    pub xi: XiConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    FourierMix,
    GaussianSourceMix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldConfig {
    pub family: FamilyName,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub n_train: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMethod {
    Pod,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub n: usize,
    pub method: ReductionMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub r_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorName {
    Variational,
    Imq,
    Csrbf,
}

impl GeneratorName {
    pub fn label(self) -> &'static str {
        match self {
            GeneratorName::Variational => "variational",
            GeneratorName::Imq => "imq",
            GeneratorName::Csrbf => "csrbf",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateConfig {
    pub generators: Vec<GeneratorName>,
    pub imq_scale: f64,
    pub imq_exponent: u32,
    pub csrbf_scale: f64,
    /// Width of the variational functionals; `0` means the filter width.
    pub variational_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub tol: f64,
    pub m_values: Vec<usize>,
    pub n_random_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MconvConfig {
    pub tol: f64,
    pub m_values: Vec<usize>,
    pub snr_values: Vec<f64>,
    pub bias_amplitude: f64,
    /// Noise realizations averaged per noisy `(M, snr)` point.
    pub n_noise: usize,
    /// Draw truths from the background span instead of the biased manifold.
    pub exact_recovery: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct XiConfig {
    pub n_background: usize,
    pub m: usize,
    pub tol: f64,
    pub generator: GeneratorName,
    pub mu: f64,
    pub snr_values: Vec<f64>,
    pub bias_values: Vec<f64>,
    pub xi_lo: f64,
    pub xi_hi: f64,
    pub xi_count: usize,
    /// Noise realizations averaged into each curve.
    pub n_noise: usize,
    /// Curve values within this relative distance of the minimum count as
    /// ties when locating argmins; ties go to the smallest `ξ`.
    pub argmin_rel_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("pbdw-out"),
            grid: GridConfig::default(),
            manifold: ManifoldConfig::default(),
            background: BackgroundConfig::default(),
            observation: ObservationConfig::default(),
            update: UpdateConfig::default(),
            placement: PlacementConfig::default(),
            mconv: MconvConfig::default(),
            xi: XiConfig::default(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { shape: vec![65, 65] }
    }
}

impl Default for ManifoldConfig {
    fn default() -> Self {
        Self {
            family: FamilyName::FourierMix,
            mu_lo: 1.0,
            mu_hi: 3.0,
            n_train: 40,
        }
    }
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        Self {
            n: 6,
            method: ReductionMethod::Greedy,
        }
    }
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self { r_w: 0.01 }
    }
}

impl Default for UpdateConfig {
    fn default() -> Self {
        Self {
            generators: vec![GeneratorName::Variational, GeneratorName::Imq, GeneratorName::Csrbf],
            imq_scale: 1.0,
            imq_exponent: 2,
            csrbf_scale: 2.0,
            variational_support: 0.0,
        }
    }
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            tol: 0.6,
            m_values: vec![6, 8, 10, 12, 14, 16, 20, 24, 28, 32],
            n_random_trials: 35,
        }
    }
}

impl Default for MconvConfig {
    fn default() -> Self {
        Self {
            tol: 0.6,
            m_values: vec![6, 10, 15, 20, 30, 40, 60, 80, 100],
            snr_values: vec![0.0],
            bias_amplitude: 1.0,
            n_noise: 25,
            exact_recovery: false,
        }
    }
}

impl Default for XiConfig {
    fn default() -> Self {
        Self {
            n_background: 5,
            m: 100,
            tol: 0.3,
            generator: GeneratorName::Imq,
            mu: 2.3,
            snr_values: vec![0.05, 0.3],
            bias_values: vec![0.0, 1.0],
            xi_lo: 1e-8,
            xi_hi: 1e2,
            xi_count: 16,
            n_noise: 20,
            argmin_rel_tol: 1e-3,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

fn check_m_values(field: &str, values: &[usize]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(invalid(field, "must not be empty"));
    }
    if values.contains(&0) {
        return Err(invalid(field, "values must be >= 1"));
    }
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(field, "values must be strictly increasing"));
    }
    Ok(())
}

fn check_snr(field: &str, values: &[f64]) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(invalid(field, "must not be empty"));
    }
    if values.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(invalid(field, "values must be finite and >= 0"));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical serialization with `output_dir` blanked, as
    /// lowercase hex; where results are written does not change them.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let shape = &self.grid.shape;
        if !(1..=2).contains(&shape.len()) {
            return Err(invalid("grid.shape", "must have 1 or 2 entries"));
        }
        if shape.iter().any(|&n| n < 2) {
            return Err(invalid("grid.shape", "every axis needs at least 2 nodes"));
        }
        if !(self.manifold.mu_lo < self.manifold.mu_hi) {
            return Err(invalid("manifold.mu_lo", "must be below manifold.mu_hi"));
        }
        if self.manifold.n_train == 0 {
            return Err(invalid("manifold.n_train", "must be >= 1"));
        }
        if self.background.n == 0 || self.background.n > self.manifold.n_train {
            return Err(invalid("background.n", "must lie in [1, manifold.n_train]"));
        }
        if !(self.observation.r_w > 0.0) || !self.observation.r_w.is_finite() {
            return Err(invalid("observation.r_w", "must be positive"));
        }
        let u = &self.update;
        if u.generators.is_empty() {
            return Err(invalid("update.generators", "must not be empty"));
        }
        if !(u.imq_scale > 0.0) {
            return Err(invalid("update.imq_scale", "must be positive"));
        }
        if !(1..=2).contains(&u.imq_exponent) {
            return Err(invalid("update.imq_exponent", "must be 1 or 2"));
        }
        if !(u.csrbf_scale > 0.0) {
            return Err(invalid("update.csrbf_scale", "must be positive"));
        }
        if !(u.variational_support >= 0.0) {
            return Err(invalid("update.variational_support", "must be >= 0"));
        }
        if u.variational_support > 0.0 && u.variational_support < self.observation.r_w {
            return Err(invalid("update.variational_support", "must be 0 or >= observation.r_w"));
        }
        let p = &self.placement;
        if !(0.0..=1.0).contains(&p.tol) {
            return Err(invalid("placement.tol", "must lie in [0, 1]"));
        }
        check_m_values("placement.m_values", &p.m_values)?;
        if p.n_random_trials == 0 {
            return Err(invalid("placement.n_random_trials", "must be >= 1"));
        }
        let m = &self.mconv;
        if !(0.0..=1.0).contains(&m.tol) {
            return Err(invalid("mconv.tol", "must lie in [0, 1]"));
        }
        check_m_values("mconv.m_values", &m.m_values)?;
        check_snr("mconv.snr_values", &m.snr_values)?;
        if !(m.bias_amplitude >= 0.0) {
            return Err(invalid("mconv.bias_amplitude", "must be >= 0"));
        }
        if m.n_noise == 0 {
            return Err(invalid("mconv.n_noise", "must be >= 1"));
        }
        if m.snr_values.iter().any(|&s| s > 0.0) && m.m_values[0] < 2 {
            return Err(invalid("mconv.m_values", "noisy runs need M >= 2 for a validation set"));
        }
        let x = &self.xi;
        if x.n_background == 0 || x.n_background > self.manifold.n_train {
            return Err(invalid("xi.n_background", "must lie in [1, manifold.n_train]"));
        }
        if x.m < 2 {
            return Err(invalid("xi.m", "must be >= 2"));
        }
        if !(0.0..=1.0).contains(&x.tol) {
            return Err(invalid("xi.tol", "must lie in [0, 1]"));
        }
        if !(self.manifold.mu_lo..=self.manifold.mu_hi).contains(&x.mu) {
            return Err(invalid("xi.mu", "must lie in [manifold.mu_lo, manifold.mu_hi]"));
        }
        check_snr("xi.snr_values", &x.snr_values)?;
        if x.bias_values.is_empty() || x.bias_values.iter().any(|b| !(*b >= 0.0)) {
            return Err(invalid("xi.bias_values", "must be nonempty and >= 0"));
        }
        if !(x.xi_lo > 0.0 && x.xi_lo < x.xi_hi && x.xi_hi.is_finite()) {
            return Err(invalid("xi.xi_lo", "need 0 < xi.xi_lo < xi.xi_hi"));
        }
        if x.xi_count == 0 {
            return Err(invalid("xi.xi_count", "must be >= 1"));
        }
        if x.n_noise == 0 {
            return Err(invalid("xi.n_noise", "must be >= 1"));
        }
        if !(x.argmin_rel_tol >= 0.0) {
            return Err(invalid("xi.argmin_rel_tol", "must be >= 0"));
        }
        Ok(())
    }

    pub fn manifold_spec(&self, bias_amplitude: f64) -> ManifoldSpec {
        ManifoldSpec {
            family: match self.manifold.family {
                FamilyName::FourierMix => Family::FourierMix,
                FamilyName::GaussianSourceMix => Family::GaussianSourceMix,
            },
            mu_range: (self.manifold.mu_lo, self.manifold.mu_hi),
            bias_amplitude,
        }
    }

    pub fn generator(&self, name: GeneratorName) -> Generator {
        match name {
            GeneratorName::Variational => Generator::VariationalRiesz {
                support_width: if self.update.variational_support > 0.0 {
                    self.update.variational_support
                } else {
                    self.observation.r_w
                },
            },
            GeneratorName::Imq => Generator::InverseMultiquadric {
                scale: self.update.imq_scale,
                exponent: self.update.imq_exponent,
            },
            GeneratorName::Csrbf => Generator::CsRbf {
                scale: self.update.csrbf_scale,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_toml("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip_and_hash_stability() {
        let mut cfg = ExperimentConfig {
            seed: 99,
            ..ExperimentConfig::default()
        };
        cfg.mconv.snr_values = vec![0.0, 0.05];
        cfg.update.generators = vec![GeneratorName::Csrbf];
        let text = cfg.to_toml();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
        assert_eq!(cfg.hash().len(), 64);
        let moved = ExperimentConfig {
            output_dir: "elsewhere".into(),
            ..cfg.clone()
        };
        assert_eq!(moved.hash(), cfg.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentConfig::from_toml("[placement]\ntol = 1.5\n").unwrap_err();
        assert!(err.to_string().contains("placement.tol"), "{err}");
        let err = ExperimentConfig::from_toml("[grid]\nshape = [1, 9]\n").unwrap_err();
        assert!(err.to_string().contains("grid.shape"), "{err}");
        let err = ExperimentConfig::from_toml("[update]\ngenerators = [\"gauss\"]\n").unwrap_err();
        assert!(err.to_string().contains("gauss"), "{err}");
        let err = ExperimentConfig::from_toml("bogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn variational_support_defaults_to_filter_width() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.generator(GeneratorName::Variational),
            Generator::VariationalRiesz { support_width: 0.01 }
        );
    }
}
