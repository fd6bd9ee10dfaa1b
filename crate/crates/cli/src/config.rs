//! Declarative run configuration.
//!
//! Configs are TOML with a fixed schema; unknown keys are rejected so typos in
//! experiment definitions fail loudly instead of silently running defaults.
//! Every output file carries the sha256 of the canonical serialized config, so
//! artifacts are traceable to the exact parameters that produced them,
//! regardless of formatting differences in the source file.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shearlab_core::schedule::{zeta_of, DEFAULT_M};
use shearlab_core::{FlowSchedule, ShearProfile};
use std::path::Path;

const HALF_DECADES: [f64; 5] = [1e3, 3162.2776601683795, 1e4, 31622.776601683792, 1e5];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Experiment id; must match the CLI verb that consumes it.
    pub experiment: String,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub diagnostics: DiagSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Mode-resolved experiments: points on the shearing axis.
    #[serde(default = "defaults::n_y")]
    pub n_y: usize,
    /// Full 3-D experiments.
    #[serde(default = "defaults::dims")]
    pub dims: [usize; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// quiescent | stationary | log_shift | rewound | alternating
    #[serde(default = "defaults::preset")]
    pub preset: String,
    /// Sweeps compare several presets side by side; overrides `preset`.
    #[serde(default)]
    pub presets: Option<Vec<String>>,
    /// cosine | two_mode
    #[serde(default = "defaults::profile")]
    pub profile: String,
    #[serde(default = "defaults::amplitude")]
    pub amplitude: f64,
    /// Sweeps run every listed amplitude; overrides `amplitude`.
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    /// Gliding-norm order M fixing ζ = 1/(108(2+M)).
    #[serde(default = "defaults::zeta_m")]
    pub zeta_m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// random_band (carrier mode with a seeded band-limited y-profile) or
    /// concentrated (floor + Gaussian bump cell density, balanced chemical).
    #[serde(default = "defaults::recipe")]
    pub recipe: String,
    #[serde(default = "defaults::alpha")]
    pub alpha: i64,
    #[serde(default)]
    pub gamma: i64,
    /// Band cutoff of the random y-profile; 0 means n_y/4.
    #[serde(default)]
    pub cutoff: i64,
    /// Gaussian height over the floor (concentrated recipe).
    #[serde(default = "defaults::height")]
    pub height: f64,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::floor")]
    pub floor: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Replicate seeds per sweep entry (seed, seed+1, ...).
    #[serde(default = "defaults::replicates")]
    pub replicates: usize,
    /// Fixed step for mode runs; 0 picks the per-flow default.
    #[serde(default)]
    pub dt: f64,
    /// Adaptive controller settings (3-D runs).
    #[serde(default = "defaults::dt_init")]
    pub dt_init: f64,
    #[serde(default = "defaults::tol")]
    pub tol: f64,
    #[serde(default = "defaults::dt_max")]
    pub dt_max: f64,
    /// Diagnostic samples per alternation phase.
    #[serde(default = "defaults::samples_per_phase")]
    pub samples_per_phase: usize,
    /// Accepted steps between checkpoints; 0 disables checkpointing.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Contraction run: measured windows after warmup.
    #[serde(default = "defaults::windows")]
    pub windows: usize,
    #[serde(default = "defaults::warmup_windows")]
    pub warmup_windows: usize,
    /// Suppression bisection: initial with-flow amplitude guess.
    #[serde(default = "defaults::bisect_start")]
    pub bisect_start: f64,
    #[serde(default = "defaults::bisect_iters")]
    pub bisect_iters: usize,
    /// Property-check trial count.
    #[serde(default = "defaults::trials")]
    pub trials: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSection {
    #[serde(default = "defaults::yes")]
    pub norms: bool,
    #[serde(default = "defaults::yes")]
    pub regions: bool,
    /// Track the gliding Z-norm at this order (omit to skip).
    #[serde(default)]
    pub z_m: Option<usize>,
    /// Evaluate the layered functional ledger (3-D runs).
    #[serde(default)]
    pub functional: bool,
    /// Transport-derivative weight G in Z and the functional.
    #[serde(default = "defaults::g")]
    pub g: f64,
}

mod defaults {
    pub fn seed() -> u64 {
        12345
    }
    pub fn n_y() -> usize {
        256
    }
    pub fn dims() -> [usize; 3] {
        [48, 48, 48]
    }
    pub fn preset() -> String {
        "rewound".into()
    }
    pub fn profile() -> String {
        "cosine".into()
    }
    pub fn amplitude() -> f64 {
        1e4
    }
    pub fn zeta_m() -> usize {
        super::DEFAULT_M
    }
    pub fn recipe() -> String {
        "random_band".into()
    }
    pub fn alpha() -> i64 {
        1
    }
    pub fn height() -> f64 {
        300.0
    }
    pub fn sigma() -> f64 {
        0.55
    }
    pub fn floor() -> f64 {
        0.2
    }
    pub fn replicates() -> usize {
        5
    }
    pub fn dt_init() -> f64 {
        1e-3
    }
    pub fn tol() -> f64 {
        1e-5
    }
    pub fn dt_max() -> f64 {
        0.5
    }
    pub fn samples_per_phase() -> usize {
        24
    }
    pub fn windows() -> usize {
        10
    }
    pub fn warmup_windows() -> usize {
        4
    }
    pub fn bisect_start() -> f64 {
        500.0
    }
    pub fn bisect_iters() -> usize {
        6
    }
    pub fn trials() -> usize {
        100
    }
    pub fn yes() -> bool {
        true
    }
    pub fn g() -> f64 {
        1.0
    }
}

impl Default for GridSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills from defaults")
    }
}
impl Default for FlowSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills from defaults")
    }
}
impl Default for InitialSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills from defaults")
    }
}
impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills from defaults")
    }
}
impl Default for DiagSection {
    fn default() -> Self {
        toml::from_str("").expect("empty section fills from defaults")
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// sha256 of the canonical serialization, so semantically identical
    /// configs hash identically whatever their source formatting.
    pub fn hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    pub fn validate(&self) -> Result<()> {
        match self.experiment.as_str() {
            "ed-sweep" | "toy-model" | "suppression" | "contraction" | "checks" => {}
            other => bail!("unknown experiment id {other:?}"),
        }
        if self.grid.n_y < 4 || self.grid.n_y % 2 != 0 {
            bail!("grid.n_y must be even and at least 4");
        }
        if self.grid.dims.iter().any(|&n| n < 4 || n % 2 != 0) {
            bail!("grid.dims must be even and at least 4 per axis");
        }
        for name in self.flow_names() {
            flow_preset(&name)?;
        }
        profile_of(&self.flow.profile)?;
        for &a in self.amplitude_list().iter() {
            if !(a > 0.0) {
                bail!("amplitudes must be positive");
            }
        }
        if self.initial.alpha == 0 && self.initial.recipe == "random_band" {
            bail!("random_band data needs a nonzero transport wavenumber");
        }
        let r = &self.run;
        for (name, v) in [
            ("run.dt_init", r.dt_init),
            ("run.tol", r.tol),
            ("run.dt_max", r.dt_max),
            ("run.bisect_start", r.bisect_start),
        ] {
            if !(v > 0.0) {
                bail!("{name} must be positive");
            }
        }
        if r.replicates == 0 {
            bail!("run.replicates must be at least 1");
        }
        if self.diagnostics.g <= 0.0 {
            bail!("diagnostics.g must be positive");
        }
        Ok(())
    }

    pub fn flow_names(&self) -> Vec<String> {
        match &self.flow.presets {
            Some(list) => list.clone(),
            None => vec![self.flow.preset.clone()],
        }
    }

    pub fn amplitude_list(&self) -> Vec<f64> {
        match &self.flow.amplitudes {
            Some(list) => list.clone(),
            None => vec![self.flow.amplitude],
        }
    }

    pub fn zeta(&self) -> f64 {
        zeta_of(self.flow.zeta_m)
    }

    pub fn profile(&self) -> Result<ShearProfile> {
        profile_of(&self.flow.profile)
    }

    /// Build the schedule for `name` at amplitude `a`.
    pub fn schedule(&self, name: &str, a: f64) -> Result<FlowSchedule> {
        let profile = self.profile()?;
        Ok(match flow_preset(name)? {
            FlowPreset::Quiescent => FlowSchedule::quiescent(a),
            FlowPreset::Stationary => FlowSchedule::stationary(profile, a),
            FlowPreset::LogShift => FlowSchedule::log_shift(profile, a),
            FlowPreset::Rewound => FlowSchedule::rewound(profile, a),
            FlowPreset::Alternating => FlowSchedule::alternating(profile, a, self.zeta()),
        })
    }

    /// Band cutoff with the n/4 convention applied.
    pub fn cutoff(&self) -> i64 {
        if self.initial.cutoff > 0 {
            self.initial.cutoff
        } else {
            (self.grid.n_y / 4) as i64
        }
    }

    pub fn replicate_seeds(&self) -> Vec<u64> {
        (0..self.run.replicates as u64).map(|k| self.seed + k).collect()
    }

    // Desk-scale presets; `--config` overrides any of them.

    pub fn ed_sweep_default() -> Self {
        let mut cfg = Self::named("ed-sweep");
        cfg.flow.presets = Some(vec![
            "quiescent".into(),
            "stationary".into(),
            "rewound".into(),
        ]);
        cfg.flow.amplitudes = Some(HALF_DECADES.to_vec());
        cfg.initial.cutoff = 64;
        cfg.diagnostics.z_m = Some(3);
        cfg
    }

    pub fn toy_model_default() -> Self {
        let mut cfg = Self::named("toy-model");
        cfg.flow.presets = Some(vec![
            "quiescent".into(),
            "stationary".into(),
            "rewound".into(),
        ]);
        cfg.flow.amplitudes = Some(HALF_DECADES.to_vec());
        cfg.initial.cutoff = 8;
        cfg.run.replicates = 3;
        cfg
    }

    pub fn suppression_default() -> Self {
        let mut cfg = Self::named("suppression");
        cfg.flow.preset = "alternating".into();
        cfg.initial.recipe = "concentrated".into();
        cfg.diagnostics.z_m = Some(DEFAULT_M + 1);
        cfg.diagnostics.functional = true;
        cfg.run.checkpoint_every = 200;
        cfg
    }

    pub fn contraction_default() -> Self {
        let mut cfg = Self::named("contraction");
        cfg.flow.preset = "rewound".into();
        cfg.flow.amplitude = 1e4;
        cfg.initial.cutoff = 64;
        cfg
    }

    pub fn checks_default() -> Self {
        let mut cfg = Self::named("checks");
        cfg.flow.preset = "log_shift".into();
        cfg.flow.profile = "two_mode".into();
        cfg.flow.amplitude = 40.0;
        cfg.grid.dims = [32, 32, 4];
        cfg
    }

    pub fn default_for(verb: &str) -> Result<Self> {
        Ok(match verb {
            "ed-sweep" => Self::ed_sweep_default(),
            "toy-model" => Self::toy_model_default(),
            "suppression" => Self::suppression_default(),
            "contraction" => Self::contraction_default(),
            "checks" => Self::checks_default(),
            other => bail!("no default config for {other:?}"),
        })
    }

    fn named(experiment: &str) -> Self {
        let mut cfg: RunConfig =
            toml::from_str(&format!("experiment = {experiment:?}")).expect("defaults fill");
        cfg.experiment = experiment.to_string();
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowPreset {
    Quiescent,
    Stationary,
    LogShift,
    Rewound,
    Alternating,
}

pub fn flow_preset(name: &str) -> Result<FlowPreset> {
    Ok(match name {
        "quiescent" => FlowPreset::Quiescent,
        "stationary" => FlowPreset::Stationary,
        "log_shift" => FlowPreset::LogShift,
        "rewound" => FlowPreset::Rewound,
        "alternating" => FlowPreset::Alternating,
        other => bail!("unknown flow preset {other:?}"),
    })
}

fn profile_of(name: &str) -> Result<ShearProfile> {
    Ok(match name {
        "cosine" => ShearProfile::cosine(),
        "two_mode" => ShearProfile::two_mode(),
        other => bail!("unknown shear profile {other:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "experiment = \"ed-sweep\"\n[flow]\namplitudee = 10.0\n";
        assert!(toml::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn hash_ignores_source_formatting() {
        let a: RunConfig = toml::from_str("experiment = \"checks\"").unwrap();
        let b: RunConfig =
            toml::from_str("# comment\nexperiment   =   \"checks\"   # same\n").unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn presets_pass_their_own_validation() {
        for verb in ["ed-sweep", "toy-model", "suppression", "contraction", "checks"] {
            RunConfig::default_for(verb).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn misspelled_experiment_fails_validation() {
        let cfg: RunConfig = toml::from_str("experiment = \"edsweep\"").unwrap();
        assert!(cfg.validate().is_err());
    }
}
