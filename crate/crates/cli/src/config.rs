//! Run configuration: TOML with one table per concern.
//!
//! Every key has a default, so an empty file is a valid config. Unknown keys
//! are rejected. The fully resolved config is written next to the outputs
//! of every run as `config.toml`.

use dualfuse::auxloss::AuxMode;
use dualfuse::denoise::DenoiserTrainConfig;
use dualfuse::fusion::{FusionTrainConfig, FusionVariant};
use dualfuse::manip::parse_mode_list;
use dualfuse::nn::LrSchedule;
use dualfuse::{ManipulationMode, NoiseLevel};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub data: DataSection,
    pub noise: NoiseSection,
    pub pipeline: PipelineSection,
    pub denoiser: DenoiserSection,
    pub fusion: FusionSection,
    pub aux: AuxSection,
    pub psd: PsdSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Root of every random stream in the run.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory of clean PGM images. Empty selects the bundled toy set.
    pub clean_dir: String,
    /// Image `i` (in file-name order) is held out when `i % eval_every ==
    /// eval_every - 1`.
    pub eval_every: usize,
    /// Noisy PGM images for `denoise` and `psd`. Empty means noisy copies
    /// of the held-out clean images are synthesized.
    pub noisy_dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Test noise levels on the 0..255 scale.
    pub levels: Vec<f64>,
    /// Clip synthesized noisy images to `[0, 1]`.
    pub clip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Manipulation modes, e.g. `"0-12"` or `"0-7,10"`.
    pub modes: String,
    /// Write each branch stack under `stacks/`.
    pub cache_stacks: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserSection {
    /// `tiny`, `dct` or `identity`.
    pub kind: String,
    /// Parameter file of a trained tiny denoiser (needed when `kind = "tiny"`
    /// outside `train-denoiser`).
    pub model: String,
    pub depth: usize,
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_factor: f64,
    pub lr_step: usize,
    pub max_sigma: f64,
    pub patch_size: usize,
    pub stride: usize,
    pub augment: bool,
    pub eval_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    /// Any of `dual`, `spatial`, `channel`.
    pub variants: Vec<String>,
    /// Where `pipeline` and `eval` look for `fusion_<variant>_s<level>.dfp`.
    /// Empty evaluates only the baseline and the simple average.
    pub model_dir: String,
    pub epochs: usize,
    pub lr: f64,
    pub hold: usize,
    pub lr_factor: f64,
    pub lr_step: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuxSection {
    /// Any of `baseline`, `l1`, `l2`, `image`.
    pub configs: Vec<String>,
    pub lambda: f64,
    /// Epochs covered by the stability score.
    pub window: usize,
    pub estimator_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdSection {
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Directory with `s<level>/` subdirectories of cached stacks, as
    /// written by `pipeline`.
    pub stacks_dir: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            run: RunSection { seed: 0 },
            data: DataSection {
                clean_dir: String::new(),
                eval_every: 3,
                noisy_dir: String::new(),
            },
            noise: NoiseSection {
                levels: vec![10.0, 20.0, 30.0, 40.0, 50.0],
                clip: true,
            },
            pipeline: PipelineSection {
                modes: "0-12".into(),
                cache_stacks: true,
            },
            denoiser: DenoiserSection::default(),
            fusion: FusionSection::default(),
            aux: AuxSection {
                configs: ["baseline", "l1", "l2", "image"].map(String::from).to_vec(),
                lambda: 0.1,
                window: 10,
                estimator_width: 32,
            },
            psd: PsdSection { bins: 32 },
            eval: EvalSection {
                stacks_dir: String::new(),
            },
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Config::default().run
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Config::default().data
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Config::default().noise
    }
}

impl Default for PipelineSection {
    fn default() -> Self {
        Config::default().pipeline
    }
}

impl Default for AuxSection {
    fn default() -> Self {
        Config::default().aux
    }
}

impl Default for PsdSection {
    fn default() -> Self {
        Config::default().psd
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        Config::default().eval
    }
}

impl Default for DenoiserSection {
    fn default() -> Self {
        Self {
            kind: "tiny".into(),
            model: String::new(),
            depth: 7,
            width: 24,
            epochs: 50,
            batch_size: 4,
            lr: 1e-3,
            lr_factor: 0.5,
            lr_step: 10,
            max_sigma: NoiseLevel::MAX,
            patch_size: 32,
            stride: 16,
            augment: true,
            eval_sigma: 25.0,
        }
    }
}

impl Default for FusionSection {
    fn default() -> Self {
        Self {
            variants: ["dual", "spatial", "channel"].map(String::from).to_vec(),
            model_dir: String::new(),
            epochs: 100,
            lr: 0.01,
            hold: 50,
            lr_factor: 0.6,
            lr_step: 30,
            patch_size: 50,
            stride: 50,
            batch_size: 4,
        }
    }
}

/// One entry of `aux.configs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxConfigName {
    Baseline,
    Aux(AuxMode),
}

impl AuxConfigName {
    pub fn name(self) -> &'static str {
        match self {
            AuxConfigName::Baseline => "baseline",
            AuxConfigName::Aux(m) => m.name(),
        }
    }
}

/// Which denoiser produces the branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    Tiny,
    Dct,
    Identity,
}

fn positive(value: usize, key: &str) -> CliResult<()> {
    if value == 0 {
        return Err(CliError::invalid(format!("{key} must be positive")));
    }
    Ok(())
}

fn positive_rate(value: f64, key: &str) -> CliResult<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(CliError::invalid(format!("{key} must be a positive number, got {value}")));
    }
    Ok(())
}

impl Config {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.data.eval_every < 2 {
            return Err(CliError::invalid("data.eval_every must be at least 2"));
        }
        if self.noise.levels.is_empty() {
            return Err(CliError::invalid("noise.levels is empty"));
        }
        for &level in &self.noise.levels {
            NoiseLevel::new(level).map_err(|e| CliError::invalid(format!("noise.levels: {e}")))?;
        }
        self.modes()?;
        self.denoiser_kind()?;
        self.fusion_variants()?;
        self.aux_configs()?;

        let d = &self.denoiser;
        for (v, key) in [
            (d.depth, "denoiser.depth"),
            (d.width, "denoiser.width"),
            (d.epochs, "denoiser.epochs"),
            (d.batch_size, "denoiser.batch_size"),
            (d.lr_step, "denoiser.lr_step"),
            (d.patch_size, "denoiser.patch_size"),
            (d.stride, "denoiser.stride"),
        ] {
            positive(v, key)?;
        }
        if d.depth < 2 {
            return Err(CliError::invalid("denoiser.depth must be at least 2"));
        }
        positive_rate(d.lr, "denoiser.lr")?;
        positive_rate(d.lr_factor, "denoiser.lr_factor")?;
        for (v, key) in [(d.max_sigma, "denoiser.max_sigma"), (d.eval_sigma, "denoiser.eval_sigma")] {
            NoiseLevel::new(v).map_err(|e| CliError::invalid(format!("{key}: {e}")))?;
        }

        let f = &self.fusion;
        for (v, key) in [
            (f.epochs, "fusion.epochs"),
            (f.lr_step, "fusion.lr_step"),
            (f.patch_size, "fusion.patch_size"),
            (f.stride, "fusion.stride"),
            (f.batch_size, "fusion.batch_size"),
        ] {
            positive(v, key)?;
        }
        positive_rate(f.lr, "fusion.lr")?;
        positive_rate(f.lr_factor, "fusion.lr_factor")?;

        let a = &self.aux;
        if !(a.lambda.is_finite() && a.lambda >= 0.0) {
            return Err(CliError::invalid(format!("aux.lambda must be >= 0, got {}", a.lambda)));
        }
        positive(a.window, "aux.window")?;
        positive(a.estimator_width, "aux.estimator_width")?;
        positive(self.psd.bins, "psd.bins")?;
        Ok(())
    }

    pub fn modes(&self) -> CliResult<Vec<ManipulationMode>> {
        let mut modes =
            parse_mode_list(&self.pipeline.modes).map_err(|e| CliError::invalid(format!("pipeline.modes: {e}")))?;
        modes.sort_unstable();
        if modes.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::invalid("pipeline.modes lists a mode twice"));
        }
        Ok(modes)
    }

    pub fn denoiser_kind(&self) -> CliResult<DenoiserKind> {
        match self.denoiser.kind.as_str() {
            "tiny" => Ok(DenoiserKind::Tiny),
            "dct" => Ok(DenoiserKind::Dct),
            "identity" => Ok(DenoiserKind::Identity),
            other => Err(CliError::invalid(format!(
                "denoiser.kind `{other}` (expected tiny, dct or identity)"
            ))),
        }
    }

    pub fn fusion_variants(&self) -> CliResult<Vec<FusionVariant>> {
        self.fusion
            .variants
            .iter()
            .map(|v| v.parse().map_err(|e| CliError::invalid(format!("fusion.variants: {e}"))))
            .collect()
    }

    pub fn aux_configs(&self) -> CliResult<Vec<AuxConfigName>> {
        self.aux
            .configs
            .iter()
            .map(|c| {
                if c == "baseline" {
                    Ok(AuxConfigName::Baseline)
                } else {
                    c.parse()
                        .map(AuxConfigName::Aux)
                        .map_err(|e| CliError::invalid(format!("aux.configs: {e}")))
                }
            })
            .collect()
    }

    pub fn denoiser_train(&self) -> DenoiserTrainConfig {
        let d = &self.denoiser;
        DenoiserTrainConfig {
            epochs: d.epochs,
            batch_size: d.batch_size,
            schedule: LrSchedule::Step {
                initial: d.lr,
                factor: d.lr_factor,
                step: d.lr_step,
            },
            max_sigma: d.max_sigma,
            augment: d.augment,
            eval_sigma: d.eval_sigma,
            seed: dualfuse::seed::derive(self.run.seed, "denoiser-train"),
        }
    }

    pub fn fusion_train(&self, level: f64) -> FusionTrainConfig {
        let f = &self.fusion;
        FusionTrainConfig {
            epochs: f.epochs,
            schedule: LrSchedule::DelayedStep {
                initial: f.lr,
                hold: f.hold,
                factor: f.lr_factor,
                step: f.lr_step,
            },
            patch_size: f.patch_size,
            stride: f.stride,
            batch_size: f.batch_size,
            seed: dualfuse::seed::derive(self.run.seed, &format!("fusion-train-s{level}")),
        }
    }
}
