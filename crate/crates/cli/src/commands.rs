//! One function per subcommand. Each reads only the config and writes only
//! under the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use dualfuse::auxloss::{
    psnr_stability, train_image_learning_aux, train_with_auxiliary_loss, AuxMode, AuxTrainConfig, AuxTrainer,
    ErrorEstimator, ImageLearningModel,
};
use dualfuse::denoise::{train_denoiser, DctThresholdDenoiser, Denoiser, EpochRecord, IdentityDenoiser, TinyDenoiser};
use dualfuse::freq::psd;
use dualfuse::fusion::{
    evaluate_ensembles, strategy_outputs, train_fusion, EnsembleReport, FusionModel, FusionModels, FusionSample,
    FusionVariant, SUMMARY_CSV_HEADER,
};
use dualfuse::image::{psnr, removed_noise_heatmap};
use dualfuse::manip::build_branch_stack;
use dualfuse::nn::container::load_blobs;
use dualfuse::nn::Persist;
use dualfuse::{pgm, seed, stackio, ImageGray, ManipulationMode, NoiseLevel};
use rayon::prelude::*;

use crate::config::{AuxConfigName, Config, DenoiserKind};
use crate::data::{
    clean_images, clean_split, f6, level_tag, noise_seed, noisy_copy, read_pgm_dir, training_patches, NamedImage,
    OutDir, Table,
};
use crate::error::{CliError, CliResult, Context};

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "psnr_db", "denoiser_loss", "aux_loss", "lr"];
pub const FUSION_HISTORY_HEADER: [&str; 4] = ["epoch", "train_loss", "val_psnr_db", "lr"];
pub const PER_IMAGE_HEADER: [&str; 4] = ["noise_level", "image", "strategy", "psnr_db"];
pub const PSD_HEADER: [&str; 4] = ["noise_level", "series", "radius", "power_db"];
pub const HEATMAP_HEADER: [&str; 5] = ["noise_level", "mode", "mean_removed", "max_removed", "mean_psnr_db"];

/// The denoiser selected by `denoiser.kind`.
pub enum Backend {
    Tiny(TinyDenoiser),
    Dct,
    Identity,
}

impl Backend {
    pub fn load(cfg: &Config) -> CliResult<Self> {
        match cfg.denoiser_kind()? {
            DenoiserKind::Dct => Ok(Backend::Dct),
            DenoiserKind::Identity => Ok(Backend::Identity),
            DenoiserKind::Tiny => {
                if cfg.denoiser.model.is_empty() {
                    return Err(CliError::invalid(
                        "denoiser.model must name a trained model file when denoiser.kind = \"tiny\"",
                    ));
                }
                let path = Path::new(&cfg.denoiser.model);
                if !path.is_file() {
                    return Err(CliError::invalid(format!("denoiser model {} not found", path.display())));
                }
                let blobs = load_blobs(path).context(|| format!("loading {}", path.display()))?;
                let model = TinyDenoiser::from_blobs(&blobs).context(|| format!("loading {}", path.display()))?;
                Ok(Backend::Tiny(model))
            }
        }
    }

    /// The denoiser to use on images with noise level `level`. Only the DCT
    /// baseline looks at the level.
    pub fn at(&self, level: f64) -> CliResult<Selected<'_>> {
        Ok(match self {
            Backend::Tiny(m) => Selected::Tiny(m),
            Backend::Dct => Selected::Dct(DctThresholdDenoiser {
                sigma: NoiseLevel::new(level).map_err(CliError::invalid)?,
            }),
            Backend::Identity => Selected::Identity,
        })
    }
}

/// A [`Backend`] bound to one noise level.
pub enum Selected<'a> {
    Tiny(&'a TinyDenoiser),
    Dct(DctThresholdDenoiser),
    Identity,
}

impl Denoiser for Selected<'_> {
    fn denoise(&self, noisy: &ImageGray) -> dualfuse::Result<ImageGray> {
        match self {
            Selected::Tiny(m) => m.denoise(noisy),
            Selected::Dct(d) => d.denoise(noisy),
            Selected::Identity => IdentityDenoiser.denoise(noisy),
        }
    }
}

fn history_table(history: &[EpochRecord]) -> Table {
    let mut t = Table::new(&HISTORY_HEADER);
    for r in history {
        t.row(&[&r.epoch, &f6(r.psnr_db), &f6(r.loss), &f6(r.aux_loss), &r.lr]);
    }
    t
}

/// Noisy copies of `images` at `level`, in input order.
fn noisy_set(cfg: &Config, images: &[NamedImage], set: &str, level: f64) -> CliResult<Vec<ImageGray>> {
    images
        .par_iter()
        .enumerate()
        .map(|(i, img)| noisy_copy(cfg, &img.image, set, level, i))
        .collect()
}

/// Branch stacks with clean targets for every image of `set` at `level`.
fn build_samples(
    cfg: &Config,
    backend: &Backend,
    images: &[NamedImage],
    set: &str,
    level: f64,
    modes: &[ManipulationMode],
) -> CliResult<Vec<FusionSample>> {
    let noisy = noisy_set(cfg, images, set, level)?;
    let denoiser = backend.at(level)?;
    images
        .par_iter()
        .zip(noisy.par_iter())
        .map(|(img, n)| {
            let stack = build_branch_stack(n, &denoiser, modes)
                .context(|| format!("building branches of {} at sigma {level}", img.name))?;
            FusionSample::new(stack, img.image.clone()).context(|| format!("sample {}", img.name))
        })
        .collect()
}

/// Writes `<dir>/<name>.dfs` and the clean target as `<dir>/<name>.pgm`.
fn cache_samples(out: &OutDir, dir: &Path, images: &[NamedImage], samples: &[FusionSample]) -> CliResult<()> {
    for (img, s) in images.iter().zip(samples) {
        out.write(dir.join(format!("{}.dfs", img.name)), stackio::encode(&s.stack))?;
        out.write_pgm(dir.join(format!("{}.pgm", img.name)), &s.clean)?;
    }
    Ok(())
}

pub fn fusion_model_name(variant: FusionVariant, level: f64) -> String {
    format!("fusion_{variant}_{}.dfp", level_tag(level))
}

/// Trained fusion models from `fusion.model_dir`, one per configured
/// variant. An empty directory setting yields none.
fn load_fusion_models(cfg: &Config, level: f64, n_branches: usize) -> CliResult<Vec<(FusionVariant, FusionModel)>> {
    if cfg.fusion.model_dir.is_empty() {
        return Ok(Vec::new());
    }
    let mut models = Vec::new();
    for variant in cfg.fusion_variants()? {
        let path = Path::new(&cfg.fusion.model_dir).join(fusion_model_name(variant, level));
        if !path.is_file() {
            return Err(CliError::invalid(format!("fusion model {} not found", path.display())));
        }
        let blobs = load_blobs(&path).context(|| format!("loading {}", path.display()))?;
        let model = FusionModel::from_blobs(&blobs).context(|| format!("loading {}", path.display()))?;
        if model.variant() != variant || model.n_branches() != n_branches {
            return Err(CliError::invalid(format!(
                "{} holds a {} model over {} branches, expected {variant} over {n_branches}",
                path.display(),
                model.variant(),
                model.n_branches()
            )));
        }
        models.push((variant, model));
    }
    Ok(models)
}

fn models_view(models: &[(FusionVariant, FusionModel)]) -> FusionModels<'_> {
    let find = |v: FusionVariant| models.iter().find(|(mv, _)| *mv == v).map(|(_, m)| m);
    FusionModels {
        dual: find(FusionVariant::Dual),
        spatial: find(FusionVariant::SpatialOnly),
        channel: find(FusionVariant::ChannelOnly),
    }
}

fn add_report_rows(
    summary: &mut String,
    per_image: &mut Table,
    report: &EnsembleReport,
    names: &[String],
    level: f64,
) {
    summary.push_str(&report.summary_csv_rows(level));
    for s in &report.per_image {
        per_image.row(&[&level, &names[s.image], &s.strategy, &f6(s.psnr_db)]);
    }
}

fn psd_rows(table: &mut Table, level: &str, series: &str, images: &[ImageGray], bins: usize) -> CliResult<()> {
    let curve = psd(images, bins).context(|| format!("power spectrum of {series}"))?;
    for (r, p) in curve.radii.iter().zip(&curve.power_db) {
        table.row(&[&level, &series, &f6(*r), &f6(*p)]);
    }
    Ok(())
}

/// Scales a heat map by `max` into `[0, 1]` for display.
fn normalize(map: &ImageGray, max: f64) -> ImageGray {
    if max > 0.0 {
        map.map(|v| v / max)
    } else {
        map.clone()
    }
}

fn max_value(img: &ImageGray) -> f64 {
    img.data().iter().cloned().fold(0.0, f64::max)
}

pub fn synth(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let images = clean_images(cfg)?;
    let mut manifest = Table::new(&["image", "noise_level", "seed", "clipped", "file"]);
    for &level in &cfg.noise.levels {
        let noisy = noisy_set(cfg, &images, "synth", level)?;
        for (i, (img, n)) in images.iter().zip(&noisy).enumerate() {
            let rel = PathBuf::from("noisy").join(level_tag(level)).join(format!("{}.pgm", img.name));
            out.write_pgm(&rel, n)?;
            manifest.row(&[
                &img.name,
                &level,
                &noise_seed(cfg, "synth", level, i),
                &cfg.noise.clip,
                &rel.display(),
            ]);
        }
    }
    out.write("manifest.csv", manifest.as_str())?;
    println!("{} noisy images written", images.len() * cfg.noise.levels.len());
    Ok(())
}

pub fn denoise(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let backend = Backend::load(cfg)?;
    let mut table = Table::new(&["image", "noise_level", "noisy_psnr_db", "denoised_psnr_db", "mean_abs_removed"]);
    let mean_abs = |a: &ImageGray, b: &ImageGray| {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    };
    if !cfg.data.noisy_dir.is_empty() {
        let inputs = read_pgm_dir(Path::new(&cfg.data.noisy_dir))?;
        let denoiser = backend.at(cfg.denoiser.eval_sigma)?;
        let outputs: Vec<ImageGray> = inputs
            .par_iter()
            .map(|img| denoiser.denoise(&img.image).context(|| format!("denoising {}", img.name)))
            .collect::<CliResult<_>>()?;
        for (img, d) in inputs.iter().zip(&outputs) {
            out.write_pgm(PathBuf::from("denoised").join(format!("{}.pgm", img.name)), d)?;
            table.row(&[&img.name, &"", &"", &"", &f6(mean_abs(&img.image, d))]);
        }
    } else {
        let split = clean_split(cfg)?;
        for &level in &cfg.noise.levels {
            let noisy = noisy_set(cfg, &split.eval, "eval", level)?;
            let denoiser = backend.at(level)?;
            let outputs: Vec<ImageGray> = noisy
                .par_iter()
                .map(|n| denoiser.denoise(n).context(|| format!("denoising at sigma {level}")))
                .collect::<CliResult<_>>()?;
            for ((img, n), d) in split.eval.iter().zip(&noisy).zip(&outputs) {
                let rel = PathBuf::from("denoised").join(level_tag(level)).join(format!("{}.pgm", img.name));
                out.write_pgm(rel, d)?;
                let pn = psnr(&img.image, n).context(|| "psnr".into())?.value_or(100.0);
                let pd = psnr(&img.image, d).context(|| "psnr".into())?.value_or(100.0);
                table.row(&[&img.name, &level, &f6(pn), &f6(pd), &f6(mean_abs(n, d))]);
            }
        }
    }
    out.write("denoise.csv", table.as_str())?;
    Ok(())
}

pub fn pipeline(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let backend = Backend::load(cfg)?;
    let modes = cfg.modes()?;
    let split = clean_split(cfg)?;
    let names: Vec<String> = split.eval.iter().map(|i| i.name.clone()).collect();
    let mut summary = String::from(SUMMARY_CSV_HEADER);
    let mut per_image = Table::new(&PER_IMAGE_HEADER);
    let mut spectra = Table::new(&PSD_HEADER);
    let clean: Vec<ImageGray> = split.eval.iter().map(|i| i.image.clone()).collect();
    psd_rows(&mut spectra, &"", "clean", &clean, cfg.psd.bins)?;

    for &level in &cfg.noise.levels {
        let samples = build_samples(cfg, &backend, &split.eval, "eval", level, &modes)?;
        if cfg.pipeline.cache_stacks {
            cache_samples(out, &Path::new("stacks").join(level_tag(level)), &split.eval, &samples)?;
        }
        let models = load_fusion_models(cfg, level, modes.len())?;
        let view = models_view(&models);
        let report = evaluate_ensembles(&samples, &view).context(|| format!("evaluating at sigma {level}"))?;
        add_report_rows(&mut summary, &mut per_image, &report, &names, level);

        let outputs: Vec<Vec<(dualfuse::fusion::Strategy, ImageGray)>> = samples
            .par_iter()
            .map(|s| strategy_outputs(&s.stack, &view).context(|| "fusing".into()))
            .collect::<CliResult<_>>()?;
        let noisy = noisy_set(cfg, &split.eval, "eval", level)?;
        let tag = level.to_string();
        psd_rows(&mut spectra, &tag, "noisy", &noisy, cfg.psd.bins)?;
        for (k, (strategy, _)) in outputs[0].iter().enumerate() {
            let imgs: Vec<ImageGray> = outputs.iter().map(|o| o[k].1.clone()).collect();
            psd_rows(&mut spectra, &tag, strategy.name(), &imgs, cfg.psd.bins)?;
        }
        let baseline: Vec<ImageGray> = outputs.iter().map(|o| o[0].1.clone()).collect();
        let map = removed_noise_heatmap(&noisy, &baseline).context(|| "heat map".into())?;
        out.write_pgm(format!("heatmap_{}.pgm", level_tag(level)), &normalize(&map, max_value(&map)))?;
    }
    out.write("summary.csv", &summary)?;
    out.write("per_image.csv", per_image.as_str())?;
    out.write("psd.csv", spectra.as_str())?;
    print!("{summary}");
    Ok(())
}

pub fn train_denoiser_cmd(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let split = clean_split(cfg)?;
    let patches = training_patches(cfg, &split.train)?;
    let held_out: Vec<ImageGray> = split.eval.iter().map(|i| i.image.clone()).collect();
    let mut model = fresh_denoiser(cfg)?;
    let history = train_denoiser(&mut model, &patches, &held_out, &cfg.denoiser_train())
        .context(|| "training the denoiser".into())?;
    out.write("denoiser.dfp", model.to_bytes())?;
    out.write("history.csv", history_table(&history).as_str())?;
    if let Some(last) = history.last() {
        println!("held-out PSNR after {} epochs: {:.3} dB", last.epoch, last.psnr_db);
    }
    Ok(())
}

fn fresh_denoiser(cfg: &Config) -> CliResult<TinyDenoiser> {
    TinyDenoiser::new(
        cfg.denoiser.depth,
        cfg.denoiser.width,
        seed::derive(cfg.run.seed, "denoiser-init"),
    )
    .map_err(CliError::invalid)
}

pub fn train_fusion_cmd(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let backend = Backend::load(cfg)?;
    let modes = cfg.modes()?;
    let variants = cfg.fusion_variants()?;
    let split = clean_split(cfg)?;
    let names: Vec<String> = split.eval.iter().map(|i| i.name.clone()).collect();
    let mut summary = String::from(SUMMARY_CSV_HEADER);
    let mut per_image = Table::new(&PER_IMAGE_HEADER);
    for &level in &cfg.noise.levels {
        let train = build_samples(cfg, &backend, &split.train, "train", level, &modes)?;
        let eval = build_samples(cfg, &backend, &split.eval, "eval", level, &modes)?;
        if cfg.pipeline.cache_stacks {
            cache_samples(out, &Path::new("stacks/train").join(level_tag(level)), &split.train, &train)?;
            cache_samples(out, &Path::new("stacks/eval").join(level_tag(level)), &split.eval, &eval)?;
        }
        let mut models = Vec::new();
        for &variant in &variants {
            let init = seed::derive(cfg.run.seed, &format!("fusion-init-{variant}-{}", level_tag(level)));
            let mut model = FusionModel::new(modes.len(), variant, init).map_err(CliError::invalid)?;
            let history = train_fusion(&mut model, &train, &eval, &cfg.fusion_train(level))
                .context(|| format!("training {variant} fusion at sigma {level}"))?;
            let mut t = Table::new(&FUSION_HISTORY_HEADER);
            for e in &history {
                t.row(&[&e.epoch, &f6(e.train_loss), &f6(e.val_psnr_db), &e.lr]);
            }
            out.write(fusion_model_name(variant, level), model.to_bytes())?;
            out.write(format!("history_{variant}_{}.csv", level_tag(level)), t.as_str())?;
            models.push((variant, model));
        }
        let report = evaluate_ensembles(&eval, &models_view(&models))
            .context(|| format!("evaluating at sigma {level}"))?;
        add_report_rows(&mut summary, &mut per_image, &report, &names, level);
    }
    out.write("summary.csv", &summary)?;
    out.write("per_image.csv", per_image.as_str())?;
    print!("{summary}");
    Ok(())
}

pub fn train_aux_cmd(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let configs = cfg.aux_configs()?;
    if cfg.aux.window > cfg.denoiser.epochs {
        return Err(CliError::invalid(format!(
            "aux.window ({}) exceeds denoiser.epochs ({})",
            cfg.aux.window, cfg.denoiser.epochs
        )));
    }
    let split = clean_split(cfg)?;
    let patches = training_patches(cfg, &split.train)?;
    let held_out: Vec<ImageGray> = split.eval.iter().map(|i| i.image.clone()).collect();
    let estimator_init = seed::derive(cfg.run.seed, "estimator-init");
    let mut stability = Table::new(&["config", "window", "score"]);
    for config in configs {
        let name = config.name();
        let aux_cfg = |mode| AuxTrainConfig {
            mode,
            lambda: cfg.aux.lambda,
            denoiser: cfg.denoiser_train(),
            window: cfg.aux.window,
        };
        let ctx = || format!("training the {name} configuration");
        let (denoiser, history) = match config {
            AuxConfigName::Baseline => {
                let mut model = fresh_denoiser(cfg)?;
                let h = train_denoiser(&mut model, &patches, &held_out, &cfg.denoiser_train()).context(ctx)?;
                (model, h)
            }
            AuxConfigName::Aux(mode @ AuxMode::Estimator(norm)) => {
                let estimator =
                    ErrorEstimator::new(cfg.aux.estimator_width, estimator_init).map_err(CliError::invalid)?;
                let mut trainer = AuxTrainer::new(fresh_denoiser(cfg)?, estimator, norm, cfg.aux.lambda);
                let h = train_with_auxiliary_loss(&mut trainer, &patches, &held_out, &aux_cfg(mode)).context(ctx)?;
                out.write(format!("aux_{name}_estimator.dfp"), trainer.estimator.to_bytes())?;
                (trainer.denoiser, h)
            }
            AuxConfigName::Aux(AuxMode::ImageLearning) => {
                let mut model =
                    ImageLearningModel::new(fresh_denoiser(cfg)?, seed::derive(cfg.run.seed, "image-head-init"));
                let h = train_image_learning_aux(&mut model, &patches, &held_out, &aux_cfg(AuxMode::ImageLearning))
                    .context(ctx)?;
                out.write(format!("aux_{name}_full.dfp"), model.to_bytes())?;
                (model.denoiser, h)
            }
        };
        out.write(format!("aux_{name}.dfp"), denoiser.to_bytes())?;
        out.write(format!("history_{name}.csv"), history_table(&history).as_str())?;
        let psnrs: Vec<f64> = history.iter().map(|r| r.psnr_db).collect();
        let score = psnr_stability(&psnrs, cfg.aux.window).map_err(CliError::invalid)?;
        stability.row(&[&name, &cfg.aux.window, &f6(score)]);
    }
    out.write("stability.csv", stability.as_str())?;
    print!("{}", stability.as_str());
    Ok(())
}

fn read_cached_samples(dir: &Path) -> CliResult<(Vec<String>, Vec<FusionSample>)> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::invalid(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "dfs"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::invalid(format!("no cached stacks in {}", dir.display())));
    }
    let mut names = Vec::new();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        let clean_path = path.with_extension("pgm");
        let loaded = stackio::read(&path)
            .and_then(|stack| pgm::read(&clean_path).and_then(|clean| FusionSample::new(stack, clean)));
        match loaded {
            Ok(s) => {
                names.push(path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
                samples.push(s);
            }
            Err(e) => failures.push(format!("  {}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::invalid(format!(
            "{} unreadable cached sample(s):\n{}",
            failures.len(),
            failures.join("\n")
        )));
    }
    Ok((names, samples))
}

pub fn eval(cfg: &Config, out: &OutDir) -> CliResult<()> {
    if cfg.eval.stacks_dir.is_empty() {
        return Err(CliError::invalid("eval.stacks_dir is not set"));
    }
    let mut summary = String::from(SUMMARY_CSV_HEADER);
    let mut per_image = Table::new(&PER_IMAGE_HEADER);
    for &level in &cfg.noise.levels {
        let dir = Path::new(&cfg.eval.stacks_dir).join(level_tag(level));
        let (names, samples) = read_cached_samples(&dir)?;
        let n = samples[0].stack.n_branches();
        if let Some(bad) = samples.iter().find(|s| s.stack.n_branches() != n) {
            return Err(CliError::invalid(format!(
                "cached stacks in {} mix {n} and {} branches",
                dir.display(),
                bad.stack.n_branches()
            )));
        }
        let models = load_fusion_models(cfg, level, n)?;
        let report = evaluate_ensembles(&samples, &models_view(&models))
            .context(|| format!("evaluating {}", dir.display()))?;
        add_report_rows(&mut summary, &mut per_image, &report, &names, level);
    }
    out.write("summary.csv", &summary)?;
    out.write("per_image.csv", per_image.as_str())?;
    print!("{summary}");
    Ok(())
}

pub fn psd_cmd(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let mut table = Table::new(&PSD_HEADER);
    if !cfg.data.noisy_dir.is_empty() {
        let inputs: Vec<ImageGray> = read_pgm_dir(Path::new(&cfg.data.noisy_dir))?
            .into_iter()
            .map(|i| i.image)
            .collect();
        psd_rows(&mut table, &"", "input", &inputs, cfg.psd.bins)?;
    } else {
        let backend = Backend::load(cfg)?;
        let split = clean_split(cfg)?;
        let clean: Vec<ImageGray> = split.eval.iter().map(|i| i.image.clone()).collect();
        psd_rows(&mut table, &"", "clean", &clean, cfg.psd.bins)?;
        for &level in &cfg.noise.levels {
            let noisy = noisy_set(cfg, &split.eval, "eval", level)?;
            let denoiser = backend.at(level)?;
            let denoised: Vec<ImageGray> = noisy
                .par_iter()
                .map(|n| denoiser.denoise(n).context(|| format!("denoising at sigma {level}")))
                .collect::<CliResult<_>>()?;
            let tag = level.to_string();
            psd_rows(&mut table, &tag, "noisy", &noisy, cfg.psd.bins)?;
            psd_rows(&mut table, &tag, "denoised", &denoised, cfg.psd.bins)?;
        }
    }
    out.write("psd.csv", table.as_str())?;
    Ok(())
}

/// Removed-noise maps and PSNR for every configured mode.
pub fn heatmap(cfg: &Config, out: &OutDir) -> CliResult<()> {
    let backend = Backend::load(cfg)?;
    let modes = cfg.modes()?;
    let split = clean_split(cfg)?;
    let mut table = Table::new(&HEATMAP_HEADER);
    for &level in &cfg.noise.levels {
        let noisy = noisy_set(cfg, &split.eval, "eval", level)?;
        let samples = build_samples(cfg, &backend, &split.eval, "eval", level, &modes)?;
        let mut maps = Vec::with_capacity(modes.len());
        for (k, &mode) in modes.iter().enumerate() {
            let branch: Vec<ImageGray> = samples.iter().map(|s| s.stack.images()[k].clone()).collect();
            let map = removed_noise_heatmap(&noisy, &branch).context(|| format!("heat map of mode {mode}"))?;
            let mut total = 0.0;
            for (s, b) in samples.iter().zip(&branch) {
                total += psnr(&s.clean, b).context(|| "psnr".into())?.value_or(100.0);
            }
            table.row(&[
                &level,
                &mode,
                &f6(map.mean()),
                &f6(max_value(&map)),
                &f6(total / samples.len() as f64),
            ]);
            maps.push((mode, map));
        }
        // one scale per noise level so the maps can be compared
        let max = maps.iter().map(|(_, m)| max_value(m)).fold(0.0, f64::max);
        for (mode, map) in &maps {
            let rel = PathBuf::from("heatmaps").join(level_tag(level)).join(format!("mode{mode}.pgm"));
            out.write_pgm(rel, &normalize(map, max))?;
        }
    }
    out.write("heatmap.csv", table.as_str())?;
    Ok(())
}
