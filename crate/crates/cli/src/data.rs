//! Image sets, train/eval split, noise synthesis and the output directory.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use dualfuse::image::{add_awgn, clip_unit, extract_patches};
use dualfuse::{pgm, seed, toy, ImageGray, NoiseLevel};

use crate::config::Config;
use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone)]
pub struct NamedImage {
    pub name: String,
    pub image: ImageGray,
}

/// Reads every `.pgm` file in `dir`, sorted by file name. All unreadable
/// files are listed in the error, not only the first.
pub fn read_pgm_dir(dir: &Path) -> CliResult<Vec<NamedImage>> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::invalid(format!("cannot read image directory {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::invalid(format!("no .pgm files in {}", dir.display())));
    }
    let mut images = Vec::with_capacity(paths.len());
    let mut failures = Vec::new();
    for path in paths {
        match pgm::read(&path) {
            Ok(image) => images.push(NamedImage {
                name: stem(&path),
                image,
            }),
            Err(e) => failures.push(format!("  {}: {e}", path.display())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::invalid(format!(
            "{} unreadable image(s):\n{}",
            failures.len(),
            failures.join("\n")
        )));
    }
    Ok(images)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// The clean image set: `data.clean_dir`, or the bundled toy images.
pub fn clean_images(cfg: &Config) -> CliResult<Vec<NamedImage>> {
    if cfg.data.clean_dir.is_empty() {
        Ok(toy::dataset()
            .into_iter()
            .map(|(name, image)| NamedImage {
                name: name.to_string(),
                image,
            })
            .collect())
    } else {
        read_pgm_dir(Path::new(&cfg.data.clean_dir))
    }
}

pub struct Split {
    pub train: Vec<NamedImage>,
    pub eval: Vec<NamedImage>,
}

pub fn split(cfg: &Config, images: Vec<NamedImage>) -> CliResult<Split> {
    let k = cfg.data.eval_every;
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for (i, img) in images.into_iter().enumerate() {
        if i % k == k - 1 {
            eval.push(img);
        } else {
            train.push(img);
        }
    }
    if train.is_empty() || eval.is_empty() {
        return Err(CliError::invalid(format!(
            "need at least {k} clean images for a train/eval split"
        )));
    }
    Ok(Split { train, eval })
}

pub fn clean_split(cfg: &Config) -> CliResult<Split> {
    split(cfg, clean_images(cfg)?)
}

/// Directory-name tag of a noise level, e.g. `s25`.
pub fn level_tag(level: f64) -> String {
    format!("s{level}")
}

/// Seed of the test noise added to image `index` of `set` at `level`.
pub fn noise_seed(cfg: &Config, set: &str, level: f64, index: usize) -> u64 {
    seed::derive_indexed(cfg.run.seed, &format!("noise/{set}/{}", level_tag(level)), index as u64)
}

/// Seeded AWGN copy of `clean`, clipped when `noise.clip` is set.
pub fn noisy_copy(cfg: &Config, clean: &ImageGray, set: &str, level: f64, index: usize) -> CliResult<ImageGray> {
    let sigma = NoiseLevel::new(level).map_err(CliError::invalid)?;
    let noisy = add_awgn(clean, sigma, noise_seed(cfg, set, level, index));
    if cfg.noise.clip {
        clip_unit(&noisy).context(|| "clipping noisy image".into())
    } else {
        Ok(noisy)
    }
}

/// Denoiser training patches cut from the training images.
pub fn training_patches(cfg: &Config, train: &[NamedImage]) -> CliResult<Vec<ImageGray>> {
    let mut patches = Vec::new();
    for img in train {
        let grid = extract_patches(&img.image, cfg.denoiser.patch_size, cfg.denoiser.stride)
            .map_err(|e| CliError::invalid(format!("patches of {}: {e}", img.name)))?;
        patches.extend(grid.patches);
    }
    Ok(patches)
}

/// Output directory guard: refuses to reuse a non-empty directory unless
/// overwriting was requested.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn prepare(root: &Path, overwrite: bool) -> CliResult<Self> {
        if root.exists() {
            if !root.is_dir() {
                return Err(CliError::invalid(format!("{} is not a directory", root.display())));
            }
            let non_empty = fs::read_dir(root)
                .context(|| format!("listing {}", root.display()))?
                .next()
                .is_some();
            if non_empty && !overwrite {
                return Err(CliError::invalid(format!(
                    "output directory {} is not empty (pass --overwrite to replace its files)",
                    root.display()
                )));
            }
        }
        fs::create_dir_all(root).context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `root/rel`, with parent directories created.
    pub fn path(&self, rel: impl AsRef<Path>) -> CliResult<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).context(|| format!("creating {}", parent.display()))?;
        }
        Ok(p)
    }

    pub fn write(&self, rel: impl AsRef<Path>, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.path(rel)?;
        fs::write(&p, bytes).context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_pgm(&self, rel: impl AsRef<Path>, image: &ImageGray) -> CliResult<PathBuf> {
        self.write(rel, pgm::encode(image))
    }
}

/// CSV text with a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    text: String,
    columns: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            text: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[&dyn Display]) {
        debug_assert_eq!(cells.len(), self.columns);
        let line: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Fixed-precision formatting for floating-point CSV cells.
pub fn f6(v: f64) -> String {
    format!("{v:.6}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_split_sizes() {
        let s = clean_split(&Config::default()).unwrap();
        assert_eq!(s.eval.len(), 8);
        assert_eq!(s.train.len(), 16);
        assert_eq!(s.eval[0].name, toy::dataset()[2].0);
    }

    #[test]
    fn noise_is_keyed_by_set_level_and_index() {
        let cfg = Config::default();
        let a = noise_seed(&cfg, "eval", 25.0, 0);
        assert_ne!(a, noise_seed(&cfg, "eval", 25.0, 1));
        assert_ne!(a, noise_seed(&cfg, "train", 25.0, 0));
        assert_ne!(a, noise_seed(&cfg, "eval", 20.0, 0));
        assert_eq!(a, noise_seed(&cfg, "eval", 25.0, 0));
    }

    #[test]
    fn out_dir_refuses_non_empty_without_overwrite() {
        let tmp = tempfile::tempdir().unwrap();
        let out = OutDir::prepare(tmp.path(), false).unwrap();
        out.write("a/b.csv", "x").unwrap();
        assert!(matches!(OutDir::prepare(tmp.path(), false), Err(CliError::Validation(_))));
        assert!(OutDir::prepare(tmp.path(), true).is_ok());
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.row(&[&1, &f6(0.5)]);
        assert_eq!(t.as_str(), "a,b\n1,0.500000\n");
    }

    #[test]
    fn pgm_dir_lists_every_bad_file() {
        let tmp = tempfile::tempdir().unwrap();
        fs::write(tmp.path().join("a.pgm"), b"junk").unwrap();
        fs::write(tmp.path().join("b.pgm"), b"P5 1 1 255\n\x80").unwrap();
        fs::write(tmp.path().join("c.pgm"), b"P2").unwrap();
        let Err(CliError::Validation(msg)) = read_pgm_dir(tmp.path()) else {
            panic!("expected a validation error");
        };
        assert!(msg.contains("a.pgm") && msg.contains("c.pgm") && !msg.contains("b.pgm"), "{msg}");
    }
}
