//! Replays the checked-in fuzz seeds through the same checks as the fuzz targets.

use std::fs;
use std::path::PathBuf;

use dualfuse::auxloss::ErrorEstimator;
use dualfuse::denoise::TinyDenoiser;
use dualfuse::fusion::FusionModel;
use dualfuse::nn::container;
use dualfuse::{pgm, stackio};
use dualfuse_cli::Config;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn pgm_seeds_decode_and_round_trip() {
    for (name, bytes) in seeds("pgm_decode") {
        let img = pgm::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(pgm::decode(&pgm::encode(&img)).unwrap(), img, "{name}");
    }
}

#[test]
fn container_seeds_load_as_their_model() {
    for (name, bytes) in seeds("param_container") {
        let blobs = container::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(container::encode(&blobs), bytes, "{name}");
        let loaded = TinyDenoiser::from_blobs(&blobs).is_ok() as u8
            + FusionModel::from_blobs(&blobs).is_ok() as u8
            + ErrorEstimator::from_blobs(&blobs).is_ok() as u8;
        assert_eq!(loaded, 1, "{name}");
    }
}

#[test]
fn stack_seeds_round_trip() {
    for (name, bytes) in seeds("stack_decode") {
        let stack = stackio::decode(&bytes).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(stackio::encode(&stack), bytes, "{name}");
    }
}

#[test]
fn config_seeds_parse_and_echo() {
    for (name, bytes) in seeds("config_parse") {
        let cfg = Config::parse(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg, "{name}");
    }
}
