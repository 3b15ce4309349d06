#![no_main]

use dualfuse::auxloss::ErrorEstimator;
use dualfuse::denoise::TinyDenoiser;
use dualfuse::fusion::FusionModel;
use dualfuse::nn::container;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(blobs) = container::decode(data) {
        assert_eq!(container::encode(&blobs), data);
        let _ = TinyDenoiser::from_blobs(&blobs);
        let _ = FusionModel::from_blobs(&blobs);
        let _ = ErrorEstimator::from_blobs(&blobs);
    }
});
