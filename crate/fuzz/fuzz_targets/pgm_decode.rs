#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = dualfuse::pgm::decode(data) {
        // anything accepted must survive a round trip
        let again = dualfuse::pgm::decode(&dualfuse::pgm::encode(&img)).expect("re-decode");
        assert_eq!(again, img);
    }
});
