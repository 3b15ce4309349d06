#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(stack) = dualfuse::stackio::decode(data) {
        assert_eq!(dualfuse::stackio::encode(&stack), data);
    }
});
