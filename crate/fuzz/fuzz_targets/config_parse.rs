#![no_main]

use dualfuse_cli::Config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = Config::parse(text) {
            assert_eq!(Config::parse(&cfg.to_toml()).expect("echo parses"), cfg);
        }
    }
});
