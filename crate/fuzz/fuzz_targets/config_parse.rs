//! Fuzzes the run-configuration parser and its validation. Arbitrary bytes
//! must produce either a config or an error, never a panic.
//!
//! Run with:
//!   cargo +nightly fuzz run config_parse
#![no_main]
use kyle_feedback::model::ModelConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ModelConfig::from_json_str(text) {
            let _ = cfg.resolve();
        }
    }
});
