#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use reshuffle_cli::config::parse_config;

fuzz_target!(|data: &[u8]| {
    if data.len() > 16_384 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = parse_config(text, Path::new("fuzz.toml")) {
        let _ = config.methods();
        let _ = config.seed_list(4);
    }
});
