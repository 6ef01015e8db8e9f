#![no_main]

use libfuzzer_sys::fuzz_target;
use reshuffle_cli::config::parse_seed_range;

fuzz_target!(|data: &[u8]| {
    // ranges wider than this would only measure allocation
    if data.len() > 64 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Some((a, b)) = text.split_once("..") {
        let (Ok(a), Ok(b)) = (a.trim().parse::<u64>(), b.trim().parse::<u64>()) else {
            return;
        };
        if b.saturating_sub(a) > 1 << 16 {
            return;
        }
    }
    if let Ok(seeds) = parse_seed_range(text) {
        assert!(!seeds.is_empty());
        assert!(seeds.windows(2).all(|w| w[1] == w[0] + 1));
    }
});
