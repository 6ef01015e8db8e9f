#![no_main]

use libfuzzer_sys::fuzz_target;
use reshuffle_cli::output::{
    parse_report_csv, parse_summary_csv, parse_sweep_csv, parse_trajectory_csv, report_csv, summary_csv, sweep_csv,
    trajectory_csv,
};

// Each table that parses is rewritten; its canonical form must be a fixed point.
macro_rules! fixed_point {
    ($text:expr, $parse:ident, $write:ident) => {
        if let Ok(rows) = $parse($text) {
            let first = $write(&rows);
            let back = $parse(std::str::from_utf8(&first).unwrap()).expect("written table must parse");
            assert_eq!($write(&back), first);
        }
    };
}

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    fixed_point!(text, parse_trajectory_csv, trajectory_csv);
    fixed_point!(text, parse_summary_csv, summary_csv);
    fixed_point!(text, parse_report_csv, report_csv);
    fixed_point!(text, parse_sweep_csv, sweep_csv);
});
