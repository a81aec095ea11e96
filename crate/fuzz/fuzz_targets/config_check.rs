#![no_main]

use anharmonic_probe::commands::check;
use anharmonic_probe::{Command, ExperimentConfig};
use libfuzzer_sys::fuzz_target;

const COMMANDS: [Command; 5] = [
    Command::RatioCurve,
    Command::ValidateMap,
    Command::QfiTable,
    Command::Estimate,
    Command::Losses,
];

fuzz_target!(|data: &[u8]| {
    let Some((&selector, rest)) = data.split_first() else {
        return;
    };
    let Ok(text) = std::str::from_utf8(rest) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_json(text) else {
        return;
    };
    let command = COMMANDS[selector as usize % COMMANDS.len()];
    if let Ok(table) = check(command, &cfg, selector & 0x80 != 0) {
        let _ = table.to_csv();
        let _ = table.to_json();
    }
});
