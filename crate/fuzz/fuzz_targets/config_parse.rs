#![no_main]

use anharmonic_probe::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            // a parsed config must survive a serialize/parse round trip
            let again = serde_json::to_string(&cfg).expect("config serializes");
            ExperimentConfig::from_json(&again).expect("round trip parses");
        }
    }
});
