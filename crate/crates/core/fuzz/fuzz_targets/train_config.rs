#![no_main]

use deepsets::train::TrainConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = TrainConfig::from_json(text) {
        let again = TrainConfig::from_json(&config.to_json().unwrap()).unwrap();
        assert_eq!(again, config);
    }
});
