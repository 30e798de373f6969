#![no_main]

use deepsets::layers::SetModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = SetModel::from_json(text) {
        // accepted files re-serialize to an equal model
        let again = SetModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(again, model);
    }
});
