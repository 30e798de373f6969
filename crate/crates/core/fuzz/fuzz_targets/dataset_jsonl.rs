#![no_main]

use deepsets::tasks::LabeledSetDataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = LabeledSetDataset::read_jsonl(data) {
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        assert_eq!(LabeledSetDataset::read_jsonl(&buf[..]).unwrap(), ds);
        if !ds.is_empty() {
            let idx: Vec<usize> = (0..ds.len()).collect();
            ds.batch(&idx).unwrap();
        }
    }
});
