#![no_main]

use deepsets::bayes::{expand, read_candidates_jsonl, BetaBinomialModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((query, pool)) = read_candidates_jsonl(data) else {
        return;
    };
    let Some(dim) = query.iter().chain(&pool).map(|c| c.bits.dim()).next() else {
        return;
    };
    let model = BetaBinomialModel::uniform(dim).unwrap();
    let set: Vec<_> = query.into_iter().map(|c| c.bits).collect();
    let items: Vec<_> = pool.into_iter().map(|c| c.bits).collect();
    if !items.is_empty() {
        let ranked = expand(&model, &set, &items, items.len()).unwrap();
        assert!(ranked.windows(2).all(|w| w[0].score >= w[1].score));
    }
});
