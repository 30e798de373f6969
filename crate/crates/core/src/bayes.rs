//! Bayesian Sets under independent Beta-Binomial coordinates.
//!
//! Each of the `d` binary features of an item is an independent Bernoulli
//! draw whose rate has a `Beta(beta_plus, beta_minus)` prior. An item `x` is
//! scored against a query set `X` by the pointwise mutual information
//! `log p(X u {x}) - log p(X) - log p({x})`, which for this conjugate pair
//! only depends on per-coordinate counts of ones and zeros in `X`.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomialModel {
    beta_plus: Vec<f64>,
    beta_minus: Vec<f64>,
}

impl BetaBinomialModel {
    pub fn new(beta_plus: Vec<f64>, beta_minus: Vec<f64>) -> Result<Self> {
        if beta_plus.len() != beta_minus.len() {
            return Err(Error::DimensionMismatch {
                expected: beta_plus.len(),
                actual: beta_minus.len(),
            });
        }
        if beta_plus.is_empty() {
            return Err(Error::invalid("model needs at least one feature"));
        }
        if let Some(b) = beta_plus
            .iter()
            .chain(&beta_minus)
            .find(|b| !(b.is_finite() && **b > 0.0))
        {
            return Err(Error::invalid(format!("pseudo-count {b} is not positive")));
        }
        Ok(BetaBinomialModel {
            beta_plus,
            beta_minus,
        })
    }

    /// `Beta(1, 1)` on every coordinate.
    pub fn uniform(d: usize) -> Result<Self> {
        BetaBinomialModel::new(vec![1.0; d], vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.beta_plus.len()
    }

    pub fn beta_plus(&self) -> &[f64] {
        &self.beta_plus
    }

    pub fn beta_minus(&self) -> &[f64] {
        &self.beta_minus
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BinaryItem {
    bits: Vec<bool>,
}

impl BinaryItem {
    pub fn new(bits: Vec<bool>) -> Self {
        BinaryItem { bits }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        bytes
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid(format!(
                    "feature value {other} is not a bit"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BinaryItem::new)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn dim(&self) -> usize {
        self.bits.len()
    }
}

impl TryFrom<Vec<u8>> for BinaryItem {
    type Error = Error;

    fn try_from(v: Vec<u8>) -> Result<Self> {
        BinaryItem::from_bytes(&v)
    }
}

impl From<BinaryItem> for Vec<u8> {
    fn from(item: BinaryItem) -> Self {
        item.bits.into_iter().map(u8::from).collect()
    }
}

/// Per-coordinate counts of ones over a collection of items.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SetCounts {
    pub size: u64,
    pub ones: Vec<u64>,
}

impl SetCounts {
    pub fn new(d: usize, items: &[BinaryItem]) -> Result<Self> {
        let mut ones = vec![0u64; d];
        for item in items {
            check_dim(d, item)?;
            for (c, &b) in ones.iter_mut().zip(item.bits()) {
                *c += u64::from(b);
            }
        }
        Ok(SetCounts {
            size: items.len() as u64,
            ones,
        })
    }

    pub fn zeros(&self, j: usize) -> u64 {
        self.size - self.ones[j]
    }
}

fn check_dim(d: usize, item: &BinaryItem) -> Result<()> {
    if item.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: item.dim(),
        });
    }
    Ok(())
}

/// `s(x | X)` from precomputed counts of `X`.
pub fn score_item_counts(
    model: &BetaBinomialModel,
    counts: &SetCounts,
    x: &BinaryItem,
) -> Result<f64> {
    check_dim(model.dim(), x)?;
    if counts.ones.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: counts.ones.len(),
        });
    }
    let m = counts.size as f64;
    let mut score = 0.0;
    for (j, &bit) in x.bits().iter().enumerate() {
        let (bp, bm) = (model.beta_plus[j], model.beta_minus[j]);
        let b = bp + bm;
        let (prior, count) = if bit {
            (bp, counts.ones[j])
        } else {
            (bm, counts.zeros(j))
        };
        score += ((prior + count as f64) / (b + m)).ln() - (prior / b).ln();
    }
    Ok(score)
}

/// Pointwise mutual information between `x` and the set `X`.
pub fn score_item(model: &BetaBinomialModel, set: &[BinaryItem], x: &BinaryItem) -> Result<f64> {
    score_item_counts(model, &SetCounts::new(model.dim(), set)?, x)
}

/// `log p(X) - sum_m log p({x_m})`, i.e. the sum of `s(x_m | x_1..x_{m-1})`
/// in any order.
pub fn score_set(model: &BetaBinomialModel, set: &[BinaryItem]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::invalid("score_set needs a non-empty set"));
    }
    let counts = SetCounts::new(model.dim(), set)?;
    let m = counts.size as f64;
    let mut score = 0.0;
    for j in 0..model.dim() {
        let (bp, bm) = (model.beta_plus[j], model.beta_minus[j]);
        let b = bp + bm;
        let (mp, mm) = (counts.ones[j] as f64, counts.zeros(j) as f64);
        score +=
            ln_gamma(bp + mp) + ln_gamma(bm + mm) - ln_gamma(b + m) - ln_gamma(bp) - ln_gamma(bm)
                + ln_gamma(b)
                - mp * (bp / b).ln()
                - mm * (bm / b).ln();
    }
    Ok(score)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ranked {
    /// Position in the candidate list.
    pub index: usize,
    pub score: f64,
}

/// The `k` best candidates by `s(x | X)`, ties kept in input order.
pub fn expand(
    model: &BetaBinomialModel,
    set: &[BinaryItem],
    candidates: &[BinaryItem],
    k: usize,
) -> Result<Vec<Ranked>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if k == 0 || k > candidates.len() {
        return Err(Error::invalid(format!(
            "k = {k} must be in 1..={}",
            candidates.len()
        )));
    }
    let counts = SetCounts::new(model.dim(), set)?;
    let mut ranked = candidates
        .iter()
        .enumerate()
        .map(|(index, x)| {
            Ok(Ranked {
                index,
                score: score_item_counts(model, &counts, x)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // sort_by is stable
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    ranked.truncate(k);
    Ok(ranked)
}

/// One line of an expansion file: `{"id": .., "bits": [0, 1, ..]}`, with
/// `"query": true` marking members of the query set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub id: String,
    pub bits: BinaryItem,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub query: bool,
}

/// Query members and candidates from JSONL, blank lines skipped. Every
/// line must carry the same number of bits.
pub fn read_candidates_jsonl<R: BufRead>(input: R) -> Result<(Vec<Candidate>, Vec<Candidate>)> {
    let (mut query, mut pool) = (Vec::new(), Vec::<Candidate>::new());
    let mut dim = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| Error::Parse {
            line: i + 1,
            message,
        };
        let c: Candidate = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        match dim {
            None if c.bits.dim() == 0 => return Err(parse("item has no features".into())),
            None => dim = Some(c.bits.dim()),
            Some(d) if d != c.bits.dim() => {
                return Err(parse(format!("expected {d} bits, got {}", c.bits.dim())))
            }
            Some(_) => {}
        }
        if c.query {
            query.push(c);
        } else {
            pool.push(c);
        }
    }
    Ok((query, pool))
}

/// `max(0, s_neg - s_pos + delta)`.
pub fn margin_loss(s_pos: f64, s_neg: f64, delta: f64) -> f64 {
    (s_neg - s_pos + delta).max(0.0)
}
