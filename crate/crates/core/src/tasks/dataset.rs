use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::SetBatch;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Scalar(f64),
    /// Position of the selected element within its set.
    Index {
        index: usize,
    },
}

impl Target {
    pub fn scalar(&self) -> Option<f64> {
        match *self {
            Target::Scalar(v) => Some(v),
            Target::Index { .. } => None,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match *self {
            Target::Index { index } => Some(index),
            Target::Scalar(_) => None,
        }
    }
}

/// Per-set description stored next to each record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMeta {
    pub task: String,
    /// What the target measures, e.g. `marginal-entropy`.
    pub target: String,
    /// Per-set generating parameter (rotation angle, correlation, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    elements: Vec<&'a [f64]>,
    target: Target,
    meta: &'a SetMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    elements: Vec<Vec<f64>>,
    target: Target,
    meta: SetMeta,
}

/// Sets (each `M_i x D`) with one target each.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSetDataset {
    sets: Vec<Tensor>,
    targets: Vec<Target>,
    meta: Vec<SetMeta>,
}

impl LabeledSetDataset {
    pub fn new(sets: Vec<Tensor>, targets: Vec<Target>, meta: Vec<SetMeta>) -> Result<Self> {
        if sets.len() != targets.len() || sets.len() != meta.len() {
            return Err(Error::invalid(format!(
                "{} sets, {} targets, {} meta records",
                sets.len(),
                targets.len(),
                meta.len()
            )));
        }
        let width = sets.first().map(|s| s.cols());
        for (i, (set, target)) in sets.iter().zip(&targets).enumerate() {
            let (m, d) = set.dims2()?;
            if m == 0 {
                return Err(Error::invalid(format!("set {i} is empty")));
            }
            if Some(d) != width || d == 0 {
                return Err(Error::invalid(format!(
                    "set {i} has width {d}, expected {width:?}"
                )));
            }
            if !set.all_finite() {
                return Err(Error::invalid(format!("set {i} has non-finite elements")));
            }
            match *target {
                Target::Scalar(v) if !v.is_finite() => {
                    return Err(Error::invalid(format!("target {i} is not finite")))
                }
                Target::Index { index } if index >= m => {
                    return Err(Error::invalid(format!(
                        "target {i} points at element {index} of a {m}-element set"
                    )))
                }
                _ => {}
            }
        }
        Ok(LabeledSetDataset {
            sets,
            targets,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn width(&self) -> Option<usize> {
        self.sets.first().map(Tensor::cols)
    }

    pub fn sets(&self) -> &[Tensor] {
        &self.sets
    }

    pub fn targets(&self) -> &[Target] {
        &self.targets
    }

    pub fn meta(&self) -> &[SetMeta] {
        &self.meta
    }

    /// Scalar targets, or `None` if any target is an index.
    pub fn scalar_targets(&self) -> Option<Vec<f64>> {
        self.targets.iter().map(Target::scalar).collect()
    }

    pub fn batch(&self, indices: &[usize]) -> Result<SetBatch> {
        let sets: Vec<&Tensor> = indices.iter().map(|&i| &self.sets[i]).collect();
        SetBatch::from_sets(&sets)
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledSetDataset {
        LabeledSetDataset {
            sets: indices.iter().map(|&i| self.sets[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i]).collect(),
            meta: indices.iter().map(|&i| self.meta[i].clone()).collect(),
        }
    }

    /// Keeps the sets for which `keep` holds.
    pub fn filter(&self, keep: impl Fn(&SetMeta, &Target) -> bool) -> LabeledSetDataset {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| keep(&self.meta[i], &self.targets[i]))
            .collect();
        self.subset(&idx)
    }

    /// Reorders the elements of every set; index targets follow their
    /// element. `perms[i][k]` is the old position of new element `k`.
    pub fn permute_elements(&self, perms: &[Vec<usize>]) -> Result<LabeledSetDataset> {
        if perms.len() != self.len() {
            return Err(Error::invalid("one permutation per set required"));
        }
        let mut sets = Vec::with_capacity(self.len());
        let mut targets = Vec::with_capacity(self.len());
        for ((set, target), p) in self.sets.iter().zip(&self.targets).zip(perms) {
            if !crate::layers::is_permutation(p, set.rows()) {
                return Err(Error::invalid("not a permutation of the set's elements"));
            }
            sets.push(set.select_rows(p));
            targets.push(match *target {
                Target::Index { index } => Target::Index {
                    index: p.iter().position(|&old| old == index).expect("permutation"),
                },
                t => t,
            });
        }
        Ok(LabeledSetDataset {
            sets,
            targets,
            meta: self.meta.clone(),
        })
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for ((set, &target), meta) in self.sets.iter().zip(&self.targets).zip(&self.meta) {
            let record = RecordOut {
                elements: (0..set.rows()).map(|r| set.row(r)).collect(),
                target,
                meta,
            };
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses one record per non-blank line.
    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let (mut sets, mut targets, mut meta) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| Error::Parse {
                line: n + 1,
                message,
            };
            let rec: RecordIn = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
            let set = Tensor::from_rows(&rec.elements).map_err(|e| parse(e.to_string()))?;
            sets.push(set);
            targets.push(rec.target);
            meta.push(rec.meta);
        }
        LabeledSetDataset::new(sets, targets, meta)
    }

    /// Writes JSONL, gzip-compressed when the path ends in `.gz`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = BufWriter::new(File::create(path)?);
        if is_gzip(path) {
            let mut enc = GzEncoder::new(file, Compression::default());
            self.write_jsonl(&mut enc)?;
            enc.finish()?.flush()?;
            Ok(())
        } else {
            self.write_jsonl(file)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let reader: Box<dyn Read> = if is_gzip(path) {
            Box::new(GzDecoder::new(file))
        } else {
            Box::new(file)
        };
        LabeledSetDataset::read_jsonl(BufReader::new(reader))
    }
}

fn is_gzip(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> LabeledSetDataset {
        let meta = |t: &str| SetMeta {
            task: "test".into(),
            target: t.into(),
            param: Some(0.5),
        };
        LabeledSetDataset::new(
            vec![
                Tensor::from_rows(&[[0.1, 0.2], [1.0 / 3.0, -4.5]]).unwrap(),
                Tensor::from_rows(&[[7.0, 8.0]]).unwrap(),
            ],
            vec![Target::Index { index: 1 }, Target::Scalar(2.5)],
            vec![meta("a"), meta("b")],
        )
        .unwrap()
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(r#"{"elements":[[0.1,0.2],"#));
        assert!(text.contains(r#""target":{"index":1}"#));
        assert_eq!(LabeledSetDataset::read_jsonl(&buf[..]).unwrap(), ds);
    }

    #[test]
    fn gzip_by_extension() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        for name in ["d.jsonl", "d.jsonl.gz"] {
            let path = dir.path().join(name);
            ds.save(&path).unwrap();
            assert_eq!(LabeledSetDataset::load(&path).unwrap(), ds);
        }
        let raw = std::fs::read(dir.path().join("d.jsonl.gz")).unwrap();
        assert_eq!(&raw[..2], &[0x1f, 0x8b]);
    }

    #[test]
    fn rejects_malformed_records() {
        let bad = [
            r#"{"elements":[[1.0],[2.0,3.0]],"target":1.0,"meta":{"task":"t","target":"x"}}"#,
            r#"{"elements":[],"target":1.0,"meta":{"task":"t","target":"x"}}"#,
            r#"{"elements":[[1.0]],"target":{"index":3},"meta":{"task":"t","target":"x"}}"#,
            r#"{"elements":[[1.0]],"target":1.0}"#,
            r#"not json"#,
        ];
        for line in bad {
            assert!(
                LabeledSetDataset::read_jsonl(line.as_bytes()).is_err(),
                "{line}"
            );
        }
        let mixed = "{\"elements\":[[1.0]],\"target\":1.0,\"meta\":{\"task\":\"t\",\"target\":\"x\"}}\n\
                     {\"elements\":[[1.0,2.0]],\"target\":1.0,\"meta\":{\"task\":\"t\",\"target\":\"x\"}}";
        assert!(LabeledSetDataset::read_jsonl(mixed.as_bytes()).is_err());
    }

    #[test]
    fn permutation_moves_index_targets() {
        let ds = tiny();
        let p = ds.permute_elements(&[vec![1, 0], vec![0]]).unwrap();
        assert_eq!(p.targets()[0], Target::Index { index: 0 });
        assert_eq!(p.sets()[0].row(0), ds.sets()[0].row(1));
        assert!(ds.permute_elements(&[vec![0, 0], vec![0]]).is_err());
    }
}
