use crate::autodiff::Segments;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A ragged batch of sets: all elements stacked into one `N x D` matrix,
/// with offsets marking where each set starts.
#[derive(Clone, Debug)]
pub struct SetBatch {
    elements: Tensor,
    segments: Segments,
    condition: Option<Tensor>,
}

impl SetBatch {
    pub fn new(elements: Tensor, offsets: Vec<usize>) -> Result<Self> {
        let (n, _) = elements.dims2()?;
        let segments = Segments::new(offsets)?;
        if segments.total() != n {
            return Err(Error::InvalidBatch(format!(
                "offsets cover {} rows but the element matrix has {n}",
                segments.total()
            )));
        }
        Ok(SetBatch {
            elements,
            segments,
            condition: None,
        })
    }

    /// Stacks `M_i x D` matrices into one batch.
    pub fn from_sets<T: AsRef<Tensor>>(sets: &[T]) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::InvalidBatch("no sets".into()))?;
        let (_, d) = first.as_ref().dims2()?;
        let mut data = Vec::new();
        let mut sizes = Vec::with_capacity(sets.len());
        for (i, s) in sets.iter().enumerate() {
            let (m, di) = s.as_ref().dims2()?;
            if di != d {
                return Err(Error::InvalidBatch(format!(
                    "set {i} has width {di}, expected {d}"
                )));
            }
            sizes.push(m);
            data.extend_from_slice(s.as_ref().data());
        }
        let segments = Segments::from_sizes(&sizes)?;
        let elements = Tensor::new(vec![segments.total(), d], data)?;
        Ok(SetBatch {
            elements,
            segments,
            condition: None,
        })
    }

    /// Attaches per-set side information (`num_sets x D_z`).
    pub fn with_condition(mut self, condition: Tensor) -> Result<Self> {
        let (s, _) = condition.dims2()?;
        if s != self.num_sets() {
            return Err(Error::InvalidBatch(format!(
                "{s} condition rows for {} sets",
                self.num_sets()
            )));
        }
        self.condition = Some(condition);
        Ok(self)
    }

    pub fn elements(&self) -> &Tensor {
        &self.elements
    }

    pub fn segments(&self) -> &Segments {
        &self.segments
    }

    pub fn offsets(&self) -> &[usize] {
        self.segments.offsets()
    }

    pub fn condition(&self) -> Option<&Tensor> {
        self.condition.as_ref()
    }

    pub fn num_sets(&self) -> usize {
        self.segments.len()
    }

    pub fn width(&self) -> usize {
        self.elements.cols()
    }

    pub fn set_size(&self, s: usize) -> usize {
        self.segments.range(s).len()
    }

    /// Elements of set `s` as an `M x D` matrix.
    pub fn set(&self, s: usize) -> Tensor {
        let idx: Vec<usize> = self.segments.range(s).collect();
        self.elements.select_rows(&idx)
    }

    /// Reorders the elements inside each set; `perms[s][k]` is the
    /// (set-local) index of the element placed at position `k`.
    pub fn permute_within_sets(&self, perms: &[Vec<usize>]) -> Result<SetBatch> {
        if perms.len() != self.num_sets() {
            return Err(Error::InvalidBatch(
                "one permutation per set required".into(),
            ));
        }
        let mut rows = Vec::with_capacity(self.elements.rows());
        for (r, p) in self.segments.iter().zip(perms) {
            if !is_permutation(p, r.len()) {
                return Err(Error::InvalidBatch(format!(
                    "{p:?} is not a permutation of 0..{}",
                    r.len()
                )));
            }
            rows.extend(p.iter().map(|&k| r.start + k));
        }
        Ok(SetBatch {
            elements: self.elements.select_rows(&rows),
            segments: self.segments.clone(),
            condition: self.condition.clone(),
        })
    }
}

impl AsRef<Tensor> for Tensor {
    fn as_ref(&self) -> &Tensor {
        self
    }
}

pub(crate) fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    p.iter()
        .all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap()
    }

    #[test]
    fn stacks_sets() {
        let b = SetBatch::from_sets(&[col(&[1.0, 2.0]), col(&[3.0])]).unwrap();
        assert_eq!(b.offsets(), &[0, 2, 3]);
        assert_eq!(b.num_sets(), 2);
        assert_eq!(b.set(1).data(), &[3.0]);
    }

    #[test]
    fn rejects_bad_offsets() {
        let e = Tensor::zeros(&[3, 1]);
        assert!(SetBatch::new(e.clone(), vec![0, 1, 1, 3]).is_err());
        assert!(SetBatch::new(e.clone(), vec![0, 2]).is_err());
        assert!(SetBatch::new(e, vec![0, 3]).is_ok());
    }

    #[test]
    fn rejects_mixed_widths() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(SetBatch::from_sets(&[a, b]).is_err());
    }

    #[test]
    fn permutes_inside_sets() {
        let b = SetBatch::from_sets(&[col(&[1.0, 2.0, 3.0]), col(&[4.0, 5.0])]).unwrap();
        let p = b.permute_within_sets(&[vec![2, 0, 1], vec![1, 0]]).unwrap();
        assert_eq!(p.elements().data(), &[3.0, 1.0, 2.0, 5.0, 4.0]);
        assert!(b.permute_within_sets(&[vec![0, 0, 1], vec![1, 0]]).is_err());
    }

    #[test]
    fn condition_rows_must_match() {
        let b = SetBatch::from_sets(&[col(&[1.0])]).unwrap();
        assert!(b.clone().with_condition(Tensor::zeros(&[2, 1])).is_err());
        assert!(b.with_condition(Tensor::zeros(&[1, 4])).is_ok());
    }
}
