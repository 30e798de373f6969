//! Weight-sharing structure of equivariant linear maps.
//!
//! An `M x M` matrix commutes with every permutation matrix exactly when it
//! has the form `lambda I + gamma 1 1^T`. These helpers build that form,
//! test the commutation property by enumeration, and measure the dimension
//! of the space of commuting matrices by solving the linear constraints.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `lambda I + gamma 1 1^T` of size `m x m`.
pub fn build_theta(lambda: f64, gamma: f64, m: usize) -> Result<Tensor> {
    if m == 0 {
        return Err(Error::invalid("theta needs at least one row"));
    }
    let mut t = Tensor::full(&[m, m], gamma);
    for i in 0..m {
        t.data_mut()[i * m + i] = lambda + gamma;
    }
    Ok(t)
}

pub const MAX_ENUMERATED_SIZE: usize = 8;

fn permutation_matrix(p: &[usize]) -> Tensor {
    let m = p.len();
    let mut t = Tensor::zeros(&[m, m]);
    for (i, &j) in p.iter().enumerate() {
        t.data_mut()[i * m + j] = 1.0;
    }
    t
}

/// Visits every permutation of `0..n` (Heap's algorithm).
fn for_each_permutation(n: usize, mut visit: impl FnMut(&[usize]) -> bool) -> bool {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    if !visit(&p) {
        return false;
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                p.swap(0, i);
            } else {
                p.swap(c[i], i);
            }
            if !visit(&p) {
                return false;
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    true
}

/// Whether `theta * P == P * theta` for all `M!` permutation matrices `P`,
/// entrywise within `1e-12`. Limited to `M <= 8`.
pub fn commutes_with_all_permutations(theta: &Tensor) -> Result<bool> {
    let (m, n) = theta.dims2()?;
    if m != n {
        return Err(Error::shape(
            "commutes_with_all_permutations",
            "theta must be square",
        ));
    }
    if m > MAX_ENUMERATED_SIZE {
        return Err(Error::invalid(format!(
            "enumerating {m}! permutations is too expensive (limit {MAX_ENUMERATED_SIZE})"
        )));
    }
    let mut ok = Ok(true);
    for_each_permutation(m, |p| {
        let pm = permutation_matrix(p);
        let lhs = theta.matmul(&pm);
        let rhs = pm.matmul(theta);
        match (lhs, rhs) {
            (Ok(l), Ok(r)) => {
                if l.max_abs_diff(&r) > 1e-12 {
                    ok = Ok(false);
                    return false;
                }
                true
            }
            (Err(e), _) | (_, Err(e)) => {
                ok = Err(e);
                false
            }
        }
    });
    ok
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Rank of an integer matrix by fraction-free elimination.
fn integer_rank(mut rows: Vec<Vec<i64>>, cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][c] != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for r in rank + 1..rows.len() {
            let f = rows[r][c];
            if f == 0 {
                continue;
            }
            let row = &mut rows[r];
            let mut g = 0;
            for k in 0..cols {
                row[k] = pivot[c] * row[k] - f * pivot[k];
                g = gcd(g, row[k]);
            }
            if g > 1 {
                row.iter_mut().for_each(|v| *v /= g);
            }
        }
        rank += 1;
    }
    rank
}

/// Dimension of `{theta : theta P = P theta for every permutation P}` for
/// `2 <= m <= 6`, found as the nullity of the commutation constraints for
/// all transpositions (which generate the symmetric group).
pub fn commutant_dimension(m: usize) -> Result<usize> {
    if !(2..=6).contains(&m) {
        return Err(Error::invalid(format!(
            "commutant dimension needs 2 <= M <= 6, got {m}"
        )));
    }
    let unknowns = m * m;
    let var = |i: usize, j: usize| i * m + j;
    let mut rows = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            let mut swap: Vec<usize> = (0..m).collect();
            swap.swap(a, b);
            // (theta P)_{ij} = theta_{i, s(j)},  (P theta)_{ij} = theta_{s(i), j}
            for i in 0..m {
                for j in 0..m {
                    let mut row = vec![0i64; unknowns];
                    row[var(i, swap[j])] += 1;
                    row[var(swap[i], j)] -= 1;
                    if row.iter().any(|&v| v != 0) {
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(unknowns - integer_rank(rows, unknowns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_examples() {
        assert_eq!(
            build_theta(2.0, 3.0, 2).unwrap().data(),
            &[5.0, 3.0, 3.0, 5.0]
        );
        assert_eq!(build_theta(1.0, 0.0, 3).unwrap(), Tensor::identity(3));
        assert_eq!(build_theta(0.0, 1.0, 2).unwrap().data(), &[1.0; 4]);
        assert!(build_theta(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn commutation_examples() {
        assert!(commutes_with_all_permutations(&build_theta(2.0, 3.0, 2).unwrap()).unwrap());
        let m = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert!(!commutes_with_all_permutations(&m).unwrap());
        assert!(commutes_with_all_permutations(&Tensor::identity(4)).unwrap());
        assert!(commutes_with_all_permutations(&Tensor::identity(9)).is_err());
    }

    #[test]
    fn enumerates_every_permutation() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(4, |p| {
            seen.insert(p.to_vec());
            true
        });
        assert_eq!(seen.len(), 24);
    }

    #[test]
    fn commutant_is_two_dimensional() {
        for m in 2..=6 {
            assert_eq!(commutant_dimension(m).unwrap(), 2, "M = {m}");
        }
        assert!(commutant_dimension(1).is_err());
        assert!(commutant_dimension(7).is_err());
    }

    #[test]
    fn integer_rank_small() {
        assert_eq!(integer_rank(vec![vec![1, 2], vec![2, 4]], 2), 1);
        assert_eq!(integer_rank(vec![vec![1, 2], vec![3, 4]], 2), 2);
    }
}
