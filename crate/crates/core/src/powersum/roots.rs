//! Real roots of a monic polynomial given by its elementary symmetric
//! coefficients, via Aberth–Ehrlich simultaneous iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootOptions {
    pub max_iters: usize,
    /// Relative Newton-correction size at which a root counts as converged.
    pub tol: f64,
    /// Imaginary parts below this are always discarded as roundoff; larger
    /// ones are discarded only within the root's estimated roundoff radius.
    pub imag_tol: f64,
    /// Roots closer than this are treated as one multiple root.
    pub cluster_tol: f64,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            max_iters: 200,
            tol: 1e-13,
            imag_tol: 1e-8,
            cluster_tol: 1e-6,
        }
    }
}

/// `p(z)`, `p'(z)` and `sum_k |c_k| |z|^k` by Horner's rule.
fn horner(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64, f64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    let mut bound = 0.0;
    let r = z.norm();
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
        bound = bound * r + c.abs();
    }
    (p, dp, bound)
}

/// Taylor coefficients of the polynomial about `x` (`t[k] = p^(k)(x) / k!`),
/// by repeated synthetic division.
fn taylor_at(coeffs: &[f64], x: Complex64) -> Vec<Complex64> {
    let mut work: Vec<Complex64> = coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect();
    let n = work.len();
    let mut t = Vec::with_capacity(n);
    for len in (1..=n).rev() {
        for i in 1..len {
            let prev = work[i - 1];
            work[i] += x * prev;
        }
        t.push(work[len - 1]);
    }
    t
}

/// Radius within which roundoff in the coefficients can move a cluster of
/// `s` roots at `x`: solve `|t_s| r^s = slack * eps * sum_k |c_k| |x|^k`.
fn roundoff_radius(coeffs: &[f64], x: Complex64, s: usize) -> f64 {
    let bound = coeffs.iter().fold(0.0, |acc, c| acc * x.norm() + c.abs());
    let t = taylor_at(coeffs, x);
    let slack = 16.0 * coeffs.len() as f64;
    (slack * f64::EPSILON * bound / t[s].norm()).powf(1.0 / s as f64)
}

/// Roots of `x^M - e_1 x^{M-1} + e_2 x^{M-2} - ...`, sorted ascending, with
/// multiplicity. Every root must be real.
pub fn poly_roots(e: &[f64], opts: &RootOptions) -> Result<Vec<f64>> {
    let m = e.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("polynomial coefficients must be finite"));
    }
    // highest degree first: c_0 = 1, c_k = (-1)^k e_k
    let coeffs: Vec<f64> = std::iter::once(1.0)
        .chain(
            e.iter()
                .enumerate()
                .map(|(i, &v)| if i % 2 == 0 { -v } else { v }),
        )
        .collect();
    if m == 1 {
        return Ok(vec![e[0]]);
    }

    // starting points on a circle around the root mean, wide enough to
    // cover the spread implied by the power sums and the unit interval
    let center = e[0] / m as f64;
    let mean_sq = (e[0] * e[0] - 2.0 * e[1]) / m as f64;
    let std = (mean_sq - center * center).max(0.0).sqrt();
    let radius = (2.0 * std).max(center.abs().max((1.0 - center).abs())) + 0.1;
    let mut z: Vec<Complex64> = (0..m)
        .map(|k| {
            // offset angle avoids starting points symmetric about the real axis
            let theta = std::f64::consts::TAU * (k as f64 + 0.25) / m as f64 + 0.4;
            Complex64::new(center, 0.0) + Complex64::from_polar(radius, theta)
        })
        .collect();

    let eps = f64::EPSILON;
    let mut done = vec![false; m];
    for _ in 0..opts.max_iters {
        for i in 0..m {
            if done[i] {
                continue;
            }
            let (p, dp, bound) = horner(&coeffs, z[i]);
            if p.norm() <= 8.0 * eps * bound {
                done[i] = true;
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| (z[i] - z[j]).inv())
                .sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            if !step.re.is_finite() || !step.im.is_finite() {
                continue;
            }
            z[i] -= step;
            if step.norm() <= opts.tol * (1.0 + z[i].norm()) {
                done[i] = true;
            }
        }
        if done.iter().all(|&d| d) {
            break;
        }
    }
    if !done.iter().all(|&d| d) {
        return Err(Error::RootsDidNotConverge(opts.max_iters));
    }

    // multiple roots converge only to about sqrt(eps) and scatter into
    // conjugate pairs; replace each tight cluster by its centroid
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| z[a].re.total_cmp(&z[b].re));
    let mut roots = Vec::with_capacity(m);
    let mut start = 0;
    while start < m {
        let mut end = start + 1;
        while end < m && (z[order[end]] - z[order[end - 1]]).norm() <= opts.cluster_tol {
            end += 1;
        }
        let mean: Complex64 =
            order[start..end].iter().map(|&i| z[i]).sum::<Complex64>() / (end - start) as f64;
        if mean.im.abs() > opts.imag_tol
            && mean.im.abs() > roundoff_radius(&coeffs, mean, end - start)
        {
            return Err(Error::ComplexRoot(mean.im));
        }
        roots.extend(std::iter::repeat(mean.re).take(end - start));
        start = end;
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn cubic_with_integer_roots() {
        let r = poly_roots(&[6.0, 11.0, 6.0], &RootOptions::default()).unwrap();
        assert!(close(&r, &[1.0, 2.0, 3.0], 1e-10), "{r:?}");
    }

    #[test]
    fn double_root() {
        let r = poly_roots(&[1.0, 0.25], &RootOptions::default()).unwrap();
        assert!(close(&r, &[0.5, 0.5], 1e-7), "{r:?}");
    }

    #[test]
    fn separated_pair() {
        // (x - 0.1)(x - 0.9) = x^2 - x + 0.09
        let r = poly_roots(&[1.0, 0.09], &RootOptions::default()).unwrap();
        assert!(close(&r, &[0.1, 0.9], 1e-12), "{r:?}");
    }

    #[test]
    fn complex_roots_are_rejected() {
        // x^2 + 1
        assert!(matches!(
            poly_roots(&[0.0, 1.0], &RootOptions::default()),
            Err(Error::ComplexRoot(_))
        ));
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let opts = RootOptions {
            max_iters: 1,
            ..RootOptions::default()
        };
        assert!(matches!(
            poly_roots(&[6.0, 11.0, 6.0], &opts),
            Err(Error::RootsDidNotConverge(1))
        ));
    }

    #[test]
    fn degenerate_inputs() {
        assert!(poly_roots(&[], &RootOptions::default()).unwrap().is_empty());
        assert_eq!(
            poly_roots(&[0.3], &RootOptions::default()).unwrap(),
            vec![0.3]
        );
        assert!(poly_roots(&[f64::NAN, 1.0], &RootOptions::default()).is_err());
    }

    #[test]
    fn taylor_coefficients() {
        // x^2 - 3x + 2 about 1: (x-1)^2 - (x-1)
        let t: Vec<f64> = taylor_at(&[1.0, -3.0, 2.0], Complex64::new(1.0, 0.0))
            .iter()
            .map(|c| c.re)
            .collect();
        assert_eq!(t, vec![0.0, -1.0, 1.0]);
    }

    #[test]
    fn close_roots_with_roundoff_imaginary_parts() {
        let x = [
            0.22907001370376456,
            0.26761900529147065,
            0.46470980627854197,
            0.6297550124784332,
            0.7312100121046042,
            0.8441395646832038,
            0.8469682692914084,
            0.9165851821508001,
        ];
        let z = crate::powersum::embed(&crate::powersum::SortedSample::new(x.to_vec()).unwrap());
        let e = crate::powersum::newton_girard(&z);
        let r = poly_roots(&e, &RootOptions::default()).unwrap();
        assert!(close(&r, &x, 1e-6), "{r:?}");
    }

    #[test]
    fn zero_roots() {
        // x^3
        let r = poly_roots(&[0.0, 0.0, 0.0], &RootOptions::default()).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-6), "{r:?}");
    }
}
