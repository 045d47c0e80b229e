use crate::markov::{MemoryClass, Profile};
use crate::score::ClassDistribution;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-13;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Pivots below this are treated as zero by the direct solver.
const PIVOT_TOL: f64 = 1e-12;

/// Long-run probability of each profile state, aligned with
/// [`Profile::states`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    probs: Vec<f64>,
}

impl StationaryDistribution {
    pub fn new(probs: Vec<f64>) -> Self {
        StationaryDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn max_abs_diff(&self, other: &StationaryDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `x · P` for a sparse row-major `P`.
fn left_multiply(profile: &Profile, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (i, row) in profile.rows().iter().enumerate() {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        for &(j, p) in row {
            out[j] += xi * p;
        }
    }
}

/// max |π·P − π|.
pub fn stationary_residual(profile: &Profile, probs: &[f64]) -> f64 {
    let mut next = vec![0.0; probs.len()];
    left_multiply(profile, probs, &mut next);
    next.iter()
        .zip(probs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Power iteration from the uniform vector on the lazy chain
/// `P' = ½I + ½P`, which has the same stationary vector as `P` but is
/// aperiodic. Stops when no component moves by `tol` or more.
pub fn stationary(profile: &Profile, tol: f64, max_iter: usize) -> Result<StationaryDistribution> {
    if tol <= 0.0 {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = profile.len();
    let mut x = vec![1.0 / n as f64; n];
    let mut px = vec![0.0; n];
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        left_multiply(profile, &x, &mut px);
        let mut sum = 0.0;
        for (p, &xi) in px.iter_mut().zip(&x) {
            *p = 0.5 * xi + 0.5 * *p;
            sum += *p;
        }
        change = 0.0;
        for (p, xi) in px.iter_mut().zip(x.iter_mut()) {
            *p /= sum;
            change = f64::max(change, (*p - *xi).abs());
            *xi = *p;
        }
        if change < tol {
            return Ok(StationaryDistribution { probs: x });
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        residual: change,
    })
}

/// Solves `π(P − I) = 0`, `Σπ = 1` by Gaussian elimination with partial
/// pivoting on the dense transpose. One balance equation is redundant for a
/// single recurrent class and is replaced by the normalization row.
pub fn stationary_direct(profile: &Profile) -> Result<StationaryDistribution> {
    let n = profile.len();
    // a[r][c]: row r is the balance equation for state r, column c is π_c.
    let mut a = vec![0.0; n * n];
    for (i, row) in profile.rows().iter().enumerate() {
        for &(j, p) in row {
            a[j * n + i] += p;
        }
    }
    for i in 0..n {
        a[i * n + i] -= 1.0;
    }
    let mut b = vec![0.0; n];
    a[(n - 1) * n..].iter_mut().for_each(|v| *v = 1.0);
    b[n - 1] = 1.0;

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| a[r * n + col].abs().total_cmp(&a[s * n + col].abs()))
            .expect("non-empty pivot range");
        let pivot = a[pivot_row * n + col];
        if pivot.abs() < PIVOT_TOL {
            return Err(Error::InvalidProfile(format!(
                "transition matrix is singular beyond the expected rank deficiency (pivot {pivot:e} at column {col})"
            )));
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(pivot_row * n + c, col * n + c);
            }
            b.swap(pivot_row, col);
        }
        for r in col + 1..n {
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * x[c];
        }
        x[r] = acc / a[r * n + r];
    }
    // Clamp rounding noise around zero before renormalizing.
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
    Ok(StationaryDistribution { probs: x })
}

/// Fraction of memory in each class: `size_i·π_i / Σ_j size_j·π_j`.
pub fn memory_weighted(dist: &StationaryDistribution, states: &[MemoryClass]) -> ClassDistribution {
    assert_eq!(
        dist.len(),
        states.len(),
        "distribution not aligned with states"
    );
    let total: f64 = states
        .iter()
        .zip(dist.probs())
        .map(|(s, p)| s.size as f64 * p)
        .sum();
    ClassDistribution::from_weights(
        states
            .iter()
            .zip(dist.probs())
            .map(|(s, p)| (*s, s.size as f64 * p / total)),
    )
}

/// Fraction of regions in each class, i.e. π itself keyed by class.
pub fn region_weighted(dist: &StationaryDistribution, states: &[MemoryClass]) -> ClassDistribution {
    assert_eq!(
        dist.len(),
        states.len(),
        "distribution not aligned with states"
    );
    ClassDistribution::from_weights(states.iter().copied().zip(dist.probs().iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{ClassUsage, ProfileMeta};

    fn profile(matrix: &[Vec<f64>]) -> Profile {
        let states = (0..matrix.len())
            .map(|i| MemoryClass::new(1 << i, ClassUsage::Anon))
            .collect();
        Profile::from_dense(states, matrix, ProfileMeta::default()).unwrap()
    }

    fn both(p: &Profile) -> (StationaryDistribution, StationaryDistribution) {
        (
            stationary(p, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap(),
            stationary_direct(p).unwrap(),
        )
    }

    #[test]
    fn two_cycle() {
        let (pw, d) = both(&profile(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert!((pw.probs()[0] - 0.5).abs() < 1e-12);
        assert!((d.probs()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_pair() {
        // π = (5/6, 1/6) solves π·P = π by hand
        let p = profile(&[vec![0.9, 0.1], vec![0.5, 0.5]]);
        let (pw, d) = both(&p);
        for s in [&pw, &d] {
            assert!((s.probs()[0] - 5.0 / 6.0).abs() < 1e-10);
            assert!((s.probs()[1] - 1.0 / 6.0).abs() < 1e-10);
            assert!(stationary_residual(&p, s.probs()) < 1e-12);
        }
        assert!(pw.max_abs_diff(&d) < 1e-10);
    }

    #[test]
    fn single_state() {
        let (pw, d) = both(&profile(&[vec![1.0]]));
        assert_eq!(pw.probs(), &[1.0]);
        assert_eq!(d.probs(), &[1.0]);
    }

    #[test]
    fn non_convergence_is_reported() {
        let p = profile(&[vec![0.9, 0.1], vec![0.5, 0.5]]);
        assert!(matches!(
            stationary(&p, 1e-15, 2),
            Err(Error::Convergence { iterations: 2, .. })
        ));
        assert!(stationary(&p, 0.0, 10).is_err());
    }

    #[test]
    fn memory_weighting() {
        let states = vec![
            MemoryClass::new(4, ClassUsage::Anon),
            MemoryClass::new(2, ClassUsage::Free),
        ];
        let w = memory_weighted(&StationaryDistribution::new(vec![0.5, 0.5]), &states);
        assert!((w.get(&states[0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.get(&states[1]) - 1.0 / 3.0).abs() < 1e-15);

        let one = vec![MemoryClass::new(7, ClassUsage::Pinned)];
        assert_eq!(
            memory_weighted(&StationaryDistribution::new(vec![1.0]), &one).get(&one[0]),
            1.0
        );

        let same: Vec<_> = ClassUsage::ALL
            .iter()
            .map(|&u| MemoryClass::new(8, u))
            .collect();
        let pi = StationaryDistribution::new(vec![0.1, 0.2, 0.3, 0.25, 0.15]);
        let w = memory_weighted(&pi, &same);
        for (s, p) in same.iter().zip(pi.probs()) {
            assert!((w.get(s) - p).abs() < 1e-15);
        }
    }
}
