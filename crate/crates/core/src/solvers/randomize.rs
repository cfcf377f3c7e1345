use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use super::eigen::hermitian_eigen;
use super::sdp::SdpSolution;
use crate::channel::cscg;
use crate::error::{Error, Result};

/// `λ₂/λ₁` at or below which the relaxation is treated as tight.
pub const RANK1_THRESHOLD: f64 = 1e-6;

const NEGATIVE_EIGEN_TOL: f64 = 1e-8;

/// Unit-modulus vector recovered from an SDP solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub theta: Vec<Complex64>,
    pub value: f64,
    /// True when candidates were sampled rather than read off a rank-1 `X`.
    pub randomized: bool,
}

/// Maps every entry to the unit circle; zero entries become 1.
pub fn project_unit_modulus(v: &[Complex64]) -> Vec<Complex64> {
    v.iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 && n.is_finite() {
                c / n
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect()
}

/// Divides by the trailing auxiliary entry and drops it.
pub fn normalize_by_auxiliary(theta: &[Complex64]) -> Vec<Complex64> {
    let (&aux, rest) = theta.split_last().expect("vector must contain the auxiliary entry");
    let aux = aux / aux.norm();
    project_unit_modulus(&rest.iter().map(|t| t / aux).collect::<Vec<_>>())
}

/// Recovers a unit-modulus row vector `theta` with `X ≈ theta^H theta`.
///
/// A rank-1 `X` yields its dominant eigenvector directly. Otherwise
/// `n_candidates` vectors `xi ~ CN(0, X)` are drawn, each `conj(xi)` is
/// projected to unit modulus, and the candidate with the largest `objective`
/// wins; the projected dominant eigenvector competes as well.
pub fn gaussian_randomization<R, F>(
    solution: &SdpSolution,
    mut objective: F,
    n_candidates: usize,
    rng: &mut R,
) -> Result<Extraction>
where
    R: Rng + ?Sized,
    F: FnMut(&[Complex64]) -> f64,
{
    if n_candidates == 0 {
        return Err(Error::invalid("at least one randomization candidate is required"));
    }
    let eig = hermitian_eigen(&solution.x);
    let m = solution.x.nrows();
    if let Some(&low) = eig.values.first() {
        if low < -NEGATIVE_EIGEN_TOL {
            return Err(Error::NotPositiveSemidefinite(low));
        }
    }
    let top: Vec<Complex64> = eig.vector(m - 1).iter().map(|c| c.conj()).collect();
    let dominant = project_unit_modulus(&top);
    let dominant_value = objective(&dominant);
    if solution.rank1_ratio <= RANK1_THRESHOLD {
        return Ok(Extraction { theta: dominant, value: dominant_value, randomized: false });
    }

    let sqrt_values: Vec<Complex64> =
        eig.values.iter().map(|&l| Complex64::new(l.max(0.0).sqrt(), 0.0)).collect();
    let root = &eig.vectors * DMatrix::from_diagonal(&DVector::from_vec(sqrt_values));
    let mut best = Extraction { theta: dominant, value: dominant_value, randomized: true };
    for _ in 0..n_candidates {
        let g = DVector::from_iterator(m, (0..m).map(|_| cscg(rng, 1.0)));
        let xi = &root * g;
        let candidate = project_unit_modulus(&xi.iter().map(|c| c.conj()).collect::<Vec<_>>());
        let value = objective(&candidate);
        if value > best.value {
            best.theta = candidate;
            best.value = value;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::sdp::{solve_unit_diag_sdp, SdpOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn quadratic(k: &DMatrix<Complex64>) -> impl Fn(&[Complex64]) -> f64 + '_ {
        move |t: &[Complex64]| {
            let v = DVector::from_column_slice(t);
            -(v.transpose() * k * v.map(|x| x.conj()))[(0, 0)].re
        }
    }

    #[test]
    fn auxiliary_normalization() {
        assert_eq!(normalize_by_auxiliary(&[c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)]), vec![c(0.0, 1.0), c(0.0, -1.0)]);
        let out = normalize_by_auxiliary(&[c(1.0, 0.0), c(0.0, 1.0)]);
        assert!((out[0] - c(0.0, -1.0)).norm() < 1e-15);
        let out = normalize_by_auxiliary(&[Complex64::from_polar(1.0, 0.3), Complex64::from_polar(1.0, 2.9), Complex64::from_polar(1.0, -1.1)]);
        assert!(out.iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn tight_relaxation_returns_generating_vector() {
        let theta = [Complex64::from_polar(1.0, 0.4), Complex64::from_polar(1.0, -2.0), Complex64::from_polar(1.0, 1.0)];
        let tv = DVector::from_column_slice(&theta);
        // X = theta^H theta
        let x = tv.map(|v| v.conj()) * tv.transpose();
        let k = -&x;
        let sol = solve_unit_diag_sdp(&k, &SdpOptions::default());
        assert!(sol.rank1_ratio <= RANK1_THRESHOLD);
        let out = gaussian_randomization(&sol, quadratic(&k), 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!out.randomized);
        let rot = out.theta[0] / theta[0];
        for (a, b) in out.theta.iter().zip(&theta) {
            assert!((a - b * rot).norm() < 1e-6);
        }
        assert!((out.value + sol.objective).abs() < 1e-8 * sol.objective.abs());
    }

    fn full_rank_solution() -> (DMatrix<Complex64>, SdpSolution) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(6, 6, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let k = (&a + a.adjoint()) * c(0.5, 0.0);
        let mut sol = solve_unit_diag_sdp(&k, &SdpOptions::default());
        sol.x = DMatrix::identity(6, 6);
        sol.rank1_ratio = 1.0;
        (k, sol)
    }

    #[test]
    fn single_candidate_is_deterministic() {
        let (k, sol) = full_rank_solution();
        let a = gaussian_randomization(&sol, quadratic(&k), 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = gaussian_randomization(&sol, quadratic(&k), 1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.randomized);
    }

    #[test]
    fn returns_best_candidate() {
        let (k, sol) = full_rank_solution();
        let f = quadratic(&k);
        let mut seen = Vec::new();
        let out = gaussian_randomization(
            &sol,
            |t: &[Complex64]| {
                let v = f(t);
                seen.push(v);
                v
            },
            1000,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        assert_eq!(seen.len(), 1001);
        assert!(seen.iter().all(|v| out.value >= *v));
        assert!(out.theta.iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn zero_candidates_rejected() {
        let (k, sol) = full_rank_solution();
        assert!(gaussian_randomization(&sol, quadratic(&k), 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn rejects_indefinite_matrix() {
        let (k, mut sol) = full_rank_solution();
        sol.x[(0, 0)] = c(-1.0, 0.0);
        let out = gaussian_randomization(&sol, quadratic(&k), 5, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(matches!(out, Err(Error::NotPositiveSemidefinite(_))));
    }
}
