use nalgebra::DMatrix;
use num_complex::Complex64;

const HERMITIAN_TOL: f64 = 1e-10;

/// Eigenvalues in ascending order with matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
}

impl HermitianEigen {
    pub fn vector(&self, i: usize) -> Vec<Complex64> {
        self.vectors.column(i).iter().copied().collect()
    }
}

/// Rotates `v` so that its largest-magnitude entry (first on ties) is real
/// positive.
pub(crate) fn fix_phase(v: &mut [Complex64]) {
    let mut best = 0;
    let mut best_norm = -1.0;
    for (i, c) in v.iter().enumerate() {
        let n = c.norm_sqr();
        if n > best_norm * (1.0 + 1e-12) {
            best = i;
            best_norm = n;
        }
    }
    if best_norm > 0.0 {
        let rot = v[best].conj() / v[best].norm();
        for c in v.iter_mut() {
            *c *= rot;
        }
        v[best] = Complex64::new(v[best].re, 0.0);
    }
}

fn relative_asymmetry(h: &DMatrix<Complex64>) -> f64 {
    let scale = h.norm().max(f64::MIN_POSITIVE);
    (h - h.adjoint()).norm() / scale
}

/// Full decomposition of a Hermitian matrix.
///
/// Panics if `h` is not square or deviates from Hermitian by more than
/// `1e-10` relative; smaller asymmetry is removed before decomposing.
pub fn hermitian_eigen(h: &DMatrix<Complex64>) -> HermitianEigen {
    assert!(h.is_square(), "matrix must be square");
    let asym = relative_asymmetry(h);
    assert!(asym <= HERMITIAN_TOL, "matrix is not Hermitian (relative asymmetry {asym:.3e})");
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(h.nrows(), h.ncols());
    for (dst, &src) in order.iter().enumerate() {
        let mut v: Vec<Complex64> = eig.eigenvectors.column(src).iter().copied().collect();
        fix_phase(&mut v);
        vectors.column_mut(dst).copy_from_slice(&v);
    }
    HermitianEigen { values, vectors }
}

/// Minimum eigenvalue and its unit eigenvector, phase-normalized.
pub fn smallest_eigenpair(h: &DMatrix<Complex64>) -> (f64, Vec<Complex64>) {
    let eig = hermitian_eigen(h);
    (eig.values[0], eig.vector(0))
}
