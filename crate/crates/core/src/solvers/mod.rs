//! Numerical kernels: Hermitian eigenpairs, the unit-diagonal SDP and
//! Gaussian-randomization rank-1 extraction.

mod eigen;
mod randomize;
mod sdp;

pub use eigen::{hermitian_eigen, smallest_eigenpair, HermitianEigen};
pub use randomize::{gaussian_randomization, normalize_by_auxiliary, project_unit_modulus, Extraction, RANK1_THRESHOLD};
pub use sdp::{solve_unit_diag_sdp, solve_unit_diag_sdp_warm, SdpOptions, SdpSolution, SdpWarmStart};
