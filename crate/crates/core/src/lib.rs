//! Non-linear filtered diagonal frame decomposition (DFD) for 2-D parallel-beam CT.
//!
//! The pipeline: a ray-driven Radon transform with its exact adjoint, filtered
//! backprojection, an orthonormal Haar DFD with quasi-singular values, and
//! coefficient-wise regularizing filters (analytic or learned) applied as
//! `F(y) = Σ κ⁻¹ φ(κ, κ⟨FBP y, u⟩) u`.
//!
//! Every numeric type is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix `f64`, which is what the experiments use.

pub mod dfd;
pub mod error;
pub mod filters;
pub mod grid;
pub mod harness;
pub mod io;
pub mod learned;
pub mod phantom;
mod quad;
pub mod radon;
pub mod rng;
pub mod scalar;
pub mod wavelet;

pub use dfd::{v_coefficients, verify_quasi_singular, DfdContext, QuasiSingularMap};
pub use error::{Error, Result};
pub use grid::{default_offset_spacing, mse, AngleRange};
pub use phantom::{make_phantom, random_phantom, PhantomKind};
pub use radon::{fbp, radon_adjoint, radon_forward, riesz_filter, RadonGeometry};
pub use rng::RngSeed;
pub use scalar::Real;
pub use wavelet::{haar_analysis, haar_atom, haar_synthesis, Band, Lambda, Orientation};

pub type Image = grid::Image<f64>;
pub type Sinogram = grid::Sinogram<f64>;
pub type Image32 = grid::Image<f32>;
pub type Sinogram32 = grid::Sinogram<f32>;
pub type WaveletField = wavelet::WaveletField<f64>;
pub type WaveletField32 = wavelet::WaveletField<f32>;
