//! Diagonal frame decomposition of the Radon transform with the Haar basis.
//!
//! With `u_λ` the Haar atoms, the data-side coefficients are defined by
//! `⟨y, v_λ⟩ := κ_λ ⟨FBP y, u_λ⟩`; `v_λ` itself is only built by
//! [`verify_quasi_singular`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Image, Sinogram};
use crate::radon::{fbp, fbp_scale, radon_adjoint, radon_forward, riesz_filter_transpose, RadonGeometry};
use crate::rng::RngSeed;
use crate::scalar::Real;
use crate::wavelet::{haar_analysis, haar_atom, Band, Lambda, Orientation, WaveletField};

/// Quasi-singular values per wavelet level; the approximation block shares the
/// coarsest value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiSingularMap {
    /// `per_level[ℓ - 1]`, strictly increasing.
    per_level: Vec<f64>,
    approx_kappa: f64,
}

impl QuasiSingularMap {
    /// `κ(ℓ) = κ₀ · 2^{-(J-ℓ)/2}` for `ℓ = 1..=J`, approximation block at `κ₀`.
    pub fn dyadic(levels: usize, kappa0: f64) -> Result<Self> {
        if levels == 0 {
            return invalid("need at least one level");
        }
        if !(kappa0.is_finite() && kappa0 > 0.0) {
            return invalid(format!("kappa0 must be positive, got {kappa0}"));
        }
        let per_level = (1..=levels).map(|l| kappa0 * 2f64.powf(-((levels - l) as f64) / 2.0)).collect();
        Ok(QuasiSingularMap { per_level, approx_kappa: kappa0 })
    }

    /// Arbitrary positive, strictly increasing per-level values.
    pub fn from_values(per_level: Vec<f64>, approx_kappa: f64) -> Result<Self> {
        if per_level.is_empty() {
            return invalid("need at least one level");
        }
        if per_level.iter().chain([&approx_kappa]).any(|k| !(k.is_finite() && *k > 0.0)) {
            return invalid("quasi-singular values must be positive and finite");
        }
        if per_level.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("quasi-singular values must increase toward coarse levels");
        }
        Ok(QuasiSingularMap { per_level, approx_kappa })
    }

    pub fn levels(&self) -> usize {
        self.per_level.len()
    }

    pub fn level(&self, level: usize) -> f64 {
        self.per_level[level - 1]
    }

    pub fn approx_kappa(&self) -> f64 {
        self.approx_kappa
    }

    pub fn per_level(&self) -> &[f64] {
        &self.per_level
    }

    pub fn for_band(&self, band: Band) -> f64 {
        match band {
            Band::Approx => self.approx_kappa,
            Band::Detail { level, .. } => self.level(level),
        }
    }

    /// Supremum over all coefficients.
    pub fn max(&self) -> f64 {
        self.per_level.iter().copied().fold(self.approx_kappa, f64::max)
    }

    /// Distinct values in increasing order.
    pub fn distinct(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.per_level.clone();
        v.push(self.approx_kappa);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Scales every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_values(self.per_level.iter().map(|k| k * factor).collect(), self.approx_kappa * factor)
    }
}

/// Geometry, number of Haar levels and quasi-singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfdContext {
    pub geometry: RadonGeometry,
    pub levels: usize,
    pub kappas: QuasiSingularMap,
}

impl DfdContext {
    pub fn new(geometry: RadonGeometry, levels: usize, kappas: QuasiSingularMap) -> Result<Self> {
        let n = geometry.image_size();
        let p = n.trailing_zeros() as usize;
        if p < levels + 2 {
            return invalid(format!("image size {n} supports at most {} levels", p.saturating_sub(2)));
        }
        if kappas.levels() != levels {
            return invalid(format!("{} quasi-singular levels for a {levels}-level transform", kappas.levels()));
        }
        Ok(DfdContext { geometry, levels, kappas })
    }

    /// Dyadic quasi-singular values with coarsest value `kappa0`.
    pub fn dyadic(geometry: RadonGeometry, levels: usize, kappa0: f64) -> Result<Self> {
        Self::new(geometry, levels, QuasiSingularMap::dyadic(levels, kappa0)?)
    }

    /// `p - 2` levels for a `2^p` image (a 4×4 approximation block).
    pub fn default_levels(image_size: usize) -> usize {
        (image_size.trailing_zeros() as usize).saturating_sub(2).max(1)
    }

    pub fn image_size(&self) -> usize {
        self.geometry.image_size()
    }
}

/// `⟨y, v_λ⟩ = κ_λ ⟨FBP y, u_λ⟩` for every λ.
pub fn v_coefficients<T: Real>(y: &Sinogram<T>, ctx: &DfdContext) -> Result<WaveletField<T>> {
    let w = haar_analysis(&fbp(y, &ctx.geometry)?, ctx.levels)?;
    Ok(w.map_bands(|band, v| v * T::lit(ctx.kappas.for_band(band))))
}

/// One probed frame element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiSingularProbe {
    pub lambda: Lambda,
    pub kappa: f64,
    /// `‖R* v_λ − κ_λ u_λ‖ / ‖κ_λ u_λ‖`.
    pub residual: f64,
    /// Relative mismatch of `⟨g, v_λ⟩` against `κ_λ⟨FBP g, u_λ⟩` for a random `g`.
    pub identity_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuasiSingularReport {
    pub probes: Vec<QuasiSingularProbe>,
    pub max_residual: f64,
    pub max_identity_residual: f64,
}

/// Materializes `v_λ` as the sinogram representing `y ↦ κ_λ ⟨FBP y, u_λ⟩`.
pub fn v_atom(ctx: &DfdContext, lambda: Lambda) -> Result<Sinogram<f64>> {
    let u: Image<f64> = haar_atom(ctx.image_size(), ctx.levels, lambda)?;
    let kappa = ctx.kappas.for_band(lambda.band);
    let scale = kappa * fbp_scale(&ctx.geometry);
    let ru = riesz_filter_transpose(&radon_forward(&u, &ctx.geometry)?);
    ru.with_values(ru.values().iter().map(|v| v * scale).collect())
}

/// Checks `R* v_λ ≈ κ_λ u_λ` for one frame element.
pub fn probe_quasi_singular(ctx: &DfdContext, lambda: Lambda, seed: RngSeed) -> Result<QuasiSingularProbe> {
    let g = &ctx.geometry;
    let kappa = ctx.kappas.for_band(lambda.band);
    let u: Image<f64> = haar_atom(ctx.image_size(), ctx.levels, lambda)?;
    let v = v_atom(ctx, lambda)?;
    let back = radon_adjoint(&v, g)?;
    let diff: f64 = back.pixels().iter().zip(u.pixels()).map(|(b, a)| (b - kappa * a).powi(2)).sum::<f64>().sqrt();
    let residual = diff / (kappa * u.norm());

    let mut rng = seed.rng();
    let probe = g.empty_sinogram::<f64>();
    let probe = probe.with_values((0..probe.len()).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let lhs = probe.dot(&v);
    let rhs = kappa * fbp(&probe, g)?.dot(&u);
    let identity_residual = (lhs - rhs).abs() / (lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    Ok(QuasiSingularProbe { lambda, kappa, residual, identity_residual })
}

/// Probes `probes` random frame elements (level uniform, then band and
/// position uniform) and reports the worst residuals.
pub fn verify_quasi_singular(ctx: &DfdContext, probes: usize, seed: RngSeed) -> Result<QuasiSingularReport> {
    let mut rng = seed.rng();
    let mut report = QuasiSingularReport::default();
    for k in 0..probes {
        let pick = rng.random_range(0..=ctx.levels);
        let band = if pick == 0 {
            Band::Approx
        } else {
            Band::Detail { level: pick, orientation: Orientation::ALL[rng.random_range(0..3)] }
        };
        let side = match band {
            Band::Approx => ctx.image_size() >> ctx.levels,
            Band::Detail { level, .. } => ctx.image_size() >> level,
        };
        let lambda = Lambda { band, index: rng.random_range(0..side * side) };
        let p = probe_quasi_singular(ctx, lambda, seed.derive(k as u64))?;
        report.max_residual = report.max_residual.max(p.residual);
        report.max_identity_residual = report.max_identity_residual.max(p.identity_residual);
        report.probes.push(p);
    }
    Ok(report)
}
