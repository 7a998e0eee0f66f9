//! Regularizing filters `φ_α(κ, ·)`, their inverses, the induced penalties
//! `s_{α,κ}`, brute-force proximity operators, κ-regularizers, Bregman
//! distances and the property report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfd::QuasiSingularMap;
use crate::error::{invalid, Error, Result};
use crate::learned::MonotoneFilterParams;
use crate::quad::{adaptive_simpson, adaptive_trapezoid, trapezoid};
use crate::rng::RngSeed;
use crate::scalar::Real;
use crate::wavelet::{Lambda, WaveletField};

/// Largest bracket half-width tried by [`invert_filter`].
const MAX_BRACKET: f64 = (1u64 << 40) as f64;
/// Samples used to certify monotonicity of a bracket.
const MONOTONE_SAMPLES: usize = 33;

/// A family of scalar filters indexed by `(α, κ)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    Identity,
    /// Cubic near zero, sublinear power beyond `α`, odd.
    ExampleCubic,
    SoftThreshold,
    /// `κ² x / (κ² + α)`.
    LinearTikhonov,
    /// `κ ψ(κ, x / κ)`; `α` is the noise level the parameters were trained for.
    Learned(Arc<MonotoneFilterParams>),
}

impl Filter {
    pub fn name(&self) -> &'static str {
        match self {
            Filter::Identity => "identity",
            Filter::ExampleCubic => "example_cubic",
            Filter::SoftThreshold => "soft_threshold",
            Filter::LinearTikhonov => "linear_tikhonov",
            Filter::Learned(_) => "learned",
        }
    }

    /// Whether the family is strictly increasing in `x` by construction.
    pub fn is_strictly_increasing(&self) -> bool {
        !matches!(self, Filter::SoftThreshold)
    }

    /// Unchecked evaluation in `f64`.
    pub(crate) fn apply(&self, alpha: f64, kappa: f64, x: f64) -> Result<f64> {
        Ok(match self {
            Filter::Identity => x,
            Filter::ExampleCubic => {
                let a = x.abs();
                let v = if a <= alpha {
                    a * a * a / (3.0 * alpha * alpha)
                } else {
                    alpha / 3.0 * (3.0 * (1.0 + alpha) * a / alpha - (2.0 + 3.0 * alpha)).powf(1.0 / (alpha + 1.0))
                };
                v.copysign(x)
            }
            Filter::SoftThreshold => x.signum() * (x.abs() - alpha).max(0.0),
            Filter::LinearTikhonov => kappa * kappa * x / (kappa * kappa + alpha),
            Filter::Learned(p) => kappa * p.eval(kappa, x / kappa)?,
        })
    }
}

impl FromStr for Filter {
    type Err = Error;

    /// Parses the analytic kinds; learned filters are loaded from parameters.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Filter::Identity),
            "example_cubic" => Ok(Filter::ExampleCubic),
            "soft_threshold" => Ok(Filter::SoftThreshold),
            "linear_tikhonov" | "tikhonov" => Ok(Filter::LinearTikhonov),
            other => invalid(format!("unknown filter kind {other:?}")),
        }
    }
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_params(alpha: f64, kappa: f64) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return invalid(format!("alpha must be positive, got {alpha}"));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return invalid(format!("kappa must be positive, got {kappa}"));
    }
    Ok(())
}

/// `φ_α(κ, x)`.
pub fn eval_filter<T: Real>(f: &Filter, alpha: T, kappa: T, x: T) -> Result<T> {
    let (a, k) = (alpha.as_f64(), kappa.as_f64());
    check_params(a, k)?;
    Ok(T::lit(f.apply(a, k, x.as_f64())?))
}

fn monotone_on(f: &Filter, alpha: f64, kappa: f64, lo: f64, hi: f64) -> Result<bool> {
    let mut prev = f.apply(alpha, kappa, lo)?;
    for i in 1..MONOTONE_SAMPLES {
        let x = lo + (hi - lo) * i as f64 / (MONOTONE_SAMPLES - 1) as f64;
        let v = f.apply(alpha, kappa, x)?;
        if !(v > prev) {
            return Ok(false);
        }
        prev = v;
    }
    Ok(true)
}

/// Solves `φ_α(κ, x) = y` by bracketed bisection.
pub fn invert_filter(f: &Filter, alpha: f64, kappa: f64, y: f64) -> Result<f64> {
    check_params(alpha, kappa)?;
    if !y.is_finite() {
        return invalid("cannot invert a non-finite value");
    }
    if let Filter::Identity = f {
        return Ok(y);
    }
    let not_monotone = || Error::PreconditionViolation(format!("{f} filter is not strictly increasing near {y}"));
    let mut width = y.abs().max(1.0);
    let (mut lo, mut hi) = (-width, width);
    let (mut flo, mut fhi) = (f.apply(alpha, kappa, lo)?, f.apply(alpha, kappa, hi)?);
    if !(flo < fhi) || !monotone_on(f, alpha, kappa, lo, hi)? {
        return Err(not_monotone());
    }
    while !(flo <= y && y <= fhi) {
        width *= 2.0;
        if width > MAX_BRACKET {
            return Err(Error::Range(format!("{f} filter does not reach {y} within ±2^40")));
        }
        let (nlo, nhi) = (-width, width);
        let (nflo, nfhi) = (f.apply(alpha, kappa, nlo)?, f.apply(alpha, kappa, nhi)?);
        if !(nflo < flo && nfhi > fhi) {
            return Err(not_monotone());
        }
        (lo, hi, flo, fhi) = (nlo, nhi, nflo, nfhi);
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f.apply(alpha, kappa, mid)?;
        if fm < y {
            lo = mid;
            flo = fm;
        } else if fm > y {
            hi = mid;
            fhi = fm;
        } else {
            return Ok(mid);
        }
    }
    let x = if (y - flo).abs() <= (fhi - y).abs() { lo } else { hi };
    let err = (f.apply(alpha, kappa, x)? - y).abs();
    if err > 1e-10 * y.abs().max(1.0) {
        return Err(not_monotone());
    }
    Ok(x)
}

/// `s` and `s'` sampled on a grid containing 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarPenalty {
    pub alpha: f64,
    pub kappa: f64,
    grid: Vec<f64>,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl ScalarPenalty {
    /// Penalty from closed forms, e.g. the quadratic bracket penalties of the
    /// neighbouring condition.
    pub fn from_fn(alpha: f64, kappa: f64, grid: Vec<f64>, s: impl Fn(f64) -> f64, ds: impl Fn(f64) -> f64) -> Result<Self> {
        check_grid(&grid)?;
        let values = grid.iter().map(|&x| s(x)).collect();
        let derivs = grid.iter().map(|&x| ds(x)).collect();
        Ok(ScalarPenalty { alpha, kappa, grid, values, derivs })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn derivs(&self) -> &[f64] {
        &self.derivs
    }

    pub fn origin(&self) -> usize {
        self.grid.iter().position(|&x| x == 0.0).expect("grid contains 0")
    }

    /// Cubic Hermite interpolant of `s` on cell `i` (`grid[i]..grid[i+1]`).
    fn hermite(&self, i: usize, t: f64) -> f64 {
        let (x0, x1) = (self.grid[i], self.grid[i + 1]);
        let h = x1 - x0;
        let u = (t - x0) / h;
        let (u2, u3) = (u * u, u * u * u);
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.values[i] + h10 * h * self.derivs[i] + h01 * self.values[i + 1] + h11 * h * self.derivs[i + 1]
    }

    /// Whether `x²/2 + s(x)` has second differences `≥ -tol` on the grid.
    pub fn is_weakly_convex(&self, tol: f64) -> bool {
        self.min_second_difference() >= -tol
    }

    /// Smallest divided second difference of `x²/2 + s(x)`.
    pub fn min_second_difference(&self) -> f64 {
        let g = |i: usize| 0.5 * self.grid[i] * self.grid[i] + self.values[i];
        (1..self.grid.len().saturating_sub(1))
            .map(|i| {
                let (h0, h1) = (self.grid[i] - self.grid[i - 1], self.grid[i + 1] - self.grid[i]);
                let d0 = (g(i) - g(i - 1)) / h0;
                let d1 = (g(i + 1) - g(i)) / h1;
                (d1 - d0) / (0.5 * (h0 + h1))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 3 {
        return invalid("penalty grid needs at least 3 points");
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("penalty grid must be strictly increasing");
    }
    if !grid.contains(&0.0) {
        return invalid("penalty grid must contain 0");
    }
    Ok(())
}

/// Uniform grid on `[-r, r]` with `2n + 1` points (0 included exactly).
pub fn symmetric_grid(r: f64, n: usize) -> Vec<f64> {
    (0..=2 * n).map(|i| r * (i as f64 - n as f64) / n as f64).collect()
}

/// Symmetric grid `±r (i/n)^power`, `i = 0..=n`, refined toward 0 where
/// inverses of flat filters are steep.
pub fn graded_grid(r: f64, n: usize, power: f64) -> Vec<f64> {
    let half: Vec<f64> = (1..=n).map(|i| r * (i as f64 / n as f64).powf(power)).collect();
    half.iter().rev().map(|v| -v).chain(std::iter::once(0.0)).chain(half.iter().copied()).collect()
}

/// `s(x) = ∫₀ˣ φ⁻¹ − x²/2` on `grid`, by adaptive trapezoid quadrature of
/// `φ⁻¹` (absolute tolerance 1e-9 per cell).
pub fn penalty_from_filter(f: &Filter, alpha: f64, kappa: f64, grid: &[f64]) -> Result<ScalarPenalty> {
    check_params(alpha, kappa)?;
    check_grid(grid)?;
    let inv: Vec<f64> = grid.iter().map(|&x| invert_filter(f, alpha, kappa, x)).collect::<Result<_>>()?;
    let o = grid.iter().position(|&x| x == 0.0).expect("checked");
    let mut integral = vec![0.0; grid.len()];
    let cell = |a: f64, b: f64| adaptive_trapezoid(|y| invert_filter(f, alpha, kappa, y), a, b, 1e-9);
    for i in o + 1..grid.len() {
        integral[i] = integral[i - 1] + cell(grid[i - 1], grid[i])?;
    }
    for i in (0..o).rev() {
        integral[i] = integral[i + 1] - cell(grid[i], grid[i + 1])?;
    }
    let values = grid.iter().zip(&integral).map(|(&x, &v)| v - 0.5 * x * x).collect();
    let derivs = grid.iter().zip(&inv).map(|(&x, &v)| v - x).collect();
    Ok(ScalarPenalty { alpha, kappa, grid: grid.to_vec(), values, derivs })
}

/// `argmin_t ½(x − t)² + s(t)` by grid search plus golden-section refinement
/// on the neighbouring cells (with Hermite interpolation of `s`).
pub fn prox_bruteforce(p: &ScalarPenalty, x: f64) -> Result<f64> {
    let (lo, hi) = (p.grid[0], p.grid[p.grid.len() - 1]);
    if !(lo <= x && x <= hi) {
        return Err(Error::Range(format!("{x} outside penalty grid [{lo}, {hi}]")));
    }
    let obj_node = |i: usize| 0.5 * (x - p.grid[i]).powi(2) + p.values[i];
    let best = (0..p.grid.len()).min_by(|&a, &b| obj_node(a).total_cmp(&obj_node(b))).expect("non-empty grid");
    let a = p.grid[best.saturating_sub(1)];
    let b = p.grid[(best + 1).min(p.grid.len() - 1)];
    let obj = |t: f64| {
        let i = match p.grid.binary_search_by(|g| g.total_cmp(&t)) {
            Ok(i) => i.min(p.grid.len() - 2),
            Err(i) => i.saturating_sub(1).min(p.grid.len() - 2),
        };
        0.5 * (x - t).powi(2) + p.hermite(i, t)
    };
    let t = golden_section(obj, a, b, 1e-13 * (1.0 + x.abs()));
    Ok(if obj(t) <= obj_node(best) { t } else { p.grid[best] })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// `s(X) = ∫₀^X φ⁻¹ − X²/2`, via `∫₀^X φ⁻¹ = T·X − ∫_{T₀}^{T} φ` with
/// `T = φ⁻¹(X)`, `T₀ = φ⁻¹(0)`, so only one inversion is needed.
fn penalty_at(f: &Filter, alpha: f64, kappa: f64, x: f64, tol: f64) -> Result<f64> {
    if x == 0.0 || matches!(f, Filter::Identity) {
        return Ok(0.0);
    }
    let t = invert_filter(f, alpha, kappa, x)?;
    let t0 = if f.apply(alpha, kappa, 0.0)? == 0.0 { 0.0 } else { invert_filter(f, alpha, kappa, 0.0)? };
    // evaluation can only fail for learned filters with unknown κ, checked by the inversion above
    let phi = |u: f64| f.apply(alpha, kappa, u).unwrap_or(f64::NAN);
    let area = adaptive_simpson(&phi, t0, t, tol * t.abs().max(1.0));
    Ok(t * x - area - 0.5 * x * x)
}

/// Quadrature tolerance of [`kappa_regularizer`] (relative to `max(1, |T|)`).
pub const REGULARIZER_TOL: f64 = 1e-13;

/// `R_α(w) = Σ_λ s_{α,λ}(κ_λ w_λ)`.
pub fn kappa_regularizer(f: &Filter, alpha: f64, kappas: &QuasiSingularMap, w: &WaveletField<f64>) -> Result<f64> {
    check_params(alpha, kappas.max())?;
    let mut total = 0.0;
    for band in w.bands() {
        let k = kappas.for_band(band);
        let terms: Vec<f64> =
            w.band(band).par_iter().map(|&v| penalty_at(f, alpha, k, k * v, REGULARIZER_TOL)).collect::<Result<_>>()?;
        total += terms.iter().sum::<f64>();
    }
    Ok(total)
}

/// `∂R_α/∂w_λ = κ_λ (φ⁻¹(κ_λ w_λ) − κ_λ w_λ)`.
pub fn regularizer_gradient(f: &Filter, alpha: f64, kappa: f64, w: f64) -> Result<f64> {
    let y = kappa * w;
    Ok(kappa * (invert_filter(f, alpha, kappa, y)? - y))
}

/// Compares the analytic gradient with central differences of
/// [`kappa_regularizer`] on `n_samples` random coefficients and returns the
/// largest `|fd − analytic| / max(1, |analytic|)`.
pub fn regularizer_gradient_check(
    f: &Filter,
    alpha: f64,
    kappas: &QuasiSingularMap,
    w: &WaveletField<f64>,
    h: f64,
    n_samples: usize,
    seed: RngSeed,
) -> Result<f64> {
    let mut rng = seed.rng();
    let bands = w.bands();
    let mut worst: f64 = 0.0;
    for _ in 0..n_samples {
        let band = bands[rng.random_range(0..bands.len())];
        let index = rng.random_range(0..w.band(band).len());
        let lambda = Lambda { band, index };
        let v = w.get(lambda);
        let analytic = regularizer_gradient(f, alpha, kappas.for_band(band), v)?;
        let mut wp = w.clone();
        wp.set(lambda, v + h);
        let mut wm = w.clone();
        wm.set(lambda, v - h);
        let fd = (kappa_regularizer(f, alpha, kappas, &wp)? - kappa_regularizer(f, alpha, kappas, &wm)?) / (2.0 * h);
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(1.0));
    }
    Ok(worst)
}

/// Families of stationary comparison penalties `q_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QFamily {
    /// `q(t) = (L/κ − 1/(2α̃)) t²`.
    SmallestQ,
    /// `q(t) = (max κ) L t² / κ²`.
    NormQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighbourSpec {
    #[serde(rename = "L")]
    pub l: f64,
    pub alpha_tilde: f64,
    pub q_family: QFamily,
}

impl Default for NeighbourSpec {
    fn default() -> Self {
        NeighbourSpec { l: 1.0, alpha_tilde: 1.0, q_family: QFamily::NormQ }
    }
}

impl NeighbourSpec {
    /// Coefficient `a` of `q(t) = a t²` for a given κ.
    fn quad_coeff(&self, kappa: f64, max_kappa: f64) -> f64 {
        match self.q_family {
            QFamily::SmallestQ => self.l / kappa - 0.5 / self.alpha_tilde,
            QFamily::NormQ => max_kappa * self.l / (kappa * kappa),
        }
    }

    pub fn q(&self, kappa: f64, max_kappa: f64, t: f64) -> f64 {
        self.quad_coeff(kappa, max_kappa) * t * t
    }

    pub fn dq(&self, kappa: f64, max_kappa: f64, t: f64) -> f64 {
        2.0 * self.quad_coeff(kappa, max_kappa) * t
    }

    /// Q1–Q3 on the given κ values: `q'(0) = 0` and the slope of `q'` is at
    /// least `2L/κ − 1/α̃`.
    pub fn satisfies_conditions(&self, kappas: &[f64]) -> bool {
        let max_kappa = kappas.iter().copied().fold(0.0, f64::max);
        self.l > 0.0
            && self.alpha_tilde > 0.0
            && kappas.iter().all(|&k| {
                self.dq(k, max_kappa, 0.0) == 0.0
                    && 2.0 * self.quad_coeff(k, max_kappa) >= 2.0 * self.l / k - 1.0 / self.alpha_tilde - 1e-12
            })
    }

    /// The two bracket penalties `α(q ± L t²/κ)` on `grid`.
    pub fn bracket_penalties(&self, alpha: f64, kappa: f64, max_kappa: f64, grid: &[f64]) -> Result<(ScalarPenalty, ScalarPenalty)> {
        let a = self.quad_coeff(kappa, max_kappa);
        let plus = a + self.l / kappa;
        let minus = a - self.l / kappa;
        Ok((
            ScalarPenalty::from_fn(alpha, kappa, grid.to_vec(), |t| alpha * plus * t * t, |t| 2.0 * alpha * plus * t)?,
            ScalarPenalty::from_fn(alpha, kappa, grid.to_vec(), |t| alpha * minus * t * t, |t| 2.0 * alpha * minus * t)?,
        ))
    }
}

/// `D_Q(x, y) = |Σ_λ (κ q'(κ x_λ) − κ q'(κ y_λ)) (x_λ − y_λ)|`.
pub fn bregman_distance(spec: &NeighbourSpec, kappas: &QuasiSingularMap, x: &WaveletField<f64>, y: &WaveletField<f64>) -> Result<f64> {
    if x.size() != y.size() || x.levels() != y.levels() {
        return invalid("coefficient fields differ in shape");
    }
    let max_kappa = kappas.max();
    let mut sum = 0.0;
    for band in x.bands() {
        let k = kappas.for_band(band);
        for (&a, &b) in x.band(band).iter().zip(y.band(band)) {
            sum += (k * spec.dq(k, max_kappa, k * a) - k * spec.dq(k, max_kappa, k * b)) * (a - b);
        }
    }
    Ok(sum.abs())
}

/// [`bregman_distance`] for flat coefficient vectors with per-entry κ.
pub fn bregman_distance_flat(spec: &NeighbourSpec, kappas: &[f64], x: &[f64], y: &[f64]) -> f64 {
    let max_kappa = kappas.iter().copied().fold(0.0, f64::max);
    let sum: f64 = kappas
        .iter()
        .zip(x.iter().zip(y))
        .map(|(&k, (&a, &b))| (k * spec.dq(k, max_kappa, k * a) - k * spec.dq(k, max_kappa, k * b)) * (a - b))
        .sum();
    sum.abs()
}

/// Lower bound function `g_κ(t)` of the A2 check.
#[derive(Clone)]
pub enum LowerBound {
    /// `g_κ(t) = κ² t`.
    KappaSquared,
    Custom(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for LowerBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LowerBound::KappaSquared => f.write_str("KappaSquared"),
            LowerBound::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl LowerBound {
    fn eval(&self, kappa: f64, t: f64) -> f64 {
        match self {
            LowerBound::KappaSquared => kappa * kappa * t,
            LowerBound::Custom(g) => g(kappa, t),
        }
    }
}

/// Grids and constants for [`verify_filter`].
#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub alphas: Vec<f64>,
    pub kappas: Vec<f64>,
    /// Symmetric about 0 and containing 0.
    pub xs: Vec<f64>,
    pub neighbour: NeighbourSpec,
    /// A1 region `0 < |x| ≤ c α / κ`.
    pub a1_c: f64,
    /// A3 slope bound.
    pub a3_k: f64,
    pub lower_bound: LowerBound,
    /// Penalty grid half-width for the neighbouring bracket, as a multiple of `max |x|`.
    pub neighbour_range: f64,
    /// Cells per half of the neighbouring penalty grid.
    pub neighbour_cells: usize,
}

impl VerifyConfig {
    pub fn new(alphas: Vec<f64>, kappas: Vec<f64>, xs: Vec<f64>) -> Self {
        VerifyConfig {
            alphas,
            kappas,
            xs,
            neighbour: NeighbourSpec::default(),
            a1_c: 1.0,
            a3_k: 2.0,
            lower_bound: LowerBound::KappaSquared,
            neighbour_range: 4.0,
            neighbour_cells: 4000,
        }
    }
}

/// Verdicts for one `(α, κ)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub kappa: f64,
    pub injective: bool,
    pub strictly_increasing: bool,
    pub phi_at_zero: f64,
    /// `‖φ − Id‖_{L²}` on the x grid.
    pub l2_to_identity: f64,
    pub a1_ratio: f64,
    pub a3_margin: f64,
    pub a2_ratio: f64,
    pub nonexpansive: bool,
    pub neighbour_ok: bool,
}

/// Aggregates over κ for one α, mirroring the rows of a property table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReportRow {
    #[serde(rename = "F1")]
    pub f1: bool,
    #[serde(rename = "F2")]
    pub f2: bool,
    #[serde(rename = "F3_max")]
    pub f3_max: f64,
    #[serde(rename = "F4_sum")]
    pub f4_sum: f64,
    #[serde(rename = "A1_ratio")]
    pub a1_ratio: f64,
    #[serde(rename = "A3_ok")]
    pub a3_ok: bool,
    #[serde(rename = "A3_margin")]
    pub a3_margin: f64,
    #[serde(rename = "A2_ratio")]
    pub a2_ratio: f64,
    pub nonexpansive: bool,
    pub neighbour_ok: bool,
    pub x_range: [f64; 2],
    pub per_kappa: Vec<KappaRow>,
}

/// Rows keyed by α (serialized as a JSON object in α order).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub filter: String,
    pub rows: Vec<(f64, FilterReportRow)>,
}

impl FilterReport {
    pub fn row(&self, alpha: f64) -> Option<&FilterReportRow> {
        self.rows.iter().find(|(a, _)| *a == alpha).map(|(_, r)| r)
    }
}

impl Serialize for FilterReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(Some(self.rows.len()))?;
        for (alpha, row) in &self.rows {
            m.serialize_entry(&format!("{alpha}"), row)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for FilterReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let map = BTreeMap::<String, FilterReportRow>::deserialize(d)?;
        let mut rows = Vec::with_capacity(map.len());
        for (k, v) in map {
            let a: f64 = k.parse().map_err(|_| serde::de::Error::custom(format!("bad alpha key {k:?}")))?;
            rows.push((a, v));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(FilterReport { filter: String::new(), rows })
    }
}

fn verify_pair(f: &Filter, alpha: f64, kappa: f64, max_kappa: f64, cfg: &VerifyConfig) -> Result<KappaRow> {
    let xs = &cfg.xs;
    let phi: Vec<f64> = xs.iter().map(|&x| f.apply(alpha, kappa, x)).collect::<Result<_>>()?;
    let strictly_increasing = phi.windows(2).all(|w| w[0] < w[1]);
    let injective = strictly_increasing || phi.windows(2).all(|w| w[0] > w[1]);
    let phi_at_zero = f.apply(alpha, kappa, 0.0)?.abs();
    let diff2: Vec<f64> = xs.iter().zip(&phi).map(|(&x, &p)| (p - x).powi(2)).collect();
    let l2_to_identity = trapezoid(xs, &diff2).sqrt();

    let limit = cfg.a1_c * alpha / kappa;
    let mut a1_ratio: f64 = 0.0;
    let dense = (1..=64).map(|i| limit * i as f64 / 64.0);
    for x in xs.iter().copied().filter(|x| *x != 0.0 && x.abs() <= limit).chain(dense.clone()).chain(dense.map(|x| -x)) {
        a1_ratio = a1_ratio.max(f.apply(alpha, kappa, x)?.abs() * alpha.sqrt() / (x.abs() * kappa));
    }

    let mut a3_margin = f64::NEG_INFINITY;
    let mut a2_ratio = f64::INFINITY;
    for (&x, &p) in xs.iter().zip(&phi) {
        if x == 0.0 {
            continue;
        }
        a3_margin = a3_margin.max(p.abs() - cfg.a3_k * x.abs());
        a2_ratio = a2_ratio.min(p.abs() / cfg.lower_bound.eval(kappa, x.abs()));
    }
    let nonexpansive = xs.windows(2).zip(phi.windows(2)).all(|(x, p)| (p[1] - p[0]).abs() <= (x[1] - x[0]) * (1.0 + 1e-12));

    let xmax = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let grid = symmetric_grid(cfg.neighbour_range * xmax, cfg.neighbour_cells);
    let (plus, minus) = cfg.neighbour.bracket_penalties(alpha, kappa, max_kappa, &grid)?;
    let mut neighbour_ok = true;
    for (&x, &p) in xs.iter().zip(&phi) {
        let lo = prox_bruteforce(&plus, x)?.abs();
        let hi = prox_bruteforce(&minus, x)?.abs();
        let tol = 1e-6 * x.abs().max(1.0);
        if p.abs() < lo - tol || p.abs() > hi + tol {
            neighbour_ok = false;
            break;
        }
    }
    Ok(KappaRow {
        kappa,
        injective,
        strictly_increasing,
        phi_at_zero,
        l2_to_identity,
        a1_ratio,
        a3_margin,
        a2_ratio,
        nonexpansive,
        neighbour_ok,
    })
}

/// Evaluates the filter properties on every `(α, κ)` of the configuration.
pub fn verify_filter(f: &Filter, cfg: &VerifyConfig) -> Result<FilterReport> {
    if cfg.alphas.is_empty() || cfg.kappas.is_empty() || cfg.xs.len() < 3 {
        return invalid("verification grids must be non-empty");
    }
    if !cfg.xs.contains(&0.0) || cfg.xs.windows(2).any(|w| !(w[0] < w[1])) {
        return invalid("x grid must be strictly increasing and contain 0");
    }
    for &a in &cfg.alphas {
        for &k in &cfg.kappas {
            check_params(a, k)?;
        }
    }
    let max_kappa = cfg.kappas.iter().copied().fold(0.0, f64::max);
    let pairs: Vec<(f64, f64)> = cfg.alphas.iter().flat_map(|&a| cfg.kappas.iter().map(move |&k| (a, k))).collect();
    let rows: Vec<KappaRow> =
        pairs.par_iter().map(|&(a, k)| verify_pair(f, a, k, max_kappa, cfg)).collect::<Result<_>>()?;
    let x_range = [cfg.xs[0], cfg.xs[cfg.xs.len() - 1]];
    let mut out = Vec::new();
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let per_kappa = rows[ai * cfg.kappas.len()..(ai + 1) * cfg.kappas.len()].to_vec();
        let a3_margin = per_kappa.iter().map(|r| r.a3_margin).fold(f64::NEG_INFINITY, f64::max);
        out.push((
            alpha,
            FilterReportRow {
                f1: per_kappa.iter().all(|r| r.injective),
                f2: per_kappa.iter().all(|r| r.strictly_increasing),
                f3_max: per_kappa.iter().map(|r| r.phi_at_zero).fold(0.0, f64::max),
                f4_sum: per_kappa.iter().map(|r| r.l2_to_identity).sum(),
                a1_ratio: per_kappa.iter().map(|r| r.a1_ratio).fold(0.0, f64::max),
                a3_ok: a3_margin < 0.0,
                a3_margin,
                a2_ratio: per_kappa.iter().map(|r| r.a2_ratio).fold(f64::INFINITY, f64::min),
                nonexpansive: per_kappa.iter().all(|r| r.nonexpansive),
                neighbour_ok: per_kappa.iter().all(|r| r.neighbour_ok),
                x_range,
                per_kappa,
            },
        ));
    }
    Ok(FilterReport { filter: f.name().to_string(), rows: out })
}

/// Applies `x ↦ κ⁻¹ φ(κ, κ x)` to every coefficient.
pub fn filter_coefficients<T: Real>(f: &Filter, alpha: f64, kappas: &QuasiSingularMap, w: &WaveletField<T>) -> Result<WaveletField<T>> {
    check_params(alpha, kappas.max())?;
    let mut out = w.clone();
    for band in w.bands() {
        let k = kappas.for_band(band);
        let vals: Vec<T> = w
            .band(band)
            .par_iter()
            .map(|&c| Ok(T::lit(f.apply(alpha, k, k * c.as_f64())? / k)))
            .collect::<Result<_>>()?;
        out.band_mut(band).copy_from_slice(&vals);
    }
    Ok(out)
}
