//! Noise models calibrated to a target noise level, the filtered-DFD
//! reconstruction map, MSE tables and convergence-rate experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfd::DfdContext;
use crate::error::{invalid, Error, Result};
use crate::filters::{bregman_distance, bregman_distance_flat, eval_filter, filter_coefficients, Filter, NeighbourSpec, QFamily};
use crate::grid::{mse, Image, Sinogram};
use crate::learned::{filter_from_learned, MonotoneFilterParams};
use crate::radon::{fbp, radon_forward};
use crate::rng::RngSeed;
use crate::scalar::Real;
use crate::wavelet::{haar_analysis, haar_synthesis};

/// Relative calibration tolerance of [`add_noise`].
pub const NOISE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian,
    Poisson,
    Uniform,
    SaltPepper,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::Gaussian, NoiseKind::Poisson, NoiseKind::Uniform, NoiseKind::SaltPepper];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Poisson => "poisson",
            NoiseKind::Uniform => "uniform",
            NoiseKind::SaltPepper => "salt_pepper",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown noise kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub target_delta: f64,
    pub seed: RngSeed,
}

/// `δ = ‖a − b‖₂ / √n`.
pub fn measured_delta<T: Real>(a: &Sinogram<T>, b: &Sinogram<T>) -> Result<f64> {
    if !a.same_shape(b) {
        return invalid("sinograms differ in shape");
    }
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum();
    Ok((s / a.len() as f64).sqrt())
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Perturbs `y` so that `(1/√n)‖y − y^δ‖₂` is within 1% of the target.
///
/// Gaussian and uniform noise are drawn and rescaled exactly. Poisson noise
/// follows `y^δ = Poisson(s · max(y, 0)) / s` with the count scale `s` found
/// by bisection; salt-and-pepper replaces entries by the global min or max
/// with the corruption probability chosen to hit the target.
pub fn add_noise<T: Real>(y: &Sinogram<T>, spec: &NoiseSpec) -> Result<Sinogram<T>> {
    if !(spec.target_delta.is_finite() && spec.target_delta > 0.0) {
        return invalid(format!("target delta must be positive, got {}", spec.target_delta));
    }
    if y.is_empty() {
        return invalid("empty sinogram");
    }
    let y64: Vec<f64> = y.values().iter().map(|v| v.as_f64()).collect();
    let mut rng = spec.seed.rng();
    let delta = spec.target_delta;
    let noisy: Vec<f64> = match spec.kind {
        NoiseKind::Gaussian | NoiseKind::Uniform => {
            let z: Vec<f64> = if spec.kind == NoiseKind::Gaussian {
                (0..y64.len()).map(|_| rng.sample(StandardNormal)).collect()
            } else {
                (0..y64.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let scale = delta / rms(&z);
            y64.iter().zip(&z).map(|(v, e)| v + scale * e).collect()
        }
        NoiseKind::Poisson => poisson_noise(&y64, delta, &mut rng)?,
        NoiseKind::SaltPepper => salt_pepper_noise(&y64, delta, &mut rng)?,
    };
    let out = y.with_values(noisy.into_iter().map(T::lit).collect())?;
    let measured = measured_delta(y, &out)?;
    if (measured - delta).abs() > NOISE_TOLERANCE * delta {
        return Err(Error::Calibration(format!("{} noise reached delta {measured} for target {delta}", spec.kind)));
    }
    Ok(out)
}

/// Poisson quantile of `u` at mean `lam` by summing the pmf.
fn poisson_quantile(lam: f64, u: f64) -> f64 {
    let mut p = (-lam).exp();
    let mut cdf = p;
    let mut k = 0.0;
    while cdf < u && k < 1e4 {
        k += 1.0;
        p *= lam / k;
        cdf += p;
    }
    k
}

/// Means above this use the normal approximation with continuity correction.
const POISSON_NORMAL_MEAN: f64 = 40.0;

/// Counts drawn by inversion from fixed per-entry random numbers, so the
/// perturbation varies almost continuously with the scale during bisection.
fn poisson_noise(y: &[f64], delta: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mean_pos = y.iter().map(|v| v.max(0.0)).sum::<f64>() / y.len() as f64;
    if !(mean_pos > 0.0) {
        return Err(Error::Calibration("poisson noise needs positive sinogram values".into()));
    }
    let draws: Vec<(f64, f64)> = (0..y.len()).map(|_| (rng.random::<f64>(), rng.sample(StandardNormal))).collect();
    let sample = |s: f64| -> Vec<f64> {
        y.iter()
            .zip(&draws)
            .map(|(&v, &(u, z))| {
                let lam = s * v.max(0.0);
                let k = if lam > POISSON_NORMAL_MEAN { (lam + lam.sqrt() * z + 0.5).floor().max(0.0) } else { poisson_quantile(lam, u) };
                k / s
            })
            .collect()
    };
    let delta_at = |s: f64| -> f64 {
        let n = sample(s);
        rms(&n.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>())
    };
    // δ(s) decreases roughly like s^{-1/2}
    let guess = mean_pos / (delta * delta);
    let (mut lo, mut hi) = (guess, guess);
    let mut tries = 0;
    while delta_at(lo) < delta {
        lo /= 4.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Calibration(format!("poisson noise cannot reach delta {delta}")));
        }
    }
    while delta_at(hi) > delta {
        hi *= 4.0;
        tries += 1;
        if tries > 120 {
            return Err(Error::Calibration(format!("poisson noise cannot get below delta {delta}")));
        }
    }
    let mut best = (f64::INFINITY, hi);
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        let d = delta_at(mid);
        if (d - delta).abs() < best.0 {
            best = ((d - delta).abs(), mid);
        }
        if (d - delta).abs() <= 0.25 * NOISE_TOLERANCE * delta {
            break;
        }
        if d > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(sample(best.1))
}

/// Entries with `u_i < p` are replaced by the global min or max; the
/// resulting `δ(p)` is a step function, so `p` is taken at the step closest to
/// the target.
fn salt_pepper_noise(y: &[f64], delta: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let draws: Vec<(f64, bool)> = (0..y.len()).map(|_| (rng.random::<f64>(), rng.random_bool(0.5))).collect();
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| draws[a].0.total_cmp(&draws[b].0).then(a.cmp(&b)));
    let n = y.len() as f64;
    let target = delta * delta * n;
    let mut acc = 0.0;
    let mut count = None;
    for (k, &i) in order.iter().enumerate() {
        let v = if draws[i].1 { hi } else { lo };
        let next = acc + (v - y[i]).powi(2);
        if next >= target {
            count = Some(if (next - target) <= (target - acc) { k + 1 } else { k });
            break;
        }
        acc = next;
    }
    let Some(count) = count else {
        return Err(Error::Calibration(format!("salt and pepper noise saturates at delta {} below target {delta}", (acc / n).sqrt())));
    };
    let mut out = y.to_vec();
    for &i in &order[..count] {
        out[i] = if draws[i].1 { hi } else { lo };
    }
    Ok(out)
}

/// `F(y) = Σ_λ κ_λ⁻¹ φ_α(κ_λ, κ_λ ⟨FBP y, u_λ⟩) u_λ`.
pub fn reconstruct<T: Real>(y: &Sinogram<T>, f: &Filter, alpha: f64, ctx: &DfdContext) -> Result<Image<T>> {
    let c = haar_analysis(&fbp(y, &ctx.geometry)?, ctx.levels)?;
    Ok(haar_synthesis(&filter_coefficients(f, alpha, &ctx.kappas, &c)?))
}

/// Least-squares slope with a bootstrap confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Least-squares fit of `y = a + b x`; returns `(b, a)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("linear fit needs at least two paired points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("linear fit needs distinct abscissae");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Ok((b, my - b * mx))
}

/// Slope of `log mean_t(values[k][t])` against `log deltas[k]`, with a 95%
/// percentile interval from resampling the trials.
pub fn bootstrap_slope(deltas: &[f64], values: &[Vec<f64>], resamples: usize, seed: RngSeed) -> Result<SlopeFit> {
    if deltas.len() != values.len() {
        return invalid("one value row per delta required");
    }
    let trials = values.first().map_or(0, |v| v.len());
    if trials == 0 || values.iter().any(|v| v.len() != trials) {
        return invalid("every delta needs the same positive number of trials");
    }
    let lx: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let fit = |pick: &[usize]| -> Result<(f64, f64)> {
        let ly: Vec<f64> = values.iter().map(|v| (pick.iter().map(|&t| v[t]).sum::<f64>() / pick.len() as f64).ln()).collect();
        linear_fit(&lx, &ly)
    };
    let all: Vec<usize> = (0..trials).collect();
    let (slope, intercept) = fit(&all)?;
    let mut rng = seed.rng();
    let mut slopes = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let pick: Vec<usize> = (0..trials).map(|_| rng.random_range(0..trials)).collect();
        slopes.push(fit(&pick)?.0);
    }
    slopes.sort_by(f64::total_cmp);
    let (ci_low, ci_high) = if slopes.is_empty() {
        (slope, slope)
    } else {
        let at = |q: f64| slopes[((slopes.len() - 1) as f64 * q).round() as usize];
        (at(0.025), at(0.975))
    };
    Ok(SlopeFit { slope, intercept, ci_low, ci_high })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return invalid("spearman needs at least two paired values");
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// One δ of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub delta: f64,
    pub measured_delta: f64,
    pub alpha: f64,
    pub mse_fbp: f64,
    pub mse_filtered: f64,
    /// Mean `‖x − x⁺‖²` (convergence studies).
    pub sq_error: f64,
    pub bregman_distance: f64,
    /// `δ²/(2α) + Cδ + C²α` with `C = 1`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub label: String,
    /// Ordered by descending δ.
    pub rows: Vec<ExperimentRow>,
    /// Log-log slope of the Bregman distance against δ.
    pub fit: Option<SlopeFit>,
}

impl ExperimentRecord {
    pub fn csv_header() -> &'static str {
        "label,delta,measured_delta,alpha,mse_fbp,mse_filtered,sq_error,bregman_distance,bound"
    }

    pub fn csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                self.label, r.delta, r.measured_delta, r.alpha, r.mse_fbp, r.mse_filtered, r.sq_error, r.bregman_distance, r.bound
            );
        }
        s
    }
}

/// All records as one CSV document (header, LF line endings).
pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from(ExperimentRecord::csv_header());
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_rows());
    }
    s
}

/// The table layout: one line per (kind, δ) with the two MSE columns.
pub fn mse_table_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from("noise,delta,mse_fbp,mse_learned\n");
    for rec in records {
        for r in &rec.rows {
            let _ = writeln!(s, "{},{},{},{}", rec.label, r.delta, r.mse_fbp, r.mse_filtered);
        }
    }
    s
}

pub fn write_csv(text: &str, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn sorted_descending(deltas: &[f64]) -> Vec<f64> {
    let mut d = deltas.to_vec();
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Mean MSE of FBP and of the learned reconstruction per (kind, δ) over the
/// test phantoms. `params[(kind, δ)]` supplies the filter (with `α = δ`);
/// at `δ = 0` a missing entry falls back to the identity filter. Cell
/// `(k, d, j)` draws its noise from `seed.derive` of its flat index.
pub fn run_mse_table(
    phantoms: &[Image<f64>],
    kinds: &[NoiseKind],
    deltas: &[f64],
    params: &BTreeMap<(NoiseKind, u64), MonotoneFilterParams>,
    ctx: &DfdContext,
    seed: RngSeed,
) -> Result<Vec<ExperimentRecord>> {
    if phantoms.is_empty() {
        return invalid("no test phantoms");
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return invalid("noise levels must be non-negative");
    }
    let deltas = sorted_descending(deltas);
    let mut filters = Vec::new();
    for &kind in kinds {
        for &d in &deltas {
            let f = match params.get(&(kind, d.to_bits())) {
                Some(p) => filter_from_learned(p.clone()),
                None if d == 0.0 => Filter::Identity,
                None => return Err(Error::Configuration(format!("no trained filter for {kind} noise at delta {d}"))),
            };
            filters.push(f);
        }
    }
    let clean: Vec<Sinogram<f64>> = phantoms.par_iter().map(|x| radon_forward(x, &ctx.geometry)).collect::<Result<_>>()?;
    let nd = deltas.len();
    let np = phantoms.len();
    let cells: Vec<(usize, usize, usize)> =
        (0..kinds.len()).flat_map(|k| (0..nd).flat_map(move |d| (0..np).map(move |j| (k, d, j)))).collect();
    let results: Vec<(f64, f64, f64)> = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(k, d, j))| {
            let delta = deltas[d];
            let y = if delta > 0.0 {
                add_noise(&clean[j], &NoiseSpec { kind: kinds[k], target_delta: delta, seed: seed.derive(cell as u64) })?
            } else {
                clean[j].clone()
            };
            let measured = measured_delta(&clean[j], &y)?;
            let xf = fbp(&y, &ctx.geometry)?;
            let alpha = if delta > 0.0 { delta } else { 1.0 };
            let xr = reconstruct(&y, &filters[k * nd + d], alpha, ctx)?;
            Ok((measured, mse(&xf, &phantoms[j])?, mse(&xr, &phantoms[j])?))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    for (k, kind) in kinds.iter().enumerate() {
        let rows = (0..nd)
            .map(|d| {
                let cell = &results[(k * nd + d) * np..(k * nd + d + 1) * np];
                let mean = |f: fn(&(f64, f64, f64)) -> f64| cell.iter().map(f).sum::<f64>() / np as f64;
                ExperimentRow {
                    delta: deltas[d],
                    measured_delta: mean(|c| c.0),
                    alpha: deltas[d],
                    mse_fbp: mean(|c| c.1),
                    mse_filtered: mean(|c| c.2),
                    sq_error: 0.0,
                    bregman_distance: 0.0,
                    bound: 0.0,
                }
            })
            .collect();
        records.push(ExperimentRecord { label: kind.name().to_string(), rows, fit: None });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaRule {
    /// `α = c δ`.
    Proportional,
    /// `α = c δ²`.
    Quadratic,
}

impl AlphaRule {
    pub fn alpha(self, c: f64, delta: f64) -> f64 {
        match self {
            AlphaRule::Proportional => c * delta,
            AlphaRule::Quadratic => c * delta * delta,
        }
    }
}

impl FromStr for AlphaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proportional" | "linear" => Ok(AlphaRule::Proportional),
            "quadratic" => Ok(AlphaRule::Quadratic),
            other => invalid(format!("unknown alpha rule {other:?}")),
        }
    }
}

/// Where the exact solution and the forward map come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StudyMode {
    /// Coefficient space with `κ_λ = λ^{-kappa_decay}` and
    /// `x⁺_λ = λ^{-solution_decay}`, `λ = 1..=n`. Data `y_λ = κ_λ x⁺_λ + ε_λ`
    /// with `‖ε‖₂ = δ`.
    Diagonal { n: usize, kappa_decay: f64, solution_decay: f64 },
    /// Radon data of a phantom with noise at rms level `δ`.
    Ct,
}

impl Default for StudyMode {
    fn default() -> Self {
        StudyMode::Diagonal { n: 2048, kappa_decay: 0.5, solution_decay: 1.5 }
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub deltas: Vec<f64>,
    pub alpha_rule: AlphaRule,
    pub c: f64,
    pub filter: Filter,
    pub neighbour: NeighbourSpec,
    pub trials: usize,
    pub seed: RngSeed,
    pub mode: StudyMode,
    pub bootstrap: usize,
}

impl ConvergenceConfig {
    /// `δ = 2^0 … 2^{-8}`, example cubic filter, `α = δ`, 16 trials.
    pub fn diagonal_default() -> Self {
        ConvergenceConfig {
            deltas: (0..=8).map(|k| 2f64.powi(-k)).collect(),
            alpha_rule: AlphaRule::Proportional,
            c: 1.0,
            filter: Filter::ExampleCubic,
            neighbour: NeighbourSpec { l: 1.0, alpha_tilde: 1.0, q_family: QFamily::NormQ },
            trials: 16,
            seed: RngSeed::default(),
            mode: StudyMode::default(),
            bootstrap: 1000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.deltas.len() < 2 {
            return invalid("need at least two noise levels");
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return invalid("noise levels must be positive");
        }
        if self.deltas.windows(2).any(|w| !(w[1] < w[0] * (1.0 - f64::EPSILON))) {
            return invalid("noise levels must be strictly decreasing");
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return invalid("alpha constant must be positive");
        }
        if self.trials == 0 {
            return invalid("need at least one trial");
        }
        Ok(())
    }
}

fn unit_direction(n: usize, seed: RngSeed) -> Vec<f64> {
    let mut rng = seed.rng();
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.into_iter().map(|v| v / norm).collect()
}

fn bound(delta: f64, alpha: f64) -> f64 {
    delta * delta / (2.0 * alpha) + delta + alpha
}

/// Per (δ, trial): `(measured δ, mse_fbp, mse_filtered, ‖x − x⁺‖², D_Q)`.
type TrialStats = (f64, f64, f64, f64, f64);

fn diagonal_trials(cfg: &ConvergenceConfig, n: usize, kappa_decay: f64, solution_decay: f64) -> Result<Vec<Vec<TrialStats>>> {
    if n == 0 {
        return invalid("diagonal mode needs at least one component");
    }
    let kappas: Vec<f64> = (1..=n).map(|l| (l as f64).powf(-kappa_decay)).collect();
    let exact: Vec<f64> = (1..=n).map(|l| (l as f64).powf(-solution_decay)).collect();
    let z: Vec<f64> = kappas.iter().zip(&exact).map(|(k, x)| k * x).collect();
    let nt = cfg.trials;
    let cells: Vec<(usize, usize)> = (0..cfg.deltas.len()).flat_map(|d| (0..nt).map(move |t| (d, t))).collect();
    let stats: Vec<TrialStats> = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(d, _))| {
            let delta = cfg.deltas[d];
            let alpha = cfg.alpha_rule.alpha(cfg.c, delta);
            let e = unit_direction(n, cfg.seed.derive(cell as u64));
            let mut x = vec![0.0; n];
            let mut naive = 0.0;
            for l in 0..n {
                let y = z[l] + delta * e[l];
                naive += (y / kappas[l] - exact[l]).powi(2);
                x[l] = eval_filter(&cfg.filter, alpha, kappas[l], y)? / kappas[l];
            }
            let sq: f64 = x.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum();
            let dq = bregman_distance_flat(&cfg.neighbour, &kappas, &x, &exact);
            Ok((delta, naive / n as f64, sq / n as f64, sq, dq))
        })
        .collect::<Result<_>>()?;
    Ok(stats.chunks(nt).map(|c| c.to_vec()).collect())
}

fn ct_trials(cfg: &ConvergenceConfig, ctx: &DfdContext, exact: &Image<f64>) -> Result<Vec<Vec<TrialStats>>> {
    let z = radon_forward(exact, &ctx.geometry)?;
    let wx = haar_analysis(exact, ctx.levels)?;
    let nt = cfg.trials;
    let cells: Vec<(usize, usize)> = (0..cfg.deltas.len()).flat_map(|d| (0..nt).map(move |t| (d, t))).collect();
    let stats: Vec<TrialStats> = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(d, _))| {
            let delta = cfg.deltas[d];
            let alpha = cfg.alpha_rule.alpha(cfg.c, delta);
            let y = add_noise(&z, &NoiseSpec { kind: NoiseKind::Gaussian, target_delta: delta, seed: cfg.seed.derive(cell as u64) })?;
            let xf = fbp(&y, &ctx.geometry)?;
            let xr = reconstruct(&y, &cfg.filter, alpha, ctx)?;
            let sq: f64 = xr.pixels().iter().zip(exact.pixels()).map(|(a, b)| (a - b).powi(2)).sum();
            let dq = bregman_distance(&cfg.neighbour, &ctx.kappas, &haar_analysis(&xr, ctx.levels)?, &wx)?;
            Ok((measured_delta(&z, &y)?, mse(&xf, exact)?, mse(&xr, exact)?, sq, dq))
        })
        .collect::<Result<_>>()?;
    Ok(stats.chunks(nt).map(|c| c.to_vec()).collect())
}

/// Reconstructs perturbed exact data for each δ and trial, records errors,
/// Bregman distances and the rate bound, and fits the log-log slope of the
/// mean Bregman distance against δ. CT mode needs `ct = Some((ctx, x⁺))`.
pub fn run_convergence_study(cfg: &ConvergenceConfig, ct: Option<(&DfdContext, &Image<f64>)>) -> Result<ExperimentRecord> {
    cfg.validate()?;
    let (label, per_delta) = match (&cfg.mode, ct) {
        (StudyMode::Diagonal { n, kappa_decay, solution_decay }, _) => {
            ("diagonal", diagonal_trials(cfg, *n, *kappa_decay, *solution_decay)?)
        }
        (StudyMode::Ct, Some((ctx, x))) => ("ct", ct_trials(cfg, ctx, x)?),
        (StudyMode::Ct, None) => return Err(Error::Configuration("ct mode needs a geometry and an exact image".into())),
    };
    let mut rows = Vec::new();
    for (d, trials) in cfg.deltas.iter().zip(&per_delta) {
        let m = |f: fn(&TrialStats) -> f64| trials.iter().map(f).sum::<f64>() / trials.len() as f64;
        let alpha = cfg.alpha_rule.alpha(cfg.c, *d);
        rows.push(ExperimentRow {
            delta: *d,
            measured_delta: m(|t| t.0),
            alpha,
            mse_fbp: m(|t| t.1),
            mse_filtered: m(|t| t.2),
            sq_error: m(|t| t.3),
            bregman_distance: m(|t| t.4),
            bound: bound(*d, alpha),
        });
    }
    let values: Vec<Vec<f64>> = per_delta.iter().map(|t| t.iter().map(|s| s.4).collect()).collect();
    let fit = if values.iter().all(|v| v.iter().all(|x| *x > 0.0)) {
        Some(bootstrap_slope(&cfg.deltas, &values, cfg.bootstrap, cfg.seed.derive(u64::MAX))?)
    } else {
        None
    };
    let rule = match cfg.alpha_rule {
        AlphaRule::Proportional => "proportional",
        AlphaRule::Quadratic => "quadratic",
    };
    Ok(ExperimentRecord { label: format!("{label}_{}_{rule}_c{}", cfg.filter.name(), cfg.c), rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AngleRange;
    use crate::phantom::{make_phantom, PhantomKind};
    use crate::radon::RadonGeometry;

    fn phantom_sinogram(size: usize, angles: usize) -> (Sinogram<f64>, RadonGeometry) {
        let g = RadonGeometry::with_defaults(size, angles).unwrap();
        let x: Image<f64> = make_phantom(PhantomKind::SheppLogan, size).unwrap();
        (radon_forward(&x, &g).unwrap(), g)
    }

    #[test]
    fn calibration_for_every_kind() {
        let (y, _) = phantom_sinogram(64, 96);
        for kind in NoiseKind::ALL {
            for delta in [1.0, 4.0] {
                let spec = NoiseSpec { kind, target_delta: delta, seed: RngSeed(11) };
                let a = add_noise(&y, &spec).unwrap();
                let d = measured_delta(&y, &a).unwrap();
                assert!((d - delta).abs() <= 0.01 * delta, "{kind} {delta}: {d}");
                assert_eq!(a, add_noise(&y, &spec).unwrap());
            }
        }
    }

    #[test]
    fn gaussian_std_matches_delta() {
        let (y, _) = phantom_sinogram(64, 128);
        let a = add_noise(&y, &NoiseSpec { kind: NoiseKind::Gaussian, target_delta: 8.0, seed: RngSeed(1) }).unwrap();
        let diff: Vec<f64> = a.values().iter().zip(y.values()).map(|(p, q)| p - q).collect();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        let std = (diff.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (diff.len() - 1) as f64).sqrt();
        assert!((std - 8.0).abs() < 0.03 * 8.0);
    }

    #[test]
    fn unreachable_targets() {
        let g = RadonGeometry::with_defaults(16, 8).unwrap();
        let zero = g.empty_sinogram::<f64>();
        let spec = NoiseSpec { kind: NoiseKind::SaltPepper, target_delta: 1.0, seed: RngSeed(0) };
        assert!(matches!(add_noise(&zero, &spec), Err(Error::Calibration(_))));
        let spec = NoiseSpec { kind: NoiseKind::Poisson, ..spec };
        assert!(matches!(add_noise(&zero, &spec), Err(Error::Calibration(_))));
        assert!(add_noise(&zero, &NoiseSpec { kind: NoiseKind::Gaussian, target_delta: 0.0, seed: RngSeed(0) }).is_err());
    }

    #[test]
    fn identity_reconstruction_is_fbp() {
        let (y, g) = phantom_sinogram(32, 48);
        let ctx = DfdContext::dyadic(g.clone(), 3, 1.0).unwrap();
        let a = reconstruct(&y, &Filter::Identity, 1.0, &ctx).unwrap();
        let b = fbp(&y, &g).unwrap();
        for (p, q) in a.pixels().iter().zip(b.pixels()) {
            assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn cubic_reconstruction_tends_to_fbp() {
        let (y, g) = phantom_sinogram(32, 48);
        let ctx = DfdContext::dyadic(g.clone(), 3, 1.0).unwrap();
        let b = fbp(&y, &g).unwrap();
        let dist: Vec<f64> = [1.0, 0.1, 0.01]
            .iter()
            .map(|&a| {
                let r = reconstruct(&y, &Filter::ExampleCubic, a, &ctx).unwrap();
                r.pixels().iter().zip(b.pixels()).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    }

    #[test]
    fn statistics_helpers() {
        let (b, a) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        assert!((b - 2.0).abs() < 1e-15 && (a - 1.0).abs() < 1e-15);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        let deltas = [1.0, 0.5, 0.25];
        let values: Vec<Vec<f64>> = deltas.iter().map(|d| vec![d * d, d * d]).collect();
        let fit = bootstrap_slope(&deltas, &values, 50, RngSeed(0)).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12 && fit.ci_low <= fit.slope && fit.slope <= fit.ci_high + 1e-12);
    }

    #[test]
    fn convergence_config_validation() {
        let mut cfg = ConvergenceConfig::diagonal_default();
        cfg.deltas = vec![0.5, 0.5, 0.5];
        assert!(matches!(run_convergence_study(&cfg, None), Err(Error::InvalidArgument(_))));
        cfg.deltas = vec![0.25, 0.5];
        assert!(run_convergence_study(&cfg, None).is_err());
    }

    #[test]
    fn small_diagonal_study() {
        let mut cfg = ConvergenceConfig::diagonal_default();
        cfg.mode = StudyMode::Diagonal { n: 256, kappa_decay: 0.5, solution_decay: 1.5 };
        cfg.trials = 4;
        cfg.bootstrap = 100;
        let rec = run_convergence_study(&cfg, None).unwrap();
        assert_eq!(rec.rows.len(), 9);
        assert!(rec.rows.windows(2).all(|w| w[0].delta > w[1].delta));
        assert!(rec.rows.last().unwrap().bregman_distance < rec.rows[0].bregman_distance);
        let again = run_convergence_study(&cfg, None).unwrap();
        assert_eq!(records_to_csv(&[rec]), records_to_csv(&[again]));
    }

    #[test]
    fn missing_params_name_the_gap() {
        let g = RadonGeometry::with_defaults(16, 8).unwrap();
        let ctx = DfdContext::dyadic(g, 2, 1.0).unwrap();
        let x: Image<f64> = make_phantom(PhantomKind::Disks, 16).unwrap();
        let err = run_mse_table(&[x], &[NoiseKind::Uniform], &[4.0], &BTreeMap::new(), &ctx, RngSeed(0)).unwrap_err();
        assert!(matches!(&err, Error::Configuration(m) if m.contains("uniform") && m.contains('4')), "{err}");
    }

    #[test]
    fn noiseless_row_equals_fbp_error() {
        let g = RadonGeometry::new(32, 64, 47, AngleRange::HalfTurn).unwrap();
        let ctx = DfdContext::dyadic(g, 3, 1.0).unwrap();
        let xs: Vec<Image<f64>> = (0..2).map(|i| crate::phantom::random_phantom(32, RngSeed(i)).unwrap()).collect();
        let recs = run_mse_table(&xs, &[NoiseKind::Gaussian], &[0.0], &BTreeMap::new(), &ctx, RngSeed(0)).unwrap();
        let r = &recs[0].rows[0];
        assert!((r.mse_fbp - r.mse_filtered).abs() <= 1e-12);
        assert_eq!(r.measured_delta, 0.0);
        assert!(mse_table_csv(&recs).starts_with("noise,delta,mse_fbp,mse_learned\ngaussian,0,"));
    }
}
