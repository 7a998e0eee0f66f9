//! Learned strictly increasing filters: one piecewise-linear map per distinct κ.
//!
//! Each block has `K` knots and `K + 1` pieces whose slopes are `exp(raw)`,
//! so every map is continuous, strictly increasing and anchored at the
//! origin. The trained map `ψ(κ, ·)` acts on `⟨FBP y, u_λ⟩`; as a filter it
//! enters as `φ(κ, x) = κ ψ(κ, x / κ)`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dfd::DfdContext;
use crate::error::{invalid, Error, Result};
use crate::filters::Filter;
use crate::grid::{Image, Sinogram};
use crate::harness::{add_noise, NoiseKind, NoiseSpec};
use crate::radon::{fbp, radon_forward};
use crate::rng::RngSeed;
use crate::wavelet::{haar_analysis, Band, WaveletField};

/// Training keeps `raw ≥ ln 1e-6` so pieces stay visibly increasing in
/// floating point.
pub const MIN_RAW_SLOPE: f64 = -13.815510557964274;

/// One κ block of a learned filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleBlock {
    pub kappa: f64,
    pub knots: Vec<f64>,
    pub raw_slopes: Vec<f64>,
}

impl ScaleBlock {
    /// Identity map (`raw = 0`) with `k` uniform knots on `[-b, b]`.
    pub fn identity(kappa: f64, k: usize, b: f64) -> Result<Self> {
        if k < 2 {
            return invalid("need at least two knots");
        }
        if !(b.is_finite() && b > 0.0) {
            return invalid(format!("knot range must be positive, got {b}"));
        }
        let knots = (0..k).map(|i| -b + 2.0 * b * i as f64 / (k - 1) as f64).collect();
        Ok(ScaleBlock { kappa, knots, raw_slopes: vec![0.0; k + 1] })
    }

    fn validate(&self, index: usize) -> std::result::Result<(), String> {
        let name = format!("scale block {index} (kappa {})", self.kappa);
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(format!("{name}: kappa must be positive"));
        }
        if self.knots.len() < 2 {
            return Err(format!("{name}: need at least two knots"));
        }
        if self.raw_slopes.len() != self.knots.len() + 1 {
            return Err(format!(
                "{name}: expected {} raw slopes for {} knots, found {}",
                self.knots.len() + 1,
                self.knots.len(),
                self.raw_slopes.len()
            ));
        }
        if self.knots.iter().chain(&self.raw_slopes).any(|v| !v.is_finite()) {
            return Err(format!("{name}: non-finite parameter"));
        }
        if let Some(i) = self.knots.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(format!("{name}: knots not strictly increasing at index {}", i + 1));
        }
        Ok(())
    }
}

/// Precomputed evaluation tables of one block.
#[derive(Debug, Clone)]
struct Table {
    knots: Vec<f64>,
    slopes: Vec<f64>,
    /// `ψ` at each knot, accumulated outward from 0.
    values: Vec<f64>,
    /// Piece index containing 0 (pieces are `(-∞,k0], [k0,k1], …, [k_{K-1},∞)`).
    zero_piece: usize,
}

impl Table {
    fn new(b: &ScaleBlock) -> Self {
        Self::from_slopes(b.knots.clone(), b.raw_slopes.iter().map(|r| r.exp()).collect())
    }

    fn from_slopes(knots: Vec<f64>, slopes: Vec<f64>) -> Self {
        let zero_piece = piece_of(&knots, 0.0);
        let k = knots.len();
        let mut values = vec![0.0; k];
        // knots right of zero: indices zero_piece..k
        for i in zero_piece..k {
            let (from, base) = if i == zero_piece { (0.0, 0.0) } else { (knots[i - 1], values[i - 1]) };
            values[i] = base + slopes[i] * (knots[i] - from);
        }
        for i in (0..zero_piece).rev() {
            let (from, base) = if i + 1 == zero_piece { (0.0, 0.0) } else { (knots[i + 1], values[i + 1]) };
            values[i] = base - slopes[i + 1] * (from - knots[i]);
        }
        Table { knots, slopes, values, zero_piece }
    }

    /// Inner endpoint (toward 0) of piece `p` and `ψ` there.
    fn inner(&self, p: usize) -> (f64, f64) {
        if p == self.zero_piece {
            (0.0, 0.0)
        } else if p > self.zero_piece {
            (self.knots[p - 1], self.values[p - 1])
        } else {
            (self.knots[p], self.values[p])
        }
    }

    fn eval_in(&self, p: usize, x: f64) -> f64 {
        let (a, v) = self.inner(p);
        v + self.slopes[p] * (x - a)
    }

    fn eval(&self, x: f64) -> f64 {
        self.eval_in(piece_of(&self.knots, x), x)
    }
}

/// Index of the piece containing `x` (`x` on a knot goes to the piece nearer 0).
fn piece_of(knots: &[f64], x: f64) -> usize {
    let p = knots.partition_point(|&k| k < x);
    if p < knots.len() && knots[p] == x && x < 0.0 {
        p + 1
    } else {
        p
    }
}

/// Parameters of a learned filter family, one block per distinct κ in
/// increasing κ order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct MonotoneFilterParams {
    scales: Vec<ScaleBlock>,
    /// Noise level the filter was trained for; used as its `α`.
    pub delta: f64,
    pub noise_kind: NoiseKind,
    pub seed: RngSeed,
    tables: Vec<Table>,
}

impl PartialEq for MonotoneFilterParams {
    fn eq(&self, other: &Self) -> bool {
        self.scales == other.scales && self.delta == other.delta && self.noise_kind == other.noise_kind && self.seed == other.seed
    }
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    scales: Vec<ScaleBlock>,
    delta: f64,
    noise_kind: NoiseKind,
    seed: RngSeed,
}

impl TryFrom<RawParams> for MonotoneFilterParams {
    type Error = String;

    fn try_from(r: RawParams) -> std::result::Result<Self, String> {
        MonotoneFilterParams::new(r.scales, r.delta, r.noise_kind, r.seed).map_err(|e| e.to_string())
    }
}

impl From<MonotoneFilterParams> for RawParams {
    fn from(p: MonotoneFilterParams) -> Self {
        RawParams { scales: p.scales, delta: p.delta, noise_kind: p.noise_kind, seed: p.seed }
    }
}

impl MonotoneFilterParams {
    pub fn new(scales: Vec<ScaleBlock>, delta: f64, noise_kind: NoiseKind, seed: RngSeed) -> Result<Self> {
        if scales.is_empty() {
            return invalid("need at least one scale block");
        }
        for (i, b) in scales.iter().enumerate() {
            b.validate(i).map_err(Error::InvalidArgument)?;
        }
        if scales.windows(2).any(|w| !(w[0].kappa < w[1].kappa)) {
            return invalid("scale blocks must have distinct kappas in increasing order");
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return invalid(format!("delta must be non-negative, got {delta}"));
        }
        let tables = scales.iter().map(Table::new).collect();
        Ok(MonotoneFilterParams { scales, delta, noise_kind, seed, tables })
    }

    /// Identity maps for every κ of the context, with a common knot range.
    pub fn identity(ctx: &DfdContext, knots: usize, range: f64) -> Result<Self> {
        let scales = ctx.kappas.distinct().into_iter().map(|k| ScaleBlock::identity(k, knots, range)).collect::<Result<_>>()?;
        Self::new(scales, 0.0, NoiseKind::Gaussian, RngSeed::default())
    }

    pub fn scales(&self) -> &[ScaleBlock] {
        &self.scales
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.scales.iter().map(|b| b.kappa).collect()
    }

    /// Index of the block for `kappa` (relative match within 1e-12).
    pub fn block_index(&self, kappa: f64) -> Result<usize> {
        self.scales
            .iter()
            .position(|b| (b.kappa - kappa).abs() <= 1e-12 * kappa.abs().max(b.kappa))
            .ok_or_else(|| Error::InvalidArgument(format!("no learned block for kappa {kappa}")))
    }

    /// `ψ(κ, x)`.
    pub fn eval(&self, kappa: f64, x: f64) -> Result<f64> {
        Ok(self.tables[self.block_index(kappa)?].eval(x))
    }

    /// Largest `κ · max|knot|` over the blocks: the extent of the training
    /// inputs in filter coordinates.
    pub fn data_range(&self) -> f64 {
        self.scales.iter().map(|b| b.kappa * b.knots[0].abs().max(b.knots[b.knots.len() - 1].abs())).fold(0.0, f64::max)
    }

    /// Raw slopes of all blocks, flattened in block order.
    pub fn raw_vector(&self) -> Vec<f64> {
        self.scales.iter().flat_map(|b| b.raw_slopes.iter().copied()).collect()
    }

    /// Replaces the raw slopes of all blocks (flattened in block order).
    pub fn with_raw_vector(&self, raw: &[f64]) -> Result<Self> {
        let mut scales = self.scales.clone();
        let mut at = 0;
        for b in &mut scales {
            let n = b.raw_slopes.len();
            let chunk = raw.get(at..at + n).ok_or_else(|| Error::InvalidArgument("raw vector too short".into()))?;
            b.raw_slopes.copy_from_slice(chunk);
            at += n;
        }
        if at != raw.len() {
            return invalid("raw vector too long");
        }
        Self::new(scales, self.delta, self.noise_kind, self.seed)
    }
}

/// `ψ(κ, x)`; errors for a κ without a block.
pub fn eval_learned(params: &MonotoneFilterParams, kappa: f64, x: f64) -> Result<f64> {
    params.eval(kappa, x)
}

/// Wraps the parameters as the filter `φ(κ, x) = κ ψ(κ, x / κ)`.
pub fn filter_from_learned(params: MonotoneFilterParams) -> Filter {
    Filter::Learned(std::sync::Arc::new(params))
}

pub fn save_params(params: &MonotoneFilterParams, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_json(params, path)
}

/// Loads and validates parameters; invalid blocks are format errors naming the block.
pub fn load_params(path: impl AsRef<Path>) -> Result<MonotoneFilterParams> {
    let raw: RawParams = crate::io::read_json(path)?;
    for (i, b) in raw.scales.iter().enumerate() {
        b.validate(i).map_err(|message| Error::Format { offset: 0, message })?;
    }
    MonotoneFilterParams::new(raw.scales, raw.delta, raw.noise_kind, raw.seed)
        .map_err(|e| Error::Format { offset: 0, message: e.to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub delta: f64,
    pub noise_kind: NoiseKind,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub knots: usize,
    /// Knot half-width; `None` uses the 99.9th percentile of `|c|` per block.
    pub range: Option<f64>,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            delta: 8.0,
            noise_kind: NoiseKind::Gaussian,
            n_train: 32,
            n_val: 8,
            epochs: 100,
            learning_rate: 1.0,
            lr_decay: 0.995,
            knots: 63,
            range: None,
            seed: RngSeed::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return invalid(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return invalid("learning rate must be positive");
        }
        if self.knots < 2 {
            return invalid("need at least two knots");
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return invalid("delta must be non-negative");
        }
        if let Some(b) = self.range {
            if !(b.is_finite() && b > 0.0) {
                return invalid("knot range must be positive");
            }
        }
        Ok(())
    }
}

/// Inputs `c_λ = ⟨FBP y^δ, u_λ⟩` and targets `t_λ = ⟨x, u_λ⟩` of one κ block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBlock {
    pub kappa: f64,
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

/// Coefficient pairs of `n_images` images grouped by κ block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPairs {
    pub n_images: usize,
    pub blocks: Vec<PairBlock>,
}

impl TrainingPairs {
    pub fn is_empty(&self) -> bool {
        self.blocks.iter().all(|b| b.inputs.is_empty())
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.inputs.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub train: TrainingPairs,
    pub validation: TrainingPairs,
}

/// Block index of a band: one block per level, the approximation shares the
/// coarsest level's κ.
fn block_of(band: Band, levels: usize) -> usize {
    match band {
        Band::Approx => levels - 1,
        Band::Detail { level, .. } => level - 1,
    }
}

fn image_pairs(x: &Image<f64>, y: &Sinogram<f64>, ctx: &DfdContext, delta: f64, kind: NoiseKind, seed: RngSeed) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let noisy;
    let y = if delta > 0.0 {
        noisy = add_noise(y, &NoiseSpec { kind, target_delta: delta, seed })?;
        &noisy
    } else {
        y
    };
    let c = haar_analysis(&fbp(y, &ctx.geometry)?, ctx.levels)?;
    let t = haar_analysis(x, ctx.levels)?;
    Ok(split_blocks(&c, &t, ctx.levels))
}

fn split_blocks(c: &WaveletField<f64>, t: &WaveletField<f64>, levels: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = vec![(Vec::new(), Vec::new()); levels];
    for band in c.bands() {
        let b = &mut out[block_of(band, levels)];
        b.0.extend_from_slice(c.band(band));
        b.1.extend_from_slice(t.band(band));
    }
    out
}

fn collect_pairs(images: &[Image<f64>], clean: &[Sinogram<f64>], first_index: usize, cfg: &TrainConfig, ctx: &DfdContext) -> Result<TrainingPairs> {
    let per_image: Vec<_> = images
        .par_iter()
        .zip(clean)
        .enumerate()
        .map(|(i, (x, y))| image_pairs(x, y, ctx, cfg.delta, cfg.noise_kind, cfg.seed.derive((first_index + i) as u64)))
        .collect::<Result<_>>()?;
    let kappas = ctx.kappas.distinct();
    let mut blocks: Vec<PairBlock> =
        kappas.iter().map(|&kappa| PairBlock { kappa, inputs: Vec::new(), targets: Vec::new() }).collect();
    for img in per_image {
        for (b, (c, t)) in blocks.iter_mut().zip(img) {
            b.inputs.extend(c);
            b.targets.extend(t);
        }
    }
    Ok(TrainingPairs { n_images: images.len(), blocks })
}

/// Builds training pairs from the first `n_train` images and validation pairs
/// from the last `n_val`. Image `i` draws its noise from `seed.derive(i)`.
pub fn build_training_pairs(images: &[Image<f64>], cfg: &TrainConfig, ctx: &DfdContext) -> Result<PairSet> {
    if let Some(x) = images.iter().find(|x| x.size() != ctx.image_size()) {
        return invalid(format!("image of size {} does not match context size {}", x.size(), ctx.image_size()));
    }
    let clean: Vec<Sinogram<f64>> = images.par_iter().map(|x| radon_forward(x, &ctx.geometry)).collect::<Result<_>>()?;
    build_training_pairs_from(images, &clean, cfg, ctx)
}

/// [`build_training_pairs`] with the noiseless sinograms supplied, so one
/// projection serves several noise settings.
pub fn build_training_pairs_from(images: &[Image<f64>], clean: &[Sinogram<f64>], cfg: &TrainConfig, ctx: &DfdContext) -> Result<PairSet> {
    cfg.validate()?;
    if clean.len() != images.len() {
        return invalid("one sinogram per image required");
    }
    if clean.iter().any(|y| !ctx.geometry.matches(y)) {
        return invalid("sinogram does not match the context geometry");
    }
    if cfg.n_train + cfg.n_val > images.len() {
        return invalid(format!("need {} images, got {}", cfg.n_train + cfg.n_val, images.len()));
    }
    if let Some(x) = images.iter().find(|x| x.size() != ctx.image_size()) {
        return invalid(format!("image of size {} does not match context size {}", x.size(), ctx.image_size()));
    }
    if ctx.kappas.distinct().len() != ctx.levels {
        return invalid("learned filters need one distinct kappa per level");
    }
    let val_start = images.len() - cfg.n_val;
    Ok(PairSet {
        train: collect_pairs(&images[..cfg.n_train], &clean[..cfg.n_train], 0, cfg, ctx)?,
        validation: collect_pairs(&images[val_start..], &clean[val_start..], val_start, cfg, ctx)?,
    })
}

/// Pairs of one block bucketed by piece (knots stay fixed during training).
struct BlockData {
    piece: Vec<usize>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl BlockData {
    fn new(block: &PairBlock, knots: &[f64]) -> Self {
        let piece = block.inputs.iter().map(|&x| piece_of(knots, x)).collect();
        BlockData { piece, inputs: block.inputs.clone(), targets: block.targets.clone() }
    }

    /// Sum of squared residuals, its gradient w.r.t. the raw slopes and the
    /// Gauss-Newton diagonal.
    ///
    /// `∂ψ(x)/∂raw_q = s_q · ℓ_q(x)` with `ℓ_q(x)` the signed length of
    /// `[0, x] ∩ piece q`, so per-piece sums of residuals suffice.
    fn loss_grad(&self, table: &Table) -> (f64, Vec<f64>, Vec<f64>) {
        let np = table.slopes.len();
        let z = table.zero_piece;
        let k = &table.knots;
        let mut r = vec![0.0; np];
        let mut rx = vec![0.0; np];
        let mut n = vec![0.0; np];
        let mut x2 = vec![0.0; np];
        let mut loss = 0.0;
        for ((&p, &x), &t) in self.piece.iter().zip(&self.inputs).zip(&self.targets) {
            let (a, _) = table.inner(p);
            let e = table.eval_in(p, x) - t;
            loss += e * e;
            r[p] += 2.0 * e;
            rx[p] += 2.0 * e * (x - a);
            n[p] += 1.0;
            x2[p] += (x - a) * (x - a);
        }
        let mut grad: Vec<f64> = rx.clone();
        let mut diag: Vec<f64> = x2.clone();
        // right of zero: pieces beyond q have larger index
        let (mut rb, mut nb) = (0.0, 0.0);
        for q in (z..np).rev() {
            let len = if q == z {
                if z < k.len() { k[z] } else { 0.0 }
            } else if q + 1 < np {
                k[q] - k[q - 1]
            } else {
                0.0
            };
            grad[q] += len * rb;
            diag[q] += len * len * nb;
            if q > z {
                rb += r[q];
                nb += n[q];
            }
        }
        // left of zero: pieces beyond q have smaller index
        let (mut rb, mut nb) = (0.0, 0.0);
        for q in 0..=z {
            let len = if q == z {
                if z > 0 { k[z - 1] } else { 0.0 }
            } else if q > 0 {
                k[q - 1] - k[q]
            } else {
                0.0
            };
            grad[q] += len * rb;
            diag[q] += len * len * nb;
            if q < z {
                rb += r[q];
                nb += n[q];
            }
        }
        for q in 0..np {
            let s = table.slopes[q];
            grad[q] *= s;
            diag[q] *= 2.0 * s * s;
        }
        (loss, grad, diag)
    }

    /// One descent step along the curvature-scaled gradient `d = g / h`.
    ///
    /// The step length is `lr` times the minimizer of the Gauss-Newton model
    /// along `d`, halved until the loss does not increase.
    fn descend(&self, block: &ScaleBlock, table: &Table, loss: f64, g: &[f64], h: &[f64], lr: f64) -> ScaleBlock {
        let d: Vec<f64> = g.iter().zip(h).map(|(&g, &h)| if h > 0.0 { g / h } else { 0.0 }).collect();
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            return block.clone();
        }
        // directional derivative of ψ along d is piecewise linear with slopes s_q d_q
        let dir = Table::from_slopes(table.knots.clone(), table.slopes.iter().zip(&d).map(|(s, d)| s * d).collect());
        let curv: f64 = 2.0 * self.piece.iter().zip(&self.inputs).map(|(&p, &x)| dir.eval_in(p, x).powi(2)).sum::<f64>();
        let mut eta = lr * slope / curv;
        for _ in 0..40 {
            let mut next = block.clone();
            for (r, dq) in next.raw_slopes.iter_mut().zip(&d) {
                *r = (*r - eta * dq).max(MIN_RAW_SLOPE);
            }
            if next.raw_slopes.iter().all(|r| r.is_finite()) && self.loss(&Table::new(&next)) <= loss {
                return next;
            }
            eta *= 0.5;
        }
        block.clone()
    }

    fn loss(&self, table: &Table) -> f64 {
        self.piece
            .iter()
            .zip(&self.inputs)
            .zip(&self.targets)
            .map(|((&p, &x), &t)| (table.eval_in(p, x) - t).powi(2))
            .sum()
    }
}

fn check_pairs_match(params: &MonotoneFilterParams, pairs: &TrainingPairs) -> Result<()> {
    if pairs.blocks.len() != params.scales.len() {
        return invalid(format!("{} pair blocks for {} parameter blocks", pairs.blocks.len(), params.scales.len()));
    }
    for (b, s) in pairs.blocks.iter().zip(&params.scales) {
        if (b.kappa - s.kappa).abs() > 1e-12 * s.kappa {
            return invalid(format!("pair block kappa {} does not match parameter block {}", b.kappa, s.kappa));
        }
        if b.inputs.len() != b.targets.len() {
            return invalid("inputs and targets differ in length");
        }
    }
    Ok(())
}

/// `E(θ) = (1/N) Σ_i Σ_λ (t_λ − ψ(κ_λ, c_λ))²` and its gradient w.r.t. the
/// raw slopes (flattened in block order).
pub fn loss_and_gradient(params: &MonotoneFilterParams, pairs: &TrainingPairs) -> Result<(f64, Vec<f64>)> {
    check_pairs_match(params, pairs)?;
    let scale = 1.0 / pairs.n_images.max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::new();
    for (b, table) in pairs.blocks.iter().zip(&params.tables) {
        let (l, g, _) = BlockData::new(b, &table.knots).loss_grad(table);
        loss += l * scale;
        grad.extend(g.into_iter().map(|v| v * scale));
    }
    Ok((loss, grad))
}

/// `E(θ)` alone.
pub fn training_loss(params: &MonotoneFilterParams, pairs: &TrainingPairs) -> Result<f64> {
    check_pairs_match(params, pairs)?;
    let scale = 1.0 / pairs.n_images.max(1) as f64;
    Ok(pairs
        .blocks
        .iter()
        .zip(&params.tables)
        .map(|(b, table)| BlockData::new(b, &table.knots).loss(table) * scale)
        .sum())
}

/// Per-epoch losses of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    /// Training loss before each update (`epochs` entries) and after the last one.
    pub train: Vec<f64>,
    /// Validation loss at the same points (empty without validation pairs).
    pub validation: Vec<f64>,
    /// Index into the traces of the returned parameters.
    pub best_epoch: usize,
}

/// 99.9th percentile of `|c|`.
fn knot_range(inputs: &[f64]) -> f64 {
    if inputs.is_empty() {
        return 1.0;
    }
    let mut a: Vec<f64> = inputs.iter().map(|v| v.abs()).collect();
    a.sort_by(f64::total_cmp);
    let i = ((a.len() - 1) as f64 * 0.999).round() as usize;
    if a[i] > 0.0 { a[i] } else { 1.0 }
}

/// Identity-initialized parameters with knots fitted to the pairs.
pub fn initial_params(pairs: &TrainingPairs, cfg: &TrainConfig) -> Result<MonotoneFilterParams> {
    let scales = pairs
        .blocks
        .iter()
        .map(|b| ScaleBlock::identity(b.kappa, cfg.knots, cfg.range.unwrap_or_else(|| knot_range(&b.inputs))))
        .collect::<Result<_>>()?;
    MonotoneFilterParams::new(scales, cfg.delta, cfg.noise_kind, cfg.seed)
}

/// Minimizes `E` from the identity by full-batch gradient descent, each raw
/// slope scaled by its Gauss-Newton curvature and the step length set by a
/// line search on every block. Returns the parameters with the
/// lowest validation loss (training loss when there is no validation data).
pub fn train(pairs: &PairSet, cfg: &TrainConfig) -> Result<(MonotoneFilterParams, LossTrace)> {
    cfg.validate()?;
    if pairs.train.is_empty() {
        return invalid("no training pairs");
    }
    let init = initial_params(&pairs.train, cfg)?;
    train_from(init, pairs, cfg)
}

/// [`train`] from given starting parameters (knots are kept).
pub fn train_from(init: MonotoneFilterParams, pairs: &PairSet, cfg: &TrainConfig) -> Result<(MonotoneFilterParams, LossTrace)> {
    cfg.validate()?;
    check_pairs_match(&init, &pairs.train)?;
    let has_val = !pairs.validation.is_empty();
    if has_val {
        check_pairs_match(&init, &pairs.validation)?;
    }
    let data: Vec<BlockData> = pairs.train.blocks.iter().zip(&init.scales).map(|(b, s)| BlockData::new(b, &s.knots)).collect();
    let val: Vec<BlockData> = if has_val {
        pairs.validation.blocks.iter().zip(&init.scales).map(|(b, s)| BlockData::new(b, &s.knots)).collect()
    } else {
        Vec::new()
    };
    let train_scale = 1.0 / pairs.train.n_images.max(1) as f64;
    let val_scale = 1.0 / pairs.validation.n_images.max(1) as f64;
    let mut params = init;
    let mut trace = LossTrace { train: Vec::new(), validation: Vec::new(), best_epoch: 0 };
    let mut best = (f64::INFINITY, params.clone());
    let mut lr = cfg.learning_rate;
    for epoch in 0..=cfg.epochs {
        let steps: Vec<(f64, Vec<f64>, Vec<f64>)> =
            data.par_iter().zip(&params.tables).map(|(d, t)| d.loss_grad(t)).collect();
        let loss: f64 = steps.iter().map(|s| s.0).sum::<f64>() * train_scale;
        if !loss.is_finite() {
            return Err(Error::Training { epoch, message: format!("training loss became {loss}") });
        }
        trace.train.push(loss);
        let score = if has_val {
            let v: f64 = val.iter().zip(&params.tables).map(|(d, t)| d.loss(t)).sum::<f64>() * val_scale;
            if !v.is_finite() {
                return Err(Error::Training { epoch, message: format!("validation loss became {v}") });
            }
            trace.validation.push(v);
            v
        } else {
            loss
        };
        if score < best.0 {
            best = (score, params.clone());
            trace.best_epoch = epoch;
        }
        if epoch == cfg.epochs {
            break;
        }
        let scales: Vec<ScaleBlock> = data
            .par_iter()
            .zip(&params.scales)
            .zip(&params.tables)
            .zip(&steps)
            .map(|(((d, block), table), (loss, g, h))| d.descend(block, table, *loss, g, h, lr))
            .collect();
        params = MonotoneFilterParams::new(scales, params.delta, params.noise_kind, params.seed)
            .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
        lr *= cfg.lr_decay;
    }
    Ok((best.1, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radon::RadonGeometry;
    use crate::grid::AngleRange;
    use crate::phantom::random_phantom;
    use rand::Rng;

    fn random_params(seed: u64, k: usize) -> MonotoneFilterParams {
        let mut rng = RngSeed(seed).rng();
        let scales = [0.5, 1.0]
            .iter()
            .map(|&kappa| {
                let mut b = ScaleBlock::identity(kappa, k, 3.0).unwrap();
                for r in &mut b.raw_slopes {
                    *r = rng.random_range(-1.5..1.5);
                }
                b
            })
            .collect();
        MonotoneFilterParams::new(scales, 4.0, NoiseKind::Gaussian, RngSeed(seed)).unwrap()
    }

    fn synthetic_pairs(seed: u64, n: usize, f: impl Fn(f64) -> f64) -> TrainingPairs {
        let mut rng = RngSeed(seed).rng();
        let blocks = [0.5, 1.0]
            .iter()
            .map(|&kappa| {
                let inputs: Vec<f64> = (0..n).map(|_| rng.random_range(-3.5..3.5)).collect();
                let targets = inputs.iter().map(|&c| f(c)).collect();
                PairBlock { kappa, inputs, targets }
            })
            .collect();
        TrainingPairs { n_images: 4, blocks }
    }

    #[test]
    fn identity_and_anchor() {
        let p = MonotoneFilterParams::new(vec![ScaleBlock::identity(1.0, 9, 2.0).unwrap()], 1.0, NoiseKind::Gaussian, RngSeed(0)).unwrap();
        for x in [-7.0, -2.0, -0.3, 0.0, 0.25, 2.0, 11.0] {
            assert!((eval_learned(&p, 1.0, x).unwrap() - x).abs() < 1e-14);
        }
        let r = random_params(1, 8);
        assert_eq!(eval_learned(&r, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(eval_learned(&r, 1.0, 0.0).unwrap(), 0.0);
        assert!(matches!(eval_learned(&r, 0.7, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn random_params_are_strictly_increasing() {
        for seed in 0..5 {
            let p = random_params(seed, 10);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..2001 {
                let x = -6.0 + 12.0 * i as f64 / 2000.0;
                let v = p.eval(1.0, x).unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn continuity_at_knots() {
        let p = random_params(7, 12);
        for &k in &p.scales()[0].knots {
            let l = p.eval(0.5, k - 1e-12).unwrap();
            let r = p.eval(0.5, k + 1e-12).unwrap();
            assert!((l - r).abs() < 1e-10);
        }
    }

    #[test]
    fn filter_wrapping() {
        let p = MonotoneFilterParams::new(vec![ScaleBlock::identity(2.0, 5, 1.0).unwrap()], 1.0, NoiseKind::Gaussian, RngSeed(0)).unwrap();
        let f = filter_from_learned(p.clone());
        assert!((crate::filters::eval_filter(&f, 1.0f64, 2.0, 3.3).unwrap() - 3.3).abs() < 1e-14);
        let mut half = p.scales()[0].clone();
        half.raw_slopes.iter_mut().for_each(|r| *r = 0.5f64.ln());
        let f = filter_from_learned(MonotoneFilterParams::new(vec![half], 1.0, NoiseKind::Gaussian, RngSeed(0)).unwrap());
        assert!((crate::filters::eval_filter(&f, 1.0f64, 2.0, 3.0).unwrap() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = random_params(3, 8);
        let pairs = synthetic_pairs(4, 300, |c| 0.7 * c + 0.1 * c * c * c.signum());
        let (_, g) = loss_and_gradient(&p, &pairs).unwrap();
        let raw = p.raw_vector();
        let h = 1e-6;
        for i in 0..raw.len() {
            let mut plus = raw.clone();
            plus[i] += h;
            let mut minus = raw.clone();
            minus[i] -= h;
            let fp = training_loss(&p.with_raw_vector(&plus).unwrap(), &pairs).unwrap();
            let fm = training_loss(&p.with_raw_vector(&minus).unwrap(), &pairs).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn identity_target_is_a_fixed_point() {
        let pairs = synthetic_pairs(5, 400, |c| c);
        let set = PairSet { train: pairs.clone(), validation: pairs };
        let cfg = TrainConfig { epochs: 20, knots: 15, ..TrainConfig::default() };
        let (p, trace) = train(&set, &cfg).unwrap();
        assert!(trace.train.iter().all(|&l| l == trace.train[0]));
        assert!(p.raw_vector().iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn learns_the_halving_map() {
        let pairs = synthetic_pairs(6, 2000, |c| 0.5 * c);
        let set = PairSet { train: pairs.clone(), validation: pairs };
        let cfg = TrainConfig { epochs: 400, knots: 15, range: Some(3.0), lr_decay: 1.0, ..TrainConfig::default() };
        let (p, _) = train(&set, &cfg).unwrap();
        for i in 0..=70 {
            let x = -3.5 + 0.1 * i as f64;
            for k in [0.5, 1.0] {
                assert!((p.eval(k, x).unwrap() - 0.5 * x).abs() < 1e-3, "{k} {x}");
            }
        }
    }

    #[test]
    fn small_steps_descend() {
        let pairs = synthetic_pairs(8, 500, |c| c.signum() * (c.abs() - 0.5).max(0.0));
        let set = PairSet { train: pairs, validation: TrainingPairs { n_images: 0, blocks: Vec::new() } };
        let cfg = TrainConfig { epochs: 50, knots: 15, learning_rate: 1e-3, ..TrainConfig::default() };
        let (_, trace) = train(&set, &cfg).unwrap();
        assert!(trace.train.windows(2).all(|w| w[1] <= w[0]));
        assert!(trace.train.last().unwrap() < &trace.train[0]);
    }

    #[test]
    fn params_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = random_params(9, 20);
        save_params(&p, &path).unwrap();
        let q = load_params(&path).unwrap();
        let mut rng = RngSeed(10).rng();
        for _ in 0..1000 {
            let x = rng.random_range(-8.0..8.0);
            for k in [0.5, 1.0] {
                assert!((p.eval(k, x).unwrap() - q.eval(k, x).unwrap()).abs() < 1e-12);
            }
        }
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_params(&path), Err(Error::Format { offset: 0, .. })));
        let mut bad = p.clone();
        bad.scales[1].knots.swap(3, 4);
        let text = serde_json::to_string(&RawParams::from(bad)).unwrap();
        std::fs::write(&path, text).unwrap();
        match load_params(&path) {
            Err(Error::Format { message, .. }) => assert!(message.contains("scale block 1"), "{message}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pairs_from_images() {
        let g = RadonGeometry::new(16, 32, 25, AngleRange::HalfTurn).unwrap();
        let ctx = DfdContext::dyadic(g, 2, 1.0).unwrap();
        let images: Vec<Image<f64>> = (0..3).map(|i| random_phantom(16, RngSeed(i)).unwrap()).collect();
        let cfg = TrainConfig { delta: 0.5, n_train: 2, n_val: 1, ..TrainConfig::default() };
        let a = build_training_pairs(&images, &cfg, &ctx).unwrap();
        let b = build_training_pairs(&images, &cfg, &ctx).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.blocks.len(), 2);
        assert_eq!(a.train.len(), 2 * 256);
        assert_eq!(a.validation.len(), 256);
        // level 1 has 3·8² coefficients, level 2 has 3·4² plus the 4² approximation
        assert_eq!(a.train.blocks[0].inputs.len(), 2 * 192);
        assert_eq!(a.train.blocks[1].inputs.len(), 2 * 64);
        let none = build_training_pairs(&images, &TrainConfig { n_train: 0, n_val: 0, ..cfg }, &ctx).unwrap();
        assert!(none.train.is_empty() && none.validation.is_empty());
        assert!(build_training_pairs(&images, &TrainConfig { n_train: 3, n_val: 1, ..TrainConfig::default() }, &ctx).is_err());
    }

    #[test]
    fn loss_equals_image_space_error() {
        let g = RadonGeometry::new(16, 32, 25, AngleRange::HalfTurn).unwrap();
        let ctx = DfdContext::dyadic(g, 2, 1.0).unwrap();
        let images: Vec<Image<f64>> = (0..2).map(|i| random_phantom(16, RngSeed(20 + i)).unwrap()).collect();
        let cfg = TrainConfig { delta: 0.3, n_train: 2, n_val: 0, ..TrainConfig::default() };
        let pairs = build_training_pairs(&images, &cfg, &ctx).unwrap();
        let mut p = initial_params(&pairs.train, &TrainConfig { knots: 9, ..cfg.clone() }).unwrap();
        p = p.with_raw_vector(&p.raw_vector().iter().enumerate().map(|(i, _)| 0.1 * ((i % 5) as f64 - 2.0)).collect::<Vec<_>>()).unwrap();
        let e = training_loss(&p, &pairs.train).unwrap();
        // image-space form: reconstruct each image through ψ and compare
        let f = filter_from_learned(p.clone());
        let mut direct = 0.0;
        for (i, x) in images.iter().enumerate() {
            let y = radon_forward(x, &ctx.geometry).unwrap();
            let y = add_noise(&y, &NoiseSpec { kind: cfg.noise_kind, target_delta: cfg.delta, seed: cfg.seed.derive(i as u64) }).unwrap();
            let c = haar_analysis(&fbp(&y, &ctx.geometry).unwrap(), ctx.levels).unwrap();
            let w = crate::filters::filter_coefficients(&f, 1.0, &ctx.kappas, &c).unwrap();
            let xr = crate::wavelet::haar_synthesis(&w);
            direct += xr.pixels().iter().zip(x.pixels()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        direct /= images.len() as f64;
        assert!((e - direct).abs() <= 1e-10 * direct.max(1.0), "{e} vs {direct}");
    }
}
