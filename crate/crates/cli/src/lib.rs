//! `dfdreg` command line: phantoms, projection, noise, FBP, training,
//! reconstruction, filter verification and the two experiments.
//!
//! Every subcommand accepts `--config <json>`: a flat JSON object whose keys
//! are option names (`snake_case` or `kebab-case`). Config values are applied
//! first, so flags given on the command line win.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use dfdreg::filters::{symmetric_grid, verify_filter, Filter, VerifyConfig};
use dfdreg::harness::{
    add_noise, measured_delta, mse_table_csv, records_to_csv, reconstruct, run_convergence_study, run_mse_table, write_csv,
    AlphaRule, ConvergenceConfig, NoiseKind, NoiseSpec, StudyMode,
};
use dfdreg::io::{read_image, read_json, read_sinogram, write_image, write_json, write_sinogram};
use dfdreg::learned::{build_training_pairs, filter_from_learned, load_params, save_params, train, MonotoneFilterParams, TrainConfig};
use dfdreg::{
    fbp, make_phantom, radon_forward, random_phantom, AngleRange, DfdContext, Error, Image, PhantomKind, QuasiSingularMap,
    RadonGeometry, RngSeed, Sinogram,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dfdreg", version, about = "Filtered diagonal frame decomposition for CT")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file, or output directory for the experiments.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with default option values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a test object (shepp_logan, disks, checker or random).
    Phantom(PhantomArgs),
    /// Forward Radon transform of an image.
    Project(ProjectArgs),
    /// Add calibrated noise to a sinogram.
    Noise(NoiseArgs),
    /// Filtered backprojection.
    Fbp(FbpArgs),
    /// Train a learned filter from a directory of images.
    Train(TrainArgs),
    /// Filtered DFD reconstruction with a learned or analytic filter.
    Reconstruct(ReconstructArgs),
    /// Check the regularizing-filter conditions and write a JSON report.
    VerifyFilter(VerifyArgs),
    /// Mean MSE of FBP and learned reconstructions per noise kind and level.
    MseTable(MseTableArgs),
    /// Convergence-rate study.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long, default_value = "shepp_logan")]
    kind: String,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ProjectArgs {
    #[arg(long)]
    image: PathBuf,
    /// Defaults to twice the image size.
    #[arg(long)]
    angles: Option<usize>,
    /// Odd detector count; defaults to covering the image diagonal at pixel spacing.
    #[arg(long)]
    offsets: Option<usize>,
    /// Angles over [0, 2π) instead of [0, π).
    #[arg(long)]
    full_turn: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    #[arg(long)]
    sinogram: PathBuf,
    #[arg(long, default_value = "gaussian")]
    kind: String,
    #[arg(long)]
    delta: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct FbpArgs {
    #[arg(long)]
    sinogram: PathBuf,
    /// Image size; inferred from the detector count when omitted.
    #[arg(long)]
    size: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory of `.fflt` or `.pgm` images, used in file-name order.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    delta: f64,
    #[arg(long, default_value = "gaussian")]
    noise: String,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    kappa0: f64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    knots: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    lr_decay: Option<f64>,
    /// Defaults to all images but the validation share.
    #[arg(long)]
    n_train: Option<usize>,
    /// Defaults to a fifth of the images (at least one).
    #[arg(long)]
    n_val: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[arg(long)]
    sinogram: PathBuf,
    /// Learned filter parameters; uses α = δ of the training run.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Analytic filter name, used when no parameters are given.
    #[arg(long, default_value = "example_cubic")]
    filter: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa0: f64,
    #[arg(long)]
    size: Option<usize>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value = "example_cubic")]
    filter: String,
    /// Learned filter parameters (overrides `--filter`).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Defaults to five dyadic values ending at 1, or the learned blocks.
    #[arg(long, value_delimiter = ',')]
    kappas: Vec<f64>,
    /// Half-width of the x grid; defaults to 8, or the learned data range.
    #[arg(long)]
    x_range: Option<f64>,
    /// Grid cells per half-axis.
    #[arg(long, default_value_t = 200)]
    points: usize,
    /// Report path (alternative to `--out`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct MseTableArgs {
    /// Learned parameter files; each carries its noise kind and δ.
    #[arg(long, value_delimiter = ',', required = true)]
    params: Vec<PathBuf>,
    #[arg(long, default_value_t = 20)]
    phantoms: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long)]
    angles: Option<usize>,
    /// Also report the noiseless row.
    #[arg(long)]
    include_zero: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ConvergenceArgs {
    #[arg(long, default_value = "diagonal")]
    mode: String,
    #[arg(long, default_value = "example_cubic")]
    filter: String,
    #[arg(long, default_value = "proportional")]
    rule: String,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 16)]
    trials: usize,
    /// Strictly decreasing; defaults to 2^0 … 2^-8.
    #[arg(long, value_delimiter = ',')]
    deltas: Vec<f64>,
    #[arg(long, default_value_t = 2048)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    kappa_decay: f64,
    #[arg(long, default_value_t = 1.5)]
    solution_decay: f64,
    /// CT mode image size.
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    angles: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    bootstrap: usize,
    #[command(flatten)]
    common: Common,
}

type CliResult<T> = std::result::Result<T, Error>;

fn usage_text() -> String {
    use clap::CommandFactory;
    Cli::command().render_help().to_string()
}

/// Inserts `--key value` pairs from the `--config` file for every option
/// not given explicitly.
fn expand_config(argv: &[String]) -> CliResult<Vec<String>> {
    let mut path = None;
    let mut i = 0;
    while i < argv.len() {
        if argv[i] == "--config" {
            path = argv.get(i + 1).cloned();
            i += 1;
        } else if let Some(p) = argv[i].strip_prefix("--config=") {
            path = Some(p.to_string());
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(argv.to_vec()) };
    let cfg: Value = read_json(&path)?;
    let Value::Object(map) = cfg else {
        return Err(Error::Format { offset: 0, message: format!("config {path} must be a JSON object") });
    };
    let mut injected = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}="))) {
            continue;
        }
        let text = match &value {
            Value::Bool(true) => {
                injected.push(flag);
                continue;
            }
            Value::Bool(false) | Value::Null => continue,
            Value::Number(n) => n.to_string(),
            Value::String(s) => s.clone(),
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => Ok(n.to_string()),
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(Error::Format { offset: 0, message: format!("config key {key:?}: list items must be scalars") }),
                })
                .collect::<CliResult<Vec<_>>>()?
                .join(","),
            Value::Object(_) => {
                return Err(Error::Format { offset: 0, message: format!("config key {key:?}: nested objects are not supported") })
            }
        };
        injected.push(flag);
        injected.push(text);
    }
    // argv[0] is the program, argv[1] the subcommand.
    let split = argv.len().min(2);
    let mut out = argv[..split].to_vec();
    out.extend(injected);
    out.extend_from_slice(&argv[split..]);
    Ok(out)
}

/// Runs the command line and returns the process exit code.
pub fn cli_main(argv: Vec<String>) -> i32 {
    let known = ["phantom", "project", "noise", "fbp", "train", "reconstruct", "verify-filter", "mse-table", "convergence"];
    if let Some(cmd) = argv.get(1) {
        if !cmd.starts_with('-') && !known.contains(&cmd.as_str()) && cmd != "help" {
            eprintln!("unknown subcommand '{cmd}'\n\n{}", usage_text());
            return EXIT_USAGE;
        }
    }
    let argv = match expand_config(&argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn require_out(common: &Common) -> CliResult<&Path> {
    common.out.as_deref().ok_or_else(|| Error::InvalidArgument("--out is required".into()))
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Error::InvalidArgument(format!("{what}: {e}")))
}

/// The image size whose default detector count is `n_offsets`.
fn infer_size(n_offsets: usize) -> CliResult<usize> {
    (3..=14)
        .map(|p| 1usize << p)
        .find(|&n| RadonGeometry::default_offsets(n) == n_offsets)
        .ok_or_else(|| Error::InvalidArgument(format!("cannot infer the image size from {n_offsets} offsets; pass --size")))
}

fn geometry_for(y: &Sinogram, size: Option<usize>) -> CliResult<RadonGeometry> {
    let size = match size {
        Some(s) => s,
        None => infer_size(y.n_offsets())?,
    };
    RadonGeometry::new(size, y.n_angles(), y.n_offsets(), y.angle_range())
}

fn default_angles(size: usize) -> usize {
    2 * size
}

/// Context matching the blocks of learned parameters.
fn learned_context(p: &MonotoneFilterParams, g: RadonGeometry) -> CliResult<DfdContext> {
    let kappas = p.kappas();
    let kappa0 = kappas.iter().copied().fold(0.0, f64::max);
    let ctx = DfdContext::dyadic(g, kappas.len(), kappa0)?;
    let expected = ctx.kappas.distinct();
    let same = expected.len() == kappas.len() && expected.iter().zip(&kappas).all(|(a, b)| (a - b).abs() <= 1e-12 * a.max(*b));
    if !same {
        return Err(Error::Configuration(format!("learned blocks {kappas:?} are not a dyadic quasi-singular ladder")));
    }
    Ok(ctx)
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Project(a) => cmd_project(a),
        Command::Noise(a) => cmd_noise(a),
        Command::Fbp(a) => cmd_fbp(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::VerifyFilter(a) => cmd_verify(a),
        Command::MseTable(a) => cmd_mse_table(a),
        Command::Convergence(a) => cmd_convergence(a),
    }
}

fn cmd_phantom(a: PhantomArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let x: Image = if a.kind == "random" {
        random_phantom(a.size, RngSeed(a.common.seed))?
    } else {
        make_phantom(parse::<PhantomKind>("--kind", &a.kind)?, a.size)?
    };
    ensure_parent(out)?;
    write_image(&x, out)
}

fn cmd_project(a: ProjectArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let x: Image = read_image(&a.image)?;
    let angles = a.angles.unwrap_or_else(|| default_angles(x.size()));
    let range = if a.full_turn { AngleRange::FullTurn } else { AngleRange::HalfTurn };
    let g = match a.offsets {
        Some(n) => RadonGeometry::new(x.size(), angles, n, range)?,
        None => {
            let d = RadonGeometry::with_defaults(x.size(), angles)?;
            RadonGeometry::new(x.size(), angles, d.n_offsets(), range)?
        }
    };
    ensure_parent(out)?;
    write_sinogram(&radon_forward(&x, &g)?, out)
}

fn cmd_noise(a: NoiseArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let y: Sinogram = read_sinogram(&a.sinogram)?;
    let spec = NoiseSpec { kind: parse("--kind", &a.kind)?, target_delta: a.delta, seed: RngSeed(a.common.seed) };
    let noisy = add_noise(&y, &spec)?;
    ensure_parent(out)?;
    write_sinogram(&noisy, out)?;
    println!("measured delta {}", measured_delta(&y, &noisy)?);
    Ok(())
}

fn cmd_fbp(a: FbpArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let y: Sinogram = read_sinogram(&a.sinogram)?;
    let g = geometry_for(&y, a.size)?;
    ensure_parent(out)?;
    write_image(&fbp(&y, &g)?, out)
}

fn read_image_dir(dir: &Path) -> CliResult<Vec<Image>> {
    let entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    let mut paths: Vec<PathBuf> = entries
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "fflt" || e == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!("no .fflt or .pgm images in {}", dir.display())));
    }
    paths.iter().map(read_image).collect()
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let images = read_image_dir(&a.images)?;
    let size = images[0].size();
    if images.iter().any(|x| x.size() != size) {
        return Err(Error::InvalidArgument("training images differ in size".into()));
    }
    let n = images.len();
    let n_val = a.n_val.unwrap_or((n / 5).max(1));
    let n_train = a.n_train.unwrap_or(n.saturating_sub(n_val));
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        delta: a.delta,
        noise_kind: parse("--noise", &a.noise)?,
        n_train,
        n_val,
        epochs: a.epochs.unwrap_or(d.epochs),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        lr_decay: a.lr_decay.unwrap_or(d.lr_decay),
        knots: a.knots.unwrap_or(d.knots),
        range: None,
        seed: RngSeed(a.common.seed),
    };
    let g = RadonGeometry::with_defaults(size, a.angles.unwrap_or_else(|| default_angles(size)))?;
    let ctx = DfdContext::dyadic(g, DfdContext::default_levels(size), a.kappa0)?;
    let pairs = build_training_pairs(&images, &cfg, &ctx)?;
    let (params, trace) = train(&pairs, &cfg)?;
    ensure_parent(out)?;
    save_params(&params, out)?;
    println!(
        "best epoch {} train loss {} validation loss {}",
        trace.best_epoch, trace.train[trace.best_epoch], trace.validation[trace.best_epoch]
    );
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let y: Sinogram = read_sinogram(&a.sinogram)?;
    let g = geometry_for(&y, a.size)?;
    let xr = match &a.params {
        Some(path) => {
            let p = load_params(path)?;
            let ctx = learned_context(&p, g)?;
            let alpha = if p.delta > 0.0 { p.delta } else { 1.0 };
            reconstruct(&y, &filter_from_learned(p), alpha, &ctx)?
        }
        None => {
            let ctx = DfdContext::dyadic(g.clone(), DfdContext::default_levels(g.image_size()), a.kappa0)?;
            reconstruct(&y, &parse::<Filter>("--filter", &a.filter)?, a.alpha, &ctx)?
        }
    };
    ensure_parent(out)?;
    write_image(&xr, out)
}

fn cmd_verify(a: VerifyArgs) -> CliResult<()> {
    let report_path = a
        .report
        .as_deref()
        .or(a.common.out.as_deref())
        .ok_or_else(|| Error::InvalidArgument("--report or --out is required".into()))?;
    let (filter, default_kappas, default_range, default_alphas) = match &a.params {
        Some(path) => {
            let p = load_params(path)?;
            let (k, r, d) = (p.kappas(), p.data_range(), p.delta);
            (filter_from_learned(p), k, r, vec![if d > 0.0 { d } else { 1.0 }])
        }
        None => (parse::<Filter>("--filter", &a.filter)?, QuasiSingularMap::dyadic(5, 1.0)?.distinct(), 8.0, vec![1.0]),
    };
    let alphas = if a.alphas.is_empty() { default_alphas } else { a.alphas };
    let kappas = if a.kappas.is_empty() { default_kappas } else { a.kappas };
    let xs = symmetric_grid(a.x_range.unwrap_or(default_range), a.points);
    let report = verify_filter(&filter, &VerifyConfig::new(alphas, kappas, xs))?;
    ensure_parent(report_path)?;
    write_json(&report, report_path)
}

fn cmd_mse_table(a: MseTableArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let mut params = BTreeMap::new();
    let mut kinds = Vec::new();
    let mut deltas = Vec::new();
    for path in &a.params {
        let p = load_params(path)?;
        if !kinds.contains(&p.noise_kind) {
            kinds.push(p.noise_kind);
        }
        if !deltas.contains(&p.delta) {
            deltas.push(p.delta);
        }
        params.insert((p.noise_kind, p.delta.to_bits()), p);
    }
    if a.include_zero && !deltas.contains(&0.0) {
        deltas.push(0.0);
    }
    kinds.sort_by_key(|k| NoiseKind::ALL.iter().position(|x| x == k));
    let first = params.values().next().expect("at least one params file");
    let g = RadonGeometry::with_defaults(a.size, a.angles.unwrap_or_else(|| default_angles(a.size)))?;
    let ctx = learned_context(first, g)?;
    let phantoms: Vec<Image> =
        (0..a.phantoms as u64).map(|i| random_phantom(a.size, RngSeed(a.common.seed).derive(1 << 32 | i))).collect::<Result<_, _>>()?;
    let records = run_mse_table(&phantoms, &kinds, &deltas, &params, &ctx, RngSeed(a.common.seed))?;
    std::fs::create_dir_all(out)?;
    write_csv(&mse_table_csv(&records), out.join("mse_table.csv"))?;
    write_csv(&records_to_csv(&records), out.join("records.csv"))?;
    print!("{}", mse_table_csv(&records));
    Ok(())
}

fn cmd_convergence(a: ConvergenceArgs) -> CliResult<()> {
    let out = require_out(&a.common)?;
    let d = ConvergenceConfig::diagonal_default();
    let mode = match a.mode.as_str() {
        "diagonal" => StudyMode::Diagonal { n: a.n, kappa_decay: a.kappa_decay, solution_decay: a.solution_decay },
        "ct" => StudyMode::Ct,
        other => return Err(Error::InvalidArgument(format!("unknown mode {other:?} (diagonal or ct)"))),
    };
    let cfg = ConvergenceConfig {
        deltas: if a.deltas.is_empty() { d.deltas } else { a.deltas },
        alpha_rule: parse::<AlphaRule>("--rule", &a.rule)?,
        c: a.c,
        filter: parse("--filter", &a.filter)?,
        trials: a.trials,
        seed: RngSeed(a.common.seed),
        mode,
        bootstrap: a.bootstrap,
        ..d
    };
    let record = if cfg.mode == StudyMode::Ct {
        let g = RadonGeometry::with_defaults(a.size, a.angles.unwrap_or_else(|| default_angles(a.size)))?;
        let ctx = DfdContext::dyadic(g, DfdContext::default_levels(a.size), 1.0)?;
        let x: Image = make_phantom(PhantomKind::SheppLogan, a.size)?;
        run_convergence_study(&cfg, Some((&ctx, &x)))?
    } else {
        run_convergence_study(&cfg, None)?
    };
    std::fs::create_dir_all(out)?;
    write_csv(&records_to_csv(std::slice::from_ref(&record)), out.join("convergence.csv"))?;
    write_json(&record, out.join("record.json"))?;
    if let Some(fit) = &record.fit {
        println!("slope {} (95% interval {} .. {})", fit.slope, fit.ci_low, fit.ci_high);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn config_expands_before_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"alphas": [4, 8], "x_range": 3.5, "full_turn": true, "skip": false, "points": 10}"#).unwrap();
        let c = cfg.to_str().unwrap();
        let out = expand_config(&argv(&["dfdreg", "verify-filter", "--config", c, "--points", "20"])).unwrap();
        assert_eq!(
            out,
            argv(&["dfdreg", "verify-filter", "--alphas", "4,8", "--full-turn", "--x-range", "3.5", "--config", c, "--points", "20"])
        );
        let plain = argv(&["dfdreg", "fbp"]);
        assert_eq!(expand_config(&plain).unwrap(), plain);
    }

    #[test]
    fn nested_config_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        std::fs::write(&cfg, r#"{"a": {"b": 1}}"#).unwrap();
        let err = expand_config(&argv(&["dfdreg", "fbp", "--config", cfg.to_str().unwrap()])).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn image_size_from_detector_count() {
        for n in [32, 128, 256] {
            let g = RadonGeometry::with_defaults(n, 4).unwrap();
            assert_eq!(infer_size(g.n_offsets()).unwrap(), n);
            assert_eq!(RadonGeometry::default_offsets(n), g.n_offsets());
        }
        assert!(infer_size(4).is_err());
    }
}
