//! The `finsler` command line: curvature tables, geodesics, distances and
//! the staged homothety verification.
//!
//! Exit codes: 0 when everything ran and every check passed, 1 when a
//! verification stage failed or a computation did not converge, 2 for
//! input errors (bad flags, malformed model files, invalid sites).

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::berwald::{connection_data, flatness_test, ConnectionData};
use crate::error::FinslerError;
use crate::geodesic::geodesic_ivp;
use crate::homothety::{verify_theorem, HomothetyMap, TheoremConfig, Verdict};
use crate::jets::PointedVector;
use crate::metricspace::{quasi_distance, DistanceOptions, DistanceReport};
use crate::models::{FinslerModel, ModelDescriptor};
use crate::ode::Tolerance;
use crate::sampling::seeded;

#[derive(Debug, Parser)]
#[command(name = "finsler", version, about = "Numerical Finsler geometry toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spray, connection and curvature components at sites.
    Curvature(CurvatureArgs),
    /// Integrate a geodesic and write the trajectory.
    Geodesic(GeodesicArgs),
    /// Forward distance between two points.
    Distance(DistanceArgs),
    /// Staged check that a homothety forces a flat Minkowski model.
    VerifyTheorem(TheoremArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ModelArgs {
    /// Built-in model name.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON model descriptor.
    #[arg(long)]
    pub model_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurvatureArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Site as `x1,x2,..:y1,y2,..`; repeatable. Sampled sites are used if none.
    #[arg(long, allow_hyphen_values = true)]
    pub site: Vec<String>,
    /// Number of sampled sites when no `--site` is given.
    #[arg(long, default_value_t = 5)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GeodesicArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Initial point and velocity as `x1,x2,..:v1,v2,..`.
    #[arg(long, allow_hyphen_values = true)]
    pub site: String,
    #[arg(long, default_value_t = 1.0)]
    pub t_end: f64,
    /// Relative integrator tolerance (absolute is a hundredth of it).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Start point `x1,x2,..`.
    #[arg(long, allow_hyphen_values = true)]
    pub from: String,
    /// End point `x1,x2,..`.
    #[arg(long, allow_hyphen_values = true)]
    pub to: String,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MapChoice {
    /// `x ↦ c + λ (x − c)`.
    Dilation,
    /// Dilation about the origin composed with swapping the first two axes.
    SwapDilation,
    /// `x ↦ x + s`.
    Translation,
    /// Rotation of the sphere in the stereographic chart.
    Rotation,
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub map: MapChoice,
    #[arg(long, default_value_t = 0.5)]
    pub lambda: f64,
    /// Centre of a dilation, `c1,c2,..`; the origin if omitted.
    #[arg(long, allow_hyphen_values = true)]
    pub center: Option<String>,
    /// Translation vector.
    #[arg(long, allow_hyphen_values = true)]
    pub shift: Option<String>,
    /// Rotation axis in R³.
    #[arg(long, allow_hyphen_values = true, default_value = "0,0,1")]
    pub axis: String,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.5)]
    pub angle: f64,
    /// Start of the fixed-point iteration; a seeded sample point if omitted.
    #[arg(long, allow_hyphen_values = true)]
    pub start: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Separation probed by the injectivity stage.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// A failed run with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<FinslerError> for CliError {
    fn from(e: FinslerError) -> Self {
        let code = match e {
            FinslerError::NoConvergence(_)
            | FinslerError::IntegratorUnderflow(_)
            | FinslerError::StepUnderflow(_)
            | FinslerError::ChartExit(_) => 1,
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        Self {
            code: 2,
            message: format!("i/o error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub fn parse_vector(text: &str) -> CliResult<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("cannot parse `{s}` as a number in `{text}`")))
        })
        .collect()
}

/// Parses `x1,x2,..:y1,y2,..`.
pub fn parse_site(text: &str) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (x, y) = text
        .split_once(':')
        .ok_or_else(|| CliError::input(format!("site `{text}` must have the form x1,x2:y1,y2")))?;
    Ok((parse_vector(x)?, parse_vector(y)?))
}

fn load_model(args: &ModelArgs) -> CliResult<FinslerModel> {
    match (&args.model, &args.model_file) {
        (Some(name), None) => Ok(FinslerModel::builtin(name)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
            Ok(ModelDescriptor::parse_model(&text)?)
        }
        _ => Err(CliError::input("give exactly one of --model, --model-file")),
    }
}

fn check_dim(model: &FinslerModel, v: &[f64], what: &str) -> CliResult<()> {
    if v.len() != model.dim {
        return Err(CliError::input(format!(
            "{what} has {} components, model `{}` has dimension {}",
            v.len(),
            model.name,
            model.dim
        )));
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn emit(output: &OutputArgs, text: &str) -> CliResult<()> {
    match &output.out {
        Some(path) => fs::write(path, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable report");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct SiteTower {
    x: Vec<f64>,
    y: Vec<f64>,
    #[serde(rename = "G")]
    spray: Vec<f64>,
    #[serde(rename = "N")]
    nonlinear: Vec<Vec<f64>>,
    #[serde(rename = "Gamma")]
    berwald: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    berwald_curvature: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "H")]
    affine_curvature: Vec<Vec<Vec<Vec<f64>>>>,
}

impl From<&ConnectionData> for SiteTower {
    fn from(c: &ConnectionData) -> Self {
        let n = c.dim();
        Self {
            x: c.site.x.clone(),
            y: c.site.y.clone(),
            spray: c.spray.clone(),
            nonlinear: (0..n).map(|i| (0..n).map(|j| c.nonlinear[(i, j)]).collect()).collect(),
            berwald: c.berwald.to_nested(),
            berwald_curvature: c.berwald_curvature.to_nested(),
            affine_curvature: c.affine_curvature.to_nested(),
        }
    }
}

#[derive(Serialize)]
struct CurvatureReport {
    model: String,
    sites: Vec<SiteTower>,
    flat: bool,
    flatness_residual: f64,
}

fn index_label(idx: &[usize]) -> String {
    idx.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(".")
}

fn curvature_csv(model: &FinslerModel, data: &[ConnectionData], flat: bool, residual: f64) -> String {
    let n = model.dim;
    let mut out = String::from("site,tensor,index,value\n");
    let mut row = |k: usize, name: &str, idx: &[usize], v: f64| {
        out.push_str(&format!("{k},{name},{},{}\n", index_label(idx), num(v)));
    };
    for (k, c) in data.iter().enumerate() {
        for i in 0..n {
            row(k, "x", &[i], c.site.x[i]);
        }
        for i in 0..n {
            row(k, "y", &[i], c.site.y[i]);
        }
        for i in 0..n {
            row(k, "G", &[i], c.spray[i]);
        }
        for i in 0..n {
            for j in 0..n {
                row(k, "N", &[i, j], c.nonlinear[(i, j)]);
            }
        }
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    row(k, "Gamma", &[i, j, l], c.berwald.get(i, j, l));
                }
            }
        }
        for (name, t) in [("B", &c.berwald_curvature), ("H", &c.affine_curvature)] {
            for i in 0..n {
                for j in 0..n {
                    for l in 0..n {
                        for m in 0..n {
                            row(k, name, &[i, j, l, m], t.get(i, j, l, m));
                        }
                    }
                }
            }
        }
    }
    out.push_str(&format!("all,flat,,{}\n", u8::from(flat)));
    out.push_str(&format!("all,flatness_residual,,{}\n", num(residual)));
    out
}

fn cmd_curvature(args: &CurvatureArgs) -> CliResult<i32> {
    let model = load_model(&args.model)?;
    let sites = if args.site.is_empty() {
        if args.samples == 0 {
            return Err(CliError::input("--samples must be positive"));
        }
        let mut rng = seeded(args.seed);
        (0..args.samples).map(|_| model.sample_site(&mut rng)).collect()
    } else {
        let mut v = Vec::with_capacity(args.site.len());
        for s in &args.site {
            let (x, y) = parse_site(s)?;
            check_dim(&model, &x, "site point")?;
            check_dim(&model, &y, "site direction")?;
            if !model.in_chart(&x) {
                return Err(CliError::input(format!("site point {x:?} is outside the chart")));
            }
            v.push(PointedVector::new(x, y)?);
        }
        v
    };
    let data = sites
        .iter()
        .map(|s| connection_data(&model, s))
        .collect::<crate::Result<Vec<_>>>()?;
    let flat = flatness_test(&model, &sites)?;
    let text = match args.format {
        Format::Csv => curvature_csv(&model, &data, flat.flat, flat.max_residual),
        Format::Json => json(&CurvatureReport {
            model: model.name.clone(),
            sites: data.iter().map(SiteTower::from).collect(),
            flat: flat.flat,
            flatness_residual: flat.max_residual,
        }),
    };
    emit(&args.output, &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct TrajectoryJson {
    model: String,
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    xdot: Vec<Vec<f64>>,
    drift: Vec<f64>,
    left_chart: bool,
}

fn cmd_geodesic(args: &GeodesicArgs) -> CliResult<i32> {
    let model = load_model(&args.model)?;
    let (p, v) = parse_site(&args.site)?;
    check_dim(&model, &p, "initial point")?;
    check_dim(&model, &v, "initial velocity")?;
    if !(args.t_end.is_finite() && args.t_end >= 0.0) {
        return Err(CliError::input("--t-end must be a non-negative number"));
    }
    let traj = geodesic_ivp(&model, &p, &v, args.t_end, Tolerance::new(args.tol)?)?;
    if traj.boundary_exit {
        log::warn!("trajectory left the chart at t = {}", traj.t_end());
    }
    let text = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            traj.write_csv(&model, &mut buf)?;
            String::from_utf8(buf).expect("ascii csv")
        }
        Format::Json => {
            let f = |k: usize| model.norm(traj.position(k), traj.velocity(k));
            json(&TrajectoryJson {
                model: model.name.clone(),
                t: traj.times().to_vec(),
                x: (0..traj.len()).map(|k| traj.position(k).to_vec()).collect(),
                xdot: (0..traj.len()).map(|k| traj.velocity(k).to_vec()).collect(),
                drift: (0..traj.len()).map(|k| (f(k) - f(0)).abs()).collect(),
                left_chart: traj.boundary_exit,
            })
        }
    };
    emit(&args.output, &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct DistanceJson {
    model: String,
    from: Vec<f64>,
    to: Vec<f64>,
    #[serde(flatten)]
    report: DistanceReport,
    shooting_failed: bool,
}

fn cmd_distance(args: &DistanceArgs) -> CliResult<i32> {
    let model = load_model(&args.model)?;
    let p = parse_vector(&args.from)?;
    let q = parse_vector(&args.to)?;
    check_dim(&model, &p, "--from")?;
    check_dim(&model, &q, "--to")?;
    let opts = DistanceOptions {
        tol: args.tol,
        ..DistanceOptions::default()
    };
    let d = quasi_distance(&model, &p, &q, &opts)?;
    let text = match args.format {
        Format::Json => json(&DistanceJson {
            model: model.name.clone(),
            from: p,
            to: q,
            report: d.report(),
            shooting_failed: d.shooting_failed,
        }),
        Format::Csv => {
            let method = serde_json::to_value(d.method).expect("method serialises");
            format!(
                "value,gap,method\n{},{},{}\n",
                num(d.value),
                num(d.gap),
                method.as_str().unwrap_or_default()
            )
        }
    };
    emit(&args.output, &text)?;
    Ok(0)
}

fn build_map(model: &FinslerModel, args: &TheoremArgs) -> CliResult<HomothetyMap> {
    let n = model.dim;
    let opt_vec = |s: &Option<String>, what: &str| -> CliResult<Option<Vec<f64>>> {
        match s {
            Some(t) => {
                let v = parse_vector(t)?;
                check_dim(model, &v, what)?;
                Ok(Some(v))
            }
            None => Ok(None),
        }
    };
    Ok(match args.map {
        MapChoice::Dilation => {
            let c = opt_vec(&args.center, "--center")?.unwrap_or_else(|| vec![0.0; n]);
            HomothetyMap::dilation(args.lambda, c)
        }
        MapChoice::SwapDilation => {
            if n < 2 {
                return Err(CliError::input("swap-dilation needs dimension at least 2"));
            }
            HomothetyMap::swap_dilation(args.lambda, n)
        }
        MapChoice::Translation => {
            let s = opt_vec(&args.shift, "--shift")?.ok_or_else(|| CliError::input("translation needs --shift"))?;
            HomothetyMap::translation(s)
        }
        MapChoice::Rotation => {
            if n != 2 {
                return Err(CliError::input("rotation acts on the two-dimensional sphere chart"));
            }
            let a = parse_vector(&args.axis)?;
            let axis: [f64; 3] = a
                .try_into()
                .map_err(|_| CliError::input("--axis needs three components"))?;
            HomothetyMap::sphere_rotation(axis, args.angle)?
        }
    })
}

fn cmd_verify_theorem(args: &TheoremArgs) -> CliResult<i32> {
    let model = load_model(&args.model)?;
    let map = build_map(&model, args)?;
    let start = match &args.start {
        Some(s) => {
            let v = parse_vector(s)?;
            check_dim(&model, &v, "--start")?;
            Some(v)
        }
        None => None,
    };
    if args.samples == 0 || !(args.delta > 0.0) {
        return Err(CliError::input("--samples and --delta must be positive"));
    }
    let config = TheoremConfig {
        samples: args.samples,
        seed: args.seed,
        delta: args.delta,
        start,
        ..TheoremConfig::default()
    };
    let report = verify_theorem(&model, &map, &config);
    emit(&args.output, &json(&report))?;
    Ok(match report.verdict {
        Verdict::Pass => 0,
        Verdict::Fail => 1,
        Verdict::Rejected => {
            eprintln!("finsler: {}", report.message.as_deref().unwrap_or("rejected"));
            2
        }
    })
}

/// Runs a parsed command and returns its exit code.
pub fn run(cli: &Cli) -> CliResult<i32> {
    match &cli.command {
        Command::Curvature(a) => cmd_curvature(a),
        Command::Geodesic(a) => cmd_geodesic(a),
        Command::Distance(a) => cmd_distance(a),
        Command::VerifyTheorem(a) => cmd_verify_theorem(a),
    }
}

/// Entry point of the binary: logging from `FINSLER_LOG`, argument
/// parsing, dispatch.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("FINSLER_LOG")).try_init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("finsler: {}", e.message);
            e.code
        }
    }
}
