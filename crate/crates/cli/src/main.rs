use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ccspace::freelift::{lift_system, verify_lift, LiftError};
use ccspace::grading::{nilpotentize, GradingError};
use ccspace::lab::{emit_report, run_experiment, ExperimentConfig, ExperimentKind, LabError, Verdict};
use ccspace::polyalg::{rational_to_f64, Rational};
use ccspace::quasimetric::{QuasimetricConfig, QuasimetricError, QuasimetricSpace};
use ccspace::spacefile::{catalog_system, parse_space, print_system, SpaceFileError};
use ccspace::structure::{
    adapted_frame, classify_point, filtration_dims, format_point, ClassifyConfig, StructureError, WeightedSystem,
};

/// Version of the `--json` output layout.
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "ccspace", version, about = "Workbench for weighted Carnot-Caratheodory spaces")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Space definition file.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Built-in fixture.
    #[arg(long)]
    catalog: Option<String>,
}

#[derive(Args)]
struct SpaceArgs {
    #[command(flatten)]
    source: Source,
    /// Anchor point, comma separated; defaults to the file's anchor.
    #[arg(long)]
    anchor: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Filtration dimensions and regularity at a point.
    Analyze {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        point: Option<String>,
        /// Radius of the probe ball.
        #[arg(long, default_value_t = 1e-2)]
        radius: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Adapted frame at a point.
    Frame {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        point: Option<String>,
    },
    /// Nilpotent approximation at the anchor.
    Nilpotentize {
        #[command(flatten)]
        space: SpaceArgs,
    },
    /// Free lift at the anchor, written as a space file.
    Lift {
        #[command(flatten)]
        space: SpaceArgs,
        /// Directory for `lifted.space`; stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quasidistance estimate between two points.
    Rho {
        #[command(flatten)]
        space: SpaceArgs,
        /// Give twice: source then target.
        #[arg(long, num_args = 1, required = true)]
        point: Vec<String>,
        /// Use the nilpotent approximation at the anchor.
        #[arg(long)]
        nilpotent: bool,
    },
    /// Convergence experiment with CSV and SVG output.
    Converge {
        #[arg(value_enum)]
        kind: Kind,
        #[command(flatten)]
        space: SpaceArgs,
        /// Decreasing scales, comma separated.
        #[arg(long)]
        eps_grid: Option<String>,
        /// Base points per scale.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Divergence,
    LocalApprox,
    Cone,
    Gromov,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Divergence => ExperimentKind::Divergence,
            Kind::LocalApprox => ExperimentKind::LocalApprox,
            Kind::Cone => ExperimentKind::ConeRescale,
            Kind::Gromov => ExperimentKind::Gromov,
        }
    }
}

enum Failure {
    Usage(String),
    Structural(String),
    Verdict,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Verdict => 1,
            Failure::Usage(_) => 2,
            Failure::Structural(_) => 3,
        }
    }
}

impl From<SpaceFileError> for Failure {
    fn from(e: SpaceFileError) -> Self {
        match e {
            SpaceFileError::Structure(_) => Failure::Structural(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<StructureError> for Failure {
    fn from(e: StructureError) -> Self {
        match e {
            StructureError::AnchorDimension { .. } | StructureError::NonFinitePoint(_) => Failure::Usage(e.to_string()),
            _ => Failure::Structural(e.to_string()),
        }
    }
}

impl From<GradingError> for Failure {
    fn from(e: GradingError) -> Self {
        match e {
            GradingError::Structure(s) => s.into(),
            GradingError::OutOfBox(_) | GradingError::BadDilation(_) => Failure::Usage(e.to_string()),
            _ => Failure::Structural(e.to_string()),
        }
    }
}

impl From<LiftError> for Failure {
    fn from(e: LiftError) -> Self {
        match e {
            LiftError::Grading(g) => g.into(),
            LiftError::Structure(s) => s.into(),
            _ => Failure::Structural(e.to_string()),
        }
    }
}

impl From<QuasimetricError> for Failure {
    fn from(e: QuasimetricError) -> Self {
        match e {
            QuasimetricError::Grading(g) => g.into(),
            QuasimetricError::DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Structural(e.to_string()),
        }
    }
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Grading(g) => g.into(),
            LabError::Quasimetric(q) => q.into(),
            LabError::Config(_) | LabError::Io { .. } => Failure::Usage(e.to_string()),
            LabError::EmptyReport => Failure::Structural(e.to_string()),
        }
    }
}

/// `a/b`, integers and plain decimals, all read exactly.
fn parse_rational(s: &str) -> Result<Rational, Failure> {
    let s = s.trim();
    let bad = || Failure::Usage(format!("invalid number `{s}`"));
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let text = match body.split_once('.') {
        Some((int, frac)) => {
            let digits = format!("{int}{frac}");
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            format!("{digits}/1{}", "0".repeat(frac.len()))
        }
        None => body.to_string(),
    };
    if text.starts_with(['-', '+']) {
        return Err(bad());
    }
    let q = Rational::from_str(&text).map_err(|_| bad())?;
    Ok(if neg { -q } else { q })
}

fn parse_point(s: &str, dim: usize) -> Result<Vec<Rational>, Failure> {
    let p = s.split(',').map(parse_rational).collect::<Result<Vec<_>, _>>()?;
    if p.len() != dim {
        return Err(Failure::Usage(format!("point `{s}` has {} coordinates, expected {dim}", p.len())));
    }
    Ok(p)
}

fn to_f64(p: &[Rational]) -> Vec<f64> {
    p.iter().map(rational_to_f64).collect()
}

fn load(args: &SpaceArgs) -> Result<WeightedSystem, Failure> {
    let sys = match (&args.source.space, &args.source.catalog) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            parse_space(&text).map_err(|e| match Failure::from(e) {
                Failure::Usage(m) => Failure::Usage(format!("{}:{m}", path.display())),
                f => f,
            })?
        }
        (None, Some(name)) => catalog_system(name)?,
        (None, None) => return Err(Failure::Usage("one of --space or --catalog is required".into())),
    };
    match &args.anchor {
        Some(a) => {
            let anchor = parse_point(a, sys.dim())?;
            Ok(sys.with_anchor(anchor)?)
        }
        None => Ok(sys),
    }
}

fn point_or_anchor(sys: &WeightedSystem, point: &Option<String>) -> Result<Vec<Rational>, Failure> {
    match point {
        Some(p) => parse_point(p, sys.dim()),
        None => Ok(sys.anchor().to_vec()),
    }
}

fn emit(json_mode: bool, command: &str, mut value: Value, text: String) {
    if json_mode {
        let obj = value.as_object_mut().expect("object");
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
        obj.insert("command".into(), json!(command));
        println!("{}", serde_json::to_string_pretty(&value).expect("serializable"));
    } else {
        print!("{text}");
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze {
            space,
            point,
            radius,
            samples,
        } => {
            let sys = load(&space)?;
            let p = point_or_anchor(&sys, &point)?;
            let snap = filtration_dims(&sys, &p)?;
            let cfg = ClassifyConfig {
                probe_radius: radius,
                probe_count: samples,
                seed: cli.seed,
                ..ClassifyConfig::default()
            };
            let reg = classify_point(&sys, &p, &cfg)?;
            let text = format!(
                "system: {}\npoint: {}\nweights: {:?}\ndepth: {}\ndims: {:?}\nregularity: {reg}\n",
                sys.name,
                format_point(&p),
                sys.weights(),
                sys.depth(),
                snap.dims
            );
            let value = json!({
                "system": sys.name,
                "point": format_point(&p),
                "weights": sys.weights(),
                "depth": sys.depth(),
                "dims": snap.dims,
                "regularity": reg.to_string(),
            });
            emit(cli.json, "analyze", value, text);
        }
        Command::Frame { space, point } => {
            let sys = load(&space)?;
            let p = point_or_anchor(&sys, &point)?;
            let frame = adapted_frame(&sys, &p)?;
            let mut text = format!("system: {}\npoint: {}\n", sys.name, format_point(&p));
            let mut rows = Vec::new();
            for (w, d) in frame.words.iter().zip(&frame.frame_weights) {
                let field = w.field.render();
                text.push_str(&format!("{}  weight {d}  {field}\n", w.label()));
                rows.push(json!({"word": w.label(), "weight": d, "field": field}));
            }
            if frame.tie_broken {
                text.push_str("note: tie broken by word order\n");
            }
            let value = json!({
                "system": sys.name,
                "point": format_point(&p),
                "frame": rows,
                "weight_sum": frame.weight_sum(),
                "tie_broken": frame.tie_broken,
            });
            emit(cli.json, "frame", value, text);
        }
        Command::Nilpotentize { space } => {
            let sys = load(&space)?;
            let na = nilpotentize(&sys, sys.anchor())?;
            let mut text = format!(
                "system: {}\nanchor: {}\ncoordinate weights: {:?}\nhat fields:\n",
                sys.name,
                format_point(sys.anchor()),
                na.weights()
            );
            let hats: Vec<String> = na.hat_system.generators().iter().map(|g| g.render()).collect();
            for (k, h) in hats.iter().enumerate() {
                text.push_str(&format!("  X{}^ = {h}\n", k + 1));
            }
            text.push_str("structure constants [Y_i, Y_j] = c Y_k:\n");
            let rows = na.constants.rows();
            for (i, j, k, c) in &rows {
                text.push_str(&format!("  {i} {j} {k} {c}\n"));
            }
            let inv = &na.invariants;
            text.push_str(&format!("invariants: {}\n", if inv.all() { "ok" } else { "violated" }));
            let value = json!({
                "system": sys.name,
                "anchor": format_point(sys.anchor()),
                "coordinate_weights": na.weights(),
                "hat_fields": hats,
                "structure_constants": rows.iter().map(|(i, j, k, c)| json!([i, j, k, c])).collect::<Vec<_>>(),
                "invariants": {
                    "homogeneity": inv.homogeneity,
                    "bracket_closure": inv.bracket_closure,
                    "vanishing_above_depth": inv.vanishing_above_depth,
                    "anchor_agreement": inv.anchor_agreement,
                    "jacobi": inv.jacobi,
                    "hat_words_are_brackets": inv.hat_words_are_brackets,
                },
            });
            emit(cli.json, "nilpotentize", value, text);
            if !inv.all() {
                return Err(Failure::Structural("nilpotent approximation invariants violated".into()));
            }
        }
        Command::Lift { space, out } => {
            let sys = load(&space)?;
            let ls = lift_system(&sys, sys.anchor())?;
            verify_lift(&ls)?;
            let file = print_system(&ls.lifted);
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
                    let path = dir.join("lifted.space");
                    std::fs::write(&path, &file).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
                    let text = format!("lifted {} to dimension {}: {}\n", sys.name, ls.dim(), path.display());
                    let value = json!({
                        "system": sys.name,
                        "base_dim": ls.base_dim(),
                        "dim": ls.dim(),
                        "coordinate_weights": ls.coordinate_weights,
                        "path": path.display().to_string(),
                    });
                    emit(cli.json, "lift", value, text);
                }
                None => {
                    let value = json!({
                        "system": sys.name,
                        "base_dim": ls.base_dim(),
                        "dim": ls.dim(),
                        "coordinate_weights": ls.coordinate_weights,
                        "space": file,
                    });
                    emit(cli.json, "lift", value, file.clone());
                }
            }
        }
        Command::Rho { space, point, nilpotent } => {
            let sys = load(&space)?;
            if point.len() != 2 {
                return Err(Failure::Usage("rho needs --point twice".into()));
            }
            let v = to_f64(&parse_point(&point[0], sys.dim())?);
            let w = to_f64(&parse_point(&point[1], sys.dim())?);
            let cfg = QuasimetricConfig {
                seed: cli.seed,
                ..QuasimetricConfig::default()
            };
            let est = if nilpotent {
                let na = nilpotentize(&sys, sys.anchor())?;
                let space = QuasimetricSpace::nilpotent(&na, &cfg)?;
                space.estimate(&na.chart.inverse(&v)?, &na.chart.inverse(&w)?)?
            } else {
                QuasimetricSpace::new(&sys, &cfg)?.estimate(&v, &w)?
            };
            let text = format!(
                "rho{}: {:.12e}\nstatus: {:?}\nresidual: {:.3e}\n",
                if nilpotent { "^u" } else { "" },
                est.value,
                est.status,
                est.endpoint_residual
            );
            let value = json!({
                "system": sys.name,
                "nilpotent": nilpotent,
                "value": est.value,
                "lower": est.lower,
                "controls": est.controls,
                "endpoint_residual": est.endpoint_residual,
                "status": format!("{:?}", est.status),
            });
            emit(cli.json, "rho", value, text);
        }
        Command::Converge {
            kind,
            space,
            eps_grid,
            samples,
            out,
        } => {
            let sys = load(&space)?;
            let mut cfg = ExperimentConfig {
                seed: cli.seed,
                ..ExperimentConfig::default()
            };
            if let Some(g) = eps_grid {
                cfg.eps_grid = g
                    .split(',')
                    .map(|e| e.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("invalid scale `{e}`"))))
                    .collect::<Result<_, _>>()?;
            }
            if let Some(n) = samples {
                cfg.anchors = n;
            }
            cfg.validate()?;
            let kind: ExperimentKind = kind.into();
            let report = run_experiment(kind, &sys, sys.anchor(), &cfg)?;
            std::fs::create_dir_all(&out).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
            let (csv, svg) = emit_report(&report, &out.join(kind.name()))?;
            let fit = report.fit.as_ref();
            let text = format!(
                "{} on {}: {}\nslope: {}  expected: {:.4}  threshold: {:.4}\ncsv: {}\nsvg: {}\n",
                kind.name(),
                sys.name,
                report.verdict,
                fit.map_or("none".to_string(), |f| format!("{:.4} (r2 {:.4})", f.slope, f.r_squared)),
                report.expected_exponent,
                report.threshold,
                csv.display(),
                svg.display()
            );
            let value = json!({
                "system": sys.name,
                "experiment": kind.name(),
                "seed": cfg.seed,
                "verdict": report.verdict.to_string(),
                "slope": fit.map(|f| f.slope),
                "r_squared": fit.map(|f| f.r_squared),
                "expected_exponent": report.expected_exponent,
                "threshold": report.threshold,
                "zero_signal": report.zero_signal,
                "rows": report.rows.iter().map(|r| json!({
                    "epsilon": r.epsilon,
                    "value": r.value,
                    "n_samples": r.n_samples,
                    "n_failures": r.n_failures,
                })).collect::<Vec<_>>(),
                "csv": csv.display().to_string(),
                "svg": svg.display().to_string(),
            });
            emit(cli.json, "converge", value, text);
            if report.verdict != Verdict::Pass {
                return Err(Failure::Verdict);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Structural(m) => eprintln!("structural defect: {m}"),
                Failure::Verdict => {}
            }
            ExitCode::from(f.code())
        }
    }
}
