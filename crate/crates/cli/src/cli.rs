//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdoe_core::cluster::ClusterMethod;
use gdoe_core::geometry::Aggregation;
use gdoe_core::design::NoiseConfig;
use gdoe_core::response::{Goal, ImportanceConfig, DEFAULT_CONFIDENCE};
use gdoe_core::{FactorSpec, GridSpec, LatentSpace, TrainingConfig};

use crate::error::{AppError, AppResult};
use crate::ops::{self, MapKind, DEFAULT_RESOLUTION};
use crate::project::{Project, INITIAL};

#[derive(Debug, Parser)]
#[command(name = "gdoe", version, about = "Generative design of experiments on a beta-VAE latent plane")]
pub struct Cli {
    /// Project file.
    #[arg(long, global = true, env = "GDOE_PROJECT", default_value = "gdoe.json")]
    pub project: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a project file.
    Init(InitArgs),
    /// Initial design commands.
    #[command(subcommand)]
    Design(DesignCommand),
    /// Train the latent model on the initial design.
    Train(TrainArgs),
    /// Latent and uniformed coordinates of every trial.
    Embed(EmbedArgs),
    /// Save a named grid.
    Grid(GridArgs),
    /// Cluster the embedded trials; centroids are saved as a grid.
    Cluster(ClusterArgs),
    /// Decode a saved grid into a design.
    Generate(GenerateArgs),
    /// Density, gradient or factor maps over the uniformed square.
    Maps(MapsArgs),
    /// Load replicated responses.
    Respond(RespondArgs),
    /// Interpolate responses and locate the optimum.
    Surface(SurfaceArgs),
    /// Permutation importance of each factor.
    Importance(ImportanceArgs),
    /// Write a design as CSV.
    Export(ExportArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Project file to create.
    pub file: PathBuf,
    /// JSON list of factor specifications; defaults to the nine-factor CNN space.
    #[arg(long, conflicts_with = "two_level")]
    pub factors: Option<PathBuf>,
    /// Use `F1..Fk` at levels −1/1 instead.
    #[arg(long, value_name = "K")]
    pub two_level: Option<usize>,
    /// Overwrite an existing file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum DesignCommand {
    /// Full factorial filtered by constraints.
    Build {
        #[arg(long = "constraint", value_name = "EXPR")]
        constraints: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 0.3)]
    pub beta: f64,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub dup_train: usize,
    #[arg(long, default_value_t = 30)]
    pub dup_test: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Standard deviation of Gaussian noise added to duplicated rows.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Print every Nth epoch.
    #[arg(long, default_value_t = 50)]
    pub report_every: usize,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Output path; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridType {
    Square,
    Polar,
    DoubleSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Space {
    Uniformed,
    Original,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub name: String,
    #[arg(long = "type", value_enum)]
    pub kind: GridType,
    #[arg(long, default_value_t = 8)]
    pub nx: usize,
    #[arg(long, default_value_t = 8)]
    pub ny: usize,
    #[arg(long, default_value_t = 2)]
    pub rings: usize,
    #[arg(long, default_value_t = 3)]
    pub angles: usize,
    #[arg(long, default_value_t = 0.5)]
    pub inner: f64,
    #[arg(long, default_value_t = 1.0)]
    pub outer: f64,
    /// Counterclockwise, in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub rotation: f64,
    /// Defaults to uniformed for square grids and original otherwise.
    #[arg(long, value_enum)]
    pub space: Option<Space>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Kmeans,
    Ward,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    #[arg(short = 'k')]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Name of the grid holding the centroids.
    #[arg(long, default_value = "clusters")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Saved grid to decode.
    #[arg(long)]
    pub grid: String,
    /// Snap decoded levels to the declared ones.
    #[arg(long)]
    pub snap: bool,
    /// Report violations and confounding as a warning only.
    #[arg(long)]
    pub allow_flagged: bool,
    /// Name of the saved design; defaults to the grid name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Agg {
    Sum,
    Max,
}

#[derive(Debug, Args)]
pub struct MapsArgs {
    #[arg(long, group = "kind")]
    pub density: bool,
    #[arg(long, group = "kind")]
    pub gradient: bool,
    /// Decoded level of one factor.
    #[arg(long, group = "kind", value_name = "NAME")]
    pub factor: Option<String>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub res: usize,
    #[arg(long, value_enum, default_value = "sum")]
    pub agg: Agg,
    /// Report border cells and low-gradient segments at this level.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Lattice CSV path; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct RespondArgs {
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    /// `initial` or a generated design name.
    #[arg(long, default_value = INITIAL)]
    pub design: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GoalArg {
    Max,
    Min,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    pub res: usize,
    #[arg(long, value_enum, default_value = "max")]
    pub goal: GoalArg,
    /// Optimum table CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Interpolated lattice CSV.
    #[arg(long)]
    pub map_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long, default_value_t = 10)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Generated design name; the initial design when omitted.
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long, default_value = "-")]
    pub out: String,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "GDOE_PORT", default_value_t = 8650)]
    pub port: u16,
    /// Interface to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

fn write_out(target: &str, text: &str) -> AppResult<()> {
    if target == "-" {
        std::io::stdout().write_all(text.as_bytes())?;
    } else {
        std::fs::write(target, text)?;
    }
    Ok(())
}

fn grid_spec(a: &GridArgs) -> GridSpec {
    let space = |default| match a.space {
        Some(Space::Uniformed) => LatentSpace::Uniformed,
        Some(Space::Original) => LatentSpace::Original,
        None => default,
    };
    match a.kind {
        GridType::Square => GridSpec::Square {
            nx: a.nx,
            ny: a.ny,
            rotation: a.rotation,
            space: space(LatentSpace::Uniformed),
        },
        GridType::Polar => GridSpec::Polar {
            rings: a.rings,
            angles: a.angles,
            rotation: a.rotation,
            space: space(LatentSpace::Original),
        },
        GridType::DoubleSquare => GridSpec::DoubleSquare {
            inner_radius: a.inner,
            outer_radius: a.outer,
            rotation: a.rotation,
            space: space(LatentSpace::Original),
        },
    }
}

fn init(a: &InitArgs) -> AppResult<()> {
    if a.file.exists() && !a.force {
        return Err(AppError::conflict(
            "project_exists",
            format!("{} already exists; pass --force to overwrite", a.file.display()),
        ));
    }
    let factors: Vec<FactorSpec> = match (&a.factors, a.two_level) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text)
                .map_err(|e| AppError::validation("bad_factors", format!("{}: {e}", path.display())))?
        }
        (None, Some(k)) => ops::two_level_factors(k)?,
        (None, None) => gdoe_core::synthetic::cnn_factors(),
    };
    let p = Project::new(factors)?;
    p.save(&a.file)?;
    println!("created {} with {} factors", a.file.display(), p.factors.len());
    Ok(())
}

/// Loads, mutates and saves the project.
fn with_project<R>(path: &Path, f: impl FnOnce(&mut Project) -> AppResult<R>) -> AppResult<R> {
    let mut p = Project::load(path)?;
    let r = f(&mut p)?;
    p.save(path)?;
    Ok(r)
}

pub fn run(cli: Cli) -> AppResult<()> {
    let path = cli.project.as_path();
    match cli.command {
        Command::Init(a) => init(&a),
        Command::Design(DesignCommand::Build { constraints }) => {
            let s = with_project(path, |p| ops::build_design(p, &constraints))?;
            println!("{} \u{2192} {}", s.full, s.kept);
            if s.reset {
                eprintln!("note: the design changed; model, generated designs and responses were cleared");
            }
            Ok(())
        }
        Command::Train(a) => {
            let cfg = TrainingConfig {
                beta: a.beta,
                batch_size: a.batch,
                epochs: a.epochs,
                seed: a.seed,
                train_dup: a.dup_train,
                test_dup: a.dup_test,
                learning_rate: a.lr,
                noise: a.noise.map(NoiseConfig::gaussian).unwrap_or_default(),
                ..Default::default()
            };
            let every = a.report_every.max(1);
            let generation = with_project(path, |p| {
                ops::train(p, &cfg, |r| {
                    if (r.epoch + 1) % every == 0 || r.epoch + 1 == cfg.epochs {
                        println!(
                            "epoch {:>4}  train {:.5}  test {:.5}  bce {:.5}  kl {:.5}",
                            r.epoch + 1,
                            r.train_loss,
                            r.test_loss,
                            r.test_bce,
                            r.test_kl
                        );
                    }
                })
            })?;
            println!("model generation {generation} saved");
            Ok(())
        }
        Command::Embed(a) => {
            let p = Project::load(path)?;
            write_out(&a.out, &ops::embedding_csv(&ops::embedding(&p)?)?)
        }
        Command::Grid(a) => {
            let spec = grid_spec(&a);
            let n = with_project(path, |p| ops::save_grid(p, &a.name, spec))?;
            println!("grid `{}` saved: {n} points", a.name);
            Ok(())
        }
        Command::Cluster(a) => {
            let method = match a.method {
                Method::Kmeans => ClusterMethod::Kmeans,
                Method::Ward => ClusterMethod::Ward,
            };
            let c = with_project(path, |p| ops::cluster(p, method, a.k, a.seed, &a.name))?;
            println!("cluster,size,lat1u,lat2u");
            for (i, cen) in c.centroids.iter().enumerate() {
                println!("{i},{},{},{}", c.members(i).len(), cen[0], cen[1]);
            }
            eprintln!("inertia {}; centroids saved as grid `{}`", c.inertia, a.name);
            Ok(())
        }
        Command::Generate(a) => {
            let name = a.name.clone().unwrap_or_else(|| a.grid.clone());
            let saved = with_project(path, |p| ops::generate_saved(p, &a.grid, a.snap, &name))?;
            if let Some(out) = &a.out {
                let mut buf = Vec::new();
                saved.design.write_csv(&mut buf, true)?;
                std::fs::write(out, buf)?;
            }
            if let Some(out) = &a.diagnostics {
                std::fs::write(out, serde_json::to_string_pretty(&saved.diagnostics)?)?;
            }
            let d = &saved.diagnostics;
            println!(
                "design `{name}`: {} trials ({} collapsed), {} violations, {} confounded pairs",
                saved.design.len(),
                saved.collapsed.len(),
                d.violations.len(),
                d.confounded_pairs.len()
            );
            if d.is_flagged() {
                let e = ops::flagged_error(&name, d);
                if a.allow_flagged {
                    eprintln!("warning: {}", e.message);
                } else {
                    return Err(e);
                }
            }
            Ok(())
        }
        Command::Maps(a) => {
            let p = Project::load(path)?;
            let agg = match a.agg {
                Agg::Sum => Aggregation::Sum,
                Agg::Max => Aggregation::Max,
            };
            let map = if let Some(f) = &a.factor {
                ops::factor_map(&p, f, a.res, true)?
            } else {
                let kind = if a.density { MapKind::Density } else { MapKind::Gradient };
                let r = ops::map(&p, kind, a.res, agg, a.threshold)?;
                if let (Some(b), Some(s)) = (&r.borders, r.segments) {
                    eprintln!("{} border cells, {s} low-gradient segments", b.len());
                }
                r.map
            };
            write_out(&a.out, &ops::field_csv(&map)?)
        }
        Command::Respond(a) => {
            let text = std::fs::read_to_string(&a.csv)?;
            let n = with_project(path, |p| ops::record_responses(p, &text, a.confidence, &a.design))?;
            println!("{n} trials with responses for `{}`", a.design);
            Ok(())
        }
        Command::Surface(a) => {
            let p = Project::load(path)?;
            let goal = match a.goal {
                GoalArg::Max => Goal::Max,
                GoalArg::Min => Goal::Min,
            };
            let r = ops::surface(&p, a.res, goal)?;
            let table = ops::optimum_csv(&r)?;
            print!("{table}");
            if let Some(out) = &a.out {
                std::fs::write(out, &table)?;
            }
            if let Some(out) = &a.map_out {
                std::fs::write(out, ops::field_csv(&r.surface.map)?)?;
            }
            Ok(())
        }
        Command::Importance(a) => {
            let cfg = ImportanceConfig {
                replications: a.reps,
                seed: a.seed,
                epochs: a.epochs,
                ..Default::default()
            };
            let r = with_project(path, |p| {
                let r = ops::run_importance(p, &cfg)?;
                p.record_seed("importance", a.seed);
                Ok(r)
            })?;
            println!("rank,factor,score,std");
            for name in &r.ranking {
                let f = r.factors.iter().find(|f| &f.factor == name).expect("ranked factor");
                println!("{},{},{},{}", f.rank, f.factor, f.score, f.std);
            }
            if let Some(out) = &a.out {
                std::fs::write(out, serde_json::to_string_pretty(&r)?)?;
            }
            Ok(())
        }
        Command::Export(a) => {
            let p = Project::load(path)?;
            write_out(&a.out, &ops::export_design(&p, a.design.as_deref())?)
        }
        Command::Serve(a) => {
            let p = Project::load(path)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(p, path.to_path_buf(), &a.host, a.port))
        }
    }
}

/// Parses arguments, runs, and maps the outcome to an exit code.
pub fn main_with_exit() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code, e.message);
            e.exit_code()
        }
    }
}
