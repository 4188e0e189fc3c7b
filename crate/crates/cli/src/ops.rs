//! Workflow steps shared by the command line and the service.

use std::collections::BTreeMap;

use gdoe_core::cluster::{kmeans, ward, ClusterMethod, DEFAULT_MAX_ITER};
use gdoe_core::design::{encode_design, EncodedMatrix, Level};
use gdoe_core::generator::{generate, Collapse, DesignDiagnostics};
use gdoe_core::geometry::{
    density_map, extract_borders, gradient_map, lattice_points, low_gradient_segments, make_grid, Aggregation,
    BorderCell, FieldMap, Resolution,
};
use gdoe_core::response::{
    find_optimum, importance, interpolate_points, read_responses_csv, Goal, ImportanceConfig, ImportanceReport,
    Optimum, Surface,
};
use gdoe_core::vae::{train_with, EpochRecord, TrainingHistory};
use gdoe_core::{
    build_full_factorial, filter_by_constraints, parse_constraint, Clusters, Design, FactorSpec, GridSpec,
    LatentSpace, TrainingConfig, Vae,
};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult, ErrorKind};
use crate::project::{ClusterRecord, ModelRecord, Project, ResponseSet, SavedDesign, INITIAL};

pub const DEFAULT_RESOLUTION: usize = 100;
pub const MAX_RESOLUTION: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub full: usize,
    pub kept: usize,
    pub constraints: Vec<String>,
    /// Downstream artifacts were dropped because the design changed.
    pub reset: bool,
}

/// Full factorial of the project's factors filtered by `constraints`.
pub fn build_design(p: &mut Project, constraints: &[String]) -> AppResult<BuildSummary> {
    let parsed = constraints
        .iter()
        .map(|c| parse_constraint(c, &p.factors))
        .collect::<gdoe_core::Result<Vec<_>>>()?;
    let full = build_full_factorial(&p.factors)?;
    let kept = filter_by_constraints(&full, &parsed)?;
    if kept.is_empty() {
        return Err(AppError::validation("empty_design", "the constraints exclude every trial"));
    }
    let reset = p.design.is_some() && p.design.as_ref() != Some(&kept);
    if reset {
        p.model = None;
        p.clusters = None;
        p.generated.clear();
        p.responses = None;
    }
    let summary = BuildSummary {
        full: full.len(),
        kept: kept.len(),
        constraints: constraints.to_vec(),
        reset,
    };
    p.constraints = constraints.to_vec();
    p.full_size = Some(full.len());
    p.design = Some(kept);
    Ok(summary)
}

/// Checks the configuration and encodes the design, ready for a run that
/// may happen off the project lock.
pub fn prepare_training(p: &Project, cfg: &TrainingConfig) -> AppResult<EncodedMatrix<f64>> {
    cfg.validate()?;
    Ok(encode_design::<f64>(p.design()?)?)
}

pub fn run_training(
    m: &EncodedMatrix<f64>,
    cfg: &TrainingConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> AppResult<(Vae, TrainingHistory)> {
    Ok(train_with(m, cfg, on_epoch)?)
}

/// Stores a trained model as the next generation.
pub fn install_model(p: &mut Project, vae: Vae, history: TrainingHistory, cfg: &TrainingConfig) -> u64 {
    let generation = p.generation() + 1;
    p.model = Some(ModelRecord {
        generation,
        config: cfg.clone(),
        history: history.epochs,
        vae,
    });
    p.clusters = None;
    p.record_seed("train", cfg.seed);
    generation
}

pub fn train(p: &mut Project, cfg: &TrainingConfig, on_epoch: impl FnMut(&EpochRecord)) -> AppResult<u64> {
    let m = prepare_training(p, cfg)?;
    let (vae, history) = run_training(&m, cfg, on_epoch)?;
    Ok(install_model(p, vae, history, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedTrial {
    pub trial_id: u64,
    pub mu: [f64; 2],
    pub uniformed: [f64; 2],
}

pub fn embedding(p: &Project) -> AppResult<Vec<EmbeddedTrial>> {
    let model = p.model()?;
    let emb = model.vae.embed(&encode_design::<f64>(p.design()?)?)?;
    Ok(emb
        .trial_ids
        .iter()
        .zip(emb.mu.iter().zip(&emb.uniformed))
        .map(|(&trial_id, (&mu, &uniformed))| EmbeddedTrial {
            trial_id,
            mu,
            uniformed,
        })
        .collect())
}

pub fn embedding_csv(rows: &[EmbeddedTrial]) -> AppResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["trial_id", "lat1", "lat2", "lat1u", "lat2u"])?;
    for r in rows {
        w.write_record([
            r.trial_id.to_string(),
            r.mu[0].to_string(),
            r.mu[1].to_string(),
            r.uniformed[0].to_string(),
            r.uniformed[1].to_string(),
        ])?;
    }
    finish_csv(w)
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> AppResult<String> {
    let bytes = w.into_inner().map_err(|e| AppError::internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AppError::internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub grid: GridSpec,
    /// Grid points in uniformed coordinates.
    pub points: Vec<[f64; 2]>,
    pub design: Design,
    pub locations: Vec<[f64; 2]>,
    pub diagnostics: DesignDiagnostics,
    pub collapsed: Vec<Collapse>,
    pub flagged: bool,
}

fn constraints(p: &Project) -> AppResult<Vec<gdoe_core::ConstraintExpr>> {
    Ok(p.constraints
        .iter()
        .map(|c| parse_constraint(c, &p.factors))
        .collect::<gdoe_core::Result<Vec<_>>>()?)
}

/// Decodes a grid without touching the project.
pub fn preview(p: &Project, spec: &GridSpec, snap: bool) -> AppResult<Preview> {
    let model = p.model()?;
    let grid = make_grid::<f64>(spec)?;
    let g = generate(&model.vae, spec, &constraints(p)?, snap)?;
    Ok(Preview {
        grid: spec.clone(),
        points: grid.uniformed(),
        flagged: g.diagnostics.is_flagged(),
        design: g.design,
        locations: g.locations,
        diagnostics: g.diagnostics,
        collapsed: g.collapsed,
    })
}

pub fn check_name(name: &str) -> AppResult<()> {
    let ok = !name.is_empty()
        && name.len() <= 64
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        && name != INITIAL;
    if ok {
        Ok(())
    } else {
        Err(AppError::validation(
            "bad_name",
            format!("`{name}` is not a usable name (1-64 of [A-Za-z0-9_-], not `{INITIAL}`)"),
        ))
    }
}

pub fn save_grid(p: &mut Project, name: &str, spec: GridSpec) -> AppResult<usize> {
    check_name(name)?;
    let n = make_grid::<f64>(&spec)?.len();
    p.grids.insert(name.to_string(), spec);
    Ok(n)
}

/// Clusters the embedded initial design and saves the centroids as an
/// explicit grid called `name`.
pub fn cluster(p: &mut Project, method: ClusterMethod, k: usize, seed: u64, name: &str) -> AppResult<Clusters> {
    check_name(name)?;
    let pts: Vec<[f64; 2]> = embedding(p)?.iter().map(|r| r.uniformed).collect();
    let c = match method {
        ClusterMethod::Kmeans => kmeans(&pts, k, seed, DEFAULT_MAX_ITER)?,
        ClusterMethod::Ward => ward(&pts, k)?,
    };
    p.grids.insert(
        name.to_string(),
        GridSpec::explicit(c.centroids.clone(), LatentSpace::Uniformed),
    );
    p.clusters = Some(ClusterRecord {
        model_generation: p.generation(),
        seed: (method == ClusterMethod::Kmeans).then_some(seed),
        clustering: c.clone(),
    });
    if method == ClusterMethod::Kmeans {
        p.record_seed("cluster", seed);
    }
    Ok(c)
}

/// Decodes a saved grid into a G-DOE stored under `name`. A flagged design
/// is still saved; the caller decides whether that is an error.
pub fn generate_saved(p: &mut Project, grid: &str, snap: bool, name: &str) -> AppResult<SavedDesign> {
    check_name(name)?;
    let spec = p.grid(grid)?.clone();
    let pv = preview(p, &spec, snap)?;
    let saved = SavedDesign {
        grid: grid.to_string(),
        spec,
        model_generation: p.generation(),
        snap,
        design: pv.design,
        diagnostics: pv.diagnostics,
        locations: pv.locations,
        collapsed: pv.collapsed,
    };
    if p.responses.as_ref().is_some_and(|r| r.target == name) {
        p.responses = None;
    }
    p.generated.insert(name.to_string(), saved.clone());
    Ok(saved)
}

pub fn flagged_error(name: &str, d: &DesignDiagnostics) -> AppError {
    AppError::new(
        ErrorKind::Flagged,
        "flagged_design",
        format!(
            "design `{name}` has {} constraint violation(s) and {} confounded pair(s)",
            d.violations.len(),
            d.confounded_pairs.len()
        ),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Density,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: FieldMap<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub borders: Option<Vec<BorderCell<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
}

pub fn check_resolution(res: usize) -> AppResult<Resolution> {
    if res == 0 || res > MAX_RESOLUTION {
        return Err(AppError::validation(
            "bad_resolution",
            format!("resolution must be between 1 and {MAX_RESOLUTION}, got {res}"),
        ));
    }
    Ok(Resolution::square(res))
}

pub fn map(p: &Project, kind: MapKind, res: usize, agg: Aggregation, threshold: Option<f64>) -> AppResult<MapReport> {
    let r = check_resolution(res)?;
    let map = match kind {
        MapKind::Density => {
            let pts: Vec<[f64; 2]> = embedding(p)?.iter().map(|e| e.uniformed).collect();
            density_map(&pts, r)?
        }
        MapKind::Gradient => gradient_map(&p.model()?.vae, r, agg)?,
    };
    Ok(with_threshold(map, threshold))
}

fn with_threshold(map: FieldMap<f64>, threshold: Option<f64>) -> MapReport {
    match threshold {
        Some(t) => {
            let borders = extract_borders(&map, t);
            let (_, segments) = low_gradient_segments(&map, t);
            MapReport {
                map,
                threshold: Some(t),
                borders: Some(borders),
                segments: Some(segments),
            }
        }
        None => MapReport {
            map,
            threshold: None,
            borders: None,
            segments: None,
        },
    }
}

/// Normalized decoded level of one factor over the lattice.
pub fn factor_map(p: &Project, factor: &str, res: usize, snap: bool) -> AppResult<FieldMap<f64>> {
    let r = check_resolution(res)?;
    let model = p.model()?;
    let idx = p
        .factors
        .iter()
        .position(|f| f.name == factor)
        .ok_or_else(|| AppError::not_found("unknown_factor", format!("no factor named `{factor}`")))?;
    let pts = lattice_points::<f64>(r);
    let levels = model.vae.normalized_levels(&pts, LatentSpace::Uniformed, snap)?;
    let values = (0..res)
        .map(|j| (0..res).map(|i| levels[(j * res + i, idx)]).collect())
        .collect();
    Ok(FieldMap::new(factor, r, values)?)
}

/// The design and trial locations responses for `target` refer to.
fn target_design(p: &Project, target: &str) -> AppResult<(Design, Vec<[f64; 2]>)> {
    if target == INITIAL {
        let emb = embedding(p)?;
        return Ok((p.design()?.clone(), emb.iter().map(|e| e.uniformed).collect()));
    }
    let s = p.saved_design(target)?;
    if s.model_generation != p.generation() {
        return Err(AppError::validation(
            "stale_design",
            format!(
                "design `{target}` was decoded by model generation {}, the current one is {}; regenerate it",
                s.model_generation,
                p.generation()
            ),
        ));
    }
    Ok((s.design.clone(), s.locations.clone()))
}

pub fn record_responses(p: &mut Project, csv_text: &str, confidence: f64, target: &str) -> AppResult<usize> {
    let ids: Vec<u64> = if target == INITIAL {
        p.design()?.trial_ids().to_vec()
    } else {
        p.saved_design(target)?.design.trial_ids().to_vec()
    };
    let records = read_responses_csv(csv_text.as_bytes(), confidence)?;
    if records.is_empty() {
        return Err(AppError::validation("no_responses", "the responses file has no rows"));
    }
    if let Some(r) = records.iter().find(|r| !ids.contains(&r.trial_id)) {
        return Err(AppError::validation(
            "unknown_trial",
            format!("trial {} is not in design `{target}`", r.trial_id),
        ));
    }
    let n = records.len();
    p.responses = Some(ResponseSet {
        target: target.to_string(),
        confidence,
        records,
    });
    Ok(n)
}

fn responses(p: &Project) -> AppResult<&ResponseSet> {
    p.responses.as_ref().ok_or_else(|| AppError::missing("responses", "respond"))
}

/// One row of the optimum table: settings, location and value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimumRow {
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<u64>,
    pub levels: Vec<Level>,
    pub lat1u: f64,
    pub lat2u: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub target: String,
    pub goal: Goal,
    pub factors: Vec<String>,
    pub surface: Surface<f64>,
    pub optimum: Optimum<f64>,
    pub executed: OptimumRow,
    pub interpolated: OptimumRow,
}

pub fn surface(p: &Project, res: usize, goal: Goal) -> AppResult<SurfaceReport> {
    check_resolution(res)?;
    let set = responses(p)?;
    let model = p.model()?;
    let (design, locations) = target_design(p, &set.target)?;
    let by_id: BTreeMap<u64, f64> = set.records.iter().map(|r| (r.trial_id, r.lcl)).collect();
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    let mut ids = Vec::new();
    for (id, loc) in design.trial_ids().iter().zip(&locations) {
        if let Some(&v) = by_id.get(id) {
            pts.push(*loc);
            vals.push(v);
            ids.push(*id);
        }
    }
    let s = interpolate_points(&pts, &vals, &ids, res)?;
    let opt = find_optimum(&s, goal);
    let best_id = *opt.best_node.trial_ids.iter().min().expect("nodes carry a trial");
    let executed = OptimumRow {
        source: "executed".into(),
        trial_id: Some(best_id),
        levels: design.trial(best_id).expect("response ids are design ids").to_vec(),
        lat1u: opt.best_node.point[0],
        lat2u: opt.best_node.point[1],
        value: opt.best_node.value,
    };
    let decoded = model.vae.decode_trials(&[opt.point], LatentSpace::Uniformed, false)?;
    let interpolated = OptimumRow {
        source: "interpolated".into(),
        trial_id: None,
        levels: decoded.into_iter().next().expect("one point"),
        lat1u: opt.point[0],
        lat2u: opt.point[1],
        value: opt.value,
    };
    Ok(SurfaceReport {
        target: set.target.clone(),
        goal,
        factors: p.factors.iter().map(|f| f.name.clone()).collect(),
        surface: s,
        optimum: opt,
        executed,
        interpolated,
    })
}

/// The executed and interpolated optima side by side.
pub fn optimum_csv(r: &SurfaceReport) -> AppResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["source".to_string()];
    header.extend(r.factors.iter().cloned());
    header.extend(["lat1u", "lat2u", "value"].map(String::from));
    w.write_record(&header)?;
    for row in [&r.executed, &r.interpolated] {
        let mut rec = vec![row.source.clone()];
        rec.extend(row.levels.iter().map(Level::to_string));
        rec.extend([row.lat1u, row.lat2u, row.value].map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    finish_csv(w)
}

pub fn field_csv(map: &FieldMap<f64>) -> AppResult<String> {
    let mut out = Vec::new();
    map.write_csv(&mut out)?;
    String::from_utf8(out).map_err(|e| AppError::internal(e.to_string()))
}

pub fn run_importance(p: &Project, cfg: &ImportanceConfig) -> AppResult<ImportanceReport> {
    let set = responses(p)?;
    let (design, _) = target_design(p, &set.target)?;
    let by_id: BTreeMap<u64, f64> = set.records.iter().map(|r| (r.trial_id, r.lcl)).collect();
    let mut trials = Vec::new();
    let mut ids = Vec::new();
    let mut y = Vec::new();
    for (id, t) in design.trial_ids().iter().zip(design.trials()) {
        if let Some(&v) = by_id.get(id) {
            trials.push(t.clone());
            ids.push(*id);
            y.push(v);
        }
    }
    let sub = Design::new(design.factors().to_vec(), trials, ids, design.provenance())?;
    Ok(importance(&sub, &y, cfg)?)
}

/// CSV of the initial design or of a saved G-DOE.
pub fn export_design(p: &Project, name: Option<&str>) -> AppResult<String> {
    let d = match name {
        None | Some(INITIAL) => p.design()?,
        Some(n) => &p.saved_design(n)?.design,
    };
    let mut out = Vec::new();
    d.write_csv(&mut out, true)?;
    String::from_utf8(out).map_err(|e| AppError::internal(e.to_string()))
}

/// Factors of a two-level screening study, `F1..Fk` at −1/1.
pub fn two_level_factors(k: usize) -> AppResult<Vec<FactorSpec>> {
    Ok(gdoe_core::synthetic::two_level_factorial(k)?.factors().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub schema_version: u32,
    pub factors: Vec<FactorSpec>,
    pub constraints: Vec<String>,
    pub full_size: Option<usize>,
    pub design_trials: Option<usize>,
    pub model: Option<ModelSummary>,
    pub grids: BTreeMap<String, GridSpec>,
    pub generated: BTreeMap<String, GeneratedSummary>,
    pub responses: Option<ResponsesSummary>,
    pub clusters: Option<ClusterRecord>,
    pub seeds: Vec<crate::project::SeedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub generation: u64,
    pub config: TrainingConfig,
    pub epochs: usize,
    pub last: Option<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedSummary {
    pub grid: String,
    pub model_generation: u64,
    pub snap: bool,
    pub trials: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponsesSummary {
    pub target: String,
    pub confidence: f64,
    pub trials: usize,
}

/// Everything but the weights and trial tables.
pub fn summary(p: &Project) -> ProjectSummary {
    ProjectSummary {
        schema_version: p.schema_version,
        factors: p.factors.clone(),
        constraints: p.constraints.clone(),
        full_size: p.full_size,
        design_trials: p.design.as_ref().map(Design::len),
        model: p.model.as_ref().map(|m| ModelSummary {
            generation: m.generation,
            config: m.config.clone(),
            epochs: m.history.len(),
            last: m.history.last().copied(),
        }),
        grids: p.grids.clone(),
        generated: p
            .generated
            .iter()
            .map(|(k, g)| {
                (
                    k.clone(),
                    GeneratedSummary {
                        grid: g.grid.clone(),
                        model_generation: g.model_generation,
                        snap: g.snap,
                        trials: g.design.len(),
                        flagged: g.diagnostics.is_flagged(),
                    },
                )
            })
            .collect(),
        responses: p.responses.as_ref().map(|r| ResponsesSummary {
            target: r.target.clone(),
            confidence: r.confidence,
            trials: r.records.len(),
        }),
        clusters: p.clusters.clone(),
        seeds: p.seeds.clone(),
    }
}
