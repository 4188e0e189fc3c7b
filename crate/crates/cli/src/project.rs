//! The project file: one JSON document holding every artifact of a study.

use std::collections::BTreeMap;
use std::path::Path;

use gdoe_core::generator::{Collapse, DesignDiagnostics};
use gdoe_core::response::ResponseRecord;
use gdoe_core::vae::EpochRecord;
use gdoe_core::{Clusters, Design, FactorSpec, GridSpec, TrainingConfig, Vae};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Name under which responses to the initial design are filed.
pub const INITIAL: &str = "initial";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub schema_version: u32,
    pub factors: Vec<FactorSpec>,
    /// Constraint sources as typed.
    #[serde(default)]
    pub constraints: Vec<String>,
    /// The filtered full factorial the model is trained on.
    #[serde(default)]
    pub design: Option<Design>,
    #[serde(default)]
    pub full_size: Option<usize>,
    #[serde(default)]
    pub model: Option<ModelRecord>,
    #[serde(default)]
    pub grids: BTreeMap<String, GridSpec>,
    #[serde(default)]
    pub clusters: Option<ClusterRecord>,
    #[serde(default)]
    pub generated: BTreeMap<String, SavedDesign>,
    #[serde(default)]
    pub responses: Option<ResponseSet>,
    #[serde(default)]
    pub seeds: Vec<SeedRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    /// Increments with every training run.
    pub generation: u64,
    pub config: TrainingConfig,
    pub history: Vec<EpochRecord>,
    pub vae: Vae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub model_generation: u64,
    pub seed: Option<u64>,
    pub clustering: Clusters,
}

/// A G-DOE decoded from a saved grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedDesign {
    pub grid: String,
    pub spec: GridSpec,
    pub model_generation: u64,
    pub snap: bool,
    pub design: Design,
    pub diagnostics: DesignDiagnostics,
    pub locations: Vec<[f64; 2]>,
    pub collapsed: Vec<Collapse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    /// [`INITIAL`] or the name of a saved G-DOE.
    pub target: String,
    pub confidence: f64,
    pub records: Vec<ResponseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub step: String,
    pub seed: u64,
}

impl Project {
    pub fn new(factors: Vec<FactorSpec>) -> AppResult<Self> {
        // reuse the design layer's checks on names and levels
        gdoe_core::design::ColumnMap::new(&factors)?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            factors,
            constraints: Vec::new(),
            design: None,
            full_size: None,
            model: None,
            grids: BTreeMap::new(),
            clusters: None,
            generated: BTreeMap::new(),
            responses: None,
            seeds: Vec::new(),
        })
    }

    pub fn from_json(text: &str) -> AppResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| AppError::validation("bad_project", format!("project file is not JSON: {e}")))?;
        let version = value
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| AppError::validation("bad_project", "project file has no schema_version"))?;
        if version > SCHEMA_VERSION as u64 {
            return Err(AppError::validation(
                "unsupported_schema",
                format!("project schema version {version} is newer than the supported version {SCHEMA_VERSION}; upgrade gdoe"),
            ));
        }
        if version == 0 {
            return Err(AppError::validation("bad_project", "schema_version must be at least 1"));
        }
        let p: Project = serde_json::from_value(value)
            .map_err(|e| AppError::validation("bad_project", format!("project file: {e}")))?;
        p.check()?;
        Ok(p)
    }

    /// Re-runs the constructors' validation on deserialized parts.
    fn check(&self) -> AppResult<()> {
        gdoe_core::design::ColumnMap::new(&self.factors)?;
        let revalidate = |d: &Design| -> AppResult<()> {
            Design::new(d.factors().to_vec(), d.trials().to_vec(), d.trial_ids().to_vec(), d.provenance())?;
            Ok(())
        };
        if let Some(d) = &self.design {
            revalidate(d)?;
        }
        let current = self.model.as_ref().map(|m| m.generation).unwrap_or(0);
        for (name, g) in &self.generated {
            revalidate(&g.design)?;
            if g.model_generation > current {
                return Err(AppError::validation(
                    "bad_project",
                    format!("design `{name}` references model generation {} that does not exist", g.model_generation),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> AppResult<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                AppError::not_found(
                    "missing_project",
                    format!("{} does not exist; run `gdoe init {}` first", path.display(), path.display()),
                )
            } else {
                AppError::internal(format!("{}: {e}", path.display()))
            }
        })?;
        Self::from_json(&text)
    }

    /// Writes through a sibling temp file so a crash never leaves half a
    /// project behind.
    pub fn save(&self, path: &Path) -> AppResult<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        std::fs::write(&tmp, self.to_json()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn design(&self) -> AppResult<&Design> {
        self.design.as_ref().ok_or_else(|| AppError::missing("design", "design build"))
    }

    pub fn model(&self) -> AppResult<&ModelRecord> {
        self.model.as_ref().ok_or_else(|| AppError::missing("model", "train"))
    }

    pub fn generation(&self) -> u64 {
        self.model.as_ref().map(|m| m.generation).unwrap_or(0)
    }

    pub fn saved_design(&self, name: &str) -> AppResult<&SavedDesign> {
        self.generated.get(name).ok_or_else(|| {
            AppError::not_found("missing_generated_design", format!("no generated design named `{name}`; run `gdoe generate` first"))
        })
    }

    pub fn grid(&self, name: &str) -> AppResult<&GridSpec> {
        self.grids
            .get(name)
            .ok_or_else(|| AppError::not_found("missing_grid", format!("no grid named `{name}`; run `gdoe grid --name {name}` first")))
    }

    pub fn record_seed(&mut self, step: &str, seed: u64) {
        self.seeds.push(SeedRecord {
            step: step.to_string(),
            seed,
        });
    }
}
