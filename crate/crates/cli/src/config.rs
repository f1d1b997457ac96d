use std::path::PathBuf;

use metastab::action::ActionOptions;
use metastab::cycling::CyclingParams;
use metastab::fieldsolver::Region;
use metastab::landscape::BoxDomain;
use metastab::rate::PitchforkSaddle;
use metastab::sde::{ExitDomain, Target};
use metastab::spde::Boundary;
use metastab::PotentialParams;
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format_version: String,
    #[serde(default)]
    pub potential: Option<PotentialParams>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub workflow: Workflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Workflow {
    Analyze(Analyze),
    Predict(Predict),
    Simulate(Simulate),
    Committor(Committor),
    Action(Action),
    Cycling(Cycling),
    Spde(Spde),
    Validate(Validate),
}

impl Workflow {
    pub fn name(&self) -> &'static str {
        match self {
            Workflow::Analyze(_) => "analyze",
            Workflow::Predict(_) => "predict",
            Workflow::Simulate(_) => "simulate",
            Workflow::Committor(_) => "committor",
            Workflow::Action(_) => "action",
            Workflow::Cycling(_) => "cycling",
            Workflow::Spde(_) => "spde",
            Workflow::Validate(_) => "validate",
        }
    }

    fn needs_potential(&self) -> bool {
        !matches!(self, Workflow::Cycling(_) | Workflow::Spde(_))
    }
}

fn default_seeds() -> usize {
    24
}

fn default_cells() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyze {
    pub domain: BoxDomain,
    #[serde(default = "default_seeds")]
    pub seeds_per_axis: usize,
    /// Separation used to order the minima; skipped when absent.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_cells")]
    pub flooding_cells: usize,
}

fn default_target_radius() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predict {
    #[serde(default)]
    pub start: Option<Vec<f64>>,
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default = "default_target_radius")]
    pub target_radius: f64,
    pub eps: Vec<f64>,
    #[serde(default)]
    pub pitchfork: Option<PitchforkSweep>,
}

/// Prefactor as a function of the bifurcating eigenvalue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PitchforkSweep {
    pub saddle: PitchforkSaddle,
    pub lambda2_min: f64,
    pub lambda2_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Simulate {
    pub x0: Vec<f64>,
    pub eps: f64,
    pub dt: f64,
    pub max_time: f64,
    pub target: Target,
    pub replicas: usize,
    /// Also store the first replica's path as a binary array.
    #[serde(default)]
    pub trajectory: bool,
    #[serde(default)]
    pub invariant: Option<InvariantBlock>,
    #[serde(default)]
    pub exit: Option<ExitBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvariantBlock {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins: usize,
    pub burn_in: f64,
    pub total_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitBlock {
    pub domain: ExitDomain,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Committor {
    pub domain: BoxDomain,
    pub a: Region,
    pub b: Region,
    pub eps: f64,
    pub h: f64,
    /// Minimum inside `a`; enables the mean-time estimate.
    #[serde(default)]
    pub minimum: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Action {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    #[serde(default)]
    pub options: Option<ActionOptions>,
    /// Boundary sample for the exit quasipotential from `start`.
    #[serde(default)]
    pub exit_boundary: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cycling {
    pub params: CyclingParams,
    pub theta_max: f64,
    pub points: usize,
    /// Synthetic exit angles to draw and refit; skipped when absent.
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spde {
    pub length: f64,
    pub sites: usize,
    pub boundary: Boundary,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub monte_carlo: Option<SpdeMonteCarlo>,
}

fn default_modes() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpdeMonteCarlo {
    pub dt: f64,
    pub max_time: f64,
    pub replicas: usize,
    pub target_l2_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validate {
    pub start: f64,
    pub target: f64,
    pub eps: f64,
    #[serde(default = "default_target_radius")]
    pub target_radius: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_h")]
    pub h: f64,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_replicas() -> usize {
    2000
}

fn default_h() -> f64 {
    1.0 / 256.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| Failure::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.format_version != FORMAT_VERSION {
            return Err(Failure::Validation(format!(
                "unsupported format_version '{}' (this build reads '{FORMAT_VERSION}')",
                self.format_version
            )));
        }
        if self.workflow.needs_potential() && self.potential.is_none() {
            return Err(Failure::Validation(format!(
                "workflow '{}' needs a potential",
                self.workflow.name()
            )));
        }
        if let Some(p) = &self.potential {
            metastab::make_builtin(p).map_err(Failure::from)?;
        }
        Ok(())
    }
}
