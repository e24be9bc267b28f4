//! Latent-space analysis: DTW distances between gait-skill trajectories,
//! embedding export and gait diagrams.

mod diagram;
mod dtw;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub use diagram::GaitDiagram;
pub use dtw::{distance_matrix, dtw_distance, dtw_frames};

use crate::config::RunConfig;
use crate::eval::{run_scenario, EvalError, GaitMode, Scenario, Trace};
use crate::gait::NamedGait;
use crate::nets::{PolicyNets, LATENT_DIM};
use crate::parallel::Executor;
use crate::sim::{TerrainKey, TerrainType};

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("trajectory is empty")]
    Empty,
    #[error("need at least two trajectories, got {0}")]
    TooFew(usize),
    #[error("frame {frame} of '{label}' has norm {norm}")]
    NotUnit { label: String, frame: usize, norm: f64 },
    #[error("contact log has {0} steps but the schedule has {1}")]
    Mismatch(usize, usize),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Latent codes of one behaviour at the control rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTrajectory {
    pub label: String,
    pub frames: Vec<[f64; LATENT_DIM]>,
}

impl LatentTrajectory {
    pub fn new(label: &str, frames: Vec<[f64; LATENT_DIM]>) -> Result<Self, AnalysisError> {
        if frames.is_empty() {
            return Err(AnalysisError::Empty);
        }
        for (frame, z) in frames.iter().enumerate() {
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(AnalysisError::NotUnit {
                    label: label.to_string(),
                    frame,
                    norm,
                });
            }
        }
        Ok(Self {
            label: label.to_string(),
            frames,
        })
    }
}

/// CSV of `label, frame, z0..z15`.
pub fn embeddings_csv(trajs: &[LatentTrajectory]) -> String {
    let mut out = String::from("label,frame");
    for k in 0..LATENT_DIM {
        let _ = write!(out, ",z{k}");
    }
    out.push('\n');
    for t in trajs {
        for (f, z) in t.frames.iter().enumerate() {
            let _ = write!(out, "{},{f}", t.label);
            for v in z {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
    }
    out
}

pub fn export_embeddings(trajs: &[LatentTrajectory], path: &Path) -> Result<(), AnalysisError> {
    fs::write(path, embeddings_csv(trajs))?;
    Ok(())
}

/// Square CSV with a header row and a label column.
pub fn matrix_csv(labels: &[String], m: &[Vec<f64>]) -> String {
    let mut out = String::from("label");
    for l in labels {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(m) {
        out.push_str(l);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// The latent-analysis trajectory set: every dataset gait at each analysis
/// frequency, standing, and two adaptive scenarios (sprint on flat ground,
/// stair climbing).
pub fn analysis_scenarios(config: &RunConfig, seed: u64) -> Result<Vec<Scenario>, AnalysisError> {
    let e = &config.eval;
    let h = config.reference.base_height;
    let steps = e.analysis_frames;
    let fixed = |label: String, mode: GaitMode, vx: f64| Scenario {
        label,
        mode,
        command: [vx, 0.0, 0.0],
        terrain: TerrainKey::flat(),
        steps,
        seed,
        randomize: false,
    };
    let mut out = Vec::new();
    for gait in NamedGait::ALL {
        for &f in &e.analysis_frequencies {
            let mode = GaitMode::named(gait, f, h)?;
            out.push(fixed(format!("{gait}_{f}hz"), mode, config.reference.speed_for(f)));
        }
    }
    out.push(fixed("standing".into(), GaitMode::standing(e.standing_height)?, 0.0));
    out.push(fixed("sprint".into(), GaitMode::Adaptive, e.sprint_speed));
    out.push(Scenario {
        terrain: TerrainKey {
            kind: TerrainType::Stairs,
            level: e.stair_level,
            seed,
        },
        ..fixed("stair_climb".into(), GaitMode::Adaptive, e.stair_speed)
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    pub labels: Vec<String>,
    pub trajectories: Vec<LatentTrajectory>,
    pub matrix: Vec<Vec<f64>>,
    pub diagrams: Vec<GaitDiagram>,
    /// Labels whose rollout ended before the requested frame count.
    pub truncated: Vec<String>,
}

/// Rolls out every analysis scenario and computes all artifacts.
pub fn analyze(
    nets: &PolicyNets,
    config: &RunConfig,
    seed: u64,
    executor: &Executor,
) -> Result<AnalysisOutput, AnalysisError> {
    let scenarios = analysis_scenarios(config, seed)?;
    let traces: Vec<Trace> = executor
        .map(&scenarios, |_, s| run_scenario(nets, &config.sim, s))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let trajectories = traces
        .iter()
        .map(|t| LatentTrajectory::new(&t.label, t.latents.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let diagrams = traces
        .iter()
        .map(|t| GaitDiagram::new(&t.label, t.contacts.clone(), t.desired.clone(), t.dt))
        .collect::<Result<Vec<_>, _>>()?;
    let matrix = distance_matrix(&trajectories, executor)?;
    Ok(AnalysisOutput {
        labels: traces.iter().map(|t| t.label.clone()).collect(),
        truncated: traces
            .iter()
            .filter(|t| t.len() < config.eval.analysis_frames)
            .map(|t| t.label.clone())
            .collect(),
        trajectories,
        matrix,
        diagrams,
    })
}

/// Writes `embeddings.csv`, `dtw_matrix.csv`, `diagrams.txt` and one SVG per
/// trajectory under `dir/diagrams/`. Returns the written paths.
pub fn write_analysis(out: &AnalysisOutput, dir: &Path) -> Result<Vec<PathBuf>, AnalysisError> {
    let svg_dir = dir.join("diagrams");
    fs::create_dir_all(&svg_dir)?;
    let mut written = Vec::new();
    let emb = dir.join("embeddings.csv");
    export_embeddings(&out.trajectories, &emb)?;
    written.push(emb);
    let mat = dir.join("dtw_matrix.csv");
    fs::write(&mat, matrix_csv(&out.labels, &out.matrix))?;
    written.push(mat);
    let text: String = out.diagrams.iter().map(|d| d.to_text() + "\n").collect();
    let txt = dir.join("diagrams.txt");
    fs::write(&txt, text)?;
    written.push(txt);
    for d in &out.diagrams {
        let p = svg_dir.join(format!("{}.svg", d.label));
        fs::write(&p, d.to_svg())?;
        written.push(p);
    }
    Ok(written)
}
