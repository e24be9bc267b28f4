//! Deterministic policy rollouts for evaluation and latent-space analysis:
//! velocity tracking, stair climbing and fixed-gait versus adaptive mode.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::EvalConfig;
use crate::gait::{GaitError, GaitParams, NamedGait, PhaseState, NUM_LEGS};
use crate::nets::{NetError, PolicyNets, ACTION_DIM, LATENT_DIM};
use crate::parallel::Executor;
use crate::reward::GroupTag;
use crate::sim::{Env, EpisodeSpec, EpisodeStatus, RandomizationProfile, SimConfig, SimError, TerrainKey, TerrainType};
use crate::trainer::{actor_batch, EnvInputs};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error("invalid evaluation request: {0}")]
    Invalid(String),
}

/// Where the latent comes from: the gait encoder fed an explicit gait
/// command, or the generator fed the velocity command and observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GaitMode {
    Fixed { params: GaitParams, phase: f64 },
    Adaptive,
}

impl GaitMode {
    pub fn named(gait: NamedGait, frequency: f64, base_height: f64) -> Result<Self, EvalError> {
        Ok(Self::Fixed {
            params: GaitParams::from_named(gait, frequency, base_height)?,
            phase: 0.0,
        })
    }

    /// Frozen clock with every leg mid-stance.
    pub fn standing(base_height: f64) -> Result<Self, EvalError> {
        Ok(Self::Fixed {
            params: GaitParams::from_named(NamedGait::Pronking, 0.0, base_height)?,
            phase: 0.25,
        })
    }

    pub fn group(&self) -> GroupTag {
        match self {
            GaitMode::Fixed { .. } => GroupTag::Common,
            GaitMode::Adaptive => GroupTag::Adaptive,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub mode: GaitMode,
    pub command: [f64; 3],
    pub terrain: TerrainKey,
    pub steps: usize,
    pub seed: u64,
    /// Apply the configured physics randomization and pushes.
    pub randomize: bool,
}

/// Per-step record of one deterministic rollout. Stops early on termination.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub label: String,
    pub latents: Vec<[f64; LATENT_DIM]>,
    pub contacts: Vec<[bool; NUM_LEGS]>,
    pub desired: Vec<[f64; NUM_LEGS]>,
    /// Body-frame planar velocity after each step.
    pub velocity: Vec<[f64; 2]>,
    pub command: [f64; 3],
    pub dt: f64,
    /// Forward progress along the tile at each step.
    pub progress: Vec<f64>,
    pub terminated: bool,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    /// Planar velocity tracking RMSE over the trace.
    pub fn tracking_rmse(&self) -> f64 {
        if self.velocity.is_empty() {
            return f64::NAN;
        }
        let sq: f64 = self
            .velocity
            .iter()
            .map(|v| (self.command[0] - v[0]).powi(2) + (self.command[1] - v[1]).powi(2))
            .sum();
        (sq / self.velocity.len() as f64).sqrt()
    }

    /// Time at which forward progress first reaches `distance`.
    pub fn time_to(&self, distance: f64) -> Option<f64> {
        self.progress
            .iter()
            .position(|&p| p >= distance)
            .map(|k| (k + 1) as f64 * self.dt)
    }
}

/// Runs the policy mean action in a single environment.
pub fn run_scenario(nets: &PolicyNets, sim: &SimConfig, scenario: &Scenario) -> Result<Trace, EvalError> {
    let mut cfg = sim.clone();
    if !scenario.randomize {
        cfg.randomization = RandomizationProfile::disabled(crate::sim::PhysicalParams::default().friction);
    }
    let terrain = Arc::new(scenario.terrain.build(&cfg.terrain)?);
    let (gait, phase) = match scenario.mode {
        GaitMode::Fixed { params, phase } => (params, phase),
        GaitMode::Adaptive => (GaitParams::from_named(NamedGait::Trotting, 2.0, 0.3)?, 0.0),
    };
    let spec = EpisodeSpec {
        gait,
        phase: PhaseState::new(phase)?,
        command: scenario.command,
        group: scenario.mode.group(),
        spawn: [0.0, 0.0],
        yaw: 0.0,
    };
    let mut env = Env::new(&cfg, spec, terrain, scenario.terrain, scenario.seed);
    let scale = nets.config.action_scale;
    let mut trace = Trace {
        label: scenario.label.clone(),
        latents: Vec::with_capacity(scenario.steps),
        contacts: Vec::with_capacity(scenario.steps),
        desired: Vec::with_capacity(scenario.steps),
        velocity: Vec::with_capacity(scenario.steps),
        command: scenario.command,
        dt: cfg.physics.control_dt,
        progress: Vec::with_capacity(scenario.steps),
        terminated: false,
    };
    for _ in 0..scenario.steps {
        let batch = actor_batch(&[EnvInputs::gather(&env, &cfg)]);
        let out = nets.act(&batch)?;
        let action: [f64; ACTION_DIM] = std::array::from_fn(|j| out.mean[[0, j]] / scale);
        trace.latents.push(std::array::from_fn(|k| out.latent[[0, k]]));
        let o = env.step(&cfg, &action);
        trace.contacts.push(o.contacts);
        trace.desired.push(o.quantities.schedule.desired);
        trace.velocity.push(o.quantities.v_xy);
        trace.progress.push(env.traversed());
        if o.status == EpisodeStatus::Terminated {
            trace.terminated = true;
            break;
        }
    }
    Ok(trace)
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    pub speed: f64,
    pub rmse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub falls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbReport {
    pub level: u32,
    /// Seconds to reach the climb distance, per run.
    pub times: Vec<Option<f64>>,
    pub successes: usize,
}

/// Per-run seeds derived from the base seed.
fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(run as u64)
}

/// Forward-velocity tracking on flat ground: every configured speed, `runs`
/// seeded runs each, RMSE mean and spread across runs.
pub fn tracking_test(
    nets: &PolicyNets,
    sim: &SimConfig,
    eval: &EvalConfig,
    mode: GaitMode,
    seed: u64,
    executor: &Executor,
) -> Result<Vec<TrackingRow>, EvalError> {
    let steps = (eval.duration / sim.physics.control_dt).round() as usize;
    let mut scenarios = Vec::new();
    for &speed in &eval.tracking_speeds {
        for run in 0..eval.runs {
            scenarios.push(Scenario {
                label: format!("track_{speed}"),
                mode,
                command: [speed, 0.0, 0.0],
                terrain: TerrainKey::flat(),
                steps,
                seed: run_seed(seed, run),
                randomize: true,
            });
        }
    }
    let traces = executor.map(&scenarios, |_, s| run_scenario(nets, sim, s));
    let traces = traces.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(eval
        .tracking_speeds
        .iter()
        .zip(traces.chunks(eval.runs))
        .map(|(&speed, chunk)| {
            let rmse: Vec<f64> = chunk.iter().map(Trace::tracking_rmse).collect();
            let (mean, std) = mean_std(&rmse);
            TrackingRow {
                speed,
                rmse,
                mean,
                std,
                falls: chunk.iter().filter(|t| t.terminated).count(),
            }
        })
        .collect())
}

/// Stair climbing: success means covering the climb distance in less than
/// the time limit.
pub fn climb_test(
    nets: &PolicyNets,
    sim: &SimConfig,
    eval: &EvalConfig,
    mode: GaitMode,
    seed: u64,
    executor: &Executor,
) -> Result<ClimbReport, EvalError> {
    let steps = (eval.climb_time / sim.physics.control_dt).round() as usize;
    let scenarios: Vec<Scenario> = (0..eval.runs)
        .map(|run| Scenario {
            label: format!("climb_{run}"),
            mode,
            command: [eval.climb_speed, 0.0, 0.0],
            terrain: TerrainKey {
                kind: TerrainType::Stairs,
                level: eval.stair_level,
                seed: run_seed(seed, run),
            },
            steps,
            seed: run_seed(seed, run),
            randomize: true,
        })
        .collect();
    let traces = executor.map(&scenarios, |_, s| run_scenario(nets, sim, s));
    let traces = traces.into_iter().collect::<Result<Vec<_>, _>>()?;
    let times: Vec<Option<f64>> = traces
        .iter()
        .map(|t| t.time_to(eval.climb_distance).filter(|&s| s < eval.climb_time))
        .collect();
    Ok(ClimbReport {
        level: eval.stair_level,
        successes: times.iter().flatten().count(),
        times,
    })
}
