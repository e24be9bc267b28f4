//! Conditional adversarial motion priors: reference dataset, transition
//! buffers and the gait-conditioned discriminator.

mod buffer;
mod discriminator;
mod reference;

pub use buffer::TransitionBuffer;
pub use discriminator::{
    discriminator_loss, DiscLoss, DiscStats, Discriminator, DiscriminatorConfig, PenaltyMode,
};
pub use reference::{generate_reference_motion, ReferenceConfig, ReferenceMotion};

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::gait::{GaitError, NamedGait, PartialGaitParams, PARTIAL_GAIT_DIM};
use crate::kinematics::KinematicsError;

pub const CAMP_STATE_DIM: usize = 30;
pub const DISC_INPUT_DIM: usize = 2 * CAMP_STATE_DIM + PARTIAL_GAIT_DIM;
pub const DATASET_FREQUENCIES: [f64; 2] = [2.0, 4.0];

/// Per-block feature scaling applied when assembling discriminator inputs:
/// joint positions, joint velocities, base linear and angular velocity.
const FEATURE_SCALE: [f64; 4] = [1.0, 0.1, 1.0, 0.25];

#[derive(Debug, Error)]
pub enum CampError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid reference motion request: {0}")]
    InvalidReference(String),
    #[error("discriminator input has {actual} columns, expected {expected}")]
    Dimension { expected: usize, actual: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Gait(#[from] GaitError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("malformed dataset file {file}: {reason}")]
    Parse { file: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Joint and base motion features of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CampState {
    pub joint_pos: [f64; 12],
    pub joint_vel: [f64; 12],
    pub base_lin_vel: [f64; 3],
    pub base_ang_vel: [f64; 3],
}

impl CampState {
    pub fn to_array(&self) -> [f64; CAMP_STATE_DIM] {
        let mut v = [0.0; CAMP_STATE_DIM];
        v[..12].copy_from_slice(&self.joint_pos);
        v[12..24].copy_from_slice(&self.joint_vel);
        v[24..27].copy_from_slice(&self.base_lin_vel);
        v[27..].copy_from_slice(&self.base_ang_vel);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut s = Self {
            joint_pos: [0.0; 12],
            joint_vel: [0.0; 12],
            base_lin_vel: [0.0; 3],
            base_ang_vel: [0.0; 3],
        };
        s.joint_pos.copy_from_slice(&v[..12]);
        s.joint_vel.copy_from_slice(&v[12..24]);
        s.base_lin_vel.copy_from_slice(&v[24..27]);
        s.base_ang_vel.copy_from_slice(&v[27..30]);
        s
    }

    fn write_scaled(&self, out: &mut [f64]) {
        let raw = self.to_array();
        for (i, (o, r)) in out.iter_mut().zip(raw).enumerate() {
            let block = match i {
                0..12 => 0,
                12..24 => 1,
                24..27 => 2,
                _ => 3,
            };
            *o = r * FEATURE_SCALE[block];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Dataset,
    Agent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampTransition {
    pub state: CampState,
    pub next: CampState,
    pub gait: PartialGaitParams,
    pub provenance: Provenance,
}

impl CampTransition {
    /// Discriminator input, ordered `(s_t, s_{t+1}, g^p)`.
    pub fn input_row(&self) -> [f64; DISC_INPUT_DIM] {
        transition_row(&self.state, &self.next, &self.gait)
    }
}

pub fn transition_row(s: &CampState, next: &CampState, gait: &PartialGaitParams) -> [f64; DISC_INPUT_DIM] {
    let mut row = [0.0; DISC_INPUT_DIM];
    s.write_scaled(&mut row[..CAMP_STATE_DIM]);
    next.write_scaled(&mut row[CAMP_STATE_DIM..2 * CAMP_STATE_DIM]);
    row[2 * CAMP_STATE_DIM..].copy_from_slice(&gait.to_array());
    row
}

pub fn rows_to_matrix(rows: &[[f64; DISC_INPUT_DIM]]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), DISC_INPUT_DIM), |(i, j)| rows[i][j])
}

/// The ten reference trajectories: five gaits at two stepping frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct CampDataset {
    pub motions: Vec<ReferenceMotion>,
}

impl CampDataset {
    pub fn build(cfg: &ReferenceConfig) -> Result<Self, CampError> {
        let mut motions = Vec::with_capacity(10);
        for gait in NamedGait::ALL {
            for f in DATASET_FREQUENCIES {
                motions.push(generate_reference_motion(cfg, gait, f, cfg.speed_for(f))?);
            }
        }
        Ok(Self { motions })
    }

    pub fn len(&self) -> usize {
        self.motions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motions.is_empty()
    }

    pub fn pair_count(&self) -> usize {
        self.motions.iter().map(|m| m.len().saturating_sub(1)).sum()
    }

    /// Uniform draw over all adjacent frame pairs of all trajectories.
    pub fn sample_real<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<Vec<(usize, usize, CampTransition)>, CampError> {
        let total = self.pair_count();
        if total == 0 {
            return Err(CampError::EmptyDataset);
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let mut k = rng.random_range(0..total);
            for (mi, m) in self.motions.iter().enumerate() {
                let n = m.len().saturating_sub(1);
                if k < n {
                    out.push((
                        mi,
                        k,
                        CampTransition {
                            state: m.states[k],
                            next: m.states[k + 1],
                            gait: m.params,
                            provenance: Provenance::Dataset,
                        },
                    ));
                    break;
                }
                k -= n;
            }
        }
        Ok(out)
    }

    /// Discriminator inputs for a uniform batch of real transitions.
    pub fn sample_real_rows<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Array2<f64>, CampError> {
        let rows: Vec<_> = self
            .sample_real(batch, rng)?
            .iter()
            .map(|(_, _, t)| t.input_row())
            .collect();
        Ok(rows_to_matrix(&rows))
    }

    /// Every adjacent pair of one trajectory, conditioned on `gait`.
    pub fn motion_rows(&self, index: usize, gait: &PartialGaitParams) -> Array2<f64> {
        let m = &self.motions[index];
        let rows: Vec<_> = m
            .states
            .windows(2)
            .map(|w| transition_row(&w[0], &w[1], gait))
            .collect();
        rows_to_matrix(&rows)
    }

    pub fn find(&self, gait: NamedGait, frequency: f64) -> Option<usize> {
        self.motions
            .iter()
            .position(|m| m.gait == gait && m.params.frequency == frequency)
    }

    /// Writes one CSV per trajectory plus `manifest.csv`.
    pub fn export(&self, dir: &Path) -> Result<(), CampError> {
        fs::create_dir_all(dir)?;
        let mut manifest = String::from("file,gait,frequency,phi2,phi3,phi4,stance_ratio,forward_speed,frames\n");
        for m in &self.motions {
            let file = format!("{}.csv", m.label());
            let mut csv = String::from("frame");
            for prefix in ["q", "dq"] {
                for j in 0..12 {
                    write!(csv, ",{prefix}{j}").unwrap();
                }
            }
            csv.push_str(",vx,vy,vz,wx,wy,wz\n");
            for (k, s) in m.states.iter().enumerate() {
                write!(csv, "{k}").unwrap();
                for v in s.to_array() {
                    write!(csv, ",{v}").unwrap();
                }
                csv.push('\n');
            }
            fs::write(dir.join(&file), csv)?;
            let p = m.params;
            writeln!(
                manifest,
                "{file},{},{},{},{},{},{},{},{}",
                m.gait.name(),
                p.frequency,
                p.offsets[0],
                p.offsets[1],
                p.offsets[2],
                p.stance_ratio,
                m.forward_speed,
                m.len()
            )
            .unwrap();
        }
        fs::write(dir.join("manifest.csv"), manifest)?;
        Ok(())
    }

    /// Reads a dataset written by [`CampDataset::export`]. Contacts and
    /// phases are not stored and come back empty.
    pub fn import(dir: &Path) -> Result<Self, CampError> {
        let manifest_path = dir.join("manifest.csv");
        let manifest = fs::read_to_string(&manifest_path)?;
        let parse_err = |file: &str, reason: String| CampError::Parse {
            file: file.to_string(),
            reason,
        };
        let mut motions = Vec::new();
        for line in manifest.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 9 {
                return Err(parse_err("manifest.csv", format!("expected 9 columns, got {}", cols.len())));
            }
            let num = |i: usize| -> Result<f64, CampError> {
                cols[i]
                    .parse::<f64>()
                    .map_err(|e| parse_err("manifest.csv", format!("column {i}: {e}")))
            };
            let gait: NamedGait = cols[1].parse()?;
            let params = PartialGaitParams {
                offsets: [num(3)?, num(4)?, num(5)?],
                stance_ratio: num(6)?,
                frequency: num(2)?,
            };
            let body = fs::read_to_string(dir.join(cols[0]))?;
            let mut states = Vec::new();
            for row in body.lines().skip(1).filter(|l| !l.trim().is_empty()) {
                let vals: Result<Vec<f64>, _> = row.split(',').skip(1).map(str::parse::<f64>).collect();
                let vals = vals.map_err(|e| parse_err(cols[0], e.to_string()))?;
                if vals.len() != CAMP_STATE_DIM {
                    return Err(parse_err(cols[0], format!("expected {CAMP_STATE_DIM} values per row")));
                }
                states.push(CampState::from_slice(&vals));
            }
            motions.push(ReferenceMotion {
                gait,
                params,
                forward_speed: num(7)?,
                states,
                contacts: Vec::new(),
                phases: Vec::new(),
            });
        }
        Ok(Self { motions })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gait::{desired_contact_schedule, CONTACT_SIGMA};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset() -> CampDataset {
        CampDataset::build(&ReferenceConfig::default()).unwrap()
    }

    #[test]
    fn dataset_layout() {
        let d = dataset();
        assert_eq!(d.len(), 10);
        for m in &d.motions {
            assert_eq!(m.len(), 100);
            let expected = if m.gait == NamedGait::Walking { 0.75 } else { 0.5 };
            assert_eq!(m.params.stance_ratio, expected);
        }
    }

    #[test]
    fn joints_within_limits() {
        let cfg = ReferenceConfig::default();
        let d = CampDataset::build(&cfg).unwrap();
        let m = &cfg.morphology;
        for motion in &d.motions {
            for s in &motion.states {
                for (j, q) in s.joint_pos.iter().enumerate() {
                    assert!(*q >= m.joint_lower[j % 3] && *q <= m.joint_upper[j % 3], "{} joint {j} = {q}", motion.label());
                }
            }
        }
    }

    #[test]
    fn contacts_follow_schedule() {
        let d = dataset();
        for m in &d.motions {
            for (k, ph) in m.phases.iter().enumerate() {
                let sched = desired_contact_schedule(ph, m.params.stance_ratio, CONTACT_SIGMA).unwrap();
                assert_eq!(sched.stance_mask(), m.contacts[k], "{} frame {k}", m.label());
            }
        }
    }

    #[test]
    fn trot_diagonals_and_pronk_synchrony() {
        let d = dataset();
        let trot = &d.motions[d.find(NamedGait::Trotting, 2.0).unwrap()];
        for c in &trot.contacts {
            assert_eq!(c[0], c[3]);
            assert_eq!(c[1], c[2]);
        }
        let pronk = &d.motions[d.find(NamedGait::Pronking, 4.0).unwrap()];
        let mut saw_flight = false;
        for c in &pronk.contacts {
            assert!(c.iter().all(|&x| x == c[0]));
            saw_flight |= !c[0];
        }
        assert!(saw_flight);
    }

    #[test]
    fn sampling_is_adjacent_and_reproducible() {
        let d = dataset();
        let a = d.sample_real(64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = d.sample_real(64, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        for (mi, k, t) in &a {
            let m = &d.motions[*mi];
            assert_eq!(t.state, m.states[*k]);
            assert_eq!(t.next, m.states[*k + 1]);
            assert_eq!(t.gait, m.params);
        }
        let empty = CampDataset { motions: vec![] };
        assert!(matches!(
            empty.sample_real(1, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(CampError::EmptyDataset)
        ));
    }

    #[test]
    fn export_import_round_trip() {
        let d = dataset();
        let dir = tempfile::tempdir().unwrap();
        d.export(dir.path()).unwrap();
        let files = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(files, 11);
        let back = CampDataset::import(dir.path()).unwrap();
        assert_eq!(back.len(), 10);
        for (a, b) in d.motions.iter().zip(&back.motions) {
            assert_eq!(a.params, b.params);
            assert_eq!(a.states, b.states);
        }
    }
}
