//! Procedural heightfields for the five terrain families.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

pub const MAX_LEVEL: u32 = 9;
const MAGIC: &[u8; 4] = b"MGHF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainType {
    RoughFlat,
    Slope,
    Wave,
    Stairs,
    DiscreteSteps,
}

impl TerrainType {
    pub const ALL: [TerrainType; 5] = [
        TerrainType::RoughFlat,
        TerrainType::Slope,
        TerrainType::Wave,
        TerrainType::Stairs,
        TerrainType::DiscreteSteps,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TerrainType::RoughFlat => "rough_flat",
            TerrainType::Slope => "slope",
            TerrainType::Wave => "wave",
            TerrainType::Stairs => "stairs",
            TerrainType::DiscreteSteps => "discrete_steps",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&t| t == self).unwrap()
    }
}

impl fmt::Display for TerrainType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TerrainType {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|t| t.name() == key || (key == "flat" && *t == TerrainType::RoughFlat))
            .ok_or_else(|| SimError::UnknownTerrain(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TerrainConfig {
    /// Tile extent along x (m); the robot spawns at x = 0.
    pub length: f64,
    pub width: f64,
    /// World x of the tile's rear edge.
    pub origin_x: f64,
    pub spacing: f64,
    /// Features (slope, stairs) begin this far ahead of the spawn point.
    pub feature_start: f64,
    pub rough_amplitude: f64,
    pub slope_min_deg: f64,
    pub slope_max_deg: f64,
    pub wave_amplitude: f64,
    pub wave_length: f64,
    pub stair_min_riser: f64,
    pub stair_max_riser: f64,
    pub stair_tread: f64,
    pub block_size: f64,
    pub block_max_height: f64,
}

impl Default for TerrainConfig {
    fn default() -> Self {
        Self {
            length: 12.0,
            width: 8.0,
            origin_x: -2.0,
            spacing: 0.05,
            feature_start: 0.5,
            rough_amplitude: 0.03,
            slope_min_deg: 10.0,
            slope_max_deg: 40.0,
            wave_amplitude: 0.15,
            wave_length: 2.0,
            stair_min_riser: 0.05,
            stair_max_riser: 0.20,
            stair_tread: 0.25,
            block_size: 0.5,
            block_max_height: 0.15,
        }
    }
}

impl TerrainConfig {
    /// Interpolates a per-level parameter: 0 at level 0, `lo` at level 1,
    /// `hi` at the top level.
    fn ramp(level: u32, lo: f64, hi: f64) -> f64 {
        if level == 0 {
            0.0
        } else {
            lo + (hi - lo) * (level - 1) as f64 / (MAX_LEVEL - 1) as f64
        }
    }

    pub fn stair_riser(&self, level: u32) -> f64 {
        Self::ramp(level, self.stair_min_riser, self.stair_max_riser)
    }

    pub fn slope_deg(&self, level: u32) -> f64 {
        Self::ramp(level, self.slope_min_deg, self.slope_max_deg)
    }

    pub fn rough_amplitude(&self, level: u32) -> f64 {
        self.rough_amplitude * level as f64 / MAX_LEVEL as f64
    }
}

/// Regular-grid heightfield; `heights[iy * nx + ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainField {
    pub kind: TerrainType,
    pub level: u32,
    pub nx: usize,
    pub ny: usize,
    pub spacing: f64,
    pub origin: [f64; 2],
    pub heights: Vec<f64>,
}

impl TerrainField {
    pub fn flat() -> Self {
        generate_terrain(&TerrainConfig::default(), TerrainType::RoughFlat, 0, 0).expect("flat terrain")
    }

    fn at(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.nx + ix]
    }

    fn cell(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        let gx = ((x - self.origin[0]) / self.spacing).clamp(0.0, (self.nx - 1) as f64);
        let gy = ((y - self.origin[1]) / self.spacing).clamp(0.0, (self.ny - 1) as f64);
        let ix = (gx.floor() as usize).min(self.nx - 2);
        let iy = (gy.floor() as usize).min(self.ny - 2);
        (ix, iy, gx - ix as f64, gy - iy as f64)
    }

    /// Bilinear height; points off the map take the border height.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        let (ix, iy, tx, ty) = self.cell(x, y);
        let h00 = self.at(ix, iy);
        let h10 = self.at(ix + 1, iy);
        let h01 = self.at(ix, iy + 1);
        let h11 = self.at(ix + 1, iy + 1);
        (1.0 - ty) * ((1.0 - tx) * h00 + tx * h10) + ty * ((1.0 - tx) * h01 + tx * h11)
    }

    /// Upward unit normal of the interpolated surface.
    pub fn normal(&self, x: f64, y: f64) -> [f64; 3] {
        let (ix, iy, tx, ty) = self.cell(x, y);
        let h00 = self.at(ix, iy);
        let h10 = self.at(ix + 1, iy);
        let h01 = self.at(ix, iy + 1);
        let h11 = self.at(ix + 1, iy + 1);
        let dx = ((1.0 - ty) * (h10 - h00) + ty * (h11 - h01)) / self.spacing;
        let dy = ((1.0 - tx) * (h01 - h00) + tx * (h11 - h10)) / self.spacing;
        let n = (dx * dx + dy * dy + 1.0).sqrt();
        [-dx / n, -dy / n, 1.0 / n]
    }

    pub fn max_abs_height(&self) -> f64 {
        self.heights.iter().fold(0.0f64, |m, h| m.max(h.abs()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + 8 * self.heights.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind.index() as u8);
        out.extend_from_slice(&self.level.to_le_bytes());
        out.extend_from_slice(&(self.nx as u32).to_le_bytes());
        out.extend_from_slice(&(self.ny as u32).to_le_bytes());
        for v in [self.spacing, self.origin[0], self.origin[1]] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for h in &self.heights {
            out.extend_from_slice(&h.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, SimError> {
        let bad = |why: &str| SimError::BadHeightfield(why.to_string());
        if buf.len() < 45 || &buf[..4] != MAGIC {
            return Err(bad("bad magic or header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(buf[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(buf[o..o + 8].try_into().unwrap());
        if u32_at(4) != VERSION {
            return Err(bad("unsupported version"));
        }
        let kind = *TerrainType::ALL
            .get(buf[8] as usize)
            .ok_or_else(|| bad("unknown terrain type"))?;
        let level = u32_at(9);
        let nx = u32_at(13) as usize;
        let ny = u32_at(17) as usize;
        let spacing = f64_at(21);
        let origin = [f64_at(29), f64_at(37)];
        let n = nx.checked_mul(ny).ok_or_else(|| bad("grid too large"))?;
        if nx < 2 || ny < 2 || !(spacing > 0.0) || buf.len() != 45 + 8 * n {
            return Err(bad("inconsistent dimensions"));
        }
        let heights = buf[45..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self {
            kind,
            level,
            nx,
            ny,
            spacing,
            origin,
            heights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// `x,y,height` rows for inspection.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,height\n");
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                let x = self.origin[0] + ix as f64 * self.spacing;
                let y = self.origin[1] + iy as f64 * self.spacing;
                s.push_str(&format!("{x},{y},{}\n", self.at(ix, iy)));
            }
        }
        s
    }
}

/// Builds a tile of the given family and difficulty level (0..=9).
pub fn generate_terrain(
    cfg: &TerrainConfig,
    kind: TerrainType,
    level: u32,
    seed: u64,
) -> Result<TerrainField, SimError> {
    if level > MAX_LEVEL {
        return Err(SimError::InvalidLevel(level));
    }
    if !(cfg.spacing > 0.0) || cfg.length < 2.0 * cfg.spacing || cfg.width < 2.0 * cfg.spacing {
        return Err(SimError::InvalidConfig("terrain grid".into()));
    }
    let nx = (cfg.length / cfg.spacing).round() as usize + 1;
    let ny = (cfg.width / cfg.spacing).round() as usize + 1;
    let origin = [cfg.origin_x, -cfg.width / 2.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut heights = vec![0.0; nx * ny];
    let ahead = |ix: usize| origin[0] + ix as f64 * cfg.spacing - cfg.feature_start;
    match kind {
        TerrainType::RoughFlat => {
            let a = cfg.rough_amplitude(level);
            if a > 0.0 {
                for h in &mut heights {
                    *h = rng.random_range(-a..=a);
                }
            }
        }
        TerrainType::Slope => {
            let grade = cfg.slope_deg(level).to_radians().tan();
            for iy in 0..ny {
                for ix in 0..nx {
                    heights[iy * nx + ix] = grade * ahead(ix).max(0.0);
                }
            }
        }
        TerrainType::Wave => {
            let amp = cfg.wave_amplitude * level as f64 / MAX_LEVEL as f64;
            let k = std::f64::consts::TAU / cfg.wave_length;
            for iy in 0..ny {
                for ix in 0..nx {
                    let x = origin[0] + ix as f64 * cfg.spacing;
                    let y = origin[1] + iy as f64 * cfg.spacing;
                    heights[iy * nx + ix] = 0.25 * amp * ((k * x).sin() + (k * y).sin());
                }
            }
        }
        TerrainType::Stairs => {
            let riser = cfg.stair_riser(level);
            for iy in 0..ny {
                for ix in 0..nx {
                    // Offset by half a cell so a grid line never sits on a
                    // step edge.
                    let d = ahead(ix) + 0.5 * cfg.spacing;
                    let steps = if d > 0.0 { (d / cfg.stair_tread).floor() + 1.0 } else { 0.0 };
                    heights[iy * nx + ix] = riser * steps;
                }
            }
        }
        TerrainType::DiscreteSteps => {
            let hmax = cfg.block_max_height * level as f64 / MAX_LEVEL as f64;
            let bx = (cfg.length / cfg.block_size).ceil() as usize + 1;
            let by = (cfg.width / cfg.block_size).ceil() as usize + 1;
            let blocks: Vec<f64> = (0..bx * by)
                .map(|_| if hmax > 0.0 { rng.random_range(-hmax..=hmax) } else { 0.0 })
                .collect();
            for iy in 0..ny {
                for ix in 0..nx {
                    let x = ix as f64 * cfg.spacing;
                    let y = iy as f64 * cfg.spacing;
                    let i = (x / cfg.block_size) as usize;
                    let j = (y / cfg.block_size) as usize;
                    heights[iy * nx + ix] = blocks[j * bx + i];
                }
            }
            // Keep the spawn pad level.
            for iy in 0..ny {
                for ix in 0..nx {
                    let x = origin[0] + ix as f64 * cfg.spacing;
                    let y = origin[1] + iy as f64 * cfg.spacing;
                    if x.abs() < 0.5 && y.abs() < 0.5 {
                        heights[iy * nx + ix] = 0.0;
                    }
                }
            }
        }
    }
    Ok(TerrainField {
        kind,
        level,
        nx,
        ny,
        spacing: cfg.spacing,
        origin,
        heights,
    })
}
