use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, GaitError, Result};

/// Piecewise-constant height map on a square grid. Each cell draws its
/// height uniformly from `[-max_height, max_height]` with a generator seeded
/// from `(seed, i, j)`, so the map is reproducible and needs no storage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Terrain {
    #[serde(default)]
    pub max_height: f64,
    #[serde(default = "default_cell")]
    pub cell_size: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_cell() -> f64 {
    0.1
}

impl Default for Terrain {
    fn default() -> Self {
        Self::flat()
    }
}

impl Terrain {
    pub fn flat() -> Self {
        Self {
            max_height: 0.0,
            cell_size: default_cell(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("terrain", &[self.max_height, self.cell_size])?;
        if self.max_height < 0.0 || self.cell_size <= 0.0 {
            return Err(GaitError::InvalidInput("terrain needs max_height >= 0 and cell_size > 0".into()));
        }
        Ok(())
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        if self.max_height == 0.0 {
            return 0.0;
        }
        let i = (x / self.cell_size).floor() as i64;
        let j = (y / self.cell_size).floor() as i64;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.seed, i, j));
        rng.random_range(-self.max_height..=self.max_height)
    }
}

fn mix(seed: u64, i: i64, j: i64) -> u64 {
    // splitmix64 finalizer over the packed cell key
    let mut z = seed
        ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (j as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F).rotate_left(31);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
