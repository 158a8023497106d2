//! Seeded Brownian increments and their exact aggregation onto coarser grids.
//!
//! Every sample path owns an independent ChaCha8 stream keyed by a
//! SplitMix64 hash of `(base_seed, sample_index)`, so a sample regenerates
//! bit-identically no matter which worker produces it. Standard normals are
//! drawn with the ziggurat sampler of `rand_distr::StandardNormal` and scaled
//! by `√Δ`.
//!
//! Coarse grids are built by summing fine increments, so a coarse path and the
//! fine reference are driven by the same Brownian motion.

use std::io::{self, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SfdeError};

/// Magic bytes of the binary grid dump.
pub const DUMP_MAGIC: &[u8; 8] = b"SFDEBG01";

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    delta_fine: f64,
    dim_noise: usize,
    increments: Vec<f64>,
    base_seed: u64,
    sample_index: u64,
    sample_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-sample stream key derived from `(base_seed, sample_index)`.
pub fn sample_seed(base_seed: u64, sample_index: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ sample_index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

impl BrownianGrid {
    /// Draws `n_fine` i.i.d. `N(0, delta_fine·I)` increments of dimension
    /// `dim_noise` for sample `sample_index` of the experiment `base_seed`.
    pub fn generate(
        base_seed: u64,
        sample_index: u64,
        n_fine: usize,
        delta_fine: f64,
        dim_noise: usize,
    ) -> Result<Self> {
        if n_fine == 0 || dim_noise == 0 {
            return Err(SfdeError::Config("noise grid needs n_fine >= 1 and dim_noise >= 1".into()));
        }
        if !(delta_fine.is_finite() && delta_fine > 0.0) {
            return Err(SfdeError::Config(format!("fine step {delta_fine} must be positive")));
        }
        let seed = sample_seed(base_seed, sample_index);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = delta_fine.sqrt();
        let increments = (0..n_fine * dim_noise)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
            .collect::<Vec<f64>>();
        Ok(BrownianGrid {
            delta_fine,
            dim_noise,
            increments,
            base_seed,
            sample_index,
            sample_seed: seed,
        })
    }

    /// A grid with prescribed increments (row-major, `n × dim_noise`).
    pub fn from_increments(delta_fine: f64, dim_noise: usize, increments: Vec<f64>) -> Result<Self> {
        if dim_noise == 0 || increments.is_empty() || !increments.len().is_multiple_of(dim_noise) {
            return Err(SfdeError::Config("increment buffer does not match dim_noise".into()));
        }
        if !(delta_fine.is_finite() && delta_fine > 0.0) {
            return Err(SfdeError::Config(format!("fine step {delta_fine} must be positive")));
        }
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(SfdeError::Config("increments must be finite".into()));
        }
        Ok(BrownianGrid {
            delta_fine,
            dim_noise,
            increments,
            base_seed: 0,
            sample_index: 0,
            sample_seed: 0,
        })
    }

    /// Tags the grid with a sample identity, used by coupling checks.
    pub fn with_identity(mut self, base_seed: u64, sample_index: u64) -> Self {
        self.base_seed = base_seed;
        self.sample_index = sample_index;
        self.sample_seed = sample_seed(base_seed, sample_index);
        self
    }

    pub fn delta_fine(&self) -> f64 {
        self.delta_fine
    }

    pub fn dim_noise(&self) -> usize {
        self.dim_noise
    }

    /// Number of increments `N_fine`.
    pub fn len(&self) -> usize {
        self.increments.len() / self.dim_noise
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn sample_seed(&self) -> u64 {
        self.sample_seed
    }

    /// `B((k+1)Δ) - B(kΔ)`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim_noise..(k + 1) * self.dim_noise]
    }

    pub fn increments_flat(&self) -> &[f64] {
        &self.increments
    }

    /// Sum of increments `[from, to)` in ascending order: `B(to·Δ) - B(from·Δ)`.
    pub fn partial_sum(&self, from: usize, to: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim_noise];
        for k in from..to {
            for (a, v) in acc.iter_mut().zip(self.increment(k)) {
                *a += v;
            }
        }
        acc
    }

    /// Aggregates blocks of `factor` consecutive increments.
    ///
    /// Even factors are reduced by pairwise halving, so that
    /// `coarsen(coarsen(g, 2), 2)` and `coarsen(g, 4)` agree bit for bit;
    /// an odd remaining factor is summed left to right.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianGrid> {
        if factor == 0 || !self.len().is_multiple_of(factor) {
            return Err(SfdeError::Config(format!(
                "factor {factor} does not divide the {} fine increments",
                self.len()
            )));
        }
        let mut grid = self.clone();
        let mut remaining = factor;
        while remaining.is_multiple_of(2) {
            grid = grid.sum_blocks(2);
            remaining /= 2;
        }
        if remaining > 1 {
            grid = grid.sum_blocks(remaining);
        }
        Ok(grid)
    }

    fn sum_blocks(&self, block: usize) -> BrownianGrid {
        let d = self.dim_noise;
        let n = self.len() / block;
        let mut out = vec![0.0; n * d];
        for j in 0..n {
            let dst = &mut out[j * d..(j + 1) * d];
            dst.copy_from_slice(self.increment(j * block));
            for k in 1..block {
                for (a, v) in dst.iter_mut().zip(self.increment(j * block + k)) {
                    *a += v;
                }
            }
        }
        BrownianGrid {
            delta_fine: self.delta_fine * block as f64,
            increments: out,
            ..*self
        }
    }

    /// Writes the debugging dump: `"SFDEBG01"`, `N_fine` as little-endian
    /// `u64`, `Δ_fine` as little-endian `f64`, then the increments as
    /// little-endian `f64`, row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(self.len() as u64).to_le_bytes())?;
        w.write_all(&self.delta_fine.to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`BrownianGrid::write_binary`]. The noise
    /// dimension is inferred from the payload length.
    pub fn read_binary<R: Read>(mut r: R) -> io::Result<BrownianGrid> {
        let invalid = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut header = [0u8; 24];
        r.read_exact(&mut header)?;
        if &header[..8] != DUMP_MAGIC {
            return Err(invalid("bad magic"));
        }
        let n_fine = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        let delta_fine = f64::from_le_bytes(header[16..24].try_into().unwrap());
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        if n_fine == 0 || payload.len() % (8 * n_fine) != 0 {
            return Err(invalid("payload length does not match N_fine"));
        }
        let increments: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let dim = increments.len() / n_fine;
        BrownianGrid::from_increments(delta_fine, dim, increments).map_err(|e| invalid(&e.to_string()))
    }
}
