//! Reproducible random streams keyed by `(seed, path)`.
//!
//! Every stream is a ChaCha12 generator whose 256-bit key is the SHA-256
//! digest of the seed and the path, so a stream depends only on its own
//! coordinates and never on how many streams were opened before it or on
//! which worker opened it.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{domain, Result};

/// Coordinates of a random stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub path: Vec<u64>,
}

/// The generator behind an [`RngStream`].
pub type StreamRng = ChaCha12Rng;

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: Vec::new(),
        }
    }

    pub fn with_path(seed: u64, path: &[u64]) -> Self {
        Self {
            seed,
            path: path.to_vec(),
        }
    }

    /// Stream one level deeper in the path.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            seed: self.seed,
            path,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut h = Sha256::new();
        h.update(b"dsm-stream/v1");
        h.update(self.seed.to_le_bytes());
        h.update((self.path.len() as u64).to_le_bytes());
        for p in &self.path {
            h.update(p.to_le_bytes());
        }
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        ChaCha12Rng::from_seed(key)
    }
}

pub fn sample_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn sample_chi_square<R: rand::Rng + ?Sized>(df: f64, rng: &mut R) -> Result<f64> {
    let dist = ChiSquared::new(df).map_err(|e| domain(format!("chi-square df={df}: {e}")))?;
    Ok(dist.sample(rng))
}

/// Draw `(Z + ncp) / √(V/df)` with `Z ~ N(0,1)` and `V ~ χ²(df)`.
pub fn sample_noncentral_t<R: rand::Rng + ?Sized>(df: f64, ncp: f64, rng: &mut R) -> Result<f64> {
    if !(df > 0.0) || !ncp.is_finite() {
        return Err(domain(format!(
            "noncentral t requires df > 0, got df={df}, ncp={ncp}"
        )));
    }
    let z = sample_standard_normal(rng);
    let v = sample_chi_square(df, rng)?;
    Ok((z + ncp) / (v / df).sqrt())
}
