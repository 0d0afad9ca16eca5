use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// Isotropic clusters around the simplex vertices `e_k` (or the unit
    /// circle when `dim < classes`).
    GaussianBlobs,
    /// Interleaved planar spiral arms, one per class.
    Spirals,
    /// Two interleaving half circles; always two classes.
    TwoMoons,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_blobs" => Ok(Generator::GaussianBlobs),
            "spirals" => Ok(Generator::Spirals),
            "two_moons" => Ok(Generator::TwoMoons),
            other => Err(Error::invalid(format!("unknown generator `{other}`"))),
        }
    }
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::GaussianBlobs => "gaussian_blobs",
            Generator::Spirals => "spirals",
            Generator::TwoMoons => "two_moons",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Noise standard deviation is `1 / separation`.
    pub separation: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 {
            return Err(Error::invalid("per_class must be at least 1"));
        }
        if !(self.separation > 0.0) {
            return Err(Error::invalid("separation must be positive"));
        }
        if self.classes < 2 {
            return Err(Error::invalid("synthetic data needs at least two classes"));
        }
        if self.dim == 0 {
            return Err(Error::invalid("dim must be at least 1"));
        }
        if matches!(self.generator, Generator::Spirals | Generator::TwoMoons) && self.dim < 2 {
            return Err(Error::invalid("planar generators need dim >= 2"));
        }
        if self.generator == Generator::TwoMoons && self.classes != 2 {
            return Err(Error::invalid("two_moons has exactly two classes"));
        }
        Ok(())
    }

    /// Cluster centre of a class for the blob generator.
    pub fn blob_mean(&self, class: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        if self.dim >= self.classes {
            m[class] = 1.0;
        } else if self.dim == 1 {
            m[0] = class as f64;
        } else {
            let angle = 2.0 * PI * class as f64 / self.classes as f64;
            m[0] = angle.cos();
            m[1] = angle.sin();
        }
        m
    }
}

/// Draws `classes * per_class` samples. Sample `i` belongs to class
/// `i % classes`, so every prefix is nearly balanced.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.classes * spec.per_class;
    let noise = 1.0 / spec.separation;
    let means: Vec<Vec<f64>> = (0..spec.classes).map(|k| spec.blob_mean(k)).collect();
    let mut data = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % spec.classes;
        let mut point = match spec.generator {
            Generator::GaussianBlobs => means[k].clone(),
            Generator::Spirals => {
                let t: f64 = rng.random_range(0.1..1.0);
                let angle = 3.0 * PI * t + 2.0 * PI * k as f64 / spec.classes as f64;
                planar(spec.dim, t * angle.cos(), t * angle.sin())
            }
            Generator::TwoMoons => {
                let theta: f64 = rng.random_range(0.0..PI);
                if k == 0 {
                    planar(spec.dim, theta.cos(), theta.sin())
                } else {
                    planar(spec.dim, 1.0 - theta.cos(), 0.5 - theta.sin())
                }
            }
        };
        for v in point.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += noise * z;
        }
        data.extend(point);
        labels.push(k);
    }
    LabeledDataset::new(Tensor::from_vec(&[n, spec.dim], data)?, labels, spec.classes)
}

/// Two-moons data in the plane with Gaussian jitter of standard deviation `noise`.
pub fn two_moons(per_class: usize, noise: f64, seed: u64) -> Result<LabeledDataset> {
    if !(noise > 0.0) {
        return Err(Error::invalid("two_moons noise must be positive"));
    }
    gen_synthetic(&SyntheticSpec {
        generator: Generator::TwoMoons,
        classes: 2,
        per_class,
        dim: 2,
        separation: 1.0 / noise,
        seed,
    })
}

fn planar(dim: usize, x: f64, y: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = x;
    v[1] = y;
    v
}
