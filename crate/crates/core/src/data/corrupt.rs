use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionScheme {
    /// Replace the label with one drawn uniformly over all classes.
    CorruptedLabels,
    /// Replace the input with Gaussian noise matching the data's global mean and std.
    Gaussian,
    /// Permute the input's features with a fresh permutation per sample.
    RandomPixels,
    /// Permute the input's features with one permutation shared by all samples.
    ShuffledPixels,
    None,
}

impl CorruptionScheme {
    pub const ALL: [CorruptionScheme; 5] = [
        CorruptionScheme::CorruptedLabels,
        CorruptionScheme::Gaussian,
        CorruptionScheme::RandomPixels,
        CorruptionScheme::ShuffledPixels,
        CorruptionScheme::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionScheme::CorruptedLabels => "corrupted_labels",
            CorruptionScheme::Gaussian => "gaussian",
            CorruptionScheme::RandomPixels => "random_pixels",
            CorruptionScheme::ShuffledPixels => "shuffled_pixels",
            CorruptionScheme::None => "none",
        }
    }
}

impl fmt::Display for CorruptionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorruptionScheme::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown corruption scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CorruptionSpec {
    pub scheme: CorruptionScheme,
    pub rate: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::invalid(format!(
                "corruption rate must lie in [0, 1], got {}",
                self.rate
            )));
        }
        Ok(())
    }
}

/// Applies a corruption scheme to an uncorrupted dataset.
///
/// Each sample is selected independently with probability `rate` from one
/// seeded stream; the scheme's own draws come from a second stream, so the
/// selected set does not depend on the scheme.
pub fn corrupt(ds: &LabeledDataset, spec: &CorruptionSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    if ds.corrupted_mask().iter().any(|&m| m) || ds.has_input_corruption() {
        return Err(Error::invalid("dataset is already corrupted"));
    }
    if spec.scheme == CorruptionScheme::None {
        return Ok(ds.clone());
    }

    let mut select_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mask: Vec<bool> = (0..ds.len())
        .map(|_| select_rng.random::<f64>() < spec.rate)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);

    let c = ds.class_count();
    let mut noisy = ds.noisy_indices().to_vec();
    let mut inputs = ds.inputs().clone();
    let selected = || mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i);

    match spec.scheme {
        CorruptionScheme::CorruptedLabels => {
            for i in selected() {
                noisy[i] = rng.random_range(0..c);
            }
        }
        CorruptionScheme::Gaussian => {
            let (mean, std) = global_moments(ds.inputs());
            for i in selected() {
                for v in inputs.row_mut(i) {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = mean + std * z;
                }
            }
        }
        CorruptionScheme::RandomPixels => {
            let mut perm: Vec<usize> = (0..ds.dim()).collect();
            for i in selected() {
                perm.shuffle(&mut rng);
                permute_row(inputs.row_mut(i), &perm);
            }
        }
        CorruptionScheme::ShuffledPixels => {
            let mut perm: Vec<usize> = (0..ds.dim()).collect();
            perm.shuffle(&mut rng);
            for i in selected() {
                permute_row(inputs.row_mut(i), &perm);
            }
        }
        CorruptionScheme::None => unreachable!(),
    }

    let touches_inputs = spec.scheme != CorruptionScheme::CorruptedLabels && mask.iter().any(|&m| m);
    let clean_inputs = touches_inputs.then(|| ds.inputs().clone());
    Ok(LabeledDataset::from_parts(
        inputs,
        noisy,
        ds.clean_labels().to_vec(),
        mask,
        c,
        clean_inputs,
    ))
}

/// Mean and population standard deviation over every entry.
pub(crate) fn global_moments(x: &Tensor) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn permute_row(row: &mut [f64], perm: &[usize]) {
    let original = row.to_vec();
    for (dst, &src) in row.iter_mut().zip(perm) {
        *dst = original[src];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, d: usize, c: usize) -> LabeledDataset {
        let x = Tensor::from_vec(&[n, d], (0..n * d).map(|v| (v % 97) as f64 / 97.0).collect()).unwrap();
        LabeledDataset::new(x, (0..n).map(|i| i % c).collect(), c).unwrap()
    }

    fn spec(scheme: CorruptionScheme, rate: f64) -> CorruptionSpec {
        CorruptionSpec { scheme, rate, seed: 42 }
    }

    #[test]
    fn zero_rate_is_identity() {
        let ds = ramp(200, 6, 4);
        for scheme in CorruptionScheme::ALL {
            let out = corrupt(&ds, &spec(scheme, 0.0)).unwrap();
            assert_eq!(out, ds, "{scheme}");
        }
    }

    #[test]
    fn shuffled_pixels_share_one_permutation() {
        let ds = ramp(20, 8, 2);
        let out = corrupt(&ds, &spec(CorruptionScheme::ShuffledPixels, 1.0)).unwrap();
        assert!(out.corrupted_mask().iter().all(|&m| m));
        // Recover the permutation from sample 0 using distinct reference values.
        let probe = Tensor::from_vec(&[1, 8], (0..8).map(|v| v as f64).collect()).unwrap();
        let probe_ds = LabeledDataset::new(probe, vec![0], 2).unwrap();
        let perm = corrupt(&probe_ds, &spec(CorruptionScheme::ShuffledPixels, 1.0)).unwrap();
        let perm: Vec<usize> = perm.inputs().row(0).iter().map(|&v| v as usize).collect();
        for i in 0..20 {
            let want: Vec<f64> = perm.iter().map(|&j| ds.inputs().row(i)[j]).collect();
            assert_eq!(out.inputs().row(i), want.as_slice());
            let mut a = out.inputs().row(i).to_vec();
            let mut b = ds.inputs().row(i).to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
        assert_eq!(out.clean_inputs(), ds.inputs());
    }

    #[test]
    fn random_pixels_differ_between_samples() {
        let d = 10;
        let x = Tensor::from_vec(&[2, d], (0..2 * d).map(|v| (v % d) as f64).collect()).unwrap();
        let ds = LabeledDataset::new(x, vec![0, 1], 2).unwrap();
        let out = corrupt(&ds, &spec(CorruptionScheme::RandomPixels, 1.0)).unwrap();
        assert_ne!(out.inputs().row(0), out.inputs().row(1));
    }

    #[test]
    fn unselected_samples_untouched() {
        let ds = ramp(500, 5, 3);
        for scheme in [
            CorruptionScheme::CorruptedLabels,
            CorruptionScheme::Gaussian,
            CorruptionScheme::RandomPixels,
        ] {
            let out = corrupt(&ds, &spec(scheme, 0.3)).unwrap();
            assert_eq!((out.len(), out.dim(), out.class_count()), (500, 5, 3));
            for i in (0..500).filter(|&i| !out.corrupted_mask()[i]) {
                assert_eq!(out.inputs().row(i), ds.inputs().row(i));
                assert_eq!(out.noisy_indices()[i], ds.noisy_indices()[i]);
            }
            assert_eq!(out.clean_labels(), ds.clean_labels());
        }
    }

    #[test]
    fn label_scheme_keeps_inputs() {
        let ds = ramp(100, 4, 5);
        let out = corrupt(&ds, &spec(CorruptionScheme::CorruptedLabels, 0.5)).unwrap();
        assert!(!out.has_input_corruption());
        assert_eq!(out.inputs(), ds.inputs());
    }

    #[test]
    fn rejects_bad_rate_and_double_corruption() {
        let ds = ramp(10, 2, 2);
        assert!(corrupt(&ds, &spec(CorruptionScheme::Gaussian, 1.5)).is_err());
        let once = corrupt(&ds, &spec(CorruptionScheme::CorruptedLabels, 1.0)).unwrap();
        assert!(corrupt(&once, &spec(CorruptionScheme::Gaussian, 0.1)).is_err());
        assert!("salt_and_pepper".parse::<CorruptionScheme>().is_err());
        assert_eq!("random_pixels".parse::<CorruptionScheme>().unwrap(), CorruptionScheme::RandomPixels);
    }

    #[test]
    fn deterministic_for_seed() {
        let ds = ramp(300, 4, 3);
        let s = spec(CorruptionScheme::Gaussian, 0.4);
        assert_eq!(corrupt(&ds, &s).unwrap(), corrupt(&ds, &s).unwrap());
    }
}
