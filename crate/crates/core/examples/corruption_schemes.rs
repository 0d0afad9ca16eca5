// Applies each corruption scheme to the same blob dataset and reports what
// changed.

use selfadapt::data::{corrupt, gen_synthetic, CorruptionScheme, CorruptionSpec, Generator, SyntheticSpec};
use selfadapt::Result;

pub struct SchemeStats {
    pub scheme: CorruptionScheme,
    pub selected: f64,
    pub label_agreement: f64,
    /// Fraction of input values that differ from the original.
    pub inputs_changed: f64,
}

pub fn run_example(rate: f64) -> Result<Vec<SchemeStats>> {
    let base = gen_synthetic(&SyntheticSpec {
        generator: Generator::GaussianBlobs,
        classes: 10,
        per_class: 500,
        dim: 16,
        separation: 3.0,
        seed: 0,
    })?;
    let mut out = Vec::new();
    for scheme in CorruptionScheme::ALL {
        let ds = corrupt(&base, &CorruptionSpec { scheme, rate, seed: 1 })?;
        let n = ds.len() as f64;
        let changed = ds.inputs().data().iter().zip(base.inputs().data()).filter(|(a, b)| a != b).count();
        out.push(SchemeStats {
            scheme,
            selected: ds.corrupted_mask().iter().filter(|&&m| m).count() as f64 / n,
            label_agreement: ds.label_agreement(),
            inputs_changed: changed as f64 / base.inputs().len() as f64,
        });
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let rate = 0.4;
    println!("rate {rate}; uniform label noise flips about rate * (c - 1) / c = {:.2}", rate * 0.9);
    println!("{:<18} {:>9} {:>16} {:>15}", "scheme", "selected", "label agreement", "inputs changed");
    for s in run_example(rate)? {
        println!("{:<18} {:>9.3} {:>16.3} {:>15.3}", s.scheme.name(), s.selected, s.label_agreement, s.inputs_changed);
    }
    Ok(())
}
