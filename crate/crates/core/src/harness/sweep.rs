use std::fmt;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{run, write_json, RunSummary};
use crate::error::{Error, Result};
use crate::metrics::{capacity_sweep_params, BASE_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NoiseRate,
    NoiseScheme,
    /// Sets every hidden layer to the value.
    Width,
    Alpha,
    StartEpoch,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NoiseRate => "noise_rate",
            SweepAxis::NoiseScheme => "noise_scheme",
            SweepAxis::Width => "width",
            SweepAxis::Alpha => "alpha",
            SweepAxis::StartEpoch => "start_epoch",
        }
    }

    fn key(self) -> &'static str {
        match self {
            SweepAxis::NoiseRate => "corruption.rate",
            SweepAxis::NoiseScheme => "corruption.scheme",
            SweepAxis::Width => "model.hidden",
            SweepAxis::Alpha => "sat.momentum",
            SweepAxis::StartEpoch => "sat.start_epoch",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            SweepAxis::NoiseRate,
            SweepAxis::NoiseScheme,
            SweepAxis::Width,
            SweepAxis::Alpha,
            SweepAxis::StartEpoch,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| Error::config("sweep.axis", format!("unknown axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: impl IntoIterator<Item = impl ToString>) -> Self {
        SweepSpec {
            axis,
            values: values.into_iter().map(|v| v.to_string()).collect(),
        }
    }

    /// The base config with one axis value applied. Width points adopt the
    /// capacity-scaled warm-up and momentum unless the base config sets
    /// either explicitly.
    pub fn point_config(&self, base: &ExperimentConfig, value: &str) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        if self.axis == SweepAxis::Width {
            let width: usize = value
                .parse()
                .map_err(|_| Error::config("sweep.values", format!("bad width `{value}`")))?;
            let depth = base.hidden.len().max(1);
            cfg.hidden = vec![width; depth];
            if base.sat_start_epoch.is_none() && base.sat_momentum.is_none() {
                let (start, alpha) = capacity_sweep_params(width, BASE_WIDTH)
                    .map_err(|e| Error::config("sweep.values", e.to_string()))?;
                cfg.sat_start_epoch = Some(start);
                cfg.sat_momentum = Some(alpha);
            }
        } else {
            cfg.set(self.axis.key(), value)?;
        }
        cfg.output_dir = base.output_dir.join(format!("{}_{}", self.axis, value));
        Ok(cfg)
    }

    pub fn validate(&self, base: &ExperimentConfig) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("sweep.values", "needs at least one value"));
        }
        for v in &self.values {
            self.point_config(base, v)?.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub outcome: std::result::Result<RunSummary, String>,
}

pub const SWEEP_CSV_HEADER: &str = "axis,value,status,start_epoch,alpha,acc_noisy_train,acc_clean_train,\
acc_noisy_val,acc_clean_val,clean_val_error,generalization_error,recovered_accuracy,\
early_stop_clean_accuracy,message";

/// Runs one experiment per axis value, in parallel, each in its own
/// subdirectory. A failing point is recorded and the rest still run.
/// Writes `sweep.csv` and `sweep.json` under the base output directory.
pub fn sweep(base: &ExperimentConfig, spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    if spec.values.is_empty() {
        return Err(Error::config("sweep.values", "needs at least one value"));
    }
    let points: Vec<SweepPoint> = spec
        .values
        .par_iter()
        .map(|value| {
            let outcome = spec.point_config(base, value).and_then(|cfg| {
                catch_unwind(AssertUnwindSafe(|| run(&cfg)))
                    .unwrap_or_else(|_| Err(Error::invalid("run panicked")))
            });
            SweepPoint {
                value: value.clone(),
                outcome: outcome.map_err(|e| e.to_string()),
            }
        })
        .collect();

    fs::create_dir_all(&base.output_dir)?;
    fs::write(base.output_dir.join("sweep.csv"), sweep_csv(spec.axis, &points))?;
    let json: Vec<_> = points
        .iter()
        .map(|p| {
            serde_json::json!({
                "value": p.value,
                "summary": p.outcome.as_ref().ok(),
                "error": p.outcome.as_ref().err(),
            })
        })
        .collect();
    write_json(&base.output_dir.join("sweep.json"), &json)?;
    Ok(points)
}

pub fn sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for p in points {
        let line = match &p.outcome {
            Ok(s) => {
                let m = &s.mean;
                format!(
                    "{axis},{},ok,{},{},{},{},{},{},{},{},{},{},",
                    p.value,
                    s.sat.start_epoch,
                    s.sat.momentum,
                    m.acc_noisy_train,
                    m.acc_clean_train,
                    m.acc_noisy_val,
                    m.acc_clean_val,
                    1.0 - m.acc_clean_val,
                    m.generalization_error,
                    m.recovered_accuracy,
                    m.early_stop_clean_accuracy,
                )
            }
            Err(msg) => format!(
                "{axis},{},failed,,,,,,,,,,,\"{}\"",
                p.value,
                msg.replace('"', "'")
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_points_use_capacity_rule() {
        let base = ExperimentConfig::default();
        let spec = SweepSpec::new(SweepAxis::Width, [32]);
        let cfg = spec.point_config(&base, "32").unwrap();
        assert_eq!(cfg.hidden, vec![32, 32]);
        assert_eq!(cfg.sat().start_epoch, 80);
        assert!((cfg.sat().momentum - 0.9f64.sqrt()).abs() < 1e-15);

        let mut pinned = base.clone();
        pinned.set("sat.momentum", "0.7").unwrap();
        let cfg = spec.point_config(&pinned, "32").unwrap();
        assert_eq!(cfg.sat().momentum, 0.7);
        assert_eq!(cfg.sat().start_epoch, 60);
    }

    #[test]
    fn other_axes_set_their_key() {
        let base = ExperimentConfig::default();
        let cfg = SweepSpec::new(SweepAxis::NoiseRate, [0.2]).point_config(&base, "0.2").unwrap();
        assert_eq!(cfg.corruption.rate, 0.2);
        assert!(cfg.output_dir.ends_with("noise_rate_0.2"));
        let bad = SweepSpec::new(SweepAxis::NoiseScheme, ["salt"]);
        assert!(bad.validate(&base).is_err());
        assert!("depth".parse::<SweepAxis>().is_err());
    }
}
