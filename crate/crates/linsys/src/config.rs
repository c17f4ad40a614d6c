//! Run-configuration ingestion.
//!
//! Configurations are JSON documents with four sections: `model` (the kernel
//! law), `run` (horizon, sampling, seeding), `output` (file paths), and
//! `options` (prune threshold, worker count). Parsing walks the document
//! manually so every schema error carries the JSON pointer of the offending
//! field; kernel assumption failures are a distinct error class from schema
//! problems, since they name model-level conditions rather than syntax.

use crate::kernel::{KernelAtom, KernelDistribution, KernelError};
use crate::lattice::{MassField, Site};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config schema error at {pointer}: {message}")]
    Schema { pointer: String, message: String },
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("model assumption failure: {0}")]
    Assumption(String),
}

/// A fully validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub kernel: KernelDistribution,
    pub t_max: f64,
    pub max_events: u64,
    pub sample_times: Vec<f64>,
    pub seed: u64,
    pub runs: u64,
    pub csv_path: String,
    pub report_path: String,
    pub prune_threshold: Option<f64>,
    pub workers: usize,
}

fn schema_err<T>(pointer: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Schema {
        pointer: pointer.to_string(),
        message: message.into(),
    })
}

fn as_object<'a>(
    v: &'a Value,
    pointer: &str,
) -> Result<&'a serde_json::Map<String, Value>, ConfigError> {
    v.as_object()
        .ok_or(())
        .or_else(|_| schema_err(pointer, "expected an object"))
}

fn as_f64(v: &Value, pointer: &str) -> Result<f64, ConfigError> {
    v.as_f64()
        .ok_or(())
        .or_else(|_| schema_err(pointer, "expected a number"))
}

fn as_u64(v: &Value, pointer: &str) -> Result<u64, ConfigError> {
    v.as_u64()
        .ok_or(())
        .or_else(|_| schema_err(pointer, "expected a nonnegative integer"))
}

fn as_str<'a>(v: &'a Value, pointer: &str) -> Result<&'a str, ConfigError> {
    v.as_str()
        .ok_or(())
        .or_else(|_| schema_err(pointer, "expected a string"))
}

fn as_array<'a>(v: &'a Value, pointer: &str) -> Result<&'a Vec<Value>, ConfigError> {
    v.as_array()
        .ok_or(())
        .or_else(|_| schema_err(pointer, "expected an array"))
}

fn require<'a>(
    obj: &'a serde_json::Map<String, Value>,
    pointer: &str,
    key: &str,
) -> Result<&'a Value, ConfigError> {
    obj.get(key)
        .ok_or(())
        .or_else(|_| schema_err(&format!("{pointer}/{key}"), "missing required field"))
}

fn parse_site(v: &Value, pointer: &str, d: usize) -> Result<Site, ConfigError> {
    let arr = as_array(v, pointer)?;
    if arr.len() != d {
        return schema_err(
            pointer,
            format!("site needs exactly {d} coordinates, got {}", arr.len()),
        );
    }
    let mut coords = Vec::with_capacity(d);
    for (i, c) in arr.iter().enumerate() {
        let p = format!("{pointer}/{i}");
        let n = c
            .as_i64()
            .ok_or(())
            .or_else(|_| schema_err::<i64>(&p, "expected an integer coordinate"))?;
        if n.abs() > i32::MAX as i64 {
            return schema_err(&p, "coordinate out of range");
        }
        coords.push(n as i32);
    }
    Ok(Site::new(&coords))
}

/// Entries like `[[x, y], mass]`.
fn parse_field(v: &Value, pointer: &str, d: usize) -> Result<MassField, ConfigError> {
    let arr = as_array(v, pointer)?;
    let mut f = MassField::new();
    for (i, entry) in arr.iter().enumerate() {
        let p = format!("{pointer}/{i}");
        let pair = as_array(entry, &p)?;
        if pair.len() != 2 {
            return schema_err(&p, "expected [site, mass]");
        }
        let site = parse_site(&pair[0], &format!("{p}/0"), d)?;
        let mass = as_f64(&pair[1], &format!("{p}/1"))?;
        if mass < 0.0 || !mass.is_finite() {
            return schema_err(&format!("{p}/1"), "mass must be finite and nonnegative");
        }
        if mass > 0.0 {
            f.add_assign(site, mass);
        }
    }
    Ok(f)
}

fn lift_kernel_error(e: KernelError) -> ConfigError {
    match e {
        KernelError::InvalidParameter(m) => ConfigError::InvalidParameter(m),
        KernelError::AssumptionViolated(m) => ConfigError::Assumption(m),
    }
}

fn parse_model(v: &Value) -> Result<KernelDistribution, ConfigError> {
    let pointer = "/model";
    let obj = as_object(v, pointer)?;
    let kind = as_str(require(obj, pointer, "type")?, "/model/type")?;
    let d = as_u64(require(obj, pointer, "d")?, "/model/d")? as usize;
    match kind {
        "bcpp" => {
            let lambda = as_f64(require(obj, pointer, "lambda")?, "/model/lambda")?;
            KernelDistribution::bcpp(d, lambda).map_err(lift_kernel_error)
        }
        "potlatch" => {
            let k = parse_field(require(obj, pointer, "k")?, "/model/k", d)?;
            let w_raw = as_array(require(obj, pointer, "w_atoms")?, "/model/w_atoms")?;
            let mut w_atoms = Vec::with_capacity(w_raw.len());
            for (i, entry) in w_raw.iter().enumerate() {
                let p = format!("/model/w_atoms/{i}");
                let pair = as_array(entry, &p)?;
                if pair.len() != 2 {
                    return schema_err(&p, "expected [prob, value]");
                }
                w_atoms.push((
                    as_f64(&pair[0], &format!("{p}/0"))?,
                    as_f64(&pair[1], &format!("{p}/1"))?,
                ));
            }
            KernelDistribution::potlatch(d, k, &w_atoms).map_err(lift_kernel_error)
        }
        "custom" => {
            let atoms_raw = as_array(require(obj, pointer, "atoms")?, "/model/atoms")?;
            let mut atoms = Vec::with_capacity(atoms_raw.len());
            for (i, entry) in atoms_raw.iter().enumerate() {
                let p = format!("/model/atoms/{i}");
                let aobj = as_object(entry, &p)?;
                let prob = as_f64(require(aobj, &p, "prob")?, &format!("{p}/prob"))?;
                let vector = parse_field(require(aobj, &p, "vector")?, &format!("{p}/vector"), d)?;
                atoms.push(KernelAtom::new(prob, vector));
            }
            KernelDistribution::custom(d, atoms).map_err(lift_kernel_error)
        }
        other => schema_err(
            "/model/type",
            format!("unknown kernel type {other:?}; expected bcpp | potlatch | custom"),
        ),
    }
}

/// Parse and fully validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Schema {
        pointer: "/".into(),
        message: format!("invalid JSON: {e}"),
    })?;
    let obj = as_object(&root, "/")?;

    let kernel = parse_model(require(obj, "", "model")?)?;

    let run = as_object(require(obj, "", "run")?, "/run")?;
    let t_max = as_f64(require(run, "/run", "t_max")?, "/run/t_max")?;
    if t_max < 0.0 || !t_max.is_finite() {
        return schema_err("/run/t_max", "t_max must be finite and nonnegative");
    }
    let max_events = match run.get("max_events") {
        Some(v) => as_u64(v, "/run/max_events")?,
        None => u64::MAX,
    };
    let seed = match run.get("seed") {
        Some(v) => as_u64(v, "/run/seed")?,
        None => 0,
    };
    let runs = match run.get("runs") {
        Some(v) => {
            let r = as_u64(v, "/run/runs")?;
            if r == 0 {
                return schema_err("/run/runs", "runs must be at least 1");
            }
            r
        }
        None => 1,
    };
    let sample_times = match run.get("sample") {
        Some(sample) => {
            let sobj = as_object(sample, "/run/sample")?;
            if let Some(times) = sobj.get("times") {
                let arr = as_array(times, "/run/sample/times")?;
                let mut out = Vec::with_capacity(arr.len());
                for (i, t) in arr.iter().enumerate() {
                    let p = format!("/run/sample/times/{i}");
                    let t = as_f64(t, &p)?;
                    if !(0.0..=t_max).contains(&t) {
                        return schema_err(&p, format!("sample time outside [0, {t_max}]"));
                    }
                    out.push(t);
                }
                if !out.windows(2).all(|w| w[0] <= w[1]) {
                    return schema_err("/run/sample/times", "sample times must be sorted");
                }
                out
            } else if let Some(dt) = sobj.get("dt") {
                let dt = as_f64(dt, "/run/sample/dt")?;
                if dt.is_nan() || dt <= 0.0 {
                    return schema_err("/run/sample/dt", "dt must be positive");
                }
                grid_times(t_max, dt)
            } else {
                return schema_err("/run/sample", "expected either \"times\" or \"dt\"");
            }
        }
        None => grid_times(t_max, if t_max > 0.0 { t_max / 50.0 } else { 1.0 }),
    };

    let (csv_path, report_path) = match obj.get("output") {
        Some(v) => {
            let oobj = as_object(v, "/output")?;
            (
                oobj.get("csv_path")
                    .map(|v| as_str(v, "/output/csv_path").map(str::to_string))
                    .transpose()?
                    .unwrap_or_else(|| "trajectory.csv".into()),
                oobj.get("report_path")
                    .map(|v| as_str(v, "/output/report_path").map(str::to_string))
                    .transpose()?
                    .unwrap_or_else(|| "report.json".into()),
            )
        }
        None => ("trajectory.csv".into(), "report.json".into()),
    };

    let (prune_threshold, workers) = match obj.get("options") {
        Some(v) => {
            let oobj = as_object(v, "/options")?;
            let prune = match oobj.get("prune_threshold") {
                Some(Value::Null) | None => None,
                Some(v) => {
                    let eps = as_f64(v, "/options/prune_threshold")?;
                    if !(eps > 0.0 && eps < 1.0) {
                        return schema_err(
                            "/options/prune_threshold",
                            "prune threshold must be in (0, 1)",
                        );
                    }
                    Some(eps)
                }
            };
            let workers = match oobj.get("workers") {
                Some(v) => {
                    let w = as_u64(v, "/options/workers")? as usize;
                    if w == 0 {
                        return schema_err("/options/workers", "workers must be at least 1");
                    }
                    w
                }
                None => 1,
            };
            (prune, workers)
        }
        None => (None, 1),
    };

    Ok(RunConfig {
        kernel,
        t_max,
        max_events,
        sample_times,
        seed,
        runs,
        csv_path,
        report_path,
        prune_threshold,
        workers,
    })
}

/// Uniform sample grid `0, dt, 2dt, ...` ending exactly at `t_max`.
fn grid_times(t_max: f64, dt: f64) -> Vec<f64> {
    if t_max <= 0.0 {
        return vec![0.0];
    }
    let mut out = Vec::new();
    let mut i = 0u64;
    loop {
        let t = i as f64 * dt;
        if t > t_max * (1.0 + 1e-12) {
            break;
        }
        out.push(t.min(t_max));
        i += 1;
    }
    if let Some(&last) = out.last()
        && last < t_max
    {
        out.push(t_max);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg =
            parse_config(r#"{"model":{"type":"bcpp","d":1,"lambda":1.0},"run":{"t_max":5.0}}"#)
                .unwrap();
        assert_eq!(cfg.sample_times.len(), 51);
        assert_eq!(cfg.sample_times[0], 0.0);
        assert_eq!(*cfg.sample_times.last().unwrap(), 5.0);
        assert_eq!(cfg.runs, 1);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.workers, 1);
        assert!(cfg.prune_threshold.is_none());
        assert_eq!(cfg.kernel.atoms().len(), 3);
    }

    #[test]
    fn bad_lambda_is_invalid_parameter() {
        let err =
            parse_config(r#"{"model":{"type":"bcpp","d":1,"lambda":0.0},"run":{"t_max":1.0}}"#)
                .unwrap_err();
        assert!(matches!(err, ConfigError::InvalidParameter(_)), "{err}");
    }

    #[test]
    fn off_mean_w_is_rejected_with_message() {
        let err = parse_config(
            r#"{"model":{"type":"potlatch","d":1,
                 "k":[[[1],1.0],[[-1],1.0]],
                 "w_atoms":[[0.5,0.4],[0.5,1.4]]},
                "run":{"t_max":1.0}}"#,
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mean one"), "message was: {msg}");
    }

    #[test]
    fn schema_errors_carry_pointers() {
        let err =
            parse_config(r#"{"model":{"type":"bcpp","d":1,"lambda":"x"},"run":{"t_max":1.0}}"#)
                .unwrap_err();
        assert!(err.to_string().contains("/model/lambda"), "{err}");

        let err = parse_config(
            r#"{"model":{"type":"bcpp","d":1,"lambda":1.0},
                "run":{"t_max":2.0,"sample":{"times":[0.0,3.0]}}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("/run/sample/times/1"), "{err}");
    }

    #[test]
    fn assumption_failures_are_distinct() {
        let err = parse_config(
            r#"{"model":{"type":"custom","d":1,
                 "atoms":[{"prob":1.0,"vector":[[[0],1.0]]}]},
                "run":{"t_max":1.0}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Assumption(_)), "{err}");
    }

    #[test]
    fn zero_horizon_grid() {
        let cfg =
            parse_config(r#"{"model":{"type":"bcpp","d":1,"lambda":1.0},"run":{"t_max":0.0}}"#)
                .unwrap();
        assert_eq!(cfg.sample_times, vec![0.0]);
    }
}
