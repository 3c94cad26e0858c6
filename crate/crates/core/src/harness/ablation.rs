//! Parameter sweeps comparing suite results across one varied knob.

use super::config::ConfigError;
use super::suite::{run_suite, AttackMethod, SuiteConfig, SuiteReport};
use crate::baseline::InputGradient;
use crate::schedule::AlphaRule;
use crate::tensor::LabeledDataset;

/// What the sweep varies.
#[derive(Debug, Clone, PartialEq)]
pub enum AblationSweep {
    /// Initial step fraction of the decaying schedule.
    AlphaInit(Vec<f64>),
    /// Replace the schedule entirely with a constant.
    ConstantAlpha(Vec<f64>),
    /// Patch update mix as `content : location` ratios.
    LocationRatio(Vec<(u64, u64)>),
}

/// One sweep point and its full report.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationPoint {
    pub label: String,
    pub report: SuiteReport,
}

/// Runs the base suite once per sweep value, varying only the swept knob.
pub fn run_ablation<M>(
    model: &M,
    dataset: &LabeledDataset,
    base: &SuiteConfig,
    sweep: &AblationSweep,
) -> Result<Vec<AblationPoint>, ConfigError>
where
    M: InputGradient + Sync,
{
    let mut points = Vec::new();
    match sweep {
        AblationSweep::AlphaInit(values) => {
            for &alpha_init in values {
                let mut cfg = base.clone();
                cfg.method = with_alpha_init(&base.method, alpha_init)?;
                points.push(AblationPoint {
                    label: format!("alpha_init={alpha_init}"),
                    report: run_suite(model, dataset, &cfg),
                });
            }
        }
        AblationSweep::ConstantAlpha(values) => {
            for &value in values {
                let mut cfg = base.clone();
                cfg.method = with_constant_alpha(&base.method, value)?;
                points.push(AblationPoint {
                    label: format!("alpha={value}"),
                    report: run_suite(model, dataset, &cfg),
                });
            }
        }
        AblationSweep::LocationRatio(ratios) => {
            for &(content, location) in ratios {
                let mut cfg = base.clone();
                cfg.method = with_ratio(&base.method, content, location)?;
                points.push(AblationPoint {
                    label: format!("{content}:{location}"),
                    report: run_suite(model, dataset, &cfg),
                });
            }
        }
    }
    Ok(points)
}

fn with_alpha_init(method: &AttackMethod, alpha_init: f64) -> Result<AttackMethod, ConfigError> {
    let mut method = method.clone();
    match &mut method {
        AttackMethod::L0 { alpha, .. } => *alpha = AlphaRule::Decaying { alpha_init },
        AttackMethod::Patch { cfg } => cfg.alpha_init = alpha_init,
        AttackMethod::Frame { cfg } => cfg.alpha_init = alpha_init,
        other => {
            return Err(ConfigError::new(format!(
                "alpha_init sweep requires a random-search attack, got {other:?}"
            )))
        }
    }
    Ok(method)
}

fn with_constant_alpha(method: &AttackMethod, value: f64) -> Result<AttackMethod, ConfigError> {
    let mut method = method.clone();
    match &mut method {
        AttackMethod::L0 { alpha, .. } => *alpha = AlphaRule::Constant { value },
        other => {
            return Err(ConfigError::new(format!(
                "constant-alpha sweep requires the l0 attack, got {other:?}"
            )))
        }
    }
    Ok(method)
}

fn with_ratio(method: &AttackMethod, content: u64, location: u64) -> Result<AttackMethod, ConfigError> {
    if content == 0 || location == 0 {
        return Err(ConfigError::new("update ratio parts must be positive"));
    }
    let mut method = method.clone();
    match &mut method {
        AttackMethod::Patch { cfg } => {
            cfg.content_updates = content;
            cfg.location_updates = location;
        }
        other => {
            return Err(ConfigError::new(format!(
                "location-ratio sweep requires the patch attack, got {other:?}"
            )))
        }
    }
    Ok(method)
}

/// Writes one aggregate line per sweep point.
pub fn write_ablation_csv(
    points: &[AblationPoint],
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(out, "sweep,success_rate,success_rate_std,robust_error,mean_queries")?;
    for point in points {
        let rate = point
            .report
            .success_rate_mean
            .map(|r| r.to_string())
            .unwrap_or_else(|| "n/a".into());
        let std = point
            .report
            .success_rate_std
            .map(|r| r.to_string())
            .unwrap_or_else(|| "n/a".into());
        writeln!(
            out,
            "{},{},{},{},{}",
            point.label, rate, std, point.report.robust_error_mean, point.report.mean_queries_mean
        )?;
    }
    Ok(())
}
