//! Report rows and summaries, and their CSV/JSON serialization.
use std::path::Path;

use aebench_core::bench::{ControllerRun, FramePairStats, Quartiles, VoOutcome};
use aebench_core::emulation::ValidationReport;
use aebench_core::features::{sequence_success, success_curve, SuccessCurve};
use aebench_core::stats;
use serde::{Deserialize, Serialize};

use crate::error::{FormatError, FormatResult};
use crate::fsutil;

/// One row of a `run-ae` CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAeRow {
    pub frame: usize,
    pub cycle: u64,
    pub exposure_us: f64,
    pub source_bracket_us: f64,
    pub metric_value: f64,
    pub mean_brightness: f64,
    pub saturation_fraction: f64,
}

pub fn run_ae_rows(run: &ControllerRun) -> Vec<RunAeRow> {
    run.steps
        .iter()
        .enumerate()
        .map(|(frame, s)| RunAeRow {
            frame,
            cycle: s.cycle_index,
            exposure_us: s.emulated.image.exposure_us,
            source_bracket_us: s.emulated.source_exposure_us,
            metric_value: s.decision.metric_value,
            mean_brightness: s.mean_brightness,
            saturation_fraction: s.saturation_fraction,
        })
        .collect()
}

/// One row of `validation.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub gt_exposure_us: f64,
    pub selected_bracket_us: f64,
    pub rmse_highernosat_pct: f64,
    pub best_bracket_us: f64,
    pub best_rmse_pct: f64,
}

pub fn validation_rows(report: &ValidationReport) -> Vec<ValidationRow> {
    report
        .points
        .iter()
        .map(|p| {
            let (best, best_rmse) = p
                .rmse_per_bracket_pct
                .iter()
                .copied()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap_or((p.selected_index, f64::NAN));
            ValidationRow {
                gt_exposure_us: p.gt_exposure_us,
                selected_bracket_us: report.ladder_us[p.selected_index],
                rmse_highernosat_pct: p.rmse_highernosat_pct,
                best_bracket_us: report.ladder_us[best],
                best_rmse_pct: best_rmse,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub points: usize,
    pub noise_floor_pct: f64,
    pub median_pct: f64,
    pub max_pct: f64,
    pub top1_rate: f64,
    pub top2_rate: f64,
    pub report: ValidationReport,
}

impl ValidationSummary {
    pub fn new(report: ValidationReport) -> Self {
        Self {
            points: report.points.len(),
            noise_floor_pct: report.noise_floor_pct,
            median_pct: report.median_pct,
            max_pct: report.max_pct,
            top1_rate: report.selection_rank_rate(1),
            top2_rate: report.selection_rank_rate(2),
            report,
        }
    }
}

/// Benchmark results of one controller on one sequence.
#[derive(Debug, Clone)]
pub struct ControllerEval {
    pub sequence: String,
    pub run: ControllerRun,
    pub pairs: Vec<FramePairStats>,
    pub vo: VoOutcome,
}

impl ControllerEval {
    pub fn match_counts(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.matches).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub sequence: String,
    pub controller: String,
    pub frame_pair: usize,
    pub matches: usize,
    pub uniformity_pct: f64,
}

pub fn feature_rows(evals: &[ControllerEval]) -> Vec<FeatureRow> {
    evals
        .iter()
        .flat_map(|e| {
            e.pairs.iter().map(move |p| FeatureRow {
                sequence: e.sequence.clone(),
                controller: e.run.kind.name().to_string(),
                frame_pair: p.frame_pair,
                matches: p.matches,
                uniformity_pct: p.uniformity_pct_a,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerFeatureSummary {
    pub controller: String,
    pub label: String,
    pub sequences: usize,
    pub mean_saturation: f64,
    pub matches: Option<Quartiles>,
    pub uniformity_pct: Option<Quartiles>,
    pub success_at_marker: f64,
    pub success: SuccessCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub tau_marker: usize,
    pub controllers: Vec<ControllerFeatureSummary>,
}

/// Aggregates per-sequence evaluations, grouped by controller in order of
/// first appearance.
pub fn feature_report(evals: &[ControllerEval], taus: &[usize], tau_marker: usize) -> FormatResult<FeatureReport> {
    let mut controllers = Vec::new();
    for kind in kinds_in_order(evals) {
        let group: Vec<&ControllerEval> = evals.iter().filter(|e| e.run.kind == kind).collect();
        let counts: Vec<Vec<usize>> = group.iter().map(|e| e.match_counts()).collect();
        let matches: Vec<f64> = counts.iter().flatten().map(|&m| m as f64).collect();
        let uniformity: Vec<f64> = group
            .iter()
            .flat_map(|e| e.pairs.iter().map(|p| p.uniformity_pct_a))
            .collect();
        let hits = counts.iter().filter(|c| sequence_success(c, tau_marker)).count();
        let saturation: Vec<f64> = group.iter().map(|e| e.run.mean_saturation()).collect();
        controllers.push(ControllerFeatureSummary {
            controller: kind.name().to_string(),
            label: kind.label().to_string(),
            sequences: group.len(),
            mean_saturation: stats::mean(&saturation).unwrap_or(0.0),
            matches: Quartiles::of(&matches),
            uniformity_pct: Quartiles::of(&uniformity),
            success_at_marker: hits as f64 / group.len() as f64,
            success: success_curve(&counts, taus)?,
        });
    }
    Ok(FeatureReport {
        tau_marker,
        controllers,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpeRow {
    pub sequence: String,
    pub controller: String,
    pub status: String,
    pub length_m: Option<f64>,
    pub pair_count: Option<usize>,
    pub translation_pct: Option<f64>,
    pub rotation_deg_per_m: Option<f64>,
    pub message: String,
}

pub fn rpe_rows(evals: &[ControllerEval]) -> Vec<RpeRow> {
    let mut rows = Vec::new();
    for e in evals {
        let controller = e.run.kind.name().to_string();
        match &e.vo {
            VoOutcome::Scored(report) => rows.extend(report.entries.iter().map(|entry| RpeRow {
                sequence: e.sequence.clone(),
                controller: controller.clone(),
                status: "ok".into(),
                length_m: Some(entry.length_m),
                pair_count: Some(entry.pair_count),
                translation_pct: entry.median_translation_pct,
                rotation_deg_per_m: entry.median_rotation_deg_per_m,
                message: String::new(),
            })),
            VoOutcome::Failed(message) => rows.push(RpeRow {
                sequence: e.sequence.clone(),
                controller,
                status: "failed".into(),
                length_m: None,
                pair_count: None,
                translation_pct: None,
                rotation_deg_per_m: None,
                message: message.clone(),
            }),
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpeLengthSummary {
    pub length_m: f64,
    /// Median over sequences of the per-sequence medians.
    pub translation_pct: Option<f64>,
    pub rotation_deg_per_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerRpeSummary {
    pub controller: String,
    pub label: String,
    pub sequences: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub lengths: Vec<RpeLengthSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpeSummary {
    pub controllers: Vec<ControllerRpeSummary>,
}

pub fn rpe_summary(evals: &[ControllerEval], lengths_m: &[f64]) -> RpeSummary {
    let mut controllers = Vec::new();
    for kind in kinds_in_order(evals) {
        let group: Vec<&ControllerEval> = evals.iter().filter(|e| e.run.kind == kind).collect();
        let failures = group.iter().filter(|e| matches!(e.vo, VoOutcome::Failed(_))).count();
        let lengths = lengths_m
            .iter()
            .map(|&length_m| {
                let mut trans = Vec::new();
                let mut rot = Vec::new();
                for e in &group {
                    if let VoOutcome::Scored(report) = &e.vo {
                        if let Some(entry) = report.entries.iter().find(|en| en.length_m == length_m) {
                            trans.extend(entry.median_translation_pct);
                            rot.extend(entry.median_rotation_deg_per_m);
                        }
                    }
                }
                trans.sort_by(f64::total_cmp);
                rot.sort_by(f64::total_cmp);
                RpeLengthSummary {
                    length_m,
                    translation_pct: stats::median(&trans),
                    rotation_deg_per_m: stats::median(&rot),
                }
            })
            .collect();
        controllers.push(ControllerRpeSummary {
            controller: kind.name().to_string(),
            label: kind.label().to_string(),
            sequences: group.len(),
            failures,
            failure_rate: failures as f64 / group.len() as f64,
            lengths,
        });
    }
    RpeSummary { controllers }
}

fn kinds_in_order(evals: &[ControllerEval]) -> Vec<aebench_core::ae_control::ControllerKind> {
    let mut kinds = Vec::new();
    for e in evals {
        if !kinds.contains(&e.run.kind) {
            kinds.push(e.run.kind);
        }
    }
    kinds
}

pub fn encode_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> FormatResult<()> {
    let bytes = encode_csv(rows).map_err(|e| FormatError::MalformedCsv {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    fsutil::write_atomic(path, &bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> FormatResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fsutil::write_atomic(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![RunAeRow {
            frame: 0,
            cycle: 3,
            exposure_us: 8000.0,
            source_bracket_us: 8000.0,
            metric_value: 0.5,
            mean_brightness: 0.25,
            saturation_fraction: 0.0,
        }];
        let text = String::from_utf8(encode_csv(&rows).unwrap()).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "frame,cycle,exposure_us,source_bracket_us,metric_value,mean_brightness,saturation_fraction"
        );
        assert_eq!(lines.next().unwrap(), "0,3,8000.0,8000.0,0.5,0.25,0.0");
    }
}
