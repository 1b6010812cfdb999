//! Report rendering: an ablation table and success tables from run
//! artifacts, with gaps flagged when an artifact is missing.

use super::suite::SuccessReport;
use super::HarnessError;
use crate::mgsf::{AblationTable, SweepTable};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

/// Artifact names `render_report` looks for inside a run directory.
pub const ABLATION_FILE: &str = "ablation.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const SIM_FILE: &str = "success_sim.json";
pub const COM_FILE: &str = "success_com.json";

#[derive(Debug, Default)]
pub struct ReportInputs {
    pub ablation: Option<AblationTable>,
    pub sweep: Option<SweepTable>,
    pub sim: Option<SuccessReport>,
    pub com: Option<SuccessReport>,
}

impl ReportInputs {
    /// Load whatever artifacts exist under `dir`.
    pub fn load(dir: &Path) -> Result<ReportInputs, HarnessError> {
        fn read<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>, HarnessError> {
            if !path.exists() {
                return Ok(None);
            }
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))
        }
        Ok(ReportInputs {
            ablation: read(&dir.join(ABLATION_FILE))?,
            sweep: read(&dir.join(SWEEP_FILE))?,
            sim: read(&dir.join(SIM_FILE))?,
            com: read(&dir.join(COM_FILE))?,
        })
    }
}

fn config_hash(inputs: &ReportInputs) -> String {
    let mut hasher = Sha256::new();
    if let Some(a) = &inputs.ablation {
        hasher.update(serde_json::to_string(&a.seeds).expect("seeds"));
    }
    if let Some(s) = &inputs.sweep {
        hasher.update(serde_json::to_string(&s.sizes).expect("sizes"));
        hasher.update(serde_json::to_string(&s.seeds).expect("seeds"));
    }
    for report in [&inputs.sim, &inputs.com].into_iter().flatten() {
        hasher.update(report.mode.as_bytes());
        hasher.update(report.seed.to_le_bytes());
        hasher.update(report.trials_per_task.to_le_bytes());
    }
    let digest = hasher.finalize();
    format!("{:x}", digest)[..16].to_string()
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(v) => format!("{v:.digits$}"),
        None => "-".to_string(),
    }
}

/// Render the human-readable summary. Deterministic: same artifacts,
/// same bytes.
pub fn render_report(inputs: &ReportInputs) -> String {
    let mut out = String::new();
    writeln!(out, "run summary (config hash {})", config_hash(inputs)).expect("write");
    writeln!(out).expect("write");

    match &inputs.ablation {
        Some(table) => {
            writeln!(out, "segmentation ablation (seeds {:?})", table.seeds).expect("write");
            writeln!(
                out,
                "{:<10} {:>14} {:>16} {:>16} {:>16} {:>16} {:>18}",
                "variant", "bce", "precision", "recall", "f1", "kappa", "tp-range"
            )
            .expect("write");
            for s in &table.summaries {
                writeln!(
                    out,
                    "{:<10} {:>14} {:>16} {:>16} {:>16} {:>16} {:>18}",
                    s.variant.name(),
                    match (s.bce_mean, s.bce_std) {
                        (Some(m), Some(sd)) => format!("{m:.3} ± {sd:.3}"),
                        _ => "-".to_string(),
                    },
                    format!("{:.2} ± {:.2}", s.precision_mean, s.precision_std),
                    format!("{:.2} ± {:.2}", s.recall_mean, s.recall_std),
                    format!("{:.2} ± {:.2}", s.f1_mean, s.f1_std),
                    format!("{:.2} ± {:.2}", s.kappa_mean, s.kappa_std),
                    format!("[{:.2}, {:.2}]", s.tp_range[0], s.tp_range[1]),
                )
                .expect("write");
            }
            let failed: Vec<&String> = table.cells.iter().filter_map(|c| c.as_ref().err()).collect();
            if !failed.is_empty() {
                writeln!(out, "failed cells: {failed:?}").expect("write");
            }
        }
        None => writeln!(out, "segmentation ablation: MISSING ({ABLATION_FILE})").expect("write"),
    }
    writeln!(out).expect("write");

    match &inputs.sweep {
        Some(sweep) => {
            writeln!(out, "dataset-size sweep (seeds {:?})", sweep.seeds).expect("write");
            let means = sweep.recall_means();
            for (size, mean) in sweep.sizes.iter().zip(&means) {
                writeln!(out, "  {size:>4} demos: recall {}", fmt_opt(Some(*mean), 2)).expect("write");
            }
            writeln!(out, "  pooled std {:.2}", sweep.pooled_std()).expect("write");
        }
        None => writeln!(out, "dataset-size sweep: MISSING ({SWEEP_FILE})").expect("write"),
    }
    writeln!(out).expect("write");

    for (label, file, report) in [
        ("sim scenario", SIM_FILE, &inputs.sim),
        ("com scenario", COM_FILE, &inputs.com),
    ] {
        match report {
            Some(r) => {
                writeln!(
                    out,
                    "{label} success (seed {}, {} trials/task)",
                    r.seed, r.trials_per_task
                )
                .expect("write");
                for task in &r.per_task {
                    writeln!(
                        out,
                        "  {:<18} {:>3}/{:<3} ({:.1}%)",
                        task.task,
                        task.successes,
                        task.trials,
                        100.0 * task.rate
                    )
                    .expect("write");
                }
                writeln!(
                    out,
                    "  {:<18} {:>3}/{:<3} ({:.1}%)",
                    "total",
                    r.total_successes,
                    r.total_trials,
                    100.0 * r.total_rate
                )
                .expect("write");
                write!(out, "  failures:").expect("write");
                for (category, count) in &r.failure_histogram {
                    write!(out, " {category}={count}").expect("write");
                }
                writeln!(out).expect("write");
            }
            None => writeln!(out, "{label}: MISSING ({file})").expect("write"),
        }
        writeln!(out).expect("write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_artifacts_are_flagged_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = ReportInputs::load(dir.path()).unwrap();
        let text = render_report(&inputs);
        assert!(text.contains("MISSING (ablation.json)"));
        assert!(text.contains("MISSING (success_sim.json)"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let inputs = ReportInputs::load(dir.path()).unwrap();
        assert_eq!(render_report(&inputs), render_report(&inputs));
    }
}
