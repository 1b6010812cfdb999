//! Success suites: trials-per-task batches with aggregated rates and a
//! failure-category histogram.

use super::trial::{run_trial, ScenarioConfig, TrialLabeler, TrialResult};
use super::HarnessError;
use crate::actionreg::FailureCategory;
use crate::datagen::TaskTemplate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuccess {
    pub task: String,
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
}

/// Aggregated outcome of a suite run; serialized as the report JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuccessReport {
    pub mode: String,
    pub seed: u64,
    pub trials_per_task: usize,
    pub per_task: Vec<TaskSuccess>,
    pub total_successes: usize,
    pub total_trials: usize,
    pub total_rate: f64,
    /// Failure counts by category name, deterministic order.
    pub failure_histogram: BTreeMap<String, usize>,
    pub results: Vec<TrialResult>,
}

/// Run `trials_per_task` trials for every template. Individual trial
/// faults are recorded as `Others` failures, never abort the suite.
pub fn run_success_suite(
    templates: &[TaskTemplate],
    scenario: &ScenarioConfig,
    labeler: TrialLabeler<'_>,
) -> Result<SuccessReport, HarnessError> {
    if templates.is_empty() {
        return Err(HarnessError::Config("no templates to run".into()));
    }
    scenario.validate()?;

    let jobs: Vec<(usize, usize)> = (0..templates.len())
        .flat_map(|t| (0..scenario.trials_per_task).map(move |k| (t, k)))
        .collect();
    let mut results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(t, k)| {
            run_trial(&templates[t], scenario, labeler, k).unwrap_or_else(|e| TrialResult {
                task: templates[t].name.clone(),
                trial: k,
                success: false,
                category: Some(FailureCategory::Others),
                detail: format!("unexpected fault: {e}"),
                anchor_errors: vec![],
                trace: Default::default(),
            })
        })
        .collect();
    results.sort_by(|a, b| (a.task.as_str(), a.trial).cmp(&(b.task.as_str(), b.trial)));

    let mut per_task = Vec::with_capacity(templates.len());
    for template in templates {
        let task_results: Vec<&TrialResult> =
            results.iter().filter(|r| r.task == template.name).collect();
        let successes = task_results.iter().filter(|r| r.success).count();
        per_task.push(TaskSuccess {
            task: template.name.clone(),
            successes,
            trials: task_results.len(),
            rate: successes as f64 / task_results.len().max(1) as f64,
        });
    }
    let total_trials = results.len();
    let total_successes = results.iter().filter(|r| r.success).count();
    let mut failure_histogram = BTreeMap::new();
    for category in FailureCategory::ALL {
        failure_histogram.insert(category.name().to_string(), 0usize);
    }
    for result in &results {
        if let Some(category) = result.category {
            *failure_histogram.get_mut(category.name()).expect("seeded") += 1;
        }
    }

    Ok(SuccessReport {
        mode: scenario.mode.name().to_string(),
        seed: scenario.seed,
        trials_per_task: scenario.trials_per_task,
        per_task,
        total_successes,
        total_trials,
        total_rate: total_successes as f64 / total_trials.max(1) as f64,
        failure_histogram,
        results,
    })
}

/// CSV rendering: one row per task plus a total row.
pub fn success_report_csv(report: &SuccessReport) -> String {
    let mut out = String::from("task,successes,trials,rate\n");
    for task in &report.per_task {
        out.push_str(&format!(
            "{},{},{},{:.4}\n",
            task.task, task.successes, task.trials, task.rate
        ));
    }
    out.push_str(&format!(
        "total,{},{},{:.4}\n",
        report.total_successes, report.total_trials, report.total_rate
    ));
    out
}
