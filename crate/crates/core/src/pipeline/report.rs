//! Experiment reports and their summary table.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::augment::Shortfall;
use crate::error::{Error, Result};
use crate::vecmath::{mean, std_dev};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Sample statistics (n − 1 denominator).
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: std_dev(xs),
            n: xs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub prepare_secs: f64,
    pub teacher_secs: f64,
    pub retrieve_secs: f64,
    pub annotate_secs: f64,
    pub student_secs: f64,
    pub total_secs: f64,
}

impl Timings {
    fn add(&mut self, o: &Timings) {
        self.prepare_secs += o.prepare_secs;
        self.teacher_secs += o.teacher_secs;
        self.retrieve_secs += o.retrieve_secs;
        self.annotate_secs += o.annotate_secs;
        self.student_secs += o.student_secs;
        self.total_secs += o.total_secs;
    }
}

/// Candidate and synthetic-set sizes for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    pub candidate_pool: usize,
    pub dropped_null: usize,
    pub excluded_train_overlap: usize,
    pub quota_total: usize,
    pub filtered: usize,
    pub ground_truth_added: usize,
    pub student_train_size: usize,
    pub shortfalls: Vec<Shortfall>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub teacher_accuracy: f64,
    pub student_accuracy: f64,
    pub teacher_final_loss: f64,
    pub student_final_loss: f64,
    pub provenance: Provenance,
    pub timings: Timings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LeakageCheck {
    pub synthetic_checked: usize,
    pub test_size: usize,
    pub overlaps: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BankStats {
    pub bank_size: usize,
    pub removed_test_overlap: usize,
    pub null_rows: usize,
    pub quantized: bool,
}

/// Per-replica outcome of the few-shot protocol.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FewShotSet {
    pub train_set: usize,
    pub train_size: usize,
    /// (seed, validation accuracy, test accuracy) for each teacher.
    pub baseline_runs: Vec<(u64, f64, f64)>,
    /// Same for each self-trained student.
    pub self_trained_runs: Vec<(u64, f64, f64)>,
    pub baseline_score: f64,
    pub self_trained_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FewShotSummary {
    pub sets: Vec<FewShotSet>,
    pub baseline: MeanStd,
    pub self_trained: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub protocol: String,
    pub status: RunStatus,
    /// Configuration text the run was started with.
    pub config: String,
    pub bank: BankStats,
    pub per_seed: Vec<SeedResult>,
    pub teacher: MeanStd,
    pub student: MeanStd,
    pub few_shot: Option<FewShotSummary>,
    pub leakage: LeakageCheck,
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn new(protocol: &str, config: String, bank: BankStats) -> Self {
        Self {
            protocol: protocol.to_string(),
            status: RunStatus::Ok,
            config,
            bank,
            per_seed: Vec::new(),
            teacher: MeanStd::of(&[]),
            student: MeanStd::of(&[]),
            few_shot: None,
            leakage: LeakageCheck::default(),
            timings: Timings::default(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn fail(&mut self, err: &Error) {
        log::error!("{} run failed: {err}", self.protocol);
        self.status = RunStatus::Failed {
            error: err.to_string(),
        };
    }

    /// Recomputes aggregates from the per-seed results.
    pub fn finalize(&mut self) {
        let t: Vec<f64> = self.per_seed.iter().map(|r| r.teacher_accuracy).collect();
        let s: Vec<f64> = self.per_seed.iter().map(|r| r.student_accuracy).collect();
        self.teacher = MeanStd::of(&t);
        self.student = MeanStd::of(&s);
        let total = self.timings.prepare_secs;
        let mut sum = Timings {
            prepare_secs: total,
            ..Timings::default()
        };
        for r in &self.per_seed {
            sum.add(&Timings {
                prepare_secs: 0.0,
                ..r.timings.clone()
            });
        }
        sum.total_secs += total;
        self.timings = sum;
    }

    pub fn teacher_accuracies(&self) -> Vec<f64> {
        self.per_seed.iter().map(|r| r.teacher_accuracy).collect()
    }

    pub fn student_accuracies(&self) -> Vec<f64> {
        self.per_seed.iter().map(|r| r.student_accuracy).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    /// Fixed-width table of per-seed and aggregate numbers.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let status = match &self.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed { error } => format!("FAILED: {error}"),
        };
        let _ = writeln!(out, "protocol: {}  status: {status}", self.protocol);
        if let Some(fs) = &self.few_shot {
            let _ = writeln!(out, "{:>9} {:>10} {:>12}", "train_set", "baseline", "self_trained");
            for s in &fs.sets {
                let _ = writeln!(
                    out,
                    "{:>9} {:>10.4} {:>12.4}",
                    s.train_set, s.baseline_score, s.self_trained_score
                );
            }
            let _ = writeln!(
                out,
                "{:>9} {:>10.4} {:>12.4}\n{:>9} {:>10.4} {:>12.4}",
                "mean", fs.baseline.mean, fs.self_trained.mean, "std", fs.baseline.std, fs.self_trained.std
            );
            return out;
        }
        let _ = writeln!(
            out,
            "{:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}",
            "seed", "teacher", "student", "delta", "pool", "synth", "shortfall"
        );
        for r in &self.per_seed {
            let _ = writeln!(
                out,
                "{:>6} {:>8.4} {:>8.4} {:>+8.4} {:>8} {:>8} {:>9}",
                r.seed,
                r.teacher_accuracy,
                r.student_accuracy,
                r.student_accuracy - r.teacher_accuracy,
                r.provenance.candidate_pool,
                r.provenance.student_train_size,
                r.provenance.shortfalls.len()
            );
        }
        let _ = writeln!(
            out,
            "{:>6} {:>8.4} {:>8.4} {:>+8.4}\n{:>6} {:>8.4} {:>8.4}",
            "mean",
            self.teacher.mean,
            self.student.mean,
            self.student.mean - self.teacher.mean,
            "std",
            self.teacher.std,
            self.student.std
        );
        let _ = writeln!(
            out,
            "leakage: {} overlaps in {} synthetic texts; {:.1} s total",
            self.leakage.overlaps, self.leakage.synthetic_checked, self.timings.total_secs
        );
        out
    }
}
