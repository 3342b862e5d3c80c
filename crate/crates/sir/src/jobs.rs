//! Background sweep jobs with pollable progress.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::thread;

use serde::Serialize;
use sir_core::query::Clock;
use sir_core::rules::{SweepReport, Sweeper};
use sir_core::text::TokenizedTitle;
use sir_core::{EmbeddingVector, IngestRecord, ProjectionPlan, Rule};

use crate::clock::MonotonicClock;
use crate::error::Result;

/// Items a sweep walks over.
pub enum SweepInput {
    Records(Vec<Result<IngestRecord>>),
    /// Already-binarized items, e.g. a store snapshot.
    Items(Vec<StoredItem>),
}

pub struct StoredItem {
    pub id: String,
    pub code: Vec<u64>,
    pub embedding: Option<EmbeddingVector>,
    pub title: TokenizedTitle,
}

impl SweepInput {
    fn len(&self) -> usize {
        match self {
            SweepInput::Records(r) => r.len(),
            SweepInput::Items(i) => i.len(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobStatus {
    pub job_id: String,
    pub rule_ids: Vec<String>,
    pub fraction: f64,
    pub throughput: f64,
    pub flagged_count: usize,
    #[serde(flatten)]
    pub report: SweepReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

struct Job {
    rule_ids: Vec<String>,
    report: SweepReport,
    error: Option<String>,
}

#[derive(Default, Clone)]
pub struct Jobs {
    inner: Arc<Mutex<JobTable>>,
}

#[derive(Default)]
struct JobTable {
    next: u64,
    jobs: BTreeMap<String, Job>,
}

const PUBLISH_EVERY: usize = 1024;

/// Runs the sweep on the calling thread, publishing progress through
/// `publish`.
pub fn run_sweep(rules: &[Rule], plan: &ProjectionPlan, input: SweepInput, mut publish: impl FnMut(&SweepReport)) -> Result<SweepReport> {
    let clock = MonotonicClock::new();
    let expected = input.len() as u64;
    let mut sweeper = Sweeper::new(rules, plan, Some(expected))?;
    let elapsed = |c: &MonotonicClock| c.now_ns() as f64 / 1e6;
    let mut step = |sweeper: &mut Sweeper, i: usize| {
        if i % PUBLISH_EVERY == 0 {
            let mut snapshot = sweeper.report().clone();
            snapshot.elapsed_ms = elapsed(&clock);
            publish(&snapshot);
        }
    };
    match input {
        SweepInput::Records(records) => {
            for (i, r) in records.into_iter().enumerate() {
                match r {
                    Ok(r) => {
                        if let Err(e) = sweeper.feed(&r) {
                            tracing::warn!(id = %r.id, error = %e, "sweep skipped a record");
                        }
                    }
                    Err(e) => {
                        tracing::warn!(error = %e, "sweep skipped a malformed record");
                        sweeper.reject();
                    }
                }
                step(&mut sweeper, i + 1);
            }
        }
        SweepInput::Items(items) => {
            for (i, item) in items.into_iter().enumerate() {
                if let Err(e) = sweeper.feed_item(&item.id, &item.code, item.embedding.as_ref(), &item.title) {
                    tracing::warn!(id = %item.id, error = %e, "sweep skipped an item");
                }
                step(&mut sweeper, i + 1);
            }
        }
    }
    let report = sweeper.finish(elapsed(&clock));
    publish(&report);
    Ok(report)
}

impl Jobs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validates the rules, then starts the sweep on a worker thread and
    /// returns its job id.
    pub fn spawn(&self, rules: Vec<Rule>, plan: ProjectionPlan, input: SweepInput) -> Result<String> {
        Sweeper::new(&rules, &plan, None)?;
        let rule_ids: Vec<String> = rules.iter().map(|r| r.id.clone()).collect();
        let job_id = {
            let mut table = self.inner.lock().expect("job table");
            table.next += 1;
            let id = format!("sweep-{:06}", table.next);
            table.jobs.insert(
                id.clone(),
                Job {
                    rule_ids,
                    report: SweepReport {
                        expected_total: Some(input.len() as u64),
                        ..SweepReport::default()
                    },
                    error: None,
                },
            );
            id
        };
        let inner = Arc::clone(&self.inner);
        let id = job_id.clone();
        thread::spawn(move || {
            let publish = |r: &SweepReport| {
                if let Some(job) = inner.lock().expect("job table").jobs.get_mut(&id) {
                    job.report = r.clone();
                }
            };
            if let Err(e) = run_sweep(&rules, &plan, input, publish) {
                if let Some(job) = inner.lock().expect("job table").jobs.get_mut(&id) {
                    job.error = Some(e.to_string());
                    job.report.done = true;
                }
            }
        });
        Ok(job_id)
    }

    pub fn status(&self, job_id: &str) -> Option<JobStatus> {
        let table = self.inner.lock().expect("job table");
        table.jobs.get(job_id).map(|job| JobStatus {
            job_id: job_id.to_string(),
            rule_ids: job.rule_ids.clone(),
            fraction: job.report.progress(),
            throughput: job.report.throughput(),
            flagged_count: job.report.flagged.len(),
            report: job.report.clone(),
            error: job.error.clone(),
        })
    }
}
