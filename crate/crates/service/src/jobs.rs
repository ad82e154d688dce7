//! Shared model registry and the FIFO training queue that replaces it.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;

use cdss_core::features::load_cohort_dir;
use cdss_core::models::{train_cohort, CohortParams, Registry, SplitPolicy};

pub const DEFAULT_TRAIN_SEED: u64 = 7;

pub fn now_s() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Readers take a snapshot `Arc`; a swap replaces the whole registry at once.
#[derive(Clone)]
pub struct RegistryHandle(Arc<RwLock<Arc<Registry>>>);

impl RegistryHandle {
    pub fn new(registry: Registry) -> Self {
        Self(Arc::new(RwLock::new(Arc::new(registry))))
    }

    pub fn snapshot(&self) -> Arc<Registry> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn swap(&self, registry: Registry) {
        *self.0.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(registry);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    /// Directory with `sensors.csv`, `events.csv` and optionally `coverage.csv`.
    pub cohort_path: PathBuf,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: Option<CohortParams>,
    #[serde(default)]
    pub policy: Option<SplitPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobSummary {
    pub participants: usize,
    pub skipped: usize,
    pub mean_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub status: JobStatus,
    pub request: TrainRequest,
    pub submitted_at: f64,
    pub started_at: Option<f64>,
    pub finished_at: Option<f64>,
    pub error: Option<String>,
    pub summary: Option<JobSummary>,
}

type JobTable = Arc<Mutex<HashMap<String, Job>>>;

/// One worker drains the queue in submission order.
#[derive(Clone)]
pub struct JobQueue {
    jobs: JobTable,
    tx: mpsc::UnboundedSender<String>,
}

fn update(jobs: &JobTable, id: &str, f: impl FnOnce(&mut Job)) {
    if let Some(job) = jobs.lock().unwrap_or_else(|e| e.into_inner()).get_mut(id) {
        f(job);
    }
}

fn run(req: &TrainRequest) -> Result<Registry, String> {
    let matrices = load_cohort_dir(&req.cohort_path).map_err(|e| format!("loading cohort {}: {e}", req.cohort_path.display()))?;
    let params = req.params.clone().unwrap_or_default();
    let policy = req.policy.unwrap_or_default();
    let registry = train_cohort(&matrices, &policy, &params, req.seed.unwrap_or(DEFAULT_TRAIN_SEED));
    if registry.participants.is_empty() {
        let reasons: Vec<String> = registry.skipped.iter().map(|s| format!("{}: {}", s.participant_id, s.reason)).collect();
        return Err(format!("no participant could be trained ({})", reasons.join("; ")));
    }
    Ok(registry)
}

impl JobQueue {
    /// Starts the worker. Completed registries are written to `save_path`
    /// (when set) before they replace the one in `registry`.
    pub fn start(registry: RegistryHandle, save_path: Option<PathBuf>) -> Self {
        let jobs: JobTable = Arc::default();
        let (tx, mut rx) = mpsc::unbounded_channel::<String>();
        let table = jobs.clone();
        tokio::spawn(async move {
            while let Some(id) = rx.recv().await {
                let Some(req) = table.lock().unwrap_or_else(|e| e.into_inner()).get(&id).map(|j| j.request.clone()) else { continue };
                update(&table, &id, |j| {
                    j.status = JobStatus::Running;
                    j.started_at = Some(now_s());
                });
                tracing::info!(job = %id, cohort = %req.cohort_path.display(), "training started");
                let save = save_path.clone();
                let outcome = tokio::task::spawn_blocking(move || {
                    let reg = run(&req)?;
                    if let Some(path) = &save {
                        reg.save(path).map_err(|e| format!("saving registry to {}: {e}", path.display()))?;
                    }
                    Ok::<_, String>(reg)
                })
                .await
                .unwrap_or_else(|e| Err(format!("training task panicked: {e}")));
                match outcome {
                    Ok(reg) => {
                        let summary =
                            JobSummary { participants: reg.participants.len(), skipped: reg.skipped.len(), mean_accuracy: reg.mean_accuracy() };
                        registry.swap(reg);
                        tracing::info!(job = %id, mean_accuracy = ?summary.mean_accuracy, "training done");
                        update(&table, &id, |j| {
                            j.status = JobStatus::Done;
                            j.summary = Some(summary);
                            j.finished_at = Some(now_s());
                        });
                    }
                    Err(reason) => {
                        tracing::warn!(job = %id, %reason, "training failed");
                        update(&table, &id, |j| {
                            j.status = JobStatus::Failed;
                            j.error = Some(reason);
                            j.finished_at = Some(now_s());
                        });
                    }
                }
            }
        });
        Self { jobs, tx }
    }

    pub fn submit(&self, request: TrainRequest) -> String {
        let id = uuid::Uuid::new_v4().to_string();
        let job = Job {
            id: id.clone(),
            status: JobStatus::Queued,
            request,
            submitted_at: now_s(),
            started_at: None,
            finished_at: None,
            error: None,
            summary: None,
        };
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), job);
        if self.tx.send(id.clone()).is_err() {
            update(&self.jobs, &id, |j| {
                j.status = JobStatus::Failed;
                j.error = Some("training worker is not running".into());
            });
        }
        id
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    /// Polls until the job leaves the queue or running state.
    pub async fn wait(&self, id: &str) -> Option<Job> {
        loop {
            let job = self.get(id)?;
            if matches!(job.status, JobStatus::Done | JobStatus::Failed) {
                return Some(job);
            }
            tokio::time::sleep(std::time::Duration::from_millis(20)).await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cdss_core::features::{generate_synthetic_study, write_study_dir, CohortConfig};

    #[tokio::test]
    async fn missing_path_fails_with_reason() {
        let handle = RegistryHandle::new(Registry::empty());
        let q = JobQueue::start(handle.clone(), None);
        let id = q.submit(TrainRequest { cohort_path: "/nonexistent/cohort".into(), seed: None, params: None, policy: None });
        let job = q.wait(&id).await.unwrap();
        assert_eq!(job.status, JobStatus::Failed);
        assert!(job.error.unwrap().contains("/nonexistent/cohort"));
        assert!(handle.snapshot().participants.is_empty());
    }

    #[tokio::test]
    async fn jobs_run_in_order_and_swap_registry() {
        let dir = tempfile::tempdir().unwrap();
        let small = CohortConfig { n_participants: 2, windows_per_participant: 60, ..CohortConfig::default() };
        let three = CohortConfig { n_participants: 3, ..small.clone() };
        write_study_dir(&generate_synthetic_study(&small), &dir.path().join("a")).unwrap();
        write_study_dir(&generate_synthetic_study(&three), &dir.path().join("b")).unwrap();
        let saved = dir.path().join("registry.json");
        let handle = RegistryHandle::new(Registry::empty());
        let q = JobQueue::start(handle.clone(), Some(saved.clone()));
        let req = |p: &str| TrainRequest { cohort_path: dir.path().join(p), seed: Some(1), params: None, policy: None };
        let first = q.submit(req("a"));
        let second = q.submit(req("b"));
        assert_ne!(q.get(&second).unwrap().status, JobStatus::Done);
        let a = q.wait(&first).await.unwrap();
        let b = q.wait(&second).await.unwrap();
        assert_eq!(a.status, JobStatus::Done, "{:?}", a.error);
        assert_eq!(b.status, JobStatus::Done, "{:?}", b.error);
        assert!(a.finished_at.unwrap() <= b.started_at.unwrap());
        assert_eq!(handle.snapshot().participants.len(), 3);
        assert_eq!(Registry::load(&saved).unwrap().participants.len(), 3);
    }
}
