use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub session_id: String,
    pub decision_point: String,
    pub state: JobState,
    pub progress: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

type KeyedLocks = HashMap<(String, String), Arc<tokio::sync::Mutex<()>>>;

/// Training jobs of this process. Jobs for the same (session, decision point)
/// run one at a time through a shared lock.
#[derive(Default)]
pub struct Jobs {
    statuses: Mutex<HashMap<String, JobStatus>>,
    locks: Mutex<KeyedLocks>,
    next: AtomicU64,
}

impl Jobs {
    pub fn create(&self, session_id: &str, decision_point: &str) -> JobStatus {
        let n = self.next.fetch_add(1, Ordering::Relaxed) + 1;
        let status = JobStatus {
            job_id: format!("job{n}"),
            session_id: session_id.into(),
            decision_point: decision_point.into(),
            state: JobState::Queued,
            progress: 0.0,
            error: None,
        };
        self.statuses.lock().unwrap().insert(status.job_id.clone(), status.clone());
        status
    }

    pub fn get(&self, job_id: &str) -> Option<JobStatus> {
        self.statuses.lock().unwrap().get(job_id).cloned()
    }

    /// Applies `f` unless the job already reached a terminal state.
    pub fn update(&self, job_id: &str, f: impl FnOnce(&mut JobStatus)) {
        if let Some(s) = self.statuses.lock().unwrap().get_mut(job_id) {
            if !s.state.is_terminal() {
                f(s);
            }
        }
    }

    pub fn lock_for(&self, session_id: &str, decision_point: &str) -> Arc<tokio::sync::Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry((session_id.into(), decision_point.into()))
            .or_default()
            .clone()
    }
}
