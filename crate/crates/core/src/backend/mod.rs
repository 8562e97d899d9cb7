//! The form/action service the robot talks to: validated, durable,
//! idempotent submission handling over an append-only log.
//!
//! Every accepted submission is framed and flushed to the log *before* it is
//! acknowledged; replaying the log from an empty state reconstructs the
//! service exactly. A client idempotency token maps to at most one
//! submission id, ever.

pub mod wire;

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{ActionDescriptor, Catalog, FORM_COUNT};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("validation failed for form {form_id}: field {field:?} {problem}")]
    Validation { form_id: u16, field: String, problem: String },
    #[error("corrupt log: {0}")]
    CorruptLog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubmissionStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSubmission {
    pub submission_id: u64,
    pub form_id: u16,
    pub fields: BTreeMap<String, String>,
    pub token: String,
    pub status: SubmissionStatus,
    pub t_ms: u64,
}

/// One durable event. The log is the source of truth; in-memory state is a
/// pure fold over it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LogRecord {
    Submitted(FormSubmission),
    StatusChanged { submission_id: u64, status: SubmissionStatus, t_ms: u64 },
}

/// Frame one record: 4-byte big-endian length, then the JSON record bytes.
pub fn write_record<W: Write>(mut out: W, record: &LogRecord) -> Result<(), BackendError> {
    let bytes = serde_json::to_vec(record).map_err(|e| BackendError::CorruptLog(e.to_string()))?;
    out.write_all(&(bytes.len() as u32).to_be_bytes())?;
    out.write_all(&bytes)?;
    Ok(())
}

/// Read every framed record until EOF.
pub fn read_log<R: Read>(mut input: R) -> Result<Vec<LogRecord>, BackendError> {
    let mut records = Vec::new();
    let mut len_buf = [0u8; 4];
    loop {
        match input.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_be_bytes(len_buf) as usize;
        let mut buf = vec![0u8; len];
        input.read_exact(&mut buf).map_err(|e| {
            BackendError::CorruptLog(format!("truncated record of {len} bytes: {e}"))
        })?;
        let record = serde_json::from_slice(&buf)
            .map_err(|e| BackendError::CorruptLog(format!("bad record: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Default)]
struct State {
    submissions: BTreeMap<u64, FormSubmission>,
    by_token: HashMap<String, u64>,
    next_id: u64,
}

impl State {
    fn apply(&mut self, record: &LogRecord) {
        match record {
            LogRecord::Submitted(s) => {
                self.by_token.insert(s.token.clone(), s.submission_id);
                self.next_id = self.next_id.max(s.submission_id + 1);
                self.submissions.insert(s.submission_id, s.clone());
            }
            LogRecord::StatusChanged { submission_id, status, .. } => {
                if let Some(s) = self.submissions.get_mut(submission_id) {
                    s.status = *status;
                }
            }
        }
    }
}

pub struct BackendService {
    catalog: Catalog,
    state: State,
    writer: Option<BufWriter<File>>,
}

impl BackendService {
    /// Open (or create) a log-backed service, replaying existing records.
    pub fn open(catalog: Catalog, log_path: &Path) -> Result<Self, BackendError> {
        let mut state = State { next_id: 1, ..State::default() };
        if log_path.exists() {
            let file = File::open(log_path)?;
            for record in read_log(file)? {
                state.apply(&record);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(log_path)?;
        Ok(Self { catalog, state, writer: Some(BufWriter::new(file)) })
    }

    /// Service without persistence (simulation nodes, tests).
    pub fn ephemeral(catalog: Catalog) -> Self {
        Self { catalog, state: State { next_id: 1, ..State::default() }, writer: None }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    /// All 129 action descriptors, sorted by id.
    pub fn list_actions(&self) -> &[ActionDescriptor] {
        &self.catalog.actions
    }

    fn persist(&mut self, record: &LogRecord) -> Result<(), BackendError> {
        if let Some(w) = &mut self.writer {
            write_record(&mut *w, record)?;
            w.flush()?;
        }
        Ok(())
    }

    /// Validate, persist, acknowledge. A replayed token returns the original
    /// submission unchanged.
    pub fn submit_form(
        &mut self,
        form_id: u16,
        fields: BTreeMap<String, String>,
        token: &str,
        t_ms: u64,
    ) -> Result<FormSubmission, BackendError> {
        if let Some(&id) = self.state.by_token.get(token) {
            return Ok(self.state.submissions[&id].clone());
        }
        let schema = self.catalog.form(form_id).ok_or_else(|| {
            BackendError::NotFound(format!("form {form_id} (valid ids are 1..={FORM_COUNT})"))
        })?;
        for required in &schema.required_fields {
            if !fields.contains_key(required) {
                return Err(BackendError::Validation {
                    form_id,
                    field: required.clone(),
                    problem: "is required but missing".into(),
                });
            }
        }
        for field in fields.keys() {
            if !schema.knows_field(field) {
                return Err(BackendError::Validation {
                    form_id,
                    field: field.clone(),
                    problem: "is not part of the schema".into(),
                });
            }
        }
        let submission = FormSubmission {
            submission_id: self.state.next_id,
            form_id,
            fields,
            token: token.to_string(),
            status: SubmissionStatus::Pending,
            t_ms,
        };
        let record = LogRecord::Submitted(submission.clone());
        self.persist(&record)?;
        self.state.apply(&record);
        Ok(submission)
    }

    /// Voice-invocable action: validated acknowledgment. The real system's
    /// ERP bridge is out of scope, so handling ends at validation.
    pub fn invoke_action(
        &self,
        action_id: u16,
        params: &BTreeMap<String, String>,
    ) -> Result<(), BackendError> {
        let action = self
            .catalog
            .action(action_id)
            .ok_or_else(|| BackendError::NotFound(format!("action {action_id}")))?;
        for required in &action.required_params {
            if !params.contains_key(required) {
                return Err(BackendError::Validation {
                    form_id: 0,
                    field: required.clone(),
                    problem: "action parameter missing".into(),
                });
            }
        }
        Ok(())
    }

    pub fn get_status(&self, submission_id: u64) -> Result<SubmissionStatus, BackendError> {
        self.state
            .submissions
            .get(&submission_id)
            .map(|s| s.status)
            .ok_or_else(|| BackendError::NotFound(format!("submission {submission_id}")))
    }

    pub fn get_submission(&self, submission_id: u64) -> Result<&FormSubmission, BackendError> {
        self.state
            .submissions
            .get(&submission_id)
            .ok_or_else(|| BackendError::NotFound(format!("submission {submission_id}")))
    }

    /// Simulated review: moves a submission to ACCEPTED/REJECTED, durably.
    pub fn apply_review(
        &mut self,
        submission_id: u64,
        status: SubmissionStatus,
        t_ms: u64,
    ) -> Result<(), BackendError> {
        if !self.state.submissions.contains_key(&submission_id) {
            return Err(BackendError::NotFound(format!("submission {submission_id}")));
        }
        let record = LogRecord::StatusChanged { submission_id, status, t_ms };
        self.persist(&record)?;
        self.state.apply(&record);
        Ok(())
    }

    pub fn submission_count(&self) -> usize {
        self.state.submissions.len()
    }

    /// Full submission table, ordered by id (used by durability checks).
    pub fn snapshot(&self) -> Vec<FormSubmission> {
        self.state.submissions.values().cloned().collect()
    }
}
