//! The main conversation loop: wake handling, listening, intent dispatch,
//! form filling, the age game, and the dialog-loop interrupt.
//!
//! `handle_event` is a pure transition function from (state, event) to
//! (state, commands). Commands address the eyes, motion, recognizer and
//! backend; the node runtime executes them. A wake detection in any phase
//! reaches LISTENING within one transition, aborting in-flight work.

mod grammar;

pub use grammar::{Grammar, GrammarEntry, GrammarTarget};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::wire;
use crate::catalog::Catalog;
use crate::eyes::EyeEvent;
use crate::lvcsr::RecognitionResult;

/// Listening window before the robot stops paying attention.
pub const LISTEN_WINDOW_MS: u64 = 8000;
/// Automatic return to IDLE after an error.
pub const ERROR_RECOVERY_MS: u64 = 3000;
/// How long a spoken response stays on screen before returning to IDLE.
pub const RESPOND_WINDOW_MS: u64 = 2500;
/// Patience for the recognizer and the backend.
pub const RECOGNIZE_TIMEOUT_MS: u64 = 5000;
pub const EXECUTE_TIMEOUT_MS: u64 = 5000;
/// Mean token confidence below which an unmatched transcript is rescored.
pub const RESCORE_CONFIDENCE: f64 = 0.6;

#[derive(Debug, Error)]
pub enum DialogError {
    #[error("invalid grammar: {0}")]
    BadGrammar(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DialogPhase {
    Idle,
    Listening,
    Recognizing,
    Executing,
    Responding,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveForm {
    pub form_id: u16,
    pub filled: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: u64,
    pub active_form: Option<ActiveForm>,
    pub history: Vec<String>,
}

impl Session {
    pub fn new(session_id: u64) -> Self {
        Self { session_id, active_form: None, history: Vec::new() }
    }
}

/// Icon the dialog knows it has put on the eyes, cleared on recovery paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PendingIcon {
    Clock,
    Map,
    Camera,
}

impl PendingIcon {
    fn clear_event(self) -> EyeEvent {
        match self {
            PendingIcon::Clock => EyeEvent::WaitEnd,
            PendingIcon::Map => EyeEvent::HideMap,
            PendingIcon::Camera => EyeEvent::PhotoEnd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogState {
    pub phase: DialogPhase,
    pub session: Session,
    /// Absolute deadline; always present while LISTENING.
    pub listen_deadline_ms: Option<u64>,
    /// Generation carried by scheduled timeouts; mismatching timeouts are
    /// stale and ignored.
    pub timer_generation: u64,
    /// Tag of the in-flight backend request, cancelled on interrupt.
    pub pending_backend: Option<String>,
    pub pending_icon: Option<PendingIcon>,
    pub awaiting_photo: bool,
    pub rescore_attempted: bool,
}

impl DialogState {
    pub fn initial(session_id: u64) -> Self {
        Self {
            phase: DialogPhase::Idle,
            session: Session::new(session_id),
            listen_deadline_ms: None,
            timer_generation: 0,
            pending_backend: None,
            pending_icon: None,
            awaiting_photo: false,
            rescore_attempted: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.phase == DialogPhase::Listening && self.listen_deadline_ms.is_none() {
            return Err("LISTENING without a deadline".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotoResult {
    pub photo_id: String,
    pub age_estimate: Result<u32, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    WakeDetected,
    TranscriptReady(RecognitionResult),
    Timeout { generation: u64 },
    BackendReply(wire::Response),
    Fault(String),
    PhotoTaken(PhotoResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub t_ms: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Eye(EyeEvent),
    PlayGesture(String),
    Speak(String),
    /// Ask the recognizer to capture the next utterance.
    StartCapture,
    StopCapture,
    /// Second-pass decode of the last utterance.
    RequestRescore,
    Backend { tag: String, request: wire::Request },
    CancelBackend { tag: String },
    TakePhoto,
    ScheduleTimeout { generation: u64, after_ms: u64 },
}

/// An undefined (state, event) pair, returned with both operands.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub state: Box<DialogState>,
    pub event: InteractionEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GameId {
    Age,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intent {
    Action { id: u16 },
    StartForm { form_id: u16 },
    FieldFill { form_id: u16, field: String, value: String },
    Game { id: GameId },
    Fallback,
}

/// Static context the machine consults; shared and immutable.
pub struct DialogContext {
    pub catalog: Catalog,
    pub grammar: Grammar,
}

impl DialogContext {
    pub fn with_default_grammar(catalog: Catalog) -> Self {
        let grammar = Grammar::default_for(&catalog);
        Self { catalog, grammar }
    }
}

/// Keyword-grammar intent parsing: deterministic, fallback absorbs failures.
pub fn parse_intent(
    result: &RecognitionResult,
    ctx: &DialogContext,
    active_form: Option<u16>,
) -> Intent {
    let tokens: Vec<String> = result.tokens.iter().map(|t| t.to_lowercase()).collect();
    if tokens.is_empty() {
        return Intent::Fallback;
    }
    if let Some(form_id) = active_form {
        if let Some((field, value)) = ctx.grammar.match_field(&tokens) {
            return Intent::FieldFill { form_id, field, value };
        }
    }
    match ctx.grammar.match_target(&tokens) {
        Some(GrammarTarget::Action(id)) => Intent::Action { id: *id },
        Some(GrammarTarget::StartForm(id)) => Intent::StartForm { form_id: *id },
        Some(GrammarTarget::AgeGame) => Intent::Game { id: GameId::Age },
        Some(GrammarTarget::FieldFill(_)) | None => Intent::Fallback,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FillOutcome {
    /// All required fields present: submit with an idempotency token.
    Submit(wire::Request),
    /// Next missing field to ask for.
    Prompt(String),
    /// Field/form mismatch, surfaced as a spoken validation prompt.
    Invalid(String),
}

fn fnv1a(parts: &[&str]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for part in parts {
        for b in part.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic idempotency token from the submission content; any fill
/// order of the same values yields the same token.
pub fn submission_token(session_id: u64, form_id: u16, fields: &BTreeMap<String, String>) -> String {
    let sid = session_id.to_string();
    let fid = form_id.to_string();
    let mut parts: Vec<&str> = vec![&sid, &fid];
    for (k, v) in fields {
        parts.push(k);
        parts.push(v);
    }
    format!("form-{form_id}-{:016x}", fnv1a(&parts))
}

/// Fill one field (or start a form); emit the submit request once the
/// schema's required fields are complete, otherwise the next prompt.
pub fn fill_and_submit(session: &mut Session, intent: &Intent, catalog: &Catalog) -> FillOutcome {
    match intent {
        Intent::StartForm { form_id } => {
            let schema = match catalog.form(*form_id) {
                Some(s) => s,
                None => return FillOutcome::Invalid(format!("form {form_id} does not exist")),
            };
            session.active_form =
                Some(ActiveForm { form_id: *form_id, filled: BTreeMap::new() });
            FillOutcome::Prompt(format!(
                "starting {}; please provide the {}",
                schema.name, schema.required_fields[0]
            ))
        }
        Intent::FieldFill { form_id, field, value } => {
            let active = match session.active_form.as_mut() {
                Some(a) => a,
                None => return FillOutcome::Invalid("no form is being filled".into()),
            };
            if active.form_id != *form_id {
                return FillOutcome::Invalid(format!(
                    "field belongs to form {form_id} but form {} is active",
                    active.form_id
                ));
            }
            let schema = catalog.form(active.form_id).expect("active form exists in catalog");
            if !schema.knows_field(field) {
                return FillOutcome::Invalid(format!(
                    "{} has no field named {field}",
                    schema.name
                ));
            }
            active.filled.insert(field.clone(), value.clone());
            match schema.required_fields.iter().find(|f| !active.filled.contains_key(*f)) {
                Some(missing) => FillOutcome::Prompt(format!("please provide the {missing}")),
                None => {
                    let fields = active.filled.clone();
                    let token = submission_token(session.session_id, active.form_id, &fields);
                    let request = wire::Request::SubmitForm {
                        form_id: active.form_id,
                        fields,
                        token,
                        t_ms: 0,
                    };
                    session.active_form = None;
                    FillOutcome::Submit(request)
                }
            }
        }
        _ => FillOutcome::Invalid("not a form intent".into()),
    }
}

/// Age-estimation client; the default is a deterministic stub.
pub trait AgeEstimator {
    fn estimate(&self, photo_id: &str) -> Result<u32, String>;
}

#[derive(Debug, Clone)]
pub struct StubAgeEstimator {
    pub answer: u32,
    pub fail: bool,
}

impl Default for StubAgeEstimator {
    fn default() -> Self {
        Self { answer: 30, fail: false }
    }
}

impl AgeEstimator for StubAgeEstimator {
    fn estimate(&self, _photo_id: &str) -> Result<u32, String> {
        if self.fail {
            Err("face service unavailable".into())
        } else {
            Ok(self.answer)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeGameOutcome {
    pub commands: Vec<Command>,
    pub phase: DialogPhase,
    pub response: Option<String>,
}

/// The synchronous age game: capture commands first, then the announced
/// estimate; a client failure lands in the ERROR phase with red eyes.
pub fn age_game(photo_id: &str, client: &dyn AgeEstimator) -> AgeGameOutcome {
    let mut commands = vec![
        Command::Eye(EyeEvent::PhotoBegin),
        Command::PlayGesture("selfie_pose".to_string()),
        Command::TakePhoto,
    ];
    match client.estimate(photo_id) {
        Ok(age) => {
            let response = format!("you look about {age} years old");
            commands.push(Command::Eye(EyeEvent::PhotoEnd));
            commands.push(Command::Speak(response.clone()));
            AgeGameOutcome { commands, phase: DialogPhase::Responding, response: Some(response) }
        }
        Err(_) => {
            commands.push(Command::Eye(EyeEvent::Error));
            AgeGameOutcome { commands, phase: DialogPhase::Error, response: None }
        }
    }
}

fn render_reply(response: &wire::Response) -> String {
    match response {
        wire::Response::Actions(actions) => format!("there are {} services", actions.len()),
        wire::Response::Submission(s) => {
            format!("your request was logged with number {}", s.submission_id)
        }
        wire::Response::Status(status) => format!("the status is {status:?}"),
        wire::Response::ActionDone { action_id } => {
            format!("done, action {action_id} completed")
        }
        wire::Response::Error { message, .. } => format!("sorry, that failed: {message}"),
    }
}

struct Transition {
    state: DialogState,
    commands: Vec<Command>,
}

impl Transition {
    fn new(state: DialogState) -> Self {
        Self { state, commands: Vec::new() }
    }

    fn cmd(&mut self, c: Command) -> &mut Self {
        self.commands.push(c);
        self
    }

    /// Arm a fresh timer; the previous generation becomes stale.
    fn arm_timer(&mut self, after_ms: u64) {
        self.state.timer_generation += 1;
        self.commands.push(Command::ScheduleTimeout {
            generation: self.state.timer_generation,
            after_ms,
        });
    }

    fn clear_pending_icon(&mut self) {
        if let Some(icon) = self.state.pending_icon.take() {
            self.commands.push(Command::Eye(icon.clear_event()));
        }
    }

    fn enter_listening(&mut self, t_ms: u64) {
        self.state.phase = DialogPhase::Listening;
        self.state.listen_deadline_ms = Some(t_ms + LISTEN_WINDOW_MS);
        self.state.awaiting_photo = false;
        self.commands.push(Command::StartCapture);
        self.arm_timer(LISTEN_WINDOW_MS);
    }

    fn enter_error(&mut self) {
        self.state.phase = DialogPhase::Error;
        self.state.listen_deadline_ms = None;
        self.commands.push(Command::Eye(EyeEvent::Error));
        self.arm_timer(ERROR_RECOVERY_MS);
    }

    fn enter_responding(&mut self, message: String) {
        self.state.phase = DialogPhase::Responding;
        self.state.listen_deadline_ms = None;
        self.commands.push(Command::Speak(message));
        self.arm_timer(RESPOND_WINDOW_MS);
    }
}

/// The pure transition function of the conversation machine.
pub fn handle_event(
    state: &DialogState,
    event: &InteractionEvent,
    ctx: &DialogContext,
) -> Result<(DialogState, Vec<Command>), Rejected> {
    use DialogPhase::*;

    let reject = || {
        Err(Rejected { state: Box::new(state.clone()), event: event.clone() })
    };
    let mut tr = Transition::new(state.clone());

    // Stale timers are expected traffic in every phase: a defined no-op.
    if let EventKind::Timeout { generation } = &event.kind {
        if *generation != state.timer_generation {
            return Ok((tr.state, tr.commands));
        }
        if state.phase == Idle {
            return Ok((tr.state, tr.commands));
        }
    }

    match (&state.phase, &event.kind) {
        // Interrupt safety: wake reaches LISTENING from every phase.
        (_, EventKind::WakeDetected) => {
            match state.phase {
                Idle => {
                    tr.cmd(Command::Eye(EyeEvent::WakeDetected));
                    tr.state.rescore_attempted = false;
                }
                Listening => {} // already green; just re-arm below
                Recognizing | Responding => {
                    tr.clear_pending_icon();
                    tr.cmd(Command::Eye(EyeEvent::WakeDetected));
                }
                Executing => {
                    // the dialog-loop interrupt: abort the in-flight request
                    if let Some(tag) = tr.state.pending_backend.take() {
                        tr.cmd(Command::CancelBackend { tag });
                    }
                    tr.clear_pending_icon();
                    tr.cmd(Command::Eye(EyeEvent::WakeDetected));
                }
                Error => {
                    tr.clear_pending_icon();
                    tr.cmd(Command::Eye(EyeEvent::ErrorCleared));
                    tr.cmd(Command::Eye(EyeEvent::WakeDetected));
                }
            }
            tr.enter_listening(event.t_ms);
            Ok((tr.state, tr.commands))
        }

        (Listening, EventKind::TranscriptReady(result)) => {
            dispatch_transcript(tr, result, ctx, event.t_ms, false)
        }
        (Recognizing, EventKind::TranscriptReady(result)) => {
            dispatch_transcript(tr, result, ctx, event.t_ms, true)
        }

        (Listening, EventKind::Timeout { .. }) => {
            tr.state.phase = Idle;
            tr.state.listen_deadline_ms = None;
            tr.cmd(Command::Eye(EyeEvent::StopListening));
            tr.cmd(Command::StopCapture);
            Ok((tr.state, tr.commands))
        }
        (Recognizing, EventKind::Timeout { .. }) => {
            tr.clear_pending_icon();
            tr.enter_responding("sorry, I did not catch that".into());
            Ok((tr.state, tr.commands))
        }
        (Executing, EventKind::Timeout { .. }) => {
            tr.state.pending_backend = None;
            tr.clear_pending_icon();
            tr.enter_responding("this is taking longer than expected, please try again".into());
            Ok((tr.state, tr.commands))
        }
        (Responding, EventKind::Timeout { .. }) => {
            tr.state.phase = Idle;
            Ok((tr.state, tr.commands))
        }
        (Error, EventKind::Timeout { .. }) => {
            tr.clear_pending_icon();
            tr.state.phase = Idle;
            tr.cmd(Command::Eye(EyeEvent::ErrorCleared));
            Ok((tr.state, tr.commands))
        }

        (Executing, EventKind::BackendReply(response)) => {
            tr.state.pending_backend = None;
            tr.clear_pending_icon();
            tr.enter_responding(render_reply(response));
            Ok((tr.state, tr.commands))
        }

        (Executing, EventKind::PhotoTaken(photo)) if state.awaiting_photo => {
            tr.state.awaiting_photo = false;
            match &photo.age_estimate {
                Ok(age) => {
                    tr.clear_pending_icon();
                    tr.enter_responding(format!("you look about {age} years old"));
                }
                Err(_) => {
                    // camera icon persists into the error state by design
                    tr.enter_error();
                }
            }
            Ok((tr.state, tr.commands))
        }

        // Faults force the error phase from anywhere.
        (_, EventKind::Fault(_)) => {
            tr.state.pending_backend = None;
            tr.state.awaiting_photo = false;
            tr.enter_error();
            Ok((tr.state, tr.commands))
        }

        _ => reject(),
    }
}

fn dispatch_transcript(
    mut tr: Transition,
    result: &RecognitionResult,
    ctx: &DialogContext,
    t_ms: u64,
    from_recognizing: bool,
) -> Result<(DialogState, Vec<Command>), Rejected> {
    let active_form = tr.state.session.active_form.as_ref().map(|f| f.form_id);
    let intent = parse_intent(result, ctx, active_form);
    let mean_conf = if result.confidences.is_empty() {
        1.0
    } else {
        result.confidences.iter().sum::<f64>() / result.confidences.len() as f64
    };
    tr.state.session.history.push(result.tokens.join(" "));

    // Leaving LISTENING: stop the capture; the eye treatment depends on
    // where we land, handled per branch.
    if !from_recognizing {
        tr.cmd(Command::StopCapture);
    }

    let leave_listening_eye = |tr: &mut Transition| {
        if from_recognizing {
            tr.clear_pending_icon();
        } else {
            tr.cmd(Command::Eye(EyeEvent::StopListening));
        }
    };
    let resume_listening_eye = |tr: &mut Transition| {
        if from_recognizing {
            tr.clear_pending_icon();
            tr.cmd(Command::Eye(EyeEvent::WakeDetected));
        }
        // from LISTENING the eyes are already green
    };

    match intent {
        Intent::Fallback
            if !from_recognizing
                && !tr.state.rescore_attempted
                && mean_conf < RESCORE_CONFIDENCE =>
        {
            // low-confidence miss: second-pass recognition
            tr.state.rescore_attempted = true;
            tr.state.phase = DialogPhase::Recognizing;
            tr.state.listen_deadline_ms = None;
            tr.cmd(Command::Eye(EyeEvent::StopListening));
            tr.cmd(Command::Eye(EyeEvent::WaitBegin));
            tr.state.pending_icon = Some(PendingIcon::Clock);
            tr.cmd(Command::RequestRescore);
            tr.arm_timer(RECOGNIZE_TIMEOUT_MS);
        }
        Intent::Fallback => {
            leave_listening_eye(&mut tr);
            tr.enter_responding("sorry, I did not understand; please repeat".into());
        }
        Intent::Action { id } => {
            let action = ctx.catalog.action(id).expect("grammar ids come from the catalog");
            let params: BTreeMap<String, String> = action
                .required_params
                .iter()
                .map(|p| (p.clone(), "by voice".to_string()))
                .collect();
            leave_listening_eye(&mut tr);
            let icon = if action.name.starts_with("track") {
                tr.cmd(Command::Eye(EyeEvent::ShowMap));
                PendingIcon::Map
            } else {
                tr.cmd(Command::Eye(EyeEvent::WaitBegin));
                PendingIcon::Clock
            };
            tr.state.pending_icon = Some(icon);
            tr.state.phase = DialogPhase::Executing;
            tr.state.listen_deadline_ms = None;
            let tag = format!("req-{}", tr.state.timer_generation + 1);
            tr.state.pending_backend = Some(tag.clone());
            tr.cmd(Command::Backend {
                tag,
                request: wire::Request::InvokeAction { action_id: id, params },
            });
            tr.arm_timer(EXECUTE_TIMEOUT_MS);
        }
        Intent::Game { id: GameId::Age } => {
            leave_listening_eye(&mut tr);
            tr.cmd(Command::Eye(EyeEvent::PhotoBegin));
            tr.state.pending_icon = Some(PendingIcon::Camera);
            tr.cmd(Command::PlayGesture("selfie_pose".into()));
            tr.cmd(Command::TakePhoto);
            tr.state.phase = DialogPhase::Executing;
            tr.state.listen_deadline_ms = None;
            tr.state.awaiting_photo = true;
            tr.arm_timer(EXECUTE_TIMEOUT_MS);
        }
        intent @ (Intent::StartForm { .. } | Intent::FieldFill { .. }) => {
            match fill_and_submit(&mut tr.state.session, &intent, &ctx.catalog) {
                FillOutcome::Submit(request) => {
                    let request = match request {
                        wire::Request::SubmitForm { form_id, fields, token, .. } => {
                            wire::Request::SubmitForm { form_id, fields, token, t_ms }
                        }
                        other => other,
                    };
                    leave_listening_eye(&mut tr);
                    tr.cmd(Command::Eye(EyeEvent::WaitBegin));
                    tr.state.pending_icon = Some(PendingIcon::Clock);
                    tr.state.phase = DialogPhase::Executing;
                    tr.state.listen_deadline_ms = None;
                    let tag = format!("req-{}", tr.state.timer_generation + 1);
                    tr.state.pending_backend = Some(tag.clone());
                    tr.cmd(Command::Backend { tag, request });
                    tr.arm_timer(EXECUTE_TIMEOUT_MS);
                }
                FillOutcome::Prompt(message) => {
                    // keep the conversation going: prompt and listen again
                    resume_listening_eye(&mut tr);
                    tr.cmd(Command::Speak(message));
                    tr.enter_listening(t_ms);
                }
                FillOutcome::Invalid(message) => {
                    leave_listening_eye(&mut tr);
                    tr.enter_responding(message);
                }
            }
        }
    }
    Ok((tr.state, tr.commands))
}
