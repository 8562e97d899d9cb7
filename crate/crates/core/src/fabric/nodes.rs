//! The robot's nodes on the fabric: wake spotter, recognizer, conversation
//! loop, eyes, motion, backend and vision. Each node owns its state
//! exclusively; all interaction is by message.

use std::collections::HashSet;

use super::{node, Message, Node, NodeCtx, NodeHost, Payload};
use crate::backend::{wire, BackendService};
use crate::catalog::Catalog;
use crate::dialog::{
    handle_event, AgeEstimator, Command, DialogContext, DialogState, EventKind, InteractionEvent,
    PhotoResult, StubAgeEstimator,
};
use crate::eyes::{apply_event, EyeState};
use crate::lvcsr::LvcsrStub;
use crate::motion::{MotionConfig, MotionSim};
use crate::wakeword::{KeywordHmm, OnlineHmmSpotter};

/// Everything the node set needs to boot.
pub struct ScenarioWiring {
    pub catalog: Catalog,
    pub hmm: KeywordHmm,
    pub hmm_ratio_threshold: f64,
    pub wake_chunk_frames: usize,
    pub lvcsr: LvcsrStub,
    pub wer: f64,
    pub age_answer: u32,
    pub age_fail: bool,
    pub motion_config: MotionConfig,
}

struct WakeNode {
    spotter: OnlineHmmSpotter,
    buffered: Vec<Vec<f64>>,
    chunk_ms: u64,
}

impl Node for WakeNode {
    fn name(&self) -> &str {
        node::WAKE
    }

    fn on_start(&mut self, ctx: &mut NodeCtx) {
        ctx.arm_timer(0, self.chunk_ms);
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        match &msg.payload {
            Payload::AudioFrame { posterior, .. } => {
                self.buffered.push(posterior.clone());
            }
            Payload::TimerFired { .. } => {
                // decision cadence: run the spotter over everything buffered
                for frame in self.buffered.drain(..) {
                    if let Some(score) = self.spotter.push_frame(&frame) {
                        ctx.note("wake-fired", format!("score {score:.2}"));
                        ctx.send(node::DIALOG, "wake", Payload::WakeDetected { score });
                    }
                }
                ctx.arm_timer(0, self.chunk_ms);
            }
            _ => {}
        }
    }
}

struct LvcsrNode {
    stub: LvcsrStub,
    wer: f64,
    capturing: bool,
    last_utterance: Option<(crate::phonostream::UtteranceScript, u64)>,
}

impl Node for LvcsrNode {
    fn name(&self) -> &str {
        node::LVCSR
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        match &msg.payload {
            Payload::AudioFrame { .. } => {} // the streaming cost is the point
            Payload::CaptureControl { on } => {
                self.capturing = *on;
            }
            Payload::UtteranceEnd { script, utterance_seed, .. } => {
                self.last_utterance = Some((script.clone(), *utterance_seed));
                if self.capturing {
                    self.capturing = false;
                    match self.stub.recognize(script, self.wer, *utterance_seed) {
                        Ok(result) => {
                            ctx.note("transcript", result.tokens.join(" "));
                            ctx.send(node::DIALOG, "transcript", Payload::Transcript(result));
                        }
                        Err(e) => {
                            ctx.send(node::DIALOG, "fault", Payload::Fault(e.to_string()));
                        }
                    }
                }
            }
            Payload::Rescore => {
                // second pass: a slower, better model over the same capture
                if let Some((script, seed)) = &self.last_utterance {
                    match self.stub.recognize(script, self.wer / 2.0, seed.wrapping_add(1)) {
                        Ok(result) => {
                            ctx.send(node::DIALOG, "transcript", Payload::Transcript(result));
                        }
                        Err(e) => {
                            ctx.send(node::DIALOG, "fault", Payload::Fault(e.to_string()));
                        }
                    }
                }
            }
            _ => {}
        }
    }
}

struct DialogNode {
    state: DialogState,
    dctx: DialogContext,
}

impl DialogNode {
    fn execute(&mut self, commands: Vec<Command>, ctx: &mut NodeCtx) {
        for c in commands {
            match c {
                Command::Eye(e) => ctx.send(node::EYES, "eye", Payload::EyeCommand(e)),
                Command::PlayGesture(name) => {
                    ctx.send(node::MOTION, "gesture", Payload::Gesture(name))
                }
                Command::Speak(text) => ctx.note("speak", text),
                Command::StartCapture => {
                    ctx.send(node::LVCSR, "capture", Payload::CaptureControl { on: true })
                }
                Command::StopCapture => {
                    ctx.send(node::LVCSR, "capture", Payload::CaptureControl { on: false })
                }
                Command::RequestRescore => ctx.send(node::LVCSR, "rescore", Payload::Rescore),
                Command::Backend { tag, request } => {
                    ctx.send(node::BACKEND, "backend-request", Payload::BackendRequest {
                        tag,
                        request,
                    })
                }
                Command::CancelBackend { tag } => {
                    ctx.send(node::BACKEND, "backend-cancel", Payload::BackendCancel { tag })
                }
                Command::TakePhoto => ctx.send(node::VISION, "photo", Payload::TakePhoto),
                Command::ScheduleTimeout { generation, after_ms } => {
                    ctx.arm_timer(generation, after_ms)
                }
            }
        }
    }
}

impl Node for DialogNode {
    fn name(&self) -> &str {
        node::DIALOG
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        let t_ms = ctx.now_ms() as u64;
        let kind = match &msg.payload {
            Payload::WakeDetected { .. } => EventKind::WakeDetected,
            Payload::Transcript(r) => EventKind::TranscriptReady(r.clone()),
            Payload::TimerFired { generation } => EventKind::Timeout { generation: *generation },
            Payload::BackendReply { response, .. } => EventKind::BackendReply(response.clone()),
            Payload::PhotoTaken(p) => EventKind::PhotoTaken(p.clone()),
            Payload::Fault(reason) => EventKind::Fault(reason.clone()),
            Payload::RoutingError { original_topic, reason } => {
                ctx.note("routing-error", format!("{original_topic}: {reason}"));
                return;
            }
            _ => return,
        };
        let event = InteractionEvent { t_ms, kind };
        match handle_event(&self.state, &event, &self.dctx) {
            Ok((next, commands)) => {
                if next.phase != self.state.phase {
                    ctx.note("phase", format!("{:?}->{:?}", self.state.phase, next.phase));
                }
                self.state = next;
                self.execute(commands, ctx);
            }
            Err(rejected) => {
                ctx.note(
                    "rejected",
                    format!("{:?} in {:?}", discriminant_name(&rejected.event.kind), self.state.phase),
                );
            }
        }
    }
}

fn discriminant_name(kind: &EventKind) -> &'static str {
    match kind {
        EventKind::WakeDetected => "WakeDetected",
        EventKind::TranscriptReady(_) => "TranscriptReady",
        EventKind::Timeout { .. } => "Timeout",
        EventKind::BackendReply(_) => "BackendReply",
        EventKind::Fault(_) => "Fault",
        EventKind::PhotoTaken(_) => "PhotoTaken",
    }
}

struct EyesNode {
    state: EyeState,
}

impl Node for EyesNode {
    fn name(&self) -> &str {
        node::EYES
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        if let Payload::EyeCommand(e) = &msg.payload {
            match apply_event(self.state, *e) {
                Ok(next) => {
                    if next != self.state {
                        self.state = next;
                        ctx.note("eye", self.state.log_line(ctx.now_ms() as u64));
                    }
                }
                Err(r) => ctx.note("eye-rejected", format!("{r}")),
            }
        }
    }
}

struct MotionNode {
    sim: MotionSim,
    tick_ms: u64,
}

impl MotionNode {
    fn catch_up(&mut self, now_ms: f64) {
        let target = now_ms as u64;
        let current = self.sim.now_ms();
        if target > current {
            self.sim.step(target - current).expect("positive dt");
        }
    }
}

impl Node for MotionNode {
    fn name(&self) -> &str {
        node::MOTION
    }

    fn on_start(&mut self, ctx: &mut NodeCtx) {
        self.sim.set_tracking(true);
        ctx.arm_timer(0, self.tick_ms);
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        match &msg.payload {
            Payload::TimerFired { .. } => {
                self.catch_up(ctx.now_ms());
                ctx.note("gaze", format!("{:.3}", self.sim.gaze_yaw()));
                ctx.arm_timer(0, self.tick_ms);
            }
            Payload::Gesture(name) => {
                self.catch_up(ctx.now_ms());
                match self.sim.play_gesture(name) {
                    Ok(sched) => ctx.note(
                        "gesture",
                        format!("{} until {}", sched.name, sched.end_ms),
                    ),
                    Err(e) => ctx.note("gesture-error", e.to_string()),
                }
            }
            Payload::Face(obs) => {
                self.catch_up(ctx.now_ms());
                self.sim.track_face(*obs);
            }
            _ => {}
        }
    }
}

struct BackendNode {
    service: BackendService,
    cancelled: HashSet<String>,
}

impl Node for BackendNode {
    fn name(&self) -> &str {
        node::BACKEND
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        match &msg.payload {
            Payload::BackendRequest { tag, request } => {
                if self.cancelled.remove(tag) {
                    ctx.note("cancelled", tag.clone());
                    return;
                }
                let mut request = request.clone();
                if let wire::Request::SubmitForm { t_ms, .. } = &mut request {
                    *t_ms = ctx.now_ms() as u64;
                }
                let response = wire::handle_request(&mut self.service, request);
                ctx.send(node::DIALOG, "backend-reply", Payload::BackendReply {
                    tag: tag.clone(),
                    response,
                });
            }
            Payload::BackendCancel { tag } => {
                self.cancelled.insert(tag.clone());
            }
            _ => {}
        }
    }
}

struct VisionNode {
    estimator: StubAgeEstimator,
    photo_counter: u64,
}

impl Node for VisionNode {
    fn name(&self) -> &str {
        node::VISION
    }

    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        match &msg.payload {
            Payload::Face(obs) => {
                // one observation per sighting: the offset is relative to
                // the gaze at observation time, and the motion controller
                // converges on the absolute target it implies
                ctx.send(node::MOTION, "face", Payload::Face(*obs));
            }
            Payload::CameraTick => {
                // frame cost is the point; detection work happens above
            }
            Payload::TakePhoto => {
                self.photo_counter += 1;
                let photo_id = format!("photo-{}", self.photo_counter);
                let age_estimate = self.estimator.estimate(&photo_id);
                ctx.send(node::DIALOG, "photo", Payload::PhotoTaken(PhotoResult {
                    photo_id,
                    age_estimate,
                }));
            }
            _ => {}
        }
    }
}

/// The full node set for scenario runs.
pub struct NodeSet {
    wake: WakeNode,
    lvcsr: LvcsrNode,
    dialog: DialogNode,
    eyes: EyesNode,
    motion: MotionNode,
    backend: BackendNode,
    vision: VisionNode,
}

impl NodeSet {
    pub fn new(wiring: ScenarioWiring) -> Self {
        let dctx = DialogContext::with_default_grammar(wiring.catalog.clone());
        Self {
            wake: WakeNode {
                spotter: OnlineHmmSpotter::new(
                    wiring.hmm.clone(),
                    wiring.hmm_ratio_threshold,
                    crate::phonostream::FRAME_PERIOD_MS,
                ),
                buffered: Vec::new(),
                chunk_ms: wiring.wake_chunk_frames as u64
                    * crate::phonostream::FRAME_PERIOD_MS as u64,
            },
            lvcsr: LvcsrNode {
                stub: wiring.lvcsr,
                wer: wiring.wer,
                capturing: false,
                last_utterance: None,
            },
            dialog: DialogNode { state: DialogState::initial(1), dctx },
            eyes: EyesNode { state: EyeState::initial() },
            motion: MotionNode { sim: MotionSim::new(wiring.motion_config), tick_ms: 50 },
            backend: BackendNode {
                service: BackendService::ephemeral(wiring.catalog),
                cancelled: HashSet::new(),
            },
            vision: VisionNode {
                estimator: StubAgeEstimator { answer: wiring.age_answer, fail: wiring.age_fail },
                photo_counter: 0,
            },
        }
    }

    pub fn dialog_state(&self) -> &DialogState {
        &self.dialog.state
    }

    pub fn eye_state(&self) -> EyeState {
        self.eyes.state
    }

    pub fn motion_sim(&self) -> &MotionSim {
        &self.motion.sim
    }

    pub fn backend_service(&self) -> &BackendService {
        &self.backend.service
    }
}

impl NodeHost for NodeSet {
    fn names(&self) -> Vec<String> {
        vec![
            node::WAKE.into(),
            node::LVCSR.into(),
            node::DIALOG.into(),
            node::EYES.into(),
            node::MOTION.into(),
            node::BACKEND.into(),
            node::VISION.into(),
        ]
    }

    fn start(&mut self, name: &str, ctx: &mut NodeCtx) {
        match name {
            node::WAKE => self.wake.on_start(ctx),
            node::LVCSR => self.lvcsr.on_start(ctx),
            node::DIALOG => self.dialog.on_start(ctx),
            node::EYES => self.eyes.on_start(ctx),
            node::MOTION => self.motion.on_start(ctx),
            node::BACKEND => self.backend.on_start(ctx),
            node::VISION => self.vision.on_start(ctx),
            _ => {}
        }
    }

    fn dispatch(&mut self, msg: &Message, ctx: &mut NodeCtx) {
        match msg.dst.as_str() {
            node::WAKE => self.wake.on_message(msg, ctx),
            node::LVCSR => self.lvcsr.on_message(msg, ctx),
            node::DIALOG => self.dialog.on_message(msg, ctx),
            node::EYES => self.eyes.on_message(msg, ctx),
            node::MOTION => self.motion.on_message(msg, ctx),
            node::BACKEND => self.backend.on_message(msg, ctx),
            node::VISION => self.vision.on_message(msg, ctx),
            _ => ctx.note("dropped", format!("no node named {:?}", msg.dst)),
        }
    }
}
