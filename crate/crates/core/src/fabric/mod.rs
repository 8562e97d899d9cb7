//! Deterministic message fabric and device model.
//!
//! Nodes exchange typed messages over links with base latency plus seeded
//! jitter; each device runs one FIFO queue at fixed capacity, so co-located
//! loops contend for compute. The whole simulation is a single-threaded
//! event queue ordered by (time, sequence): equal seeds replay bit-identical
//! traces.

mod nodes;
mod trace;

pub use nodes::{NodeSet, ScenarioWiring};
pub use trace::{
    measure_wake_latency, read_trace, write_trace, LatencyStats, TraceEvent, TraceKind,
};

use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialog::PhotoResult;
use crate::eyes::EyeEvent;
use crate::lvcsr::RecognitionResult;
use crate::motion::FaceObservation;
use crate::phonostream::UtteranceScript;

#[derive(Debug, Error)]
pub enum FabricError {
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("no link between {0:?} and {1:?}")]
    NoLink(String, String),
    #[error("invalid topology: {0}")]
    BadTopology(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
}

/// The four placeable compute loops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoopId {
    Wakeword,
    Lvcsr,
    Dialog,
    Vision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub name: String,
    /// Work units per millisecond.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    pub base_latency_ms: f64,
    pub jitter_ms: f64,
}

/// Per-loop frame cost in work units plus the wake loop's decision cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentionModel {
    pub frame_costs: BTreeMap<LoopId, f64>,
    /// The wake spotter evaluates once every this many frames.
    pub wake_chunk_frames: usize,
    /// Work units of one decision pass over the buffered chunk.
    pub wake_decision_cost: f64,
}

impl Default for ContentionModel {
    fn default() -> Self {
        let mut frame_costs = BTreeMap::new();
        frame_costs.insert(LoopId::Wakeword, 4.0);
        frame_costs.insert(LoopId::Lvcsr, 8.5);
        frame_costs.insert(LoopId::Dialog, 1.0);
        frame_costs.insert(LoopId::Vision, 1.5);
        Self { frame_costs, wake_chunk_frames: 14, wake_decision_cost: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub devices: Vec<Device>,
    /// loop -> device name; every loop placed exactly once.
    pub placement: BTreeMap<LoopId, String>,
    pub links: Vec<Link>,
    pub contention: ContentionModel,
}

/// Fixed node names.
pub mod node {
    pub const ENV: &str = "env";
    pub const WAKE: &str = "wake";
    pub const LVCSR: &str = "lvcsr";
    pub const DIALOG: &str = "dialog";
    pub const EYES: &str = "eyes";
    pub const MOTION: &str = "motion";
    pub const BACKEND: &str = "backend";
    pub const VISION: &str = "vision";
}

impl Topology {
    /// The dual-device reference topology: the wake loop runs alone on the
    /// secondary device, conversation and recognition on the main device.
    pub fn dual_device() -> Self {
        Self::reference(true)
    }

    /// Same hardware with the wake loop co-located with LVCSR on main.
    pub fn single_device() -> Self {
        Self::reference(false)
    }

    fn reference(dedicated_wake: bool) -> Self {
        let devices = vec![
            Device { name: "main".into(), capacity: 1.0 },
            Device { name: "secondary".into(), capacity: 1.0 },
            Device { name: "pi".into(), capacity: 1.0 },
            Device { name: "server".into(), capacity: 1.0 },
            Device { name: "world".into(), capacity: 1000.0 },
        ];
        let mut placement = BTreeMap::new();
        placement.insert(
            LoopId::Wakeword,
            if dedicated_wake { "secondary".to_string() } else { "main".to_string() },
        );
        placement.insert(LoopId::Lvcsr, "main".into());
        placement.insert(LoopId::Dialog, "main".into());
        placement.insert(LoopId::Vision, "secondary".into());
        let mut links = Vec::new();
        let mesh = ["main", "secondary", "pi", "server"];
        for (i, a) in mesh.iter().enumerate() {
            for b in mesh.iter().skip(i + 1) {
                links.push(Link {
                    a: a.to_string(),
                    b: b.to_string(),
                    base_latency_ms: 3.0,
                    jitter_ms: 3.0,
                });
            }
        }
        for dev in mesh {
            links.push(Link {
                a: "world".into(),
                b: dev.into(),
                base_latency_ms: 1.0,
                jitter_ms: 0.0,
            });
        }
        Self { devices, placement, links, contention: ContentionModel::default() }
    }

    pub fn validate(&self) -> Result<(), FabricError> {
        if self.devices.is_empty() {
            return Err(FabricError::BadTopology("no devices".into()));
        }
        for d in &self.devices {
            if d.capacity <= 0.0 {
                return Err(FabricError::BadTopology(format!(
                    "device {:?} has non-positive capacity",
                    d.name
                )));
            }
        }
        for l in [LoopId::Wakeword, LoopId::Lvcsr, LoopId::Dialog, LoopId::Vision] {
            let dev = self
                .placement
                .get(&l)
                .ok_or_else(|| FabricError::BadTopology(format!("loop {l:?} not placed")))?;
            if !self.devices.iter().any(|d| &d.name == dev) {
                return Err(FabricError::BadTopology(format!(
                    "loop {l:?} placed on unknown device {dev:?}"
                )));
            }
        }
        Ok(())
    }

    /// Which device hosts a node.
    pub fn device_of(&self, node_name: &str) -> Result<&str, FabricError> {
        let dev = match node_name {
            node::ENV => "world",
            node::WAKE => self.placement[&LoopId::Wakeword].as_str(),
            node::LVCSR => self.placement[&LoopId::Lvcsr].as_str(),
            node::DIALOG => self.placement[&LoopId::Dialog].as_str(),
            node::VISION => self.placement[&LoopId::Vision].as_str(),
            node::EYES => "secondary",
            node::MOTION => "pi",
            node::BACKEND => "server",
            _ => return Err(FabricError::UnknownNode(node_name.to_string())),
        };
        Ok(dev)
    }

    fn link(&self, a: &str, b: &str) -> Option<&Link> {
        self.links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }

    pub fn save<W: std::io::Write>(&self, out: W) -> Result<(), FabricError> {
        serde_json::to_writer_pretty(out, self).map_err(|e| FabricError::Config(e.to_string()))
    }

    pub fn load<R: std::io::Read>(input: R) -> Result<Self, FabricError> {
        let t: Topology =
            serde_json::from_reader(input).map_err(|e| FabricError::Config(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }
}

/// Typed message payloads; the trace records their serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    AudioFrame { stream_id: u64, posterior: Vec<f64> },
    /// End of one scripted utterance; carries the recognizer's ground truth.
    UtteranceEnd { stream_id: u64, script: UtteranceScript, utterance_seed: u64 },
    CameraTick,
    WakeDetected { score: f64 },
    Transcript(RecognitionResult),
    TimerFired { generation: u64 },
    EyeCommand(EyeEvent),
    Gesture(String),
    Face(FaceObservation),
    BackendRequest { tag: String, request: crate::backend::wire::Request },
    BackendCancel { tag: String },
    BackendReply { tag: String, response: crate::backend::wire::Response },
    TakePhoto,
    PhotoTaken(PhotoResult),
    CaptureControl { on: bool },
    Rescore,
    Fault(String),
    RoutingError { original_topic: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub src: String,
    pub dst: String,
    pub topic: String,
    pub payload: Payload,
    pub send_ms: f64,
    pub seq: u64,
}

/// How much device work one message costs its receiving node.
fn message_cost(topology: &Topology, msg: &Message) -> f64 {
    let costs = &topology.contention.frame_costs;
    match (&msg.payload, msg.dst.as_str()) {
        (Payload::AudioFrame { .. }, n) if n == node::WAKE => costs[&LoopId::Wakeword],
        (Payload::AudioFrame { .. }, n) if n == node::LVCSR => costs[&LoopId::Lvcsr],
        (Payload::TimerFired { .. }, n) if n == node::WAKE => {
            topology.contention.wake_decision_cost
        }
        (Payload::CameraTick, _) => costs[&LoopId::Vision],
        (Payload::UtteranceEnd { .. }, _) => 25.0, // final decode pass
        (Payload::BackendRequest { .. }, _) => 40.0,
        (Payload::TakePhoto, _) => 30.0, // capture plus the cloud call
        (_, n) if n == node::DIALOG => costs[&LoopId::Dialog],
        _ => 0.5,
    }
}

#[derive(Debug)]
enum EventBody {
    /// Send-time bookkeeping, then link traversal.
    Send(Message),
    /// Arrival at the destination device queue.
    Deliver(Message),
    /// Device finished the work for this message; run the node handler.
    Process(Message),
    /// Pure trace mark (ground-truth annotations).
    Mark(TraceKind),
}

struct QueuedEvent {
    t_ms: f64,
    seq: u64,
    body: EventBody,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.t_ms == other.t_ms && self.seq == other.seq
    }
}
impl Eq for QueuedEvent {}
impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueuedEvent {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.t_ms
            .partial_cmp(&other.t_ms)
            .expect("finite times")
            .then(self.seq.cmp(&other.seq))
    }
}

/// Outgoing actions a node hands back to the fabric.
pub struct NodeCtx {
    now_ms: f64,
    node: String,
    outbox: Vec<(String, String, Payload)>,
    timers: Vec<(u64, u64)>,
    trace: Vec<(String, String)>,
}

impl NodeCtx {
    pub fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub fn send(&mut self, dst: &str, topic: &str, payload: Payload) {
        self.outbox.push((dst.to_string(), topic.to_string(), payload));
    }

    /// Timer that fires back into this node after `after_ms`.
    pub fn arm_timer(&mut self, generation: u64, after_ms: u64) {
        self.timers.push((generation, after_ms));
    }

    /// Record a node state transition in the trace.
    pub fn note(&mut self, kind: &str, detail: String) {
        self.trace.push((kind.to_string(), detail));
    }

    pub fn node(&self) -> &str {
        &self.node
    }
}

/// A simulated node: reacts to delivered messages.
pub trait Node {
    fn name(&self) -> &str;
    fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx);
    /// Called once before the first event.
    fn on_start(&mut self, _ctx: &mut NodeCtx) {}
}

pub struct SimFabric {
    topology: Topology,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    next_seq: u64,
    /// per (src,dst): last scheduled delivery time, for FIFO clamping
    last_delivery: HashMap<(String, String), f64>,
    pair_seq: HashMap<(String, String), u64>,
    device_busy_until: HashMap<String, f64>,
    jitter_rng: ChaCha8Rng,
    clock_ms: f64,
    trace: Vec<TraceEvent>,
    delivered: u64,
    sent: u64,
    routing_errors: u64,
}

impl SimFabric {
    pub fn new(topology: Topology, seed: u64) -> Result<Self, FabricError> {
        topology.validate()?;
        Ok(Self {
            topology,
            queue: BinaryHeap::new(),
            next_seq: 0,
            last_delivery: HashMap::new(),
            pair_seq: HashMap::new(),
            device_busy_until: HashMap::new(),
            jitter_rng: ChaCha8Rng::seed_from_u64(seed ^ 0xFAB0),
            clock_ms: 0.0,
            trace: Vec::new(),
            delivered: 0,
            sent: 0,
            routing_errors: 0,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn now_ms(&self) -> f64 {
        self.clock_ms
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn take_trace(self) -> Vec<TraceEvent> {
        self.trace
    }

    pub fn counts(&self) -> (u64, u64, u64) {
        (self.sent, self.delivered, self.routing_errors)
    }

    fn push(&mut self, t_ms: f64, body: EventBody) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(QueuedEvent { t_ms, seq, body }));
    }

    /// Schedule a send at an absolute time (used to pre-load stimuli).
    pub fn schedule_send(&mut self, t_ms: f64, src: &str, dst: &str, topic: &str, payload: Payload) {
        let msg = Message {
            src: src.to_string(),
            dst: dst.to_string(),
            topic: topic.to_string(),
            payload,
            send_ms: t_ms,
            seq: 0, // assigned at send time
        };
        self.push(t_ms, EventBody::Send(msg));
    }

    /// Schedule a pure trace mark.
    pub fn schedule_mark(&mut self, t_ms: f64, kind: TraceKind) {
        self.push(t_ms, EventBody::Mark(kind));
    }

    /// Compute delivery and enqueue; FIFO per (src,dst) is preserved by
    /// clamping delivery to the pair's previous delivery time.
    fn route(&mut self, mut msg: Message) {
        let pair = (msg.src.clone(), msg.dst.clone());
        let pseq = self.pair_seq.entry(pair.clone()).or_insert(0);
        *pseq += 1;
        msg.seq = *pseq;
        self.sent += 1;
        self.trace.push(TraceEvent {
            t_ms: msg.send_ms,
            kind: TraceKind::MessageSent {
                src: msg.src.clone(),
                dst: msg.dst.clone(),
                topic: msg.topic.clone(),
                seq: msg.seq,
            },
        });

        let src_dev = match self.topology.device_of(&msg.src) {
            Ok(d) => d.to_string(),
            Err(e) => {
                self.routing_failure(msg, e.to_string());
                return;
            }
        };
        let dst_dev = match self.topology.device_of(&msg.dst) {
            Ok(d) => d.to_string(),
            Err(e) => {
                self.routing_failure(msg, e.to_string());
                return;
            }
        };
        let latency = if src_dev == dst_dev {
            0.0
        } else {
            match self.topology.link(&src_dev, &dst_dev) {
                Some(link) => {
                    let jitter = if link.jitter_ms > 0.0 {
                        self.jitter_rng.gen::<f64>() * link.jitter_ms
                    } else {
                        0.0
                    };
                    link.base_latency_ms + jitter
                }
                None => {
                    self.routing_failure(
                        msg,
                        format!("no link between {src_dev:?} and {dst_dev:?}"),
                    );
                    return;
                }
            }
        };
        let mut delivery = msg.send_ms + latency;
        if let Some(&prev) = self.last_delivery.get(&pair) {
            if delivery < prev {
                delivery = prev; // FIFO: never overtake an earlier message
            }
        }
        self.last_delivery.insert(pair, delivery);
        self.push(delivery, EventBody::Deliver(msg));
    }

    fn routing_failure(&mut self, msg: Message, reason: String) {
        self.routing_errors += 1;
        self.trace.push(TraceEvent {
            t_ms: msg.send_ms,
            kind: TraceKind::RoutingError {
                src: msg.src.clone(),
                dst: msg.dst.clone(),
                topic: msg.topic.clone(),
                reason: reason.clone(),
            },
        });
        // the error travels back to the sender as an ordinary message,
        // unless the sender itself is unroutable
        if self.topology.device_of(&msg.src).is_ok() && msg.dst != msg.src {
            let err = Message {
                src: msg.dst.clone(),
                dst: msg.src.clone(),
                topic: "routing-error".into(),
                payload: Payload::RoutingError {
                    original_topic: msg.topic.clone(),
                    reason,
                },
                send_ms: msg.send_ms,
                seq: 0,
            };
            // local bookkeeping only; do not count the bounce as a send
            let pair = (err.src.clone(), err.dst.clone());
            let pseq = self.pair_seq.entry(pair).or_insert(0);
            *pseq += 1;
            let mut err = err;
            err.seq = *pseq;
            self.push(err.send_ms, EventBody::Deliver(err));
        }
    }

    /// Run the event loop until `t_end_ms`, dispatching into `nodes`.
    pub fn run_until(&mut self, t_end_ms: f64, nodes: &mut dyn NodeHost) {
        // start hooks
        let names: Vec<String> = nodes.names();
        for name in names {
            let mut ctx = NodeCtx {
                now_ms: self.clock_ms,
                node: name.clone(),
                outbox: vec![],
                timers: vec![],
                trace: vec![],
            };
            nodes.start(&name, &mut ctx);
            self.absorb_ctx(ctx);
        }
        while self
            .queue
            .peek()
            .map(|Reverse(e)| e.t_ms <= t_end_ms)
            .unwrap_or(false)
        {
            let Reverse(ev) = self.queue.pop().expect("peeked");
            self.clock_ms = ev.t_ms;
            match ev.body {
                EventBody::Send(msg) => self.route(msg),
                EventBody::Deliver(msg) => {
                    self.delivered += 1;
                    self.trace.push(TraceEvent {
                        t_ms: self.clock_ms,
                        kind: TraceKind::MessageDelivered {
                            src: msg.src.clone(),
                            dst: msg.dst.clone(),
                            topic: msg.topic.clone(),
                            seq: msg.seq,
                        },
                    });
                    // device FIFO: reserve compute, process at completion
                    let dev = self
                        .topology
                        .device_of(&msg.dst)
                        .expect("validated at delivery")
                        .to_string();
                    let capacity = self
                        .topology
                        .devices
                        .iter()
                        .find(|d| d.name == dev)
                        .expect("device exists")
                        .capacity;
                    let cost = message_cost(&self.topology, &msg);
                    let busy = self.device_busy_until.entry(dev).or_insert(0.0);
                    let start = busy.max(self.clock_ms);
                    let completion = start + cost / capacity;
                    *busy = completion;
                    self.push(completion, EventBody::Process(msg));
                }
                EventBody::Process(msg) => {
                    self.trace.push(TraceEvent {
                        t_ms: self.clock_ms,
                        kind: TraceKind::MessageProcessed {
                            dst: msg.dst.clone(),
                            topic: msg.topic.clone(),
                            seq: msg.seq,
                        },
                    });
                    let mut ctx = NodeCtx {
                        now_ms: self.clock_ms,
                        node: msg.dst.clone(),
                        outbox: vec![],
                        timers: vec![],
                        trace: vec![],
                    };
                    nodes.dispatch(&msg, &mut ctx);
                    self.absorb_ctx(ctx);
                }
                EventBody::Mark(kind) => {
                    self.trace.push(TraceEvent { t_ms: self.clock_ms, kind });
                }
            }
        }
        self.clock_ms = t_end_ms;
    }

    fn absorb_ctx(&mut self, ctx: NodeCtx) {
        let now = ctx.now_ms;
        let node = ctx.node.clone();
        for (kind, detail) in ctx.trace {
            self.trace.push(TraceEvent {
                t_ms: now,
                kind: TraceKind::NodeNote { node: node.clone(), kind, detail },
            });
        }
        for (dst, topic, payload) in ctx.outbox {
            let msg = Message {
                src: node.clone(),
                dst,
                topic,
                payload,
                send_ms: now,
                seq: 0,
            };
            self.push(now, EventBody::Send(msg));
        }
        for (generation, after_ms) in ctx.timers {
            let msg = Message {
                src: node.clone(),
                dst: node.clone(),
                topic: "timer".into(),
                payload: Payload::TimerFired { generation },
                send_ms: now + after_ms as f64,
                seq: 0,
            };
            self.push(now + after_ms as f64, EventBody::Send(msg));
        }
    }
}

/// Dispatch surface over a set of nodes.
pub trait NodeHost {
    fn names(&self) -> Vec<String>;
    fn start(&mut self, node: &str, ctx: &mut NodeCtx);
    fn dispatch(&mut self, msg: &Message, ctx: &mut NodeCtx);
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo {
        name: String,
        peer: String,
        received: Vec<String>,
        bounce: bool,
    }

    impl Node for Echo {
        fn name(&self) -> &str {
            &self.name
        }
        fn on_message(&mut self, msg: &Message, ctx: &mut NodeCtx) {
            self.received.push(msg.topic.clone());
            if self.bounce && msg.topic != "pong" {
                ctx.send(&self.peer, "pong", Payload::CameraTick);
            }
        }
    }

    struct Pair {
        a: Echo,
        b: Echo,
    }

    impl NodeHost for Pair {
        fn names(&self) -> Vec<String> {
            vec![self.a.name.clone(), self.b.name.clone()]
        }
        fn start(&mut self, _node: &str, _ctx: &mut NodeCtx) {}
        fn dispatch(&mut self, msg: &Message, ctx: &mut NodeCtx) {
            if msg.dst == self.a.name {
                self.a.on_message(msg, ctx);
            } else if msg.dst == self.b.name {
                self.b.on_message(msg, ctx);
            }
        }
    }

    fn pair() -> Pair {
        Pair {
            a: Echo { name: node::DIALOG.into(), peer: node::WAKE.into(), received: vec![], bounce: false },
            b: Echo { name: node::WAKE.into(), peer: node::DIALOG.into(), received: vec![], bounce: true },
        }
    }

    #[test]
    fn zero_jitter_link_delivers_at_base_latency() {
        let mut topo = Topology::dual_device();
        for l in &mut topo.links {
            l.jitter_ms = 0.0;
            l.base_latency_ms = 5.0;
        }
        let mut fabric = SimFabric::new(topo, 1).unwrap();
        fabric.schedule_send(100.0, node::DIALOG, node::WAKE, "ping", Payload::CameraTick);
        let mut nodes = pair();
        fabric.run_until(1000.0, &mut nodes);
        let delivered: Vec<&TraceEvent> = fabric
            .trace()
            .iter()
            .filter(|e| matches!(&e.kind, TraceKind::MessageDelivered { topic, .. } if topic == "ping"))
            .collect();
        assert_eq!(delivered.len(), 1);
        assert_eq!(delivered[0].t_ms, 105.0);
    }

    #[test]
    fn same_pair_messages_keep_fifo_order_despite_jitter() {
        let mut fabric = SimFabric::new(Topology::dual_device(), 7).unwrap();
        for i in 0..50 {
            fabric.schedule_send(
                100.0 + i as f64,
                node::DIALOG,
                node::WAKE,
                &format!("m{i}"),
                Payload::CameraTick,
            );
        }
        let mut nodes = pair();
        nodes.b.bounce = false;
        fabric.run_until(10_000.0, &mut nodes);
        let mut last = f64::NEG_INFINITY;
        let mut count = 0;
        for e in fabric.trace() {
            if let TraceKind::MessageDelivered { src, dst, .. } = &e.kind {
                if src == node::DIALOG && dst == node::WAKE {
                    assert!(e.t_ms >= last, "FIFO violated");
                    last = e.t_ms;
                    count += 1;
                }
            }
        }
        assert_eq!(count, 50);
    }

    #[test]
    fn jittered_deliveries_replay_bit_identically() {
        let run = || {
            let mut fabric = SimFabric::new(Topology::dual_device(), 42).unwrap();
            for i in 0..1000 {
                fabric.schedule_send(
                    i as f64,
                    node::DIALOG,
                    node::MOTION,
                    "tick",
                    Payload::CameraTick,
                );
            }
            let mut nodes = pair();
            fabric.run_until(100_000.0, &mut nodes);
            fabric
                .trace()
                .iter()
                .filter_map(|e| match &e.kind {
                    TraceKind::MessageDelivered { .. } => Some(e.t_ms),
                    _ => None,
                })
                .collect::<Vec<f64>>()
        };
        let a = run();
        let b = run();
        assert_eq!(a.len(), 1000);
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_destination_returns_routing_error_to_sender() {
        let mut fabric = SimFabric::new(Topology::dual_device(), 3).unwrap();
        fabric.schedule_send(0.0, node::DIALOG, "nonsense", "x", Payload::CameraTick);
        let mut nodes = pair();
        fabric.run_until(1000.0, &mut nodes);
        let (sent, delivered, errors) = fabric.counts();
        assert_eq!(errors, 1);
        assert_eq!(sent, 1);
        assert_eq!(delivered, 1, "the bounce itself is delivered");
        assert_eq!(nodes.a.received, vec!["routing-error".to_string()]);
    }

    #[test]
    fn conservation_every_send_is_delivered_or_errored() {
        let mut fabric = SimFabric::new(Topology::dual_device(), 9).unwrap();
        for i in 0..200 {
            let dst = if i % 10 == 0 { "ghost" } else { node::WAKE };
            fabric.schedule_send(i as f64, node::DIALOG, dst, "t", Payload::CameraTick);
        }
        let mut nodes = pair();
        nodes.b.bounce = false;
        fabric.run_until(10_000.0, &mut nodes);
        let (sent, delivered, errors) = fabric.counts();
        assert_eq!(sent, 200);
        // every sent message was either delivered or returned as an error;
        // bounced notifications add to deliveries
        assert_eq!(delivered, (200 - errors) + errors);
        assert_eq!(errors, 20);
    }

    #[test]
    fn contention_adding_a_colocated_loop_never_speeds_up_frames() {
        // one device, frames of loop A alone vs A plus B interleaved
        let completion_times = |with_b: bool| -> Vec<f64> {
            let mut topo = Topology::single_device();
            for l in &mut topo.links {
                l.jitter_ms = 0.0;
            }
            let mut fabric = SimFabric::new(topo, 5).unwrap();
            for i in 0..50 {
                let t = i as f64 * 10.0;
                fabric.schedule_send(
                    t,
                    node::ENV,
                    node::WAKE,
                    "frame",
                    Payload::AudioFrame { stream_id: 1, posterior: vec![] },
                );
                if with_b {
                    fabric.schedule_send(
                        t,
                        node::ENV,
                        node::LVCSR,
                        "frame",
                        Payload::AudioFrame { stream_id: 1, posterior: vec![] },
                    );
                }
            }
            struct Sink;
            impl NodeHost for Sink {
                fn names(&self) -> Vec<String> {
                    vec![]
                }
                fn start(&mut self, _: &str, _: &mut NodeCtx) {}
                fn dispatch(&mut self, _: &Message, _: &mut NodeCtx) {}
            }
            let mut sink = Sink;
            fabric.run_until(100_000.0, &mut sink);
            // completion = Process event times for wake frames: recover from
            // trace order of deliveries + deterministic device model by
            // re-running; here we use delivered order and device math is
            // checked via the monotonicity assertion below.
            fabric
                .trace()
                .iter()
                .filter_map(|e| match &e.kind {
                    TraceKind::MessageProcessed { dst, .. } if dst == node::WAKE => Some(e.t_ms),
                    _ => None,
                })
                .collect()
        };
        let alone = completion_times(false);
        let contended = completion_times(true);
        assert_eq!(alone.len(), 50);
        assert_eq!(contended.len(), 50);
        for (a, c) in alone.iter().zip(&contended) {
            assert!(c >= a, "co-located loop made a frame finish earlier: {c} < {a}");
        }
        assert!(contended.last().unwrap() > alone.last().unwrap());
    }
}
