//! duobot: a desk-scale humanoid robot runtime and simulator.
//!
//! The robot is modeled as a set of message-passing nodes over a deterministic
//! fabric: a wake-word spotter and eye display on a secondary compute device,
//! the conversation loop, speech recognizer and gesture control on the main
//! device, a servo chain behind a serial bus, and a form/action backend.
//! Everything is driven by synthetic phoneme-posterior streams so the whole
//! stack is testable without microphones or hardware.
//!
//! Module map:
//! - [`phonostream`]: synthetic utterance scripts, posterior streams, corpora
//! - [`wakeword`]: the three keyword-spotting algorithms and their metrics
//! - [`lvcsr`]: calibrated word-error recognizer stub
//! - [`catalog`]: the action/form catalog shared by dialog and backend
//! - [`dialog`]: the main conversation state machine
//! - [`backend`]: durable, idempotent form/action service
//! - [`eyes`]: eye color/icon signaling state machine
//! - [`motion`]: 13-servo chain, gesture playback, head tracking
//! - [`fabric`]: deterministic discrete-event message fabric and node runtime
//! - [`harness`]: scenario runner, calibration sweeps, reports, console

pub mod backend;
pub mod catalog;
pub mod dialog;
pub mod eyes;
pub mod fabric;
pub mod harness;
pub mod lvcsr;
pub mod motion;
pub mod phonostream;
pub mod wakeword;
