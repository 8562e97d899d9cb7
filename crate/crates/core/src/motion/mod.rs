//! Servo chain simulation: 13 daisy-chained servos, keyframed gesture
//! playback with speed limiting, and head tracking with torso handoff at the
//! neck limit.
//!
//! Setpoint commands traverse the serial bus and reach a servo after
//! `(chain_position - 1) * hop_latency`. Servos slew toward their last
//! received setpoint at bounded speed. The simulation advances with exact
//! event-driven integration, so trajectories do not depend on the step size
//! the caller uses.

mod gestures;

pub use gestures::{GestureLibrary, GestureScript, Keyframe, SHIPPED_GESTURES};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type ServoId = u8;
pub const SERVO_COUNT: ServoId = 13;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("unknown gesture {requested:?}; available: {}", available.join(", "))]
    UnknownGesture { requested: String, available: Vec<String> },
    #[error("bad gesture script: {0}")]
    BadScript(String),
    #[error("bad step: {0}")]
    BadStep(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ServoGroup {
    Arm,
    Head,
    Torso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServoState {
    pub id: ServoId,
    pub group: ServoGroup,
    pub angle_deg: f64,
    pub min_deg: f64,
    pub max_deg: f64,
    pub max_speed_dps: f64,
    /// Hop index on the serial bus; position 1 receives broadcasts first.
    pub chain_position: u8,
}

impl ServoState {
    fn clamp(&self, angle: f64) -> f64 {
        angle.clamp(self.min_deg, self.max_deg)
    }
}

pub const NECK_YAW: ServoId = 9;
pub const NECK_PITCH: ServoId = 10;
pub const TORSO_YAW: ServoId = 11;

/// The standard 13-servo bank: 8 arm, 2 head, 3 torso.
pub fn default_servos() -> Vec<ServoState> {
    let mut servos = Vec::with_capacity(13);
    for id in 1..=8u8 {
        servos.push(ServoState {
            id,
            group: ServoGroup::Arm,
            angle_deg: 0.0,
            min_deg: -120.0,
            max_deg: 120.0,
            max_speed_dps: 120.0,
            chain_position: id,
        });
    }
    servos.push(ServoState {
        id: NECK_YAW,
        group: ServoGroup::Head,
        angle_deg: 0.0,
        min_deg: -35.0,
        max_deg: 35.0,
        max_speed_dps: 180.0,
        chain_position: 9,
    });
    servos.push(ServoState {
        id: NECK_PITCH,
        group: ServoGroup::Head,
        angle_deg: 0.0,
        min_deg: -25.0,
        max_deg: 25.0,
        max_speed_dps: 180.0,
        chain_position: 10,
    });
    servos.push(ServoState {
        id: TORSO_YAW,
        group: ServoGroup::Torso,
        angle_deg: 0.0,
        min_deg: -60.0,
        max_deg: 60.0,
        max_speed_dps: 60.0,
        chain_position: 11,
    });
    for (id, pos) in [(12u8, 12u8), (13, 13)] {
        servos.push(ServoState {
            id,
            group: ServoGroup::Torso,
            angle_deg: 0.0,
            min_deg: -30.0,
            max_deg: 30.0,
            max_speed_dps: 60.0,
            chain_position: pos,
        });
    }
    servos
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceObservation {
    pub yaw_offset_deg: f64,
    pub pitch_offset_deg: f64,
    pub t_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionConfig {
    pub bus_hop_latency_ms: u64,
    pub control_period_ms: u64,
    /// Proportional gain per control tick, calibrated so a 6 degree step
    /// settles in about one second.
    pub tracking_gain: f64,
    pub neck_yaw_limit_deg: f64,
    pub torso_yaw_limit_deg: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            bus_hop_latency_ms: 1,
            control_period_ms: 50,
            tracking_gain: 0.12,
            neck_yaw_limit_deg: 35.0,
            torso_yaw_limit_deg: 60.0,
        }
    }
}

/// Per-servo trajectory knots on the stretched gesture timeline.
#[derive(Debug, Clone)]
struct ActiveGesture {
    name: String,
    start_ms: u64,
    end_ms: u64,
    /// servo -> sorted (t offset ms, angle) knots
    knots: BTreeMap<ServoId, Vec<(u64, f64)>>,
}

impl ActiveGesture {
    fn sample(&self, servo: ServoId, t_offset: u64) -> Option<f64> {
        let knots = self.knots.get(&servo)?;
        if t_offset >= knots.last().unwrap().0 {
            return Some(knots.last().unwrap().1);
        }
        let idx = knots.partition_point(|(t, _)| *t <= t_offset);
        if idx == 0 {
            return Some(knots[0].1);
        }
        let (t0, a0) = knots[idx - 1];
        let (t1, a1) = knots[idx];
        let f = (t_offset - t0) as f64 / (t1 - t0) as f64;
        Some(a0 + (a1 - a0) * f)
    }

    fn servos(&self) -> Vec<ServoId> {
        self.knots.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Delivery {
    due_ms: u64,
    seq: u64,
    servo_idx: usize,
    setpoint: f64,
}

/// Commanded targets returned by `track_face`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingSetpoints {
    pub neck_yaw_deg: f64,
    pub neck_pitch_deg: f64,
    pub torso_yaw_deg: f64,
}

/// Summary of a scheduled gesture playback.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledMotion {
    pub name: String,
    pub start_ms: u64,
    /// End of the (possibly stretched) keyframe timeline.
    pub end_ms: u64,
    pub servos: Vec<ServoId>,
    /// Stretch factor applied so no servo exceeds its speed limit.
    pub stretch: f64,
}

pub struct MotionSim {
    pub config: MotionConfig,
    servos: Vec<ServoState>,
    setpoints: Vec<f64>,
    last_sent: Vec<f64>,
    t_ms: u64,
    next_control_ms: u64,
    pending: Vec<Delivery>,
    next_seq: u64,
    gesture: Option<ActiveGesture>,
    library: GestureLibrary,
    tracking_enabled: bool,
    /// Absolute gaze target from the last observation.
    face_target: Option<(f64, f64)>,
}

impl MotionSim {
    pub fn new(config: MotionConfig) -> Self {
        let servos = default_servos();
        let setpoints: Vec<f64> = servos.iter().map(|s| s.angle_deg).collect();
        let last_sent = setpoints.clone();
        Self {
            config,
            servos,
            setpoints,
            last_sent,
            t_ms: 0,
            next_control_ms: 0,
            pending: Vec::new(),
            next_seq: 0,
            gesture: None,
            library: GestureLibrary::shipped(),
            tracking_enabled: false,
            face_target: None,
        }
    }

    pub fn now_ms(&self) -> u64 {
        self.t_ms
    }

    pub fn servos(&self) -> &[ServoState] {
        &self.servos
    }

    pub fn servo(&self, id: ServoId) -> &ServoState {
        &self.servos[id as usize - 1]
    }

    pub fn gesture_names(&self) -> Vec<String> {
        self.library.names().iter().map(|s| s.to_string()).collect()
    }

    pub fn set_tracking(&mut self, enabled: bool) {
        self.tracking_enabled = enabled;
    }

    pub fn gesture_active(&self) -> bool {
        self.gesture.as_ref().map(|g| self.t_ms < g.end_ms).unwrap_or(false)
    }

    /// Current gaze yaw: neck plus torso contribution.
    pub fn gaze_yaw(&self) -> f64 {
        self.servo(NECK_YAW).angle_deg + self.servo(TORSO_YAW).angle_deg
    }

    pub fn gaze_pitch(&self) -> f64 {
        self.servo(NECK_PITCH).angle_deg
    }

    /// Angles are always inside limits; checked by tests at every step.
    pub fn validate(&self) -> Result<(), MotionError> {
        for s in &self.servos {
            if s.angle_deg < s.min_deg - 1e-9 || s.angle_deg > s.max_deg + 1e-9 {
                return Err(MotionError::BadStep(format!(
                    "servo {} at {} outside [{}, {}]",
                    s.id, s.angle_deg, s.min_deg, s.max_deg
                )));
            }
        }
        Ok(())
    }

    /// Schedule a named gesture. Segments whose required speed exceeds a
    /// servo's limit are stretched in time; the returned summary carries the
    /// overall stretch factor.
    pub fn play_gesture(&mut self, name: &str) -> Result<ScheduledMotion, MotionError> {
        let script = self.library.get(name).cloned().ok_or_else(|| {
            MotionError::UnknownGesture {
                requested: name.to_string(),
                available: self.library.names().iter().map(|s| s.to_string()).collect(),
            }
        })?;
        // per-servo knots on the original timeline, starting from the pose
        // the servo holds right now
        let servo_ids = script.servos();
        let mut knots: BTreeMap<ServoId, Vec<(u64, f64)>> = BTreeMap::new();
        for &id in &servo_ids {
            knots.insert(id, vec![(0, self.servo(id).angle_deg)]);
        }
        for k in &script.keyframes {
            for (&servo, &deg) in &k.targets {
                let clamped = self.servo(servo).clamp(deg);
                let list = knots.get_mut(&servo).expect("servo listed");
                if list.last().map(|(t, _)| *t == k.t_ms).unwrap_or(false) {
                    list.last_mut().unwrap().1 = clamped;
                } else {
                    list.push((k.t_ms, clamped));
                }
            }
        }
        // global segment boundaries: every keyframe time
        let mut times: Vec<u64> = vec![0];
        times.extend(script.keyframes.iter().map(|k| k.t_ms));
        times.dedup();
        // stretch each segment so no servo exceeds its speed limit
        let sample = |list: &Vec<(u64, f64)>, t: u64| -> f64 {
            let idx = list.partition_point(|(kt, _)| *kt <= t);
            if idx == 0 {
                return list[0].1;
            }
            if idx == list.len() {
                return list.last().unwrap().1;
            }
            let (t0, a0) = list[idx - 1];
            let (t1, a1) = list[idx];
            a0 + (a1 - a0) * ((t - t0) as f64 / (t1 - t0) as f64)
        };
        let mut stretched_times = vec![0u64];
        let mut total_stretch: f64 = 1.0;
        for w in times.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let dt = (t1 - t0) as f64;
            let mut factor: f64 = 1.0;
            for &id in &servo_ids {
                let list = &knots[&id];
                let delta = (sample(list, t1) - sample(list, t0)).abs();
                let required = delta / (dt / 1000.0);
                factor = factor.max(required / self.servo(id).max_speed_dps);
            }
            total_stretch = total_stretch.max(factor);
            let stretched = (dt * factor.max(1.0)).ceil() as u64;
            stretched_times.push(stretched_times.last().unwrap() + stretched.max(1));
        }
        // remap knots onto the stretched timeline
        let remap = |t: u64| -> u64 {
            let idx = times.iter().position(|&x| x == t).expect("knots sit on keyframe times");
            stretched_times[idx]
        };
        let mut stretched_knots: BTreeMap<ServoId, Vec<(u64, f64)>> = BTreeMap::new();
        for (&id, list) in &knots {
            stretched_knots.insert(id, list.iter().map(|&(t, a)| (remap(t), a)).collect());
        }
        let end_ms = self.t_ms + *stretched_times.last().unwrap();
        let gesture = ActiveGesture {
            name: script.name.clone(),
            start_ms: self.t_ms,
            end_ms,
            knots: stretched_knots,
        };
        let summary = ScheduledMotion {
            name: gesture.name.clone(),
            start_ms: gesture.start_ms,
            end_ms: gesture.end_ms,
            servos: servo_ids,
            stretch: total_stretch.max(1.0),
        };
        self.gesture = Some(gesture);
        Ok(summary)
    }

    /// Ingest a face observation: offsets are clamped to [-90, 90] with a
    /// warning. Returns the commanded targets: neck takes the yaw up to the
    /// configured limit, the torso yaw absorbs the exact remainder.
    pub fn track_face(&mut self, obs: FaceObservation) -> TrackingSetpoints {
        let mut yaw = obs.yaw_offset_deg;
        let mut pitch = obs.pitch_offset_deg;
        if !(-90.0..=90.0).contains(&yaw) {
            log::warn!("face yaw offset {yaw} out of range, clamping");
            yaw = yaw.clamp(-90.0, 90.0);
        }
        if !(-90.0..=90.0).contains(&pitch) {
            log::warn!("face pitch offset {pitch} out of range, clamping");
            pitch = pitch.clamp(-90.0, 90.0);
        }
        let target_yaw = self.gaze_yaw() + yaw;
        let target_pitch = self.gaze_pitch() + pitch;
        self.face_target = Some((target_yaw, target_pitch));

        let l = self.config.neck_yaw_limit_deg;
        let neck_yaw = target_yaw.clamp(-l, l);
        let torso_yaw = (target_yaw - neck_yaw)
            .clamp(-self.config.torso_yaw_limit_deg, self.config.torso_yaw_limit_deg);
        let p = self.servo(NECK_PITCH);
        let neck_pitch = target_pitch.clamp(p.min_deg, p.max_deg);
        TrackingSetpoints { neck_yaw_deg: neck_yaw, neck_pitch_deg: neck_pitch, torso_yaw_deg: torso_yaw }
    }

    fn send_setpoint(&mut self, servo_idx: usize, setpoint: f64) {
        let setpoint = self.servos[servo_idx].clamp(setpoint);
        if (setpoint - self.last_sent[servo_idx]).abs() < 1e-12 {
            return;
        }
        self.last_sent[servo_idx] = setpoint;
        let hops = (self.servos[servo_idx].chain_position - 1) as u64;
        self.pending.push(Delivery {
            due_ms: self.t_ms + hops * self.config.bus_hop_latency_ms,
            seq: self.next_seq,
            servo_idx,
            setpoint,
        });
        self.next_seq += 1;
    }

    /// Direct setpoint command (still travels the bus).
    pub fn command_setpoint(&mut self, servo: ServoId, setpoint: f64) {
        self.send_setpoint(servo as usize - 1, setpoint)
    }

    fn control_tick(&mut self) {
        // gesture playback: sample the stretched timeline
        let (samples, gesture_servos) = match &self.gesture {
            Some(g) => {
                let offset = self.t_ms.saturating_sub(g.start_ms).min(g.end_ms - g.start_ms);
                let samples: Vec<(ServoId, f64)> = g
                    .servos()
                    .iter()
                    .filter_map(|&id| g.sample(id, offset).map(|a| (id, a)))
                    .collect();
                let servos = if self.t_ms <= g.end_ms { g.servos() } else { Vec::new() };
                (samples, servos)
            }
            None => (Vec::new(), Vec::new()),
        };
        for (id, angle) in samples {
            self.send_setpoint(id as usize - 1, angle);
        }

        // tracking: proportional step toward the face target
        if self.tracking_enabled {
            if let Some((target_yaw, target_pitch)) = self.face_target {
                let g = self.config.tracking_gain;
                if !gesture_servos.contains(&NECK_YAW) && !gesture_servos.contains(&TORSO_YAW) {
                    let gaze = self.gaze_yaw();
                    let desired = gaze + g * (target_yaw - gaze);
                    let l = self.config.neck_yaw_limit_deg;
                    let neck = desired.clamp(-l, l);
                    let torso = (desired - neck)
                        .clamp(-self.config.torso_yaw_limit_deg, self.config.torso_yaw_limit_deg);
                    self.send_setpoint(NECK_YAW as usize - 1, neck);
                    self.send_setpoint(TORSO_YAW as usize - 1, torso);
                }
                if !gesture_servos.contains(&NECK_PITCH) {
                    let pitch = self.gaze_pitch();
                    let desired = pitch + g * (target_pitch - pitch);
                    self.send_setpoint(NECK_PITCH as usize - 1, desired);
                }
            }
        }
    }

    fn advance_servos(&mut self, dt_ms: u64) {
        if dt_ms == 0 {
            return;
        }
        let dt_s = dt_ms as f64 / 1000.0;
        for (i, s) in self.servos.iter_mut().enumerate() {
            let err = self.setpoints[i] - s.angle_deg;
            let max_step = s.max_speed_dps * dt_s;
            let step = err.clamp(-max_step, max_step);
            s.angle_deg = (s.angle_deg + step).clamp(s.min_deg, s.max_deg);
        }
    }

    fn next_delivery_due(&self) -> Option<u64> {
        self.pending.iter().map(|d| d.due_ms).min()
    }

    fn apply_due_deliveries(&mut self) {
        let now = self.t_ms;
        let mut due: Vec<Delivery> =
            self.pending.iter().filter(|d| d.due_ms <= now).cloned().collect();
        self.pending.retain(|d| d.due_ms > now);
        due.sort_by_key(|d| (d.due_ms, d.seq));
        for d in due {
            self.setpoints[d.servo_idx] = d.setpoint;
        }
    }

    /// Advance simulated time. Integration is event-exact: the trajectory is
    /// independent of how the caller slices `dt_ms`.
    pub fn step(&mut self, dt_ms: u64) -> Result<(), MotionError> {
        if dt_ms == 0 {
            return Err(MotionError::BadStep("dt must be positive".into()));
        }
        let end = self.t_ms + dt_ms;
        loop {
            // events exactly at now fire first
            self.apply_due_deliveries();
            if self.t_ms == self.next_control_ms {
                self.control_tick();
                self.next_control_ms += self.config.control_period_ms;
            }
            if self.t_ms >= end {
                break;
            }
            let mut next = end.min(self.next_control_ms);
            if let Some(d) = self.next_delivery_due() {
                next = next.min(d.max(self.t_ms + 1));
            }
            let dt = next - self.t_ms;
            self.advance_servos(dt);
            self.t_ms = next;
        }
        debug_assert!(self.validate().is_ok());
        Ok(())
    }

    /// Sampled joint trajectory: (t_ms, 13 angles) rows.
    pub fn run_trace(
        &mut self,
        total_ms: u64,
        sample_ms: u64,
    ) -> Result<Vec<(u64, Vec<f64>)>, MotionError> {
        let mut rows = Vec::new();
        rows.push((self.t_ms, self.servos.iter().map(|s| s.angle_deg).collect()));
        let mut remaining = total_ms;
        while remaining > 0 {
            let dt = sample_ms.min(remaining);
            self.step(dt)?;
            remaining -= dt;
            rows.push((self.t_ms, self.servos.iter().map(|s| s.angle_deg).collect()));
        }
        Ok(rows)
    }
}

/// Trajectory trace as CSV: `t_ms, s1, ..., s13`.
pub fn write_trace_csv<W: std::io::Write>(
    mut out: W,
    rows: &[(u64, Vec<f64>)],
) -> std::io::Result<()> {
    write!(out, "t_ms")?;
    for i in 1..=SERVO_COUNT {
        write!(out, ",s{i}")?;
    }
    writeln!(out)?;
    for (t, angles) in rows {
        write!(out, "{t}")?;
        for a in angles {
            write!(out, ",{a:.4}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim() -> MotionSim {
        MotionSim::new(MotionConfig::default())
    }

    #[test]
    fn default_bank_is_8_arm_2_head_3_torso() {
        let servos = default_servos();
        assert_eq!(servos.len(), 13);
        let count = |g: ServoGroup| servos.iter().filter(|s| s.group == g).count();
        assert_eq!(count(ServoGroup::Arm), 8);
        assert_eq!(count(ServoGroup::Head), 2);
        assert_eq!(count(ServoGroup::Torso), 3);
        for (i, s) in servos.iter().enumerate() {
            assert_eq!(s.id as usize, i + 1);
        }
    }

    #[test]
    fn unknown_gesture_error_names_all_ten() {
        let mut sim = sim();
        match sim.play_gesture("backflip") {
            Err(MotionError::UnknownGesture { requested, available }) => {
                assert_eq!(requested, "backflip");
                assert_eq!(available.len(), 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wave_reaches_final_keyframe_within_half_degree() {
        let mut sim = sim();
        let sched = sim.play_gesture("wave").unwrap();
        sim.step(sched.end_ms - sim.now_ms() + 500).unwrap();
        let lib = GestureLibrary::shipped();
        let script = lib.get("wave").unwrap();
        let last = script.keyframes.last().unwrap();
        for (&servo, &deg) in &last.targets {
            let actual = sim.servo(servo).angle_deg;
            assert!(
                (actual - deg).abs() <= 0.5,
                "servo {servo} at {actual}, wanted {deg}"
            );
        }
        sim.validate().unwrap();
    }

    #[test]
    fn every_gesture_respects_speed_limits() {
        for name in GestureLibrary::shipped().names() {
            let mut sim = sim();
            let sched = sim.play_gesture(name).unwrap();
            let total = sched.end_ms - sim.now_ms() + 400;
            let rows = sim.run_trace(total, 5).unwrap();
            // numerical differentiation of the simulated trajectory
            for w in rows.windows(2) {
                let (t0, a0) = &w[0];
                let (t1, a1) = &w[1];
                let dt_s = (*t1 - *t0) as f64 / 1000.0;
                for i in 0..13 {
                    let speed = (a1[i] - a0[i]).abs() / dt_s;
                    let limit = sim.servo(i as u8 + 1).max_speed_dps;
                    assert!(
                        speed <= limit + 1e-6,
                        "gesture {name} servo {} at {speed} deg/s exceeds {limit}",
                        i + 1
                    );
                }
            }
            sim.validate().unwrap();
        }
    }

    #[test]
    fn trajectory_is_independent_of_step_slicing() {
        let run = |slice: u64| -> Vec<f64> {
            let mut sim = sim();
            sim.play_gesture("wave").unwrap();
            let mut t = 0;
            while t < 3000 {
                sim.step(slice).unwrap();
                t += slice;
            }
            sim.servos().iter().map(|s| s.angle_deg).collect()
        };
        // sample a few interior instants too
        let run_at = |slice: u64, at: u64| -> Vec<f64> {
            let mut sim = sim();
            sim.play_gesture("wave").unwrap();
            let mut t = 0;
            while t < at {
                sim.step(slice.min(at - t)).unwrap();
                t += slice.min(at - t);
            }
            sim.servos().iter().map(|s| s.angle_deg).collect()
        };
        let a = run(10);
        let b = run(5);
        for i in 0..13 {
            assert!((a[i] - b[i]).abs() < 0.1, "servo {} differs: {} vs {}", i + 1, a[i], b[i]);
        }
        for at in [137, 613, 1489] {
            let a = run_at(10, at);
            let b = run_at(5, at);
            for i in 0..13 {
                assert!((a[i] - b[i]).abs() < 0.1, "at {at} servo {} differs", i + 1);
            }
        }
    }

    #[test]
    fn setpoint_equal_to_angle_causes_no_motion() {
        let mut sim = sim();
        sim.command_setpoint(3, 0.0);
        sim.step(500).unwrap();
        assert_eq!(sim.servo(3).angle_deg, 0.0);
    }

    #[test]
    fn rate_limit_arithmetic_is_exact() {
        // speed 60 deg/s, 30 degree error, 100 ms -> exactly 6 degrees
        let mut sim = sim();
        sim.command_setpoint(TORSO_YAW, 30.0); // torso yaw: 60 deg/s
        // allow bus delivery (10 hops), then measure exactly 100 ms of motion
        sim.step(10).unwrap();
        let before = sim.servo(TORSO_YAW).angle_deg;
        assert_eq!(before, 0.0);
        sim.step(100).unwrap();
        let after = sim.servo(TORSO_YAW).angle_deg;
        assert!((after - 6.0).abs() < 1e-9, "moved {after}");
    }

    #[test]
    fn chain_position_13_receives_broadcast_12ms_after_position_1() {
        let mut sim = sim();
        // broadcast: same setpoint to servo at position 1 and position 13
        sim.command_setpoint(1, 10.0);
        sim.command_setpoint(13, 10.0);
        let due: Vec<u64> = sim.pending.iter().map(|d| d.due_ms).collect();
        assert_eq!(due, vec![0, 12]);
    }

    #[test]
    fn zero_offset_at_center_commands_no_change() {
        let mut sim = sim();
        sim.set_tracking(true);
        let sp = sim.track_face(FaceObservation { yaw_offset_deg: 0.0, pitch_offset_deg: 0.0, t_ms: 0 });
        assert_eq!(sp.neck_yaw_deg, 0.0);
        assert_eq!(sp.torso_yaw_deg, 0.0);
        sim.step(2000).unwrap();
        assert_eq!(sim.servo(NECK_YAW).angle_deg, 0.0);
        assert_eq!(sim.servo(TORSO_YAW).angle_deg, 0.0);
    }

    #[test]
    fn yaw_beyond_neck_limit_splits_between_neck_and_torso() {
        let mut sim = sim();
        let sp = sim.track_face(FaceObservation { yaw_offset_deg: 50.0, pitch_offset_deg: 0.0, t_ms: 0 });
        // kinematic split oracle: neck = clamp(target, +-L), torso = rest
        assert_eq!(sp.neck_yaw_deg, 35.0);
        assert_eq!(sp.torso_yaw_deg, 15.0);
    }

    #[test]
    fn six_degree_step_settles_within_a_second() {
        let mut sim = sim();
        sim.set_tracking(true);
        sim.track_face(FaceObservation { yaw_offset_deg: 6.0, pitch_offset_deg: 0.0, t_ms: 0 });
        let mut settle = None;
        for _ in 0..3000 {
            sim.step(1).unwrap();
            let err = (6.0 - sim.gaze_yaw()).abs();
            if err < 0.5 {
                settle = Some(sim.now_ms());
                break;
            }
        }
        let settle = settle.expect("tracking settles");
        assert!(
            (800..=1200).contains(&settle),
            "settled at {settle} ms, wanted 1s +- 0.2s"
        );
    }

    #[test]
    fn fifty_degree_step_saturates_neck_exactly_and_torso_holds_rest() {
        let mut sim = sim();
        sim.set_tracking(true);
        sim.track_face(FaceObservation { yaw_offset_deg: 50.0, pitch_offset_deg: 0.0, t_ms: 0 });
        sim.step(10_000).unwrap();
        assert_eq!(sim.servo(NECK_YAW).angle_deg, 35.0, "neck rests exactly at the limit");
        assert!(
            (sim.servo(TORSO_YAW).angle_deg - 15.0).abs() < 1e-6,
            "torso holds the remainder, got {}",
            sim.servo(TORSO_YAW).angle_deg
        );
        sim.validate().unwrap();
    }

    #[test]
    fn out_of_range_offsets_are_clamped() {
        let mut sim = sim();
        let sp = sim.track_face(FaceObservation {
            yaw_offset_deg: 150.0,
            pitch_offset_deg: -150.0,
            t_ms: 0,
        });
        assert_eq!(sp.neck_yaw_deg, 35.0);
        assert_eq!(sp.torso_yaw_deg, 55.0); // 90 - 35
        assert_eq!(sp.neck_pitch_deg, -25.0);
    }

    #[test]
    fn zero_dt_step_is_rejected() {
        let mut sim = sim();
        assert!(matches!(sim.step(0), Err(MotionError::BadStep(_))));
    }

    #[test]
    fn csv_trace_has_header_and_13_columns() {
        let mut sim = sim();
        sim.play_gesture("nod").unwrap();
        let rows = sim.run_trace(600, 50).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t_ms,s1,s2,s3,s4,s5,s6,s7,s8,s9,s10,s11,s12,s13");
        assert_eq!(text.lines().count(), rows.len() + 1);
    }
}
