//! Gesture scripts: named keyframe sequences over the servo chain.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

use crate::motion::{MotionError, ServoId, SERVO_COUNT};

pub const SHIPPED_GESTURES: &str = include_str!("../../data/gestures.txt");

/// One keyframe: absolute time and per-servo targets in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub t_ms: u64,
    pub targets: BTreeMap<ServoId, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureScript {
    pub name: String,
    pub keyframes: Vec<Keyframe>,
}

impl GestureScript {
    pub fn validate(&self) -> Result<(), MotionError> {
        if self.keyframes.is_empty() {
            return Err(MotionError::BadScript(format!("gesture {:?} has no keyframes", self.name)));
        }
        let mut prev: Option<u64> = None;
        for k in &self.keyframes {
            if let Some(p) = prev {
                if k.t_ms <= p {
                    return Err(MotionError::BadScript(format!(
                        "gesture {:?}: keyframe times not strictly increasing at {}",
                        self.name, k.t_ms
                    )));
                }
            }
            prev = Some(k.t_ms);
            for &servo in k.targets.keys() {
                if !(1..=SERVO_COUNT).contains(&servo) {
                    return Err(MotionError::BadScript(format!(
                        "gesture {:?}: servo id {servo} out of range",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn duration_ms(&self) -> u64 {
        self.keyframes.last().map(|k| k.t_ms).unwrap_or(0)
    }

    /// Servos this gesture scripts at any point.
    pub fn servos(&self) -> Vec<ServoId> {
        let mut out: Vec<ServoId> = Vec::new();
        for k in &self.keyframes {
            for &s in k.targets.keys() {
                if !out.contains(&s) {
                    out.push(s);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone)]
pub struct GestureLibrary {
    pub scripts: Vec<GestureScript>,
}

impl GestureLibrary {
    /// The ten shipped gestures.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_GESTURES.as_bytes()).expect("shipped gesture file is well-formed")
    }

    pub fn parse<R: Read>(input: R) -> Result<Self, MotionError> {
        let mut scripts: Vec<GestureScript> = Vec::new();
        let mut current: Option<GestureScript> = None;
        for (n, line) in BufReader::new(input).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| MotionError::BadScript(format!("line {}: {msg}", n + 1));
            if let Some(name) = line.strip_prefix("gesture ") {
                if let Some(done) = current.take() {
                    done.validate()?;
                    scripts.push(done);
                }
                current = Some(GestureScript { name: name.trim().to_string(), keyframes: vec![] });
                continue;
            }
            let script = current
                .as_mut()
                .ok_or_else(|| bad("keyframe before any gesture header".into()))?;
            let mut parts = line.split_whitespace();
            let t_ms: u64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("missing keyframe time".into()))?;
            let mut targets = BTreeMap::new();
            for part in parts {
                let (servo, deg) = part
                    .split_once(':')
                    .ok_or_else(|| bad(format!("bad target {part:?}")))?;
                let servo: ServoId =
                    servo.parse().map_err(|_| bad(format!("bad servo id {servo:?}")))?;
                let deg: f64 = deg.parse().map_err(|_| bad(format!("bad angle {deg:?}")))?;
                targets.insert(servo, deg);
            }
            if targets.is_empty() {
                return Err(bad("keyframe without targets".into()));
            }
            script.keyframes.push(Keyframe { t_ms, targets });
        }
        if let Some(done) = current.take() {
            done.validate()?;
            scripts.push(done);
        }
        Ok(Self { scripts })
    }

    pub fn get(&self, name: &str) -> Option<&GestureScript> {
        self.scripts.iter().find(|s| s.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.scripts.iter().map(|s| s.name.as_str()).collect()
    }
}
