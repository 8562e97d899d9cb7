//! Eye display state machine: the robot's attention and status protocol.
//!
//! Colors signal the conversation state (blue idle, green listening, red
//! error); icons signal activity (clock while waiting, map while showing the
//! map, camera while taking a photo). Icons persist across color changes;
//! entering the error state does not clear a pending clock. Red is absorbing
//! except via `ErrorCleared`.
//!
//! The full transition table ships as a data file
//! (`data/eye_transitions.txt`) and is the single source of truth: the
//! implementation is a lookup into the parsed table, and tests compare the
//! table against the written-out rules.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SHIPPED_TABLE: &str = include_str!("../data/eye_transitions.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EyeColor {
    Blue,
    Green,
    Red,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EyeIcon {
    None,
    Clock,
    Map,
    Camera,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EyeState {
    pub color: EyeColor,
    pub icon: EyeIcon,
}

impl EyeState {
    pub fn initial() -> Self {
        Self { color: EyeColor::Blue, icon: EyeIcon::None }
    }

    /// State-change log line: `t_ms color icon`.
    pub fn log_line(&self, t_ms: u64) -> String {
        format!("{t_ms} {} {}", color_name(self.color), icon_name(self.icon))
    }

    pub fn all() -> Vec<EyeState> {
        let mut v = Vec::new();
        for color in [EyeColor::Blue, EyeColor::Green, EyeColor::Red] {
            for icon in [EyeIcon::None, EyeIcon::Clock, EyeIcon::Map, EyeIcon::Camera] {
                v.push(EyeState { color, icon });
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EyeEvent {
    WakeDetected,
    StopListening,
    Error,
    ErrorCleared,
    WaitBegin,
    WaitEnd,
    ShowMap,
    HideMap,
    PhotoBegin,
    PhotoEnd,
}

impl EyeEvent {
    pub fn all() -> [EyeEvent; 10] {
        [
            EyeEvent::WakeDetected,
            EyeEvent::StopListening,
            EyeEvent::Error,
            EyeEvent::ErrorCleared,
            EyeEvent::WaitBegin,
            EyeEvent::WaitEnd,
            EyeEvent::ShowMap,
            EyeEvent::HideMap,
            EyeEvent::PhotoBegin,
            EyeEvent::PhotoEnd,
        ]
    }
}

/// An illegal (state, event) pair, returned as a value with both operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("eye event {event:?} rejected in state {state:?}")]
pub struct EyeRejection {
    pub state: EyeState,
    pub event: EyeEvent,
}

#[derive(Debug, Error)]
pub enum EyeTableError {
    #[error("bad table line {0}: {1}")]
    BadLine(usize, String),
    #[error("table misses pair ({0:?}, {1:?})")]
    MissingPair(EyeState, EyeEvent),
}

#[derive(Debug, Clone)]
pub struct TransitionTable {
    map: HashMap<(EyeState, EyeEvent), Option<EyeState>>,
}

fn color_name(c: EyeColor) -> &'static str {
    match c {
        EyeColor::Blue => "BLUE",
        EyeColor::Green => "GREEN",
        EyeColor::Red => "RED",
    }
}

fn icon_name(i: EyeIcon) -> &'static str {
    match i {
        EyeIcon::None => "NONE",
        EyeIcon::Clock => "CLOCK",
        EyeIcon::Map => "MAP",
        EyeIcon::Camera => "CAMERA",
    }
}

fn parse_color(s: &str) -> Option<EyeColor> {
    match s {
        "BLUE" => Some(EyeColor::Blue),
        "GREEN" => Some(EyeColor::Green),
        "RED" => Some(EyeColor::Red),
        _ => None,
    }
}

fn parse_icon(s: &str) -> Option<EyeIcon> {
    match s {
        "NONE" => Some(EyeIcon::None),
        "CLOCK" => Some(EyeIcon::Clock),
        "MAP" => Some(EyeIcon::Map),
        "CAMERA" => Some(EyeIcon::Camera),
        _ => None,
    }
}

fn parse_event(s: &str) -> Option<EyeEvent> {
    match s {
        "WAKE_DETECTED" => Some(EyeEvent::WakeDetected),
        "STOP_LISTENING" => Some(EyeEvent::StopListening),
        "ERROR" => Some(EyeEvent::Error),
        "ERROR_CLEARED" => Some(EyeEvent::ErrorCleared),
        "WAIT_BEGIN" => Some(EyeEvent::WaitBegin),
        "WAIT_END" => Some(EyeEvent::WaitEnd),
        "SHOW_MAP" => Some(EyeEvent::ShowMap),
        "HIDE_MAP" => Some(EyeEvent::HideMap),
        "PHOTO_BEGIN" => Some(EyeEvent::PhotoBegin),
        "PHOTO_END" => Some(EyeEvent::PhotoEnd),
        _ => None,
    }
}

impl TransitionTable {
    pub fn parse(text: &str) -> Result<Self, EyeTableError> {
        let mut map = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| EyeTableError::BadLine(n + 1, msg.to_string());
            let (lhs, rhs) =
                line.split_once("->").ok_or_else(|| bad("missing '->'"))?;
            let mut l = lhs.split_whitespace();
            let color = l.next().and_then(parse_color).ok_or_else(|| bad("bad color"))?;
            let icon = l.next().and_then(parse_icon).ok_or_else(|| bad("bad icon"))?;
            let event = l.next().and_then(parse_event).ok_or_else(|| bad("bad event"))?;
            let rhs = rhs.trim();
            let next = if rhs == "REJECT" {
                None
            } else {
                let mut r = rhs.split_whitespace();
                let c = r.next().and_then(parse_color).ok_or_else(|| bad("bad next color"))?;
                let i = r.next().and_then(parse_icon).ok_or_else(|| bad("bad next icon"))?;
                Some(EyeState { color: c, icon: i })
            };
            map.insert((EyeState { color, icon }, event), next);
        }
        // totality over the legal table
        for s in EyeState::all() {
            for e in EyeEvent::all() {
                if !map.contains_key(&(s, e)) {
                    return Err(EyeTableError::MissingPair(s, e));
                }
            }
        }
        Ok(Self { map })
    }

    pub fn shipped() -> &'static TransitionTable {
        static TABLE: OnceLock<TransitionTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            TransitionTable::parse(SHIPPED_TABLE).expect("shipped table is well-formed")
        })
    }

    pub fn lookup(&self, state: EyeState, event: EyeEvent) -> Result<EyeState, EyeRejection> {
        match self.map.get(&(state, event)) {
            Some(Some(next)) => Ok(*next),
            _ => Err(EyeRejection { state, event }),
        }
    }
}

/// Apply one event per the shipped table. Rejection is a value, never a
/// panic.
pub fn apply_event(state: EyeState, event: EyeEvent) -> Result<EyeState, EyeRejection> {
    TransitionTable::shipped().lookup(state, event)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The written-out rules, used only to cross-check the shipped file.
    fn rules(state: EyeState, event: EyeEvent) -> Option<EyeState> {
        use EyeColor::*;
        use EyeEvent::*;
        use EyeIcon::*;
        let EyeState { color, icon } = state;
        match event {
            WakeDetected => {
                matches!(color, Blue | Green).then_some(EyeState { color: Green, icon })
            }
            StopListening => (color == Green).then_some(EyeState { color: Blue, icon }),
            Error => Some(EyeState { color: Red, icon }),
            ErrorCleared => (color == Red).then_some(EyeState { color: Blue, icon }),
            WaitBegin => (icon == None).then_some(EyeState { color, icon: Clock }),
            WaitEnd => (icon == Clock).then_some(EyeState { color, icon: None }),
            ShowMap => (icon == None).then_some(EyeState { color, icon: Map }),
            HideMap => (icon == Map).then_some(EyeState { color, icon: None }),
            PhotoBegin => (icon == None).then_some(EyeState { color, icon: Camera }),
            PhotoEnd => (icon == Camera).then_some(EyeState { color, icon: None }),
        }
    }

    #[test]
    fn shipped_table_parses_and_is_total() {
        let t = TransitionTable::shipped();
        for s in EyeState::all() {
            for e in EyeEvent::all() {
                // every pair resolves to a state or an explicit rejection
                let _ = t.lookup(s, e);
            }
        }
    }

    #[test]
    fn shipped_table_matches_written_rules_exhaustively() {
        for s in EyeState::all() {
            for e in EyeEvent::all() {
                let expected = rules(s, e);
                let got = apply_event(s, e).ok();
                assert_eq!(got, expected, "state {s:?} event {e:?}");
            }
        }
    }

    #[test]
    fn anchored_transitions_hold() {
        let blue = EyeState { color: EyeColor::Blue, icon: EyeIcon::None };
        let after = apply_event(blue, EyeEvent::WakeDetected).unwrap();
        assert_eq!(after, EyeState { color: EyeColor::Green, icon: EyeIcon::None });

        let green = EyeState { color: EyeColor::Green, icon: EyeIcon::None };
        let after = apply_event(green, EyeEvent::StopListening).unwrap();
        assert_eq!(after, EyeState { color: EyeColor::Blue, icon: EyeIcon::None });

        // error keeps the pending clock icon
        let busy = EyeState { color: EyeColor::Green, icon: EyeIcon::Clock };
        let after = apply_event(busy, EyeEvent::Error).unwrap();
        assert_eq!(after, EyeState { color: EyeColor::Red, icon: EyeIcon::Clock });
    }

    #[test]
    fn red_is_absorbing_except_error_cleared() {
        for icon in [EyeIcon::None, EyeIcon::Clock, EyeIcon::Map, EyeIcon::Camera] {
            let red = EyeState { color: EyeColor::Red, icon };
            for e in EyeEvent::all() {
                match apply_event(red, e) {
                    Ok(next) => {
                        if e == EyeEvent::ErrorCleared {
                            assert_eq!(next.color, EyeColor::Blue);
                        } else {
                            assert_eq!(next.color, EyeColor::Red, "event {e:?} left red");
                        }
                    }
                    Err(r) => {
                        assert_eq!(r.state, red);
                        assert_eq!(r.event, e);
                    }
                }
            }
        }
    }

    #[test]
    fn wake_while_red_is_rejected_with_both_operands() {
        let red = EyeState { color: EyeColor::Red, icon: EyeIcon::None };
        let r = apply_event(red, EyeEvent::WakeDetected).unwrap_err();
        assert_eq!(r.state, red);
        assert_eq!(r.event, EyeEvent::WakeDetected);
    }

    #[test]
    fn log_line_format() {
        let s = EyeState { color: EyeColor::Green, icon: EyeIcon::Camera };
        assert_eq!(s.log_line(1520), "1520 GREEN CAMERA");
    }
}
