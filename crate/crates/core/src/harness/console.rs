//! Interactive text console: type utterances and face offsets at the live
//! simulated robot. Injection goes through the same event path as scripted
//! scenarios, so interactive and scripted runs share all semantics.

use std::io::{BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::catalog::Catalog;
use crate::fabric::{node, NodeSet, Payload, ScenarioWiring, SimFabric, Topology, TraceKind};
use crate::harness::scenario::word_phonemes;
use crate::harness::{HarnessError, RuntimeConfig};
use crate::lvcsr::{LvcsrStub, Vocabulary};
use crate::motion::{FaceObservation, MotionConfig};
use crate::phonostream::{
    synthesize_stream, ScriptWord, StreamLabel, UtteranceScript, WordInventory, KEYWORD_TOKEN,
};
use crate::wakeword::KeywordHmm;

const HELP: &str = "\
commands:
  wake                 say the wake word
  say <words...>       speak an utterance (include 'yarashid' to wake)
  face <yaw> [pitch]   show a face at the given offset in degrees
  fault [message]      inject a fault into the conversation loop
  step <ms>            advance simulated time
  status               dialog phase, eye state, gaze
  gestures             list available gestures
  quit                 leave the console";

pub fn run_console<R: BufRead, W: Write>(
    input: R,
    mut out: W,
    topology: &Topology,
    config: &RuntimeConfig,
) -> Result<(), HarnessError> {
    let inventory = WordInventory::default_50();
    let catalog = Catalog::generate_default();
    let vocabulary = Vocabulary::default_500(&catalog.grammar_words());
    let keyword = inventory.keyword().phonemes.clone();
    let wiring = ScenarioWiring {
        catalog,
        hmm: KeywordHmm::standard(&inventory.alphabet, &keyword),
        hmm_ratio_threshold: config.hmm_ratio_threshold,
        wake_chunk_frames: topology.contention.wake_chunk_frames,
        lvcsr: LvcsrStub::new(vocabulary),
        wer: config.wer,
        age_answer: config.age_answer,
        age_fail: false,
        motion_config: MotionConfig::default(),
    };
    let mut nodes = NodeSet::new(wiring);
    let mut fabric = SimFabric::new(topology.clone(), 0xC0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    let mut utterance_counter = 0u64;

    writeln!(out, "robot console; type 'help' for commands")?;
    advance(&mut fabric, &mut nodes, 100.0);

    for line in input.lines() {
        let line = line?;
        let mut parts = line.split_whitespace();
        let cmd = match parts.next() {
            Some(c) => c,
            None => continue,
        };
        let args: Vec<&str> = parts.collect();
        match cmd {
            "help" => writeln!(out, "{HELP}")?,
            "quit" | "exit" => break,
            "wake" => {
                let end = inject_tokens(
                    &mut fabric,
                    &inventory,
                    &[KEYWORD_TOKEN],
                    config.scenario_noise,
                    &mut utterance_counter,
                    &mut rng,
                )?;
                advance(&mut fabric, &mut nodes, end + 800.0);
                writeln!(out, "{}", status_line(&fabric, &nodes))?;
            }
            "say" => {
                if args.is_empty() {
                    writeln!(out, "say what?")?;
                    continue;
                }
                let end = inject_tokens(
                    &mut fabric,
                    &inventory,
                    &args,
                    config.scenario_noise,
                    &mut utterance_counter,
                    &mut rng,
                )?;
                advance(&mut fabric, &mut nodes, end + 800.0);
                writeln!(out, "{}", status_line(&fabric, &nodes))?;
            }
            "face" => {
                let yaw: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(0.0);
                let pitch: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.0);
                let t = fabric.now_ms() + 10.0;
                fabric.schedule_send(
                    t,
                    node::ENV,
                    node::VISION,
                    "face",
                    Payload::Face(FaceObservation {
                        yaw_offset_deg: yaw,
                        pitch_offset_deg: pitch,
                        t_ms: t as u64,
                    }),
                );
                writeln!(out, "face at {yaw} deg; 'step 1500' to watch it settle")?;
            }
            "fault" => {
                let message = if args.is_empty() { "injected".to_string() } else { args.join(" ") };
                let t = fabric.now_ms() + 10.0;
                fabric.schedule_send(t, node::ENV, node::DIALOG, "fault", Payload::Fault(message));
                advance(&mut fabric, &mut nodes, t + 200.0);
                writeln!(out, "{}", status_line(&fabric, &nodes))?;
            }
            "step" => {
                let ms: f64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(1000.0);
                let until = fabric.now_ms() + ms;
                advance(&mut fabric, &mut nodes, until);
                writeln!(out, "{}", status_line(&fabric, &nodes))?;
            }
            "status" => writeln!(out, "{}", status_line(&fabric, &nodes))?,
            "gestures" => writeln!(out, "{}", nodes.motion_sim().gesture_names().join(", "))?,
            other => writeln!(out, "unknown command {other:?}; type 'help'")?,
        }
        // surface what the robot said since the last command
        for e in fabric.trace().iter().rev() {
            if e.t_ms + 900.0 < fabric.now_ms() {
                break;
            }
            if let TraceKind::NodeNote { node: n, kind, detail } = &e.kind {
                if n == node::DIALOG && kind == "speak" {
                    writeln!(out, "robot: {detail}")?;
                }
            }
        }
    }
    Ok(())
}

fn advance(fabric: &mut SimFabric, nodes: &mut NodeSet, until_ms: f64) {
    fabric.run_until(until_ms, nodes);
}

fn status_line(fabric: &SimFabric, nodes: &NodeSet) -> String {
    format!(
        "t={:.0}ms phase={:?} eyes={} gaze={:.1}deg",
        fabric.now_ms(),
        nodes.dialog_state().phase,
        nodes.eye_state().log_line(fabric.now_ms() as u64),
        nodes.motion_sim().gaze_yaw(),
    )
}

/// Build and schedule an utterance from typed tokens; the keyword token gets
/// its real phonemes so the spotter can hear it.
fn inject_tokens(
    fabric: &mut SimFabric,
    inventory: &WordInventory,
    tokens: &[&str],
    noise: f64,
    counter: &mut u64,
    rng: &mut ChaCha8Rng,
) -> Result<f64, HarnessError> {
    use rand::Rng;
    let alphabet = &inventory.alphabet;
    let sil = alphabet.sil();
    let mut words = vec![ScriptWord::silence(3, sil)];
    let mut is_positive = false;
    for token in tokens {
        let phonemes = if *token == KEYWORD_TOKEN {
            is_positive = true;
            inventory.keyword().phonemes.clone()
        } else {
            word_phonemes(token, alphabet)
        };
        let durations = (0..phonemes.len()).map(|_| rng.gen_range(2..=4)).collect();
        words.push(ScriptWord::new(*token, phonemes, durations));
    }
    words.push(ScriptWord::silence(3, sil));
    let script = UtteranceScript {
        words,
        start_ms: 0,
        label: if is_positive { StreamLabel::Positive } else { StreamLabel::Negative },
    };
    *counter += 1;
    let stream_id = *counter;
    let stream_seed = 0xC0DE ^ stream_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let stream = synthesize_stream(alphabet, &script, noise, stream_seed)?;
    let t0 = fabric.now_ms() + 50.0;
    for frame in &stream.frames {
        let t = t0 + frame.t_ms as f64;
        for dst in [node::WAKE, node::LVCSR] {
            fabric.schedule_send(
                t,
                node::ENV,
                dst,
                "frame",
                Payload::AudioFrame { stream_id, posterior: frame.posterior.clone() },
            );
        }
    }
    let end = t0 + stream.end_ms() as f64;
    fabric.schedule_send(
        end,
        node::ENV,
        node::LVCSR,
        "utterance-end",
        Payload::UtteranceEnd {
            stream_id,
            script: script.clone(),
            utterance_seed: stream_seed ^ 0x55,
        },
    );
    if let Some(key_end) = stream.truth.keyword_end_ms {
        fabric.schedule_mark(t0 + key_end as f64, TraceKind::KeywordEnd { stream_id });
    }
    Ok(end)
}
