//! End-to-end flows through the fabric: the age game, fault recovery, form
//! submission, and report/trace consistency.

use duobot_core::fabric::{
    measure_wake_latency, node, NodeSet, Payload, ScenarioWiring, SimFabric, Topology, TraceKind,
};
use duobot_core::harness::{
    emit_report, parse_report, run_scenario, BudgetCheck, ReportFormat, RuntimeConfig, Scenario,
    Stimulus, StimulusKind,
};
use duobot_core::phonostream::{generate_corpus, CorpusSpec, WordInventory};
use duobot_core::wakeword::{evaluate_detector, Detector, DetectorConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mini_scenario(seed: u64) -> Scenario {
    let inventory = WordInventory::default_50();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut timeline = Vec::new();
    // interaction 1: wake, then the age game
    let wake1 = duobot_core::harness::wake_utterance(&inventory, &mut rng);
    let wake1_end = 500 + wake1.frame_count() * 10;
    timeline.push(Stimulus { t_ms: 500, kind: StimulusKind::Utterance { script: wake1 } });
    timeline.push(duobot_core::harness::word_stimulus(
        wake1_end + 600,
        "guess my age",
        &inventory.alphabet,
        &mut rng,
    ));
    // a fault while idle
    timeline.push(Stimulus { t_ms: 7000, kind: StimulusKind::Fault { message: "injected".into() } });
    // interaction 2: wake, then a form flow
    let wake2 = duobot_core::harness::wake_utterance(&inventory, &mut rng);
    let wake2_end = 12_000 + wake2.frame_count() * 10;
    timeline.push(Stimulus { t_ms: 12_000, kind: StimulusKind::Utterance { script: wake2 } });
    let alphabet = &inventory.alphabet;
    timeline.push(duobot_core::harness::word_stimulus(
        wake2_end + 600,
        "start housing application",
        alphabet,
        &mut rng,
    ));
    timeline.push(duobot_core::harness::word_stimulus(wake2_end + 2100, "city dubai", alphabet, &mut rng));
    timeline.push(duobot_core::harness::word_stimulus(
        wake2_end + 3600,
        "address main street",
        alphabet,
        &mut rng,
    ));
    timeline.push(duobot_core::harness::word_stimulus(
        wake2_end + 5100,
        "email desk at example",
        alphabet,
        &mut rng,
    ));
    timeline.sort_by_key(|s| s.t_ms);
    Scenario { seed, noise: 0.1, wer: 0.0, duration_ms: 24_000, timeline }
}

fn notes(trace: &[duobot_core::fabric::TraceEvent], node_name: &str, kind: &str) -> Vec<String> {
    trace
        .iter()
        .filter_map(|e| match &e.kind {
            TraceKind::NodeNote { node: n, kind: k, detail }
                if n == node_name && k == kind =>
            {
                Some(detail.clone())
            }
            _ => None,
        })
        .collect()
}

#[test]
fn age_game_fault_and_form_flow_end_to_end() {
    let scenario = mini_scenario(5);
    let out = run_scenario(&scenario, &Topology::dual_device(), &RuntimeConfig::default()).unwrap();

    // the age game announced the stub's estimate
    let speaks = notes(&out.trace, node::DIALOG, "speak");
    assert!(
        speaks.iter().any(|s| s.contains("30")),
        "age estimate missing from speech: {speaks:?}"
    );

    // the injected fault turned the eyes red, recovery turned them blue again
    let eyes = notes(&out.trace, node::EYES, "eye");
    let red_at = eyes.iter().position(|l| l.contains("RED")).expect("fault turns eyes red");
    assert!(
        eyes[red_at + 1..].iter().any(|l| l.contains("BLUE")),
        "eyes never recovered from red: {eyes:?}"
    );

    // the completed form reached the backend and was acknowledged
    assert!(
        speaks.iter().any(|s| s.contains("logged with number")),
        "form submission never acknowledged: {speaks:?}"
    );

    // the selfie gesture was played for the photo
    let gestures = notes(&out.trace, node::MOTION, "gesture");
    assert!(gestures.iter().any(|g| g.starts_with("selfie_pose")), "gestures: {gestures:?}");
}

#[test]
fn budget_verdicts_are_recomputable_from_the_raw_trace() {
    let scenario = Scenario::reference(3);
    let out = run_scenario(&scenario, &Topology::dual_device(), &RuntimeConfig::default()).unwrap();
    let stats = measure_wake_latency(&out.trace).expect("reference trace has keyword marks");
    let recomputed = vec![
        BudgetCheck::at_most(
            "wake mean latency ms (response budget)",
            Some(stats.mean_ms),
            200.0,
        ),
        BudgetCheck::at_most(
            "wake p95 latency ms (response budget)",
            Some(stats.p95_ms),
            200.0,
        ),
    ];
    assert_eq!(out.report.budgets, recomputed);
}

#[test]
fn report_detector_section_matches_evaluate_detector_exactly() {
    let inventory = WordInventory::default_50();
    let spec = CorpusSpec { positives: 20, negatives: 50, confusables: 50 };
    let corpus = generate_corpus(&inventory, &spec, 0.35, 9).unwrap();
    let det = Detector::from_inventory(&inventory, DetectorConfig::Hmm { ratio_threshold: 18.0 });
    let metrics = evaluate_detector(&det, &corpus).unwrap();

    let scenario = Scenario { seed: 9, noise: 0.2, wer: 0.06, duration_ms: 100, timeline: vec![] };
    let mut out =
        run_scenario(&scenario, &Topology::dual_device(), &RuntimeConfig::default()).unwrap();
    out.report.detector_metrics = vec![metrics.clone()];

    let mut buf = Vec::new();
    emit_report(&out.report, ReportFormat::Json, &mut buf).unwrap();
    let parsed = parse_report(buf.as_slice()).unwrap();
    assert_eq!(parsed.detector_metrics, vec![metrics]);
    assert_eq!(parsed, out.report);
}

#[test]
fn dedicated_wake_device_strictly_reduces_mean_latency() {
    let scenario = Scenario::reference(11);
    let config = RuntimeConfig::default();
    let dual = run_scenario(&scenario, &Topology::dual_device(), &config).unwrap();
    let single = run_scenario(&scenario, &Topology::single_device(), &config).unwrap();
    let dual_mean = dual.report.wake.unwrap().mean_ms;
    let single_mean = single.report.wake.unwrap().mean_ms;
    assert!(
        dual_mean < single_mean,
        "placement claim violated: dual {dual_mean} vs single {single_mean}"
    );
}

#[test]
fn interrupt_discards_the_in_flight_backend_reply() {
    // Drive the dialog node directly: wake, command, then a second wake
    // before the backend answers. The dialog cancels its pending request;
    // the reply that still races back is rejected, never spoken.
    let inventory = WordInventory::default_50();
    let catalog = duobot_core::catalog::Catalog::generate_default();
    let keyword = inventory.keyword().phonemes.clone();
    let wiring = ScenarioWiring {
        catalog: catalog.clone(),
        hmm: duobot_core::wakeword::KeywordHmm::standard(&inventory.alphabet, &keyword),
        hmm_ratio_threshold: 18.0,
        wake_chunk_frames: 14,
        lvcsr: duobot_core::lvcsr::LvcsrStub::new(duobot_core::lvcsr::Vocabulary::default_500(
            &catalog.grammar_words(),
        )),
        wer: 0.0,
        age_answer: 30,
        age_fail: false,
        motion_config: duobot_core::motion::MotionConfig::default(),
    };
    let mut nodes = NodeSet::new(wiring);
    let mut fabric = SimFabric::new(Topology::dual_device(), 1).unwrap();

    let transcript = duobot_core::lvcsr::RecognitionResult {
        tokens: vec!["check".into(), "loan".into()],
        confidences: vec![0.9, 0.9],
        flags: vec![duobot_core::lvcsr::TokenFlag::Correct; 2],
        edits: vec![],
        reference_len: 2,
    };
    fabric.schedule_send(10.0, node::WAKE, node::DIALOG, "wake", Payload::WakeDetected {
        score: 20.0,
    });
    fabric.schedule_send(
        100.0,
        node::LVCSR,
        node::DIALOG,
        "transcript",
        Payload::Transcript(transcript),
    );
    // the backend takes ~40 ms to process plus links; interrupt at +15 ms
    fabric.schedule_send(115.0, node::WAKE, node::DIALOG, "wake", Payload::WakeDetected {
        score: 20.0,
    });
    fabric.run_until(10_000.0, &mut nodes);

    // the dialog declared the cancellation
    let cancels = fabric
        .trace()
        .iter()
        .filter(|e| {
            matches!(&e.kind, TraceKind::MessageSent { src, topic, .. }
                if src == node::DIALOG && topic == "backend-cancel")
        })
        .count();
    assert_eq!(cancels, 1, "interrupt must cancel the pending request");

    // the racing reply was rejected, not spoken
    let rejected = notes(fabric.trace(), node::DIALOG, "rejected");
    assert!(
        rejected.iter().any(|r| r.contains("BackendReply")),
        "stale reply should be rejected: {rejected:?}"
    );
    let speaks = notes(fabric.trace(), node::DIALOG, "speak");
    assert!(speaks.is_empty(), "a cancelled action must not be spoken: {speaks:?}");
    // and the interrupt left the robot listening (then idle after timeout)
    let phases = notes(fabric.trace(), node::DIALOG, "phase");
    assert!(
        phases.iter().any(|p| p == "Executing->Listening"),
        "interrupt transition missing: {phases:?}"
    );
}
