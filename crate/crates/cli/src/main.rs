//! Command-line front end: corpus generation, detector benchmarks,
//! calibration sweeps, scenario runs, the interactive console, and the
//! socket-served backend.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use duobot_core::backend::{wire, BackendService};
use duobot_core::catalog::Catalog;
use duobot_core::dialog::Grammar;
use duobot_core::fabric::{write_trace, Topology};
use duobot_core::harness::{
    calibrate, emit_report, run_console, run_scenario, CalibrationTargets, MessageCounts,
    ReportFormat, RunReport, RuntimeConfig, Scenario,
};
use duobot_core::lvcsr::Vocabulary;
use duobot_core::motion::{write_trace_csv, MotionConfig, MotionSim};
use duobot_core::phonostream::{
    generate_corpus_records, read_corpus, write_corpus, CorpusSpec, WordInventory,
};
use duobot_core::wakeword::{
    evaluate_detector, Detector, DetectorConfig, KeywordHmm, PhonemeBigram, TrigramLm,
};

#[derive(Parser)]
#[command(name = "duobot", about = "desk-scale humanoid robot runtime and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Corpus tools.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Keyword spotting benchmarks.
    #[command(subcommand)]
    Kws(KwsCmd),
    /// Sweep detector thresholds and contention parameters.
    Calibrate {
        /// Fraction of the full benchmark corpus to sweep on.
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        /// Wake interactions in the latency sweep scenario.
        #[arg(long, default_value_t = 8)]
        interactions: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the full sweep outcome as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario end to end and report.
    Run {
        /// Scenario file; omit for the built-in reference scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Topology file, or "dual" / "single".
        #[arg(long, default_value = "dual")]
        topology: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Report output path (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: String,
        /// Also write the full event trace as JSONL.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Fabric tools.
    #[command(subcommand)]
    Fabric(FabricCmd),
    /// Interactive text console against the live simulated robot.
    Console {
        #[arg(long, default_value = "dual")]
        topology: String,
    },
    /// Backend service tools.
    #[command(subcommand)]
    Backend(BackendCmd),
    /// Export the shipped model and data files.
    Models {
        #[arg(long, default_value = "models")]
        dir: PathBuf,
    },
    /// Gesture tools.
    #[command(subcommand)]
    Gesture(GestureCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Generate a labeled benchmark corpus.
    Gen {
        #[arg(long, default_value_t = 200)]
        positives: usize,
        #[arg(long, default_value_t = 1000)]
        negatives: usize,
        #[arg(long, default_value_t = 1000)]
        confusables: usize,
        #[arg(long, default_value_t = 0.35)]
        noise: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum KwsCmd {
    /// Evaluate one detector over a corpus file.
    Run {
        /// phonetic | hmm | lm
        #[arg(long)]
        algo: String,
        #[arg(long)]
        corpus: PathBuf,
        /// Operating point: edit distance budget (phonetic), log-ratio (hmm)
        /// or confidence (lm). Defaults to the calibrated value.
        #[arg(long)]
        threshold: Option<f64>,
        /// Report output path (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: String,
    },
}

#[derive(Subcommand)]
enum FabricCmd {
    /// Run a scenario and write the raw trace.
    Run {
        #[arg(long, default_value = "dual")]
        topology: String,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Subcommand)]
enum BackendCmd {
    /// Serve the backend over TCP with a durable log.
    Serve {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7077")]
        listen: String,
    },
    /// List the action catalog from a running server.
    Actions {
        #[arg(long, default_value = "127.0.0.1:7077")]
        connect: String,
    },
}

#[derive(Subcommand)]
enum GestureCmd {
    /// Names of the shipped gestures.
    List,
    /// Play a gesture in the motion simulator and write the trajectory CSV.
    Trace {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Sample period in milliseconds.
        #[arg(long, default_value_t = 20)]
        sample_ms: u64,
    },
}

fn load_topology(spec: &str) -> Result<Topology> {
    match spec {
        "dual" => Ok(Topology::dual_device()),
        "single" => Ok(Topology::single_device()),
        path => {
            let file = File::open(path).with_context(|| format!("opening topology {path}"))?;
            Ok(Topology::load(BufReader::new(file))?)
        }
    }
}

fn load_scenario(path: &Option<PathBuf>, seed: u64) -> Result<Scenario> {
    match path {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening scenario {p:?}"))?;
            Ok(Scenario::load(BufReader::new(file))?)
        }
        None => Ok(Scenario::reference(seed)),
    }
}

fn out_writer(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {p:?}"))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Corpus(CorpusCmd::Gen { positives, negatives, confusables, noise, seed, out }) => {
            let inventory = WordInventory::default_50();
            let spec = CorpusSpec { positives, negatives, confusables };
            let records = generate_corpus_records(&inventory, &spec, seed);
            let file = File::create(&out).with_context(|| format!("creating {out:?}"))?;
            write_corpus(BufWriter::new(file), &inventory.alphabet, noise, seed, &records)?;
            println!("wrote {} streams to {}", records.len(), out.display());
        }
        Cmd::Kws(KwsCmd::Run { algo, corpus, threshold, report, format }) => {
            let file = File::open(&corpus).with_context(|| format!("opening {corpus:?}"))?;
            let loaded = read_corpus(BufReader::new(file))?;
            let streams = loaded.streams()?;
            let defaults = RuntimeConfig::default();
            let config = match algo.as_str() {
                "phonetic" => DetectorConfig::Phonetic {
                    max_distance: threshold
                        .map(|t| t as usize)
                        .unwrap_or(defaults.phonetic_max_distance),
                },
                "hmm" => DetectorConfig::Hmm {
                    ratio_threshold: threshold.unwrap_or(defaults.hmm_ratio_threshold),
                },
                "lm" => DetectorConfig::Lm {
                    confidence_threshold: threshold.unwrap_or(defaults.lm_confidence_threshold),
                },
                other => bail!("unknown algorithm {other:?}; expected phonetic, hmm or lm"),
            };
            let inventory = WordInventory::default_50();
            let detector = Detector::from_inventory(&inventory, config);
            let metrics = evaluate_detector(&detector, &streams)?;
            let run_report = RunReport {
                scenario_seed: loaded.seed,
                topology: "benchmark".into(),
                interactions: 0,
                wake: None,
                missed_wakes: 0,
                dialog_transitions: BTreeMap::new(),
                eye_log: vec![],
                tracking: vec![],
                detector_metrics: vec![metrics],
                budgets: vec![],
                messages: MessageCounts { sent: 0, delivered: 0, routing_errors: 0 },
            };
            let fmt: ReportFormat = format.parse()?;
            emit_report(&run_report, fmt, out_writer(&report)?)?;
        }
        Cmd::Calibrate { fraction, interactions, seed, out } => {
            let targets = CalibrationTargets::default();
            let defaults = RuntimeConfig::default();
            let outcome = calibrate(&targets, fraction, interactions, seed, defaults.bench_noise)?;
            for e in &outcome.examined {
                println!(
                    "{}={}: fp {} fn {} latency {} [{}]",
                    e.what,
                    e.param,
                    e.fp.map(|x| format!("{:.3}%", x * 100.0)).unwrap_or_else(|| "-".into()),
                    e.fn_rate.map(|x| format!("{:.2}%", x * 100.0)).unwrap_or_else(|| "-".into()),
                    e.latency_mean_ms
                        .map(|x| format!("{x:.1}ms"))
                        .unwrap_or_else(|| "-".into()),
                    if e.ok { "ok" } else { "miss" }
                );
            }
            match (&outcome.detectors, &outcome.contention) {
                (Some(d), Some(c)) => println!(
                    "feasible: phonetic d={} hmm thr={} lm thr={} chunk={} (dual {:.1}ms, single {:.1}ms)",
                    d.phonetic_max_distance,
                    d.hmm_ratio_threshold,
                    d.lm_confidence_threshold,
                    c.wake_chunk_frames,
                    c.dual_mean_ms,
                    c.single_mean_ms
                ),
                _ => println!("infeasible for the given targets; see the sweep above"),
            }
            if let Some(path) = out {
                let file = File::create(&path)?;
                serde_json::to_writer_pretty(BufWriter::new(file), &outcome)?;
                println!("wrote sweep to {}", path.display());
            }
        }
        Cmd::Run { scenario, topology, seed, report, format, trace } => {
            let mut sc = load_scenario(&scenario, seed)?;
            if scenario.is_some() {
                sc.seed = seed;
            }
            let topo = load_topology(&topology)?;
            let outcome = run_scenario(&sc, &topo, &RuntimeConfig::default())?;
            if let Some(path) = trace {
                let file = File::create(&path)?;
                write_trace(BufWriter::new(file), &outcome.trace)?;
            }
            let fmt: ReportFormat = format.parse()?;
            emit_report(&outcome.report, fmt, out_writer(&report)?)?;
        }
        Cmd::Fabric(FabricCmd::Run { topology, scenario, seed, trace }) => {
            let mut sc = load_scenario(&scenario, seed)?;
            if scenario.is_some() {
                sc.seed = seed;
            }
            let topo = load_topology(&topology)?;
            let outcome = run_scenario(&sc, &topo, &RuntimeConfig::default())?;
            let file = File::create(&trace)?;
            write_trace(BufWriter::new(file), &outcome.trace)?;
            println!(
                "trace with {} events written to {}",
                outcome.trace.len(),
                trace.display()
            );
        }
        Cmd::Console { topology } => {
            let topo = load_topology(&topology)?;
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            run_console(stdin, stdout, &topo, &RuntimeConfig::default())?;
        }
        Cmd::Backend(BackendCmd::Serve { log, listen }) => {
            let service = BackendService::open(Catalog::generate_default(), &log)?;
            let listener =
                TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            println!("backend serving on {listen}, log at {}", log.display());
            wire::serve(listener, service)?;
        }
        Cmd::Backend(BackendCmd::Actions { connect }) => {
            let mut client = wire::Client::connect(&connect)?;
            match client.call(&wire::Request::ListActions)? {
                wire::Response::Actions(actions) => {
                    for a in actions {
                        println!("{:3}  {}", a.id, a.name);
                    }
                }
                other => bail!("unexpected response {other:?}"),
            }
        }
        Cmd::Models { dir } => {
            export_models(&dir)?;
            println!("wrote model and data files under {}", dir.display());
        }
        Cmd::Gesture(GestureCmd::List) => {
            let sim = MotionSim::new(MotionConfig::default());
            for name in sim.gesture_names() {
                println!("{name}");
            }
        }
        Cmd::Gesture(GestureCmd::Trace { name, out, sample_ms }) => {
            let mut sim = MotionSim::new(MotionConfig::default());
            let sched = sim
                .play_gesture(&name)
                .map_err(|e| anyhow::anyhow!(e.to_string()))?;
            let total = sched.end_ms - sim.now_ms() + 500;
            let rows = sim.run_trace(total, sample_ms).map_err(|e| anyhow::anyhow!(e.to_string()))?;
            let file = File::create(&out)?;
            write_trace_csv(BufWriter::new(file), &rows)?;
            println!(
                "traced {} ({} rows, stretch {:.2}) to {}",
                name,
                rows.len(),
                sched.stretch,
                out.display()
            );
        }
    }
    Ok(())
}

fn export_models(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let inventory = WordInventory::default_50();
    let catalog = Catalog::generate_default();

    fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
        let file = File::create(dir.join(name))?;
        serde_json::to_writer_pretty(BufWriter::new(file), value)?;
        Ok(())
    }
    let bigram = PhonemeBigram::uniform(inventory.alphabet.len());
    let keyword = inventory.keyword().phonemes.clone();
    let hmm = KeywordHmm::standard(&inventory.alphabet, &keyword);
    let lm = TrigramLm::from_inventory(&inventory);
    write_json(dir, "bigram.json", &bigram)?;
    write_json(dir, "hmm.json", &hmm)?;
    write_json(dir, "trigram_lm.json", &lm)?;
    write_json(dir, "catalog.json", &catalog)?;
    write_json(dir, "topology_dual.json", &Topology::dual_device())?;
    write_json(dir, "topology_single.json", &Topology::single_device())?;
    write_json(dir, "scenario_reference.json", &Scenario::reference(42))?;

    let vocabulary = Vocabulary::default_500(&catalog.grammar_words());
    vocabulary.save(File::create(dir.join("vocabulary.tsv"))?)?;
    let grammar = Grammar::default_for(&catalog);
    grammar.save(File::create(dir.join("grammar.txt"))?)?;
    std::fs::write(dir.join("eye_transitions.txt"), duobot_core::eyes::SHIPPED_TABLE)?;
    std::fs::write(dir.join("gestures.txt"), duobot_core::motion::SHIPPED_GESTURES)?;
    Ok(())
}
