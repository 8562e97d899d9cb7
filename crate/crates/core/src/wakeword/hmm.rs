//! Keyword-plus-filler HMM spotting.
//!
//! The combined model has one ergodic filler state per phoneme and a
//! left-to-right chain with one state per keyword phoneme. A frame's
//! likelihood in a state is the posterior mass of that state's phoneme.
//! Detection segments are complete chain traversals on the joint Viterbi
//! path; each is scored by the chain-path log-likelihood minus the best
//! all-filler path log-likelihood over the same frames.

use serde::{Deserialize, Serialize};

use super::{debounce, Algorithm, Detection, WakewordError, DECISION_DELAY_FRAMES};
use crate::phonostream::{AcousticStream, PhoneId, PhonemeAlphabet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordHmm {
    /// One chain state per keyword phoneme.
    pub keyword: Vec<PhoneId>,
    /// Self-loop probability of interior chain states.
    pub self_loop: f64,
    /// Phoneme of each ergodic filler state; normally the whole alphabet.
    pub filler_phones: Vec<PhoneId>,
    /// Filler state self-loop probability.
    pub filler_self_loop: f64,
    /// Total probability of moving from a filler state into the chain.
    pub entry_prob: f64,
    /// Total probability of leaving the last chain state back to filler.
    pub exit_prob: f64,
}

/// Joint state identity: fillers first, then the keyword chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HmmState {
    Filler(usize),
    Chain(usize),
}

impl KeywordHmm {
    /// Default configuration over a full alphabet.
    pub fn standard(alphabet: &PhonemeAlphabet, keyword: &[PhoneId]) -> Self {
        Self {
            keyword: keyword.to_vec(),
            self_loop: 0.5,
            filler_phones: (0..alphabet.len()).collect(),
            filler_self_loop: 0.5,
            entry_prob: 0.02,
            exit_prob: 0.5,
        }
    }

    pub fn filler_count(&self) -> usize {
        self.filler_phones.len()
    }

    pub fn chain_len(&self) -> usize {
        self.keyword.len()
    }

    pub fn state_count(&self) -> usize {
        self.filler_count() + self.chain_len()
    }

    pub fn state(&self, s: usize) -> HmmState {
        if s < self.filler_count() {
            HmmState::Filler(s)
        } else {
            HmmState::Chain(s - self.filler_count())
        }
    }

    fn state_phone(&self, s: usize) -> PhoneId {
        match self.state(s) {
            HmmState::Filler(f) => self.filler_phones[f],
            HmmState::Chain(i) => self.keyword[i],
        }
    }

    /// Transition probability between joint states.
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        let f_count = self.filler_count();
        let k = self.chain_len();
        match (self.state(from), self.state(to)) {
            (HmmState::Filler(a), HmmState::Filler(b)) => {
                if f_count == 1 {
                    1.0 - self.entry_prob
                } else if a == b {
                    self.filler_self_loop
                } else {
                    (1.0 - self.filler_self_loop - self.entry_prob) / (f_count - 1) as f64
                }
            }
            (HmmState::Filler(_), HmmState::Chain(0)) => self.entry_prob,
            (HmmState::Filler(_), HmmState::Chain(_)) => 0.0,
            (HmmState::Chain(i), HmmState::Chain(j)) => {
                if i == k - 1 {
                    if i == j {
                        1.0 - self.exit_prob
                    } else {
                        0.0
                    }
                } else if j == i {
                    self.self_loop
                } else if j == i + 1 {
                    1.0 - self.self_loop
                } else {
                    0.0
                }
            }
            (HmmState::Chain(i), HmmState::Filler(_)) => {
                if i == k - 1 {
                    self.exit_prob / f_count as f64
                } else {
                    0.0
                }
            }
        }
    }

    /// Initial probability: filler states share `1 - entry_prob`, the chain
    /// start carries `entry_prob`.
    pub fn initial(&self, s: usize) -> f64 {
        match self.state(s) {
            HmmState::Filler(_) => (1.0 - self.entry_prob) / self.filler_count() as f64,
            HmmState::Chain(0) => self.entry_prob,
            HmmState::Chain(_) => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), WakewordError> {
        if self.keyword.is_empty() {
            return Err(WakewordError::MalformedModel("empty keyword chain".into()));
        }
        if self.filler_phones.is_empty() {
            return Err(WakewordError::MalformedModel("no filler states".into()));
        }
        for (name, p) in [
            ("self_loop", self.self_loop),
            ("filler_self_loop", self.filler_self_loop),
            ("entry_prob", self.entry_prob),
            ("exit_prob", self.exit_prob),
        ] {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(WakewordError::MalformedModel(format!("{name} = {p} outside [0,1]")));
            }
        }
        let n = self.state_count();
        for s in 0..n {
            let row: f64 = (0..n).map(|t| self.transition(s, t)).sum();
            if (row - 1.0).abs() > 1e-9 {
                return Err(WakewordError::MalformedModel(format!(
                    "outgoing probabilities of state {s} sum to {row}"
                )));
            }
            if (0..n).any(|t| self.transition(s, t) < 0.0) {
                return Err(WakewordError::MalformedModel(format!(
                    "negative transition from state {s}"
                )));
            }
        }
        let init: f64 = (0..n).map(|s| self.initial(s)).sum();
        if (init - 1.0).abs() > 1e-9 {
            return Err(WakewordError::MalformedModel(format!("initial sums to {init}")));
        }
        Ok(())
    }

    /// Joint Viterbi decode; returns the state path and its log score.
    /// Per-step ties break toward the lower state index.
    #[allow(clippy::needless_range_loop)] // the recursion indexes frames and psi together
    pub fn viterbi(&self, stream: &AcousticStream) -> Result<(Vec<usize>, f64), WakewordError> {
        if stream.frames.is_empty() {
            return Err(WakewordError::EmptyStream);
        }
        self.validate()?;
        let n = self.state_count();
        let t_len = stream.frames.len();
        let log_trans: Vec<Vec<f64>> = (0..n)
            .map(|a| (0..n).map(|b| self.transition(a, b).ln()).collect())
            .collect();
        let emis = |t: usize, s: usize| stream.frames[t].posterior[self.state_phone(s)].ln();

        let mut delta: Vec<f64> = (0..n).map(|s| self.initial(s).ln() + emis(0, s)).collect();
        let mut psi = vec![vec![0usize; n]; t_len];
        let mut next = vec![f64::NEG_INFINITY; n];
        for t in 1..t_len {
            for s in 0..n {
                let mut best_prev = 0;
                let mut best = delta[0] + log_trans[0][s];
                for prev in 1..n {
                    let cand = delta[prev] + log_trans[prev][s];
                    if cand > best {
                        best = cand;
                        best_prev = prev;
                    }
                }
                psi[t][s] = best_prev;
                next[s] = best + emis(t, s);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let mut last = 0;
        for s in 1..n {
            if delta[s] > delta[last] {
                last = s;
            }
        }
        let score = delta[last];
        let mut path = vec![0usize; t_len];
        path[t_len - 1] = last;
        for t in (0..t_len - 1).rev() {
            path[t] = psi[t + 1][path[t + 1]];
        }
        Ok((path, score))
    }

    /// Best chain-only path log-likelihood over `frames[t0..=t1]`, starting
    /// at chain state 0 and ending at the last chain state.
    fn chain_span_ll(&self, stream: &AcousticStream, t0: usize, t1: usize) -> f64 {
        let k = self.chain_len();
        let emis = |t: usize, i: usize| stream.frames[t].posterior[self.keyword[i]].ln();
        let stay = |i: usize| {
            if i == k - 1 {
                (1.0 - self.exit_prob).ln()
            } else {
                self.self_loop.ln()
            }
        };
        let advance = (1.0 - self.self_loop).ln();
        let mut dp = vec![f64::NEG_INFINITY; k];
        dp[0] = emis(t0, 0);
        for t in t0 + 1..=t1 {
            let mut next = vec![f64::NEG_INFINITY; k];
            for i in 0..k {
                let mut best = dp[i] + stay(i);
                if i > 0 {
                    let from_prev = dp[i - 1] + advance;
                    if from_prev > best {
                        best = from_prev;
                    }
                }
                next[i] = best + emis(t, i);
            }
            dp = next;
        }
        dp[k - 1]
    }

    /// Best all-filler path log-likelihood over `frames[t0..=t1]`, using the
    /// joint model's filler transition probabilities (entry mass excluded
    /// from no row; it is simply never taken).
    fn filler_span_ll(&self, stream: &AcousticStream, t0: usize, t1: usize) -> f64 {
        let f_count = self.filler_count();
        let emis = |t: usize, f: usize| stream.frames[t].posterior[self.filler_phones[f]].ln();
        let stay = if f_count == 1 {
            (1.0 - self.entry_prob).ln()
        } else {
            self.filler_self_loop.ln()
        };
        let switch = if f_count == 1 {
            f64::NEG_INFINITY
        } else {
            ((1.0 - self.filler_self_loop - self.entry_prob) / (f_count - 1) as f64).ln()
        };
        let mut dp: Vec<f64> = (0..f_count).map(|f| emis(t0, f)).collect();
        for t in t0 + 1..=t1 {
            let best_all = dp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut next = vec![f64::NEG_INFINITY; f_count];
            for f in 0..f_count {
                let via_stay = dp[f] + stay;
                let via_switch = best_all + switch; // off by self vs other; exact below
                let mut best = via_stay.max(via_switch);
                // the switch max must exclude f itself when f is the argmax
                if best_all == dp[f] && f_count > 1 {
                    let second = dp
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .map(|(_, v)| *v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    best = via_stay.max(second + switch);
                }
                next[f] = best + emis(t, f);
            }
            dp = next;
        }
        dp.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Segment score: chain-path likelihood minus filler-path likelihood
    /// over the same frame span.
    pub fn segment_ratio(&self, stream: &AcousticStream, t0: usize, t1: usize) -> f64 {
        self.chain_span_ll(stream, t0, t1) - self.filler_span_ll(stream, t0, t1)
    }
}

/// Spot keyword traversals on the joint Viterbi path and fire those whose
/// segment score reaches `ratio_threshold`.
pub fn spot_hmm(
    stream: &AcousticStream,
    hmm: &KeywordHmm,
    ratio_threshold: f64,
) -> Result<Vec<Detection>, WakewordError> {
    let (path, _score) = hmm.viterbi(stream)?;
    let period = stream.frame_period_ms as u64;
    let stream_end = stream.end_ms();
    let k = hmm.chain_len();

    let mut candidates = Vec::new();
    let mut t = 0usize;
    while t < path.len() {
        if let HmmState::Chain(_) = hmm.state(path[t]) {
            let t0 = t;
            while t + 1 < path.len() && matches!(hmm.state(path[t + 1]), HmmState::Chain(_)) {
                t += 1;
            }
            let t1 = t;
            // only complete traversals (ending at the last chain state) count
            if hmm.state(path[t1]) == HmmState::Chain(k - 1) {
                let ratio = hmm.segment_ratio(stream, t0, t1);
                if ratio >= ratio_threshold {
                    let span_end = stream.frames[t1].t_ms + period;
                    let t_detect = (span_end + DECISION_DELAY_FRAMES * period).min(stream_end);
                    candidates.push(Detection::new(t_detect, ratio, Algorithm::Hmm, stream));
                }
            }
        }
        t += 1;
    }
    Ok(debounce(candidates))
}

/// Streaming variant used by the wake-word node in the fabric: incremental
/// joint Viterbi with exact per-entry filler span tracking. Fires at the
/// first frame where a completed chain traversal's segment score reaches the
/// threshold; refires are debounced by the caller's frame clock.
#[derive(Debug, Clone)]
pub struct OnlineHmmSpotter {
    hmm: KeywordHmm,
    threshold: f64,
    /// Joint filler-path scores (one per filler state).
    filler: Vec<f64>,
    /// Chain state scores plus the context id of each token's entry.
    chain: Vec<(f64, usize)>,
    /// Per-entry-context filler span DP and the chain-part offset.
    contexts: Vec<SpanContext>,
    frames_seen: usize,
    last_fire_frame: Option<usize>,
    debounce_frames: usize,
}

#[derive(Debug, Clone)]
struct SpanContext {
    /// Filler-only scores over the span, conditioned on the shared prefix.
    span_filler: Vec<f64>,
    /// Joint score of the prefix plus the entry transition, excluded from
    /// the chain part when scoring.
    chain_offset: f64,
}

impl OnlineHmmSpotter {
    pub fn new(hmm: KeywordHmm, threshold: f64, frame_period_ms: u32) -> Self {
        let debounce_frames = (super::DEBOUNCE_MS / frame_period_ms as u64) as usize;
        Self {
            hmm,
            threshold,
            filler: Vec::new(),
            chain: Vec::new(),
            contexts: Vec::new(),
            frames_seen: 0,
            last_fire_frame: None,
            debounce_frames,
        }
    }

    /// Feed one posterior frame; returns the completed segment score when a
    /// detection fires at this frame.
    pub fn push_frame(&mut self, posterior: &[f64]) -> Option<f64> {
        let hmm = &self.hmm;
        let f_count = hmm.filler_count();
        let k = hmm.chain_len();
        let emis_f = |f: usize| posterior[hmm.filler_phones[f]].ln();
        let emis_c = |i: usize| posterior[hmm.keyword[i]].ln();

        if self.frames_seen == 0 {
            self.filler = (0..f_count)
                .map(|f| ((1.0 - hmm.entry_prob) / f_count as f64).ln() + emis_f(f))
                .collect();
            // an immediate entry context: the chain can start at frame 0
            let ctx = SpanContext {
                span_filler: (0..f_count).map(&emis_f).collect(),
                chain_offset: hmm.entry_prob.ln(),
            };
            self.contexts.push(ctx);
            self.chain = vec![(f64::NEG_INFINITY, 0); k];
            self.chain[0] = (hmm.entry_prob.ln() + emis_c(0), 0);
            self.frames_seen = 1;
            return self.check_fire();
        }

        let stay = if f_count == 1 {
            (1.0 - hmm.entry_prob).ln()
        } else {
            hmm.filler_self_loop.ln()
        };
        let switch = if f_count == 1 {
            f64::NEG_INFINITY
        } else {
            ((1.0 - hmm.filler_self_loop - hmm.entry_prob) / (f_count - 1) as f64).ln()
        };
        let exit_to_filler = (hmm.exit_prob / f_count as f64).ln();

        // filler update, allowing chain-exit back into filler
        let prev_filler = self.filler.clone();
        let best_prev = prev_filler.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let chain_exit = self.chain[k - 1].0 + exit_to_filler;
        for f in 0..f_count {
            let mut best = prev_filler[f] + stay;
            let switch_src = if prev_filler[f] == best_prev && f_count > 1 {
                prev_filler
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .map(|(_, v)| *v)
                    .fold(f64::NEG_INFINITY, f64::max)
            } else {
                best_prev
            };
            best = best.max(switch_src + switch).max(chain_exit);
            self.filler[f] = best + emis_f(f);
        }

        // span contexts advance with the same filler-only recursion
        for ctx in &mut self.contexts {
            let prev = ctx.span_filler.clone();
            let best_all = prev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for f in 0..f_count {
                let switch_src = if prev[f] == best_all && f_count > 1 {
                    prev.iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .map(|(_, v)| *v)
                        .fold(f64::NEG_INFINITY, f64::max)
                } else {
                    best_all
                };
                ctx.span_filler[f] = (prev[f] + stay).max(switch_src + switch) + emis_f(f);
            }
        }

        // fresh entry context for a chain start at this frame
        let entry_score = best_prev + hmm.entry_prob.ln();
        let new_ctx_id = self.contexts.len();
        self.contexts.push(SpanContext {
            span_filler: (0..f_count).map(&emis_f).collect(),
            chain_offset: entry_score,
        });

        // chain update
        let prev_chain = self.chain.clone();
        for i in (0..k).rev() {
            let stay_c = if i == k - 1 { (1.0 - hmm.exit_prob).ln() } else { hmm.self_loop.ln() };
            let mut best = (prev_chain[i].0 + stay_c, prev_chain[i].1);
            if i > 0 {
                let adv = prev_chain[i - 1].0 + (1.0 - hmm.self_loop).ln();
                if adv > best.0 {
                    best = (adv, prev_chain[i - 1].1);
                }
            } else {
                if entry_score > best.0 {
                    best = (entry_score, new_ctx_id);
                }
            }
            self.chain[i] = (best.0 + emis_c(i), best.1);
        }

        self.frames_seen += 1;
        self.prune_contexts();
        self.check_fire()
    }

    fn prune_contexts(&mut self) {
        // Contexts referenced by no chain token can be dropped; keep index
        // stability by tombstoning instead of compacting.
        let len = self.contexts.len();
        if len > 4096 {
            let live: std::collections::HashSet<usize> =
                self.chain.iter().map(|(_, c)| *c).collect();
            for (i, ctx) in self.contexts.iter_mut().enumerate() {
                if !live.contains(&i) && i + 1 < len {
                    ctx.span_filler.clear();
                }
            }
        }
    }

    fn check_fire(&mut self) -> Option<f64> {
        let k = self.hmm.chain_len();
        let (score, ctx_id) = self.chain[k - 1];
        if !score.is_finite() {
            return None;
        }
        let ctx = &self.contexts[ctx_id];
        if ctx.span_filler.is_empty() {
            return None;
        }
        let span_filler =
            ctx.span_filler.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let chain_part = score - ctx.chain_offset;
        let ratio = chain_part - span_filler;
        if ratio >= self.threshold {
            let frame = self.frames_seen - 1;
            let ok = match self.last_fire_frame {
                Some(last) => frame >= last + self.debounce_frames,
                None => true,
            };
            if ok {
                self.last_fire_frame = Some(frame);
                return Some(ratio);
            }
        }
        None
    }
}
