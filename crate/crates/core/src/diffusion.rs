//! Preference-aware bidirectional diffusion.
//!
//! Relevance spreads from the anchor vertices along deductive incidence in
//! alternating phases: higher-order vertices broadcast down to their member
//! entities, then entities push up into the pairs and associations that
//! contain them, gated by a threshold on how many members already outscore
//! the candidate. A run-level bias loosens the threshold whenever a phase
//! activates nothing and tightens it again after a successful upward phase.
//!
//! The bias and thresholds are held in integer hundredths so that threshold
//! comparisons are exact.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, Layer};
use crate::scores::ScoreMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionParams {
    /// Decay factor applied to every gain.
    pub gamma: f64,
    /// Base threshold for pairs.
    pub tau_pair: f64,
    /// Base threshold for multi-entity associations.
    pub tau_association: f64,
    pub bias_cap: f64,
    pub forward_stall_step: f64,
    pub backward_relief_step: f64,
    pub backward_stall_step: f64,
    /// Extra loosening for candidates on the query's target layer.
    pub target_layer_bonus: f64,
    /// Phase pairs allowed per unit of depth, counting backtracked ones.
    pub max_total_iterations_factor: u32,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        DiffusionParams {
            gamma: 0.2,
            tau_pair: 0.5,
            tau_association: 0.4,
            bias_cap: 0.5,
            forward_stall_step: 0.10,
            backward_relief_step: 0.10,
            backward_stall_step: 0.15,
            target_layer_bonus: 0.05,
            max_total_iterations_factor: 3,
        }
    }
}

fn hundredths(name: &str, x: f64) -> Result<i64> {
    let scaled = x * 100.0;
    let rounded = scaled.round();
    if !(0.0..=1.0).contains(&x) || (scaled - rounded).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "diffusion.{name} must be a multiple of 0.01 in [0, 1], got {x}"
        )));
    }
    Ok(rounded as i64)
}

/// Threshold-related parameters in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Steps {
    tau_pair: i64,
    tau_association: i64,
    cap: i64,
    forward_stall: i64,
    backward_relief: i64,
    backward_stall: i64,
    bonus: i64,
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        self.steps().map(|_| ())?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("diffusion.gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.max_total_iterations_factor == 0 {
            return Err(Error::Config("diffusion.max_total_iterations_factor must be positive".into()));
        }
        Ok(())
    }

    fn steps(&self) -> Result<Steps> {
        Ok(Steps {
            tau_pair: hundredths("tau_pair", self.tau_pair)?,
            tau_association: hundredths("tau_association", self.tau_association)?,
            cap: hundredths("bias_cap", self.bias_cap)?,
            forward_stall: hundredths("forward_stall_step", self.forward_stall_step)?,
            backward_relief: hundredths("backward_relief_step", self.backward_relief_step)?,
            backward_stall: hundredths("backward_stall_step", self.backward_stall_step)?,
            bonus: hundredths("target_layer_bonus", self.target_layer_bonus)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Forward,
    Backward,
}

/// Mutable block of one diffusion run.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub scores: ScoreMap,
    pub activated: BTreeSet<String>,
    /// Activated keys per layer, indexed by `layer.code() - 1`.
    pub buckets: [BTreeSet<String>; 3],
    bias: i64,
    /// Committed iterations so far.
    pub iteration: usize,
    steps: Steps,
    pub params: DiffusionParams,
}

impl DiffusionState {
    pub fn new(anchors: &ScoreMap, graph: &Hypergraph, params: DiffusionParams) -> Result<DiffusionState> {
        let steps = params.steps()?;
        let mut buckets: [BTreeSet<String>; 3] = Default::default();
        for key in anchors.keys() {
            let layer = graph.vertex_layer(key)?;
            buckets[layer.code() as usize - 1].insert(key.clone());
        }
        Ok(DiffusionState {
            scores: anchors.clone(),
            activated: anchors.keys().cloned().collect(),
            buckets,
            bias: 0,
            iteration: 0,
            steps,
            params,
        })
    }

    pub fn bias(&self) -> f64 {
        self.bias as f64 / 100.0
    }

    pub fn bias_hundredths(&self) -> i64 {
        self.bias
    }

    /// Overrides the bias; values outside `[0, cap]` are clamped.
    pub fn set_bias(&mut self, bias: f64) {
        self.bias = ((bias * 100.0).round() as i64).clamp(0, self.steps.cap);
    }

    pub fn at_bias_cap(&self) -> bool {
        self.bias == self.steps.cap
    }

    fn activate(&mut self, keys: &BTreeSet<String>, graph: &Hypergraph) -> Result<()> {
        for key in keys {
            let layer = graph.vertex_layer(key)?;
            self.buckets[layer.code() as usize - 1].insert(key.clone());
            self.activated.insert(key.clone());
        }
        Ok(())
    }
}

/// Entities count the pairs and associations containing them; higher-order
/// vertices count their members. Only neighbours scoring strictly above `u`
/// are counted.
pub fn higher_count(graph: &Hypergraph, u: &str, scores: &ScoreMap) -> Result<usize> {
    let own = scores.get(u);
    let count = match graph.vertex_layer(u)? {
        Layer::Entity => graph.backward_neighbors(u)?.filter(|n| scores.get(n) > own).count(),
        _ => graph.forward_neighbors(u)?.iter().filter(|n| scores.get(n) > own).count(),
    };
    Ok(count)
}

/// `n / (n + 1)`.
pub fn preference(n: usize) -> f64 {
    n as f64 / (n as f64 + 1.0)
}

fn support(graph: &Hypergraph, c: &str, scores: &ScoreMap) -> Result<(usize, usize)> {
    if graph.vertex_layer(c)? == Layer::Entity {
        return Err(Error::InvalidArgument(format!("{c} is an entity, not a pair or association")));
    }
    let members = graph.forward_neighbors(c)?;
    let own = scores.get(c);
    let above = members.iter().filter(|m| scores.get(m) > own).count();
    Ok((above, members.len()))
}

/// Share of `c`'s members scoring strictly above `c`.
pub fn activation_proportion(graph: &Hypergraph, c: &str, scores: &ScoreMap) -> Result<f64> {
    let (above, total) = support(graph, c, scores)?;
    Ok(above as f64 / total as f64)
}

/// Score increment carried from `c` down to member `v` (forward) or from
/// entity `v` up to `c` (backward).
pub fn preference_gain(
    graph: &Hypergraph,
    c: &str,
    v: &str,
    scores: &ScoreMap,
    gamma: f64,
    phase: Phase,
) -> Result<f64> {
    let (sc, sv) = (scores.get(c), scores.get(v));
    match phase {
        Phase::Forward => {
            if sc <= sv {
                return Err(Error::InvalidArgument(format!("forward gain needs S[{c}] > S[{v}]")));
            }
            let rho = preference(higher_count(graph, v, scores)?);
            Ok((sc - sv) * rho * gamma)
        }
        Phase::Backward => {
            if sv <= sc {
                return Err(Error::InvalidArgument(format!("backward gain needs S[{v}] > S[{c}]")));
            }
            let (above, total) = support(graph, c, scores)?;
            let rho = preference(above);
            let p = above as f64 / total as f64;
            Ok((sv - sc) * (rho * 0.5 + p * p * 0.5) * gamma)
        }
    }
}

/// Whether `c` clears its loosened threshold. The target-layer bonus only
/// applies to this one evaluation.
pub fn threshold_pass(graph: &Hypergraph, c: &str, state: &DiffusionState, target_layer: Layer) -> Result<bool> {
    let layer = graph.vertex_layer(c)?;
    let (above, total) = support(graph, c, &state.scores)?;
    let steps = state.steps;
    let base = match layer {
        Layer::PairRelation => steps.tau_pair,
        _ => steps.tau_association,
    };
    let bonus = if layer == target_layer { steps.bonus } else { 0 };
    let tau = base - state.bias - bonus;
    // above/total > tau/100
    Ok(100 * above as i64 > tau * total as i64)
}

/// Folds a phase's newly activated keys into the state and moves the bias.
/// Returns true when a backward stall backtracks the iteration.
pub fn adjust_after_phase(
    new_forward: &BTreeSet<String>,
    new_backward: &BTreeSet<String>,
    state: &mut DiffusionState,
    phase: Phase,
    graph: &Hypergraph,
) -> Result<bool> {
    let steps = state.steps;
    match phase {
        Phase::Forward => {
            if new_forward.is_empty() {
                state.bias = (state.bias + steps.forward_stall).min(steps.cap);
            } else {
                state.activate(new_forward, graph)?;
            }
            Ok(false)
        }
        Phase::Backward => {
            if new_backward.is_empty() {
                state.bias = (state.bias + steps.backward_stall).min(steps.cap);
                Ok(true)
            } else {
                state.activate(new_backward, graph)?;
                state.bias = (state.bias - steps.backward_relief).max(0);
                Ok(false)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// The iteration being attempted, starting at 1.
    pub iteration: usize,
    /// Phase pairs run so far, including this one.
    pub step: usize,
    pub phase: Phase,
    /// Bias after this phase's adjustment.
    pub bias: f64,
    pub newly_activated: Vec<String>,
    /// Total gain per key in this phase.
    pub gains: BTreeMap<String, f64>,
    pub backtracked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitReason {
    /// Nothing new in either phase with the bias already at its cap.
    BiasCap,
    /// `d` iterations committed.
    Depth,
    /// The phase-pair budget ran out.
    SafetyCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diffusion {
    pub scores: ScoreMap,
    pub activated: BTreeSet<String>,
    pub trace: Vec<TraceRecord>,
    pub exit: ExitReason,
    pub committed_iterations: usize,
    pub phase_pairs: usize,
}

impl Diffusion {
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.trace {
            out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
            out.push('\n');
        }
        out.push_str(&serde_json::json!({ "exit": self.exit }).to_string());
        out.push('\n');
        out
    }
}

pub fn diffuse(
    anchors: &ScoreMap,
    target_layer: Layer,
    depth: usize,
    graph: &Hypergraph,
    params: DiffusionParams,
) -> Result<Diffusion> {
    if anchors.is_empty() {
        return Err(Error::InvalidArgument("diffusion needs at least one anchor".into()));
    }
    if !(1..=5).contains(&depth) {
        return Err(Error::InvalidArgument(format!("depth {depth} outside 1..=5")));
    }
    params.validate()?;
    let mut state = DiffusionState::new(anchors, graph, params)?;
    let budget = depth * params.max_total_iterations_factor as usize;
    let mut trace = Vec::new();
    let mut pairs = 0;

    let exit = loop {
        if state.iteration >= depth {
            break ExitReason::Depth;
        }
        if pairs >= budget {
            break ExitReason::SafetyCap;
        }
        pairs += 1;
        let attempt = state.iteration + 1;
        let before = state.scores.clone();
        let mut staged = before.clone();

        let mut new_forward = BTreeSet::new();
        let mut gains = BTreeMap::new();
        let high: BTreeSet<&String> = state.buckets[1].iter().chain(&state.buckets[2]).collect();
        for c in high {
            for v in graph.forward_neighbors(c)? {
                if before.get(c) > before.get(v) && higher_count(graph, v, &before)? > 0 {
                    let g = preference_gain(graph, c, v, &before, params.gamma, Phase::Forward)?;
                    staged.add(v.clone(), g);
                    *gains.entry(v.clone()).or_insert(0.0) += g;
                    if !state.activated.contains(v) {
                        new_forward.insert(v.clone());
                    }
                }
            }
        }
        adjust_after_phase(&new_forward, &BTreeSet::new(), &mut state, Phase::Forward, graph)?;
        trace.push(TraceRecord {
            iteration: attempt,
            step: pairs,
            phase: Phase::Forward,
            bias: state.bias(),
            newly_activated: new_forward.iter().cloned().collect(),
            gains,
            backtracked: false,
        });

        let mut new_backward = BTreeSet::new();
        let mut gains = BTreeMap::new();
        // thresholds read the pre-iteration scores with the current bias
        let view = DiffusionState { scores: before.clone(), ..state.clone() };
        for v in state.buckets[0].clone() {
            for c in graph.backward_neighbors(&v)? {
                if before.get(&v) > before.get(c) && threshold_pass(graph, c, &view, target_layer)? {
                    let g = preference_gain(graph, c, &v, &before, params.gamma, Phase::Backward)?;
                    staged.add(c.clone(), g);
                    *gains.entry(c.clone()).or_insert(0.0) += g;
                    if !state.activated.contains(c) {
                        new_backward.insert(c.clone());
                    }
                }
            }
        }
        let backtracked =
            adjust_after_phase(&BTreeSet::new(), &new_backward, &mut state, Phase::Backward, graph)?;
        trace.push(TraceRecord {
            iteration: attempt,
            step: pairs,
            phase: Phase::Backward,
            bias: state.bias(),
            newly_activated: new_backward.iter().cloned().collect(),
            gains,
            backtracked,
        });

        state.scores = staged;
        if !backtracked {
            state.iteration += 1;
        }
        if new_forward.is_empty() && new_backward.is_empty() && state.at_bias_cap() {
            break ExitReason::BiasCap;
        }
    };

    Ok(Diffusion {
        scores: state.scores,
        activated: state.activated,
        trace,
        exit,
        committed_iterations: state.iteration,
        phase_pairs: pairs,
    })
}
