//! A second, deliberately plain implementation of the diffusion loop. It
//! works on the raw `Shape` lists with string-keyed hash maps and shares no
//! code with the engine beyond the key format, so agreement between the two
//! is evidence that both follow the same procedure.
//!
//! Thresholds and bias are whole hundredths here as well, which is the
//! resolution the engine uses.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::graphs::{entity_key, relation_key, Shape};

const GAMMA: f64 = 0.2;
const TAU_PAIR: i64 = 50;
const TAU_ASSOC: i64 = 40;
const CAP: i64 = 50;
const FORWARD_STALL: i64 = 10;
const BACKWARD_RELIEF: i64 = 10;
const BACKWARD_STALL: i64 = 15;
const BONUS: i64 = 5;

pub struct Outcome {
    pub scores: BTreeMap<String, f64>,
    pub activated: BTreeSet<String>,
    pub phase_pairs: usize,
}

fn s(map: &HashMap<String, f64>, k: &str) -> f64 {
    *map.get(k).unwrap_or(&0.0)
}

pub fn run(shape: &Shape, anchors: &[(String, f64)], target_layer: u8, d: usize) -> Outcome {
    let mut layer: HashMap<String, u8> = HashMap::new();
    let mut members: HashMap<String, Vec<String>> = HashMap::new();
    let mut incident: HashMap<String, Vec<String>> = HashMap::new();
    for e in &shape.entities {
        layer.insert(entity_key(e), 1);
        incident.insert(entity_key(e), vec![]);
    }
    for (l, m) in &shape.relations {
        let key = relation_key(*l, m);
        layer.insert(key.clone(), *l);
        let mut ms: Vec<String> = m.iter().map(|x| entity_key(x)).collect();
        ms.sort();
        for x in &ms {
            incident.get_mut(x).unwrap().push(key.clone());
        }
        members.insert(key, ms);
    }
    for list in incident.values_mut() {
        list.sort();
    }

    let mut score: HashMap<String, f64> = anchors.iter().cloned().collect();
    let mut active: BTreeSet<String> = anchors.iter().map(|(k, _)| k.clone()).collect();
    let mut bias: i64 = 0;
    let mut i = 0;
    let mut pairs = 0;

    loop {
        if i >= d || pairs >= 3 * d {
            break;
        }
        pairs += 1;
        let old = score.clone();
        let mut new = score.clone();

        // top-down
        let mut fresh_down = BTreeSet::new();
        for c in active.iter().filter(|k| layer[*k] >= 2) {
            for v in &members[c] {
                let (sc, sv) = (s(&old, c), s(&old, v));
                if sc <= sv {
                    continue;
                }
                let hc = incident[v].iter().filter(|n| s(&old, n) > sv).count();
                if hc == 0 {
                    continue;
                }
                let pa = hc as f64 / (hc as f64 + 1.0);
                *new.entry(v.clone()).or_insert(0.0) += (sc - sv) * pa * GAMMA;
                if !active.contains(v) {
                    fresh_down.insert(v.clone());
                }
            }
        }
        if fresh_down.is_empty() {
            bias = (bias + FORWARD_STALL).min(CAP);
        } else {
            active.extend(fresh_down.iter().cloned());
        }

        // bottom-up
        let mut fresh_up = BTreeSet::new();
        let entities: Vec<String> = active.iter().filter(|k| layer[*k] == 1).cloned().collect();
        for v in &entities {
            for c in &incident[v] {
                let (sv, sc) = (s(&old, v), s(&old, c));
                if sv <= sc {
                    continue;
                }
                let total = members[c].len() as i64;
                let above = members[c].iter().filter(|m| s(&old, m) > sc).count() as i64;
                let base = if layer[c] == 2 { TAU_PAIR } else { TAU_ASSOC };
                let bonus = if layer[c] == target_layer { BONUS } else { 0 };
                if 100 * above <= (base - bias - bonus) * total {
                    continue;
                }
                let p = above as f64 / total as f64;
                let pa = above as f64 / (above as f64 + 1.0);
                *new.entry(c.clone()).or_insert(0.0) += (sv - sc) * (pa * 0.5 + p * p * 0.5) * GAMMA;
                if !active.contains(c) {
                    fresh_up.insert(c.clone());
                }
            }
        }
        let stalled = fresh_up.is_empty();
        if stalled {
            bias = (bias + BACKWARD_STALL).min(CAP);
        } else {
            active.extend(fresh_up.iter().cloned());
            bias = (bias - BACKWARD_RELIEF).max(0);
        }

        score = new;
        if !stalled {
            i += 1;
        }
        if fresh_down.is_empty() && fresh_up.is_empty() && bias == CAP {
            break;
        }
    }

    Outcome {
        scores: score.into_iter().filter(|(_, v)| *v > 0.0).collect(),
        activated: active,
        phase_pairs: pairs,
    }
}
