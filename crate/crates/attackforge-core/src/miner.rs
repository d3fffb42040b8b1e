//! Data-driven invariant inference: transition-anchored threshold rules and
//! observed-envelope range rules, plus merging of rule sets from multiple
//! sources.
//!
//! Threshold mining exploits the hysteresis structure of scan-cycle
//! controllers: when an actuator switches state, the sensor that caused the
//! switch sits right at the control threshold. Collecting the sensor value at
//! every transition into a given state and taking the tightest bound over
//! them recovers the setpoint; candidates that do not hold over the whole
//! trace are discarded.

use crate::dsl::{
    eval_over_trace, ActionAssertion, Cmp, Cond, Consequent, Invariant, InvariantBody, Predicate,
    Provenance,
};
use crate::signal::{quantize, SignalTag, Trace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Minimum antecedent occurrences for a rule to be emitted.
    pub min_support: usize,
    /// Tolerated violations/support on the mining trace.
    pub max_violation_rate: f64,
    /// Slack added to mined thresholds / range bounds, in signal units.
    pub threshold_margin: f64,
    /// Consequent latency allowance, in samples.
    pub grace: usize,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig { min_support: 10, max_violation_rate: 0.0, threshold_margin: 0.0, grace: 2 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MinerError {
    #[error("trace contains attack-labeled samples")]
    NotAttackFree,
    #[error("registry has no discrete actuators")]
    NoDiscreteActuators,
}

/// Non-fatal findings surfaced alongside mined rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MinerNotice {
    NoTransitions { tag: String },
    DegenerateRange { tag: String, value: f64 },
}

fn check_attack_free(trace: &Trace) -> Result<(), MinerError> {
    if trace.labels().iter().any(|l| *l != 0) {
        Err(MinerError::NotAttackFree)
    } else {
        Ok(())
    }
}

/// Sign of the sensor's motion entering a transition tick; falls back one
/// more tick when the one-step difference is zero (held/latched readings).
fn approach_direction(col: &[f64], t: usize) -> f64 {
    let d1 = col[t] - col[t - 1];
    if d1 != 0.0 {
        return d1.signum();
    }
    if t >= 2 {
        let d2 = col[t] - col[t - 2];
        if d2 != 0.0 {
            return d2.signum();
        }
    }
    0.0
}

/// Infer `IF sensor cmp θ THEN actuator = state` rules from actuator state
/// transitions. See the module docs for the algorithm; output is
/// deterministic and deduplicated.
pub fn mine_threshold_rules_with_notices(
    trace: &Trace,
    config: &MinerConfig,
) -> Result<(Vec<Invariant>, Vec<MinerNotice>), MinerError> {
    check_attack_free(trace)?;
    let registry = trace.registry().clone();
    let mut actuators: Vec<&SignalTag> = registry
        .specs()
        .iter()
        .filter(|s| s.kind.is_discrete())
        .map(|s| &s.tag)
        .collect();
    actuators.sort();
    if actuators.is_empty() {
        return Err(MinerError::NoDiscreteActuators);
    }
    let mut sensors: Vec<&SignalTag> = registry
        .specs()
        .iter()
        .filter(|s| s.kind.is_analog())
        .map(|s| &s.tag)
        .collect();
    sensors.sort();

    let mut notices = Vec::new();
    let mut rules = Vec::new();
    for act in &actuators {
        let a_col = trace.column(act).unwrap();
        let has_transitions = a_col.windows(2).any(|w| w[0] != w[1]);
        if !has_transitions {
            notices.push(MinerNotice::NoTransitions { tag: act.to_string() });
            continue;
        }
        let spec = registry.get(act).unwrap();
        for state in spec.kind.state_codes() {
            let transitions: Vec<usize> = (1..trace.len())
                .filter(|&t| a_col[t] == state as f64 && a_col[t - 1] != state as f64)
                .collect();
            if transitions.is_empty() {
                continue;
            }
            for sensor in &sensors {
                let s_col = trace.column(sensor).unwrap();
                let mut dir = 0.0;
                let mut consistent = true;
                for &t in &transitions {
                    let d = approach_direction(s_col, t);
                    if d == 0.0 {
                        continue;
                    }
                    if dir == 0.0 {
                        dir = d;
                    } else if dir != d {
                        consistent = false;
                        break;
                    }
                }
                if !consistent || dir == 0.0 {
                    continue;
                }
                let values = transitions.iter().map(|&t| s_col[t]);
                let (cmp, theta) = if dir < 0.0 {
                    // sensor falls into the transition: the largest observed
                    // value is the tightest upper threshold
                    (Cmp::Le, values.fold(f64::MIN, f64::max) + config.threshold_margin)
                } else {
                    (Cmp::Ge, values.fold(f64::MAX, f64::min) - config.threshold_margin)
                };
                let inv = Invariant::new(
                    InvariantBody::Implication {
                        antecedent: Cond::Atom(Predicate {
                            tag: (*sensor).clone(),
                            cmp,
                            value: quantize(theta),
                            unit: None,
                        }),
                        consequents: vec![Consequent::Action(ActionAssertion::SetState {
                            tag: (*act).clone(),
                            state_code: state,
                        })],
                    },
                    Provenance::Mined,
                );
                let summary = eval_over_trace(&inv, trace, config.grace).expect("mined rule eval");
                if summary.support >= config.min_support
                    && (summary.violations as f64) <= config.max_violation_rate * summary.support as f64
                {
                    rules.push(inv);
                }
            }
        }
    }
    rules.dedup_by(|a, b| a.body == b.body);
    Ok((rules, notices))
}

pub fn mine_threshold_rules(
    trace: &Trace,
    config: &MinerConfig,
) -> Result<Vec<Invariant>, MinerError> {
    mine_threshold_rules_with_notices(trace, config).map(|(rules, _)| rules)
}

/// Observed-envelope range rules, one per analog sensor.
pub fn mine_range_invariants_with_notices(
    trace: &Trace,
    config: &MinerConfig,
) -> Result<(Vec<Invariant>, Vec<MinerNotice>), MinerError> {
    check_attack_free(trace)?;
    let mut rules = Vec::new();
    let mut notices = Vec::new();
    if trace.is_empty() {
        return Ok((rules, notices));
    }
    let mut sensors: Vec<SignalTag> = trace
        .registry()
        .specs()
        .iter()
        .filter(|s| s.kind.is_analog())
        .map(|s| s.tag.clone())
        .collect();
    sensors.sort();
    for sensor in sensors {
        let col = trace.column(&sensor).unwrap();
        let lo = quantize(col.iter().cloned().fold(f64::MAX, f64::min) - config.threshold_margin);
        let hi = quantize(col.iter().cloned().fold(f64::MIN, f64::max) + config.threshold_margin);
        if !(lo < hi) {
            notices.push(MinerNotice::DegenerateRange { tag: sensor.to_string(), value: lo });
            continue;
        }
        rules.push(Invariant::new(
            InvariantBody::Range { tag: sensor, lo, hi },
            Provenance::Mined,
        ));
    }
    Ok((rules, notices))
}

pub fn mine_range_invariants(
    trace: &Trace,
    config: &MinerConfig,
) -> Result<Vec<Invariant>, MinerError> {
    mine_range_invariants_with_notices(trace, config).map(|(rules, _)| rules)
}

fn provenance_rank(p: Provenance) -> u8 {
    match p {
        Provenance::DesignDoc => 2,
        Provenance::Mined => 1,
        Provenance::LLMProposed => 0,
    }
}

/// Union of rule sets with structural dedup; on duplicate bodies the
/// highest-priority provenance (DesignDoc > Mined > LLMProposed) is kept.
/// Output is sorted by canonical text, making the merge order-insensitive.
pub fn merge_proposals(sets: &[Vec<Invariant>]) -> Vec<Invariant> {
    let mut merged: Vec<Invariant> = Vec::new();
    for set in sets {
        for inv in set {
            match merged.iter_mut().find(|m| m.body == inv.body) {
                Some(existing) => {
                    if provenance_rank(inv.provenance) > provenance_rank(existing.provenance) {
                        existing.provenance = inv.provenance;
                    }
                }
                None => merged.push(inv.clone()),
            }
        }
    }
    merged.sort_by_key(|inv| crate::dsl::render_invariant(inv));
    merged
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_invariant, render_invariant, rules_to_text};
    use crate::signal::{Registry, Trace};
    use crate::sim::{gen_normal_trace, stage1_registry, PlantProfile};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn day_trace() -> Trace {
        gen_normal_trace(&PlantProfile::stage1_default(), 86_400, 42)
    }

    fn find_threshold(
        rules: &[Invariant],
        sensor: &str,
        actuator: &str,
        state: i64,
    ) -> Option<(Cmp, f64)> {
        rules.iter().find_map(|inv| match &inv.body {
            InvariantBody::Implication { antecedent: Cond::Atom(p), consequents }
                if p.tag.as_str() == sensor
                    && consequents.iter().any(|c| {
                        matches!(c, Consequent::Action(ActionAssertion::SetState { tag, state_code })
                            if tag.as_str() == actuator && *state_code == state)
                    }) =>
            {
                Some((p.cmp, p.value))
            }
            _ => None,
        })
    }

    #[test]
    fn recovers_controller_setpoints_from_a_day_of_data() {
        let rules = mine_threshold_rules(&day_trace(), &MinerConfig::default()).unwrap();
        let within = |got: f64, expect: f64| (got - expect).abs() <= 0.02 * expect;

        let (cmp, theta) = find_threshold(&rules, "LIT101", "MV101", 2).expect("MV open rule");
        assert_eq!(cmp, Cmp::Le);
        assert!(within(theta, 500.0), "got {theta}");
        let (cmp, theta) = find_threshold(&rules, "LIT101", "MV101", 1).expect("MV close rule");
        assert_eq!(cmp, Cmp::Ge);
        assert!(within(theta, 800.0), "got {theta}");
        let (cmp, theta) = find_threshold(&rules, "LIT301", "P101", 2).expect("pump start rule");
        assert_eq!(cmp, Cmp::Le);
        assert!(within(theta, 800.0), "got {theta}");
        let (cmp, theta) = find_threshold(&rules, "LIT301", "P101", 1).expect("pump stop rule");
        assert_eq!(cmp, Cmp::Ge);
        assert!(within(theta, 1000.0), "got {theta}");
        let (cmp, theta) = find_threshold(&rules, "FIT201", "P101", 1).expect("flow stop rule");
        assert_eq!(cmp, Cmp::Le);
        assert!(within(theta, 0.5), "got {theta}");
    }

    #[test]
    fn mining_is_deterministic() {
        let trace = day_trace();
        let a = mine_threshold_rules(&trace, &MinerConfig::default()).unwrap();
        let b = mine_threshold_rules(&trace, &MinerConfig::default()).unwrap();
        assert_eq!(rules_to_text(&a), rules_to_text(&b));
    }

    #[test]
    fn mined_rules_hold_on_the_mining_trace() {
        let trace = day_trace();
        let cfg = MinerConfig::default();
        let rules = mine_threshold_rules(&trace, &cfg).unwrap();
        assert!(!rules.is_empty());
        for inv in &rules {
            let s = eval_over_trace(inv, &trace, cfg.grace).unwrap();
            assert!(s.support >= cfg.min_support);
            assert_eq!(s.violations, 0, "rule {} violated", render_invariant(inv));
        }
    }

    fn mini_registry() -> Arc<Registry> {
        stage1_registry()
    }

    fn constant_actuator_trace() -> Trace {
        // MV101 pinned open; pumps toggle once so other rules still exist
        let n = 40;
        let mut columns: BTreeMap<SignalTag, Vec<f64>> = BTreeMap::new();
        let lit: Vec<f64> = (0..n).map(|i| 900.0 + i as f64).collect();
        columns.insert(SignalTag::new("LIT101").unwrap(), (0..n).map(|i| 600.0 + i as f64).collect());
        columns.insert(SignalTag::new("LIT301").unwrap(), lit);
        columns.insert(SignalTag::new("FIT201").unwrap(), vec![2.5; n]);
        columns.insert(SignalTag::new("MV101").unwrap(), vec![2.0; n]);
        let pumps: Vec<f64> = (0..n).map(|i| if i < 20 { 2.0 } else { 1.0 }).collect();
        columns.insert(SignalTag::new("P101").unwrap(), pumps.clone());
        columns.insert(SignalTag::new("P102").unwrap(), pumps);
        columns.insert(SignalTag::new("ALARM1").unwrap(), vec![0.0; n]);
        Trace::from_columns(mini_registry(), columns, vec![0; n]).unwrap()
    }

    #[test]
    fn constant_actuator_is_noticed_not_fatal() {
        let cfg = MinerConfig { min_support: 1, ..MinerConfig::default() };
        let (rules, notices) =
            mine_threshold_rules_with_notices(&constant_actuator_trace(), &cfg).unwrap();
        assert!(notices.contains(&MinerNotice::NoTransitions { tag: "MV101".to_string() }));
        assert!(rules.iter().all(|r| !render_invariant(r).contains("MV101")));
        assert!(!rules.is_empty(), "pump rules should still be mined");
    }

    #[test]
    fn support_gate_suppresses_tiny_traces() {
        let trace = gen_normal_trace(&PlantProfile::stage1_default(), 5, 42);
        let rules = mine_threshold_rules(&trace, &MinerConfig::default()).unwrap();
        assert!(rules.is_empty());
    }

    #[test]
    fn attack_labeled_data_is_rejected() {
        let trace = constant_actuator_trace();
        let mut csv = trace.emit_csv();
        csv = csv.replace(",0,0\n", ",0,1\n");
        let labeled = crate::signal::load_trace(csv.as_bytes(), mini_registry()).unwrap();
        assert!(labeled.labels().iter().any(|l| *l == 1));
        let err = mine_threshold_rules(&labeled, &MinerConfig::default()).unwrap_err();
        assert_eq!(err, MinerError::NotAttackFree);
    }

    #[test]
    fn range_mining_covers_the_envelope() {
        let trace = day_trace();
        let rules = mine_range_invariants(&trace, &MinerConfig::default()).unwrap();
        let lit301 = rules
            .iter()
            .find_map(|r| match &r.body {
                InvariantBody::Range { tag, lo, hi } if tag.as_str() == "LIT301" => Some((*lo, *hi)),
                _ => None,
            })
            .expect("LIT301 range");
        assert_eq!(lit301, (799.5, 1000.0));
        // mined envelopes hold on the trace by construction
        for inv in &rules {
            let s = eval_over_trace(inv, &trace, 0).unwrap();
            assert_eq!(s.violations, 0);
        }
    }

    #[test]
    fn degenerate_range_skipped_with_notice() {
        let trace = constant_actuator_trace();
        let (rules, notices) =
            mine_range_invariants_with_notices(&trace, &MinerConfig::default()).unwrap();
        assert!(notices
            .iter()
            .any(|n| matches!(n, MinerNotice::DegenerateRange { tag, .. } if tag == "FIT201")));
        assert!(rules.iter().all(|r| !render_invariant(r).contains("FIT201")));
    }

    #[test]
    fn merge_keeps_strongest_provenance_and_dedups() {
        let reg = mini_registry();
        let a = parse_invariant("IF LIT101 < 500mm THEN MV101 = OPEN", &reg, Provenance::Mined)
            .unwrap();
        let b =
            parse_invariant("IF LIT101 < 500mm THEN MV101 = OPEN", &reg, Provenance::DesignDoc)
                .unwrap();
        let c = parse_invariant("250mm <= LIT101 <= 1000mm", &reg, Provenance::LLMProposed).unwrap();

        let merged = merge_proposals(&[vec![a.clone()], vec![b.clone(), c.clone()]]);
        assert_eq!(merged.len(), 2);
        let kept = merged.iter().find(|m| m.body == a.body).unwrap();
        assert_eq!(kept.provenance, Provenance::DesignDoc);

        // order-insensitive and idempotent
        let flipped = merge_proposals(&[vec![c, b], vec![a]]);
        assert_eq!(
            merged.iter().map(render_invariant).collect::<Vec<_>>(),
            flipped.iter().map(render_invariant).collect::<Vec<_>>()
        );
        let again = merge_proposals(&[merged.clone()]);
        assert_eq!(merged, again);
    }
}
