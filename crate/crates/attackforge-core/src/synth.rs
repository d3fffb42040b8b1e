//! Attack pattern synthesis: turn validated control invariants into concrete
//! manipulation schedules.
//!
//! Every invariant is read as a boundary of safe operation; patterns are
//! built to push the *plant* across that boundary while the *controller*
//! sees data that keeps it passive (trigger spoofs, suppression spoofs,
//! actuator forcing). Stealthy variants reshape direct patterns so that no
//! single reported sample changes faster than a plausible process step, and
//! multi-point patterns combine sensors/actuators for reinforcing or
//! masking effect.

use crate::dsl::{ActionAssertion, Cmp, Consequent, Invariant, InvariantBody, Predicate};
use crate::signal::{quantize, SignalTag};
use crate::sim::{PlantProfile, FIT201, LIT101, LIT301, MV101, P101, P102};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

/// Default attack onset, seconds into the run (past controller warm-up).
pub const DEFAULT_START_S: u64 = 300;
/// Default impact budget for empirical validation, seconds.
pub const DEFAULT_BUDGET_S: u64 = 7200;
pub const CATALOG_SCHEMA: &str = "attackforge/catalog-v1";

/// What an attack does to one signal's reported value or commanded state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Manipulation {
    /// Report a fixed value regardless of the true reading.
    SetConstant { value: f64 },
    /// Pin an actuator to a state, overriding the controller.
    ForceActuator { state_code: i64 },
    /// Ramp the report away from its value at attack onset, clamped at
    /// `limit`; each sample moves at most `rate` from the previous one.
    Drift { rate: f64, direction: i32, limit: Option<f64> },
    /// Apply `inner` for `on_s` seconds out of every `on_s + off_s`.
    Intermittent { inner: Box<Manipulation>, on_s: u64, off_s: u64, jitter_seed: u64 },
    /// Report the true value `lag_s` seconds late.
    Delay { lag_s: u64 },
    /// Add bounded uniform noise to the report.
    Noise { bound: f64, seed: u64 },
    /// Freeze the report at its onset value for `period_s` seconds (DoS).
    Suppress { period_s: u64 },
}

impl Manipulation {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Manipulation::SetConstant { .. } => "set-constant",
            Manipulation::ForceActuator { .. } => "force-actuator",
            Manipulation::Drift { .. } => "drift",
            Manipulation::Intermittent { .. } => "intermittent",
            Manipulation::Delay { .. } => "delay",
            Manipulation::Noise { .. } => "noise",
            Manipulation::Suppress { .. } => "suppress",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackClass {
    Direct,
    Stealthy,
    MultiPoint,
}

impl AttackClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackClass::Direct => "direct",
            AttackClass::Stealthy => "stealthy",
            AttackClass::MultiPoint => "multi-point",
        }
    }
}

/// Physical / operational consequence a pattern is expected to cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpactClass {
    Overflow,
    Underflow,
    DryRun,
    OverPumping,
    NoInflow,
    UncontrolledInflow,
    FalseAlarm,
    AlarmMissed,
    CascadingFailure,
}

impl ImpactClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImpactClass::Overflow => "overflow",
            ImpactClass::Underflow => "underflow",
            ImpactClass::DryRun => "dry-run",
            ImpactClass::OverPumping => "over-pumping",
            ImpactClass::NoInflow => "no-inflow",
            ImpactClass::UncontrolledInflow => "uncontrolled-inflow",
            ImpactClass::FalseAlarm => "false-alarm",
            ImpactClass::AlarmMissed => "alarm-missed",
            ImpactClass::CascadingFailure => "cascading-failure",
        }
    }
}

impl std::fmt::Display for ImpactClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    MaxDuration { t_s: u64 },
    UntilImpact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackPattern {
    pub id: String,
    pub class: AttackClass,
    pub manipulations: Vec<(SignalTag, Manipulation)>,
    pub start_s: u64,
    pub termination: Termination,
    pub declared_impact: ImpactClass,
    /// Ids of the invariants (or parent patterns) this was derived from.
    pub provenance: Vec<String>,
    pub expert_ref: Option<String>,
}

impl AttackPattern {
    /// Content-addressed id; identical schedules get identical ids.
    fn assemble(
        class: AttackClass,
        manipulations: Vec<(SignalTag, Manipulation)>,
        start_s: u64,
        termination: Termination,
        declared_impact: ImpactClass,
        provenance: Vec<String>,
    ) -> Self {
        let key = serde_json::to_string(&(class, &manipulations, start_s, termination))
            .expect("pattern key");
        let id = format!("{}-{}", class.as_str(), crate::short_hash(&key));
        AttackPattern {
            id,
            class,
            manipulations,
            start_s,
            termination,
            declared_impact,
            provenance,
            expert_ref: None,
        }
    }

    /// Tags touched by this pattern, sorted and deduplicated.
    pub fn target_tags(&self) -> Vec<SignalTag> {
        let set: BTreeSet<&SignalTag> = self.manipulations.iter().map(|(t, _)| t).collect();
        set.into_iter().cloned().collect()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("no invariants to synthesize from")]
    EmptyInvariantSet,
    #[error("multi-point synthesis needs at least two distinct targets")]
    TooFewTargets,
    #[error("bad attack catalog: {0}")]
    BadCatalog(String),
}

/// Knobs for stealthy variants; defaults stay under a 5 mm/sample step
/// detector on level signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StealthConfig {
    pub drift_rate_per_s: f64,
    pub intermittent_on_s: u64,
    pub intermittent_off_s: u64,
    pub delay_lag_s: u64,
    pub noise_bound: f64,
    pub suppress_period_s: u64,
}

impl Default for StealthConfig {
    fn default() -> Self {
        StealthConfig {
            drift_rate_per_s: 1.0,
            intermittent_on_s: 5,
            intermittent_off_s: 895,
            delay_lag_s: 2,
            noise_bound: 2.5,
            suppress_period_s: 300,
        }
    }
}

impl StealthConfig {
    pub fn from_profile(profile: &PlantProfile) -> Self {
        StealthConfig { noise_bound: profile.model.step_detector_mm / 2.0, ..Default::default() }
    }
}

// ---------------------------------------------------------------------------
// Impact prediction
// ---------------------------------------------------------------------------

/// Predicted plant impact of holding `tag`'s report at `value` while true
/// dynamics evolve, derived from the controller's decision regions.
pub fn spoof_impact(profile: &PlantProfile, tag: &SignalTag, value: f64) -> Option<ImpactClass> {
    let c = &profile.controller;
    match tag.as_str() {
        LIT101 => Some(if value < c.lit101_lolo_mm || value > c.lit101_hihi_mm {
            // controller believes an alarm condition that is not real
            ImpactClass::FalseAlarm
        } else if value < c.mv_open_mm {
            // inlet valve wedged open; the real tank keeps filling
            ImpactClass::Overflow
        } else if value <= c.mv_close_mm {
            // dead band: valve frozen, pumps keep draining
            ImpactClass::Underflow
        } else {
            // valve held closed, tank drains through the alarm band unseen
            ImpactClass::AlarmMissed
        }),
        LIT301 => Some(if value < c.pump_start_mm {
            ImpactClass::OverPumping
        } else if value >= c.pump_stop_mm {
            ImpactClass::Underflow
        } else {
            // dead band freezes pumps in their current (running) state
            ImpactClass::OverPumping
        }),
        FIT201 => {
            if value < c.fit_min_m3h {
                // dry-run protection trips on every scan; transfer stops
                Some(ImpactClass::Underflow)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Predicted impact of pinning the given actuators, overriding the
/// controller. Single-pump forcing is load-shared away by the twin pump and
/// yields no impact.
pub fn force_impact(forced: &[(SignalTag, i64)]) -> Option<ImpactClass> {
    let set: BTreeSet<(&str, i64)> = forced.iter().map(|(t, s)| (t.as_str(), *s)).collect();
    let both = |s: i64| set == BTreeSet::from([(P101, s), (P102, s)]);
    if set == BTreeSet::from([(MV101, 2)]) {
        Some(ImpactClass::UncontrolledInflow)
    } else if set == BTreeSet::from([(MV101, 1)]) {
        Some(ImpactClass::NoInflow)
    } else if both(2) {
        Some(ImpactClass::DryRun)
    } else if both(1) {
        Some(ImpactClass::Underflow)
    } else {
        None
    }
}

/// Violation margin: 1% of the threshold magnitude, at least one display
/// unit, so the spoofed value sits clearly on the violating side.
fn margin(theta: f64) -> f64 {
    (0.01 * theta.abs()).max(1.0)
}

fn clamp_report(profile: &PlantProfile, tag: &SignalTag, v: f64) -> f64 {
    let m = &profile.model;
    match tag.as_str() {
        LIT101 | LIT301 => quantize(v.clamp(m.hard_lo_mm, m.hard_hi_mm)),
        _ => quantize(v.max(0.0)),
    }
}

fn dedup_key(p: &AttackPattern) -> String {
    serde_json::to_string(&(&p.class, &p.manipulations, p.start_s)).expect("dedup key")
}

fn dedup(patterns: Vec<AttackPattern>) -> Vec<AttackPattern> {
    let mut seen = BTreeSet::new();
    patterns.into_iter().filter(|p| seen.insert(dedup_key(p))).collect()
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

fn spoof_pattern(
    profile: &PlantProfile,
    inv: &Invariant,
    tag: &SignalTag,
    value: f64,
) -> Option<AttackPattern> {
    let value = clamp_report(profile, tag, value);
    let impact = spoof_impact(profile, tag, value)?;
    Some(AttackPattern::assemble(
        AttackClass::Direct,
        vec![(tag.clone(), Manipulation::SetConstant { value })],
        DEFAULT_START_S,
        Termination::UntilImpact,
        impact,
        vec![inv.id.clone()],
    ))
}

fn atom_spoofs(profile: &PlantProfile, inv: &Invariant, p: &Predicate) -> Vec<AttackPattern> {
    let d = margin(p.value);
    // one value that makes the antecedent true (triggering the rule when the
    // plant state does not call for it) and one that makes it false
    // (suppressing the rule when the plant state does call for it)
    let (trigger, suppress) = match p.cmp {
        Cmp::Lt | Cmp::Le => (p.value - d, p.value + d),
        Cmp::Gt | Cmp::Ge => (p.value + d, p.value - d),
        Cmp::Eq => return Vec::new(),
    };
    [trigger, suppress]
        .iter()
        .filter_map(|v| spoof_pattern(profile, inv, &p.tag, *v))
        .collect()
}

/// One pattern per exploitable reading of each invariant: antecedent trigger
/// and suppression spoofs plus consequent actuator forcing.
pub fn synth_direct(
    invs: &[Invariant],
    profile: &PlantProfile,
) -> Result<Vec<AttackPattern>, SynthError> {
    if invs.is_empty() {
        return Err(SynthError::EmptyInvariantSet);
    }
    let registry = crate::sim::stage1_registry();
    let analog = |t: &SignalTag| registry.get(t).map(|s| s.kind.is_analog()).unwrap_or(false);
    let mut out = Vec::new();
    for inv in invs {
        match &inv.body {
            InvariantBody::Range { tag, lo, hi } => {
                if analog(tag) {
                    out.extend(spoof_pattern(profile, inv, tag, hi + margin(*hi)));
                    out.extend(spoof_pattern(profile, inv, tag, lo - margin(*lo)));
                }
            }
            InvariantBody::Implication { antecedent, consequents } => {
                for p in antecedent.atoms() {
                    if analog(&p.tag) {
                        out.extend(atom_spoofs(profile, inv, p));
                    }
                }
                // flip every commanded actuator state at once; partial
                // forcing of redundant pump pairs has no plant effect
                let forced: Vec<(SignalTag, i64)> = consequents
                    .iter()
                    .filter_map(|c| match c {
                        Consequent::Action(ActionAssertion::SetState { tag, state_code }) => {
                            Some((tag.clone(), 3 - state_code))
                        }
                        _ => None,
                    })
                    .collect();
                if let Some(impact) = force_impact(&forced) {
                    let manips = forced
                        .into_iter()
                        .map(|(t, s)| (t, Manipulation::ForceActuator { state_code: s }))
                        .collect();
                    out.push(AttackPattern::assemble(
                        AttackClass::Direct,
                        manips,
                        DEFAULT_START_S,
                        Termination::UntilImpact,
                        impact,
                        vec![inv.id.clone()],
                    ));
                }
            }
        }
    }
    Ok(dedup(out))
}

/// Stealthy reshaping of direct patterns: constant spoofs become bounded-rate
/// drifts toward the same value, forced actuators become short intermittent
/// bursts, and each spoofed sensor additionally gets delay / noise / freeze
/// probes.
pub fn synth_stealthy(
    direct: &[AttackPattern],
    profile: &PlantProfile,
    cfg: &StealthConfig,
) -> Vec<AttackPattern> {
    let mut out = Vec::new();
    let mut sensor_tags: BTreeSet<SignalTag> = BTreeSet::new();
    for parent in direct {
        let mut manips = Vec::new();
        let mut reshaped = false;
        for (tag, m) in &parent.manipulations {
            let new = match m {
                Manipulation::SetConstant { value } => {
                    sensor_tags.insert(tag.clone());
                    reshaped = true;
                    let direction = if *value < profile.nominal_mid(tag) { -1 } else { 1 };
                    Manipulation::Drift {
                        rate: cfg.drift_rate_per_s,
                        direction,
                        limit: Some(*value),
                    }
                }
                Manipulation::ForceActuator { .. } => {
                    reshaped = true;
                    Manipulation::Intermittent {
                        inner: Box::new(m.clone()),
                        on_s: cfg.intermittent_on_s,
                        off_s: cfg.intermittent_off_s,
                        jitter_seed: 0,
                    }
                }
                other => other.clone(),
            };
            manips.push((tag.clone(), new));
        }
        if reshaped {
            let mut provenance = parent.provenance.clone();
            provenance.push(parent.id.clone());
            out.push(AttackPattern::assemble(
                AttackClass::Stealthy,
                manips,
                parent.start_s,
                Termination::UntilImpact,
                parent.declared_impact,
                provenance,
            ));
        }
    }
    for tag in sensor_tags {
        // a frozen or degraded report leaves the controller acting on its
        // last belief; predicted impact follows the mid-band spoof analysis
        let Some(impact) = spoof_impact(profile, &tag, profile.nominal_mid(&tag)) else {
            continue;
        };
        for m in [
            Manipulation::Delay { lag_s: cfg.delay_lag_s },
            Manipulation::Noise { bound: cfg.noise_bound, seed: 7 },
            Manipulation::Suppress { period_s: cfg.suppress_period_s },
        ] {
            out.push(AttackPattern::assemble(
                AttackClass::Stealthy,
                vec![(tag.clone(), m)],
                DEFAULT_START_S,
                Termination::MaxDuration { t_s: DEFAULT_BUDGET_S },
                impact,
                Vec::new(),
            ));
        }
    }
    dedup(out)
}

/// Coordinated multi-sensor/actuator patterns: a reinforcing spoof+force
/// combination, a full-stage masking spoof, and a sensor denial-of-service.
pub fn synth_multipoint(
    invs: &[Invariant],
    profile: &PlantProfile,
) -> Result<Vec<AttackPattern>, SynthError> {
    let registry = crate::sim::stage1_registry();
    let mut tags: BTreeSet<SignalTag> = BTreeSet::new();
    let mut ids: Vec<String> = Vec::new();
    for inv in invs {
        tags.extend(inv.tags());
        ids.push(inv.id.clone());
    }
    let has = |name: &str| tags.iter().any(|t| t.as_str() == name);
    let tag = |name: &str| SignalTag::new(name).unwrap();
    let c = &profile.controller;
    let mut out = Vec::new();

    if has(LIT101) && has(MV101) {
        // reinforcing: understate the level and wedge the inlet open
        out.push(AttackPattern::assemble(
            AttackClass::MultiPoint,
            vec![
                (tag(LIT101), Manipulation::SetConstant { value: quantize(c.mv_open_mm * 0.99) }),
                (tag(MV101), Manipulation::ForceActuator { state_code: 2 }),
            ],
            DEFAULT_START_S,
            Termination::UntilImpact,
            ImpactClass::CascadingFailure,
            ids.clone(),
        ));
    }
    if has(LIT101) && has(LIT301) && has(FIT201) {
        // masking: every stage reading frozen at a value that stops transfer
        out.push(AttackPattern::assemble(
            AttackClass::MultiPoint,
            vec![
                (
                    tag(LIT101),
                    Manipulation::SetConstant { value: quantize(profile.model.soft_hi_mm * 1.01) },
                ),
                (
                    tag(LIT301),
                    Manipulation::SetConstant { value: quantize(c.pump_start_mm * 0.99) },
                ),
                (tag(FIT201), Manipulation::SetConstant { value: quantize(c.fit_min_m3h * 0.99) }),
            ],
            DEFAULT_START_S,
            Termination::UntilImpact,
            ImpactClass::CascadingFailure,
            ids.clone(),
        ));
    }
    let analog_targets: Vec<SignalTag> = tags
        .iter()
        .filter(|t| registry.get(t).map(|s| s.kind.is_analog()).unwrap_or(false))
        .cloned()
        .collect();
    if analog_targets.len() >= 2 {
        // denial of service: freeze every referenced sensor report
        let manips = analog_targets
            .iter()
            .map(|t| (t.clone(), Manipulation::Suppress { period_s: 3600 }))
            .collect();
        out.push(AttackPattern::assemble(
            AttackClass::MultiPoint,
            manips,
            DEFAULT_START_S,
            Termination::UntilImpact,
            ImpactClass::CascadingFailure,
            ids,
        ));
    }
    if out.is_empty() {
        return Err(SynthError::TooFewTargets);
    }
    Ok(dedup(out))
}

// ---------------------------------------------------------------------------
// Catalog serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub schema: String,
    pub patterns: Vec<AttackPattern>,
}

impl Catalog {
    pub fn new(patterns: Vec<AttackPattern>) -> Self {
        Catalog { schema: CATALOG_SCHEMA.to_string(), patterns }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let catalog: Catalog =
            serde_json::from_str(text).map_err(|e| SynthError::BadCatalog(e.to_string()))?;
        if catalog.schema != CATALOG_SCHEMA {
            return Err(SynthError::BadCatalog(format!(
                "unsupported schema {:?}",
                catalog.schema
            )));
        }
        Ok(catalog)
    }
}

/// The Stage-1 design document's invariant set (one unparseable legacy row
/// is expected and reported by `parse_rules_file`).
pub const STAGE1_DESIGN_DOC: &str = "\
# Stage-1 design-document invariants
IF LIT101 < 500mm THEN MV101 = OPEN
IF LIT101 > 800mm THEN MV101 = CLOSE
IF LIT101 < 250mm THEN ALARM & P101/P102 = STOP
IF LIT101 > 1200mm THEN ALARM
IF LIT301 < 800mm THEN P101/P102 = START
IF LIT301 > 1000mm THEN P101/P102 = STOP
IF FIT201 < 0.5 m3/h THEN P101/P102 = STOP
250mm <= LIT101 <= 1000mm
800mm <= LIT301 <= 1000mm
IF P101/P102 = START THEN FIT201 >= 0.5 m3/h
IF P101 = FAIL THEN P102 = START
";

/// Parsed Stage-1 design rules (the rows the DSL accepts).
pub fn stage1_design_rules() -> Vec<Invariant> {
    let registry = crate::sim::stage1_registry();
    let (accepted, _) =
        crate::dsl::parse_rules_file(STAGE1_DESIGN_DOC, &registry, crate::dsl::Provenance::DesignDoc);
    accepted
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> PlantProfile {
        PlantProfile::stage1_default()
    }

    fn direct() -> Vec<AttackPattern> {
        synth_direct(&stage1_design_rules(), &profile()).unwrap()
    }

    fn has_const(patterns: &[AttackPattern], tag: &str, value: f64, impact: ImpactClass) -> bool {
        patterns.iter().any(|p| {
            p.declared_impact == impact
                && p.manipulations
                    == vec![(
                        SignalTag::new(tag).unwrap(),
                        Manipulation::SetConstant { value },
                    )]
        })
    }

    #[test]
    fn design_doc_parses_ten_rules() {
        assert_eq!(stage1_design_rules().len(), 10);
    }

    #[test]
    fn direct_patterns_cover_trigger_suppress_and_force() {
        let d = direct();
        assert!(has_const(&d, "LIT101", 495.0, ImpactClass::Overflow));
        assert!(has_const(&d, "LIT101", 505.0, ImpactClass::Underflow));
        assert!(has_const(&d, "LIT101", 808.0, ImpactClass::AlarmMissed));
        assert!(has_const(&d, "LIT101", 792.0, ImpactClass::Underflow));
        assert!(has_const(&d, "LIT101", 247.5, ImpactClass::FalseAlarm));
        assert!(has_const(&d, "LIT101", 1212.0, ImpactClass::FalseAlarm));
        assert!(has_const(&d, "LIT301", 792.0, ImpactClass::OverPumping));
        assert!(has_const(&d, "LIT301", 1010.0, ImpactClass::Underflow));
        assert!(has_const(&d, "FIT201", 0.0, ImpactClass::Underflow));
        let forces: Vec<_> = d
            .iter()
            .filter(|p| matches!(p.manipulations[0].1, Manipulation::ForceActuator { .. }))
            .collect();
        assert_eq!(forces.len(), 4);
        assert!(forces.iter().any(|p| p.declared_impact == ImpactClass::DryRun
            && p.manipulations.len() == 2));
        assert!(forces.iter().any(|p| p.declared_impact == ImpactClass::NoInflow));
        assert!(forces.iter().any(|p| p.declared_impact == ImpactClass::UncontrolledInflow));
    }

    #[test]
    fn direct_catalog_is_deduplicated_and_deterministic() {
        let a = direct();
        let b = direct();
        assert_eq!(a, b);
        assert_eq!(a.len(), 18);
        let keys: BTreeSet<String> = a.iter().map(dedup_key).collect();
        assert_eq!(keys.len(), a.len());
        let ids: BTreeSet<&str> = a.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids.len(), a.len());
        assert!(a.iter().all(|p| p.class == AttackClass::Direct && p.start_s == DEFAULT_START_S));
    }

    #[test]
    fn empty_invariant_set_is_an_error() {
        assert_eq!(synth_direct(&[], &profile()).unwrap_err(), SynthError::EmptyInvariantSet);
    }

    #[test]
    fn benign_side_spoofs_are_not_emitted() {
        // FIT201 >= threshold reports cannot cause harm and must be skipped
        let d = direct();
        assert!(d.iter().all(|p| {
            !matches!(&p.manipulations[..],
                [(t, Manipulation::SetConstant { value })]
                    if t.as_str() == FIT201 && *value >= 0.5)
        }));
    }

    #[test]
    fn stealthy_variants_reshape_without_changing_goals() {
        let d = direct();
        let s = synth_stealthy(&d, &profile(), &StealthConfig::default());
        // every constant spoof gets a drift twin with matching limit
        let drift_limits: BTreeSet<String> = s
            .iter()
            .filter_map(|p| match &p.manipulations[..] {
                [(t, Manipulation::Drift { limit: Some(l), .. })] => Some(format!("{t}:{l}")),
                _ => None,
            })
            .collect();
        assert!(drift_limits.contains("LIT101:495"));
        assert!(drift_limits.contains("LIT301:1010"));
        assert!(drift_limits.contains("FIT201:0"));
        // drift directions head from the operating point toward the target
        for p in &s {
            if let [(t, Manipulation::Drift { direction, limit: Some(l), .. })] =
                &p.manipulations[..]
            {
                let expect = if *l < profile().nominal_mid(t) { -1 } else { 1 };
                assert_eq!(*direction, expect, "drift toward {l} on {t}");
            }
        }
        // forces become intermittent bursts
        assert!(s.iter().any(|p| matches!(
            &p.manipulations[..],
            [(_, Manipulation::Intermittent { on_s: 5, off_s: 895, .. })]
        )));
        // degraded-telemetry probes per spoofed sensor
        for kind in ["delay", "noise", "suppress"] {
            assert!(
                s.iter().any(|p| p.manipulations.len() == 1
                    && p.manipulations[0].0.as_str() == "LIT101"
                    && p.manipulations[0].1.kind_name() == kind),
                "missing {kind} probe"
            );
        }
        assert!(s.iter().all(|p| p.class == AttackClass::Stealthy));
        // stealthy goals mirror the parent's declared impact
        let parent = d
            .iter()
            .find(|p| matches!(&p.manipulations[..],
                [(t, Manipulation::SetConstant { value })]
                    if t.as_str() == "LIT101" && *value == 495.0))
            .unwrap();
        assert_eq!(parent.declared_impact, ImpactClass::Overflow);
        let twin = s
            .iter()
            .find(|p| matches!(&p.manipulations[..],
                [(t, Manipulation::Drift { limit: Some(l), .. })]
                    if t.as_str() == "LIT101" && *l == 495.0))
            .unwrap();
        assert_eq!(twin.declared_impact, parent.declared_impact);
        assert!(twin.provenance.contains(&parent.id));
    }

    #[test]
    fn multipoint_builds_three_coordinated_patterns() {
        let mp = synth_multipoint(&stage1_design_rules(), &profile()).unwrap();
        assert_eq!(mp.len(), 3);
        assert!(mp
            .iter()
            .all(|p| p.class == AttackClass::MultiPoint
                && p.declared_impact == ImpactClass::CascadingFailure));
        let tag_sets: Vec<Vec<String>> = mp
            .iter()
            .map(|p| p.target_tags().iter().map(|t| t.to_string()).collect())
            .collect();
        assert!(tag_sets.contains(&vec!["LIT101".to_string(), "MV101".to_string()]));
        assert!(tag_sets
            .iter()
            .filter(|s| **s == vec!["FIT201".to_string(), "LIT101".to_string(), "LIT301".to_string()])
            .count()
            == 2);
    }

    #[test]
    fn multipoint_needs_multiple_targets() {
        let registry = crate::sim::stage1_registry();
        let one = crate::dsl::parse_invariant(
            "IF FIT201 < 0.5 THEN P101 = STOP",
            &registry,
            crate::dsl::Provenance::DesignDoc,
        )
        .unwrap();
        assert_eq!(
            synth_multipoint(&[one], &profile()).unwrap_err(),
            SynthError::TooFewTargets
        );
        assert_eq!(synth_multipoint(&[], &profile()).unwrap_err(), SynthError::TooFewTargets);
    }

    #[test]
    fn catalog_round_trips_and_checks_schema() {
        let catalog = Catalog::new(direct());
        let json = catalog.to_json();
        assert_eq!(Catalog::from_json(&json).unwrap(), catalog);
        let bad = json.replace(CATALOG_SCHEMA, "attackforge/catalog-v0");
        assert!(matches!(Catalog::from_json(&bad), Err(SynthError::BadCatalog(_))));
    }
}
