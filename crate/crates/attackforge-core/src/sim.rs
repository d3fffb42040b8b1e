//! Closed-loop discrete-time simulation of a single-stage water treatment
//! process: two tank levels driven by an inlet valve and a transfer pump
//! pair, a scan-cycle controller, attack injection on reported/commanded
//! values, impact detection and stealth metrics.
//!
//! Plant layout: MV101 admits raw water into tank T101 (level LIT101);
//! P101/P102 pump from T101 into T301 (level LIT301, flow FIT201); a
//! constant downstream demand drains T301. The controller holds LIT101 in
//! the 500–800 mm band via MV101 and LIT301 in the 800–1000 mm band via the
//! pumps, with low-low / high-high alarms on LIT101.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{quantize, Registry, SignalKind, SignalSpec, SignalTag, Trace};
use crate::synth::{AttackPattern, ImpactClass, Manipulation, Termination};

pub const LIT101: &str = "LIT101";
pub const MV101: &str = "MV101";
pub const FIT201: &str = "FIT201";
pub const LIT301: &str = "LIT301";
pub const P101: &str = "P101";
pub const P102: &str = "P102";
pub const ALARM1: &str = "ALARM1";

fn tag(name: &str) -> SignalTag {
    SignalTag::new(name).expect("static tag")
}

/// Signal registry for the stage-1 process (column order fixed).
pub fn stage1_registry() -> Arc<Registry> {
    let mm = |t: &str, bounds| {
        SignalSpec::new(
            tag(t),
            SignalKind::AnalogSensor { unit: "mm".to_string() },
            bounds,
        )
        .unwrap()
    };
    Arc::new(
        Registry::new(vec![
            mm(LIT101, Some((0.0, 1300.0))),
            SignalSpec::new(tag(MV101), SignalKind::two_state_actuator(), None).unwrap(),
            SignalSpec::new(
                tag(FIT201),
                SignalKind::AnalogSensor { unit: "m3/h".to_string() },
                Some((0.0, 10.0)),
            )
            .unwrap(),
            mm(LIT301, Some((0.0, 1300.0))),
            SignalSpec::new(tag(P101), SignalKind::two_state_actuator(), None).unwrap(),
            SignalSpec::new(tag(P102), SignalKind::two_state_actuator(), None).unwrap(),
            SignalSpec::new(tag(ALARM1), SignalKind::AlarmFlag, None).unwrap(),
        ])
        .unwrap(),
    )
}

/// Scheduled multiplicative degradation of pump output (efficiency knob).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyDrift {
    pub start_s: u64,
    pub rate_per_s: f64,
}

/// Tank/flow dynamics coefficients (the structured state-space model:
/// levels are integrators of valve/pump flows plus bounded process noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    /// T101 inflow when MV101 is open, mm/s.
    pub q_in_mm_s: f64,
    /// T101 outflow per running pump, mm/s.
    pub q_out_mm_s: f64,
    /// T301 inflow per running pump, mm/s.
    pub q_p3_mm_s: f64,
    /// T301 downstream demand, mm/s.
    pub q_d_mm_s: f64,
    /// Pump flow reading at the reference head, m3/h per pump.
    pub flow_per_pump_m3h: f64,
    /// Flow loss per mm of T301 head above the reference (back-pressure).
    pub backpressure_m3h_per_mm: f64,
    pub backpressure_ref_mm: f64,
    /// Bounded-uniform process / measurement noise amplitudes.
    pub sigma_v: f64,
    pub sigma_eta: f64,
    pub lit101_init_mm: f64,
    pub lit301_init_mm: f64,
    /// Seed-driven symmetric jitter applied to the initial levels.
    pub init_jitter_mm: f64,
    /// Physical tank range, mm.
    pub hard_lo_mm: f64,
    pub hard_hi_mm: f64,
    /// True-state impact thresholds.
    pub overflow_mm: f64,
    pub dry_mm: f64,
    /// Operational band used for soft events and attack classification.
    pub soft_lo_mm: f64,
    pub soft_hi_mm: f64,
    /// Consecutive seconds before condition-style impact events fire.
    pub condition_hold_s: u64,
    /// Step-change detector threshold for level signals, mm.
    pub step_detector_mm: f64,
    pub pump_efficiency_drift: Option<EfficiencyDrift>,
}

/// Scan-cycle control logic thresholds, executed top to bottom each tick;
/// later assignments override earlier ones within a scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerLogic {
    pub lit101_lolo_mm: f64,
    pub lit101_hihi_mm: f64,
    pub mv_open_mm: f64,
    pub mv_close_mm: f64,
    pub pump_start_mm: f64,
    pub pump_stop_mm: f64,
    pub fit_min_m3h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantProfile {
    pub name: String,
    pub model: PlantModel,
    pub controller: ControllerLogic,
}

impl PlantProfile {
    pub fn stage1_default() -> Self {
        PlantProfile {
            name: "stage1".to_string(),
            model: PlantModel {
                q_in_mm_s: 0.8,
                q_out_mm_s: 0.5,
                q_p3_mm_s: 0.5,
                q_d_mm_s: 0.5,
                flow_per_pump_m3h: 1.25,
                backpressure_m3h_per_mm: 0.005,
                backpressure_ref_mm: 800.0,
                sigma_v: 0.0,
                sigma_eta: 0.0,
                lit101_init_mm: 690.0,
                lit301_init_mm: 900.0,
                init_jitter_mm: 25.0,
                hard_lo_mm: 0.0,
                hard_hi_mm: 1300.0,
                overflow_mm: 1200.0,
                dry_mm: 100.0,
                soft_lo_mm: 250.0,
                soft_hi_mm: 1000.0,
                condition_hold_s: 60,
                step_detector_mm: 5.0,
                pump_efficiency_drift: None,
            },
            controller: ControllerLogic {
                lit101_lolo_mm: 250.0,
                lit101_hihi_mm: 1200.0,
                mv_open_mm: 500.0,
                mv_close_mm: 800.0,
                pump_start_mm: 800.0,
                pump_stop_mm: 1000.0,
                fit_min_m3h: 0.5,
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::BadProfile(e.to_string()))
    }

    /// Nominal operating midpoint of an analog sensor, used to classify
    /// spoof values as high or low.
    pub fn nominal_mid(&self, t: &SignalTag) -> f64 {
        match t.as_str() {
            LIT101 => (self.controller.mv_open_mm + self.controller.mv_close_mm) / 2.0,
            LIT301 => (self.controller.pump_start_mm + self.controller.pump_stop_mm) / 2.0,
            FIT201 => self.model.flow_per_pump_m3h,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("unknown tag {0}")]
    UnknownTag(String),
    #[error("attack starts at {start}s, beyond horizon {horizon}s")]
    UnschedulableAttack { start: u64, horizon: u64 },
    #[error("bad plant profile: {0}")]
    BadProfile(String),
}

// ---------------------------------------------------------------------------
// Manipulation runtime

struct ManipRuntime {
    tag: SignalTag,
    manip: Manipulation,
    anchor: Option<f64>,
    rng: Option<ChaCha8Rng>,
    history: VecDeque<f64>,
    inner: Option<Box<ManipRuntime>>,
}

impl ManipRuntime {
    fn new(tag: SignalTag, manip: Manipulation) -> Self {
        let rng = match &manip {
            Manipulation::Noise { seed, .. } => Some(ChaCha8Rng::seed_from_u64(*seed)),
            _ => None,
        };
        let inner = match &manip {
            Manipulation::Intermittent { inner, .. } => {
                Some(Box::new(ManipRuntime::new(tag.clone(), (**inner).clone())))
            }
            _ => None,
        };
        ManipRuntime { tag, manip, anchor: None, rng, history: VecDeque::new(), inner }
    }

    /// Spoofed value for a reported sensor reading; `elapsed` counts ticks
    /// since the attack became active.
    fn apply_sensor(&mut self, raw: f64, elapsed: u64) -> f64 {
        match &self.manip {
            Manipulation::SetConstant { value } => *value,
            Manipulation::ForceActuator { .. } => raw,
            Manipulation::Drift { rate, direction, limit } => {
                let anchor = *self.anchor.get_or_insert(raw);
                let v = anchor + *direction as f64 * rate * elapsed as f64;
                match limit {
                    Some(l) if *direction > 0 => v.min(*l),
                    Some(l) => v.max(*l),
                    None => v,
                }
            }
            Manipulation::Intermittent { on_s, off_s, jitter_seed, .. } => {
                let period = on_s + off_s;
                let phase = (elapsed + jitter_seed % period) % period;
                if phase < *on_s {
                    self.inner.as_mut().unwrap().apply_sensor(raw, elapsed)
                } else {
                    raw
                }
            }
            Manipulation::Delay { lag_s } => {
                self.history.push_back(raw);
                if self.history.len() > *lag_s as usize + 1 {
                    self.history.pop_front();
                }
                *self.history.front().unwrap()
            }
            Manipulation::Noise { bound, .. } => {
                if *bound == 0.0 {
                    raw
                } else {
                    raw + self.rng.as_mut().unwrap().random_range(-*bound..=*bound)
                }
            }
            Manipulation::Suppress { period_s } => {
                let anchor = *self.anchor.get_or_insert(raw);
                if elapsed < *period_s {
                    anchor
                } else {
                    raw
                }
            }
        }
    }

    /// Forced actuator state, when this manipulation commands one.
    fn actuator_override(&mut self, elapsed: u64) -> Option<i64> {
        match &self.manip {
            Manipulation::ForceActuator { state_code } => Some(*state_code),
            Manipulation::Intermittent { on_s, off_s, jitter_seed, .. } => {
                let period = on_s + off_s;
                let phase = (elapsed + jitter_seed % period) % period;
                if phase < *on_s {
                    self.inner.as_mut().unwrap().actuator_override(elapsed)
                } else {
                    None
                }
            }
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Controller

#[derive(Debug, Clone, Copy, PartialEq)]
struct CtrlState {
    mv: i64,
    p1: i64,
    p2: i64,
    alarm: bool,
}

fn per_pump_flow(model: &PlantModel, l301: f64, eff: f64) -> f64 {
    ((model.flow_per_pump_m3h
        - model.backpressure_m3h_per_mm * (l301 - model.backpressure_ref_mm))
        .max(0.0))
        * eff
}

/// One controller scan. `fit_override` carries the controller-visible flow
/// when FIT201 is being spoofed; otherwise the flow input is reconstructed
/// from the pump command issued earlier in the same scan (the transmitter
/// reading lags the command by a tick, which would wedge the start rule).
fn scan(
    ctl: &ControllerLogic,
    model: &PlantModel,
    prev: CtrlState,
    r101: f64,
    r301: f64,
    fit_override: Option<f64>,
    eff: f64,
) -> CtrlState {
    let mut s = CtrlState { alarm: false, ..prev };
    if r101 < ctl.lit101_lolo_mm {
        s.alarm = true;
        s.p1 = 1;
        s.p2 = 1;
    } else if r101 > ctl.lit101_hihi_mm {
        s.alarm = true;
    } else if r101 < ctl.mv_open_mm {
        s.mv = 2;
    } else if r101 > ctl.mv_close_mm {
        s.mv = 1;
    }
    if r301 < ctl.pump_start_mm {
        s.p1 = 2;
        s.p2 = 2;
    } else if r301 >= ctl.pump_stop_mm {
        s.p1 = 1;
        s.p2 = 1;
    }
    let n_cmd = (s.p1 == 2) as u32 + (s.p2 == 2) as u32;
    let fit_in = fit_override.unwrap_or_else(|| n_cmd as f64 * per_pump_flow(model, r301, eff));
    if fit_in < ctl.fit_min_m3h {
        s.p1 = 1;
        s.p2 = 1;
    }
    s
}

// ---------------------------------------------------------------------------
// Impact monitoring

struct ImpactMonitor {
    events: Vec<(u64, ImpactClass)>,
    dry_run: u64,
    overpump: u64,
    no_inflow: u64,
    uncontrolled: u64,
    hold: u64,
}

impl ImpactMonitor {
    fn new(hold: u64) -> Self {
        ImpactMonitor { events: Vec::new(), dry_run: 0, overpump: 0, no_inflow: 0, uncontrolled: 0, hold }
    }

    fn seen(&self, class: ImpactClass) -> bool {
        self.events.iter().any(|(_, c)| *c == class)
    }

    fn emit(&mut self, t: u64, class: ImpactClass) {
        if !self.seen(class) {
            self.events.push((t, class));
            let distinct = self
                .events
                .iter()
                .filter(|(_, c)| *c != ImpactClass::CascadingFailure)
                .count();
            if distinct >= 2 && !self.seen(ImpactClass::CascadingFailure) {
                self.events.push((t, ImpactClass::CascadingFailure));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn observe(
        &mut self,
        t: u64,
        model: &PlantModel,
        ctl: &ControllerLogic,
        x101: f64,
        x301: f64,
        mv: i64,
        pumps_on: bool,
        alarm: bool,
    ) {
        if x101 > model.overflow_mm || x301 > model.overflow_mm {
            self.emit(t, ImpactClass::Overflow);
        }
        if x101 < model.dry_mm || x301 < model.dry_mm {
            self.emit(t, ImpactClass::Underflow);
        }
        let true_alarm = x101 < ctl.lit101_lolo_mm
            || x101 > ctl.lit101_hihi_mm
            || x301 > model.overflow_mm
            || x301 < model.dry_mm;
        if alarm && !true_alarm {
            self.emit(t, ImpactClass::FalseAlarm);
        }
        if !alarm && true_alarm {
            self.emit(t, ImpactClass::AlarmMissed);
        }
        let bump = |c: &mut u64, cond: bool| if cond { *c += 1 } else { *c = 0 };
        bump(&mut self.dry_run, pumps_on && x101 < model.dry_mm);
        bump(&mut self.overpump, pumps_on && x301 > ctl.pump_stop_mm);
        bump(&mut self.no_inflow, mv == 1 && x101 < ctl.lit101_lolo_mm);
        bump(&mut self.uncontrolled, mv == 2 && x101 > model.soft_hi_mm);
        if self.dry_run >= self.hold {
            self.emit(t, ImpactClass::DryRun);
        }
        if self.overpump >= self.hold {
            self.emit(t, ImpactClass::OverPumping);
        }
        if self.no_inflow >= self.hold {
            self.emit(t, ImpactClass::NoInflow);
        }
        if self.uncontrolled >= self.hold {
            self.emit(t, ImpactClass::UncontrolledInflow);
        }
    }
}

// ---------------------------------------------------------------------------
// Simulation

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub trace: Trace,
    pub true_lit101: Vec<f64>,
    pub true_lit301: Vec<f64>,
    pub impact_events: Vec<(u64, ImpactClass)>,
    /// First event matching the attack's declared impact.
    pub time_to_impact: Option<u64>,
    /// Max one-tick change of each reported signal inside the attack window
    /// (whole run when no attack).
    pub max_step_change: BTreeMap<SignalTag, f64>,
}

fn seed_jitter(rng: &mut ChaCha8Rng, amplitude: f64, grid: f64) -> f64 {
    if amplitude <= 0.0 {
        return 0.0;
    }
    let steps = (amplitude / grid).floor() as i64;
    rng.random_range(-steps..=steps) as f64 * grid
}

/// Run the closed loop for `horizon_s` ticks. Per tick: measure, spoof,
/// scan, force, detect impacts, integrate, record. Fully deterministic
/// given the seed.
pub fn run(
    profile: &PlantProfile,
    attack: Option<&AttackPattern>,
    horizon_s: u64,
    seed: u64,
) -> Result<SimOutcome, SimError> {
    let registry = stage1_registry();
    let model = &profile.model;
    let ctl = &profile.controller;
    if let Some(a) = attack {
        if a.start_s >= horizon_s {
            return Err(SimError::UnschedulableAttack { start: a.start_s, horizon: horizon_s });
        }
        for (t, _) in &a.manipulations {
            if !registry.contains(t) {
                return Err(SimError::UnknownTag(t.to_string()));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // LIT301 must start on the 0.5 mm integration grid so that the hysteresis
    // band edges are hit exactly; LIT101 uses the finer 0.1 mm grid.
    let mut x101 = model.lit101_init_mm + seed_jitter(&mut rng, model.init_jitter_mm, 0.1);
    let mut x301 = model.lit301_init_mm + seed_jitter(&mut rng, model.init_jitter_mm, 0.5);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut state = CtrlState { mv: 1, p1: 1, p2: 1, alarm: false };
    let mut prev_fit = 0.0_f64;
    let mut prev_n_actual = 0u32;

    let mut runtimes: Vec<ManipRuntime> = attack
        .map(|a| {
            a.manipulations
                .iter()
                .map(|(t, m)| ManipRuntime::new(t.clone(), m.clone()))
                .collect()
        })
        .unwrap_or_default();

    let mut monitor = ImpactMonitor::new(model.condition_hold_s);
    let mut columns: BTreeMap<SignalTag, Vec<f64>> =
        registry.tags().map(|t| (t.clone(), Vec::new())).collect();
    let mut labels: Vec<u8> = Vec::with_capacity(horizon_s as usize);
    let mut true101 = Vec::with_capacity(horizon_s as usize);
    let mut true301 = Vec::with_capacity(horizon_s as usize);

    for t in 0..horizon_s {
        let eff = match model.pump_efficiency_drift {
            Some(d) if t >= d.start_s => {
                (1.0 - d.rate_per_s * (t - d.start_s) as f64).clamp(0.0, 1.0)
            }
            _ => 1.0,
        };

        // 1. measure
        let eta = |rng: &mut ChaCha8Rng| {
            if model.sigma_eta > 0.0 {
                rng.random_range(-model.sigma_eta..=model.sigma_eta)
            } else {
                0.0
            }
        };
        let mut r101 = quantize(x101 + eta(&mut noise_rng));
        let mut r301 = quantize(x301 + eta(&mut noise_rng));
        // Raw transmitter flow, from the pump state entering this tick.
        let fit_raw_pre = if prev_n_actual > 0 && x101 > model.hard_lo_mm {
            prev_n_actual as f64 * per_pump_flow(model, x301, eff)
        } else {
            prev_fit
        };

        // 2. spoof reported sensors
        let active = attack.map_or(false, |a| {
            t >= a.start_s
                && match a.termination {
                    Termination::MaxDuration { t_s } => t < a.start_s + t_s,
                    Termination::UntilImpact => true,
                }
        });
        let mut fit_spoof: Option<f64> = None;
        if active {
            let elapsed = t - attack.unwrap().start_s;
            for rt in &mut runtimes {
                match rt.tag.as_str() {
                    LIT101 => r101 = quantize(rt.apply_sensor(r101, elapsed)),
                    LIT301 => r301 = quantize(rt.apply_sensor(r301, elapsed)),
                    FIT201 => {
                        fit_spoof = Some(quantize(rt.apply_sensor(quantize(fit_raw_pre), elapsed)))
                    }
                    _ => {}
                }
            }
        }

        // 3. controller scan on the (possibly spoofed) reports
        state = scan(ctl, model, state, r101, r301, fit_spoof, eff);

        // 4. commanded → actual, with forced actuators
        let (mut mv_a, mut p1_a, mut p2_a) = (state.mv, state.p1, state.p2);
        if active {
            let elapsed = t - attack.unwrap().start_s;
            for rt in &mut runtimes {
                if let Some(code) = rt.actuator_override(elapsed) {
                    match rt.tag.as_str() {
                        MV101 => mv_a = code,
                        P101 => p1_a = code,
                        P102 => p2_a = code,
                        _ => {}
                    }
                }
            }
        }
        let n_actual =
            (p1_a == 2 && x101 > model.hard_lo_mm) as u32 + (p2_a == 2 && x101 > model.hard_lo_mm) as u32;

        // reported flow: transmitter reads the post-scan pump state, holds
        // one tick on shutdown (spin-down), then decays to zero
        let fit_rep = match fit_spoof {
            Some(v) => v,
            None => {
                if n_actual > 0 {
                    quantize(n_actual as f64 * per_pump_flow(model, x301, eff))
                } else if prev_n_actual > 0 {
                    prev_fit
                } else {
                    quantize((prev_fit - 0.5).max(0.0))
                }
            }
        };

        // 5. record
        columns.get_mut(&tag(LIT101)).unwrap().push(r101);
        columns.get_mut(&tag(MV101)).unwrap().push(mv_a as f64);
        columns.get_mut(&tag(FIT201)).unwrap().push(fit_rep);
        columns.get_mut(&tag(LIT301)).unwrap().push(r301);
        columns.get_mut(&tag(P101)).unwrap().push(p1_a as f64);
        columns.get_mut(&tag(P102)).unwrap().push(p2_a as f64);
        columns.get_mut(&tag(ALARM1)).unwrap().push(state.alarm as i64 as f64);
        labels.push(active as u8);
        true101.push(x101);
        true301.push(x301);

        // 6. impact detection on the true state
        monitor.observe(t, model, ctl, x101, x301, mv_a, p1_a == 2 || p2_a == 2, state.alarm);
        if active && attack.unwrap().termination == Termination::UntilImpact {
            let declared = attack.unwrap().declared_impact;
            if monitor.seen(declared) {
                break;
            }
        }

        // 7. integrate true dynamics with the actual actuator states
        let v = |rng: &mut ChaCha8Rng| {
            if model.sigma_v > 0.0 {
                rng.random_range(-model.sigma_v..=model.sigma_v)
            } else {
                0.0
            }
        };
        let pumping = n_actual as f64 * eff;
        let delivering = per_pump_flow(model, x301, eff) > 0.0;
        let d101 = model.q_in_mm_s * (mv_a == 2) as i64 as f64 - model.q_out_mm_s * pumping
            + v(&mut noise_rng);
        let d301 = model.q_p3_mm_s * pumping * delivering as i64 as f64
            - model.q_d_mm_s * (x301 > model.hard_lo_mm) as i64 as f64
            + v(&mut noise_rng);
        x101 = quantize(x101 + d101).clamp(model.hard_lo_mm, model.hard_hi_mm);
        x301 = quantize(x301 + d301).clamp(model.hard_lo_mm, model.hard_hi_mm);
        prev_fit = fit_rep;
        prev_n_actual = n_actual;
    }

    let trace = Trace::from_columns(registry, columns, labels).expect("simulated trace");
    let max_step_change = step_changes(&trace, attack.map(|a| a.start_s));
    let time_to_impact = attack.and_then(|a| {
        monitor
            .events
            .iter()
            .find(|(_, c)| *c == a.declared_impact)
            .map(|(t, _)| *t)
    });
    monitor.events.sort_by_key(|(t, c)| (*t, *c as u8));
    Ok(SimOutcome {
        trace,
        true_lit101: true101,
        true_lit301: true301,
        impact_events: monitor.events,
        time_to_impact,
        max_step_change,
    })
}

fn step_changes(trace: &Trace, attack_start: Option<u64>) -> BTreeMap<SignalTag, f64> {
    let from = attack_start.unwrap_or(0).max(1) as usize;
    let mut out = BTreeMap::new();
    for spec in trace.registry().specs() {
        if !spec.kind.is_analog() {
            continue;
        }
        let col = trace.column(&spec.tag).unwrap();
        let mut max = 0.0_f64;
        for t in from..col.len() {
            max = max.max((col[t] - col[t - 1]).abs());
        }
        out.insert(spec.tag.clone(), max);
    }
    out
}

/// Attack-free closed-loop run, emitted as a labeled historian trace.
pub fn gen_normal_trace(profile: &PlantProfile, horizon_s: u64, seed: u64) -> Trace {
    run(profile, None, horizon_s, seed).expect("attack-free run").trace
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValidationOutcome {
    Validated { t: u64 },
    NotValidated { reason: String },
}

impl ValidationOutcome {
    pub fn is_validated(&self) -> bool {
        matches!(self, ValidationOutcome::Validated { .. })
    }
}

/// Did the declared impact materialize within the budget?
pub fn assess_impact(
    outcome: &SimOutcome,
    declared: ImpactClass,
    budget_s: u64,
) -> ValidationOutcome {
    match outcome
        .impact_events
        .iter()
        .find(|(_, c)| *c == declared)
    {
        Some((t, _)) if *t <= budget_s => ValidationOutcome::Validated { t: *t },
        Some((t, _)) => ValidationOutcome::NotValidated {
            reason: format!("{declared:?} first occurred at t={t}, past budget {budget_s}s"),
        },
        None => ValidationOutcome::NotValidated {
            reason: format!("timeout: no {declared:?} event within the run"),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StealthReport {
    pub max_step_change: BTreeMap<SignalTag, f64>,
    pub threshold_exceeded: bool,
    pub detection_tick: Option<u64>,
}

/// Per-tag maximum one-tick report change inside the attack window, plus
/// whether a simple step-change detector (|Δ| > threshold) would fire.
pub fn stealth_metrics(
    outcome: &SimOutcome,
    step_thresholds: &BTreeMap<SignalTag, f64>,
) -> StealthReport {
    let trace = &outcome.trace;
    let mut detection_tick = None;
    'outer: for t in 1..trace.len() {
        if trace.labels()[t] == 0 {
            continue;
        }
        for (tg, thr) in step_thresholds {
            let col = trace.column(tg).expect("threshold tag in trace");
            if (col[t] - col[t - 1]).abs() > *thr {
                detection_tick = Some(t as u64);
                break 'outer;
            }
        }
    }
    StealthReport {
        max_step_change: outcome.max_step_change.clone(),
        threshold_exceeded: detection_tick.is_some(),
        detection_tick,
    }
}
