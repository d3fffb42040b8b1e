//! Comparison of synthesized attack catalogs against an expert-curated
//! reference list, and the end-of-pipeline summary report.

use crate::signal::SignalTag;
use crate::sim::{PlantProfile, ValidationOutcome};
use crate::synth::{AttackClass, AttackPattern, Manipulation};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use thiserror::Error;

/// Coarse behavioral classes used to line generated patterns up with
/// catalog entries written by people.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationClass {
    SensorSpoofHigh,
    SensorSpoofLow,
    ActuatorForceOn,
    ActuatorForceOff,
    Drift,
    Combined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertEntry {
    pub ref_id: String,
    pub targets: Vec<SignalTag>,
    pub class: ViolationClass,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertCatalog {
    pub entries: Vec<ExpertEntry>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("bad expert catalog: {0}")]
    BadExpertCatalog(String),
    #[error("impact results do not align with the catalog ({results} results, {patterns} patterns)")]
    LengthMismatch { results: usize, patterns: usize },
}

impl ExpertCatalog {
    pub fn from_json(text: &str) -> Result<Self, CompareError> {
        let catalog: ExpertCatalog =
            serde_json::from_str(text).map_err(|e| CompareError::BadExpertCatalog(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for e in &catalog.entries {
            if !seen.insert(&e.ref_id) {
                return Err(CompareError::BadExpertCatalog(format!(
                    "duplicate ref id {}",
                    e.ref_id
                )));
            }
        }
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("expert catalog serialization")
    }
}

/// Behavioral class of a generated pattern, or `None` when the pattern has
/// no analog in the expert taxonomy (e.g. pure telemetry degradation).
pub fn classify(pattern: &AttackPattern, profile: &PlantProfile) -> Option<ViolationClass> {
    if pattern.class == AttackClass::MultiPoint {
        return Some(ViolationClass::Combined);
    }
    // redundant-actuator groups (e.g. both pumps forced off) are one move,
    // not a combination; mixed manipulations are
    let mut classes = pattern
        .manipulations
        .iter()
        .map(|(tag, manip)| classify_manip(tag, manip, profile));
    let first = classes.next()?;
    if classes.all(|c| c == first) {
        first
    } else {
        Some(ViolationClass::Combined)
    }
}

fn classify_manip(
    tag: &SignalTag,
    manip: &Manipulation,
    profile: &PlantProfile,
) -> Option<ViolationClass> {
    match manip {
        Manipulation::SetConstant { value } => Some(if *value >= profile.nominal_mid(tag) {
            ViolationClass::SensorSpoofHigh
        } else {
            ViolationClass::SensorSpoofLow
        }),
        Manipulation::ForceActuator { state_code } => Some(if *state_code == 2 {
            ViolationClass::ActuatorForceOn
        } else {
            ViolationClass::ActuatorForceOff
        }),
        Manipulation::Drift { .. } => Some(ViolationClass::Drift),
        Manipulation::Intermittent { inner, .. } => classify_manip(tag, inner, profile),
        Manipulation::Delay { .. } | Manipulation::Noise { .. } | Manipulation::Suppress { .. } => {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub generated: usize,
    pub validated: usize,
    pub expert: usize,
    pub replicated: usize,
    pub novel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// (expert ref id, generated pattern id) pairs.
    pub replicated: Vec<(String, String)>,
    /// Generated pattern ids with no expert counterpart.
    pub novel: Vec<String>,
    /// Expert ref ids no generated pattern replicates.
    pub missed: Vec<String>,
    pub counts: Counts,
}

/// Match generated patterns to expert entries by target-tag set and
/// behavioral class. Each expert entry takes the first unclaimed matching
/// pattern (in catalog order), so no pattern is counted twice.
pub fn match_patterns(
    generated: &[AttackPattern],
    expert: &ExpertCatalog,
    profile: &PlantProfile,
) -> ComparisonReport {
    let mut claimed = vec![false; generated.len()];
    let mut replicated = Vec::new();
    let mut missed = Vec::new();
    for entry in &expert.entries {
        let want_tags: BTreeSet<&SignalTag> = entry.targets.iter().collect();
        let hit = generated.iter().enumerate().find(|(i, p)| {
            !claimed[*i]
                && classify(p, profile) == Some(entry.class)
                && p.manipulations.iter().map(|(t, _)| t).collect::<BTreeSet<_>>() == want_tags
        });
        match hit {
            Some((i, p)) => {
                claimed[i] = true;
                replicated.push((entry.ref_id.clone(), p.id.clone()));
            }
            None => missed.push(entry.ref_id.clone()),
        }
    }
    let novel: Vec<String> = generated
        .iter()
        .enumerate()
        .filter(|(i, _)| !claimed[*i])
        .map(|(_, p)| p.id.clone())
        .collect();
    let counts = Counts {
        generated: generated.len(),
        validated: 0,
        expert: expert.entries.len(),
        replicated: replicated.len(),
        novel: novel.len(),
    };
    ComparisonReport { replicated, novel, missed, counts }
}

impl ComparisonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serialization")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Built-in expert reference list for the Stage-1 profile (ref ids follow
/// the published SWaT attack numbering).
pub fn stage1_expert_catalog() -> ExpertCatalog {
    let tags = |names: &[&str]| -> Vec<SignalTag> {
        names.iter().map(|n| SignalTag::new(n).unwrap()).collect()
    };
    let entry = |ref_id: &str, targets: &[&str], class: ViolationClass, notes: &str| ExpertEntry {
        ref_id: ref_id.to_string(),
        targets: tags(targets),
        class,
        notes: notes.to_string(),
    };
    ExpertCatalog {
        entries: vec![
            entry("A1", &["MV101"], ViolationClass::ActuatorForceOn, "open inlet valve, overflow T101"),
            entry("A2", &["P101", "P102"], ViolationClass::ActuatorForceOn, "run both pumps dry"),
            entry("A3", &["LIT101"], ViolationClass::SensorSpoofHigh, "overstate level, starve the stage"),
            entry("A21", &["LIT101", "MV101"], ViolationClass::Combined, "understate level with inlet wedged open"),
            entry("A26", &["LIT101", "LIT301", "FIT201"], ViolationClass::Combined, "freeze all stage readings at passive values"),
            entry("A33", &["LIT101"], ViolationClass::SensorSpoofLow, "understate level, overflow T101"),
            entry("A34", &["P101", "P102"], ViolationClass::ActuatorForceOff, "halt transfer, starve T301"),
            entry("A35", &["LIT301"], ViolationClass::SensorSpoofHigh, "overstate downstream level, stop pumps"),
            entry("A36", &["LIT101"], ViolationClass::Drift, "slow ramp below alarm threshold"),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub generated: usize,
    pub validated: usize,
}

/// End-of-pipeline roll-up: counts, per-class validation rates and the
/// expert comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub counts: Counts,
    pub per_class: BTreeMap<String, ClassStats>,
    pub comparison: ComparisonReport,
    /// (pattern id, declared impact, seconds to impact) for validated runs.
    pub validated_patterns: Vec<(String, String, u64)>,
}

/// Fold empirical impact results into the comparison. `impact_results[i]`
/// must describe `catalog[i]`.
pub fn summarize(
    comparison: &ComparisonReport,
    catalog: &[AttackPattern],
    impact_results: &[ValidationOutcome],
) -> Result<PipelineReport, CompareError> {
    if catalog.len() != impact_results.len() {
        return Err(CompareError::LengthMismatch {
            results: impact_results.len(),
            patterns: catalog.len(),
        });
    }
    let mut per_class: BTreeMap<String, ClassStats> = BTreeMap::new();
    let mut validated_patterns = Vec::new();
    let mut validated = 0usize;
    for (p, r) in catalog.iter().zip(impact_results) {
        let stats = per_class
            .entry(p.class.as_str().to_string())
            .or_insert(ClassStats { generated: 0, validated: 0 });
        stats.generated += 1;
        if let ValidationOutcome::Validated { t } = r {
            stats.validated += 1;
            validated += 1;
            validated_patterns.push((
                p.id.clone(),
                p.declared_impact.as_str().to_string(),
                *t,
            ));
        }
    }
    let counts = Counts { validated, ..comparison.counts };
    Ok(PipelineReport {
        counts,
        per_class,
        comparison: comparison.clone(),
        validated_patterns,
    })
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline report serialization")
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("# Attack synthesis report\n\n");
        let c = &self.counts;
        let _ = writeln!(
            out,
            "Generated {} patterns; {} empirically reached their declared impact.",
            c.generated, c.validated
        );
        let _ = writeln!(
            out,
            "Expert reference: {} entries, {} replicated, {} novel patterns, {} missed.\n",
            c.expert, c.replicated, c.novel, self.comparison.missed.len()
        );
        out.push_str("## By class\n\n| Class | Generated | Validated |\n|---|---|---|\n");
        for (class, s) in &self.per_class {
            let _ = writeln!(out, "| {class} | {} | {} |", s.generated, s.validated);
        }
        out.push_str("\n## Replicated expert entries\n\n");
        if self.comparison.replicated.is_empty() {
            out.push_str("none\n");
        } else {
            out.push_str("| Ref | Pattern |\n|---|---|\n");
            for (r, p) in &self.comparison.replicated {
                let _ = writeln!(out, "| {r} | {p} |");
            }
        }
        if !self.comparison.missed.is_empty() {
            let _ = write!(out, "\n## Missed expert entries\n\n{:?}\n", self.comparison.missed);
        }
        out.push_str("\n## Validated patterns\n\n");
        if self.validated_patterns.is_empty() {
            out.push_str("none\n");
        } else {
            out.push_str("| Pattern | Declared impact | Time to impact (s) |\n|---|---|---|\n");
            for (id, impact, t) in &self.validated_patterns {
                let _ = writeln!(out, "| {id} | {impact} | {t} |");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{
        stage1_design_rules, synth_direct, synth_multipoint, synth_stealthy, ImpactClass,
        StealthConfig, Termination,
    };

    fn profile() -> PlantProfile {
        PlantProfile::stage1_default()
    }

    fn expert_fixture() -> ExpertCatalog {
        stage1_expert_catalog()
    }

    fn full_catalog() -> Vec<AttackPattern> {
        let rules = stage1_design_rules();
        let p = profile();
        let direct = synth_direct(&rules, &p).unwrap();
        let stealthy = synth_stealthy(&direct, &p, &StealthConfig::default());
        let multi = synth_multipoint(&rules, &p).unwrap();
        let mut all = direct;
        all.extend(stealthy);
        all.extend(multi);
        all
    }

    #[test]
    fn all_nine_expert_entries_are_replicated() {
        let report = match_patterns(&full_catalog(), &expert_fixture(), &profile());
        assert!(report.missed.is_empty(), "missed {:?}", report.missed);
        assert_eq!(report.counts.replicated, 9);
        // no double counting
        let ids: BTreeSet<&String> = report.replicated.iter().map(|(_, p)| p).collect();
        assert_eq!(ids.len(), 9);
        assert_eq!(report.counts.generated, report.counts.replicated + report.counts.novel);
    }

    #[test]
    fn matching_agrees_with_exhaustive_all_pairs_search() {
        let catalog = full_catalog();
        let expert = expert_fixture();
        let p = profile();
        let report = match_patterns(&catalog, &expert, &p);
        // independent oracle: for each expert entry, scan every pattern
        for entry in &expert.entries {
            let candidates: Vec<&AttackPattern> = catalog
                .iter()
                .filter(|g| {
                    classify(g, &p) == Some(entry.class)
                        && g.target_tags()
                            == entry.targets.iter().cloned().collect::<BTreeSet<_>>()
                                .into_iter()
                                .collect::<Vec<_>>()
                })
                .collect();
            let replicated = report.replicated.iter().any(|(r, _)| r == &entry.ref_id);
            assert_eq!(!candidates.is_empty(), replicated, "entry {}", entry.ref_id);
            if let Some((_, pid)) = report.replicated.iter().find(|(r, _)| r == &entry.ref_id) {
                assert!(candidates.iter().any(|c| &c.id == pid));
            }
        }
    }

    #[test]
    fn expert_catalog_rejects_duplicate_refs() {
        let mut cat = expert_fixture();
        cat.entries.push(cat.entries[0].clone());
        let err = ExpertCatalog::from_json(&cat.to_json()).unwrap_err();
        assert!(matches!(err, CompareError::BadExpertCatalog(_)));
    }

    #[test]
    fn summarize_counts_validated_by_class() {
        let catalog = full_catalog();
        let expert = expert_fixture();
        let p = profile();
        let comparison = match_patterns(&catalog, &expert, &p);
        let results: Vec<ValidationOutcome> = catalog
            .iter()
            .enumerate()
            .map(|(i, _)| {
                if i % 2 == 0 {
                    ValidationOutcome::Validated { t: 100 + i as u64 }
                } else {
                    ValidationOutcome::NotValidated { reason: "budget exhausted".to_string() }
                }
            })
            .collect();
        let report = summarize(&comparison, &catalog, &results).unwrap();
        assert_eq!(report.counts.validated, catalog.len().div_ceil(2));
        let total: usize = report.per_class.values().map(|s| s.generated).sum();
        assert_eq!(total, catalog.len());
        let vtotal: usize = report.per_class.values().map(|s| s.validated).sum();
        assert_eq!(vtotal, report.counts.validated);
        assert_eq!(report.validated_patterns.len(), report.counts.validated);
        let md = report.to_markdown();
        assert!(md.contains("| direct |"));
        assert!(md.contains("| A36 |"));

        let err = summarize(&comparison, &catalog, &results[1..]).unwrap_err();
        assert!(matches!(err, CompareError::LengthMismatch { .. }));
    }

    #[test]
    fn telemetry_probes_have_no_expert_class() {
        let p = profile();
        let pat = AttackPattern {
            id: "x".to_string(),
            class: crate::synth::AttackClass::Stealthy,
            manipulations: vec![(
                SignalTag::new("LIT101").unwrap(),
                Manipulation::Delay { lag_s: 2 },
            )],
            start_s: 300,
            termination: Termination::MaxDuration { t_s: 100 },
            declared_impact: ImpactClass::Underflow,
            provenance: vec![],
            expert_ref: None,
        };
        assert_eq!(classify(&pat, &p), None);
    }
}
