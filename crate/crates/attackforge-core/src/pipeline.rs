//! The end-to-end workflow: historian data in, validated invariants,
//! attack catalog, empirical impact results and reports out.
//!
//! Every stage writes its artifact before the next stage starts, and a
//! `MANIFEST` records SHA-256 digests plus the last completed stage, so a
//! failed run leaves a usable partial record. All stages are deterministic
//! for a fixed seed and inputs, byte for byte.

use crate::compare::{match_patterns, stage1_expert_catalog, summarize, ExpertCatalog, PipelineReport};
use crate::dsl::{parse_rules_file, rules_to_text, Provenance};
use crate::miner::{
    merge_proposals, mine_range_invariants_with_notices, mine_threshold_rules_with_notices,
    MinerConfig,
};
use crate::proposer::{build_prompt, parse_proposals, propose, PromptContext, PromptKind, ProposalSet, ProposerConfig};
use crate::signal::load_trace;
use crate::sim::{assess_impact, gen_normal_trace, run, stage1_registry, PlantProfile, ValidationOutcome};
use crate::synth::{
    synth_direct, synth_multipoint, synth_stealthy, Catalog, StealthConfig,
    STAGE1_DESIGN_DOC,
};
use crate::validator::{filter_validated, validate, NotPassedReason, ValidationConfig, Verdict};
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Length of the generated normal-operations trace, seconds.
    pub horizon_s: u64,
    /// Load historian data from CSV instead of generating it.
    pub trace_path: Option<PathBuf>,
    pub profile_path: Option<PathBuf>,
    /// Design-document rules file; built-in Stage-1 set when absent.
    pub design_rules_path: Option<PathBuf>,
    /// Expert attack reference; built-in Stage-1 list when absent.
    pub expert_path: Option<PathBuf>,
    pub miner: MinerConfig,
    pub validation: ValidationConfig,
    pub stealth: StealthConfig,
    /// Per-attack impact budget, seconds after attack onset.
    pub budget_s: u64,
    /// LLM proposal source; None keeps the run fully offline.
    pub llm: Option<ProposerConfig>,
}

impl PipelineConfig {
    pub fn new(out_dir: PathBuf) -> Self {
        PipelineConfig {
            out_dir,
            seed: 42,
            horizon_s: 86_400,
            trace_path: None,
            profile_path: None,
            design_rules_path: None,
            expert_path: None,
            miner: MinerConfig::default(),
            validation: ValidationConfig::default(),
            stealth: StealthConfig::default(),
            budget_s: crate::synth::DEFAULT_BUDGET_S,
            llm: None,
        }
    }
}

#[derive(Debug, Error)]
#[error("pipeline stage {stage}: {message}")]
pub struct PipelineError {
    pub stage: &'static str,
    pub message: String,
}

fn err(stage: &'static str, e: impl std::fmt::Display) -> PipelineError {
    PipelineError { stage, message: e.to_string() }
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub report: PipelineReport,
    /// Artifact paths relative to the output directory, manifest order.
    pub artifacts: Vec<String>,
}

/// Artifact writer that keeps the manifest current after every file.
struct Workspace {
    out_dir: PathBuf,
    entries: Vec<(String, String)>,
    stage: &'static str,
}

impl Workspace {
    fn new(out_dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(out_dir.join("attacks")).map_err(|e| err("setup", e))?;
        Ok(Workspace { out_dir: out_dir.to_path_buf(), entries: Vec::new(), stage: "setup" })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), PipelineError> {
        let path = self.out_dir.join(rel);
        fs::write(&path, contents).map_err(|e| err(self.stage, format!("{rel}: {e}")))?;
        self.entries.push((rel.to_string(), crate::sha256_hex(contents.as_bytes())));
        self.flush_manifest()
    }

    fn flush_manifest(&self) -> Result<(), PipelineError> {
        let mut manifest = String::from("# attackforge pipeline manifest\n");
        manifest.push_str(&format!("# completed: {}\n", self.stage));
        let mut sorted = self.entries.clone();
        sorted.sort();
        for (rel, sha) in &sorted {
            manifest.push_str(&format!("{sha}  {rel}\n"));
        }
        fs::write(self.out_dir.join("MANIFEST"), manifest)
            .map_err(|e| err(self.stage, format!("MANIFEST: {e}")))
    }
}

/// Run the whole workflow. On error, artifacts written so far remain on
/// disk and the MANIFEST names the stage that completed last.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary, PipelineError> {
    let mut ws = Workspace::new(&cfg.out_dir)?;
    let registry = stage1_registry();

    // -- plant profile -------------------------------------------------
    ws.stage = "load-profile";
    let profile = match &cfg.profile_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| err("load-profile", e))?;
            PlantProfile::from_json(&text).map_err(|e| err("load-profile", e))?
        }
        None => PlantProfile::stage1_default(),
    };
    ws.write("profile.json", &profile.to_json())?;

    // -- historian data -------------------------------------------------
    ws.stage = "trace";
    let trace = match &cfg.trace_path {
        Some(p) => {
            let file = fs::File::open(p).map_err(|e| err("trace", e))?;
            load_trace(std::io::BufReader::new(file), registry.clone())
                .map_err(|e| err("trace", e))?
        }
        None => gen_normal_trace(&profile, cfg.horizon_s, cfg.seed),
    };
    ws.write("normal.csv", &trace.emit_csv())?;

    // -- rule sources ---------------------------------------------------
    ws.stage = "design-rules";
    let design_text = match &cfg.design_rules_path {
        Some(p) => fs::read_to_string(p).map_err(|e| err("design-rules", e))?,
        None => STAGE1_DESIGN_DOC.to_string(),
    };
    let (design_rules, design_rejected) =
        parse_rules_file(&design_text, &registry, Provenance::DesignDoc);
    if design_rules.is_empty() {
        return Err(err("design-rules", "no parseable rules"));
    }

    ws.stage = "mine";
    let (mined, mut notices) =
        mine_threshold_rules_with_notices(&trace, &cfg.miner).map_err(|e| err("mine", e))?;
    let (ranges, range_notices) =
        mine_range_invariants_with_notices(&trace, &cfg.miner).map_err(|e| err("mine", e))?;
    notices.extend(range_notices);

    ws.stage = "llm";
    let llm_rules = match &cfg.llm {
        Some(pcfg) => {
            let ctx = PromptContext {
                registry: &registry,
                known_rules: &design_rules,
                trace_digest: Some(format!("{} samples, {} signals", trace.len(), registry.specs().len())),
            };
            let prompt = build_prompt(PromptKind::InvariantExtraction, &ctx);
            let text = propose(pcfg, &prompt).map_err(|e| err("llm", e))?;
            match parse_proposals(PromptKind::InvariantExtraction, &text, &registry) {
                ProposalSet::Invariants { accepted, .. } => accepted,
                _ => unreachable!("invariant prompt kind"),
            }
        }
        None => Vec::new(),
    };

    ws.stage = "merge";
    let merged = merge_proposals(&[design_rules, mined, ranges, llm_rules]);
    ws.write("invariants.rules", &rules_to_text(&merged))?;

    // -- validation -----------------------------------------------------
    ws.stage = "validate";
    let report = validate(&merged, &trace, &cfg.validation).map_err(|e| err("validate", e))?;
    ws.write("validation.json", &report.to_json())?;
    let mut validation_md = report.to_markdown();
    if !design_rejected.is_empty() || !notices.is_empty() {
        validation_md.push_str("\n## Notes\n\n");
        for (line, text, e) in &design_rejected {
            validation_md.push_str(&format!("- design rules line {line} rejected ({e}): `{text}`\n"));
        }
        for n in &notices {
            validation_md.push_str(&format!("- miner: {n:?}\n"));
        }
    }
    ws.write("validation.md", &validation_md)?;

    ws.stage = "filter";
    let mut synth_input = filter_validated(&report, &merged).map_err(|e| err("filter", e))?;
    // alarm rules with no benign instances are exactly the ones worth
    // attacking; keep them on the synthesis path
    for (inv, rec) in merged.iter().zip(&report.records) {
        let no_instances = matches!(
            rec.verdict,
            Verdict::NotPassed { reason: NotPassedReason::NoInstances }
        );
        if no_instances && inv.is_alarm_rule() {
            synth_input.push(inv.clone());
        }
    }

    // -- synthesis ------------------------------------------------------
    ws.stage = "synth";
    let direct = synth_direct(&synth_input, &profile).map_err(|e| err("synth", e))?;
    let stealthy = synth_stealthy(&direct, &profile, &cfg.stealth);
    let multi = synth_multipoint(&synth_input, &profile).map_err(|e| err("synth", e))?;
    let mut patterns = direct;
    patterns.extend(stealthy);
    patterns.extend(multi);
    let catalog = Catalog::new(patterns);
    ws.write("catalog.json", &catalog.to_json())?;

    // -- empirical impact validation -------------------------------------
    ws.stage = "simulate";
    let mut results: Vec<ValidationOutcome> = Vec::with_capacity(catalog.patterns.len());
    for p in &catalog.patterns {
        let horizon = p.start_s + cfg.budget_s;
        let outcome = run(&profile, Some(p), horizon, cfg.seed).map_err(|e| err("simulate", e))?;
        results.push(assess_impact(&outcome, p.declared_impact, horizon));
        ws.write(&format!("attacks/{}.csv", p.id), &outcome.trace.emit_csv())?;
    }

    // -- expert comparison and report -------------------------------------
    ws.stage = "compare";
    let expert = match &cfg.expert_path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| err("compare", e))?;
            ExpertCatalog::from_json(&text).map_err(|e| err("compare", e))?
        }
        None => stage1_expert_catalog(),
    };
    let comparison = match_patterns(&catalog.patterns, &expert, &profile);
    ws.write("comparison.json", &comparison.to_json())?;

    ws.stage = "report";
    let pipeline_report =
        summarize(&comparison, &catalog.patterns, &results).map_err(|e| err("report", e))?;
    ws.write("report.md", &pipeline_report.to_markdown())?;
    ws.flush_manifest()?;

    let mut artifacts: Vec<String> = ws.entries.iter().map(|(rel, _)| rel.clone()).collect();
    artifacts.sort();
    Ok(PipelineSummary { report: pipeline_report, artifacts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{AttackClass, Manipulation};
    use std::io::Write as _;

    fn quick_cfg(dir: &Path) -> PipelineConfig {
        // six hours of data keeps every rule above min support while staying fast
        PipelineConfig { horizon_s: 21_600, ..PipelineConfig::new(dir.to_path_buf()) }
    }

    #[test]
    fn end_to_end_offline_run_produces_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let summary = run_pipeline(&quick_cfg(dir.path())).unwrap();
        for rel in [
            "profile.json",
            "normal.csv",
            "invariants.rules",
            "validation.json",
            "validation.md",
            "catalog.json",
            "comparison.json",
            "report.md",
            "MANIFEST",
        ] {
            assert!(dir.path().join(rel).exists(), "missing {rel}");
        }
        // manifest hashes match what's on disk
        let manifest = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
        assert!(manifest.contains("# completed: report"));
        for line in manifest.lines().filter(|l| !l.starts_with('#')) {
            let (sha, rel) = line.split_once("  ").unwrap();
            let bytes = fs::read(dir.path().join(rel)).unwrap();
            assert_eq!(sha, crate::sha256_hex(&bytes), "stale hash for {rel}");
        }
        // the report reflects a complete, expert-covering catalog
        let r = &summary.report;
        assert!(r.comparison.missed.is_empty(), "missed {:?}", r.comparison.missed);
        assert!(r.counts.generated >= 20);
        assert!(r.counts.validated > 0);
        // every direct pattern reached its declared impact
        let direct = r.per_class.get("direct").unwrap();
        assert_eq!(direct.validated, direct.generated);
        let multi = r.per_class.get("multi-point").unwrap();
        assert_eq!(multi.validated, multi.generated);
        // per-attack traces exist for each catalog entry
        let catalog = Catalog::from_json(
            &fs::read_to_string(dir.path().join("catalog.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(catalog.patterns.len(), r.counts.generated);
        for p in &catalog.patterns {
            assert!(dir.path().join(format!("attacks/{}.csv", p.id)).exists());
        }
    }

    #[test]
    fn pipeline_is_byte_deterministic() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let cfg1 = PipelineConfig { horizon_s: 12_000, ..PipelineConfig::new(d1.path().into()) };
        let cfg2 = PipelineConfig { horizon_s: 12_000, ..PipelineConfig::new(d2.path().into()) };
        run_pipeline(&cfg1).unwrap();
        run_pipeline(&cfg2).unwrap();
        let m1 = fs::read_to_string(d1.path().join("MANIFEST")).unwrap();
        let m2 = fs::read_to_string(d2.path().join("MANIFEST")).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn offline_llm_fixture_feeds_the_same_gates() {
        let dir = tempfile::tempdir().unwrap();
        let mut fixture = tempfile::NamedTempFile::new().unwrap();
        writeln!(fixture, "# proposed rules").unwrap();
        writeln!(fixture, "IF LIT301 > 1100mm THEN ALARM").unwrap();
        writeln!(fixture, "IF LIT101 < 500mm THEN MV101 = OPEN").unwrap();
        writeln!(fixture, "the rest of the behavior appears nominal").unwrap();
        let cfg = PipelineConfig {
            llm: Some(ProposerConfig::offline(fixture.path().to_path_buf())),
            ..quick_cfg(dir.path())
        };
        let summary = run_pipeline(&cfg).unwrap();
        // the novel alarm rule is NoInstances yet still drives synthesis
        let rules = fs::read_to_string(dir.path().join("invariants.rules")).unwrap();
        assert!(rules.contains("IF LIT301 > 1100mm THEN ALARM"));
        let catalog =
            Catalog::from_json(&fs::read_to_string(dir.path().join("catalog.json")).unwrap())
                .unwrap();
        assert!(catalog.patterns.iter().any(|p| {
            p.class == AttackClass::Direct
                && matches!(&p.manipulations[..],
                    [(t, Manipulation::SetConstant { value })]
                        if t.as_str() == "LIT301" && *value == 1111.0)
        }));
        assert!(summary.report.comparison.missed.is_empty());
    }

    #[test]
    fn failures_leave_a_manifest_naming_the_completed_stage() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            trace_path: Some(dir.path().join("does-not-exist.csv")),
            ..quick_cfg(dir.path())
        };
        let e = run_pipeline(&cfg).unwrap_err();
        assert_eq!(e.stage, "trace");
        let manifest = fs::read_to_string(dir.path().join("MANIFEST")).unwrap();
        assert!(manifest.contains("profile.json"));
    }
}
