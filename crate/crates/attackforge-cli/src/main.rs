//! `attackforge`: mine control invariants from historian data, validate them,
//! synthesize attack patterns, and check their impact on a closed-loop plant
//! simulator. Each subcommand runs standalone on the previous stage's files;
//! `pipeline` chains them all.

use attackforge_core::compare::{match_patterns, stage1_expert_catalog, summarize, ExpertCatalog};
use attackforge_core::dsl::{parse_rules_file, rules_to_json, rules_to_text, Provenance};
use attackforge_core::miner::{
    mine_range_invariants_with_notices, mine_threshold_rules_with_notices, MinerConfig,
};
use attackforge_core::pipeline::{run_pipeline, PipelineConfig};
use attackforge_core::proposer::ProposerConfig;
use attackforge_core::signal::load_trace;
use attackforge_core::sim::{
    assess_impact, gen_normal_trace, run, stage1_registry, PlantProfile, ValidationOutcome,
};
use attackforge_core::synth::{
    synth_direct, synth_multipoint, synth_stealthy, Catalog, StealthConfig,
};
use attackforge_core::validator::{validate, ValidationConfig};
use clap::{Args, Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "attackforge", version, about = "Invariant mining and attack synthesis for ICS historian data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ProfileArg {
    /// Plant profile JSON; built-in Stage-1 profile when omitted.
    #[arg(long)]
    profile: Option<PathBuf>,
}

impl ProfileArg {
    fn load(&self) -> Result<PlantProfile, String> {
        match &self.profile {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                PlantProfile::from_json(&text).map_err(|e| e.to_string())
            }
            None => Ok(PlantProfile::stage1_default()),
        }
    }
}

#[derive(Args)]
struct ValidationArgs {
    /// Number of cross-validation folds.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Minimum antecedent occurrences before a verdict is attempted.
    #[arg(long, default_value_t = 10)]
    min_support: usize,
    /// Tolerated per-fold violation rate.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Consequent latency allowance, in samples.
    #[arg(long, default_value_t = 2)]
    grace: usize,
}

impl ValidationArgs {
    fn config(&self) -> ValidationConfig {
        ValidationConfig {
            k: self.k,
            min_support: self.min_support,
            epsilon: self.epsilon,
            grace: self.grace,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole workflow: trace, mining, validation, synthesis,
    /// simulation, comparison, report.
    Pipeline {
        #[command(flatten)]
        profile: ProfileArg,
        /// Output directory for all artifacts.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Normal-trace length to generate, seconds (ignored with --trace).
        #[arg(long, default_value_t = 86_400)]
        horizon: u64,
        /// Historian CSV to analyze instead of generating one.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Design-document rules file; built-in Stage-1 set when omitted.
        #[arg(long)]
        design_rules: Option<PathBuf>,
        /// Expert attack catalog JSON; built-in Stage-1 list when omitted.
        #[arg(long)]
        expert: Option<PathBuf>,
        /// Per-attack impact budget, seconds after onset.
        #[arg(long, default_value_t = 7_200)]
        budget: u64,
        #[command(flatten)]
        validation: ValidationArgs,
        /// Ask the configured LLM endpoint for extra rule proposals
        /// (reads ATTACKLLM_API_URL / ATTACKLLM_API_KEY / ATTACKLLM_MODEL).
        /// This is the only flag that touches the network.
        #[arg(long, conflicts_with = "llm_fixture")]
        llm: bool,
        /// Use a canned proposal transcript instead of a live endpoint.
        #[arg(long)]
        llm_fixture: Option<PathBuf>,
    },
    /// Generate a normal-operations historian trace.
    GenNormal {
        #[command(flatten)]
        profile: ProfileArg,
        /// Trace length, seconds.
        #[arg(long)]
        horizon: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output CSV path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine threshold and range invariants from a historian trace.
    Mine {
        /// Historian CSV (attack-free).
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 10)]
        min_support: usize,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// Slack added to mined thresholds, signal units.
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        #[arg(long, default_value_t = 2)]
        grace: usize,
        /// Emit structured JSON instead of rule text.
        #[arg(long)]
        json: bool,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate a rules file against a historian trace.
    Validate {
        /// Rules file, one rule per line.
        #[arg(long)]
        rules: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        validation: ValidationArgs,
        /// JSON report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the human-readable table here.
        #[arg(long)]
        md: Option<PathBuf>,
    },
    /// Synthesize attack patterns from a rules file.
    Synth {
        #[arg(long)]
        rules: PathBuf,
        #[command(flatten)]
        profile: ProfileArg,
        /// Also emit stealthy variants.
        #[arg(long)]
        stealthy: bool,
        /// Also emit multi-point patterns.
        #[arg(long)]
        multipoint: bool,
        /// Catalog JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate every pattern in a catalog and assess declared impacts.
    Simulate {
        #[arg(long)]
        catalog: PathBuf,
        #[command(flatten)]
        profile: ProfileArg,
        /// Impact budget, seconds after attack onset.
        #[arg(long, default_value_t = 7_200)]
        budget: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Directory for per-attack trace CSVs and results.json.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Match a generated catalog against an expert reference list.
    Compare {
        #[arg(long)]
        catalog: PathBuf,
        /// Expert catalog JSON; built-in Stage-1 list when omitted.
        #[arg(long)]
        expert: Option<PathBuf>,
        #[command(flatten)]
        profile: ProfileArg,
        /// Comparison JSON path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: &Option<PathBuf>, contents: &str) -> Result<(), String> {
    match out {
        Some(p) => fs::write(p, contents).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn read_trace(path: &PathBuf) -> Result<attackforge_core::signal::Trace, String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    load_trace(file, stage1_registry()).map_err(|e| e.to_string())
}

fn read_rules(path: &PathBuf) -> Result<Vec<attackforge_core::dsl::Invariant>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (accepted, rejected) = parse_rules_file(&text, &stage1_registry(), Provenance::DesignDoc);
    for (line, raw, e) in &rejected {
        eprintln!("warning: {}:{line}: {e}: {raw}", path.display());
    }
    if accepted.is_empty() {
        return Err(format!("{}: no parseable rules", path.display()));
    }
    Ok(accepted)
}

fn run_command(cmd: Command) -> Result<(), String> {
    match cmd {
        Command::Pipeline {
            profile,
            out,
            seed,
            horizon,
            trace,
            design_rules,
            expert,
            budget,
            validation,
            llm,
            llm_fixture,
        } => {
            let llm_cfg = if llm {
                Some(ProposerConfig::from_env().map_err(|e| e.to_string())?)
            } else {
                llm_fixture.map(ProposerConfig::offline)
            };
            let cfg = PipelineConfig {
                seed,
                horizon_s: horizon,
                trace_path: trace,
                profile_path: profile.profile,
                design_rules_path: design_rules,
                expert_path: expert,
                validation: validation.config(),
                budget_s: budget,
                llm: llm_cfg,
                ..PipelineConfig::new(out)
            };
            let summary = run_pipeline(&cfg).map_err(|e| e.to_string())?;
            let c = summary.report.counts;
            println!(
                "pipeline complete: {} patterns generated, {} validated, {}/{} expert entries replicated, {} novel",
                c.generated, c.validated, c.replicated, c.expert, c.novel
            );
            println!("artifacts in {}", cfg.out_dir.display());
            Ok(())
        }
        Command::GenNormal { profile, horizon, seed, out } => {
            let trace = gen_normal_trace(&profile.load()?, horizon, seed);
            emit(&out, &trace.emit_csv())
        }
        Command::Mine { trace, min_support, epsilon, margin, grace, json, out } => {
            let trace = read_trace(&trace)?;
            let cfg = MinerConfig {
                min_support,
                max_violation_rate: epsilon,
                threshold_margin: margin,
                grace,
            };
            let (mut rules, mut notices) =
                mine_threshold_rules_with_notices(&trace, &cfg).map_err(|e| e.to_string())?;
            let (ranges, range_notices) =
                mine_range_invariants_with_notices(&trace, &cfg).map_err(|e| e.to_string())?;
            rules.extend(ranges);
            notices.extend(range_notices);
            for n in &notices {
                eprintln!("notice: {n:?}");
            }
            let text = if json { rules_to_json(&rules) } else { rules_to_text(&rules) };
            emit(&out, &text)
        }
        Command::Validate { rules, trace, validation, out, md } => {
            let invs = read_rules(&rules)?;
            let trace = read_trace(&trace)?;
            let report = validate(&invs, &trace, &validation.config()).map_err(|e| e.to_string())?;
            if let Some(md_path) = &md {
                fs::write(md_path, report.to_markdown())
                    .map_err(|e| format!("{}: {e}", md_path.display()))?;
            }
            emit(&out, &report.to_json())
        }
        Command::Synth { rules, profile, stealthy, multipoint, out } => {
            let invs = read_rules(&rules)?;
            let profile = profile.load()?;
            let mut patterns = synth_direct(&invs, &profile).map_err(|e| e.to_string())?;
            if stealthy {
                let variants = synth_stealthy(&patterns, &profile, &StealthConfig::default());
                patterns.extend(variants);
            }
            if multipoint {
                patterns.extend(synth_multipoint(&invs, &profile).map_err(|e| e.to_string())?);
            }
            emit(&out, &Catalog::new(patterns).to_json())
        }
        Command::Simulate { catalog, profile, budget, seed, out_dir } => {
            let profile = profile.load()?;
            let text =
                fs::read_to_string(&catalog).map_err(|e| format!("{}: {e}", catalog.display()))?;
            let catalog = Catalog::from_json(&text).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out_dir).map_err(|e| e.to_string())?;
            let mut results: Vec<(String, ValidationOutcome)> = Vec::new();
            for p in &catalog.patterns {
                let horizon = p.start_s + budget;
                let outcome =
                    run(&profile, Some(p), horizon, seed).map_err(|e| e.to_string())?;
                let verdict = assess_impact(&outcome, p.declared_impact, horizon);
                let csv_path = out_dir.join(format!("{}.csv", p.id));
                fs::write(&csv_path, outcome.trace.emit_csv()).map_err(|e| e.to_string())?;
                results.push((p.id.clone(), verdict));
            }
            let validated = results.iter().filter(|(_, v)| v.is_validated()).count();
            let json = serde_json::to_string_pretty(&results).expect("results serialization");
            fs::write(out_dir.join("results.json"), json).map_err(|e| e.to_string())?;
            println!("{validated}/{} patterns reached their declared impact", results.len());
            Ok(())
        }
        Command::Compare { catalog, expert, profile, out } => {
            let profile = profile.load()?;
            let text =
                fs::read_to_string(&catalog).map_err(|e| format!("{}: {e}", catalog.display()))?;
            let catalog = Catalog::from_json(&text).map_err(|e| e.to_string())?;
            let expert = match &expert {
                Some(p) => {
                    let text =
                        fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                    ExpertCatalog::from_json(&text).map_err(|e| e.to_string())?
                }
                None => stage1_expert_catalog(),
            };
            let comparison = match_patterns(&catalog.patterns, &expert, &profile);
            // impact results are simulate's job; report counts without them
            let results = vec![
                ValidationOutcome::NotValidated { reason: "not simulated".to_string() };
                catalog.patterns.len()
            ];
            let report =
                summarize(&comparison, &catalog.patterns, &results).map_err(|e| e.to_string())?;
            eprintln!(
                "{}/{} expert entries replicated, {} missed",
                report.counts.replicated,
                report.counts.expert,
                comparison.missed.len()
            );
            emit(&out, &comparison.to_json())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
