//! Python bindings for the attackforge pipeline. Everything crosses the
//! boundary as strings (CSV traces, rule text, JSON reports) so the module
//! stays trivially versionable; structured access happens in Python.

use attackforge_core::compare::{match_patterns, stage1_expert_catalog, ExpertCatalog};
use attackforge_core::dsl::{
    self, parse_rules_file, render_invariant, rules_to_text, Provenance,
};
use attackforge_core::miner::{mine_range_invariants, mine_threshold_rules, MinerConfig};
use attackforge_core::pipeline::{run_pipeline, PipelineConfig};
use attackforge_core::sim::{
    self, assess_impact, gen_normal_trace, stage1_registry, PlantProfile, ValidationOutcome,
};
use attackforge_core::synth::{
    synth_direct, synth_multipoint, synth_stealthy, Catalog, StealthConfig,
};
use attackforge_core::validator::{validate as validate_rs, ValidationConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::path::PathBuf;

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_csv(csv: &str) -> PyResult<attackforge_core::signal::Trace> {
    attackforge_core::signal::load_trace(csv.as_bytes(), stage1_registry()).map_err(err)
}

fn parse_rules(text: &str) -> PyResult<Vec<dsl::Invariant>> {
    let (accepted, _rejected) = parse_rules_file(text, &stage1_registry(), Provenance::DesignDoc);
    if accepted.is_empty() {
        return Err(PyValueError::new_err("no parseable rules"));
    }
    Ok(accepted)
}

/// Parse a single rule and return its canonical rendering.
#[pyfunction]
fn canonicalize_rule(text: &str) -> PyResult<String> {
    let inv = dsl::parse_invariant(text, &stage1_registry(), Provenance::DesignDoc).map_err(err)?;
    Ok(render_invariant(&inv))
}

/// Attack-free closed-loop run, returned as a historian CSV.
#[pyfunction]
#[pyo3(signature = (horizon_s, seed = 42))]
fn gen_normal_csv(horizon_s: u64, seed: u64) -> String {
    gen_normal_trace(&PlantProfile::stage1_default(), horizon_s, seed).emit_csv()
}

/// Mine threshold and range invariants from a historian CSV; one rule per line.
#[pyfunction]
fn mine_rules(trace_csv: &str) -> PyResult<String> {
    let trace = load_csv(trace_csv)?;
    let cfg = MinerConfig::default();
    let mut rules = mine_threshold_rules(&trace, &cfg).map_err(err)?;
    rules.extend(mine_range_invariants(&trace, &cfg).map_err(err)?);
    Ok(rules_to_text(&rules))
}

/// Cross-validate rule text against a historian CSV; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (rules_text, trace_csv, k = 5))]
fn validate_rules(rules_text: &str, trace_csv: &str, k: usize) -> PyResult<String> {
    let rules = parse_rules(rules_text)?;
    let trace = load_csv(trace_csv)?;
    let cfg = ValidationConfig { k, ..ValidationConfig::default() };
    Ok(validate_rs(&rules, &trace, &cfg).map_err(err)?.to_json())
}

/// Synthesize attack patterns from rule text; returns the catalog JSON.
#[pyfunction]
#[pyo3(signature = (rules_text, stealthy = true, multipoint = true))]
fn synth_catalog(rules_text: &str, stealthy: bool, multipoint: bool) -> PyResult<String> {
    let rules = parse_rules(rules_text)?;
    let profile = PlantProfile::stage1_default();
    let mut patterns = synth_direct(&rules, &profile).map_err(err)?;
    if stealthy {
        patterns.extend(synth_stealthy(&patterns, &profile, &StealthConfig::default()));
    }
    if multipoint {
        patterns.extend(synth_multipoint(&rules, &profile).map_err(err)?);
    }
    Ok(Catalog::new(patterns).to_json())
}

/// Simulate every pattern in a catalog JSON; returns per-pattern verdicts as
/// JSON: a list of [pattern_id, outcome] pairs.
#[pyfunction]
#[pyo3(signature = (catalog_json, budget_s = 7200, seed = 42))]
fn simulate_catalog(catalog_json: &str, budget_s: u64, seed: u64) -> PyResult<String> {
    let catalog = Catalog::from_json(catalog_json).map_err(err)?;
    let profile = PlantProfile::stage1_default();
    let mut results: Vec<(String, ValidationOutcome)> = Vec::new();
    for p in &catalog.patterns {
        let horizon = p.start_s + budget_s;
        let outcome = sim::run(&profile, Some(p), horizon, seed).map_err(err)?;
        results.push((p.id.clone(), assess_impact(&outcome, p.declared_impact, horizon)));
    }
    serde_json::to_string_pretty(&results).map_err(err)
}

/// Match a catalog JSON against an expert catalog (built-in list when None);
/// returns the comparison JSON.
#[pyfunction]
#[pyo3(signature = (catalog_json, expert_json = None))]
fn compare_catalog(catalog_json: &str, expert_json: Option<&str>) -> PyResult<String> {
    let catalog = Catalog::from_json(catalog_json).map_err(err)?;
    let expert = match expert_json {
        Some(text) => ExpertCatalog::from_json(text).map_err(err)?,
        None => stage1_expert_catalog(),
    };
    Ok(match_patterns(&catalog.patterns, &expert, &PlantProfile::stage1_default()).to_json())
}

/// Run the full pipeline into `out_dir`; returns the final report JSON.
#[pyfunction]
#[pyo3(signature = (out_dir, horizon_s = 86_400, seed = 42))]
fn pipeline(out_dir: &str, horizon_s: u64, seed: u64) -> PyResult<String> {
    let cfg = PipelineConfig {
        horizon_s,
        seed,
        ..PipelineConfig::new(PathBuf::from(out_dir))
    };
    let summary = run_pipeline(&cfg).map_err(err)?;
    Ok(summary.report.to_json())
}

#[pymodule]
fn attackforge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(canonicalize_rule, m)?)?;
    m.add_function(wrap_pyfunction!(gen_normal_csv, m)?)?;
    m.add_function(wrap_pyfunction!(mine_rules, m)?)?;
    m.add_function(wrap_pyfunction!(validate_rules, m)?)?;
    m.add_function(wrap_pyfunction!(synth_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(compare_catalog, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
