//! Shared fixture: the whole pipeline driven through the CLI entry point.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use unconv_cli::manifest::sha256_hex;
use unconv_cli::{parse_args, run, CliError, Outcome};

pub const CONFIG: &str = r#"master_seed = 20240611
output_dir = "out"

[input]
corpus = "out/ingest"
snapshots = "out/snapshots"
scores = "out/scores"

[filter]
min_year = 2002
max_year = 2003

[null_model]
replicates = 100

[scoring]
aggregation = "min"
timing = "prior"

[[recipes]]
name = "grant_interaction"
kind = "glm"
spec = { family = "logistic", response = "granted", cluster = "examiner_id", terms = [
  { kind = "continuous", column = "women_majority" },
  { kind = "continuous", column = "p_atypical" },
  { kind = "interaction", left = "women_majority", right = "p_atypical" },
  { kind = "fixed_effect", column = "year" },
  { kind = "fixed_effect", column = "cpc_class" },
  { kind = "fixed_effect", column = "team_size" },
] }

[[recipes]]
name = "grant_three_way"
kind = "glm"
spec = { family = "logistic", response = "granted", terms = [
  { kind = "categorical", column = "three_way", reference = "men_majority" },
  { kind = "continuous", column = "p_atypical" },
  { kind = "interaction", left = "three_way", right = "p_atypical" },
  { kind = "fixed_effect", column = "year" },
] }
margins = { group = "three_way", x = "p_atypical", grid = [-2.0, 0.0, 2.0, 4.0] }

[[recipes]]
name = "claims"
kind = "glm"
spec = { family = "linear", response = "claims_delta", terms = [
  { kind = "continuous", column = "p_atypical" },
  { kind = "continuous", column = "women_majority" },
  { kind = "fixed_effect", column = "cpc_class" },
] }

[[recipes]]
name = "grant_scatter"
kind = "binned_scatter"
x = "p_atypical"
y = "granted"

[[recipes]]
name = "grant_grid"
kind = "quantile_grid"
x1 = "p_atypical"
x2 = "examiner_experience"
y = "granted"

[[recipes]]
name = "reversals"
kind = "reversal"

[[recipes]]
name = "survivorship"
kind = "survivorship"
"#;

pub const LOST_VALUE: &str = "n_apps = 33761\nrate_men = 0.7055\nrate_women = 0.6392\nper_patent_value = 104703.5\n";
pub const REASSIGNMENT: &str = "rate_high = 0.704\nrate_low = 0.443\nreassigned_fraction = 0.5\n";
pub const OVER_ASSIGNMENT: &str = "corpus = \"out/ingest\"\n";

pub fn cli(args: &[&str]) -> Result<Outcome, CliError> {
    let mut full = vec!["unconv"];
    full.extend_from_slice(args);
    run(parse_args(full)?)
}

fn s(p: &Path) -> String {
    p.to_str().expect("utf-8 path").to_string()
}

/// Writes the config and parameter files under `root`.
pub fn prepare(root: &Path, synth_params: &str) -> PathBuf {
    fs::create_dir_all(root).unwrap();
    fs::write(root.join("run.toml"), CONFIG).unwrap();
    fs::write(root.join("synth.toml"), synth_params).unwrap();
    fs::write(root.join("lost_value.toml"), LOST_VALUE).unwrap();
    fs::write(root.join("reassignment.toml"), REASSIGNMENT).unwrap();
    fs::write(root.join("over_assignment.toml"), OVER_ASSIGNMENT).unwrap();
    root.join("run.toml")
}

/// synth -> ingest -> network -> score -> analyze -> estimate (x3).
pub fn run_pipeline(root: &Path, threads: usize, synth_params: &str, seed: u64) -> Result<(), CliError> {
    let cfg = s(&prepare(root, synth_params));
    let t = threads.to_string();
    let seed = seed.to_string();
    let raw = s(&root.join("raw"));
    cli(&["--threads", &t, "synth", "--params", &s(&root.join("synth.toml")), "--seed", &seed, "--out", &raw])?;
    cli(&[
        "--threads",
        &t,
        "ingest",
        "--in",
        &s(&root.join("raw/corpus.jsonl")),
        "--out",
        &s(&root.join("out/ingest")),
    ])?;
    cli(&["--threads", &t, "--config", &cfg, "network", "--years", "2001:2002"])?;
    cli(&["--threads", &t, "--config", &cfg, "score"])?;
    cli(&["--threads", &t, "--config", &cfg, "analyze", "--recipe", "all"])?;
    for (formula, params) in [
        ("lost_value", "lost_value.toml"),
        ("reassignment_gain", "reassignment.toml"),
        ("over_assignment", "over_assignment.toml"),
    ] {
        cli(&["--threads", &t, "--config", &cfg, "estimate", "--formula", formula, "--params", &s(&root.join(params))])?;
    }
    Ok(())
}

/// sha256 of every file under `root`, keyed by relative path.
pub fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, sha256_hex(&fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
