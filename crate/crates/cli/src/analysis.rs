//! The per-application analysis frame and the table recipes run on it.
//!
//! One row per scored application with a defined `p_atypical`, in score
//! order. Numeric columns: `granted`, `p_atypical`, `L`, `unconventional`,
//! `women_majority`, `prop_women`, `all_women`, `all_men`,
//! `woman_first_inventor`, `woman_examiner`, `examiner_experience`,
//! `inventor_experience`, `claims_delta`, `claims_delta_pct`,
//! `latency_days`, `citations_8yr`, `maintenance_fee_paid`, `credit_hours`,
//! `big_entity`, `appealed`, `reversed`. Categorical columns: `app_id`,
//! `year`, `cpc_section`, `cpc_class`, `focal_subclass`, `team_size`,
//! `three_way`, `examiner_id`, `examiner_tercile`.

use std::collections::{BTreeSet, HashMap};

use unconv_core::corpus::PatentApplication;
use unconv_core::gender::{infer_gender, infer_team, Gender, GenderDict, ThreeWay};
use unconv_core::metrics::{
    assign_terciles, claims_delta, experience, grant_latency, reversal_rates, survivorship_index, ExperienceIndex,
    ExperienceRecord, ReversalObs, Subject, Tercile,
};
use unconv_core::scoring::ScoreResult;
use unconv_core::stats::{binned_scatter, fit_glm, margins, quantile_grid, Frame};

use crate::config::{GenderSettings, Recipe, RecipeBody};
use crate::manifest::ArtifactWriter;
use crate::CliError;

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn tercile_label(t: Tercile) -> &'static str {
    match t {
        Tercile::Low => "low",
        Tercile::Mid => "mid",
        Tercile::High => "high",
    }
}

fn three_way_label(t: ThreeWay) -> &'static str {
    match t {
        ThreeWay::MenMajority => "men_majority",
        ThreeWay::WomenMajority => "women_majority",
        ThreeWay::Mixed5050 => "mixed_50_50",
    }
}

#[derive(Default)]
struct Columns {
    numeric: Vec<(&'static str, Vec<Option<f64>>)>,
    labels: Vec<(&'static str, Vec<Option<String>>)>,
}

impl Columns {
    fn num(&mut self, name: &'static str) -> usize {
        self.numeric.push((name, Vec::new()));
        self.numeric.len() - 1
    }

    fn cat(&mut self, name: &'static str) -> usize {
        self.labels.push((name, Vec::new()));
        self.labels.len() - 1
    }
}

/// Joins scores to their records. `corpus` is the full corpus and feeds the
/// experience counts; scores whose record is missing are an input error.
pub fn analysis_frame(
    corpus: &[PatentApplication],
    scores: &[ScoreResult],
    dict: &GenderDict,
    gender: &GenderSettings,
) -> Result<Frame, CliError> {
    let by_id: HashMap<&str, &PatentApplication> = corpus.iter().map(|r| (r.app_id.as_str(), r)).collect();
    let index = ExperienceIndex::build(corpus);
    let thr = gender.threshold;

    let mut c = Columns::default();
    let granted = c.num("granted");
    let p = c.num("p_atypical");
    let l = c.num("L");
    let unconv = c.num("unconventional");
    let wm = c.num("women_majority");
    let pw = c.num("prop_women");
    let aw = c.num("all_women");
    let am = c.num("all_men");
    let wfi = c.num("woman_first_inventor");
    let we = c.num("woman_examiner");
    let ee = c.num("examiner_experience");
    let ie = c.num("inventor_experience");
    let cd = c.num("claims_delta");
    let cdp = c.num("claims_delta_pct");
    let lat = c.num("latency_days");
    let cit = c.num("citations_8yr");
    let mf = c.num("maintenance_fee_paid");
    let ch = c.num("credit_hours");
    let be = c.num("big_entity");
    let ap = c.num("appealed");
    let rv = c.num("reversed");
    let id = c.cat("app_id");
    let yr = c.cat("year");
    let sec = c.cat("cpc_section");
    let cls = c.cat("cpc_class");
    let sub = c.cat("focal_subclass");
    let ts = c.cat("team_size");
    let tw = c.cat("three_way");
    let ex = c.cat("examiner_id");

    let mut exp_records: Vec<ExperienceRecord> = Vec::new();
    let mut exp_rows: Vec<usize> = Vec::new();
    let mut row = 0usize;
    for s in scores {
        let Some(pa) = s.p_atypical else { continue };
        let r = *by_id
            .get(s.app_id.as_str())
            .ok_or_else(|| CliError::input(format!("score for unknown application {:?}", s.app_id)))?;
        let team = infer_team(&r.inventor_names, dict, thr).ok();
        let majority_ok = team
            .as_ref()
            .filter(|t| t.classifiable() && t.unknown_fraction() <= gender.max_unknown_fraction);

        let n = &mut c.numeric;
        n[granted].1.push(r.granted().map(flag));
        n[p].1.push(Some(pa));
        n[l].1.push(s.l);
        n[unconv].1.push(Some(flag(pa > 0.0)));
        n[wm].1.push(majority_ok.and_then(|t| t.women_majority).map(flag));
        n[pw].1.push(majority_ok.and_then(|t| t.prop_women));
        n[aw].1.push(team.as_ref().map(|t| flag(t.all_women)));
        n[am].1.push(team.as_ref().map(|t| flag(t.all_men)));
        n[wfi].1.push(team.as_ref().and_then(|t| match t.first_inventor_gender.value {
            Gender::Unknown => None,
            g => Some(flag(g == Gender::Woman)),
        }));
        n[we].1.push(r.examiner_name.as_deref().and_then(|name| match infer_gender(name, dict, thr).value {
            Gender::Unknown => None,
            g => Some(flag(g == Gender::Woman)),
        }));
        let exp = r
            .examiner_id
            .as_deref()
            .map(|e| experience(&index, Subject::Examiner(e), r.filing_date));
        n[ee].1.push(exp.as_ref().map(|e| e.count));
        if let Some(e) = exp {
            exp_records.push(e);
            exp_rows.push(row);
        }
        n[ie].1.push(
            (!r.inventor_names.is_empty())
                .then(|| experience(&index, Subject::InventorTeam(&r.inventor_names), r.filing_date).count),
        );
        let delta = match (r.n_claims_app, r.n_claims_grant) {
            (Some(a), Some(g)) => claims_delta(a, g).ok(),
            _ => None,
        };
        n[cd].1.push(delta.map(|d| d.0 as f64));
        n[cdp].1.push(delta.map(|d| d.1));
        n[lat].1.push(r.grant_date.and_then(|g| grant_latency(r.filing_date, g).ok()).map(|d| d as f64));
        n[cit].1.push(r.citation_count_8yr.map(f64::from));
        n[mf].1.push(r.maintenance_fee_paid.map(flag));
        n[ch].1.push(r.credit_hours);
        n[be].1.push(r.big_entity.map(flag));
        n[ap].1.push(r.appealed.map(flag));
        n[rv].1.push(r.reversed.map(flag));

        let focal = r.focal();
        let t = &mut c.labels;
        t[id].1.push(Some(r.app_id.clone()));
        t[yr].1.push(Some(r.filing_year().to_string()));
        t[sec].1.push(Some(focal.section().to_string()));
        t[cls].1.push(Some(focal.class().to_string()));
        t[sub].1.push(Some(focal.subclass().to_string()));
        t[ts].1.push(team.as_ref().map(|t| t.team_size_capped.to_string()));
        t[tw].1.push(majority_ok.and_then(|t| t.three_way).map(|w| three_way_label(w).to_string()));
        t[ex].1.push(r.examiner_id.clone());
        row += 1;
    }

    let mut terciles = vec![None; row];
    if exp_records.len() >= 3 {
        assign_terciles(&mut exp_records).map_err(|e| CliError::analysis(e.to_string()))?;
        for (rec, &i) in exp_records.iter().zip(&exp_rows) {
            terciles[i] = rec.tercile.map(|t| tercile_label(t).to_string());
        }
    }

    let mut frame = Frame::new();
    for (name, values) in c.numeric {
        frame = frame.with_numeric(name, values).map_err(|e| CliError::internal(e.to_string()))?;
    }
    for (name, values) in c.labels {
        frame = frame.with_categorical(name, values).map_err(|e| CliError::internal(e.to_string()))?;
    }
    frame
        .with_categorical("examiner_tercile", terciles)
        .map_err(|e| CliError::internal(e.to_string()))
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::internal(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::internal(e.to_string()))
}

/// Complete-case vectors for the named numeric columns.
fn complete(frame: &Frame, names: &[&str]) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = frame.complete_rows(names).map_err(|e| CliError::analysis(e.to_string()))?;
    names
        .iter()
        .map(|n| {
            let col = frame.numeric(n).map_err(|e| CliError::analysis(e.to_string()))?;
            Ok(rows.iter().map(|&i| col[i].expect("complete row")).collect())
        })
        .collect()
}

/// Runs one recipe and writes its artifacts, named after the recipe.
pub fn run_recipe(
    recipe: &Recipe,
    frame: &Frame,
    corpus: &[PatentApplication],
    dict: &GenderDict,
    gender: &GenderSettings,
    out: &mut ArtifactWriter,
) -> Result<(), CliError> {
    let name = &recipe.name;
    let err = |e: &dyn std::fmt::Display| CliError::analysis(format!("recipe {name}: {e}"));
    match &recipe.body {
        RecipeBody::Glm { spec, margins: margin_spec } => {
            let fit = fit_glm(spec, frame).map_err(|e| err(&e))?;
            let mut table = Vec::new();
            fit.write_table(&mut table).map_err(|e| err(&e))?;
            out.write(&format!("{name}_coefficients.csv"), &table)?;
            out.write_json(&format!("{name}_fit.json"), &fit.metadata_json())?;
            if let Some(ms) = margin_spec {
                let rows = margins(&fit, ms).map_err(|e| err(&e))?;
                let bytes = csv_bytes(
                    &["x", "level", "reference", "predicted", "predicted_reference", "difference", "se", "lower", "upper"],
                    rows.iter().map(|r| {
                        vec![
                            r.x.to_string(),
                            r.level.clone(),
                            r.reference.clone(),
                            r.predicted.to_string(),
                            r.predicted_reference.to_string(),
                            r.difference.to_string(),
                            r.se.to_string(),
                            r.lower.to_string(),
                            r.upper.to_string(),
                        ]
                    }),
                )?;
                out.write(&format!("{name}_margins.csv"), &bytes)?;
            }
        }
        RecipeBody::BinnedScatter { x, y, bins } => {
            let v = complete(frame, &[x, y])?;
            let rows = binned_scatter(&v[0], &v[1], *bins).map_err(|e| err(&e))?;
            let bytes = csv_bytes(
                &["bin", "x_mean", "y_mean", "count"],
                rows.iter().map(|r| {
                    vec![r.bin.to_string(), r.x_mean.to_string(), r.y_mean.to_string(), r.count.to_string()]
                }),
            )?;
            out.write(&format!("{name}.csv"), &bytes)?;
        }
        RecipeBody::QuantileGrid { x1, x2, y, q } => {
            let v = complete(frame, &[x1, x2, y])?;
            let g = quantile_grid(&v[0], &v[1], &v[2], *q).map_err(|e| err(&e))?;
            let bytes = csv_bytes(
                &["x1_quantile", "x2_quantile", "mean", "count"],
                (0..g.q).flat_map(|r| {
                    let g = &g;
                    (0..g.q).map(move |c| {
                        vec![r.to_string(), c.to_string(), fmt(g.cell(r, c)), g.counts[r * g.q + c].to_string()]
                    })
                }),
            )?;
            out.write(&format!("{name}.csv"), &bytes)?;
            out.write_json(
                &format!("{name}_cuts.json"),
                &serde_json::json!({ "x1": g.cuts_x1, "x2": g.cuts_x2 }),
            )?;
        }
        RecipeBody::Reversal => {
            let terc = frame.column("examiner_tercile").map_err(|e| err(&e))?;
            let p = frame.numeric("p_atypical").map_err(|e| err(&e))?;
            let appealed = frame.numeric("appealed").map_err(|e| err(&e))?;
            let reversed = frame.numeric("reversed").map_err(|e| err(&e))?;
            let rows: Vec<ReversalObs> = (0..frame.n_rows())
                .filter_map(|i| {
                    let bin = match terc.label(i)?.as_str() {
                        "low" => 0,
                        "mid" => 1,
                        _ => 2,
                    };
                    Some(ReversalObs {
                        experience_bin: bin,
                        p_atypical: p[i]?,
                        appealed: appealed[i].map(|v| v == 1.0),
                        reversed: reversed[i].map(|v| v == 1.0),
                    })
                })
                .collect();
            let table = reversal_rates(&rows, 3);
            let bytes = csv_bytes(
                &["experience_tercile", "unconventional", "appealed", "reversed", "rate"],
                table.cells.iter().map(|c| {
                    vec![
                        tercile_label(Tercile::from_bin(c.experience_bin)).to_string(),
                        c.unconventional.to_string(),
                        c.appealed.to_string(),
                        c.reversed.to_string(),
                        fmt(c.rate),
                    ]
                }),
            )?;
            out.write(&format!("{name}.csv"), &bytes)?;
        }
        RecipeBody::Survivorship { classes } => {
            let classes: Vec<String> = match classes {
                Some(c) => c.clone(),
                None => corpus
                    .iter()
                    .map(|r| r.focal().class().to_string())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect(),
            };
            let bytes = csv_bytes(
                &["cpc_class", "survivorship_index"],
                classes.iter().map(|cls| {
                    let v = survivorship_index(corpus, cls, dict, gender.threshold).ok();
                    vec![cls.clone(), fmt(v)]
                }),
            )?;
            out.write(&format!("{name}.csv"), &bytes)?;
        }
    }
    Ok(())
}
