//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails. Seeds are fixed constants.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use unconv_cli::analysis::analysis_frame;
use unconv_cli::config::GenderSettings;
use unconv_core::cooccur::{build_cumulative, build_network, merge_networks, CodePair, CooccurrenceNetwork};
use unconv_core::corpus::{filter_scoreable, Country, CorpusFilter, CpcCode, PatentApplication, Status};
use unconv_core::gender::GenderDict;
use unconv_core::metrics::{assignment_observations, lost_value, over_assignment, reassignment_gain};
use unconv_core::nullmodel::{exact_null_small, null_stats, Moments, NullModel, PairStats, ZSnapshot};
use unconv_core::rng::{split_seed, stream};
use unconv_core::scoring::{aggregate, score_against, score_corpus, Aggregation, SnapshotSet, TimingPolicy};
use unconv_core::stats::{binned_scatter, fit_glm, grid_correlation, quantile_grid, Family, Frame, GlmSpec};
use unconv_core::synth::{synth_corpus, SynthParams};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn code(s: &str) -> CpcCode {
    CpcCode::parse(s).expect("valid code")
}

/// Subclass `i` of an 8-section, 99-class, 26-letter code space.
fn nth_code(i: usize) -> CpcCode {
    let section = (b'A' + (i % 8) as u8) as char;
    let class = 1 + (i / 8) % 99;
    let letter = (b'A' + ((i / 8) / 99 % 26) as u8) as char;
    code(&format!("{section}{class:02}{letter}"))
}

fn network_of(patents: &[Vec<CpcCode>]) -> CooccurrenceNetwork {
    let mut n = CooccurrenceNetwork::empty(2000);
    for p in patents {
        n.add_patent(p);
    }
    n
}

fn random_patent(r: &mut ChaCha8Rng, n_codes: usize, k: usize, zipf: bool) -> Vec<CpcCode> {
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let i = if zipf {
            // Inverse-CDF draw from a 1/x density on [1, n_codes].
            ((n_codes as f64).powf(r.random::<f64>()) as usize).saturating_sub(1).min(n_codes - 1)
        } else {
            r.random_range(0..n_codes)
        };
        let c = nth_code(i);
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

fn moments(map: &HashMap<CodePair, Moments>, p: &CodePair) -> Moments {
    map.get(p).copied().unwrap_or(Moments { mu: 0.0, sigma: 0.0 })
}

fn criterion_1() -> Outcome {
    const R: usize = 10_000;
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(0xC1);
    let (mut pairs, mut mu_fail, mut sigma_fail, mut sigma_checked) = (0, Vec::new(), Vec::new(), 0);
    let mut worst_sigma: f64 = 0.0;
    for net_i in 0..25 {
        let n_codes = r.random_range(3..=6);
        let target = r.random_range(2..=5);
        let mut patents = Vec::new();
        let mut tokens = 0;
        while patents.len() < target {
            let k = r.random_range(2..=n_codes.min(4));
            if tokens + k > 12 {
                break;
            }
            tokens += k;
            patents.push(random_patent(&mut r, n_codes, k, false));
        }
        let net = network_of(&patents);
        let exact = exact_null_small(&net).map_err(|e| e.to_string())?;
        let sampled = null_stats(&net, R, split_seed(0xC1, net_i)).map_err(|e| e.to_string())?;
        let mut keys: Vec<CodePair> = exact.keys().chain(sampled.pairs.keys()).copied().collect();
        keys.sort();
        keys.dedup();
        for p in keys {
            let (e, s) = (moments(&exact, &p), moments(&sampled.pairs, &p));
            pairs += 1;
            if (s.mu - e.mu).abs() > 3.0 * e.sigma / (R as f64).sqrt() + 1e-12 {
                mu_fail.push(format!("net {net_i} {p:?}: mu {} vs {}", s.mu, e.mu));
            }
            if e.sigma > 0.0 {
                sigma_checked += 1;
                let rel = (s.sigma - e.sigma).abs() / e.sigma;
                worst_sigma = worst_sigma.max(rel);
                if rel > 0.10 {
                    sigma_fail.push(format!("net {net_i} {p:?}: sigma {} vs {}", s.sigma, e.sigma));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mu_fail.is_empty() && sigma_fail.is_empty() && secs < 60.0,
        format!(
            "25 networks, {pairs} pairs, {sigma_checked} sigma checks, worst sigma rel err {worst_sigma:.4}, {secs:.1}s; mu failures {mu_fail:?}; sigma failures {sigma_fail:?}"
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(0xC2);
    let mut violations = 0usize;
    let mut replicates = 0usize;
    let mut max_tokens = 0;
    for net_i in 0..10u64 {
        // Half small (exact-shuffle path), half large (repair path).
        let (n_patents, n_codes) = if net_i % 2 == 0 { (40, 12) } else { (400, 60) };
        let patents: Vec<Vec<CpcCode>> = (0..n_patents)
            .map(|_| {
                let k = r.random_range(2..=5);
                random_patent(&mut r, n_codes, k, true)
            })
            .collect();
        let net = network_of(&patents);
        max_tokens = max_tokens.max(net.total_tokens());
        let model = NullModel::new(&net).map_err(|e| e.to_string())?;
        violations += (0..1000u64)
            .into_par_iter()
            .map(|i| {
                let rep = model.replicate_patents(split_seed(0xC2 + net_i, i)).expect("replicate");
                let dup = rep.iter().any(|p| {
                    let mut s = p.clone();
                    s.sort();
                    s.windows(2).any(|w| w[0] == w[1])
                });
                let rn = network_of(&rep);
                usize::from(
                    dup || rn.code_usage != net.code_usage
                        || rn.slot_counts != net.slot_counts
                        || rn.n_patents != net.n_patents
                        || rn.total_pair_count() != net.total_pair_count(),
                )
            })
            .sum::<usize>();
        replicates += 1000;
    }
    check(
        violations == 0,
        format!("{replicates} replicates over 10 networks (up to {max_tokens} tokens), {violations} violations"),
    )
}

fn light_record(i: usize, r: &mut ChaCha8Rng) -> PatentApplication {
    let year = 1995 + r.random_range(0..10);
    let date = NaiveDate::from_ymd_opt(year, 1, 1).unwrap() + chrono::Duration::days(r.random_range(0..365));
    let k = r.random_range(1..=5);
    PatentApplication {
        app_id: format!("L{i:07}"),
        country: Country::US,
        filing_date: date,
        grant_date: None,
        status: Status::Pending,
        cpc_codes: random_patent(r, 500, k, true),
        inventor_names: Vec::new(),
        examiner_id: None,
        examiner_name: None,
        big_entity: None,
        n_claims_app: None,
        n_claims_grant: None,
        citation_count_8yr: None,
        maintenance_fee_paid: None,
        credit_hours: None,
        appealed: None,
        reversed: None,
    }
}

fn saved(n: &CooccurrenceNetwork) -> Vec<u8> {
    let mut b = Vec::new();
    n.save(&mut b).unwrap();
    b
}

fn criterion_3() -> Outcome {
    let records: Vec<PatentApplication> = (0..1_000_000)
        .into_par_iter()
        .map(|i| light_record(i, &mut stream(0xC3, i as u64)))
        .collect();
    let (first, last) = (1995, 2004);
    let start = Instant::now();
    let cum = build_cumulative(&records, first, last).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();

    let mut mismatches = Vec::new();
    let upto: Vec<PatentApplication> = records.iter().filter(|r| r.filing_year() <= first).cloned().collect();
    if build_network(&upto, first).map_err(|e| e.to_string())? != cum[0] {
        mismatches.push(first);
    }
    for t in first + 1..=last {
        let layer: Vec<PatentApplication> = records.iter().filter(|r| r.filing_year() == t).cloned().collect();
        let layer = build_network(&layer, t).map_err(|e| e.to_string())?;
        let merged = merge_networks(&cum[(t - first - 1) as usize], &layer);
        if merged != cum[(t - first) as usize] {
            mismatches.push(t);
        }
    }

    let reference: Vec<Vec<u8>> = cum.iter().map(saved).collect();
    let mut thread_diffs = Vec::new();
    for threads in [1, 2, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let other = pool.install(|| build_cumulative(&records, first, last)).map_err(|e| e.to_string())?;
        if other.iter().map(saved).collect::<Vec<_>>() != reference {
            thread_diffs.push(threads);
        }
    }
    let last_net = cum.last().unwrap();
    check(
        mismatches.is_empty() && thread_diffs.is_empty() && secs < 300.0,
        format!(
            "1e6 records, {} networks, {} pairs in final year, build {secs:.2}s; merge mismatches {mismatches:?}; thread-count diffs {thread_diffs:?}",
            cum.len(),
            last_net.pair_counts.len()
        ),
    )
}

fn snapshot_for(focal: CpcCode, others: &[CpcCode], z: &[f64]) -> ZSnapshot {
    let pairs = others
        .iter()
        .zip(z)
        .map(|(&c, &z)| {
            (
                CodePair::new(focal, c).unwrap(),
                PairStats {
                    observed: 1,
                    mu: 1.0,
                    sigma: 1.0,
                    z: Some(z),
                },
            )
        })
        .collect();
    ZSnapshot {
        year_t: 2000,
        replicates: 100,
        master_seed: 0,
        pairs,
    }
}

fn scoring_record(codes: &[CpcCode]) -> PatentApplication {
    let mut r = light_record(0, &mut ChaCha8Rng::seed_from_u64(0));
    r.cpc_codes = codes.to_vec();
    r
}

fn criterion_4() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(0xC4);
    let codes: Vec<CpcCode> = (0..12).map(nth_code).collect();
    let mut order_fail = 0;
    let mut negation_fail = 0;
    for _ in 0..10_000 {
        let k = r.random_range(1..=11);
        let z: Vec<f64> = (0..k)
            .map(|_| {
                let v: f64 = r.random_range(-30.0..30.0);
                if r.random::<f64>() < 0.2 {
                    v.round()
                } else {
                    v
                }
            })
            .collect();
        let snap = snapshot_for(codes[0], &codes[1..=k], &z);
        let rec = scoring_record(&codes[..=k]);
        let mut p = HashMap::new();
        for agg in [Aggregation::Min, Aggregation::Mean, Aggregation::Median] {
            let s = score_against(&rec, &snap, agg).map_err(|e| e.to_string())?;
            let (l, pa) = (s.l.unwrap(), s.p_atypical.unwrap());
            if pa.to_bits() != (-l).to_bits() || aggregate(&z, agg) != Some(l) {
                negation_fail += 1;
            }
            p.insert(agg, pa);
        }
        if p[&Aggregation::Min] < p[&Aggregation::Mean].max(p[&Aggregation::Median]) {
            order_fail += 1;
        }
    }
    let anchor_snap = snapshot_for(codes[0], &codes[1..4], &[3.2, -25.9, 11.0]);
    let anchor = score_against(&scoring_record(&codes[..4]), &anchor_snap, Aggregation::Min)
        .map_err(|e| e.to_string())?
        .p_atypical
        .unwrap();
    check(
        order_fail == 0 && negation_fail == 0 && anchor == 25.9,
        format!("10000 z-sets: ordering violations {order_fail}, negation violations {negation_fail}; anchor p_atypical {anchor}"),
    )
}

fn criterion_5() -> Outcome {
    let lv = lost_value(33761, 0.7055, 0.6392, 104703.5).map_err(|e| e.to_string())?;
    let millions = (lv.lost_dollars / 1e5).round() / 10.0;
    let g1 = reassignment_gain(0.704, 0.443, 0.5).map_err(|e| e.to_string())?;
    let g2 = reassignment_gain(0.818, 0.371, 1.0).map_err(|e| e.to_string())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    common::prepare(dir.path(), "");
    let report = common::cli(&[
        "estimate",
        "--formula",
        "lost_value",
        "--params",
        dir.path().join("lost_value.toml").to_str().unwrap(),
    ])
    .map_err(|e| e.to_string())?
    .report
    .unwrap();
    let cli_ok = report["outputs"]["lost_patents"] == 2238
        && (report["outputs"]["lost_dollars"].as_f64().unwrap() / 1e5).round() / 10.0 == 234.3;

    check(
        lv.lost_patents == 2238
            && millions == 234.3
            && lv.lost_dollars > 234e6
            && (g1 - 0.1305).abs() < 1e-12
            && (g1 * 100.0).round() == 13.0
            && (g2 - 0.447).abs() < 1e-12
            && (g2 * 1000.0).round() / 10.0 == 44.7
            && cli_ok,
        format!(
            "lost_value = ({}, ${:.1}M from {}); gains {g1} and {g2}; CLI report ok: {cli_ok}",
            lv.lost_patents, millions, lv.lost_dollars
        ),
    )
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn saturated_logit_error() -> Result<f64, String> {
    // (g, x, successes, trials)
    let cells = [(0, 0, 37, 200), (1, 0, 61, 150), (0, 1, 88, 120), (1, 1, 20, 90)];
    let (mut g, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for &(gi, xi, s, n) in &cells {
        for k in 0..n {
            g.push(f64::from(gi));
            x.push(f64::from(xi));
            y.push(f64::from(u8::from(k < s)));
        }
    }
    let frame = Frame::new()
        .with_values("g", &g)
        .and_then(|f| f.with_values("x", &x))
        .and_then(|f| f.with_values("y", &y))
        .map_err(|e| e.to_string())?;
    let spec = GlmSpec::new(Family::Logistic, "y").continuous("g").continuous("x").interaction("g", "x");
    let fit = fit_glm(&spec, &frame).map_err(|e| e.to_string())?;
    let l = |i: usize| logit(f64::from(cells[i].2) / f64::from(cells[i].3));
    let expected = [
        ("(intercept)", l(0)),
        ("g", l(1) - l(0)),
        ("x", l(2) - l(0)),
        ("g:x", l(3) - l(1) - l(2) + l(0)),
    ];
    Ok(expected
        .iter()
        .map(|(n, v)| (fit.coefficient(n).unwrap_or(f64::NAN) - v).abs())
        .fold(0.0, f64::max))
}

fn noiseless_linear_error() -> Result<f64, String> {
    let mut r = ChaCha8Rng::seed_from_u64(0xC6);
    let n = 2000;
    let x1: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.random_range(0.0..10.0)).collect();
    let grp: Vec<usize> = (0..n).map(|_| r.random_range(0..4)).collect();
    let effects = [0.0, 0.8, -1.1, 2.5];
    let y: Vec<f64> = (0..n).map(|i| 1.5 + 2.0 * x1[i] - 0.7 * x2[i] + effects[grp[i]]).collect();
    let labels: Vec<String> = grp.iter().map(|g| format!("g{g}")).collect();
    let frame = Frame::new()
        .with_values("x1", &x1)
        .and_then(|f| f.with_values("x2", &x2))
        .and_then(|f| f.with_values("y", &y))
        .and_then(|f| f.with_labels("grp", &labels))
        .map_err(|e| e.to_string())?;
    let spec = GlmSpec::new(Family::Linear, "y")
        .continuous("x1")
        .continuous("x2")
        .categorical("grp", Some("g0"));
    let fit = fit_glm(&spec, &frame).map_err(|e| e.to_string())?;
    let expected = [
        ("(intercept)", 1.5),
        ("x1", 2.0),
        ("x2", -0.7),
        ("grp[g1]", 0.8),
        ("grp[g2]", -1.1),
        ("grp[g3]", 2.5),
    ];
    Ok(expected
        .iter()
        .map(|(n, v)| (fit.coefficient(n).unwrap_or(f64::NAN) - v).abs())
        .fold(0.0, f64::max))
}

/// Interaction coefficient of the grant model on one synthetic corpus,
/// scored through the full network, null-model and scoring stages.
fn planted_interaction(seed: u64) -> Result<(f64, Option<f64>), String> {
    let params = SynthParams {
        n_applications: 50_000,
        ..SynthParams::default()
    };
    let corpus = synth_corpus(&params, seed).map_err(|e| e.to_string())?;
    let filter = CorpusFilter::new(i32::MIN, i32::MAX).unwrap();
    let records = filter_scoreable(&corpus.records, &filter);
    let nets = build_cumulative(&records, 2001, 2002).map_err(|e| e.to_string())?;
    let mut set = SnapshotSet::new();
    for n in &nets {
        set.insert(ZSnapshot::compute(n, 100, seed).map_err(|e| e.to_string())?);
    }
    let scored: Vec<PatentApplication> = records.iter().filter(|r| r.filing_year() >= 2002).cloned().collect();
    let scores = score_corpus(&scored, &set, TimingPolicy::Prior, Aggregation::Min).map_err(|e| e.to_string())?;
    let frame = analysis_frame(&corpus.records, &scores, &GenderDict::bundled(), &GenderSettings::default())
        .map_err(|e| e.to_string())?;
    let spec = GlmSpec::new(Family::Logistic, "granted")
        .continuous("women_majority")
        .continuous("p_atypical")
        .interaction("women_majority", "p_atypical")
        .fixed_effect("year")
        .fixed_effect("cpc_class")
        .fixed_effect("team_size");
    let fit = fit_glm(&spec, &frame).map_err(|e| e.to_string())?;
    let j = fit.index("women_majority:p_atypical").ok_or("interaction dropped")?;
    Ok((fit.coefficients[j], fit.z(j)))
}

fn criterion_6() -> Outcome {
    let sat = saturated_logit_error()?;
    let lin = noiseless_linear_error()?;
    let results: Vec<(u64, f64, Option<f64>)> = (1..=20u64)
        .map(|seed| planted_interaction(seed).map(|(b, z)| (seed, b, z)))
        .collect::<Result<_, _>>()?;
    let negative = results.iter().filter(|r| r.1 < 0.0).count();
    let zs: Vec<String> = results.iter().map(|r| format!("{:.1}", r.2.unwrap_or(f64::NAN))).collect();
    check(
        sat < 1e-8 && lin < 1e-10 && negative >= 19,
        format!(
            "saturated 2x2 max err {sat:.2e}; noiseless linear max err {lin:.2e}; interaction negative in {negative}/20 seeds (z: {})",
            zs.join(" ")
        ),
    )
}

/// Dense HC1 sandwich at the fitted coefficients.
fn dense_hc1(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>, family: Family) -> Vec<f64> {
    let (n, k) = x.shape();
    let eta = x * beta;
    let (w, r): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| match family {
            Family::Logistic => {
                let mu = 1.0 / (1.0 + (-eta[i]).exp());
                (mu * (1.0 - mu), y[i] - mu)
            }
            Family::Linear => (1.0, y[i] - eta[i]),
        })
        .unzip();
    let xtwx = x.transpose() * DMatrix::from_diagonal(&DVector::from_vec(w)) * x;
    let bread = xtwx.try_inverse().expect("invertible");
    let r2 = DVector::from_iterator(n, r.iter().map(|v| v * v));
    let meat = x.transpose() * DMatrix::from_diagonal(&r2) * x;
    let v = &bread * meat * &bread * (n as f64 / (n - k) as f64);
    (0..k).map(|j| v[(j, j)].sqrt()).collect()
}

fn criterion_7() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(0xC7);
    let n = 600;
    let x1: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..3.0)).collect();
    let grp: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let labels: Vec<String> = grp.iter().map(|g| format!("g{g}")).collect();
    let y_lin: Vec<f64> = (0..n)
        .map(|i| 0.5 + x1[i] - 0.3 * x2[i] + 0.4 * grp[i] as f64 + (1.0 + x1[i].abs()) * r.random_range(-1.0..1.0))
        .collect();
    let y_log: Vec<f64> = (0..n)
        .map(|i| {
            let p = 1.0 / (1.0 + (-(0.2 + 0.9 * x1[i] - 0.5 * x2[i])).exp());
            f64::from(u8::from(r.random::<f64>() < p))
        })
        .collect();
    let frame = Frame::new()
        .with_values("x1", &x1)
        .and_then(|f| f.with_values("x2", &x2))
        .and_then(|f| f.with_values("y_lin", &y_lin))
        .and_then(|f| f.with_values("y_log", &y_log))
        .and_then(|f| f.with_labels("grp", &labels))
        .and_then(|f| f.with_labels("id", &ids))
        .map_err(|e| e.to_string())?;

    let columns: Vec<(&str, Vec<f64>)> = vec![
        ("(intercept)", vec![1.0; n]),
        ("x1", x1.clone()),
        ("x2", x2.clone()),
        ("grp[g1]", grp.iter().map(|&g| f64::from(u8::from(g == 1))).collect()),
        ("grp[g2]", grp.iter().map(|&g| f64::from(u8::from(g == 2))).collect()),
    ];
    let x = DMatrix::from_fn(n, columns.len(), |i, j| columns[j].1[i]);

    let mut worst: f64 = 0.0;
    for (family, response, y) in [(Family::Linear, "y_lin", &y_lin), (Family::Logistic, "y_log", &y_log)] {
        let spec = GlmSpec::new(family, response)
            .continuous("x1")
            .continuous("x2")
            .categorical("grp", Some("g0"))
            .clustered("id");
        let fit = fit_glm(&spec, &frame).map_err(|e| e.to_string())?;
        let idx: Vec<usize> = columns.iter().map(|(name, _)| fit.index(name).expect("term")).collect();
        let beta = DVector::from_iterator(idx.len(), idx.iter().map(|&j| fit.coefficients[j]));
        let hc1 = dense_hc1(&x, y, &beta, family);
        let robust = fit.robust_se.as_ref().ok_or("no robust errors")?;
        for (k, &j) in idx.iter().enumerate() {
            let se = robust[j].ok_or("missing robust error")?;
            worst = worst.max((se - hc1[k]).abs());
        }
    }
    check(worst < 1e-10, format!("max |cluster-robust - HC1| over linear and logistic fits: {worst:.2e}"))
}

fn criterion_8() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(0xC8);
    let mut spread_fail = 0;
    for _ in 0..1000 {
        let n = r.random_range(85..5000);
        let bins = r.random_range(1..=85);
        let x: Vec<f64> = (0..n).map(|_| (r.random_range(0..50) as f64) * 0.5).collect();
        let rows = binned_scatter(&x, &x, bins).map_err(|e| e.to_string())?;
        let max = rows.iter().map(|b| b.count).max().unwrap();
        let min = rows.iter().map(|b| b.count).min().unwrap();
        if max - min > 1 || rows.iter().map(|b| b.count).sum::<usize>() != n {
            spread_fail += 1;
        }
    }

    let n = 20_000;
    let x1: Vec<f64> = (0..n).map(|_| r.random()).collect();
    let x2: Vec<f64> = (0..n).map(|_| r.random()).collect();
    let y: Vec<f64> = (0..n).map(|i| x1[i] * x2[i] + r.random::<f64>()).collect();
    let g = quantile_grid(&x1, &x2, &y, 10).map_err(|e| e.to_string())?;
    let self_r = grid_correlation(&g, &g).unwrap_or(f64::NAN);

    // Bin b of 85 equal bins of n uniforms holds order statistics
    // b*m+1 ..= (b+1)*m, whose expectations are k/(n+1).
    let (bins, m) = (85usize, 1000usize);
    let n = bins * m;
    let u: Vec<f64> = (0..n).map(|_| r.random()).collect();
    let rows = binned_scatter(&u, &u, bins).map_err(|e| e.to_string())?;
    let mut worst_z: f64 = 0.0;
    for row in &rows {
        let lo = row.bin * m + 1;
        let expected = (lo..lo + m).map(|k| k as f64).sum::<f64>() / m as f64 / (n + 1) as f64;
        let sd = (expected * (1.0 - expected) / (n + 2) as f64).sqrt();
        worst_z = worst_z.max((row.x_mean - expected).abs() / sd);
    }
    check(
        spread_fail == 0 && (self_r - 1.0).abs() < 1e-12 && worst_z < 5.0,
        format!(
            "1000 random binnings with spread > 1: {spread_fail}; grid self-correlation {self_r}; order statistics worst |z| {worst_z:.2} over 85 bins"
        ),
    )
}

fn criterion_9() -> Outcome {
    let params = SynthParams {
        n_applications: 200_000,
        share_all_women: 0.5,
        share_all_men: 0.5,
        woman_examiner_logit: 0.0,
        ..SynthParams::default()
    };
    let corpus = synth_corpus(&params, 0xC9).map_err(|e| e.to_string())?;
    let obs = assignment_observations(&corpus.records, &GenderDict::bundled(), 0.5);
    let oa = over_assignment(&obs).map_err(|e| e.to_string())?;
    check(
        (oa.logit_based - 0.169).abs() <= 0.02,
        format!(
            "logit_based {:.4} (beta {:.4}, se {:.4}), ratio_based {:.4}, n {}",
            oa.logit_based,
            oa.beta,
            oa.beta_se.unwrap_or(f64::NAN),
            oa.ratio_based,
            oa.n_obs
        ),
    )
}

fn criterion_10() -> Outcome {
    let runs: Vec<(usize, tempfile::TempDir)> = [1usize, 1, 8]
        .into_iter()
        .map(|t| (t, tempfile::tempdir().unwrap()))
        .collect();
    let mut hashes: Vec<BTreeMap<String, String>> = Vec::new();
    for (threads, dir) in &runs {
        common::run_pipeline(dir.path(), *threads, "", 20240611).map_err(|e| e.to_string())?;
        hashes.push(common::tree_hashes(dir.path()));
    }
    let diff: Vec<&String> = hashes[0]
        .iter()
        .filter(|(k, v)| hashes[1].get(*k) != Some(v) || hashes[2].get(*k) != Some(v))
        .map(|(k, _)| k)
        .collect();
    check(
        diff.is_empty() && hashes[0].len() == hashes[1].len() && hashes[0].len() == hashes[2].len(),
        format!(
            "{} files compared across runs at 1, 1 and 8 threads; differing: {diff:?}",
            hashes[0].len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("null-model oracle", criterion_1),
        ("conservation", criterion_2),
        ("cumulativity and merge", criterion_3),
        ("scoring identities", criterion_4),
        ("estimator arithmetic", criterion_5),
        ("GLM correctness", criterion_6),
        ("cluster-robust errors", criterion_7),
        ("table constructions", criterion_8),
        ("over-assignment recovery", criterion_9),
        ("end-to-end determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {id} ({name}, {secs:.1}s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}, {secs:.1}s): {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
