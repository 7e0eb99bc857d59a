//! Seeded synthetic corpora with planted effects.
//!
//! Subclasses are grouped into communities that double as CPC classes. Each
//! application has a latent unconventionality `u ~ N(0, 1)`; every non-focal
//! code leaves the focal community with probability `sigmoid(a + b u)`, so
//! high-`u` applications carry rare cross-community pairs. Team gender,
//! examiner assignment (with all-women homophily), grant, appeal and reversal
//! outcomes are drawn from logits whose coefficients are the parameters
//! below. Record `i` draws from its own stream of the master seed, so output
//! is identical at any thread count.

use std::collections::HashMap;

use chrono::{Datelike, Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Country, CpcCode, PatentApplication, Status};
use crate::gender::{Gender, GenderDict};
use crate::rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic parameter: {0}")]
    Param(String),
}

const SECTIONS: &[u8] = b"ABCDEFGH";

const SURNAMES: &[&str] = &[
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Rodriguez", "Martinez",
    "Hernandez", "Lopez", "Gonzalez", "Wilson", "Anderson", "Thomas", "Taylor", "Moore", "Jackson", "Martin",
    "Lee", "Perez", "Thompson", "White", "Harris", "Sanchez", "Clark", "Ramirez", "Lewis", "Robinson",
    "Walker", "Young", "Allen", "King", "Wright", "Scott", "Torres", "Nguyen", "Hill", "Flores", "Green",
    "Adams", "Nelson", "Baker", "Hall", "Rivera", "Campbell", "Mitchell", "Carter", "Roberts", "Tanaka",
    "Suzuki", "Kim", "Park", "Chen", "Wang", "Singh", "Patel", "Schmidt", "Muller",
];

/// Stream indices for the pools, far above any record index.
const EXAMINER_STREAM: u64 = u64::MAX - 1;
const INVENTOR_STREAM: u64 = u64::MAX - 2;
const CLASS_STREAM: u64 = u64::MAX - 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub n_applications: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub n_communities: usize,
    pub codes_per_community: usize,
    pub zipf_exponent: f64,
    /// Weights for 2, 3, 4, ... distinct codes per application.
    pub code_count_weights: Vec<f64>,
    pub cross_intercept: f64,
    pub cross_slope: f64,
    /// Weights for team sizes 1, 2, 3, ...
    pub team_size_weights: Vec<f64>,
    pub share_all_women: f64,
    pub share_all_men: f64,
    pub initials_share: f64,
    pub inventors_per_application: f64,
    pub n_examiners: usize,
    pub woman_examiner_logit: f64,
    pub homophily_odds: f64,
    pub class_effect_sd: f64,
    pub grant_intercept: f64,
    pub grant_women: f64,
    pub grant_u: f64,
    pub grant_women_u: f64,
    /// Per year of examiner seniority.
    pub grant_seniority: f64,
    pub pending_share: f64,
    pub appeal_rate: f64,
    pub reversal_intercept: f64,
    /// Added to the reversal logit for junior examiners on `u > 0`.
    pub reversal_boost: f64,
    pub junior_years: f64,
    pub big_entity_share: f64,
    /// Minimum dictionary probability for names used in the pools.
    pub name_confidence: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_applications: 10_000,
            first_year: 2001,
            last_year: 2003,
            n_communities: 8,
            codes_per_community: 12,
            zipf_exponent: 1.0,
            code_count_weights: vec![0.35, 0.35, 0.2, 0.1],
            cross_intercept: -1.5,
            cross_slope: 1.2,
            team_size_weights: vec![0.3, 0.25, 0.2, 0.12, 0.08, 0.05],
            share_all_women: 0.2,
            share_all_men: 0.5,
            initials_share: 0.02,
            inventors_per_application: 0.6,
            n_examiners: 300,
            woman_examiner_logit: -0.85,
            homophily_odds: 1.169,
            class_effect_sd: 0.3,
            grant_intercept: 0.6,
            grant_women: -0.15,
            grant_u: -0.25,
            grant_women_u: -0.5,
            grant_seniority: 0.04,
            pending_share: 0.02,
            appeal_rate: 0.15,
            reversal_intercept: -1.0,
            reversal_boost: 1.2,
            junior_years: 4.0,
            big_entity_share: 0.6,
            name_confidence: 0.8,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Param(m.into()));
        if self.first_year > self.last_year {
            return bad("first_year after last_year");
        }
        if self.n_communities == 0 || self.n_communities > 8 * 9 {
            return bad("n_communities must be in 1..=72");
        }
        if self.codes_per_community == 0 || self.codes_per_community > 26 {
            return bad("codes_per_community must be in 1..=26");
        }
        let max_codes = self.code_count_weights.len() + 1;
        if max_codes > self.codes_per_community * self.n_communities {
            return bad("more codes per application than subclasses");
        }
        if self.code_count_weights.iter().all(|&w| w <= 0.0) || self.team_size_weights.iter().all(|&w| w <= 0.0) {
            return bad("weights need a positive entry");
        }
        let shares = [
            self.share_all_women,
            self.share_all_men,
            self.initials_share,
            self.pending_share,
            self.appeal_rate,
            self.big_entity_share,
        ];
        if shares.iter().any(|s| !(0.0..=1.0).contains(s)) || self.share_all_women + self.share_all_men > 1.0 {
            return bad("shares must lie in [0, 1]");
        }
        if self.homophily_odds <= 0.0 {
            return bad("homophily_odds must be positive");
        }
        if self.n_examiners < 2 {
            return bad("need at least two examiners");
        }
        Ok(())
    }

    fn subclass(&self, community: usize, k: usize) -> CpcCode {
        let class = 1 + community / SECTIONS.len();
        let raw = format!(
            "{}{:02}{}",
            SECTIONS[community % SECTIONS.len()] as char,
            class,
            (b'A' + k as u8) as char
        );
        CpcCode::parse(&raw).expect("generated code is valid")
    }
}

/// Records in filing order, with each record's latent unconventionality.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub records: Vec<PatentApplication>,
    pub latent_u: Vec<f64>,
}

struct Examiner {
    id: String,
    name: String,
    woman: bool,
    start: NaiveDate,
}

struct Pools {
    women_inventors: Vec<String>,
    men_inventors: Vec<String>,
    examiners: Vec<Examiner>,
    women_examiners: Vec<usize>,
    men_examiners: Vec<usize>,
    assign_effect: Vec<f64>,
    grant_effect: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn year_start(y: i32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, 1, 1).expect("valid year")
}

fn random_date(rng: &mut ChaCha8Rng, first_year: i32, last_year: i32) -> NaiveDate {
    let start = year_start(first_year);
    let days = (year_start(last_year + 1) - start).num_days();
    start + Duration::days(rng.random_range(0..days))
}

fn build_pools(p: &SynthParams, seed: u64) -> Pools {
    let dict = GenderDict::bundled();
    let (mut women_first, mut men_first) = (Vec::new(), Vec::new());
    for (name, g, prob) in dict.sorted_entries() {
        if prob < p.name_confidence {
            continue;
        }
        let cap = capitalize(name);
        match g {
            Gender::Woman => women_first.push(cap),
            Gender::Man => men_first.push(cap),
            Gender::Unknown => {}
        }
    }

    let mut r = rng::stream(seed, INVENTOR_STREAM);
    let n_inv = ((p.n_applications as f64 * p.inventors_per_application) as usize).max(20);
    let person = |r: &mut ChaCha8Rng, firsts: &[String]| {
        format!("{} {}", firsts.choose(r).expect("names"), SURNAMES.choose(r).expect("surnames"))
    };
    let women_inventors = (0..n_inv / 2).map(|_| person(&mut r, &women_first)).collect();
    let men_inventors = (0..n_inv - n_inv / 2).map(|_| person(&mut r, &men_first)).collect();

    let mut r = rng::stream(seed, EXAMINER_STREAM);
    let p_woman = sigmoid(p.woman_examiner_logit);
    let mut examiners = Vec::with_capacity(p.n_examiners);
    for i in 0..p.n_examiners {
        // Alternate the first two so both genders are always present.
        let woman = match i {
            0 => true,
            1 => false,
            _ => r.random::<f64>() < p_woman,
        };
        let earliest = if woman { p.first_year - 6 } else { p.first_year - 12 };
        let start = random_date(&mut r, earliest, p.last_year.max(earliest));
        let name = person(&mut r, if woman { &women_first } else { &men_first });
        examiners.push(Examiner {
            id: format!("EX{i:05}"),
            name,
            woman,
            start,
        });
    }
    let women_examiners = (0..examiners.len()).filter(|&i| examiners[i].woman).collect();
    let men_examiners = (0..examiners.len()).filter(|&i| !examiners[i].woman).collect();

    let mut r = rng::stream(seed, CLASS_STREAM);
    let normal = Normal::new(0.0, p.class_effect_sd.max(0.0)).expect("valid sd");
    let assign_effect = (0..p.n_communities).map(|_| normal.sample(&mut r)).collect();
    let grant_effect = (0..p.n_communities).map(|_| normal.sample(&mut r) * 0.7).collect();

    Pools {
        women_inventors,
        men_inventors,
        examiners,
        women_examiners,
        men_examiners,
        assign_effect,
        grant_effect,
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum TeamType {
    AllWomen,
    AllMen,
    Mixed,
}

struct Draw {
    record: PatentApplication,
    u: f64,
}

fn draw_record(p: &SynthParams, pools: &Pools, seed: u64, index: usize) -> Draw {
    let mut r = rng::stream(seed, index as u64);
    let standard = Normal::new(0.0, 1.0).expect("unit normal");
    let u: f64 = standard.sample(&mut r);
    let filing = random_date(&mut r, p.first_year, p.last_year);

    // Codes.
    let zipf: Vec<f64> = (1..=p.codes_per_community)
        .map(|k| 1.0 / (k as f64).powf(p.zipf_exponent))
        .collect();
    let within = WeightedIndex::new(&zipf).expect("positive weights");
    let n_codes = 2 + WeightedIndex::new(&p.code_count_weights).expect("weights").sample(&mut r);
    let home = r.random_range(0..p.n_communities);
    let p_cross = sigmoid(p.cross_intercept + p.cross_slope * u);
    let mut codes = vec![p.subclass(home, within.sample(&mut r))];
    while codes.len() < n_codes {
        let community = if p.n_communities > 1 && r.random::<f64>() < p_cross {
            let c = r.random_range(0..p.n_communities - 1);
            if c >= home {
                c + 1
            } else {
                c
            }
        } else {
            home
        };
        let c = p.subclass(community, within.sample(&mut r));
        if !codes.contains(&c) {
            codes.push(c);
        }
    }

    // Team.
    let mut size = 1 + WeightedIndex::new(&p.team_size_weights).expect("weights").sample(&mut r);
    let roll: f64 = r.random();
    let team = if roll < p.share_all_women {
        TeamType::AllWomen
    } else if roll < p.share_all_women + p.share_all_men {
        TeamType::AllMen
    } else {
        size = size.max(2);
        TeamType::Mixed
    };
    let mut inventors: Vec<String> = Vec::with_capacity(size);
    let mut n_women = 0;
    for slot in 0..size {
        let woman = match team {
            TeamType::AllWomen => true,
            TeamType::AllMen => false,
            // Guarantee both genders in a mixed team.
            TeamType::Mixed => match slot {
                0 => true,
                1 => false,
                _ => r.random::<bool>(),
            },
        };
        let pool = if woman { &pools.women_inventors } else { &pools.men_inventors };
        let mut name = pool.choose(&mut r).expect("inventor pool").clone();
        for _ in 0..8 {
            if !inventors.contains(&name) {
                break;
            }
            name = pool.choose(&mut r).expect("inventor pool").clone();
        }
        if r.random::<f64>() < p.initials_share {
            let mut parts = name.split_whitespace();
            let first = parts.next().unwrap_or("X");
            name = format!("{}. {}", &first[..1], parts.next().unwrap_or(""));
        }
        n_women += usize::from(woman);
        inventors.push(name);
    }
    let women_majority = 2 * n_women >= size;

    // Examiner.
    let assign_logit = p.woman_examiner_logit
        + p.homophily_odds.ln() * f64::from(u8::from(team == TeamType::AllWomen))
        + pools.assign_effect[home];
    let want_woman = r.random::<f64>() < sigmoid(assign_logit);
    let candidates = if want_woman { &pools.women_examiners } else { &pools.men_examiners };
    let candidates = if candidates.is_empty() {
        if want_woman {
            &pools.men_examiners
        } else {
            &pools.women_examiners
        }
    } else {
        candidates
    };
    let mut ex = &pools.examiners[*candidates.choose(&mut r).expect("examiners")];
    for _ in 0..10 {
        if ex.start <= filing {
            break;
        }
        ex = &pools.examiners[*candidates.choose(&mut r).expect("examiners")];
    }
    let seniority = ((filing - ex.start).num_days() as f64 / 365.25).max(0.0);

    // Outcome.
    let w = f64::from(u8::from(women_majority));
    let grant_logit = p.grant_intercept
        + p.grant_women * w
        + p.grant_u * u
        + p.grant_women_u * w * u
        + p.grant_seniority * seniority
        + pools.grant_effect[home];
    let status = if r.random::<f64>() < p.pending_share {
        Status::Pending
    } else if r.random::<f64>() < sigmoid(grant_logit) {
        Status::Granted
    } else {
        Status::Abandoned
    };
    let granted = status == Status::Granted;
    let latency: f64 = Normal::new(900.0, 250.0).expect("valid").sample(&mut r);
    let latency = latency.max(60.0) as i64;
    let n_claims_app = 1 + Poisson::new(2.0).expect("valid").sample(&mut r) as u32;
    let n_claims_grant = granted.then(|| {
        let cut = r.random_range(0..=n_claims_app.saturating_sub(1).min(2));
        n_claims_app - cut + u32::from(r.random::<f64>() < 0.05)
    });
    let citations = granted.then(|| Poisson::new((1.0 + 0.2 * u).exp()).expect("valid").sample(&mut r) as u32);
    let maintenance = granted.then(|| r.random::<f64>() < 0.7);
    let credit_hours = ((15.0 + (home % 5) as f64 * 2.0 + standard.sample(&mut r)) * 10.0).round() / 10.0;

    let appealed = status == Status::Abandoned && r.random::<f64>() < p.appeal_rate;
    let reversed = appealed.then(|| {
        let boost = if seniority < p.junior_years && u > 0.0 { p.reversal_boost } else { 0.0 };
        r.random::<f64>() < sigmoid(p.reversal_intercept + boost)
    });

    Draw {
        u,
        record: PatentApplication {
            app_id: String::new(),
            country: Country::US,
            filing_date: filing,
            grant_date: granted.then(|| filing + Duration::days(latency)),
            status,
            cpc_codes: codes,
            inventor_names: inventors,
            examiner_id: Some(ex.id.clone()),
            examiner_name: Some(ex.name.clone()),
            big_entity: Some(r.random::<f64>() < p.big_entity_share),
            n_claims_app: Some(n_claims_app),
            n_claims_grant,
            citation_count_8yr: citations,
            maintenance_fee_paid: maintenance,
            credit_hours: Some(credit_hours),
            appealed: Some(appealed),
            reversed,
        },
    }
}

pub fn synth_corpus(params: &SynthParams, seed: u64) -> Result<SynthCorpus, SynthError> {
    params.validate()?;
    let pools = build_pools(params, seed);
    let mut draws: Vec<(usize, Draw)> = (0..params.n_applications)
        .into_par_iter()
        .map(|i| (i, draw_record(params, &pools, seed, i)))
        .collect();
    draws.sort_by_key(|(i, d)| (d.record.filing_date, *i));
    let (records, latent_u) = draws
        .into_iter()
        .enumerate()
        .map(|(k, (_, mut d))| {
            d.record.app_id = format!("US{:08}", k + 1);
            (d.record, d.u)
        })
        .unzip();
    Ok(SynthCorpus { records, latent_u })
}

/// Count of records per filing year.
pub fn year_counts(records: &[PatentApplication]) -> HashMap<i32, usize> {
    let mut out = HashMap::new();
    for r in records {
        *out.entry(r.filing_date.year()).or_insert(0) += 1;
    }
    out
}
