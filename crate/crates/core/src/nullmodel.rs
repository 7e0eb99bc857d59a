//! Randomization null model for pair co-occurrence and the resulting z-scores.
//!
//! A replicate reassigns the multiset of code tokens (each subclass repeated
//! once per application that lists it) to the applications' code slots,
//! keeping every application's slot count, with no subclass appearing twice
//! in one application. Pair counts over `R` replicates give `mu` and `sigma`
//! for every pair; `z = (observed - mu) / sigma`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cooccur::{CodePair, CooccurError, CooccurrenceNetwork};
use crate::corpus::{CorpusError, CpcCode};
use crate::rng;

/// Attempt budget for one replicate (full shuffles plus repair rounds).
pub const MAX_ATTEMPTS: u32 = 10_000;

/// Networks with at most this many tokens are resampled by whole-assignment
/// rejection, which is exactly uniform over duplicate-free assignments.
/// Larger networks repair only the offending applications, by swapping each
/// repeated token with a random slot elsewhere.
pub const EXACT_TOKEN_LIMIT: usize = 256;

/// Full-reshuffle attempts allowed before switching to repair on small networks.
const EXACT_ATTEMPTS: u32 = 5_000;

pub const DEFAULT_REPLICATES: usize = 100;

/// Largest token count [`exact_null_small`] will enumerate.
pub const EXACT_ENUMERATION_TOKENS: u64 = 12;

#[derive(Debug, Error)]
pub enum NullModelError {
    #[error("replicate {replicate}: no duplicate-free assignment found in {attempts} attempts")]
    RejectionBudget { replicate: u64, attempts: u32 },
    #[error("margins admit no duplicate-free assignment: {0}")]
    Infeasible(String),
    #[error("need at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("exact enumeration limited to {limit} tokens, network has {tokens}")]
    TokenBudget { tokens: u64, limit: u64 },
    #[error("malformed z-score snapshot: {0}")]
    Snapshot(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Cooccur(#[from] CooccurError),
}

/// Token and slot layout of a network, prepared once and shared by every
/// replicate.
#[derive(Debug, Clone)]
pub struct NullModel {
    codes: Vec<CpcCode>,
    tokens: Vec<u32>,
    /// Start offset of each application's slots in `tokens`; one extra entry
    /// at the end.
    offsets: Vec<usize>,
    /// Application owning each slot.
    owner: Vec<u32>,
}

fn pair_key(a: u32, b: u32) -> u64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    ((lo as u64) << 32) | hi as u64
}

impl NullModel {
    pub fn new(network: &CooccurrenceNetwork) -> Result<Self, NullModelError> {
        let codes = network.codes();
        let mut tokens = Vec::with_capacity(network.total_tokens() as usize);
        for (i, c) in codes.iter().enumerate() {
            let usage = network.code_usage[c];
            if usage > network.n_patents {
                return Err(NullModelError::Infeasible(format!(
                    "{c} used {usage} times across {} applications",
                    network.n_patents
                )));
            }
            tokens.extend(std::iter::repeat_n(i as u32, usage as usize));
        }
        let mut offsets = Vec::with_capacity(network.n_patents as usize + 1);
        let mut at = 0usize;
        for (&k, &n) in &network.slot_counts {
            if k > codes.len() && n > 0 {
                return Err(NullModelError::Infeasible(format!(
                    "{n} applications need {k} distinct codes, only {} exist",
                    codes.len()
                )));
            }
            for _ in 0..n {
                offsets.push(at);
                at += k;
            }
        }
        offsets.push(at);
        if at != tokens.len() {
            return Err(NullModelError::Infeasible(format!(
                "slot total {at} differs from token total {}",
                tokens.len()
            )));
        }
        let owner = offsets
            .windows(2)
            .enumerate()
            .flat_map(|(p, w)| std::iter::repeat_n(p as u32, w[1] - w[0]))
            .collect();
        Ok(NullModel {
            codes,
            tokens,
            offsets,
            owner,
        })
    }

    pub fn n_patents(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_tokens(&self) -> usize {
        self.tokens.len()
    }

    fn slots(&self, p: usize) -> std::ops::Range<usize> {
        self.offsets[p]..self.offsets[p + 1]
    }

    fn has_duplicate(tokens: &[u32]) -> bool {
        tokens
            .iter()
            .enumerate()
            .any(|(i, t)| tokens[i + 1..].contains(t))
    }

    /// Draws one duplicate-free token assignment.
    fn draw(&self, rng: &mut ChaCha8Rng, replicate: u64) -> Result<Vec<u32>, NullModelError> {
        let n_patents = self.n_patents();
        let mut tokens = self.tokens.clone();
        tokens.shuffle(rng);
        let exact = tokens.len() <= EXACT_TOKEN_LIMIT;

        let mut dirty: Vec<usize> = (0..n_patents).collect();
        let mut attempts = 1u32;
        loop {
            let offending: Vec<usize> = dirty
                .iter()
                .copied()
                .filter(|&p| Self::has_duplicate(&tokens[self.slots(p)]))
                .collect();
            if offending.is_empty() {
                return Ok(tokens);
            }
            if attempts >= MAX_ATTEMPTS {
                return Err(NullModelError::RejectionBudget { replicate, attempts });
            }
            attempts += 1;

            if exact && attempts <= EXACT_ATTEMPTS {
                tokens.shuffle(rng);
                dirty = (0..n_patents).collect();
                continue;
            }

            // Repair: swap each repeated token with a random slot in another
            // application, when the swap leaves both duplicate-free. Other
            // applications stay clean, so only the offenders need rechecking.
            for &p in &offending {
                let own = self.slots(p);
                for i in own.clone() {
                    if !tokens[own.start..i].contains(&tokens[i]) {
                        continue;
                    }
                    let j = rng.random_range(0..tokens.len());
                    let q = self.owner[j] as usize;
                    if q == p {
                        continue;
                    }
                    let (t, u) = (tokens[i], tokens[j]);
                    if tokens[own.clone()].contains(&u) || tokens[self.slots(q)].contains(&t) {
                        continue;
                    }
                    tokens.swap(i, j);
                }
            }
            dirty = offending;
        }
    }

    /// One replicate as a list of per-application code sets.
    pub fn replicate_patents(&self, seed: u64) -> Result<Vec<Vec<CpcCode>>, NullModelError> {
        let mut r = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let tokens = self.draw(&mut r, 0)?;
        Ok((0..self.n_patents())
            .map(|p| tokens[self.slots(p)].iter().map(|&t| self.codes[t as usize]).collect())
            .collect())
    }

    fn replicate_keys(&self, rng: &mut ChaCha8Rng, replicate: u64) -> Result<HashMap<u64, u64>, NullModelError> {
        let tokens = self.draw(rng, replicate)?;
        let mut counts: HashMap<u64, u64> = HashMap::new();
        for p in 0..self.n_patents() {
            let slots = &tokens[self.slots(p)];
            for (i, &a) in slots.iter().enumerate() {
                for &b in &slots[i + 1..] {
                    *counts.entry(pair_key(a, b)).or_insert(0) += 1;
                }
            }
        }
        Ok(counts)
    }

    fn unpack(&self, key: u64) -> CodePair {
        let lo = self.codes[(key >> 32) as usize];
        let hi = self.codes[(key & 0xffff_ffff) as usize];
        CodePair::new(lo, hi).expect("replicates never contain self-pairs")
    }

    /// Pair counts of one replicate drawn from `seed`.
    pub fn replicate_counts(&self, seed: u64) -> Result<HashMap<CodePair, u64>, NullModelError> {
        let mut r = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        Ok(self
            .replicate_keys(&mut r, 0)?
            .into_iter()
            .map(|(k, c)| (self.unpack(k), c))
            .collect())
    }
}

/// Pair counts of one randomized replicate of `network`.
pub fn permute_once(network: &CooccurrenceNetwork, seed: u64) -> Result<HashMap<CodePair, u64>, NullModelError> {
    NullModel::new(network)?.replicate_counts(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mu: f64,
    pub sigma: f64,
}

/// Null-model mean and standard deviation per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NullStats {
    pub replicates: usize,
    pub master_seed: u64,
    pub pairs: HashMap<CodePair, Moments>,
}

/// Runs `replicates` replicates, replicate `i` seeded with
/// `split_seed(master_seed, i)`. Accumulation is in exact integers, so the
/// output is identical for any thread count.
pub fn null_stats(
    network: &CooccurrenceNetwork,
    replicates: usize,
    master_seed: u64,
) -> Result<NullStats, NullModelError> {
    if replicates < 2 {
        return Err(NullModelError::TooFewReplicates(replicates));
    }
    let model = NullModel::new(network)?;
    let sums: HashMap<u64, (u64, u64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(master_seed, i);
            model.replicate_keys(&mut r, i)
        })
        .try_fold(HashMap::new, |mut acc: HashMap<u64, (u64, u64)>, counts| {
            for (k, c) in counts? {
                let e = acc.entry(k).or_insert((0, 0));
                e.0 += c;
                e.1 += c * c;
            }
            Ok::<_, NullModelError>(acc)
        })
        .try_reduce(HashMap::new, |mut a, b| {
            for (k, (s, q)) in b {
                let e = a.entry(k).or_insert((0, 0));
                e.0 += s;
                e.1 += q;
            }
            Ok(a)
        })?;

    let r = replicates as u128;
    let mut pairs: HashMap<CodePair, Moments> = sums
        .into_iter()
        .map(|(k, (s, q))| {
            let (s, q) = (s as u128, q as u128);
            let numerator = r * q - s * s;
            let var = numerator as f64 / (r * (r - 1)) as f64;
            (
                model.unpack(k),
                Moments {
                    mu: s as f64 / r as f64,
                    sigma: var.sqrt(),
                },
            )
        })
        .collect();
    for pair in network.pair_counts.keys() {
        pairs.entry(*pair).or_insert(Moments { mu: 0.0, sigma: 0.0 });
    }
    Ok(NullStats {
        replicates,
        master_seed,
        pairs,
    })
}

/// Exact mean and standard deviation of every pair count under the uniform
/// distribution over duplicate-free assignments, by full enumeration.
pub fn exact_null_small(network: &CooccurrenceNetwork) -> Result<HashMap<CodePair, Moments>, NullModelError> {
    let tokens = network.total_tokens();
    if tokens > EXACT_ENUMERATION_TOKENS {
        return Err(NullModelError::TokenBudget {
            tokens,
            limit: EXACT_ENUMERATION_TOKENS,
        });
    }
    let codes = network.codes();
    let n = codes.len();
    let mut remaining: Vec<u64> = codes.iter().map(|c| network.code_usage[c]).collect();
    let sizes: Vec<usize> = network
        .slot_counts
        .iter()
        .flat_map(|(&k, &m)| std::iter::repeat_n(k, m as usize))
        .collect();

    struct Acc {
        n_assignments: u128,
        sum: Vec<u128>,
        sum_sq: Vec<u128>,
    }
    let idx = |a: usize, b: usize| a * n + b;
    let mut acc = Acc {
        n_assignments: 0,
        sum: vec![0; n * n],
        sum_sq: vec![0; n * n],
    };
    let mut counts = vec![0u64; n * n];

    // Patent by patent, choose a k-subset of codes that still have tokens.
    #[allow(clippy::too_many_arguments)]
    fn choose(
        patent: usize,
        start: usize,
        left: usize,
        picked: &mut Vec<usize>,
        sizes: &[usize],
        remaining: &mut [u64],
        counts: &mut [u64],
        acc: &mut Acc,
        n: usize,
    ) {
        if patent == sizes.len() {
            acc.n_assignments += 1;
            for (i, &c) in counts.iter().enumerate() {
                acc.sum[i] += c as u128;
                acc.sum_sq[i] += (c as u128) * (c as u128);
            }
            return;
        }
        if left == 0 {
            for (i, &a) in picked.iter().enumerate() {
                for &b in &picked[i + 1..] {
                    counts[a * n + b] += 1;
                }
            }
            let mut next = Vec::with_capacity(sizes.get(patent + 1).copied().unwrap_or(0));
            let k = sizes.get(patent + 1).copied().unwrap_or(0);
            choose(patent + 1, 0, k, &mut next, sizes, remaining, counts, acc, n);
            for (i, &a) in picked.iter().enumerate() {
                for &b in &picked[i + 1..] {
                    counts[a * n + b] -= 1;
                }
            }
            return;
        }
        for c in start..n {
            if remaining[c] == 0 {
                continue;
            }
            remaining[c] -= 1;
            picked.push(c);
            choose(patent, c + 1, left - 1, picked, sizes, remaining, counts, acc, n);
            picked.pop();
            remaining[c] += 1;
        }
    }

    if sizes.is_empty() {
        acc.n_assignments = 1;
    } else {
        let mut picked = Vec::new();
        choose(0, 0, sizes[0], &mut picked, &sizes, &mut remaining, &mut counts, &mut acc, n);
    }
    if acc.n_assignments == 0 {
        return Err(NullModelError::Infeasible("no duplicate-free assignment exists".into()));
    }

    let total = acc.n_assignments;
    let mut out = HashMap::new();
    for a in 0..n {
        for b in a + 1..n {
            let (s, q) = (acc.sum[idx(a, b)], acc.sum_sq[idx(a, b)]);
            let var = (total * q - s * s) as f64 / (total * total) as f64;
            out.insert(
                CodePair::new(codes[a], codes[b]).expect("distinct"),
                Moments {
                    mu: s as f64 / total as f64,
                    sigma: var.sqrt(),
                },
            );
        }
    }
    Ok(out)
}

/// `(observed - mu) / sigma`; with `sigma = 0`, zero when `observed == mu`
/// and undefined otherwise.
pub fn pair_z(observed: u64, mu: f64, sigma: f64) -> Option<f64> {
    let o = observed as f64;
    if sigma > 0.0 {
        Some((o - mu) / sigma)
    } else if o == mu {
        Some(0.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStats {
    pub observed: u64,
    pub mu: f64,
    pub sigma: f64,
    pub z: Option<f64>,
}

/// Per-pair z-scores for one network year.
#[derive(Debug, Clone, PartialEq)]
pub struct ZSnapshot {
    pub year_t: i32,
    pub replicates: usize,
    pub master_seed: u64,
    pub pairs: HashMap<CodePair, PairStats>,
}

const Z_FORMAT: &str = "zscore-snapshot/1";

#[derive(Serialize, Deserialize)]
struct ZHeader {
    format: String,
    year_t: i32,
    #[serde(rename = "R")]
    replicates: usize,
    master_seed: u64,
}

impl ZSnapshot {
    pub fn compute(network: &CooccurrenceNetwork, replicates: usize, master_seed: u64) -> Result<Self, NullModelError> {
        let stats = null_stats(network, replicates, master_seed)?;
        Ok(Self::from_stats(network, &stats))
    }

    pub fn from_stats(network: &CooccurrenceNetwork, stats: &NullStats) -> Self {
        let pairs = stats
            .pairs
            .iter()
            .map(|(pair, m)| {
                let observed = network.pair_count(pair);
                (
                    *pair,
                    PairStats {
                        observed,
                        mu: m.mu,
                        sigma: m.sigma,
                        z: pair_z(observed, m.mu, m.sigma),
                    },
                )
            })
            .collect();
        ZSnapshot {
            year_t: network.year_t,
            replicates: stats.replicates,
            master_seed: stats.master_seed,
            pairs,
        }
    }

    pub fn get(&self, a: CpcCode, b: CpcCode) -> Option<&PairStats> {
        CodePair::new(a, b).and_then(|p| self.pairs.get(&p))
    }

    pub fn undefined_count(&self) -> usize {
        self.pairs.values().filter(|s| s.z.is_none()).count()
    }

    /// JSON header line, then CSV `pair_a,pair_b,observed,mu,sigma,z` sorted
    /// by pair; undefined z is an empty field.
    pub fn save<W: Write>(&self, mut out: W) -> Result<(), NullModelError> {
        let header = ZHeader {
            format: Z_FORMAT.into(),
            year_t: self.year_t,
            replicates: self.replicates,
            master_seed: self.master_seed,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        let sorted: BTreeMap<_, _> = self.pairs.iter().collect();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["pair_a", "pair_b", "observed", "mu", "sigma", "z"])?;
        for (pair, s) in sorted {
            w.write_record([
                pair.lo().subclass().to_string(),
                pair.hi().subclass().to_string(),
                s.observed.to_string(),
                s.mu.to_string(),
                s.sigma.to_string(),
                s.z.map(|z| z.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: BufRead>(mut input: R) -> Result<Self, NullModelError> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let header: ZHeader = serde_json::from_str(first.trim_end())?;
        if header.format != Z_FORMAT {
            return Err(NullModelError::Snapshot(format!("unsupported format {:?}", header.format)));
        }
        let bad = |what: &str, v: &str| NullModelError::Snapshot(format!("bad {what} {v:?}"));
        let mut pairs = HashMap::new();
        let mut r = csv::Reader::from_reader(input);
        for row in r.records() {
            let row = row?;
            if row.len() != 6 {
                return Err(NullModelError::Snapshot(format!("expected 6 columns, got {}", row.len())));
            }
            let pair = CodePair::new(CpcCode::parse(&row[0])?, CpcCode::parse(&row[1])?)
                .ok_or_else(|| bad("pair", &row[0]))?;
            let observed = row[2].parse().map_err(|_| bad("observed", &row[2]))?;
            let mu = row[3].parse().map_err(|_| bad("mu", &row[3]))?;
            let sigma = row[4].parse().map_err(|_| bad("sigma", &row[4]))?;
            let z = if row[5].is_empty() {
                None
            } else {
                Some(row[5].parse().map_err(|_| bad("z", &row[5]))?)
            };
            pairs.insert(pair, PairStats { observed, mu, sigma, z });
        }
        Ok(ZSnapshot {
            year_t: header.year_t,
            replicates: header.replicates,
            master_seed: header.master_seed,
            pairs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(s: &str) -> CpcCode {
        CpcCode::parse(s).unwrap()
    }

    fn pair(a: &str, b: &str) -> CodePair {
        CodePair::new(code(a), code(b)).unwrap()
    }

    /// Network from explicit per-application code lists.
    pub(crate) fn net(patents: &[&[&str]]) -> CooccurrenceNetwork {
        let mut n = CooccurrenceNetwork::empty(2005);
        for p in patents {
            let codes: Vec<_> = p.iter().map(|c| code(c)).collect();
            n.add_patent(&codes);
        }
        n
    }

    #[test]
    fn conservation_two_by_two() {
        let n = net(&[&["A01A", "B01B"], &["C01C", "D01D"]]);
        for seed in 0..50 {
            let counts = permute_once(&n, seed).unwrap();
            assert_eq!(counts.len(), 2);
            assert_eq!(counts.values().sum::<u64>(), 2);
        }
    }

    #[test]
    fn forced_assignment() {
        let n = net(&[&["A01A", "B01B"]]);
        for seed in 0..20 {
            let counts = permute_once(&n, seed).unwrap();
            assert_eq!(counts, HashMap::from([(pair("A01A", "B01B"), 1)]));
        }
        let stats = null_stats(&n, 10, 3).unwrap();
        assert_eq!(stats.pairs[&pair("A01A", "B01B")], Moments { mu: 1.0, sigma: 0.0 });
        let exact = exact_null_small(&n).unwrap();
        assert_eq!(exact[&pair("A01A", "B01B")], Moments { mu: 1.0, sigma: 0.0 });
    }

    #[test]
    fn popular_code_blocks_pair() {
        // A must sit in both applications, so {B,C} can never co-occur.
        let n = net(&[&["A01A", "B01B"], &["A01A", "C01C"]]);
        for seed in 0..200 {
            let counts = permute_once(&n, seed).unwrap();
            assert!(!counts.contains_key(&pair("B01B", "C01C")));
        }
        let exact = exact_null_small(&n).unwrap();
        assert_eq!(exact[&pair("B01B", "C01C")].mu, 0.0);
        assert_eq!(exact[&pair("A01A", "B01B")], Moments { mu: 1.0, sigma: 0.0 });
    }

    #[test]
    fn exact_hand_enumeration() {
        // Three applications of two slots over A:2, B:2, C:2: the only
        // duplicate-free assignments are the 6 orderings of (AB, AC, BC).
        let n = net(&[&["A01A", "B01B"], &["A01A", "C01C"], &["B01B", "C01C"]]);
        let exact = exact_null_small(&n).unwrap();
        for p in [pair("A01A", "B01B"), pair("A01A", "C01C"), pair("B01B", "C01C")] {
            assert_eq!(exact[&p], Moments { mu: 1.0, sigma: 0.0 });
        }
        // Two applications of two slots over A,B,C,D: 6 assignments, each pair
        // present in 2 of them.
        let n = net(&[&["A01A", "B01B"], &["C01C", "D01D"]]);
        let exact = exact_null_small(&n).unwrap();
        let m = exact[&pair("A01A", "D01D")];
        assert!((m.mu - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.sigma - (2.0f64 / 9.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn exact_symmetry_under_relabeling() {
        let a = net(&[&["A01A", "B01B", "C01C"], &["A01A", "D01D"], &["B01B", "D01D"]]);
        let b = net(&[&["D01D", "C01C", "B01B"], &["D01D", "A01A"], &["C01C", "A01A"]]);
        let (ea, eb) = (exact_null_small(&a).unwrap(), exact_null_small(&b).unwrap());
        let relabel = |s: &str| match s {
            "A01A" => "D01D",
            "B01B" => "C01C",
            "C01C" => "B01B",
            _ => "A01A",
        };
        for (p, m) in &ea {
            let q = pair(relabel(p.lo().subclass()), relabel(p.hi().subclass()));
            assert_eq!(eb[&q], *m);
        }
    }

    #[test]
    fn exact_rejects_large_networks() {
        let row: &[&str] = &["A01A", "B01B", "C01C", "D01D"];
        let n = net(&[row; 4]);
        assert!(matches!(exact_null_small(&n), Err(NullModelError::TokenBudget { .. })));
    }

    #[test]
    fn infeasible_margins() {
        let mut n = net(&[&["A01A", "B01B"]]);
        n.code_usage.insert(code("A01A"), 2);
        n.code_usage.insert(code("B01B"), 0);
        assert!(matches!(NullModel::new(&n), Err(NullModelError::Infeasible(_))));
    }

    #[test]
    fn too_few_replicates() {
        let n = net(&[&["A01A", "B01B"]]);
        assert!(matches!(null_stats(&n, 1, 0), Err(NullModelError::TooFewReplicates(1))));
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let n = net(&[
            &["A01A", "B01B", "C01C"],
            &["A01A", "D01D"],
            &["B01B", "D01D", "E01E"],
            &["C01C", "E01E"],
            &["A01A", "E01E"],
        ]);
        let a = null_stats(&n, 200, 11).unwrap();
        let b = null_stats(&n, 200, 11).unwrap();
        assert_eq!(a, b);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = one.install(|| null_stats(&n, 200, 11).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn repair_path_conserves_margins() {
        // 300 tokens forces the repair path; one code occupies every application.
        let mut patents: Vec<Vec<String>> = Vec::new();
        for i in 0..100 {
            patents.push(vec!["A01A".into(), format!("B{:02}B", i % 40), format!("C{:02}C", i % 30)]);
        }
        let mut n = CooccurrenceNetwork::empty(2005);
        for p in &patents {
            let codes: Vec<_> = p.iter().map(|c| code(c)).collect();
            n.add_patent(&codes);
        }
        let model = NullModel::new(&n).unwrap();
        assert!(model.n_tokens() > EXACT_TOKEN_LIMIT);
        for seed in 0..5 {
            let reps = model.replicate_patents(seed).unwrap();
            let mut usage: HashMap<CpcCode, u64> = HashMap::new();
            for p in &reps {
                assert_eq!(p.len(), 3);
                assert!(p.contains(&code("A01A")));
                for c in p {
                    *usage.entry(*c).or_insert(0) += 1;
                }
            }
            assert_eq!(usage, n.code_usage);
        }
    }

    #[test]
    fn z_policy() {
        assert_eq!(pair_z(5, 5.0, 2.0), Some(0.0));
        assert_eq!(pair_z(9, 5.0, 2.0), Some(2.0));
        assert_eq!(pair_z(1, 1.0, 0.0), Some(0.0));
        assert_eq!(pair_z(3, 1.0, 0.0), None);
    }

    #[test]
    fn z_snapshot_round_trip() {
        let n = net(&[&["A01A", "B01B", "C01C"], &["A01A", "D01D"], &["B01B", "D01D"], &["A01A", "B01B"]]);
        let mut snap = ZSnapshot::compute(&n, 50, 5).unwrap();
        snap.pairs.insert(
            pair("A01A", "E01E"),
            PairStats { observed: 3, mu: 1.0, sigma: 0.0, z: None },
        );
        let mut buf = Vec::new();
        snap.save(&mut buf).unwrap();
        let back = ZSnapshot::load(buf.as_slice()).unwrap();
        assert_eq!(back, snap);
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert!(header.contains("\"R\":50") && header.contains("\"master_seed\":5"));
    }
}
