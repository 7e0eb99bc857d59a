//! Name-based gender inference from an offline dictionary, and the team
//! composition variables derived from per-member labels.

use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenderError {
    #[error("row {row}: probability {value} outside [0, 1]")]
    Probability { row: usize, value: f64 },
    #[error("row {row}: unknown gender token {token:?}")]
    Token { row: usize, token: String },
    #[error("team has no members")]
    EmptyTeam,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Woman,
    Man,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenderLabel {
    pub value: Gender,
    /// Dictionary probability of `value`; `None` when the name was not found.
    pub probability: Option<f64>,
}

impl GenderLabel {
    pub const UNKNOWN: GenderLabel = GenderLabel {
        value: Gender::Unknown,
        probability: None,
    };

    pub fn determined(value: Gender, probability: f64) -> Self {
        GenderLabel {
            value,
            probability: Some(probability),
        }
    }
}

/// Version tag of [`normalize_name`]; bump when the folding table changes.
pub const NORMALIZATION_VERSION: u32 = 1;

// Precomposed Latin letters folded to ASCII. Characters outside this table
// and outside the combining-mark block pass through unchanged after
// lowercasing.
const FOLD: &[(char, &str)] = &[
    ('à', "a"), ('á', "a"), ('â', "a"), ('ã', "a"), ('ä', "a"), ('å', "a"), ('ā', "a"), ('ă', "a"), ('ą', "a"),
    ('æ', "ae"),
    ('ç', "c"), ('ć', "c"), ('č', "c"), ('ĉ', "c"), ('ċ', "c"),
    ('ď', "d"), ('đ', "d"), ('ð', "d"),
    ('è', "e"), ('é', "e"), ('ê', "e"), ('ë', "e"), ('ē', "e"), ('ĕ', "e"), ('ė', "e"), ('ę', "e"), ('ě', "e"),
    ('ğ', "g"), ('ĝ', "g"), ('ġ', "g"), ('ģ', "g"),
    ('ĥ', "h"), ('ħ', "h"),
    ('ì', "i"), ('í', "i"), ('î', "i"), ('ï', "i"), ('ĩ', "i"), ('ī', "i"), ('ĭ', "i"), ('į', "i"), ('ı', "i"),
    ('ĵ', "j"), ('ķ', "k"),
    ('ĺ', "l"), ('ļ', "l"), ('ľ', "l"), ('ŀ', "l"), ('ł', "l"),
    ('ñ', "n"), ('ń', "n"), ('ņ', "n"), ('ň', "n"),
    ('ò', "o"), ('ó', "o"), ('ô', "o"), ('õ', "o"), ('ö', "o"), ('ø', "o"), ('ō', "o"), ('ŏ', "o"), ('ő', "o"),
    ('œ', "oe"),
    ('ŕ', "r"), ('ŗ', "r"), ('ř', "r"),
    ('ś', "s"), ('ŝ', "s"), ('ş', "s"), ('š', "s"), ('ß', "ss"),
    ('ţ', "t"), ('ť', "t"), ('ŧ', "t"), ('þ', "th"),
    ('ù', "u"), ('ú', "u"), ('û', "u"), ('ü', "u"), ('ũ', "u"), ('ū', "u"), ('ŭ', "u"), ('ů', "u"), ('ű', "u"), ('ų', "u"),
    ('ŵ', "w"), ('ý', "y"), ('ÿ', "y"), ('ŷ', "y"),
    ('ź', "z"), ('ż', "z"), ('ž', "z"),
];

/// Case-folds, trims and strips diacritics using the fixed [`FOLD`] table.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.trim().chars().flat_map(char::to_lowercase) {
        if ('\u{0300}'..='\u{036f}').contains(&ch) {
            continue;
        }
        match FOLD.iter().find(|(c, _)| *c == ch) {
            Some((_, s)) => out.push_str(s),
            None => out.push(ch),
        }
    }
    out
}

/// Immutable first-name → (gender, probability) lookup.
#[derive(Debug, Clone, Default)]
pub struct GenderDict {
    entries: HashMap<String, (Gender, f64)>,
}

#[derive(Deserialize)]
struct DictRow {
    name: String,
    gender: String,
    probability: f64,
}

fn gender_token(token: &str) -> Option<Gender> {
    match token.trim().to_ascii_lowercase().as_str() {
        "woman" | "female" | "f" => Some(Gender::Woman),
        "man" | "male" | "m" => Some(Gender::Man),
        _ => None,
    }
}

impl GenderDict {
    /// Loads a `name,gender,probability` CSV. Duplicate names keep the row
    /// with the higher probability (the earlier row on ties).
    pub fn load<R: Read>(input: R) -> Result<Self, GenderError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut entries: HashMap<String, (Gender, f64)> = HashMap::new();
        for (i, row) in reader.deserialize::<DictRow>().enumerate() {
            let row = row?;
            let line = i + 2;
            if !(0.0..=1.0).contains(&row.probability) {
                return Err(GenderError::Probability {
                    row: line,
                    value: row.probability,
                });
            }
            let g = gender_token(&row.gender).ok_or_else(|| GenderError::Token {
                row: line,
                token: row.gender.clone(),
            })?;
            let key = normalize_name(&row.name);
            match entries.get(&key) {
                Some((_, p)) if *p >= row.probability => {}
                _ => {
                    entries.insert(key, (g, row.probability));
                }
            }
        }
        Ok(GenderDict { entries })
    }

    /// The dictionary bundled with the crate (500 first names).
    pub fn bundled() -> Self {
        Self::load(BUNDLED_DICT.as_bytes()).expect("bundled dictionary is valid")
    }

    pub fn lookup(&self, name: &str) -> Option<(Gender, f64)> {
        self.entries.get(&normalize_name(name)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by name, for deterministic iteration.
    pub fn sorted_entries(&self) -> Vec<(&str, Gender, f64)> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .map(|(k, (g, p))| (k.as_str(), *g, *p))
            .collect();
        v.sort_by(|a, b| a.0.cmp(b.0));
        v
    }
}

pub const BUNDLED_DICT: &str = include_str!("../data/gender_dict_500.csv");

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn is_initials(token: &str) -> bool {
    let parts: Vec<&str> = token.split('.').filter(|p| !p.is_empty()).collect();
    !parts.is_empty() && parts.iter().all(|p| p.chars().count() == 1 && p.chars().all(char::is_alphabetic))
}

/// Labels a full name by its first token. Initials (`J.`, `J.R.`) and names
/// missing from the dictionary are unknown; so are entries whose probability
/// falls below `threshold`.
pub fn infer_gender(full_name: &str, dict: &GenderDict, threshold: f64) -> GenderLabel {
    let Some(first) = full_name.split_whitespace().next() else {
        return GenderLabel::UNKNOWN;
    };
    let first = first.trim_end_matches(',');
    if is_initials(first) {
        return GenderLabel::UNKNOWN;
    }
    match dict.lookup(first) {
        Some((g, p)) if p >= threshold => GenderLabel::determined(g, p),
        Some((_, p)) => GenderLabel {
            value: Gender::Unknown,
            probability: Some(p),
        },
        None => GenderLabel::UNKNOWN,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreeWay {
    MenMajority,
    WomenMajority,
    Mixed5050,
}

impl ThreeWay {
    /// Numeric coding: men majority 0, women majority 1, 50/50 2.
    pub fn code(self) -> u8 {
        match self {
            ThreeWay::MenMajority => 0,
            ThreeWay::WomenMajority => 1,
            ThreeWay::Mixed5050 => 2,
        }
    }
}

pub const TEAM_SIZE_CAP: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamComposition {
    pub n_total: usize,
    pub n_women: usize,
    pub n_men: usize,
    pub n_unknown: usize,
    /// Share of women among gender-determined members.
    pub prop_women: Option<f64>,
    pub women_majority: Option<bool>,
    pub three_way: Option<ThreeWay>,
    pub all_women: bool,
    pub all_men: bool,
    pub first_inventor_gender: GenderLabel,
    pub team_size_capped: usize,
}

impl TeamComposition {
    /// False when no member has a determined gender.
    pub fn classifiable(&self) -> bool {
        self.n_women + self.n_men > 0
    }

    pub fn unknown_fraction(&self) -> f64 {
        self.n_unknown as f64 / self.n_total as f64
    }
}

pub fn team_composition(labels: &[GenderLabel]) -> Result<TeamComposition, GenderError> {
    let first = *labels.first().ok_or(GenderError::EmptyTeam)?;
    let count = |g| labels.iter().filter(|l| l.value == g).count();
    let (n_women, n_men) = (count(Gender::Woman), count(Gender::Man));
    let n_total = labels.len();
    let determined = n_women + n_men;

    let (prop_women, women_majority, three_way) = if determined == 0 {
        (None, None, None)
    } else {
        let three = match n_women.cmp(&n_men) {
            std::cmp::Ordering::Greater => ThreeWay::WomenMajority,
            std::cmp::Ordering::Less => ThreeWay::MenMajority,
            std::cmp::Ordering::Equal => ThreeWay::Mixed5050,
        };
        // n_w / (n_w + n_m) >= 1/2, in integers.
        (
            Some(n_women as f64 / determined as f64),
            Some(2 * n_women >= determined),
            Some(three),
        )
    };

    Ok(TeamComposition {
        n_total,
        n_women,
        n_men,
        n_unknown: n_total - determined,
        prop_women,
        women_majority,
        three_way,
        all_women: n_women == n_total,
        all_men: n_men == n_total,
        first_inventor_gender: first,
        team_size_capped: n_total.min(TEAM_SIZE_CAP),
    })
}

/// Labels every inventor name and summarizes the team.
pub fn infer_team(names: &[String], dict: &GenderDict, threshold: f64) -> Result<TeamComposition, GenderError> {
    let labels: Vec<_> = names.iter().map(|n| infer_gender(n, dict, threshold)).collect();
    team_composition(&labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict(csv: &str) -> GenderDict {
        GenderDict::load(csv.as_bytes()).unwrap()
    }

    const W: GenderLabel = GenderLabel { value: Gender::Woman, probability: Some(0.9) };
    const M: GenderLabel = GenderLabel { value: Gender::Man, probability: Some(0.9) };
    const U: GenderLabel = GenderLabel::UNKNOWN;

    #[test]
    fn direct_load() {
        let d = dict("name,gender,probability\nMaria,woman,0.99\n");
        assert_eq!(d.lookup("maria"), Some((Gender::Woman, 0.99)));
    }

    #[test]
    fn duplicate_keeps_max_probability() {
        let d = dict("name,gender,probability\nkim,woman,0.6\nkim,man,0.7\n");
        assert_eq!(d.lookup("Kim"), Some((Gender::Man, 0.7)));
        let d = dict("name,gender,probability\nkim,man,0.7\nKIM,woman,0.6\n");
        assert_eq!(d.lookup("kim"), Some((Gender::Man, 0.7)));
    }

    #[test]
    fn empty_dictionary() {
        let d = dict("");
        assert!(d.is_empty());
        assert_eq!(infer_gender("Maria Lopez", &d, 0.5), GenderLabel::UNKNOWN);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            GenderDict::load("name,gender,probability\nx,woman,1.5\n".as_bytes()),
            Err(GenderError::Probability { row: 2, .. })
        ));
        assert!(matches!(
            GenderDict::load("name,gender,probability\nx,robot,0.5\n".as_bytes()),
            Err(GenderError::Token { .. })
        ));
    }

    #[test]
    fn normalization_folds_diacritics() {
        assert_eq!(normalize_name("  José "), "jose");
        assert_eq!(normalize_name("BJÖRN"), "bjorn");
        assert_eq!(normalize_name("Jose\u{0301}"), "jose");
        assert_eq!(normalize_name("Łukasz"), "lukasz");
        let d = dict("name,gender,probability\nZoë,woman,0.97\n");
        assert_eq!(d.lookup("ZOE"), Some((Gender::Woman, 0.97)));
    }

    #[test]
    fn inference_rules() {
        let d = dict("name,gender,probability\nMaria,woman,0.99\nJ,man,0.9\nkim,woman,0.6\n");
        assert_eq!(infer_gender("J. Smith", &d, 0.5), GenderLabel::UNKNOWN);
        assert_eq!(infer_gender("J.R. Smith", &d, 0.5), GenderLabel::UNKNOWN);
        assert_eq!(infer_gender("Nobody Here", &d, 0.5), GenderLabel::UNKNOWN);
        assert_eq!(infer_gender("Maria Lopez", &d, 0.5), GenderLabel::determined(Gender::Woman, 0.99));
        let low = infer_gender("Kim Park", &d, 0.65);
        assert_eq!(low.value, Gender::Unknown);
        assert_eq!(infer_gender("", &d, 0.5), GenderLabel::UNKNOWN);
    }

    #[test]
    fn bundled_dictionary_has_500_names() {
        let d = GenderDict::bundled();
        assert_eq!(d.len(), 500);
        assert_eq!(d.lookup("mary").unwrap().0, Gender::Woman);
        assert_eq!(d.lookup("james").unwrap().0, Gender::Man);
    }

    #[test]
    fn fifty_fifty_team() {
        let t = team_composition(&[W, M]).unwrap();
        assert_eq!(t.prop_women, Some(0.5));
        assert_eq!(t.women_majority, Some(true));
        assert_eq!(t.three_way, Some(ThreeWay::Mixed5050));
        assert!(!t.all_women && !t.all_men);
    }

    #[test]
    fn single_gender_team() {
        let t = team_composition(&[M, M, M]).unwrap();
        assert!(t.all_men);
        assert_eq!(t.women_majority, Some(false));
        assert_eq!(t.three_way, Some(ThreeWay::MenMajority));
    }

    #[test]
    fn team_size_cap() {
        let t = team_composition(&[W; 7]).unwrap();
        assert_eq!(t.team_size_capped, 5);
        assert_eq!(t.n_total, 7);
    }

    #[test]
    fn unknown_members() {
        let t = team_composition(&[U, U]).unwrap();
        assert!(!t.classifiable());
        assert_eq!(t.women_majority, None);
        assert_eq!(t.three_way, None);
        let t = team_composition(&[W, U, M, M]).unwrap();
        assert_eq!(t.n_unknown, 1);
        assert_eq!(t.women_majority, Some(false));
        assert!((t.unknown_fraction() - 0.25).abs() < 1e-15);
        assert!(matches!(team_composition(&[]), Err(GenderError::EmptyTeam)));
    }

    fn label() -> impl Strategy<Value = GenderLabel> {
        prop_oneof![Just(W), Just(M), Just(U)]
    }

    proptest! {
        #[test]
        fn composition_invariants(labels in prop::collection::vec(label(), 1..12)) {
            let t = team_composition(&labels).unwrap();
            prop_assert_eq!(t.n_women + t.n_men + t.n_unknown, t.n_total);
            prop_assert_eq!(t.team_size_capped, t.n_total.min(5));
            prop_assert_eq!(t.all_women, t.n_women == t.n_total);
            prop_assert_eq!(t.all_men, t.n_men == t.n_total);
            prop_assert_eq!(t.three_way == Some(ThreeWay::Mixed5050), t.n_women == t.n_men && t.n_men > 0);
            if t.n_unknown == 0 {
                let men_majority = 2 * t.n_men > t.n_total;
                prop_assert!(t.women_majority.unwrap() ^ men_majority);
            }
        }

        #[test]
        fn prop_women_is_order_invariant(mut labels in prop::collection::vec(label(), 1..10), seed in any::<u64>()) {
            let a = team_composition(&labels).unwrap();
            let n = labels.len();
            labels.rotate_left((seed as usize) % n);
            let b = team_composition(&labels).unwrap();
            prop_assert_eq!(a.prop_women, b.prop_women);
            prop_assert_eq!(a.women_majority, b.women_majority);
        }
    }
}
