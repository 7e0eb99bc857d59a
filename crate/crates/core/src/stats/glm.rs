//! Logistic and linear GLMs with one-hot fixed effects.
//!
//! Logistic fits run Newton/IRLS from `logit(mean y)` with step-halving, so the
//! deviance never increases between accepted iterates. Columns that are
//! linearly dependent on earlier columns are dropped before fitting and
//! reported by name.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::frame::{Column, Frame};
use super::linalg::{independent_columns, NormalSolver, SparseRows, DENSE_COLUMN_LIMIT};
use super::{ordered_sum, StatsError};

/// Convergence threshold on the Euclidean norm of the mean score `X'(y-mu)/n`.
pub const GRADIENT_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;
pub const RANK_TOL: f64 = 1e-10;
pub const SEPARATION_EPS: f64 = 1e-10;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Logistic,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Continuous {
        column: String,
    },
    /// A reported factor; its dummies keep full standard errors.
    Categorical {
        column: String,
        #[serde(default)]
        reference: Option<String>,
    },
    /// A nuisance factor (year, team size, class).
    FixedEffect {
        column: String,
        #[serde(default)]
        reference: Option<String>,
    },
    /// Product of two declared main-effect terms, named by their columns.
    Interaction {
        left: String,
        right: String,
    },
}

impl Term {
    fn base_column(&self) -> Option<&str> {
        match self {
            Term::Continuous { column } | Term::Categorical { column, .. } | Term::FixedEffect { column, .. } => {
                Some(column)
            }
            Term::Interaction { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmSpec {
    pub family: Family,
    pub response: String,
    pub terms: Vec<Term>,
    #[serde(default)]
    pub cluster: Option<String>,
}

impl GlmSpec {
    pub fn new(family: Family, response: &str) -> Self {
        GlmSpec {
            family,
            response: response.to_string(),
            terms: Vec::new(),
            cluster: None,
        }
    }

    pub fn continuous(mut self, column: &str) -> Self {
        self.terms.push(Term::Continuous { column: column.into() });
        self
    }

    pub fn categorical(mut self, column: &str, reference: Option<&str>) -> Self {
        self.terms.push(Term::Categorical {
            column: column.into(),
            reference: reference.map(str::to_string),
        });
        self
    }

    pub fn fixed_effect(mut self, column: &str) -> Self {
        self.terms.push(Term::FixedEffect {
            column: column.into(),
            reference: None,
        });
        self
    }

    pub fn interaction(mut self, left: &str, right: &str) -> Self {
        self.terms.push(Term::Interaction {
            left: left.into(),
            right: right.into(),
        });
        self
    }

    pub fn clustered(mut self, column: &str) -> Self {
        self.cluster = Some(column.into());
        self
    }

    /// Columns that must be non-null for a row to enter the fit.
    pub fn required_columns(&self) -> Vec<&str> {
        let mut cols = vec![self.response.as_str()];
        cols.extend(self.terms.iter().filter_map(Term::base_column));
        cols.extend(self.cluster.as_deref());
        cols
    }

    pub fn validate(&self, data: &Frame) -> Result<(), StatsError> {
        data.numeric(&self.response)?;
        let mut declared = BTreeSet::new();
        for t in &self.terms {
            if let Some(c) = t.base_column() {
                data.column(c)?;
                if matches!(t, Term::Continuous { .. }) {
                    data.numeric(c)?;
                }
                if !declared.insert(c) {
                    return Err(StatsError::InvalidSpec(format!("column {c:?} declared twice")));
                }
            }
        }
        for t in &self.terms {
            if let Term::Interaction { left, right } = t {
                for side in [left, right] {
                    if !declared.contains(side.as_str()) {
                        return Err(StatsError::InvalidSpec(format!(
                            "interaction references undeclared term {side:?}"
                        )));
                    }
                }
                if left == right {
                    return Err(StatsError::InvalidSpec(format!("self-interaction of {left:?}")));
                }
            }
        }
        if let Some(c) = &self.cluster {
            data.column(c)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Cell {
    Num(f64),
    Label(String),
}

impl Cell {
    fn label(self) -> String {
        match self {
            Cell::Num(v) => v.to_string(),
            Cell::Label(s) => s,
        }
    }
}

fn frame_cell(data: &Frame, column: &str, i: usize) -> Option<Cell> {
    match data.column(column).ok()? {
        Column::Numeric(v) => v[i].filter(|x| x.is_finite()).map(Cell::Num),
        Column::Categorical(v) => v[i].clone().map(Cell::Label),
    }
}

#[derive(Debug, Clone)]
enum BaseEnc {
    Numeric {
        column: String,
    },
    Factor {
        column: String,
        reference: String,
        levels: Vec<String>,
        index: HashMap<String, usize>,
        nuisance: bool,
    },
}

impl BaseEnc {
    fn column(&self) -> &str {
        match self {
            BaseEnc::Numeric { column } | BaseEnc::Factor { column, .. } => column,
        }
    }

    fn width(&self) -> usize {
        match self {
            BaseEnc::Numeric { .. } => 1,
            BaseEnc::Factor { levels, .. } => levels.len(),
        }
    }

    fn local_name(&self, l: usize) -> String {
        match self {
            BaseEnc::Numeric { column } => column.clone(),
            BaseEnc::Factor { column, levels, .. } => format!("{column}[{}]", levels[l]),
        }
    }

    /// The row's single nonzero local entry, `Ok(None)` at the reference
    /// level, `Err` for an unknown level or missing value.
    fn local(&self, cell: Option<Cell>) -> Result<Option<(usize, f64)>, ()> {
        let cell = cell.ok_or(())?;
        match self {
            BaseEnc::Numeric { .. } => match cell {
                Cell::Num(v) => Ok(Some((0, v))),
                Cell::Label(_) => Err(()),
            },
            BaseEnc::Factor { reference, index, .. } => {
                let label = cell.label();
                if &label == reference {
                    Ok(None)
                } else {
                    index.get(&label).map(|&l| Some((l, 1.0))).ok_or(())
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum TermEnc {
    Base(usize),
    Interaction(usize, usize),
}

/// Maps table rows to sparse design rows; column 0 is the intercept.
#[derive(Debug, Clone)]
pub struct Encoder {
    bases: Vec<BaseEnc>,
    terms: Vec<(TermEnc, usize)>,
    names: Vec<String>,
    nuisance: Vec<bool>,
    means: HashMap<String, f64>,
}

impl Encoder {
    fn build(spec: &GlmSpec, data: &Frame, rows: &[usize]) -> Result<Self, StatsError> {
        let mut bases = Vec::new();
        let mut base_of: HashMap<String, usize> = HashMap::new();
        let mut means = HashMap::new();
        for t in &spec.terms {
            let enc = match t {
                Term::Continuous { column } => {
                    let v = data.numeric(column)?;
                    let mean = ordered_sum(rows.len(), |k| v[rows[k]].unwrap_or(0.0)) / rows.len() as f64;
                    means.insert(column.clone(), mean);
                    BaseEnc::Numeric { column: column.clone() }
                }
                Term::Categorical { column, reference } | Term::FixedEffect { column, reference } => {
                    let col = data.column(column)?;
                    let seen: BTreeSet<String> = rows.iter().filter_map(|&i| col.label(i)).collect();
                    let reference = match reference {
                        Some(r) if seen.contains(r) => r.clone(),
                        Some(r) => {
                            return Err(StatsError::InvalidSpec(format!(
                                "reference level {r:?} not present in {column:?}"
                            )))
                        }
                        None => seen.iter().next().cloned().ok_or(StatsError::EmptyData)?,
                    };
                    let levels: Vec<String> = seen.into_iter().filter(|l| *l != reference).collect();
                    let index = levels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
                    BaseEnc::Factor {
                        column: column.clone(),
                        reference,
                        levels,
                        index,
                        nuisance: matches!(t, Term::FixedEffect { .. }),
                    }
                }
                Term::Interaction { .. } => continue,
            };
            base_of.insert(enc.column().to_string(), bases.len());
            bases.push(enc);
        }

        let mut names = vec!["(intercept)".to_string()];
        let mut nuisance = vec![false];
        let mut terms = Vec::new();
        for t in &spec.terms {
            let offset = names.len();
            match t {
                Term::Interaction { left, right } => {
                    let (a, b) = (base_of[left.as_str()], base_of[right.as_str()]);
                    for la in 0..bases[a].width() {
                        for lb in 0..bases[b].width() {
                            names.push(format!("{}:{}", bases[a].local_name(la), bases[b].local_name(lb)));
                            nuisance.push(false);
                        }
                    }
                    terms.push((TermEnc::Interaction(a, b), offset));
                }
                _ => {
                    let b = base_of[t.base_column().expect("main effect")];
                    let is_nuisance = matches!(bases[b], BaseEnc::Factor { nuisance: true, .. });
                    for l in 0..bases[b].width() {
                        names.push(bases[b].local_name(l));
                        nuisance.push(is_nuisance);
                    }
                    terms.push((TermEnc::Base(b), offset));
                }
            }
        }
        Ok(Encoder {
            bases,
            terms,
            names,
            nuisance,
            means,
        })
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    fn encode<F>(&self, cell: F) -> Option<Vec<(usize, f64)>>
    where
        F: Fn(&str) -> Option<Cell>,
    {
        let locals = self
            .bases
            .iter()
            .map(|b| b.local(cell(b.column())))
            .collect::<Result<Vec<_>, ()>>()
            .ok()?;
        let mut out = vec![(0, 1.0)];
        for (t, offset) in &self.terms {
            match *t {
                TermEnc::Base(b) => {
                    if let Some((l, v)) = locals[b] {
                        out.push((offset + l, v));
                    }
                }
                TermEnc::Interaction(a, b) => {
                    if let (Some((la, va)), Some((lb, vb))) = (locals[a], locals[b]) {
                        out.push((offset + la * self.bases[b].width() + lb, va * vb));
                    }
                }
            }
        }
        Some(out)
    }

    fn design(&self, data: &Frame, rows: &[usize]) -> Result<SparseRows, StatsError> {
        let encoded: Vec<Option<Vec<(usize, f64)>>> = rows
            .par_iter()
            .map(|&i| self.encode(|c| frame_cell(data, c, i)))
            .collect();
        let mut x = SparseRows::new(self.n_cols());
        for e in encoded {
            x.push_row(e.ok_or_else(|| StatsError::InvalidSpec("row with unencodable value".into()))?);
        }
        Ok(x)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GlmFit {
    pub family: Family,
    pub response: String,
    /// Names of the retained design columns.
    pub terms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub se: Vec<Option<f64>>,
    pub robust_se: Option<Vec<Option<f64>>>,
    pub deviance: f64,
    pub deviance_trace: Vec<f64>,
    pub n_obs: usize,
    pub n_clusters: Option<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub separation: bool,
    pub dropped: Vec<String>,
    /// Indices (into `terms`) of the non-nuisance columns.
    pub focus: Vec<usize>,
    /// Covariance among `focus` columns: cluster-robust when clustered,
    /// naive otherwise.
    pub focus_cov: Vec<Vec<f64>>,
    #[serde(skip)]
    encoder: Option<Encoder>,
    #[serde(skip)]
    kept: Vec<usize>,
}

#[derive(Serialize)]
struct FitMetadata<'a> {
    family: Family,
    response: &'a str,
    n_obs: usize,
    n_clusters: Option<usize>,
    deviance: f64,
    deviance_trace: &'a [f64],
    converged: bool,
    iterations: usize,
    separation: bool,
    dropped: &'a [String],
}

impl GlmFit {
    pub fn index(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.index(term).map(|j| self.coefficients[j])
    }

    /// Robust error when available, otherwise naive.
    pub fn reported_se(&self, j: usize) -> Option<f64> {
        match &self.robust_se {
            Some(r) => r[j],
            None => self.se[j],
        }
    }

    pub fn z(&self, j: usize) -> Option<f64> {
        self.reported_se(j).map(|s| self.coefficients[j] / s)
    }

    /// Two-sided p-value: normal reference for logistic, Student t with
    /// `n - k` degrees of freedom for linear fits.
    pub fn p_value(&self, j: usize) -> Option<f64> {
        let z = self.z(j)?;
        if !z.is_finite() {
            return None;
        }
        Some(match self.family {
            Family::Logistic => 2.0 * Normal::standard().sf(z.abs()),
            Family::Linear => {
                let df = self.n_obs as f64 - self.terms.len() as f64;
                StudentsT::new(0.0, 1.0, df).ok()?.sf(z.abs()) * 2.0
            }
        })
    }

    pub fn write_table<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "coefficient", "se", "robust_se", "z", "p"])?;
        for (j, name) in self.terms.iter().enumerate() {
            let robust = self.robust_se.as_ref().and_then(|r| r[j]);
            w.write_record([
                name.clone(),
                self.coefficients[j].to_string(),
                fmt(self.se[j]),
                fmt(robust),
                fmt(self.z(j)),
                fmt(self.p_value(j)),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn metadata_json(&self) -> serde_json::Value {
        serde_json::to_value(FitMetadata {
            family: self.family,
            response: &self.response,
            n_obs: self.n_obs,
            n_clusters: self.n_clusters,
            deviance: self.deviance,
            deviance_trace: &self.deviance_trace,
            converged: self.converged,
            iterations: self.iterations,
            separation: self.separation,
            dropped: &self.dropped,
        })
        .expect("metadata serializes")
    }

    fn linear_predictor(&self, entries: &[(usize, f64)]) -> f64 {
        let mut pos = vec![usize::MAX; self.encoder.as_ref().map_or(0, Encoder::n_cols)];
        for (k, &j) in self.kept.iter().enumerate() {
            pos[j] = k;
        }
        entries
            .iter()
            .filter(|(j, _)| pos[*j] != usize::MAX)
            .map(|(j, v)| v * self.coefficients[pos[*j]])
            .sum()
    }

    /// Fitted mean for every row of `data`; `None` where a value is missing
    /// or a level was not seen during fitting.
    pub fn predict(&self, data: &Frame) -> Vec<Option<f64>> {
        let Some(enc) = &self.encoder else {
            return vec![None; data.n_rows()];
        };
        (0..data.n_rows())
            .into_par_iter()
            .map(|i| {
                let e = enc.encode(|c| frame_cell(data, c, i))?;
                Some(self.family.mean(self.linear_predictor(&e)))
            })
            .collect()
    }
}

impl Family {
    fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Logistic => sigmoid(eta),
            Family::Linear => eta,
        }
    }

    /// `d mean / d eta`.
    fn slope(self, eta: f64) -> f64 {
        match self {
            Family::Logistic => {
                let m = sigmoid(eta);
                m * (1.0 - m)
            }
            Family::Linear => 1.0,
        }
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn logistic_deviance(eta: &[f64], y: &[f64]) -> f64 {
    2.0 * ordered_sum(y.len(), |i| softplus(eta[i]) - y[i] * eta[i])
}

struct Estimate {
    beta: Vec<f64>,
    eta: Vec<f64>,
    deviance: f64,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn irls(x: &SparseRows, y: &[f64]) -> Result<Estimate, StatsError> {
    let n = y.len();
    let ybar = ordered_sum(n, |i| y[i]) / n as f64;
    let mut beta = vec![0.0; x.n_cols];
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut eta = x.mul_vec(&beta);
    let mut dev = logistic_deviance(&eta, y);
    let mut trace = vec![dev];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, m)| a - m).collect();
        let grad = x.t_mul_vec(&resid);
        if norm(&grad) / n as f64 <= GRADIENT_TOL {
            converged = true;
            break;
        }
        let step = match NormalSolver::new(x, &w).and_then(|s| s.solve(&grad)) {
            Ok(d) => d,
            Err(e) if iterations == 0 => return Err(e),
            Err(_) => break,
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b + t * d).collect();
            let cand_eta = x.mul_vec(&cand);
            let cand_dev = logistic_deviance(&cand_eta, y);
            if cand_dev <= dev {
                accepted = Some((cand, cand_eta, cand_dev));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((b, e, d)) => {
                let stalled = d == dev;
                beta = b;
                eta = e;
                dev = d;
                trace.push(dev);
                if stalled {
                    break;
                }
            }
            None => break,
        }
    }
    if !converged {
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let resid: Vec<f64> = y.iter().zip(&mu).map(|(a, m)| a - m).collect();
        converged = norm(&x.t_mul_vec(&resid)) / n as f64 <= GRADIENT_TOL;
    }
    Ok(Estimate {
        beta,
        eta,
        deviance: dev,
        trace,
        converged,
        iterations,
    })
}

fn ols(x: &SparseRows, y: &[f64]) -> Result<Estimate, StatsError> {
    let w = vec![1.0; y.len()];
    let beta = NormalSolver::new(x, &w)?.solve(&x.t_mul_vec(y))?;
    let eta = x.mul_vec(&beta);
    let rss = ordered_sum(y.len(), |i| (y[i] - eta[i]).powi(2));
    Ok(Estimate {
        beta,
        eta,
        deviance: rss,
        trace: vec![rss],
        converged: true,
        iterations: 1,
    })
}

/// Inverse-Hessian columns, a per-column scale, and the design they belong to.
struct Curvature<'a> {
    solver: NormalSolver<'a>,
    scale: f64,
}

impl<'a> Curvature<'a> {
    fn new(x: &'a SparseRows, family: Family, eta: &[f64], y: &[f64]) -> Result<Self, StatsError> {
        let w: Vec<f64> = eta.iter().map(|&e| family.slope(e)).collect();
        let solver = NormalSolver::new(x, &w)?;
        let scale = match family {
            Family::Logistic => 1.0,
            Family::Linear => {
                let (n, k) = (y.len() as f64, x.n_cols as f64);
                ordered_sum(y.len(), |i| (y[i] - eta[i]).powi(2)) / (n - k)
            }
        };
        Ok(Curvature { solver, scale })
    }
}

fn wanted_columns(solver: &NormalSolver, focus: &[usize], k: usize) -> Vec<usize> {
    if solver.is_dense() {
        (0..k).collect()
    } else {
        focus.to_vec()
    }
}

/// Cluster-robust variances for `cols` (each with its inverse-Hessian column
/// `a_j`), plus the robust covariance among `focus`.
fn sandwich(
    x: &SparseRows,
    resid: &[f64],
    clusters: &[usize],
    n_clusters: usize,
    inv_cols: &BTreeMap<usize, Vec<f64>>,
    focus: &[usize],
) -> (BTreeMap<usize, f64>, Vec<Vec<f64>>) {
    let (n, k) = (x.n_rows() as f64, x.n_cols as f64);
    let g = n_clusters as f64;
    let c = g / (g - 1.0) * (n - 1.0) / (n - k);
    // t_j[g] = sum over rows in cluster g of (a_j . x_i) * r_i
    let cluster_scores = |a: &Vec<f64>| {
        let mut t = vec![0.0; n_clusters];
        for i in 0..x.n_rows() {
            t[clusters[i]] += x.dot_row(i, a) * resid[i];
        }
        t
    };
    let var: BTreeMap<usize, f64> = inv_cols
        .par_iter()
        .map(|(&j, a)| (j, c * cluster_scores(a).iter().map(|v| v * v).sum::<f64>()))
        .collect();
    let focus_scores: Vec<Vec<f64>> = focus.par_iter().map(|j| cluster_scores(&inv_cols[j])).collect();
    let cov = focus_scores
        .iter()
        .map(|ta| {
            focus_scores
                .iter()
                .map(|tb| c * ta.iter().zip(tb).map(|(p, q)| p * q).sum::<f64>())
                .collect()
        })
        .collect();
    (var, cov)
}

fn cluster_ids(data: &Frame, column: &str, rows: &[usize]) -> Result<(Vec<usize>, usize), StatsError> {
    let col = data.column(column)?;
    let labels: Vec<String> = rows
        .iter()
        .map(|&i| col.label(i).ok_or(StatsError::EmptyData))
        .collect::<Result<_, _>>()?;
    let ids: BTreeMap<&str, usize> = labels
        .iter()
        .map(String::as_str)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    if ids.len() < 2 {
        return Err(StatsError::TooFewClusters(ids.len()));
    }
    Ok((labels.iter().map(|l| ids[l.as_str()]).collect(), ids.len()))
}

pub fn fit_glm(spec: &GlmSpec, data: &Frame) -> Result<GlmFit, StatsError> {
    spec.validate(data)?;
    let rows = data.complete_rows(&spec.required_columns())?;
    if rows.is_empty() {
        return Err(StatsError::EmptyData);
    }
    let yv = data.numeric(&spec.response)?;
    let y: Vec<f64> = rows.iter().map(|&i| yv[i].expect("complete row")).collect();
    if spec.family == Family::Logistic && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(StatsError::NonBinary(spec.response.clone()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(StatsError::ZeroVariance(spec.response.clone()));
    }

    let encoder = Encoder::build(spec, data, &rows)?;
    let full = encoder.design(data, &rows)?;
    let kept = if full.n_cols < DENSE_COLUMN_LIMIT {
        independent_columns(&full.weighted_gram(&vec![1.0; rows.len()]), RANK_TOL)
    } else {
        let diag = full.weighted_diag(&vec![1.0; rows.len()]);
        (0..full.n_cols).filter(|&j| diag[j] > 0.0).collect()
    };
    let dropped = (0..full.n_cols)
        .filter(|j| !kept.contains(j))
        .map(|j| encoder.names[j].clone())
        .collect();
    let x = if kept.len() == full.n_cols {
        full
    } else {
        full.select_columns(&kept)
    };

    let est = match spec.family {
        Family::Logistic => irls(&x, &y)?,
        Family::Linear => ols(&x, &y)?,
    };
    let k = kept.len();
    let focus: Vec<usize> = (0..k).filter(|&j| !encoder.nuisance[kept[j]]).collect();
    let separation = spec.family == Family::Logistic
        && est
            .eta
            .iter()
            .any(|&e| {
                let m = sigmoid(e);
                !(SEPARATION_EPS..=1.0 - SEPARATION_EPS).contains(&m)
            });

    let mut se = vec![None; k];
    let mut robust_se = None;
    let mut n_clusters = None;
    let mut focus_cov = vec![vec![f64::NAN; focus.len()]; focus.len()];
    if let Ok(curv) = Curvature::new(&x, spec.family, &est.eta, &y) {
        let inv_cols: BTreeMap<usize, Vec<f64>> = wanted_columns(&curv.solver, &focus, k)
            .into_iter()
            .map(|j| curv.solver.inverse_column(j).map(|a| (j, a)))
            .collect::<Result<_, _>>()?;
        for (&j, a) in &inv_cols {
            let v = curv.scale * a[j];
            se[j] = (v >= 0.0).then(|| v.sqrt());
        }
        focus_cov = focus
            .iter()
            .map(|a| focus.iter().map(|b| curv.scale * inv_cols[a][*b]).collect())
            .collect();
        if let Some(cl) = &spec.cluster {
            let (ids, g) = cluster_ids(data, cl, &rows)?;
            let resid: Vec<f64> = y.iter().zip(&est.eta).map(|(a, e)| a - spec.family.mean(*e)).collect();
            let (var, cov) = sandwich(&x, &resid, &ids, g, &inv_cols, &focus);
            let mut r = vec![None; k];
            for (j, v) in var {
                r[j] = (v >= 0.0).then(|| v.sqrt());
            }
            robust_se = Some(r);
            n_clusters = Some(g);
            focus_cov = cov;
        }
    }

    Ok(GlmFit {
        family: spec.family,
        response: spec.response.clone(),
        terms: kept.iter().map(|&j| encoder.names[j].clone()).collect(),
        coefficients: est.beta,
        se,
        robust_se,
        deviance: est.deviance,
        deviance_trace: est.trace,
        n_obs: rows.len(),
        n_clusters,
        converged: est.converged,
        iterations: est.iterations,
        separation,
        dropped,
        focus,
        focus_cov,
        encoder: Some(encoder),
        kept,
    })
}

/// Cluster-robust standard errors for an existing fit, clustering on
/// `cluster`. Rows are the complete rows of `data` for `spec` plus the
/// cluster column; entries are `None` for nuisance columns of large designs.
pub fn cluster_robust_se(
    spec: &GlmSpec,
    fit: &GlmFit,
    data: &Frame,
    cluster: &str,
) -> Result<Vec<Option<f64>>, StatsError> {
    let enc = fit
        .encoder
        .as_ref()
        .ok_or_else(|| StatsError::InvalidSpec("fit carries no encoder".into()))?;
    let mut cols = spec.required_columns();
    cols.push(cluster);
    let rows = data.complete_rows(&cols)?;
    let yv = data.numeric(&spec.response)?;
    let y: Vec<f64> = rows.iter().map(|&i| yv[i].expect("complete row")).collect();
    let x = enc.design(data, &rows)?.select_columns(&fit.kept);
    let eta = x.mul_vec(&fit.coefficients);
    let curv = Curvature::new(&x, fit.family, &eta, &y)?;
    let k = fit.kept.len();
    let inv_cols: BTreeMap<usize, Vec<f64>> = wanted_columns(&curv.solver, &fit.focus, k)
        .into_iter()
        .map(|j| curv.solver.inverse_column(j).map(|a| (j, a)))
        .collect::<Result<_, _>>()?;
    let (ids, g) = cluster_ids(data, cluster, &rows)?;
    let resid: Vec<f64> = y.iter().zip(&eta).map(|(a, e)| a - fit.family.mean(*e)).collect();
    let (var, _) = sandwich(&x, &resid, &ids, g, &inv_cols, &fit.focus);
    let mut out = vec![None; k];
    for (j, v) in var {
        out[j] = (v >= 0.0).then(|| v.sqrt());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginSpec {
    /// A `Categorical` term whose levels are contrasted with its reference.
    pub group: String,
    /// A `Continuous` term swept over `grid`.
    pub x: String,
    pub grid: Vec<f64>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub x: f64,
    pub level: String,
    pub reference: String,
    pub predicted: f64,
    pub predicted_reference: f64,
    pub difference: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Predicted differences between each non-reference level of `group` and its
/// reference across the `x` grid. Other continuous terms sit at their sample
/// means and other factors at their reference levels; intervals use the
/// delta method on the fit's focus covariance.
pub fn margins(fit: &GlmFit, spec: &MarginSpec) -> Result<Vec<MarginRow>, StatsError> {
    let enc = fit
        .encoder
        .as_ref()
        .ok_or_else(|| StatsError::InvalidSpec("fit carries no encoder".into()))?;
    let (reference, levels) = match enc.bases.iter().find(|b| b.column() == spec.group) {
        Some(BaseEnc::Factor {
            reference,
            levels,
            nuisance: false,
            ..
        }) => (reference.clone(), levels.clone()),
        _ => {
            return Err(StatsError::InvalidSpec(format!(
                "margin group {:?} is not a categorical term",
                spec.group
            )))
        }
    };
    if !matches!(enc.bases.iter().find(|b| b.column() == spec.x), Some(BaseEnc::Numeric { .. })) {
        return Err(StatsError::InvalidSpec(format!("margin x {:?} is not a continuous term", spec.x)));
    }
    let mut pos = vec![usize::MAX; enc.n_cols()];
    for (k, &j) in fit.kept.iter().enumerate() {
        pos[j] = k;
    }
    let mut focus_pos = vec![usize::MAX; fit.kept.len()];
    for (f, &k) in fit.focus.iter().enumerate() {
        focus_pos[k] = f;
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - spec.confidence) / 2.0);

    let point = |xv: f64, level: &str| -> Result<(f64, Vec<(usize, f64)>), StatsError> {
        let entries = enc
            .encode(|c| {
                if c == spec.x {
                    Some(Cell::Num(xv))
                } else if c == spec.group {
                    Some(Cell::Label(level.to_string()))
                } else if let Some(m) = enc.means.get(c) {
                    Some(Cell::Num(*m))
                } else {
                    enc.bases.iter().find_map(|b| match b {
                        BaseEnc::Factor { column, reference, .. } if column == c => Some(Cell::Label(reference.clone())),
                        _ => None,
                    })
                }
            })
            .ok_or_else(|| StatsError::InvalidSpec("margin point not encodable".into()))?;
        let kept: Vec<(usize, f64)> = entries
            .into_iter()
            .filter(|(j, _)| pos[*j] != usize::MAX)
            .map(|(j, v)| (pos[j], v))
            .collect();
        let eta: f64 = kept.iter().map(|(k, v)| v * fit.coefficients[*k]).sum();
        Ok((eta, kept))
    };

    let mut out = Vec::new();
    for &xv in &spec.grid {
        let (eta0, x0) = point(xv, &reference)?;
        for level in &levels {
            let (eta1, x1) = point(xv, level)?;
            let mut grad = vec![0.0; fit.focus.len()];
            for (entries, sign, eta) in [(&x1, 1.0, eta1), (&x0, -1.0, eta0)] {
                let s = fit.family.slope(eta);
                for &(k, v) in entries {
                    let f = focus_pos[k];
                    if f == usize::MAX {
                        return Err(StatsError::InvalidSpec("margin point loads a nuisance column".into()));
                    }
                    grad[f] += sign * s * v;
                }
            }
            let var: f64 = (0..grad.len())
                .flat_map(|a| (0..grad.len()).map(move |b| (a, b)))
                .map(|(a, b)| grad[a] * grad[b] * fit.focus_cov[a][b])
                .sum();
            let (p1, p0) = (fit.family.mean(eta1), fit.family.mean(eta0));
            let diff = p1 - p0;
            let se = var.max(0.0).sqrt();
            out.push(MarginRow {
                x: xv,
                level: level.clone(),
                reference: reference.clone(),
                predicted: p1,
                predicted_reference: p0,
                difference: diff,
                se,
                lower: diff - z * se,
                upper: diff + z * se,
            });
        }
    }
    Ok(out)
}
