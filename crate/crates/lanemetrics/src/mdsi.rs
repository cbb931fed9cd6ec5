//! Driving-style questionnaire scoring: reverse coding, weighted-sum and
//! regression-method factor scores, style assignment, and Cronbach's alpha.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCALE_MIN: i64 = 1;
pub const SCALE_MAX: i64 = 6;

/// The six scored driving-style factors, in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Angry,
    Risky,
    Anxious,
    Dissociative,
    Careful,
    DistressReduction,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::Angry,
        Factor::Risky,
        Factor::Anxious,
        Factor::Dissociative,
        Factor::Careful,
        Factor::DistressReduction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Angry => "angry",
            Factor::Risky => "risky",
            Factor::Anxious => "anxious",
            Factor::Dissociative => "dissociative",
            Factor::Careful => "careful",
            Factor::DistressReduction => "distress_reduction",
        }
    }

    pub fn parse(s: &str) -> Option<Factor> {
        Factor::ALL.into_iter().find(|f| f.name() == s)
    }
}

/// One (item, factor) assignment with its loading. An item may serve
/// several factors, possibly reversed in one and not another.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemAssignment {
    pub item_id: u32,
    pub factor: Factor,
    pub loading: f64,
    pub reversed: bool,
}

/// The scoring model: loadings and reverse flags per (item, factor) pair.
/// Loadings are configuration data; a default six-factor model with unit
/// loadings on the validated items is bundled.
#[derive(Debug, Clone)]
pub struct ItemBank {
    pub assignments: Vec<ItemAssignment>,
}

impl ItemBank {
    pub fn bundled_default() -> ItemBank {
        ItemBank::from_csv_str(include_str!("../data/mdsi_items.csv"))
            .expect("bundled item bank is valid")
    }

    pub fn from_csv_path(path: &Path) -> Result<ItemBank> {
        let mut text = String::new();
        std::fs::File::open(path)?.read_to_string(&mut text)?;
        ItemBank::from_csv_str(&text)
    }

    pub fn from_csv_str(text: &str) -> Result<ItemBank> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut assignments = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let row = row?;
            let field = |j: usize| row.get(j).unwrap_or("").trim();
            let parse_err = |column: &str| Error::ParseError {
                row: i + 2,
                column: column.to_string(),
            };
            assignments.push(ItemAssignment {
                item_id: field(0).parse().map_err(|_| parse_err("item_id"))?,
                factor: Factor::parse(field(1)).ok_or_else(|| parse_err("factor"))?,
                loading: field(2).parse().map_err(|_| parse_err("loading"))?,
                reversed: field(3).parse().map_err(|_| parse_err("reversed"))?,
            });
        }
        let bank = ItemBank { assignments };
        for a in &bank.assignments {
            if !a.loading.is_finite() || a.loading == 0.0 {
                return Err(Error::Config(format!(
                    "item {} has invalid loading {}",
                    a.item_id, a.loading
                )));
            }
        }
        Ok(bank)
    }

    pub fn factor_items(&self, factor: Factor) -> Vec<&ItemAssignment> {
        self.assignments.iter().filter(|a| a.factor == factor).collect()
    }

    /// Sorted unique item ids used by any factor.
    pub fn item_ids(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.assignments.iter().map(|a| a.item_id).collect();
        set.into_iter().collect()
    }
}

/// One subject's questionnaire answers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseSet {
    pub subject_id: String,
    pub answers: BTreeMap<u32, i64>,
}

/// Loads responses from a delimited table: first column subject_id, the
/// remaining headers are item ids (optionally prefixed "item_").
pub fn load_responses(path: &Path) -> Result<Vec<ResponseSet>> {
    let mut text = String::new();
    std::fs::File::open(path)?.read_to_string(&mut text)?;
    load_responses_str(&text)
}

pub fn load_responses_str(text: &str) -> Result<Vec<ResponseSet>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut item_cols: Vec<(usize, u32)> = Vec::new();
    for (j, name) in headers.iter().enumerate().skip(1) {
        let id: u32 = name
            .trim()
            .trim_start_matches("item_")
            .parse()
            .map_err(|_| Error::MissingColumn(name.to_string()))?;
        item_cols.push((j, id));
    }
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let subject_id = row.get(0).unwrap_or("").trim().to_string();
        let mut answers = BTreeMap::new();
        for &(j, id) in &item_cols {
            let cell = row.get(j).unwrap_or("").trim();
            if cell.is_empty() {
                continue; // missing answer, subject flagged downstream
            }
            let v: i64 = cell.parse().map_err(|_| Error::ParseError {
                row: i + 2,
                column: headers[j].to_string(),
            })?;
            if !(SCALE_MIN..=SCALE_MAX).contains(&v) {
                return Err(Error::OutOfScale(v, SCALE_MAX));
            }
            answers.insert(id, v);
        }
        out.push(ResponseSet { subject_id, answers });
    }
    Ok(out)
}

/// Reverse coding on the 6-point scale: answer -> 7 - answer.
pub fn reverse_code(answer: i64) -> Result<i64> {
    if !(SCALE_MIN..=SCALE_MAX).contains(&answer) {
        return Err(Error::OutOfScale(answer, SCALE_MAX));
    }
    Ok(SCALE_MAX + 1 - answer)
}

/// Per-subject factor scores. `None` marks a factor the subject could not
/// be scored on (missing answers), with the missing items recorded.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectScores {
    pub subject_id: String,
    pub scores: BTreeMap<Factor, Option<f64>>,
    pub missing_items: Vec<u32>,
}

/// Non-refined weighted-sum scores: sum(loading * coded answer) /
/// sum(|loading|) over a factor's items, after reverse coding.
pub fn weighted_sum_scores(responses: &[ResponseSet], bank: &ItemBank) -> Vec<SubjectScores> {
    responses
        .iter()
        .map(|resp| {
            let mut scores = BTreeMap::new();
            let mut missing = BTreeSet::new();
            for factor in Factor::ALL {
                let items = bank.factor_items(factor);
                let mut num = 0.0;
                let mut den = 0.0;
                let mut complete = true;
                for a in &items {
                    match resp.answers.get(&a.item_id) {
                        Some(&answer) => {
                            let coded = if a.reversed {
                                reverse_code(answer).expect("validated on load")
                            } else {
                                answer
                            };
                            num += a.loading * coded as f64;
                            den += a.loading.abs();
                        }
                        None => {
                            complete = false;
                            missing.insert(a.item_id);
                        }
                    }
                }
                scores.insert(factor, if complete && den > 0.0 { Some(num / den) } else { None });
            }
            SubjectScores {
                subject_id: resp.subject_id.clone(),
                scores,
                missing_items: missing.into_iter().collect(),
            }
        })
        .collect()
}

/// Refined regression-method factor scores: standardize coded answers per
/// item across the cohort (Z), then scores = Z * R^-1 * L with R the item
/// correlation matrix and L the signed loading matrix. Per-factor cohort
/// means are 0 by construction. Only subjects with complete answers over
/// the bank's items are accepted.
pub fn refined_scores(responses: &[ResponseSet], bank: &ItemBank) -> Result<Vec<SubjectScores>> {
    let item_ids = bank.item_ids();
    let p = item_ids.len();
    let n = responses.len();
    if n <= p {
        return Err(Error::CohortTooSmall { n, items: p });
    }
    for resp in responses {
        let missing: Vec<u32> = item_ids
            .iter()
            .copied()
            .filter(|id| !resp.answers.contains_key(id))
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingAnswers {
                subject: resp.subject_id.clone(),
                items: missing,
            });
        }
    }

    // raw answer matrix, then column standardization; a reversed answer
    // standardizes to the negated z-score, so reversal is folded into the
    // loading sign instead of recoding
    let raw = DMatrix::from_fn(n, p, |i, j| responses[i].answers[&item_ids[j]] as f64);
    let mut z = DMatrix::zeros(n, p);
    let mut constant_items = Vec::new();
    for j in 0..p {
        let col = raw.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        if var <= 0.0 {
            constant_items.push(item_ids[j]);
            continue;
        }
        let sd = var.sqrt();
        for i in 0..n {
            z[(i, j)] = (raw[(i, j)] - mean) / sd;
        }
    }

    let mut lambda = DMatrix::zeros(p, Factor::ALL.len());
    for a in &bank.assignments {
        let j = item_ids.binary_search(&a.item_id).expect("id in bank");
        if constant_items.contains(&a.item_id) {
            continue; // zero column in Z, keep zero loading
        }
        let k = Factor::ALL.iter().position(|&f| f == a.factor).unwrap();
        lambda[(j, k)] += if a.reversed { -a.loading } else { a.loading };
    }

    let r = z.transpose() * &z / (n as f64 - 1.0);
    // constant items leave zero rows; replace their diagonal with 1 so the
    // system stays solvable without affecting other items
    let mut r_solv = r.clone();
    for j in 0..p {
        if r_solv[(j, j)] == 0.0 {
            r_solv[(j, j)] = 1.0;
        }
    }
    let weights = match r_solv.clone().lu().solve(&lambda) {
        Some(w) => w,
        None => {
            let mut ridge = r_solv;
            for j in 0..p {
                ridge[(j, j)] += 1e-8;
            }
            ridge.lu().solve(&lambda).ok_or(Error::SingularCorrelation)?
        }
    };
    let scores = z * weights;

    Ok(responses
        .iter()
        .enumerate()
        .map(|(i, resp)| SubjectScores {
            subject_id: resp.subject_id.clone(),
            scores: Factor::ALL
                .iter()
                .enumerate()
                .map(|(k, &f)| (f, Some(scores[(i, k)])))
                .collect(),
            missing_items: vec![],
        })
        .collect())
}

/// Style assignment: the factor with the highest refined score; exact ties
/// go to the earlier factor in the fixed order and raise the tie flag.
pub fn assign_style(scores: &SubjectScores) -> Result<(Factor, bool)> {
    let mut values = Vec::with_capacity(6);
    for factor in Factor::ALL {
        match scores.scores.get(&factor).copied().flatten() {
            Some(v) => values.push((factor, v)),
            None => return Err(Error::IncompleteScores),
        }
    }
    let (mut best, mut best_v) = values[0];
    let mut tie = false;
    for &(f, v) in &values[1..] {
        if v > best_v {
            best = f;
            best_v = v;
            tie = false;
        } else if v == best_v {
            tie = true;
        }
    }
    Ok((best, tie))
}

/// Cronbach's alpha over a subjects x items answer matrix (coded answers,
/// reverse coding already applied). Variances use denominator n-1.
pub fn cronbach_alpha(items: &DMatrix<f64>) -> Result<f64> {
    let (n, k) = (items.nrows(), items.ncols());
    if n < 2 || k < 2 {
        return Err(Error::TooFewPoints(n.min(k)));
    }
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
    };
    let item_var_sum: f64 = (0..k)
        .map(|j| var(&items.column(j).iter().copied().collect::<Vec<_>>()))
        .sum();
    let totals: Vec<f64> = (0..n).map(|i| items.row(i).sum()).collect();
    let total_var = var(&totals);
    if total_var <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(k as f64 / (k as f64 - 1.0) * (1.0 - item_var_sum / total_var))
}
