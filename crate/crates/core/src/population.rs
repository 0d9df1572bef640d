//! Transaction populations: reported values, weights, optional scores and
//! (for simulations) the true misstated fractions.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::scalar::{compensated_sum, Scalar};

/// Normalizes positive reported values into weights summing to one.
pub fn normalize_weights<T: Scalar>(reported: &[T]) -> Result<Vec<T>> {
    if reported.is_empty() {
        return Err(AuditError::Validation("population is empty".into()));
    }
    if let Some(i) = reported.iter().position(|&v| !(v > T::zero()) || !v.is_finite()) {
        return Err(AuditError::Validation(format!(
            "reported value at index {i} must be positive and finite, got {}",
            reported[i]
        )));
    }
    let total = compensated_sum(reported.iter().copied());
    Ok(reported.iter().map(|&v| v / total).collect())
}

/// The audited population. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Population<T: Scalar> {
    ids: Vec<String>,
    reported: Vec<T>,
    weights: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<Vec<T>>,
}

fn check_unit_column<T: Scalar>(name: &str, values: &[T], n: usize) -> Result<()> {
    if values.len() != n {
        return Err(AuditError::Validation(format!(
            "{name} has {} entries, expected {n}",
            values.len()
        )));
    }
    if let Some(i) = values
        .iter()
        .position(|&v| !(v >= T::zero() && v <= T::one()))
    {
        return Err(AuditError::Validation(format!(
            "{name} at index {i} must lie in [0, 1], got {}",
            values[i]
        )));
    }
    Ok(())
}

impl<T: Scalar> Population<T> {
    pub fn new(
        ids: Vec<String>,
        reported: Vec<T>,
        scores: Option<Vec<T>>,
        truth: Option<Vec<T>>,
    ) -> Result<Self> {
        let weights = normalize_weights(&reported)?;
        let n = reported.len();
        if ids.len() != n {
            return Err(AuditError::Validation(format!(
                "{} ids for {n} transactions",
                ids.len()
            )));
        }
        if let Some(s) = &scores {
            check_unit_column("score", s, n)?;
        }
        if let Some(f) = &truth {
            check_unit_column("true_f", f, n)?;
        }
        Ok(Self {
            ids,
            reported,
            weights,
            scores,
            truth,
        })
    }

    /// Population with ids `"0"`, `"1"`, ...
    pub fn from_values(
        reported: Vec<T>,
        scores: Option<Vec<T>>,
        truth: Option<Vec<T>>,
    ) -> Result<Self> {
        let ids = (0..reported.len()).map(|i| i.to_string()).collect();
        Self::new(ids, reported, scores, truth)
    }

    pub fn len(&self) -> usize {
        self.reported.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reported.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn reported(&self) -> &[T] {
        &self.reported
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn scores(&self) -> Option<&[T]> {
        self.scores.as_deref()
    }

    pub fn truth(&self) -> Option<&[T]> {
        self.truth.as_deref()
    }

    pub fn total_value(&self) -> T {
        compensated_sum(self.reported.iter().copied())
    }

    /// Weighted misstated fraction, when the truth is known.
    pub fn m_star(&self) -> Option<T> {
        self.truth.as_ref().map(|f| {
            compensated_sum(self.weights.iter().zip(f).map(|(&w, &fi)| w * fi))
        })
    }

    pub fn with_scores(&self, scores: Vec<T>) -> Result<Self> {
        Self::new(
            self.ids.clone(),
            self.reported.clone(),
            Some(scores),
            self.truth.clone(),
        )
    }

    /// Copy with the truth column removed.
    pub fn without_truth(&self) -> Self {
        Self {
            truth: None,
            ..self.clone()
        }
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let value_col = col("reported_value").ok_or_else(|| {
            AuditError::Format("missing required column `reported_value`".into())
        })?;
        let id_col = col("id");
        let score_col = col("score");
        let truth_col = col("true_f");

        let mut ids = Vec::new();
        let mut reported = Vec::new();
        let mut scores = score_col.map(|_| Vec::new());
        let mut truth = truth_col.map(|_| Vec::new());

        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            // header is line 1
            let line = row + 2;
            let cell = |c: usize, name: &str| -> Result<T> {
                let raw = record.get(c).unwrap_or("");
                raw.parse::<f64>()
                    .ok()
                    .and_then(T::from_f64)
                    .ok_or_else(|| {
                        AuditError::Format(format!(
                            "row {line}: column `{name}` is not numeric: {raw:?}"
                        ))
                    })
            };
            ids.push(match id_col {
                Some(c) => record.get(c).unwrap_or("").to_string(),
                None => row.to_string(),
            });
            reported.push(cell(value_col, "reported_value")?);
            if let (Some(c), Some(s)) = (score_col, scores.as_mut()) {
                s.push(cell(c, "score")?);
            }
            if let (Some(c), Some(f)) = (truth_col, truth.as_mut()) {
                f.push(cell(c, "true_f")?);
            }
        }
        Self::new(ids, reported, scores, truth)
    }

    pub fn load_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    /// Writes the population in the same CSV layout it is read from.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id", "reported_value"];
        if self.scores.is_some() {
            header.push("score");
        }
        if self.truth.is_some() {
            header.push("true_f");
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.ids[i].clone(), self.reported[i].to_string()];
            if let Some(s) = &self.scores {
                row.push(s[i].to_string());
            }
            if let Some(f) = &self.truth {
                row.push(f[i].to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads a CSV population with `f64` values.
pub fn load_population<P: AsRef<Path>>(path: P) -> Result<Population<f64>> {
    Population::load_csv(path)
}
