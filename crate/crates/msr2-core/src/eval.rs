//! Interval-class evaluation metrics over prediction files: accuracy and
//! macro precision/recall/F1.

use crate::reward::{months_to_class, outcome_reward, IntervalTable, SentenceValue,
    INTERVAL_CLASS_COUNT};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEval,
    #[error("duplicate case_id {0:?}")]
    DuplicateCase(String),
    #[error("prediction file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One evaluation case: gold term plus the (possibly unparsable) prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case_id: String,
    pub gold_months: SentenceValue,
    /// `None` marks an unparsable prediction, which counts as wrong.
    pub pred_months: Option<SentenceValue>,
}

fn check_unique(records: &[EvalRecord]) -> Result<(), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.case_id.as_str()) {
            return Err(EvalError::DuplicateCase(r.case_id.clone()));
        }
    }
    Ok(())
}

/// Fraction of records whose predicted and gold classes match.
pub fn accuracy(records: &[EvalRecord], table: &IntervalTable) -> Result<f64, EvalError> {
    check_unique(records)?;
    let correct: u32 = records
        .iter()
        .map(|r| u32::from(outcome_reward(r.pred_months, r.gold_months, table)))
        .sum();
    Ok(f64::from(correct) / records.len() as f64)
}

/// 10x10 confusion counts: `matrix[gold][pred]`. Unparsable predictions
/// contribute to the gold class's misses but to no predicted class.
pub fn confusion_matrix(
    records: &[EvalRecord],
    table: &IntervalTable,
) -> Result<Vec<Vec<u32>>, EvalError> {
    check_unique(records)?;
    let mut matrix = vec![vec![0u32; INTERVAL_CLASS_COUNT]; INTERVAL_CLASS_COUNT];
    for r in records {
        let gold = months_to_class(r.gold_months, table);
        if let Some(pred) = r.pred_months {
            matrix[gold][months_to_class(pred, table)] += 1;
        }
    }
    Ok(matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Macro precision/recall/F1 averaged over all ten classes; classes with an
/// undefined (0/0) statistic contribute zero.
pub fn macro_prf(records: &[EvalRecord], table: &IntervalTable) -> Result<MacroPrf, EvalError> {
    check_unique(records)?;
    let matrix = confusion_matrix(records, table)?;
    let mut unparsable_by_gold = vec![0u32; INTERVAL_CLASS_COUNT];
    for r in records {
        if r.pred_months.is_none() {
            unparsable_by_gold[months_to_class(r.gold_months, table)] += 1;
        }
    }

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for class in 0..INTERVAL_CLASS_COUNT {
        let tp = f64::from(matrix[class][class]);
        let predicted: f64 = (0..INTERVAL_CLASS_COUNT)
            .map(|g| f64::from(matrix[g][class]))
            .sum();
        let gold: f64 = matrix[class].iter().map(|&c| f64::from(c)).sum::<f64>()
            + f64::from(unparsable_by_gold[class]);
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if gold > 0.0 { tp / gold } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
    }
    let n = INTERVAL_CLASS_COUNT as f64;
    Ok(MacroPrf {
        precision: precision_sum / n,
        recall: recall_sum / n,
        f1: f1_sum / n,
    })
}

/// Machine-readable evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub records: usize,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Averaging convention: denominators always cover all table classes.
    pub macro_average_over_classes: usize,
}

pub fn summarize(records: &[EvalRecord], table: &IntervalTable) -> Result<MetricsSummary, EvalError> {
    let prf = macro_prf(records, table)?;
    Ok(MetricsSummary {
        records: records.len(),
        accuracy: accuracy(records, table)?,
        macro_precision: prf.precision,
        macro_recall: prf.recall,
        macro_f1: prf.f1,
        macro_average_over_classes: INTERVAL_CLASS_COUNT,
    })
}

/// Reads a prediction CSV with header `case_id,gold_months,pred_months`;
/// an empty or `NA` prediction field marks an unparsable prediction.
pub fn read_predictions(path: &Path) -> Result<Vec<EvalRecord>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let mut records = Vec::new();
    for (idx, row) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let row = row.map_err(|e| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        if row.len() != 3 {
            return Err(EvalError::Parse {
                line,
                message: format!("expected 3 fields, got {}", row.len()),
            });
        }
        let gold: f64 = row[1].trim().parse().map_err(|_| EvalError::Parse {
            line,
            message: format!("bad gold_months {:?}", &row[1]),
        })?;
        let gold_months = SentenceValue::new(gold).map_err(|e| EvalError::Parse {
            line,
            message: e.to_string(),
        })?;
        let pred_raw = row[2].trim();
        let pred_months = if pred_raw.is_empty() || pred_raw.eq_ignore_ascii_case("na") {
            None
        } else {
            let v: f64 = pred_raw.parse().map_err(|_| EvalError::Parse {
                line,
                message: format!("bad pred_months {pred_raw:?}"),
            })?;
            Some(SentenceValue::new(v).map_err(|e| EvalError::Parse {
                line,
                message: e.to_string(),
            })?)
        };
        records.push(EvalRecord {
            case_id: row[0].trim().to_string(),
            gold_months,
            pred_months,
        });
    }
    Ok(records)
}

pub fn write_predictions(path: &Path, records: &[EvalRecord]) -> Result<(), EvalError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer
        .write_record(["case_id", "gold_months", "pred_months"])
        .map_err(csv_error)?;
    for r in records {
        let pred = r
            .pred_months
            .map_or_else(|| "NA".to_string(), |p| format!("{}", p.months()));
        writer
            .write_record([
                r.case_id.as_str(),
                &format!("{}", r.gold_months.months()),
                &pred,
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> EvalError {
    EvalError::Parse {
        line: 0,
        message: e.to_string(),
    }
}

impl From<csv::Error> for EvalError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(_) => {
                let io = match e.into_kind() {
                    csv::ErrorKind::Io(io) => io,
                    _ => unreachable!(),
                };
                EvalError::Io(io)
            }
            _ => csv_error(e),
        }
    }
}
