//! Pixel confusion counts and the five extraction metrics.

use std::fmt::{self, Write as _};
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster_io::BinaryMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl Sum for ConfusionMatrix {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Per-pixel tally of a prediction against ground truth.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<ConfusionMatrix> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::Argument(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut counts = [0u64; 4];
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        counts[usize::from(p) * 2 + usize::from(g)] += 1;
    }
    let [tn, fn_, fp, tp] = counts;
    Ok(ConfusionMatrix { tp, tn, fp, fn_ })
}

/// Component-wise sum; the empty sum is the zero matrix.
pub fn accumulate<'a>(cms: impl IntoIterator<Item = &'a ConfusionMatrix>) -> ConfusionMatrix {
    cms.into_iter().copied().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    F1,
    Recall,
    Precision,
    Oa,
    Iou,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::F1 => "F1",
            Metric::Recall => "Recall",
            Metric::Precision => "Precision",
            Metric::Oa => "OA",
            Metric::Iou => "IoU",
        })
    }
}

/// Metric values in [0, 1]. A metric whose defining ratio is 0/0 is
/// reported as 0 and listed in `degenerate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub recall: f64,
    pub precision: f64,
    pub oa: f64,
    pub iou: f64,
    pub degenerate: Vec<Metric>,
}

impl MetricsReport {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::F1 => self.f1,
            Metric::Recall => self.recall,
            Metric::Precision => self.precision,
            Metric::Oa => self.oa,
            Metric::Iou => self.iou,
        }
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(Error::Argument("confusion matrix counts no pixels".into()));
    }
    let mut degenerate = Vec::new();
    let mut ratio = |num: u64, den: u64, m: Metric| {
        if den == 0 {
            degenerate.push(m);
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let recall = ratio(cm.tp, cm.tp + cm.fn_, Metric::Recall);
    let precision = ratio(cm.tp, cm.tp + cm.fp, Metric::Precision);
    let oa = ratio(cm.tp + cm.tn, cm.total(), Metric::Oa);
    let iou = ratio(cm.tp, cm.tp + cm.fp + cm.fn_, Metric::Iou);
    // harmonic mean of precision and recall; its limit is 0 when TP = 0
    // and there is at least one error pixel
    let f1 = if cm.tp + cm.fp + cm.fn_ == 0 {
        degenerate.push(Metric::F1);
        0.0
    } else if cm.tp == 0 {
        0.0
    } else {
        2.0 / (1.0 / recall + 1.0 / precision)
    };
    degenerate.sort();
    Ok(MetricsReport {
        f1,
        recall,
        precision,
        oa,
        iou,
        degenerate,
    })
}

/// Column order of the text table.
pub const TABLE_COLUMNS: [Metric; 5] = [Metric::F1, Metric::Recall, Metric::Precision, Metric::Oa, Metric::Iou];

/// Aligned plain-text table, one row per `(name, report)`.
pub fn format_table<'a>(rows: impl IntoIterator<Item = (&'a str, &'a MetricsReport)>) -> String {
    let rows: Vec<_> = rows.into_iter().collect();
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("{:<name_w$}", "Image");
    for m in TABLE_COLUMNS {
        let _ = write!(out, "  {:>9}", m.to_string());
    }
    out.push('\n');
    for (name, r) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for m in TABLE_COLUMNS {
            let cell = if r.degenerate.contains(&m) {
                "n/a".to_string()
            } else {
                format!("{:.4}", r.get(m))
            };
            let _ = write!(out, "  {cell:>9}");
        }
        out.push('\n');
    }
    out
}
