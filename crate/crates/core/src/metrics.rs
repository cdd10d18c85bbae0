//! Segmentation metrics from a ground-truth × prediction confusion matrix.
//!
//! Per class `k`: `IoU = TP/(TP+FP+FN)`, `recall = TP/(TP+FN)`,
//! `precision = TP/(TP+FP)`. Means run over classes with any support
//! (`TP+FP+FN > 0`); a supported class with an empty recall or precision
//! denominator scores 0 on that ratio.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::raster::LabelRaster;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    /// Row = ground truth, column = prediction.
    counts: Vec<u64>,
    ignore: BTreeSet<u8>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Result<Self> {
        Self::with_ignore(classes, [])
    }

    pub fn with_ignore(classes: usize, ignore: impl IntoIterator<Item = u8>) -> Result<Self> {
        if classes == 0 || classes > 256 {
            return Err(Error::invalid(format!("class count must be in 1..=256, got {classes}")));
        }
        Ok(Self {
            classes,
            counts: vec![0; classes * classes],
            ignore: ignore.into_iter().collect(),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_ignored(&self, label: u8) -> bool {
        self.ignore.contains(&label)
    }

    pub fn accumulate(&mut self, pred: &LabelRaster, gt: &LabelRaster) -> Result<()> {
        if pred.height != gt.height || pred.width != gt.width {
            return Err(Error::invalid(format!(
                "prediction is {}x{} but ground truth is {}x{}",
                pred.height, pred.width, gt.height, gt.width
            )));
        }
        self.accumulate_slices(&pred.data, &gt.data)
    }

    /// Validates the whole batch before touching any count.
    pub fn accumulate_slices(&mut self, pred: &[u8], gt: &[u8]) -> Result<()> {
        if pred.len() != gt.len() {
            return Err(Error::invalid("prediction and ground truth lengths differ"));
        }
        let k = self.classes;
        for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
            if self.is_ignored(*g) {
                continue;
            }
            if *g as usize >= k {
                return Err(Error::invalid(format!("ground-truth label {g} at {i} is >= {k} classes")));
            }
            if *p as usize >= k {
                return Err(Error::invalid(format!("predicted label {p} at {i} is >= {k} classes")));
            }
        }
        for (p, g) in pred.iter().zip(gt) {
            if !self.is_ignored(*g) {
                self.counts[*g as usize * k + *p as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::invalid("cannot merge matrices with different class counts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn summarize(&self) -> Result<MetricReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("confusion matrix is empty"));
        }
        let k = self.classes;
        let mut per_class = Vec::with_capacity(k);
        let mut trace = 0u64;
        for c in 0..k {
            let tp = self.count(c, c);
            trace += tp;
            let row: u64 = (0..k).map(|p| self.count(c, p)).sum();
            let col: u64 = (0..k).map(|g| self.count(g, c)).sum();
            let fn_ = row - tp;
            let fp = col - tp;
            let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
            per_class.push(if tp + fp + fn_ == 0 {
                None
            } else {
                Some(ClassMetrics {
                    iou: ratio(tp, tp + fp + fn_),
                    recall: ratio(tp, tp + fn_),
                    precision: ratio(tp, tp + fp),
                    support: row,
                })
            });
        }
        let present: Vec<&ClassMetrics> = per_class.iter().flatten().collect();
        let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|m| f(m)).sum::<f64>() / present.len() as f64;
        Ok(MetricReport {
            acc: trace as f64 / total as f64,
            m_recall: mean(|m| m.recall),
            m_precision: mean(|m| m.precision),
            m_iou: mean(|m| m.iou),
            per_class,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub iou: f64,
    pub recall: f64,
    pub precision: f64,
    /// Ground-truth pixel count.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub acc: f64,
    pub m_recall: f64,
    pub m_precision: f64,
    pub m_iou: f64,
    /// `None` for classes absent from both ground truth and prediction.
    pub per_class: Vec<Option<ClassMetrics>>,
}

/// JSON summary; field order follows the usual results-table layout.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricSummary {
    #[serde(rename = "Acc")]
    pub acc: f64,
    #[serde(rename = "mRecall")]
    pub m_recall: f64,
    #[serde(rename = "mPrecision")]
    pub m_precision: f64,
    #[serde(rename = "mIoU")]
    pub m_iou: f64,
    pub classes_evaluated: usize,
}

impl MetricReport {
    pub fn summary(&self) -> MetricSummary {
        MetricSummary {
            acc: self.acc,
            m_recall: self.m_recall,
            m_precision: self.m_precision,
            m_iou: self.m_iou,
            classes_evaluated: self.per_class.iter().flatten().count(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }

    /// One row per class; absent classes have empty metric fields.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::from("class_id,class_name,Acc,Recall,Precision,IoU\n");
        for (k, m) in self.per_class.iter().enumerate() {
            let name = names.get(k).map(String::as_str).unwrap_or("");
            match m {
                // Per-class pixel accuracy coincides with recall.
                Some(m) => writeln!(
                    out,
                    "{k},{name},{:.6},{:.6},{:.6},{:.6}",
                    m.recall, m.recall, m.precision, m.iou
                ),
                None => writeln!(out, "{k},{name},,,,"),
            }
            .expect("write to string");
        }
        writeln!(
            out,
            "mean,,{:.6},{:.6},{:.6},{:.6}",
            self.acc, self.m_recall, self.m_precision, self.m_iou
        )
        .expect("write to string");
        out
    }
}

/// How the void label is scored in BEV evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VoidMode {
    /// Void is an extra class with id `classes`.
    #[default]
    Class,
    /// Cells whose ground truth is void are skipped.
    Ignore,
}

impl std::str::FromStr for VoidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(VoidMode::Class),
            "ignore" => Ok(VoidMode::Ignore),
            _ => Err(Error::invalid(format!("void mode must be `class` or `ignore`, got {s:?}"))),
        }
    }
}

/// Confusion matrix for `classes` dense ids plus a void label.
pub fn void_aware_matrix(classes: usize, void: u8, mode: VoidMode) -> Result<ConfusionMatrix> {
    match mode {
        VoidMode::Class => ConfusionMatrix::new(classes + 1),
        VoidMode::Ignore => ConfusionMatrix::with_ignore(classes, [void]),
    }
}

/// Maps `void` to id `classes` in [`VoidMode::Class`]; identity otherwise.
pub fn remap_void(labels: &[u8], classes: usize, void: u8, mode: VoidMode) -> Vec<u8> {
    match mode {
        VoidMode::Class if classes < 256 => labels
            .iter()
            .map(|l| if *l == void { classes as u8 } else { *l })
            .collect(),
        _ => labels.to_vec(),
    }
}
