//! Confusion-matrix metrics and ROC analysis.
//!
//! Bonafide is the positive class. Rows are actual classes, columns
//! predicted classes:
//!
//! ```text
//!                    predicted bonafide   predicted attack
//! actual bonafide          TP                   FN
//! actual attack            FP                   TN
//! ```
//!
//! FAR = FP/(FP+TN) and FRR = FN/(TP+FN), so a false accept is an attack
//! let through as bonafide.

use std::fmt::Write as _;

use crate::data::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Actual bonafide count.
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Actual attack count.
    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }
}

pub fn confusion(preds: &[Label], labels: &[Label]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (y, p) {
            (Label::Bonafide, Label::Bonafide) => cm.tp += 1,
            (Label::Bonafide, Label::Attack) => cm.fn_ += 1,
            (Label::Attack, Label::Bonafide) => cm.fp += 1,
            (Label::Attack, Label::Attack) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// The same counts read with attack as the positive class.
pub fn class_swap(cm: &ConfusionMatrix) -> ConfusionMatrix {
    ConfusionMatrix {
        tp: cm.tn,
        fn_: cm.fp,
        fp: cm.fn_,
        tn: cm.tp,
    }
}

/// A ratio metric; `degenerate` marks a zero denominator, in which case
/// `value` is 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f32,
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> Score {
    if den == 0 {
        Score {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Score {
            value: (num as f64 / den as f64) as f32,
            degenerate: false,
        }
    }
}

pub fn precision(cm: &ConfusionMatrix) -> Score {
    ratio(cm.tp, cm.tp + cm.fp)
}

pub fn recall(cm: &ConfusionMatrix) -> Score {
    ratio(cm.tp, cm.tp + cm.fn_)
}

pub fn f1(cm: &ConfusionMatrix) -> Score {
    let tp = cm.tp as f64;
    let (pd, rd) = (cm.tp + cm.fp, cm.tp + cm.fn_);
    if pd == 0 || rd == 0 || cm.tp == 0 {
        return Score {
            value: 0.0,
            degenerate: true,
        };
    }
    let p = tp / pd as f64;
    let r = tp / rd as f64;
    Score {
        value: (2.0 * p * r / (p + r)) as f32,
        degenerate: false,
    }
}

fn rate(num: u64, den: u64, what: &str) -> Result<f32> {
    if den == 0 {
        return Err(Error::Undefined(format!(
            "{what} is undefined without samples of that class"
        )));
    }
    Ok((num as f64 / den as f64) as f32)
}

pub fn far(cm: &ConfusionMatrix) -> Result<f32> {
    rate(cm.fp, cm.negatives(), "FAR")
}

pub fn frr(cm: &ConfusionMatrix) -> Result<f32> {
    rate(cm.fn_, cm.positives(), "FRR")
}

pub fn hter(cm: &ConfusionMatrix) -> Result<f32> {
    Ok((far(cm)? + frr(cm)?) / 2.0)
}

/// Precision, recall and F1 of one class treated as positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub class: Label,
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
}

impl ClassScores {
    fn of(class: Label, cm: &ConfusionMatrix) -> Self {
        Self {
            class,
            precision: precision(cm),
            recall: recall(cm),
            f1: f1(cm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub bonafide: ClassScores,
    pub attack: ClassScores,
    pub far: f32,
    pub frr: f32,
    pub hter: f32,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let (far, frr) = (far(&cm)?, frr(&cm)?);
        Ok(Self {
            bonafide: ClassScores::of(Label::Bonafide, &cm),
            attack: ClassScores::of(Label::Attack, &class_swap(&cm)),
            far,
            frr,
            hter: (far + frr) / 2.0,
            confusion: cm,
        })
    }

    pub fn from_predictions(preds: &[Label], labels: &[Label]) -> Result<Self> {
        Self::from_confusion(confusion(preds, labels)?)
    }

    pub fn classes(&self) -> [&ClassScores; 2] {
        [&self.bonafide, &self.attack]
    }

    /// `class,precision,recall,f1` rows followed by `far`, `frr`, `hter` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1\n");
        for c in self.classes() {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                c.class, c.precision.value, c.recall.value, c.f1.value
            );
        }
        let _ = writeln!(out, "far,{:.6}", self.far);
        let _ = writeln!(out, "frr,{:.6}", self.frr);
        let _ = writeln!(out, "hter,{:.6}", self.hter);
        out
    }

    /// Aligned table; degenerate scores are marked with `*`.
    pub fn render_text(&self) -> String {
        let mark = |s: &Score| if s.degenerate { "*" } else { " " };
        let mut out = format!(
            "{:<10} {:>10} {:>10} {:>10}\n",
            "class", "precision", "recall", "f1"
        );
        for c in self.classes() {
            let _ = writeln!(
                out,
                "{:<10} {:>9.6}{} {:>9.6}{} {:>9.6}{}",
                c.class.name(),
                c.precision.value,
                mark(&c.precision),
                c.recall.value,
                mark(&c.recall),
                c.f1.value,
                mark(&c.f1)
            );
        }
        let cm = &self.confusion;
        let _ = writeln!(
            out,
            "confusion  tp={} fn={} fp={} tn={}",
            cm.tp, cm.fn_, cm.fp, cm.tn
        );
        let _ = writeln!(out, "far,{:.6}", self.far);
        let _ = writeln!(out, "frr,{:.6}", self.frr);
        let _ = writeln!(out, "hter,{:.6}", self.hter);
        if self
            .classes()
            .iter()
            .any(|c| c.precision.degenerate || c.recall.degenerate || c.f1.degenerate)
        {
            out.push_str("* zero denominator, reported as 0\n");
        }
        out
    }
}

/// One operating point: predict bonafide when the bonafide score is at
/// least `threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Ordered by increasing FAR, from the reject-everything point at
    /// threshold `+∞` to the accept-everything point.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,far,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.threshold, p.far, p.tpr);
        }
        out
    }
}

/// Sweeps the decision threshold over every distinct bonafide score.
pub fn roc(scores: &[f32], labels: &[Label]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("ROC scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Bonafide).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Undefined("ROC needs samples of both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            match labels[order[i]] {
                Label::Bonafide => tp += 1,
                Label::Attack => fp += 1,
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t as f64,
            far: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}
