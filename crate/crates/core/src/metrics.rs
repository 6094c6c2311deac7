//! Score-level evaluation: confusion counts, precision/recall/F1, ROC AUC and
//! equal error rate.
//!
//! The positive class is label 1: real clips for the real/fake task and
//! artifact-fakes for the artifact task. A score predicts positive when it is
//! at or above the threshold.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decision threshold used for F1, precision and recall.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub score: f64,
    pub label: u8,
}

/// Scores paired with binary labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub items: Vec<Scored>,
}

impl ScoreSet {
    pub fn new(items: impl IntoIterator<Item = (f64, u8)>) -> Result<Self> {
        let items: Vec<Scored> = items
            .into_iter()
            .map(|(score, label)| Scored { score, label })
            .collect();
        if let Some(bad) = items.iter().find(|s| s.label > 1 || !s.score.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "invalid scored item ({}, {})",
                bad.score, bad.label
            )));
        }
        Ok(Self { items })
    }

    /// Builds a set from separate positive and negative score lists.
    pub fn from_classes(positives: &[f64], negatives: &[f64]) -> Result<Self> {
        Self::new(
            positives
                .iter()
                .map(|&s| (s, 1))
                .chain(negatives.iter().map(|&s| (s, 0))),
        )
    }

    pub fn n_pos(&self) -> usize {
        self.items.iter().filter(|s| s.label == 1).count()
    }

    pub fn n_neg(&self) -> usize {
        self.items.len() - self.n_pos()
    }

    fn require_both_classes(&self, metric: &str) -> Result<()> {
        if self.n_pos() == 0 || self.n_neg() == 0 {
            return Err(Error::UndefinedMetric(format!(
                "{metric} needs both classes ({} positive, {} negative)",
                self.n_pos(),
                self.n_neg()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Fraction of correct decisions; zero for an empty set.
    pub fn accuracy(&self) -> f64 {
        let total = self.tp + self.fp + self.tn + self.fn_;
        if total == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / total as f64
        }
    }
}

pub fn confusion_at(s: &ScoreSet, threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for item in &s.items {
        match (item.score >= threshold, item.label == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1, precision and recall at `threshold`; every 0/0 is taken as 0.
pub fn f1_precision_recall(s: &ScoreSet, threshold: f64) -> Prf {
    prf_from(confusion_at(s, threshold))
}

pub fn prf_from(c: Confusion) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf {
        f1,
        precision,
        recall,
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties counting
/// one half.
pub fn auc(s: &ScoreSet) -> Result<f64> {
    s.require_both_classes("AUC")?;
    let mut sorted: Vec<Scored> = s.items.clone();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    // Counted in half-pairs so the final division is the only rounding step.
    let mut half_wins: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j].score == sorted[i].score {
            j += 1;
        }
        let group = &sorted[i..j];
        let pos = group.iter().filter(|x| x.label == 1).count() as u128;
        let neg = group.len() as u128 - pos;
        half_wins += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(half_wins as f64 / (2 * s.n_pos() as u128 * s.n_neg() as u128) as f64)
}

/// Equal error rate and the threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

/// Candidate thresholds for the EER sweep, in increasing order: the lowest
/// score (everything accepted), the midpoints between consecutive distinct
/// scores, and the next float above the highest score (everything rejected).
pub fn eer_thresholds(s: &ScoreSet) -> Vec<f64> {
    let mut scores: Vec<f64> = s.items.iter().map(|x| x.score).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut out = Vec::with_capacity(scores.len() + 1);
    if let (Some(&first), Some(&last)) = (scores.first(), scores.last()) {
        out.push(first);
        out.extend(scores.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        out.push(next_up(last));
    }
    out
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        return f64::from_bits(1);
    }
    let bits = x.to_bits();
    f64::from_bits(if x > 0.0 { bits + 1 } else { bits - 1 })
}

/// Equal error rate.
///
/// False-positive and false-negative rates are evaluated at every threshold
/// from [`eer_thresholds`]. Their difference starts at `+1` and ends at `-1`;
/// at the first pair of neighbouring thresholds where it reaches or crosses
/// zero, both rates and the threshold are linearly interpolated to the
/// crossing.
pub fn eer(s: &ScoreSet) -> Result<Eer> {
    s.require_both_classes("EER")?;
    let n_pos = s.n_pos() as f64;
    let n_neg = s.n_neg() as f64;
    let mut sorted: Vec<Scored> = s.items.clone();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    // Sweep thresholds upwards; `below` counts items with score < threshold.
    let mut below = 0;
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut rates = |t: f64| {
        while below < sorted.len() && sorted[below].score < t {
            if sorted[below].label == 1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            below += 1;
        }
        let fpr = (n_neg - neg_below as f64) / n_neg;
        let fnr = pos_below as f64 / n_pos;
        (fpr, fnr)
    };

    let thresholds = eer_thresholds(s);
    let (mut prev_fpr, mut prev_fnr) = rates(thresholds[0]);
    let mut prev_t = thresholds[0];
    for &t in &thresholds[1..] {
        let (fpr, fnr) = rates(t);
        let d_prev = prev_fpr - prev_fnr;
        let d = fpr - fnr;
        if d <= 0.0 {
            let lambda = if d_prev == d { 1.0 } else { d_prev / (d_prev - d) };
            let eer_fpr = prev_fpr + lambda * (fpr - prev_fpr);
            let eer_fnr = prev_fnr + lambda * (fnr - prev_fnr);
            return Ok(Eer {
                eer: 0.5 * (eer_fpr + eer_fnr),
                threshold: prev_t + lambda * (t - prev_t),
            });
        }
        (prev_fpr, prev_fnr, prev_t) = (fpr, fnr, t);
    }
    unreachable!("the last threshold rejects every item, so FPR - FNR = -1 there")
}

/// The five headline metrics plus class counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub eer: f64,
    pub auc: f64,
    pub eer_threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Report {
    pub fn compute(s: &ScoreSet) -> Result<Self> {
        let prf = f1_precision_recall(s, DEFAULT_THRESHOLD);
        let e = eer(s)?;
        Ok(Self {
            f1: prf.f1,
            precision: prf.precision,
            recall: prf.recall,
            eer: e.eer,
            auc: auc(s)?,
            eer_threshold: e.threshold,
            n_pos: s.n_pos(),
            n_neg: s.n_neg(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text table; `positive_class` names what label 1 means.
    pub fn to_table(&self, positive_class: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "positive class: {positive_class} (label 1), threshold {DEFAULT_THRESHOLD}");
        let _ = writeln!(out, "{:<10} {:>10}", "metric", "value");
        for (name, v) in [
            ("F1", self.f1),
            ("Prec.", self.precision),
            ("Rec.", self.recall),
            ("EER", self.eer),
            ("AUC", self.auc),
            ("EER thr.", self.eer_threshold),
        ] {
            let _ = writeln!(out, "{name:<10} {v:>10.4}");
        }
        let _ = writeln!(out, "{:<10} {:>10}", "n_pos", self.n_pos);
        let _ = writeln!(out, "{:<10} {:>10}", "n_neg", self.n_neg);
        out
    }
}

/// Computes the report and writes `<out_path>` as JSON plus a `.txt` table
/// next to it.
pub fn report(s: &ScoreSet, out_path: &Path, positive_class: &str) -> Result<Report> {
    let r = Report::compute(s)?;
    std::fs::write(out_path, r.to_json() + "\n").map_err(|e| Error::io(out_path, e))?;
    let txt = out_path.with_extension("txt");
    std::fs::write(&txt, r.to_table(positive_class)).map_err(|e| Error::io(&txt, e))?;
    Ok(r)
}

/// Writes `file_id,score,label` rows with a header.
pub fn write_scores_csv(rows: &[(String, f64, u8)], path: &Path) -> Result<()> {
    let mut out = String::from("file_id,score,label\n");
    for (id, score, label) in rows {
        let _ = writeln!(out, "{id},{score},{label}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<(String, f64, u8)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Parse(format!("{} line {}: `{line}`", path.display(), i + 1));
        let mut cols = line.split(',');
        let (Some(id), Some(score), Some(label), None) = (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(bad());
        };
        let score: f64 = score.parse().map_err(|_| bad())?;
        let label: u8 = label.parse().map_err(|_| bad())?;
        rows.push((id.to_string(), score, label));
    }
    Ok(rows)
}

/// Writes `file_id,label,e0..eN` rows for external embedding visualization.
pub fn write_embeddings_csv(rows: &[(String, u8, Vec<f32>)], path: &Path) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.2.len());
    let mut out = String::from("file_id,label");
    for i in 0..dim {
        let _ = write!(out, ",e{i}");
    }
    out.push('\n');
    for (id, label, v) in rows {
        if v.len() != dim {
            return Err(Error::Dimension(format!("embedding of {id} has {} entries, expected {dim}", v.len())));
        }
        let _ = write!(out, "{id},{label}");
        for x in v {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
