//! Reward models scored as timestep classifiers: confusion-matrix metrics,
//! area under the precision-recall curve, model selection, and spread
//! statistics for comparing hyperparameter robustness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parallel arrays of classifier scores and ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTimesteps {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredTimesteps {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Usage("no scored timesteps".into()));
        }
        if scores.len() != labels.len() {
            return Err(Error::Shape {
                expected: scores.len(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Usage("labels must be 0 or 1".into()));
        }
        Ok(ScoredTimesteps { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub accuracy: f64,
    pub counts: Confusion,
}

/// Predictions are `score > threshold`. Precision and recall are 0 when
/// their denominators are empty.
pub fn confusion_metrics(scored: &ScoredTimesteps, threshold: f64) -> Result<ConfusionMetrics> {
    if scored.is_empty() {
        return Err(Error::Usage("no scored timesteps".into()));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Usage(format!("threshold {threshold} not in [0, 1]")));
    }
    let mut c = Confusion::default();
    for (&s, &l) in scored.scores.iter().zip(&scored.labels) {
        match (s > threshold, l == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ConfusionMetrics {
        precision,
        recall,
        f_score,
        accuracy: ratio(c.tp + c.tn, scored.len()),
        counts: c,
    })
}

/// Average precision: sort by descending score, treat tied scores as one
/// threshold, and sum `(R_k - R_{k-1}) · P_k` over the distinct thresholds.
pub fn auc_pr(scored: &ScoredTimesteps) -> Result<f64> {
    let total_pos = scored.positives();
    if total_pos == 0 {
        return Err(Error::Metric("AUC-PR needs at least one positive label".into()));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored.scores[b].total_cmp(&scored.scores[a]));
    let (mut tp, mut seen) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scored.scores[order[i]];
        while i < order.len() && scored.scores[order[i]] == s {
            tp += usize::from(scored.labels[order[i]] == 1);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / total_pos as f64;
        let precision = tp as f64 / seen as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub accuracy: f64,
    pub auc_pr: f64,
    pub positive_rate: f64,
    pub counts: Confusion,
}

pub fn metrics_report(scored: &ScoredTimesteps, threshold: f64) -> Result<MetricsReport> {
    let c = confusion_metrics(scored, threshold)?;
    Ok(MetricsReport {
        precision: c.precision,
        recall: c.recall,
        f_score: c.f_score,
        accuracy: c.accuracy,
        auc_pr: auc_pr(scored)?,
        positive_rate: scored.positives() as f64 / scored.len() as f64,
        counts: c.counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    Precision,
    FScore,
    AucPr,
}

impl SelectionCriterion {
    pub const ALL: [SelectionCriterion; 3] = [
        SelectionCriterion::Precision,
        SelectionCriterion::FScore,
        SelectionCriterion::AucPr,
    ];

    pub fn value(self, r: &MetricsReport) -> f64 {
        match self {
            SelectionCriterion::Precision => r.precision,
            SelectionCriterion::FScore => r.f_score,
            SelectionCriterion::AucPr => r.auc_pr,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectionCriterion::Precision => "precision",
            SelectionCriterion::FScore => "f_score",
            SelectionCriterion::AucPr => "auc_pr",
        }
    }
}

/// Index of the best report under `criterion`; ties go to the earliest.
pub fn select_model(reports: &[&MetricsReport], criterion: SelectionCriterion) -> Result<usize> {
    if reports.is_empty() {
        return Err(Error::Usage("no candidates to select from".into()));
    }
    let mut best = 0;
    for (i, r) in reports.iter().enumerate().skip(1) {
        if criterion.value(r) > criterion.value(reports[best]) {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Population mean, standard deviation, minimum and maximum.
pub fn spread_statistics(values: &[f64]) -> Result<Spread> {
    if values.len() < 2 {
        return Err(Error::Usage("spread needs at least two values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Spread {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(s: &[f64], l: &[u8]) -> ScoredTimesteps {
        ScoredTimesteps::new(s.to_vec(), l.to_vec()).unwrap()
    }

    fn report(auc: f64) -> MetricsReport {
        MetricsReport {
            precision: 0.0,
            recall: 0.0,
            f_score: 0.0,
            accuracy: 0.0,
            auc_pr: auc,
            positive_rate: 0.0,
            counts: Confusion::default(),
        }
    }

    #[test]
    fn confusion_hand_case() {
        let m = confusion_metrics(&scored(&[0.9, 0.8, 0.7], &[1, 0, 1]), 0.5).unwrap();
        assert_eq!((m.counts.tp, m.counts.fp), (2, 1));
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.f_score - 0.8).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let m = confusion_metrics(&scored(&[0.9, 0.1, 0.8], &[1, 0, 1]), 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f_score), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_positive_predictions_convention() {
        let m = confusion_metrics(&scored(&[0.1, 0.2], &[1, 0]), 0.5).unwrap();
        assert_eq!((m.precision, m.recall, m.f_score), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(ScoredTimesteps::new(vec![], vec![]).is_err());
        let s = ScoredTimesteps {
            scores: vec![],
            labels: vec![],
        };
        assert!(confusion_metrics(&s, 0.5).is_err());
    }

    #[test]
    fn auc_pr_hand_case() {
        let ap = auc_pr(&scored(&[0.9, 0.8, 0.7], &[1, 0, 1])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn auc_pr_perfect_separation() {
        assert_eq!(auc_pr(&scored(&[0.9, 0.95, 0.1, 0.2], &[1, 1, 0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn auc_pr_ties_form_one_threshold() {
        // All tied: one threshold with precision = positive rate, recall 1.
        let ap = auc_pr(&scored(&[0.5; 4], &[1, 0, 0, 0])).unwrap();
        assert!((ap - 0.25).abs() < 1e-15);
    }

    #[test]
    fn auc_pr_without_positives_is_error() {
        assert!(matches!(auc_pr(&scored(&[0.3, 0.4], &[0, 0])), Err(Error::Metric(_))));
    }

    #[test]
    fn uninformative_scores_give_positive_rate() {
        use rand::Rng as _;
        let mut rng = crate::seed::rng(17);
        let n = 10_000;
        let pi = 0.2;
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < pi)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let ap = auc_pr(&scored(&scores, &labels)).unwrap();
        assert!((ap - pi).abs() < 0.03, "ap {ap}");
    }

    #[test]
    fn selection_prefers_earliest_on_ties() {
        let rs = [report(0.4), report(0.9), report(0.9)];
        let refs: Vec<&MetricsReport> = rs.iter().collect();
        assert_eq!(select_model(&refs, SelectionCriterion::AucPr).unwrap(), 1);
        assert_eq!(select_model(&refs[..1], SelectionCriterion::AucPr).unwrap(), 0);
        assert!(select_model(&[], SelectionCriterion::AucPr).is_err());
    }

    #[test]
    fn spread_cases() {
        let s = spread_statistics(&[0.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (0.5, 0.5, 0.0, 1.0));
        assert_eq!(spread_statistics(&[3.0, 3.0, 3.0]).unwrap().std, 0.0);
        assert_eq!(
            spread_statistics(&[1.0, 4.0, 2.0]).unwrap(),
            spread_statistics(&[4.0, 2.0, 1.0]).unwrap()
        );
        assert!(spread_statistics(&[1.0]).is_err());
    }
}
