use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(truth: &[bool], predicted: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Per-class scores. `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ClassMetrics {
    fn new(hit: usize, false_alarm: usize, miss: usize) -> Self {
        let precision = ratio(hit, hit + false_alarm);
        let recall = ratio(hit, hit + miss);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            (Some(_), Some(_)) => Some(0.0),
            _ => None,
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support: hit + miss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub confusion: Confusion,
    /// The degraded class.
    pub positive: ClassMetrics,
    pub negative: ClassMetrics,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
}

impl ClassifierMetrics {
    pub fn from_confusion(c: Confusion) -> Self {
        ClassifierMetrics {
            confusion: c,
            positive: ClassMetrics::new(c.tp, c.fp, c.fn_),
            negative: ClassMetrics::new(c.tn, c.fn_, c.fp),
            accuracy: ratio(c.tp + c.tn, c.total()),
            auc: None,
        }
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties counted half.
pub fn roc_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| t).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| !t).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for p in &pos {
        for n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}
