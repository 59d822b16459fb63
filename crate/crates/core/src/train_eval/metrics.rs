//! ROC-AUC via the rank-sum formulation with midrank tie handling.

use std::fmt;

#[derive(Debug, PartialEq, Eq)]
pub enum MetricError {
    Empty,
    /// ROC-AUC is undefined without both classes present.
    SingleClass {
        n_pos: usize,
        n_neg: usize,
    },
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::Empty => write!(f, "no scores to evaluate"),
            MetricError::SingleClass { n_pos, n_neg } => write!(
                f,
                "roc-auc undefined: {n_pos} positives and {n_neg} negatives"
            ),
        }
    }
}

impl std::error::Error for MetricError {}

/// Area under the ROC curve for `(score, label)` pairs, labels in {0, 1}.
///
/// Equivalent to the probability that a random positive outscores a random
/// negative, with ties counted half. Computed in O(n log n) by sorting and
/// assigning midranks to tie groups.
pub fn roc_auc(scored: &[(f64, u8)]) -> Result<f64, MetricError> {
    if scored.is_empty() {
        return Err(MetricError::Empty);
    }
    let n_pos = scored.iter().filter(|(_, l)| *l == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass { n_pos, n_neg });
    }

    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));

    let mut positive_rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // ranks are 1-based; every member of the tie group gets the midrank
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored[idx].1 == 1 {
                positive_rank_sum += midrank;
            }
        }
        i = j + 1;
    }

    let np = n_pos as f64;
    let nn = n_neg as f64;
    Ok((positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// ROC curve staircase points as `(false positive rate, true positive
/// rate)`, from (0,0) to (1,1), one step per distinct threshold.
pub fn roc_points(scored: &[(f64, u8)]) -> Vec<(f64, f64)> {
    let n_pos = scored.iter().filter(|(_, l)| *l == 1).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return vec![(0.0, 0.0), (1.0, 1.0)];
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scored[order[i]].0;
        while i < order.len() && scored[order[i]].0 == threshold {
            if scored[order[i]].1 == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    points
}

/// O(n^2) pairwise oracle for the Mann-Whitney statistic; test support.
pub fn roc_auc_pairwise(scored: &[(f64, u8)]) -> Result<f64, MetricError> {
    let positives: Vec<f64> = scored
        .iter()
        .filter(|(_, l)| *l == 1)
        .map(|(s, _)| *s)
        .collect();
    let negatives: Vec<f64> = scored
        .iter()
        .filter(|(_, l)| *l == 0)
        .map(|(s, _)| *s)
        .collect();
    if scored.is_empty() {
        return Err(MetricError::Empty);
    }
    if positives.is_empty() || negatives.is_empty() {
        return Err(MetricError::SingleClass {
            n_pos: positives.len(),
            n_neg: negatives.len(),
        });
    }
    let mut credit = 0.0f64;
    for &p in &positives {
        for &n in &negatives {
            if p > n {
                credit += 1.0;
            } else if p == n {
                credit += 0.5;
            }
        }
    }
    Ok(credit / (positives.len() as f64 * negatives.len() as f64))
}
