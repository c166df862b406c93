/// Recall levels of the interpolated precision envelope: 0.00, 0.01, …, 1.00.
pub const RECALL_POINTS: usize = 101;

/// 101-point interpolated average precision of one class.
///
/// `scored` holds `(score, is_true_positive)` for every detection of the
/// class across the dataset. Detections with equal scores form one operating
/// point, so the result does not depend on their order. Returns `None` when
/// the class has no ground truth.
pub fn average_precision(scored: &[(f64, bool)], n_gt: usize) -> Option<f64> {
    if n_gt == 0 {
        return None;
    }
    let curve = pr_curve(scored);
    // precision envelope: best precision at this or any higher recall
    let mut envelope: Vec<f64> = curve.iter().map(|&(tp, fp)| tp as f64 / (tp + fp) as f64).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut total = 0.0;
    let mut idx = 0;
    for r in 0..RECALL_POINTS {
        // recall tp/n_gt ≥ r/100, compared exactly in integers
        while idx < curve.len() && curve[idx].0 * 100 < r * n_gt {
            idx += 1;
        }
        if idx < curve.len() {
            total += envelope[idx];
        }
    }
    Some(total / RECALL_POINTS as f64)
}

/// Cumulative `(tp, fp)` after each distinct score, highest first.
fn pr_curve(scored: &[(f64, bool)]) -> Vec<(usize, usize)> {
    let mut sorted = scored.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(score, hit)) in sorted.iter().enumerate() {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(i + 1).is_none_or(|next| next.0 != score) {
            curve.push((tp, fp));
        }
    }
    curve
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_hit_is_perfect() {
        assert_eq!(average_precision(&[(0.9, true)], 1), Some(1.0));
    }

    #[test]
    fn no_detections_scores_zero() {
        assert_eq!(average_precision(&[], 3), Some(0.0));
    }

    #[test]
    fn no_ground_truth_is_undefined() {
        assert_eq!(average_precision(&[(0.5, false)], 0), None);
    }

    #[test]
    fn hit_miss_hit_against_all_points_integration() {
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 2).unwrap();
        // all-points area under the envelope: 0.5·1 + 0.5·(2/3)
        let all_points = 0.5 + 0.5 * (2.0 / 3.0);
        assert!((ap - all_points).abs() <= 1.0 / 101.0);
        assert!((ap - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-12);
    }

    #[test]
    fn tied_scores_are_order_free() {
        let a = average_precision(&[(0.5, false), (0.5, true), (0.4, true)], 2).unwrap();
        let b = average_precision(&[(0.5, true), (0.5, false), (0.4, true)], 2).unwrap();
        assert_eq!(a, b);
    }
}
