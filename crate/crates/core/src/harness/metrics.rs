use super::HarnessError;

/// First episode index (0-based) whose lap count reaches `laps_required`.
pub fn convergence_episode(
    laps: impl IntoIterator<Item = u32>,
    laps_required: u32,
) -> Option<usize> {
    laps.into_iter().position(|l| l >= laps_required)
}

/// Mean absolute first difference of a steer sequence.
pub fn smoothness_metric(steer: &[f64]) -> Result<f64, HarnessError> {
    if steer.len() < 2 {
        return Err(HarnessError::UndefinedMetric(format!(
            "smoothness needs at least 2 steps, got {}",
            steer.len()
        )));
    }
    let total: f64 = steer.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(total / (steer.len() - 1) as f64)
}

/// Smoothness restricted to consecutive step pairs that both lie on curved
/// track segments.
pub fn masked_smoothness(steer: &[f64], mask: &[bool]) -> Result<f64, HarnessError> {
    if steer.len() != mask.len() {
        return Err(HarnessError::UndefinedMetric(
            "steer and mask lengths differ".into(),
        ));
    }
    let diffs: Vec<f64> = steer
        .windows(2)
        .zip(mask.windows(2))
        .filter(|(_, m)| m[0] && m[1])
        .map(|(w, _)| (w[1] - w[0]).abs())
        .collect();
    if diffs.is_empty() {
        return Err(HarnessError::UndefinedMetric(
            "no consecutive curved steps".into(),
        ));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn convergence_examples() {
        assert_eq!(convergence_episode([0, 3, 10, 12], 10), Some(2));
        assert_eq!(convergence_episode([0, 0, 0], 10), None);
        assert_eq!(convergence_episode([1, 0, 4], 1), Some(0));
        assert_eq!(convergence_episode([], 1), None);
    }

    #[test]
    fn smoothness_examples() {
        assert_eq!(smoothness_metric(&[0.3; 8]).unwrap(), 0.0);
        let alternating: Vec<f64> = (0..20)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        assert_eq!(smoothness_metric(&alternating).unwrap(), 2.0);
        let ramp: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        assert!((smoothness_metric(&ramp).unwrap() - 0.1).abs() < 1e-15);
        assert!(smoothness_metric(&[0.5]).is_err());
        assert!(smoothness_metric(&[]).is_err());
    }

    #[test]
    fn masked_skips_straight_pairs() {
        let steer = [0.0, 1.0, 1.0, 0.5, -0.5];
        let mask = [true, false, true, true, true];
        // pairs (2,3) and (3,4) only: 0.5 and 1.0
        assert!((masked_smoothness(&steer, &mask).unwrap() - 0.75).abs() < 1e-15);
        assert!(masked_smoothness(&steer, &[false; 5]).is_err());
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    proptest! {
        #[test]
        fn smoothness_nonnegative_zero_iff_constant(steer in proptest::collection::vec(-1.0f64..1.0, 2..50)) {
            let m = smoothness_metric(&steer).unwrap();
            prop_assert!(m >= 0.0);
            let constant = steer.iter().all(|&s| s == steer[0]);
            prop_assert_eq!(m == 0.0, constant);
        }
    }
}
