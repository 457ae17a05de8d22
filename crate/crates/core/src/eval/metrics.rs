use crate::error::{Error, Result};

/// Indices of the `k` highest scores, best first, skipping `exclude`.
/// Ties go to the lower index. Returns fewer than `k` entries only when
/// fewer candidates remain.
pub fn predict_topk(scores: &[f64], k: usize, exclude: &[usize]) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Numerical(format!("score {i} is NaN")));
    }
    let mut cand: Vec<usize> = (0..scores.len()).filter(|t| !exclude.contains(t)).collect();
    cand.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    cand.truncate(k);
    Ok(cand)
}

/// `|top-k ∩ truth| / k`.
pub fn precision_at_k(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if truth.is_empty() {
        return Err(Error::invalid("ground-truth tag set is empty"));
    }
    let hits = predicted.iter().take(k).filter(|t| truth.contains(t)).count();
    Ok(hits as f64 / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    #[test]
    fn topk_examples() {
        assert_eq!(predict_topk(&[0.9, 0.1], 1, &[]).unwrap(), vec![0]);
        assert_eq!(predict_topk(&[0.5, 0.7, 0.7, 0.1], 3, &[]).unwrap(), vec![1, 2, 0]);
        assert_eq!(predict_topk(&[3.0, 2.0, 1.0, 0.0], 3, &[0, 1, 3]).unwrap(), vec![2]);
        assert!(predict_topk(&[1.0], 0, &[]).is_err());
        assert!(predict_topk(&[f64::NAN], 1, &[]).is_err());
    }

    #[test]
    fn precision_examples() {
        assert!((precision_at_k(&[1, 2, 3], &[1, 3], 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&[4], &[4, 5], 1).unwrap(), 1.0);
        assert_eq!(precision_at_k(&[0, 1], &[0, 1], 5).unwrap(), 0.4);
        assert!(precision_at_k(&[1], &[], 1).is_err());
    }

    proptest! {
        #[test]
        fn topk_ignores_positive_rescaling(
            scores in prop::collection::vec(-10.0f64..10.0, 1..30),
            c in 0.01f64..100.0,
            k in 1usize..8,
        ) {
            let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
            let a = predict_topk(&scores, k, &[])?;
            let b = predict_topk(&scaled, k, &[])?;
            // rescaling can only merge near-ties, so compare score values
            let va: Vec<f64> = a.iter().map(|&i| scores[i]).collect();
            let vb: Vec<f64> = b.iter().map(|&i| scores[i]).collect();
            prop_assert_eq!(va, vb);
        }

        #[test]
        fn topk_never_returns_excluded(
            scores in prop::collection::vec(-1.0f64..1.0, 1..20),
            exclude in prop::collection::btree_set(0usize..20, 0..10),
            k in 1usize..25,
        ) {
            let ex: Vec<usize> = exclude.iter().copied().collect();
            let top = predict_topk(&scores, k, &ex)?;
            let remaining = (0..scores.len()).filter(|t| !exclude.contains(t)).count();
            prop_assert_eq!(top.len(), k.min(remaining));
            prop_assert!(top.iter().all(|t| !exclude.contains(t)));
            prop_assert_eq!(top.iter().collect::<BTreeSet<_>>().len(), top.len());
        }
    }
}
