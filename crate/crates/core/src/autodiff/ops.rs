//! Scalar kernels shared by the tape and by non-differentiable callers.

use crate::error::{Error, Result};

/// Negative slope used by every LeakyReLU in the model.
pub const LEAKY_RELU_SLOPE: f64 = 0.2;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Softmax computed independently inside each segment.
///
/// Segment ids may be arbitrary (non-contiguous) integers. Each segment is
/// shifted by its own maximum before exponentiation.
pub fn segment_softmax(scores: &[f64], segments: &[usize]) -> Result<Vec<f64>> {
    if scores.len() != segments.len() {
        return Err(Error::shape(format!(
            "segment_softmax: {} scores but {} segment ids",
            scores.len(),
            segments.len()
        )));
    }
    if scores.is_empty() {
        return Ok(Vec::new());
    }
    let n_seg = segments.iter().copied().max().unwrap_or(0) + 1;
    let mut max = vec![f64::NEG_INFINITY; n_seg];
    for (&s, &g) in scores.iter().zip(segments) {
        if s > max[g] {
            max[g] = s;
        }
    }
    let mut out: Vec<f64> = scores
        .iter()
        .zip(segments)
        .map(|(&s, &g)| (s - max[g]).exp())
        .collect();
    let mut sums = vec![0.0; n_seg];
    for (&e, &g) in out.iter().zip(segments) {
        sums[g] += e;
    }
    for (o, &g) in out.iter_mut().zip(segments) {
        *o /= sums[g];
    }
    Ok(out)
}

/// Per-element binary cross-entropy with logits,
/// `max(x, 0) − x·y + ln(1 + e^{−|x|})`.
pub fn bce_with_logits_elem(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy over all elements. Labels must be exactly 0 or 1.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<f64> {
    check_labels(logits.len(), labels)?;
    if logits.is_empty() {
        return Err(Error::shape("bce_with_logits: empty input"));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| bce_with_logits_elem(x, y))
        .sum();
    Ok(total / logits.len() as f64)
}

pub(crate) fn check_labels(n: usize, labels: &[f64]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::shape(format!(
            "bce_with_logits: {} logits but {} labels",
            n,
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid(format!(
            "bce_with_logits: label {bad} is not 0 or 1"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        assert_eq!(segment_softmax(&[0.0, 0.0], &[0, 0]).unwrap(), vec![0.5, 0.5]);
        let r = segment_softmax(&[2f64.ln(), 0.0], &[0, 0]).unwrap();
        assert_abs_diff_eq!(r[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(segment_softmax(&[17.3], &[0]).unwrap(), vec![1.0]);
        assert!(segment_softmax(&[], &[]).unwrap().is_empty());
        assert!(segment_softmax(&[1.0], &[0, 1]).is_err());
    }

    #[test]
    fn softmax_handles_interleaved_segments() {
        let r = segment_softmax(&[0.0, 5.0, 0.0, 1.0], &[3, 0, 3, 0]).unwrap();
        assert_abs_diff_eq!(r[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r[2], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1] + r[3], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn bce_examples() {
        assert_abs_diff_eq!(
            bce_with_logits(&[0.0], &[1.0]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
        // ln(1 + e) evaluated to 20 digits: 1.31326168751822283405
        assert_abs_diff_eq!(
            bce_with_logits(&[1.0], &[0.0]).unwrap(),
            1.313_261_687_518_223,
            epsilon = 1e-14
        );
        assert!(bce_with_logits(&[50.0], &[1.0]).unwrap() < 1e-20);
        assert!(bce_with_logits(&[0.0], &[0.5]).is_err());
        assert!(bce_with_logits(&[0.0, 1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_segments_sum_to_one(
            entries in prop::collection::vec((-30.0f64..30.0, 0usize..5), 1..40)
        ) {
            let (scores, segs): (Vec<f64>, Vec<usize>) = entries.into_iter().unzip();
            let out = segment_softmax(&scores, &segs).unwrap();
            let mut sums = [0.0f64; 5];
            for (&o, &g) in out.iter().zip(&segs) {
                prop_assert!(o > 0.0 && o <= 1.0);
                sums[g] += o;
            }
            for g in 0..5 {
                if segs.contains(&g) {
                    prop_assert!((sums[g] - 1.0).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn bce_is_finite_on_wide_logit_range(x in -1e4f64..1e4, y in prop::bool::ANY) {
            let v = bce_with_logits(&[x], &[if y { 1.0 } else { 0.0 }]).unwrap();
            prop_assert!(v.is_finite() && v >= 0.0);
        }
    }
}
