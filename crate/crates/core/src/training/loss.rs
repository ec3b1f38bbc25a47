//! Closed-form loss values, used for reporting and as oracles for the graph
//! versions in [`super::batch`].

use crate::error::{Error, Result};

fn log_softmax_at(x: &[f64], i: usize) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x[i] - lse
}

/// Mean negative log-likelihood of the positive, which sits at index 0 of
/// every score vector `[r+, r1-, ..., rk-]`.
pub fn rec_loss(score_vectors: &[Vec<f64>]) -> Result<f64> {
    if score_vectors.is_empty() {
        return Err(Error::contract("rec_loss: empty batch"));
    }
    let mut total = 0.0;
    for s in score_vectors {
        if s.len() < 2 {
            return Err(Error::contract("rec_loss: each score vector needs a positive and at least one negative"));
        }
        total -= log_softmax_at(s, 0);
    }
    Ok(total / score_vectors.len() as f64)
}

/// Mean cross-entropy of recovering each news id from its logits over all
/// source news.
pub fn align_loss(logits: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if logits.is_empty() || logits.len() != targets.len() {
        return Err(Error::contract("align_loss: need one target per logit row and a non-empty batch"));
    }
    let mut total = 0.0;
    for (row, &t) in logits.iter().zip(targets) {
        if t >= row.len() {
            return Err(Error::contract(format!("align_loss: news id {t} outside the {} source news", row.len())));
        }
        total -= log_softmax_at(row, t);
    }
    Ok(total / logits.len() as f64)
}

/// alpha * align + beta * source + target; the target term is dropped in the
/// zero-shot setting.
pub fn total_loss(l_align: f64, l_src: f64, l_tgt: f64, alpha: f64, beta: f64, zero_shot: bool) -> Result<f64> {
    check_weights(alpha, beta)?;
    let mut terms = vec![l_align, l_src];
    if !zero_shot {
        terms.push(l_tgt);
    }
    if terms.iter().any(|t| !t.is_finite()) {
        return Err(Error::contract("total_loss: loss components must be finite"));
    }
    let base = alpha * l_align + beta * l_src;
    Ok(if zero_shot { base } else { base + l_tgt })
}

pub(crate) fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && beta >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::config(format!("loss weights must be finite and >= 0 (alpha {alpha}, beta {beta})")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rec_loss_closed_forms() {
        assert!((rec_loss(&[vec![0.3; 5]]).unwrap() - 5f64.ln()).abs() < 1e-12);
        assert!(rec_loss(&[vec![1000.0, 0.0, 0.0, 0.0, 0.0]]).unwrap() < 1e-12);
        let e = std::f64::consts::E;
        let expected = -(e / (e + 4.0)).ln();
        assert!((rec_loss(&[vec![1.0, 0.0, 0.0, 0.0, 0.0]]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.904832).abs() < 1e-6);
        assert!(matches!(rec_loss(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn align_loss_closed_forms() {
        assert_eq!(align_loss(&[vec![3.7]], &[0]).unwrap(), 0.0);
        assert!((align_loss(&[vec![0.0; 7]], &[4]).unwrap() - 7f64.ln()).abs() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        let v = align_loss(&[vec![2.0, 0.0, 0.0]], &[0]).unwrap();
        assert!((v + (e2 / (e2 + 2.0)).ln()).abs() < 1e-12);
        assert!((v - 0.2395).abs() < 1e-4);
        assert!(matches!(align_loss(&[vec![0.0; 3]], &[3]), Err(Error::Contract(_))));
    }

    #[test]
    fn total_loss_weights() {
        assert_eq!(total_loss(1.0, 2.0, 3.0, 1.0, 1.0, false).unwrap(), 6.0);
        assert!((total_loss(1.0, 2.0, 3.0, 0.2, 0.2, false).unwrap() - 3.6).abs() < 1e-12);
        assert_eq!(
            total_loss(1.0, 2.0, 3.0, 1.0, 1.0, true).unwrap(),
            total_loss(1.0, 2.0, f64::NAN, 1.0, 1.0, true).unwrap()
        );
        assert!(matches!(total_loss(1.0, 1.0, 1.0, -0.1, 1.0, false), Err(Error::Config(_))));
        assert!(matches!(total_loss(1.0, 1.0, 1.0, 1.0, -1.0, false), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn total_loss_is_linear(a in 0.0f64..5.0, s in 0.0f64..5.0, t in 0.0f64..5.0,
                                alpha in 0.0f64..3.0, beta in 0.0f64..3.0) {
            let v = total_loss(a, s, t, alpha, beta, false).unwrap();
            prop_assert!((v - (alpha * a + beta * s + t)).abs() < 1e-12);
            let z = total_loss(a, s, t, alpha, beta, true).unwrap();
            prop_assert!((z - (alpha * a + beta * s)).abs() < 1e-12);
        }

        #[test]
        fn rec_loss_decreases_in_positive_score(neg in prop::collection::vec(-3.0f64..3.0, 4), p in -3.0f64..3.0, dp in 0.01f64..2.0) {
            let mut lo = vec![p];
            lo.extend(&neg);
            let mut hi = vec![p + dp];
            hi.extend(&neg);
            prop_assert!(rec_loss(&[hi]).unwrap() < rec_loss(&[lo]).unwrap());
        }
    }
}
