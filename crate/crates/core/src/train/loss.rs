use crate::error::{Error, Result};
use crate::linalg::sigmoid;

/// Mean binary cross-entropy of `σ(score)` against 0/1 labels, and its
/// gradient with respect to each score.
///
/// Uses `max(s, 0) − s·y + ln(1 + e^{−|s|})`, which is finite for any
/// finite score.
pub fn bce_loss(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = scores.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(scores.len());
    for (&s, &y) in scores.iter().zip(labels) {
        if y > 1 {
            return Err(Error::Data(format!("label {y} is not binary")));
        }
        let y = f64::from(y);
        total += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
        grads.push((sigmoid(s) - y) / n);
    }
    Ok((total / n, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn neutral_score() {
        let (l, g) = bce_loss(&[0.0], &[1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_positive() {
        let (l, g) = bce_loss(&[1000.0], &[1]).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn negative_label_at_one() {
        // −ln(1 − σ(1)) = ln(1 + e) = 1.31326168751822...
        let (l, _) = bce_loss(&[1.0], &[0]).unwrap();
        assert!((l - 1.313_261_687_518_222_6).abs() < 1e-5);
    }

    #[test]
    fn mean_over_examples() {
        let (l, g) = bce_loss(&[0.0, 0.0], &[1, 0]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((g[0] + 0.25).abs() < 1e-12 && (g[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(bce_loss(&[0.0], &[1, 0]).is_err());
        assert!(bce_loss(&[0.0], &[2]).is_err());
    }

    proptest! {
        #[test]
        fn finite_for_huge_scores(s in -1e6f64..1e6, y in 0u8..2) {
            let (l, g) = bce_loss(&[s], &[y]).unwrap();
            prop_assert!(l.is_finite() && l >= 0.0);
            prop_assert!(g[0].is_finite());
        }

        #[test]
        fn gradient_matches_central_difference(s in -20.0f64..20.0, y in 0u8..2) {
            let eps = 1e-6;
            let (lp, _) = bce_loss(&[s + eps], &[y]).unwrap();
            let (lm, _) = bce_loss(&[s - eps], &[y]).unwrap();
            let (_, g) = bce_loss(&[s], &[y]).unwrap();
            prop_assert!(((lp - lm) / (2.0 * eps) - g[0]).abs() < 1e-7);
        }
    }
}
