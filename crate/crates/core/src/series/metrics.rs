use crate::error::{Error, Result};

/// Mean absolute scaled error of `predicted` against `actual`, scaled by the
/// one-step naive forecast error of `training_ref`.
pub fn mase(predicted: &[f64], actual: &[f64], training_ref: &[f64]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::shape(
            "mase",
            format!(
                "predicted has {} samples, actual {}",
                predicted.len(),
                actual.len()
            ),
        ));
    }
    if predicted.len() < 2 || training_ref.len() < 2 {
        return Err(Error::Precondition(
            "MASE needs at least two samples".into(),
        ));
    }
    let naive = training_ref
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .sum::<f64>()
        / (training_ref.len() - 1) as f64;
    if naive == 0.0 {
        return Err(Error::UndefinedScale);
    }
    let mae = predicted
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mae / naive)
}

/// Channel-averaged MASE; each argument is a list of per-channel series.
pub fn mase_multivariate(
    predicted: &[Vec<f64>],
    actual: &[Vec<f64>],
    training_ref: &[Vec<f64>],
) -> Result<f64> {
    if predicted.len() != actual.len()
        || predicted.len() != training_ref.len()
        || predicted.is_empty()
    {
        return Err(Error::shape("mase", "channel counts differ or are zero"));
    }
    let mut total = 0.0;
    for ((p, a), r) in predicted.iter().zip(actual).zip(training_ref) {
        total += mase(p, a, r)?;
    }
    Ok(total / predicted.len() as f64)
}

/// Full-window DTW with absolute-difference cost and the symmetric
/// (match / insert / delete) step pattern.
pub fn dtw(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = (x - b[j - 1]).abs();
            cur[j] = cost + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mase_identity_and_unit_ratio() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(mase(&a, &a, &a).unwrap(), 0.0);
        let pred = [5.0; 4];
        let actual = [6.0; 4];
        let reference = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(mase(&pred, &actual, &reference).unwrap(), 1.0);
    }

    #[test]
    fn mase_zero_naive_error() {
        assert!(matches!(
            mase(&[1.0, 2.0], &[1.0, 1.0], &[3.0, 3.0, 3.0]),
            Err(Error::UndefinedScale)
        ));
    }

    #[test]
    fn dtw_known_values() {
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 0.0);
        assert_eq!(dtw(&[0.0, 0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert_eq!(dtw(&[0.0], &[1.0, 2.0]), 3.0);
    }
}
