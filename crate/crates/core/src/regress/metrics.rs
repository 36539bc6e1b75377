use crate::math::{abs, sqrt};
use crate::{Error, Result};

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch(pred.len(), actual.len()));
    }
    if actual.is_empty() {
        return Err(Error::TooFewRows { need: 1, got: 0 });
    }
    Ok(())
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let mut acc = 0.0;
    for (index, (&p, &y)) in pred.iter().zip(actual).enumerate() {
        if !(y > 0.0) {
            return Err(Error::ZeroActual { index, value: y });
        }
        acc += abs(p - y) / y;
    }
    Ok(100.0 * acc / actual.len() as f64)
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, y)| abs(p - y)).sum::<f64>() / actual.len() as f64)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(pred, actual)?;
    let ms = pred.iter().zip(actual).map(|(p, y)| (p - y) * (p - y)).sum::<f64>()
        / actual.len() as f64;
    Ok(sqrt(ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[100.0, 50.0], &[100.0, 50.0]).unwrap(), 0.0);
        assert!((mape(&[110.0, 90.0], &[100.0, 100.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!((mape(&[50.0], &[100.0]).unwrap() - 50.0).abs() < 1e-12);
        assert_eq!(
            mape(&[1.0, 1.0], &[1.0, 0.0]),
            Err(Error::ZeroActual { index: 1, value: 0.0 })
        );
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[110.0, 90.0], &[100.0, 100.0]).unwrap(), 10.0);
        assert_eq!(rmse(&[110.0, 90.0], &[100.0, 100.0]).unwrap(), 10.0);
        assert_eq!(mae(&[100.0, 120.0], &[100.0, 100.0]).unwrap(), 10.0);
        assert!((rmse(&[100.0, 120.0], &[100.0, 100.0]).unwrap() - 14.142_135_623_730_951).abs() < 1e-12);
    }
}
