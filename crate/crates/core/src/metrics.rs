//! Prediction scoring: R², MAE, MAPE, and bundled reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bundled evaluation over paired observations and predictions. MAPE is a
/// fraction (0.023 means 2.3%).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub r2: f64,
    pub mae: f64,
    pub mape: f64,
    pub n: usize,
}

fn check_lengths(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} observed vs {} predicted",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("cannot score an empty sample"));
    }
    Ok(())
}

/// Coefficient of determination, 1 − Σ(yᵢ−ŷᵢ)²/Σ(yᵢ−ȳ)². Unbounded below.
pub fn r2_score(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let ss_tot: f64 = y.iter().map(|&v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid(
            "R² undefined: observed values have zero variance",
        ));
    }
    let ss_res: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(&a, &b)| (a - b).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean absolute error, in the target's units.
pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(&a, &b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean absolute percentage error, returned as a fraction.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_lengths(y, y_hat)?;
    if y.contains(&0.0) {
        return Err(Error::invalid("MAPE undefined: observed value is zero"));
    }
    Ok(y.iter()
        .zip(y_hat)
        .map(|(&a, &b)| ((a - b) / a).abs())
        .sum::<f64>()
        / y.len() as f64)
}

pub fn evaluate(y: &[f64], y_hat: &[f64]) -> Result<EvalReport> {
    Ok(EvalReport {
        r2: r2_score(y, y_hat)?,
        mae: mae(y, y_hat)?,
        mape: mape(y, y_hat)?,
        n: y.len(),
    })
}
