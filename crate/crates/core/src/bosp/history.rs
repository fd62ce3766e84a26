use crate::error::{Error, Result};

/// Normalized residual of every tracked eigenpair at every outer
/// iteration. `None` marks pairs not yet in the search window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualHistory {
    pub tol: f64,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl ResidualHistory {
    pub fn new(tol: f64) -> Self {
        Self { tol, rows: Vec::new() }
    }

    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    pub fn tracked(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// The residual sequence of one eigenpair.
    pub fn series(&self, index: usize) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.get(index).copied().flatten()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionFit {
    pub alpha: f64,
    pub beta: f64,
    pub samples: usize,
    /// The abscissae had no spread; `beta` is set to 0 and `alpha` to the
    /// geometric mean of the responses.
    pub degenerate: bool,
}

/// Least-squares fit of `log r⁽ʲ⁾ = log α + β log r⁽ʲ⁻¹⁾` over consecutive
/// residual pairs of one eigenpair, skipping pairs where either value is
/// below `10·tol`.
pub fn regression_coefficients(history: &ResidualHistory, index: usize) -> Result<RegressionFit> {
    if index >= history.tracked() {
        return Err(Error::InvalidArgument(format!(
            "eigenpair {index} not tracked (history has {})",
            history.tracked()
        )));
    }
    let floor = 10.0 * history.tol;
    let s = history.series(index);
    let pairs: Vec<(f64, f64)> = s
        .windows(2)
        .filter_map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) if a >= floor && b >= floor && a > 0.0 && b > 0.0 => Some((a.ln(), b.ln())),
            _ => None,
        })
        .collect();
    if pairs.len() < 2 {
        return Err(Error::NotEnoughSamples(format!(
            "eigenpair {index}: {} usable residual pairs, need at least 2",
            pairs.len()
        )));
    }
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-24 * (1.0 + mx * mx) * k {
        return Ok(RegressionFit { alpha: my.exp(), beta: 0.0, samples: pairs.len(), degenerate: true });
    }
    let beta = sxy / sxx;
    Ok(RegressionFit { alpha: (my - beta * mx).exp(), beta, samples: pairs.len(), degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(series: &[f64], tol: f64) -> ResidualHistory {
        ResidualHistory { tol, rows: series.iter().map(|&r| vec![Some(r)]).collect() }
    }

    #[test]
    fn exact_power_law() {
        let mut r = vec![0.5];
        for _ in 0..8 {
            let last = *r.last().unwrap();
            r.push(0.1 * f64::powf(last, 1.1));
        }
        let fit = regression_coefficients(&single(&r, 1e-30), 0).unwrap();
        assert!((fit.alpha - 0.1).abs() < 1e-10 && (fit.beta - 1.1).abs() < 1e-10, "{fit:?}");
        assert!(!fit.degenerate);
    }

    #[test]
    fn constant_history_is_degenerate() {
        let fit = regression_coefficients(&single(&[1e-3; 6], 1e-10), 0).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.beta, 0.0);
    }

    #[test]
    fn too_few_samples() {
        let e = regression_coefficients(&single(&[1e-1, 1e-2], 1e-10), 0).unwrap_err();
        assert!(matches!(e, Error::NotEnoughSamples(_)));
        // values under 10·tol do not count
        let e = regression_coefficients(&single(&[1e-1, 1e-2, 1e-11, 1e-12], 1e-10), 0).unwrap_err();
        assert!(matches!(e, Error::NotEnoughSamples(_)));
    }
}
