//! One-dimensional Gaussian mixture fit by expectation-maximisation.
//!
//! Means are initialised proportional to component index, matching the
//! photon-number structure of calibration data, and kept sorted so component
//! `k` is the `k`-photon peak.

use super::ReadoutError;

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub means: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_likelihood: f64,
}

const MAX_ITER: usize = 500;
const REL_TOL: f64 = 1e-10;

/// Fit `k` Gaussian components to the samples.
pub fn fit_gaussian_mixture(values: &[f64], k: usize) -> Result<MixtureFit, ReadoutError> {
    assert!(k >= 1);
    if values.len() < 10 * k {
        return Err(ReadoutError::FitFailed {
            reason: format!("{} samples cannot constrain {k} components", values.len()),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("amplitudes must be finite"));
    let quantile = |q: f64| -> f64 {
        let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
        sorted[idx]
    };
    let lo = quantile(0.01);
    let hi = quantile(0.995);
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let sigma_floor = 1e-6 * span;

    let mut means: Vec<f64> = (0..k)
        .map(|j| lo + span * j as f64 / (k.max(2) - 1) as f64)
        .collect();
    let mut sigmas = vec![span / (4.0 * k as f64); k];
    let mut weights = vec![1.0 / k as f64; k];

    let n = values.len();
    let mut resp = vec![0.0f64; n * k];
    let mut last_ll = f64::NEG_INFINITY;

    for _ in 0..MAX_ITER {
        // E step.
        let mut ll = 0.0;
        for (i, &v) in values.iter().enumerate() {
            let mut total = 0.0;
            for j in 0..k {
                let z = (v - means[j]) / sigmas[j];
                let pdf = (-0.5 * z * z).exp() / (sigmas[j] * (2.0 * std::f64::consts::PI).sqrt());
                let p = weights[j] * pdf;
                resp[i * k + j] = p;
                total += p;
            }
            let total = total.max(f64::MIN_POSITIVE);
            for j in 0..k {
                resp[i * k + j] /= total;
            }
            ll += total.ln();
        }

        // M step.
        for j in 0..k {
            let nj: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            let nj = nj.max(1e-12);
            let mean = (0..n).map(|i| resp[i * k + j] * values[i]).sum::<f64>() / nj;
            let var = (0..n)
                .map(|i| {
                    let d = values[i] - mean;
                    resp[i * k + j] * d * d
                })
                .sum::<f64>()
                / nj;
            means[j] = mean;
            sigmas[j] = var.sqrt().max(sigma_floor);
            weights[j] = nj / n as f64;
        }

        // Keep components ordered by mean so index equals photon number.
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| means[a].partial_cmp(&means[b]).unwrap());
        means = order.iter().map(|&j| means[j]).collect();
        sigmas = order.iter().map(|&j| sigmas[j]).collect();
        weights = order.iter().map(|&j| weights[j]).collect();

        if (ll - last_ll).abs() <= REL_TOL * ll.abs().max(1.0) {
            last_ll = ll;
            break;
        }
        last_ll = ll;
    }

    if means.iter().any(|m| !m.is_finite()) || sigmas.iter().any(|s| !s.is_finite()) {
        return Err(ReadoutError::FitFailed { reason: "fit diverged".into() });
    }
    Ok(MixtureFit { means, sigmas, weights, log_likelihood: last_ll })
}
