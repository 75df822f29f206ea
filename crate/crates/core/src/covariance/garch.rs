//! Univariate GARCH(1,1) quasi-maximum-likelihood fitting.

use serde::{Deserialize, Serialize};

use crate::optim::{logistic, logit, nelder_mead, NelderMeadOptions};

/// Upper bound on α + β used by the reparameterization; keeps the
/// stationarity constraint strict.
pub(crate) const MAX_PERSISTENCE: f64 = 0.9999;

/// σ²ₜ₊₁ = ω + α·ε²ₜ + β·σ²ₜ
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl GarchParams {
    pub fn persistence(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn is_valid(&self) -> bool {
        self.omega > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.persistence() < 1.0
            && self.omega.is_finite()
    }

    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.persistence())
    }

    /// Conditional variance path for `resid`. Entry `t` is the variance of
    /// `resid[t]` given the past; the final entry (index `len`) is the
    /// one-step-ahead forecast. The recursion starts from the sample mean of
    /// squared residuals.
    pub fn variance_path(&self, resid: &[f64]) -> Vec<f64> {
        let backcast = resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64;
        let mut path = Vec::with_capacity(resid.len() + 1);
        let mut s2 = backcast;
        path.push(s2);
        for e in resid {
            s2 = self.omega + self.alpha * e * e + self.beta * s2;
            path.push(s2);
        }
        path
    }
}

fn decode(theta: &[f64]) -> GarchParams {
    let persistence = MAX_PERSISTENCE * logistic(theta[1]);
    let alpha = persistence * logistic(theta[2]);
    GarchParams {
        omega: theta[0].exp(),
        alpha,
        beta: persistence - alpha,
    }
}

fn encode(p: &GarchParams) -> Vec<f64> {
    let persistence = p.persistence();
    vec![
        p.omega.ln(),
        logit(persistence / MAX_PERSISTENCE),
        logit(p.alpha / persistence),
    ]
}

/// Gaussian negative log-likelihood, up to constants and a factor of ½.
pub(crate) fn neg_log_likelihood(p: &GarchParams, resid: &[f64]) -> f64 {
    let backcast = resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64;
    let mut s2 = backcast;
    let mut nll = 0.0;
    for e in resid {
        if !(s2 > 0.0) {
            return f64::INFINITY;
        }
        nll += s2.ln() + e * e / s2;
        s2 = p.omega + p.alpha * e * e + p.beta * s2;
    }
    nll
}

/// Fits GARCH(1,1) to zero-mean residuals. Returns the parameters and the
/// attained negative log-likelihood. Fitting runs on residuals scaled to unit
/// variance and ω is mapped back, so the result scales as ω ∝ c² when the
/// input is multiplied by c.
pub fn fit_garch(resid: &[f64]) -> Option<(GarchParams, f64)> {
    let var = resid.iter().map(|e| e * e).sum::<f64>() / resid.len() as f64;
    if !(var > 0.0) || !var.is_finite() {
        return None;
    }
    let scale = var.sqrt();
    let x: Vec<f64> = resid.iter().map(|e| e / scale).collect();

    let objective = |theta: &[f64]| neg_log_likelihood(&decode(theta), &x);
    let opts = NelderMeadOptions {
        max_evals: 1500,
        f_tol: 1e-9,
        x_tol: 1e-7,
        initial_step: 0.5,
    };

    let starts = [(0.05, 0.90), (0.10, 0.80), (0.02, 0.97), (0.03, 0.30)];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for (alpha, beta) in starts {
        let p0 = GarchParams {
            omega: 1.0 - alpha - beta,
            alpha,
            beta,
        };
        let m = nelder_mead(objective, &encode(&p0), opts);
        if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (theta, _) = best?;
    // restart from the best vertex to escape a collapsed simplex
    let polished = nelder_mead(
        objective,
        &theta,
        NelderMeadOptions {
            initial_step: 0.1,
            ..opts
        },
    );
    let unit = decode(&polished.x);
    let params = GarchParams {
        omega: unit.omega * var,
        ..unit
    };
    if !params.is_valid() || !polished.value.is_finite() {
        return None;
    }
    let nll = neg_log_likelihood(&params, resid);
    Some((params, nll))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate(p: GarchParams, t: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s2 = p.unconditional_variance();
        let mut out = Vec::with_capacity(t);
        for _ in 0..t {
            let z: f64 = StandardNormal.sample(&mut rng);
            let e = s2.sqrt() * z;
            out.push(e);
            s2 = p.omega + p.alpha * e * e + p.beta * s2;
        }
        out
    }

    #[test]
    fn reparameterization_round_trips() {
        let p = GarchParams {
            omega: 2e-6,
            alpha: 0.07,
            beta: 0.91,
        };
        let q = decode(&encode(&p));
        assert!((q.omega - p.omega).abs() < 1e-18);
        assert!((q.alpha - p.alpha).abs() < 1e-12);
        assert!((q.beta - p.beta).abs() < 1e-12);
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = GarchParams {
            omega: 1e-6,
            alpha: 0.08,
            beta: 0.90,
        };
        let resid = simulate(truth, 4000, 11);
        let (fit, _) = fit_garch(&resid).unwrap();
        assert!((fit.alpha - truth.alpha).abs() < 0.05, "{fit:?}");
        assert!((fit.beta - truth.beta).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn fit_scales_with_input() {
        let truth = GarchParams {
            omega: 1e-6,
            alpha: 0.08,
            beta: 0.90,
        };
        let resid = simulate(truth, 1000, 3);
        let scaled: Vec<f64> = resid.iter().map(|e| e * 3.0).collect();
        let (a, _) = fit_garch(&resid).unwrap();
        let (b, _) = fit_garch(&scaled).unwrap();
        assert!(((b.omega / 9.0 - a.omega) / a.omega).abs() < 1e-6);
        assert!((a.alpha - b.alpha).abs() < 1e-6);
        assert!((a.beta - b.beta).abs() < 1e-6);
    }

    #[test]
    fn zero_series_has_no_fit() {
        assert!(fit_garch(&[0.0; 300]).is_none());
    }
}
