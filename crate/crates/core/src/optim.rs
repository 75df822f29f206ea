//! Derivative-free Nelder–Mead simplex minimization.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop once the spread of objective values across the simplex drops below this.
    pub f_tol: f64,
    /// ...and the simplex diameter drops below this.
    pub x_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-10,
            x_tol: 1e-8,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite objective values are treated as +inf,
/// so callers can signal infeasible points by returning NaN or inf.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut converged = false;

    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = (values[n] - values[0]).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|x| {
                x.iter()
                    .zip(&simplex[0])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if values[0].is_finite() && spread <= opts.f_tol && diameter <= opts.x_tol {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |coef: f64| -> Vec<f64> {
            (0..n)
                .map(|j| centroid[j] + coef * (simplex[n][j] - centroid[j]))
                .collect()
        };

        let reflected = along(-alpha);
        let fr = eval(&reflected, &mut evals);
        if fr < values[0] {
            let expanded = along(-gamma);
            let fe = eval(&expanded, &mut evals);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let c = along(-rho);
            let fc = eval(&c, &mut evals);
            (c, fc)
        } else {
            let c = along(rho);
            let fc = eval(&c, &mut evals);
            (c, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let shrunk: Vec<f64> = (0..n)
                .map(|j| simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]))
                .collect();
            values[i] = eval(&shrunk, &mut evals);
            simplex[i] = shrunk;
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evals,
        converged,
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
