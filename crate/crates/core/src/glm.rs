//! Weighted elastic-net penalized GLM solver for Gaussian, Poisson and
//! multinomial (incl. binomial) families, via cyclic coordinate descent
//! with warm-started regularization paths.
//!
//! The objective is
//!
//! ```text
//! (1/sum(w)) * sum_t w_t * NLL_t  +  lambda * ( alpha*||theta||_1 + (1-alpha)/2*||theta||_2^2 )
//! ```
//!
//! with unpenalized intercepts. The Gaussian NLL is the squared loss
//! over two; Poisson and multinomial are solved by iteratively
//! reweighted penalized least squares around the current linear
//! predictor. The multinomial uses the symmetric parameterization (no
//! reference category) with one probability model per category.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient-change tolerance between sweeps.
pub const COEF_TOL: f64 = 1e-7;
/// Hard cap on coordinate-descent sweeps per fit.
pub const MAX_SWEEPS: usize = 100_000;
/// Linear predictors of count models are clamped to this magnitude.
pub const ETA_CLAMP: f64 = 30.0;
/// Floor applied to the Gaussian residual sd inside the log-likelihood.
pub const SD_FLOOR: f64 = 1e-8;
/// Ridge used to pin the symmetric multinomial parameterization when
/// the elastic-net l2 component vanishes.
const MULTINOMIAL_PIN_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Poisson,
    /// Categorical response with the given number of levels.
    Multinomial(usize),
}

impl Family {
    /// Number of linear predictors (response categories).
    pub fn n_cat(&self) -> usize {
        match self {
            Family::Multinomial(m) => *m,
            _ => 1,
        }
    }
}

/// Response of one node regression: raw values for continuous families,
/// 0-based category codes for the multinomial.
#[derive(Debug, Clone)]
pub enum Response {
    Continuous(Array1<f64>),
    Codes(Vec<usize>),
}

impl Response {
    pub fn len(&self) -> usize {
        match self {
            Response::Continuous(y) => y.len(),
            Response::Codes(y) => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One weighted penalized node regression.
#[derive(Debug, Clone)]
pub struct GlmProblem {
    pub family: Family,
    pub x: Array2<f64>,
    pub response: Response,
    pub weights: Array1<f64>,
    pub alpha: f64,
    pub lambda: f64,
    /// Whether an unpenalized intercept is fitted per category.
    /// Overparameterized designs span the constant, so their fits
    /// disable it.
    pub intercept: bool,
}

impl GlmProblem {
    pub fn new(
        family: Family,
        x: Array2<f64>,
        response: Response,
        weights: Array1<f64>,
        alpha: f64,
        lambda: f64,
        intercept: bool,
    ) -> Result<Self> {
        let n = x.nrows();
        if response.len() != n {
            return Err(Error::Solver(format!(
                "response length {} does not match design rows {n}",
                response.len()
            )));
        }
        if weights.len() != n {
            return Err(Error::Solver(format!(
                "weights length {} does not match design rows {n}",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::Solver("weights must be nonnegative and finite".into()));
        }
        if weights.iter().filter(|&&w| w > 0.0).count() < 2 {
            return Err(Error::Solver("need at least two positive weights".into()));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Solver(format!("alpha must be in [0, 1], got {alpha}")));
        }
        if lambda < 0.0 {
            return Err(Error::Solver(format!("lambda must be nonnegative, got {lambda}")));
        }
        if let (Family::Multinomial(m), Response::Codes(codes)) = (&family, &response) {
            if codes.iter().any(|&c| c >= *m) {
                return Err(Error::Solver("category code out of range".into()));
            }
        }
        Ok(GlmProblem { family, x, response, weights, alpha, lambda, intercept })
    }

    pub fn n_obs(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    /// Effective sample size: the total observation weight.
    pub fn n_eff(&self) -> f64 {
        self.weights.sum()
    }

    pub fn with_lambda(&self, lambda: f64) -> GlmProblem {
        let mut p = self.clone();
        p.lambda = lambda;
        p
    }
}

/// Fitted coefficients and fit statistics of one node regression.
/// Coefficients sit in an `n_cat x q` matrix with one row per response
/// category (a single row for continuous families).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmSolution {
    pub coefficients: Array2<f64>,
    pub intercepts: Array1<f64>,
    pub loglik: f64,
    pub s0: usize,
    pub converged: bool,
    pub residual_sd: Option<f64>,
    pub warnings: Vec<String>,
}

impl GlmSolution {
    fn count_nonzero(coefficients: &Array2<f64>) -> usize {
        coefficients.iter().filter(|&&c| c != 0.0).count()
    }
}

/// Linear predictors `eta[t][c] = b_c + x_t . theta_c`.
pub fn linear_predictor(
    x: &Array2<f64>,
    coefficients: &Array2<f64>,
    intercepts: &Array1<f64>,
) -> Array2<f64> {
    let mut eta = x.dot(&coefficients.t());
    for mut row in eta.rows_mut() {
        row += intercepts;
    }
    eta
}

/// Row-wise softmax probabilities from multinomial linear predictors.
pub fn softmax_rows(eta: &Array2<f64>) -> Array2<f64> {
    let mut p = eta.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Per-observation negative log-likelihood contributions used for
/// fitting and cross-validation (constants in the parameters dropped).
pub fn pointwise_nll(family: &Family, eta: &Array2<f64>, response: &Response) -> Array1<f64> {
    match (family, response) {
        (Family::Gaussian, Response::Continuous(y)) => Array1::from_iter(
            y.iter()
                .zip(eta.column(0).iter())
                .map(|(&yt, &et)| 0.5 * (yt - et) * (yt - et)),
        ),
        (Family::Poisson, Response::Continuous(y)) => Array1::from_iter(
            y.iter()
                .zip(eta.column(0).iter())
                .map(|(&yt, &et)| {
                    let e = et.clamp(-ETA_CLAMP, ETA_CLAMP);
                    e.exp() - yt * e
                }),
        ),
        (Family::Multinomial(_), Response::Codes(codes)) => Array1::from_iter(
            codes.iter().zip(eta.rows()).map(|(&c, row)| {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
                lse - row[c]
            }),
        ),
        _ => panic!("response type does not match family"),
    }
}

/// Weighted NLL gradient with respect to the coefficients, normalized
/// by the total weight: `g[c][j] = (1/sum w) * sum_t w_t (mu_tc - y_tc) x_tj`.
/// This is the quantity the KKT conditions are stated in.
pub fn nll_gradient(
    problem: &GlmProblem,
    coefficients: &Array2<f64>,
    intercepts: &Array1<f64>,
) -> Array2<f64> {
    let eta = linear_predictor(&problem.x, coefficients, intercepts);
    let resid = working_residual(problem, &eta);
    let w_total = problem.weights.sum();
    let n = problem.n_obs();
    let n_cat = problem.family.n_cat();
    let q = problem.n_cols();
    let mut grad = Array2::zeros((n_cat, q));
    for c in 0..n_cat {
        for j in 0..q {
            let mut acc = 0.0;
            for t in 0..n {
                acc += problem.weights[t] * resid[[t, c]] * problem.x[[t, j]];
            }
            grad[[c, j]] = acc / w_total;
        }
    }
    grad
}

/// `mu - y` per observation and category.
fn working_residual(problem: &GlmProblem, eta: &Array2<f64>) -> Array2<f64> {
    let n = problem.n_obs();
    match (&problem.family, &problem.response) {
        (Family::Gaussian, Response::Continuous(y)) => {
            let mut r = Array2::zeros((n, 1));
            for t in 0..n {
                r[[t, 0]] = eta[[t, 0]] - y[t];
            }
            r
        }
        (Family::Poisson, Response::Continuous(y)) => {
            let mut r = Array2::zeros((n, 1));
            for t in 0..n {
                let mu = eta[[t, 0]].clamp(-ETA_CLAMP, ETA_CLAMP).exp();
                r[[t, 0]] = mu - y[t];
            }
            r
        }
        (Family::Multinomial(m), Response::Codes(codes)) => {
            let p = softmax_rows(eta);
            let mut r = Array2::zeros((n, *m));
            for t in 0..n {
                for c in 0..*m {
                    r[[t, c]] = p[[t, c]] - if codes[t] == c { 1.0 } else { 0.0 };
                }
            }
            r
        }
        _ => panic!("response type does not match family"),
    }
}

/// Descending lambda sequence for a problem: `lambda_max` is the
/// smallest value at which every penalized coefficient is zero,
/// computed from the maximal absolute weighted gradient at the
/// intercept-only fit divided by alpha (alpha floored at 0.001), then
/// log-equally spaced down to `min_ratio * lambda_max`.
///
/// `min_ratio` defaults to 0.0001 when the effective sample size
/// exceeds the column count and 0.01 otherwise.
pub fn lambda_path(
    problem: &GlmProblem,
    n_lambda: usize,
    min_ratio: Option<f64>,
) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::Selection(format!("n_lambda must be >= 2, got {n_lambda}")));
    }
    let min_ratio = min_ratio.unwrap_or(if problem.n_eff() > problem.n_cols() as f64 {
        1e-4
    } else {
        1e-2
    });
    if !(0.0 < min_ratio && min_ratio < 1.0) {
        return Err(Error::Selection(format!(
            "min_ratio must be in (0, 1), got {min_ratio}"
        )));
    }
    let lambda_max = compute_lambda_max(problem)?;
    let log_max = lambda_max.ln();
    let log_min = (min_ratio * lambda_max).ln();
    let seq = (0..n_lambda)
        .map(|i| {
            let f = i as f64 / (n_lambda - 1) as f64;
            (log_max + f * (log_min - log_max)).exp()
        })
        .collect();
    Ok(seq)
}

fn response_is_constant(response: &Response) -> bool {
    match response {
        Response::Continuous(y) => y.windows(2).into_iter().all(|w| w[0] == w[1]),
        Response::Codes(c) => c.windows(2).all(|w| w[0] == w[1]),
    }
}

fn compute_lambda_max(problem: &GlmProblem) -> Result<f64> {
    if response_is_constant(&problem.response) {
        return Err(Error::DegenerateResponse);
    }
    let n_cat = problem.family.n_cat();
    let coefficients = Array2::zeros((n_cat, problem.n_cols()));
    let intercepts = null_intercepts(problem);
    let grad = nll_gradient(problem, &coefficients, &intercepts);
    let g_max = grad.iter().fold(0.0_f64, |m, &g| m.max(g.abs()));
    if g_max <= 0.0 {
        return Err(Error::ZeroLambdaMax);
    }
    // tiny headroom so the path start is all-zero regardless of the
    // summation order used inside the coordinate updates
    Ok(g_max * (1.0 + 1e-10) / problem.alpha.max(1e-3))
}

/// Intercepts of the unpenalized intercept-only fit (zeros when the
/// problem carries no intercept).
fn null_intercepts(problem: &GlmProblem) -> Array1<f64> {
    let n_cat = problem.family.n_cat();
    if !problem.intercept {
        return Array1::zeros(n_cat);
    }
    let w_total = problem.weights.sum();
    match (&problem.family, &problem.response) {
        (Family::Gaussian, Response::Continuous(y)) => {
            let mean = problem.weights.dot(y) / w_total;
            Array1::from_elem(1, mean)
        }
        (Family::Poisson, Response::Continuous(y)) => {
            let mean = (problem.weights.dot(y) / w_total).max(1e-10);
            Array1::from_elem(1, mean.ln())
        }
        (Family::Multinomial(m), Response::Codes(codes)) => {
            let mut freq = vec![0.0; *m];
            for (t, &c) in codes.iter().enumerate() {
                freq[c] += problem.weights[t];
            }
            let logs: Vec<f64> = freq
                .iter()
                .map(|&f| (f / w_total).max(1e-10).ln())
                .collect();
            let mean = logs.iter().sum::<f64>() / *m as f64;
            Array1::from_iter(logs.iter().map(|&l| l - mean))
        }
        _ => panic!("response type does not match family"),
    }
}

/// State threaded through the coordinate-descent sweeps.
struct CdState {
    /// Per-column design values, column-major for cache-friendly sweeps.
    cols: Vec<Vec<f64>>,
    sweeps: usize,
    clamp_hit: bool,
}

impl CdState {
    fn new(x: &Array2<f64>) -> Self {
        let cols = (0..x.ncols()).map(|j| x.column(j).to_vec()).collect();
        CdState { cols, sweeps: 0, clamp_hit: false }
    }
}

/// One pass of cyclic coordinate descent on the weighted least squares
/// problem around working response `z` with IRLS weights `w` (already
/// multiplied with the observation weights). Returns the largest
/// coefficient change. `residual` tracks `z - b - x theta`.
#[allow(clippy::too_many_arguments)]
fn cd_sweep(
    state: &CdState,
    w: &[f64],
    w_total: f64,
    residual: &mut [f64],
    theta: &mut [f64],
    intercept: &mut f64,
    fit_intercept: bool,
    lam_l1: f64,
    lam_l2: f64,
    active_only: bool,
    active: &[bool],
) -> f64 {
    let mut max_change = 0.0_f64;
    if fit_intercept {
        let w_sum: f64 = w.iter().sum();
        if w_sum > 0.0 {
            let delta = w
                .iter()
                .zip(residual.iter())
                .map(|(&wt, &rt)| wt * rt)
                .sum::<f64>()
                / w_sum;
            if delta != 0.0 {
                *intercept += delta;
                for r in residual.iter_mut() {
                    *r -= delta;
                }
                max_change = max_change.max(delta.abs());
            }
        }
    }
    for (j, col) in state.cols.iter().enumerate() {
        if active_only && !active[j] {
            continue;
        }
        let old = theta[j];
        let mut rho = 0.0;
        let mut vj = 0.0;
        for t in 0..col.len() {
            let wx = w[t] * col[t];
            rho += wx * residual[t];
            vj += wx * col[t];
        }
        rho = rho / w_total + (vj / w_total) * old;
        let denom = vj / w_total + lam_l2;
        let new = if denom > 0.0 {
            soft_threshold(rho, lam_l1) / denom
        } else {
            0.0
        };
        if new != old {
            let delta = new - old;
            for t in 0..col.len() {
                residual[t] -= col[t] * delta;
            }
            theta[j] = new;
            max_change = max_change.max(delta.abs());
        }
    }
    max_change
}

/// Move the symmetric multinomial fit to its canonical representative:
/// softmax probabilities are invariant to shifting one column's
/// coefficients by a constant across categories, so under a pure l1
/// penalty each column is recentred at the category median (the shift
/// minimizing the penalty) and unpenalized intercepts at their mean.
/// With a ridge component present the optimum is already unique and the
/// coefficients are left alone.
fn recenter_symmetric(
    coefficients: &mut Array2<f64>,
    intercepts: &mut Array1<f64>,
    has_intercept: bool,
    lam_l1: f64,
    lam_l2: f64,
) {
    let m = coefficients.nrows();
    if m < 2 {
        return;
    }
    if lam_l1 > 0.0 && lam_l2 == 0.0 {
        let q = coefficients.ncols();
        let mut vals = vec![0.0; m];
        for j in 0..q {
            for c in 0..m {
                vals[c] = coefficients[[c, j]];
            }
            vals.sort_by(f64::total_cmp);
            let shift = if m % 2 == 1 {
                vals[m / 2]
            } else {
                0.5 * (vals[m / 2 - 1] + vals[m / 2])
            };
            if shift != 0.0 {
                for c in 0..m {
                    coefficients[[c, j]] -= shift;
                }
            }
        }
    }
    if has_intercept {
        let mean = intercepts.sum() / m as f64;
        if mean != 0.0 {
            intercepts.mapv_inplace(|b| b - mean);
        }
    }
}

/// The elastic-net objective being minimized, used as a stall detector
/// for the multinomial outer loop.
fn penalized_objective(
    problem: &GlmProblem,
    coefficients: &Array2<f64>,
    intercepts: &Array1<f64>,
    lam_l1: f64,
    lam_l2: f64,
) -> f64 {
    let eta = linear_predictor(&problem.x, coefficients, intercepts);
    let nll = pointwise_nll(&problem.family, &eta, &problem.response);
    let w_total = problem.weights.sum();
    let data_term = problem
        .weights
        .iter()
        .zip(nll.iter())
        .map(|(&w, &v)| w * v)
        .sum::<f64>()
        / w_total;
    let l1: f64 = coefficients.iter().map(|c| c.abs()).sum();
    let l2: f64 = coefficients.iter().map(|c| c * c).sum();
    data_term + lam_l1 * l1 + 0.5 * lam_l2 * l2
}

#[inline]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Solve the penalized WLS subproblem to tolerance with an active-set
/// strategy. `w` are the combined IRLS weights, `w_total` the total
/// observation weight of the problem (kept fixed across IRLS).
#[allow(clippy::too_many_arguments)]
fn cd_solve(
    state: &mut CdState,
    w: &[f64],
    w_total: f64,
    z: &[f64],
    theta: &mut [f64],
    intercept: &mut f64,
    fit_intercept: bool,
    lam_l1: f64,
    lam_l2: f64,
) -> bool {
    let n = z.len();
    let q = theta.len();
    let mut residual: Vec<f64> = (0..n)
        .map(|t| {
            let mut eta = *intercept;
            for j in 0..q {
                if theta[j] != 0.0 {
                    eta += state.cols[j][t] * theta[j];
                }
            }
            z[t] - eta
        })
        .collect();
    let mut active = vec![false; q];
    loop {
        if state.sweeps >= MAX_SWEEPS {
            return false;
        }
        state.sweeps += 1;
        let change = cd_sweep(
            state, w, w_total, &mut residual, theta, intercept, fit_intercept, lam_l1, lam_l2,
            false, &active,
        );
        for (j, a) in active.iter_mut().enumerate() {
            *a = theta[j] != 0.0;
        }
        if change < COEF_TOL {
            return true;
        }
        // iterate the active set until stable, then re-verify on all columns
        loop {
            if state.sweeps >= MAX_SWEEPS {
                return false;
            }
            state.sweeps += 1;
            let change = cd_sweep(
                state, w, w_total, &mut residual, theta, intercept, fit_intercept, lam_l1,
                lam_l2, true, &active,
            );
            if change < COEF_TOL {
                break;
            }
        }
    }
}

/// Fit one penalized GLM, optionally warm-started.
pub fn fit_glm_warm(problem: &GlmProblem, warm: Option<&GlmSolution>) -> Result<GlmSolution> {
    if problem.n_cols() == 0 {
        return Err(Error::Solver("design matrix is empty".into()));
    }
    let n_cat = problem.family.n_cat();
    let q = problem.n_cols();
    let mut coefficients = match warm {
        Some(s) if s.coefficients.dim() == (n_cat, q) => s.coefficients.clone(),
        _ => Array2::zeros((n_cat, q)),
    };
    let mut intercepts = match warm {
        Some(s) if s.intercepts.len() == n_cat && problem.intercept => s.intercepts.clone(),
        _ => null_intercepts(problem),
    };

    let w_total = problem.weights.sum();
    let lam_l1 = problem.lambda * problem.alpha;
    let mut lam_l2 = problem.lambda * (1.0 - problem.alpha);
    if matches!(problem.family, Family::Multinomial(_))
        && lam_l1 == 0.0
        && lam_l2 < MULTINOMIAL_PIN_RIDGE
    {
        // nothing else pins the symmetric parameterization
        lam_l2 = MULTINOMIAL_PIN_RIDGE;
    }

    let mut state = CdState::new(&problem.x);
    let n = problem.n_obs();
    let w: Vec<f64> = problem.weights.to_vec();

    let converged = match (&problem.family, &problem.response) {
        (Family::Gaussian, Response::Continuous(y)) => {
            let mut theta: Vec<f64> = coefficients.row(0).to_vec();
            let mut b = intercepts[0];
            let ok = cd_solve(
                &mut state, &w, w_total, y.as_slice().unwrap(), &mut theta, &mut b,
                problem.intercept, lam_l1, lam_l2,
            );
            coefficients.row_mut(0).assign(&Array1::from(theta));
            intercepts[0] = b;
            ok
        }
        (Family::Poisson, Response::Continuous(y)) => {
            let mut theta: Vec<f64> = coefficients.row(0).to_vec();
            let mut b = intercepts[0];
            let mut ok = false;
            while state.sweeps < MAX_SWEEPS {
                let before = theta.clone();
                let b_before = b;
                let mut irls_w = vec![0.0; n];
                let mut z = vec![0.0; n];
                for t in 0..n {
                    let mut eta = b;
                    for (j, &th) in theta.iter().enumerate() {
                        if th != 0.0 {
                            eta += state.cols[j][t] * th;
                        }
                    }
                    if eta.abs() > ETA_CLAMP {
                        state.clamp_hit = true;
                        eta = eta.clamp(-ETA_CLAMP, ETA_CLAMP);
                    }
                    let mu = eta.exp();
                    let m = mu.max(1e-10);
                    irls_w[t] = w[t] * m;
                    z[t] = eta + (y[t] - mu) / m;
                }
                if !cd_solve(
                    &mut state, &irls_w, w_total, &z, &mut theta, &mut b, problem.intercept,
                    lam_l1, lam_l2,
                ) {
                    break;
                }
                let mut change = (b - b_before).abs();
                for j in 0..q {
                    change = change.max((theta[j] - before[j]).abs());
                }
                if change < COEF_TOL {
                    ok = true;
                    break;
                }
            }
            coefficients.row_mut(0).assign(&Array1::from(theta));
            intercepts[0] = b;
            ok
        }
        (Family::Multinomial(m), Response::Codes(codes)) => {
            let m = *m;
            let mut ok = false;
            let mut prev_obj = f64::INFINITY;
            while state.sweeps < MAX_SWEEPS {
                let before = coefficients.clone();
                let b_before = intercepts.clone();
                for c in 0..m {
                    let eta = linear_predictor(&problem.x, &coefficients, &intercepts);
                    let probs = softmax_rows(&eta);
                    let mut irls_w = vec![0.0; n];
                    let mut z = vec![0.0; n];
                    for t in 0..n {
                        let pc = probs[[t, c]].clamp(1e-5, 1.0 - 1e-5);
                        let mt = pc * (1.0 - pc);
                        let yc = if codes[t] == c { 1.0 } else { 0.0 };
                        irls_w[t] = w[t] * mt;
                        z[t] = eta[[t, c]] + (yc - probs[[t, c]]) / mt;
                    }
                    let mut theta: Vec<f64> = coefficients.row(c).to_vec();
                    let mut b = intercepts[c];
                    if !cd_solve(
                        &mut state, &irls_w, w_total, &z, &mut theta, &mut b,
                        problem.intercept, lam_l1, lam_l2,
                    ) {
                        break;
                    }
                    coefficients.row_mut(c).assign(&Array1::from(theta));
                    intercepts[c] = b;
                }
                recenter_symmetric(&mut coefficients, &mut intercepts, problem.intercept, lam_l1, lam_l2);
                let mut change = 0.0_f64;
                for c in 0..m {
                    change = change.max((intercepts[c] - b_before[c]).abs());
                    for j in 0..q {
                        change = change.max((coefficients[[c, j]] - before[[c, j]]).abs());
                    }
                }
                if change < COEF_TOL {
                    ok = true;
                    break;
                }
                // the symmetric parameterization can slide inside a flat
                // set of minimizers; a stalled objective means we are done
                let obj = penalized_objective(problem, &coefficients, &intercepts, lam_l1, lam_l2);
                if (prev_obj - obj).abs() < 1e-11 * (1.0 + obj.abs()) {
                    ok = true;
                    break;
                }
                prev_obj = obj;
            }
            ok
        }
        _ => return Err(Error::Solver("response type does not match family".into())),
    };

    let mut warnings = Vec::new();
    if state.clamp_hit {
        warnings.push("poisson linear predictor clamped at |eta| = 30".into());
    }
    if !converged {
        warnings.push(format!(
            "coordinate descent did not converge within {MAX_SWEEPS} sweeps"
        ));
    }

    let eta = linear_predictor(&problem.x, &coefficients, &intercepts);
    let residual_sd = match (&problem.family, &problem.response) {
        (Family::Gaussian, Response::Continuous(y)) => {
            let rss: f64 = (0..n)
                .map(|t| {
                    let r = y[t] - eta[[t, 0]];
                    problem.weights[t] * r * r
                })
                .sum();
            Some((rss / w_total).sqrt())
        }
        _ => None,
    };

    let mut solution = GlmSolution {
        s0: GlmSolution::count_nonzero(&coefficients),
        coefficients,
        intercepts,
        loglik: 0.0,
        converged,
        residual_sd,
        warnings,
    };
    solution.loglik = log_likelihood(&solution, problem);
    Ok(solution)
}

/// Fit one penalized GLM from a cold start.
pub fn fit_glm(problem: &GlmProblem) -> Result<GlmSolution> {
    fit_glm_warm(problem, None)
}

/// Fit a strictly descending lambda sequence with warm starts.
pub fn fit_path(problem: &GlmProblem, lambdas: &[f64]) -> Result<Vec<GlmSolution>> {
    if lambdas.is_empty() {
        return Err(Error::Selection("lambda sequence is empty".into()));
    }
    for w in lambdas.windows(2) {
        if w[1] >= w[0] {
            return Err(Error::Selection(
                "lambda sequence must be strictly descending".into(),
            ));
        }
    }
    let mut out: Vec<GlmSolution> = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let prob = problem.with_lambda(lambda);
        let warm = out.last();
        out.push(fit_glm_warm(&prob, warm)?);
    }
    Ok(out)
}

fn ln_factorial(y: f64) -> f64 {
    let k = y.max(0.0).round() as u64;
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Weighted log-likelihood of a fitted solution under its family.
/// Gaussian uses the fitted residual sd (floored), Poisson the full
/// count likelihood, multinomial the predicted class probabilities.
pub fn log_likelihood(solution: &GlmSolution, problem: &GlmProblem) -> f64 {
    let eta = linear_predictor(&problem.x, &solution.coefficients, &solution.intercepts);
    let n = problem.n_obs();
    match (&problem.family, &problem.response) {
        (Family::Gaussian, Response::Continuous(y)) => {
            let sd = solution.residual_sd.unwrap_or(1.0).max(SD_FLOOR);
            let ln_norm = -(0.5 * (2.0 * std::f64::consts::PI).ln() + sd.ln());
            (0..n)
                .map(|t| {
                    let r = (y[t] - eta[[t, 0]]) / sd;
                    problem.weights[t] * (ln_norm - 0.5 * r * r)
                })
                .sum()
        }
        (Family::Poisson, Response::Continuous(y)) => (0..n)
            .map(|t| {
                let e = eta[[t, 0]].clamp(-ETA_CLAMP, ETA_CLAMP);
                problem.weights[t] * (y[t] * e - e.exp() - ln_factorial(y[t]))
            })
            .sum(),
        (Family::Multinomial(_), Response::Codes(_)) => {
            let nll = pointwise_nll(&problem.family, &eta, &problem.response);
            -(0..n).map(|t| problem.weights[t] * nll[t]).sum::<f64>()
        }
        _ => panic!("response type does not match family"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn unit_weights(n: usize) -> Array1<f64> {
        Array1::ones(n)
    }

    /// Weighted least squares by normal equations, independent of the
    /// coordinate-descent path (Gauss elimination with partial pivots).
    pub fn wls_oracle(x: &Array2<f64>, y: &Array1<f64>, w: &Array1<f64>) -> Vec<f64> {
        let n = x.nrows();
        let q = x.ncols() + 1; // intercept first
        let mut a = vec![vec![0.0; q + 1]; q];
        let col = |j: usize, t: usize| if j == 0 { 1.0 } else { x[[t, j - 1]] };
        for i in 0..q {
            for j in 0..q {
                let mut acc = 0.0;
                for t in 0..n {
                    acc += w[t] * col(i, t) * col(j, t);
                }
                a[i][j] = acc;
            }
            let mut acc = 0.0;
            for t in 0..n {
                acc += w[t] * col(i, t) * y[t];
            }
            a[i][q] = acc;
        }
        for piv in 0..q {
            let best = (piv..q).max_by(|&r, &s| a[r][piv].abs().total_cmp(&a[s][piv].abs())).unwrap();
            a.swap(piv, best);
            let d = a[piv][piv];
            for j in piv..=q {
                a[piv][j] /= d;
            }
            for r in 0..q {
                if r != piv && a[r][piv] != 0.0 {
                    let f = a[r][piv];
                    for j in piv..=q {
                        a[r][j] -= f * a[piv][j];
                    }
                }
            }
        }
        (0..q).map(|i| a[i][q]).collect()
    }

    fn random_gaussian_problem(seed: u64, n: usize, q: usize, lambda: f64) -> GlmProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, q), |_| rng.random::<f64>() * 2.0 - 1.0);
        let beta: Vec<f64> = (0..q).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let y = Array1::from_iter((0..n).map(|t| {
            let mut v = 0.3;
            for j in 0..q {
                v += x[[t, j]] * beta[j];
            }
            v + (rng.random::<f64>() - 0.5)
        }));
        GlmProblem::new(
            Family::Gaussian,
            x,
            Response::Continuous(y),
            unit_weights(n),
            1.0,
            lambda,
            true,
        )
        .unwrap()
    }

    #[test]
    fn unpenalized_gaussian_matches_wls_closed_form() {
        for seed in 0..5 {
            let problem = random_gaussian_problem(seed, 60, 4, 0.0);
            let sol = fit_glm(&problem).unwrap();
            let y = match &problem.response {
                Response::Continuous(y) => y.clone(),
                _ => unreachable!(),
            };
            let oracle = wls_oracle(&problem.x, &y, &problem.weights);
            assert!((sol.intercepts[0] - oracle[0]).abs() < 1e-6);
            for j in 0..4 {
                assert!(
                    (sol.coefficients[[0, j]] - oracle[j + 1]).abs() < 1e-6,
                    "coefficient {j} mismatch"
                );
            }
        }
    }

    #[test]
    fn lambda_at_or_above_max_gives_zero_fit() {
        let problem = random_gaussian_problem(7, 80, 5, 0.0);
        let lmax = compute_lambda_max(&problem).unwrap();
        let sol = fit_glm(&problem.with_lambda(lmax)).unwrap();
        assert_eq!(sol.s0, 0);
        let y = match &problem.response {
            Response::Continuous(y) => y.clone(),
            _ => unreachable!(),
        };
        let mean = problem.weights.dot(&y) / problem.weights.sum();
        assert!((sol.intercepts[0] - mean).abs() < 1e-10);
        let below = fit_glm(&problem.with_lambda(lmax * 0.9)).unwrap();
        assert!(below.s0 >= 1);
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        // columns with mean zero, (1/n) * <x_j, x_k> = delta_jk
        let x = arr2(&[
            [1.0, 1.0],
            [1.0, -1.0],
            [-1.0, 1.0],
            [-1.0, -1.0],
        ]);
        let y = arr1(&[2.0, 0.3, 0.1, -2.0]);
        let n = 4.0;
        let problem = GlmProblem::new(
            Family::Gaussian,
            x.clone(),
            Response::Continuous(y.clone()),
            unit_weights(4),
            1.0,
            0.4,
            true,
        )
        .unwrap();
        let sol = fit_glm(&problem).unwrap();
        let ybar = y.sum() / n;
        for j in 0..2 {
            let inner = (0..4).map(|t| x[[t, j]] * (y[t] - ybar)).sum::<f64>() / n;
            let expect = soft_threshold(inner, 0.4);
            assert!(
                (sol.coefficients[[0, j]] - expect).abs() < 1e-9,
                "column {j}: got {}, expected {expect}",
                sol.coefficients[[0, j]]
            );
        }
    }

    #[test]
    fn lambda_path_log_spacing() {
        // single standardized column, unit weights
        let x = arr2(&[[1.0], [-1.0], [1.0], [-1.0]]);
        let y = arr1(&[1.0, -1.0, 1.0, -1.0]);
        let problem = GlmProblem::new(
            Family::Gaussian,
            x,
            Response::Continuous(y),
            unit_weights(4),
            1.0,
            0.0,
            true,
        )
        .unwrap();
        let path = lambda_path(&problem, 3, Some(0.01)).unwrap();
        assert!((path[0] - 1.0).abs() < 1e-9); // <x,y>/n = 1
        assert!((path[1] - 0.1).abs() < 1e-9);
        assert!((path[2] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_response_is_zero_lambda_max() {
        let x = arr2(&[[1.0], [-1.0], [1.0], [-1.0]]);
        let y = arr1(&[1.0, 1.0, -1.0, -1.0]);
        let problem = GlmProblem::new(
            Family::Gaussian,
            x,
            Response::Continuous(y),
            unit_weights(4),
            1.0,
            0.0,
            true,
        )
        .unwrap();
        match lambda_path(&problem, 5, None) {
            Err(Error::ZeroLambdaMax) => {}
            other => panic!("expected ZeroLambdaMax, got {other:?}"),
        }
    }

    #[test]
    fn constant_response_is_degenerate() {
        let x = arr2(&[[1.0], [-1.0], [0.5], [-0.5]]);
        let y = arr1(&[2.0, 2.0, 2.0, 2.0]);
        let problem = GlmProblem::new(
            Family::Gaussian,
            x,
            Response::Continuous(y),
            unit_weights(4),
            1.0,
            0.0,
            true,
        )
        .unwrap();
        match lambda_path(&problem, 5, None) {
            Err(Error::DegenerateResponse) => {}
            other => panic!("expected DegenerateResponse, got {other:?}"),
        }
    }

    #[test]
    fn warm_path_matches_cold_fits() {
        let problem = random_gaussian_problem(11, 100, 6, 0.0);
        let lambdas = lambda_path(&problem, 10, Some(0.01)).unwrap();
        let path = fit_path(&problem, &lambdas).unwrap();
        assert_eq!(path[0].s0, 0);
        let last_cold = fit_glm(&problem.with_lambda(*lambdas.last().unwrap())).unwrap();
        for j in 0..6 {
            assert!(
                (path.last().unwrap().coefficients[[0, j]] - last_cold.coefficients[[0, j]]).abs()
                    < 1e-5
            );
        }
    }

    #[test]
    fn empty_lambda_sequence_is_error() {
        let problem = random_gaussian_problem(3, 20, 2, 0.0);
        assert!(fit_path(&problem, &[]).is_err());
    }

    #[test]
    fn weight_scaling_leaves_solution_unchanged() {
        let problem = random_gaussian_problem(5, 50, 4, 0.05);
        let sol = fit_glm(&problem).unwrap();
        let mut scaled = problem.clone();
        scaled.weights.mapv_inplace(|w| w * 7.5);
        let sol2 = fit_glm(&scaled).unwrap();
        for j in 0..4 {
            assert!((sol.coefficients[[0, j]] - sol2.coefficients[[0, j]]).abs() < 1e-9);
        }
    }

    fn kkt_max_residual(problem: &GlmProblem, sol: &GlmSolution) -> f64 {
        let grad = nll_gradient(problem, &sol.coefficients, &sol.intercepts);
        let lam_a = problem.lambda * problem.alpha;
        let lam_r = problem.lambda * (1.0 - problem.alpha);
        let mut worst = 0.0_f64;
        for (g, &c) in grad.iter().zip(sol.coefficients.iter()) {
            let r = if c != 0.0 {
                (g + lam_r * c + lam_a * c.signum()).abs()
            } else {
                (g.abs() - lam_a).max(0.0)
            };
            worst = worst.max(r);
        }
        worst
    }

    #[test]
    fn kkt_holds_for_gaussian_path() {
        let problem = random_gaussian_problem(13, 120, 5, 0.0);
        let lambdas = lambda_path(&problem, 12, Some(0.01)).unwrap();
        for (i, sol) in fit_path(&problem, &lambdas).unwrap().into_iter().enumerate() {
            assert!(sol.converged);
            let r = kkt_max_residual(&problem.with_lambda(lambdas[i]), &sol);
            assert!(r <= 1e-4, "KKT residual {r} at lambda index {i}");
        }
    }

    #[test]
    fn poisson_intercept_only_loglik_matches_hand_computation() {
        let x = arr2(&[[0.0], [0.0], [0.0]]);
        let y = arr1(&[1.0, 2.0, 3.0]);
        let problem = GlmProblem::new(
            Family::Poisson,
            x,
            Response::Continuous(y.clone()),
            unit_weights(3),
            1.0,
            10.0, // all coefficients zero at a huge lambda
            true,
        )
        .unwrap();
        let sol = fit_glm(&problem).unwrap();
        let rate: f64 = 2.0; // mean of (1, 2, 3)
        let hand: f64 = y
            .iter()
            .map(|&yt| yt * rate.ln() - rate - ln_factorial(yt))
            .sum();
        assert!((sol.intercepts[0] - rate.ln()).abs() < 1e-6);
        assert!((sol.loglik - hand).abs() < 1e-6, "{} vs {hand}", sol.loglik);
    }

    #[test]
    fn multinomial_uniform_loglik_is_minus_n_log_m() {
        // balanced codes, no predictors helping: at lambda_max the fit is
        // intercept-only with equal frequencies -> uniform probabilities
        let x = arr2(&[[0.1], [-0.1], [0.2], [-0.2], [0.15], [-0.15]]);
        let codes = vec![0, 1, 2, 0, 1, 2];
        let problem = GlmProblem::new(
            Family::Multinomial(3),
            x,
            Response::Codes(codes),
            unit_weights(6),
            1.0,
            5.0,
            true,
        )
        .unwrap();
        let sol = fit_glm(&problem).unwrap();
        assert_eq!(sol.s0, 0);
        let expect = -(6.0) * 3.0_f64.ln();
        assert!((sol.loglik - expect).abs() < 1e-6, "{} vs {expect}", sol.loglik);
    }

    #[test]
    fn multinomial_probabilities_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 80;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let codes: Vec<usize> = (0..n)
            .map(|t| if x[[t, 0]] > 0.3 { 2 } else if x[[t, 1]] > 0.0 { 1 } else { 0 })
            .collect();
        let problem = GlmProblem::new(
            Family::Multinomial(3),
            x,
            Response::Codes(codes),
            unit_weights(n),
            1.0,
            0.02,
            true,
        )
        .unwrap();
        let sol = fit_glm(&problem).unwrap();
        let eta = linear_predictor(&problem.x, &sol.coefficients, &sol.intercepts);
        let p = softmax_rows(&eta);
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn kkt_holds_for_poisson_and_multinomial() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 150;
        let x = Array2::from_shape_fn((n, 4), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array1::from_iter((0..n).map(|t| {
            let rate = (0.5 + 0.6 * x[[t, 0]] - 0.4 * x[[t, 2]]).exp();
            // crude inverse-cdf poisson draw, test-only
            let u: f64 = rng.random();
            let mut c = 0.0;
            let mut acc = (-rate).exp();
            let mut pk = acc;
            while acc < u && c < 60.0 {
                c += 1.0;
                pk *= rate / c;
                acc += pk;
            }
            c
        }));
        let problem = GlmProblem::new(
            Family::Poisson,
            x.clone(),
            Response::Continuous(y),
            unit_weights(n),
            0.9,
            0.0,
            true,
        )
        .unwrap();
        let lambdas = lambda_path(&problem, 8, Some(0.05)).unwrap();
        for (i, sol) in fit_path(&problem, &lambdas).unwrap().into_iter().enumerate() {
            if sol.converged {
                let r = kkt_max_residual(&problem.with_lambda(lambdas[i]), &sol);
                assert!(r <= 1e-4, "poisson KKT residual {r} at index {i}");
            }
        }

        let codes: Vec<usize> = (0..n)
            .map(|t| if x[[t, 1]] > 0.4 { 1 } else if x[[t, 3]] > 0.0 { 2 } else { 0 })
            .collect();
        let mproblem = GlmProblem::new(
            Family::Multinomial(3),
            x,
            Response::Codes(codes),
            unit_weights(n),
            1.0,
            0.0,
            true,
        )
        .unwrap();
        let lambdas = lambda_path(&mproblem, 8, Some(0.05)).unwrap();
        for (i, sol) in fit_path(&mproblem, &lambdas).unwrap().into_iter().enumerate() {
            if sol.converged {
                let r = kkt_max_residual(&mproblem.with_lambda(lambdas[i]), &sol);
                assert!(r <= 1e-4, "multinomial KKT residual {r} at index {i}");
            }
        }
    }
}
