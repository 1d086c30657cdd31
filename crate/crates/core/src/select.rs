//! Tuning-parameter selection: lambda via EBIC or cross-validation,
//! alpha over a candidate sequence by the same criterion, and the
//! post-fit tau threshold zeroing small estimates.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::{
    fit_path, lambda_path, linear_predictor, pointwise_nll, GlmProblem, GlmSolution, Response,
};

/// Criterion used to pick lambda (and alpha).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    /// Extended BIC with hyperparameter gamma (gamma = 0 is the BIC).
    Ebic { gamma: f64 },
    /// K-fold cross-validation on out-of-fold deviance. `se_factor`
    /// trades error for sparsity: the largest lambda whose mean error
    /// stays within `se_factor` standard errors of the minimum is
    /// chosen (0 picks the minimum itself, 1 is the common
    /// one-standard-error rule).
    Cv { folds: usize, se_factor: f64 },
}

/// The se_factor the nodewise estimators default to.
pub const DEFAULT_CV_SE_FACTOR: f64 = 0.5;

impl SelectionMethod {
    /// Plain minimal-mean cross-validation.
    pub fn cv_min(folds: usize) -> Self {
        SelectionMethod::Cv { folds, se_factor: 0.0 }
    }

    /// Cross-validation with the estimators' default sparsity rule.
    pub fn cv(folds: usize) -> Self {
        SelectionMethod::Cv { folds, se_factor: DEFAULT_CV_SE_FACTOR }
    }
}

/// Post-fit thresholding mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    /// tau = s0 * sqrt(log(p_model) / n_eff), plugging in the fit's own
    /// nonzero count.
    Lw,
    None,
}

/// How tuning parameters are chosen for each node regression.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub method: SelectionMethod,
    pub alpha_seq: Vec<f64>,
    pub threshold_mode: ThresholdMode,
    pub seed: u64,
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of lambda_max; None picks the
    /// data-size dependent default.
    pub min_ratio: Option<f64>,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        SelectionSpec {
            method: SelectionMethod::cv(10),
            alpha_seq: vec![1.0],
            threshold_mode: ThresholdMode::Lw,
            seed: 1,
            n_lambda: 50,
            min_ratio: None,
        }
    }
}

impl SelectionSpec {
    fn check(&self) -> Result<()> {
        if self.alpha_seq.is_empty() {
            return Err(Error::Selection("alpha sequence is empty".into()));
        }
        if self.alpha_seq.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Selection("alpha values must lie in [0, 1]".into()));
        }
        match self.method {
            SelectionMethod::Cv { folds, .. } if folds < 2 => {
                Err(Error::Selection("cross-validation needs at least 2 folds".into()))
            }
            SelectionMethod::Ebic { gamma } if gamma < 0.0 => {
                Err(Error::Selection("ebic gamma must be nonnegative".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Extended Bayesian information criterion:
/// `-2*loglik + s0*log(n_eff) + 2*gamma*s0*log(p_model)`.
pub fn ebic(loglik: f64, s0: usize, n_eff: f64, p_model: usize, gamma: f64) -> f64 {
    -2.0 * loglik + s0 as f64 * n_eff.ln() + 2.0 * gamma * s0 as f64 * (p_model as f64).ln()
}

fn subset_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), x.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&x.row(r));
    }
    out
}

fn subset_response(response: &Response, rows: &[usize]) -> Response {
    match response {
        Response::Continuous(y) => {
            Response::Continuous(Array1::from_iter(rows.iter().map(|&r| y[r])))
        }
        Response::Codes(c) => Response::Codes(rows.iter().map(|&r| c[r]).collect()),
    }
}

/// Seeded uniformly-random fold assignment over `n` observations.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).map(|i| i % folds).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    ids
}

/// Pick a lambda from a descending path. EBIC mode minimizes the EBIC
/// over full-data path fits with `p_model` equal to the number of design
/// columns; CV mode minimizes the mean out-of-fold deviance over seeded
/// random folds. Ties break toward the larger (sparser) lambda.
///
/// Returns the chosen index and the per-lambda criterion values.
pub fn select_lambda(
    problem: &GlmProblem,
    lambdas: &[f64],
    spec: &SelectionSpec,
) -> Result<(usize, Vec<f64>)> {
    spec.check()?;
    if lambdas.is_empty() {
        return Err(Error::Selection("lambda path is empty".into()));
    }
    match spec.method {
        SelectionMethod::Ebic { gamma } => {
            let n_eff = problem.n_eff();
            let p_model = problem.n_cols();
            let criterion: Vec<f64> = fit_path_tolerant(problem, lambdas)?
                .iter()
                .map(|sol| ebic(sol.loglik, sol.s0, n_eff, p_model, gamma))
                .collect();
            Ok((argmin(&criterion), criterion))
        }
        SelectionMethod::Cv { folds, se_factor } => {
            let (means, ses) = cv_criterion(problem, lambdas, folds, spec.seed)?;
            let best = argmin(&means);
            let chosen = if se_factor > 0.0 {
                let cutoff = means[best] + se_factor * ses[best];
                (0..=best).find(|&i| means[i] <= cutoff).unwrap_or(best)
            } else {
                best
            };
            Ok((chosen, means))
        }
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Fit a path allowing a single lambda (fit_path requires length >= 1
/// and strict descent, which a single value satisfies trivially).
fn fit_path_tolerant(problem: &GlmProblem, lambdas: &[f64]) -> Result<Vec<GlmSolution>> {
    fit_path(problem, lambdas)
}

/// Per-lambda mean out-of-fold deviance and its standard error across
/// folds.
fn cv_criterion(
    problem: &GlmProblem,
    lambdas: &[f64],
    folds: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.n_obs();
    if folds > n {
        return Err(Error::Selection(format!(
            "cannot split {n} observations into {folds} folds"
        )));
    }
    let assignment = fold_assignment(n, folds, seed);
    for f in 0..folds {
        if assignment.iter().filter(|&&a| a == f).count() < 2 {
            return Err(Error::Selection(format!(
                "fold {f} has fewer than 2 observations"
            )));
        }
    }
    let mut fold_means = vec![vec![0.0; lambdas.len()]; folds];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&t| assignment[t] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&t| assignment[t] == f).collect();
        let train_problem = GlmProblem::new(
            problem.family,
            subset_rows(&problem.x, &train),
            subset_response(&problem.response, &train),
            Array1::from_iter(train.iter().map(|&t| problem.weights[t])),
            problem.alpha,
            0.0,
            problem.intercept,
        )?;
        let fits = fit_path_tolerant(&train_problem, lambdas)?;
        let x_test = subset_rows(&problem.x, &test);
        let y_test = subset_response(&problem.response, &test);
        let w_test: Vec<f64> = test.iter().map(|&t| problem.weights[t]).collect();
        let w_sum: f64 = w_test.iter().sum();
        if w_sum <= 0.0 {
            return Err(Error::Selection(format!("fold {f} has zero total weight")));
        }
        for (l, sol) in fits.iter().enumerate() {
            let eta = linear_predictor(&x_test, &sol.coefficients, &sol.intercepts);
            let nll = pointwise_nll(&problem.family, &eta, &y_test);
            let mean = w_test
                .iter()
                .zip(nll.iter())
                .map(|(&w, &v)| w * v)
                .sum::<f64>()
                / w_sum;
            fold_means[f][l] = mean;
        }
    }
    let means: Vec<f64> = (0..lambdas.len())
        .map(|l| fold_means.iter().map(|fm| fm[l]).sum::<f64>() / folds as f64)
        .collect();
    let ses: Vec<f64> = (0..lambdas.len())
        .map(|l| {
            let m = means[l];
            let var = fold_means
                .iter()
                .map(|fm| (fm[l] - m) * (fm[l] - m))
                .sum::<f64>()
                / (folds as f64 - 1.0).max(1.0);
            (var / folds as f64).sqrt()
        })
        .collect();
    Ok((means, ses))
}

/// Hard-threshold small coefficients: in `Lw` mode entries with
/// magnitude below `tau = s0_hat * sqrt(log(p_model) / n_eff)` are set
/// to zero, where `s0_hat` is the current nonzero count. Returns the
/// threshold applied (0 in `None` mode).
pub fn tau_threshold(
    coefficients: &mut Array2<f64>,
    n_eff: f64,
    p_model: usize,
    mode: ThresholdMode,
) -> f64 {
    match mode {
        ThresholdMode::None => 0.0,
        ThresholdMode::Lw => {
            let s0 = coefficients.iter().filter(|&&c| c != 0.0).count();
            let tau = s0 as f64 * ((p_model as f64).ln() / n_eff).sqrt();
            coefficients.mapv_inplace(|c| if c.abs() < tau { 0.0 } else { c });
            tau
        }
    }
}

/// Result of a full per-node selection: the winning alpha and lambda,
/// the per-lambda criterion curve of the winning alpha and the final
/// full-data fit at the selected pair.
#[derive(Debug, Clone)]
pub struct NodeSelection {
    pub alpha: f64,
    pub lambda: f64,
    pub lambda_index: usize,
    pub criterion: Vec<f64>,
    pub solution: GlmSolution,
}

/// Select alpha over the candidate sequence: for each alpha a lambda is
/// selected per the spec, and the alpha with the smallest criterion
/// wins, ties toward the larger (sparser) alpha.
pub fn select_alpha(problem: &GlmProblem, spec: &SelectionSpec) -> Result<NodeSelection> {
    spec.check()?;
    let mut alphas = spec.alpha_seq.clone();
    alphas.sort_by(|a, b| b.total_cmp(a));
    alphas.dedup();
    let mut best: Option<(f64, NodeSelection)> = None;
    for &alpha in &alphas {
        let mut prob = problem.clone();
        prob.alpha = alpha;
        let lambdas = lambda_path(&prob, spec.n_lambda, spec.min_ratio)?;
        let (idx, criterion) = select_lambda(&prob, &lambdas, spec)?;
        let fits = fit_path_tolerant(&prob, &lambdas[..=idx])?;
        let solution = fits.into_iter().last().expect("nonempty path");
        let score = criterion[idx];
        let candidate = NodeSelection {
            alpha,
            lambda: lambdas[idx],
            lambda_index: idx,
            criterion,
            solution,
        };
        match &best {
            Some((s, _)) if *s <= score => {}
            _ => best = Some((score, candidate)),
        }
    }
    Ok(best.expect("alpha sequence checked nonempty").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::Family;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ebic_arithmetic_example() {
        let v = ebic(-100.0, 3, 100.0, 10, 0.25);
        let expect = 200.0 + 3.0 * 100.0_f64.ln() + 1.5 * 10.0_f64.ln();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 217.269).abs() < 1e-3);
    }

    #[test]
    fn ebic_gamma_zero_is_bic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let ll = rng.random::<f64>() * -200.0;
            let s0 = (rng.random::<f64>() * 10.0) as usize;
            let n = 10.0 + rng.random::<f64>() * 500.0;
            let p = 2 + (rng.random::<f64>() * 40.0) as usize;
            let bic = -2.0 * ll + s0 as f64 * n.ln();
            assert!((ebic(ll, s0, n, p, 0.0) - bic).abs() < 1e-12);
        }
    }

    #[test]
    fn ebic_zero_s0_ignores_gamma() {
        assert_eq!(ebic(-50.0, 0, 100.0, 10, 0.0), 100.0);
        assert_eq!(ebic(-50.0, 0, 100.0, 10, 5.0), 100.0);
    }

    #[test]
    fn tau_threshold_examples() {
        let mut coefs = ndarray::arr2(&[[0.5, 0.01]]);
        let tau = tau_threshold(&mut coefs, 100.0, 10, ThresholdMode::Lw);
        assert!((tau - 2.0 * (10.0_f64.ln() / 100.0).sqrt()).abs() < 1e-12);
        assert_eq!(coefs[[0, 0]], 0.5);
        assert_eq!(coefs[[0, 1]], 0.0);

        let mut same = ndarray::arr2(&[[0.5, 0.01]]);
        assert_eq!(tau_threshold(&mut same, 100.0, 10, ThresholdMode::None), 0.0);
        assert_eq!(same[[0, 1]], 0.01);

        let mut zeros = ndarray::arr2(&[[0.0, 0.0]]);
        tau_threshold(&mut zeros, 100.0, 10, ThresholdMode::Lw);
        assert_eq!(zeros, ndarray::arr2(&[[0.0, 0.0]]));
    }

    fn noise_problem(seed: u64, n: usize, q: usize, alpha: f64) -> GlmProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, q), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = ndarray::Array1::from_iter((0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0));
        GlmProblem::new(
            Family::Gaussian,
            x,
            Response::Continuous(y),
            ndarray::Array1::ones(n),
            alpha,
            0.0,
            true,
        )
        .unwrap()
    }

    #[test]
    fn single_lambda_path_selects_index_zero() {
        let problem = noise_problem(1, 40, 3, 1.0);
        let spec = SelectionSpec {
            method: SelectionMethod::Ebic { gamma: 0.25 },
            ..Default::default()
        };
        let (idx, crit) = select_lambda(&problem, &[0.3], &spec).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(crit.len(), 1);
    }

    #[test]
    fn pure_noise_ebic_selects_empty_model() {
        let spec = SelectionSpec {
            method: SelectionMethod::Ebic { gamma: 0.25 },
            ..Default::default()
        };
        let mut empty = 0;
        for seed in 0..50 {
            let problem = noise_problem(seed, 200, 10, 1.0);
            let lambdas = lambda_path(&problem, 30, None).unwrap();
            let (idx, _) = select_lambda(&problem, &lambdas, &spec).unwrap();
            let sol = fit_path(&problem, &lambdas[..=idx]).unwrap().pop().unwrap();
            if sol.s0 == 0 {
                empty += 1;
            }
        }
        assert!(empty >= 48, "empty model selected only {empty}/50 times");
    }

    #[test]
    fn cv_is_deterministic_given_seed() {
        let problem = noise_problem(5, 60, 4, 1.0);
        let lambdas = lambda_path(&problem, 15, None).unwrap();
        let spec = SelectionSpec {
            method: SelectionMethod::cv_min(5),
            seed: 77,
            ..Default::default()
        };
        let a = select_lambda(&problem, &lambdas, &spec).unwrap();
        let b = select_lambda(&problem, &lambdas, &spec).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn tiny_folds_are_rejected() {
        let problem = noise_problem(5, 7, 2, 1.0);
        let lambdas = lambda_path(&problem, 5, None).unwrap();
        let spec = SelectionSpec {
            method: SelectionMethod::cv_min(4),
            ..Default::default()
        };
        assert!(select_lambda(&problem, &lambdas, &spec).is_err());
    }

    #[test]
    fn alpha_singleton_returned_without_search() {
        let problem = noise_problem(2, 50, 3, 1.0);
        let spec = SelectionSpec {
            method: SelectionMethod::Ebic { gamma: 0.25 },
            alpha_seq: vec![1.0],
            ..Default::default()
        };
        let sel = select_alpha(&problem, &spec).unwrap();
        assert_eq!(sel.alpha, 1.0);
    }

    #[test]
    fn empty_alpha_sequence_is_error() {
        let problem = noise_problem(2, 50, 3, 1.0);
        let spec = SelectionSpec {
            alpha_seq: vec![],
            ..Default::default()
        };
        assert!(select_alpha(&problem, &spec).is_err());
    }

    #[test]
    fn sparse_truth_prefers_lasso_alpha() {
        // y depends on a single column out of eight; alpha = 1 should
        // beat pure ridge in most replications
        let mut lasso_wins = 0;
        for seed in 0..11 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = 120;
            let x = Array2::from_shape_fn((n, 8), |_| rng.random::<f64>() * 2.0 - 1.0);
            let y = ndarray::Array1::from_iter(
                (0..n).map(|t| 0.9 * x[[t, 2]] + 0.3 * (rng.random::<f64>() - 0.5)),
            );
            let problem = GlmProblem::new(
                Family::Gaussian,
                x,
                Response::Continuous(y),
                ndarray::Array1::ones(n),
                1.0,
                0.0,
                true,
            )
            .unwrap();
            let spec = SelectionSpec {
                method: SelectionMethod::Ebic { gamma: 0.25 },
                alpha_seq: vec![0.0, 1.0],
                seed: seed,
                ..Default::default()
            };
            let sel = select_alpha(&problem, &spec).unwrap();
            if sel.alpha == 1.0 {
                lasso_wins += 1;
            }
        }
        assert!(lasso_wins >= 6, "alpha=1 won only {lasso_wins}/11 runs");
    }

    #[test]
    fn monotone_cv_curve_selects_smallest_lambda() {
        // strong signal: deviance keeps falling along the path
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100;
        let x = Array2::from_shape_fn((n, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = ndarray::Array1::from_iter(
            (0..n).map(|t| 1.5 * x[[t, 0]] - 1.0 * x[[t, 1]] + 0.8 * x[[t, 2]]),
        );
        let problem = GlmProblem::new(
            Family::Gaussian,
            x,
            Response::Continuous(y),
            ndarray::Array1::ones(n),
            1.0,
            0.0,
            true,
        )
        .unwrap();
        let lambdas = lambda_path(&problem, 10, Some(0.01)).unwrap();
        let spec = SelectionSpec {
            method: SelectionMethod::cv_min(5),
            seed: 4,
            ..Default::default()
        };
        let (idx, crit) = select_lambda(&problem, &lambdas, &spec).unwrap();
        let monotone = crit.windows(2).all(|w| w[1] < w[0]);
        assert!(monotone, "expected a decreasing criterion curve: {crit:?}");
        assert_eq!(idx, lambdas.len() - 1);
    }
}
