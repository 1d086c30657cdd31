//! k-order mixed graphical model estimation via nodewise regressions:
//! per-node design construction, tuning-parameter selection, fitting and
//! thresholding, followed by AND/OR combination of the per-regression
//! estimates, edge aggregation with sign rules, and factor-graph
//! extraction.
//!
//! Nodewise regressions are independent and run concurrently; results
//! are merged in ascending node order so the output does not depend on
//! the thread count.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_mgm_design, standardize, DesignMatrix, ScaleRecord};
use crate::error::{Error, Result};
use crate::glm::{Family, GlmProblem, GlmSolution, Response};
use crate::model::{
    Dataset, MgmFit, NodeMeta, NodeModel, RawFactor, Sign, VarKind, VariableSpec,
};
use crate::select::{select_alpha, SelectionSpec};

/// Rule combining the d per-regression estimates of one factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CombineRule {
    /// Mean of the estimates only when every regression recovered the
    /// factor, zero otherwise.
    And,
    /// Mean of the estimates regardless of which regressions recovered
    /// the factor.
    Or,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgmOptions {
    pub k: usize,
    pub rule: CombineRule,
    pub overparameterize: bool,
    pub binary_sign: bool,
    pub selection: SelectionSpec,
}

impl Default for MgmOptions {
    fn default() -> Self {
        MgmOptions {
            k: 2,
            rule: CombineRule::And,
            overparameterize: false,
            binary_sign: false,
            selection: SelectionSpec::default(),
        }
    }
}

/// Estimate of one factor from one member's regression. `params` has
/// the regression's response categories on axis 0 (full categories for
/// categorical targets, extent 1 otherwise) followed by one axis per
/// remaining member in ascending variable order.
#[derive(Debug, Clone)]
pub struct FactorEstimate {
    pub vars: Vec<usize>,
    pub from: usize,
    pub params: ArrayD<f64>,
}

/// A factor surviving combination: aggregated weight, the d raw
/// per-regression arrays and, when encodings align, the elementwise
/// mean with axes in sorted-tuple order.
#[derive(Debug, Clone)]
pub struct CombinedFactor {
    pub vars: Vec<usize>,
    pub weight: f64,
    pub per_regression: Vec<ArrayD<f64>>,
    pub combined: Option<ArrayD<f64>>,
}

fn mean_abs(a: &ArrayD<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64
}

/// Axis permutation aligning an estimate's axes `[from, others...]` to
/// the sorted member tuple.
fn axis_order(vars: &[usize], from: usize) -> Vec<usize> {
    // estimate axes: 0 -> `from`, then remaining members ascending
    let mut axes_vars = vec![from];
    axes_vars.extend(vars.iter().copied().filter(|&v| v != from));
    vars.iter()
        .map(|&v| axes_vars.iter().position(|&a| a == v).expect("member"))
        .collect()
}

/// Combine the d per-regression estimates of one factor under the
/// AND/OR rule. Estimates whose encodings align across regressions are
/// averaged per parameter; otherwise the combination happens on the
/// block-mean scale. Returns None when the factor is not recovered.
pub fn combine_nodewise(
    estimates: &[FactorEstimate],
    rule: CombineRule,
    specs: &[VariableSpec],
) -> Result<Option<CombinedFactor>> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::Solver("no estimates to combine".into()))?;
    let vars = first.vars.clone();
    let d = vars.len();
    if estimates.len() != d {
        return Err(Error::Solver(format!(
            "factor {vars:?}: expected {d} estimates, got {}",
            estimates.len()
        )));
    }
    let full_shape: Vec<usize> = vars.iter().map(|&v| specs[v].levels).collect();
    let mut aligned_arrays: Vec<ArrayD<f64>> = Vec::with_capacity(d);
    let mut aligned = true;
    for est in estimates {
        if est.vars != vars {
            return Err(Error::Solver("misaligned factor tuples".into()));
        }
        let perm = axis_order(&vars, est.from);
        let permuted = est.params.clone().permuted_axes(IxDyn(&perm));
        if permuted.shape() == full_shape.as_slice() {
            aligned_arrays.push(permuted.as_standard_layout().to_owned());
        } else {
            aligned = false;
        }
    }

    let nonzero: Vec<bool> = estimates
        .iter()
        .map(|e| e.params.iter().any(|&v| v != 0.0))
        .collect();
    let recovered = match rule {
        CombineRule::And => nonzero.iter().all(|&z| z),
        CombineRule::Or => nonzero.iter().any(|&z| z),
    };
    if !recovered {
        return Ok(None);
    }

    let per_regression: Vec<ArrayD<f64>> = estimates.iter().map(|e| e.params.clone()).collect();
    let (weight, combined) = if aligned {
        let mut mean = ArrayD::<f64>::zeros(IxDyn(&full_shape));
        for a in &aligned_arrays {
            mean = &mean + a;
        }
        mean.mapv_inplace(|v| v / d as f64);
        (mean_abs(&mean), Some(mean))
    } else {
        let w = estimates.iter().map(|e| mean_abs(&e.params)).sum::<f64>() / d as f64;
        (w, None)
    };
    if weight == 0.0 {
        return Ok(None);
    }
    Ok(Some(CombinedFactor { vars, weight, per_regression, combined }))
}

/// Sign of a combined pairwise factor under the reporting rules: defined
/// for continuous-continuous pairs, and with `binary_sign` also for
/// binary-binary and binary-continuous pairs (read off the
/// category-1 equation of the binary response).
pub fn edge_sign(
    factor: &CombinedFactor,
    specs: &[VariableSpec],
    binary_sign: bool,
    overparameterize: bool,
) -> Sign {
    if factor.vars.len() != 2 || factor.weight == 0.0 {
        return Sign::Undefined;
    }
    let (a, b) = (factor.vars[0], factor.vars[1]);
    let (sa, sb) = (specs[a], specs[b]);
    if sa.is_continuous() && sb.is_continuous() {
        let theta = factor
            .combined
            .as_ref()
            .map(|c| c[[0, 0].as_slice()])
            .unwrap_or(0.0);
        return Sign::of(theta);
    }
    if !binary_sign {
        return Sign::Undefined;
    }
    let is_binary = |s: VariableSpec| s.kind == VarKind::Categorical && s.levels == 2;
    // index of a binary predictor's category-1 column inside its
    // encoded axis: the standard encoding drops category 0
    let cat1 = if overparameterize { 1 } else { 0 };
    if is_binary(sa) && is_binary(sb) {
        // mean of the two representatives from the P(target = 1) rows;
        // per_regression follows member order, axis 0 is the response side
        let mut acc = 0.0;
        for est in &factor.per_regression {
            acc += est[[1, cat1].as_slice()];
        }
        return Sign::of(acc / factor.per_regression.len() as f64);
    }
    let binary_first = is_binary(sa) && sb.is_continuous();
    let binary_second = is_binary(sb) && sa.is_continuous();
    if binary_first || binary_second {
        // read the continuous predictor's coefficient in the binary
        // node's category-1 equation
        let (idx, _binary_var) = if binary_first { (0, a) } else { (1, b) };
        let est = &factor.per_regression[idx];
        return Sign::of(est[[1, 0].as_slice()]);
    }
    Sign::Undefined
}

/// Bipartite factor-graph view of the recovered interactions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorGraph {
    pub n_vars: usize,
    /// (member tuple, weight) per factor node.
    pub factors: Vec<(Vec<usize>, f64)>,
}

impl FactorGraph {
    /// Bipartite edges as (factor index, variable index) pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(f, (vars, _))| vars.iter().map(move |&v| (f, v)))
            .collect()
    }
}

/// One factor node per recovered tuple, connected to its member
/// variables, weighted by the tuple's aggregated parameter weight.
pub fn extract_factor_graph(rawfactors: &[RawFactor], n_vars: usize) -> FactorGraph {
    FactorGraph {
        n_vars,
        factors: rawfactors
            .iter()
            .map(|f| (f.vars.clone(), f.weight))
            .collect(),
    }
}

/// Everything produced by one nodewise regression.
pub(crate) struct NodeFit {
    pub target: usize,
    pub solution: GlmSolution,
    pub meta: NodeMeta,
    pub design: DesignMatrix,
    pub warnings: Vec<String>,
}

/// Run design construction, selection, fitting and thresholding for one
/// node. `weights` defaults to unit weights; kernel-weighted fits pass
/// theirs, making the effective sample size used by the EBIC and the
/// tau threshold equal to the total kernel weight.
pub(crate) fn fit_node(
    data: &Dataset,
    target: usize,
    options: &MgmOptions,
    weights: Option<&Array1<f64>>,
) -> Result<NodeFit> {
    let spec = data.specs[target];
    let (raw_design, raw_response) = build_mgm_design(data, target, options.k, options.overparameterize)?;
    let (design, scale) = standardize(&raw_design, &data.specs);
    build_and_fit(target, spec, design, scale, raw_response, options, weights)
}

/// Shared tail of the MGM and mVAR node fits: response preparation,
/// alpha/lambda selection, final fit and tau threshold.
#[allow(clippy::too_many_arguments)]
pub(crate) fn build_and_fit(
    target: usize,
    spec: VariableSpec,
    design: DesignMatrix,
    scale: ScaleRecord,
    raw_response: Array1<f64>,
    options: &MgmOptions,
    weights: Option<&Array1<f64>>,
) -> Result<NodeFit> {
    let n_eff_rows = design.n_rows();
    let mut warnings = scale.warnings.clone();

    let (family, response, response_center, response_scale) = match spec.kind {
        VarKind::Gaussian => {
            let mean = raw_response.sum() / n_eff_rows as f64;
            let var = raw_response
                .iter()
                .map(|&v| (v - mean) * (v - mean))
                .sum::<f64>()
                / (n_eff_rows as f64 - 1.0).max(1.0);
            let sd = var.sqrt();
            let scale = if sd < 1e-12 { 1.0 } else { sd };
            let standardized = raw_response.mapv(|v| (v - mean) / scale);
            (Family::Gaussian, Response::Continuous(standardized), mean, scale)
        }
        VarKind::Poisson => (Family::Poisson, Response::Continuous(raw_response), 0.0, 1.0),
        VarKind::Categorical => {
            let codes: Vec<usize> = raw_response.iter().map(|&v| v as usize).collect();
            (Family::Multinomial(spec.levels), Response::Codes(codes), 0.0, 1.0)
        }
    };

    let w = match weights {
        Some(w) => {
            if w.len() != n_eff_rows {
                return Err(Error::Solver(format!(
                    "weights length {} does not match design rows {n_eff_rows}",
                    w.len()
                )));
            }
            w.clone()
        }
        None => Array1::ones(n_eff_rows),
    };

    let problem = GlmProblem::new(
        family,
        design.columns.clone(),
        response,
        w,
        *options.selection.alpha_seq.first().unwrap_or(&1.0),
        0.0,
        !options.overparameterize,
    )?;

    // derive a per-node seed so fold draws differ across nodes but stay
    // reproducible
    let mut spec_sel = options.selection.clone();
    spec_sel.seed = spec_sel
        .seed
        .wrapping_add((target as u64).wrapping_mul(0x9E3779B97F4A7C15));

    let selection = select_alpha(&problem, &spec_sel)?;
    let mut solution = selection.solution.clone();
    let n_eff = problem.n_eff();
    apply_tau_threshold(
        &mut solution.coefficients,
        &design,
        n_eff,
        options.selection.threshold_mode,
    );
    refresh_solution_stats(&mut solution, &problem);
    warnings.extend(solution.warnings.iter().cloned());

    let meta = NodeMeta {
        lambda: selection.lambda,
        alpha: selection.alpha,
        s0: solution.s0,
        deviance: -2.0 * solution.loglik,
        response_center,
        response_scale,
        col_centers: scale.centers,
        col_scales: scale.scales,
        col_kept: scale.kept,
    };
    Ok(NodeFit { target, solution, meta, design, warnings })
}

/// Threshold step of the nodewise algorithm, applied on the
/// interaction-term scale: each term is scored by the mean absolute
/// coefficient over its column block and response categories (the same
/// aggregate that becomes the edge weight), and terms scoring below tau
/// are zeroed entirely. The tau rule needs a plug-in nonzero count;
/// using the raw pre-threshold count would let the many small
/// coefficients kept by cross-validation inflate tau past the true
/// effects, so the count is resolved self-consistently: keep the
/// largest k such that the k-th strongest term still exceeds
/// `k * sqrt(log(q) / n_eff)`.
fn apply_tau_threshold(
    coefficients: &mut ndarray::Array2<f64>,
    design: &DesignMatrix,
    n_eff: f64,
    mode: crate::select::ThresholdMode,
) {
    if matches!(mode, crate::select::ThresholdMode::None) || design.n_cols() == 0 {
        return;
    }
    let unit = ((design.n_cols() as f64).ln() / n_eff).sqrt();
    if unit <= 0.0 {
        return;
    }
    let n_groups = design.group_meta.len();
    let n_cat = coefficients.nrows();
    let mut sums = vec![0.0_f64; n_groups];
    let mut counts = vec![0usize; n_groups];
    for (j, &g) in design.groups.iter().enumerate() {
        for c in 0..n_cat {
            sums[g] += coefficients[[c, j]].abs();
            counts[g] += 1;
        }
    }
    let score: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mut order: Vec<usize> = (0..n_groups).filter(|&g| score[g] > 0.0).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut k_star = 0usize;
    for (rank, &g) in order.iter().enumerate() {
        let k = rank + 1;
        if score[g] >= k as f64 * unit {
            k_star = k;
        } else {
            break;
        }
    }
    // exactly the strongest k_star terms survive (k_star = 0 empties the
    // model: even the strongest term falls below the tau its own
    // presence implies)
    let survivors: Vec<usize> = order[..k_star].to_vec();
    for (j, &g) in design.groups.iter().enumerate() {
        if !survivors.contains(&g) {
            for c in 0..n_cat {
                coefficients[[c, j]] = 0.0;
            }
        }
    }
}

/// Recompute nonzero count, residual sd and log-likelihood after the
/// coefficients were thresholded.
fn refresh_solution_stats(solution: &mut GlmSolution, problem: &GlmProblem) {
    solution.s0 = solution.coefficients.iter().filter(|&&c| c != 0.0).count();
    if let (Family::Gaussian, Response::Continuous(y)) = (&problem.family, &problem.response) {
        let eta = crate::glm::linear_predictor(&problem.x, &solution.coefficients, &solution.intercepts);
        let w_total = problem.weights.sum();
        let rss: f64 = (0..problem.n_obs())
            .map(|t| {
                let r = y[t] - eta[[t, 0]];
                problem.weights[t] * r * r
            })
            .sum();
        solution.residual_sd = Some((rss / w_total).sqrt());
    }
    solution.loglik = crate::glm::log_likelihood(solution, problem);
}

/// Extract this regression's estimate of every factor it touches.
pub(crate) fn node_factor_estimates(
    node: &NodeFit,
    specs: &[VariableSpec],
) -> Vec<FactorEstimate> {
    let design = &node.design;
    let n_cat = node.solution.coefficients.nrows();
    let mut by_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (j, &g) in design.groups.iter().enumerate() {
        by_group.entry(g).or_default().push(j);
    }
    let mut out = Vec::new();
    for (g, cols) in by_group {
        let gm = &design.group_meta[g];
        let mut vars: Vec<usize> = gm.vars.clone();
        vars.push(node.target);
        vars.sort_unstable();
        // axis extents: response categories, then each group member's
        // encoding width in ascending variable order
        let mut members: Vec<usize> = gm.vars.clone();
        members.sort_unstable();
        let enc_width = |v: usize| -> usize {
            if specs[v].is_categorical() {
                if cols_encode_full(design, &cols, v) {
                    specs[v].levels
                } else {
                    specs[v].levels - 1
                }
            } else {
                1
            }
        };
        let mut shape = vec![n_cat];
        shape.extend(members.iter().map(|&v| enc_width(v)));
        let mut params = ArrayD::<f64>::zeros(IxDyn(&shape));
        for &j in &cols {
            let meta = &design.colmeta[j];
            for c in 0..n_cat {
                let mut idx = vec![c];
                for &v in &members {
                    let pos = meta.vars.iter().position(|&mv| mv == v).expect("member");
                    let axis_idx = match meta.cats[pos] {
                        Some(cat) => {
                            if enc_width(v) == specs[v].levels {
                                cat
                            } else {
                                cat - 1
                            }
                        }
                        None => 0,
                    };
                    idx.push(axis_idx);
                }
                params[idx.as_slice()] = node.solution.coefficients[[c, j]];
            }
        }
        out.push(FactorEstimate { vars, from: node.target, params });
    }
    out
}

/// Whether the kept columns of a group encode every category of
/// variable `v` (overparameterized) or leave out the reference.
fn cols_encode_full(design: &DesignMatrix, cols: &[usize], v: usize) -> bool {
    cols.iter().any(|&j| {
        let meta = &design.colmeta[j];
        meta.vars
            .iter()
            .position(|&mv| mv == v)
            .map(|pos| meta.cats[pos] == Some(0))
            .unwrap_or(false)
    })
}

/// Combine all per-node factor estimates, aggregate pairwise factors
/// into the weighted adjacency and sign matrices, and list the raw
/// factors.
pub(crate) fn assemble_fit(
    node_fits: Vec<NodeFit>,
    specs: &[VariableSpec],
    options: &MgmOptions,
) -> Result<MgmFit> {
    let p = specs.len();
    let mut estimates: BTreeMap<Vec<usize>, Vec<FactorEstimate>> = BTreeMap::new();
    for node in &node_fits {
        for est in node_factor_estimates(node, specs) {
            estimates.entry(est.vars.clone()).or_default().push(est);
        }
    }

    let mut wadj = Array2::zeros((p, p));
    let mut signs = Array2::from_elem((p, p), Sign::Undefined);
    let mut rawfactors = Vec::new();
    for (vars, mut ests) in estimates {
        ests.sort_by_key(|e| e.from);
        let Some(combined) = combine_nodewise(&ests, options.rule, specs)? else {
            continue;
        };
        let sign = edge_sign(&combined, specs, options.binary_sign, options.overparameterize);
        if vars.len() == 2 {
            let (a, b) = (vars[0], vars[1]);
            wadj[[a, b]] = combined.weight;
            wadj[[b, a]] = combined.weight;
            signs[[a, b]] = sign;
            signs[[b, a]] = sign;
        }
        rawfactors.push(RawFactor {
            vars: combined.vars.clone(),
            weight: combined.weight,
            sign,
            per_regression: combined.per_regression.clone(),
            combined: combined.combined.clone(),
        });
    }

    let mut intercepts = Vec::with_capacity(p);
    let mut nodemeta = Vec::with_capacity(p);
    let mut nodemodels = Vec::with_capacity(p);
    let mut warnings = Vec::new();
    for node in node_fits {
        intercepts.push(node.solution.intercepts.to_vec());
        nodemeta.push(node.meta);
        nodemodels.push(NodeModel {
            target: node.target,
            coefficients: node.solution.coefficients.clone(),
            intercepts: node.solution.intercepts.to_vec(),
        });
        warnings.extend(node.warnings);
    }

    Ok(MgmFit {
        specs: specs.to_vec(),
        options: options.clone(),
        wadj,
        signs,
        rawfactors,
        intercepts,
        nodemeta,
        nodemodels,
        warnings,
    })
}

fn check_options(options: &MgmOptions) -> Result<()> {
    if options.k < 2 {
        return Err(Error::Data(format!(
            "interaction order k must be >= 2, got {}",
            options.k
        )));
    }
    Ok(())
}

/// Estimate a k-order mixed graphical model by nodewise penalized
/// regression with AND/OR combination.
pub fn fit_mgm(data: &Dataset, options: &MgmOptions) -> Result<MgmFit> {
    fit_mgm_weighted(data, options, None)
}

/// Weighted variant used by the time-varying estimator: one kernel
/// weight per data row enters every node regression.
pub fn fit_mgm_weighted(
    data: &Dataset,
    options: &MgmOptions,
    weights: Option<&Array1<f64>>,
) -> Result<MgmFit> {
    check_options(options)?;
    let p = data.n_vars();
    let node_fits: Result<Vec<NodeFit>> = (0..p)
        .into_par_iter()
        .map(|s| fit_node(data, s, options, weights).map_err(|e| e.at_node(s)))
        .collect();
    assemble_fit(node_fits?, &data.specs, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Factor, FactorModel};
    use crate::sample::{sample_mgm, DEFAULT_BURN_IN, DEFAULT_THIN};
    use crate::select::{SelectionMethod, ThresholdMode};
    use ndarray::{ArrayD, IxDyn};

    fn scalar_estimate(vars: Vec<usize>, from: usize, value: f64) -> FactorEstimate {
        let d = vars.len();
        FactorEstimate {
            vars,
            from,
            params: ArrayD::from_elem(IxDyn(&vec![1; d]), value),
        }
    }

    fn gaussian_specs(p: usize) -> Vec<VariableSpec> {
        vec![VariableSpec::gaussian(); p]
    }

    #[test]
    fn or_rule_takes_mean() {
        let ests = [
            scalar_estimate(vec![0, 1], 0, 0.4),
            scalar_estimate(vec![0, 1], 1, 0.6),
        ];
        let c = combine_nodewise(&ests, CombineRule::Or, &gaussian_specs(2))
            .unwrap()
            .unwrap();
        assert!((c.weight - 0.5).abs() < 1e-12);
    }

    #[test]
    fn and_rule_zeroes_half_recovered_pairs() {
        let ests = [
            scalar_estimate(vec![0, 1], 0, 0.4),
            scalar_estimate(vec![0, 1], 1, 0.0),
        ];
        let and = combine_nodewise(&ests, CombineRule::And, &gaussian_specs(2)).unwrap();
        assert!(and.is_none());
        let or = combine_nodewise(&ests, CombineRule::Or, &gaussian_specs(2))
            .unwrap()
            .unwrap();
        assert!((or.weight - 0.2).abs() < 1e-12);
    }

    #[test]
    fn and_rule_keeps_fully_recovered_triples() {
        let ests = [
            scalar_estimate(vec![0, 1, 2], 0, 0.3),
            scalar_estimate(vec![0, 1, 2], 1, 0.3),
            scalar_estimate(vec![0, 1, 2], 2, 0.3),
        ];
        let c = combine_nodewise(&ests, CombineRule::And, &gaussian_specs(3))
            .unwrap()
            .unwrap();
        assert!((c.weight - 0.3).abs() < 1e-12);
    }

    #[test]
    fn block_weight_is_mean_of_absolutes() {
        // a 2x2 overparameterized cross with a single nonzero cell
        let specs = vec![VariableSpec::categorical(2), VariableSpec::categorical(2)];
        let mut a = ArrayD::zeros(IxDyn(&[2, 2]));
        a[[1, 0]] = 1.0; // response cat 1, predictor cat 0
        let mut b = ArrayD::zeros(IxDyn(&[2, 2]));
        b[[0, 1]] = 1.0; // transposed view of the same cell
        let ests = [
            FactorEstimate { vars: vec![0, 1], from: 0, params: a },
            FactorEstimate { vars: vec![0, 1], from: 1, params: b },
        ];
        let c = combine_nodewise(&ests, CombineRule::And, &specs)
            .unwrap()
            .unwrap();
        // aligned mean has a single cell of 1.0 over 4 entries
        assert!((c.weight - 0.25).abs() < 1e-12);
        let combined = c.combined.unwrap();
        assert!((combined[[1, 0].as_slice()] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_pair_sign_follows_parameter() {
        let ests = [
            scalar_estimate(vec![0, 1], 0, -0.3),
            scalar_estimate(vec![0, 1], 1, -0.3),
        ];
        let specs = gaussian_specs(2);
        let c = combine_nodewise(&ests, CombineRule::And, &specs).unwrap().unwrap();
        assert!((c.weight - 0.3).abs() < 1e-12);
        assert_eq!(edge_sign(&c, &specs, false, false), Sign::Negative);
    }

    #[test]
    fn categorical_pair_sign_is_undefined() {
        let specs = vec![VariableSpec::categorical(4), VariableSpec::gaussian()];
        let a = ArrayD::from_elem(IxDyn(&[4, 1]), 0.5);
        let b = ArrayD::from_elem(IxDyn(&[1, 3]), 0.5);
        let ests = [
            FactorEstimate { vars: vec![0, 1], from: 0, params: a },
            FactorEstimate { vars: vec![0, 1], from: 1, params: b },
        ];
        let c = combine_nodewise(&ests, CombineRule::And, &specs).unwrap().unwrap();
        assert!(c.combined.is_none()); // shapes cannot align in standard encoding
        assert_eq!(edge_sign(&c, &specs, true, false), Sign::Undefined);
    }

    #[test]
    fn factor_graph_counts_nodes_and_edges() {
        let raw = vec![
            RawFactor {
                vars: vec![0, 1],
                weight: 0.5,
                sign: Sign::Undefined,
                per_regression: vec![],
                combined: None,
            },
            RawFactor {
                vars: vec![0, 2, 3],
                weight: 0.2,
                sign: Sign::Undefined,
                per_regression: vec![],
                combined: None,
            },
        ];
        let g = extract_factor_graph(&raw, 4);
        assert_eq!(g.factors.len(), 2);
        assert_eq!(g.edges().len(), 5);
        assert!(g.factors.iter().all(|(_, w)| *w > 0.0));

        let empty = extract_factor_graph(&[], 4);
        assert_eq!(empty.factors.len(), 0);
        assert_eq!(empty.n_vars, 4);
    }

    /// The four-variable demo model: two gaussians, categoricals with 2
    /// and 4 levels, pairwise interactions (0,3), (1,2), (0,1).
    pub(crate) fn demo_model() -> FactorModel {
        let specs = vec![
            VariableSpec::gaussian(),
            VariableSpec::categorical(2),
            VariableSpec::categorical(4),
            VariableSpec::gaussian(),
        ];
        let thresholds = vec![vec![0.0], vec![0.0; 2], vec![0.0; 4], vec![0.0]];
        let sds = vec![1.0; 4];
        let f14 = Factor {
            vars: vec![0, 3],
            values: ArrayD::from_elem(IxDyn(&[1, 1]), 0.5),
        };
        let mut v23 = ArrayD::zeros(IxDyn(&[2, 4]));
        v23[[0, 0]] = 1.0;
        v23[[0, 1]] = 1.0;
        let f23 = Factor { vars: vec![1, 2], values: v23 };
        let mut v12 = ArrayD::zeros(IxDyn(&[1, 2]));
        v12[[0, 0]] = 1.0;
        let f12 = Factor { vars: vec![0, 1], values: v12 };
        FactorModel { specs, thresholds, sds, factors: vec![f14, f23, f12] }
    }

    fn recovered_edges(fit: &MgmFit) -> Vec<(usize, usize)> {
        let p = fit.wadj.nrows();
        let mut edges = Vec::new();
        for a in 0..p {
            for b in a + 1..p {
                if fit.wadj[[a, b]] > 0.0 {
                    edges.push((a, b));
                }
            }
        }
        edges
    }

    #[test]
    fn recovers_demo_model_edges() {
        let model = demo_model();
        let data = sample_mgm(&model, 500, 1, DEFAULT_BURN_IN, DEFAULT_THIN).unwrap();
        let options = MgmOptions {
            k: 2,
            rule: CombineRule::And,
            overparameterize: false,
            binary_sign: false,
            selection: SelectionSpec {
                method: SelectionMethod::cv(10),
                seed: 1,
                ..Default::default()
            },
        };
        let fit = fit_mgm(&data, &options).unwrap();
        assert_eq!(recovered_edges(&fit), vec![(0, 1), (0, 3), (1, 2)]);
        // symmetry and zero diagonal
        for a in 0..4 {
            assert_eq!(fit.wadj[[a, a]], 0.0);
            for b in 0..4 {
                assert_eq!(fit.wadj[[a, b]], fit.wadj[[b, a]]);
            }
        }
        // the gaussian-gaussian edge carries a sign, the others do not
        assert_eq!(fit.signs[[0, 3]], Sign::Positive);
        assert_eq!(fit.signs[[1, 2]], Sign::Undefined);
    }

    #[test]
    fn and_edge_set_is_subset_of_or_edge_set() {
        let model = demo_model();
        let data = sample_mgm(&model, 300, 5, DEFAULT_BURN_IN, DEFAULT_THIN).unwrap();
        let mk = |rule| MgmOptions {
            k: 2,
            rule,
            overparameterize: false,
            binary_sign: false,
            selection: SelectionSpec {
                method: SelectionMethod::Ebic { gamma: 0.25 },
                seed: 3,
                ..Default::default()
            },
        };
        let and_fit = fit_mgm(&data, &mk(CombineRule::And)).unwrap();
        let or_fit = fit_mgm(&data, &mk(CombineRule::Or)).unwrap();
        let and_edges = recovered_edges(&and_fit);
        let or_edges = recovered_edges(&or_fit);
        for e in &and_edges {
            assert!(or_edges.contains(e), "AND edge {e:?} missing under OR");
        }
    }

    #[test]
    fn noise_columns_give_empty_graph() {
        let mut hits = 0;
        for seed in 0..10 {
            let model = FactorModel {
                specs: vec![VariableSpec::gaussian(); 5],
                thresholds: vec![vec![0.0]; 5],
                sds: vec![1.0; 5],
                factors: vec![],
            };
            let data = sample_mgm(&model, 200, 100 + seed, 50, 2).unwrap();
            let options = MgmOptions {
                selection: SelectionSpec {
                    method: SelectionMethod::Ebic { gamma: 0.25 },
                    seed,
                    ..Default::default()
                },
                ..Default::default()
            };
            let fit = fit_mgm(&data, &options).unwrap();
            if recovered_edges(&fit).is_empty() {
                hits += 1;
            }
        }
        assert!(hits >= 9, "empty graph recovered only {hits}/10 times");
    }

    #[test]
    fn binary_sign_read_from_category_one_equation() {
        // two binary nodes with a positive (1,1)-cell coupling: high
        // states co-occur, so the reported sign must be positive
        let mut values = ArrayD::zeros(IxDyn(&[2, 2]));
        values[[1, 1]] = 1.5;
        let model = FactorModel {
            specs: vec![VariableSpec::categorical(2); 2],
            thresholds: vec![vec![0.0; 2]; 2],
            sds: vec![1.0; 2],
            factors: vec![Factor { vars: vec![0, 1], values }],
        };
        let data = sample_mgm(&model, 600, 9, DEFAULT_BURN_IN, DEFAULT_THIN).unwrap();
        let options = MgmOptions {
            binary_sign: true,
            selection: SelectionSpec {
                method: SelectionMethod::Ebic { gamma: 0.25 },
                threshold_mode: ThresholdMode::Lw,
                seed: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let fit = fit_mgm(&data, &options).unwrap();
        assert!(fit.wadj[[0, 1]] > 0.0);
        assert_eq!(fit.signs[[0, 1]], Sign::Positive);
    }

    #[test]
    fn k3_recovers_higher_order_tuples() {
        // three binary nodes with a pure 3-way interaction plus one
        // pairwise effect between nodes 0 and 1
        let mut v3 = ArrayD::zeros(IxDyn(&[2, 2, 2]));
        v3[[1, 1, 1]] = 2.0;
        let mut v2 = ArrayD::zeros(IxDyn(&[2, 2]));
        v2[[1, 1]] = 1.2;
        let model = FactorModel {
            specs: vec![VariableSpec::categorical(2); 3],
            thresholds: vec![vec![0.0; 2]; 3],
            sds: vec![1.0; 3],
            factors: vec![
                Factor { vars: vec![0, 1, 2], values: v3 },
                Factor { vars: vec![0, 1], values: v2 },
            ],
        };
        let data = sample_mgm(&model, 1200, 4, DEFAULT_BURN_IN, DEFAULT_THIN).unwrap();
        let options = MgmOptions {
            k: 3,
            rule: CombineRule::Or,
            overparameterize: true,
            binary_sign: false,
            selection: SelectionSpec {
                method: SelectionMethod::cv(10),
                seed: 8,
                ..Default::default()
            },
        };
        let fit = fit_mgm(&data, &options).unwrap();
        let orders: std::collections::BTreeSet<usize> =
            fit.rawfactors.iter().map(|f| f.vars.len()).collect();
        assert!(orders.contains(&2), "no pairwise factors recovered");
        assert!(orders.contains(&3), "no 3-way factors recovered");
    }

    #[test]
    fn identical_input_gives_identical_output() {
        let model = demo_model();
        let data = sample_mgm(&model, 200, 2, 50, 2).unwrap();
        let options = MgmOptions::default();
        let a = fit_mgm(&data, &options).unwrap();
        let b = fit_mgm(&data, &options).unwrap();
        assert_eq!(a.wadj, b.wadj);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
