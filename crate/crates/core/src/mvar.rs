//! Mixed VAR estimation over an arbitrary lag set: one lagged nodewise
//! regression per variable, no AND/OR combination (each lagged effect is
//! estimated exactly once), with directed per-lag adjacency output.

use ndarray::{Array1, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{build_var_design, standardize};
use crate::error::{Error, Result};
use crate::mgm::{build_and_fit, CombineRule, MgmOptions, NodeFit};
use crate::model::{Dataset, MvarFit, NodeModel, Sign, VarKind, VariableSpec};
use crate::select::SelectionSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MvarOptions {
    pub overparameterize: bool,
    pub binary_sign: bool,
    pub selection: SelectionSpec,
}

impl Default for MvarOptions {
    fn default() -> Self {
        MvarOptions {
            overparameterize: false,
            binary_sign: false,
            selection: SelectionSpec::default(),
        }
    }
}

fn mgm_options_for(options: &MvarOptions) -> MgmOptions {
    MgmOptions {
        k: 2,
        rule: CombineRule::Or,
        overparameterize: options.overparameterize,
        binary_sign: options.binary_sign,
        selection: options.selection.clone(),
    }
}

fn check_lags(lags: &[usize]) -> Result<()> {
    if lags.is_empty() {
        return Err(Error::Data("lag set must be nonempty".into()));
    }
    if lags.iter().any(|&l| l == 0) {
        return Err(Error::Data("lags must be positive".into()));
    }
    for w in lags.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Data("lags must be sorted and distinct".into()));
        }
    }
    Ok(())
}

pub(crate) fn fit_var_node(
    data: &Dataset,
    target: usize,
    lags: &[usize],
    options: &MvarOptions,
    weights_full: Option<&Array1<f64>>,
) -> Result<(NodeFit, Vec<bool>)> {
    let (raw_design, raw_response, mask) =
        build_var_design(data, target, lags, options.overparameterize)?;
    let (design, scale) = standardize(&raw_design, &data.specs);
    let weights = weights_full.map(|w| {
        Array1::from_iter(
            mask.iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(t, _)| w[t]),
        )
    });
    let node = build_and_fit(
        target,
        data.specs[target],
        design,
        scale,
        raw_response,
        &mgm_options_for(options),
        weights.as_ref(),
    )?;
    Ok((node, mask))
}

/// Sign of one lagged effect block under the reporting rules (the
/// directed analogue of the MGM edge signs). `coef` looks up the block
/// coefficient by (response category, encoded predictor column).
fn lagged_sign(
    target_spec: VariableSpec,
    pred_spec: VariableSpec,
    binary_sign: bool,
    overparameterize: bool,
    coef: impl Fn(usize, usize) -> f64,
) -> Sign {
    let is_binary =
        |s: VariableSpec| s.kind == VarKind::Categorical && s.levels == 2;
    if target_spec.is_continuous() && pred_spec.is_continuous() {
        return Sign::of(coef(0, 0));
    }
    if !binary_sign {
        return Sign::Undefined;
    }
    let cat1 = if overparameterize { 1 } else { 0 };
    if is_binary(target_spec) && is_binary(pred_spec) {
        return Sign::of(coef(1, cat1));
    }
    if is_binary(target_spec) && pred_spec.is_continuous() {
        return Sign::of(coef(1, 0));
    }
    if target_spec.is_continuous() && is_binary(pred_spec) {
        return Sign::of(coef(0, cat1));
    }
    Sign::Undefined
}

/// Estimate a mixed VAR model over the given (sorted) lag set.
pub fn fit_mvar(data: &Dataset, lags: &[usize], options: &MvarOptions) -> Result<MvarFit> {
    fit_mvar_weighted(data, lags, options, None)
}

/// Weighted variant used by the time-varying estimator. `weights_full`
/// holds one kernel weight per original data row; each node regression
/// uses the weights of its usable response rows.
pub fn fit_mvar_weighted(
    data: &Dataset,
    lags: &[usize],
    options: &MvarOptions,
    weights_full: Option<&Array1<f64>>,
) -> Result<MvarFit> {
    check_lags(lags)?;
    let p = data.n_vars();
    let results: Result<Vec<(NodeFit, Vec<bool>)>> = (0..p)
        .into_par_iter()
        .map(|s| fit_var_node(data, s, lags, options, weights_full).map_err(|e| e.at_node(s)))
        .collect();
    let results = results?;
    let inclusion_mask = results[0].1.clone();
    assemble_mvar(
        results.into_iter().map(|(n, _)| n).collect(),
        data,
        lags,
        options,
        inclusion_mask,
    )
}

fn assemble_mvar(
    node_fits: Vec<NodeFit>,
    data: &Dataset,
    lags: &[usize],
    options: &MvarOptions,
    inclusion_mask: Vec<bool>,
) -> Result<MvarFit> {
    let p = data.n_vars();
    let n_lags = lags.len();
    let mut wadj = Array3::zeros((p, p, n_lags));
    let mut signs = Array3::from_elem((p, p, n_lags), Sign::Undefined);
    let mut intercepts = Vec::with_capacity(p);
    let mut nodemeta = Vec::with_capacity(p);
    let mut nodemodels = Vec::with_capacity(p);
    let mut warnings = Vec::new();

    for node in node_fits {
        let i = node.target;
        let design = &node.design;
        let n_cat = node.solution.coefficients.nrows();
        for (g, gm) in design.group_meta.iter().enumerate() {
            let j = gm.vars[0];
            let lag = gm.lags[0];
            let l = lags.iter().position(|&x| x == lag).expect("lag index");
            let cols: Vec<usize> = design
                .groups
                .iter()
                .enumerate()
                .filter(|(_, &gg)| gg == g)
                .map(|(c, _)| c)
                .collect();
            if cols.is_empty() {
                continue;
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for &c in &cols {
                for r in 0..n_cat {
                    total += node.solution.coefficients[[r, c]].abs();
                    count += 1;
                }
            }
            let weight = if count > 0 { total / count as f64 } else { 0.0 };
            wadj[[i, j, l]] = weight;
            if weight > 0.0 {
                let coef = |cat: usize, enc_col: usize| -> f64 {
                    cols.get(enc_col)
                        .map(|&c| node.solution.coefficients[[cat, c]])
                        .unwrap_or(0.0)
                };
                signs[[i, j, l]] = lagged_sign(
                    data.specs[i],
                    data.specs[j],
                    options.binary_sign,
                    options.overparameterize,
                    coef,
                );
            }
        }
        intercepts.push(node.solution.intercepts.to_vec());
        nodemeta.push(node.meta);
        nodemodels.push(NodeModel {
            target: i,
            coefficients: node.solution.coefficients.clone(),
            intercepts: node.solution.intercepts.to_vec(),
        });
        warnings.extend(node.warnings);
    }

    Ok(MvarFit {
        specs: data.specs.clone(),
        lags: lags.to_vec(),
        options: options.clone(),
        wadj,
        signs,
        intercepts,
        inclusion_mask,
        nodemeta,
        nodemodels,
        warnings,
    })
}

/// One directed lagged effect for export: `source` affects `target`
/// over the table's lag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
    pub sign: Sign,
}

/// Per-lag directed edge lists. The column-predicts-row orientation of
/// `wadj` is flipped to source -> target.
pub fn var_edge_tables(fit: &MvarFit) -> Vec<Vec<DirectedEdge>> {
    let (p, _, n_lags) = fit.wadj.dim();
    (0..n_lags)
        .map(|l| {
            let mut edges = Vec::new();
            for i in 0..p {
                for j in 0..p {
                    let w = fit.wadj[[i, j, l]];
                    if w > 0.0 {
                        edges.push(DirectedEdge {
                            source: j,
                            target: i,
                            weight: w,
                            sign: fit.signs[[i, j, l]],
                        });
                    }
                }
            }
            edges
        })
        .collect()
}
