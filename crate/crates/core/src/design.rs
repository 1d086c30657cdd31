//! Nodewise regression design matrices: categorical indicator encodings,
//! interaction products up to order k, lagged predictor blocks with
//! consecutiveness filtering, and column standardization.
//!
//! All builders are pure functions and may run concurrently per node.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, VarKind, VariableSpec};

/// Provenance of one design column: the source variables, the indicator
/// category per source (None for continuous sources) and the lag per
/// source (0 for same-time designs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub vars: Vec<usize>,
    pub cats: Vec<Option<usize>>,
    pub lags: Vec<usize>,
}

impl ColumnMeta {
    /// True when every source enters through an indicator function.
    pub fn is_indicator(&self) -> bool {
        self.cats.iter().all(|c| c.is_some())
    }
}

/// One interaction term: the predictor variables (and lags) whose
/// encoded columns form the term's column block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMeta {
    pub vars: Vec<usize>,
    pub lags: Vec<usize>,
}

/// Design matrix of one nodewise regression. Every column belongs to
/// exactly one group; a group holds all columns of one interaction term.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub columns: Array2<f64>,
    pub groups: Vec<usize>,
    pub group_meta: Vec<GroupMeta>,
    pub colmeta: Vec<ColumnMeta>,
    /// Columns that are identically zero over the design rows.
    pub const_zero: Vec<bool>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.columns.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.ncols()
    }

    fn recompute_const_zero(&mut self) {
        self.const_zero = (0..self.n_cols())
            .map(|j| self.columns.column(j).iter().all(|&v| v == 0.0))
            .collect();
    }
}

/// Indicator encoding of a categorical column. Standard mode emits
/// `levels - 1` columns (category 0 is the reference); overparameterized
/// mode emits one column per state.
///
/// Every category must be observed in the column, otherwise its
/// coefficient is unidentifiable and an `EmptyCategory` error is raised.
pub fn encode_categorical(
    column: &[f64],
    levels: usize,
    overparameterize: bool,
    var_index: usize,
) -> Result<Array2<f64>> {
    let mut seen = vec![false; levels];
    for &v in column {
        let c = v as usize;
        if v.fract() != 0.0 || v < 0.0 || c >= levels {
            return Err(Error::Data(format!(
                "categorical value {v} out of range for variable {var_index} with {levels} levels"
            )));
        }
        seen[c] = true;
    }
    if let Some(cat) = seen.iter().position(|&s| !s) {
        return Err(Error::EmptyCategory { column: var_index, category: cat });
    }
    let cats: Vec<usize> = if overparameterize {
        (0..levels).collect()
    } else {
        (1..levels).collect()
    };
    let mut block = Array2::zeros((column.len(), cats.len()));
    for (i, &v) in column.iter().enumerate() {
        let c = v as usize;
        if let Some(j) = cats.iter().position(|&cat| cat == c) {
            block[[i, j]] = 1.0;
        }
    }
    Ok(block)
}

/// Encoded block of one predictor restricted to `rows`: the indicator
/// block for categorical variables, the raw column otherwise. Returns
/// the block and the category id per block column.
fn encode_predictor(
    data: &Dataset,
    var: usize,
    rows: &[usize],
    overparameterize: bool,
) -> Result<(Array2<f64>, Vec<Option<usize>>)> {
    let spec = data.specs[var];
    let col: Vec<f64> = rows.iter().map(|&r| data.values[[r, var]]).collect();
    if spec.is_categorical() {
        let block = encode_categorical(&col, spec.levels, overparameterize, var)?;
        let cats: Vec<Option<usize>> = if overparameterize {
            (0..spec.levels).map(Some).collect()
        } else {
            (1..spec.levels).map(Some).collect()
        };
        Ok((block, cats))
    } else {
        let block = Array2::from_shape_vec((rows.len(), 1), col)
            .expect("column shape");
        Ok((block, vec![None]))
    }
}

/// All subsets of `items` of exactly `size` elements, in lexicographic
/// order.
fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(size);
    fn rec(items: &[usize], size: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == size {
            out.push(current.clone());
            return;
        }
        for i in start..items.len() {
            current.push(items[i]);
            rec(items, size, i + 1, current, out);
            current.pop();
        }
    }
    rec(items, size, 0, &mut current, &mut out);
    out
}

struct DesignBuilder {
    n_rows: usize,
    columns: Vec<Array1<f64>>,
    groups: Vec<usize>,
    group_meta: Vec<GroupMeta>,
    colmeta: Vec<ColumnMeta>,
}

impl DesignBuilder {
    fn new(n_rows: usize) -> Self {
        DesignBuilder {
            n_rows,
            columns: Vec::new(),
            groups: Vec::new(),
            group_meta: Vec::new(),
            colmeta: Vec::new(),
        }
    }

    /// Add one interaction term: the elementwise-product cross of the
    /// member blocks, one group, columns in row-major order over the
    /// member categories.
    fn push_term(
        &mut self,
        members: &[(usize, usize, Array2<f64>, Vec<Option<usize>>)], // (var, lag, block, cats)
    ) {
        let gid = self.group_meta.len();
        self.group_meta.push(GroupMeta {
            vars: members.iter().map(|m| m.0).collect(),
            lags: members.iter().map(|m| m.1).collect(),
        });
        let widths: Vec<usize> = members.iter().map(|m| m.2.ncols()).collect();
        let total: usize = widths.iter().product();
        for flat in 0..total {
            // decode row-major index into per-member column choices
            let mut idx = flat;
            let mut choice = vec![0usize; members.len()];
            for a in (0..members.len()).rev() {
                choice[a] = idx % widths[a];
                idx /= widths[a];
            }
            let mut col = Array1::ones(self.n_rows);
            for (a, m) in members.iter().enumerate() {
                col = &col * &m.2.column(choice[a]);
            }
            self.columns.push(col);
            self.groups.push(gid);
            self.colmeta.push(ColumnMeta {
                vars: members.iter().map(|m| m.0).collect(),
                cats: members
                    .iter()
                    .enumerate()
                    .map(|(a, m)| m.3[choice[a]])
                    .collect(),
                lags: members.iter().map(|m| m.1).collect(),
            });
        }
    }

    fn finish(self) -> Result<DesignMatrix> {
        if self.columns.is_empty() {
            return Err(Error::Data("design matrix has no columns".into()));
        }
        let q = self.columns.len();
        let mut columns = Array2::zeros((self.n_rows, q));
        for (j, col) in self.columns.iter().enumerate() {
            columns.column_mut(j).assign(col);
        }
        let mut dm = DesignMatrix {
            columns,
            groups: self.groups,
            group_meta: self.group_meta,
            colmeta: self.colmeta,
            const_zero: Vec::new(),
        };
        dm.recompute_const_zero();
        Ok(dm)
    }
}

/// Design matrix and raw response for the regression of node `target`
/// in a k-order mixed graphical model: encoded blocks of every other
/// variable, plus all degree-(d-1) products of those blocks for d up
/// to k (capped at p-1 additional members).
pub fn build_mgm_design(
    data: &Dataset,
    target: usize,
    k: usize,
    overparameterize: bool,
) -> Result<(DesignMatrix, Array1<f64>)> {
    let p = data.n_vars();
    if k < 2 {
        return Err(Error::Data(format!("interaction order k must be >= 2, got {k}")));
    }
    if p < 2 {
        return Err(Error::Data("need at least 2 variables".into()));
    }
    if target >= p {
        return Err(Error::Data(format!("target {target} out of range (p = {p})")));
    }
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let others: Vec<usize> = (0..p).filter(|&r| r != target).collect();

    let mut encoded = Vec::with_capacity(others.len());
    for &r in &others {
        let (block, cats) = encode_predictor(data, r, &rows, overparameterize)?;
        encoded.push((r, block, cats));
    }

    let mut builder = DesignBuilder::new(rows.len());
    let max_degree = (k - 1).min(others.len());
    for degree in 1..=max_degree {
        for combo in subsets(&others, degree) {
            let members: Vec<(usize, usize, Array2<f64>, Vec<Option<usize>>)> = combo
                .iter()
                .map(|&r| {
                    let e = encoded.iter().find(|e| e.0 == r).expect("encoded");
                    (r, 0usize, e.1.clone(), e.2.clone())
                })
                .collect();
            builder.push_term(&members);
        }
    }
    let response = data.values.column(target).to_owned();
    Ok((builder.finish()?, response))
}

/// Per-row usability under the consecutiveness rule: row `t` is usable
/// iff the `max(lags)` rows before it exist and `consec` increases by
/// exactly one at every step in between. Without `consec` every row
/// after the first `max(lags)` is usable.
pub fn usable_rows(n: usize, lags: &[usize], consec: Option<&[i64]>) -> Vec<bool> {
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    (0..n)
        .map(|t| {
            if t < max_lag {
                return false;
            }
            match consec {
                None => true,
                Some(c) => (t - max_lag..t).all(|i| c[i + 1] == c[i] + 1),
            }
        })
        .collect()
}

/// Lagged design matrix for the mixed VAR regression of node `target`
/// over a lag set: encoded blocks of every variable at every lag in
/// `lags`, rows restricted to usable responses, plus the inclusion mask
/// over the original rows.
pub fn build_var_design(
    data: &Dataset,
    target: usize,
    lags: &[usize],
    overparameterize: bool,
) -> Result<(DesignMatrix, Array1<f64>, Vec<bool>)> {
    let n = data.n_rows();
    let p = data.n_vars();
    if lags.is_empty() {
        return Err(Error::Data("lag set must be nonempty".into()));
    }
    if lags.iter().any(|&l| l == 0) {
        return Err(Error::Data("lags must be positive".into()));
    }
    let max_lag = *lags.iter().max().unwrap();
    if max_lag >= n {
        return Err(Error::Data(format!(
            "maximum lag {max_lag} must be smaller than n = {n}"
        )));
    }
    let mask = usable_rows(n, lags, data.consec.as_deref());
    let usable: Vec<usize> = (0..n).filter(|&t| mask[t]).collect();
    if usable.is_empty() {
        return Err(Error::NoUsableRows);
    }

    let mut builder = DesignBuilder::new(usable.len());
    for &lag in lags {
        for r in 0..p {
            let source_rows: Vec<usize> = usable.iter().map(|&t| t - lag).collect();
            let (block, cats) = encode_predictor(data, r, &source_rows, overparameterize)?;
            builder.push_term(&[(r, lag, block, cats)]);
        }
    }
    let response = Array1::from_iter(usable.iter().map(|&t| data.values[[t, target]]));
    Ok((builder.finish()?, response, mask))
}

/// Standardization applied to a design: per-kept-column centers and
/// scales, the indices of the raw columns kept, and any warnings
/// recorded for dropped columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

fn column_class(meta: &ColumnMeta, specs: &[VariableSpec]) -> ColumnClass {
    if meta.is_indicator() {
        return ColumnClass::Indicator;
    }
    if meta.vars.len() == 1 && specs[meta.vars[0]].kind == VarKind::Poisson {
        return ColumnClass::CenterOnly;
    }
    ColumnClass::Standardize
}

enum ColumnClass {
    Indicator,
    CenterOnly,
    Standardize,
}

/// Center and scale the continuous-derived columns of a design.
///
/// Gaussian-derived columns (including products involving a continuous
/// source) are centered and scaled to unit sample sd; raw Poisson count
/// columns are centered only; indicator columns are left untouched.
/// Zero-variance continuous columns are dropped with a warning.
pub fn standardize(
    design: &DesignMatrix,
    specs: &[VariableSpec],
) -> (DesignMatrix, ScaleRecord) {
    let n = design.n_rows();
    let mut centers = Vec::new();
    let mut scales = Vec::new();
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    let mut new_cols: Vec<Array1<f64>> = Vec::new();

    for j in 0..design.n_cols() {
        let col = design.columns.column(j);
        match column_class(&design.colmeta[j], specs) {
            ColumnClass::Indicator => {
                kept.push(j);
                centers.push(0.0);
                scales.push(1.0);
                new_cols.push(col.to_owned());
            }
            ColumnClass::CenterOnly | ColumnClass::Standardize => {
                let mean = col.sum() / n as f64;
                let var = if n > 1 {
                    col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                let sd = var.sqrt();
                let center_only = matches!(
                    column_class(&design.colmeta[j], specs),
                    ColumnClass::CenterOnly
                );
                if sd < 1e-12 {
                    warnings.push(format!(
                        "dropped zero-variance design column {j} (sources {:?})",
                        design.colmeta[j].vars
                    ));
                    continue;
                }
                let scale = if center_only { 1.0 } else { sd };
                kept.push(j);
                centers.push(mean);
                scales.push(scale);
                new_cols.push(col.mapv(|v| (v - mean) / scale));
            }
        }
    }

    let q = new_cols.len();
    let mut columns = Array2::zeros((n, q));
    for (jj, col) in new_cols.iter().enumerate() {
        columns.column_mut(jj).assign(col);
    }
    let mut out = DesignMatrix {
        columns,
        groups: kept.iter().map(|&j| design.groups[j]).collect(),
        group_meta: design.group_meta.clone(),
        colmeta: kept.iter().map(|&j| design.colmeta[j].clone()).collect(),
        const_zero: Vec::new(),
    };
    out.recompute_const_zero();
    (out, ScaleRecord { centers, scales, kept, warnings })
}

/// Apply a stored scale record to a freshly built raw design (used at
/// prediction time so new data passes through the transformation fitted
/// on the training data).
pub fn apply_scale(design: &DesignMatrix, record: &ScaleRecord) -> DesignMatrix {
    let n = design.n_rows();
    let q = record.kept.len();
    let mut columns = Array2::zeros((n, q));
    for (jj, &j) in record.kept.iter().enumerate() {
        let col = design.columns.column(j);
        let transformed = col.mapv(|v| (v - record.centers[jj]) / record.scales[jj]);
        columns.column_mut(jj).assign(&transformed);
    }
    let mut out = DesignMatrix {
        columns,
        groups: record.kept.iter().map(|&j| design.groups[j]).collect(),
        group_meta: design.group_meta.clone(),
        colmeta: record.kept.iter().map(|&j| design.colmeta[j].clone()).collect(),
        const_zero: Vec::new(),
    };
    out.recompute_const_zero();
    out
}
