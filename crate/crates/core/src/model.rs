//! Domain types shared by all modules: variable specifications, typed
//! datasets, factor models and the fitted-model containers.
//!
//! All types are immutable after construction and safe to share across
//! concurrent workers.

use ndarray::{Array2, Array3, ArrayD, Array5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conditional distribution attached to a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Gaussian,
    Poisson,
    Categorical,
}

/// Type and level count of one variable. `levels` is the number of
/// categories for categorical variables and 1 by convention otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub kind: VarKind,
    pub levels: usize,
}

impl VariableSpec {
    pub fn gaussian() -> Self {
        VariableSpec { kind: VarKind::Gaussian, levels: 1 }
    }

    pub fn poisson() -> Self {
        VariableSpec { kind: VarKind::Poisson, levels: 1 }
    }

    pub fn categorical(levels: usize) -> Self {
        VariableSpec { kind: VarKind::Categorical, levels }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == VarKind::Categorical
    }

    pub fn is_continuous(&self) -> bool {
        !self.is_categorical()
    }

    fn check(&self, index: usize) -> Result<()> {
        match self.kind {
            VarKind::Categorical if self.levels < 2 => Err(Error::Model(format!(
                "variable {index}: categorical variables need at least 2 levels, got {}",
                self.levels
            ))),
            VarKind::Gaussian | VarKind::Poisson if self.levels != 1 => Err(Error::Model(format!(
                "variable {index}: continuous variables must declare 1 level, got {}",
                self.levels
            ))),
            _ => Ok(()),
        }
    }
}

/// Typed mixed-variable data matrix with optional time and
/// consecutiveness metadata. Categorical columns hold integer codes
/// `0..levels-1`; rows with missing cells are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub values: Array2<f64>,
    pub specs: Vec<VariableSpec>,
    pub timepoints: Option<Vec<f64>>,
    pub consec: Option<Vec<i64>>,
}

impl Dataset {
    pub fn new(values: Array2<f64>, specs: Vec<VariableSpec>) -> Result<Self> {
        let ds = Dataset { values, specs, timepoints: None, consec: None };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_timepoints(mut self, timepoints: Vec<f64>) -> Result<Self> {
        if timepoints.len() != self.n_rows() {
            return Err(Error::Data(format!(
                "timepoints length {} does not match n = {}",
                timepoints.len(),
                self.n_rows()
            )));
        }
        if timepoints.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("timepoints must be finite".into()));
        }
        for w in timepoints.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Data(format!(
                    "timepoints must be strictly increasing (tie or reversal at {} -> {})",
                    w[0], w[1]
                )));
            }
        }
        self.timepoints = Some(timepoints);
        Ok(self)
    }

    pub fn with_consec(mut self, consec: Vec<i64>) -> Result<Self> {
        if consec.len() != self.n_rows() {
            return Err(Error::Data(format!(
                "consec length {} does not match n = {}",
                consec.len(),
                self.n_rows()
            )));
        }
        self.consec = Some(consec);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    fn validate(&self) -> Result<()> {
        let (n, p) = self.values.dim();
        if p != self.specs.len() {
            return Err(Error::Data(format!(
                "data has {p} columns but {} variable specs were given",
                self.specs.len()
            )));
        }
        if n < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {n}")));
        }
        for (j, spec) in self.specs.iter().enumerate() {
            spec.check(j)?;
            for (i, &v) in self.values.column(j).iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "missing or non-finite cell at row {i}, column {j}"
                    )));
                }
                match spec.kind {
                    VarKind::Categorical => {
                        if v.fract() != 0.0 || v < 0.0 || v >= spec.levels as f64 {
                            return Err(Error::Data(format!(
                                "categorical cell at row {i}, column {j} is {v}, \
                                 expected an integer code in 0..{}",
                                spec.levels
                            )));
                        }
                    }
                    VarKind::Poisson => {
                        if v.fract() != 0.0 || v < 0.0 {
                            return Err(Error::Data(format!(
                                "poisson cell at row {i}, column {j} is {v}, \
                                 expected a nonnegative integer count"
                            )));
                        }
                    }
                    VarKind::Gaussian => {}
                }
            }
        }
        Ok(())
    }

    /// Categorical code at (row, var), assuming the dataset validated.
    pub fn code(&self, row: usize, var: usize) -> usize {
        self.values[[row, var]] as usize
    }
}

/// One interaction (clique) of a factor model: the member variables and
/// the parameter array over their category combinations. Continuous
/// members contribute an axis of extent 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Factor {
    pub vars: Vec<usize>,
    pub values: ArrayD<f64>,
}

impl Factor {
    pub fn order(&self) -> usize {
        self.vars.len()
    }
}

/// Thresholds, Gaussian scales and interaction parameters specifying a
/// joint mixed density. `thresholds[s]` has one entry per category of
/// variable `s` (length 1 for continuous variables).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorModel {
    pub specs: Vec<VariableSpec>,
    pub thresholds: Vec<Vec<f64>>,
    pub sds: Vec<f64>,
    pub factors: Vec<Factor>,
}

/// Severity of a single model-validation finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// One validation finding. `Error` findings make a model unusable for
/// sampling; `Warning` findings are diagnostic only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

impl Violation {
    fn error(message: impl Into<String>) -> Self {
        Violation { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Violation { severity: Severity::Warning, message: message.into() }
    }
}

/// Check a factor model against its structural invariants.
///
/// Returns every violation found (an empty list means the model is
/// valid). Gaussian-Gaussian interactions whose magnitude reaches the
/// product of the two precisions are flagged as warnings: such
/// specifications risk a non-normalizable joint density.
pub fn validate_model(model: &FactorModel) -> Vec<Violation> {
    let p = model.specs.len();
    let mut out = Vec::new();

    if model.thresholds.len() != p {
        out.push(Violation::error(format!(
            "thresholds: expected {p} entries, got {}",
            model.thresholds.len()
        )));
    }
    if model.sds.len() != p {
        out.push(Violation::error(format!(
            "sds: expected {p} entries, got {}",
            model.sds.len()
        )));
    }
    for (s, spec) in model.specs.iter().enumerate() {
        if let Err(e) = spec.check(s) {
            out.push(Violation::error(e.to_string()));
        }
        if let Some(th) = model.thresholds.get(s) {
            if th.len() != spec.levels {
                out.push(Violation::error(format!(
                    "thresholds[{s}]: expected length {}, got {}",
                    spec.levels,
                    th.len()
                )));
            }
        }
        if spec.kind == VarKind::Gaussian {
            if let Some(&sd) = model.sds.get(s) {
                if !(sd > 0.0) {
                    out.push(Violation::error(format!(
                        "sds[{s}]: gaussian sd must be positive, got {sd}"
                    )));
                }
            }
        }
    }

    for (f, factor) in model.factors.iter().enumerate() {
        let d = factor.vars.len();
        if d < 2 {
            out.push(Violation::error(format!(
                "factor {f}: needs at least 2 members, got {d}"
            )));
            continue;
        }
        let mut sorted_ok = true;
        for w in factor.vars.windows(2) {
            if w[1] == w[0] {
                out.push(Violation::error(format!(
                    "factor {f}: duplicate index {}",
                    w[0]
                )));
                sorted_ok = false;
            } else if w[1] < w[0] {
                out.push(Violation::error(format!(
                    "factor {f}: indices must be sorted ascending"
                )));
                sorted_ok = false;
            }
        }
        if factor.vars.iter().any(|&v| v >= p) {
            out.push(Violation::error(format!(
                "factor {f}: variable index out of range (p = {p})"
            )));
            continue;
        }
        if !sorted_ok {
            continue;
        }
        let expected: Vec<usize> = factor.vars.iter().map(|&v| model.specs[v].levels).collect();
        if factor.values.shape() != expected.as_slice() {
            out.push(Violation::error(format!(
                "factor {f}: shape mismatch, interaction array is {:?} but member levels are {:?}",
                factor.values.shape(),
                expected
            )));
            continue;
        }
        // heuristic divergence flag for gaussian pairs
        if d == 2 {
            let (a, b) = (factor.vars[0], factor.vars[1]);
            if model.specs[a].kind == VarKind::Gaussian && model.specs[b].kind == VarKind::Gaussian
            {
                let theta = factor.values.iter().next().copied().unwrap_or(0.0);
                let (sa, sb) = (model.sds[a], model.sds[b]);
                if sa > 0.0 && sb > 0.0 {
                    let bound = (1.0 / (sa * sa)) * (1.0 / (sb * sb));
                    if theta.abs() >= bound {
                        out.push(Violation::warning(format!(
                            "factor {f}: gaussian-gaussian interaction magnitude {} reaches \
                             the product of precisions {bound}; joint density may diverge",
                            theta.abs()
                        )));
                    }
                }
            }
        }
    }
    out
}

/// `validate_model` reduced to a hard pass/fail: warnings pass, errors fail.
pub fn require_valid(model: &FactorModel) -> Result<Vec<Violation>> {
    let violations = validate_model(model);
    if let Some(v) = violations.iter().find(|v| v.severity == Severity::Error) {
        return Err(Error::Model(v.message.clone()));
    }
    Ok(violations)
}

/// Lagged-effect parameterization of a mixed VAR model. Entry
/// `coefarray[[s, r, a, b, l]]` is the effect of predictor `r`
/// (category `b`) on target `s` (category `a`) over lag `lags[l]`;
/// axes of continuous variables have meaningful extent 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MvarCoefficients {
    pub lags: Vec<usize>,
    pub coefarray: Array5<f64>,
}

impl MvarCoefficients {
    pub fn zeros(p: usize, max_level: usize, lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() {
            return Err(Error::Model("lag set must be nonempty".into()));
        }
        if lags.iter().any(|&l| l == 0) {
            return Err(Error::Model("lags must be positive".into()));
        }
        let mut sorted = lags.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != lags {
            return Err(Error::Model("lags must be sorted and distinct".into()));
        }
        let n_lags = lags.len();
        Ok(MvarCoefficients {
            lags,
            coefarray: Array5::zeros((p, p, max_level, max_level, n_lags)),
        })
    }
}

/// Sign attached to an edge weight. `Undefined` is a distinct state
/// used wherever the sign rules do not apply; it is never conflated
/// with zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+1")]
    Positive,
    #[serde(rename = "-1")]
    Negative,
    #[serde(rename = "u")]
    Undefined,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x > 0.0 {
            Sign::Positive
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Undefined
        }
    }
}

/// One recovered interaction: the member tuple, its scalar weight
/// (mean absolute parameter), the per-regression parameter arrays and,
/// when the encodings align across regressions, their elementwise
/// combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFactor {
    pub vars: Vec<usize>,
    pub weight: f64,
    pub sign: Sign,
    /// One parameter array per member regression, in member order; axis 0
    /// is the response side (full categories for categorical targets, 1
    /// otherwise), remaining axes follow the encoded predictors.
    pub per_regression: Vec<ArrayD<f64>>,
    /// Elementwise mean over regressions, axes ordered by the sorted
    /// member tuple; present only when all encodings align.
    pub combined: Option<ArrayD<f64>>,
}

/// Per-node estimation record: selected tuning parameters, fit size
/// and the standardization applied to the node's design and response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeMeta {
    pub lambda: f64,
    pub alpha: f64,
    pub s0: usize,
    pub deviance: f64,
    pub response_center: f64,
    pub response_scale: f64,
    pub col_centers: Vec<f64>,
    pub col_scales: Vec<f64>,
    /// Indices of the raw design columns kept after dropping
    /// zero-variance columns.
    pub col_kept: Vec<usize>,
}

/// Fitted coefficients of one nodewise regression, on the standardized
/// design scale described by the node's `NodeMeta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeModel {
    pub target: usize,
    /// `n_cat x q` matrix; a single row for continuous targets.
    pub coefficients: Array2<f64>,
    pub intercepts: Vec<f64>,
}

/// Estimated mixed graphical model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgmFit {
    pub specs: Vec<VariableSpec>,
    pub options: crate::mgm::MgmOptions,
    pub wadj: Array2<f64>,
    pub signs: Array2<Sign>,
    pub rawfactors: Vec<RawFactor>,
    pub intercepts: Vec<Vec<f64>>,
    pub nodemeta: Vec<NodeMeta>,
    pub nodemodels: Vec<NodeModel>,
    pub warnings: Vec<String>,
}

/// Estimated mixed VAR model. `wadj[[i, j, l]]` is the aggregated
/// effect of predictor `j` on target `i` over `lags[l]` (columns
/// predict rows).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MvarFit {
    pub specs: Vec<VariableSpec>,
    pub lags: Vec<usize>,
    pub options: crate::mvar::MvarOptions,
    pub wadj: Array3<f64>,
    pub signs: Array3<Sign>,
    pub intercepts: Vec<Vec<f64>>,
    pub inclusion_mask: Vec<bool>,
    pub nodemeta: Vec<NodeMeta>,
    pub nodemodels: Vec<NodeModel>,
    pub warnings: Vec<String>,
}

/// A time-varying fit: one stationary-model estimate per estimation
/// point, with the local effective sample size used at each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvFit<F> {
    /// Estimation points on the normalized [0, 1] time scale, sorted.
    pub estpoints: Vec<f64>,
    pub bandwidth: f64,
    pub fits: Vec<F>,
    pub local_n: Vec<f64>,
    pub warnings: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, ArrayD, IxDyn};

    fn paper_demo_model() -> FactorModel {
        // two gaussians and categoricals with 2 and 4 levels, three
        // pairwise interactions: (0,3), (1,2), (0,1)
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

    #[test]
    fn demo_model_is_valid() {
        assert!(validate_model(&paper_demo_model()).is_empty());
    }

    #[test]
    fn duplicate_factor_index_is_violation() {
        let mut m = paper_demo_model();
        m.factors[0].vars = vec![1, 1];
        let v = validate_model(&m);
        assert!(v.iter().any(|v| v.message.contains("duplicate index")));
    }

    #[test]
    fn interaction_shape_mismatch_is_violation() {
        let mut m = paper_demo_model();
        // pair (1,2) has levels (2,4); a 2x3 array must be rejected
        m.factors[1].values = ArrayD::zeros(IxDyn(&[2, 3]));
        let v = validate_model(&m);
        assert!(v.iter().any(|v| v.message.contains("shape mismatch")));
    }

    #[test]
    fn strong_gaussian_pair_warns_but_passes() {
        let mut m = paper_demo_model();
        m.factors[0].values = ArrayD::from_elem(IxDyn(&[1, 1]), 1.5);
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].severity, Severity::Warning);
        assert!(require_valid(&m).is_ok());
    }

    #[test]
    fn dataset_rejects_out_of_range_codes() {
        let specs = vec![VariableSpec::categorical(2), VariableSpec::gaussian()];
        let bad = arr2(&[[0.0, 1.0], [2.0, 0.5]]);
        assert!(Dataset::new(bad, specs.clone()).is_err());
        let good = arr2(&[[0.0, 1.0], [1.0, 0.5]]);
        assert!(Dataset::new(good, specs).is_ok());
    }

    #[test]
    fn dataset_rejects_tied_timepoints() {
        let specs = vec![VariableSpec::gaussian()];
        let ds = Dataset::new(arr2(&[[0.0], [1.0], [2.0]]), specs).unwrap();
        assert!(ds.clone().with_timepoints(vec![0.0, 0.5, 0.5]).is_err());
        assert!(ds.with_timepoints(vec![0.0, 0.5, 1.0]).is_ok());
    }

    #[test]
    fn dataset_rejects_fractional_counts() {
        let specs = vec![VariableSpec::poisson()];
        assert!(Dataset::new(arr2(&[[1.5], [2.0]]), specs.clone()).is_err());
        assert!(Dataset::new(arr2(&[[-1.0], [2.0]]), specs.clone()).is_err());
        assert!(Dataset::new(arr2(&[[0.0], [3.0]]), specs).is_ok());
    }
}
