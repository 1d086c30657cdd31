//! Samplers for all four model classes: Gibbs sampling of mixed
//! graphical models, sequential draws of mixed VAR processes, their
//! time-varying counterparts, and a brute-force exact-density oracle
//! for small all-categorical models.
//!
//! Every sampler is deterministic given its seed. Chains are sequential
//! by construction; sample several datasets concurrently with
//! independent seeds if needed.

use ndarray::{Array2, Array5};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::model::{require_valid, Dataset, FactorModel, VarKind, VariableSpec};

/// Default Gibbs burn-in sweeps.
pub const DEFAULT_BURN_IN: usize = 100;
/// Default Gibbs thinning (sweeps per kept row).
pub const DEFAULT_THIN: usize = 10;
/// Gibbs sweeps between consecutive emitted rows of the time-varying
/// sampler, letting the chain track the drifting target.
pub const TV_SWEEPS_PER_ROW: usize = 10;
/// Continuous chain values beyond this magnitude abort sampling.
const DIVERGENCE_BOUND: f64 = 1e6;
/// Count-model log rates are clamped at this value.
const LOG_RATE_CLAMP: f64 = 30.0;

/// Per-node view of the factors touching it: (factor index, axis of the
/// node inside the factor's array).
fn factors_by_node(model: &FactorModel) -> Vec<Vec<(usize, usize)>> {
    let p = model.specs.len();
    let mut by_node = vec![Vec::new(); p];
    for (f, factor) in model.factors.iter().enumerate() {
        for (axis, &v) in factor.vars.iter().enumerate() {
            by_node[v].push((f, axis));
        }
    }
    by_node
}

/// Node-conditional potentials of node `s` given the rest of the state:
/// one entry per category for categorical nodes, a single natural
/// parameter otherwise.
fn node_potentials(
    model: &FactorModel,
    by_node: &[Vec<(usize, usize)>],
    state: &[f64],
    s: usize,
) -> Vec<f64> {
    let spec = model.specs[s];
    let n_cat = spec.levels;
    let mut pot = model.thresholds[s].clone();
    debug_assert_eq!(pot.len(), n_cat);
    for &(f, axis) in &by_node[s] {
        let factor = &model.factors[f];
        // continuous members multiply in their value; categorical
        // members select their current category on the factor's axis
        let mut idx = vec![0usize; factor.vars.len()];
        let mut scale = 1.0;
        for (a, &r) in factor.vars.iter().enumerate() {
            if a == axis {
                continue;
            }
            if model.specs[r].is_categorical() {
                idx[a] = state[r] as usize;
            } else {
                scale *= state[r];
            }
        }
        for (c, pot_c) in pot.iter_mut().enumerate() {
            idx[axis] = c;
            *pot_c += factor.values[idx.as_slice()] * scale;
        }
    }
    pot
}

fn sample_categorical(potentials: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let max = potentials.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = potentials.iter().map(|&p| (p - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (c, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return c;
        }
    }
    weights.len() - 1
}

fn update_node(
    model: &FactorModel,
    by_node: &[Vec<(usize, usize)>],
    state: &mut [f64],
    s: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let pot = node_potentials(model, by_node, state, s);
    match model.specs[s].kind {
        VarKind::Gaussian => {
            let normal = Normal::new(pot[0], model.sds[s])
                .map_err(|e| Error::Model(format!("gaussian node {s}: {e}")))?;
            state[s] = normal.sample(rng);
        }
        VarKind::Poisson => {
            let rate = pot[0].min(LOG_RATE_CLAMP).exp();
            let pois = Poisson::new(rate)
                .map_err(|e| Error::Model(format!("poisson node {s}: {e}")))?;
            state[s] = pois.sample(rng);
        }
        VarKind::Categorical => {
            state[s] = sample_categorical(&pot, rng) as f64;
        }
    }
    if model.specs[s].is_continuous() && state[s].abs() > DIVERGENCE_BOUND {
        return Err(Error::SamplerDivergence);
    }
    Ok(())
}

/// Draw the initial state from the threshold-only conditionals.
fn initial_state(model: &FactorModel, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let p = model.specs.len();
    let empty = FactorModel {
        specs: model.specs.clone(),
        thresholds: model.thresholds.clone(),
        sds: model.sds.clone(),
        factors: Vec::new(),
    };
    let by_node = factors_by_node(&empty);
    let mut state = vec![0.0; p];
    for s in 0..p {
        update_node(&empty, &by_node, &mut state, s, rng)?;
    }
    Ok(state)
}

fn gibbs_sweep(
    model: &FactorModel,
    by_node: &[Vec<(usize, usize)>],
    state: &mut [f64],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for s in 0..model.specs.len() {
        update_node(model, by_node, state, s, rng)?;
    }
    Ok(())
}

/// Gibbs-sample `n` rows from a mixed graphical model. Each node is
/// updated from its exact node-conditional; `burn_in` sweeps are
/// discarded and one row is kept every `thin` sweeps afterwards.
pub fn sample_mgm(
    model: &FactorModel,
    n: usize,
    seed: u64,
    burn_in: usize,
    thin: usize,
) -> Result<Dataset> {
    require_valid(model)?;
    if n < 2 {
        return Err(Error::Data("need at least 2 samples".into()));
    }
    if thin == 0 {
        return Err(Error::Data("thin must be positive".into()));
    }
    let p = model.specs.len();
    let by_node = factors_by_node(model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial_state(model, &mut rng)?;
    for _ in 0..burn_in {
        gibbs_sweep(model, &by_node, &mut state, &mut rng)?;
    }
    let mut values = Array2::zeros((n, p));
    for i in 0..n {
        for _ in 0..thin {
            gibbs_sweep(model, &by_node, &mut state, &mut rng)?;
        }
        for (j, &v) in state.iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    Dataset::new(values, model.specs.clone())
}

/// Exact joint probability table of a small all-categorical model,
/// computed by enumerating every state of the (at most 10^6 states)
/// joint space. Used as an oracle for the Gibbs sampler.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub shape: Vec<usize>,
    /// Probabilities in row-major state order.
    pub probs: Vec<f64>,
    /// The log-normalization constant of the unnormalized density.
    pub log_normalizer: f64,
}

impl JointTable {
    pub fn prob(&self, state: &[usize]) -> f64 {
        let mut flat = 0usize;
        for (a, &s) in state.iter().enumerate() {
            flat = flat * self.shape[a] + s;
        }
        self.probs[flat]
    }
}

pub fn exact_joint_small(model: &FactorModel) -> Result<JointTable> {
    require_valid(model)?;
    if model.specs.iter().any(|s| s.is_continuous()) {
        return Err(Error::Model(
            "exact enumeration is defined only for all-categorical models".into(),
        ));
    }
    let shape: Vec<usize> = model.specs.iter().map(|s| s.levels).collect();
    let total: usize = shape.iter().product();
    if total > 1_000_000 {
        return Err(Error::Model(format!(
            "state space of {total} states exceeds the enumeration limit"
        )));
    }
    let p = shape.len();
    let mut exponents = Vec::with_capacity(total);
    let mut state = vec![0usize; p];
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..p).rev() {
            state[a] = rem % shape[a];
            rem /= shape[a];
        }
        let mut e = 0.0;
        for (s, &c) in state.iter().enumerate() {
            e += model.thresholds[s][c];
        }
        for factor in &model.factors {
            let idx: Vec<usize> = factor.vars.iter().map(|&v| state[v]).collect();
            e += factor.values[idx.as_slice()];
        }
        exponents.push(e);
    }
    let max = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_normalizer = exponents.iter().map(|&e| (e - max).exp()).sum::<f64>().ln() + max;
    let probs = exponents.iter().map(|&e| (e - log_normalizer).exp()).collect();
    Ok(JointTable { shape, probs, log_normalizer })
}

fn check_mvar_arguments(
    specs: &[VariableSpec],
    coef: &Array5<f64>,
    lags: &[usize],
    thresholds: &[Vec<f64>],
    sds: &[f64],
) -> Result<usize> {
    let p = specs.len();
    let max_level = specs.iter().map(|s| s.levels).max().unwrap_or(1);
    if lags.is_empty() {
        return Err(Error::Model("lag set must be nonempty".into()));
    }
    let dims = coef.dim();
    if dims.0 != p || dims.1 != p || dims.2 < max_level || dims.3 < max_level || dims.4 != lags.len()
    {
        return Err(Error::Model(format!(
            "coefficient array has shape {dims:?}, expected ({p}, {p}, >={max_level}, >={max_level}, {})",
            lags.len()
        )));
    }
    if thresholds.len() != p || sds.len() != p {
        return Err(Error::Model("thresholds and sds must have one entry per variable".into()));
    }
    for (s, spec) in specs.iter().enumerate() {
        if thresholds[s].len() != spec.levels {
            return Err(Error::Model(format!(
                "thresholds[{s}]: expected length {}, got {}",
                spec.levels,
                thresholds[s].len()
            )));
        }
        if spec.kind == VarKind::Gaussian && !(sds[s] > 0.0) {
            return Err(Error::Model(format!("sds[{s}] must be positive")));
        }
    }
    Ok(*lags.iter().max().unwrap())
}

/// Per-category potentials of node `s` at row `t` given earlier rows.
fn mvar_potentials(
    specs: &[VariableSpec],
    coef: &Array5<f64>,
    lags: &[usize],
    thresholds: &[Vec<f64>],
    values: &Array2<f64>,
    t: usize,
    s: usize,
) -> Vec<f64> {
    let p = specs.len();
    let mut pot = thresholds[s].clone();
    for (l, &lag) in lags.iter().enumerate() {
        let row = t - lag;
        for r in 0..p {
            let (b, scale) = if specs[r].is_categorical() {
                (values[[row, r]] as usize, 1.0)
            } else {
                (0, values[[row, r]])
            };
            for (a, pot_a) in pot.iter_mut().enumerate() {
                *pot_a += coef[[s, r, a, b, l]] * scale;
            }
        }
    }
    pot
}

fn draw_from_potentials(
    spec: VariableSpec,
    sd: f64,
    pot: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let v = match spec.kind {
        VarKind::Gaussian => {
            let normal = Normal::new(pot[0], sd)
                .map_err(|e| Error::Model(format!("gaussian draw: {e}")))?;
            normal.sample(rng)
        }
        VarKind::Poisson => {
            let rate = pot[0].min(LOG_RATE_CLAMP).exp();
            Poisson::new(rate)
                .map_err(|e| Error::Model(format!("poisson draw: {e}")))?
                .sample(rng)
        }
        VarKind::Categorical => sample_categorical(pot, rng) as f64,
    };
    if spec.is_continuous() && v.abs() > DIVERGENCE_BOUND {
        return Err(Error::SamplerDivergence);
    }
    Ok(v)
}

/// Sample `n` rows of a mixed VAR process. The first `max(lags)` rows
/// come from the threshold-only marginals; every later row is drawn per
/// node from its conditional given the lagged rows.
pub fn sample_mvar(
    specs: &[VariableSpec],
    coef: &Array5<f64>,
    lags: &[usize],
    thresholds: &[Vec<f64>],
    sds: &[f64],
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let max_lag = check_mvar_arguments(specs, coef, lags, thresholds, sds)?;
    if n <= max_lag {
        return Err(Error::Data(format!(
            "need more than max(lags) = {max_lag} samples, got {n}"
        )));
    }
    let p = specs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n, p));
    for t in 0..max_lag {
        for s in 0..p {
            values[[t, s]] = draw_from_potentials(specs[s], sds[s], &thresholds[s], &mut rng)?;
        }
    }
    for t in max_lag..n {
        for s in 0..p {
            let pot = mvar_potentials(specs, coef, lags, thresholds, &values, t, s);
            values[[t, s]] = draw_from_potentials(specs[s], sds[s], &pot, &mut rng)?;
        }
    }
    Dataset::new(values, specs.to_vec())
}

/// Sample a time-varying MGM: one model per row, all sharing the same
/// variable specs. The Gibbs chain continues across rows, running a
/// fixed number of sweeps under each row's model before emitting.
pub fn sample_tvmgm(models: &[FactorModel], n: usize, seed: u64) -> Result<Dataset> {
    if models.len() != n {
        return Err(Error::Data(format!(
            "parameter sequence length {} does not match n = {n}",
            models.len()
        )));
    }
    if n < 2 {
        return Err(Error::Data("need at least 2 samples".into()));
    }
    for m in models {
        require_valid(m)?;
        if m.specs != models[0].specs {
            return Err(Error::Data("all per-time models must share variable specs".into()));
        }
    }
    let p = models[0].specs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial_state(&models[0], &mut rng)?;
    let by_node_first = factors_by_node(&models[0]);
    for _ in 0..DEFAULT_BURN_IN {
        gibbs_sweep(&models[0], &by_node_first, &mut state, &mut rng)?;
    }
    let mut values = Array2::zeros((n, p));
    for (t, model) in models.iter().enumerate() {
        let by_node = factors_by_node(model);
        for _ in 0..TV_SWEEPS_PER_ROW {
            gibbs_sweep(model, &by_node, &mut state, &mut rng)?;
        }
        for (j, &v) in state.iter().enumerate() {
            values[[t, j]] = v;
        }
    }
    Dataset::new(values, models[0].specs.clone())
}

/// Per-time-point mixed VAR parameters for the time-varying sampler.
#[derive(Debug, Clone)]
pub struct TvMvarStep {
    pub coef: Array5<f64>,
    pub thresholds: Vec<Vec<f64>>,
    pub sds: Vec<f64>,
}

/// Sample a time-varying mixed VAR process: row `t` is drawn under the
/// coefficients of step `t`.
pub fn sample_tvmvar(
    specs: &[VariableSpec],
    lags: &[usize],
    steps: &[TvMvarStep],
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if steps.len() != n {
        return Err(Error::Data(format!(
            "parameter sequence length {} does not match n = {n}",
            steps.len()
        )));
    }
    let mut max_lag = 0;
    for step in steps {
        max_lag = check_mvar_arguments(specs, &step.coef, lags, &step.thresholds, &step.sds)?;
    }
    if n <= max_lag {
        return Err(Error::Data(format!(
            "need more than max(lags) = {max_lag} samples, got {n}"
        )));
    }
    let p = specs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros((n, p));
    for t in 0..max_lag {
        for s in 0..p {
            values[[t, s]] =
                draw_from_potentials(specs[s], steps[t].sds[s], &steps[t].thresholds[s], &mut rng)?;
        }
    }
    for t in max_lag..n {
        for s in 0..p {
            let pot = mvar_potentials(
                specs,
                &steps[t].coef,
                lags,
                &steps[t].thresholds,
                &values,
                t,
                s,
            );
            values[[t, s]] = draw_from_potentials(specs[s], steps[t].sds[s], &pot, &mut rng)?;
        }
    }
    Dataset::new(values, specs.to_vec())
}
