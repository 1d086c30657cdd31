use mixedgm::design::*;
use mixedgm::glm::*;
use mixedgm::model::*;
use mixedgm::sample::*;
use mixedgm::select::*;
use ndarray::{Array1, Array5};

fn run_node(data: &Dataset, target: usize, lags: Option<&[usize]>, seed: u64) {
    let specs = &data.specs;
    let (raw, resp) = match lags {
        Some(l) => { let (a, b, _) = build_var_design(data, target, l, false).unwrap(); (a, b) }
        None => build_mgm_design(data, target, 2, false).unwrap(),
    };
    let (design, _scale) = standardize(&raw, specs);
    let spec = specs[target];
    let (family, response) = match spec.kind {
        VarKind::Categorical => (Family::Multinomial(spec.levels), Response::Codes(resp.iter().map(|&v| v as usize).collect())),
        _ => {
            let mean = resp.sum() / resp.len() as f64;
            let sd = (resp.iter().map(|&v| (v-mean)*(v-mean)).sum::<f64>() / (resp.len() as f64 - 1.0)).sqrt();
            (Family::Gaussian, Response::Continuous(resp.mapv(|v| (v-mean)/sd)))
        }
    };
    let n = design.n_rows();
    let problem = GlmProblem::new(family, design.columns.clone(), response, Array1::ones(n), 1.0, 0.0, true).unwrap();
    let lambdas = lambda_path(&problem, 50, None).unwrap();
    for one_se in [false, true] {
        let spec_sel = SelectionSpec { method: SelectionMethod::Cv { folds: 10, one_se }, seed, ..Default::default() };
        let (idx, _) = select_lambda(&problem, &lambdas, &spec_sel).unwrap();
        let sol = fit_path(&problem, &lambdas[..=idx]).unwrap().pop().unwrap();
        // per-group aggregates
        let n_groups = design.group_meta.len();
        let mut sums = vec![0.0; n_groups];
        let mut counts = vec![0usize; n_groups];
        for (j, &g) in design.groups.iter().enumerate() {
            for c in 0..sol.coefficients.nrows() {
                sums[g] += sol.coefficients[[c, j]].abs();
                counts[g] += 1;
            }
        }
        let aggs: Vec<f64> = sums.iter().zip(&counts).map(|(&s, &c)| s / c.max(1) as f64).collect();
        let active = aggs.iter().filter(|&&a| a > 0.0).count();
        let tau = active as f64 * ((design.n_cols() as f64).ln() / n as f64).sqrt();
        println!("node {target} one_se={one_se}: idx {idx}, s0={}, groups(vars->agg): {:?}, tau={tau:.3}",
            sol.s0,
            design.group_meta.iter().zip(&aggs).map(|(gm, a)| format!("{:?}:{:.3}", gm.vars, a)).collect::<Vec<_>>());
    }
}

fn main() {
    // MGM demo, seed 1, nodes 1 and 2 (the 1-2 edge in 0-based)
    let specs = vec![
        VariableSpec::gaussian(), VariableSpec::categorical(2),
        VariableSpec::categorical(4), VariableSpec::gaussian(),
    ];
    let thresholds = vec![vec![0.0], vec![0.0; 2], vec![0.0; 4], vec![0.0]];
    let mut v23 = ndarray::ArrayD::zeros(ndarray::IxDyn(&[2, 4]));
    v23[[0, 0]] = 1.0; v23[[0, 1]] = 1.0;
    let mut v12 = ndarray::ArrayD::zeros(ndarray::IxDyn(&[1, 2]));
    v12[[0, 0]] = 1.0;
    let model = FactorModel {
        specs: specs.clone(), thresholds, sds: vec![1.0; 4],
        factors: vec![
            Factor { vars: vec![0, 3], values: ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1, 1]), 0.5) },
            Factor { vars: vec![1, 2], values: v23 },
            Factor { vars: vec![0, 1], values: v12 },
        ],
    };
    let data = sample_mgm(&model, 500, 1, 100, 10).unwrap();
    run_node(&data, 1, None, 1 + 0x9E3779B97F4A7C15u64.wrapping_mul(1));
    run_node(&data, 2, None, 1u64.wrapping_add(2u64.wrapping_mul(0x9E3779B97F4A7C15)));

    // mVAR demo node 0
    let vspecs = vec![
        VariableSpec::categorical(2), VariableSpec::categorical(2),
        VariableSpec::categorical(4), VariableSpec::categorical(4),
        VariableSpec::gaussian(), VariableSpec::gaussian(),
    ];
    let mut coef = Array5::zeros((6, 6, 4, 4, 1));
    coef[[4, 5, 0, 0, 0]] = 0.4;
    coef[[0, 4, 1, 0, 0]] = 1.0;
    coef[[0, 2, 0, 0, 0]] = 1.0; coef[[0, 2, 0, 1, 0]] = 1.0;
    coef[[0, 2, 1, 2, 0]] = 1.0; coef[[0, 2, 1, 3, 0]] = 1.0;
    let thresholds: Vec<Vec<f64>> = vspecs.iter().map(|s| vec![0.0; s.levels]).collect();
    let vdata = sample_mvar(&vspecs, &coef, &[1], &thresholds, &[1.0; 6], 200, 1).unwrap();
    run_node(&vdata, 0, Some(&[1]), 1);
}
