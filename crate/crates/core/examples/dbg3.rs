use mixedgm::mgm::*;
use mixedgm::model::*;
use mixedgm::sample::*;
use mixedgm::select::*;
use ndarray::{ArrayD, IxDyn};

fn mgm_demo_model() -> FactorModel {
    let specs = vec![
        VariableSpec::gaussian(), VariableSpec::categorical(2),
        VariableSpec::categorical(4), VariableSpec::gaussian(),
    ];
    let thresholds = vec![vec![0.0], vec![0.0; 2], vec![0.0; 4], vec![0.0]];
    let mut v23 = ArrayD::zeros(IxDyn(&[2, 4]));
    v23[[0, 0]] = 1.0; v23[[0, 1]] = 1.0;
    let mut v12 = ArrayD::zeros(IxDyn(&[1, 2]));
    v12[[0, 0]] = 1.0;
    FactorModel {
        specs, thresholds, sds: vec![1.0; 4],
        factors: vec![
            Factor { vars: vec![0, 3], values: ArrayD::from_elem(IxDyn(&[1, 1]), 0.5) },
            Factor { vars: vec![1, 2], values: v23 },
            Factor { vars: vec![0, 1], values: v12 },
        ],
    }
}

fn main() {
    for seed in [1u64, 6, 9, 11, 12, 15] {
        let data = sample_mgm(&mgm_demo_model(), 500, seed, 100, 10).unwrap();
        let options = MgmOptions {
            k: 2, rule: CombineRule::And, overparameterize: false, binary_sign: false,
            selection: SelectionSpec {
                method: SelectionMethod::cv_min(10), seed,
                ..Default::default()
            },
        };
        let fit = fit_mgm(&data, &options).unwrap();
        println!("seed {seed}:");
        for f in &fit.rawfactors {
            let sides: Vec<String> = f.per_regression.iter()
                .map(|a| format!("{:.3}", a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64))
                .collect();
            println!("  factor {:?} w={:.3} sides={:?}", f.vars, f.weight, sides);
        }
    }
}
