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
    for seed in 0..20u64 {
        let data = sample_mgm(&mgm_demo_model(), 500, seed, 100, 10).unwrap();
        // chi-square of the x2 x x3 contingency table (vars 1, 2)
        let mut table = [[0.0; 4]; 2];
        let n = data.n_rows() as f64;
        for i in 0..data.n_rows() {
            table[data.code(i, 1)][data.code(i, 2)] += 1.0;
        }
        let mut chi2 = 0.0;
        for a in 0..2 {
            for b in 0..4 {
                let ra: f64 = table[a].iter().sum();
                let cb: f64 = (0..2).map(|x| table[x][b]).sum();
                let e = ra * cb / n;
                chi2 += (table[a][b] - e) * (table[a][b] - e) / e;
            }
        }
        // OR-rule fit without threshold: which sides recovered (1,2)?
        let options = MgmOptions {
            k: 2, rule: CombineRule::Or, overparameterize: false, binary_sign: false,
            selection: SelectionSpec {
                method: SelectionMethod::cv_min(10), seed,
                threshold_mode: ThresholdMode::None,
                ..Default::default()
            },
        };
        let fit = fit_mgm(&data, &options).unwrap();
        let f12 = fit.rawfactors.iter().find(|f| f.vars == vec![1, 2]);
        let sides = f12.map(|f| {
            f.per_regression.iter().map(|a| {
                let nz = a.iter().filter(|v| **v != 0.0).count();
                format!("{:.3}({nz}nz)", a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64)
            }).collect::<Vec<_>>()
        });
        println!("seed {seed:2}: chi2(3df)={chi2:7.2} sides={sides:?}");
    }
}
