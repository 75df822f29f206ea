use criterion::{criterion_group, criterion_main, Criterion};
use metafolio::allocators::{hrp_pipeline, nrp_weights};
use metafolio::backtest::run_backtest;
use metafolio::covariance::{fit_dcc, sample_covariance, simulate_ccc_garch, EstimatorKind, GarchParams};
use metafolio::features::{assemble_features, FeatureInputs, FEATURE_NAMES};
use metafolio::learner::train_gbt;
use metafolio::{
    BacktestConfig, CovarianceSettings, FeatureVector, HrpSettings, HyperParams, LearnerSettings, ReturnPanel,
    SearchBox, TrainingExample, WindowConfig,
};
use nalgebra::DMatrix;

fn panel(n: usize, len: usize, seed: u64) -> ReturnPanel {
    let garch = vec![
        GarchParams {
            omega: 2e-6,
            alpha: 0.06,
            beta: 0.9,
        };
        n
    ];
    let corr = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.4 });
    simulate_ccc_garch(&garch, &corr, len, seed).expect("valid simulation")
}

fn dcc(c: &mut Criterion) {
    let window = panel(5, 250, 1);
    let mut group = c.benchmark_group("dcc");
    group.sample_size(10);
    group.bench_function("fit_n5_t250", |b| b.iter(|| fit_dcc(&window).unwrap()));
    group.finish();
}

fn static_returns(window: &ReturnPanel, w: &[f64]) -> Vec<f64> {
    (0..window.len()).map(|t| window.row(t).iter().zip(w).map(|(r, x)| r * x).sum()).collect()
}

fn features(c: &mut Criterion) {
    let full = panel(8, 756, 2);
    let est = sample_covariance(&full).unwrap();
    let hrp = hrp_pipeline(&est, &HrpSettings::default()).unwrap();
    let nrp = nrp_weights(&est).unwrap();
    let recent = full.window(756 - 63, 756);
    let hrp_ret = static_returns(&recent, hrp.weights.weights());
    let nrp_ret = static_returns(&recent, nrp.weights());
    let inputs = FeatureInputs {
        hrp_returns: &hrp_ret,
        nrp_returns: &nrp_ret,
        window: &recent,
        estimate: &est,
        hrp: &hrp,
        estimation_len: 756,
    };
    c.bench_function("assemble_features_n8", |b| b.iter(|| assemble_features(&inputs).unwrap()));
}

fn gbt(c: &mut Criterion) {
    let dates = panel(1, 300, 3).dates().to_vec();
    let examples: Vec<TrainingExample> = (0..300)
        .map(|i| {
            let values = FEATURE_NAMES
                .iter()
                .enumerate()
                .map(|(k, name)| (*name, ((i * (k + 3)) % 97) as f64 / 97.0));
            let features = FeatureVector::from_pairs(values).unwrap();
            let target = features.get("meanCORR").unwrap() - 0.5 * features.get("sgv").unwrap();
            TrainingExample {
                as_of: dates[i],
                features,
                target,
            }
        })
        .collect();
    let params = HyperParams::default();
    let mut group = c.benchmark_group("gbt");
    group.sample_size(20);
    group.bench_function("train_300x20_100_trees", |b| b.iter(|| train_gbt(&examples, &params, 1).unwrap()));
    group.finish();
}

fn backtest(c: &mut Criterion) {
    let returns = panel(4, 1000, 4);
    let config = BacktestConfig {
        window: WindowConfig {
            t_r: 250,
            t_m: 63,
            t_h: 21,
            t_a: 21,
        },
        covariance: CovarianceSettings {
            estimator: EstimatorKind::Sample,
            ..CovarianceSettings::default()
        },
        learner: LearnerSettings {
            budget: 3,
            search: SearchBox {
                n_trees: [20, 60],
                ..SearchBox::default()
            },
            ..LearnerSettings::default()
        },
        ..BacktestConfig::default()
    };
    let mut group = c.benchmark_group("backtest");
    group.sample_size(10);
    group.bench_function("walk_forward_n4_sample_cov", |b| {
        b.iter(|| run_backtest(&returns, &config, 1, 1).unwrap())
    });
    group.finish();
}

criterion_group!(benches, dcc, features, gbt, backtest);
criterion_main!(benches);
