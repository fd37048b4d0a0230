use tubo_core::math;
use tubo_core::models::{Forecaster, ModelKind, ModelSpec, TrainConfig, Validation, masked_l1_with_grad};
use tubo_core::preprocess::{NonBurstSeries, NormScheme, Normalizer};
use tubo_core::series::off_diagonal;
use tubo_core::DmSeries;

fn fit(kind: ModelKind, dropout: f64, series: &DmSeries, cfg: &TrainConfig) -> Forecaster {
    let spec = ModelSpec::new(kind, NormScheme::Indv).with_dropout(dropout);
    let data = NonBurstSeries::unclipped(series);
    let (norm, _) = Normalizer::fit(series, NormScheme::Indv).unwrap();
    Forecaster::train(&spec, &data, &norm, cfg, 7).unwrap()
}

/// Two pairs following x_{t+1} = 0.9 x_t from different starting levels.
fn ar1(epochs: usize) -> DmSeries {
    let cells: Vec<f64> = (0..epochs)
        .flat_map(|t| {
            let k = 0.9f64.powi(t as i32);
            [0.0, 1000.0 * k, 600.0 * k, 0.0]
        })
        .collect();
    DmSeries::dense(2, 5, cells).unwrap()
}

fn ar_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        max_epochs: 600,
        patience: 600,
        window: 8,
        batch_size: 8,
        weight_decay: 0.0,
        ..TrainConfig::default()
    }
}

#[test]
fn linear_ar_learns_ar1() {
    let series = ar1(60);
    let (train, test) = series.split(Default::default()).unwrap();
    let cfg = ar_config();
    let model = fit(ModelKind::LinearAr { lags: 2 }, 0.0, &train, &cfg);

    // held-out MAE in units of the training standard deviation
    let (_, std_rows) = Normalizer::fit(&train, NormScheme::Indv).unwrap();
    assert!(std_rows.is_empty());
    let sd: Vec<f64> = off_diagonal(2)
        .iter()
        .map(|&od| {
            let (_, s, _) = math::mean_std((0..train.len()).filter_map(|t| train.get(t, od))).unwrap();
            s
        })
        .collect();
    let (mut err, mut n) = (0.0, 0);
    for end in train.len() - 1..series.len() - 1 {
        let pred = model.predict(&series.window_at(end, cfg.window).unwrap()).unwrap();
        for (i, &od) in off_diagonal(2).iter().enumerate() {
            err += (pred.values()[od] - series.get(end + 1, od).unwrap()).abs() / sd[i];
            n += 1;
        }
    }
    assert!(!test.is_empty());
    let nmae = err / n as f64;
    assert!(nmae < 0.05, "normalized MAE {nmae}");

    // a window ending at 10 continues to about 9
    let cells: Vec<f64> = (0..8)
        .flat_map(|k| {
            let v = 10.0 * 0.9f64.powi(k - 7);
            [0.0, v, 0.6 * v, 0.0]
        })
        .collect();
    let window_series = DmSeries::dense(2, 5, cells).unwrap();
    let pred = model.predict(&window_series.window_at(7, 8).unwrap()).unwrap();
    assert!((pred.get(0, 1) - 9.0).abs() < 0.45, "forecast {}", pred.get(0, 1));
}

fn periodic(nodes: usize, epochs: usize, period: usize) -> DmSeries {
    let cells: Vec<f64> = (0..epochs)
        .flat_map(|t| (0..nodes * nodes).map(move |od| (10 + od * 3 + (t % period) * 7) as f64))
        .collect();
    DmSeries::dense(nodes, 5, cells).unwrap()
}

#[test]
fn seasonal_naive_is_exact_on_periodic_data() {
    let series = periodic(3, 40, 4);
    let cfg = TrainConfig { window: 8, ..TrainConfig::default() };
    let model = fit(ModelKind::SeasonalNaive { period: 4 }, 0.0, &series, &cfg);
    assert!(model.params.is_empty());
    assert_eq!(model.summary.epochs_run, 0);
    for end in 7..39 {
        let pred = model.predict(&series.window_at(end, 8).unwrap()).unwrap();
        assert_eq!(pred.values(), series.raw_matrix(end + 1));
        assert_eq!(pred.values(), series.raw_matrix(end + 1 - 4));
    }
    let short = series.slice(0, 20).unwrap();
    assert!(model.predict(&short.window_at(10, 6).unwrap()).is_err());
}

#[test]
fn prediction_is_deterministic() {
    let series = periodic(3, 60, 6);
    let cfg = TrainConfig { window: 8, max_epochs: 5, ..TrainConfig::default() };
    let model = fit(ModelKind::Mlp { lags: 4, hidden: 8 }, 0.1, &series, &cfg);
    let w = series.window_at(40, 8).unwrap();
    assert_eq!(model.predict(&w).unwrap(), model.predict(&w).unwrap());
    assert_eq!(model.mc_predict(&w, 10).unwrap(), model.mc_predict(&w, 10).unwrap());
}

#[test]
fn masked_target_does_not_reach_training() {
    let base = periodic(3, 50, 5);
    let values: Vec<f64> = base.cells().map(|c| c.unwrap()).collect();
    let per = 9;
    let at = 30 * per + 1;
    let mut mask = vec![true; values.len()];
    mask[at] = false;
    let mut other = values.clone();
    other[at] = 1e6;
    let a = DmSeries::from_values(3, 5, &values, &mask).unwrap();
    let b = DmSeries::from_values(3, 5, &other, &mask).unwrap();
    let cfg = TrainConfig { window: 8, max_epochs: 5, ..TrainConfig::default() };
    for kind in [ModelKind::LinearAr { lags: 4 }, ModelKind::Mlp { lags: 4, hidden: 8 }] {
        let ma = fit(kind, 0.1, &a, &cfg);
        let mb = fit(kind, 0.1, &b, &cfg);
        assert_eq!(ma.params, mb.params, "{kind}");
    }

    let kind = ModelKind::Mlp { lags: 2, hidden: 5 };
    let params = kind.init_params(6, 3);
    let inputs: Vec<f64> = (0..12).map(|k| (k as f64 * 0.37).sin()).collect();
    let mask = [true, true, false, true, true, true];
    let t1 = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6];
    let mut t2 = t1;
    t2[2] = 1e9;
    let g1 = masked_l1_with_grad(kind, 6, &params, &inputs, &t1, &mask).unwrap();
    let g2 = masked_l1_with_grad(kind, 6, &params, &inputs, &t2, &mask).unwrap();
    assert_eq!(g1, g2);
    let none = masked_l1_with_grad(kind, 6, &params, &inputs, &t1, &[false; 6]).unwrap();
    assert!(none.1.iter().all(|&g| g == 0.0));
}

#[test]
fn mc_without_dropout_is_the_point_forecast() {
    let series = periodic(3, 60, 6);
    let cfg = TrainConfig { window: 8, max_epochs: 5, ..TrainConfig::default() };
    for kind in [ModelKind::Mlp { lags: 4, hidden: 8 }, ModelKind::Recurrent { lags: 6, hidden: 4 }] {
        let model = fit(kind, 0.0, &series, &cfg);
        let w = series.window_at(50, 8).unwrap();
        let mc = model.mc_predict(&w, 20).unwrap();
        assert!(mc.std.iter().all(|&s| s == 0.0));
        assert_eq!(mc.mean.as_slice(), model.predict(&w).unwrap().values());
    }
}

#[test]
fn mc_moments_use_population_formula() {
    let (mean, std, n) = math::mean_std([1.0, 3.0]).unwrap();
    assert_eq!((mean, std, n), (2.0, 1.0, 2));
}

#[test]
fn too_short_series_is_rejected() {
    let series = periodic(2, 12, 4);
    let data = NonBurstSeries::unclipped(&series);
    let (norm, _) = Normalizer::fit(&series, NormScheme::Indv).unwrap();
    let spec = ModelSpec::new(ModelKind::LinearAr { lags: 4 }, NormScheme::Indv);
    let cfg = TrainConfig { window: 8, ..TrainConfig::default() };
    assert!(Forecaster::train(&spec, &data, &norm, &cfg, 1).is_err());
    let kfold = TrainConfig { validation: Validation::KFold { k: 1 }, ..cfg };
    assert!(kfold.validate().is_err());
}
