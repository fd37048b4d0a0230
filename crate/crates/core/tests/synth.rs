use tubo_core::preprocess::{BurstDetector, split_burst};
use tubo_core::series::{od_index, off_diagonal};
use tubo_core::synth::{BurstPlan, PlantedBurst, SynthSpec, generate, mixed_regime};

fn quiet(seed: u64) -> SynthSpec {
    SynthSpec {
        nodes: 4,
        epochs: 480,
        mean_total: 1200.0,
        spatial_variance: 0.5 * 100.0 * 100.0,
        temporal_variance: 0.05 * 1200.0 * 1200.0,
        period: 48,
        noise_fraction: 0.0,
        noise_ar: 0.0,
        cell_noise: 0.0,
        bursts: BurstPlan::None,
        window: 12,
        granularity_minutes: 5,
        seed,
    }
}

fn totals(spec: &SynthSpec) -> Vec<f64> {
    let g = generate(spec).unwrap();
    (0..g.series.len()).map(|t| g.series.raw_matrix(t).iter().sum()).collect()
}

fn moments(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64)
}

#[test]
fn noiseless_variance_matches_target() {
    let spec = quiet(1);
    let (alpha, noise) = spec.modulation().unwrap();
    assert_eq!(noise, 0.0);
    // a full-period sinusoid has variance alpha^2 mean^2 / 2
    assert!((alpha * alpha * spec.mean_total.powi(2) / 2.0 - spec.temporal_variance).abs() < 1e-6);
    let (mean, var) = moments(&totals(&spec));
    assert!((mean - spec.mean_total).abs() < 0.01 * spec.mean_total);
    assert!((var - spec.temporal_variance).abs() < 0.01 * spec.temporal_variance, "{var}");
}

#[test]
fn noisy_variance_is_close() {
    let mut spec = quiet(2);
    spec.epochs = 4800;
    spec.noise_fraction = 0.3;
    spec.noise_ar = 0.5;
    let (_, var) = moments(&totals(&spec));
    assert!((var - spec.temporal_variance).abs() < 0.1 * spec.temporal_variance, "{var}");
}

#[test]
fn spatial_variance_matches_target() {
    let spec = quiet(3);
    let g = generate(&spec).unwrap();
    let pairs = off_diagonal(4);
    let means: Vec<f64> = pairs
        .iter()
        .map(|&od| (0..g.series.len()).map(|t| g.series.get(t, od).unwrap()).sum::<f64>() / g.series.len() as f64)
        .collect();
    let (_, var) = moments(&means);
    assert!((var - spec.spatial_variance).abs() < 0.01 * spec.spatial_variance, "{var}");
}

#[test]
fn planted_burst_is_the_only_detection() {
    let mut spec = quiet(4);
    let od = od_index(4, 2, 1);
    spec.bursts = BurstPlan::Explicit { bursts: vec![PlantedBurst { epoch: 100, src: 2, dst: 1, multiplier: 10.0 }] };
    let g = generate(&spec).unwrap();
    assert_eq!(g.bursts.count(), 1);
    assert!(g.bursts.get(100, od));
    let split = split_burst(&g.series, 12, &BurstDetector::default()).unwrap();
    assert_eq!(split.bursts, g.bursts);
}

#[test]
fn undetectable_plant_is_rejected() {
    let mut spec = quiet(5);
    spec.bursts = BurstPlan::Explicit { bursts: vec![PlantedBurst { epoch: 3, src: 0, dst: 1, multiplier: 10.0 }] };
    let err = generate(&spec).unwrap_err().to_string();
    assert!(err.contains("not detectable"), "{err}");
}

#[test]
fn infeasible_alpha_names_the_constraint() {
    let mut spec = quiet(6);
    spec.temporal_variance = spec.mean_total.powi(2);
    let err = generate(&spec).unwrap_err().to_string();
    assert!(err.contains("alpha"), "{err}");
}

#[test]
fn seeds_are_reproducible() {
    let mut spec = quiet(7);
    spec.noise_fraction = 0.2;
    spec.cell_noise = 0.05;
    assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    let mut other = spec.clone();
    other.seed = 8;
    assert_ne!(generate(&spec).unwrap().series, generate(&other).unwrap().series);
}

#[test]
fn regimes_concatenate() {
    let mut a = quiet(9);
    a.epochs = 100;
    let mut b = quiet(10);
    b.epochs = 150;
    b.bursts = BurstPlan::Explicit { bursts: vec![PlantedBurst { epoch: 60, src: 0, dst: 3, multiplier: 10.0 }] };
    let mut c = quiet(11);
    c.epochs = 120;
    let g = mixed_regime(&[a.clone(), b, c]).unwrap();
    assert_eq!(g.series.len(), 370);
    assert_eq!(g.truth.boundaries, vec![100, 250]);
    assert_eq!(g.truth.bursts.len(), 1);
    assert_eq!(g.truth.bursts[0].epoch, 160);
    assert!(g.bursts.get(160, od_index(4, 0, 3)));

    let mut wrong = quiet(12);
    wrong.nodes = 5;
    assert!(mixed_regime(&[a, wrong]).is_err());
    assert!(mixed_regime(&[]).is_err());
}
