use hiermnl::datagen::generate_replication;
use hiermnl::eval::{build_comparison, evaluate, evaluate_probs, paired_t_test, ComparisonTable, EvalResult, Metric};
use hiermnl::inference::{fit, predict_batch, FitConfig};
use hiermnl::models::ModelKind;
use hiermnl::protocols::Protocol;
use hiermnl::samplers::RngStream;
use proptest::prelude::*;

/// Two-sided p-value of Student's t by Simpson integration of the density.
fn t_two_sided_by_quadrature(t: f64, df: f64) -> f64 {
    let ln_gamma = |x: f64| statrs::function::gamma::ln_gamma(x);
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
    let pdf = |u: f64| c * (1.0 + u * u / df).powf(-(df + 1.0) / 2.0);
    let n = 200_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    1.0 - 2.0 * s * h / 3.0
}

#[test]
fn hand_vector_t_test() {
    let d = [0.1, 0.2, 0.0, 0.3, 0.1];
    let zeros = [0.0; 5];
    let (t, p) = paired_t_test(&d, &zeros).unwrap();
    // mean 0.14, sample variance 0.052 / 4
    let want_t = 0.14 / (0.013f64 / 5.0).sqrt();
    assert!((t - want_t).abs() < 1e-12, "{t} vs {want_t}");
    assert!((t - 2.7456258919345).abs() < 1e-9);
    let want_p = t_two_sided_by_quadrature(want_t, 4.0);
    assert!((p - want_p).abs() < 1e-9, "{p} vs {want_p}");
}

#[test]
fn t_test_against_quadrature_on_many_vectors() {
    let mut rng = RngStream::new(8, 0);
    use rand::Rng;
    for n in [2usize, 3, 6, 10, 25] {
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (t, p) = paired_t_test(&a, &b).unwrap();
        let want = t_two_sided_by_quadrature(t, (n - 1) as f64);
        assert!((p - want).abs() < 1e-7, "n={n}: {p} vs {want}");
    }
}

#[test]
fn evaluate_matches_recomputation_from_saved_probabilities() {
    let proto = Protocol::by_name("sim-n50").unwrap();
    let spec = proto.sim_spec(ModelKind::Mnl, 1, 4);
    let rep = generate_replication(&spec, &mut RngStream::new(4, 0)).unwrap();
    let test = rep.test.select(&(0..500).collect::<Vec<_>>());
    let cfg = FitConfig {
        iterations: 80,
        burn_in: 20,
        ..FitConfig::default()
    };
    let chain = fit(ModelKind::TreeMnl, &proto.hierarchy, &rep.train, &proto.priors, &cfg).unwrap();
    let got = evaluate(&chain, &proto.hierarchy, &test).unwrap();

    let probs = predict_batch(&chain, &proto.hierarchy, test.x.view()).unwrap();
    let saved: Vec<Vec<f64>> = serde_json::from_str(&serde_json::to_string(&probs.outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()).unwrap();
    let mut lp = 0.0;
    let mut wrong = 0;
    for (row, &y) in saved.iter().zip(&test.y) {
        lp += row[y].ln();
        let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        wrong += usize::from(best != y);
    }
    assert!((got.avg_log_prob - lp / 500.0).abs() < 1e-12);
    assert_eq!(got.error_rate, wrong as f64 / 500.0);
    assert_eq!(got.n_test, 500);

    let shuffled: Vec<usize> = (0..500).rev().collect();
    let again = evaluate(&chain, &proto.hierarchy, &test.select(&shuffled)).unwrap();
    assert!((again.avg_log_prob - got.avg_log_prob).abs() < 1e-12);
    assert_eq!(again.error_rate, got.error_rate);
}

#[test]
fn empty_test_set_is_an_error() {
    let proto = Protocol::by_name("sim-n50").unwrap();
    let spec = proto.sim_spec(ModelKind::Mnl, 1, 4);
    let rep = generate_replication(&spec, &mut RngStream::new(4, 0)).unwrap();
    let cfg = FitConfig {
        iterations: 10,
        burn_in: 5,
        ..FitConfig::default()
    };
    let chain = fit(ModelKind::Mnl, &proto.hierarchy, &rep.train, &proto.priors, &cfg).unwrap();
    assert!(evaluate(&chain, &proto.hierarchy, &rep.test.select(&[])).is_err());
}

#[test]
fn comparison_grid_is_reproducible() {
    let proto = Protocol::by_name("sim-n50").unwrap();
    let specs: Vec<_> = ModelKind::ALL.iter().map(|&g| proto.sim_spec(g, 2, 31)).collect();
    let cfg = FitConfig {
        iterations: 40,
        burn_in: 10,
        ..FitConfig::default()
    };
    let a = build_comparison(&specs, &ModelKind::ALL, &cfg).unwrap();
    let b = build_comparison(&specs, &ModelKind::ALL, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_reps(), 2);
    assert_eq!(a.results.len(), 3);
    for cell in a.results.iter().flatten().flatten() {
        assert!(cell.avg_log_prob <= 0.0 && (0.0..=1.0).contains(&cell.error_rate));
    }
}

fn grid(values: &[f64], gens: usize, reps: usize) -> ComparisonTable {
    let fitters = ModelKind::ALL.to_vec();
    let results = (0..gens)
        .map(|g| {
            (0..3)
                .map(|f| {
                    (0..reps)
                        .map(|r| {
                            let v = values[(g * 3 + f) * reps + r];
                            EvalResult {
                                avg_log_prob: -v,
                                error_rate: v / 4.0,
                                n_test: 1,
                            }
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ComparisonTable::new(fitters[..gens].to_vec(), fitters, results, None).unwrap()
}

proptest! {
    #[test]
    fn best_flags_match_a_brute_force_scan(values in prop::collection::vec(0.0f64..3.0, 27)) {
        let t = grid(&values, 3, 3);
        for g in 0..3 {
            let means: Vec<f64> = (0..3).map(|f| (0..3).map(|r| -values[(g * 3 + f) * 3 + r]).sum::<f64>() / 3.0).collect();
            let mut best = 0;
            for f in 0..3 {
                if means[f] > means[best] {
                    best = f;
                }
            }
            prop_assert_eq!(t.best(g, Metric::AvgLogProb), best);
            prop_assert_eq!(t.diagonal_best(Metric::AvgLogProb)[g], best == g);
        }
    }

    #[test]
    fn t_test_is_antisymmetric(a in prop::collection::vec(-5.0f64..5.0, 2..20), shift in -1.0f64..1.0) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 + shift + (i as f64).sin()).collect();
        if let Ok((t1, p1)) = paired_t_test(&a, &b) {
            let (t2, p2) = paired_t_test(&b, &a).unwrap();
            prop_assert_eq!(t1, -t2);
            prop_assert!((p1 - p2).abs() < 1e-15);
        }
    }
}

#[test]
fn evaluate_probs_known_values() {
    let probs = ndarray::array![[0.5, 0.5], [0.9, 0.1]];
    let r = evaluate_probs(probs.view(), &[1, 0]).unwrap();
    assert!((r.avg_log_prob - (0.5f64.ln() + 0.9f64.ln()) / 2.0).abs() < 1e-15);
    // the tie goes to class 0, so case 1 is an error
    assert_eq!(r.error_rate, 0.5);
}
