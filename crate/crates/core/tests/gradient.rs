use hiermnl::datagen::{sample_labels, sample_prior_state, Covariates, Dataset};
use hiermnl::models::{GammaPrior, ModelKind, ModelState, Priors};
use hiermnl::protocols::{DOCUMENT_TREE, EIGHT_CLASS_TREE, FOUR_CLASS_TREE};
use hiermnl::samplers::RngStream;
use hiermnl::ClassHierarchy;
use rand::Rng;

fn priors(ard: bool) -> Priors {
    let g = |a, b| GammaPrior::new(a, b).unwrap();
    Priors {
        intercept: g(1.0, 10.0),
        flat: g(1.0, 1.0),
        by_depth: vec![g(1.0, 5.0), g(1.0, 20.0)],
        ard: ard.then(|| g(1.0, 10.0)),
    }
}

fn instance(kind: ModelKind, tree: &str, p: usize, n: usize, ard: bool, seed: u64) -> (ClassHierarchy, ModelState, Dataset) {
    let h = ClassHierarchy::parse(tree).unwrap();
    let mut rng = RngStream::new(seed, 0);
    let pr = priors(ard);
    let state = sample_prior_state(kind, &h, p, &pr, &mut rng);
    let x = Covariates::uniform(p, -2.0, 2.0).sample(n, &mut rng);
    // labels from a different draw so the gradient is not near zero
    let other = sample_prior_state(kind, &h, p, &pr, &mut rng);
    let y = sample_labels(&other, &h, x.view(), &mut rng).unwrap();
    let data = Dataset::new(x, y, h.labels().to_vec()).unwrap();
    (h, state, data)
}

/// Max relative error of the analytic gradient against central differences.
fn max_rel_error(h: &ClassHierarchy, state: &ModelState, data: &Dataset) -> f64 {
    let (_, grad) = state.log_posterior_and_gradient(h, data).unwrap();
    let coef = state.coefficients();
    let mut worst: f64 = 0.0;
    for k in 0..coef.len() {
        let step = 1e-5 * coef[k].abs().max(1.0);
        let eval = |v: f64| {
            let mut c = coef.clone();
            c[k] = v;
            let mut s = state.clone();
            s.set_coefficients(&c).unwrap();
            s.log_posterior_and_gradient(h, data).unwrap().0
        };
        let fd = (eval(coef[k] + step) - eval(coef[k] - step)) / (2.0 * step);
        let err = (grad[k] - fd).abs() / grad[k].abs().max(fd.abs()).max(1.0);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn gradients_match_central_differences_on_random_instances() {
    let trees = [FOUR_CLASS_TREE, EIGHT_CLASS_TREE];
    let mut meta = RngStream::new(99, 0);
    for i in 0..10u64 {
        for kind in ModelKind::ALL {
            let tree = trees[(i % 2) as usize];
            let p = meta.random_range(1..5);
            let ard = i % 3 == 0;
            let (h, state, data) = instance(kind, tree, p, 40, ard, 1000 + i);
            let err = max_rel_error(&h, &state, &data);
            assert!(err < 1e-5, "{kind} instance {i}: relative error {err:e}");
        }
    }
}

#[test]
fn gradient_on_large_hierarchy() {
    let (h, state, data) = instance(ModelKind::CorMnl, DOCUMENT_TREE, 3, 60, true, 7);
    assert!(max_rel_error(&h, &state, &data) < 1e-5);
}
