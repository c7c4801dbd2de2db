use atlas::bspline::{activation, input_scale, MixedDensitySpline};
use atlas::rng::Stream;
use atlas::{AtlasModel, Variant};
use proptest::prelude::*;

fn spline_value(s: &MixedDensitySpline, x: f64) -> f64 {
    s.banks()
        .iter()
        .map(|b| {
            let w = input_scale(b.rho());
            b.coeffs()
                .iter()
                .enumerate()
                .map(|(q, c)| c * activation(w * x + 3.0 - q as f64))
                .sum::<f64>()
        })
        .sum()
}

/// Model output written straight from the definition.
fn oracle_forward(model: &AtlasModel, x: &[f64]) -> Vec<f64> {
    let n = model.n();
    model
        .heads()
        .iter()
        .map(|head| {
            let mut out: f64 = (0..n).map(|j| spline_value(&head.f[j], x[j])).sum();
            for k in 1..=model.m() {
                let g: f64 = (0..n)
                    .map(|j| spline_value(&head.g[(k - 1) * n + j], x[j]))
                    .sum();
                let h: f64 = (0..n)
                    .map(|j| spline_value(&head.h[(k - 1) * n + j], x[j]))
                    .sum();
                out += (g.exp() - h.exp()) / (k * k) as f64;
            }
            out
        })
        .collect()
}

fn random_model(
    n: usize,
    p: usize,
    m: usize,
    r: u32,
    variant: Variant,
    scale: f64,
    seed: u64,
) -> AtlasModel {
    let mut model = AtlasModel::new(n, p, m, r, variant).unwrap();
    let mut rng = Stream::new(seed);
    model.for_each_coeff_mut(|c| *c = rng.normal_with(0.0, scale));
    model
}

fn random_point(n: usize, rng: &mut Stream) -> Vec<f64> {
    (0..n).map(|_| rng.uniform()).collect()
}

#[test]
fn forward_matches_definition() {
    let mut rng = Stream::new(21);
    for (seed, &(n, p, m, r)) in [(1, 1, 0, 0), (2, 1, 3, 2), (3, 2, 2, 4), (8, 1, 10, 4)]
        .iter()
        .enumerate()
    {
        let model = random_model(n, p, m, r, Variant::DistalOrthogonal, 0.2, seed as u64);
        for _ in 0..200 {
            let x = random_point(n, &mut rng);
            let got = model.forward(&x).unwrap();
            let want = oracle_forward(&model, &x);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn backward_matches_central_differences_of_the_oracle() {
    let mut rng = Stream::new(22);
    let step = 1e-6;
    for variant in [Variant::DistalOrthogonal, Variant::AllDensitiesTrainable] {
        let model = random_model(2, 2, 2, 2, variant, 0.3, 5);
        let upstream = [0.7, -1.3];
        for _ in 0..5 {
            let x = random_point(2, &mut rng);
            let grad = model.backward(&x, &upstream).unwrap();
            let mut work = model.clone();
            let total = model.count_trainable();
            for index in 0..total {
                let original = *work.trainable_param_mut(index).unwrap();
                let weighted = |m: &AtlasModel| -> f64 {
                    oracle_forward(m, &x)
                        .iter()
                        .zip(&upstream)
                        .map(|(y, u)| y * u)
                        .sum()
                };
                *work.trainable_param_mut(index).unwrap() = original + step;
                let plus = weighted(&work);
                *work.trainable_param_mut(index).unwrap() = original - step;
                let minus = weighted(&work);
                *work.trainable_param_mut(index).unwrap() = original;
                let numeric = (plus - minus) / (2.0 * step);
                let analytic = grad.get(index).unwrap_or(0.0);
                assert!(
                    (analytic - numeric).abs() <= 1e-6 * (1.0 + numeric.abs()),
                    "{variant} index {index}: {analytic} vs {numeric}"
                );
            }
        }
    }
}

#[test]
fn parameter_counts_follow_the_layout() {
    let model = AtlasModel::new(2, 1, 10, 4, Variant::DistalOrthogonal).unwrap();
    // 2 inputs x 21 splines x 64 coefficients in the r = 4 bank
    assert_eq!(model.count_trainable(), 2 * 21 * 64);
    assert_eq!(model.max_gradient_nnz(), 168);
    // banks rho = 0..4 hold 4 + 8 + 16 + 32 + 64 coefficients
    assert_eq!(model.count_parameters(), 2 * 21 * 124);
    let ablation = AtlasModel::new(2, 1, 10, 4, Variant::AllDensitiesTrainable).unwrap();
    assert_eq!(ablation.count_trainable(), 2 * 21 * 124);
    assert_eq!(ablation.max_gradient_nnz(), 168 * 5);
}

#[test]
fn zero_model_bound_value() {
    // 4 n u pi^2 (1 + e^0 + e^0) with n = 1, u = 2/3
    let model = AtlasModel::new(1, 1, 3, 2, Variant::DistalOrthogonal).unwrap();
    let want = 4.0 * (2.0 / 3.0) * std::f64::consts::PI.powi(2) * 3.0;
    assert!((model.gradient_bound().effective_bound() - want).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn backward_entries_are_sorted_and_sparse(
        n in 1usize..4, m in 0usize..4, r in 0u32..5, seed in any::<u64>(), ablation in any::<bool>()
    ) {
        let variant = if ablation { Variant::AllDensitiesTrainable } else { Variant::DistalOrthogonal };
        let model = random_model(n, 1, m, r, variant, 0.1, seed);
        let mut rng = Stream::new(seed ^ 1);
        let x = random_point(n, &mut rng);
        let grad = model.backward(&x, &[1.0]).unwrap();
        prop_assert!(grad.is_strictly_increasing());
        prop_assert!(grad.nnz() <= model.max_gradient_nnz());
        prop_assert!(grad.entries().iter().all(|&(i, _)| i < model.count_trainable()));
    }

    #[test]
    fn expansion_leaves_outputs_unchanged(
        n in 1usize..4, m in 0usize..4, r in 0u32..4, dm in 0usize..4, seed in any::<u64>()
    ) {
        let model = random_model(n, 2, m, r, Variant::DistalOrthogonal, 0.3, seed);
        let mut grown = model.clone();
        grown.expand_density_all();
        grown.expand_exponentials(dm);
        prop_assert_eq!(grown.r(), r + 1);
        prop_assert_eq!(grown.m(), m + dm);
        let mut rng = Stream::new(seed ^ 2);
        for _ in 0..20 {
            let x = random_point(n, &mut rng);
            prop_assert_eq!(model.forward(&x).unwrap(), grown.forward(&x).unwrap());
        }
    }

    #[test]
    fn l1_norm_is_below_the_bound(n in 1usize..4, m in 0usize..4, r in 0u32..5, seed in any::<u64>()) {
        let model = random_model(n, 1, m, r, Variant::DistalOrthogonal, 0.5, seed);
        let bound = model.gradient_bound().effective_bound();
        let mut rng = Stream::new(seed ^ 3);
        let x = random_point(n, &mut rng);
        prop_assert!(model.backward(&x, &[1.0]).unwrap().l1_norm() < bound);
    }
}
