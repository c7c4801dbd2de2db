//! Sampled checks of the model's structural guarantees: gradient sparsity,
//! bounded gradient norm, exact orthogonality of distant gradients,
//! output-preserving expansion, and agreement of the analytic gradient with
//! central finite differences.

use serde::{Deserialize, Serialize};

use crate::bspline::support_width;
use crate::error::{AtlasError, Result};
use crate::model::{AtlasModel, Variant};
use crate::rng::Stream;

/// Relative-error threshold for the finite-difference check.
pub const FD_REL_TOL: f64 = 1e-5;
/// Denominator floor for finite-difference relative error. Below this magnitude
/// the comparison is effectively absolute, since the difference quotient of the
/// full model output carries rounding noise of order `ulp(|A|) / step`.
pub const FD_DENOM_FLOOR: f64 = 1e-3;
/// Largest output change tolerated across an expansion.
pub const EXPANSION_TOL: f64 = 1e-12;
/// Rejection-sampling draws allowed per orthogonality pair.
pub const MAX_REJECTION_ATTEMPTS: usize = 10_000;
/// Points compared across expansion.
pub const EXPANSION_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyId {
    Sparsity,
    GradientBound,
    Orthogonality,
    Expansion,
    FiniteDifference,
}

impl PropertyId {
    fn stream_tag(self) -> u64 {
        match self {
            PropertyId::Sparsity => 1,
            PropertyId::GradientBound => 2,
            PropertyId::Orthogonality => 3,
            PropertyId::Expansion => 4,
            PropertyId::FiniteDifference => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: PropertyId,
    pub samples: usize,
    pub violations: usize,
    pub worst_value: f64,
    pub bound_used: f64,
    pub pass: bool,
}

impl PropertyReport {
    fn new(
        property: PropertyId,
        samples: usize,
        violations: usize,
        worst_value: f64,
        bound_used: f64,
    ) -> Self {
        Self {
            property,
            samples,
            violations,
            worst_value,
            bound_used,
            pass: violations == 0,
        }
    }
}

fn random_point(n: usize, rng: &mut Stream) -> Vec<f64> {
    (0..n).map(|_| rng.uniform()).collect()
}

fn unit_upstream(p: usize, o: usize) -> Vec<f64> {
    let mut up = vec![0.0; p];
    up[o] = 1.0;
    up
}

/// Nonzero gradient entries per output must not exceed `4 n (2M+1)`
/// (times `r + 1` when every bank is trainable).
pub fn check_sparsity(
    model: &AtlasModel,
    num_points: usize,
    rng: &mut Stream,
) -> Result<PropertyReport> {
    let bound = model.max_gradient_nnz_per_output();
    let mut worst = 0usize;
    let mut violations = 0;
    for _ in 0..num_points {
        let x = random_point(model.n(), rng);
        let trace = model.trace(&x)?;
        for o in 0..model.p() {
            let nnz = trace.gradient(model, &unit_upstream(model.p(), o)).nnz();
            worst = worst.max(nnz);
            if nnz > bound {
                violations += 1;
            }
        }
    }
    Ok(PropertyReport::new(
        PropertyId::Sparsity,
        num_points,
        violations,
        worst as f64,
        bound as f64,
    ))
}

/// Per-output gradient L1 norm must stay strictly below the bound from
/// [`AtlasModel::gradient_bound`].
pub fn check_gradient_bound(
    model: &AtlasModel,
    num_points: usize,
    rng: &mut Stream,
) -> Result<PropertyReport> {
    let bound = model.gradient_bound().effective_bound();
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..num_points {
        let x = random_point(model.n(), rng);
        let trace = model.trace(&x)?;
        for o in 0..model.p() {
            let l1 = trace
                .gradient(model, &unit_upstream(model.p(), o))
                .l1_norm();
            worst = worst.max(l1);
            if !(l1 < bound) {
                violations += 1;
            }
        }
    }
    Ok(PropertyReport::new(
        PropertyId::GradientBound,
        num_points,
        violations,
        worst,
        bound,
    ))
}

/// Smallest coordinate gap that guarantees disjoint trainable supports.
pub fn orthogonality_gap(model: &AtlasModel) -> f64 {
    let rho = match model.variant() {
        Variant::DistalOrthogonal => model.r(),
        Variant::AllDensitiesTrainable => 0,
    };
    support_width(rho)
}

/// Draws pairs with `min_j |x_j - y_j| >= gap` and requires the gradient
/// inner product to be exactly zero.
pub fn check_orthogonality(
    model: &AtlasModel,
    num_pairs: usize,
    gap: f64,
    rng: &mut Stream,
) -> Result<PropertyReport> {
    let n = model.n();
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..num_pairs {
        let mut attempts = 0;
        let (x, y) = loop {
            if attempts == MAX_REJECTION_ATTEMPTS {
                return Err(AtlasError::RejectionExhausted { attempts, gap });
            }
            attempts += 1;
            let x = random_point(n, rng);
            let y = random_point(n, rng);
            let min_gap = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b).abs())
                .fold(f64::INFINITY, f64::min);
            if min_gap >= gap {
                break (x, y);
            }
        };
        let ip = model.grad_inner_product(&x, &y)?;
        if ip != 0.0 {
            violations += 1;
            worst = worst.max(ip.abs());
        }
    }
    Ok(PropertyReport::new(
        PropertyId::Orthogonality,
        num_pairs,
        violations,
        worst,
        gap,
    ))
}

/// Largest output change over `points` when comparing `before` and `after`.
pub fn max_output_change(
    before: &AtlasModel,
    after: &AtlasModel,
    points: &[Vec<f64>],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in points {
        let a = before.forward(x)?;
        let b = after.forward(x)?;
        for (u, v) in a.iter().zip(&b) {
            worst = worst.max((u - v).abs());
        }
    }
    Ok(worst)
}

/// Applies density expansion, exponential expansion (+2), and both in sequence,
/// comparing outputs with the original at random points.
pub fn check_expansion(model: &AtlasModel, rng: &mut Stream) -> Result<PropertyReport> {
    let points: Vec<Vec<f64>> = (0..EXPANSION_POINTS)
        .map(|_| random_point(model.n(), rng))
        .collect();
    let mut density = model.clone();
    density.expand_density_all();
    let mut exponentials = model.clone();
    exponentials.expand_exponentials(2);
    let mut both = density.clone();
    both.expand_exponentials(2);
    let mut twice = both.clone();
    twice.expand_density_all();
    twice.expand_exponentials(2);

    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for expanded in [&density, &exponentials, &both, &twice] {
        let delta = max_output_change(model, expanded, &points)?;
        worst = worst.max(delta);
        if delta > EXPANSION_TOL {
            violations += 1;
        }
    }
    Ok(PropertyReport::new(
        PropertyId::Expansion,
        EXPANSION_POINTS,
        violations,
        worst,
        EXPANSION_TOL,
    ))
}

/// Relative error with a magnitude floor; see [`FD_DENOM_FLOOR`].
pub fn fd_relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_DENOM_FLOOR)
}

/// Central differences of the summed outputs with respect to one trainable parameter.
pub fn central_difference(
    model: &mut AtlasModel,
    x: &[f64],
    index: usize,
    step: f64,
) -> Result<f64> {
    let original = *model
        .trainable_param_mut(index)
        .ok_or_else(|| AtlasError::invalid(format!("no trainable parameter {index}")))?;
    let eval = |m: &AtlasModel| -> Result<f64> { Ok(m.forward(x)?.iter().sum()) };
    *model.trainable_param_mut(index).unwrap() = original + step;
    let plus = eval(model);
    *model.trainable_param_mut(index).unwrap() = original - step;
    let minus = eval(model);
    *model.trainable_param_mut(index).unwrap() = original;
    Ok((plus? - minus?) / (2.0 * step))
}

/// Compares every nonzero analytic partial at each sampled point with central differences.
pub fn check_finite_diff(
    model: &AtlasModel,
    num_points: usize,
    step: f64,
    rng: &mut Stream,
) -> Result<PropertyReport> {
    if !(step > 0.0) {
        return Err(AtlasError::invalid(
            "finite-difference step must be positive",
        ));
    }
    let mut work = model.clone();
    let ones = vec![1.0; model.p()];
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..num_points {
        let x = random_point(model.n(), rng);
        let grad = model.backward(&x, &ones)?;
        for &(index, analytic) in grad.entries() {
            let numeric = central_difference(&mut work, &x, index, step)?;
            let err = fd_relative_error(analytic, numeric);
            worst = worst.max(err);
            if !(err < FD_REL_TOL) {
                violations += 1;
            }
        }
    }
    Ok(PropertyReport::new(
        PropertyId::FiniteDifference,
        num_points,
        violations,
        worst,
        FD_REL_TOL,
    ))
}

/// Sample sizes for [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub points: usize,
    pub pairs: usize,
    pub fd_points: usize,
    pub fd_step: f64,
    /// Orthogonality gap; `None` uses the support width of the trainable bank.
    pub gap: Option<f64>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            points: 1000,
            pairs: 10_000,
            fd_points: 20,
            fd_step: 1e-5,
            gap: None,
        }
    }
}

/// Runs every check with its own substream of `seed`.
pub fn run_suite(
    model: &AtlasModel,
    seed: u64,
    config: &SuiteConfig,
) -> Result<Vec<PropertyReport>> {
    let stream = |id: PropertyId| Stream::substream(seed, &[0x7665_7269_6679, id.stream_tag()]);
    let gap = config.gap.unwrap_or_else(|| orthogonality_gap(model));
    Ok(vec![
        check_sparsity(model, config.points, &mut stream(PropertyId::Sparsity))?,
        check_gradient_bound(model, config.points, &mut stream(PropertyId::GradientBound))?,
        check_orthogonality(
            model,
            config.pairs,
            gap,
            &mut stream(PropertyId::Orthogonality),
        )?,
        check_expansion(model, &mut stream(PropertyId::Expansion))?,
        check_finite_diff(
            model,
            config.fd_points,
            config.fd_step,
            &mut stream(PropertyId::FiniteDifference),
        )?,
    ])
}
