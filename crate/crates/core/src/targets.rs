//! Synthetic regression targets and dataset sampling.

use serde::{Deserialize, Serialize};

use crate::bspline::check_unit;
use crate::error::{AtlasError, Result};
use crate::rng::Stream;

/// Number of radial basis functions in a sampled target.
pub const RBF_COUNT: usize = 1000;
/// Mean of the exponential distribution the RBF scales are drawn from.
pub const RBF_SCALE_MEAN: f64 = 10.0;

/// A scalar function on the unit hypercube.
pub trait Target: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<f64>;
}

fn check_point(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(AtlasError::Shape {
            what: "target input",
            expected: n,
            actual: x.len(),
        });
    }
    x.iter()
        .enumerate()
        .try_for_each(|(j, &v)| check_unit(j, v))
}

/// Weighted sum of Gaussian bumps `w * exp(-(s * |x - c|)^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfTarget {
    n: usize,
    /// Row-major `count x n`.
    centers: Vec<f64>,
    scales: Vec<f64>,
    weights: Vec<f64>,
}

impl RbfTarget {
    pub fn new(n: usize, centers: Vec<f64>, scales: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(AtlasError::invalid(
                "RBF target dimension must be at least 1",
            ));
        }
        let count = scales.len();
        if weights.len() != count || centers.len() != count * n {
            return Err(AtlasError::invalid(
                "RBF centers, scales and weights disagree in length",
            ));
        }
        if scales.iter().any(|&s| !(s > 0.0)) {
            return Err(AtlasError::invalid("RBF scales must be positive"));
        }
        if centers.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(AtlasError::invalid(
                "RBF centers must lie in the unit hypercube",
            ));
        }
        Ok(Self {
            n,
            centers,
            scales,
            weights,
        })
    }

    /// Draws `count` bumps: all centers, then all scales, then all weights.
    pub fn sample_with_count(n: usize, count: usize, rng: &mut Stream) -> Result<Self> {
        if n == 0 {
            return Err(AtlasError::invalid(
                "RBF target dimension must be at least 1",
            ));
        }
        let centers = (0..count * n).map(|_| rng.uniform()).collect();
        // exponential(10) can return exactly zero only when uniform() == 0
        let scales = (0..count)
            .map(|_| rng.exponential(RBF_SCALE_MEAN).max(f64::MIN_POSITIVE))
            .collect();
        let weights = (0..count).map(|_| rng.normal()).collect();
        Self::new(n, centers, scales, weights)
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((c, &s), &w) in self
            .centers
            .chunks_exact(self.n)
            .zip(&self.scales)
            .zip(&self.weights)
        {
            let d2: f64 = c.iter().zip(x).map(|(ci, xi)| (xi - ci) * (xi - ci)).sum();
            acc += w * (-(s * s) * d2).exp();
        }
        acc
    }
}

/// 1000 bumps with uniform centers, exponential(mean 10) scales and standard normal weights.
pub fn sample_rbf_target(n: usize, rng: &mut Stream) -> Result<RbfTarget> {
    RbfTarget::sample_with_count(n, RBF_COUNT, rng)
}

impl Target for RbfTarget {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(self.n, x)?;
        Ok(self.eval_unchecked(x))
    }
}

/// A base target with an axis-aligned open cube replaced by another target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchedTarget {
    pub base: RbfTarget,
    pub region_lo: Vec<f64>,
    pub width: f64,
    pub replacement: RbfTarget,
}

impl PatchedTarget {
    pub fn new(
        base: RbfTarget,
        region_lo: Vec<f64>,
        width: f64,
        replacement: RbfTarget,
    ) -> Result<Self> {
        let n = base.dim();
        if replacement.dim() != n || region_lo.len() != n {
            return Err(AtlasError::invalid(
                "patched target components disagree in dimension",
            ));
        }
        if !(width > 0.0 && width < 1.0) {
            return Err(AtlasError::invalid(format!(
                "region width {width} not in (0, 1)"
            )));
        }
        if region_lo.iter().any(|&lo| lo < 0.0 || lo + width > 1.0) {
            return Err(AtlasError::invalid(
                "update region must lie inside the unit hypercube",
            ));
        }
        Ok(Self {
            base,
            region_lo,
            width,
            replacement,
        })
    }

    /// Strict containment in the open update region.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.region_lo)
            .all(|(&xi, &lo)| lo < xi && xi < lo + self.width)
    }

    pub fn region(&self) -> SampleBox {
        SampleBox {
            lo: self.region_lo.clone(),
            hi: self.region_lo.iter().map(|lo| lo + self.width).collect(),
        }
    }
}

impl Target for PatchedTarget {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(self.dim(), x)?;
        if self.contains(x) {
            Ok(self.replacement.eval_unchecked(x))
        } else {
            Ok(self.base.eval_unchecked(x))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AnalyticId {
    A,
    B,
    C,
    D,
}

impl std::str::FromStr for AnalyticId {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(AnalyticId::A),
            "B" => Ok(AnalyticId::B),
            "C" => Ok(AnalyticId::C),
            "D" => Ok(AnalyticId::D),
            _ => Err(AtlasError::invalid(format!("unknown experiment id {s:?}"))),
        }
    }
}

impl std::fmt::Display for AnalyticId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Angle convention for the spiral target of experiment A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    /// `atan2((x1 - 1/2)^2, (x2 - 1/2)^2)`.
    #[default]
    AsWritten,
    /// `atan2(x2 - 1/2, x1 - 1/2)`.
    Atan2Unsquared,
}

impl std::str::FromStr for ThetaMode {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_written" => Ok(ThetaMode::AsWritten),
            "atan2_unsquared" => Ok(ThetaMode::Atan2Unsquared),
            _ => Err(AtlasError::invalid(format!("unknown theta mode {s:?}"))),
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Closed-form two-variable targets A-D.
pub fn analytic_target(id: AnalyticId, x1: f64, x2: f64, theta: ThetaMode) -> Result<f64> {
    check_unit(0, x1)?;
    check_unit(1, x2)?;
    Ok(match id {
        AnalyticId::A => {
            let (dx, dy) = (x1 - 0.5, x2 - 0.5);
            let radius = (dx * dx + dy * dy).sqrt();
            let angle = match theta {
                ThetaMode::AsWritten => (dx * dx).atan2(dy * dy),
                ThetaMode::Atan2Unsquared => dy.atan2(dx),
            };
            (30.0 * radius + angle).sin() + 2.0
        }
        AnalyticId::B => {
            let a = 20.0 * x1 - 10.0;
            let b = 10.0 * x2 - 5.0;
            let c = 20.0 * x2 - 10.0;
            a.cos().powi(2) + b.cos().powi(2) + (-(a * a) - c * c).exp()
        }
        AnalyticId::C => 2.0 + (20.0 * x1 - 10.0).cos() * (20.0 * x2 - 10.0).cos(),
        AnalyticId::D => {
            let tau = 2.0 * std::f64::consts::PI;
            2.0 + sigmoid((tau * x1).sin() * (tau * x2).sin())
        }
    })
}

/// Lower and upper corner of the zeroed box used by the appendix Task 2.
pub const APPENDIX_HOLE: (f64, f64) = (0.45, 0.55);

/// Zero inside the open box `(0.45, 0.55)^2`, the analytic target elsewhere.
pub fn task2_appendix_target(id: AnalyticId, x1: f64, x2: f64, theta: ThetaMode) -> Result<f64> {
    let base = analytic_target(id, x1, x2, theta)?;
    let (lo, hi) = APPENDIX_HOLE;
    let inside = [x1, x2].iter().all(|&v| lo < v && v < hi);
    Ok(if inside { 0.0 } else { base })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticTarget {
    pub id: AnalyticId,
    pub theta: ThetaMode,
    /// Zero out the appendix Task 2 box.
    pub hole: bool,
}

impl Target for AnalyticTarget {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(2, x)?;
        if self.hole {
            task2_appendix_target(self.id, x[0], x[1], self.theta)
        } else {
            analytic_target(self.id, x[0], x[1], self.theta)
        }
    }
}

/// Constant function, used for the zero-valued appendix Task 2 training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantTarget {
    pub n: usize,
    pub value: f64,
}

impl Target for ConstantTarget {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        check_point(self.n, x)?;
        Ok(self.value)
    }
}

/// Axis-aligned box inside the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SampleBox {
    pub fn unit(n: usize) -> Self {
        Self {
            lo: vec![0.0; n],
            hi: vec![1.0; n],
        }
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self {
            lo: vec![lo; n],
            hi: vec![hi; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(AtlasError::invalid(
                "sample box corners disagree in dimension",
            ));
        }
        for (&lo, &hi) in self.lo.iter().zip(&self.hi) {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) {
                return Err(AtlasError::invalid("sample box must lie inside [0, 1]^n"));
            }
            if !(hi > lo) {
                return Err(AtlasError::invalid(format!(
                    "degenerate sample box side [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Inputs in `[0, 1]^n` paired with `p`-dimensional targets, both stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    n: usize,
    p: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    noise_sigma: f64,
}

impl Dataset {
    pub fn new(
        n: usize,
        p: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
        noise_sigma: f64,
    ) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(AtlasError::invalid("dataset dimensions must be positive"));
        }
        if inputs.len() % n != 0 || targets.len() % p != 0 || inputs.len() / n != targets.len() / p
        {
            return Err(AtlasError::invalid(
                "dataset inputs and targets disagree in length",
            ));
        }
        for (idx, &v) in inputs.iter().enumerate() {
            check_unit(idx % n, v)?;
        }
        if !(noise_sigma >= 0.0) {
            return Err(AtlasError::invalid("noise sigma must be non-negative"));
        }
        Ok(Self {
            n,
            p,
            inputs,
            targets,
            noise_sigma,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.inputs.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.n..(i + 1) * self.n]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.p..(i + 1) * self.p]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.inputs
            .chunks_exact(self.n)
            .zip(self.targets.chunks_exact(self.p))
    }
}

/// Uniform inputs over `region` with targets `target(x) + N(0, noise_sigma^2)`.
///
/// Each point draws its coordinates first, then (when `noise_sigma > 0`) one normal.
pub fn sample_dataset(
    target: &dyn Target,
    count: usize,
    region: &SampleBox,
    noise_sigma: f64,
    rng: &mut Stream,
) -> Result<Dataset> {
    if count == 0 {
        return Err(AtlasError::invalid(
            "dataset must contain at least one point",
        ));
    }
    region.validate()?;
    let n = target.dim();
    if region.dim() != n {
        return Err(AtlasError::Shape {
            what: "sample box",
            expected: n,
            actual: region.dim(),
        });
    }
    if !(noise_sigma >= 0.0) {
        return Err(AtlasError::invalid("noise sigma must be non-negative"));
    }
    let mut inputs = Vec::with_capacity(count * n);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let start = inputs.len();
        for (&lo, &hi) in region.lo.iter().zip(&region.hi) {
            inputs.push(rng.uniform_in(lo, hi));
        }
        let clean = target.eval(&inputs[start..])?;
        let y = if noise_sigma > 0.0 {
            clean + noise_sigma * rng.normal()
        } else {
            clean
        };
        targets.push(y);
    }
    Dataset::new(n, 1, inputs, targets, noise_sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(n: usize, center: Vec<f64>, scale: f64, weight: f64) -> RbfTarget {
        RbfTarget::new(n, center, vec![scale], vec![weight]).unwrap()
    }

    #[test]
    fn rbf_examples() {
        let t = single(2, vec![0.3, 0.6], 4.0, 2.0);
        assert_eq!(t.eval(&[0.3, 0.6]).unwrap(), 2.0);
        let z = single(2, vec![0.3, 0.6], 4.0, 0.0);
        assert_eq!(z.eval(&[0.1, 0.9]).unwrap(), 0.0);
        let mirrored = RbfTarget::new(1, vec![0.2, 0.8], vec![3.0, 3.0], vec![1.5, -1.5]).unwrap();
        assert!(mirrored.eval(&[0.5]).unwrap().abs() < 1e-15);
        assert!(t.eval(&[0.3, 1.2]).is_err());
    }

    #[test]
    fn rbf_sampling_is_deterministic() {
        let a = sample_rbf_target(2, &mut Stream::new(4)).unwrap();
        let b = sample_rbf_target(2, &mut Stream::new(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), RBF_COUNT);
        assert!(a.scales().iter().all(|&s| s > 0.0));
    }

    #[test]
    fn rbf_draw_moments() {
        let t = RbfTarget::sample_with_count(1, 100_000, &mut Stream::new(21)).unwrap();
        let count = t.len() as f64;
        let scale_mean = t.scales().iter().sum::<f64>() / count;
        assert!((scale_mean / 10.0 - 1.0).abs() < 0.02, "{scale_mean}");
        let w_mean = t.weights().iter().sum::<f64>() / count;
        let w_sd = (t
            .weights()
            .iter()
            .map(|w| (w - w_mean).powi(2))
            .sum::<f64>()
            / count)
            .sqrt();
        assert!(w_mean.abs() < 0.02, "{w_mean}");
        assert!((w_sd - 1.0).abs() < 0.02, "{w_sd}");
    }

    #[test]
    fn patched_target_switches_strictly_inside() {
        let base = single(2, vec![0.5, 0.5], 1.0, 1.0);
        let repl = single(2, vec![0.5, 0.5], 1.0, -7.0);
        let t = PatchedTarget::new(base.clone(), vec![0.2, 0.2], 0.3, repl.clone()).unwrap();
        let inside = [0.3, 0.4];
        let outside = [0.6, 0.4];
        let edge = [0.2, 0.3];
        assert_eq!(t.eval(&inside).unwrap(), repl.eval(&inside).unwrap());
        assert_eq!(t.eval(&outside).unwrap(), base.eval(&outside).unwrap());
        assert_eq!(t.eval(&edge).unwrap(), base.eval(&edge).unwrap());
        // region nearly the whole domain
        let wide = PatchedTarget::new(base, vec![1e-9, 1e-9], 1.0 - 2e-9, repl.clone()).unwrap();
        for x in [[0.1, 0.9], [0.5, 0.5], [0.99, 0.01]] {
            assert_eq!(wide.eval(&x).unwrap(), repl.eval(&x).unwrap());
        }
    }

    #[test]
    fn patched_target_rejects_escaping_region() {
        let base = single(1, vec![0.5], 1.0, 1.0);
        assert!(PatchedTarget::new(base.clone(), vec![0.8], 0.3, base.clone()).is_err());
        assert!(PatchedTarget::new(base.clone(), vec![0.0], 1.0, base.clone()).is_err());
        assert!(PatchedTarget::new(base.clone(), vec![-0.1], 0.3, base).is_err());
    }

    #[test]
    fn analytic_examples() {
        let t = ThetaMode::AsWritten;
        assert_eq!(analytic_target(AnalyticId::C, 0.5, 0.5, t).unwrap(), 3.0);
        assert_eq!(analytic_target(AnalyticId::D, 0.5, 0.5, t).unwrap(), 2.5);
        assert_eq!(analytic_target(AnalyticId::B, 0.5, 0.5, t).unwrap(), 3.0);
        // A at the center: radius 0, atan2(0, 0) = 0
        assert_eq!(analytic_target(AnalyticId::A, 0.5, 0.5, t).unwrap(), 2.0);
        let a = analytic_target(AnalyticId::A, 0.9, 0.2, ThetaMode::Atan2Unsquared).unwrap();
        let r = (0.4f64 * 0.4 + 0.3 * 0.3).sqrt();
        assert!((a - ((30.0 * r + (-0.3f64).atan2(0.4)).sin() + 2.0)).abs() < 1e-15);
        assert!(analytic_target(AnalyticId::A, 1.1, 0.5, t).is_err());
    }

    #[test]
    fn appendix_task2_hole() {
        let t = ThetaMode::AsWritten;
        assert_eq!(
            task2_appendix_target(AnalyticId::C, 0.5, 0.5, t).unwrap(),
            0.0
        );
        for (x1, x2) in [(0.2, 0.2), (0.45, 0.5), (0.5, 0.55)] {
            assert_eq!(
                task2_appendix_target(AnalyticId::C, x1, x2, t).unwrap(),
                analytic_target(AnalyticId::C, x1, x2, t).unwrap()
            );
        }
    }

    #[test]
    fn dataset_without_noise_is_exact() {
        let target = single(2, vec![0.5, 0.5], 2.0, 1.0);
        let ds =
            sample_dataset(&target, 50, &SampleBox::unit(2), 0.0, &mut Stream::new(1)).unwrap();
        for (x, y) in ds.iter() {
            assert_eq!(y[0], target.eval(x).unwrap());
        }
        let again =
            sample_dataset(&target, 50, &SampleBox::unit(2), 0.0, &mut Stream::new(1)).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn dataset_respects_box_and_noise() {
        let target = ConstantTarget { n: 2, value: 0.0 };
        let region = SampleBox::cube(2, 0.45, 0.55);
        let ds = sample_dataset(&target, 100_000, &region, 0.1, &mut Stream::new(9)).unwrap();
        assert!(ds
            .iter()
            .all(|(x, _)| x.iter().all(|&v| (0.45..0.55).contains(&v))));
        let count = ds.len() as f64;
        let mean = ds.iter().map(|(_, y)| y[0]).sum::<f64>() / count;
        let sd = (ds.iter().map(|(_, y)| (y[0] - mean).powi(2)).sum::<f64>() / count).sqrt();
        assert!((sd / 0.1 - 1.0).abs() < 0.03, "{sd}");
    }

    #[test]
    fn dataset_rejects_bad_boxes() {
        let target = ConstantTarget { n: 1, value: 0.0 };
        let mut rng = Stream::new(0);
        assert!(sample_dataset(&target, 5, &SampleBox::cube(1, 0.3, 0.3), 0.0, &mut rng).is_err());
        assert!(sample_dataset(&target, 5, &SampleBox::cube(1, 0.3, 1.3), 0.0, &mut rng).is_err());
        assert!(sample_dataset(&target, 0, &SampleBox::unit(1), 0.0, &mut rng).is_err());
        assert!(sample_dataset(&target, 5, &SampleBox::unit(2), 0.0, &mut rng).is_err());
    }
}
