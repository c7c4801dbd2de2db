//! The additive exponential spline model.
//!
//! For each output component the model computes
//!
//! ```text
//! A(x) = sum_j f_j(x_j) + sum_{k=1..M} k^-2 * [exp(sum_j g_kj(x_j)) - exp(sum_j h_kj(x_j))]
//! ```
//!
//! where every `f`, `g`, `h` is a [`MixedDensitySpline`] over one input
//! coordinate. Output components own disjoint parameter sets; only the basis
//! windows are shared per input point.
//!
//! Flat trainable-parameter indices follow `(output, block, k, j, rho, i)`
//! with block order `f`, `g`, `h`, restricted to trainable banks. This order
//! is what [`SparseGradient`] indices, optimizer state, and
//! [`AtlasModel::trainable_params`] all use.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bspline::{check_unit, ActiveWindow, MixedDensitySpline, ACTIVATION_MAX};
use crate::error::{AtlasError, Result};
use crate::sparse::SparseGradient;

/// Interior sums above this raise [`AtlasError::NumericRange`] instead of overflowing `exp`.
pub const EXP_INTERIOR_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Only the densest bank of each spline is trainable.
    #[default]
    DistalOrthogonal,
    /// Every density bank is trainable (ablation without the orthogonality guarantee).
    AllDensitiesTrainable,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::DistalOrthogonal => "distal_orthogonal",
            Variant::AllDensitiesTrainable => "all_densities_trainable",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = AtlasError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distal_orthogonal" | "default" => Ok(Variant::DistalOrthogonal),
            "all_densities_trainable" | "ablation" => Ok(Variant::AllDensitiesTrainable),
            other => Err(AtlasError::invalid(format!("unknown variant {other:?}"))),
        }
    }
}

/// Splines belonging to one output component.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputHead {
    /// Direct additive heads, one per input coordinate.
    pub f: Vec<MixedDensitySpline>,
    /// Positive-exponential interiors, `k`-major: `g[(k-1)*n + j]`.
    pub g: Vec<MixedDensitySpline>,
    /// Negative-exponential interiors, same layout as `g`.
    pub h: Vec<MixedDensitySpline>,
}

impl OutputHead {
    fn zeros(n: usize, m: usize, r: u32, variant: Variant) -> Self {
        let make = |count: usize| {
            (0..count)
                .map(|_| {
                    let mut s = MixedDensitySpline::zeros(r);
                    if variant == Variant::AllDensitiesTrainable {
                        s.set_all_trainable();
                    }
                    s
                })
                .collect::<Vec<_>>()
        };
        OutputHead {
            f: make(n),
            g: make(m * n),
            h: make(m * n),
        }
    }

    /// All splines in flat-index order: `f`, then `g`, then `h`.
    pub fn splines(&self) -> impl Iterator<Item = &MixedDensitySpline> {
        self.f.iter().chain(&self.g).chain(&self.h)
    }

    pub fn splines_mut(&mut self) -> impl Iterator<Item = &mut MixedDensitySpline> {
        self.f
            .iter_mut()
            .chain(self.g.iter_mut())
            .chain(self.h.iter_mut())
    }
}

/// Bound on the L1 norm of the parameter gradient of one output component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundReport {
    /// Peak basis value, 2/3.
    pub u: f64,
    /// Bound on every positive-exponential interior `|G_k|`.
    pub u_g: f64,
    /// Bound on every negative-exponential interior `|H_k|`.
    pub u_h: f64,
    /// `4 n u pi^2 (1 + exp(u_g) + exp(u_h))`.
    #[serde(rename = "U")]
    pub big_u: f64,
    /// Trainable banks per spline; the ablation variant multiplies the bound by this.
    pub trainable_banks: usize,
}

impl GradientBoundReport {
    pub fn effective_bound(&self) -> f64 {
        self.big_u * self.trainable_banks as f64
    }
}

/// Cached intermediates of one forward pass, enough to produce gradients.
#[derive(Debug, Clone)]
pub struct Trace {
    windows: Vec<ActiveWindow>,
    outputs: Vec<f64>,
    exp_g: Vec<f64>,
    exp_h: Vec<f64>,
}

impl Trace {
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn into_outputs(self) -> Vec<f64> {
        self.outputs
    }

    /// Visits every `(flat_index, partial * upstream)` with a nonzero value, in index order.
    fn visit(&self, model: &AtlasModel, upstream: &[f64], mut sink: impl FnMut(usize, f64)) {
        let n = model.n;
        let banks = model.r as usize + 1;
        let per_spline = model.trainable_per_spline();
        let trainable_banks: Vec<(usize, usize)> = model.trainable_bank_offsets();
        let mut base = 0usize;
        for (o, head) in model.heads.iter().enumerate() {
            let up = upstream[o];
            let mut emit = |spline_factor: f64, j: usize, base: usize| {
                let windows = &self.windows[j * banks..(j + 1) * banks];
                for &(rho, bank_off) in &trainable_banks {
                    let w = &windows[rho];
                    for (slot, v) in w.iter() {
                        let g = spline_factor * v;
                        if g != 0.0 {
                            sink(base + bank_off + slot, g);
                        }
                    }
                }
            };
            for j in 0..n {
                emit(up, j, base);
                base += per_spline;
            }
            for k in 0..model.m {
                let factor = up * k_scale(k) * self.exp_g[o * model.m + k];
                for j in 0..n {
                    emit(factor, j, base);
                    base += per_spline;
                }
            }
            for k in 0..model.m {
                let factor = -up * k_scale(k) * self.exp_h[o * model.m + k];
                for j in 0..n {
                    emit(factor, j, base);
                    base += per_spline;
                }
            }
            debug_assert_eq!(
                head.f.len() + head.g.len() + head.h.len(),
                (2 * model.m + 1) * n
            );
        }
    }

    /// Exact `upstream`-weighted parameter gradient.
    pub fn gradient(&self, model: &AtlasModel, upstream: &[f64]) -> SparseGradient {
        let mut out = SparseGradient::with_capacity(model.max_gradient_nnz());
        self.visit(model, upstream, |i, v| out.push(i, v));
        out
    }

    /// Adds the `upstream`-weighted gradient into a dense buffer, flagging touched indices.
    pub fn accumulate(
        &self,
        model: &AtlasModel,
        upstream: &[f64],
        dense: &mut [f64],
        mut touched: Option<&mut [bool]>,
    ) {
        self.visit(model, upstream, |i, v| {
            dense[i] += v;
            if let Some(t) = touched.as_deref_mut() {
                t[i] = true;
            }
        });
    }
}

/// Scale factor `1/k^2` for the 0-based exponential index `k0` (so `k = k0 + 1`).
#[inline]
fn k_scale(k0: usize) -> f64 {
    let k = (k0 + 1) as f64;
    1.0 / (k * k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasModel {
    n: usize,
    p: usize,
    m: usize,
    r: u32,
    variant: Variant,
    heads: Vec<OutputHead>,
}

impl AtlasModel {
    /// Zero-initialized model with `n` inputs, `p` outputs, `m` exponential pairs and max density `r`.
    pub fn new(n: usize, p: usize, m: usize, r: u32, variant: Variant) -> Result<Self> {
        if n == 0 {
            return Err(AtlasError::invalid("input dimension must be at least 1"));
        }
        if p == 0 {
            return Err(AtlasError::invalid("output dimension must be at least 1"));
        }
        if r > 24 {
            return Err(AtlasError::invalid(format!("max density {r} is too large")));
        }
        let heads = (0..p)
            .map(|_| OutputHead::zeros(n, m, r, variant))
            .collect();
        Ok(Self {
            n,
            p,
            m,
            r,
            variant,
            heads,
        })
    }

    /// Assembles a model from explicit heads; shapes and densities must agree.
    pub fn from_heads(
        n: usize,
        m: usize,
        r: u32,
        variant: Variant,
        mut heads: Vec<OutputHead>,
    ) -> Result<Self> {
        let template = Self::new(n, heads.len().max(1), m, r, variant)?;
        if heads.is_empty() {
            return Err(AtlasError::invalid("model needs at least one output head"));
        }
        for head in &mut heads {
            for (what, got, want) in [
                ("f splines", head.f.len(), n),
                ("g splines", head.g.len(), m * n),
                ("h splines", head.h.len(), m * n),
            ] {
                if got != want {
                    return Err(AtlasError::Shape {
                        what,
                        expected: want,
                        actual: got,
                    });
                }
            }
            for s in head.splines_mut() {
                if s.max_density() != r {
                    return Err(AtlasError::invalid(format!(
                        "spline has max density {} but model has {r}",
                        s.max_density()
                    )));
                }
                if variant == Variant::AllDensitiesTrainable {
                    s.set_all_trainable();
                }
            }
        }
        Ok(Self { heads, ..template })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of positive/negative exponential pairs.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn heads(&self) -> &[OutputHead] {
        &self.heads
    }

    pub fn head_mut(&mut self, output: usize) -> &mut OutputHead {
        &mut self.heads[output]
    }

    fn trainable_per_spline(&self) -> usize {
        self.trainable_bank_offsets()
            .last()
            .map_or(0, |&(rho, off)| {
                off + crate::bspline::basis_count(rho as u32)
            })
    }

    /// `(rho, offset within spline)` for each trainable bank.
    fn trainable_bank_offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        let mut out = Vec::new();
        for rho in 0..=self.r {
            let trainable = match self.variant {
                Variant::DistalOrthogonal => rho == self.r,
                Variant::AllDensitiesTrainable => true,
            };
            if trainable {
                out.push((rho as usize, off));
                off += crate::bspline::basis_count(rho);
            }
        }
        out
    }

    fn trainable_banks(&self) -> usize {
        match self.variant {
            Variant::DistalOrthogonal => 1,
            Variant::AllDensitiesTrainable => self.r as usize + 1,
        }
    }

    /// Number of trainable parameters.
    pub fn count_trainable(&self) -> usize {
        self.p * self.n * (2 * self.m + 1) * self.trainable_per_spline()
    }

    /// Number of coefficients including frozen banks.
    pub fn count_parameters(&self) -> usize {
        self.heads
            .iter()
            .flat_map(OutputHead::splines)
            .map(MixedDensitySpline::coeff_count)
            .sum()
    }

    /// Largest possible nonzero count of a gradient for one output component.
    pub fn max_gradient_nnz_per_output(&self) -> usize {
        4 * self.n * (2 * self.m + 1) * self.trainable_banks()
    }

    pub fn max_gradient_nnz(&self) -> usize {
        self.p * self.max_gradient_nnz_per_output()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(AtlasError::Shape {
                what: "input vector",
                expected: self.n,
                actual: x.len(),
            });
        }
        for (j, &xj) in x.iter().enumerate() {
            check_unit(j, xj)?;
        }
        Ok(())
    }

    /// Forward pass keeping the intermediates needed for gradients.
    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let banks = self.r as usize + 1;
        let mut windows = Vec::with_capacity(self.n * banks);
        for &xj in x {
            for rho in 0..=self.r {
                windows.push(ActiveWindow::compute(rho, xj));
            }
        }
        let win = |j: usize| &windows[j * banks..(j + 1) * banks];

        let mut outputs = Vec::with_capacity(self.p);
        let mut exp_g = Vec::with_capacity(self.p * self.m);
        let mut exp_h = Vec::with_capacity(self.p * self.m);
        for head in &self.heads {
            let mut out: f64 = head
                .f
                .iter()
                .enumerate()
                .map(|(j, s)| s.eval_windows(win(j)))
                .sum();
            let interior = |splines: &[MixedDensitySpline]| -> Result<f64> {
                let sum: f64 = splines
                    .iter()
                    .enumerate()
                    .map(|(j, s)| s.eval_windows(win(j)))
                    .sum();
                if sum > EXP_INTERIOR_LIMIT || sum.is_nan() {
                    return Err(AtlasError::NumericRange {
                        value: sum,
                        limit: EXP_INTERIOR_LIMIT,
                    });
                }
                Ok(sum.exp())
            };
            for k in 0..self.m {
                let eg = interior(&head.g[k * self.n..(k + 1) * self.n])?;
                let eh = interior(&head.h[k * self.n..(k + 1) * self.n])?;
                let scale = k_scale(k);
                out += scale * eg - scale * eh;
                exp_g.push(eg);
                exp_h.push(eh);
            }
            outputs.push(out);
        }
        Ok(Trace {
            windows,
            outputs,
            exp_g,
            exp_h,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.into_outputs())
    }

    /// Exact parameter gradient of `sum_o upstream[o] * A_o(x)` over trainable parameters.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<SparseGradient> {
        if upstream.len() != self.p {
            return Err(AtlasError::Shape {
                what: "upstream vector",
                expected: self.p,
                actual: upstream.len(),
            });
        }
        Ok(self.trace(x)?.gradient(self, upstream))
    }

    /// Inner product of the unit-upstream parameter gradients at `x` and `y`.
    pub fn grad_inner_product(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let ones = vec![1.0; self.p];
        let gx = self.backward(x, &ones)?;
        let gy = self.backward(y, &ones)?;
        Ok(gx.dot(&gy))
    }

    /// Adds `delta_m` zero-initialized exponential pairs; outputs are unchanged.
    pub fn expand_exponentials(&mut self, delta_m: usize) {
        let (n, r, variant) = (self.n, self.r, self.variant);
        for head in &mut self.heads {
            let extra = OutputHead::zeros(n, delta_m, r, variant);
            head.g.extend(extra.g);
            head.h.extend(extra.h);
        }
        self.m += delta_m;
    }

    /// Appends a zero bank of density `r + 1` to every spline; outputs are unchanged.
    ///
    /// The default variant freezes the former top bank; the ablation keeps every bank trainable.
    pub fn expand_density_all(&mut self) {
        let variant = self.variant;
        for s in self.heads.iter_mut().flat_map(OutputHead::splines_mut) {
            s.expand_density();
            if variant == Variant::AllDensitiesTrainable {
                s.set_all_trainable();
            }
        }
        self.r += 1;
    }

    /// Gradient L1 bound for one output component, maximized over outputs.
    pub fn gradient_bound(&self) -> GradientBoundReport {
        let interior_bound = |splines: &[MixedDensitySpline]| -> f64 {
            splines.iter().map(MixedDensitySpline::abs_bound).sum()
        };
        let mut u_g: f64 = 0.0;
        let mut u_h: f64 = 0.0;
        for head in &self.heads {
            for k in 0..self.m {
                let span = k * self.n..(k + 1) * self.n;
                u_g = u_g.max(interior_bound(&head.g[span.clone()]));
                u_h = u_h.max(interior_bound(&head.h[span]));
            }
        }
        let u = ACTIVATION_MAX;
        let big_u = 4.0 * self.n as f64 * u * PI * PI * (1.0 + u_g.exp() + u_h.exp());
        GradientBoundReport {
            u,
            u_g,
            u_h,
            big_u,
            trainable_banks: self.trainable_banks(),
        }
    }

    /// Trainable coefficients in flat-index order.
    pub fn trainable_params(&self) -> impl Iterator<Item = &f64> {
        self.heads
            .iter()
            .flat_map(OutputHead::splines)
            .flat_map(MixedDensitySpline::trainable_coeffs)
    }

    pub fn trainable_params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.heads
            .iter_mut()
            .flat_map(OutputHead::splines_mut)
            .flat_map(MixedDensitySpline::trainable_coeffs_mut)
    }

    /// Visits every coefficient, trainable or frozen.
    pub fn for_each_coeff_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for s in self.heads.iter_mut().flat_map(OutputHead::splines_mut) {
            for rho in 0..=s.max_density() {
                s.bank_mut(rho).coeffs_mut().iter_mut().for_each(&mut f);
            }
        }
    }

    /// Mutable access to the trainable parameter at a flat index.
    pub fn trainable_param_mut(&mut self, index: usize) -> Option<&mut f64> {
        self.trainable_params_mut().nth(index)
    }
}
