//! Uniform cubic B-spline activation and the single-variable spline banks
//! built from it.
//!
//! A density-`rho` bank holds `2^(rho+2)` coefficients. Basis `i` (1-based)
//! is the cardinal cubic `S(w*x + 4 - i)` with input scale
//! `w = 2^(rho+2) - 3`, so the translates tile `[0, 1]` and at most four of
//! them are nonzero at any point. Coefficient storage is 0-based: slot `q`
//! holds the coefficient of basis `i = q + 1`.
//!
//! A mixed-density spline sums banks `rho = 0..=r`. By default only the
//! densest bank is trainable; expansion appends a zero bank one density
//! higher, freezes the previous one, and leaves the function unchanged.

use serde::{Deserialize, Serialize};

use crate::error::{AtlasError, Result};
use crate::sparse::SparseGradient;

/// Peak value of the cardinal cubic, attained at `x = 2`.
pub const ACTIVATION_MAX: f64 = 2.0 / 3.0;

/// Cardinal uniform cubic B-spline supported on `[0, 4]`.
pub fn activation(x: f64) -> f64 {
    if (0.0..1.0).contains(&x) {
        x * x * x / 6.0
    } else if (1.0..2.0).contains(&x) {
        let t = x - 1.0;
        (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0
    } else if (2.0..3.0).contains(&x) {
        let t = x - 2.0;
        (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0
    } else if (3.0..4.0).contains(&x) {
        let t = 4.0 - x;
        t * t * t / 6.0
    } else {
        0.0
    }
}

/// Number of basis functions at density `rho`.
#[inline]
pub fn basis_count(rho: u32) -> usize {
    1usize << (rho + 2)
}

/// Input scale `w = 2^(rho+2) - 3`.
#[inline]
pub fn input_scale(rho: u32) -> f64 {
    (basis_count(rho) - 3) as f64
}

/// Width of the open interval on which a single density-`rho` basis is nonzero.
pub fn support_width(rho: u32) -> f64 {
    4.0 / input_scale(rho)
}

pub(crate) fn check_unit(coordinate: usize, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(AtlasError::Domain {
            coordinate,
            value: x,
        })
    }
}

/// The (at most four) basis functions of one bank that can be nonzero at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveWindow {
    /// 0-based slot of the first candidate basis.
    pub start: usize,
    /// Basis values for slots `start..start + len`; entries past `len` are zero.
    pub values: [f64; 4],
    /// Number of in-range candidates (3 only at `x = 1`).
    pub len: usize,
}

impl ActiveWindow {
    /// Candidate window without domain validation. Caller guarantees `0 <= x <= 1`.
    pub(crate) fn compute(rho: u32, x: f64) -> Self {
        let count = basis_count(rho);
        let wx = input_scale(rho) * x;
        let floor = wx.floor();
        let u = wx - floor;
        let start = floor as usize;
        let len = (count - start).min(4);
        let u2 = u * u;
        let u3 = u2 * u;
        let om = 1.0 - u;
        // S(3+u), S(2+u), S(1+u), S(u)
        let mut values = [
            om * om * om / 6.0,
            (3.0 * u3 - 6.0 * u2 + 4.0) / 6.0,
            (-3.0 * u3 + 3.0 * u2 + 3.0 * u + 1.0) / 6.0,
            u3 / 6.0,
        ];
        for v in values.iter_mut().skip(len) {
            *v = 0.0;
        }
        ActiveWindow { start, values, len }
    }

    /// Iterates `(slot, value)` over in-range candidates, including zero values at knots.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values[..self.len]
            .iter()
            .enumerate()
            .map(move |(t, &v)| (self.start + t, v))
    }

    /// Slots whose basis value is nonzero.
    pub fn nonzero_slots(&self) -> Vec<usize> {
        self.iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|(q, _)| q)
            .collect()
    }

    pub fn sum(&self) -> f64 {
        self.values[..self.len].iter().sum()
    }
}

/// Basis window of density `rho` at `x`, validating `x` against `[0, 1]`.
pub fn active_window(rho: u32, x: f64) -> Result<ActiveWindow> {
    check_unit(0, x)?;
    Ok(ActiveWindow::compute(rho, x))
}

/// Uniform cubic B-spline with `2^(rho+2)` coefficients on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoDensitySpline {
    rho: u32,
    coeffs: Vec<f64>,
}

impl RhoDensitySpline {
    pub fn zeros(rho: u32) -> Self {
        Self {
            rho,
            coeffs: vec![0.0; basis_count(rho)],
        }
    }

    pub fn from_coeffs(rho: u32, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis_count(rho) {
            return Err(AtlasError::Shape {
                what: "spline coefficients",
                expected: basis_count(rho),
                actual: coeffs.len(),
            });
        }
        Ok(Self { rho, coeffs })
    }

    pub fn rho(&self) -> u32 {
        self.rho
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit(0, x)?;
        Ok(self.eval_window(&ActiveWindow::compute(self.rho, x)))
    }

    #[inline]
    pub(crate) fn eval_window(&self, window: &ActiveWindow) -> f64 {
        let c = &self.coeffs[window.start..window.start + window.len];
        c.iter().zip(&window.values).map(|(a, b)| a * b).sum()
    }

    /// Largest absolute coefficient; bounds `|eval|` through partition of unity.
    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Sum of density banks `0..=r` over one input variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDensitySpline {
    banks: Vec<RhoDensitySpline>,
    trainable: Vec<bool>,
}

impl MixedDensitySpline {
    /// Zero spline of max density `r` with only bank `r` trainable.
    pub fn zeros(r: u32) -> Self {
        let banks = (0..=r).map(RhoDensitySpline::zeros).collect();
        let mut trainable = vec![false; r as usize + 1];
        trainable[r as usize] = true;
        Self { banks, trainable }
    }

    /// Assembles banks `0..=r` in order with the default trainable mask.
    pub fn from_banks(banks: Vec<RhoDensitySpline>) -> Result<Self> {
        if banks.is_empty() {
            return Err(AtlasError::invalid(
                "mixed-density spline needs at least one bank",
            ));
        }
        for (rho, bank) in banks.iter().enumerate() {
            if bank.rho() as usize != rho {
                return Err(AtlasError::invalid(format!(
                    "bank at position {rho} has density {}",
                    bank.rho()
                )));
            }
        }
        let mut trainable = vec![false; banks.len()];
        *trainable.last_mut().unwrap() = true;
        Ok(Self { banks, trainable })
    }

    pub fn max_density(&self) -> u32 {
        (self.banks.len() - 1) as u32
    }

    pub fn banks(&self) -> &[RhoDensitySpline] {
        &self.banks
    }

    pub fn bank_mut(&mut self, rho: u32) -> &mut RhoDensitySpline {
        &mut self.banks[rho as usize]
    }

    pub fn trainable_mask(&self) -> &[bool] {
        &self.trainable
    }

    pub fn set_all_trainable(&mut self) {
        self.trainable.iter_mut().for_each(|t| *t = true);
    }

    pub fn set_trainable_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.banks.len() {
            return Err(AtlasError::Shape {
                what: "trainable mask",
                expected: self.banks.len(),
                actual: mask.len(),
            });
        }
        self.trainable = mask;
        Ok(())
    }

    /// Total number of coefficients over all banks.
    pub fn coeff_count(&self) -> usize {
        self.banks.iter().map(|b| b.coeffs.len()).sum()
    }

    /// Number of coefficients in trainable banks.
    pub fn trainable_count(&self) -> usize {
        self.banks
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .map(|(b, _)| b.coeffs.len())
            .sum()
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        check_unit(0, x)?;
        Ok(self
            .banks
            .iter()
            .map(|b| b.eval_window(&ActiveWindow::compute(b.rho, x)))
            .sum())
    }

    /// Evaluates with precomputed windows, one per bank in density order.
    #[inline]
    pub(crate) fn eval_windows(&self, windows: &[ActiveWindow]) -> f64 {
        self.banks
            .iter()
            .zip(windows)
            .map(|(b, w)| b.eval_window(w))
            .sum()
    }

    /// Exact partials with respect to trainable coefficients.
    ///
    /// Indices run over trainable banks only, in density order, then slot.
    pub fn grad(&self, x: f64) -> Result<SparseGradient> {
        check_unit(0, x)?;
        let windows: Vec<_> = (0..=self.max_density())
            .map(|rho| ActiveWindow::compute(rho, x))
            .collect();
        let mut out = SparseGradient::with_capacity(4 * self.banks.len());
        self.push_grad(&windows, 1.0, 0, &mut out);
        Ok(out)
    }

    /// Appends `factor * basis` entries for trainable banks, offsetting indices by `base`.
    #[inline]
    pub(crate) fn push_grad(
        &self,
        windows: &[ActiveWindow],
        factor: f64,
        base: usize,
        out: &mut SparseGradient,
    ) {
        let mut offset = base;
        for ((bank, &trainable), window) in self.banks.iter().zip(&self.trainable).zip(windows) {
            if !trainable {
                continue;
            }
            for (slot, v) in window.iter() {
                let g = factor * v;
                if g != 0.0 {
                    out.push(offset + slot, g);
                }
            }
            offset += bank.coeffs.len();
        }
    }

    /// Appends a zero bank at density `r + 1`, freezes the old banks and makes
    /// the new bank the only trainable one. The represented function is unchanged.
    pub fn expand_density(&mut self) {
        let next = self.max_density() + 1;
        self.banks.push(RhoDensitySpline::zeros(next));
        self.trainable.iter_mut().for_each(|t| *t = false);
        self.trainable.push(true);
    }

    /// Trainable coefficients in flat gradient order.
    pub fn trainable_coeffs_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.banks
            .iter_mut()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .flat_map(|(b, _)| b.coeffs.iter_mut())
    }

    pub fn trainable_coeffs(&self) -> impl Iterator<Item = &f64> {
        self.banks
            .iter()
            .zip(&self.trainable)
            .filter(|(_, &t)| t)
            .flat_map(|(b, _)| b.coeffs.iter())
    }

    /// Sum over banks of the largest absolute coefficient; an upper bound on `|eval|`.
    pub fn abs_bound(&self) -> f64 {
        self.banks.iter().map(RhoDensitySpline::max_abs_coeff).sum()
    }
}
