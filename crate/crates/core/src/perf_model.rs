//! Closed-form efficiency of a Slide FFT.
//!
//! With `a` cycles per datum transfer and `b` cycles per FLOP, an `n = 2^m`
//! point transform spends `5bmn` cycles on arithmetic and `a·n` on moving
//! data, so
//!
//! ```text
//! α = a / b
//! η = 5bmn / (a·n + 5bmn) = 1 / (1 + α/(5m)) ≈ 1 - α/(5m)
//! ```
//!
//! `n` cancels: η depends on the transform size only through `m`.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = Ratio<u64>;

pub const DEFAULT_MARGIN_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("cycles per FLOP must be positive")]
    ZeroComputeCost,
    #[error("transform size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("level count {m} does not match n = {n}")]
    LevelMismatch { n: usize, m: u32 },
    #[error("level count must be at least 1")]
    ZeroLevels,
    #[error("FLOP count of a 2^{0}-point transform overflows 64 bits")]
    TooLarge(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    /// Cycles per datum transfer.
    pub a: Rational,
    /// Cycles per FLOP.
    pub b: Rational,
    /// Charge `2a` per datum, counting the return trip separately.
    pub doubled_transfer: bool,
}

impl CostModel {
    pub fn new(a: Rational, b: Rational) -> Result<Self, ModelError> {
        if b.is_zero() {
            return Err(ModelError::ZeroComputeCost);
        }
        Ok(Self {
            a,
            b,
            doubled_transfer: false,
        })
    }

    /// `a = 2` for a 64-bit complex single datum over 32-bit links, `b = 3`.
    pub fn complex_single() -> Self {
        Self {
            a: Rational::from_integer(2),
            b: Rational::from_integer(3),
            doubled_transfer: false,
        }
    }

    pub fn doubled(mut self, doubled_transfer: bool) -> Self {
        self.doubled_transfer = doubled_transfer;
        self
    }

    fn transfer_cost(&self) -> Rational {
        if self.doubled_transfer {
            self.a * 2
        } else {
            self.a
        }
    }
}

pub fn alpha(model: &CostModel) -> Result<Rational, ModelError> {
    if model.b.is_zero() {
        return Err(ModelError::ZeroComputeCost);
    }
    Ok(model.a / model.b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyReport {
    pub eta: f64,
    pub eta_exact: Rational,
    /// `1 - α_t/(5m)` with `α_t` the (possibly doubled) transfer ratio.
    pub eta_first_order: f64,
    pub alpha: Rational,
    pub m: u32,
    pub flops: u64,
}

pub fn predict_efficiency(
    model: &CostModel,
    n: usize,
    m: u32,
) -> Result<EfficiencyReport, ModelError> {
    if m == 0 {
        return Err(ModelError::ZeroLevels);
    }
    if !n.is_power_of_two() {
        return Err(ModelError::NotPowerOfTwo(n));
    }
    if n.trailing_zeros() != m {
        return Err(ModelError::LevelMismatch { n, m });
    }
    let alpha = alpha(model)?;
    let compute = model.b * (5 * u64::from(m));
    let eta_exact = compute / (model.transfer_cost() + compute);
    let x = to_f64(model.transfer_cost() / model.b) / (5.0 * f64::from(m));
    Ok(EfficiencyReport {
        eta: to_f64(eta_exact),
        eta_exact,
        eta_first_order: 1.0 - x,
        alpha,
        m,
        flops: flops_per_transform(n)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    /// `α / (5m)`.
    pub value: Rational,
    pub threshold: f64,
    pub pass: bool,
}

pub fn check_margin(model: &CostModel, m: u32, threshold: f64) -> Result<Margin, ModelError> {
    if m == 0 {
        return Err(ModelError::ZeroLevels);
    }
    let value = alpha(model)? / (5 * u64::from(m));
    Ok(Margin {
        value,
        threshold,
        pass: to_f64(value) < threshold,
    })
}

/// `5 n log2 n`, zero for `n = 1`.
pub fn flops_per_transform(n: usize) -> Result<u64, ModelError> {
    if !n.is_power_of_two() {
        return Err(ModelError::NotPowerOfTwo(n));
    }
    let m = n.trailing_zeros();
    (n as u64)
        .checked_mul(5 * u64::from(m))
        .ok_or(ModelError::TooLarge(m))
}

/// `|η_measured - η_predicted| / η_predicted`.
pub fn reconcile(predicted: &EfficiencyReport, measured_eta: f64) -> f64 {
    (measured_eta - predicted.eta).abs() / predicted.eta
}

pub fn to_f64(r: Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
