//! Operator pairs, vectors, and the emulated-precision evaluation mode.
//!
//! An [`OperatorPair`] bundles an encoder `E: R^N -> R^F` and a decoder
//! `D: R^F -> R^N`. The [`ResidualOperator`] built from a pair and a target
//! `x` evaluates `T(z) = E(D(z)) - E(x)`; every solver in this crate only
//! ever touches `T`.
//!
//! [`PrecisionMode::HalfEmulated`] models half-precision inference by
//! rounding every encoder/decoder layer output and every solver state
//! update to the nearest IEEE binary16 value (round-to-nearest-even),
//! while intermediate accumulations stay in f64. Where exactly real
//! deployments round inside their decoders is not observable from the
//! outside; layer-output rounding is the model used here.

use std::sync::Arc;

use crate::error::{FixinvError, Result};

// ---------------------------------------------------------------------------
// binary16 emulation
// ---------------------------------------------------------------------------

/// Converts `x` to IEEE binary16 with round-to-nearest-even.
///
/// Values beyond the binary16 range become +-infinity; NaN stays NaN. This
/// is a total function, downstream finiteness checks reject the infinities.
pub fn f64_to_binary16_bits(x: f64) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 48) & 0x8000) as u16;
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & 0x000f_ffff_ffff_ffff;

    if exp == 0x7ff {
        return if frac != 0 { sign | 0x7e00 } else { sign | 0x7c00 };
    }
    if exp == 0 {
        // f64 subnormals are below 1e-307, far under the binary16 range.
        return sign;
    }

    let e = exp - 1023;
    if e >= 16 {
        return sign | 0x7c00;
    }

    // Significand with the explicit leading bit at position 52. The binary16
    // target keeps multiples of 2^(he - 10), where he saturates at the
    // subnormal exponent -14.
    let sig = (1u64 << 52) | frac;
    let he = e.max(-14);
    let shift = ((42 + (he - e)) as u32).min(63);
    let kept = sig >> shift;
    let rem = sig & ((1u64 << shift) - 1);
    let half = 1u64 << (shift - 1);
    let mut rounded = kept;
    if rem > half || (rem == half && kept & 1 == 1) {
        rounded += 1;
    }

    if he > -14 || rounded >= (1 << 10) {
        // Normal result; a mantissa carry bumps the exponent and can
        // overflow to infinity (this is the 65520 -> inf boundary).
        let mut e16 = he + 15;
        if rounded == (1 << 11) {
            e16 += 1;
            rounded = 1 << 10;
        }
        if e16 >= 31 {
            return sign | 0x7c00;
        }
        sign | ((e16 as u16) << 10) | (rounded as u16 & 0x3ff)
    } else {
        // Subnormal or zero; `rounded == 2^10` cannot happen here.
        sign | rounded as u16
    }
}

/// Exact power of two for exponents in the f64 normal range.
fn exp2i(n: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&n));
    f64::from_bits(((n + 1023) as u64) << 52)
}

/// Widens a binary16 bit pattern back to f64 (exact).
pub fn binary16_bits_to_f64(bits: u16) -> f64 {
    let sign = if bits & 0x8000 != 0 { -1.0 } else { 1.0 };
    let e = ((bits >> 10) & 0x1f) as i32;
    let m = (bits & 0x3ff) as f64;
    match e {
        0 => sign * m * exp2i(-24),
        31 => {
            if m == 0.0 {
                sign * f64::INFINITY
            } else {
                f64::NAN
            }
        }
        _ => sign * (1024.0 + m) * exp2i(e - 25),
    }
}

/// Rounds a scalar through binary16 and widens it back.
pub fn round_scalar_to_half(x: f64) -> f64 {
    binary16_bits_to_f64(f64_to_binary16_bits(x))
}

/// Rounds every entry of `v` to the nearest binary16 value, widened back to
/// working precision. Idempotent and total; out-of-range entries become
/// +-infinity and trip `NonFiniteOutput` downstream.
pub fn round_to_half(v: &Vector) -> Vector {
    Vector::new(v.iter().map(|&x| round_scalar_to_half(x)).collect())
}

// ---------------------------------------------------------------------------
// Vector
// ---------------------------------------------------------------------------

/// Dense real vector; the latent `z` and pixel `x` both live here.
#[derive(Clone, Debug, PartialEq)]
pub struct Vector {
    data: Vec<f64>,
}

impl Vector {
    pub fn new(data: Vec<f64>) -> Self {
        Vector { data }
    }

    pub fn zeros(dim: usize) -> Self {
        Vector {
            data: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector::new(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + s * b)
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Vector {
        Vector::new(self.data.iter().map(|a| a * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn ensure_finite(&self, context: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(FixinvError::NonFiniteOutput { context })
        }
    }

    /// Entrywise bit equality; distinguishes 0.0 from -0.0 and is what the
    /// update-stall detector relies on.
    pub fn bit_eq(&self, other: &Vector) -> bool {
        self.dim() == other.dim()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.data[i]
    }
}

impl From<Vec<f64>> for Vector {
    fn from(data: Vec<f64>) -> Self {
        Vector::new(data)
    }
}

impl FromIterator<f64> for Vector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        Vector::new(iter.into_iter().collect())
    }
}

// ---------------------------------------------------------------------------
// Precision mode
// ---------------------------------------------------------------------------

/// Evaluation precision, threaded through encode/decode and every solver.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionMode {
    /// Plain f64 everywhere.
    Full,
    /// Round layer outputs and solver state updates to binary16.
    HalfEmulated,
}

impl PrecisionMode {
    /// Applies the mode's rounding to a state vector or layer output.
    pub fn quantize(&self, v: Vector) -> Vector {
        match self {
            PrecisionMode::Full => v,
            PrecisionMode::HalfEmulated => round_to_half(&v),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PrecisionMode::Full => "full",
            PrecisionMode::HalfEmulated => "half",
        }
    }
}

// ---------------------------------------------------------------------------
// Operator pairs
// ---------------------------------------------------------------------------

/// Backing implementation of an encoder-decoder pair.
///
/// Implementations must be deterministic: identical inputs under a fixed
/// [`PrecisionMode`] yield bit-identical outputs.
pub trait PairOps: Send + Sync {
    fn pixel_dim(&self) -> usize;
    fn latent_dim(&self) -> usize;

    /// `E(x)`, with mode-dependent rounding applied at each layer output.
    fn encode(&self, x: &Vector, mode: PrecisionMode) -> Vector;

    /// `D(z)`, with mode-dependent rounding applied at each layer output.
    fn decode(&self, z: &Vector, mode: PrecisionMode) -> Vector;

    /// `grad_z ||x - D(z)||^2` when the pair supports gradients.
    fn loss_gradient(&self, _x: &Vector, _z: &Vector, _mode: PrecisionMode) -> Option<Vector> {
        None
    }

    /// The composite matrix `E*D` when the pair is linear.
    fn composite(&self) -> Option<&nalgebra::DMatrix<f64>> {
        None
    }
}

/// An encoder-decoder pair; cheap to clone and safe to share across threads.
#[derive(Clone)]
pub struct OperatorPair {
    ops: Arc<dyn PairOps>,
}

impl OperatorPair {
    pub fn from_ops(ops: Arc<dyn PairOps>) -> Self {
        OperatorPair { ops }
    }

    pub fn pixel_dim(&self) -> usize {
        self.ops.pixel_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.ops.latent_dim()
    }

    pub fn encode(&self, x: &Vector, mode: PrecisionMode) -> Result<Vector> {
        if x.dim() != self.pixel_dim() {
            return Err(FixinvError::DimensionMismatch {
                context: "encode input",
                expected: self.pixel_dim(),
                got: x.dim(),
            });
        }
        let out = self.ops.encode(x, mode);
        debug_assert_eq!(out.dim(), self.latent_dim());
        out.ensure_finite("encode output")?;
        Ok(out)
    }

    pub fn decode(&self, z: &Vector, mode: PrecisionMode) -> Result<Vector> {
        if z.dim() != self.latent_dim() {
            return Err(FixinvError::DimensionMismatch {
                context: "decode input",
                expected: self.latent_dim(),
                got: z.dim(),
            });
        }
        let out = self.ops.decode(z, mode);
        debug_assert_eq!(out.dim(), self.pixel_dim());
        out.ensure_finite("decode output")?;
        Ok(out)
    }

    pub fn has_gradient(&self) -> bool {
        self.ops
            .loss_gradient(
                &Vector::zeros(self.pixel_dim()),
                &Vector::zeros(self.latent_dim()),
                PrecisionMode::Full,
            )
            .is_some()
    }

    /// `grad_z ||x - D(z)||^2`; errors with `NoGradient` when the pair has
    /// no gradient capability.
    pub fn loss_gradient(&self, x: &Vector, z: &Vector, mode: PrecisionMode) -> Result<Vector> {
        if x.dim() != self.pixel_dim() {
            return Err(FixinvError::DimensionMismatch {
                context: "gradient pixel input",
                expected: self.pixel_dim(),
                got: x.dim(),
            });
        }
        if z.dim() != self.latent_dim() {
            return Err(FixinvError::DimensionMismatch {
                context: "gradient latent input",
                expected: self.latent_dim(),
                got: z.dim(),
            });
        }
        let g = self
            .ops
            .loss_gradient(x, z, mode)
            .ok_or(FixinvError::NoGradient)?;
        g.ensure_finite("loss gradient")?;
        Ok(g)
    }

    pub fn composite(&self) -> Option<&nalgebra::DMatrix<f64>> {
        self.ops.composite()
    }
}

// ---------------------------------------------------------------------------
// Residual operator
// ---------------------------------------------------------------------------

/// `T(z) = E(D(z)) - E(x)`, the operator whose zeros are the relaxed
/// inversion solutions.
#[derive(Clone)]
pub struct ResidualOperator {
    pair: OperatorPair,
    target_latent: Vector,
}

impl ResidualOperator {
    /// Builds the operator from a precomputed target latent `E(x)`.
    pub fn new(pair: OperatorPair, target_latent: Vector) -> Result<Self> {
        if target_latent.dim() != pair.latent_dim() {
            return Err(FixinvError::DimensionMismatch {
                context: "residual target latent",
                expected: pair.latent_dim(),
                got: target_latent.dim(),
            });
        }
        Ok(ResidualOperator {
            pair,
            target_latent,
        })
    }

    /// Builds the operator for a pixel-space target, encoding it under the
    /// given mode.
    pub fn for_target_pixel(pair: OperatorPair, x: &Vector, mode: PrecisionMode) -> Result<Self> {
        let target = pair.encode(x, mode)?;
        ResidualOperator::new(pair, target)
    }

    /// Evaluates `T(z)`. Each encoder/decoder layer rounds under
    /// `HalfEmulated`; the final subtraction is an intermediate accumulation
    /// and stays in full precision.
    pub fn apply(&self, z: &Vector, mode: PrecisionMode) -> Result<Vector> {
        let decoded = self.pair.decode(z, mode)?;
        let encoded = self.pair.encode(&decoded, mode)?;
        let out = encoded.sub(&self.target_latent);
        out.ensure_finite("residual output")?;
        Ok(out)
    }

    pub fn target_latent(&self) -> &Vector {
        &self.target_latent
    }

    pub fn pair(&self) -> &OperatorPair {
        &self.pair
    }
}
