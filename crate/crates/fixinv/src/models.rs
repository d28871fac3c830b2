//! Deterministic toy encoder-decoder pairs.
//!
//! Three constructions:
//! - `PcaOptimal`: the optimal linear autoencoder of a seeded synthetic
//!   covariance. Its composite satisfies `E*D = I` exactly (up to
//!   eigensolver error), which makes it the 1-cocoercive reference case.
//! - `LossySpectrum`: a linear pair whose composite `E*D` is symmetric
//!   positive definite with a prescribed spectrum, so the cocoercivity
//!   constant `beta = 1/lambda_max` is known exactly.
//! - MLP: a fixed-weight multilayer pair with analytic gradients, the
//!   nonlinear stand-in used by the gradient-based baselines. Its
//!   cocoercivity is empirical only.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{FixinvError, Result};
use crate::operators::{OperatorPair, PairOps, PrecisionMode, Vector};

/// Ridge added to the synthetic covariance so its eigenvalues are distinct
/// and positive.
const COVARIANCE_RIDGE: f64 = 1e-6;

/// RNG for a given seed and draw stream. Distinct streams of the same seed
/// are independent, which keeps the draw order of one consumer from
/// perturbing another.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws a rows x cols matrix of N(0, scale^2) entries in a pinned order:
/// row by row, column within row.
fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let g: f64 = rng.sample(StandardNormal);
            m[(r, c)] = scale * g;
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Linear pairs
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum LinearVariant {
    /// Optimal linear autoencoder: `E*D = I` on the latent space.
    PcaOptimal,
    /// Composite `E*D = Q diag(lambda) Q^T` for a seeded rotation `Q`.
    LossySpectrum(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct LinearPairSpec {
    pub pixel_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub variant: LinearVariant,
}

struct LinearPair {
    e: DMatrix<f64>,
    d: DMatrix<f64>,
    composite: DMatrix<f64>,
}

impl PairOps for LinearPair {
    fn pixel_dim(&self) -> usize {
        self.d.nrows()
    }

    fn latent_dim(&self) -> usize {
        self.e.nrows()
    }

    fn encode(&self, x: &Vector, mode: PrecisionMode) -> Vector {
        let v = DVector::from_column_slice(x.as_slice());
        mode.quantize(Vector::new((&self.e * v).iter().copied().collect()))
    }

    fn decode(&self, z: &Vector, mode: PrecisionMode) -> Vector {
        let v = DVector::from_column_slice(z.as_slice());
        mode.quantize(Vector::new((&self.d * v).iter().copied().collect()))
    }

    fn loss_gradient(&self, x: &Vector, z: &Vector, mode: PrecisionMode) -> Option<Vector> {
        // grad_z ||x - D z||^2 = -2 D^T (x - D z)
        let dz = self.decode(z, mode);
        let r = DVector::from_column_slice(dz.sub(x).as_slice());
        let g = 2.0 * (self.d.transpose() * r);
        Some(mode.quantize(Vector::new(g.iter().copied().collect())))
    }

    fn composite(&self) -> Option<&DMatrix<f64>> {
        Some(&self.composite)
    }
}

/// Builds the `(E, D)` matrices for a linear spec. Exposed so tests can
/// verify the composite with an independent multiplication.
pub fn linear_pair_matrices(spec: &LinearPairSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = spec.pixel_dim;
    let f = spec.latent_dim;
    if f == 0 || f > n {
        return Err(FixinvError::InvalidSpec(format!(
            "latent_dim must satisfy 1 <= F <= N, got F={f}, N={n}"
        )));
    }
    let mut rng = seeded_rng(spec.seed, 0);
    match &spec.variant {
        LinearVariant::PcaOptimal => {
            let a = gaussian_matrix(&mut rng, n, n, 1.0);
            let sigma = &a * a.transpose() + DMatrix::identity(n, n) * COVARIANCE_RIDGE;
            let eig = sigma.symmetric_eigen();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
            let mut d = DMatrix::zeros(n, f);
            for (col, &idx) in order.iter().take(f).enumerate() {
                d.set_column(col, &eig.eigenvectors.column(idx));
            }
            let e = d.transpose();
            Ok((e, d))
        }
        LinearVariant::LossySpectrum(eigenvalues) => {
            if eigenvalues.len() != f {
                return Err(FixinvError::InvalidSpec(format!(
                    "LossySpectrum needs {f} eigenvalues, got {}",
                    eigenvalues.len()
                )));
            }
            if eigenvalues.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
                return Err(FixinvError::InvalidSpec(
                    "LossySpectrum eigenvalues must be positive".into(),
                ));
            }
            // D gets orthonormal columns, so E = M D^T gives E*D = M exactly.
            let d = gaussian_matrix(&mut rng, n, f, 1.0).qr().q();
            let q = gaussian_matrix(&mut rng, f, f, 1.0).qr().q();
            let m = &q * DMatrix::from_diagonal(&DVector::from_row_slice(eigenvalues)) * q.transpose();
            let m = (&m + m.transpose()) * 0.5;
            let e = &m * d.transpose();
            Ok((e, d))
        }
    }
}

/// Wraps explicit `(E, D)` matrices as an operator pair. The stored
/// composite is the numeric product `E*D`.
pub fn linear_pair_from_matrices(e: DMatrix<f64>, d: DMatrix<f64>) -> Result<OperatorPair> {
    if e.ncols() != d.nrows() || e.nrows() != d.ncols() {
        return Err(FixinvError::InvalidSpec(format!(
            "incompatible encoder {}x{} / decoder {}x{}",
            e.nrows(),
            e.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    let composite = &e * &d;
    Ok(OperatorPair::from_ops(Arc::new(LinearPair {
        e,
        d,
        composite,
    })))
}

pub fn build_linear_pair(spec: &LinearPairSpec) -> Result<OperatorPair> {
    let (e, d) = linear_pair_matrices(spec)?;
    match &spec.variant {
        LinearVariant::PcaOptimal => linear_pair_from_matrices(e, d),
        LinearVariant::LossySpectrum(_) => {
            // The contract is the intended composite, not its numeric
            // reconstruction; store E*D which agrees to machine precision.
            linear_pair_from_matrices(e, d)
        }
    }
}

/// `beta = 1 / lambda_max(E*D)` for linear pairs with a symmetric positive
/// definite composite; `None` for MLP pairs, whose cocoercivity is
/// empirical only.
pub fn cocoercivity_constant(pair: &OperatorPair) -> Option<f64> {
    let m = pair.composite()?;
    let sym = (m + m.transpose()) * 0.5;
    let lambda_max = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if lambda_max > 0.0 {
        Some(1.0 / lambda_max)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// MLP pairs
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    LeakyRelu(f64),
}

impl Activation {
    fn apply(&self, u: f64) -> f64 {
        match self {
            Activation::Tanh => u.tanh(),
            Activation::LeakyRelu(slope) => {
                if u > 0.0 {
                    u
                } else {
                    slope * u
                }
            }
        }
    }

    fn derivative(&self, u: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = u.tanh();
                1.0 - t * t
            }
            Activation::LeakyRelu(slope) => {
                if u > 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpPairSpec {
    /// Widths from pixel input to latent output, e.g. `[64, 32, 16]`.
    pub encoder_widths: Vec<usize>,
    /// Widths from latent input to pixel output, e.g. `[16, 32, 64]`.
    pub decoder_widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub weight_scale: f64,
}

struct Mlp {
    weights: Vec<DMatrix<f64>>,
    activation: Activation,
}

impl Mlp {
    /// Forward pass; hidden layers activate, the last layer is linear.
    /// Under `HalfEmulated` each layer output (post-activation) rounds to
    /// binary16.
    fn forward(&self, v: &[f64], mode: PrecisionMode) -> Vector {
        let mut a = Vector::new(v.to_vec());
        let last = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            let u = w * DVector::from_column_slice(a.as_slice());
            let out: Vec<f64> = if i < last {
                u.iter().map(|&x| self.activation.apply(x)).collect()
            } else {
                u.iter().copied().collect()
            };
            a = mode.quantize(Vector::new(out));
        }
        a
    }

    /// Forward pass keeping pre-activations for backpropagation.
    fn forward_trace(&self, v: &[f64], mode: PrecisionMode) -> (Vec<DVector<f64>>, Vector) {
        let mut a = Vector::new(v.to_vec());
        let last = self.weights.len() - 1;
        let mut preacts = Vec::with_capacity(self.weights.len());
        for (i, w) in self.weights.iter().enumerate() {
            let u = w * DVector::from_column_slice(a.as_slice());
            let out: Vec<f64> = if i < last {
                u.iter().map(|&x| self.activation.apply(x)).collect()
            } else {
                u.iter().copied().collect()
            };
            preacts.push(u);
            a = mode.quantize(Vector::new(out));
        }
        (preacts, a)
    }
}

struct MlpPair {
    encoder: Mlp,
    decoder: Mlp,
}

impl PairOps for MlpPair {
    fn pixel_dim(&self) -> usize {
        self.encoder.weights[0].ncols()
    }

    fn latent_dim(&self) -> usize {
        self.decoder.weights[0].ncols()
    }

    fn encode(&self, x: &Vector, mode: PrecisionMode) -> Vector {
        self.encoder.forward(x.as_slice(), mode)
    }

    fn decode(&self, z: &Vector, mode: PrecisionMode) -> Vector {
        self.decoder.forward(z.as_slice(), mode)
    }

    fn loss_gradient(&self, x: &Vector, z: &Vector, mode: PrecisionMode) -> Option<Vector> {
        // Exact backpropagation of ||x - D(z)||^2 through the decoder.
        // Backward layer outputs round under HalfEmulated, mirroring the
        // forward rule.
        let (preacts, out) = self.decoder.forward_trace(z.as_slice(), mode);
        let last = self.decoder.weights.len() - 1;
        let mut s = out.sub(x).scale(2.0);
        for i in (0..self.decoder.weights.len()).rev() {
            let du: DVector<f64> = if i < last {
                DVector::from_iterator(
                    s.dim(),
                    s.iter()
                        .zip(preacts[i].iter())
                        .map(|(&si, &ui)| si * self.decoder.activation.derivative(ui)),
                )
            } else {
                DVector::from_column_slice(s.as_slice())
            };
            let back = self.decoder.weights[i].transpose() * du;
            s = mode.quantize(Vector::new(back.iter().copied().collect()));
        }
        Some(s)
    }
}

pub fn build_mlp_pair(spec: &MlpPairSpec) -> Result<OperatorPair> {
    if spec.encoder_widths.len() < 2 || spec.decoder_widths.len() < 2 {
        return Err(FixinvError::InvalidSpec(
            "encoder and decoder need at least input and output widths".into(),
        ));
    }
    if spec.encoder_widths.iter().any(|&w| w == 0) || spec.decoder_widths.iter().any(|&w| w == 0) {
        return Err(FixinvError::InvalidSpec("zero layer width".into()));
    }
    let n = *spec.encoder_widths.first().unwrap();
    let f = *spec.encoder_widths.last().unwrap();
    if *spec.decoder_widths.first().unwrap() != f || *spec.decoder_widths.last().unwrap() != n {
        return Err(FixinvError::InvalidSpec(format!(
            "width mismatch: encoder {:?} vs decoder {:?}",
            spec.encoder_widths, spec.decoder_widths
        )));
    }
    if !(spec.weight_scale > 0.0) {
        return Err(FixinvError::InvalidSpec("weight_scale must be positive".into()));
    }

    // Weight draw order is pinned: encoder layers first, then decoder
    // layers; each matrix row-major. Entries are N(0,1) scaled by
    // weight_scale / sqrt(fan_in).
    let mut rng = seeded_rng(spec.seed, 0);
    let mut layers_from = |widths: &[usize], rng: &mut ChaCha8Rng| {
        widths
            .windows(2)
            .map(|w| gaussian_matrix(rng, w[1], w[0], spec.weight_scale / (w[0] as f64).sqrt()))
            .collect::<Vec<_>>()
    };
    let encoder = Mlp {
        weights: layers_from(&spec.encoder_widths, &mut rng),
        activation: spec.activation,
    };
    let decoder = Mlp {
        weights: layers_from(&spec.decoder_widths, &mut rng),
        activation: spec.activation,
    };
    Ok(OperatorPair::from_ops(Arc::new(MlpPair {
        encoder,
        decoder,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs_dev_from_identity(m: &DMatrix<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let target = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((m[(r, c)] - target).abs());
            }
        }
        worst
    }

    #[test]
    fn pca_composite_is_identity() {
        let spec = LinearPairSpec {
            pixel_dim: 16,
            latent_dim: 4,
            seed: 7,
            variant: LinearVariant::PcaOptimal,
        };
        let (e, d) = linear_pair_matrices(&spec).unwrap();
        // Direct matrix multiplication as the oracle.
        let product = &e * &d;
        assert!(max_abs_dev_from_identity(&product) <= 1e-10);
    }

    #[test]
    fn pca_full_rank_inverts_both_ways() {
        let spec = LinearPairSpec {
            pixel_dim: 6,
            latent_dim: 6,
            seed: 3,
            variant: LinearVariant::PcaOptimal,
        };
        let (e, d) = linear_pair_matrices(&spec).unwrap();
        assert!(max_abs_dev_from_identity(&(&e * &d)) <= 1e-8);
        assert!(max_abs_dev_from_identity(&(&d * &e)) <= 1e-8);
    }

    #[test]
    fn lossy_identity_rotation_case() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let d = DMatrix::identity(2, 2);
        let pair = linear_pair_from_matrices(e, d).unwrap();
        let m = pair.composite().unwrap();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 1)], 0.5);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn lossy_spectrum_realizes_requested_eigenvalues() {
        let spec = LinearPairSpec {
            pixel_dim: 8,
            latent_dim: 3,
            seed: 11,
            variant: LinearVariant::LossySpectrum(vec![2.0, 1.0, 0.25]),
        };
        let (e, d) = linear_pair_matrices(&spec).unwrap();
        let product = &e * &d;
        // Oracle: eigendecompose the independently computed product.
        let mut eigs: Vec<f64> = product.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(f64::total_cmp);
        assert!((eigs[0] - 0.25).abs() <= 1e-9);
        assert!((eigs[1] - 1.0).abs() <= 1e-9);
        assert!((eigs[2] - 2.0).abs() <= 1e-9);
        // Symmetry of the composite.
        assert!((&product - product.transpose()).abs().max() <= 1e-12);
    }

    #[test]
    fn lossy_spectrum_rejects_bad_specs() {
        let bad = LinearPairSpec {
            pixel_dim: 4,
            latent_dim: 2,
            seed: 0,
            variant: LinearVariant::LossySpectrum(vec![1.0, -0.5]),
        };
        assert!(matches!(
            build_linear_pair(&bad),
            Err(FixinvError::InvalidSpec(_))
        ));
        let bad = LinearPairSpec {
            pixel_dim: 4,
            latent_dim: 5,
            seed: 0,
            variant: LinearVariant::PcaOptimal,
        };
        assert!(matches!(
            build_linear_pair(&bad),
            Err(FixinvError::InvalidSpec(_))
        ));
    }

    #[test]
    fn lossy_composite_psd_inner_product_bound() {
        // <M d, d> >= (1/lambda_max) ||M d||^2 holds for symmetric PSD M.
        let spec = LinearPairSpec {
            pixel_dim: 16,
            latent_dim: 8,
            seed: 21,
            variant: LinearVariant::LossySpectrum(vec![1.0, 0.9, 0.7, 0.5, 0.3, 0.2, 0.1, 0.05]),
        };
        let pair = build_linear_pair(&spec).unwrap();
        let m = pair.composite().unwrap().clone();
        let beta = cocoercivity_constant(&pair).unwrap();
        let mut rng = seeded_rng(99, 1);
        for _ in 0..1000 {
            let dvec: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
            let dv = DVector::from_column_slice(&dvec);
            let md = &m * &dv;
            let lhs = md.dot(&dv);
            let rhs = beta * md.dot(&md);
            assert!(lhs >= rhs - 1e-9, "lhs={lhs}, rhs={rhs}");
        }
    }

    #[test]
    fn cocoercivity_constant_known_spectra() {
        let pair = linear_pair_from_matrices(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!((cocoercivity_constant(&pair).unwrap() - 1.0).abs() < 1e-12);

        let pair = linear_pair_from_matrices(DMatrix::identity(3, 3), DMatrix::identity(3, 3))
            .unwrap();
        assert!((cocoercivity_constant(&pair).unwrap() - 1.0).abs() < 1e-12);

        let pair = linear_pair_from_matrices(
            DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        assert!((cocoercivity_constant(&pair).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn cocoercivity_constant_absent_for_mlp() {
        let pair = build_mlp_pair(&MlpPairSpec {
            encoder_widths: vec![6, 4, 3],
            decoder_widths: vec![3, 4, 6],
            activation: Activation::Tanh,
            seed: 5,
            weight_scale: 1.0,
        })
        .unwrap();
        assert!(cocoercivity_constant(&pair).is_none());
    }

    #[test]
    fn mlp_single_layer_matches_linear_gradient() {
        let w = DMatrix::from_row_slice(3, 2, &[0.5, -0.2, 1.0, 0.3, -0.7, 0.4]);
        let decoder = Mlp {
            weights: vec![w.clone()],
            activation: Activation::Tanh,
        };
        let encoder = Mlp {
            weights: vec![w.transpose()],
            activation: Activation::Tanh,
        };
        let pair = OperatorPair::from_ops(Arc::new(MlpPair { encoder, decoder }));
        let x = Vector::new(vec![1.0, -1.0, 0.5]);
        let z = Vector::new(vec![0.2, 0.9]);
        let g = pair.loss_gradient(&x, &z, PrecisionMode::Full).unwrap();
        // -2 D^T (x - D z), evaluated independently.
        let dz = &w * DVector::from_column_slice(z.as_slice());
        let r = DVector::from_column_slice(x.as_slice()) - dz;
        let expect = -2.0 * (w.transpose() * r);
        for i in 0..2 {
            assert!((g[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_gradient_matches_central_differences() {
        let spec = MlpPairSpec {
            encoder_widths: vec![10, 7, 4],
            decoder_widths: vec![4, 7, 10],
            activation: Activation::Tanh,
            seed: 17,
            weight_scale: 1.0,
        };
        let pair = build_mlp_pair(&spec).unwrap();
        let mut rng = seeded_rng(42, 2);
        let h = 1e-5;
        let loss = |x: &Vector, z: &Vector| -> f64 {
            pair.decode(z, PrecisionMode::Full).unwrap().sub(x).norm_sq()
        };
        for _ in 0..10 {
            let x: Vector = (0..10).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let z: Vector = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let g = pair.loss_gradient(&x, &z, PrecisionMode::Full).unwrap();
            for i in 0..4 {
                let mut zp = z.as_slice().to_vec();
                let mut zm = zp.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (loss(&x, &Vector::new(zp)) - loss(&x, &Vector::new(zm))) / (2.0 * h);
                let denom = fd.abs().max(g[i].abs()).max(1e-8);
                assert!(
                    ((g[i] - fd) / denom).abs() <= 1e-5,
                    "coordinate {i}: analytic {} vs fd {}",
                    g[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn mlp_leaky_relu_gradient_matches_central_differences() {
        let spec = MlpPairSpec {
            encoder_widths: vec![8, 5, 3],
            decoder_widths: vec![3, 5, 8],
            activation: Activation::LeakyRelu(0.1),
            seed: 23,
            weight_scale: 0.8,
        };
        let pair = build_mlp_pair(&spec).unwrap();
        let mut rng = seeded_rng(7, 2);
        let h = 1e-6;
        let loss = |x: &Vector, z: &Vector| -> f64 {
            pair.decode(z, PrecisionMode::Full).unwrap().sub(x).norm_sq()
        };
        let x: Vector = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let z: Vector = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let g = pair.loss_gradient(&x, &z, PrecisionMode::Full).unwrap();
        for i in 0..3 {
            let mut zp = z.as_slice().to_vec();
            let mut zm = zp.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (loss(&x, &Vector::new(zp)) - loss(&x, &Vector::new(zm))) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-6);
            assert!(((g[i] - fd) / denom).abs() <= 1e-4);
        }
    }

    #[test]
    fn mlp_same_seed_bit_identical() {
        let spec = MlpPairSpec {
            encoder_widths: vec![9, 6, 4],
            decoder_widths: vec![4, 6, 9],
            activation: Activation::Tanh,
            seed: 31,
            weight_scale: 1.0,
        };
        let a = build_mlp_pair(&spec).unwrap();
        let b = build_mlp_pair(&spec).unwrap();
        let mut rng = seeded_rng(1, 3);
        for _ in 0..5 {
            let z: Vector = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let x: Vector = (0..9).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            assert!(a
                .decode(&z, PrecisionMode::Full)
                .unwrap()
                .bit_eq(&b.decode(&z, PrecisionMode::Full).unwrap()));
            assert!(a
                .encode(&x, PrecisionMode::Full)
                .unwrap()
                .bit_eq(&b.encode(&x, PrecisionMode::Full).unwrap()));
            assert!(a
                .loss_gradient(&x, &z, PrecisionMode::Full)
                .unwrap()
                .bit_eq(&b.loss_gradient(&x, &z, PrecisionMode::Full).unwrap()));
        }
    }

    #[test]
    fn mlp_width_mismatch_rejected() {
        let spec = MlpPairSpec {
            encoder_widths: vec![8, 4],
            decoder_widths: vec![3, 8],
            activation: Activation::Tanh,
            seed: 0,
            weight_scale: 1.0,
        };
        assert!(matches!(
            build_mlp_pair(&spec),
            Err(FixinvError::InvalidSpec(_))
        ));
    }
}
