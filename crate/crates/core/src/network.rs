//! Width-`m` shallow ReLU predictor `f(x; ρ, a, W) = (ρ/√m) Σ_j a_j max(0, w_jᵀx)`.
//!
//! Only the inner weights `W` are trained; the signs `a` are fixed at
//! initialization and the initial weights `W0` are kept as an immutable
//! snapshot. The ReLU subgradient at zero is taken to be 1, i.e. the feature
//! gradient uses the indicator `1[w_jᵀx ≥ 0]`.
//!
//! Initialization draws, from one ChaCha8 stream, all `m·d` entries of `W`
//! row-major as standard normals (Ziggurat), and then the `m` signs, where
//! `a_j = +1` iff the top bit of the next `u32` is clear.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, norm, Matrix};
use crate::seed;

pub const MAGIC: &[u8; 5] = b"SRLN1";

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    rho: f64,
    signs: Vec<f64>,
    weights: Matrix,
    init_weights: Matrix,
    seed: Option<u64>,
}

/// Provenance of a network, recorded next to derived objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkId {
    pub seed: Option<u64>,
    pub width: usize,
    pub input_dim: usize,
    pub rho: f64,
}

impl Network {
    pub fn init(m: usize, d: usize, rho: f64, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid("width and input dimension must be positive"));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::invalid(format!("temperature must be positive, got {rho}")));
        }
        let mut rng = seed::rng(seed);
        let data: Vec<f64> = (0..m * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let signs = (0..m)
            .map(|_| if rng.next_u32() >> 31 == 0 { 1.0 } else { -1.0 })
            .collect();
        let weights = Matrix::from_vec(m, d, data)?;
        Ok(Network {
            rho,
            signs,
            init_weights: weights.clone(),
            weights,
            seed: Some(seed),
        })
    }

    /// Builds a network from explicit parts; `W0` is a copy of `weights`.
    pub fn from_parts(rho: f64, signs: Vec<f64>, weights: Matrix) -> Result<Self> {
        if signs.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                expected: weights.rows(),
                got: signs.len(),
            });
        }
        if signs.iter().any(|&a| a != 1.0 && a != -1.0) {
            return Err(Error::invalid("signs must be +1 or -1"));
        }
        if weights.rows() == 0 || weights.cols() == 0 {
            return Err(Error::invalid("width and input dimension must be positive"));
        }
        if !(rho > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {rho}")));
        }
        Ok(Network {
            rho,
            signs,
            init_weights: weights.clone(),
            weights,
            seed: None,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.weights.rows()
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    #[inline]
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Output scale `ρ/√m`.
    #[inline]
    pub fn scale(&self) -> f64 {
        self.rho / (self.width() as f64).sqrt()
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn init_weights(&self) -> &Matrix {
        &self.init_weights
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn id(&self) -> NetworkId {
        NetworkId {
            seed: self.seed,
            width: self.width(),
            input_dim: self.input_dim(),
            rho: self.rho,
        }
    }

    pub fn set_weights(&mut self, weights: Matrix) -> Result<()> {
        self.weights.same_shape(&weights)?;
        self.weights = weights;
        Ok(())
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    /// `‖W − W0‖_F`.
    pub fn dist_from_init(&self) -> f64 {
        self.weights.dist(&self.init_weights)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_with(&self.weights, x))
    }

    /// Evaluates the network with the inner weights replaced by `w`.
    pub(crate) fn forward_with(&self, w: &Matrix, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (j, a) in self.signs.iter().enumerate() {
            let z = dot(w.row(j), x);
            if z >= 0.0 {
                acc += a * z;
            }
        }
        self.scale() * acc
    }

    /// `∇_W f(x; W)`: row `j` is `(ρ/√m) a_j 1[w_jᵀx ≥ 0] xᵀ`.
    pub fn feature_gradient(&self, x: &[f64]) -> Result<Matrix> {
        self.check_input(x)?;
        Ok(gradient_at(&self.weights, &self.signs, self.scale(), x))
    }

    /// Frozen features at the current weights.
    pub fn freeze(&self) -> FrozenFeatures {
        FrozenFeatures {
            scale: self.scale(),
            signs: self.signs.clone(),
            mask: self.weights.clone(),
        }
    }

    /// Frozen features at the initialization `W0`.
    pub fn freeze_init(&self) -> FrozenFeatures {
        FrozenFeatures {
            scale: self.scale(),
            signs: self.signs.clone(),
            mask: self.init_weights.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(self.width() as u64).to_le_bytes())?;
        out.write_all(&(self.input_dim() as u64).to_le_bytes())?;
        out.write_all(&self.rho.to_le_bytes())?;
        let signs: Vec<u8> = self.signs.iter().map(|&a| (a as i8) as u8).collect();
        out.write_all(&signs)?;
        for v in self.weights.as_slice().iter().chain(self.init_weights.as_slice()) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        read_exact(&mut input, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Malformed("bad network magic".into()));
        }
        let m = read_u64(&mut input)? as usize;
        let d = read_u64(&mut input)? as usize;
        let rho = f64::from_le_bytes(read_array(&mut input)?);
        if m == 0 || d == 0 || m.checked_mul(d).is_none() {
            return Err(Error::Malformed(format!("bad network shape {m}x{d}")));
        }
        let mut signs = vec![0u8; m];
        read_exact(&mut input, &mut signs)?;
        let signs = signs
            .into_iter()
            .map(|b| match b as i8 {
                1 => Ok(1.0),
                -1 => Ok(-1.0),
                other => Err(Error::Malformed(format!("bad sign byte {other}"))),
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut read_matrix = || -> Result<Matrix> {
            let data = (0..m * d)
                .map(|_| Ok(f64::from_le_bytes(read_array(&mut input)?)))
                .collect::<Result<Vec<f64>>>()?;
            Matrix::from_vec(m, d, data)
        };
        let weights = read_matrix()?;
        let init_weights = read_matrix()?;
        if !(rho > 0.0) {
            return Err(Error::Malformed(format!("bad temperature {rho}")));
        }
        Ok(Network {
            rho,
            signs,
            weights,
            init_weights,
            seed: None,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Malformed("truncated network file".into()),
        _ => Error::Io(e),
    })
}

fn read_array<R: Read>(r: &mut R) -> Result<[u8; 8]> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(b)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn gradient_at(mask: &Matrix, signs: &[f64], scale: f64, x: &[f64]) -> Matrix {
    let mut g = Matrix::zeros(mask.rows(), mask.cols());
    for (j, a) in signs.iter().enumerate() {
        if dot(mask.row(j), x) >= 0.0 {
            let c = scale * a;
            for (gi, xi) in g.row_mut(j).iter_mut().zip(x) {
                *gi = c * xi;
            }
        }
    }
    g
}

/// Linearized predictor `f^{(i)}(x; V) = ⟨∇f(x; W_i), V⟩` with the activation
/// pattern frozen at `W_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenFeatures {
    scale: f64,
    signs: Vec<f64>,
    mask: Matrix,
}

impl FrozenFeatures {
    pub fn mask(&self) -> &Matrix {
        &self.mask
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.mask.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.mask.cols(),
                got: x.len(),
            });
        }
        Ok(gradient_at(&self.mask, &self.signs, self.scale, x))
    }

    pub fn forward(&self, v: &Matrix, x: &[f64]) -> Result<f64> {
        self.mask.same_shape(v)?;
        if x.len() != self.mask.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.mask.cols(),
                got: x.len(),
            });
        }
        Ok(self.forward_unchecked(v, x))
    }

    pub(crate) fn forward_unchecked(&self, v: &Matrix, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (j, a) in self.signs.iter().enumerate() {
            let z = dot(self.mask.row(j), x);
            if z >= 0.0 {
                acc += a * dot(v.row(j), x);
            }
        }
        self.scale * acc
    }
}

/// Bias-augmented input `(x, 1)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedInput(Vec<f64>);

impl AugmentedInput {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn augment(x: &[f64], assert_unit_ball: bool) -> Result<AugmentedInput> {
    if assert_unit_ball {
        let n = norm(x);
        if n > 1.0 + 1e-12 {
            return Err(Error::NormViolation { norm: n });
        }
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v: Vec<f64> = x.iter().map(|xi| xi * s).collect();
    v.push(s);
    Ok(AugmentedInput(v))
}
