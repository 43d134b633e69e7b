use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};

pub const BLOCK_SIZES: [usize; 4] = [4, 8, 16, 32];

fn check_size(p: usize) -> Result<()> {
    if BLOCK_SIZES.contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("unsupported transform size {p} (expected 4, 8, 16 or 32)")))
    }
}

/// Orthonormal DCT-II basis, `basis[k * p + n]`, cached per size.
fn basis(p: usize) -> &'static [f64] {
    static CACHE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    let all = CACHE.get_or_init(|| BLOCK_SIZES.iter().map(|&p| build_basis(p)).collect());
    let i = BLOCK_SIZES.iter().position(|&s| s == p).expect("size checked by caller");
    &all[i]
}

fn build_basis(p: usize) -> Vec<f64> {
    let mut b = vec![0.0; p * p];
    for k in 0..p {
        let a = if k == 0 { (1.0 / p as f64).sqrt() } else { (2.0 / p as f64).sqrt() };
        for n in 0..p {
            b[k * p + n] = a * (PI * (2 * n + 1) as f64 * k as f64 / (2 * p) as f64).cos();
        }
    }
    b
}

/// `p × p` DCT coefficients of one block, row-major (`[v * p + u]`).
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpectrum {
    size: usize,
    coeffs: Vec<f64>,
}

impl BlockSpectrum {
    pub fn new(size: usize, coeffs: Vec<f64>) -> Result<Self> {
        check_size(size)?;
        if coeffs.len() != size * size {
            return Err(Error::shape(format!(
                "{size}x{size} spectrum needs {} coefficients, got {}",
                size * size,
                coeffs.len()
            )));
        }
        Ok(BlockSpectrum { size, coeffs })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn dc(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// `out = b · x · bᵀ` (or `bᵀ · x · b` when `inverse`).
fn separable(x: &[f64], p: usize, inverse: bool) -> Vec<f64> {
    let b = basis(p);
    let at = |k: usize, n: usize| if inverse { b[n * p + k] } else { b[k * p + n] };
    let mut tmp = vec![0.0; p * p];
    // rows
    for r in 0..p {
        for k in 0..p {
            tmp[r * p + k] = (0..p).map(|n| at(k, n) * x[r * p + n]).sum();
        }
    }
    // columns
    let mut out = vec![0.0; p * p];
    for c in 0..p {
        for k in 0..p {
            out[k * p + c] = (0..p).map(|n| at(k, n) * tmp[n * p + c]).sum();
        }
    }
    out
}

/// Forward 2-D orthonormal DCT-II of a `p × p` pixel block.
pub fn dct2(block: &[f64], p: usize) -> Result<BlockSpectrum> {
    check_size(p)?;
    if block.len() != p * p {
        return Err(Error::shape(format!("{p}x{p} block needs {} samples, got {}", p * p, block.len())));
    }
    Ok(BlockSpectrum { size: p, coeffs: separable(block, p, false) })
}

/// Inverse of [`dct2`].
pub fn idct2(spec: &BlockSpectrum) -> Vec<f64> {
    separable(&spec.coeffs, spec.size, true)
}
