//! Raw binary field dumps.
//!
//! Layout (little endian): a 64-byte header
//!
//! | offset | type    | content                     |
//! |--------|---------|-----------------------------|
//! | 0      | [u8; 4] | magic `CIWF`                |
//! | 4      | u32     | format version               |
//! | 8      | u32     | dimension d                 |
//! | 12     | u32     | points per axis n           |
//! | 16     | u32     | time samples n_t            |
//! | 20     | u32     | component count             |
//! | 24     | ..64    | zero padding                |
//!
//! followed by `n_t * ncomp * n^d` complex coefficients stored as `(re, im)`
//! pairs of f64, ordered by time sample, then component, then wavevector in
//! row-major FFT slot order (slot `k` holds frequency `k` for `k <= n/2` and
//! `k - n` above). Coefficients are those of the expansion
//! `f(x) = sum_xi c_xi exp(i xi . x)` on `[-pi, pi]^d`.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{CiwError, Result};
use crate::field::Field;
use crate::report::atomic_write;
use crate::spectral::Engine;

pub const MAGIC: &[u8; 4] = b"CIWF";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u32,
    pub dim: u32,
    pub n: u32,
    pub n_t: u32,
    pub ncomp: u32,
}

impl DumpHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..4].copy_from_slice(MAGIC);
        for (slot, v) in [self.version, self.dim, self.n, self.n_t, self.ncomp].iter().enumerate() {
            out[4 + 4 * slot..8 + 4 * slot].copy_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(CiwError::Serialize("not a CIWF dump".into()));
        }
        let word = |slot: usize| u32::from_le_bytes(bytes[4 + 4 * slot..8 + 4 * slot].try_into().expect("4 bytes"));
        Ok(Self { version: word(0), dim: word(1), n: word(2), n_t: word(3), ncomp: word(4) })
    }
}

/// Sign relating the lattice DFT coefficient to the torus coefficient.
fn parity(engine: &Engine, idx: usize) -> f64 {
    let xi = engine.space().xi_of(idx);
    if xi.iter().sum::<i64>().rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Encodes time samples of one field into the dump format.
pub fn encode(engine: &Engine, samples: &[Field]) -> Result<Vec<u8>> {
    let first = samples.first().ok_or_else(|| CiwError::InvalidArgument("nothing to dump".into()))?;
    let space = first.space();
    let header = DumpHeader {
        version: VERSION,
        dim: space.dim as u32,
        n: space.n as u32,
        n_t: samples.len() as u32,
        ncomp: first.ncomp() as u32,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + samples.len() * first.ncomp() * space.len() * 16);
    out.extend_from_slice(&header.to_bytes());
    let signs: Vec<f64> = (0..space.len()).map(|i| parity(engine, i)).collect();
    for f in samples {
        first.check_same_shape(f)?;
        let spec = engine.forward(f);
        for c in 0..spec.ncomp() {
            for (v, s) in spec.comp(c).iter().zip(&signs) {
                out.extend_from_slice(&(v.re * s).to_le_bytes());
                out.extend_from_slice(&(v.im * s).to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn write_dump(path: &Path, engine: &Engine, samples: &[Field]) -> Result<()> {
    atomic_write(path, &encode(engine, samples)?)
}

/// Decodes a dump into its header and the coefficient stream.
pub fn decode(bytes: &[u8]) -> Result<(DumpHeader, Vec<Complex64>)> {
    let header = DumpHeader::from_bytes(bytes)?;
    let body = &bytes[HEADER_LEN..];
    let count = header.n_t as usize * header.ncomp as usize * (header.n as usize).pow(header.dim);
    if body.len() != count * 16 {
        return Err(CiwError::Serialize(format!("dump body has {} bytes, expected {}", body.len(), count * 16)));
    }
    let coeffs = body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    Ok((header, coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Space;

    #[test]
    fn header_round_trip() {
        let h = DumpHeader { version: 1, dim: 3, n: 32, n_t: 5, ncomp: 6 };
        let b = h.to_bytes();
        assert_eq!(&b[..4], b"CIWF");
        assert!(b[24..].iter().all(|&x| x == 0));
        assert_eq!(DumpHeader::from_bytes(&b).unwrap(), h);
    }

    #[test]
    fn cosine_has_torus_coefficients_one_half() {
        let space = Space::new(2, 16).unwrap();
        let engine = Engine::new(space);
        let f = Field::scalar_fn(space, |x| x[0].cos());
        let bytes = encode(&engine, &[f]).unwrap();
        let (h, c) = decode(&bytes).unwrap();
        assert_eq!(h.ncomp, 1);
        // Slot of xi = (1, 0) and (-1, 0) in row-major order.
        let plus = space.flatten(&[1, 0]);
        let minus = space.flatten(&[15, 0]);
        assert!((c[plus].re - 0.5).abs() < 1e-14);
        assert!((c[minus].re - 0.5).abs() < 1e-14);
        let others: f64 = c.iter().enumerate().filter(|(i, _)| *i != plus && *i != minus).map(|(_, v)| v.norm()).sum();
        assert!(others < 1e-13);
    }
}
