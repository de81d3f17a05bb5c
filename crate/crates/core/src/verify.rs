//! Randomised identity checks on the operator layer: the inverse divergence
//! and the geometric decomposition.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::field::{Field, FieldKind, Spectrum};
use crate::geometry::{pack, packed_frobenius, packed_identity, DirectionSet};
use crate::operators::{asymmetry, inverse_divergence};
use crate::report::Record;
use crate::spectral::Engine;

pub const TOL_R_IDENTITY: f64 = 1e-10;
pub const TOL_R_STRUCTURE: f64 = 1e-12;
pub const TOL_GEOMETRY: f64 = 1e-12;

const MODULE_OPS: &str = "field_operators";
const MODULE_GEOM: &str = "direction_geometry";

/// Wavevector, amplitude and phase of each cosine in one component.
pub type Modes = Vec<([i64; 3], f64, f64)>;

/// Draws `modes` random cosines per component with wavevectors in
/// `[-kmax, kmax]^d`, zero wavevector excluded.
pub fn random_modes(dim: usize, kmax: i64, modes: usize, rng: &mut ChaCha8Rng) -> Vec<Modes> {
    (0..dim)
        .map(|_| {
            let mut list = Vec::with_capacity(modes);
            while list.len() < modes {
                let mut k = [0i64; 3];
                for a in k.iter_mut().take(dim) {
                    *a = rng.gen_range(-kmax..=kmax);
                }
                if k.iter().all(|v| *v == 0) {
                    continue;
                }
                list.push((k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)));
            }
            list
        })
        .collect()
}

/// Sum of `modes` random cosines with wavevectors in `[-kmax, kmax]^d`,
/// zero wavevector excluded, in every component. Synthesized from its Fourier
/// coefficients, so `kmax` must stay below `n/2`.
pub fn random_mean_free_vector(engine: &Engine, kmax: i64, modes: usize, rng: &mut ChaCha8Rng) -> Field {
    let space = engine.space();
    assert!(2 * kmax < space.n as i64, "kmax {kmax} reaches the Nyquist mode of n = {}", space.n);
    let slot =
        |k: &[i64; 3]| (0..space.dim).fold(0usize, |acc, a| acc * space.n + k[a].rem_euclid(space.n as i64) as usize);
    let comps = random_modes(space.dim, kmax, modes, rng)
        .iter()
        .map(|list| {
            let mut c = vec![Complex64::new(0.0, 0.0); space.len()];
            for (k, amp, phase) in list {
                // Nodes start at -pi, so the FFT sees the phase shifted by -pi k.
                let shift = std::f64::consts::PI * k.iter().sum::<i64>() as f64;
                let coeff = Complex64::from_polar(0.5 * amp, phase - shift);
                let minus = [-k[0], -k[1], -k[2]];
                c[slot(k)] += coeff;
                c[slot(&minus)] += coeff.conj();
            }
            c
        })
        .collect();
    engine.inverse(&Spectrum::from_components(space, FieldKind::Vector, comps))
}

/// Uniformly random packed symmetric matrix with `|S - Id|_F <= radius`.
pub fn random_ball_matrix(dim: usize, radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let sym = dim * (dim + 1) / 2;
    loop {
        let e: Vec<f64> = (0..sym).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = packed_frobenius(dim, &e);
        if norm == 0.0 || norm > 1.0 {
            continue;
        }
        let r = radius * rng.gen_range(0.0f64..=1.0).powf(1.0 / sym as f64);
        let id = packed_identity(dim);
        return id.iter().zip(&e).map(|(i, v)| i + r * v / norm).collect();
    }
}

/// Worst values over a batch of inverse-divergence checks.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct InverseDivergenceStats {
    pub samples: usize,
    pub identity: f64,
    pub asymmetry: f64,
    pub trace: f64,
}

impl InverseDivergenceStats {
    pub fn passed(&self) -> bool {
        self.identity <= TOL_R_IDENTITY && self.asymmetry <= TOL_R_STRUCTURE && self.trace <= TOL_R_STRUCTURE
    }

    pub fn records(&self, dim: usize) -> Vec<Record> {
        let op = "inverse_divergence";
        vec![
            Record::check(0, &format!("r_identity_d{dim}"), self.identity, TOL_R_IDENTITY, MODULE_OPS, op),
            Record::check(0, &format!("r_asymmetry_d{dim}"), self.asymmetry, TOL_R_STRUCTURE, MODULE_OPS, op),
            Record::check(0, &format!("r_trace_d{dim}"), self.trace, TOL_R_STRUCTURE, MODULE_OPS, op),
        ]
    }
}

/// `|div R v - v|_C0 / |v|_C0`, asymmetry and `|tr R v|_C0 / |R v|_C0`
/// over `samples` random mean-free fields. Sample `i` draws from stream `i`
/// of the seeded generator, so the result does not depend on the thread count.
pub fn inverse_divergence_batch(engine: &Engine, samples: usize, seed: u64) -> Result<InverseDivergenceStats> {
    let kmax = (engine.space().n / 4) as i64;
    let worst = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let v = random_mean_free_vector(engine, kmax, 8, &mut rng);
            let r = inverse_divergence(engine, &v)?;
            let err = engine.div_sym(&r).diff(&v).sup_norm() / v.sup_norm();
            let tr = r.trace().sup_norm() / r.sup_norm().max(f64::MIN_POSITIVE);
            Ok::<_, crate::error::CiwError>([err, asymmetry(&r), tr])
        })
        .try_reduce(|| [0.0; 3], |a, b| Ok([a[0].max(b[0]), a[1].max(b[1]), a[2].max(b[2])]))?;
    Ok(InverseDivergenceStats { samples, identity: worst[0], asymmetry: worst[1], trace: worst[2] })
}

/// Worst values over a batch of geometric decompositions.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GeometryStats {
    pub samples: usize,
    pub reconstruction: f64,
    pub min_gamma: f64,
}

impl GeometryStats {
    pub fn passed(&self) -> bool {
        self.reconstruction <= TOL_GEOMETRY && self.min_gamma > 0.0
    }

    pub fn records(&self, dim: usize) -> Vec<Record> {
        let op = "gamma";
        vec![
            Record::check(
                0,
                &format!("geometric_reconstruction_d{dim}"),
                self.reconstruction,
                TOL_GEOMETRY,
                MODULE_GEOM,
                op,
            ),
            Record::verdict(
                0,
                &format!("geometric_min_gamma_d{dim}"),
                self.min_gamma,
                None,
                self.min_gamma > 0.0,
                MODULE_GEOM,
                op,
            ),
        ]
    }
}

/// `|S - sum gamma_k^2 k (x) k|_F` over `samples` random `S` in `B_{eps_u}(Id)`.
pub fn geometric_batch(ds: &DirectionSet, samples: usize, seed: u64) -> Result<GeometryStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GeometryStats { samples, reconstruction: 0.0, min_gamma: f64::INFINITY };
    for _ in 0..samples {
        let s = random_ball_matrix(ds.dim, ds.eps_u, &mut rng);
        let g = ds.gamma(&s)?;
        let w: Vec<f64> = g.iter().map(|v| v * v).collect();
        let back = ds.reassemble(&w);
        let diff = pack(ds.dim, |i, j| {
            let idx = crate::grid::sym_index(i, j, ds.dim);
            s[idx] - back[idx]
        });
        stats.reconstruction = stats.reconstruction.max(packed_frobenius(ds.dim, &diff));
        stats.min_gamma = g.iter().copied().fold(stats.min_gamma, f64::min);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Space;

    #[test]
    fn random_vectors_match_direct_summation() {
        let engine = Engine::new(Space::new(2, 32).unwrap());
        let v = random_mean_free_vector(&engine, 8, 6, &mut ChaCha8Rng::seed_from_u64(1));
        let modes = random_modes(2, 8, 6, &mut ChaCha8Rng::seed_from_u64(1));
        for (c, list) in modes.iter().enumerate() {
            let direct = Field::scalar_fn(engine.space(), |x| {
                list.iter().map(|(k, a, p)| a * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + p).cos()).sum()
            });
            let err = v.comp(c).iter().zip(direct.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-13, "{err}");
            assert!(v.mean(c).abs() < 1e-13);
        }
    }

    #[test]
    fn ball_matrices_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [2, 3] {
            for _ in 0..200 {
                let s = random_ball_matrix(d, 0.3, &mut rng);
                let id = packed_identity(d);
                let diff: Vec<f64> = s.iter().zip(&id).map(|(a, b)| a - b).collect();
                assert!(packed_frobenius(d, &diff) <= 0.3 + 1e-15);
            }
        }
    }

    #[test]
    fn small_batches_pass() {
        for d in [2, 3] {
            let engine = Engine::new(Space::new(d, 16).unwrap());
            assert!(inverse_divergence_batch(&engine, 3, 9).unwrap().passed());
            let ds = DirectionSet::build(d).unwrap();
            assert!(geometric_batch(&ds, 50, 9).unwrap().passed());
        }
    }
}
