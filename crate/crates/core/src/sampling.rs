//! Seeded random streams shared by every stochastic routine.
//!
//! All randomness comes from ChaCha8 with a 64-bit seed and a 64-bit stream
//! id. Monte Carlo path `i` owns streams `2i` (diffusion) and `2i + 1`
//! (jumps); auxiliary samplers (probe directions, perturbations) use streams
//! at [`AUX_STREAM_BASE`] and above so they never collide with path streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::model::{DomainDescription, Vector};

pub const AUX_STREAM_BASE: u64 = 1 << 62;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn aux_stream(seed: u64, purpose: u64) -> ChaCha8Rng {
    stream(seed, AUX_STREAM_BASE + purpose)
}

/// Uniform direction on the unit sphere of `R^dim`.
pub fn unit_direction<R: rand::Rng>(rng: &mut R, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Random point `center + s·u` with `u` uniform on the sphere and
/// `s ≤ radius`, pulled back to 90% of the distance to the domain boundary.
pub fn feasible_probe<R: rand::Rng>(
    rng: &mut R,
    domain: &DomainDescription,
    center: &Vector,
    radius: f64,
) -> Vector {
    let u = unit_direction(rng, center.len());
    let s: f64 = rng.random_range(0.0..=radius);
    let reach = 0.9 * domain.max_step(center, &u);
    center + u * s.min(reach)
}
