use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::em::Responsibilities;
use crate::error::{FitError, Result};

/// Independent generator for stream `stream` of master seed `seed`.
///
/// Streams never overlap, so per-candidate or per-repetition generators give
/// the same draws whatever order the work is scheduled in.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Hard random allocation: each row is an independent Multinomial(1, 1/G, ..., 1/G) draw.
pub fn random_z<R: Rng + ?Sized>(n: usize, groups: usize, rng: &mut R) -> Result<Responsibilities> {
    if groups == 0 || n < groups {
        return Err(FitError::InvalidConfig(format!("need n >= G >= 1, got n = {n}, G = {groups}")));
    }
    let mut m = DMatrix::zeros(n, groups);
    for i in 0..n {
        m[(i, rng.gen_range(0..groups))] = 1.0;
    }
    Responsibilities::new(m)
}
