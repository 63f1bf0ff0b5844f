use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::structure::{Disk, LayerState, PredicateSpec, SampleBox};

/// The deterministic generator behind every seeded operation.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point of the box; degenerate intervals return their endpoint.
/// Upper ends are open.
pub fn uniform_in<R: Rng>(b: &SampleBox, rng: &mut R) -> LayerState {
    let coords = b
        .lo
        .iter()
        .zip(&b.hi)
        .map(|(&lo, &hi)| if lo < hi { rng.random_range(lo..hi) } else { lo })
        .collect();
    LayerState::new(coords).expect("box bounds are finite")
}

const MAX_REJECTIONS: usize = 10_000;

/// Rejection sample of a box point that also lies in the disk.
pub fn uniform_in_disk<R: Rng>(
    b: &SampleBox,
    disk: &Disk,
    preds: &[PredicateSpec],
    rng: &mut R,
) -> Result<LayerState> {
    for _ in 0..MAX_REJECTIONS {
        let v = uniform_in(b, rng);
        if disk.violation(&v, preds).is_none() {
            return Ok(v);
        }
    }
    Err(Error::InvalidDisk("rejection sampling found no point of the disk".into()))
}
