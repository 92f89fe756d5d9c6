//! Deterministic synthetic images used by the regression and property suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::{Image, Mask};

/// Colour of the left region of [`two_region`] / [`two_color`].
pub const LEFT_COLOR: [f32; 3] = [0.8, 0.3, 0.2];
/// Colour of the right region.
pub const RIGHT_COLOR: [f32; 3] = [0.2, 0.5, 0.8];

pub fn constant(height: usize, width: usize, rgb: [f32; 3]) -> Image {
    Image::constant(height, width, rgb).expect("valid constant image")
}

/// Left/right halves in two colours with seeded uniform texture of
/// amplitude ±`noise` per channel, clamped to `[0, 1]`.
pub fn two_region(size: usize, noise: f32, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter: Vec<f32> = (0..3 * size * size)
        .map(|_| rng.gen_range(-noise..=noise))
        .collect();
    Image::from_fn(size, size, |y, x| {
        let base = if x < size / 2 { LEFT_COLOR } else { RIGHT_COLOR };
        let i = 3 * (y * size + x);
        [
            (base[0] + jitter[i]).clamp(0.0, 1.0),
            (base[1] + jitter[i + 1]).clamp(0.0, 1.0),
            (base[2] + jitter[i + 2]).clamp(0.0, 1.0),
        ]
    })
    .expect("valid synthetic image")
}

/// The 64×64 textured two-region image used by the desk-scale regression.
pub fn regression_image() -> Image {
    two_region(64, 0.15, 0)
}

/// Noise-free left/right two-colour image.
pub fn two_color(size: usize) -> Image {
    two_region(size, 0.0, 0)
}

/// Ground-truth region of [`two_region`] images: `true` on the left half.
pub fn left_region(size: usize) -> Mask {
    Mask::from_fn(size, size, |_, x| x < size / 2)
}
