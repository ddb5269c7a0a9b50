//! Seeded random streams and smooth random fields.
//!
//! Every random draw comes from a ChaCha stream keyed by the run seed, a named
//! purpose and an index, so samples can be generated in any order (or in
//! parallel) and still be reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

use crate::grid::{Grid, GridFunction};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Solver = 1,
    Analysis = 2,
    Sweep = 3,
}

/// Independent generator for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) ^ index);
    rng
}

/// Number of Fourier modes in [`smooth_field`].
pub const FIELD_MODES: usize = 5;

/// `Σ_k c_k / k · s_k(x, y)` with `c_k` uniform in `[-1, 1]` and `s_k` the
/// k-th sine mode of the domain (a product of sines in 2D, with the second
/// index drawn in `1..=5`). Vanishes on the boundary.
pub fn smooth_field<T: Real, R: Rng>(grid: &Arc<Grid<T>>, rng: &mut R) -> GridFunction<T> {
    let axes = grid.axes();
    let modes: Vec<(f64, usize, usize)> = (1..=FIELD_MODES)
        .map(|k| {
            let c = rng.gen_range(-1.0..=1.0) / k as f64;
            let l = if axes.len() > 1 {
                rng.gen_range(1..=FIELD_MODES)
            } else {
                0
            };
            (c, k, l)
        })
        .collect();
    let pi = std::f64::consts::PI;
    let (x0, lx) = (
        axes[0].lo.to_f64().unwrap(),
        (axes[0].hi - axes[0].lo).to_f64().unwrap(),
    );
    let second = axes
        .get(1)
        .map(|a| (a.lo.to_f64().unwrap(), (a.hi - a.lo).to_f64().unwrap()));
    GridFunction::from_fn(grid, |x, y| {
        let xi = (x.to_f64().unwrap() - x0) / lx;
        let v: f64 = modes
            .iter()
            .map(|&(c, k, l)| {
                let sx = (k as f64 * pi * xi).sin();
                match second {
                    Some((y0, ly)) => c * sx * (l as f64 * pi * (y.to_f64().unwrap() - y0) / ly).sin(),
                    None => c * sx,
                }
            })
            .sum();
        T::lit(v)
    })
}
