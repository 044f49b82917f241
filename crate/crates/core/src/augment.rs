//! Random horizontal flips and padded crops for image batches.

use std::cell::Cell;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentPolicy {
    /// Flip each sample left-right with probability 1/2.
    pub hflip: bool,
    /// Reflection-pad by this many pixels and crop back at a random offset.
    pub pad_crop: Option<usize>,
}

impl AugmentPolicy {
    /// Flip plus 4-pixel padded crop.
    pub fn standard() -> Self {
        Self {
            hflip: true,
            pad_crop: Some(4),
        }
    }

    pub fn is_identity(&self) -> bool {
        !self.hflip && self.pad_crop.unwrap_or(0) == 0
    }
}

thread_local! {
    static CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of non-identity [`augment`] calls made on this thread.
pub fn call_count() -> u64 {
    CALLS.with(Cell::get)
}

/// Augments a `[batch, c, h, w]` tensor in place.
pub fn augment<F: Real>(batch: &mut Tensor<F>, policy: &AugmentPolicy, rng: &mut Rng) -> Result<()> {
    if batch.ndim() != 4 {
        return Err(Error::contract(format!(
            "augmentation needs [batch, c, h, w] images, got {:?}",
            batch.shape()
        )));
    }
    if policy.is_identity() {
        return Ok(());
    }
    CALLS.with(|c| c.set(c.get() + 1));
    let (c, h, w) = {
        let s = batch.shape();
        (s[1], s[2], s[3])
    };
    let pad = policy.pad_crop.unwrap_or(0);
    if pad >= h || pad >= w {
        return Err(Error::contract(format!("padding {pad} too large for {h}×{w} images")));
    }
    let size = c * h * w;
    let mut scratch = vec![F::zero(); size];
    for img in batch.data_mut().chunks_mut(size) {
        let flip = policy.hflip && rng.random_bool(0.5);
        let (dy, dx) = if pad > 0 {
            (rng.random_range(0..=2 * pad), rng.random_range(0..=2 * pad))
        } else {
            (pad, pad)
        };
        if !flip && dy == pad && dx == pad {
            continue;
        }
        scratch.copy_from_slice(img);
        for ch in 0..c {
            let plane = &scratch[ch * h * w..(ch + 1) * h * w];
            for y in 0..h {
                let sy = reflect(y as isize + dy as isize - pad as isize, h);
                for x in 0..w {
                    let cx = if flip { w - 1 - x } else { x };
                    let sx = reflect(cx as isize + dx as isize - pad as isize, w);
                    img[ch * h * w + y * w + x] = plane[sy * w + sx];
                }
            }
        }
    }
    Ok(())
}

/// Mirror index without repeating the edge pixel (`-1 → 1`, `n → n-2`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let i = if i < 0 { -i } else { i };
    let i = if i >= n { 2 * (n - 1) - i } else { i };
    i as usize
}

/// Flips every sample of a `[batch, c, h, w]` tensor left-right.
pub fn hflip_all<F: Real>(batch: &mut Tensor<F>) -> Result<()> {
    if batch.ndim() != 4 {
        return Err(Error::contract("hflip needs [batch, c, h, w] images"));
    }
    let w = batch.shape()[3];
    for row in batch.data_mut().chunks_mut(w) {
        row.reverse();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn images() -> Tensor<f64> {
        let data = (0..2 * 3 * 5 * 6).map(|v| v as f64).collect();
        Tensor::new(vec![2, 3, 5, 6], data).unwrap()
    }

    #[test]
    fn empty_policy_is_identity() {
        let mut t = images();
        augment(&mut t, &AugmentPolicy::default(), &mut rng::stream(1, "a", 0)).unwrap();
        assert_eq!(t, images());
    }

    #[test]
    fn double_flip_is_identity() {
        let mut t = images();
        hflip_all(&mut t).unwrap();
        assert_ne!(t, images());
        hflip_all(&mut t).unwrap();
        assert_eq!(t, images());
    }

    #[test]
    fn crop_keeps_shape_and_values_come_from_the_image() {
        let mut t = images();
        let mut r = rng::stream(3, "a", 0);
        augment(&mut t, &AugmentPolicy::standard(), &mut r).unwrap();
        assert_eq!(t.shape(), &[2, 3, 5, 6]);
        // reflection padding never invents values: each plane keeps its own range
        for (p, plane) in t.data().chunks(30).enumerate() {
            let lo = (p * 30) as f64;
            assert!(plane.iter().all(|&v| v >= lo && v < lo + 30.0));
        }
    }

    #[test]
    fn rejects_non_images_and_counts_calls() {
        let mut flat = Tensor::<f64>::zeros(&[4, 8]);
        let mut r = rng::stream(3, "a", 0);
        assert!(augment(&mut flat, &AugmentPolicy::standard(), &mut r).is_err());
        let before = call_count();
        let mut t = images();
        augment(&mut t, &AugmentPolicy::standard(), &mut r).unwrap();
        assert_eq!(call_count(), before + 1);
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-4, 5), 4);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(8, 5), 0);
        assert_eq!(reflect(2, 5), 2);
    }
}
