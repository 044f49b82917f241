//! Loss along random rays through a trained parameter vector.
//!
//! For a unit direction `v` over the flattened parameters and a magnitude
//! `d`, the probe evaluates mean cross-entropy at `θ + d·v`. Wider optima
//! keep the loss low for larger `d`.

use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::training;

pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub directions: usize,
    /// Magnitudes, ascending from 0.
    pub grid: Vec<f64>,
    pub seed: u64,
}

impl PerturbationSpec {
    /// `steps` evenly spaced magnitudes from 0 to `d_max` inclusive.
    pub fn evenly_spaced(directions: usize, d_max: f64, steps: usize, seed: u64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("landscape.steps", "must be at least 1"));
        }
        if !(d_max >= 0.0 && d_max.is_finite()) {
            return Err(Error::config("landscape.d_max", "must be finite and non-negative"));
        }
        let grid = if steps == 1 {
            vec![0.0]
        } else {
            (0..steps).map(|i| d_max * i as f64 / (steps - 1) as f64).collect()
        };
        let spec = Self {
            directions,
            grid,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.directions == 0 {
            return Err(Error::config("landscape.directions", "must be at least 1"));
        }
        if self.grid.first() != Some(&0.0) || self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config("landscape.grid", "must start at 0 and increase strictly"));
        }
        Ok(())
    }
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self::evenly_spaced(20, 5.0, 11, 0).expect("valid default")
    }
}

/// Coordinates i.i.d. uniform in [-1, 1], scaled to unit length.
pub fn sample_direction(dim: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "direction", index);
    let u = Uniform::new_inclusive(-1.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| u.sample(&mut r)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub direction: usize,
    /// `(d, mean cross-entropy)` pairs.
    pub points: Vec<(f64, f64)>,
}

/// Sweeps seeded random directions.
pub fn landscape_sweep(ckpt: &Checkpoint, data: &Dataset, spec: &PerturbationSpec) -> Result<Vec<Curve>> {
    spec.validate()?;
    let dim = ckpt.params.num_scalars();
    let dirs: Vec<Vec<f64>> = (0..spec.directions)
        .map(|i| sample_direction(dim, spec.seed, i as u64))
        .collect();
    sweep_directions(ckpt, data, &dirs, &spec.grid)
}

/// Sweeps caller-supplied unit directions.
pub fn sweep_directions(ckpt: &Checkpoint, data: &Dataset, dirs: &[Vec<f64>], grid: &[f64]) -> Result<Vec<Curve>> {
    let base = ckpt.params.flatten();
    for (i, v) in dirs.iter().enumerate() {
        if v.len() != base.len() {
            return Err(Error::shape(
                "landscape",
                format!("direction {i} has {} entries for {} parameters", v.len(), base.len()),
            ));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::contract(format!("direction {i} has norm {norm}, expected 1")));
        }
    }
    dirs.par_iter()
        .enumerate()
        .map(|(i, v)| {
            let points = grid
                .iter()
                .map(|&d| {
                    let moved: Vec<f64> = base.iter().zip(v).map(|(t, vi)| t + d * vi).collect();
                    let params = ckpt.params.with_flat(&moved)?;
                    let loss = training::evaluate(&ckpt.spec, &params, data)?.ce;
                    Ok((d, loss))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Curve { direction: i, points })
        })
        .collect()
}

pub fn curves_csv(curves: &[Curve]) -> String {
    let mut s = String::from("direction,d,loss\n");
    for c in curves {
        for (d, loss) in &c.points {
            s.push_str(&format!("{},{},{}\n", c.direction, d, loss));
        }
    }
    s
}

/// Area between each curve and its value at `d = 0`, averaged over curves
/// (trapezoid rule).
pub fn mean_area_above_base(curves: &[Curve]) -> f64 {
    let area = |c: &Curve| {
        let base = c.points[0].1;
        c.points
            .windows(2)
            .map(|w| 0.5 * (w[1].0 - w[0].0) * ((w[0].1 - base) + (w[1].1 - base)))
            .sum::<f64>()
    };
    curves.iter().map(area).sum::<f64>() / curves.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_are_unit_and_seeded() {
        let a = sample_direction(50, 3, 0);
        assert!((a.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(a, sample_direction(50, 3, 0));
        assert_ne!(a, sample_direction(50, 3, 1));
    }

    #[test]
    fn grid_rules() {
        let s = PerturbationSpec::evenly_spaced(2, 5.0, 6, 0).unwrap();
        assert_eq!(s.grid, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(PerturbationSpec::evenly_spaced(2, 5.0, 1, 0).unwrap().grid, vec![0.0]);
        assert!(PerturbationSpec {
            directions: 1,
            grid: vec![1.0, 2.0],
            seed: 0
        }
        .validate()
        .is_err());
        assert_eq!(*PerturbationSpec::default().grid.last().unwrap(), 5.0);
    }

    #[test]
    fn area_of_flat_and_rising_curves() {
        let flat = Curve {
            direction: 0,
            points: vec![(0.0, 1.0), (1.0, 1.0)],
        };
        let rising = Curve {
            direction: 1,
            points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 3.0)],
        };
        assert_eq!(mean_area_above_base(std::slice::from_ref(&flat)), 0.0);
        assert_eq!(mean_area_above_base(&[rising]), 2.0);
        assert!(curves_csv(&[flat]).starts_with("direction,d,loss\n0,0,1\n"));
    }
}
