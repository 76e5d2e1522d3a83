//! Conditional 2-D Gaussian mixtures with closed-form per-class targets.

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianClass {
    pub mean: [f64; 2],
    pub std: f64,
}

/// Global affine map `u = 0.5 + (x - center) / (2 * half_width)` taking the
/// square `center ± half_width` onto `[0, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashTransform {
    pub center: [f64; 2],
    pub half_width: f64,
}

impl SquashTransform {
    /// Smallest centred square containing `mean ± 3 std` of every class,
    /// widened by `margin` (>= 1).
    pub fn fitting(classes: &[GaussianClass], margin: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in classes {
            for k in 0..2 {
                lo[k] = lo[k].min(c.mean[k] - 3.0 * c.std);
                hi[k] = hi[k].max(c.mean[k] + 3.0 * c.std);
            }
        }
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let half_width = margin * ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0);
        Self { center, half_width }
    }

    pub fn forward(&self, p: [f64; 2]) -> [f64; 2] {
        let s = 2.0 * self.half_width;
        [0.5 + (p[0] - self.center[0]) / s, 0.5 + (p[1] - self.center[1]) / s]
    }

    pub fn inverse(&self, u: [f64; 2]) -> [f64; 2] {
        let s = 2.0 * self.half_width;
        [self.center[0] + (u[0] - 0.5) * s, self.center[1] + (u[1] - 0.5) * s]
    }
}

/// Class `c` of the mixture is `classes[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTaskSpec {
    pub classes: Vec<GaussianClass>,
    pub samples_per_class: usize,
    pub squash: SquashTransform,
}

impl SyntheticTaskSpec {
    /// `k` classes evenly spaced on a circle of `radius`.
    pub fn ring(k: usize, radius: f64, std: f64, samples_per_class: usize) -> Self {
        let classes: Vec<GaussianClass> = (0..k)
            .map(|c| {
                let a = std::f64::consts::TAU * c as f64 / k as f64;
                GaussianClass {
                    mean: [radius * a.cos(), radius * a.sin()],
                    std,
                }
            })
            .collect();
        let squash = SquashTransform::fitting(&classes, 1.25);
        Self {
            classes,
            samples_per_class,
            squash,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if !(c.std > 0.0) {
                return Err(Error::InvalidArgument(format!("class {i} std {} <= 0", c.std)));
            }
            if self.classes[..i].iter().any(|o| o.mean == c.mean) {
                return Err(Error::InvalidArgument(format!("class {i} repeats an earlier mean")));
            }
        }
        if !(self.squash.half_width > 0.0) {
            return Err(Error::InvalidArgument("squash half width must be > 0".into()));
        }
        Ok(())
    }
}

/// `samples_per_class` draws from each class, squashed into `[0, 1]^2`.
/// Draws landing outside the unit square are clipped onto it.
pub fn make_synthetic(spec: &SyntheticTaskSpec, rng: &mut RngStream) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.samples_per_class;
    let mut features = Vec::with_capacity(spec.classes.len() * n * 2);
    let mut labels = Vec::with_capacity(spec.classes.len() * n);
    for (c, class) in spec.classes.iter().enumerate() {
        for _ in 0..n {
            let p = [
                rng.normal(class.mean[0], class.std),
                rng.normal(class.mean[1], class.std),
            ];
            let u = spec.squash.forward(p);
            features.extend(u.iter().map(|v| v.clamp(0.0, 1.0)));
            labels.push(c);
        }
    }
    Dataset::new(2, features, labels)
}
