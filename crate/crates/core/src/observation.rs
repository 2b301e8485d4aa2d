//! Gaussian-convolution observation functionals and the homoscedastic
//! measurement model.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{PbdwError, Result};
use crate::hilbert::{distance, DiscreteSpace, Field, Point, SpaceId};

/// `M` local-average functionals `ℓ_m(u) = C_m ∫ exp(-|x - x_m|²/(2 r_w²)) u dx`,
/// stored as rows of quadrature weights normalized so that `ℓ_m(1) = 1`.
#[derive(Debug, Clone)]
pub struct FunctionalSet {
    centers: Vec<Point>,
    filter_width: f64,
    weights: DMatrix<f64>,
    under_resolved: bool,
    space: SpaceId,
}

impl FunctionalSet {
    pub fn build(space: &DiscreteSpace, centers: &[Point], filter_width: f64) -> Result<Self> {
        if !(filter_width > 0.0) || !filter_width.is_finite() {
            return Err(PbdwError::Argument(format!(
                "filter width must be positive, got {filter_width}"
            )));
        }
        for c in centers {
            space.check_point(c)?;
        }
        let n = space.node_count();
        let mass = space.mass();
        let inv = 1.0 / (2.0 * filter_width * filter_width);
        let mut weights = DMatrix::zeros(centers.len(), n);
        for (m, c) in centers.iter().enumerate() {
            let mut row: Vec<f64> = space
                .nodes()
                .iter()
                .zip(mass.iter())
                .map(|(x, w)| (-distance(x, c).powi(2) * inv).exp() * w)
                .collect();
            let mut total: f64 = row.iter().sum();
            if !(total > 0.0) {
                // The Gaussian underflowed at every node: fall back to the
                // nearest node so that the normalization ℓ(1) = 1 still holds.
                let nearest = space
                    .nodes()
                    .iter()
                    .enumerate()
                    .min_by(|a, b| distance(a.1, c).total_cmp(&distance(b.1, c)))
                    .map(|(i, _)| i)
                    .expect("space has nodes");
                row.iter_mut().for_each(|r| *r = 0.0);
                row[nearest] = 1.0;
                total = 1.0;
            }
            for (j, r) in row.into_iter().enumerate() {
                weights[(m, j)] = r / total;
            }
        }
        Ok(Self {
            centers: centers.to_vec(),
            filter_width,
            weights,
            under_resolved: filter_width < 0.5 * space.min_spacing(),
            space: space.id(),
        })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    pub fn filter_width(&self) -> f64 {
        self.filter_width
    }

    /// `M × node_count` matrix; row `m` holds the weights of `ℓ_m`.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Set when the filter width is below half the grid spacing, i.e. the
    /// kernel is not resolved by the grid.
    pub fn under_resolved(&self) -> bool {
        self.under_resolved
    }

    pub fn row(&self, m: usize) -> DVector<f64> {
        self.weights.row(m).transpose()
    }

    /// `[ℓ_1(u), …, ℓ_M(u)]`.
    pub fn apply(&self, u: &Field) -> Result<DVector<f64>> {
        if u.space_id() != self.space {
            return Err(PbdwError::SpaceMismatch);
        }
        if u.len() != self.weights.ncols() {
            return Err(PbdwError::Dimension {
                expected: self.weights.ncols(),
                found: u.len(),
            });
        }
        Ok(&self.weights * u.values())
    }

    pub fn space_id(&self) -> SpaceId {
        self.space
    }

    /// Functionals `0..m` of this set.
    pub fn prefix(&self, m: usize) -> FunctionalSet {
        let m = m.min(self.len());
        FunctionalSet {
            centers: self.centers[..m].to_vec(),
            filter_width: self.filter_width,
            weights: self.weights.rows(0, m).into_owned(),
            under_resolved: self.under_resolved,
            space: self.space,
        }
    }
}

/// Homoscedastic Gaussian noise whose standard deviation is `snr` times the
/// population standard deviation of the clean measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub snr: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(snr: f64, seed: u64) -> Result<Self> {
        if !(snr >= 0.0) || !snr.is_finite() {
            return Err(PbdwError::Argument(format!("snr must be >= 0, got {snr}")));
        }
        Ok(Self { snr, seed })
    }

    pub fn noiseless() -> Self {
        Self { snr: 0.0, seed: 0 }
    }

    pub fn sigma(&self, clean: &DVector<f64>) -> f64 {
        self.snr * population_std(clean)
    }

    /// `m` standard-normal draws from the seeded generator.
    pub fn standard_draws(&self, m: usize) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng))
    }
}

pub fn population_std(v: &DVector<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.mean();
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Synthetic measurements: the clean values, the noisy ones and the noise
/// level actually applied.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub clean: DVector<f64>,
    pub noisy: DVector<f64>,
    pub sigma: f64,
}

/// `y = W u + σ ε`, `ε` i.i.d. standard normal drawn from the noise seed.
pub fn measure(fs: &FunctionalSet, u: &Field, noise: &NoiseModel) -> Result<Measurement> {
    let clean = fs.apply(u)?;
    let sigma = noise.sigma(&clean);
    let noisy = if sigma == 0.0 {
        clean.clone()
    } else {
        &clean + noise.standard_draws(clean.len()) * sigma
    };
    Ok(Measurement { clean, noisy, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> DiscreteSpace {
        DiscreteSpace::unit(&[21, 21]).unwrap()
    }

    #[test]
    fn functionals_reproduce_constants() {
        let s = space();
        let fs = FunctionalSet::build(&s, &[[0.0, 0.0], [0.5, 0.3], [1.0, 0.77]], 0.07).unwrap();
        let y = fs.apply(&s.constant(3.5)).unwrap();
        for v in y.iter() {
            assert!((v - 3.5).abs() < 1e-10);
        }
        assert!(fs.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn wide_kernel_tends_to_domain_mean() {
        let s = space();
        let u = s.sample(|p| (p[0] * 2.0).sin() + p[1] * p[1]);
        let mean = s.inner(&u, &s.constant(1.0), crate::hilbert::Norm::L2).unwrap();
        let fs = FunctionalSet::build(&s, &[[0.1, 0.9], [0.5, 0.5]], 10.0).unwrap();
        for v in fs.apply(&u).unwrap().iter() {
            assert!(((v - mean) / mean).abs() < 0.01);
        }
    }

    #[test]
    fn identical_centers_give_identical_rows() {
        let s = space();
        let fs = FunctionalSet::build(&s, &[[0.3, 0.4], [0.3, 0.4]], 0.05).unwrap();
        assert_eq!(fs.row(0), fs.row(1));
    }

    #[test]
    fn outside_center_is_domain_error() {
        let s = space();
        let err = FunctionalSet::build(&s, &[[0.3, 1.01]], 0.05).unwrap_err();
        assert!(matches!(err, PbdwError::Domain(_)));
    }

    #[test]
    fn under_resolution_is_flagged() {
        let s = space(); // h = 0.05
        assert!(FunctionalSet::build(&s, &[[0.5, 0.5]], 0.01).unwrap().under_resolved());
        assert!(!FunctionalSet::build(&s, &[[0.5, 0.5]], 0.03).unwrap().under_resolved());
    }

    #[test]
    fn noiseless_measure_is_exact_and_seeded_noise_repeats() {
        let s = space();
        let fs = FunctionalSet::build(&s, &[[0.2, 0.2], [0.8, 0.4], [0.5, 0.9]], 0.05).unwrap();
        let u = s.sample(|p| p[0] + 2.0 * p[1]);
        let exact = measure(&fs, &u, &NoiseModel::noiseless()).unwrap();
        assert_eq!(exact.noisy, fs.apply(&u).unwrap());
        let noise = NoiseModel::new(0.2, 77).unwrap();
        let a = measure(&fs, &u, &noise).unwrap();
        let b = measure(&fs, &u, &noise).unwrap();
        assert_eq!(a.noisy, b.noisy);
        assert_ne!(a.noisy, a.clean);
    }

    #[test]
    fn noise_level_matches_sigma() {
        let s = DiscreteSpace::unit(&[41, 41]).unwrap();
        let centers: Vec<Point> = (0..1000)
            .map(|k| {
                let t = k as f64 / 999.0;
                [t, (7.0 * t).fract()]
            })
            .collect();
        let fs = FunctionalSet::build(&s, &centers, 0.05).unwrap();
        let u = s.sample(|p| (3.0 * p[0]).sin() + p[1]);
        let m = measure(&fs, &u, &NoiseModel::new(0.1, 5).unwrap()).unwrap();
        let e = &m.noisy - &m.clean;
        let mean = e.mean();
        let sd = (e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64).sqrt();
        assert!((sd / m.sigma - 1.0).abs() < 0.1, "sd {sd} sigma {}", m.sigma);
    }

    #[test]
    fn single_measurement_has_zero_sigma() {
        let s = space();
        let fs = FunctionalSet::build(&s, &[[0.5, 0.5]], 0.05).unwrap();
        let m = measure(&fs, &s.constant(2.0), &NoiseModel::new(0.3, 1).unwrap()).unwrap();
        assert_eq!(m.sigma, 0.0);
        assert_eq!(m.noisy, m.clean);
    }
}
