//! Background spaces from snapshot sets.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{PbdwError, Result};
use crate::hilbert::{DiscreteSpace, Field, Norm};

/// Relative eigenvalue (energy) cutoff below which a direction counts as
/// outside the numerical span of the snapshots.
pub const RANK_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub snapshots: Vec<Field>,
    pub parameters: Vec<f64>,
}

impl SnapshotSet {
    pub fn new(snapshots: Vec<Field>, parameters: Vec<f64>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(PbdwError::Argument("snapshot set is empty".into()));
        }
        if snapshots.len() != parameters.len() {
            return Err(PbdwError::Dimension {
                expected: snapshots.len(),
                found: parameters.len(),
            });
        }
        let id = snapshots[0].space_id();
        if snapshots.iter().any(|s| s.space_id() != id) {
            return Err(PbdwError::SpaceMismatch);
        }
        Ok(Self { snapshots, parameters })
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct BackgroundSpace {
    /// H¹-orthonormal basis `ζ_1..ζ_N`.
    pub basis: Vec<Field>,
    /// Full POD spectrum, nonincreasing (empty for greedy spaces).
    pub pod_eigenvalues: Vec<f64>,
    /// Snapshot indices picked by the greedy, in order (empty for POD).
    pub selected: Vec<usize>,
    /// Largest H¹ projection error over the snapshots after each greedy step.
    pub greedy_errors: Vec<f64>,
}

impl BackgroundSpace {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Wraps an already H¹-orthonormal family.
    pub fn from_orthonormal(basis: Vec<Field>) -> Self {
        Self {
            basis,
            pod_eigenvalues: Vec::new(),
            selected: Vec::new(),
            greedy_errors: Vec::new(),
        }
    }
}

/// POD in the H¹ inner product by the method of snapshots: eigenpairs of the
/// snapshot Gram matrix divided by `n_train`.
pub fn pod(space: &DiscreteSpace, snapshots: &SnapshotSet, n: usize) -> Result<BackgroundSpace> {
    let k = snapshots.len();
    if n == 0 {
        return Err(PbdwError::Argument("background dimension must be >= 1".into()));
    }
    let applied: Vec<DVector<f64>> = snapshots
        .snapshots
        .iter()
        .map(|s| {
            space.check(s)?;
            Ok(space.gram_apply(s.values(), Norm::H1))
        })
        .collect::<Result<_>>()?;
    let mut corr = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..=i {
            let g = snapshots.snapshots[i].values().dot(&applied[j]) / k as f64;
            corr[(i, j)] = g;
            corr[(j, i)] = g;
        }
    }
    let eig = SymmetricEigen::new(corr);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let largest = eigenvalues[0];
    let rank = eigenvalues
        .iter()
        .take_while(|&&l| largest > 0.0 && l > RANK_CUTOFF * largest)
        .count();
    if n > rank {
        return Err(PbdwError::Rank(format!(
            "requested {n} POD modes but the snapshots have numerical rank {rank}"
        )));
    }
    let modes: Vec<Field> = order[..n]
        .iter()
        .zip(&eigenvalues)
        .map(|(&col, &lambda)| {
            let v = eig.eigenvectors.column(col);
            let mut mode = space.zeros();
            for (i, s) in snapshots.snapshots.iter().enumerate() {
                mode.axpy(v[i], s);
            }
            mode.scaled(1.0 / (k as f64 * lambda).sqrt())
        })
        .collect();
    // Re-orthonormalize: the snapshot method loses orthogonality for modes with
    // small eigenvalues. The span and ordering are unchanged.
    let basis = space.orthonormalize(&modes, Norm::H1)?;
    Ok(BackgroundSpace {
        basis,
        pod_eigenvalues: eigenvalues,
        selected: Vec::new(),
        greedy_errors: Vec::new(),
    })
}

/// Strong greedy: repeatedly adds the snapshot with the largest H¹ projection
/// error onto the current span. Ties go to the lowest snapshot index.
pub fn strong_greedy(space: &DiscreteSpace, snapshots: &SnapshotSet, n: usize) -> Result<BackgroundSpace> {
    if n == 0 {
        return Err(PbdwError::Argument("background dimension must be >= 1".into()));
    }
    for s in &snapshots.snapshots {
        space.check(s)?;
    }
    let norms: Vec<f64> = snapshots
        .snapshots
        .iter()
        .map(|s| space.norm(s, Norm::H1))
        .collect::<Result<_>>()?;
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    let mut residuals: Vec<Field> = snapshots.snapshots.clone();
    let mut errors: Vec<f64> = norms.clone();
    let mut basis: Vec<Field> = Vec::with_capacity(n);
    let mut selected = Vec::with_capacity(n);
    let mut history = Vec::with_capacity(n);
    for step in 0..n {
        // errors within a relative 1e-12 of the maximum count as ties
        let top = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let best = errors
            .iter()
            .position(|&e| e >= top * (1.0 - 1e-12))
            .expect("snapshot set is nonempty");
        let err = errors[best];
        if !(scale > 0.0) || err * err <= RANK_CUTOFF * scale * scale {
            return Err(PbdwError::Rank(format!(
                "requested {n} greedy modes but the snapshots have numerical rank {step}"
            )));
        }
        let q = residuals[best].scaled(1.0 / err);
        for (r, e) in residuals.iter_mut().zip(errors.iter_mut()) {
            let c = space.inner(r, &q, Norm::H1)?;
            r.axpy(-c, &q);
            // second pass keeps the residuals orthogonal to the span
            let c2 = space.inner(r, &q, Norm::H1)?;
            r.axpy(-c2, &q);
            *e = space.norm(r, Norm::H1)?;
        }
        errors[best] = 0.0;
        basis.push(q);
        selected.push(best);
        history.push(errors.iter().cloned().fold(0.0, f64::max));
    }
    let basis = space.orthonormalize(&basis, Norm::H1)?;
    Ok(BackgroundSpace {
        basis,
        pod_eigenvalues: Vec::new(),
        selected,
        greedy_errors: history,
    })
}

/// Largest H¹ distance from a snapshot to the span of an orthonormal basis.
pub fn max_projection_error(space: &DiscreteSpace, snapshots: &SnapshotSet, basis: &[Field]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in &snapshots.snapshots {
        let p = space.project(s, basis, Norm::H1)?;
        worst = worst.max(space.norm(&(s - &p), Norm::H1)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space() -> DiscreteSpace {
        DiscreteSpace::unit(&[15, 15]).unwrap()
    }

    fn random_set(space: &DiscreteSpace, k: usize, seed: u64) -> SnapshotSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fields = (0..k)
            .map(|_| {
                let a: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                let smooth = space.sample(|p| {
                    a[0] + a[1] * p[0] + a[2] * (3.0 * p[1]).sin() + a[3] * (p[0] * p[1] * 5.0).cos()
                });
                let jitter = DVector::from_fn(space.node_count(), |_, _| 0.1 * rng.random_range(-1.0..1.0));
                space.field(smooth.values() + jitter).unwrap()
            })
            .collect();
        SnapshotSet::new(fields, (0..k).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn single_snapshot_pod() {
        let s = space();
        let u = s.sample(|p| 1.0 + p[0] * p[1]);
        let set = SnapshotSet::new(vec![u.clone()], vec![0.0]).unwrap();
        let bg = pod(&s, &set, 1).unwrap();
        let nrm = s.norm(&u, Norm::H1).unwrap();
        let expected = u.scaled(1.0 / nrm);
        let d = (bg.basis[0].values() - expected.values())
            .amax()
            .min((bg.basis[0].values() + expected.values()).amax());
        assert!(d < 1e-12);
        assert!((bg.pod_eigenvalues[0] - nrm * nrm).abs() < 1e-10 * nrm * nrm);
    }

    #[test]
    fn orthogonal_equal_norm_snapshots_have_equal_eigenvalues() {
        let s = space();
        let raw = vec![s.sample(|p| p[0] + 0.2), s.sample(|p| (p[1] * 4.0).sin())];
        let q = s.orthonormalize(&raw, Norm::H1).unwrap();
        let set = SnapshotSet::new(vec![q[0].scaled(2.0), q[1].scaled(2.0)], vec![0.0, 1.0]).unwrap();
        let bg = pod(&s, &set, 2).unwrap();
        assert!((bg.pod_eigenvalues[0] - bg.pod_eigenvalues[1]).abs() < 1e-12);
        assert!((bg.pod_eigenvalues[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_pod_reproduces_snapshots_and_conserves_energy() {
        let s = space();
        let set = random_set(&s, 5, 3);
        let bg = pod(&s, &set, 5).unwrap();
        for (i, a) in bg.basis.iter().enumerate() {
            for (j, b) in bg.basis.iter().enumerate() {
                let g = s.inner(a, b, Norm::H1).unwrap();
                assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
            }
        }
        for snap in &set.snapshots {
            let p = s.project(snap, &bg.basis, Norm::H1).unwrap();
            let err = s.norm(&(snap - &p), Norm::H1).unwrap();
            assert!(err <= 1e-8 * s.norm(snap, Norm::H1).unwrap());
        }
        let energy: f64 = set
            .snapshots
            .iter()
            .map(|u| s.inner(u, u, Norm::H1).unwrap())
            .sum::<f64>()
            / set.len() as f64;
        let total: f64 = bg.pod_eigenvalues.iter().sum();
        assert!((total - energy).abs() <= 1e-8 * energy);
        assert!(bg.pod_eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pod_rank_error() {
        let s = space();
        let u = s.sample(|p| p[0]);
        let set = SnapshotSet::new(vec![u.clone(), u.scaled(3.0)], vec![0.0, 1.0]).unwrap();
        assert!(matches!(pod(&s, &set, 2), Err(PbdwError::Rank(_))));
        assert!(matches!(strong_greedy(&s, &set, 2), Err(PbdwError::Rank(_))));
    }

    #[test]
    fn greedy_first_pick_is_largest_norm() {
        let s = space();
        let set = random_set(&s, 8, 9);
        let bg = strong_greedy(&s, &set, 1).unwrap();
        let norms: Vec<f64> = set.snapshots.iter().map(|u| s.norm(u, Norm::H1).unwrap()).collect();
        let best = (0..norms.len()).max_by(|&a, &b| norms[a].total_cmp(&norms[b])).unwrap();
        assert_eq!(bg.selected, vec![best]);
        let expected = set.snapshots[best].scaled(1.0 / norms[best]);
        assert!((bg.basis[0].values() - expected.values()).amax() < 1e-12);
    }

    #[test]
    fn greedy_on_orthonormal_snapshots_picks_largest_two() {
        let s = space();
        let raw = vec![
            s.sample(|p| 1.0 + p[0]),
            s.sample(|p| (2.0 * p[1]).sin()),
            s.sample(|p| p[0] * p[1]),
        ];
        let q = s.orthonormalize(&raw, Norm::H1).unwrap();
        let set = SnapshotSet::new(
            vec![q[0].scaled(1.0), q[1].scaled(3.0), q[2].scaled(2.0)],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        let bg = strong_greedy(&s, &set, 2).unwrap();
        assert_eq!(bg.selected, vec![1, 2]);
    }

    #[test]
    fn greedy_ties_break_to_lowest_index() {
        let s = space();
        let raw = vec![s.sample(|p| 1.0 + p[0]), s.sample(|p| (2.0 * p[1]).sin())];
        let q = s.orthonormalize(&raw, Norm::H1).unwrap();
        let set = SnapshotSet::new(q.clone(), vec![0.0, 1.0]).unwrap();
        assert_eq!(strong_greedy(&s, &set, 1).unwrap().selected, vec![0]);
    }

    #[test]
    fn greedy_error_is_nonincreasing() {
        let s = space();
        let set = random_set(&s, 12, 21);
        let bg = strong_greedy(&s, &set, 5).unwrap();
        assert!(bg.greedy_errors.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        for k in 1..=5 {
            let direct = max_projection_error(&s, &set, &bg.basis[..k]).unwrap();
            assert!((direct - bg.greedy_errors[k - 1]).abs() < 1e-8);
        }
    }
}
