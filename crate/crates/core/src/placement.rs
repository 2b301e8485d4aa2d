//! Observation-center selection: the two-stage stability/approximation greedy
//! and a uniform random baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{PbdwError, Result};
use crate::estimator::inf_sup;
use crate::hilbert::{distance, DiscreteSpace, Field, Point};
use crate::observation::FunctionalSet;
use crate::reduction::BackgroundSpace;
use crate::update::{Generator, UpdateSpace};

#[derive(Debug, Clone)]
pub struct GreedyConfig {
    pub m_target: usize,
    /// Stability threshold in `[0, 1]`; `0` skips the stability stage.
    pub tol: f64,
    /// Search set for every argmax; `None` means the grid nodes.
    pub candidates: Option<Vec<Point>>,
    pub generator: Generator,
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_target == 0 {
            return Err(PbdwError::Argument("m_target must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.tol) {
            return Err(PbdwError::Argument(format!("tol must lie in [0, 1], got {}", self.tol)));
        }
        if let Some(c) = &self.candidates {
            if c.len() < self.m_target {
                return Err(PbdwError::Argument(format!(
                    "{} candidates cannot host {} centers",
                    c.len(),
                    self.m_target
                )));
            }
        }
        self.generator.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementResult {
    pub centers: Vec<Point>,
    /// `β` with `1, 2, …` centers, one entry per stability iteration.
    pub beta_history: Vec<f64>,
    /// Number of centers in place when the approximation stage started
    /// (`m_target` if it never started).
    pub switch_index: usize,
    /// Fill distance over the candidate set after each approximation pick.
    pub fill_distance_history: Vec<f64>,
}

/// `max_x min_m |x - x_m|` over the candidate points.
pub fn fill_distance(candidates: &[Point], centers: &[Point]) -> f64 {
    candidates
        .iter()
        .map(|x| centers.iter().map(|c| distance(x, c)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Index of the largest score among unselected candidates; ties go to the
/// lowest index.
fn argmax(scores: impl Iterator<Item = f64>, taken: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.enumerate() {
        if taken[i] {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

fn values_at(space: &DiscreteSpace, u: &Field, candidates: &[Point]) -> Result<Vec<f64>> {
    candidates.iter().map(|p| space.evaluate(u, p)).collect()
}

/// Selects `m_target` centers: first where `|ζ_1|` peaks, then where the
/// worst-observed background direction is worst interpolated while
/// `β ≤ tol`, then by farthest-first traversal.
pub fn sgreedy_place<F>(
    background: &BackgroundSpace,
    space: &DiscreteSpace,
    fs_builder: F,
    cfg: &GreedyConfig,
) -> Result<PlacementResult>
where
    F: Fn(&[Point]) -> Result<FunctionalSet>,
{
    cfg.validate()?;
    if background.dim() == 0 {
        return Err(PbdwError::Argument("background space is empty".into()));
    }
    let candidates: Vec<Point> = match &cfg.candidates {
        Some(c) => {
            for p in c {
                space.check_point(p)?;
            }
            c.clone()
        }
        None => space.nodes().to_vec(),
    };
    if candidates.len() < cfg.m_target {
        return Err(PbdwError::Argument(format!(
            "{} candidates cannot host {} centers",
            candidates.len(),
            cfg.m_target
        )));
    }
    let wrap = |iteration: usize| move |e: PbdwError| PbdwError::Placement {
        iteration,
        source: Box::new(e),
    };

    let mut taken = vec![false; candidates.len()];
    let mut centers = Vec::with_capacity(cfg.m_target);
    let zeta1 = values_at(space, &background.basis[0], &candidates)?;
    let first = argmax(zeta1.iter().map(|v| v.abs()), &taken).expect("candidates nonempty");
    taken[first] = true;
    centers.push(candidates[first]);

    let mut beta_history = Vec::new();
    let mut switch_index = cfg.m_target;
    if cfg.tol == 0.0 {
        switch_index = 1;
    } else {
        loop {
            let m = centers.len();
            let fs = fs_builder(&centers).map_err(wrap(m))?;
            let us = UpdateSpace::build(space, &fs, cfg.generator).map_err(wrap(m))?;
            let stab = inf_sup(space, background, &us, &fs).map_err(wrap(m))?;
            beta_history.push(stab.beta);
            if m >= cfg.m_target {
                break;
            }
            if stab.beta > cfg.tol {
                switch_index = m;
                break;
            }
            let z = space.combine(&background.basis, &stab.z_min);
            let iz = us.interpolate(space, &fs, &z).map_err(wrap(m))?;
            let miss = values_at(space, &(&z - &iz), &candidates)?;
            let next = argmax(miss.iter().map(|v| v.abs()), &taken).expect("free candidate exists");
            taken[next] = true;
            centers.push(candidates[next]);
        }
    }

    let mut fill_distance_history = Vec::new();
    if centers.len() < cfg.m_target {
        let mut nearest: Vec<f64> = candidates
            .iter()
            .map(|x| centers.iter().map(|c| distance(x, c)).fold(f64::INFINITY, f64::min))
            .collect();
        while centers.len() < cfg.m_target {
            let next = argmax(nearest.iter().copied(), &taken).expect("free candidate exists");
            taken[next] = true;
            let c = candidates[next];
            centers.push(c);
            for (d, x) in nearest.iter_mut().zip(&candidates) {
                *d = d.min(distance(x, &c));
            }
            fill_distance_history.push(nearest.iter().cloned().fold(0.0, f64::max));
        }
    }

    Ok(PlacementResult {
        centers,
        beta_history,
        switch_index,
        fill_distance_history,
    })
}

/// `m` distinct i.i.d. uniform points of the closed domain.
pub fn random_place(space: &DiscreteSpace, m: usize, seed: u64) -> Result<PlacementResult> {
    if m == 0 {
        return Err(PbdwError::Argument("m must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let two_d = space.dim_spatial() == 2;
    let mut centers: Vec<Point> = Vec::with_capacity(m);
    while centers.len() < m {
        let p = [rng.random::<f64>(), if two_d { rng.random::<f64>() } else { 0.0 }];
        if !centers.contains(&p) {
            centers.push(p);
        }
    }
    Ok(PlacementResult {
        centers,
        beta_history: Vec::new(),
        switch_index: 0,
        fill_distance_history: Vec::new(),
    })
}
