//! End-to-end property suite. Each criterion draws seeded random instances,
//! checks its property with a fixed tolerance and reports one outcome.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use pbdw_core::analysis::{error_budget, noise_free_bound, verify_link_identity};
use pbdw_core::estimator::{inf_sup, PbdwSystem};
use pbdw_core::observation::{FunctionalSet, NoiseModel};
use pbdw_core::placement::{random_place, sgreedy_place, GreedyConfig};
use pbdw_core::reduction::{strong_greedy, BackgroundSpace};
use pbdw_core::synthetic::ManifoldSpec;
use pbdw_core::update::{Generator, UpdateSpace};
use pbdw_core::{DiscreteSpace, Field, Norm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::write_csv;
use crate::studies::{self, Context};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<4} {}: {} [{:.1} s]",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

fn run(id: &'static str, title: &'static str, check: impl FnOnce() -> Result<(bool, String)>) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = match check() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Outcome {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn rng_for(seed: u64, criterion: u64, instance: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100 + criterion);
    rng.set_word_pos(2 * instance as u128);
    ChaCha8Rng::seed_from_u64(rng.random())
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Low-frequency cosine series plus a small rough component.
fn random_field(space: &DiscreteSpace, rng: &mut ChaCha8Rng) -> Field {
    let pi = std::f64::consts::PI;
    let a: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let smooth = space.sample(|p| {
        let mut v = 0.0;
        for k in 0..4 {
            for l in 0..4 {
                v += a[4 * k + l] * (k as f64 * pi * p[0]).cos() * (l as f64 * pi * p[1]).cos() / (1 + k + l) as f64;
            }
        }
        v
    });
    let rough = DVector::from_fn(space.node_count(), |_, _| 0.05 * rng.random_range(-1.0..1.0));
    space.field(smooth.values() + rough).expect("same length")
}

fn random_background(space: &DiscreteSpace, n: usize, rng: &mut ChaCha8Rng) -> Result<BackgroundSpace> {
    let raw: Vec<Field> = (0..n).map(|_| random_field(space, rng)).collect();
    Ok(BackgroundSpace::from_orthonormal(space.orthonormalize(&raw, Norm::H1)?))
}

fn generator_cycle(i: usize, r_w: f64) -> Generator {
    match i % 4 {
        0 => Generator::variational(r_w),
        1 => Generator::inverse_multiquadric(),
        2 => Generator::InverseMultiquadric {
            scale: 1.0,
            exponent: 1,
        },
        _ => Generator::cs_rbf(),
    }
}

struct Instance {
    fs: FunctionalSet,
    us: UpdateSpace,
}

/// Random centers until the update space builds; numerical rejections are
/// counted.
fn draw_instance(
    space: &DiscreteSpace,
    m: usize,
    r_w: f64,
    generator: Generator,
    rng: &mut ChaCha8Rng,
    rejected: &mut usize,
) -> Result<Instance> {
    loop {
        let centers = random_place(space, m, rng.random())?.centers;
        let fs = FunctionalSet::build(space, &centers, r_w)?;
        match UpdateSpace::build(space, &fs, generator) {
            Ok(us) => return Ok(Instance { fs, us }),
            Err(e) if e.is_numerical() => *rejected += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

/// Worst relative residuals of the bilinear-form identities over all
/// instances.
#[derive(Debug, Default, Clone, Copy)]
struct LemmaReport {
    instances: usize,
    rejected: usize,
    fixes_update_space: f64,
    riesz_identity: f64,
    variational_identity: f64,
    projection: f64,
    equivalence_violation: f64,
    routes: f64,
}

fn lemma_suite(seed: u64) -> Result<LemmaReport> {
    let space = DiscreteSpace::unit(&[33, 33])?;
    let mut rep = LemmaReport::default();
    for i in 0..50 {
        let mut rng = rng_for(seed, 1, i as u64);
        let m = rng.random_range(1..=20);
        let r_w = rng.random_range(0.02..0.06);
        let generator = generator_cycle(i, r_w);
        let Instance { fs, us } = draw_instance(&space, m, r_w, generator, &mut rng, &mut rep.rejected)?;
        let h1 = |u: &Field, v: &Field| space.inner(u, v, Norm::H1);
        let norm = |u: &Field| space.norm(u, Norm::H1);
        let mi = |u: &Field, v: &Field| us.modified_inner(&space, &fs, u, v);
        for _ in 0..3 {
            let cu = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let cv = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let (u, v) = (space.combine(us.basis(), &cu), space.combine(us.basis(), &cv));
            let scale = norm(&u)? * norm(&v)?;
            rep.fixes_update_space = rep.fixes_update_space.max((mi(&u, &v)? - h1(&u, &v)?).abs() / scale);

            let (u, v) = (random_field(&space, &mut rng), random_field(&space, &mut rng));
            let scale = norm(&u)? * norm(&v)?;
            let a = mi(&u, &v)?;
            let b = us.modified_inner_algebraic(&space, &fs, &u, &v)?;
            rep.routes = rep.routes.max((a - b).abs() / scale);
            if generator == Generator::variational(r_w) {
                rep.variational_identity = rep.variational_identity.max((a - h1(&u, &v)?).abs() / scale);
            }
            let resid = &u - &us.interpolate(&space, &fs, &u)?;
            for q in us.basis() {
                rep.projection = rep.projection.max(mi(&resid, q)?.abs() / norm(&u)?);
            }
        }
        let v = random_field(&space, &mut rng);
        let lv = fs.apply(&v)?;
        for k in 0..m {
            let phi = space.combine(us.basis(), &us.l_eta().row(k).transpose());
            let scale = (norm(&phi)? * norm(&v)?).max(lv[k].abs());
            rep.riesz_identity = rep.riesz_identity.max((mi(&phi, &v)? - lv[k]).abs() / scale);
        }
        let lc = us.lebesgue_constant(&space, &fs)?;
        for _ in 0..100 {
            let u = random_field(&space, &mut rng);
            let n2 = norm(&u)?.powi(2);
            let t = mi(&u, &u)?;
            let lower = (0.5 * n2 - t) / n2;
            let upper = (t - (2.0 + 3.0 * lc * lc) * n2) / n2;
            rep.equivalence_violation = rep.equivalence_violation.max(lower).max(upper);
        }
        rep.instances += 1;
    }
    Ok(rep)
}

pub fn criterion_lemma(seed: u64) -> (Outcome, Outcome) {
    let start = Instant::now();
    let report = lemma_suite(seed);
    let seconds = start.elapsed().as_secs_f64();
    match report {
        Ok(r) => {
            let worst = r.fixes_update_space.max(r.riesz_identity).max(r.variational_identity).max(r.projection);
            let c1 = Outcome {
                id: "C1",
                title: "bilinear form identities",
                passed: worst <= 1e-9 && r.equivalence_violation <= 1e-12 && seconds < 60.0,
                detail: format!(
                    "{} instances ({} redrawn); max rel residual: U_M {:.1e}, Riesz {:.1e}, variational {:.1e}, projection {:.1e} (tol 1e-9); equivalence slack {:.1e}; limit 60 s",
                    r.instances,
                    r.rejected,
                    r.fixes_update_space,
                    r.riesz_identity,
                    r.variational_identity,
                    r.projection,
                    r.equivalence_violation
                ),
                seconds,
            };
            let c2 = Outcome {
                id: "C2",
                title: "algebraic form of the bilinear form",
                passed: r.routes <= 1e-9,
                detail: format!("max rel difference {:.1e} over {} instances (tol 1e-9)", r.routes, r.instances),
                seconds: 0.0,
            };
            (c1, c2)
        }
        Err(e) => {
            let fail = |id, title| Outcome {
                id,
                title,
                passed: false,
                detail: format!("error: {e}"),
                seconds,
            };
            (
                fail("C1", "bilinear form identities"),
                fail("C2", "algebraic form of the bilinear form"),
            )
        }
    }
}

/// A random background/update pair with an identifiable background.
fn random_system(
    space: &DiscreteSpace,
    n: usize,
    m: usize,
    generator_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(BackgroundSpace, Instance)> {
    let r_w = rng.random_range(0.02..0.06);
    let generator = generator_cycle(generator_index, r_w);
    let mut rejected = 0;
    loop {
        let bk = random_background(space, n, rng)?;
        let inst = draw_instance(space, m, r_w, generator, rng, &mut rejected)?;
        match PbdwSystem::assemble(&bk, &inst.us, &inst.fs, 0.0) {
            Ok(_) => return Ok((bk, inst)),
            Err(e) if e.is_numerical() => rejected += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn criterion_optimality(seed: u64) -> Outcome {
    run("C3", "estimator optimality", || {
        let space = DiscreteSpace::unit(&[17, 17])?;
        let (mut worst_gap, mut worst_r, mut worst_ortho) = (f64::INFINITY, 0.0f64, 0.0f64);
        for i in 0..25 {
            let mut rng = rng_for(seed, 3, i);
            let n = rng.random_range(1..=4);
            let m = rng.random_range(n..=12 - n);
            let (bk, Instance { fs, us }) = random_system(&space, n, m, i as usize, &mut rng)?;
            let xi = 10f64.powf(rng.random_range(-4.0..0.0));
            let sys = PbdwSystem::assemble(&bk, &us, &fs, xi)?;
            let alg = sys.algebra();
            let y = fs.apply(&random_field(&space, &mut rng))?;
            let sol = alg.solve(&y)?;
            let j_opt = sol.objective;
            let floor = 1e-13 * (j_opt + y.norm_squared() / m as f64);
            let size = sol.stacked().norm() + 1.0;
            for _ in 0..10_000 {
                let s = size * 10f64.powf(rng.random_range(-5.0..0.0));
                let dz = DVector::from_fn(n, |_, _| s * normal(&mut rng));
                let de = DVector::from_fn(m, |_, _| s * normal(&mut rng));
                let j = alg.objective(&(&sol.z_coeffs + dz), &(&sol.eta_coeffs + de), &y);
                worst_gap = worst_gap.min((j - j_opt) / floor);
            }
            let (r1, r2) = alg.normal_equation_residuals(&sol, &y);
            worst_r = worst_r.max(r1.max(r2) / y.norm().max(1.0));
            let ortho = (alg.l_z().transpose() * &sol.eta_tilde).norm() / y.norm().max(1.0);
            worst_ortho = worst_ortho.max(ortho);
        }
        Ok((
            worst_gap >= -1.0 && worst_r <= 1e-9 && worst_ortho <= 1e-9,
            format!(
                "25 instances x 1e4 perturbations, no perturbation below the optimum (worst margin {worst_gap:.2e} roundoff units); normal-equation residual {worst_r:.1e}, L_z^T eta_tilde {worst_ortho:.1e} (tol 1e-9)"
            ),
        ))
    })
}

/// A random background observed at SGreedy+approx centers.
fn greedy_system(
    space: &DiscreteSpace,
    n: usize,
    m: usize,
    generator_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(BackgroundSpace, Instance)> {
    let r_w = rng.random_range(0.02..0.06);
    let generator = generator_cycle(generator_index, r_w);
    loop {
        let bk = random_background(space, n, rng)?;
        let cfg = GreedyConfig {
            m_target: m,
            tol: 0.5,
            candidates: None,
            generator,
        };
        let centers = sgreedy_place(&bk, space, |c| FunctionalSet::build(space, c, r_w), &cfg)?.centers;
        let fs = FunctionalSet::build(space, &centers, r_w)?;
        let us = UpdateSpace::build(space, &fs, generator)?;
        match PbdwSystem::assemble(&bk, &us, &fs, 0.0) {
            Ok(_) => return Ok((bk, Instance { fs, us })),
            Err(e) if e.is_numerical() => continue,
            Err(e) => return Err(e.into()),
        }
    }
}

pub fn criterion_xi_limit(seed: u64) -> Outcome {
    run("C4", "vanishing regularization limit", || {
        let space = DiscreteSpace::unit(&[25, 25])?;
        let (mut worst_state, mut worst_fit) = (0.0f64, 0.0f64);
        for i in 0..10 {
            let mut rng = rng_for(seed, 4, i);
            let n = rng.random_range(1..=5);
            let m = rng.random_range(n + 1..=20);
            let (bk, Instance { fs, us }) = greedy_system(&space, n, m, i as usize, &mut rng)?;
            let y = fs.apply(&random_field(&space, &mut rng))?;
            let exact = PbdwSystem::assemble(&bk, &us, &fs, 0.0)?.solve_constrained(&y)?;
            let near = PbdwSystem::assemble(&bk, &us, &fs, 1e-12)?.solve(&y)?;
            let gap = space.norm(&(&near.state - &exact.state), Norm::H1)? / space.norm(&exact.state, Norm::H1)?;
            worst_state = worst_state.max(gap);
            worst_fit = worst_fit.max((fs.apply(&exact.state)? - &y).norm() / y.norm());
        }
        Ok((
            worst_state <= 1e-6 && worst_fit <= 1e-9,
            format!("10 instances; rel H1 gap {worst_state:.1e} (tol 1e-6), rel data misfit {worst_fit:.1e} (tol 1e-9)"),
        ))
    })
}

/// Inf-sup constant by adaptive random search over background coefficients,
/// using bilinear-form values computed from fields.
pub fn sampled_inf_sup(
    space: &DiscreteSpace,
    bk: &BackgroundSpace,
    us: &UpdateSpace,
    fs: &FunctionalSet,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = bk.dim();
    let m = us.dim();
    let mut gzz = DMatrix::zeros(n, n);
    let mut gzq = DMatrix::zeros(n, m);
    for a in 0..n {
        for b in 0..=a {
            let g = us.modified_inner(space, fs, &bk.basis[a], &bk.basis[b])?;
            gzz[(a, b)] = g;
            gzz[(b, a)] = g;
        }
        for k in 0..m {
            gzq[(a, k)] = us.modified_inner(space, fs, &bk.basis[a], &us.basis()[k])?;
        }
    }
    let ratio = |c: &DVector<f64>| (gzq.transpose() * c).norm() / c.dot(&(&gzz * c)).sqrt();
    let rounds = 10;
    let per_round = samples / rounds;
    let mut best = DVector::from_element(n, 1.0);
    let mut best_val = ratio(&best);
    for r in 0..rounds {
        let spread = 0.5f64.powi(r as i32);
        let center = best.clone();
        for _ in 0..per_round {
            let g = DVector::from_fn(n, |_, _| normal(rng));
            let c = if r == 0 { g } else { &center + g * spread };
            let c = c.normalize();
            let v = ratio(&c);
            if v < best_val {
                best_val = v;
                best = c;
            }
        }
    }
    Ok(best_val)
}

pub fn criterion_inf_sup(seed: u64) -> Outcome {
    run("C5", "stability eigenproblems", || {
        let space = DiscreteSpace::unit(&[25, 25])?;
        let (mut worst_rel, mut worst_below) = (0.0f64, 0.0f64);
        let (mut worst_variational, mut min_lebesgue) = (0.0f64, f64::INFINITY);
        let mut count = 0;
        let mut skipped = 0;
        let mut i = 0u64;
        while count < 20 {
            let mut rng = rng_for(seed, 5, i);
            i += 1;
            let n = rng.random_range(2..=5);
            let m = rng.random_range(n + 1..=16);
            let (bk, Instance { fs, us }) = random_system(&space, n, m, count, &mut rng)?;
            let beta = inf_sup(&space, &bk, &us, &fs)?.beta;
            if beta < 1e-3 {
                skipped += 1;
                continue;
            }
            let oracle = sampled_inf_sup(&space, &bk, &us, &fs, 100_000, &mut rng)?;
            worst_rel = worst_rel.max((oracle - beta) / beta);
            worst_below = worst_below.max((beta - oracle) / beta);
            let lc = us.lebesgue_constant(&space, &fs)?;
            min_lebesgue = min_lebesgue.min(lc);
            if us.generator().is_variational() {
                worst_variational = worst_variational.max((lc - 1.0).abs());
            }
            count += 1;
        }
        Ok((
            worst_rel <= 0.02 && worst_below <= 1e-10 && worst_variational <= 1e-8 && min_lebesgue >= 1.0 - 1e-10,
            format!(
                "20 instances ({skipped} with beta < 1e-3 redrawn); sampled/eigen - 1 in [{:.1e}, {worst_rel:.1e}] (tol [0, 0.02]); variational Lebesgue |L - 1| {worst_variational:.1e} (tol 1e-8); min Lebesgue {min_lebesgue:.6}",
                -worst_below
            ),
        ))
    })
}

fn manifold_background(space: &DiscreteSpace, n: usize) -> Result<BackgroundSpace> {
    let snaps = ManifoldSpec::default().snapshots(space, 20)?;
    Ok(strong_greedy(space, &snaps, n)?)
}

pub fn criterion_noise_free_bound(seed: u64) -> Outcome {
    run("C6", "noise-free error bound", || {
        let space = DiscreteSpace::unit(&[33, 33])?;
        let bk = manifold_background(&space, 4)?;
        let mut worst = 0.0f64;
        for t in 0..20 {
            let mut rng = rng_for(seed, 6, t);
            let m = [6, 10, 16][t as usize % 3];
            let r_w = 0.03;
            let generator = generator_cycle(t as usize, r_w);
            let mut rejected = 0;
            let (fs, us) = loop {
                let Instance { fs, us } = draw_instance(&space, m, r_w, generator, &mut rng, &mut rejected)?;
                match inf_sup(&space, &bk, &us, &fs) {
                    Ok(s) if s.beta >= 1e-6 => break (fs, us),
                    Ok(_) => rejected += 1,
                    Err(e) => return Err(e.into()),
                }
            };
            let spec = ManifoldSpec {
                bias_amplitude: rng.random_range(0.0..1.0),
                ..ManifoldSpec::default()
            };
            let u = spec.true_field(&space, rng.random_range(1.0..3.0))?;
            let est = PbdwSystem::assemble(&bk, &us, &fs, 0.0)?.solve(&fs.apply(&u)?)?;
            let err = space.norm(&(&u - &est.state), Norm::H1)?;
            let b = noise_free_bound(&space, &bk, &us, &fs, &u)?;
            worst = worst.max(err / b.bound);
        }
        Ok((
            worst <= 1.0,
            format!("20 truths; largest realized error / bound = {worst:.3} (must be <= 1)"),
        ))
    })
}

pub fn criterion_noise_budget(seed: u64) -> Outcome {
    run("C7", "bias and variance bounds", || {
        let space = DiscreteSpace::unit(&[25, 25])?;
        let bk = manifold_background(&space, 4)?;
        let centers = random_place(&space, 16, seed ^ 0x5eed)?.centers;
        let fs = FunctionalSet::build(&space, &centers, 0.03)?;
        let us = UpdateSpace::build(&space, &fs, Generator::inverse_multiquadric())?;
        let spec = ManifoldSpec {
            bias_amplitude: 1.0,
            ..ManifoldSpec::default()
        };
        let u = spec.true_field(&space, 2.0)?;
        let clean = fs.apply(&u)?;
        let sigma = NoiseModel::new(0.1, 0)?.sigma(&clean);
        let u_opt = PbdwSystem::assemble(&bk, &us, &fs, 0.0)?.algebra().solve(&clean)?;
        let reps = 500;
        let mut details = Vec::new();
        let mut ok = true;
        for (j, xi) in [1e-4, 1e-2, 1.0].into_iter().enumerate() {
            let sys = PbdwSystem::assemble(&bk, &us, &fs, xi)?;
            let alg = sys.algebra();
            let budget = error_budget(alg, &u_opt.eta_tilde, sigma)?;
            let opt = u_opt.stacked();
            let mut rng = rng_for(seed, 7, j as u64);
            let mut sum = DVector::zeros(opt.len());
            let mut sum_sq = DVector::zeros(opt.len());
            let mut mse = 0.0;
            let mut worst_link = 0.0f64;
            for _ in 0..reps {
                let noise = DVector::from_fn(clean.len(), |_, _| sigma * normal(&mut rng));
                let link = verify_link_identity(alg, &opt, &noise)?;
                let y_norm = (&clean + &noise).norm();
                worst_link = worst_link.max(link.residual / (y_norm + 1.0));
                let d = &link.u_xi - &opt;
                mse += d.norm_squared() / reps as f64;
                sum += &link.u_xi;
                sum_sq += link.u_xi.component_mul(&link.u_xi);
            }
            let r = reps as f64;
            let mean = &sum / r;
            let var_sum: f64 = (&sum_sq / r - mean.component_mul(&mean)).sum() * r / (r - 1.0);
            let se = (var_sum.max(0.0) / r).sqrt();
            let bias = (&mean - &opt).norm();
            let pass = bias <= budget.bias_bound + 3.0 * se && mse <= 1.15 * budget.mse_bound && worst_link <= 1e-8;
            ok &= pass;
            details.push(format!(
                "xi {xi:.0e}: bias {bias:.2e} <= {:.2e}+3*{se:.1e}, mse/bound {:.3}, link {worst_link:.1e}",
                budget.bias_bound,
                mse / budget.mse_bound
            ));
        }
        Ok((ok, format!("500 replications each; {}", details.join("; "))))
    })
}

pub fn criterion_beta_monotone(seed: u64) -> Outcome {
    run("C8", "inf-sup monotonicity under appended functionals", || {
        let space = DiscreteSpace::unit(&[33, 33])?;
        let bk = manifold_background(&space, 5)?;
        let r_w = 0.02;
        let mut worst_drop = 0.0f64;
        let mut final_betas = Vec::new();
        for trial in 0..3 {
            let centers = random_place(&space, 30, seed.wrapping_mul(31).wrapping_add(trial))?.centers;
            let mut prev = 0.0f64;
            for m in 1..=30 {
                let fs = FunctionalSet::build(&space, &centers[..m], r_w)?;
                let us = UpdateSpace::build(&space, &fs, Generator::variational(r_w))?;
                let beta = inf_sup(&space, &bk, &us, &fs)?.beta;
                worst_drop = worst_drop.max(prev - beta);
                prev = beta;
            }
            final_betas.push(format!("{prev:.3}"));
        }
        Ok((
            worst_drop <= 1e-10,
            format!(
                "3 sequences of 30 centers; largest decrease {:.1e} (tol 1e-10); final beta {}",
                worst_drop.max(0.0),
                final_betas.join(", ")
            ),
        ))
    })
}

/// The study-level criteria, run on `cfg`; CSV files land in
/// `cfg.output_dir`.
pub fn criterion_placement(cfg: &ExperimentConfig) -> Outcome {
    run("C9", "greedy placement beats random placement", || {
        studies::cmd_place(cfg)?;
        let mut ok = true;
        let mut parts = Vec::new();
        for &name in &cfg.update.generators {
            let t = crate::output::CsvTable::read(&studies::placement_path(&cfg.output_dir, name))?;
            let g = t.floats("beta_greedy")?;
            let r = t.floats("beta_random_median")?;
            let wins = g.iter().zip(&r).filter(|(a, b)| a >= b).count();
            ok &= wins as f64 >= 0.8 * g.len() as f64;
            parts.push(format!("{} {wins}/{}", name.label(), g.len()));
        }
        Ok((ok, format!("greedy >= random median at {} M values (need 80%)", parts.join(", "))))
    })
}

pub fn criterion_mconv(cfg: &ExperimentConfig) -> Outcome {
    run("C10", "convergence in the number of observations", || {
        let mut clean = cfg.clone();
        clean.mconv.snr_values = vec![0.0];
        clean.mconv.exact_recovery = false;
        let ctx = Context::build(&clean, clean.background.n)?;
        let rows = studies::run_mconv(&clean, &ctx)?;
        write_csv(
            &studies::mconv_path(&cfg.output_dir),
            &clean.hash(),
            &studies::MCONV_HEADER,
            &studies::mconv_rows_to_csv(&rows),
        )?;
        let mut ok = true;
        let mut parts = Vec::new();
        for &name in &clean.update.generators {
            let errs: Vec<f64> = rows.iter().filter(|r| r.generator == name).map(|r| r.err_l2).collect();
            let strict = errs.windows(2).all(|w| w[1] < w[0]);
            ok &= strict;
            parts.push(format!(
                "{} {:.1e} -> {:.1e}{}",
                name.label(),
                errs[0],
                errs[errs.len() - 1],
                if strict { "" } else { " (not monotone)" }
            ));
        }
        let mut exact = clean.clone();
        exact.mconv.exact_recovery = true;
        let rows = studies::run_mconv(&exact, &ctx)?;
        write_csv(
            &cfg.output_dir.join("mconv_exact.csv"),
            &exact.hash(),
            &studies::MCONV_HEADER,
            &studies::mconv_rows_to_csv(&rows),
        )?;
        let worst = rows.iter().map(|r| r.err_l2.max(r.err_h1)).fold(0.0, f64::max);
        ok &= worst <= 1e-8;
        Ok((
            ok,
            format!(
                "clean L2 error strictly decreasing: {}; exact recovery max error {worst:.1e} (tol 1e-8)",
                parts.join(", ")
            ),
        ))
    })
}

pub fn criterion_xi(cfg: &ExperimentConfig) -> Outcome {
    run("C11", "regularization weight interpretation", || {
        let rows = studies::run_xi_sweep(cfg)?;
        let csv: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                [r.bias, r.snr, r.xi, r.mse_hat, r.true_error]
                    .iter()
                    .map(|&v| crate::output::float(v))
                    .collect()
            })
            .collect();
        write_csv(&studies::xi_path(&cfg.output_dir), &cfg.hash(), &studies::XI_HEADER, &csv)?;
        let mins = studies::xi_argmins(&rows, cfg.xi.argmin_rel_tol);
        let bias_lo = cfg.xi.bias_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let bias_hi = cfg.xi.bias_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let snr_lo = cfg.xi.snr_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let snr_hi = cfg.xi.snr_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let find = |b: f64, s: f64| mins.iter().find(|a| a.bias == b && a.snr == s).copied();
        let (Some(easy), Some(hard)) = (find(bias_lo, snr_hi), find(bias_hi, snr_lo)) else {
            return Err(CliError::Config("xi sweep needs two bias and two snr values".into()));
        };
        let ordered = easy.mse_hat > hard.mse_hat && easy.true_error > hard.true_error;
        let agree = mins.iter().all(|a| a.mse_hat.abs_diff(a.true_error) <= 1);
        let curves: Vec<String> = mins
            .iter()
            .map(|a| format!("(bias {}, snr {}) {}/{}", a.bias, a.snr, a.mse_hat, a.true_error))
            .collect();
        Ok((
            ordered && agree && bias_lo < bias_hi && snr_lo < snr_hi,
            format!(
                "argmin index holdout/true: {}; ordering {}; agreement within one step {}",
                curves.join(", "),
                if ordered { "holds" } else { "violated" },
                if agree { "holds" } else { "violated" }
            ),
        ))
    })
}

pub fn property_criteria(seed: u64) -> Vec<Outcome> {
    let (c1, c2) = criterion_lemma(seed);
    vec![
        c1,
        c2,
        criterion_optimality(seed),
        criterion_xi_limit(seed),
        criterion_inf_sup(seed),
        criterion_noise_free_bound(seed),
        criterion_noise_budget(seed),
        criterion_beta_monotone(seed),
    ]
}

pub fn study_criteria(cfg: &ExperimentConfig) -> Vec<Outcome> {
    vec![criterion_placement(cfg), criterion_mconv(cfg), criterion_xi(cfg)]
}

/// Runs every criterion, printing each outcome as it completes.
pub fn run_all(cfg: &ExperimentConfig, mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    let mut all = Vec::new();
    let (c1, c2) = criterion_lemma(cfg.seed);
    for o in [c1, c2] {
        report(&o);
        all.push(o);
    }
    let rest: Vec<Box<dyn Fn() -> Outcome + '_>> = vec![
        Box::new(|| criterion_optimality(cfg.seed)),
        Box::new(|| criterion_xi_limit(cfg.seed)),
        Box::new(|| criterion_inf_sup(cfg.seed)),
        Box::new(|| criterion_noise_free_bound(cfg.seed)),
        Box::new(|| criterion_noise_budget(cfg.seed)),
        Box::new(|| criterion_beta_monotone(cfg.seed)),
        Box::new(|| criterion_placement(cfg)),
        Box::new(|| criterion_mconv(cfg)),
        Box::new(|| criterion_xi(cfg)),
    ];
    for f in rest {
        let o = f();
        report(&o);
        all.push(o);
    }
    all
}

/// `Criteria` error when any outcome failed.
pub fn summarize(outcomes: &[Outcome]) -> std::result::Result<(), CliError> {
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Criteria {
            failed,
            total: outcomes.len(),
        })
    }
}
