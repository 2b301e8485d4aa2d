use pbdw_core::analysis::{holdout_select_xi, noise_free_bound, relative_error};
use pbdw_core::estimator::{inf_sup, PbdwSystem};
use pbdw_core::observation::{measure, FunctionalSet, NoiseModel};
use pbdw_core::placement::{random_place, sgreedy_place, GreedyConfig};
use pbdw_core::reduction::{max_projection_error, pod, strong_greedy};
use pbdw_core::synthetic::ManifoldSpec;
use pbdw_core::update::{Generator, UpdateSpace};
use pbdw_core::{DiscreteSpace, Norm};

const R_W: f64 = 0.03;

fn setup(n: usize) -> (DiscreteSpace, pbdw_core::reduction::BackgroundSpace) {
    let space = DiscreteSpace::unit(&[33, 33]).unwrap();
    let snaps = ManifoldSpec::default().snapshots(&space, 20).unwrap();
    let bk = strong_greedy(&space, &snaps, n).unwrap();
    (space, bk)
}

#[test]
fn manifold_members_are_recovered_from_exact_data() {
    let (space, bk) = setup(6);
    let cfg = GreedyConfig {
        m_target: 24,
        tol: 0.5,
        candidates: None,
        generator: Generator::cs_rbf(),
    };
    let placement = sgreedy_place(&bk, &space, |c| FunctionalSet::build(&space, c, R_W), &cfg).unwrap();
    let fs = FunctionalSet::build(&space, &placement.centers, R_W).unwrap();
    let us = UpdateSpace::build(&space, &fs, cfg.generator).unwrap();
    assert!(inf_sup(&space, &bk, &us, &fs).unwrap().beta > 0.5);
    let sys = PbdwSystem::assemble(&bk, &us, &fs, 0.0).unwrap();
    let spec = ManifoldSpec::default();
    for mu in spec.test_parameters(5) {
        let u = spec.bk_field(&space, mu).unwrap();
        let est = sys.solve(&fs.apply(&u).unwrap()).unwrap();
        let err = relative_error(&space, &u, &est.state, Norm::L2).unwrap();
        assert!(err < 1e-2, "mu {mu}: {err}");
        let bound = noise_free_bound(&space, &bk, &us, &fs, &u).unwrap();
        assert!(space.norm(&(&u - &est.state), Norm::H1).unwrap() <= bound.bound);
    }
}

#[test]
fn pod_and_greedy_backgrounds_both_approximate_the_manifold() {
    let space = DiscreteSpace::unit(&[17, 17]).unwrap();
    let snaps = ManifoldSpec::default().snapshots(&space, 20).unwrap();
    let p = pod(&space, &snaps, 6).unwrap();
    let g = strong_greedy(&space, &snaps, 6).unwrap();
    let scale = snaps
        .snapshots
        .iter()
        .map(|u| space.norm(u, Norm::H1).unwrap())
        .fold(0.0, f64::max);
    for bk in [&p, &g] {
        assert!(max_projection_error(&space, &snaps, &bk.basis).unwrap() < 0.05 * scale);
    }
}

#[test]
fn holdout_prefers_more_regularization_for_noisier_data() {
    let (space, bk) = setup(5);
    let centers = random_place(&space, 40, 4).unwrap().centers;
    let fs = FunctionalSet::build(&space, &centers, R_W).unwrap();
    let us = UpdateSpace::build(&space, &fs, Generator::inverse_multiquadric()).unwrap();
    let val = FunctionalSet::build(&space, &random_place(&space, 20, 5).unwrap().centers, R_W).unwrap();
    let u = ManifoldSpec::default().bk_field(&space, 2.2).unwrap();
    let grid = pbdw_core::analysis::default_xi_grid();
    let mut picks = Vec::new();
    for snr in [0.0, 0.5] {
        let meas = measure(&fs, &u, &NoiseModel::new(snr, 1).unwrap()).unwrap();
        let clean_val = val.apply(&u).unwrap();
        let y_val = &clean_val + NoiseModel::new(snr, 2).unwrap().standard_draws(20) * meas.sigma;
        let rep = holdout_select_xi((&fs, &meas.noisy), (&val, &y_val), &bk, &us, &grid).unwrap();
        picks.push(rep.xi_star);
    }
    assert!(picks[1] > picks[0], "{picks:?}");
}
