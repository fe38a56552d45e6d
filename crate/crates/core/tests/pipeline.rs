use peeriv_core::dgp::{fixed_point_residual, neumann_outcomes, sample_covariates, sample_errors, solve_outcomes, CovariateSpec, ModelParams};
use peeriv_core::estimate::{fit_iv, Design, HacConfig, VarianceKind};
use peeriv_core::graph::{sample_er, NetworkOperator, ShellIndex};
use peeriv_core::montecarlo::{run_cell_detailed, CellConfig, CellSetup, Regime, Scaling};
use peeriv_core::weakiv::{ar_confidence_set_closed_form, ar_test};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn simulate_fit_and_invert() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = sample_er(400, 5.0 / 400.0, &mut rng).unwrap();
    let op = NetworkOperator::scaled(g);
    let params = ModelParams::simulation(ModelParams::BETA_MODERATE);
    let x = sample_covariates(400, &CovariateSpec::default(), &mut rng).unwrap();
    let eps = sample_errors(400, 1.0, &mut rng);
    let sample = solve_outcomes(&op, &params, &x, &eps).unwrap();
    let scale = sample.y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    assert!(fixed_point_residual(&op, &params, &sample) <= 1e-12 * scale);

    let tol = 1e-6;
    let neumann = neumann_outcomes(&op, &params, &x, &eps, tol, 10_000).unwrap();
    let gap = neumann.iter().zip(&sample.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(gap <= 10.0 * tol, "{gap}");

    let hac = HacConfig::default();
    let shells = ShellIndex::new(op.base(), hac.bandwidth);
    let fit = fit_iv(&Design::from_sample(&sample), Some((&shells, &hac))).unwrap();
    for which in [VarianceKind::Homoskedastic, VarianceKind::NetworkHac] {
        let set = ar_confidence_set_closed_form(&fit, which, 0.05).unwrap();
        let test = ar_test(params.beta, &fit, which, 0.05).unwrap();
        assert_eq!(set.contains(params.beta), !test.reject);
    }
}

#[test]
fn every_rep_sees_the_same_network_and_covariates() {
    let mut cfg = CellConfig::new(300, Regime::Constant { c: 2.0 }, 0.4666, Scaling::Scaled);
    cfg.reps = 25;
    cfg.master_seed = 4;
    let first = CellSetup::build(&cfg).unwrap();
    let run = run_cell_detailed(&cfg);
    assert_eq!(run.summary.network_fingerprint, first.fingerprint());
    assert_eq!(run.reps.len(), 25);
    assert!(run.reps.iter().enumerate().all(|(i, r)| r.as_ref().unwrap().rep == i));
    // a different rep count reuses the same network and X
    cfg.reps = 3;
    assert_eq!(run_cell_detailed(&cfg).summary.network_fingerprint, first.fingerprint());
}
