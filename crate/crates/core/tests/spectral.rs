use peeriv_core::graph::{full_spectrum, largest_eigenvalue, sample_er, NetworkOperator, DEFAULT_EIGEN_TOL};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Top eigenvalue of G(n, ln n / n) against `max(sqrt(max degree), np)`.
/// At n = 2000 the ratio sits near (np + 1) / np ~ 1.13, so the band is
/// [0.9, 1.25] and lambda_1 is also checked against np + 1.
#[test]
fn er_top_eigenvalue_tracks_degree_scale() {
    let n = 2000;
    let np = (n as f64).ln();
    let p = np / n as f64;
    let seeds = 40;
    let mut inside = 0;
    for seed in 0..seeds {
        let g = sample_er(n, p, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let delta = g.max_degree() as f64;
        let l1 = largest_eigenvalue(&NetworkOperator::unscaled(g), DEFAULT_EIGEN_TOL);
        let ratio = l1 / delta.sqrt().max(np);
        let near = ((l1 - (np + 1.0)) / (np + 1.0)).abs() < 0.1;
        if (0.9..=1.25).contains(&ratio) && near {
            inside += 1;
        }
    }
    assert!(inside as f64 >= 0.95 * seeds as f64, "{inside}/{seeds}");
}

#[test]
fn power_iteration_matches_dense_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [30, 80, 200] {
        for d in [0.5, 2.0, 6.0] {
            let g = sample_er(n, d / n as f64, &mut rng).unwrap();
            for op in [NetworkOperator::unscaled(g.clone()), NetworkOperator::scaled(g)] {
                let dense = full_spectrum(&op).unwrap().values[0];
                let power = largest_eigenvalue(&op, DEFAULT_EIGEN_TOL);
                assert!((dense - power).abs() <= 1e-6 * dense.max(1.0), "n={n} d={d}: {dense} vs {power}");
            }
        }
    }
}
