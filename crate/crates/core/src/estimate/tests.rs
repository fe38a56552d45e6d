use super::*;
use crate::dgp::{sample_covariates, sample_errors, solve_outcomes, CovariateSpec, ModelParams};
use crate::graph::{sample_er, Network, NetworkOperator};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cols(list: &[(&str, &[f64])]) -> Vec<(String, Vec<f64>)> {
    list.iter().map(|(n, c)| (n.to_string(), c.to_vec())).collect()
}

fn simulate(n: usize, d: f64, beta: f64, sigma: f64, seed: u64) -> SimulatedSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = sample_er(n, (d / n as f64).min(1.0), &mut rng).unwrap();
    let op = NetworkOperator::scaled(g);
    let spec = CovariateSpec {
        lognormal_sigma: 1.0,
        ..Default::default()
    };
    let x = sample_covariates(n, &spec, &mut rng).unwrap();
    let eps = sample_errors(n, sigma, &mut rng);
    solve_outcomes(&op, &ModelParams::simulation(beta), &x, &eps).unwrap()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn ols_exact_line() {
    let x = [0.0, 1.0, 2.0, 3.0, 4.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let fit = ols(cols(&[("const", &[1.0; 5]), ("x", &x)]), &y).unwrap();
    assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
    assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
}

#[test]
fn ols_constant_gives_mean() {
    let y = [3.0, 5.0, 10.0, -2.0];
    let fit = ols(cols(&[("const", &[1.0; 4])]), &y).unwrap();
    assert!((fit.coefficients[0] - 4.0).abs() < 1e-14);
}

#[test]
fn ols_residuals_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200;
    let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 1e4).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let fit = ols(cols(&[("const", &vec![1.0; n]), ("a", &a), ("b", &b)]), &y).unwrap();
    for col in [vec![1.0; n], a, b] {
        let dot: f64 = col.iter().zip(&fit.residuals).map(|(u, v)| u * v).sum();
        let scale = col.iter().map(|v| v * v).sum::<f64>().sqrt() * fit.residuals.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(dot.abs() <= 1e-8 * scale);
    }
}

#[test]
fn collinear_column_is_named() {
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b: Vec<f64> = a.iter().map(|v| 3.0 * v - 1.0).collect();
    let err = ols(cols(&[("const", &[1.0; 5]), ("a", &a), ("b", &b)]), &[0.0; 5]).unwrap_err();
    assert_eq!(err, Error::Collinear { column: "b".into() });
    let err = ols(cols(&[("const", &[1.0; 5]), ("zero", &[0.0; 5])]), &[0.0; 5]).unwrap_err();
    assert_eq!(err, Error::Collinear { column: "zero".into() });
}

#[test]
fn complete_graph_design_is_collinear() {
    for n in [3, 6] {
        let op = NetworkOperator::unscaled(Network::complete(n));
        let x: Vec<f64> = (0..n).map(|i| (i * i) as f64 + 1.0).collect();
        let s = solve_outcomes(&op, &ModelParams::simulation(0.1), &x, &vec![0.3; n]).unwrap();
        assert!(matches!(fit_iv(&Design::from_sample(&s), None), Err(Error::Collinear { .. })));
    }
}

#[test]
fn empty_second_order_is_degenerate() {
    // a perfect matching has no two-step walks
    let g = Network::from_edges(6, [(0, 1), (2, 3), (4, 5)]).unwrap();
    let op = NetworkOperator::unscaled(g);
    let s = solve_outcomes(&op, &ModelParams::simulation(0.4), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[0.0; 6]).unwrap();
    assert!(matches!(
        fit_iv(&Design::from_sample(&s), None),
        Err(Error::DegenerateInstrument(_))
    ));
}

#[test]
fn noiseless_recovery() {
    let s = simulate(300, 5.0, 0.4666, 0.0, 3);
    let fit = fit_iv(&Design::from_sample(&s), None).unwrap();
    assert!((fit.beta_hat.unwrap() - 0.4666).abs() < 1e-8);
}

/// Textbook 2SLS: project GY on Z, regress Y on (W, P_Z GY).
fn projection_2sls(s: &SimulatedSample) -> (f64, f64) {
    let n = s.x.len();
    let z = cols(&[("const", &vec![1.0; n]), ("X", &s.x), ("GX", &s.gx), ("G2X", &s.g2x)]);
    let first = ols(z, &s.gy).unwrap();
    let gy_hat: Vec<f64> = s.gy.iter().zip(&first.residuals).map(|(g, r)| g - r).collect();
    let second = ols(
        cols(&[("const", &vec![1.0; n]), ("X", &s.x), ("GX", &s.gx), ("GYhat", &gy_hat)]),
        &s.y,
    )
    .unwrap();
    let beta = second.coefficients[3];
    // structural residuals use the actual GY
    let w = [vec![1.0; n], s.x.clone(), s.gx.clone(), s.gy.clone()];
    let resid: Vec<f64> = (0..n)
        .map(|i| s.y[i] - (0..4).map(|c| w[c][i] * second.coefficients[c]).sum::<f64>())
        .collect();
    let s2 = resid.iter().map(|r| r * r).sum::<f64>() / (n - 4) as f64;
    (beta, (s2 * second.gram_inverse[(3, 3)]).sqrt())
}

#[test]
fn homoskedastic_t_se_is_textbook_2sls() {
    let s = simulate(500, 5.0, 0.4666, 1.0, 11);
    let fit = fit_iv(&Design::from_sample(&s), None).unwrap();
    let (beta, se) = projection_2sls(&s);
    assert!(rel_close(fit.beta_hat.unwrap(), beta, 1e-9));
    let wald = wald_interval(&fit, VarianceKind::Homoskedastic, 0.05).unwrap().unwrap();
    assert!(rel_close(wald.se, se, 1e-8), "{} vs {}", wald.se, se);
}

#[test]
fn homoskedastic_matches_textbook_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 3.0).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let y1: Vec<f64> = (0..n).map(|i| 1.0 + a[i] - 2.0 * b[i] + rng.random::<f64>()).collect();
    let y2: Vec<f64> = (0..n).map(|i| -a[i] + b[i] + rng.random::<f64>()).collect();
    let columns = cols(&[("const", &vec![1.0; n]), ("a", &a), ("b", &b)]);
    let design = PreparedDesign::new(columns).unwrap();
    let c1 = design.coefficients(&y1);
    let c2 = design.coefficients(&y2);
    let e1 = design.residuals(&y1, &c1);
    let e2 = design.residuals(&y2, &c2);
    let block = homoskedastic_vcov(&design, &e1, &e2);
    // independent route: explicit inverse of Z'Z
    let mut zm = DMatrix::zeros(n, 3);
    for i in 0..n {
        zm[(i, 0)] = 1.0;
        zm[(i, 1)] = a[i];
        zm[(i, 2)] = b[i];
    }
    let zz_inv = (zm.transpose() * &zm).try_inverse().unwrap();
    let s2 = e2.iter().map(|v| v * v).sum::<f64>() / (n - 3) as f64;
    assert!(rel_close(block.v_xi, s2 * zz_inv[(2, 2)], 1e-10));
    let s1 = e1.iter().map(|v| v * v).sum::<f64>() / (n - 3) as f64;
    assert!(rel_close(block.v_pi, s1 * zz_inv[(2, 2)], 1e-10));
}

#[test]
fn zero_residuals_give_zero_block() {
    let s = simulate(200, 4.0, 0.3, 0.0, 2);
    let d = Design::from_sample(&s).prepare().unwrap();
    let z = vec![0.0; 200];
    let block = homoskedastic_vcov(&d, &z, &z);
    assert_eq!((block.v_xi, block.v_pi, block.cov), (0.0, 0.0, 0.0));
}

#[test]
fn first_stage_f_edge_cases() {
    let s = simulate(300, 5.0, 0.4666, 1.0, 4);
    let mut fit = fit_iv(&Design::from_sample(&s), None).unwrap();
    let f = first_stage_f(&fit, VarianceKind::Homoskedastic).unwrap();
    assert!(rel_close(f, fit.pi_hat.powi(2) / fit.vcov_homo.v_pi, 1e-15));
    assert_eq!(
        first_stage_f(&fit, VarianceKind::NetworkHac).unwrap_err(),
        Error::MissingVariance("hac")
    );
    fit.pi_hat = 0.0;
    assert_eq!(first_stage_f(&fit, VarianceKind::Homoskedastic).unwrap(), 0.0);
    fit.pi_hat = 1.0;
    fit.vcov_homo.v_pi = 0.0;
    assert!(matches!(
        first_stage_f(&fit, VarianceKind::Homoskedastic),
        Err(Error::DegenerateVariance(_))
    ));
}

#[test]
fn correlation_extremes() {
    let a = [1.0, 3.0, 2.0, 7.0];
    let neg: Vec<f64> = a.iter().map(|v| -v).collect();
    assert!((corr_endog_instrument(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    assert!((corr_endog_instrument(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
    assert_eq!(
        corr_endog_instrument(&a, &[2.0; 4]).unwrap_err(),
        Error::UndefinedCorrelation("G2X")
    );
}

#[test]
fn psd_floor_projects() {
    let ok = VcovBlock {
        v_xi: 2.0,
        v_pi: 1.0,
        cov: 0.5,
    };
    assert_eq!(ok.psd_floor(), (ok, false));
    let bad = VcovBlock {
        v_xi: 1.0,
        v_pi: 1.0,
        cov: 2.0,
    };
    let (fixed, changed) = bad.psd_floor();
    assert!(changed);
    // eigenvalues 3 and -1; keep 3 along (1, 1)/sqrt(2)
    assert!((fixed.v_xi - 1.5).abs() < 1e-14);
    assert!((fixed.v_pi - 1.5).abs() < 1e-14);
    assert!((fixed.cov - 1.5).abs() < 1e-14);
    let neg = VcovBlock {
        v_xi: -1.0,
        v_pi: -2.0,
        cov: 0.0,
    };
    assert_eq!(neg.psd_floor().0.v_xi, 0.0);
}

#[test]
fn omega_quadratic() {
    let b = VcovBlock {
        v_xi: 1.0,
        v_pi: 1.0,
        cov: 0.0,
    };
    assert_eq!(b.omega(0.0), 1.0);
    assert_eq!(b.omega(2.0), 5.0);
}

fn floyd(g: &Network) -> Vec<Vec<usize>> {
    let n = g.n();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        for &j in g.neighbors(i) {
            d[i][j] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

/// All-pairs HAC oracle: explicit distances, explicit inverse, explicit sums.
fn brute_force_joint(g: &Network, z: &DMatrix<f64>, e1: &[f64], e2: &[f64], cfg: &HacConfig) -> DMatrix<f64> {
    let (n, k) = z.shape();
    let d = floyd(g);
    let mut meat = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..n {
        for j in 0..n {
            if d[i][j] > cfg.bandwidth {
                continue;
            }
            let w = cfg.weight(d[i][j]);
            for a in 0..2 * k {
                let ya = if a < k { e1[i] * z[(i, a)] } else { e2[i] * z[(i, a - k)] };
                for b in 0..2 * k {
                    let yb = if b < k { e1[j] * z[(j, b)] } else { e2[j] * z[(j, b - k)] };
                    meat[(a, b)] += w * ya * yb;
                }
            }
        }
    }
    meat /= n as f64;
    let szz_inv = ((z.transpose() * z) / n as f64).try_inverse().unwrap();
    let mut bread = DMatrix::zeros(2 * k, 2 * k);
    bread.view_mut((0, 0), (k, k)).copy_from(&szz_inv);
    bread.view_mut((k, k), (k, k)).copy_from(&szz_inv);
    &bread * meat * &bread / n as f64
}

fn random_design(n: usize, rng: &mut ChaCha8Rng) -> (PreparedDesign, Vec<f64>, Vec<f64>) {
    let mut columns = vec![("const".to_string(), vec![1.0; n])];
    for c in 0..3 {
        columns.push((format!("c{c}"), (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()));
    }
    let e1 = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let e2 = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    (PreparedDesign::new(columns).unwrap(), e1, e2)
}

#[test]
fn hac_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for trial in 0..200 {
        let n = 6 + trial % 7;
        let g = sample_er(n, [0.2, 0.4, 0.7][trial % 3], &mut rng).unwrap();
        let (design, e1, e2) = random_design(n, &mut rng);
        let kernel = if trial % 2 == 0 { Kernel::Bartlett } else { Kernel::Rectangular };
        let cfg = HacConfig {
            kernel,
            bandwidth: trial % 4,
        };
        let shells = ShellIndex::new(&g, cfg.bandwidth);
        let joint = network_hac_joint(&design, &e1, &e2, &shells, &cfg).unwrap();
        let oracle = brute_force_joint(&g, design.matrix(), &e1, &e2, &cfg);
        let scale = oracle.amax();
        assert!((&joint - &oracle).amax() <= 1e-10 * scale, "trial {trial}");

        let k = design.k();
        let inst = k - 1;
        let raw = VcovBlock {
            v_xi: oracle[(k + inst, k + inst)],
            v_pi: oracle[(inst, inst)],
            cov: oracle[(k + inst, inst)],
        };
        let (block, _) = network_hac_vcov(&design, &e1, &e2, &shells, &cfg).unwrap();
        let expect = raw.psd_floor().0;
        for (a, b) in [(block.v_xi, expect.v_xi), (block.v_pi, expect.v_pi), (block.cov, expect.cov)] {
            assert!((a - b).abs() <= 1e-10 * scale, "trial {trial}: {a} vs {b}");
        }
    }
}

#[test]
fn bandwidth_zero_is_white() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 40;
    let g = sample_er(n, 0.1, &mut rng).unwrap();
    let (design, e1, e2) = random_design(n, &mut rng);
    let cfg = HacConfig {
        kernel: Kernel::Bartlett,
        bandwidth: 0,
    };
    let (block, _) = network_hac_vcov(&design, &e1, &e2, &ShellIndex::new(&g, 0), &cfg).unwrap();
    let h = design.instrument_influence();
    let white_pi: f64 = (0..n).map(|i| (h[i] * e1[i]).powi(2)).sum();
    let white_xi: f64 = (0..n).map(|i| (h[i] * e2[i]).powi(2)).sum();
    assert!(rel_close(block.v_pi, white_pi, 1e-12));
    assert!(rel_close(block.v_xi, white_xi, 1e-12));

    // an empty graph ignores the bandwidth
    let empty = Network::empty(n);
    let wide = HacConfig {
        kernel: Kernel::Rectangular,
        bandwidth: 3,
    };
    let (b3, _) = network_hac_vcov(&design, &e1, &e2, &ShellIndex::new(&empty, 3), &wide).unwrap();
    assert_eq!(b3, block);
}

#[test]
fn hac_rejects_short_shell_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = sample_er(10, 0.3, &mut rng).unwrap();
    let (design, e1, e2) = random_design(10, &mut rng);
    let cfg = HacConfig::default();
    assert!(network_hac_vcov(&design, &e1, &e2, &ShellIndex::new(&g, 1), &cfg).is_err());
}

#[test]
fn rectangular_hac_is_permutation_equivariant() {
    let s = simulate(120, 4.0, 0.4666, 1.0, 31);
    let op = NetworkOperator::scaled(sample_er(120, 4.0 / 120.0, &mut ChaCha8Rng::seed_from_u64(31)).unwrap());
    let cfg = HacConfig {
        kernel: Kernel::Rectangular,
        bandwidth: 2,
    };
    let fit = fit_iv(&Design::from_sample(&s), Some((&ShellIndex::new(op.base(), 2), &cfg))).unwrap();

    let mut perm: Vec<usize> = (0..120).collect();
    perm.reverse();
    perm.swap(3, 70);
    let g2 = op.base().permuted(&perm).unwrap();
    let relabel = |v: &[f64]| {
        let mut out = vec![0.0; v.len()];
        for (i, &p) in perm.iter().enumerate() {
            out[p] = v[i];
        }
        out
    };
    let design = Design {
        exog: exog_columns(&relabel(&s.x), &relabel(&s.gx)),
        instrument: ("G2X".into(), relabel(&s.g2x)),
        endog: relabel(&s.gy),
        response: relabel(&s.y),
    };
    let fit2 = fit_iv(&design, Some((&ShellIndex::new(&g2, 2), &cfg))).unwrap();
    let (a, b) = (fit.vcov_hac.unwrap(), fit2.vcov_hac.unwrap());
    assert!(rel_close(a.v_xi, b.v_xi, 1e-9));
    assert!(rel_close(a.v_pi, b.v_pi, 1e-9));
    assert!(rel_close(a.cov, b.cov, 1e-9));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn iv_invariants(seed in 0u64..1_000_000, n in 80usize..300, d in 2.0f64..8.0, beta in -0.8f64..0.8) {
        let s = simulate(n, d, beta, 1.0, seed);
        let design = Design::from_sample(&s);
        let Ok(prepared) = design.prepare() else { return Ok(()); };
        let cfg = HacConfig::default();
        let shells = ShellIndex::new(
            &sample_er(n, (d / n as f64).min(1.0), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
            cfg.bandwidth,
        );
        let fit = fit_prepared(&prepared, &design.endog, &design.response, Some((&shells, &cfg))).unwrap();

        // just-identified 2SLS equivalence
        let (beta_proj, _) = projection_2sls(&s);
        prop_assert!(rel_close(fit.beta_hat.unwrap(), beta_proj, 1e-9));

        // Frisch-Waugh-Lovell: residualise GY and G2X on (1, X, GX)
        let w = exog_columns(&s.x, &s.gx);
        let ry = ols(w.clone(), &s.gy).unwrap().residuals;
        let rz = ols(w, &s.g2x).unwrap().residuals;
        let slope = ry.iter().zip(&rz).map(|(a, b)| a * b).sum::<f64>() / rz.iter().map(|b| b * b).sum::<f64>();
        prop_assert!(rel_close(fit.pi_hat, slope, 1e-9));

        // residual orthogonality in both equations
        let z = prepared.matrix();
        for c in 0..prepared.k() {
            let col = z.column(c);
            let norm = col.norm();
            for r in [&fit.eps_tilde, &fit.eta] {
                let dot: f64 = col.iter().zip(r.iter()).map(|(u, v)| u * v).sum();
                let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(dot.abs() <= 1e-8 * norm * rn.max(1e-300));
            }
        }

        // both blocks PSD
        prop_assert!(fit.vcov_homo.is_psd());
        let hac = fit.vcov_hac.unwrap();
        prop_assert!(hac.v_xi >= 0.0 && hac.v_pi >= 0.0);
        prop_assert!(hac.cov * hac.cov <= hac.v_xi * hac.v_pi * (1.0 + 1e-10) + 1e-300);
    }
}
