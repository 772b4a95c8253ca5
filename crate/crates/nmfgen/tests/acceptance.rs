//! Acceptance gate: golden formula checks, property suites and synthetic
//! oracles, one test per criterion. Criterion 12 (runtime scaling bands)
//! lives in `acceptance_scaling.rs` so its timings never share a process
//! with these compute-heavy tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nmfgen::deviance::{log_likelihood, negbin_log_likelihood, tweedie_log_density};
use nmfgen::diagnose::{bic_from_loglik, hungarian_min, match_features};
use nmfgen::estimate::{estimate_alpha, estimate_power, dispersion_at_power};
use nmfgen::factorize::{
    fit, init_factors, negbin_d_update, negbin_w_update, normalize_convex, sweep_convex,
    sweep_traditional, Engine, Factors, FitConfig,
};
use nmfgen::model::{free_parameter_count, CostModel, DataMatrix, Family, ModelSpec, Variant};
use nmfgen::numeric::golden_section_max;
use nmfgen::synth::{synth, SynthFamily};

fn pass(id: u32, name: &str) {
    println!("ACCEPTANCE {id:02} ({name}): PASS");
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_rel_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-300))
        .fold(0.0, f64::max)
}

const ENGINES: [Engine; 4] = [
    Engine::Normal,
    Engine::Poisson,
    Engine::Tweedie(1.5),
    Engine::NegBin(5.0),
];

#[test]
fn acceptance_01_monotone_descent_all_engines() {
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + instance);
        let n = rng.random_range(8..=30);
        let m = rng.random_range(6..=20);
        let v_arr = Array2::from_shape_fn((n, m), |_| {
            if rng.random::<f64>() < 0.15 {
                0.0
            } else {
                rng.random_range(0.2..8.0)
            }
        });
        let v = DataMatrix::new(v_arr).unwrap();
        for variant in [Variant::Traditional, Variant::Convex] {
            for engine in ENGINES {
                let (family, param) = match engine {
                    Engine::Normal => (Family::Normal, None),
                    Engine::Poisson => (Family::Poisson, None),
                    Engine::Tweedie(p) => (Family::Tweedie, Some(p)),
                    Engine::NegBin(a) => (Family::NegBin, Some(a)),
                };
                let cost = match engine {
                    Engine::Normal => CostModel::Normal { sigma2: 1.0 },
                    Engine::Poisson => CostModel::Poisson,
                    Engine::Tweedie(p) => CostModel::Tweedie { p, sigma2: 1.0 },
                    Engine::NegBin(alpha) => CostModel::NegBin { alpha },
                };
                let spec = ModelSpec::new(variant, family, param, Some(3));
                let config = FitConfig {
                    restarts: 1,
                    max_iter: 200,
                    tol: Some(0.0),
                    seed: instance,
                    ..FitConfig::default()
                };
                let result = fit(&v, &spec, &cost, &config).unwrap();
                assert_eq!(result.iterations, 200);
                for (t, pair) in result.divergence_trace.windows(2).enumerate() {
                    assert!(
                        pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0),
                        "{variant:?} {engine:?} instance {instance} step {t}: {} -> {}",
                        pair[0],
                        pair[1]
                    );
                }
            }
        }
    }
    pass(1, "monotone descent, 8 engines x 20 instances x 200 iterations");
}

#[test]
fn acceptance_02_tweedie_collapses_to_normal_and_poisson_updates() {
    for instance in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + instance);
        let n = rng.random_range(4..=12);
        let m = rng.random_range(3..=10);
        let k = rng.random_range(1..=3);
        let v = random_matrix(&mut rng, n, m, 0.2, 6.0);
        let w = random_matrix(&mut rng, n, k, 0.1, 1.5);
        let h = random_matrix(&mut rng, k, m, 0.1, 1.5);
        let e = random_matrix(&mut rng, n, k, 0.1, 1.5);
        let d = random_matrix(&mut rng, k, n, 0.1, 1.5);

        for (p, dedicated) in [(0.0, Engine::Normal), (1.0, Engine::Poisson)] {
            let (w_t, h_t) = sweep_traditional(Engine::Tweedie(p), &w, &h, &v).unwrap();
            let (w_d, h_d) = sweep_traditional(dedicated, &w, &h, &v).unwrap();
            assert!(max_abs_diff(&w_t, &w_d) < 1e-12, "traditional W at p = {p}");
            assert!(max_abs_diff(&h_t, &h_d) < 1e-12, "traditional H at p = {p}");

            let (e_t, d_t) = sweep_convex(Engine::Tweedie(p), &e, &d, &v).unwrap();
            let (e_d, d_d) = sweep_convex(dedicated, &e, &d, &v).unwrap();
            assert!(max_abs_diff(&e_t, &e_d) < 1e-12, "convex E at p = {p}");
            assert!(max_abs_diff(&d_t, &d_d) < 1e-12, "convex D at p = {p}");
        }
    }
    pass(2, "Tweedie updates at p = 0 and p = 1 equal the dedicated updates");
}

#[test]
fn acceptance_03_negbin_updates_have_poisson_limit() {
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + instance);
        let n = rng.random_range(5..=15);
        let m = rng.random_range(4..=12);
        let k = rng.random_range(1..=3);
        let v = random_matrix(&mut rng, n, m, 0.2, 8.0);
        let w = random_matrix(&mut rng, n, k, 0.1, 1.5);
        let h = random_matrix(&mut rng, k, m, 0.1, 1.5);
        // Convex factors at the fit-time scale, so V^T E D sits at the data
        // scale and the alpha -> infinity comparison is not inflated.
        let convex_scale = 2.0 / ((n * k) as f64).sqrt();
        let e = random_matrix(&mut rng, n, k, 0.1 * convex_scale, convex_scale);
        let d = random_matrix(&mut rng, k, n, 0.1 * convex_scale, convex_scale);

        let (w_nb, h_nb) = sweep_traditional(Engine::NegBin(1e8), &w, &h, &v).unwrap();
        let (w_po, h_po) = sweep_traditional(Engine::Poisson, &w, &h, &v).unwrap();
        assert!(max_rel_diff(&w_nb, &w_po) < 1e-6, "traditional W, instance {instance}");
        assert!(max_rel_diff(&h_nb, &h_po) < 1e-6, "traditional H, instance {instance}");

        let (e_nb, d_nb) = sweep_convex(Engine::NegBin(1e8), &e, &d, &v).unwrap();
        let (e_po, d_po) = sweep_convex(Engine::Poisson, &e, &d, &v).unwrap();
        assert!(max_rel_diff(&e_nb, &e_po) < 1e-6, "convex E, instance {instance}");
        assert!(max_rel_diff(&d_nb, &d_po) < 1e-6, "convex D, instance {instance}");
    }
    pass(3, "NB updates at alpha = 1e8 match Poisson updates to 1e-6 relative");
}

#[test]
fn acceptance_04_convex_d_update_equals_traditional_w_update() {
    for instance in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + instance);
        let n = rng.random_range(4..=12);
        let m = rng.random_range(3..=10);
        let k = rng.random_range(1..=4);
        let v = random_matrix(&mut rng, n, m, 0.2, 5.0);
        let e = random_matrix(&mut rng, n, k, 0.1, 1.5);
        let d = random_matrix(&mut rng, k, n, 0.1, 1.5);
        let alpha = rng.random_range(0.5..20.0);

        let d_new = negbin_d_update(&e, &d, &v, alpha);
        let w = d.t().to_owned();
        let h = v.t().dot(&e).t().to_owned();
        let w_new = negbin_w_update(&w, &h, &v, alpha);
        assert!(
            max_abs_diff(&d_new, &w_new.t().to_owned()) < 1e-12,
            "instance {instance}"
        );
    }
    pass(4, "convex-NB D-update is the traditional-NB W-update transposed");
}

#[test]
fn acceptance_05_golden_parameter_counts() {
    let count = |variant, family, k, n, m| {
        free_parameter_count(&ModelSpec::new(variant, family, None, Some(k)), n, m).unwrap()
    };
    use Family::*;
    use Variant::*;
    assert_eq!(count(Traditional, Poisson, 5, 260, 96), 1684);
    assert_eq!(count(Traditional, Normal, 5, 260, 96), 1684);
    assert_eq!(count(Traditional, NegBin, 5, 260, 96), 1685);
    assert_eq!(count(Traditional, Tweedie, 5, 260, 96), 1685);
    assert_eq!(count(Convex, Poisson, 5, 260, 96), 2340);
    assert_eq!(count(Convex, Normal, 5, 260, 96), 2340);
    assert_eq!(count(Convex, NegBin, 5, 260, 96), 2341);
    assert_eq!(count(Convex, Tweedie, 5, 260, 96), 2341);
    assert_eq!(count(Traditional, Poisson, 7, 500, 6354), 41624);
    assert_eq!(count(Traditional, NegBin, 7, 500, 6354), 41625);
    assert_eq!(count(Traditional, Tweedie, 7, 500, 6354), 41625);
    assert_eq!(count(Convex, Poisson, 7, 500, 6354), 6500);
    assert_eq!(count(Convex, NegBin, 7, 500, 6354), 6501);
    pass(5, "golden free-parameter counts");
}

#[test]
fn acceptance_06_planted_poisson_recovery() {
    let data = synth(200, 50, 3, SynthFamily::Poisson, 50.0, 4242).unwrap();
    let spec = ModelSpec::new(Variant::Traditional, Family::Poisson, None, Some(3));
    let config = FitConfig {
        restarts: 10,
        max_iter: 1500,
        seed: 1,
        ..FitConfig::default()
    };
    let fitted = fit(&data.v, &spec, &CostModel::Poisson, &config).unwrap();
    let matched = match_features(data.h.view(), fitted.features(&data.v).view()).unwrap();
    assert!(
        matched.mean_similarity >= 0.95,
        "mean matched cosine {} below 0.95 (pairs: {:?})",
        matched.mean_similarity,
        matched.pairs
    );
    pass(6, "planted Poisson features recovered with mean cosine >= 0.95");
}

#[test]
fn acceptance_07_bic_ranks_negbin_above_poisson_above_normal() {
    let mut successes = 0;
    for seed in 0..10u64 {
        let data = synth(200, 100, 3, SynthFamily::NegBin { alpha: 5.0 }, 5.0, 5000 + seed).unwrap();
        let v = &data.v;
        let cells = v.n_rows() * v.n_cols();
        let config = FitConfig {
            restarts: 2,
            max_iter: 400,
            seed,
            ..FitConfig::default()
        };

        let spec_po = ModelSpec::new(Variant::Traditional, Family::Poisson, None, Some(3));
        let po_fit = fit(v, &spec_po, &CostModel::Poisson, &config).unwrap();
        let bic_po = bic_from_loglik(
            log_likelihood(v, po_fit.fitted.view(), &CostModel::Poisson).unwrap(),
            free_parameter_count(&spec_po, v.n_rows(), v.n_cols()).unwrap(),
            cells,
        );

        // Algorithm structure: the Poisson reconstruction seeds the alpha MLE.
        let alpha = estimate_alpha(v, po_fit.fitted.view()).unwrap();
        let spec_nb = ModelSpec::new(Variant::Traditional, Family::NegBin, None, Some(3));
        let nb_cost = CostModel::NegBin { alpha };
        let nb_fit = fit(v, &spec_nb, &nb_cost, &config).unwrap();
        let bic_nb = bic_from_loglik(
            log_likelihood(v, nb_fit.fitted.view(), &nb_cost).unwrap(),
            free_parameter_count(&spec_nb, v.n_rows(), v.n_cols()).unwrap(),
            cells,
        );

        let spec_n = ModelSpec::new(Variant::Traditional, Family::Normal, None, Some(3));
        let n_fit = fit(v, &spec_n, &CostModel::Normal { sigma2: 1.0 }, &config).unwrap();
        let sigma2 = dispersion_at_power(v, n_fit.fitted.view(), 0.0, &spec_n).unwrap();
        let n_cost = CostModel::Normal { sigma2 };
        let bic_n = bic_from_loglik(
            log_likelihood(v, n_fit.fitted.view(), &n_cost).unwrap(),
            free_parameter_count(&spec_n, v.n_rows(), v.n_cols()).unwrap(),
            cells,
        );

        if bic_nb < bic_po && bic_po < bic_n {
            successes += 1;
        } else {
            eprintln!("seed {seed}: BIC nb={bic_nb:.1} po={bic_po:.1} normal={bic_n:.1}");
        }
    }
    assert!(successes >= 9, "correct BIC ordering in only {successes}/10 seeds");
    pass(7, "BIC ranks NB above Poisson above Normal on NB(5) data");
}

#[test]
fn acceptance_08_power_recovery() {
    let config = FitConfig {
        restarts: 2,
        max_iter: 250,
        seed: 3,
        ..FitConfig::default()
    };

    let compound = synth(
        60,
        40,
        2,
        SynthFamily::CompoundPoisson { p: 1.5, sigma2: 1.0 },
        30.0,
        81,
    )
    .unwrap();
    let spec = ModelSpec::new(Variant::Traditional, Family::Tweedie, None, Some(2));
    let estimate = estimate_power(&compound.v, &spec, &config).unwrap();
    assert!(
        (1.3..=1.7).contains(&estimate.p),
        "compound-Poisson data: p = {} outside [1.3, 1.7]",
        estimate.p
    );

    let poissonish = synth(80, 50, 2, SynthFamily::Poisson, 2.0, 82).unwrap();
    assert!(poissonish.v.is_sparse(), "low-mean Poisson draw should contain zeros");
    let estimate = estimate_power(&poissonish.v, &spec, &config).unwrap();
    assert!(
        (1.0..=1.15).contains(&estimate.p),
        "Poisson data: p = {} outside [1.0, 1.15]",
        estimate.p
    );
    pass(8, "profile likelihood recovers p = 1.5 and the Poisson regime");
}

#[test]
fn acceptance_09_dispersion_recovery_with_oracle_agreement() {
    let data = synth(150, 75, 3, SynthFamily::NegBin { alpha: 5.0 }, 25.0, 907).unwrap();
    let spec = ModelSpec::new(Variant::Traditional, Family::Poisson, None, Some(3));
    let config = FitConfig {
        restarts: 2,
        max_iter: 400,
        seed: 11,
        ..FitConfig::default()
    };
    let po_fit = fit(&data.v, &spec, &CostModel::Poisson, &config).unwrap();
    let vhat = po_fit.fitted;
    let alpha = estimate_alpha(&data.v, vhat.view()).unwrap();
    assert!(
        (3.5..=7.0).contains(&alpha),
        "alpha {alpha} outside the recovery band"
    );

    let v_view = data.v.values().view();
    let (theta, _) = golden_section_max((1e-6_f64).ln(), (1e8_f64).ln(), 1e-10, |t| {
        negbin_log_likelihood(v_view, vhat.view(), t.exp()).unwrap_or(f64::NEG_INFINITY)
    });
    let oracle = theta.exp();
    assert!(
        (alpha - oracle).abs() / oracle < 1e-3,
        "Newton {alpha} vs golden-section oracle {oracle}"
    );
    pass(9, "alpha recovered in [3.5, 7] and agrees with the 1-D oracle");
}

/// Composite Simpson rule; n must be even.
fn simpson(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let weight = if i % 2 == 0 { 2.0 } else { 4.0 };
        acc += weight * f(a + h * i as f64);
    }
    acc * h / 3.0
}

#[test]
fn acceptance_10_density_spot_values_and_unit_mass() {
    let normal_at_mean = tweedie_log_density(2.0, 2.0, 0.0, 1.0).unwrap();
    assert!((normal_at_mean - (-0.918_938_533_204_672_7)).abs() < 1e-9);

    let poisson = tweedie_log_density(3.0, 2.0, 1.0, 1.0).unwrap();
    assert!((poisson - (-1.712_317_927_548_219)).abs() < 1e-9);

    let zero_mass = tweedie_log_density(0.0, 1.0, 1.5, 1.0).unwrap();
    assert!((zero_mass - (-2.0)).abs() < 1e-9);

    // Zero atom plus quadrature over the positive part.
    let (mu, p, sigma2) = (1.0, 1.5, 1.0);
    let atom = tweedie_log_density(0.0, mu, p, sigma2).unwrap().exp();
    let integral = simpson(1e-9, 40.0, 200_000, |x| {
        tweedie_log_density(x, mu, p, sigma2).unwrap().exp()
    });
    let total = atom + integral;
    assert!(
        (total - 1.0).abs() < 1e-6,
        "zero atom {atom} + integral {integral} = {total}"
    );
    pass(10, "density spot values at 1e-9 and unit total mass at p = 1.5");
}

#[test]
fn acceptance_11_hungarian_equals_brute_force_up_to_k6() {
    fn permutations(k: usize) -> Vec<Vec<usize>> {
        if k == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for rest in permutations(k - 1) {
            for pos in 0..k {
                let mut perm = rest.clone();
                perm.insert(pos, k - 1);
                out.push(perm);
            }
        }
        out
    }
    for instance in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11_000 + instance);
        let k = rng.random_range(1..=6);
        let sim = random_matrix(&mut rng, k, k, 0.0, 1.0);
        let assignment = hungarian_min(&sim.mapv(|s| -s));
        let ours: f64 = assignment.iter().enumerate().map(|(i, &j)| sim[(i, j)]).sum();
        let brute = permutations(k)
            .into_iter()
            .map(|perm| perm.iter().enumerate().map(|(i, &j)| sim[(i, j)]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(
            (ours - brute).abs() < 1e-10,
            "instance {instance} (K = {k}): {ours} vs brute {brute}"
        );
    }
    pass(11, "Hungarian assignment equals brute force for K <= 6");
}

#[test]
fn acceptance_13_convex_normalization_convention() {
    let data = synth(40, 25, 3, SynthFamily::Poisson, 20.0, 77).unwrap();
    let v_arr = data.v.values();

    // Fitted output carries the normalisation.
    let spec = ModelSpec::new(Variant::Convex, Family::Poisson, None, Some(3));
    let config = FitConfig {
        restarts: 2,
        max_iter: 300,
        seed: 5,
        ..FitConfig::default()
    };
    let fitted = fit(&data.v, &spec, &CostModel::Poisson, &config).unwrap();
    let Factors::Convex { e, .. } = &fitted.factors else {
        panic!("convex fit must produce convex factors")
    };
    for (k, s) in v_arr.t().dot(e).sum_axis(ndarray::Axis(0)).iter().enumerate() {
        assert!((s - 1.0).abs() <= 1e-9, "column {k} of V^T E sums to {s}");
    }

    // Normalising preserves the reconstruction.
    let Factors::Convex { e: e0, d: d0 } = init_factors(&data.v, 3, Variant::Convex, 9, None)
    else {
        unreachable!()
    };
    let (mut e, mut d) = (e0, d0);
    for _ in 0..20 {
        (e, d) = sweep_convex(Engine::Poisson, &e, &d, v_arr).unwrap();
    }
    let before = v_arr.t().dot(&e).dot(&d);
    let (e_n, d_n) = normalize_convex(&e, &d, v_arr).unwrap();
    let after = v_arr.t().dot(&e_n).dot(&d_n);
    assert!(
        max_rel_diff(&after, &before) < 1e-12,
        "reconstruction changed by {}",
        max_rel_diff(&after, &before)
    );
    for (k, s) in v_arr.t().dot(&e_n).sum_axis(ndarray::Axis(0)).iter().enumerate() {
        assert!((s - 1.0).abs() <= 1e-9, "column {k} sums to {s} after normalisation");
    }
    pass(13, "convex normalisation: unit column sums, reconstruction unchanged");
}
