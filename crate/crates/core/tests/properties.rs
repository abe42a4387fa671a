use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use uncaps::acquisition::{ei_from_moments, expected_improvement, unscented_ei, AcquisitionContext};
use uncaps::baselines::mean_gain_policy;
use uncaps::env::{real_step, sim_step, LatentParam, PhysicalParam, PlantSpec, RealWorldSpec};
use uncaps::experiment::{format_sig6, SignTest};
use uncaps::gp::{rbf_kernel, GpHyperparams, GpModel, ObservationSet, Standardizer};
use uncaps::policy::LqrPolicyProvider;
use uncaps::rng::rng_from_seed;
use uncaps::unscented::{sigma_points, sigma_points_isotropic, unscented_mean, UtConfig};

fn unit_vec(d: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(0.0..=1.0f64, d).prop_map(DVector::from_vec)
}

fn dataset() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, f64)>)> {
    (1usize..=4).prop_flat_map(|d| {
        (
            Just(d),
            prop::collection::vec((prop::collection::vec(0.0..=1.0f64, d), -5.0..5.0f64), 1..=25),
        )
    })
}

fn observations(d: usize, pairs: &[(Vec<f64>, f64)]) -> ObservationSet {
    ObservationSet::from_pairs(d, pairs.iter().map(|(x, y)| (DVector::from_column_slice(x), *y))).unwrap()
}

fn hyperparams() -> impl Strategy<Value = GpHyperparams> {
    (0.05..1.0f64, 0.2..3.0f64, -5.0..-1.0f64).prop_map(|(l, s, n)| GpHyperparams::new(l, s, 10f64.powf(n)).unwrap())
}

fn all_params_plant() -> PlantSpec {
    PlantSpec::mass_spring_damper(PhysicalParam::ALL.map(LatentParam::with_default_range).to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ut_weights_sum_to_one(d in 1usize..=10, k in 0.1..10.0f64) {
        let cfg = UtConfig::new(k, d).unwrap();
        let total = cfg.center_weight() + 2.0 * d as f64 * cfg.side_weight();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ut_is_exact_for_affine_maps(
        d in 1usize..=6,
        k in 0.5..5.0f64,
        seed in any::<u64>(),
    ) {
        let mut rng = rng_from_seed(seed);
        use rand::Rng as _;
        let mean = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.05;
        let w = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let sp = sigma_points(&mean, &cov, k).unwrap();
        let ut = unscented_mean(|x| Ok(w.dot(x) + 1.5), &sp).unwrap();
        prop_assert!((ut - (w.dot(&mean) + 1.5)).abs() < 1e-10);
    }

    #[test]
    fn clamped_sigma_points_stay_in_cube(x in unit_vec(3), variance in 0.0..0.5f64, k in 0.5..4.0f64) {
        let sp = sigma_points_isotropic(&x, variance, k).unwrap().clamp_to_cube();
        prop_assert_eq!(sp.len(), 7);
        for p in sp.points() {
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn gp_matches_dense_oracle_and_variance_is_nonnegative(
        (d, pairs) in dataset(),
        h in hyperparams(),
        seed in any::<u64>(),
    ) {
        let data = observations(d, &pairs);
        let gp = GpModel::fit(&data, h).unwrap();
        let n = data.len();
        let st = Standardizer::fit(data.ys());
        let y = DVector::from_iterator(n, data.ys().iter().map(|&v| st.forward(v)));
        let mut k = DMatrix::from_fn(n, n, |i, j| rbf_kernel(&data.thetas()[i], &data.thetas()[j], &h).unwrap());
        for i in 0..n {
            k[(i, i)] += h.noise_variance + gp.jitter();
        }
        let k_inv = k.try_inverse().unwrap();
        let mut rng = rng_from_seed(seed);
        use rand::Rng as _;
        let x = DVector::from_fn(d, |_, _| rng.random::<f64>());
        let kx = DVector::from_iterator(n, data.thetas().iter().map(|t| rbf_kernel(t, &x, &h).unwrap()));
        let (m, v) = gp.posterior_standardized(&x).unwrap();
        let scale = 1.0 + (&k_inv * &y).amax();
        prop_assert!((m - kx.dot(&(&k_inv * &y))).abs() < 1e-6 * scale);
        prop_assert!(v >= 0.0 && v <= h.signal_variance + 1e-12);
    }

    #[test]
    fn ei_is_nonnegative_and_monotone_in_mean(mu in -5.0..5.0f64, s in 0.0..3.0f64, best in -5.0..5.0f64, dmu in 0.0..2.0f64) {
        let ei = ei_from_moments(mu, s, best);
        prop_assert!(ei >= 0.0);
        prop_assert!(ei >= (mu - best).max(0.0) - 1e-12);
        prop_assert!(ei_from_moments(mu + dmu, s, best) >= ei - 1e-12);
    }

    #[test]
    fn uei_is_nonnegative_and_equals_ei_without_noise((d, pairs) in dataset(), h in hyperparams(), x_seed in any::<u64>(), variance in 0.0..0.05f64) {
        let data = observations(d, &pairs);
        let gp = GpModel::fit(&data, h).unwrap();
        let mut rng = rng_from_seed(x_seed);
        use rand::Rng as _;
        let x = DVector::from_fn(d, |_, _| rng.random::<f64>());
        let plain = AcquisitionContext::new(&gp, 0.0, 2.0).unwrap();
        let noisy = AcquisitionContext::new(&gp, variance, 2.0).unwrap();
        prop_assert_eq!(unscented_ei(&plain, &x).unwrap(), expected_improvement(&plain, &x).unwrap());
        prop_assert!(unscented_ei(&noisy, &x).unwrap() >= 0.0);
    }

    #[test]
    fn reward_is_nonpositive(theta in unit_vec(5), s in prop::collection::vec(-3.0..3.0f64, 2), u in -5.0..5.0f64) {
        let plant = all_params_plant();
        let (_, r) = sim_step(&plant, &theta, &DVector::from_vec(s), &DVector::from_element(1, u)).unwrap();
        prop_assert!(r <= 0.0);
    }

    #[test]
    fn noiseless_world_is_the_simulator(theta in unit_vec(5), s in prop::collection::vec(-3.0..3.0f64, 2), u in -5.0..5.0f64, seed in any::<u64>()) {
        let plant = all_params_plant();
        let world = RealWorldSpec::new(plant.clone(), theta.clone(), 0.0).unwrap();
        let (s, u) = (DVector::from_vec(s), DVector::from_element(1, u));
        let real = real_step(&world, &s, &u, &mut rng_from_seed(seed)).unwrap();
        prop_assert_eq!(real, sim_step(&plant, &theta, &s, &u).unwrap());
    }

    #[test]
    fn parameter_map_is_increasing(a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        for p in PhysicalParam::ALL {
            let lp = LatentParam::with_default_range(p);
            if a < b {
                prop_assert!(lp.to_physical(a) < lp.to_physical(b));
            }
        }
    }

    #[test]
    fn sign_test_counts_partition_pairs(pairs in prop::collection::vec((-2i32..=2, -2i32..=2), 1..40)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(x, y)| (x as f64, y as f64)).unzip();
        let t = SignTest::from_pairs(&a, &b).unwrap();
        prop_assert_eq!(t.wins + t.losses + t.ties, pairs.len());
        prop_assert!((0.0..=1.0).contains(&t.p_value));
    }

    #[test]
    fn sig6_reparse_is_stable(x in -1e9..1e9f64) {
        let s = format_sig6(x);
        prop_assert_eq!(format_sig6(s.parse().unwrap()), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lqr_gains_solve_the_riccati_equation(theta in unit_vec(5)) {
        let provider = LqrPolicyProvider::new(all_params_plant()).unwrap();
        let sol = provider.solve(&theta).unwrap();
        prop_assert!(sol.residual < 1e-8);
    }

    #[test]
    fn dr_gain_is_the_mean_of_sampled_gains(thetas in prop::collection::vec(unit_vec(5), 1..6)) {
        let provider = LqrPolicyProvider::new(all_params_plant()).unwrap();
        let rule = mean_gain_policy(&provider, &thetas).unwrap();
        let mut sum = DMatrix::zeros(1, 2);
        for t in &thetas {
            sum += &provider.lqr_gain(t).unwrap().gain;
        }
        let mean = sum / thetas.len() as f64;
        prop_assert!((rule.gain - mean).amax() < 1e-12);
    }
}
