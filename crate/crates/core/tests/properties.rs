//! Randomized property suites for the market lemmas, the equilibrium
//! search, the leader-follower forms and the dynamic schemes.

mod common;

use common::{permute_market, random_caps, random_market, random_params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectrum_market::linalg::spectral_radius_2x2;
use spectrum_market::type2::first_order_residual;
use spectrum_market::{
    br_fixed_points, build_substitutability_matrix, check_positive_definite, demand,
    derive_demand_model, duopoly_ne, h_of_z, inverse_demand, leadership_gap, ne_verify,
    oligopoly_ne_search, qosbest_run, secondary_utility, stability_analysis, stackelberg_ne,
    strict_best_run, strict_br_run, strict_br_step, BrOptions, CapacitySpec, CaseLabel,
    DemandVector, DeviationGrid, LearningRates, PriceVector, SquareMatrix,
    Type2Config,
};

#[test]
fn market_lemmas_hold_on_random_parameters() {
    // beta_i > mu > 0 forces a positive definite substitutability matrix
    // and positive demand slopes
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let params = random_params(&mut rng, n);
        let t = build_substitutability_matrix(&params);
        assert!(check_positive_definite(&t, 1e-12).unwrap());
        let model = derive_demand_model(&params).unwrap();
        for i in 0..n {
            assert!(model.b(i) > 0.0);
            for j in 0..n {
                if i != j {
                    assert!(model.c(i, j) > 0.0);
                }
            }
        }
    }
}

#[test]
fn demand_and_inverse_demand_are_mutual_inverses() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for _ in 0..300 {
        let n = rng.gen_range(2..=6);
        let (params, model) = random_market(&mut rng, n);
        let prices = PriceVector((0..n).map(|_| rng.gen_range(0.0..30.0)).collect());
        let q = demand(&model, &prices).unwrap();
        let back = inverse_demand(&params, &q).unwrap();
        assert!(back.max_distance(&prices) < 1e-10);

        let demands = DemandVector((0..n).map(|_| rng.gen_range(0.0..20.0)).collect());
        let p = inverse_demand(&params, &demands).unwrap();
        let back = demand(&model, &p).unwrap();
        assert!(back.max_distance(&demands) < 1e-10);
    }
}

#[test]
fn utility_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let h = 1e-5;
    for _ in 0..200 {
        let n = rng.gen_range(2..=5);
        let (params, _) = random_market(&mut rng, n);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..15.0)).collect();
        let p = PriceVector((0..n).map(|_| rng.gen_range(0.1..20.0)).collect());
        let total: f64 = q.iter().sum();
        for i in 0..n {
            let mut hi = q.clone();
            let mut lo = q.clone();
            hi[i] += h;
            lo[i] -= h;
            let fd = (secondary_utility(&params, &DemandVector(hi), &p).unwrap()
                - secondary_utility(&params, &DemandVector(lo), &p).unwrap())
                / (2.0 * h);
            let analytic =
                params.alpha(i) - params.beta(i) * q[i] - params.mu() * (total - q[i]) - p[i];
            let scale = 1.0_f64.max(analytic.abs());
            assert!((fd - analytic).abs() / scale < 1e-5);
        }
    }
}

#[test]
fn search_traces_are_monotone_with_stieltjes_systems() {
    // along every search: the insufficient set grows, prices never fall,
    // each mixed matrix is positive definite with a nonnegative inverse,
    // and membership matches the best-response demand test
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for _ in 0..150 {
        let n = rng.gen_range(2..=8);
        let (_, model) = random_market(&mut rng, n);
        let caps = random_caps(&mut rng, &model);
        let (ne, trace) = oligopoly_ne_search(&model, &caps).unwrap();

        for w in trace.windows(2) {
            assert!(w[0].insufficient.iter().all(|i| w[1].insufficient.contains(i)));
            for i in 0..n {
                assert!(w[1].prices[i] >= w[0].prices[i] - 1e-9);
            }
        }
        for state in &trace {
            assert!(check_positive_definite(&state.q_matrix, 1e-12).unwrap());
            let inv = state.q_matrix.inverse_spd().unwrap();
            assert!(inv.min_entry() >= -1e-12);
        }
        let final_prices = ne.prices.as_slice();
        for i in 0..n {
            let br_demand = model.own_intercept_at(i, final_prices) / 2.0;
            if ne.binding[i] {
                assert!(br_demand > caps.q(i) - 1e-6);
            } else {
                assert!(br_demand <= caps.q(i) + 1e-6);
            }
        }
    }
}

#[test]
fn duopoly_closed_forms_match_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let mut seen = [0usize; 4];
    for _ in 0..300 {
        let (_, model) = random_market(&mut rng, 2);
        let caps = random_caps(&mut rng, &model);
        let closed = duopoly_ne(&model, &caps).unwrap();
        let (search, _) = oligopoly_ne_search(&model, &caps).unwrap();
        assert!(closed.prices.max_distance(&search.prices) < 1e-8);
        seen[match closed.case_label {
            CaseLabel::Case1 => 0,
            CaseLabel::Case2 => 1,
            CaseLabel::Case3 => 2,
            CaseLabel::Case4 => 3,
            CaseLabel::OligopolyGeneral => unreachable!("duopoly"),
        }] += 1;
        if closed.case_label == CaseLabel::Case4 {
            assert_eq!(closed.demands[0], caps.q(0));
            assert_eq!(closed.demands[1], caps.q(1));
        }
    }
    assert!(seen.iter().all(|&c| c > 0), "case coverage {seen:?}");
}

#[test]
fn search_is_invariant_under_player_relabeling() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for _ in 0..40 {
        let n = rng.gen_range(3..=6);
        let (_, model) = random_market(&mut rng, n);
        let caps = random_caps(&mut rng, &model);
        let (base, _) = oligopoly_ne_search(&model, &caps).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        for _ in 0..4 {
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let (pm, pc) = permute_market(&model, &caps, &perm);
            let (permuted, _) = oligopoly_ne_search(&pm, &pc).unwrap();
            for new_idx in 0..n {
                assert!((permuted.prices[new_idx] - base.prices[perm[new_idx]]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn random_equilibria_survive_deviation_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    for _ in 0..25 {
        let n = rng.gen_range(3..=8);
        let (_, model) = random_market(&mut rng, n);
        let caps = random_caps(&mut rng, &model);
        let (ne, _) = oligopoly_ne_search(&model, &caps).unwrap();
        let report = ne_verify(&model, &caps, &ne, DeviationGrid::default());
        assert!(report.passed, "{:?}", report.counterexample);
    }
}

#[test]
fn stackelberg_case1_leader_gains_over_static() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut checked = 0;
    while checked < 60 {
        let (_, model) = random_market(&mut rng, 2);
        let caps = CapacitySpec::unlimited(2);
        let report = leadership_gap(&model, &caps).unwrap();
        // leader raises its own price and never earns less than at the
        // simultaneous point
        assert!(report.price_gap[0][0] > -1e-12);
        assert!(report.price_gap[1][1] > -1e-12);
        assert!(report.payoff_gap[0][0] > -1e-9);
        assert!(report.payoff_gap[1][1] > -1e-9);
        checked += 1;
    }
}

#[test]
fn stackelberg_follower_plays_best_response_on_random_markets() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for _ in 0..120 {
        let (_, model) = random_market(&mut rng, 2);
        let caps = random_caps(&mut rng, &model);
        for leader in 0..2 {
            let s = match stackelberg_ne(&model, &caps, leader) {
                Ok(s) => s,
                // boundary ambiguity between adjacent cases is reported,
                // not guessed; skip those draws
                Err(spectrum_market::Type1Error::InconsistentCase { .. }) => continue,
                Err(e) => panic!("{e}"),
            };
            let f = 1 - leader;
            let p_l = s.prices[leader];
            let mut br = (model.a(f) + model.c2() * p_l) / (2.0 * model.b(f));
            if caps.is_limited(f) {
                br = br.max((model.a(f) - caps.q(f) + model.c2() * p_l) / model.b(f));
            }
            assert!((s.prices[f] - br).abs() < 1e-10);
            // leader never loses by moving first within its case
            let static_ne = duopoly_ne(&model, &caps).unwrap();
            if s.case_label == static_ne.case_label {
                assert!(s.payoffs[leader] >= static_ne.payoffs[leader] - 1e-9);
            }
        }
    }
}

#[test]
fn strict_best_converges_to_search_equilibrium() {
    // empirical check of the convergence conjecture: failures are reported
    // in the output but only solver errors fail the test
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut failures = 0;
    let total = 200;
    for k in 0..total {
        let (_, model) = random_market(&mut rng, 2);
        let caps = random_caps(&mut rng, &model);
        let p0 = [rng.gen_range(0.5..20.0), rng.gen_range(0.5..20.0)];
        let tol = 1e-9;
        let orbit = strict_best_run(&model, &caps, p0, tol, 2000).unwrap();
        if !(orbit.converged && orbit.ne_gap.unwrap() < 10.0 * tol) {
            failures += 1;
            println!(
                "strict_best deviated from the static equilibrium on draw {k}: \
                 converged={} gap={:?}",
                orbit.converged, orbit.ne_gap
            );
        }
    }
    println!("strict_best conjecture check: {}/{} converged", total - failures, total);
}

#[test]
fn linear_best_response_maps_are_contractions() {
    let mut rng = ChaCha8Rng::seed_from_u64(111);
    for _ in 0..300 {
        let (_, model) = random_market(&mut rng, 2);
        let (b1, b2, c) = (model.b(0), model.b(1), model.c2());
        assert!(b1 * b2 > c * c);
        let case1 = SquareMatrix::from_rows(&[vec![0.0, c / (2.0 * b1)], vec![c / (2.0 * b2), 0.0]]);
        assert!(spectral_radius_2x2(&case1) < 1.0);
        let case2 = SquareMatrix::from_rows(&[vec![0.0, c / b1], vec![c / (2.0 * b2), 0.0]]);
        assert!(spectral_radius_2x2(&case2) < 1.0);
    }
}

#[test]
fn br_fixed_points_are_fixed_under_the_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(112);
    let opts = BrOptions {
        epsilon_escape: 0.0,
        ..BrOptions::default()
    };
    for _ in 0..120 {
        let (_, model) = random_market(&mut rng, 2);
        let caps = random_caps(&mut rng, &model);
        if duopoly_ne(&model, &caps).unwrap().case_label == CaseLabel::Case4 {
            continue;
        }
        let rates = LearningRates::new([rng.gen_range(0.001..0.02), rng.gen_range(0.001..0.02)])
            .unwrap();
        for p in br_fixed_points(&model, &caps).unwrap() {
            let (next, _) = strict_br_step(&model, &caps, &rates, p, &opts, &mut rng).unwrap();
            let scale = 1.0_f64.max(p[0].abs()).max(p[1].abs());
            assert!(
                (next[0] - p[0]).abs() < 1e-9 * scale && (next[1] - p[1]).abs() < 1e-9 * scale,
                "{p:?} -> {next:?}"
            );
        }
    }
}

#[test]
fn stable_interior_point_attracts_nearby_orbits() {
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let mut tested = 0;
    while tested < 40 {
        let (_, model) = random_market(&mut rng, 2);
        let caps = random_caps(&mut rng, &model);
        let ne = duopoly_ne(&model, &caps).unwrap();
        if ne.case_label == CaseLabel::Case4 {
            continue;
        }
        let rates = LearningRates::new([rng.gen_range(0.002..0.02), rng.gen_range(0.002..0.02)])
            .unwrap();
        let report = stability_analysis(&model, &caps, &rates).unwrap();
        let interior = *report.fixed_points.last().unwrap();
        if !*report.stable.last().unwrap() {
            continue;
        }
        let p0 = [interior[0] * 1.01, interior[1] * 0.99];
        let orbit = strict_br_run(
            &model,
            &caps,
            &rates,
            p0,
            1e-11,
            200_000,
            &BrOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert!(orbit.converged, "stable point failed to attract");
        let lim = orbit.limit.unwrap();
        assert!((lim[0] - interior[0]).abs() < 1e-6);
        assert!((lim[1] - interior[1]).abs() < 1e-6);
        tested += 1;
    }
}

#[test]
fn aggregate_map_is_decreasing_and_roots_straddle_capacity() {
    let mut rng = ChaCha8Rng::seed_from_u64(114);
    for _ in 0..100 {
        let n = rng.gen_range(2..=6);
        let (params, model) = random_market(&mut rng, n);
        let caps = CapacitySpec::new(
            (0..n).map(|_| rng.gen_range(3.0..30.0)).collect::<Vec<_>>(),
        )
        .unwrap();
        let theta = rng.gen_range(0.01..1.0);
        let cfg = Type2Config::new(theta, caps.clone(), None).unwrap();
        let z_max: f64 = caps.as_slice().iter().sum();
        let mut prev = f64::INFINITY;
        for k in 0..=20 {
            let z = z_max * k as f64 / 20.0;
            let g: f64 = (0..n).map(|i| h_of_z(&model, &params, &cfg, i, z)).sum::<f64>() - z;
            assert!(g < prev);
            prev = g;
            for i in 0..n {
                // both quadratic roots straddle the budget
                let coeff = 1.0 + params.beta(i) * model.b(i) - params.mu() * model.b(i);
                let d = params.alpha(i) * model.b(i) - params.mu() * model.b(i) * z;
                let s = coeff * caps.q(i) + d;
                let disc =
                    (coeff * caps.q(i) - d).powi(2) + 4.0 * coeff * theta * model.b(i);
                let larger = (s + disc.sqrt()) / (2.0 * coeff);
                assert!(larger > caps.q(i));
                assert!(h_of_z(&model, &params, &cfg, i, z) < caps.q(i));
            }
        }
    }
}

#[test]
fn type2_prices_nondecreasing_in_theta_on_random_markets() {
    let mut rng = ChaCha8Rng::seed_from_u64(115);
    let mut tested = 0;
    while tested < 30 {
        let (params, model) = random_market(&mut rng, 2);
        let unconstrained = duopoly_ne(&model, &CapacitySpec::unlimited(2)).unwrap();
        let caps = CapacitySpec::new(
            (0..2)
                .map(|i| unconstrained.demands[i] * rng.gen_range(0.6..1.2))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut theta = 0.002;
        let mut last = [0.0, 0.0];
        let mut ok = true;
        while theta <= 2.0 {
            let cfg = Type2Config::new(theta, caps.clone(), None).unwrap();
            match spectrum_market::type2_duopoly_ne(&model, &params, &cfg) {
                Ok(ne) => {
                    assert!(ne.prices[0] >= last[0] - 1e-9);
                    assert!(ne.prices[1] >= last[1] - 1e-9);
                    last = [ne.prices[0], ne.prices[1]];
                }
                Err(_) => {
                    ok = false;
                    break;
                }
            }
            theta *= 4.0;
        }
        if ok {
            tested += 1;
        }
    }
}

#[test]
fn square_root_difference_inequalities_fuzz() {
    // |sqrt(x^2+z^2) - sqrt(y^2+z^2)| <= x + y, and <= x - y when x >= y
    let mut rng = ChaCha8Rng::seed_from_u64(116);
    for _ in 0..100_000 {
        let x: f64 = rng.gen_range(1e-6..1e3);
        let y = rng.gen_range(1e-6..1e3);
        let z = rng.gen_range(1e-6..1e3);
        let diff = (x * x + z * z).sqrt() - (y * y + z * z).sqrt();
        assert!(diff <= x + y + 1e-12);
        assert!(diff >= -(x + y) - 1e-12);
        if x >= y {
            assert!(diff <= x - y + 1e-12);
        }
    }
}

#[test]
fn qosbest_contracts_at_the_squared_coupling_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(117);
    let mut tested = 0;
    while tested < 50 {
        let (params, model) = random_market(&mut rng, 2);
        let unconstrained = duopoly_ne(&model, &CapacitySpec::unlimited(2)).unwrap();
        let caps = CapacitySpec::new(
            (0..2)
                .map(|i| unconstrained.demands[i] * rng.gen_range(0.7..1.5))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let cfg = Type2Config::new(rng.gen_range(0.02..0.5), caps, None).unwrap();
        let p0 = [rng.gen_range(1.0..15.0), rng.gen_range(1.0..15.0)];
        let Ok((orbit, diag)) = qosbest_run(&model, &params, &cfg, p0, 1e-11, 400) else {
            continue;
        };
        if !orbit.converged {
            continue;
        }
        let bound = model.c2() * model.c2() / (model.b(0) * model.b(1));
        assert!(bound < 1.0);
        for pair in &diag.contraction {
            assert!(pair.after <= bound * pair.before + 1e-9);
        }
        let lim = orbit.limit.unwrap();
        for i in 0..2 {
            assert!(first_order_residual(&model, &cfg, i, &lim).abs() < 1e-6);
        }
        tested += 1;
    }
}
