use bdy_core::agent::{advance_to, init_ensemble, seeded_rng, Exchange, InitMode};
use bdy_core::diagnostics::{d2_fourier, hellinger, l1, relative_entropy};
use bdy_core::epsilon::{step_epsilon_pde, truncation_outflow};
use bdy_core::fokker_planck::{default_dt, step_fp};
use bdy_core::harness::{Config, Experiment};
use bdy_core::linearized::{default_params, random_perturbation, LinearOperator};
use bdy_core::meanfield::{rhs, truncation_flux};
use bdy_core::model::{boltzmann_gibbs, GridFunction, ModelParams, Pmf};
use proptest::prelude::*;

fn grid() -> ModelParams {
    ModelParams::new(1.0, 2.0, 0.1, 20.0, 400).unwrap()
}

/// Normalized mixture `a v^k e^{-v/s}` plus a small exponential floor.
fn density(k: i32, s: f64, w: f64) -> GridFunction {
    GridFunction::from_fn(grid(), |v| {
        w * v.powi(k) * (-v / s).exp() + (1.0 - w) * (-v).exp()
    })
    .normalized()
}

fn shapes() -> impl Strategy<Value = GridFunction> {
    (0..4i32, 0.3..2.0f64, 0.0..1.0f64).prop_map(|(k, s, w)| density(k, s, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_are_symmetric_and_satisfy_the_triangle_inequality(
        f in shapes(), g in shapes(), q in shapes()
    ) {
        for d in [l1, hellinger] {
            let (fg, gf) = (d(&f, &g).unwrap(), d(&g, &f).unwrap());
            prop_assert!(fg >= 0.0);
            prop_assert!((fg - gf).abs() <= 1e-14);
            prop_assert_eq!(d(&f, &f).unwrap(), 0.0);
            let via = d(&f, &q).unwrap() + d(&q, &g).unwrap();
            prop_assert!(fg <= via + 1e-14);
        }
        // L1 <= 2 d_H for unit-mass densities
        let dh = hellinger(&f, &g).unwrap();
        prop_assert!(l1(&f, &g).unwrap() <= 2.0 * dh * (1.0 + 1e-12));
        prop_assert!(relative_entropy(&f, &boltzmann_gibbs(f.params())).unwrap() >= -1e-15);
    }

    #[test]
    fn fokker_planck_step_conserves_mass_and_mean(f in shapes()) {
        let dt = default_dt(f.params());
        let g = step_fp(&f, dt).unwrap();
        prop_assert!((g.mass() - f.mass()).abs() <= 1e-14);
        prop_assert!((g.mean() - f.mean()).abs() <= 1e-12);
        prop_assert!(g.min() >= 0.0);
    }

    #[test]
    fn kinetic_step_keeps_positivity_and_mean(f in shapes(), k in 1usize..5) {
        let eps = 0.05 * k as f64;
        let g = step_epsilon_pde(&f, eps, 2.0, 0.05).unwrap();
        prop_assert!(g.min() >= 0.0);
        let leak = 0.05 * truncation_outflow(&f, eps, 2.0).unwrap();
        prop_assert!(leak >= 0.0);
        prop_assert!((f.mass() - g.mass() - leak).abs() <= 1e-13);
    }

    #[test]
    fn d2_is_symmetric_for_matched_moments(seed in 0u64..1000) {
        let op = LinearOperator::new(default_params(1.0, 500).unwrap());
        let mut rng = seeded_rng(seed, 0);
        let r = random_perturbation(&op, &mut rng);
        let s = random_perturbation(&op, &mut rng);
        let base = boltzmann_gibbs(op.params());
        let bump = |x: &GridFunction| {
            let peak = x.values().iter().zip(base.values()).map(|(a, b)| (a / b).abs()).fold(0.0, f64::max);
            let c = 0.5 / peak;
            GridFunction::new(*op.params(), base.values().iter().zip(x.values()).map(|(b, a)| b + c * a).collect()).unwrap()
        };
        let (f, g) = (bump(&r), bump(&s));
        if (f.mean() - g.mean()).abs() <= 1e-8 && (f.mass() - g.mass()).abs() <= 1e-8 {
            let a = d2_fourier(&f, &g).unwrap();
            let b = d2_fourier(&g, &f).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        }
    }

    #[test]
    fn projection_is_idempotent(seed in 0u64..1000) {
        let op = LinearOperator::new(default_params(1.0, 500).unwrap());
        let mut rng = seeded_rng(seed, 0);
        let r = random_perturbation(&op, &mut rng);
        prop_assert!(op.check_constraints(&r).is_ok());
        let again = op.project_constraints(&r);
        let change = l1(&r, &again).unwrap();
        let size = r.values().iter().map(|x| x.abs()).sum::<f64>() * r.h();
        prop_assert!(change <= 1e-12 * size, "{} vs {}", change, size);
    }

    #[test]
    fn meanfield_rhs_only_leaks_through_the_truncation(
        raw in proptest::collection::vec(0.0..1.0f64, 3..40)
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let p = Pmf::new(raw.iter().map(|x| x / total).collect()).unwrap();
        let d = rhs(&p);
        let mass_rate: f64 = d.iter().sum();
        prop_assert!((mass_rate + truncation_flux(&p)).abs() <= 1e-14);
        // the leaked probability would have landed on n_max + 1
        let n_max = p.n_max() as f64;
        let mean_rate: f64 = d.iter().enumerate().map(|(n, x)| n as f64 * x).sum();
        prop_assert!((mean_rate + (n_max + 1.0) * truncation_flux(&p)).abs() <= 1e-12);
    }

    #[test]
    fn agents_conserve_wealth_exactly(seed in 0u64..500, mu in 0u32..6) {
        let mut e = init_ensemble(50, mu as f64, InitMode::Multinomial, seed).unwrap();
        let before = e.current_total();
        let mut rng = seeded_rng(seed, 1);
        advance_to(&mut e, 5.0, 2.0, Exchange::Unit, &mut rng);
        prop_assert_eq!(e.current_total(), before);
        prop_assert!(e.wealths().iter().all(|w| *w >= 0.0 && w.fract() == 0.0));
    }

    #[test]
    fn configs_round_trip_through_json(
        mu in proptest::option::of(0.1..10.0f64),
        cells in proptest::option::of(16usize..10_000),
        seed in proptest::option::of(any::<u64>()),
        k in 0usize..7,
    ) {
        let mut cfg = Config::new(Experiment::ALL[k]);
        cfg.mu = mu;
        cfg.n_cells = cells;
        cfg.seed = seed;
        let text = serde_json::to_string(&cfg).unwrap();
        prop_assert_eq!(Config::from_json(&text).unwrap(), cfg);
    }
}
