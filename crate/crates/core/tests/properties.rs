use mcmc_core::diagnostics::{acceptance_rate_of, ess, tv_distance};
use mcmc_core::mcint::balance_weights;
use mcmc_core::pssmlt::{small_step, wrap, PrimarySample};
use mcmc_core::samplers::{run_chain, SamplerConfig};
use mcmc_core::targets::TargetDensity;
use mcmc_core::{rng, Point, Target};
use proptest::prelude::*;

fn normalized(raw: &[f64]) -> Vec<f64> {
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

proptest! {
    #[test]
    fn balance_weights_sum_to_one_and_ignore_scale(
        ps in prop::collection::vec(1e-6f64..1e3, 1..6),
        scale in 1e-3f64..1e3,
    ) {
        let w = balance_weights(&ps).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let scaled: Vec<f64> = ps.iter().map(|p| p * scale).collect();
        let ws = balance_weights(&scaled).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tv_is_symmetric_and_bounded(
        pairs in prop::collection::vec((1e-3f64..1.0, 1e-3f64..1.0), 1..20),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (p, q) = (normalized(&a), normalized(&b));
        let d = tv_distance(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, tv_distance(&q, &p).unwrap());
        prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn wrap_lands_in_unit_interval(v in -1e6f64..1e6) {
        let w = wrap(v);
        prop_assert!((0.0..1.0).contains(&w));
        prop_assert!(((v - w) - (v - w).round()).abs() < 1e-6);
    }

    #[test]
    fn small_steps_stay_in_primary_space(
        u in prop::collection::vec(0.0f64..1.0, 2..6),
        sigma in 1e-3f64..2.0,
        seed in any::<u64>(),
    ) {
        let start = PrimarySample::new(u).unwrap();
        let next = small_step(&start, sigma, &mut rng::seeded(seed));
        prop_assert!(next.as_slice().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn ess_never_exceeds_sample_count(xs in prop::collection::vec(-10.0f64..10.0, 10..300)) {
        prop_assume!(xs.iter().any(|x| *x != xs[0]));
        let e = ess(&xs).unwrap();
        prop_assert!(e > 0.0 && e <= xs.len() as f64 + 1e-9);
    }

    #[test]
    fn acceptance_rate_is_a_fraction(flags in prop::collection::vec(any::<bool>(), 1..200)) {
        let r = acceptance_rate_of(&flags).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        let ones = flags.iter().filter(|&&f| f).count() as f64;
        prop_assert_eq!(r, ones / flags.len() as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chains_keep_the_requested_number_of_samples(
        steps in 2usize..400,
        burn_frac in 0.0f64..0.9,
        thin in 1usize..5,
        seed in any::<u64>(),
    ) {
        let burn_in = (steps as f64 * burn_frac) as usize;
        let t = TargetDensity::standard_gaussian(2);
        for cfg in [
            SamplerConfig::Mh { proposal_sigma: 0.8 },
            SamplerConfig::Mala { tau: 0.5 },
            SamplerConfig::Hmc { eps: 0.2, leapfrog_steps: 5 },
        ] {
            let c = run_chain(&cfg, &t, &Point::zeros(2), steps, burn_in, thin, seed).unwrap();
            prop_assert_eq!(c.samples.len(), (steps - burn_in) / thin);
            prop_assert!(c.samples.iter().all(|x| x.is_finite() && x.dim() == 2));
        }
    }
}

#[test]
fn same_seed_reproduces_every_sampler() {
    let t = TargetDensity::banana(3, 0.5, 2.0).unwrap();
    for cfg in [
        SamplerConfig::Mh { proposal_sigma: 1.0 },
        SamplerConfig::Ula { tau: 0.3 },
        SamplerConfig::Mala { tau: 0.5 },
        SamplerConfig::Hmc { eps: 0.2, leapfrog_steps: 8 },
    ] {
        let a = run_chain(&cfg, &t, &Point::zeros(3), 500, 0, 1, 11).unwrap();
        let b = run_chain(&cfg, &t, &Point::zeros(3), 500, 0, 1, 11).unwrap();
        let c = run_chain(&cfg, &t, &Point::zeros(3), 500, 0, 1, 12).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_ne!(a.samples, c.samples);
    }
}

#[test]
fn gradients_match_finite_differences_on_every_target() {
    let targets = [
        TargetDensity::gaussian(vec![1.0, -2.0], vec![0.5, 3.0]).unwrap(),
        TargetDensity::symmetric_bimodal(2, 2.0),
        TargetDensity::ring(2, 3.0, 0.5).unwrap(),
        TargetDensity::banana(2, 0.5, 2.0).unwrap(),
    ];
    let x = Point::from(vec![0.7, -0.3]);
    let h = 1e-6;
    for t in &targets {
        let g = t.grad_log_density(&x).unwrap();
        for d in 0..2 {
            let mut up = x.as_slice().to_vec();
            let mut dn = up.clone();
            up[d] += h;
            dn[d] -= h;
            let fd = (t.log_density(&Point::from(up)).unwrap() - t.log_density(&Point::from(dn)).unwrap()) / (2.0 * h);
            assert!((fd - g[d]).abs() < 1e-5, "{:?} coordinate {d}: {fd} vs {}", t.kind(), g[d]);
        }
        assert_eq!(t.dim(), 2);
    }
}
