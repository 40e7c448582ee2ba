use bergm::evidence::{laplace_term_with_cov, PluginPoint};
use bergm::exchange::{
    autocorrelation, mu_log_alpha, phi_log_alpha, sigma2_log_alpha, theta_log_alpha, AcceptRates, ChainOutput,
};
use bergm::graph::{degree_stats, sufficient_stats, Graph, StatisticKind::*};
use bergm::model::PriorHyper;
use bergm::netsim::{SamplerKind, Simulator};
use bergm::rng::stream;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn simulator_tracks_statistics(
        n in 3usize..12,
        theta in prop::collection::vec(-1.5f64..1.0, 3),
        phi in prop::collection::vec(-1.0f64..1.0, 12),
        seed in any::<u64>(),
        gibbs in any::<bool>(),
    ) {
        let kinds = [Edges, TwoStars, Triangles];
        let kind = if gibbs { SamplerKind::Gibbs } else { SamplerKind::Tnt };
        let mut sim = Simulator::new(&kinds, Graph::empty(n));
        let mut rng = stream(seed, &[]);
        sim.run(kind, 500, &theta, &phi[..n], &mut rng);
        let g = sim.graph();
        prop_assert_eq!(sim.stats(), &sufficient_stats(g, &kinds).0[..]);
        let deg: f64 = degree_stats(g).iter().sum();
        prop_assert_eq!(deg, 2.0 * g.edge_count() as f64);
    }

    #[test]
    fn acceptance_ratios_are_antisymmetric(
        a in prop::collection::vec(-3.0f64..3.0, 2),
        b in prop::collection::vec(-3.0f64..3.0, 2),
        obs in prop::collection::vec(0.0f64..50.0, 2),
        aux in prop::collection::vec(0.0f64..50.0, 2),
        phi in prop::collection::vec(-2.0f64..2.0, 6),
        s2a in 0.05f64..5.0,
        s2b in 0.05f64..5.0,
    ) {
        let h = PriorHyper::default();
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
        prop_assert!(close(theta_log_alpha(&a, &b, &obs, &aux, &h), -theta_log_alpha(&b, &a, &obs, &aux, &h)));
        prop_assert!(close(phi_log_alpha(a[0], b[0], obs[0], aux[0], a[1], s2a), -phi_log_alpha(b[0], a[0], obs[0], aux[0], a[1], s2a)));
        prop_assert!(close(mu_log_alpha(&phi, a[0], b[0], s2a, &h), -mu_log_alpha(&phi, b[0], a[0], s2a, &h)));
        prop_assert!(close(sigma2_log_alpha(&phi, a[0], s2a, s2b, &h), -sigma2_log_alpha(&phi, a[0], s2b, s2a, &h)));
        prop_assert_eq!(sigma2_log_alpha(&phi, a[0], s2a, -s2b, &h), f64::NEG_INFINITY);
    }

    #[test]
    fn degree_covariance_lowers_the_laplace_term(
        phi in prop::collection::vec(-2.0f64..1.0, 5),
        mu in -2.0f64..1.0,
        log_s2 in -2.0f64..1.0,
        factor in prop::collection::vec(-1.0f64..1.0, 25),
    ) {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let pt = PluginPoint {
            theta_fixed: vec![0.0, 0.0],
            theta_mixed: vec![0.0],
            phi_hat: phi,
            mu_hat: mu,
            log_sigma2_hat: log_s2,
        };
        let l = DMatrix::from_vec(5, 5, factor);
        let cov = &l * l.transpose();
        let base = laplace_term_with_cov(&pt, &g, &DMatrix::zeros(5, 5)).unwrap();
        let with = laplace_term_with_cov(&pt, &g, &cov).unwrap();
        prop_assert!(with <= base + 1e-9);
    }

    #[test]
    fn draws_csv_round_trips(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 4), 1..20)) {
        let out = ChainOutput {
            columns: vec!["theta.triangles".into(), "phi.1".into(), "mu_phi".into(), "sigma2_phi".into()],
            draws: rows.iter().map(|r| { let mut r = r.clone(); r[3] = r[3].abs() + 1e-3; r }).collect(),
            accept_rates: AcceptRates::default(),
            stats: vec![Triangles],
            random_effects: true,
            n: 1,
            wall_seconds: 0.0,
        };
        let back = ChainOutput::from_csv(&out.to_csv()).unwrap();
        prop_assert_eq!(&back.columns, &out.columns);
        prop_assert_eq!(&back.draws, &out.draws);
        prop_assert!(back.random_effects);
    }

    #[test]
    fn autocorrelation_is_bounded(x in prop::collection::vec(-10.0f64..10.0, 10..200)) {
        if let Some(acf) = autocorrelation(&x, 5) {
            prop_assert!(acf.iter().all(|r| r.abs() <= 1.0 + 1e-12));
        }
    }
}
