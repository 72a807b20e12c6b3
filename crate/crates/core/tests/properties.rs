use proptest::prelude::*;

use ridehail::instance::{lift_to_general, read_instance, write_instance, AnyInstance};
use ridehail::lp::{build_lp_match, build_lp_match_gen, solve, solve_instance};
use ridehail::policy::{prepare, PolicyConfig};
use ridehail::ssat::{parse_dimacs, write_dimacs, Literal, SsatInstance};
use ridehail::{Ball, GeneralBall, GeneralInstance, Instance, Realization};

fn basic() -> impl Strategy<Value = Instance> {
    (1usize..4, 1usize..5).prop_flat_map(|(m, n)| {
        prop::collection::vec(
            (0.0f64..=1.0, prop::collection::vec(0.0f64..10.0, m)).prop_map(|(p, w)| Ball {
                arrival_prob: p,
                weights: w,
            }),
            n,
        )
        .prop_map(move |balls| Instance { num_bins: m, balls })
    })
}

fn general() -> impl Strategy<Value = GeneralInstance> {
    (1usize..4, 1usize..4).prop_flat_map(|(m, n)| {
        let ball = prop::collection::vec((0.01f64..1.0, prop::collection::vec(0.0f64..5.0, m)), 1..4)
            .prop_map(|rs| {
                let total: f64 = rs.iter().map(|(p, _)| p).sum::<f64>() * 1.25;
                GeneralBall {
                    realizations: rs
                        .into_iter()
                        .map(|(p, w)| Realization {
                            prob: p / total,
                            weights: w,
                        })
                        .collect(),
                }
            });
        prop::collection::vec(ball, n).prop_map(move |balls| GeneralInstance { num_bins: m, balls })
    })
}

proptest! {
    #[test]
    fn basic_documents_round_trip(inst in basic()) {
        let any = AnyInstance::Basic(inst);
        prop_assert_eq!(read_instance(&write_instance(&any)).unwrap(), any);
    }

    #[test]
    fn general_documents_round_trip(g in general()) {
        let any = AnyInstance::General(g);
        prop_assert_eq!(read_instance(&write_instance(&any)).unwrap(), any);
    }

    #[test]
    fn lifting_preserves_the_lp_optimum(inst in basic()) {
        let direct = solve(&build_lp_match(&inst).unwrap()).unwrap().objective;
        let lifted = solve(&build_lp_match_gen(&lift_to_general(&inst).unwrap()).unwrap()).unwrap().objective;
        prop_assert!((direct - lifted).abs() < 1e-9);
    }

    #[test]
    fn prepared_policy_is_consistent(g in general(), c in 0.0f64..0.49) {
        let config = PolicyConfig { c, seed: 0 };
        let p = prepare(&solve_instance(&g).unwrap(), &g, config).unwrap();
        let h = 0.5 + c;
        for t in 0..g.num_balls() {
            for (j, r) in g.balls[t].realizations.iter().enumerate() {
                let row: f64 = (0..g.num_bins).map(|i| p.x(i, t, j)).sum::<f64>() + p.dummy(t, j);
                prop_assert!((row - r.prob).abs() < 1e-9);
            }
            for i in 0..g.num_bins {
                let prefix = p.prefix(i, t);
                let expected = if prefix * h >= 1.0 { 1.0 } else { (h / (1.0 - prefix * h)).min(1.0) };
                prop_assert!((p.q(i, t) - expected).abs() < 1e-12);
                prop_assert_eq!(p.is_late(i, t), prefix > (0.5 - c) / (0.5 + c));
                if p.q(i, t) < 1.0 {
                    prop_assert!(!p.is_late(i, t));
                }
            }
        }
    }

    #[test]
    fn dimacs_round_trips(n in 1usize..8, clauses in prop::collection::vec(prop::collection::vec((1usize..8, any::<bool>()), 1..4), 1..6)) {
        let phi = SsatInstance {
            num_vars: n,
            clauses: clauses
                .into_iter()
                .map(|c| c.into_iter().map(|(v, neg)| Literal { var: 1 + (v - 1) % n, negated: neg }).collect())
                .collect(),
        };
        prop_assert_eq!(parse_dimacs(write_dimacs(&phi).as_bytes()).unwrap(), phi);
    }
}
