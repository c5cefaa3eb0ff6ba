use hk_core::dynamics::{converged, hk_step, Directive, OpinionState, Placement};
use hk_core::{Mode, Num};
use proptest::prelude::*;

fn eighths(v: &[i64]) -> Vec<Num> {
    let mut xs: Vec<Num> = v.iter().map(|&k| Num::ratio(k, 8, Mode::Rational)).collect();
    xs.sort();
    xs
}

fn placements(v: &[Option<i64>]) -> Directive {
    Directive(
        v.iter()
            .map(|p| match p {
                Some(k) => Placement::At(Num::ratio(*k, 8, Mode::Rational)),
                None => Placement::Far,
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn one_step_keeps_order_and_moves_at_most_one(
        ns in prop::collection::vec(0i64..80, 1..12),
        ss in prop::collection::vec(prop::option::of(-8i64..88), 0..4),
    ) {
        let xs = eighths(&ns);
        let state = OpinionState::new(xs.clone(), ss.len(), Mode::Rational).unwrap();
        let next = hk_step(&state, &placements(&ss)).unwrap();
        let ys = &next.nonstrategic;
        prop_assert_eq!(next.t, 1);
        prop_assert!(ys.windows(2).all(|w| w[0] <= w[1]));
        for (x, y) in xs.iter().zip(ys) {
            prop_assert!((y.clone() - x.clone()).abs() <= Num::one(Mode::Rational));
        }
        let mut lo = xs[0].clone();
        let mut hi = xs[xs.len() - 1].clone();
        for p in &ss {
            if let Some(k) = p {
                let v = Num::ratio(*k, 8, Mode::Rational);
                lo = lo.min(v.clone());
                hi = hi.max(v);
            }
        }
        prop_assert!(ys.iter().all(|y| *y >= lo && *y <= hi));
    }

    #[test]
    fn passive_step_fixes_converged_states(
        clusters in prop::collection::btree_set(0i64..10, 1..5),
        copies in 1usize..4,
    ) {
        let ns: Vec<i64> = clusters.iter().flat_map(|&c| std::iter::repeat(c * 12).take(copies)).collect();
        let xs = eighths(&ns);
        prop_assert!(converged(&xs));
        let state = OpinionState::new(xs.clone(), 0, Mode::Rational).unwrap();
        let next = hk_step(&state, &Directive::default()).unwrap();
        prop_assert_eq!(next.nonstrategic, xs);
    }

    #[test]
    fn float_agrees_with_rational_on_dyadic_inputs(
        ns in prop::collection::vec(0i64..40, 2..10),
    ) {
        let xs = eighths(&ns);
        let fs: Vec<Num> = xs.iter().map(|x| Num::parse(&x.to_string(), Mode::Float64).unwrap()).collect();
        let r = hk_step(&OpinionState::new(xs, 0, Mode::Rational).unwrap(), &Directive::default()).unwrap();
        let f = hk_step(&OpinionState::new(fs, 0, Mode::Float64).unwrap(), &Directive::default()).unwrap();
        for (a, b) in r.nonstrategic.iter().zip(&f.nonstrategic) {
            prop_assert!((a.to_f64() - b.to_f64()).abs() < 1e-12);
        }
    }
}
