use proptest::prelude::*;

use ofal_core::algorithms::{Greedy, Ptcp};
use ofal_core::alpha::{alpha_bruteforce, alpha_fast};
use ofal_core::engine::simulate;
use ofal_core::model::{int, rat, Instance, Rational, RequestSequence, ServerLayout};
use ofal_core::opt::{noncrossing_dp_cost, optimal_bruteforce, optimal_cost};
use ofal_core::permutation::permutation_run;
use ofal_core::verify::{check_ratio_bound, check_surrounding_oriented};

/// Strictly increasing positions built from positive gaps with small denominators.
fn layout(k_max: usize) -> impl Strategy<Value = ServerLayout> {
    (-20i64..20, prop::collection::vec((1i64..40, 1i64..5), 0..k_max)).prop_map(|(start, gaps)| {
        let mut x = int(start);
        let mut xs = vec![x.clone()];
        for (n, d) in gaps {
            x += rat(n, d);
            xs.push(x.clone());
        }
        ServerLayout::new(xs).unwrap()
    })
}

/// Instance with capacities up to `cap_max` and a sequence that fits it.
fn case(k_max: usize, cap_max: u32, n_max: usize) -> impl Strategy<Value = (Instance, RequestSequence)> {
    layout(k_max).prop_flat_map(move |l| {
        let k = l.len();
        let lo = l.first().clone() - int(3);
        let span = l.last() - l.first() + int(6);
        (Just(l), prop::collection::vec(1..=cap_max, k), prop::collection::vec(0i64..=64, 0..=n_max)).prop_map(
            move |(l, caps, us)| {
                let inst = Instance::new(l, caps).unwrap();
                let n = us.len().min(inst.total_capacity() as usize);
                let seq = us[..n].iter().map(|&u| &lo + &span * rat(u, 64)).collect();
                (inst, seq)
            },
        )
    })
}

fn affine(inst: &Instance, seq: &RequestSequence, scale: &Rational, shift: &Rational) -> (Instance, RequestSequence) {
    let f = |q: &Rational| q * scale + shift;
    let layout = ServerLayout::new(inst.layout().positions().iter().map(f).collect()).unwrap();
    (Instance::new(layout, inst.capacities().to_vec()).unwrap(), seq.iter().map(f).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn alpha_fast_matches_subset_enumeration(l in layout(9)) {
        prop_assert_eq!(alpha_fast(&l).alpha, alpha_bruteforce(&l).unwrap().alpha);
    }

    #[test]
    fn alpha_is_at_least_one_when_two_servers(l in layout(9)) {
        prop_assume!(l.len() >= 2);
        prop_assert!(alpha_fast(&l).alpha >= int(1));
    }

    #[test]
    fn optimum_ignores_request_order((inst, seq) in case(6, 3, 12), rot in 0usize..12) {
        let mut reordered = seq.requests.clone();
        if !reordered.is_empty() {
            let by = rot % reordered.len();
            reordered.rotate_left(by);
            reordered.reverse();
        }
        let a = optimal_cost(&inst, &seq).unwrap().cost;
        let b = optimal_cost(&inst, &RequestSequence::new(reordered)).unwrap().cost;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn optimum_oracles_agree((inst, seq) in case(5, 3, 7)) {
        let flow = optimal_cost(&inst, &seq).unwrap();
        prop_assert_eq!(&flow, &optimal_bruteforce(&inst, &seq).unwrap());
        prop_assert_eq!(flow.cost, noncrossing_dp_cost(&inst, &seq).unwrap());
    }

    #[test]
    fn permutation_prefix_costs_are_optimal((inst, seq) in case(5, 3, 8)) {
        let run = permutation_run(&inst, &seq).unwrap();
        for t in 0..seq.len() {
            let prefix = RequestSequence::new(seq.requests[..=t].to_vec());
            prop_assert_eq!(&run.prefix_costs[t], &optimal_bruteforce(&inst, &prefix).unwrap().cost);
        }
    }

    #[test]
    fn ptcp_stays_within_its_bound((inst, seq) in case(8, 4, 24)) {
        let rep = check_ratio_bound(&Ptcp::new(inst.layout()), &inst, &seq).unwrap();
        prop_assert!(rep.within_bound, "{:?}", rep);
    }

    #[test]
    fn online_rules_are_surrounding_oriented((inst, seq) in case(8, 4, 24)) {
        let p = simulate(&Ptcp::new(inst.layout()), &inst, &seq).unwrap();
        prop_assert!(check_surrounding_oriented(&p, &inst, &seq).passed());
        let g = simulate(&Greedy::new(inst.layout()), &inst, &seq).unwrap();
        prop_assert!(check_surrounding_oriented(&g, &inst, &seq).passed());
    }

    #[test]
    fn ptcp_decisions_survive_scaling_and_shifts((inst, seq) in case(7, 3, 16), num in 1i64..9, den in 1i64..9, shift in -50i64..50) {
        let (scale, shift) = (rat(num, den), rat(shift, 3));
        let (inst2, seq2) = affine(&inst, &seq, &scale, &shift);
        let a = simulate(&Ptcp::new(inst.layout()), &inst, &seq).unwrap();
        let b = simulate(&Ptcp::new(inst2.layout()), &inst2, &seq2).unwrap();
        prop_assert_eq!(&a.assignment, &b.assignment);
        prop_assert_eq!(&a.total_cost * &scale, b.total_cost);
        prop_assert_eq!(alpha_fast(inst.layout()).alpha, alpha_fast(inst2.layout()).alpha);
    }

    #[test]
    fn simulation_is_deterministic((inst, seq) in case(6, 3, 16)) {
        let rule = Ptcp::new(inst.layout());
        prop_assert_eq!(simulate(&rule, &inst, &seq).unwrap(), simulate(&rule, &inst, &seq).unwrap());
    }

    #[test]
    fn json_round_trip((inst, seq) in case(6, 4, 10)) {
        prop_assert_eq!(&Instance::from_json(&inst.to_json().unwrap()).unwrap(), &inst);
        prop_assert_eq!(&RequestSequence::from_json(&seq.to_json().unwrap()).unwrap(), &seq);
        let trace = simulate(&Ptcp::new(inst.layout()), &inst, &seq).unwrap();
        let text = serde_json::to_string(&trace).unwrap();
        prop_assert_eq!(serde_json::from_str::<ofal_core::model::AssignmentTrace>(&text).unwrap(), trace);
    }
}
