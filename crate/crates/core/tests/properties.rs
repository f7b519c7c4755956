use mgame::game::strategy::space_size;
use mgame::game::{run, GameConfig, Payoff, TraceTable};
use mgame::markov::{enumerate_chain, extract_state_graph};
use mgame::stats::{autocorrelation, parity_preserved, Series};
use mgame::strategy_space::{
    best_action_stats, level_count, level_probabilities_step, prob_active_at_level_proportional,
};
use mgame::sweep::{sweep, sweep_sequential};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn payoff() -> impl Strategy<Value = Payoff> {
    prop_oneof![
        Just(Payoff::Step),
        Just(Payoff::Proportional),
        Just(Payoff::ScaledProportional)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn demand_has_the_parity_of_the_population(
        n in 1usize..120, m in 1u32..=3, s in 2usize..=4, g in payoff(), seed in any::<u64>()
    ) {
        let trace = run(&GameConfig::new(n, m, s, g).with_steps(60).with_seed(seed)).unwrap();
        prop_assert!(parity_preserved(trace.demands(), n));
        prop_assert!(trace.demands().iter().all(|a| a.unsigned_abs() as usize <= n));
    }

    #[test]
    fn complementary_strategies_have_opposite_utilities(
        n in 1usize..80, m in 1u32..=3, g in payoff(), seed in any::<u64>()
    ) {
        let trace = run(&GameConfig::new(n, m, 2, g).with_steps(40).with_seed(seed)).unwrap();
        let mask = space_size(m) as usize - 1;
        for t in [0, 19, 39] {
            let u = trace.utilities_after(t).unwrap().numerators;
            for id in 0..u.len() {
                prop_assert_eq!(u[id] + u[id ^ mask], 0);
            }
        }
    }

    /// The bound needs a population that holds the best strategies widely.
    #[test]
    fn step_utilities_stay_within_the_memory_bound(
        n in 300usize..500, m in 1u32..=2, seed in any::<u64>()
    ) {
        let trace = run(&GameConfig::new(n, m, 2, Payoff::Step).with_steps(300).with_seed(seed)).unwrap();
        let bound = 1i64 << m;
        for t in 0..trace.len() {
            let u = trace.utilities_after(t).unwrap();
            prop_assert!(u.numerators.iter().all(|&x| x.abs() <= bound * u.scale));
        }
    }

    #[test]
    fn runs_are_reproducible(n in 1usize..100, m in 1u32..=4, g in payoff(), seed in any::<u64>()) {
        let cfg = GameConfig::new(n, m, 2, g).with_steps(50).with_seed(seed);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        prop_assert_eq!(a.demands(), b.demands());
        prop_assert_eq!(a.history_codes(), b.history_codes());
    }

    #[test]
    fn trace_csv_round_trips(n in 1usize..60, m in 1u32..=5, g in payoff(), seed in any::<u64>()) {
        let trace = run(&GameConfig::new(n, m, 2, g).with_steps(30).with_seed(seed)).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let table = TraceTable::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(&table.demands[..], trace.demands());
        prop_assert_eq!(&table.histories[..], trace.history_codes());
        prop_assert_eq!(table.minorities, trace.minorities().to_vec());
    }

    #[test]
    fn autocorrelation_is_normalised(values in prop::collection::vec(-1e3f64..1e3, 40..200)) {
        let r = autocorrelation(&Series::new(values).unwrap(), 4).unwrap();
        if !r.degenerate {
            prop_assert!((r.r[0] - 1.0).abs() < 1e-12);
            prop_assert!(r.r.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn level_counts_cover_the_space(m in 1u32..=5) {
        let total: u128 = (1..=(1usize << m) + 1).map(|l| level_count(m, l).unwrap()).sum();
        prop_assert_eq!(total, space_size(m));
    }

    #[test]
    fn level_probabilities_sum_to_one(m in 1u32..=4, s in 2usize..=6) {
        let sum: BigRational = level_probabilities_step(m, s).unwrap().into_iter().sum();
        prop_assert_eq!(sum, BigRational::one());
    }

    #[test]
    fn proportional_level_probabilities_sum_to_one(m in 1u32..=3, s in 2usize..=5) {
        let sum: BigRational = (1..=space_size(m))
            .map(|l| prob_active_at_level_proportional(m, s, l).unwrap())
            .sum();
        prop_assert_eq!(sum, BigRational::one());
    }
}

#[test]
fn a_lone_agent_breaks_the_utility_bound() {
    let trace = run(&GameConfig::new(1, 1, 2, Payoff::Step).with_steps(50)).unwrap();
    let last = trace.utilities_after(49).unwrap();
    assert!(last.numerators.iter().any(|&x| x.abs() > 2));
}

#[test]
fn parallel_and_sequential_sweeps_agree() {
    let cfg = GameConfig::new(201, 2, 2, Payoff::Step).with_steps(2000);
    let seeds: Vec<u64> = (10..16).collect();
    let digest =
        |t: &mgame::game::Trace| Ok((t.demands().iter().sum::<i64>(), t.final_history().code()));
    assert_eq!(
        sweep(&cfg, &seeds, digest).unwrap(),
        sweep_sequential(&cfg, &seeds, digest).unwrap()
    );
}

/// Every state the simulation visits is a chain state and every transition it
/// makes is a chain edge.
#[test]
fn simulation_stays_on_the_chain() {
    let chain = enumerate_chain(1, 2).unwrap();
    let cfg = GameConfig::new(401, 1, 2, Payoff::Step).with_steps(20_000);
    for seed in 0..3 {
        let g = extract_state_graph(&run(&cfg.clone().with_seed(seed)).unwrap()).unwrap();
        for (i, state) in g.states.iter().enumerate() {
            let ci = chain
                .index_of(state)
                .expect("visited state is on the chain");
            for (j, next) in g.states.iter().enumerate() {
                if g.count(i, j) > 0 {
                    let cj = chain.index_of(next).unwrap();
                    assert!(
                        chain.probability(ci, cj) > BigRational::zero(),
                        "{state} -> {next}"
                    );
                }
            }
        }
    }
}

/// Best-action agreement by listing every ordered `S`-tuple, with uniform
/// tie-breaks among the tuple positions holding the top utility.
fn best_action_by_enumeration(s: usize) -> BigRational {
    // m = 1: U_id = a_id(0) + a_id(1), the best table is id 3 (+1, +1).
    let utility = |id: u64| 2 * id.count_ones() as i64 - 2;
    let plays_plus = |id: u64| id >> 1 & 1 == 1;
    let mut agree = BigRational::zero();
    let total = 4u64.pow(s as u32);
    for code in 0..total {
        let tuple: Vec<u64> = (0..s).map(|i| code >> (2 * i) & 3).collect();
        let best = tuple.iter().map(|&id| utility(id)).max().unwrap();
        let top: Vec<u64> = tuple
            .into_iter()
            .filter(|&id| utility(id) == best)
            .collect();
        let plus = top.iter().filter(|&&id| plays_plus(id)).count();
        agree += BigRational::new(BigInt::from(plus), BigInt::from(top.len()));
    }
    agree / BigRational::from_integer(BigInt::from(total))
}

#[test]
fn best_action_probability_matches_enumeration_for_one_bit_memory() {
    for s in 2..=4 {
        assert_eq!(
            best_action_stats(1, s).unwrap().p_best_action,
            best_action_by_enumeration(s),
            "S={s}"
        );
    }
    assert_eq!(
        best_action_by_enumeration(2),
        BigRational::new(11.into(), 16.into())
    );
}
