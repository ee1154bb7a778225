use broker_core::env::{expected_profit_exact, two_atom_support, EnvSpec, ExactLaw};
use broker_core::grid::{empirical_optimum, OptimumOptions, PointGrid, TieBreak};
use broker_core::learner::{precision_schedule, run, BilateralTrade, LearnerConfig};
use broker_core::mechanism::Valuation;
use broker_core::simplify::{approximate, dichotomy_witness, simplify, DichotomyOutcome, DyadicPrecision};
use broker_core::{Amount, Coord, Mechanism};
use num_rational::BigRational;

fn v(s: f64, b: f64) -> Valuation {
    Valuation::from_f64(s, b).unwrap()
}

fn q(x: f64) -> Coord {
    Coord::from_f64(x).unwrap()
}

#[test]
fn narrow_triangle_optimum() {
    let grid = PointGrid::from_samples(&[v(0.0, 0.5), v(0.05, 1.0)]);
    let (m, value) = empirical_optimum(&grid, OptimumOptions::default());
    assert_eq!(m, Mechanism::from_vertices(vec![v(0.0, 0.5), v(0.0, 1.0), v(0.05, 1.0)]).unwrap());
    assert_eq!(value, Amount::ONE + Amount::ONE - q(0.5).as_amount() - q(0.05).as_amount());
    let p = m.payments(v(0.05, 1.0)).unwrap();
    assert_eq!((p.seller, p.buyer), (q(0.05), Coord::ONE));
}

#[test]
fn two_atom_ties() {
    let atoms = two_atom_support();
    let grid = PointGrid::from_samples(&atoms);
    let (minimal, value) = empirical_optimum(&grid, OptimumOptions::default());
    assert_eq!(value, Amount::ONE);
    assert_eq!(minimal, Mechanism::rectangle_union([atoms[0]]));
    let opts = OptimumOptions { tie_break: TieBreak::MaximalRegion, ..Default::default() };
    let (maximal, value) = empirical_optimum(&grid, opts);
    assert_eq!(value, Amount::ONE);
    assert_eq!(maximal, Mechanism::posted_prices(q(0.25), q(0.75)));
    let p = maximal.payments(atoms[1]).unwrap();
    assert_eq!(p.profit(), q(0.5).as_amount());
}

#[test]
fn learner_posts_simplified_optimum() {
    let history = [v(0.0, 0.5), v(0.05, 1.0)];
    let grid = PointGrid::from_samples(&history);
    let (best, _) = empirical_optimum(&grid, OptimumOptions { restrict_to_upper_triangle: true, ..Default::default() });
    let posted = simplify(&best, DyadicPrecision::new(1).unwrap());
    let drop = best.profit(history[0]) - posted.profit(history[0]);
    assert!(drop >= Amount::ZERO && drop <= Amount::ONE);
    assert!(posted.contains(history[0]));
}

#[test]
fn schedule_at_large_horizon() {
    // sqrt(ln³(1e5) / (1e5 - 1)) is about 0.1235, so the grid step is 1/16.
    let cfg = LearnerConfig { schedule_constant: 1.0, ..LearnerConfig::with_horizon(100_000) };
    assert_eq!(precision_schedule(100_000, &cfg).unwrap().step(), Coord::dyadic(1, 4).unwrap());
}

#[test]
fn regret_is_nonnegative_on_two_atoms() {
    let env = EnvSpec::uniform_over(&two_atom_support());
    for seed in 0..5 {
        let r = run::<BilateralTrade>(&env, &LearnerConfig { schedule_constant: 1.0, ..LearnerConfig::with_horizon(2000) }, seed).unwrap();
        assert!(r.regret >= Amount::ZERO);
        assert_eq!(r.regret, r.benchmark - r.cum_profit);
        assert_eq!(r.rounds.len(), 2000);
    }
}

#[test]
fn dichotomy_for_fixed_prices() {
    let env = EnvSpec::uniform_over(&[v(0.1, 0.9), v(0.3, 0.4), v(0.6, 0.7)]);
    let law = env.exact_law().unwrap();
    for (p, qq) in [(0.2, 0.6), (0.3, 0.35), (0.125, 0.875)] {
        let m = Mechanism::posted_prices(q(p), q(qq));
        for h in 0..6 {
            let w = dichotomy_witness(&m, h, &law).unwrap();
            assert_ne!(w.outcome, DichotomyOutcome::Neither);
        }
    }
}

#[test]
fn dichotomy_on_grid_mechanism_is_zero() {
    let m = Mechanism::posted_prices(q(0.25), q(0.75));
    let law = EnvSpec::uniform_over(&two_atom_support()).exact_law().unwrap();
    let w = dichotomy_witness(&m, 2, &law).unwrap();
    assert_eq!(w.second_moment, BigRational::from_integer(0.into()));
    assert!(matches!(w.outcome, DichotomyOutcome::IncrementBounded | DichotomyOutcome::Both));
}

#[test]
fn dichotomy_on_narrow_triangle() {
    let delta = Coord::dyadic(1, 8).unwrap();
    let atoms = [Valuation::new(Coord::ZERO, Coord::HALF), Valuation::new(delta, Coord::ONE)];
    let (m, _) = empirical_optimum(&PointGrid::from_samples(&atoms), OptimumOptions::default());
    let law = EnvSpec::uniform_over(&atoms).exact_law().unwrap();
    let w = dichotomy_witness(&m, 0, &law).unwrap();
    // The trace at steps 1 and 1/2 is the boundary itself, so nothing moves.
    assert_eq!(w.outcome, DichotomyOutcome::IncrementBounded);
    let coarse = expected_profit_exact(&approximate(&m, 0).unwrap(), &EnvSpec::uniform_over(&atoms)).unwrap();
    let fine = expected_profit_exact(&approximate(&m, 1).unwrap(), &EnvSpec::uniform_over(&atoms)).unwrap();
    assert_eq!(w.mean_drop, coarse - fine);
    assert_eq!(w.second_moment, BigRational::from_integer(0.into()));
}

#[test]
fn segment_law_is_exact() {
    let env = EnvSpec::SegmentUniform { from: v(0.0, 0.5), to: v(0.5, 1.0) };
    assert!(matches!(env.exact_law().unwrap(), ExactLaw::Segment { .. }));
    let m = Mechanism::posted_prices(Coord::HALF, Coord::HALF);
    assert_eq!(expected_profit_exact(&m, &env).unwrap(), BigRational::from_integer(0.into()));
}
