//! Property-based invariants of the arithmetic, game and certificate layers.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rgames::certify::{finite_oracle, Winner, DEFAULT_STATE_CAP};
use rgames::game::generate::{finite_game, FiniteGameConfig};
use rgames::game::{normalize_game, parse_game, pre_expand, render_game, GameSpec, Owner, Sampler, SamplerConfig, State};
use rgames::poly::{binomial, monomials_up_to, q, Monomial, Polynomial, Q, Var};

const VARS: [Var; 3] = [0, 3, 6];

fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(((0u32..3, 0u32..3, 0u32..3), -9i64..=9, 1i64..=4), 0..6).prop_map(|terms| {
        Polynomial::from_terms(terms.into_iter().map(|((a, b, c), n, d)| {
            (Monomial::from_pairs([(VARS[0], a), (VARS[1], b), (VARS[2], c)]), Q::new(n.into(), d.into()))
        }))
    })
}

fn point() -> impl Strategy<Value = BTreeMap<Var, Q>> {
    prop::collection::vec((-20i64..=20, 1i64..=5), 3).prop_map(|v| VARS.iter().zip(v).map(|(&k, (n, d))| (k, Q::new(n.into(), d.into()))).collect())
}

fn eval(p: &Polynomial, pt: &BTreeMap<Var, Q>) -> Q {
    p.eval_map(pt).expect("total point")
}

proptest! {
    #[test]
    fn ring_laws(a in poly(), b in poly(), c in poly()) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
        prop_assert_eq!(a.mul(&Polynomial::from_q(&q(1))), a.clone());
    }

    #[test]
    fn evaluation_is_a_homomorphism(a in poly(), b in poly(), pt in point()) {
        prop_assert_eq!(eval(&a.add(&b), &pt), eval(&a, &pt) + eval(&b, &pt));
        prop_assert_eq!(eval(&a.mul(&b), &pt), eval(&a, &pt) * eval(&b, &pt));
    }

    #[test]
    fn composition_commutes_with_evaluation(p in poly(), s0 in poly(), s1 in poly(), pt in point()) {
        let subst = |v: Var| match v {
            0 => Some(s0.clone()),
            3 => Some(s1.clone()),
            v => Some(Polynomial::var(v)),
        };
        let composed = p.compose(&subst, &|v| format!("v{v}")).expect("compose");
        let mut inner = pt.clone();
        inner.insert(0, eval(&s0, &pt));
        inner.insert(3, eval(&s1, &pt));
        prop_assert_eq!(eval(&composed, &pt), eval(&p, &inner));
    }

    #[test]
    fn monomial_counts(n in 0usize..5, d in 0u32..5) {
        let vars: Vec<Var> = (0..n as u32).map(|i| 3 * i).collect();
        let ms = monomials_up_to(&vars, d);
        prop_assert_eq!(ms.len() as u64, binomial(n as u64 + d as u64, d as u64));
        prop_assert!(ms.iter().all(|m| m.degree() <= d));
    }

    #[test]
    fn normalization_is_disjoint_and_covering(seed in 0u64..400, px in 0i64..=50) {
        let g = normalize_game(&parse_game(&finite_game(seed, &FiniteGameConfig::default())).unwrap()).unwrap();
        let x = Q::new(px.into(), 10.into());
        let valuation = vec![x.clone(), q(5) - &x];
        for l in 0..g.labels.len() {
            let enabled = g
                .outgoing(l)
                .into_iter()
                .filter(|&t| g.transitions[t].guard.eval(&g.point(&valuation)).unwrap())
                .count();
            prop_assert_eq!(enabled, 1, "label {} at {:?}", g.labels[l].name, valuation);
        }
    }

    #[test]
    fn parse_render_round_trip(seed in 0u64..400, vars in 1usize..=2) {
        let text = finite_game(seed, &FiniteGameConfig { vars, ..FiniteGameConfig::default() });
        let g = parse_game(&text).unwrap();
        let again = parse_game(&render_game(&g)).unwrap();
        prop_assert_eq!(&again, &g);
    }

    #[test]
    fn expanded_targets_are_one_step_winning(seed in 0u64..200) {
        let cfg = FiniteGameConfig { vars: 1, ..FiniteGameConfig::default() };
        let g = normalize_game(&parse_game(&finite_game(seed, &cfg)).unwrap()).unwrap();
        let e = pre_expand(&g, seed).unwrap();
        let sampler = Sampler::new(&e, SamplerConfig::default());
        let expanded = e.expanded.as_ref().unwrap();
        for (l, et) in expanded.iter().enumerate() {
            let Some(inc) = &et.increment else { continue };
            for v in 0..=cfg.max_value {
                let s = State { label: l, valuation: vec![q(v)] };
                if !e.in_domain(&s.valuation).unwrap() || !inc.eval(&e.point(&s.valuation)).unwrap() || e.in_target(&s).unwrap() {
                    continue;
                }
                let t = e.enabled(&s).unwrap();
                let Some(succ) = sampler.enumerate(t, &s.valuation).unwrap() else { continue };
                let to = e.transitions[t].target;
                let hits: Vec<bool> = succ
                    .iter()
                    .map(|y| e.in_target(&State { label: to, valuation: y.clone() }).unwrap())
                    .collect();
                let ok = match e.owner(l) {
                    Owner::Reach => hits.iter().any(|&h| h),
                    Owner::Safe => hits.iter().all(|&h| h),
                };
                prop_assert!(ok, "label {} value {}", e.labels[l].name, v);
            }
        }
    }

    #[test]
    fn oracle_agrees_with_attractor_fixpoint(seed in 0u64..300, vars in 1usize..=2) {
        let text = finite_game(seed, &FiniteGameConfig { vars, ..FiniteGameConfig::default() });
        let g = normalize_game(&parse_game(&text).unwrap()).unwrap();
        let r = finite_oracle(&g, DEFAULT_STATE_CAP).unwrap();
        let winning = attractor(&g, &r.states);
        let s0 = g.initial_state(&BTreeMap::new());
        prop_assert_eq!(r.winner == Winner::Reach, winning.contains(&s0));
        for s in &r.states {
            let ranked = r.ranking.get(s).is_some_and(|v| *v >= q(0));
            prop_assert_eq!(ranked, winning.contains(s), "{}", g.show_state(s));
        }
    }
}

fn attractor(g: &GameSpec, states: &[State]) -> BTreeSet<State> {
    let sampler = Sampler::new(g, SamplerConfig::default());
    let succ: Vec<Vec<State>> = states
        .iter()
        .map(|s| {
            let t = g.enabled(s).unwrap();
            let to = g.transitions[t].target;
            sampler
                .enumerate(t, &s.valuation)
                .unwrap()
                .unwrap()
                .into_iter()
                .map(|y| State { label: to, valuation: y })
                .collect()
        })
        .collect();
    let mut win: BTreeSet<State> = states.iter().filter(|s| g.in_target(s).unwrap()).cloned().collect();
    loop {
        let before = win.len();
        for (s, next) in states.iter().zip(&succ) {
            if win.contains(s) {
                continue;
            }
            let joins = match g.owner(s.label) {
                Owner::Reach => next.iter().any(|n| win.contains(n)),
                Owner::Safe => next.iter().all(|n| win.contains(n)),
            };
            if joins {
                win.insert(s.clone());
            }
        }
        if win.len() == before {
            return win;
        }
    }
}
