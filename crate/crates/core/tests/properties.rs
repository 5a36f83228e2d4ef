use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rulefuzz::exprsynth::{BinOp, Expr};
use rulefuzz::fuzz::{check_pair, VerdictKind};
use rulefuzz::generate::{solve, SolveBudget, SolveRequest};
use rulefuzz::graphir::{Binding, Graph, NewInstruction};
use rulefuzz::ruleinfer::{deduplicate, Domain, Predicate};
use rulefuzz::tensor::{DType, Tensor, TensorType};
use rulefuzz::trace::{AttrValue, Record};

const OPS: [BinOp; 7] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Mod, BinOp::Min, BinOp::Max];

fn expr(symbols: u16) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![(0..symbols).prop_map(Expr::sym), (1i64..=2).prop_map(Expr::lit)];
    leaf.prop_recursive(2, 5, 2, |inner| {
        (0..OPS.len(), inner.clone(), inner).prop_map(|(op, l, r)| Expr::bin(OPS[op], l, r))
    })
}

fn predicate(symbols: u16) -> impl Strategy<Value = Predicate> {
    (any::<bool>(), expr(symbols)).prop_map(|(eq, e)| if eq { Predicate::eq(e) } else { Predicate::lt(e) })
}

fn grid(n: usize, lo: i64, hi: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (lo..=hi).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

fn all(ps: &[Predicate], env: &[i64]) -> bool {
    ps.iter().all(|p| p.holds(env))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dedup_is_an_equivalent_subset_and_a_fixed_point(preds in prop::collection::vec(predicate(3), 0..8)) {
        let domain = Domain { ranges: vec![(0, 8); 3] };
        let out = deduplicate(&preds, &domain, None);
        prop_assert!(out.iter().all(|p| preds.contains(p)));
        for env in grid(3, 0, 8) {
            prop_assert_eq!(all(&preds, &env), all(&out, &env), "env {:?}", env);
        }
        prop_assert_eq!(deduplicate(&out, &domain, None), out);
    }

    #[test]
    fn solver_answers_satisfy_the_request(
        preds in prop::collection::vec(predicate(3), 1..4),
        fixed0 in prop::option::of(0i64..6),
        seed in any::<u64>(),
    ) {
        let bounds = vec![(0, 6); 3];
        let req = SolveRequest {
            predicates: &preds,
            fixed: vec![fixed0, None, None],
            bounds: bounds.clone(),
            budget: SolveBudget::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let got = solve(&req, &mut rng).ok();
        let solutions: Vec<Vec<i64>> = grid(3, 0, 6)
            .into_iter()
            .filter(|e| fixed0.is_none_or(|v| e[0] == v) && all(&preds, e))
            .collect();
        match got {
            Some(v) => {
                prop_assert!(all(&preds, &v));
                if let Some(f) = fixed0 {
                    prop_assert_eq!(v[0], f);
                }
                prop_assert!(v.iter().zip(&bounds).all(|(x, (lo, hi))| lo <= x && x <= hi));
            }
            None => {
                // a dense solution region is never missed
                let free_points = if fixed0.is_some() { 49 } else { 343 };
                prop_assert!(solutions.len() * 10 < free_points, "{} solutions missed", solutions.len());
            }
        }
    }

    #[test]
    fn expressions_round_trip_through_text(e in expr(3)) {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let text = e.to_string_named(&names);
        let back = Expr::parse_named(&text, &names).unwrap();
        for env in grid(3, -3, 3) {
            prop_assert_eq!(back.eval(&env), e.eval(&env), "{}", text);
        }
        prop_assert_eq!(back.to_string_named(&names), text);
    }

    #[test]
    fn oracle_is_reflexive(data in prop::collection::vec(-1e6f64..1e6, 1..16), nan_at in any::<prop::sample::Index>()) {
        let mut data = data;
        let k = nan_at.index(data.len());
        data[k] = f64::NAN;
        let t = Tensor::new(TensorType::new(DType::F64, vec![data.len() as i64]), data);
        let v = check_pair(&Ok(vec![t.clone()]), &Ok(vec![t]));
        prop_assert_eq!(v.kind, VerdictKind::Pass);
    }

    #[test]
    fn records_round_trip(
        shape in prop::collection::vec(0i64..12, 0..4),
        ints in prop::collection::vec(-20i64..20, 0..3),
        f in -10.0f64..10.0,
        valid in any::<bool>(),
    ) {
        let mut attrs = rulefuzz::trace::Attrs::new();
        for (k, v) in ints.iter().enumerate() {
            attrs.insert(format!("k{k}"), AttrValue::Int(*v));
        }
        attrs.insert("scale".into(), AttrValue::Float(f));
        attrs.insert("size".into(), AttrValue::IntList(ints.clone()));
        let ty = TensorType::new(DType::I64, shape);
        let r = Record {
            api: "op".into(),
            inputs: vec![ty.clone()],
            attrs,
            outputs: if valid { vec![ty] } else { vec![] },
            valid,
        };
        prop_assert!(r.check().is_ok());
        let back = Record::from_line(&r.to_line()).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(back.env(), r.env());
        prop_assert_eq!(r.env().apply_to(&r), r);
    }

    #[test]
    fn graph_edits_keep_the_graph_well_formed(steps in prop::collection::vec((0u8..4, any::<prop::sample::Index>(), any::<prop::sample::Index>()), 1..40)) {
        let ty = TensorType::f32(&[4]);
        let mut g = Graph::new();
        g.add_input(ty.clone());
        for (kind, a, b) in steps {
            if g.value_ids().next().is_none() {
                g.add_input(ty.clone());
            }
            let values: Vec<_> = g.value_ids().collect();
            let before = g.clone();
            let res = match kind {
                0 => {
                    let pos = b.index(g.len() + 1);
                    let x = *a.get(&values);
                    g.insert(NewInstruction {
                        api: "relu".into(),
                        attrs: Default::default(),
                        operands: vec![x],
                        result_types: vec![ty.clone()],
                        in_place: false,
                        binding: Binding::Free,
                    }, pos).map(|_| ())
                }
                1 if !g.is_empty() => g.cut(a.index(g.len())),
                2 => {
                    g.remove_unused();
                    g.remove_unused_inputs();
                    Ok(())
                }
                3 => g.replace_alluse(*a.get(&values), *b.get(&values)),
                _ => Ok(()),
            };
            prop_assert!(g.check().is_ok(), "{}", g.to_text());
            if res.is_err() {
                prop_assert_eq!(g.to_text(), before.to_text());
            }
            prop_assert_eq!(Graph::parse(&g.to_text()).unwrap().to_text(), g.to_text());
        }
    }
}
