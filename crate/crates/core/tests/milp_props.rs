use mspeu::milp::{self, MilpModel, Relation, Sense, SolveParams, SolveStatus, VarKind};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Small {
    obj: Vec<i32>,
    rows: Vec<(Vec<i32>, u8, i32)>,
    max: bool,
}

fn small() -> impl Strategy<Value = Small> {
    (2usize..5).prop_flat_map(|n| {
        (
            prop::collection::vec(-5i32..6, n),
            prop::collection::vec((prop::collection::vec(-4i32..5, n), 0u8..3, -3i32..10), 1..5),
            any::<bool>(),
        )
            .prop_map(|(obj, rows, max)| Small { obj, rows, max })
    })
}

fn build(p: &Small) -> MilpModel {
    let mut m = MilpModel::new(if p.max { Sense::Maximize } else { Sense::Minimize });
    let vars: Vec<_> = (0..p.obj.len())
        .map(|j| m.add_var(format!("v{j}"), 0.0, 3.0, VarKind::Integer).unwrap())
        .collect();
    for (j, &c) in p.obj.iter().enumerate() {
        m.set_objective(vars[j], c as f64);
    }
    for (k, (a, rel, b)) in p.rows.iter().enumerate() {
        let rel = [Relation::Le, Relation::Ge, Relation::Eq][*rel as usize];
        let terms = vars.iter().zip(a).map(|(&v, &c)| (v, c as f64)).collect();
        m.add_constraint(format!("r{k}"), terms, rel, *b as f64).unwrap();
    }
    m
}

fn brute(p: &Small) -> Option<f64> {
    let n = p.obj.len();
    let mut best: Option<f64> = None;
    for code in 0..4usize.pow(n as u32) {
        let x: Vec<i32> = (0..n).map(|j| ((code >> (2 * j)) & 3) as i32).collect();
        let ok = p.rows.iter().all(|(a, rel, b)| {
            let act: i32 = a.iter().zip(&x).map(|(c, v)| c * v).sum();
            match rel {
                0 => act <= *b,
                1 => act >= *b,
                _ => act == *b,
            }
        });
        if ok {
            let v: i32 = p.obj.iter().zip(&x).map(|(c, v)| c * v).sum();
            let v = v as f64;
            best = Some(match best {
                None => v,
                Some(b) if p.max => b.max(v),
                Some(b) => b.min(v),
            });
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn branch_and_bound_matches_enumeration(p in small()) {
        let m = build(&p);
        let s = milp::solve(&m, &SolveParams::default()).unwrap();
        match brute(&p) {
            None => prop_assert_eq!(s.status, SolveStatus::Infeasible),
            Some(v) => {
                prop_assert_eq!(s.status, SolveStatus::Optimal);
                prop_assert!((s.objective - v).abs() < 1e-6, "got {} want {}", s.objective, v);
                prop_assert!(m.max_violation(&s.values, 1e-6) < 1e-6);
            }
        }
    }

    #[test]
    fn lp_round_trip_preserves_model(p in small()) {
        let m = build(&p);
        let text = milp::lp_format::write_lp(&m).unwrap();
        let back = milp::lp_format::read_lp(&text).unwrap();
        prop_assert_eq!(back, m);
    }
}
