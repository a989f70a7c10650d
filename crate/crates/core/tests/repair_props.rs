use std::collections::BTreeMap;
use std::sync::OnceLock;

use htec::codec::{assign_coefficients, encode, CodeInstance};
use htec::construction::{build_index_arrays, CodeParams};
use htec::galois::{Element, FieldSpec};
use htec::repair::{bounds_for, execute_repair, plan_repair, RepairMethod};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn codes() -> &'static [CodeInstance] {
    static CODES: OnceLock<Vec<CodeInstance>> = OnceLock::new();
    CODES.get_or_init(|| {
        [(9, 6, 9, 5u8), (9, 6, 6, 4), (9, 6, 4, 8), (8, 4, 4, 8), (10, 6, 16, 8), (14, 10, 8, 8), (7, 5, 3, 8)]
            .iter()
            .map(|&(n, k, a, w)| {
                let p = CodeParams::new(n, k, a, FieldSpec::with_width(w).unwrap()).unwrap();
                assign_coefficients(&build_index_arrays(&p).unwrap(), 1, 64).unwrap()
            })
            .collect()
    })
}

fn failure_set(n: usize, r: usize) -> impl Strategy<Value = Vec<usize>> {
    proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 1..=r)
}

fn case() -> impl Strategy<Value = (usize, Vec<usize>, u64)> {
    (0..codes().len()).prop_flat_map(|c| {
        let p = *codes()[c].params();
        (Just(c), failure_set(p.n, p.r), any::<u64>())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn plans_read_only_survivors_and_restore_exactly((c, failed, seed) in case()) {
        let inst = &codes()[c];
        let p = *inst.params();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max = (p.field.order() - 1) as Element;
        let data: Vec<Vec<Element>> = (0..p.k).map(|_| (0..p.alpha).map(|_| rng.gen_range(0..=max)).collect()).collect();
        let stripe = encode(inst, &data).unwrap();
        let plan = plan_repair(inst, &failed).unwrap();
        prop_assert!(plan.reads.keys().all(|j| !failed.contains(j)));
        // Serve only the planned symbols.
        let served: BTreeMap<usize, Vec<Element>> = plan
            .reads
            .iter()
            .map(|(&j, rows)| {
                let mut v = vec![0; p.alpha];
                for &i in rows {
                    v[i] = stripe.symbol(j, i);
                }
                (j, v)
            })
            .collect();
        let restored = execute_repair(inst, &plan, &served).unwrap();
        prop_assert_eq!(restored.len(), failed.len());
        for &j in &failed {
            prop_assert_eq!(&restored[&j], &stripe.nodes[j]);
        }
    }

    #[test]
    fn systematic_repairs_never_exceed_a_full_decode((c, failed, _) in case()) {
        let inst = &codes()[c];
        let p = *inst.params();
        prop_assume!(failed.iter().all(|&j| j < p.k));
        let plan = plan_repair(inst, &failed).unwrap();
        let s = plan.symbols_read();
        prop_assert!(s <= p.k * p.alpha);
        // Nothing reads less than the cut-set floor.
        prop_assert!(s * p.r >= failed.len() * p.alpha * (p.n - failed.len()));
        if failed.len() == 1 {
            prop_assert_eq!(plan.method, RepairMethod::SingleNode);
            if p.alpha % p.r == 0 {
                prop_assert!(bounds_for(&p, 1, s).within);
            }
        }
    }
}
