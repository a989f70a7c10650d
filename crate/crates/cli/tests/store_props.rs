use std::collections::BTreeMap;
use std::fs;
use std::sync::OnceLock;

use htec::codec::{assign_coefficients, combinations, CodeInstance};
use htec::construction::{build_index_arrays, CodeParams};
use htec::galois::FieldSpec;
use htec::iomodel::DiskModel;
use htec_cli::store::{decode_dir, encode_to_dir, kill, repair_dir, shard_name};
use proptest::prelude::*;
use tempfile::TempDir;

fn codes() -> &'static [CodeInstance] {
    static CODES: OnceLock<Vec<CodeInstance>> = OnceLock::new();
    CODES.get_or_init(|| {
        [(4, 2, 2, 4u8), (6, 4, 4, 5), (9, 6, 3, 8), (7, 4, 3, 16)]
            .iter()
            .map(|&(n, k, a, w)| {
                let p = CodeParams::new(n, k, a, FieldSpec::with_width(w).unwrap()).unwrap();
                assign_coefficients(&build_index_arrays(&p).unwrap(), 3, 64).unwrap()
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn encode_decode_is_identity(which in 0usize..4, data in proptest::collection::vec(any::<u8>(), 0..600)) {
        let inst = &codes()[which];
        let dir = TempDir::new().unwrap();
        encode_to_dir(inst, &data, dir.path()).unwrap();
        prop_assert_eq!(decode_dir(dir.path()).unwrap(), data);
    }

    #[test]
    fn repair_restores_every_failure_set(
        which in 0usize..4,
        data in proptest::collection::vec(any::<u8>(), 1..400),
        pick in any::<prop::sample::Index>(),
    ) {
        let inst = &codes()[which];
        let p = *inst.params();
        let sets: Vec<Vec<usize>> = (1..=p.r).flat_map(|t| combinations(p.n, t)).collect();
        let set = &sets[pick.index(sets.len())];
        let dir = TempDir::new().unwrap();
        encode_to_dir(inst, &data, dir.path()).unwrap();
        let before: BTreeMap<usize, Vec<u8>> =
            set.iter().map(|&j| (j, fs::read(dir.path().join(shard_name(j))).unwrap())).collect();
        kill(dir.path(), set).unwrap();
        let report = repair_dir(dir.path(), &DiskModel::default()).unwrap().unwrap();
        prop_assert_eq!(report.failed.len(), set.len());
        for (j, bytes) in before {
            prop_assert_eq!(fs::read(dir.path().join(shard_name(j))).unwrap(), bytes);
        }
        prop_assert_eq!(decode_dir(dir.path()).unwrap(), data);
    }
}
