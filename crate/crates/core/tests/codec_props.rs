use std::collections::BTreeMap;

use htec::codec::{
    assign_coefficients, combinations, decode, encode, verify_mds, CodeInstance, CoefficientTable,
};
use htec::construction::{build_index_arrays, CodeParams};
use htec::galois::{Element, FieldSpec, GaloisField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn clmul(spec: FieldSpec, a: Element, b: Element) -> Element {
    let (mut a, mut b, mut acc) = (u32::from(a), u32::from(b), 0u32);
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
        if a & (1 << spec.w) != 0 {
            a ^= spec.poly;
        }
    }
    acc as Element
}

fn oracle_rank(spec: FieldSpec, mut rows: Vec<Vec<Element>>) -> usize {
    let inv = |x: Element| (1..(1u32 << spec.w)).map(|y| y as Element).find(|&y| clmul(spec, x, y) == 1).unwrap();
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][c] != 0) else { continue };
        rows.swap(rank, p);
        let f = inv(rows[rank][c]);
        let pivot: Vec<Element> = rows[rank].iter().map(|&v| clmul(spec, v, f)).collect();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[c] != 0 {
                let m = row[c];
                for (x, &y) in row.iter_mut().zip(&pivot) {
                    *x ^= clmul(spec, m, y);
                }
            }
        }
        rows[rank] = pivot;
        rank += 1;
    }
    rank
}

/// Generator matrix built column by column from unit-vector encodings; row
/// `j * alpha + i` is the linear form of symbol `i` of node `j`.
fn generator(inst: &CodeInstance) -> Vec<Vec<Element>> {
    let p = *inst.params();
    let width = p.k * p.alpha;
    let mut g = vec![vec![0; width]; p.n * p.alpha];
    for col in 0..width {
        let mut data = vec![vec![0; p.alpha]; p.k];
        data[col / p.alpha][col % p.alpha] = 1;
        let stripe = encode(inst, &data).unwrap();
        for (j, node) in stripe.nodes.iter().enumerate() {
            for (i, &v) in node.iter().enumerate() {
                g[j * p.alpha + i][col] = v;
            }
        }
    }
    g
}

fn oracle_mds(inst: &CodeInstance) -> bool {
    let p = *inst.params();
    let g = generator(inst);
    combinations(p.n, p.k).all(|set| {
        let rows: Vec<Vec<Element>> =
            set.iter().flat_map(|&j| g[j * p.alpha..(j + 1) * p.alpha].iter().cloned()).collect();
        oracle_rank(p.field, rows) == p.k * p.alpha
    })
}

fn random_data(p: &CodeParams, rng: &mut ChaCha8Rng) -> Vec<Vec<Element>> {
    let max = (p.field.order() - 1) as Element;
    (0..p.k).map(|_| (0..p.alpha).map(|_| rng.gen_range(0..=max)).collect()).collect()
}

/// Small codes with arbitrary (possibly non-MDS) coefficients.
fn raw_instance(n: usize, k: usize, alpha: usize, w: u8, seed: u64) -> CodeInstance {
    let p = CodeParams::new(n, k, alpha, FieldSpec::with_width(w).unwrap()).unwrap();
    let arrays = build_index_arrays(&p).unwrap();
    let field = GaloisField::new(p.field).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max = (p.field.order() - 1) as Element;
    let coeffs: Vec<Vec<Vec<Element>>> = (0..p.r)
        .map(|l| {
            (0..p.alpha)
                .map(|i| arrays.row_terms(l, i).map(|_| rng.gen_range(1..=max)).collect())
                .collect()
        })
        .collect();
    let table = CoefficientTable::from_raw(&arrays, &field, coeffs).unwrap();
    CodeInstance::from_parts(arrays, table, seed, 0).unwrap()
}

const SMALL: [(usize, usize, usize); 5] = [(4, 2, 2), (5, 3, 2), (6, 4, 4), (6, 3, 3), (7, 4, 3)];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mds_verdict_matches_generator_rank(which in 0usize..5, w in 2u8..=4, seed in any::<u64>()) {
        let (n, k, a) = SMALL[which];
        let inst = raw_instance(n, k, a, w, seed);
        prop_assert_eq!(verify_mds(&inst).unwrap(), oracle_mds(&inst));
    }

    #[test]
    fn encoding_is_linear(which in 0usize..5, seed in any::<u64>(), c in 1u16..16) {
        let (n, k, a) = SMALL[which];
        let inst = raw_instance(n, k, a, 4, seed);
        let p = *inst.params();
        let f = inst.field();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
        let (x, y) = (random_data(&p, &mut rng), random_data(&p, &mut rng));
        let sum: Vec<Vec<Element>> =
            x.iter().zip(&y).map(|(u, v)| u.iter().zip(v).map(|(&a, &b)| a ^ b).collect()).collect();
        let scaled: Vec<Vec<Element>> = x.iter().map(|u| u.iter().map(|&a| f.mul(c, a)).collect()).collect();
        let (ex, ey) = (encode(&inst, &x).unwrap(), encode(&inst, &y).unwrap());
        let es = encode(&inst, &sum).unwrap();
        let ec = encode(&inst, &scaled).unwrap();
        for j in 0..p.n {
            for i in 0..p.alpha {
                prop_assert_eq!(es.symbol(j, i), ex.symbol(j, i) ^ ey.symbol(j, i));
                prop_assert_eq!(ec.symbol(j, i), f.mul(c, ex.symbol(j, i)));
            }
        }
    }

    #[test]
    fn any_k_nodes_decode(code in 0usize..4, seed in any::<u64>()) {
        let (n, k, a, w) = [(9, 6, 9, 5u8), (9, 6, 6, 4), (7, 4, 4, 8), (14, 10, 2, 16)][code];
        let p = CodeParams::new(n, k, a, FieldSpec::with_width(w).unwrap()).unwrap();
        let inst = assign_coefficients(&build_index_arrays(&p).unwrap(), 1, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_data(&p, &mut rng);
        let stripe = encode(&inst, &data).unwrap();
        let mut nodes: Vec<usize> = (0..n).collect();
        for i in 0..n {
            nodes.swap(i, rng.gen_range(i..n));
        }
        let avail: BTreeMap<usize, Vec<Element>> =
            nodes[..k].iter().map(|&j| (j, stripe.node(j).to_vec())).collect();
        prop_assert_eq!(decode(&inst, &avail).unwrap(), data);
    }
}

#[test]
fn searched_coefficients_pass_the_oracle() {
    for (n, k, a, w) in [(4, 2, 2, 4u8), (6, 4, 4, 4), (9, 6, 3, 4), (7, 4, 3, 5)] {
        let p = CodeParams::new(n, k, a, FieldSpec::with_width(w).unwrap()).unwrap();
        let inst = assign_coefficients(&build_index_arrays(&p).unwrap(), 1, 64).unwrap();
        assert!(oracle_mds(&inst), "({n},{k}) alpha {a}");
    }
}

#[test]
fn json_round_trip_keeps_the_code() {
    let p = CodeParams::new(9, 6, 6, FieldSpec::GF16).unwrap();
    let inst = assign_coefficients(&build_index_arrays(&p).unwrap(), 7, 64).unwrap();
    let back = CodeInstance::from_json(&inst.to_json()).unwrap();
    assert_eq!(back, inst);
    assert_eq!(back.checksum(), inst.checksum());
}
