//! Coefficients, encoding, decoding and MDS verification.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::construction::{CodeParams, ConstructionError, IndexArraySet, LayoutJson, SymbolIndex};
use crate::galois::{solve_linear_system, Element, GaloisError, GaloisField, Matrix, RowBasis};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error(transparent)]
    Galois(#[from] GaloisError),
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error("no MDS coefficient assignment found in {attempts} attempts")]
    NoMdsCoefficients { attempts: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("symbol {value} is outside GF(2^{w})")]
    SymbolOutOfField { value: Element, w: u8 },
    #[error("need {needed} nodes to decode, only {available} available")]
    NotEnoughNodes { available: usize, needed: usize },
    #[error("node {node} disagrees with the decoded stripe")]
    InconsistentStripe { node: usize },
    #[error("MDS check would enumerate {subsets} erasure patterns (limit {limit}); pass an explicit override")]
    TooManySubsets { subsets: u128, limit: u128 },
    #[error("corrupt code description: {0}")]
    Corrupt(String),
}

/// Above this many `k`-subsets, [`verify_mds`] refuses without an override.
pub const MDS_SUBSET_LIMIT: u128 = 100_000;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 64;

/// Coefficients of every parity equation, aligned with the non-empty cells of
/// the corresponding index-array row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientTable {
    coeffs: Vec<Vec<Vec<Element>>>,
}

impl CoefficientTable {
    fn shape_of(arrays: &IndexArraySet) -> Vec<Vec<usize>> {
        let p = arrays.params();
        (0..p.r)
            .map(|l| (0..p.alpha).map(|i| arrays.row_terms(l, i).count()).collect())
            .collect()
    }

    /// Base-grid cells get a row- and column-scaled Cauchy coefficient
    /// `lambda_{l,i} mu_{i,j} / (x_l + y_j)` when `n <= q`, so every square
    /// block of the base part is nonsingular; appended cells are uniform.
    fn random(arrays: &IndexArraySet, field: &GaloisField, rng: &mut ChaCha8Rng) -> Self {
        let p = arrays.params();
        let q = field.order();
        let cauchy = (p.n as u32) <= q;
        let mu: Vec<Vec<Element>> =
            (0..p.alpha).map(|_| (0..p.k).map(|_| rng.gen_range(1..q) as Element).collect()).collect();
        let coeffs = (0..p.r)
            .map(|l| {
                (0..p.alpha)
                    .map(|i| {
                        let lambda = rng.gen_range(1..q) as Element;
                        arrays
                            .row_terms(l, i)
                            .enumerate()
                            .map(|(col, _)| {
                                if cauchy && col < p.k {
                                    let denom = field.add(l as Element, (p.r + col) as Element);
                                    let c = field.div(1, denom).expect("distinct Cauchy points");
                                    field.mul(lambda, field.mul(mu[i][col], c))
                                } else {
                                    rng.gen_range(1..q) as Element
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        CoefficientTable { coeffs }
    }

    pub fn from_raw(
        arrays: &IndexArraySet,
        field: &GaloisField,
        coeffs: Vec<Vec<Vec<Element>>>,
    ) -> Result<Self, CodecError> {
        let shape = Self::shape_of(arrays);
        let got: Vec<Vec<usize>> = coeffs.iter().map(|a| a.iter().map(Vec::len).collect()).collect();
        if got != shape {
            return Err(CodecError::ShapeMismatch("coefficient table does not match index arrays".into()));
        }
        if let Some(&c) = coeffs.iter().flatten().flatten().find(|&&c| c == 0 || !field.contains(c)) {
            return Err(CodecError::Corrupt(format!("coefficient {c} is zero or outside the field")));
        }
        Ok(CoefficientTable { coeffs })
    }

    /// Coefficients of row `i` of parity `l`.
    pub fn row(&self, l: usize, i: usize) -> &[Element] {
        &self.coeffs[l][i]
    }

    pub fn raw(&self) -> &[Vec<Vec<Element>>] {
        &self.coeffs
    }
}

/// A fully specified code: index arrays, field and coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeInstance {
    arrays: IndexArraySet,
    field: GaloisField,
    coefficients: CoefficientTable,
    seed: u64,
    attempt: u32,
}

impl CodeInstance {
    pub fn from_parts(
        arrays: IndexArraySet,
        coefficients: CoefficientTable,
        seed: u64,
        attempt: u32,
    ) -> Result<Self, CodecError> {
        let field = GaloisField::new(arrays.params().field)?;
        let coefficients = CoefficientTable::from_raw(&arrays, &field, coefficients.coeffs)?;
        Ok(CodeInstance { arrays, field, coefficients, seed, attempt })
    }

    pub fn params(&self) -> &CodeParams {
        self.arrays.params()
    }

    pub fn arrays(&self) -> &IndexArraySet {
        &self.arrays
    }

    pub fn field(&self) -> &GaloisField {
        &self.field
    }

    pub fn coefficients(&self) -> &CoefficientTable {
        &self.coefficients
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    /// Terms of parity equation `(l, i)` as `(symbol, coefficient)` pairs.
    pub fn equation(&self, l: usize, i: usize) -> impl Iterator<Item = (SymbolIndex, Element)> + '_ {
        self.arrays.row_terms(l, i).zip(self.coefficients.row(l, i).iter().copied())
    }

    /// SHA-256 over the canonical parameters, layout and coefficients.
    pub fn checksum(&self) -> String {
        let body = serde_json::json!({
            "params": self.params(),
            "layout": LayoutJson::from_set(&self.arrays),
            "coefficients": self.coefficients.raw(),
        });
        hex(&Sha256::digest(body.to_string().as_bytes()))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(CodeFile {
            format: CODE_FORMAT.into(),
            version: CODE_VERSION,
            params: *self.params(),
            seed: self.seed,
            attempt: self.attempt,
            layout: LayoutJson::from_set(&self.arrays),
            coefficients: self.coefficients.raw().to_vec(),
            checksum: self.checksum(),
        })
        .expect("code description serialises")
    }

    /// Parses a code description, rebuilding the arrays from the stored layout
    /// and checking shape and checksum.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, CodecError> {
        let file: CodeFile =
            serde_json::from_value(value.clone()).map_err(|e| CodecError::Corrupt(e.to_string()))?;
        if file.format != CODE_FORMAT || file.version != CODE_VERSION {
            return Err(CodecError::Corrupt(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        let p = file.params;
        let params = CodeParams::new(p.n, p.k, p.alpha, p.field)?;
        if params != p {
            return Err(CodecError::Corrupt("inconsistent parameters".into()));
        }
        let arrays = file.layout.to_set(&params)?;
        if arrays.partitions().len() != params.k {
            return Err(CodecError::Corrupt("layout does not cover every systematic node".into()));
        }
        let field = GaloisField::new(params.field)?;
        let coefficients = CoefficientTable::from_raw(&arrays, &field, file.coefficients)?;
        let inst = CodeInstance { arrays, field, coefficients, seed: file.seed, attempt: file.attempt };
        if inst.checksum() != file.checksum {
            return Err(CodecError::Corrupt("checksum mismatch".into()));
        }
        Ok(inst)
    }
}

const CODE_FORMAT: &str = "htec-code";
const CODE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CodeFile {
    format: String,
    version: u32,
    params: CodeParams,
    seed: u64,
    attempt: u32,
    layout: LayoutJson,
    coefficients: Vec<Vec<Vec<Element>>>,
    checksum: String,
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws nonzero coefficients from a ChaCha stream keyed by `(seed, attempt)`
/// and keeps the first assignment that passes [`verify_mds`]. A draw that
/// leaves some erasure patterns singular is improved by a bounded local
/// search: for a random singular pattern, one coefficient that lifts a
/// dependent equation out of the span of the others is redrawn, and the move
/// is kept unless the total rank deficiency over all patterns grows.
pub fn assign_coefficients(
    arrays: &IndexArraySet,
    seed: u64,
    max_attempts: u32,
) -> Result<CodeInstance, CodecError> {
    let field = GaloisField::new(arrays.params().field)?;
    let q = field.order();
    for attempt in 0..max_attempts {
        let mut rng = attempt_rng(seed, attempt);
        let coefficients = CoefficientTable::random(arrays, &field, &mut rng);
        let mut inst = CodeInstance { arrays: arrays.clone(), field: field.clone(), coefficients, seed, attempt };
        let mut failing = failing_patterns(&inst, usize::MAX);
        let mut deficiency = total_deficiency(&inst, &failing);
        for _ in 0..LOCAL_MOVES {
            if failing.is_empty() || q <= 2 {
                break;
            }
            let pattern = &failing[rng.gen_range(0..failing.len())];
            let moves = rank_raising_moves(&inst, pattern);
            if moves.is_empty() {
                continue;
            }
            let (l, i, t) = moves[rng.gen_range(0..moves.len())];
            let old = inst.coefficients.coeffs[l][i][t];
            let mut new = old;
            while new == old {
                new = rng.gen_range(1..q) as Element;
            }
            inst.coefficients.coeffs[l][i][t] = new;
            // Only patterns that lose this symbol's node and keep parity `l` can change.
            let node = inst.arrays.row_terms(l, i).nth(t).expect("term index").node;
            let touched = |f_lost: &[usize], f_alive: &[usize]| f_lost.contains(&node) && f_alive.contains(&l);
            let mut now: Vec<FailingPattern> =
                failing.iter().filter(|f| !touched(&f.lost, &f.alive)).cloned().collect();
            now.extend(scan_patterns(&inst, usize::MAX, touched));
            now.sort_by(|a, b| (a.lost.len(), &a.lost, &a.alive).cmp(&(b.lost.len(), &b.lost, &b.alive)));
            let d = total_deficiency(&inst, &now);
            if d <= deficiency {
                failing = now;
                deficiency = d;
            } else {
                inst.coefficients.coeffs[l][i][t] = old;
            }
        }
        if failing.is_empty() {
            return Ok(inst);
        }
    }
    Err(CodecError::NoMdsCoefficients { attempts: max_attempts })
}

/// Local-search moves per random draw.
const LOCAL_MOVES: usize = 400;

fn total_deficiency(inst: &CodeInstance, failing: &[FailingPattern]) -> usize {
    failing.iter().map(|f| f.lost.len() * inst.params().alpha - f.rank).sum()
}

fn attempt_rng(seed: u64, attempt: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(attempt));
    rng
}

/// An erasure pattern whose surviving equations do not determine the lost data.
#[derive(Debug, Clone)]
pub struct FailingPattern {
    pub lost: Vec<usize>,
    pub alive: Vec<usize>,
    pub rank: usize,
}

/// `C(n, k)` without overflow for the sizes used here.
pub fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n.saturating_sub(k));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// True iff every `k` of the `n` nodes determine the data. Refuses when the
/// number of `k`-subsets exceeds [`MDS_SUBSET_LIMIT`].
pub fn verify_mds(inst: &CodeInstance) -> Result<bool, CodecError> {
    verify_mds_with(inst, false)
}

pub fn verify_mds_with(inst: &CodeInstance, allow_large: bool) -> Result<bool, CodecError> {
    let p = inst.params();
    let subsets = binomial(p.n, p.k);
    if subsets > MDS_SUBSET_LIMIT && !allow_large {
        return Err(CodecError::TooManySubsets { subsets, limit: MDS_SUBSET_LIMIT });
    }
    Ok(failing_patterns(inst, 1).is_empty())
}

/// Erasure patterns of exactly `r` nodes whose surviving parities fail to pin
/// down the lost systematic symbols; stops after `limit` hits. Only the lost
/// systematic columns matter, so each check is an `s*alpha` square rank test.
pub fn failing_patterns(inst: &CodeInstance, limit: usize) -> Vec<FailingPattern> {
    scan_patterns(inst, limit, |_, _| true)
}

/// [`failing_patterns`] restricted to `(lost, alive)` pairs accepted by `keep`.
fn scan_patterns(inst: &CodeInstance, limit: usize, keep: impl Fn(&[usize], &[usize]) -> bool) -> Vec<FailingPattern> {
    let p = *inst.params();
    let mut out = Vec::new();
    for s in 1..=p.r.min(p.k) {
        for lost in combinations(p.k, s) {
            if !combinations(p.r, s).any(|alive| keep(&lost, &alive)) {
                continue;
            }
            let col_of = column_map(&p, &lost);
            // All r parities restricted to the lost columns.
            let blocks: Vec<Vec<Vec<Element>>> = (0..p.r)
                .map(|l| (0..p.alpha).map(|i| restricted_row(inst, l, i, &col_of, s * p.alpha)).collect())
                .collect();
            for alive in combinations(p.r, s).filter(|alive| keep(&lost, alive)) {
                let rows: Vec<Vec<Element>> = alive.iter().flat_map(|&l| blocks[l].iter().cloned()).collect();
                let m = Matrix::from_rows(&rows).expect("rectangular");
                let rank = m.rank(&inst.field);
                if rank < s * p.alpha {
                    out.push(FailingPattern { lost: lost.clone(), alive: alive.clone(), rank });
                    if out.len() >= limit {
                        return out;
                    }
                }
            }
        }
    }
    out
}

/// Coefficients whose redraw is certain to raise the rank of `pattern`: a
/// lost-node term of an equation that adds nothing to those before it, where
/// the term's column lies outside the span of the independent equations.
fn rank_raising_moves(inst: &CodeInstance, pattern: &FailingPattern) -> Vec<(usize, usize, usize)> {
    let p = inst.params();
    let col_of = column_map(p, &pattern.lost);
    let width = pattern.lost.len() * p.alpha;
    let mut basis = RowBasis::new(&inst.field, width);
    let mut dependent = Vec::new();
    for &l in &pattern.alive {
        for i in 0..p.alpha {
            if !basis.insert(&restricted_row(inst, l, i, &col_of, width)) {
                dependent.push((l, i));
            }
        }
    }
    let outside: Vec<bool> = (0..width)
        .map(|u| {
            let mut e = vec![0; width];
            e[u] = 1;
            basis.would_extend(&e)
        })
        .collect();
    let mut moves = Vec::new();
    for (l, i) in dependent {
        for (t, s) in inst.arrays.row_terms(l, i).enumerate() {
            if col_of[s.node].is_some_and(|b| outside[b + s.row]) {
                moves.push((l, i, t));
            }
        }
    }
    moves
}

fn column_map(p: &CodeParams, lost: &[usize]) -> Vec<Option<usize>> {
    let mut col_of = vec![None; p.k];
    for (b, &y) in lost.iter().enumerate() {
        col_of[y] = Some(b * p.alpha);
    }
    col_of
}

fn restricted_row(inst: &CodeInstance, l: usize, i: usize, col_of: &[Option<usize>], width: usize) -> Vec<Element> {
    let mut row = vec![0; width];
    for (sym, c) in inst.equation(l, i) {
        if let Some(base) = col_of[sym.node] {
            row[base + sym.row] ^= c;
        }
    }
    row
}

/// All `m`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, m: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut next = (m <= n).then(|| (0..m).collect::<Vec<_>>());
    std::iter::from_fn(move || {
        let cur = next.take()?;
        let mut idx = cur.clone();
        let mut pos = m;
        while pos > 0 {
            pos -= 1;
            if idx[pos] < n - m + pos {
                idx[pos] += 1;
                for q in pos + 1..m {
                    idx[q] = idx[q - 1] + 1;
                }
                next = Some(idx);
                break;
            }
        }
        Some(cur)
    })
}

/// `n` nodes of `alpha` symbols; nodes `0..k` are systematic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripe {
    pub nodes: Vec<Vec<Element>>,
}

impl Stripe {
    pub fn node(&self, j: usize) -> &[Element] {
        &self.nodes[j]
    }

    pub fn symbol(&self, node: usize, row: usize) -> Element {
        self.nodes[node][row]
    }
}

/// Computes the `r` parity nodes for `data` (`k` nodes of `alpha` symbols).
pub fn encode(inst: &CodeInstance, data: &[Vec<Element>]) -> Result<Stripe, CodecError> {
    let p = inst.params();
    if data.len() != p.k || data.iter().any(|d| d.len() != p.alpha) {
        return Err(CodecError::ShapeMismatch(format!(
            "expected {} data nodes of {} symbols",
            p.k, p.alpha
        )));
    }
    if let Some(&v) = data.iter().flatten().find(|&&v| !inst.field.contains(v)) {
        return Err(CodecError::SymbolOutOfField { value: v, w: p.field.w });
    }
    let mut nodes = data.to_vec();
    for l in 0..p.r {
        nodes.push((0..p.alpha).map(|i| parity_symbol(inst, l, i, |s| data[s.node][s.row])).collect());
    }
    Ok(Stripe { nodes })
}

/// Evaluates parity `(l, i)` given a lookup for systematic symbols.
pub fn parity_symbol(inst: &CodeInstance, l: usize, i: usize, mut value: impl FnMut(SymbolIndex) -> Element) -> Element {
    inst.equation(l, i).fold(0, |acc, (s, c)| acc ^ inst.field.mul(c, value(s)))
}

/// Recovers the `k` systematic nodes from any `k` available nodes. Extra
/// available nodes are checked against the result.
pub fn decode(
    inst: &CodeInstance,
    available: &BTreeMap<usize, Vec<Element>>,
) -> Result<Vec<Vec<Element>>, CodecError> {
    let p = *inst.params();
    if available.len() < p.k {
        return Err(CodecError::NotEnoughNodes { available: available.len(), needed: p.k });
    }
    for (&j, v) in available {
        if j >= p.n || v.len() != p.alpha {
            return Err(CodecError::ShapeMismatch(format!("node {j} has wrong index or length")));
        }
    }
    let used: Vec<usize> = available.keys().copied().take(p.k).collect();
    let lost: Vec<usize> = (0..p.k).filter(|j| !available.contains_key(j)).collect();
    let mut data: Vec<Vec<Element>> = (0..p.k)
        .map(|j| available.get(&j).cloned().unwrap_or_else(|| vec![0; p.alpha]))
        .collect();
    if !lost.is_empty() {
        let parities: Vec<usize> = used.iter().filter(|&&j| j >= p.k).map(|j| j - p.k).collect();
        let col_of = column_map(&p, &lost);
        let width = lost.len() * p.alpha;
        let mut rows = Vec::with_capacity(width);
        let mut rhs = Vec::with_capacity(width);
        for &l in &parities {
            for i in 0..p.alpha {
                rows.push(restricted_row(inst, l, i, &col_of, width));
                let known = parity_symbol(inst, l, i, |s| if col_of[s.node].is_some() { 0 } else { data[s.node][s.row] });
                rhs.push(available[&(p.k + l)][i] ^ known);
            }
        }
        let m = Matrix::from_rows(&rows)?;
        let x = solve_linear_system(&inst.field, &m, &rhs)?;
        for (b, &y) in lost.iter().enumerate() {
            data[y].copy_from_slice(&x[b * p.alpha..(b + 1) * p.alpha]);
        }
    }
    for (&j, v) in available.iter().skip(p.k) {
        let expect: Vec<Element> = if j < p.k {
            data[j].clone()
        } else {
            (0..p.alpha).map(|i| parity_symbol(inst, j - p.k, i, |s| data[s.node][s.row])).collect()
        };
        if *v != expect {
            return Err(CodecError::InconsistentStripe { node: j });
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::build_index_arrays;
    use crate::galois::FieldSpec;

    fn instance(n: usize, k: usize, alpha: usize, field: FieldSpec) -> CodeInstance {
        let p = CodeParams::new(n, k, alpha, field).unwrap();
        assign_coefficients(&build_index_arrays(&p).unwrap(), 7, DEFAULT_MAX_ATTEMPTS).unwrap()
    }

    #[test]
    fn combinations_are_lexicographic() {
        let all: Vec<Vec<usize>> = combinations(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(combinations(3, 0).count(), 1);
        assert_eq!(combinations(2, 3).count(), 0);
        assert_eq!(binomial(14, 10), 1001);
    }

    #[test]
    fn same_seed_same_code() {
        let a = instance(6, 4, 4, FieldSpec::GF16);
        let b = instance(6, 4, 4, FieldSpec::GF16);
        assert_eq!(a.coefficients(), b.coefficients());
        assert_eq!(a.checksum(), b.checksum());
    }

    #[test]
    fn small_code_round_trip() {
        let inst = instance(4, 2, 2, FieldSpec::GF16);
        assert_eq!(verify_mds(&inst), Ok(true));
        let data = vec![vec![1, 2], vec![3, 4]];
        let stripe = encode(&inst, &data).unwrap();
        let avail: BTreeMap<usize, Vec<Element>> = [2, 3].iter().map(|&j| (j, stripe.nodes[j].clone())).collect();
        assert_eq!(decode(&inst, &avail).unwrap(), data);
    }

    #[test]
    fn decode_rejects_too_few_nodes() {
        let inst = instance(4, 2, 2, FieldSpec::GF16);
        let stripe = encode(&inst, &[vec![1, 2], vec![3, 4]]).unwrap();
        let avail: BTreeMap<usize, Vec<Element>> = [(3, stripe.nodes[3].clone())].into();
        assert_eq!(decode(&inst, &avail), Err(CodecError::NotEnoughNodes { available: 1, needed: 2 }));
    }

    #[test]
    fn decode_flags_corrupt_extra_node() {
        let inst = instance(4, 2, 2, FieldSpec::GF16);
        let stripe = encode(&inst, &[vec![1, 2], vec![3, 4]]).unwrap();
        let mut avail: BTreeMap<usize, Vec<Element>> = (0..4).map(|j| (j, stripe.nodes[j].clone())).collect();
        avail.get_mut(&3).unwrap()[1] ^= 1;
        assert_eq!(decode(&inst, &avail), Err(CodecError::InconsistentStripe { node: 3 }));
    }

    #[test]
    fn encode_rejects_out_of_field_symbols() {
        let inst = instance(4, 2, 2, FieldSpec::GF16);
        assert!(matches!(
            encode(&inst, &[vec![16, 0], vec![0, 0]]),
            Err(CodecError::SymbolOutOfField { value: 16, w: 4 })
        ));
    }

    #[test]
    fn large_subset_guard() {
        let p = CodeParams::new(40, 20, 1, FieldSpec::GF256).unwrap();
        let set = build_index_arrays(&p).unwrap();
        let field = GaloisField::new(p.field).unwrap();
        let mut rng = attempt_rng(1, 0);
        let coefficients = CoefficientTable::random(&set, &field, &mut rng);
        let inst = CodeInstance { arrays: set, field, coefficients, seed: 1, attempt: 0 };
        assert!(matches!(verify_mds(&inst), Err(CodecError::TooManySubsets { .. })));
    }

    #[test]
    fn json_round_trip_and_tamper_detection() {
        let inst = instance(6, 4, 4, FieldSpec::GF16);
        let v = inst.to_json();
        assert_eq!(CodeInstance::from_json(&v).unwrap(), inst);
        let mut bad = v.clone();
        bad["coefficients"][0][0][0] = serde_json::json!(if inst.coefficients().row(0, 0)[0] == 1 { 2 } else { 1 });
        assert!(matches!(CodeInstance::from_json(&bad), Err(CodecError::Corrupt(_))));
    }
}
