//! Arithmetic in GF(2^w) for 1 <= w <= 16, plus dense linear algebra over it.
//!
//! Elements are carried as plain `u16` values; every operation goes through a
//! [`GaloisField`] which owns the lookup tables for its polynomial. Fields with
//! `w <= 8` use a full multiplication table. Wider fields use log/antilog tables
//! when `x` generates the multiplicative group and fall back to shift-and-reduce
//! otherwise.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A field element. Always `< 2^w` for the field it belongs to.
pub type Element = u16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GaloisError {
    #[error("field width {0} is outside 1..=16")]
    InvalidWidth(u8),
    #[error("polynomial {poly:#x} does not have degree {w}")]
    WrongDegree { w: u8, poly: u32 },
    #[error("polynomial {0:#x} is reducible over GF(2)")]
    Reducible(u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("system is rank deficient: rank {rank} < {unknowns} unknowns")]
    RankDeficient { rank: usize, unknowns: usize },
    #[error("system is inconsistent")]
    Inconsistent,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Width and modulus of a binary extension field.
///
/// `poly` includes the leading term, so GF(16) with x^4+x^3+1 is `0b11001`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldSpec {
    pub w: u8,
    pub poly: u32,
}

impl FieldSpec {
    /// GF(16) modulo x^4+x^3+1.
    pub const GF16: FieldSpec = FieldSpec { w: 4, poly: 0b1_1001 };
    /// GF(32) modulo x^5+x^3+1.
    pub const GF32: FieldSpec = FieldSpec { w: 5, poly: 0b10_1001 };
    /// GF(256) modulo x^8+x^4+x^3+x^2+1.
    pub const GF256: FieldSpec = FieldSpec { w: 8, poly: 0x11d };
    /// GF(65536) modulo x^16+x^12+x^3+x+1.
    pub const GF65536: FieldSpec = FieldSpec { w: 16, poly: 0x1100b };

    pub fn new(w: u8, poly: u32) -> Result<Self, GaloisError> {
        if !(1..=16).contains(&w) {
            return Err(GaloisError::InvalidWidth(w));
        }
        if degree(poly) != Some(u32::from(w)) {
            return Err(GaloisError::WrongDegree { w, poly });
        }
        if !is_irreducible(poly) {
            return Err(GaloisError::Reducible(poly));
        }
        Ok(FieldSpec { w, poly })
    }

    /// A known irreducible (in fact primitive) polynomial for each width.
    pub fn with_width(w: u8) -> Result<Self, GaloisError> {
        let poly = match w {
            1 => 0b11,
            2 => 0b111,
            3 => 0b1011,
            4 => Self::GF16.poly,
            5 => Self::GF32.poly,
            6 => 0b100_0011,
            7 => 0b1000_1001,
            8 => Self::GF256.poly,
            9 => 0x211,
            10 => 0x409,
            11 => 0x805,
            12 => 0x1053,
            13 => 0x201b,
            14 => 0x4443,
            15 => 0x8003,
            16 => Self::GF65536.poly,
            _ => return Err(GaloisError::InvalidWidth(w)),
        };
        Self::new(w, poly)
    }

    pub fn order(&self) -> u32 {
        1 << self.w
    }

    /// Bytes needed to store one element.
    pub fn symbol_bytes(&self) -> usize {
        if self.w <= 8 {
            1
        } else {
            2
        }
    }
}

impl fmt::Display for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{}) mod {:#x}", self.w, self.poly)
    }
}

fn degree(poly: u32) -> Option<u32> {
    if poly == 0 {
        None
    } else {
        Some(31 - poly.leading_zeros())
    }
}

/// Remainder of carry-less division `a mod b` over GF(2).
fn poly_mod(mut a: u32, b: u32) -> u32 {
    let db = degree(b).expect("nonzero divisor");
    while let Some(da) = degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

/// Trial division against every polynomial of degree 1..=deg/2.
pub fn is_irreducible(poly: u32) -> bool {
    let Some(d) = degree(poly) else {
        return false;
    };
    if d == 0 {
        return false;
    }
    for dd in 1..=d / 2 {
        for cand in (1u32 << dd)..(1u32 << (dd + 1)) {
            if poly_mod(poly, cand) == 0 {
                return false;
            }
        }
    }
    true
}

/// Schoolbook carry-less multiply followed by reduction. Used as the reference
/// implementation and as the multiply for wide non-primitive moduli.
pub fn mul_reference(spec: FieldSpec, a: Element, b: Element) -> Element {
    let mut acc: u32 = 0;
    let mut a = u32::from(a);
    let mut b = u32::from(b);
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        b >>= 1;
        a <<= 1;
    }
    poly_mod(acc, spec.poly) as Element
}

enum Tables {
    Full { mul: Vec<u8>, inv: Vec<Element> },
    Log { exp: Vec<Element>, log: Vec<u32> },
    Reduce,
}

/// A concrete field with precomputed tables. Cheap to clone.
#[derive(Clone)]
pub struct GaloisField {
    spec: FieldSpec,
    tables: Arc<Tables>,
}

impl fmt::Debug for GaloisField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaloisField").field("spec", &self.spec).finish()
    }
}

impl PartialEq for GaloisField {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl GaloisField {
    pub fn new(spec: FieldSpec) -> Result<Self, GaloisError> {
        let spec = FieldSpec::new(spec.w, spec.poly)?;
        let q = spec.order() as usize;
        let tables = if spec.w <= 8 {
            let mut mul = vec![0u8; q * q];
            for a in 0..q {
                for b in a..q {
                    let p = mul_reference(spec, a as Element, b as Element) as u8;
                    mul[a * q + b] = p;
                    mul[b * q + a] = p;
                }
            }
            let mut inv = vec![0; q];
            for a in 1..q {
                inv[a] = (1..q)
                    .find(|&b| mul[a * q + b] == 1)
                    .expect("nonzero elements of a field are invertible")
                    as Element;
            }
            Tables::Full { mul, inv }
        } else {
            let mut exp = vec![0 as Element; 2 * q];
            let mut log = vec![0u32; q];
            let mut x: Element = 1;
            let mut primitive = true;
            for (i, slot) in exp.iter_mut().enumerate().take(q - 1) {
                if i > 0 && x == 1 {
                    primitive = false;
                    break;
                }
                *slot = x;
                log[x as usize] = i as u32;
                x = mul_reference(spec, x, 2);
            }
            if primitive {
                for i in q - 1..2 * q {
                    exp[i] = exp[i - (q - 1)];
                }
                Tables::Log { exp, log }
            } else {
                Tables::Reduce
            }
        };
        Ok(GaloisField {
            spec,
            tables: Arc::new(tables),
        })
    }

    pub fn spec(&self) -> FieldSpec {
        self.spec
    }

    pub fn order(&self) -> u32 {
        self.spec.order()
    }

    pub fn contains(&self, x: Element) -> bool {
        u32::from(x) < self.order()
    }

    #[inline]
    pub fn add(&self, x: Element, y: Element) -> Element {
        x ^ y
    }

    #[inline]
    pub fn mul(&self, x: Element, y: Element) -> Element {
        match &*self.tables {
            Tables::Full { mul, .. } => {
                mul[((x as usize) << self.spec.w) | y as usize] as Element
            }
            Tables::Log { exp, log } => {
                if x == 0 || y == 0 {
                    0
                } else {
                    exp[(log[x as usize] + log[y as usize]) as usize]
                }
            }
            Tables::Reduce => mul_reference(self.spec, x, y),
        }
    }

    pub fn inv(&self, x: Element) -> Result<Element, GaloisError> {
        if x == 0 {
            return Err(GaloisError::ZeroInverse);
        }
        Ok(match &*self.tables {
            Tables::Full { inv, .. } => inv[x as usize],
            Tables::Log { exp, log } => {
                let q1 = self.order() - 1;
                exp[((q1 - log[x as usize]) % q1) as usize]
            }
            Tables::Reduce => self.pow(x, self.order() - 2),
        })
    }

    pub fn div(&self, x: Element, y: Element) -> Result<Element, GaloisError> {
        Ok(self.mul(x, self.inv(y)?))
    }

    pub fn pow(&self, x: Element, mut e: u32) -> Element {
        let mut base = x;
        let mut acc: Element = 1;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// `dst[i] += c * src[i]`.
    pub fn mul_add_slice(&self, dst: &mut [Element], src: &[Element], c: Element) {
        debug_assert_eq!(dst.len(), src.len());
        if c == 0 {
            return;
        }
        match &*self.tables {
            Tables::Full { mul, .. } => {
                let q = 1usize << self.spec.w;
                let row = &mul[c as usize * q..(c as usize + 1) * q];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d ^= Element::from(row[s as usize]);
                }
            }
            Tables::Log { exp, log } => {
                let lc = log[c as usize];
                for (d, &s) in dst.iter_mut().zip(src) {
                    if s != 0 {
                        *d ^= exp[(lc + log[s as usize]) as usize];
                    }
                }
            }
            Tables::Reduce => {
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d ^= mul_reference(self.spec, c, s);
                }
            }
        }
    }
}

/// Row-major dense matrix of field elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Element>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<Element>]) -> Result<Self, GaloisError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GaloisError::ShapeMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Element {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Element) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[Element] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, field: &GaloisField, x: &[Element]) -> Result<Vec<Element>, GaloisError> {
        if x.len() != self.cols {
            return Err(GaloisError::ShapeMismatch(format!(
                "vector of length {} against {} columns",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows)
            .map(|r| {
                self.row(r)
                    .iter()
                    .zip(x)
                    .fold(0, |acc, (&a, &b)| acc ^ field.mul(a, b))
            })
            .collect())
    }

    pub fn rank(&self, field: &GaloisField) -> usize {
        let mut m = self.clone();
        let mut rhs = vec![0; self.rows];
        eliminate(field, &mut m, &mut rhs)
    }
}

/// Gauss-Jordan elimination in place. Pivots on the first nonzero entry of each
/// column. Returns the rank; pivot rows end up in the top `rank` rows with
/// unit pivots and the other entries of pivot columns cleared.
fn eliminate(field: &GaloisField, m: &mut Matrix, rhs: &mut [Element]) -> usize {
    let (rows, cols) = (m.rows, m.cols);
    let mut rank = 0;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m.get(r, col) != 0) else {
            continue;
        };
        if p != rank {
            for c in 0..cols {
                m.data.swap(p * cols + c, rank * cols + c);
            }
            rhs.swap(p, rank);
        }
        let inv = field.inv(m.get(rank, col)).expect("pivot is nonzero");
        for c in col..cols {
            let v = field.mul(m.get(rank, c), inv);
            m.set(rank, c, v);
        }
        rhs[rank] = field.mul(rhs[rank], inv);
        let pivot_row: Vec<Element> = m.row(rank)[col..].to_vec();
        for r in 0..rows {
            if r == rank {
                continue;
            }
            let f = m.get(r, col);
            if f == 0 {
                continue;
            }
            let off = r * cols + col;
            field.mul_add_slice(&mut m.data[off..off + (cols - col)], &pivot_row, f);
            rhs[r] ^= field.mul(f, rhs[rank]);
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Solves `a * x = b` for the unique `x`, where `a` is `m x u` with `m >= u`.
pub fn solve_linear_system(
    field: &GaloisField,
    a: &Matrix,
    b: &[Element],
) -> Result<Vec<Element>, GaloisError> {
    if b.len() != a.rows {
        return Err(GaloisError::ShapeMismatch(format!(
            "{} right-hand sides for {} equations",
            b.len(),
            a.rows
        )));
    }
    if a.rows < a.cols {
        return Err(GaloisError::RankDeficient {
            rank: a.rows,
            unknowns: a.cols,
        });
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let rank = eliminate(field, &mut m, &mut rhs);
    if rank < a.cols {
        return Err(GaloisError::RankDeficient {
            rank,
            unknowns: a.cols,
        });
    }
    if rhs[rank..].iter().any(|&v| v != 0) {
        return Err(GaloisError::Inconsistent);
    }
    // Full column rank: pivot of row c sits in column c.
    Ok(rhs[..a.cols].to_vec())
}

/// Incrementally maintained row-echelon basis, used to ask whether one more
/// equation raises the rank of a system.
#[derive(Debug, Clone)]
pub struct RowBasis {
    field: GaloisField,
    cols: usize,
    rows: Vec<(usize, Vec<Element>)>,
}

impl RowBasis {
    pub fn new(field: &GaloisField, cols: usize) -> Self {
        RowBasis {
            field: field.clone(),
            cols,
            rows: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.cols
    }

    fn reduce(&self, mut v: Vec<Element>) -> Vec<Element> {
        for (pivot, row) in &self.rows {
            let f = v[*pivot];
            if f != 0 {
                self.field.mul_add_slice(&mut v, row, f);
            }
        }
        v
    }

    /// Whether `row` would raise the rank, without inserting it.
    pub fn would_extend(&self, row: &[Element]) -> bool {
        self.reduce(row.to_vec()).iter().any(|&x| x != 0)
    }

    /// Inserts `row`; returns true if it raised the rank.
    pub fn insert(&mut self, row: &[Element]) -> bool {
        assert_eq!(row.len(), self.cols);
        let mut v = self.reduce(row.to_vec());
        let Some(pivot) = v.iter().position(|&x| x != 0) else {
            return false;
        };
        let inv = self.field.inv(v[pivot]).expect("nonzero pivot");
        for x in v.iter_mut() {
            *x = self.field.mul(*x, inv);
        }
        // Keep earlier rows reduced against the new pivot so reduction stays one pass.
        for (_, r) in self.rows.iter_mut() {
            let f = r[pivot];
            if f != 0 {
                self.field.mul_add_slice(r, &v, f);
            }
        }
        self.rows.push((pivot, v));
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gf16() -> GaloisField {
        GaloisField::new(FieldSpec::GF16).unwrap()
    }

    #[test]
    fn add_is_xor() {
        let f = gf16();
        assert_eq!(f.add(0x3, 0x5), 0x6);
        for a in 0..16 {
            assert_eq!(f.add(a, a), 0);
            assert_eq!(f.add(a, 0), a);
        }
    }

    #[test]
    fn x_times_x_cubed_reduces_by_modulus() {
        // x^4 = x^3 + 1 modulo x^4+x^3+1
        let f = gf16();
        assert_eq!(f.mul(0b0010, 0b1000), 0b1001);
    }

    #[test]
    fn identities_and_inverses() {
        let f = gf16();
        assert_eq!(f.inv(1), Ok(1));
        assert_eq!(f.inv(0), Err(GaloisError::ZeroInverse));
        for a in 0..16 {
            assert_eq!(f.mul(a, 1), a);
            assert_eq!(f.mul(a, 0), 0);
        }
        for a in 1..16 {
            assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn rejects_bad_polynomials() {
        assert_eq!(FieldSpec::new(4, 0b1_0101), Err(GaloisError::Reducible(0b1_0101)));
        assert!(matches!(FieldSpec::new(4, 0b101), Err(GaloisError::WrongDegree { .. })));
        assert_eq!(FieldSpec::new(17, 0x3_0000), Err(GaloisError::InvalidWidth(17)));
        // x^4+x^3+x^2+x+1 is irreducible but not primitive.
        assert!(FieldSpec::new(4, 0b1_1111).is_ok());
    }

    #[test]
    fn default_polynomials_are_irreducible() {
        for w in 1..=16 {
            let spec = FieldSpec::with_width(w).unwrap();
            assert!(is_irreducible(spec.poly), "w = {w}");
        }
    }

    #[test]
    fn field_axioms_hold_exhaustively_for_small_widths() {
        for w in 1..=5 {
            let f = GaloisField::new(FieldSpec::with_width(w).unwrap()).unwrap();
            let q = f.order() as Element;
            for a in 0..q {
                for b in 0..q {
                    assert_eq!(f.mul(a, b), f.mul(b, a));
                    for c in 0..q {
                        assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                        assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                    }
                }
            }
        }
    }

    #[test]
    fn tables_agree_with_schoolbook_up_to_width_8() {
        for w in 1..=8 {
            let spec = FieldSpec::with_width(w).unwrap();
            let f = GaloisField::new(spec).unwrap();
            let q = f.order() as Element;
            for a in 0..q {
                for b in 0..q {
                    assert_eq!(f.mul(a, b), mul_reference(spec, a, b));
                }
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
                }
            }
        }
    }

    #[test]
    fn wide_fields_agree_with_schoolbook_on_samples() {
        for spec in [FieldSpec::GF65536, FieldSpec::with_width(12).unwrap()] {
            let f = GaloisField::new(spec).unwrap();
            let mut x: u32 = 12345;
            for _ in 0..2000 {
                x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
                let a = (x >> 8) as Element & (f.order() - 1) as Element;
                let b = (x >> 3) as Element & (f.order() - 1) as Element;
                assert_eq!(f.mul(a, b), mul_reference(spec, a, b));
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
                }
            }
        }
    }

    #[test]
    fn non_primitive_wide_modulus_uses_reduction() {
        // 2^10 - 1 = 3 * 11 * 31, so some degree-10 irreducibles are not primitive.
        let spec = (0x400u32..0x800)
            .filter_map(|p| FieldSpec::new(10, p).ok())
            .find(|&s| {
                // x^e for e in 2..1023; hitting 1 early means x has order < 1023.
                let mut x: Element = 2;
                (2..1023).any(|_| {
                    x = mul_reference(s, x, 2);
                    x == 1
                })
            })
            .expect("a non-primitive irreducible of degree 10 exists");
        let f = GaloisField::new(spec).unwrap();
        assert!(matches!(*f.tables, Tables::Reduce));
        for a in 1..1024 {
            assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
        }
    }

    #[test]
    fn identity_system_returns_rhs() {
        let f = gf16();
        let b = vec![3, 7, 0, 15];
        assert_eq!(solve_linear_system(&f, &Matrix::identity(4), &b).unwrap(), b);
    }

    #[test]
    fn duplicated_row_is_rank_deficient() {
        let f = gf16();
        let a = Matrix::from_rows(&[vec![1, 2, 3], vec![1, 2, 3], vec![0, 0, 5]]).unwrap();
        assert_eq!(
            solve_linear_system(&f, &a, &[1, 1, 1]),
            Err(GaloisError::RankDeficient { rank: 2, unknowns: 3 })
        );
    }

    #[test]
    fn overdetermined_inconsistent_system() {
        let f = gf16();
        let a = Matrix::from_rows(&[vec![1, 0], vec![0, 1], vec![1, 1]]).unwrap();
        assert_eq!(solve_linear_system(&f, &a, &[1, 2, 3]).unwrap(), vec![1, 2]);
        assert_eq!(solve_linear_system(&f, &a, &[1, 2, 4]), Err(GaloisError::Inconsistent));
    }

    #[test]
    fn row_basis_tracks_rank() {
        let f = gf16();
        let mut basis = RowBasis::new(&f, 3);
        assert!(basis.insert(&[1, 2, 0]));
        assert!(!basis.would_extend(&[2, 4, 0]));
        assert!(!basis.insert(&[f.mul(7, 1), f.mul(7, 2), 0]));
        assert!(basis.insert(&[0, 1, 1]));
        assert!(basis.insert(&[1, 1, 1]));
        assert!(basis.is_full());
    }
}
