//! Finite-field arithmetic over GF(p^r) on the symbol set `{0, .., d-1}`.
//!
//! An element's integer value encodes its p-ary digits `a = sum a_m p^m`,
//! which double as the coefficients of a polynomial over GF(p). Addition is
//! digit-wise mod p (the canonical addition); multiplication is the
//! polynomial product reduced modulo a monic irreducible polynomial chosen at
//! construction. For prime `d` both collapse to ordinary modular arithmetic.
//!
//! All operation tables are precomputed, since the supported orders are tiny
//! (`d <= 64`).

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

/// Largest supported field order.
pub const MAX_ORDER: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GaloisError {
    #[error("order {0} is not a prime power")]
    NotPrimePower(u32),
    #[error("order {0} outside supported range 2..={max}", max = MAX_ORDER)]
    UnsupportedOrder(u32),
    #[error("value {value} out of range for GF({order})")]
    OutOfRange { value: u32, order: u32 },
    #[error("operands belong to different fields: GF({0}) vs GF({1})")]
    FieldMismatch(u32, u32),
    #[error("division by zero")]
    DivisionByZero,
    #[error("string lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("dit strings must have length >= 1")]
    EmptyString,
}

/// Definition of GF(p^r) together with its operation tables.
pub struct FieldSpec {
    p: u32,
    r: u32,
    d: u32,
    /// Reduction polynomial coefficients, constant term first; `None` when `r == 1`.
    modulus: Option<Vec<u32>>,
    add: Vec<u8>,
    mul: Vec<u8>,
    neg: Vec<u8>,
    inv: Vec<u8>,
}

impl FieldSpec {
    /// Builds GF(order). Fails unless `order` is a prime power in `2..=64`.
    pub fn new(order: u32) -> Result<Arc<Self>, GaloisError> {
        if !(2..=MAX_ORDER).contains(&order) {
            return Err(GaloisError::UnsupportedOrder(order));
        }
        let (p, r) = prime_power(order).ok_or(GaloisError::NotPrimePower(order))?;
        let d = order;
        let modulus = (r > 1).then(|| find_irreducible(p, r));
        let n = d as usize;

        let digits: Vec<Vec<u32>> = (0..d).map(|a| to_digits(a, p, r)).collect();

        let mut add = vec![0u8; n * n];
        let mut mul = vec![0u8; n * n];
        for a in 0..n {
            for b in 0..n {
                let s: Vec<u32> = digits[a]
                    .iter()
                    .zip(&digits[b])
                    .map(|(x, y)| (x + y) % p)
                    .collect();
                add[a * n + b] = from_digits(&s, p) as u8;
                let prod = match &modulus {
                    None => (a as u32 * b as u32) % p,
                    Some(m) => from_digits(&poly_mulmod(&digits[a], &digits[b], m, p), p),
                };
                mul[a * n + b] = prod as u8;
            }
        }
        let mut neg = vec![0u8; n];
        let mut inv = vec![0u8; n];
        for a in 0..n {
            neg[a] = (0..n).find(|&b| add[a * n + b] == 0).unwrap() as u8;
            if a != 0 {
                inv[a] = (1..n).find(|&b| mul[a * n + b] == 1).unwrap() as u8;
            }
        }

        Ok(Arc::new(FieldSpec {
            p,
            r,
            d,
            modulus,
            add,
            mul,
            neg,
            inv,
        }))
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.r
    }

    pub fn order(&self) -> u32 {
        self.d
    }

    /// Reduction polynomial (constant term first, monic), present when `r > 1`.
    pub fn modulus(&self) -> Option<&[u32]> {
        self.modulus.as_deref()
    }

    pub fn elem(self: &Arc<Self>, value: u32) -> Result<Fe, GaloisError> {
        if value >= self.d {
            return Err(GaloisError::OutOfRange {
                value,
                order: self.d,
            });
        }
        Ok(Fe {
            value,
            field: Arc::clone(self),
        })
    }

    pub fn zero(self: &Arc<Self>) -> Fe {
        Fe {
            value: 0,
            field: Arc::clone(self),
        }
    }

    pub fn one(self: &Arc<Self>) -> Fe {
        Fe {
            value: 1,
            field: Arc::clone(self),
        }
    }

    /// All elements in value order.
    pub fn elements(self: &Arc<Self>) -> Vec<Fe> {
        (0..self.d)
            .map(|value| Fe {
                value,
                field: Arc::clone(self),
            })
            .collect()
    }

    // Table-level arithmetic on raw values. Callers guarantee `a, b < d`.

    #[inline]
    pub fn add_raw(&self, a: u32, b: u32) -> u32 {
        self.add[(a * self.d + b) as usize] as u32
    }

    #[inline]
    pub fn mul_raw(&self, a: u32, b: u32) -> u32 {
        self.mul[(a * self.d + b) as usize] as u32
    }

    #[inline]
    pub fn neg_raw(&self, a: u32) -> u32 {
        self.neg[a as usize] as u32
    }

    #[inline]
    pub fn sub_raw(&self, a: u32, b: u32) -> u32 {
        self.add_raw(a, self.neg_raw(b))
    }

    /// Multiplicative inverse; `None` for zero.
    #[inline]
    pub fn inv_raw(&self, a: u32) -> Option<u32> {
        (a != 0).then(|| self.inv[a as usize] as u32)
    }

    /// `gamma_p^a` with `gamma_p = exp(2 pi i / p)` and the exponent taken as
    /// the integer value of `a`.
    #[inline]
    pub fn phase_raw(&self, a: u32) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * (a % self.p) as f64 / self.p as f64)
    }

    /// Dot product of two raw digit slices of equal length.
    #[inline]
    pub fn dot_raw(&self, x: &[u32], y: &[u32]) -> u32 {
        x.iter()
            .zip(y)
            .fold(0, |acc, (&a, &b)| self.add_raw(acc, self.mul_raw(a, b)))
    }
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.p == other.p && self.r == other.r && self.modulus == other.modulus
    }
}

impl Eq for FieldSpec {}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSpec")
            .field("p", &self.p)
            .field("r", &self.r)
            .field("modulus", &self.modulus)
            .finish()
    }
}

/// An element of a [`FieldSpec`].
#[derive(Clone)]
pub struct Fe {
    value: u32,
    field: Arc<FieldSpec>,
}

impl Fe {
    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn field(&self) -> &Arc<FieldSpec> {
        &self.field
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    fn check(&self, other: &Fe) -> Result<(), GaloisError> {
        if self.field == other.field {
            Ok(())
        } else {
            Err(GaloisError::FieldMismatch(self.field.d, other.field.d))
        }
    }

    fn with(&self, value: u32) -> Fe {
        Fe {
            value,
            field: Arc::clone(&self.field),
        }
    }

    pub fn add(&self, other: &Fe) -> Result<Fe, GaloisError> {
        self.check(other)?;
        Ok(self.with(self.field.add_raw(self.value, other.value)))
    }

    pub fn sub(&self, other: &Fe) -> Result<Fe, GaloisError> {
        self.check(other)?;
        Ok(self.with(self.field.sub_raw(self.value, other.value)))
    }

    pub fn mul(&self, other: &Fe) -> Result<Fe, GaloisError> {
        self.check(other)?;
        Ok(self.with(self.field.mul_raw(self.value, other.value)))
    }

    pub fn neg(&self) -> Fe {
        self.with(self.field.neg_raw(self.value))
    }

    pub fn inv(&self) -> Result<Fe, GaloisError> {
        self.field
            .inv_raw(self.value)
            .map(|v| self.with(v))
            .ok_or(GaloisError::DivisionByZero)
    }

    /// `gamma_p^self` as a complex number.
    pub fn phase(&self) -> Complex64 {
        self.field.phase_raw(self.value)
    }
}

impl PartialEq for Fe {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && self.field == other.field
    }
}

impl Eq for Fe {}

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@GF({})", self.value, self.field.d)
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

/// A length-N string over GF(d).
#[derive(Clone, PartialEq, Eq)]
pub struct DitString {
    digits: Vec<u32>,
    field: Arc<FieldSpec>,
}

impl DitString {
    pub fn new(field: &Arc<FieldSpec>, digits: &[u32]) -> Result<Self, GaloisError> {
        if digits.is_empty() {
            return Err(GaloisError::EmptyString);
        }
        if let Some(&bad) = digits.iter().find(|&&v| v >= field.d) {
            return Err(GaloisError::OutOfRange {
                value: bad,
                order: field.d,
            });
        }
        Ok(DitString {
            digits: digits.to_vec(),
            field: Arc::clone(field),
        })
    }

    pub fn from_elements(elems: &[Fe]) -> Result<Self, GaloisError> {
        let first = elems.first().ok_or(GaloisError::EmptyString)?;
        for e in elems {
            first.check(e)?;
        }
        Ok(DitString {
            digits: elems.iter().map(Fe::value).collect(),
            field: Arc::clone(&first.field),
        })
    }

    pub fn zeros(field: &Arc<FieldSpec>, len: usize) -> Result<Self, GaloisError> {
        Self::new(field, &vec![0; len])
    }

    /// The string whose base-d reading (first digit most significant) is `index`.
    pub fn from_index(field: &Arc<FieldSpec>, len: usize, mut index: usize) -> Self {
        let d = field.d as usize;
        let mut digits = vec![0u32; len];
        for slot in digits.iter_mut().rev() {
            *slot = (index % d) as u32;
            index /= d;
        }
        DitString {
            digits,
            field: Arc::clone(field),
        }
    }

    /// Inverse of [`DitString::from_index`].
    pub fn index(&self) -> usize {
        let d = self.field.d as usize;
        self.digits.iter().fold(0, |acc, &v| acc * d + v as usize)
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.digits.iter().all(|&v| v == 0)
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }

    pub fn field(&self) -> &Arc<FieldSpec> {
        &self.field
    }

    pub fn get(&self, i: usize) -> Option<Fe> {
        self.digits.get(i).map(|&value| Fe {
            value,
            field: Arc::clone(&self.field),
        })
    }

    fn check(&self, other: &DitString) -> Result<(), GaloisError> {
        if self.field != other.field {
            return Err(GaloisError::FieldMismatch(self.field.d, other.field.d));
        }
        if self.len() != other.len() {
            return Err(GaloisError::LengthMismatch(self.len(), other.len()));
        }
        Ok(())
    }

    /// `sum_k x_k y_k` under field arithmetic.
    pub fn dot(&self, other: &DitString) -> Result<Fe, GaloisError> {
        self.check(other)?;
        Ok(Fe {
            value: self.field.dot_raw(&self.digits, &other.digits),
            field: Arc::clone(&self.field),
        })
    }

    /// Digit-wise field difference `self - other`.
    pub fn sub(&self, other: &DitString) -> Result<DitString, GaloisError> {
        self.check(other)?;
        let digits = self
            .digits
            .iter()
            .zip(&other.digits)
            .map(|(&a, &b)| self.field.sub_raw(a, b))
            .collect();
        Ok(DitString {
            digits,
            field: Arc::clone(&self.field),
        })
    }

    pub fn scale(&self, c: &Fe) -> Result<DitString, GaloisError> {
        if *c.field() != self.field {
            return Err(GaloisError::FieldMismatch(c.field.d, self.field.d));
        }
        let digits = self
            .digits
            .iter()
            .map(|&a| self.field.mul_raw(c.value, a))
            .collect();
        Ok(DitString {
            digits,
            field: Arc::clone(&self.field),
        })
    }

    /// Symbol counts: entry `j` is the number of occurrences of `j`.
    pub fn weight(&self) -> WeightVector {
        let mut counts = vec![0usize; self.field.d as usize];
        for &v in &self.digits {
            counts[v as usize] += 1;
        }
        WeightVector { counts }
    }
}

impl fmt::Debug for DitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@GF({})", self.digits, self.field.d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightVector {
    pub counts: Vec<usize>,
}

impl WeightVector {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Counts divided by the total, i.e. an error-rate vector.
    pub fn rates(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Rank of a set of strings under GF(d)-linear combinations.
pub fn rank(strings: &[DitString]) -> Result<usize, GaloisError> {
    let Some(first) = strings.first() else {
        return Ok(0);
    };
    for s in strings {
        first.check(s)?;
    }
    let f = &first.field;
    let cols = first.len();
    let mut rows: Vec<Vec<u32>> = strings.iter().map(|s| s.digits.clone()).collect();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&i| rows[i][col] != 0) else {
            continue;
        };
        rows.swap(rank, pivot);
        let inv = f.inv_raw(rows[rank][col]).unwrap();
        for v in rows[rank].iter_mut() {
            *v = f.mul_raw(inv, *v);
        }
        let pivot_row = rows[rank].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == rank || row[col] == 0 {
                continue;
            }
            let factor = row[col];
            for (v, &pv) in row.iter_mut().zip(&pivot_row) {
                *v = f.sub_raw(*v, f.mul_raw(factor, pv));
            }
        }
        rank += 1;
    }
    Ok(rank)
}

/// Number of field-axiom instances that fail, over every triple of elements.
/// Zero for a correct table; cubic in the order, so keep `d` modest.
pub fn axiom_violations(field: &FieldSpec) -> usize {
    let d = field.order();
    let f = field;
    let mut bad = 0;
    for a in 0..d {
        bad += usize::from(f.add_raw(a, 0) != a);
        bad += usize::from(f.mul_raw(a, 1) != a);
        bad += usize::from(f.add_raw(a, f.neg_raw(a)) != 0);
        if a != 0 {
            bad += usize::from(f.inv_raw(a).map(|i| f.mul_raw(a, i)) != Some(1));
        }
        for b in 0..d {
            bad += usize::from(f.add_raw(a, b) != f.add_raw(b, a));
            bad += usize::from(f.mul_raw(a, b) != f.mul_raw(b, a));
            for c in 0..d {
                bad += usize::from(f.add_raw(f.add_raw(a, b), c) != f.add_raw(a, f.add_raw(b, c)));
                bad += usize::from(f.mul_raw(f.mul_raw(a, b), c) != f.mul_raw(a, f.mul_raw(b, c)));
                bad += usize::from(
                    f.mul_raw(a, f.add_raw(b, c)) != f.add_raw(f.mul_raw(a, b), f.mul_raw(a, c)),
                );
            }
        }
    }
    bad
}

/// Worst `|gamma^a gamma^b - gamma^(a+b)|` over all pairs.
pub fn phase_deviation(field: &FieldSpec) -> f64 {
    let d = field.order();
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let lhs = field.phase_raw(a) * field.phase_raw(b);
            worst = worst.max((lhs - field.phase_raw(field.add_raw(a, b))).norm());
        }
    }
    worst
}

/// Number of nonzero `y` in `GF(d)^n` whose parity classes `{x : x.y = l}`
/// are not all of size `d^(n-1)`.
pub fn coset_imbalance(field: &Arc<FieldSpec>, n: usize) -> usize {
    let d = field.order() as usize;
    let total = d.pow(n as u32);
    let strings: Vec<Vec<u32>> = (0..total)
        .map(|i| DitString::from_index(field, n, i).digits().to_vec())
        .collect();
    strings
        .iter()
        .filter(|y| y.iter().any(|&v| v != 0))
        .filter(|y| {
            let mut counts = vec![0usize; d];
            for x in &strings {
                counts[field.dot_raw(x, y) as usize] += 1;
            }
            counts.iter().any(|&c| c != total / d)
        })
        .count()
}

pub fn is_prime(n: u32) -> bool {
    n >= 2
        && (2..)
            .take_while(|k| k * k <= n)
            .all(|k| !n.is_multiple_of(k))
}

/// `(p, r)` with `n = p^r`, if `n` is a prime power.
pub fn prime_power(n: u32) -> Option<(u32, u32)> {
    let p = (2..=n).find(|k| n.is_multiple_of(*k))?;
    let mut m = n;
    let mut r = 0;
    while m.is_multiple_of(p) {
        m /= p;
        r += 1;
    }
    (m == 1).then_some((p, r))
}

fn to_digits(mut a: u32, p: u32, r: u32) -> Vec<u32> {
    (0..r)
        .map(|_| {
            let v = a % p;
            a /= p;
            v
        })
        .collect()
}

fn from_digits(digits: &[u32], p: u32) -> u32 {
    digits.iter().rev().fold(0, |acc, &v| acc * p + v)
}

/// Remainder of `a` modulo the monic polynomial `m` over GF(p).
fn poly_rem(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let deg = m.len() - 1;
    let mut rem = a.to_vec();
    while rem.len() > deg {
        let lead = rem.pop().unwrap();
        if lead != 0 {
            let off = rem.len() - deg;
            for (i, &c) in m[..deg].iter().enumerate() {
                rem[off + i] = (rem[off + i] + p - (lead * c) % p) % p;
            }
        }
    }
    rem.resize(deg, 0);
    rem
}

fn poly_mulmod(a: &[u32], b: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let mut prod = vec![0u32; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x * y) % p;
        }
    }
    poly_rem(&prod, m, p)
}

/// First monic irreducible polynomial of degree `r` over GF(p), in order of
/// the base-p value of its lower coefficients.
fn find_irreducible(p: u32, r: u32) -> Vec<u32> {
    let count = p.pow(r);
    (0..count)
        .map(|lower| {
            let mut poly = to_digits(lower, p, r);
            poly.push(1);
            poly
        })
        .find(|poly| is_irreducible(poly, p))
        .expect("an irreducible polynomial exists for every degree")
}

/// Trial division by every monic polynomial of degree `1..=deg/2`.
fn is_irreducible(poly: &[u32], p: u32) -> bool {
    let deg = poly.len() as u32 - 1;
    for k in 1..=deg / 2 {
        for lower in 0..p.pow(k) {
            let mut divisor = to_digits(lower, p, k);
            divisor.push(1);
            if poly_rem(poly, &divisor, p).iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}
