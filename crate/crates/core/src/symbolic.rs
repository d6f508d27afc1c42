//! Codes, scale indices, approximate squares and covering counts.
//!
//! Letters of a [`Code`] are indexed from 1 throughout, so `code.letter(l)`
//! is `d_l`. An approximate square `Q(d, r)` fixes the first `l1(r)`
//! column symbols and the first `l2(r)` row symbols of `d`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::carpet::{Carpet, Digit};
use crate::error::{Error, Result};

/// Relative guard used when a float log lands next to an integer.
const LOG_GUARD: f64 = 1e-12;

/// Depth cap for [`covering_count_bruteforce`].
pub const DEFAULT_MESH_DEPTH: usize = 14;
/// Cylinder cap for [`covering_count_bruteforce`].
pub const DEFAULT_MESH_CYLINDERS: u128 = 4_000_000;

/// `ceil(x)`, snapping to the nearest integer when `x` is within a relative
/// `1e-9` of it. Products such as `1.2 * 100` land a hair above an integer
/// in floating point.
pub fn ceil_guarded(x: f64) -> i64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as i64
    } else {
        x.ceil() as i64
    }
}

/// A length scale in `(0, 1)`, either an exact power `base^-exp` or a
/// decimal real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scale {
    Power { base: u32, exp: u32 },
    Real(f64),
}

impl Scale {
    pub fn power(base: u32, exp: u32) -> Self {
        Scale::Power { base, exp }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Scale::Power { base, exp } => (base as f64).powi(-(exp as i32)),
            Scale::Real(r) => r,
        }
    }

    /// `log r`, exact in the sense of `-exp * log(base)` for powers.
    pub fn ln(&self) -> f64 {
        match *self {
            Scale::Power { base, exp } => -(exp as f64) * (base as f64).ln(),
            Scale::Real(r) => r.ln(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Scale::Power { base, exp } if base >= 2 && exp >= 1 => Ok(()),
            Scale::Power { .. } => Err(Error::BadScale(self.value())),
            Scale::Real(r) if r > 0.0 && r < 1.0 => Ok(()),
            Scale::Real(r) => Err(Error::BadScale(r)),
        }
    }

    /// Parses `0.3`, `3^-5`, or `m^-4` / `n^-12` with the symbolic bases
    /// resolved against the given grid.
    pub fn parse(text: &str, m: u32, n: u32) -> Result<Self> {
        let text = text.trim();
        if let Some((base, exp)) = text.split_once("^-") {
            let base = match base.trim() {
                "m" => m,
                "n" => n,
                other => other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad scale base in '{text}'")))?,
            };
            let exp = exp
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad scale exponent in '{text}'")))?;
            let s = Scale::Power { base, exp };
            s.validate()?;
            Ok(s)
        } else {
            let r: f64 = text
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad scale '{text}'")))?;
            let s = Scale::Real(r);
            s.validate()?;
            Ok(s)
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Power { base, exp } => write!(f, "{base}^-{exp}"),
            Scale::Real(r) => write!(f, "{r}"),
        }
    }
}

impl From<f64> for Scale {
    fn from(r: f64) -> Self {
        Scale::Real(r)
    }
}

/// Compares `a^x` with `b^y` exactly.
fn compare_powers(a: u32, x: u32, b: u32, y: u32) -> Ordering {
    let lhs = x as f64 * (a as f64).ln();
    let rhs = y as f64 * (b as f64).ln();
    if (lhs - rhs).abs() > 1e-9 * lhs.abs().max(rhs.abs()).max(1.0) {
        return lhs.partial_cmp(&rhs).unwrap_or(Ordering::Equal);
    }
    BigUint::from(a).pow(x).cmp(&BigUint::from(b).pow(y))
}

/// Smallest `l >= 1` with `base^-l <= r`.
fn scale_depth(grid: u32, r: &Scale) -> usize {
    match *r {
        Scale::Power { base, exp } => {
            let guess =
                ceil_guarded(exp as f64 * (base as f64).ln() / (grid as f64).ln()).max(1) as u32;
            let mut l = guess;
            while compare_powers(grid, l, base, exp) == Ordering::Less {
                l += 1;
            }
            while l > 1 && compare_powers(grid, l - 1, base, exp) != Ordering::Less {
                l -= 1;
            }
            l as usize
        }
        Scale::Real(r) => {
            let x = -r.ln() / (grid as f64).ln();
            let nearest = x.round();
            let l = if (x - nearest).abs() <= LOG_GUARD * x.abs().max(1.0) {
                nearest
            } else {
                x.ceil()
            };
            (l as usize).max(1)
        }
    }
}

/// The depths `l1(r)` (base `m`) and `l2(r)` (base `n`) with
/// `m^-l1 <= r < m^(1-l1)` and `n^-l2 <= r < n^(1-l2)`. Since `n > m`,
/// `l1 >= l2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleIndices {
    pub l1: usize,
    pub l2: usize,
    pub r: Scale,
}

pub fn scale_indices(carpet: &Carpet, r: Scale) -> Result<ScaleIndices> {
    r.validate()?;
    Ok(ScaleIndices {
        l1: scale_depth(carpet.m(), &r),
        l2: scale_depth(carpet.n(), &r),
        r,
    })
}

/// A finite word over the digit set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Code {
    letters: Vec<Digit>,
}

impl Code {
    pub fn new(carpet: &Carpet, letters: Vec<Digit>) -> Result<Self> {
        if let Some(bad) = letters.iter().find(|d| !carpet.contains(**d)) {
            return Err(Error::InvalidArgument(format!(
                "{bad} is not a digit of the carpet"
            )));
        }
        Ok(Self { letters })
    }

    pub fn constant(carpet: &Carpet, d: Digit, len: usize) -> Result<Self> {
        Self::new(carpet, vec![d; len])
    }

    /// Skips validation; callers guarantee every letter is a digit.
    pub(crate) fn from_letters_unchecked(letters: Vec<Digit>) -> Self {
        Self { letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Digit] {
        &self.letters
    }

    /// `d_l`, 1-indexed.
    pub fn letter(&self, l: usize) -> Digit {
        self.letters[l - 1]
    }

    pub fn column(&self, l: usize) -> u32 {
        self.letters[l - 1].i
    }

    pub fn require(&self, need: usize) -> Result<()> {
        if self.len() < need {
            Err(Error::CodeTooShort {
                have: self.len(),
                need,
            })
        } else {
            Ok(())
        }
    }

    /// `Σ_{l=s}^{t} log C_{i_l}`; zero for an empty range.
    pub fn log_column_sum(&self, carpet: &Carpet, s: usize, t: usize) -> f64 {
        if t < s {
            return 0.0;
        }
        self.letters[s - 1..t]
            .iter()
            .map(|d| (carpet.column_count(d.i) as f64).ln())
            .sum()
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .letters
            .iter()
            .map(|d| format!("{},{}", d.i, d.j))
            .collect();
        write!(f, "{}", parts.join(";"))
    }
}

impl FromStr for Code {
    type Err = Error;

    /// `i,j;i,j;...` without carpet validation; see [`Code::new`].
    fn from_str(s: &str) -> Result<Self> {
        let mut letters = Vec::new();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (i, j) = part
                .split_once(',')
                .ok_or_else(|| Error::InvalidArgument(format!("bad letter '{part}'")))?;
            let parse = |t: &str| {
                t.trim()
                    .parse::<u32>()
                    .map_err(|_| Error::InvalidArgument(format!("bad letter '{part}'")))
            };
            letters.push(Digit::new(parse(i)?, parse(j)?));
        }
        Ok(Self { letters })
    }
}

/// The approximate square `Q(d, R)`: words agreeing with `code` in the
/// first `l1` column symbols and the first `l2` row symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxSquare {
    pub code: Code,
    pub l1: usize,
    pub l2: usize,
}

impl ApproxSquare {
    pub fn new(carpet: &Carpet, code: &Code, scale: Scale) -> Result<Self> {
        let idx = scale_indices(carpet, scale)?;
        code.require(idx.l1)?;
        Ok(Self {
            code: Code::from_letters_unchecked(code.letters[..idx.l1].to_vec()),
            l1: idx.l1,
            l2: idx.l2,
        })
    }

    /// Membership of a (long enough) word.
    pub fn contains(&self, word: &Code) -> bool {
        word.len() >= self.l1
            && (1..=self.l1).all(|l| word.column(l) == self.code.column(l))
            && (1..=self.l2).all(|l| word.letter(l).j == self.code.letter(l).j)
    }
}

/// `P^i_d(s, t)`: the fraction of `l in s..=t` with `i_l = i`.
pub fn proportion(code: &Code, i: u32, s: usize, t: usize) -> Result<f64> {
    if s < 1 || s > t {
        return Err(Error::BadRange(format!(
            "need 1 <= s <= t, got s={s}, t={t}"
        )));
    }
    code.require(t)?;
    let hits = (s..=t).filter(|&l| code.column(l) == i).count();
    Ok(hits as f64 / (t - s + 1) as f64)
}

fn geometric_mean(code: &Code, carpet: &Carpet, s: usize, t: usize) -> Result<f64> {
    if s > t {
        return Err(Error::BadRange(format!("empty index range {s}..={t}")));
    }
    code.require(t)?;
    Ok((code.log_column_sum(carpet, s, t) / (t - s + 1) as f64).exp())
}

/// `C_d(R)`: geometric mean of `C_{i_l}` over `l2(R)+1..=l1(R)`.
pub fn geo_mean_r(code: &Code, carpet: &Carpet, big_r: Scale) -> Result<f64> {
    let idx = scale_indices(carpet, big_r)?;
    geometric_mean(code, carpet, idx.l2 + 1, idx.l1)
}

/// `C_d(r, R)`: geometric mean of `C_{i_l}` over `l2(R)+1..=l2(r)`.
pub fn geo_mean_rr(code: &Code, carpet: &Carpet, r: Scale, big_r: Scale) -> Result<f64> {
    let outer = scale_indices(carpet, big_r)?;
    let inner = scale_indices(carpet, r)?;
    if inner.l2 < outer.l2 + 1 {
        return Err(Error::BadRange(format!(
            "l2(r) = {} must exceed l2(R) = {}",
            inner.l2, outer.l2
        )));
    }
    geometric_mean(code, carpet, outer.l2 + 1, inner.l2)
}

/// Which of the two covering regimes applies: `l2(r) >= l1(R)` or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Strips are refined with all `|D|` digits before columns resolve.
    BelowCritical,
    /// Strips reach height `r` before the base shrinks below `R`.
    AboveCritical,
}

/// Factorised covering count
/// `Π C_{i_l} · |D|^digit_exp · |πD|^column_exp`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringTerms {
    pub regime: Regime,
    /// The `C_{i_l}` factors, in letter order.
    pub column_factors: Vec<u32>,
    pub digit_exp: usize,
    pub column_exp: usize,
    pub digits: usize,
    pub columns: usize,
}

impl CoveringTerms {
    pub fn count(&self) -> Result<u128> {
        let mut total: u128 = 1;
        let factors = self
            .column_factors
            .iter()
            .map(|&c| c as u128)
            .chain(std::iter::repeat_n(self.digits as u128, self.digit_exp))
            .chain(std::iter::repeat_n(self.columns as u128, self.column_exp));
        for f in factors {
            total = total
                .checked_mul(f)
                .ok_or(Error::Overflow("covering count"))?;
        }
        Ok(total)
    }

    pub fn ln(&self) -> f64 {
        self.column_factors
            .iter()
            .map(|&c| (c as f64).ln())
            .sum::<f64>()
            + self.digit_exp as f64 * (self.digits as f64).ln()
            + self.column_exp as f64 * (self.columns as f64).ln()
    }
}

fn check_scales(big_r: &Scale, r: &Scale) -> Result<()> {
    big_r.validate()?;
    r.validate()?;
    let strictly_smaller = match (*r, *big_r) {
        (Scale::Power { base: b1, exp: e1 }, Scale::Power { base: b2, exp: e2 }) => {
            compare_powers(b1, e1, b2, e2) == Ordering::Greater
        }
        _ => r.ln() < big_r.ln(),
    };
    if strictly_smaller {
        Ok(())
    } else {
        Err(Error::BadScales(format!(
            "need 0 < r < R < 1, got R={big_r}, r={r}"
        )))
    }
}

/// The exact product from the covering argument for `N_r(Π Q(d, R))`.
/// Only the first `l1(R)` letters of the code are read.
pub fn covering_terms(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r: Scale,
) -> Result<CoveringTerms> {
    let regime = if scale_indices(carpet, r)?.l2 >= scale_indices(carpet, big_r)?.l1 {
        Regime::BelowCritical
    } else {
        Regime::AboveCritical
    };
    covering_terms_in(code, carpet, big_r, r, regime)
}

/// One regime's product, evaluated wherever its index ranges make sense:
/// `l2(r) >= l1(R)` for [`Regime::BelowCritical`], `l2(r) <= l1(R)` for
/// [`Regime::AboveCritical`]. Both apply at `l2(r) = l1(R)`.
pub fn covering_terms_in(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r: Scale,
    regime: Regime,
) -> Result<CoveringTerms> {
    check_scales(&big_r, &r)?;
    let outer = scale_indices(carpet, big_r)?;
    let inner = scale_indices(carpet, r)?;
    code.require(outer.l1)?;
    let factors = |s: usize, t: usize| -> Vec<u32> {
        (s..=t)
            .map(|l| carpet.column_count(code.column(l)))
            .collect()
    };
    let digits = carpet.len();
    let columns = carpet.projected_len();
    match regime {
        Regime::BelowCritical if inner.l2 >= outer.l1 => Ok(CoveringTerms {
            regime,
            column_factors: factors(outer.l2 + 1, outer.l1),
            digit_exp: inner.l2 - outer.l1,
            column_exp: inner.l1 - inner.l2,
            digits,
            columns,
        }),
        Regime::AboveCritical if inner.l2 <= outer.l1 => Ok(CoveringTerms {
            regime,
            column_factors: factors(outer.l2 + 1, inner.l2),
            digit_exp: 0,
            column_exp: inner.l1 - outer.l1,
            digits,
            columns,
        }),
        _ => Err(Error::BadRange(format!(
            "{regime:?} needs l2(r) {} l1(R), got l2(r)={}, l1(R)={}",
            if regime == Regime::BelowCritical {
                ">="
            } else {
                "<="
            },
            inner.l2,
            outer.l1
        ))),
    }
}

pub fn covering_count_formula(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r: Scale,
) -> Result<u128> {
    covering_terms(code, carpet, big_r, r)?.count()
}

/// `log` of [`covering_count_formula`], valid when the count overflows.
pub fn log_covering_count_formula(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r: Scale,
) -> Result<f64> {
    Ok(covering_terms(code, carpet, big_r, r)?.ln())
}

/// Caps for the mesh-count oracle.
#[derive(Debug, Clone, Copy)]
pub struct MeshLimits {
    pub max_depth: usize,
    pub max_cylinders: u128,
}

impl Default for MeshLimits {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MESH_DEPTH,
            max_cylinders: DEFAULT_MESH_CYLINDERS,
        }
    }
}

pub fn covering_count_bruteforce(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r: Scale,
) -> Result<u128> {
    covering_count_bruteforce_with(code, carpet, big_r, r, MeshLimits::default())
}

/// Number of cells of the `r`-mesh anchored at the origin whose interior
/// meets the interior of some depth-`l1(r)` cylinder inside `Q(d, R)`.
pub fn covering_count_bruteforce_with(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r: Scale,
    limits: MeshLimits,
) -> Result<u128> {
    check_scales(&big_r, &r)?;
    let outer = scale_indices(carpet, big_r)?;
    let inner = scale_indices(carpet, r)?;
    code.require(outer.l1)?;
    let depth = inner.l1;
    let too_deep = |count: u128| Error::TooDeep {
        depth,
        count,
        cap: limits.max_cylinders,
    };
    if depth > limits.max_depth {
        return Err(too_deep(0));
    }
    let (m, n) = (carpet.m() as u128, carpet.n() as u128);
    let width_den = m
        .checked_pow(depth as u32)
        .ok_or(Error::Overflow("m^depth"))?;
    let height_den = n
        .checked_pow(depth as u32)
        .ok_or(Error::Overflow("n^depth"))?;

    // Per-level choices: fixed digit, fixed column, or free.
    let choices: Vec<Vec<Digit>> = (1..=depth)
        .map(|l| {
            if l <= outer.l2 {
                vec![code.letter(l)]
            } else if l <= outer.l1 {
                let col = code.column(l);
                carpet
                    .digits()
                    .iter()
                    .copied()
                    .filter(|d| d.i == col)
                    .collect()
            } else {
                carpet.digits().to_vec()
            }
        })
        .collect();
    let total = choices
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    if total > limits.max_cylinders {
        return Err(too_deep(total));
    }

    let mut cells: Vec<(u128, u128)> = vec![(0, 0)];
    for level in &choices {
        let mut next = Vec::with_capacity(cells.len() * level.len());
        for &(col, row) in &cells {
            for d in level {
                next.push((col * m + d.i as u128, row * n + d.j as u128));
            }
        }
        cells = next;
    }

    let mesh = MeshAxis::new(r)?;
    let mut hits: Vec<(u128, u128)> = Vec::with_capacity(cells.len() * 2);
    for (col, row) in cells {
        let (a0, a1) = mesh.span(col, width_den)?;
        let (b0, b1) = mesh.span(row, height_den)?;
        for a in a0..=a1 {
            for b in b0..=b1 {
                hits.push((a, b));
            }
        }
    }
    hits.sort_unstable();
    hits.dedup();
    Ok(hits.len() as u128)
}

/// Maps an interval `[k/den, (k+1)/den)` to the mesh cells it meets.
enum MeshAxis {
    /// Mesh side `1/inv` with `inv = base^exp`.
    Exact {
        inv: u128,
    },
    Real(f64),
}

impl MeshAxis {
    fn new(r: Scale) -> Result<Self> {
        Ok(match r {
            Scale::Power { base, exp } => MeshAxis::Exact {
                inv: (base as u128)
                    .checked_pow(exp)
                    .ok_or(Error::Overflow("mesh side"))?,
            },
            Scale::Real(v) => MeshAxis::Real(v),
        })
    }

    fn span(&self, k: u128, den: u128) -> Result<(u128, u128)> {
        match *self {
            MeshAxis::Exact { inv } => {
                let lo_num = k
                    .checked_mul(inv)
                    .ok_or(Error::Overflow("mesh coordinate"))?;
                let hi_num = (k + 1)
                    .checked_mul(inv)
                    .ok_or(Error::Overflow("mesh coordinate"))?;
                let lo = lo_num / den;
                let hi = hi_num.div_ceil(den) - 1;
                Ok((lo, hi.max(lo)))
            }
            MeshAxis::Real(side) => {
                let x0 = k as f64 / den as f64;
                let x1 = (k + 1) as f64 / den as f64;
                let lo = (x0 / side).floor() as u128;
                let hi = ((x1 / side).ceil() as u128).saturating_sub(1);
                Ok((lo, hi.max(lo)))
            }
        }
    }
}

fn to_rational(v: f64) -> Result<BigRational> {
    BigRational::from_float(v)
        .ok_or_else(|| Error::InvalidArgument(format!("non-finite coordinate {v}")))
}

/// Every length-`k` word whose closed cylinder contains the point, in
/// lexicographic order. Coordinates are converted to exact rationals, so
/// boundary points are detected exactly.
pub fn codes_of_point(carpet: &Carpet, point: (f64, f64), k: usize) -> Result<Vec<Code>> {
    let (x, y) = (to_rational(point.0)?, to_rational(point.1)?);
    let zero = BigRational::zero();
    let one = BigRational::one();
    if x < zero || x > one || y < zero || y > one {
        return Err(Error::InvalidArgument(format!(
            "point ({}, {}) outside the unit square",
            point.0, point.1
        )));
    }
    let m = BigRational::from_integer(BigInt::from(carpet.m()));
    let n = BigRational::from_integer(BigInt::from(carpet.n()));
    let mut states: Vec<(Vec<Digit>, BigRational, BigRational)> = vec![(Vec::new(), x, y)];
    for depth in 1..=k {
        let mut next = Vec::new();
        for (word, x, y) in &states {
            let sx = x * &m;
            let sy = y * &n;
            for &d in carpet.digits() {
                let i = BigRational::from_integer(BigInt::from(d.i));
                let j = BigRational::from_integer(BigInt::from(d.j));
                let rx = &sx - &i;
                let ry = &sy - &j;
                if rx >= zero && rx <= one && ry >= zero && ry <= one {
                    let mut w = word.clone();
                    w.push(d);
                    next.push((w, rx, ry));
                }
            }
        }
        if next.is_empty() {
            return Err(Error::NotInSet { depth });
        }
        // Closed depth-k cylinders form a grid, so at most four meet a point.
        assert!(
            next.len() <= 4,
            "{} cylinders contain one point",
            next.len()
        );
        states = next;
    }
    Ok(states
        .into_iter()
        .map(|(w, _, _)| Code::from_letters_unchecked(w))
        .collect())
}

/// The lexicographically minimal length-`k` code of the point.
pub fn code_of_point(carpet: &Carpet, point: (f64, f64), k: usize) -> Result<Code> {
    let codes = codes_of_point(carpet, point, k)?;
    Ok(codes.into_iter().next().expect("non-empty by construction"))
}

/// `Π(d)` truncated to the cylinder's lower-left corner.
pub fn cylinder_corner(carpet: &Carpet, code: &Code) -> (f64, f64) {
    let (mut x, mut y) = (0.0, 0.0);
    let (mut sx, mut sy) = (1.0, 1.0);
    for d in code.letters() {
        sx /= carpet.m() as f64;
        sy /= carpet.n() as f64;
        x += d.i as f64 * sx;
        y += d.j as f64 * sy;
    }
    (x, y)
}
