//! Bedford–McMullen carpets on the `m x n` grid and their closed-form
//! dimensions.
//!
//! A carpet is the attractor of the maps
//! `T_(i,j)(x, y) = ((x + i) / m, (y + j) / n)` over a chosen digit set.
//! Everything computed here depends only on the column counts `C_i`,
//! `|D|` and the number of occupied columns `|πD|`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of rectangles produced by [`Carpet::render_depth`].
pub const DEFAULT_RENDER_CAP: u128 = 1_000_000;

/// One cell `(i, j)` of the `m x n` grid: column `i`, row `j`, counted from
/// the bottom left. Ordered lexicographically by column, then row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Digit {
    pub i: u32,
    pub j: u32,
}

impl Digit {
    pub const fn new(i: u32, j: u32) -> Self {
        Self { i, j }
    }
}

impl fmt::Display for Digit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

impl From<(u32, u32)> for Digit {
    fn from((i, j): (u32, u32)) -> Self {
        Self { i, j }
    }
}

/// Axis-aligned rectangle `[x, x + width] x [y, y + height]` in the unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Rect {
    pub fn contains(&self, other: &Rect, tol: f64) -> bool {
        other.x >= self.x - tol
            && other.y >= self.y - tol
            && other.x + other.width <= self.x + self.width + tol
            && other.y + other.height <= self.y + self.height + tol
    }

    /// True when the open interiors intersect.
    pub fn overlaps(&self, other: &Rect, tol: f64) -> bool {
        self.x < other.x + other.width - tol
            && other.x < self.x + self.width - tol
            && self.y < other.y + other.height - tol
            && other.y < self.y + self.height - tol
    }
}

/// Integer address of a depth-`k` cylinder: the rectangle
/// `[col / m^k, (col + 1) / m^k] x [row / n^k, (row + 1) / n^k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: u128,
    pub row: u128,
}

/// An `(xm, xn)`-invariant carpet: grid sizes `m < n` and a digit set.
#[derive(Debug, Clone, PartialEq)]
pub struct Carpet {
    m: u32,
    n: u32,
    digits: Vec<Digit>,
    column_counts: Vec<u32>,
}

impl Carpet {
    /// Validates the grid and the digit set. Digits are stored in
    /// lexicographic order.
    pub fn new(m: u32, n: u32, digits: impl IntoIterator<Item = Digit>) -> Result<Self> {
        if m < 2 || n <= m {
            return Err(Error::BadGrid { m, n });
        }
        let mut seen = BTreeSet::new();
        for d in digits {
            if d.i >= m || d.j >= n {
                return Err(Error::BadDigits(format!(
                    "digit {d} outside the {m}x{n} grid"
                )));
            }
            if !seen.insert(d) {
                return Err(Error::BadDigits(format!("duplicate digit {d}")));
            }
        }
        if seen.len() < 2 {
            return Err(Error::BadDigits(format!(
                "need at least 2 digits, got {}",
                seen.len()
            )));
        }
        let digits: Vec<Digit> = seen.into_iter().collect();
        let mut column_counts = vec![0u32; m as usize];
        for d in &digits {
            column_counts[d.i as usize] += 1;
        }
        Ok(Self {
            m,
            n,
            digits,
            column_counts,
        })
    }

    /// Builds a carpet from column counts, filling each column from row 0
    /// upwards. Any placement with the same counts gives the same
    /// dimensions and statistics; only rendering sees the difference.
    pub fn from_column_counts(m: u32, n: u32, counts: &[u32]) -> Result<Self> {
        if counts.len() != m as usize {
            return Err(Error::BadDigits(format!(
                "expected {m} column counts, got {}",
                counts.len()
            )));
        }
        if let Some((i, &c)) = counts.iter().enumerate().find(|(_, &c)| c > n) {
            return Err(Error::BadDigits(format!(
                "column {i} has {c} cells but n = {n}"
            )));
        }
        let digits = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| (0..c).map(move |j| Digit::new(i as u32, j)));
        Self::new(m, n, digits)
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn digits(&self) -> &[Digit] {
        &self.digits
    }

    pub fn len(&self) -> usize {
        self.digits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digits.is_empty()
    }

    pub fn contains(&self, d: Digit) -> bool {
        self.digits.binary_search(&d).is_ok()
    }

    pub fn digit_index(&self, d: Digit) -> Option<usize> {
        self.digits.binary_search(&d).ok()
    }

    /// `C_i` for every column `0..m`, zero for empty columns.
    pub fn column_counts(&self) -> &[u32] {
        &self.column_counts
    }

    pub fn column_count(&self, i: u32) -> u32 {
        self.column_counts.get(i as usize).copied().unwrap_or(0)
    }

    /// The occupied columns `πD`, ascending.
    pub fn occupied_columns(&self) -> Vec<u32> {
        (0..self.m)
            .filter(|&i| self.column_counts[i as usize] > 0)
            .collect()
    }

    /// `|πD|`.
    pub fn projected_len(&self) -> usize {
        self.column_counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn c_max(&self) -> u32 {
        self.column_counts.iter().copied().max().unwrap_or(0)
    }

    /// `log n / log m`, always greater than one.
    pub fn gamma(&self) -> f64 {
        (self.n as f64).ln() / (self.m as f64).ln()
    }

    /// Dimension of the projection onto the first coordinate,
    /// `log|πD| / log m`.
    pub fn base_dim(&self) -> f64 {
        (self.projected_len() as f64).ln() / (self.m as f64).ln()
    }

    pub fn assouad_dim(&self) -> f64 {
        self.base_dim() + (self.c_max() as f64).ln() / (self.n as f64).ln()
    }

    pub fn box_dim(&self) -> f64 {
        self.base_dim() + self.mean_column_count().ln() / (self.n as f64).ln()
    }

    /// `s = log_m Σ_{i ∈ πD} C_i^{log m / log n}`.
    pub fn hausdorff_dim(&self) -> f64 {
        let exponent = 1.0 / self.gamma();
        let sum: f64 = self
            .column_counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| (c as f64).powf(exponent))
            .sum();
        sum.ln() / (self.m as f64).ln()
    }

    /// `|D| / |πD|`, the arithmetic mean of the non-zero column counts.
    pub fn mean_column_count(&self) -> f64 {
        self.len() as f64 / self.projected_len() as f64
    }

    pub fn is_uniform_fibres(&self) -> bool {
        let mut occupied = self.column_counts.iter().filter(|&&c| c > 0);
        let first = occupied.next().copied();
        occupied.all(|&c| Some(c) == first)
    }

    /// Integer addresses of the `|D|^k` depth-`k` cylinders, in
    /// lexicographic word order.
    pub fn depth_cells(&self, k: usize, cap: u128) -> Result<Vec<Cell>> {
        let count = (self.len() as u128)
            .checked_pow(k as u32)
            .filter(|&c| c <= cap)
            .ok_or(Error::TooDeep {
                depth: k,
                count: (self.len() as u128).saturating_pow(k as u32),
                cap,
            })?;
        let mut cells = Vec::with_capacity(count as usize);
        cells.push(Cell { col: 0, row: 0 });
        for _ in 0..k {
            let mut next = Vec::with_capacity(cells.len() * self.len());
            for cell in &cells {
                for d in &self.digits {
                    next.push(Cell {
                        col: cell.col * self.m as u128 + d.i as u128,
                        row: cell.row * self.n as u128 + d.j as u128,
                    });
                }
            }
            cells = next;
        }
        Ok(cells)
    }

    /// The depth-`k` approximation: images of the unit square under all
    /// `k`-fold compositions `T_{d_1} ∘ ... ∘ T_{d_k}`. Depth zero is the
    /// unit square itself.
    pub fn render_depth(&self, k: usize) -> Result<Vec<Rect>> {
        self.render_depth_with_cap(k, DEFAULT_RENDER_CAP)
    }

    pub fn render_depth_with_cap(&self, k: usize, cap: u128) -> Result<Vec<Rect>> {
        let cells = self.depth_cells(k, cap)?;
        let width = (self.m as f64).powi(k as i32).recip();
        let height = (self.n as f64).powi(k as i32).recip();
        Ok(cells
            .into_iter()
            .map(|c| Rect {
                x: c.col as f64 * width,
                y: c.row as f64 * height,
                width,
                height,
            })
            .collect())
    }
}
