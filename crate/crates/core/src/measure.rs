//! Bernoulli measures on the code space and the statistics of
//! `log C_{i_l}` under their column marginal.

use std::collections::BTreeMap;

use crate::carpet::{Carpet, Digit};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// A Bernoulli measure with strictly positive digit weights `p_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliMeasure {
    carpet: Carpet,
    /// Aligned with `carpet.digits()`.
    weights: Vec<f64>,
    /// Indexed by column `0..m`; zero on empty columns.
    projected: Vec<f64>,
}

impl BernoulliMeasure {
    /// Weights must be keyed by exactly the carpet's digits, be strictly
    /// positive and sum to one within `1e-9`. They are renormalised after
    /// validation.
    pub fn bernoulli(
        carpet: &Carpet,
        weights: impl IntoIterator<Item = (Digit, f64)>,
    ) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (d, w) in weights {
            if !carpet.contains(d) {
                return Err(Error::BadWeights(format!(
                    "{d} is not a digit of the carpet"
                )));
            }
            if table.insert(d, w).is_some() {
                return Err(Error::BadWeights(format!("weight for {d} given twice")));
            }
        }
        if let Some(missing) = carpet.digits().iter().find(|d| !table.contains_key(d)) {
            return Err(Error::BadWeights(format!("no weight for {missing}")));
        }
        let ordered: Vec<f64> = carpet.digits().iter().map(|d| table[d]).collect();
        if let Some((d, w)) = carpet
            .digits()
            .iter()
            .zip(&ordered)
            .find(|(_, &w)| !w.is_finite() || w <= 0.0)
        {
            return Err(Error::BadWeights(format!(
                "weight {w} for {d} is not strictly positive"
            )));
        }
        let total: f64 = ordered.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
        }
        Ok(Self::from_aligned(
            carpet,
            ordered.into_iter().map(|w| w / total).collect(),
        ))
    }

    fn from_aligned(carpet: &Carpet, weights: Vec<f64>) -> Self {
        let mut projected = vec![0.0; carpet.m() as usize];
        for (d, w) in carpet.digits().iter().zip(&weights) {
            projected[d.i as usize] += w;
        }
        Self {
            carpet: carpet.clone(),
            weights,
            projected,
        }
    }

    /// `p_d = 1/|D|`.
    pub fn max_entropy(carpet: &Carpet) -> Self {
        let w = 1.0 / carpet.len() as f64;
        Self::from_aligned(carpet, vec![w; carpet.len()])
    }

    /// McMullen weights `p_d = C_{π(d)}^{log m/log n - 1} / m^s` with `s` the
    /// Hausdorff dimension. They sum to one exactly when `s` is that value.
    pub fn mcmullen(carpet: &Carpet) -> Self {
        let s = carpet.hausdorff_dim();
        let exponent = 1.0 / carpet.gamma() - 1.0;
        let norm = (carpet.m() as f64).powf(s);
        let raw: Vec<f64> = carpet
            .digits()
            .iter()
            .map(|d| (carpet.column_count(d.i) as f64).powf(exponent) / norm)
            .collect();
        let total: f64 = raw.iter().sum();
        debug_assert!((total - 1.0).abs() < 1e-9);
        Self::from_aligned(carpet, raw.into_iter().map(|w| w / total).collect())
    }

    /// Uniform over occupied columns, then uniform within each column:
    /// `p_d = 1 / (|πD| C_{π(d)})`.
    pub fn column_uniform(carpet: &Carpet) -> Self {
        let cols = carpet.projected_len() as f64;
        let weights = carpet
            .digits()
            .iter()
            .map(|d| 1.0 / (cols * carpet.column_count(d.i) as f64))
            .collect();
        Self::from_aligned(carpet, weights)
    }

    pub fn carpet(&self) -> &Carpet {
        &self.carpet
    }

    /// Digit weights aligned with `carpet().digits()`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, d: Digit) -> Option<f64> {
        self.carpet.digit_index(d).map(|k| self.weights[k])
    }

    /// Projected column weights `p_i` for `i in 0..m`.
    pub fn projected(&self) -> &[f64] {
        &self.projected
    }

    /// `(C_i, p_i)` over the occupied columns.
    pub fn column_distribution(&self) -> Vec<(u32, f64)> {
        self.carpet
            .occupied_columns()
            .into_iter()
            .map(|i| (self.carpet.column_count(i), self.projected[i as usize]))
            .collect()
    }

    /// Mass of the columns attaining `C_max`.
    pub fn argmax_mass(&self) -> f64 {
        let cmax = self.carpet.c_max();
        self.column_distribution()
            .iter()
            .filter(|(c, _)| *c == cmax)
            .map(|(_, p)| p)
            .sum()
    }

    /// `α = log|πD|/log m + Σ p_i log C_i / log n`.
    pub fn alpha_mean(&self) -> f64 {
        let (c, _) = self.fibre_moments();
        self.carpet.base_dim() + c / (self.carpet.n() as f64).ln()
    }

    /// Mean `c` and variance `σ` of `log C_i` under `p_i`.
    pub fn fibre_moments(&self) -> (f64, f64) {
        let dist = self.column_distribution();
        let c: f64 = dist.iter().map(|&(ci, p)| p * (ci as f64).ln()).sum();
        let sigma: f64 = dist
            .iter()
            .map(|&(ci, p)| p * ((ci as f64).ln() - c).powi(2))
            .sum();
        (c, sigma)
    }

    /// `Λ(θ) = log Σ p_i C_i^θ`.
    pub fn cumulant(&self, theta: f64) -> f64 {
        cumulant_of(&self.log_fibre_distribution(), theta)
    }

    /// `Λ'(θ)`, the tilted mean of `log C_i`.
    pub fn cumulant_derivative(&self, theta: f64) -> f64 {
        tilted_moments(&self.log_fibre_distribution(), theta).0
    }

    /// `(log C_i, p_i)` over occupied columns.
    pub fn log_fibre_distribution(&self) -> Vec<(f64, f64)> {
        self.column_distribution()
            .into_iter()
            .map(|(c, p)| ((c as f64).ln(), p))
            .collect()
    }
}

/// `log Σ p exp(θ v)` with the largest exponent factored out.
pub(crate) fn cumulant_of(dist: &[(f64, f64)], theta: f64) -> f64 {
    let shift = dist
        .iter()
        .map(|&(v, _)| theta * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = dist
        .iter()
        .map(|&(v, p)| p * (theta * v - shift).exp())
        .sum();
    shift + sum.ln()
}

/// Mean and variance of `v` under the tilted law `p exp(θ v) / Σ ...`,
/// i.e. `Λ'(θ)` and `Λ''(θ)`.
pub(crate) fn tilted_moments(dist: &[(f64, f64)], theta: f64) -> (f64, f64) {
    let shift = dist
        .iter()
        .map(|&(v, _)| theta * v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut m1 = 0.0;
    for &(v, p) in dist {
        let w = p * (theta * v - shift).exp();
        z += w;
        m1 += w * v;
    }
    let mean = m1 / z;
    let var: f64 = dist
        .iter()
        .map(|&(v, p)| p * (theta * v - shift).exp() * (v - mean).powi(2))
        .sum::<f64>()
        / z;
    (mean, var)
}
