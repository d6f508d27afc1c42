//! Rate functions, exact exceedance probabilities and CLT quantities.
//!
//! The large deviation statements reduce to the i.i.d. sequence
//! `log C_{i_l}` with law `{p_i}`: `Λ(θ) = log Σ p_i C_i^θ` is its cumulant
//! generating function and `I = Λ*` its Legendre transform. The event
//! `A_0^ε(d, k) > λ` is `max_L S_L > λ'` over `L in ⌈εk⌉..=⌈(γ-1)k⌉`, where
//! `S_L` is the running average of the first `L` window letters.

use std::fmt;
use std::io::{self, Write};
use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::measure::{cumulant_of, tilted_moments, BernoulliMeasure};
use crate::observables::{check_eps, window_ends};
use crate::symbolic::ceil_guarded;

/// Convergence target for `|Λ'(θ) - λ'|`.
const ROOT_TOLERANCE: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 500;
/// Relative guard on `Σ n_j log C_j > L λ'`; ties do not exceed.
const EXCEED_GUARD: f64 = 1e-12;

/// Default cap on dense DP cells, `(L_max + 1)^(t - 1)`.
pub const DEFAULT_DP_CELLS: u128 = 1 << 24;
/// Default cap on the number of distinct `C_i` values.
pub const DEFAULT_DP_VALUES: usize = 4;

/// Non-negative extended real: a finite value or `+∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn finite(self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(v),
            ExtendedReal::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedReal::Infinite)
    }

    /// Multiplies by a positive constant.
    pub fn scale(self, factor: f64) -> Self {
        match self {
            ExtendedReal::Finite(v) => ExtendedReal::Finite(v * factor),
            ExtendedReal::Infinite => ExtendedReal::Infinite,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => CsvFloat(*v).fmt(f),
            ExtendedReal::Infinite => f.write_str("inf"),
        }
    }
}

/// Shortest round-trip decimal, switching to exponent form for very small
/// or very large magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsvFloat(pub f64);

impl fmt::Display for CsvFloat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.0;
        if v != 0.0 && v.is_finite() && (v.abs() < 1e-4 || v.abs() >= 1e16) {
            write!(f, "{v:e}")
        } else {
            write!(f, "{v}")
        }
    }
}

/// `λ' = (λ - log|πD|/log m) log n`.
pub fn lambda_prime(mu: &BernoulliMeasure, lambda: f64) -> f64 {
    let c = mu.carpet();
    (lambda - c.base_dim()) * (c.n() as f64).ln()
}

/// Inverse of [`lambda_prime`].
pub fn lambda_from_prime(mu: &BernoulliMeasure, lambda_prime: f64) -> f64 {
    let c = mu.carpet();
    c.base_dim() + lambda_prime / (c.n() as f64).ln()
}

/// Distinct values of `log C_i` with merged probabilities, ascending.
fn merged_distribution(mu: &BernoulliMeasure) -> Vec<(f64, f64)> {
    let mut by_count: Vec<(u32, f64)> = Vec::new();
    for (c, p) in mu.column_distribution() {
        match by_count.iter_mut().find(|(cc, _)| *cc == c) {
            Some(slot) => slot.1 += p,
            None => by_count.push((c, p)),
        }
    }
    by_count.sort_by_key(|&(c, _)| c);
    by_count
        .into_iter()
        .map(|(c, p)| ((c as f64).ln(), p))
        .collect()
}

/// The Cramér rate function of `log C_{i_l}` under a measure's column law.
#[derive(Debug, Clone)]
pub struct RateFunction {
    measure: BernoulliMeasure,
    dist: Vec<(f64, f64)>,
    c: f64,
    log_cmax: f64,
    argmax_mass: f64,
}

impl RateFunction {
    pub fn new(measure: &BernoulliMeasure) -> Self {
        let dist = merged_distribution(measure);
        let c = dist.iter().map(|(v, p)| v * p).sum();
        let &(log_cmax, argmax_mass) = dist.last().expect("at least one occupied column");
        Self {
            measure: measure.clone(),
            dist,
            c,
            log_cmax,
            argmax_mass,
        }
    }

    pub fn measure(&self) -> &BernoulliMeasure {
        &self.measure
    }

    /// Mean `c = Σ p_i log C_i`.
    pub fn mean(&self) -> f64 {
        self.c
    }

    pub fn log_cmax(&self) -> f64 {
        self.log_cmax
    }

    pub fn argmax_mass(&self) -> f64 {
        self.argmax_mass
    }

    pub fn cumulant(&self, theta: f64) -> f64 {
        cumulant_of(&self.dist, theta)
    }

    pub fn cumulant_derivative(&self, theta: f64) -> f64 {
        tilted_moments(&self.dist, theta).0
    }

    /// `I(λ')`: zero up to the mean, `+∞` from `log C_max` on, and
    /// `θ*λ' - Λ(θ*)` with `Λ'(θ*) = λ'` in between.
    pub fn rate(&self, lambda_prime: f64) -> ExtendedReal {
        if lambda_prime <= self.c {
            return ExtendedReal::Finite(0.0);
        }
        if lambda_prime >= self.log_cmax {
            return ExtendedReal::Infinite;
        }
        let theta = self.solve_tilt(lambda_prime);
        ExtendedReal::Finite((theta * lambda_prime - self.cumulant(theta)).max(0.0))
    }

    /// The maximiser `θ* >= 0` of `θλ' - Λ(θ)` for `c < λ' < log C_max`.
    /// Bracketed Newton on the increasing map `Λ'`, bisecting whenever a
    /// Newton step leaves the bracket.
    pub fn solve_tilt(&self, lambda_prime: f64) -> f64 {
        let g = |theta: f64| tilted_moments(&self.dist, theta);
        let mut lo = 0.0;
        let mut hi = 1.0;
        // Λ' may reach λ' only in rounding when λ' is within an ulp of log C_max
        while g(hi).0 < lambda_prime && hi < 1e12 {
            lo = hi;
            hi *= 2.0;
        }
        let mut theta = 0.5 * (lo + hi);
        for _ in 0..ROOT_MAX_ITER {
            let (d1, d2) = g(theta);
            let resid = d1 - lambda_prime;
            if resid.abs() < ROOT_TOLERANCE {
                break;
            }
            if resid < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            let newton = theta - resid / d2;
            theta = if d2 > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        theta
    }
}

fn check_lambda(mu: &BernoulliMeasure, lambda: f64) -> Result<()> {
    let c = mu.carpet();
    let lower = mu.alpha_mean().max(c.box_dim());
    let upper = c.assouad_dim();
    if lambda >= lower && lambda < upper {
        Ok(())
    } else {
        Err(Error::LambdaOutOfRange {
            lambda,
            lower,
            upper,
        })
    }
}

/// Decay exponent in `k`: `ε I(λ')`, for `max{α, dim_B} <= λ < dim_A`.
pub fn ldp_rate_symbolic(rf: &RateFunction, lambda: f64, eps: f64) -> Result<f64> {
    let mu = rf.measure();
    check_eps(mu.carpet(), eps)?;
    check_lambda(mu, lambda)?;
    match rf.rate(lambda_prime(mu, lambda)) {
        ExtendedReal::Finite(rate) => Ok(eps * rate),
        // λ within rounding of dim_A
        ExtendedReal::Infinite => Err(Error::LambdaOutOfRange {
            lambda,
            lower: mu.alpha_mean().max(mu.carpet().box_dim()),
            upper: mu.carpet().assouad_dim(),
        }),
    }
}

/// Decay exponent in `-log R`: `ε I(λ') / log n`.
pub fn ldp_rate_geometric(rf: &RateFunction, lambda: f64, eps: f64) -> Result<f64> {
    let n = rf.measure().carpet().n() as f64;
    Ok(ldp_rate_symbolic(rf, lambda, eps)? / n.ln())
}

/// `I(λ')` as a function of `λ`; `+∞` from the Assouad dimension on, which
/// `λ'` alone may miss by an ulp.
pub fn rate_at_lambda(rf: &RateFunction, lambda: f64) -> ExtendedReal {
    let mu = rf.measure();
    if lambda >= mu.carpet().assouad_dim() {
        ExtendedReal::Infinite
    } else {
        rf.rate(lambda_prime(mu, lambda))
    }
}

/// Limit of `-(1/k) log μ(A_0^ε > λ)` for every `λ`: zero below the box
/// dimension (the event is certain), `ε I(λ')` otherwise, `+∞` from the
/// Assouad dimension on.
pub fn ldp_rate_extended(rf: &RateFunction, lambda: f64, eps: f64) -> ExtendedReal {
    let mu = rf.measure();
    if lambda < mu.carpet().box_dim() {
        ExtendedReal::Finite(0.0)
    } else {
        rate_at_lambda(rf, lambda).scale(eps)
    }
}

/// Limits for [`exceedance_window_with`].
#[derive(Debug, Clone, Copy)]
pub struct DpLimits {
    pub max_cells: u128,
    pub max_values: usize,
}

impl Default for DpLimits {
    fn default() -> Self {
        Self {
            max_cells: DEFAULT_DP_CELLS,
            max_values: DEFAULT_DP_VALUES,
        }
    }
}

/// The `S_L` window `⌈εk⌉..=⌈(γ-1)k⌉` matching [`crate::observables::a0_eps`].
pub fn exceedance_window_for(
    mu: &BernoulliMeasure,
    k: usize,
    eps: f64,
) -> Result<RangeInclusive<usize>> {
    check_eps(mu.carpet(), eps)?;
    let (lo, hi) = window_ends(mu.carpet(), eps, k);
    Ok(lo - k..=hi - k)
}

/// `μ(max_{L in ⌈εk⌉..=⌈(γ-1)k⌉} S_L > λ')`, exact up to rounding.
pub fn exceedance_exact(
    mu: &BernoulliMeasure,
    k: usize,
    eps: f64,
    lambda_prime: f64,
) -> Result<f64> {
    exceedance_window(mu, exceedance_window_for(mu, k, eps)?, lambda_prime)
}

/// `μ(A_0^ε(d, k) > λ)`: one below the box dimension, otherwise the
/// window-maximum exceedance at `λ'`.
pub fn observable_exceedance_exact(
    mu: &BernoulliMeasure,
    k: usize,
    eps: f64,
    lambda: f64,
) -> Result<f64> {
    if lambda < mu.carpet().box_dim() {
        check_eps(mu.carpet(), eps)?;
        return Ok(1.0);
    }
    exceedance_exact(mu, k, eps, lambda_prime(mu, lambda))
}

pub fn exceedance_window(
    mu: &BernoulliMeasure,
    window: RangeInclusive<usize>,
    lambda_prime: f64,
) -> Result<f64> {
    exceedance_window_with(mu, window, lambda_prime, DpLimits::default())
}

/// `μ(max_{L in window} S_L > λ')` by absorbing dynamic programming.
///
/// State after `L` letters: occurrence counts of the first `t-1` distinct
/// values of `log C_i` (the last count is implied by `L`). Mass is moved to
/// the absorbed total the first time `L` is in the window and
/// `Σ n_j log C_j > L λ'`. The array is updated in place, visiting count
/// vectors in descending lexicographic order so each predecessor `n - e_j`
/// is read before it is overwritten.
pub fn exceedance_window_with(
    mu: &BernoulliMeasure,
    window: RangeInclusive<usize>,
    lambda_prime: f64,
    limits: DpLimits,
) -> Result<f64> {
    let (first, last) = (*window.start(), *window.end());
    if first == 0 || first > last {
        return Err(Error::WindowEmpty);
    }
    let dist = merged_distribution(mu);
    let min_v = dist.first().map(|d| d.0).unwrap_or(0.0);
    let max_v = dist.last().map(|d| d.0).unwrap_or(0.0);
    if lambda_prime >= max_v {
        return Ok(0.0);
    }
    if lambda_prime < min_v && !exceeds_tie(min_v, lambda_prime, 1) {
        return Ok(1.0);
    }
    if dist.len() > limits.max_values {
        return Err(Error::StateSpaceTooLarge {
            cells: u128::MAX,
            cap: limits.max_values as u128,
        });
    }
    let dims = dist.len() - 1;
    let side = last + 1;
    let cells = (side as u128).checked_pow(dims as u32).unwrap_or(u128::MAX);
    if cells > limits.max_cells {
        return Err(Error::StateSpaceTooLarge {
            cells,
            cap: limits.max_cells,
        });
    }

    let (implicit_v, implicit_p) = dist[dims];
    let explicit: Vec<(f64, f64)> = dist[..dims].to_vec();
    let strides: Vec<usize> = (0..dims).map(|j| side.pow((dims - 1 - j) as u32)).collect();

    let mut mass = vec![0.0f64; cells as usize];
    mass[0] = 1.0;
    let mut absorbed = 0.0;
    let mut counts = vec![0usize; dims];
    for l in 1..=last {
        for_each_desc(dims, l, &mut counts, &mut |n: &[usize]| {
            let idx: usize = n.iter().zip(&strides).map(|(a, s)| a * s).sum();
            let mut v = implicit_p * mass[idx];
            for (j, &(_, p)) in explicit.iter().enumerate() {
                if n[j] > 0 {
                    v += p * mass[idx - strides[j]];
                }
            }
            if l >= first {
                let used: usize = n.iter().sum();
                let total: f64 = n
                    .iter()
                    .zip(&explicit)
                    .map(|(&c, &(val, _))| c as f64 * val)
                    .sum::<f64>()
                    + (l - used) as f64 * implicit_v;
                if exceeds(total, l, lambda_prime) {
                    absorbed += v;
                    v = 0.0;
                }
            }
            mass[idx] = v;
        });
    }
    Ok(absorbed.clamp(0.0, 1.0))
}

fn exceeds(total: f64, l: usize, lambda_prime: f64) -> bool {
    let threshold = l as f64 * lambda_prime;
    total - threshold > EXCEED_GUARD * threshold.abs().max(1.0)
}

fn exceeds_tie(v: f64, lambda_prime: f64, l: usize) -> bool {
    !exceeds(v * l as f64, l, lambda_prime)
}

/// Visits every `n` in `N^dims` with `Σ n <= total` in descending
/// lexicographic order.
fn for_each_desc(dims: usize, total: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
    fn rec(pos: usize, remaining: usize, buf: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if pos == buf.len() {
            f(buf);
            return;
        }
        for v in (0..=remaining).rev() {
            buf[pos] = v;
            rec(pos + 1, remaining - v, buf, f);
        }
    }
    rec(0, total, &mut buf[..dims], f);
}

/// Constant-free envelopes `exp(-⌈εk⌉ I)` and `exp(-⌈εk⌉ I) / (1 - e^{-I})`
/// for `c < λ' < log C_max`.
pub fn sandwich_bounds(
    rf: &RateFunction,
    k: usize,
    eps: f64,
    lambda_prime: f64,
) -> Result<(f64, f64)> {
    check_eps(rf.measure().carpet(), eps)?;
    let rate = match rf.rate(lambda_prime) {
        ExtendedReal::Finite(v) if v > 0.0 => v,
        _ => {
            let mu = rf.measure();
            return Err(Error::LambdaOutOfRange {
                lambda: lambda_from_prime(mu, lambda_prime),
                lower: lambda_from_prime(mu, rf.mean()),
                upper: lambda_from_prime(mu, rf.log_cmax()),
            });
        }
    };
    let first = ceil_guarded(eps * k as f64) as f64;
    let lower = (-first * rate).exp();
    Ok((lower, lower / (1.0 - (-rate).exp())))
}

/// `α_k(τ) = τ √σ / (log n √(⌈δk⌉ - k + 1))`.
pub fn clt_normalizer(mu: &BernoulliMeasure, k: usize, delta: f64, tau: f64) -> Result<f64> {
    let (_, sigma) = mu.fibre_moments();
    if sigma <= 0.0 {
        return Err(Error::DegenerateSigma);
    }
    let width = clt_window_len(k, delta)?;
    Ok(tau * sigma.sqrt() / ((mu.carpet().n() as f64).ln() * (width as f64).sqrt()))
}

/// `⌈δk⌉ - k + 1`.
pub fn clt_window_len(k: usize, delta: f64) -> Result<usize> {
    let end = ceil_guarded(delta * k as f64);
    if end < k as i64 || k == 0 {
        return Err(Error::WindowEmpty);
    }
    Ok(end as usize - k + 1)
}

/// Standard normal CDF, Abramowitz & Stegun 26.2.17 (max error 7.5e-8).
pub fn normal_cdf(x: f64) -> f64 {
    const P: f64 = 0.231_641_9;
    const B: [f64; 5] = [
        0.319_381_530,
        -0.356_563_782,
        1.781_477_937,
        -1.821_255_978,
        1.330_274_429,
    ];
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x.abs();
    let t = 1.0 / (1.0 + P * z);
    let poly = t * (B[0] + t * (B[1] + t * (B[2] + t * (B[3] + t * B[4]))));
    let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = density * poly;
    if x >= 0.0 {
        1.0 - upper
    } else {
        upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailRow {
    pub k: usize,
    pub probability: f64,
    /// `-log(p) / k`.
    pub rate_estimate: f64,
}

/// Exceedance probabilities over a list of reference depths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
}

impl TailTable {
    pub fn push(&mut self, k: usize, probability: f64) {
        self.rows.push(TailRow {
            k,
            probability,
            rate_estimate: -probability.ln() / k as f64,
        });
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "k,probability,rate_estimate")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                row.k,
                CsvFloat(row.probability),
                CsvFloat(row.rate_estimate)
            )?;
        }
        Ok(())
    }
}
