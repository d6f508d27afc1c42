//! Local Assouad observables along codes.
//!
//! * [`a_profile`]: the two-branch covering exponent `A(d, R, r)`.
//! * [`a0_eps`]: its supremum over `r <= R^{1+ε}` at `R = n^-k`, in closed
//!   form as a maximum of window averages of `log C_{i_l}`.
//! * [`a_delta`]: the single-window average used for the CLT.
//! * [`a_local_covering`]: the same supremum evaluated with exact covering
//!   counts instead of the asymptotic formula.

use crate::carpet::Carpet;
use crate::error::{Error, Result};
use crate::symbolic::{ceil_guarded, codes_of_point, covering_terms, scale_indices, Code, Scale};

/// Where an averaging window starts relative to the reference depth `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowStart {
    /// Letters `k+1..=L`, the convention of the large deviation observable.
    AfterReference,
    /// Letters `k..=L`, the convention of the single-scale CLT observable.
    AtReference,
}

impl WindowStart {
    fn first(self, k: usize) -> usize {
        match self {
            WindowStart::AfterReference => k + 1,
            WindowStart::AtReference => k,
        }
    }
}

/// Validated `(ε, k)` pair with `0 < ε < γ - 1` and `k >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableParams {
    pub eps: f64,
    pub k: usize,
}

impl ObservableParams {
    pub fn new(carpet: &Carpet, eps: f64, k: usize) -> Result<Self> {
        check_eps(carpet, eps)?;
        if k == 0 {
            return Err(Error::InvalidArgument(
                "reference depth k must be >= 1".into(),
            ));
        }
        Ok(Self { eps, k })
    }

    pub fn delta(&self) -> f64 {
        1.0 + self.eps
    }

    pub fn reference_scale(&self, carpet: &Carpet) -> Scale {
        Scale::power(carpet.n(), self.k as u32)
    }

    /// Range of `L` in the closed form: `⌈(1+ε)k⌉..=⌈γk⌉`.
    pub fn window_ends(&self, carpet: &Carpet) -> (usize, usize) {
        window_ends(carpet, self.eps, self.k)
    }
}

pub(crate) fn check_eps(carpet: &Carpet, eps: f64) -> Result<()> {
    let upper = carpet.gamma() - 1.0;
    if eps > 0.0 && eps < upper {
        Ok(())
    } else {
        Err(Error::BadEpsilon { eps, upper })
    }
}

pub(crate) fn window_ends(carpet: &Carpet, eps: f64, k: usize) -> (usize, usize) {
    let lo = ceil_guarded((1.0 + eps) * k as f64) as usize;
    let hi = ceil_guarded(carpet.gamma() * k as f64) as usize;
    (lo, hi)
}

/// Which formula produced a profile value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `r` below the critical scale: mixes `C_d(R)` with the box dimension.
    Fine = 1,
    /// `r` between the critical scale and `R`: driven by `C_d(r, R)`.
    Coarse = 2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub value: f64,
    pub branch: Branch,
}

/// Fine-scale branch as a function of `log C_d(R)`, `log R` and `log r`.
pub fn fine_branch(carpet: &Carpet, log_geo_mean: f64, ln_big_r: f64, ln_r: f64) -> f64 {
    let (lm, ln) = ((carpet.m() as f64).ln(), (carpet.n() as f64).ln());
    let local = ((carpet.len() as f64).ln() - log_geo_mean) / lm + log_geo_mean / ln;
    (local * ln_big_r - carpet.box_dim() * ln_r) / (ln_big_r - ln_r)
}

/// Coarse-scale branch as a function of `log C_d(r, R)`.
pub fn coarse_branch(carpet: &Carpet, log_geo_mean: f64) -> f64 {
    carpet.base_dim() + log_geo_mean / (carpet.n() as f64).ln()
}

/// `A(d, R, r)` for `0 < r < R < 1`. The branch is chosen by comparing
/// `l2(r)` with `l1(R)`.
pub fn a_profile(code: &Code, carpet: &Carpet, big_r: Scale, r: Scale) -> Result<ProfilePoint> {
    let outer = scale_indices(carpet, big_r)?;
    let inner = scale_indices(carpet, r)?;
    if r.ln() >= big_r.ln() {
        return Err(Error::BadScales(format!(
            "need r < R, got R={big_r}, r={r}"
        )));
    }
    if inner.l2 >= outer.l1 {
        let log_mean = window_log_mean(code, carpet, outer.l2 + 1, outer.l1)?;
        Ok(ProfilePoint {
            value: fine_branch(carpet, log_mean, big_r.ln(), r.ln()),
            branch: Branch::Fine,
        })
    } else {
        let log_mean = window_log_mean(code, carpet, outer.l2 + 1, inner.l2)?;
        Ok(ProfilePoint {
            value: coarse_branch(carpet, log_mean),
            branch: Branch::Coarse,
        })
    }
}

fn window_log_mean(code: &Code, carpet: &Carpet, s: usize, t: usize) -> Result<f64> {
    if s > t {
        return Err(Error::BadRange(format!("empty averaging window {s}..={t}")));
    }
    code.require(t)?;
    Ok(code.log_column_sum(carpet, s, t) / (t - s + 1) as f64)
}

/// Shape of the fine-scale branch of the profile as `r -> 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileShape {
    /// `C_d(R) > |D|/|πD|`: starts above the box dimension and decreases to it.
    Decreasing,
    /// `C_d(R) < |D|/|πD|`: starts below and increases to it.
    Increasing,
    /// `C_d(R) = |D|/|πD|`: constant at the box dimension.
    Constant,
}

/// Classifies the fine branch by comparing `C_d(R)` with the mean column
/// count, in the log domain with a `1e-9` tie band.
pub fn profile_shape(code: &Code, carpet: &Carpet, big_r: Scale) -> Result<ProfileShape> {
    let idx = scale_indices(carpet, big_r)?;
    let log_mean = window_log_mean(code, carpet, idx.l2 + 1, idx.l1)?;
    Ok(shape_of(carpet, log_mean))
}

pub fn shape_of(carpet: &Carpet, log_geo_mean: f64) -> ProfileShape {
    let diff = log_geo_mean - carpet.mean_column_count().ln();
    if diff.abs() <= 1e-9 {
        ProfileShape::Constant
    } else if diff > 0.0 {
        ProfileShape::Decreasing
    } else {
        ProfileShape::Increasing
    }
}

/// `A_0^ε(d, k)` with the default window start `k+1`.
pub fn a0_eps(code: &Code, carpet: &Carpet, k: usize, eps: f64) -> Result<f64> {
    a0_eps_windowed(code, carpet, k, eps, WindowStart::AfterReference)
}

/// `max{dim_B, log|πD|/log m + max_L avg_{l=start..L} log C_{i_l} / log n}`
/// over `L in ⌈(1+ε)k⌉..=⌈γk⌉`.
pub fn a0_eps_windowed(
    code: &Code,
    carpet: &Carpet,
    k: usize,
    eps: f64,
    start: WindowStart,
) -> Result<f64> {
    let params = ObservableParams::new(carpet, eps, k)?;
    let (lo, hi) = params.window_ends(carpet);
    code.require(hi)?;
    let best = max_window_average(code, carpet, start.first(k), lo, hi);
    Ok(carpet.box_dim().max(coarse_branch(carpet, best)))
}

/// `max_{L in lo..=hi} (1/(L-s+1)) Σ_{l=s}^{L} log C_{i_l}`.
pub(crate) fn max_window_average(
    code: &Code,
    carpet: &Carpet,
    s: usize,
    lo: usize,
    hi: usize,
) -> f64 {
    let mut sum = code.log_column_sum(carpet, s, lo - 1);
    let mut best = f64::NEG_INFINITY;
    for l in lo..=hi {
        sum += (carpet.column_count(code.column(l)) as f64).ln();
        best = best.max(sum / (l - s + 1) as f64);
    }
    best
}

/// `A^δ(d, k)` with the default window start `k`.
pub fn a_delta(code: &Code, carpet: &Carpet, k: usize, delta: f64) -> Result<f64> {
    a_delta_windowed(code, carpet, k, delta, WindowStart::AtReference)
}

pub fn a_delta_windowed(
    code: &Code,
    carpet: &Carpet,
    k: usize,
    delta: f64,
    start: WindowStart,
) -> Result<f64> {
    let upper = carpet.gamma();
    if !(delta > 1.0 && delta < upper) {
        return Err(Error::BadDelta { delta, upper });
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "reference depth k must be >= 1".into(),
        ));
    }
    let end = ceil_guarded(delta * k as f64) as usize;
    let log_mean = window_log_mean(code, carpet, start.first(k), end)?;
    Ok(coarse_branch(carpet, log_mean))
}

/// Default last exponent of the `r = n^-j` grid for [`a_local_covering`].
pub fn default_grid_end(carpet: &Carpet, k: usize) -> usize {
    2 * ceil_guarded(carpet.gamma() * k as f64) as usize
}

/// `sup_j log N_{n^-j}(Π Q(d, n^-k)) / log(n^{j-k})` over
/// `j in ⌈(1+ε)k⌉..=grid_end`, with exact covering counts.
pub fn a_local_covering(
    code: &Code,
    carpet: &Carpet,
    k: usize,
    eps: f64,
    grid_end: usize,
) -> Result<f64> {
    let params = ObservableParams::new(carpet, eps, k)?;
    let (lo, _) = params.window_ends(carpet);
    if grid_end < lo {
        return Err(Error::BadRange(format!(
            "scale grid {lo}..={grid_end} is empty"
        )));
    }
    let big_r = params.reference_scale(carpet);
    let ln_n = (carpet.n() as f64).ln();
    let mut best = f64::NEG_INFINITY;
    for j in lo..=grid_end {
        let terms = covering_terms(code, carpet, big_r, Scale::power(carpet.n(), j as u32))?;
        best = best.max(terms.ln() / ((j - k) as f64 * ln_n));
    }
    Ok(best)
}

/// Point version: the maximum of [`a_local_covering`] over the (at most
/// four) codes of the point.
pub fn a_point_eps(carpet: &Carpet, point: (f64, f64), k: usize, eps: f64) -> Result<f64> {
    let params = ObservableParams::new(carpet, eps, k)?;
    let depth = scale_indices(carpet, params.reference_scale(carpet))?.l1;
    let grid_end = default_grid_end(carpet, k);
    codes_of_point(carpet, point, depth)?
        .iter()
        .map(|code| a_local_covering(code, carpet, k, eps, grid_end))
        .try_fold(f64::NEG_INFINITY, |acc, v| v.map(|v| acc.max(v)))
}
