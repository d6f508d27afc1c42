//! Sampling, Monte Carlo estimators, LDP slope fits, CLT tests and CSV
//! emission.
//!
//! Trial `t` of a run with seed `s` draws from ChaCha8 stream `t` of key
//! `s`, so every estimate is a pure function of `(seed, trials)` whatever
//! the rayon pool size.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::carpet::Carpet;
use crate::deviation::{
    clt_window_len, ldp_rate_extended, ldp_rate_symbolic, normal_cdf, observable_exceedance_exact,
    rate_at_lambda, CsvFloat, ExtendedReal, RateFunction, TailTable,
};
use crate::error::{Error, Result};
use crate::measure::BernoulliMeasure;
use crate::observables::{
    a0_eps, a_delta, a_profile, check_eps, fine_branch, window_ends, Branch, ProfilePoint,
};
use crate::symbolic::{ceil_guarded, scale_indices, Code, Scale};

/// Minimum number of trials accepted by the Monte Carlo estimators.
pub const MIN_TRIALS: usize = 100;

/// Default `τ` grid of [`clt_test`].
pub const CLT_TAUS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

/// Parameters of a reproducible run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub k_list: Vec<usize>,
    pub eps: f64,
    pub delta: f64,
    pub lambda_list: Vec<f64>,
    pub output_path: PathBuf,
}

impl RunConfig {
    pub fn validate(&self, carpet: &Carpet) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "k_list must be strictly ascending".into(),
            ));
        }
        check_eps(carpet, self.eps)?;
        let upper = carpet.gamma();
        if !(self.delta > 1.0 && self.delta < upper) {
            return Err(Error::BadDelta {
                delta: self.delta,
                upper,
            });
        }
        Ok(())
    }
}

/// The generator for trial `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// I.i.d. digit sampler for a Bernoulli measure.
#[derive(Debug, Clone)]
pub struct CodeSampler<'a> {
    measure: &'a BernoulliMeasure,
    index: WeightedIndex<f64>,
}

impl<'a> CodeSampler<'a> {
    pub fn new(measure: &'a BernoulliMeasure) -> Self {
        let index = WeightedIndex::new(measure.weights().iter().copied())
            .expect("measure weights are validated on construction");
        Self { measure, index }
    }

    pub fn sample<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> Code {
        let digits = self.measure.carpet().digits();
        let letters = (0..length)
            .map(|_| digits[self.index.sample(rng)])
            .collect();
        Code::from_letters_unchecked(letters)
    }
}

/// A code of `length` i.i.d. letters with law `p_d`.
pub fn sample_code<R: Rng + ?Sized>(
    mu: &BernoulliMeasure,
    length: usize,
    rng: &mut R,
) -> Result<Code> {
    if length == 0 {
        return Err(Error::InvalidArgument("code length must be >= 1".into()));
    }
    Ok(CodeSampler::new(mu).sample(length, rng))
}

/// A Monte Carlo frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub hits: usize,
    pub trials: usize,
    pub p_hat: f64,
    pub stderr: f64,
}

impl McEstimate {
    pub fn from_counts(hits: usize, trials: usize) -> Self {
        let p_hat = hits as f64 / trials as f64;
        Self {
            hits,
            trials,
            p_hat,
            stderr: (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        }
    }

    /// Binomial standard error at a reference probability instead of `p_hat`.
    pub fn stderr_at(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    /// `|p_hat - p| <= z * stderr_at(p)`; degenerate `p` demands equality.
    pub fn agrees_with(&self, p: f64, z: f64) -> bool {
        (self.p_hat - p).abs() <= z * self.stderr_at(p) + 1e-12
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// Frequency of `A_0^ε(d, k) > λ` over `trials` sampled codes.
pub fn estimate_exceedance_mc(
    mu: &BernoulliMeasure,
    k: usize,
    eps: f64,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_trials(trials)?;
    let carpet = mu.carpet();
    check_eps(carpet, eps)?;
    if k == 0 {
        return Err(Error::InvalidArgument(
            "reference depth k must be >= 1".into(),
        ));
    }
    let (_, length) = window_ends(carpet, eps, k);
    let sampler = CodeSampler::new(mu);
    let hits = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let code = sampler.sample(length, &mut stream_rng(seed, t));
            a0_eps(&code, carpet, k, eps).map(|a| usize::from(a > lambda))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McEstimate::from_counts(hits, trials))
}

/// Least-squares fit of `-log P_k` against `k` with exact probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpFit {
    pub slope: f64,
    pub intercept: f64,
    /// `ε I(λ')`.
    pub predicted: f64,
    pub table: TailTable,
}

impl LdpFit {
    pub fn relative_error(&self) -> f64 {
        (self.slope - self.predicted).abs() / self.predicted
    }
}

pub fn ldp_fit(mu: &BernoulliMeasure, eps: f64, lambda: f64, k_list: &[usize]) -> Result<LdpFit> {
    let rf = RateFunction::new(mu);
    let predicted = ldp_rate_symbolic(&rf, lambda, eps)?;
    if k_list.len() < 2 {
        return Err(Error::InvalidArgument(
            "slope fit needs at least two values of k".into(),
        ));
    }
    let probs: Vec<f64> = k_list
        .par_iter()
        .map(|&k| observable_exceedance_exact(mu, k, eps, lambda))
        .collect::<Result<_>>()?;
    let mut table = TailTable::default();
    for (&k, &p) in k_list.iter().zip(&probs) {
        if p <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "exceedance probability underflows at k={k}"
            )));
        }
        table.push(k, p);
    }
    let xs: Vec<f64> = k_list.iter().map(|&k| k as f64).collect();
    let ys: Vec<f64> = probs.iter().map(|p| -p.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);
    Ok(LdpFit {
        slope,
        intercept,
        predicted,
        table,
    })
}

/// Ordinary least squares `y ≈ slope x + intercept`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CltRow {
    pub tau: f64,
    /// Frequency of `A^δ(d, k) > α - α_k(τ)`.
    pub empirical: f64,
    pub phi: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CltReport {
    pub window: usize,
    pub trials: usize,
    /// Kolmogorov–Smirnov distance between the normalised window average
    /// and the standard normal.
    pub ks_stat: f64,
    /// Largest `|Φ(z) - (F(z-) + F(z))/2|` over the sample atoms `z`; the
    /// lattice-corrected companion of `ks_stat`.
    pub ks_mid: f64,
    pub rows: Vec<CltRow>,
}

/// Samples `A^δ(d, k)`, normalises it to
/// `Z = √w (c - S_w) / √σ` and compares with the standard normal.
/// `Z < τ` is the event `A^δ > α - α_k(τ)`.
pub fn clt_test(
    mu: &BernoulliMeasure,
    k: usize,
    delta: f64,
    trials: usize,
    seed: u64,
    taus: &[f64],
) -> Result<CltReport> {
    let (c, sigma) = mu.fibre_moments();
    if sigma <= 0.0 {
        return Err(Error::DegenerateSigma);
    }
    check_trials(trials)?;
    let carpet = mu.carpet();
    let window = clt_window_len(k, delta)?;
    let length = ceil_guarded(delta * k as f64) as usize;
    let sampler = CodeSampler::new(mu);
    let samples: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let code = sampler.sample(length, &mut stream_rng(seed, t));
            a_delta(&code, carpet, k, delta)
        })
        .collect::<Result<_>>()?;

    let alpha = mu.alpha_mean();
    let ln_n = (carpet.n() as f64).ln();
    let base = carpet.base_dim();
    let scale = (window as f64).sqrt() / sigma.sqrt();
    let mut z: Vec<f64> = samples
        .iter()
        .map(|a| scale * (c - (a - base) * ln_n))
        .collect();
    z.sort_by(f64::total_cmp);
    let (ks_stat, ks_mid) = ks_distances(&z);

    let rows = taus
        .iter()
        .map(|&tau| {
            let threshold = alpha - crate::deviation::clt_normalizer(mu, k, delta, tau)?;
            let hits = samples.iter().filter(|&&a| a > threshold).count();
            let est = McEstimate::from_counts(hits, trials);
            let phi = normal_cdf(tau);
            Ok(CltRow {
                tau,
                empirical: est.p_hat,
                phi,
                stderr: est.stderr_at(phi),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CltReport {
        window,
        trials,
        ks_stat,
        ks_mid,
        rows,
    })
}

/// `(sup |F_N - Φ|, max_atoms |(F_N(z-) + F_N(z))/2 - Φ(z)|)` for a sorted
/// sample. Equal values within `1e-9` are one atom.
pub fn ks_distances(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len() as f64;
    let mut ks = 0.0f64;
    let mut mid = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] - sorted[i] <= 1e-9 {
            j += 1;
        }
        let phi = normal_cdf(sorted[i]);
        let below = i as f64 / n;
        let at = (j + 1) as f64 / n;
        ks = ks.max((phi - below).abs()).max((at - phi).abs());
        mid = mid.max((0.5 * (below + at) - phi).abs());
        i = j + 1;
    }
    (ks, mid)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(path, e))
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// One row of a profile CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub r: Scale,
    pub point: ProfilePoint,
}

/// `A(d, R, r)` along `r_grid`.
pub fn profile_rows(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r_grid: &[Scale],
) -> Result<Vec<ProfileRow>> {
    r_grid
        .iter()
        .map(|&r| a_profile(code, carpet, big_r, r).map(|point| ProfileRow { r, point }))
        .collect()
}

/// Fine-branch profile with `C_d(R)` supplied directly, for reference
/// scales whose averaging window `l2(R)+1..=l1(R)` is empty.
pub fn profile_rows_parametric(
    carpet: &Carpet,
    geo_mean: f64,
    big_r: Scale,
    r_grid: &[Scale],
) -> Result<Vec<ProfileRow>> {
    if !(geo_mean >= 1.0 && geo_mean <= carpet.c_max() as f64) {
        return Err(Error::InvalidArgument(format!(
            "geometric mean {geo_mean} outside [1, {}]",
            carpet.c_max()
        )));
    }
    let outer = scale_indices(carpet, big_r)?;
    r_grid
        .iter()
        .map(|&r| {
            let inner = scale_indices(carpet, r)?;
            if r.ln() >= big_r.ln() || inner.l2 < outer.l1 {
                return Err(Error::BadScales(format!(
                    "r={r} is not a fine scale for R={big_r}"
                )));
            }
            Ok(ProfileRow {
                r,
                point: ProfilePoint {
                    value: fine_branch(carpet, geo_mean.ln(), big_r.ln(), r.ln()),
                    branch: Branch::Fine,
                },
            })
        })
        .collect()
}

pub fn write_profile_csv<W: Write>(rows: &[ProfileRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "r,A,branch")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{}",
            CsvFloat(row.r.value()),
            CsvFloat(row.point.value),
            row.point.branch as u8
        )?;
    }
    Ok(())
}

/// Writes `r,A,branch` rows for `A(d, R, r)` over `r_grid`.
pub fn emit_profile(
    code: &Code,
    carpet: &Carpet,
    big_r: Scale,
    r_grid: &[Scale],
    path: &Path,
) -> Result<Vec<ProfileRow>> {
    let rows = profile_rows(code, carpet, big_r, r_grid)?;
    let mut out = create(path)?;
    write_profile_csv(&rows, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub lambda: f64,
    /// `I(λ')`.
    pub rate: ExtendedReal,
    pub rate_symbolic: ExtendedReal,
    pub rate_geometric: ExtendedReal,
}

pub fn rate_rows(rf: &RateFunction, lambda_grid: &[f64], eps: f64) -> Result<Vec<RateRow>> {
    let mu = rf.measure();
    check_eps(mu.carpet(), eps)?;
    let ln_n = (mu.carpet().n() as f64).ln();
    Ok(lambda_grid
        .iter()
        .map(|&lambda| {
            let symbolic = ldp_rate_extended(rf, lambda, eps);
            RateRow {
                lambda,
                rate: rate_at_lambda(rf, lambda),
                rate_symbolic: symbolic,
                rate_geometric: symbolic.scale(ln_n.recip()),
            }
        })
        .collect())
}

pub fn write_rate_csv<W: Write>(rows: &[RateRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "lambda,I,rate_symbolic,rate_geometric")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            CsvFloat(row.lambda),
            row.rate,
            row.rate_symbolic,
            row.rate_geometric
        )?;
    }
    Ok(())
}

/// Writes `lambda,I,rate_symbolic,rate_geometric` rows; `+∞` is `inf`.
pub fn emit_rate_curve(
    rf: &RateFunction,
    lambda_grid: &[f64],
    eps: f64,
    path: &Path,
) -> Result<Vec<RateRow>> {
    let rows = rate_rows(rf, lambda_grid, eps)?;
    let mut out = create(path)?;
    write_rate_csv(&rows, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))?;
    Ok(rows)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
