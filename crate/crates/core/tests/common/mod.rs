//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's numerics; only its data types are reused.

#![allow(dead_code)]

use std::collections::HashSet;

use carpetlab::{BernoulliMeasure, Carpet, Code, Digit};
use rand::Rng;

/// Column law `(C_i, p_i)` over occupied columns, read off the digit weights.
pub fn column_law(mu: &BernoulliMeasure) -> Vec<(u32, f64)> {
    let c = mu.carpet();
    let mut mass = vec![0.0; c.m() as usize];
    for (d, w) in c.digits().iter().zip(mu.weights()) {
        mass[d.i as usize] += w;
    }
    (0..c.m())
        .filter(|&i| c.column_count(i) > 0)
        .map(|i| (c.column_count(i), mass[i as usize]))
        .collect()
}

/// `P(max_{L in lo..=hi} (1/L) Σ_{l<=L} log C_{i_l} > λ')` by listing every
/// column word of length `hi`.
pub fn enumerate_exceedance(mu: &BernoulliMeasure, lo: usize, hi: usize, lambda_prime: f64) -> f64 {
    let law = column_law(mu);
    let mut total = 0.0;
    let mut word = vec![0usize; hi];
    loop {
        let mut prob = 1.0;
        let mut sum = 0.0;
        let mut hit = false;
        for (l, &w) in word.iter().enumerate() {
            prob *= law[w].1;
            sum += (law[w].0 as f64).ln();
            let len = l + 1;
            if len >= lo
                && sum - len as f64 * lambda_prime
                    > 1e-12 * (len as f64 * lambda_prime).abs().max(1.0)
            {
                hit = true;
            }
        }
        if hit {
            total += prob;
        }
        // odometer
        let mut pos = 0;
        loop {
            if pos == hi {
                return total;
            }
            word[pos] += 1;
            if word[pos] < law.len() {
                break;
            }
            word[pos] = 0;
            pos += 1;
        }
    }
}

/// `log Σ p_i C_i^θ` evaluated directly.
pub fn log_mgf(mu: &BernoulliMeasure, theta: f64) -> f64 {
    column_law(mu)
        .iter()
        .map(|&(c, p)| p * (c as f64).powf(theta))
        .sum::<f64>()
        .ln()
}

/// `max_θ θλ' - Λ(θ)` over a uniform grid of `[0, theta_max]`.
pub fn dense_grid_rate(mu: &BernoulliMeasure, lambda_prime: f64, theta_max: f64, step: f64) -> f64 {
    let steps = (theta_max / step).round() as usize;
    (0..=steps)
        .map(|s| {
            let t = s as f64 * step;
            t * lambda_prime - log_mgf(mu, t)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest `l >= 1` with `grid^l >= base^exp`, in integers.
pub fn int_depth(grid: u32, base: u32, exp: u32) -> usize {
    let target = (base as u128).pow(exp);
    let mut l = 1u32;
    while (grid as u128).pow(l) < target {
        l += 1;
    }
    l as usize
}

/// `(l1, l2)` of the scale `base^-exp`.
pub fn int_indices(carpet: &Carpet, base: u32, exp: u32) -> (usize, usize) {
    (
        int_depth(carpet.m(), base, exp),
        int_depth(carpet.n(), base, exp),
    )
}

/// Number of distinct approximate squares `Q(e, r)` with `e ∈ Q(d, R)`,
/// found by walking every admissible digit word of length `l1(r)` and
/// keying it by its first `l1(r)` columns and first `l2(r)` rows.
pub fn cylinder_count(
    code: &Code,
    carpet: &Carpet,
    outer: (usize, usize),
    inner: (usize, usize),
) -> u128 {
    let (l1_big, l2_big) = outer;
    let (l1, l2) = inner;
    let choices: Vec<Vec<Digit>> = (1..=l1)
        .map(|l| {
            let d = code.letter(l);
            carpet
                .digits()
                .iter()
                .copied()
                .filter(|e| (l > l1_big || e.i == d.i) && (l > l2_big || e.j == d.j))
                .collect()
        })
        .collect();
    let mut seen: HashSet<(Vec<u32>, Vec<u32>)> = HashSet::new();
    let mut word: Vec<Digit> = Vec::with_capacity(l1);
    fn walk(
        pos: usize,
        choices: &[Vec<Digit>],
        word: &mut Vec<Digit>,
        l2: usize,
        seen: &mut HashSet<(Vec<u32>, Vec<u32>)>,
    ) {
        if pos == choices.len() {
            let cols = word.iter().map(|d| d.i).collect();
            let rows = word[..l2].iter().map(|d| d.j).collect();
            seen.insert((cols, rows));
            return;
        }
        for &d in &choices[pos] {
            word.push(d);
            walk(pos + 1, choices, word, l2, seen);
            word.pop();
        }
    }
    walk(0, &choices, &mut word, l2, &mut seen);
    seen.len() as u128
}

/// Number of digit words [`cylinder_count`] would walk.
pub fn cylinder_walk_size(code: &Code, carpet: &Carpet, outer: (usize, usize), l1: usize) -> u128 {
    (1..=l1)
        .map(|l| {
            let d = code.letter(l);
            carpet
                .digits()
                .iter()
                .filter(|e| (l > outer.0 || e.i == d.i) && (l > outer.1 || e.j == d.j))
                .count() as u128
        })
        .product()
}

/// A random carpet on an `m x n` grid with `m` in `m_range`, `n` up to
/// `n_max`, and at least two digits.
pub fn random_carpet<R: Rng>(
    rng: &mut R,
    m_range: std::ops::RangeInclusive<u32>,
    n_max: u32,
) -> Carpet {
    loop {
        let m = rng.random_range(m_range.clone());
        let n = rng.random_range(m + 1..=n_max.max(m + 1));
        let digits: Vec<Digit> = (0..m)
            .flat_map(|i| (0..n).map(move |j| Digit::new(i, j)))
            .filter(|_| rng.random_bool(0.45))
            .collect();
        if let Ok(c) = Carpet::new(m, n, digits) {
            return c;
        }
    }
}

/// A random carpet with at least two distinct column counts.
pub fn random_nonuniform_carpet<R: Rng>(
    rng: &mut R,
    m_range: std::ops::RangeInclusive<u32>,
    n_max: u32,
) -> Carpet {
    loop {
        let c = random_carpet(rng, m_range.clone(), n_max);
        if !c.is_uniform_fibres() {
            return c;
        }
    }
}

/// Digit weights drawn uniformly from `[0.05, 1]` and normalised.
pub fn random_measure<R: Rng>(rng: &mut R, carpet: &Carpet) -> BernoulliMeasure {
    let raw: Vec<f64> = carpet
        .digits()
        .iter()
        .map(|_| rng.random_range(0.05..1.0))
        .collect();
    let total: f64 = raw.iter().sum();
    BernoulliMeasure::bernoulli(
        carpet,
        carpet
            .digits()
            .iter()
            .copied()
            .zip(raw.iter().map(|w| w / total)),
    )
    .expect("normalised positive weights")
}

/// A uniformly random code of the given length.
pub fn random_code<R: Rng>(rng: &mut R, carpet: &Carpet, len: usize) -> Code {
    let letters = (0..len)
        .map(|_| carpet.digits()[rng.random_range(0..carpet.len())])
        .collect();
    Code::new(carpet, letters).expect("letters drawn from the digit set")
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
