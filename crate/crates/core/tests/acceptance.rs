//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured quantities before asserting.

mod common;

use std::io::Write as _;
use std::process::Command;

use carpetlab::deviation::{
    exceedance_exact, exceedance_window_for, lambda_prime, ExtendedReal, RateFunction,
};
use carpetlab::experiment::{clt_test, estimate_exceedance_mc, ldp_fit, CLT_TAUS};
use carpetlab::observables::{
    a0_eps, a_profile, coarse_branch, profile_shape, Branch, ProfileShape,
};
use carpetlab::symbolic::{
    covering_count_bruteforce, covering_count_formula, covering_terms_in, scale_indices, Regime,
    Scale,
};
use carpetlab::{BernoulliMeasure, Carpet, Code, Error};
use rand::Rng;

fn report(n: u32, pass: bool, detail: &str) {
    println!(
        "criterion {n}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn config_text(counts: &[u32], n: u32, kind: &str) -> String {
    let digits: Vec<String> = counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| (0..c).map(move |j| format!("[{i}, {j}]")))
        .collect();
    format!(
        "m = {}\nn = {n}\ndigits = [{}]\nmeasure.kind = \"{kind}\"\n",
        counts.len(),
        digits.join(", ")
    )
}

fn summary_value(line: &str, key: &str) -> f64 {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in '{line}'"))
        .parse()
        .unwrap()
}

#[test]
fn criterion_1_dimension_reproduction() {
    let cases: [(&[u32], f64, f64); 4] = [
        (&[3, 2, 2], 1.792, 1.611),
        (&[4, 1, 1], 2.0, 1.5),
        (&[3, 3, 1], 1.792, 1.611),
        (&[3, 2, 2], 1.792, 1.611),
    ];
    let dir = tempfile::tempdir().unwrap();
    let mut worst: f64 = 0.0;
    for (idx, (counts, assouad, boxd)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("c{idx}.toml"));
        std::fs::File::create(&path)
            .unwrap()
            .write_all(config_text(counts, 4, "column_uniform").as_bytes())
            .unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_carpetlab"))
            .arg("--config")
            .arg(&path)
            .arg("dims")
            .output()
            .unwrap();
        assert!(out.status.success());
        let line = String::from_utf8(out.stdout).unwrap();
        worst = worst
            .max((summary_value(&line, "assouad") - assouad).abs())
            .max((summary_value(&line, "box") - boxd).abs());
    }
    let pass = worst <= 1e-3;
    report(
        1,
        pass,
        &format!("max |dims - reported| = {worst:.2e}, tol 1e-3"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_rate_endpoints() {
    let mut worst: f64 = 0.0;
    let mut at_mean_zero = true;
    for (counts, target) in [
        ([3u32, 2, 2], -(1.0f64 / 3.0).ln()),
        ([3, 3, 1], -(2.0f64 / 3.0).ln()),
    ] {
        let mu =
            BernoulliMeasure::column_uniform(&Carpet::from_column_counts(3, 4, &counts).unwrap());
        let rf = RateFunction::new(&mu);
        let near = rf.rate(rf.log_cmax() - 1e-6).finite().unwrap();
        worst = worst.max((near - target).abs());
        at_mean_zero &= rf.rate(rf.mean()) == ExtendedReal::Finite(0.0);
    }
    let pass = worst <= 1e-2 && at_mean_zero;
    report(
        2,
        pass,
        &format!("max endpoint error {worst:.2e} (tol 1e-2), I(c) == 0: {at_mean_zero}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_convexity_and_duality() {
    let mut rng = common::rng(3);
    let mut convex_violation: f64 = 0.0;
    let mut monotone_ok = true;
    let mut duality_err: f64 = 0.0;
    for _ in 0..50 {
        let carpet = common::random_nonuniform_carpet(&mut rng, 2..=5, 7);
        let mu = common::random_measure(&mut rng, &carpet);
        let rf = RateFunction::new(&mu);
        let (lo, hi) = (rf.mean(), rf.log_cmax());
        let grid: Vec<f64> = (1..=200)
            .map(|i| lo + (hi - lo) * i as f64 / 201.0)
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&x| rf.rate(x).finite().unwrap()).collect();
        for w in vals.windows(3) {
            convex_violation = convex_violation.max(w[1] - 0.5 * (w[0] + w[2]));
            monotone_ok &= w[1] >= w[0] && w[2] >= w[1] && w[0] >= 0.0;
        }
        let law = common::column_law(&mu);
        for i in 0..=100 {
            let theta = 0.1 + 19.9 * i as f64 / 100.0;
            let z: f64 = law.iter().map(|&(c, p)| p * (c as f64).powf(theta)).sum();
            let dz: f64 = law
                .iter()
                .map(|&(c, p)| p * (c as f64).powf(theta) * (c as f64).ln())
                .sum();
            let lp = dz / z;
            let expected = theta * lp - z.ln();
            let got = rf.rate(lp).finite().unwrap();
            duality_err = duality_err.max((got - expected).abs());
        }
    }
    let pass = convex_violation <= 1e-8 && monotone_ok && duality_err <= 1e-7;
    report(
        3,
        pass,
        &format!(
            "max midpoint excess {convex_violation:.2e} (slack 1e-8), monotone {monotone_ok}, max duality error {duality_err:.2e} (tol 1e-7)"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_ldp_slope() {
    let mu =
        BernoulliMeasure::column_uniform(&Carpet::from_column_counts(3, 4, &[3, 2, 2]).unwrap());
    let lp = lambda_prime(&mu, 1.75);
    let oracle = common::dense_grid_rate(&mu, lp, 100.0, 1e-4);
    let rf = RateFunction::new(&mu);
    let rate = rf.rate(lp).finite().unwrap();
    let ks: Vec<usize> = (1..=10).map(|i| 100 * i).collect();
    let fit = ldp_fit(&mu, 0.2, 1.75, &ks).unwrap();
    let rel = fit.relative_error();
    let pass = rel <= 0.05 && (rate - oracle).abs() < 1e-6 && (rate - 0.584).abs() < 1e-3;
    report(
        4,
        pass,
        &format!(
            "slope {:.5} vs eps*I = {:.5}, relative error {rel:.4} (tol 0.05); I = {rate:.6}, grid oracle {oracle:.6}",
            fit.slope, fit.predicted
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_dp_matches_enumeration() {
    let mut rng = common::rng(5);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    while cases < 300 {
        let carpet = common::random_nonuniform_carpet(&mut rng, 2..=4, 6);
        let mut distinct: Vec<u32> = carpet
            .column_counts()
            .iter()
            .copied()
            .filter(|&c| c > 0)
            .collect();
        distinct.sort();
        distinct.dedup();
        if distinct.len() > 3 {
            continue;
        }
        let gamma = carpet.gamma();
        let mu = common::random_measure(&mut rng, &carpet);
        let k = rng.random_range(1..=40);
        let eps = rng.random_range(0.02..0.98) * (gamma - 1.0);
        let lo = ((eps * k as f64) - 1e-9).ceil() as usize;
        let hi = (((gamma - 1.0) * k as f64) - 1e-9).ceil() as usize;
        if hi > 8 || lo == 0 || lo > hi {
            continue;
        }
        let window = exceedance_window_for(&mu, k, eps).unwrap();
        assert_eq!((*window.start(), *window.end()), (lo, hi));
        let logs: Vec<f64> = distinct.iter().map(|&c| (c as f64).ln()).collect();
        let mut thresholds = vec![rng.random_range(logs[0] - 0.1..logs[logs.len() - 1] + 0.1)];
        // lattice points: exact averages of window words
        let l = rng.random_range(lo..=hi);
        let a = rng.random_range(0..=l);
        thresholds.push((a as f64 * logs[0] + (l - a) as f64 * logs[logs.len() - 1]) / l as f64);
        for lp in thresholds {
            let dp = exceedance_exact(&mu, k, eps, lp).unwrap();
            let brute = common::enumerate_exceedance(&mu, lo, hi, lp);
            worst = worst.max((dp - brute).abs());
        }
        cases += 1;
    }
    let pass = worst <= 1e-12;
    report(
        5,
        pass,
        &format!("{cases} windows, max |DP - enumeration| = {worst:.2e} (tol 1e-12)"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_clt() {
    let mu =
        BernoulliMeasure::column_uniform(&Carpet::from_column_counts(3, 4, &[3, 2, 2]).unwrap());
    let rep = clt_test(&mu, 2000, 1.2, 100_000, 6, &CLT_TAUS).unwrap();
    let worst = rep
        .rows
        .iter()
        .map(|r| (r.empirical - r.phi).abs())
        .fold(0.0, f64::max);
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("tau={}: {:.4} vs {:.4}", r.tau, r.empirical, r.phi))
        .collect();
    let pass = rep.ks_stat < 0.01 && worst < 0.02;
    report(
        6,
        pass,
        &format!(
            "window {}, KS {:.4} (budget 0.01), mid-atom KS {:.4}, max tau diff {worst:.4} (tol 0.02); {}",
            rep.window,
            rep.ks_stat,
            rep.ks_mid,
            rows.join(", ")
        ),
    );
    assert!(worst < 0.02, "tau table outside tolerance");
    assert!(
        rep.ks_stat < 0.01,
        "KS distance {} over budget",
        rep.ks_stat
    );
}

/// Exact KS distance of the criterion-6 variable, from its binomial law.
/// This is the floor any sample estimate of the KS distance converges to.
#[test]
fn criterion_6_lattice_floor() {
    use statrs::distribution::{Binomial, ContinuousCDF, Discrete, Normal};
    let w = 401u64;
    let (l3, l2) = (3f64.ln(), 2f64.ln());
    let c = (l3 + 2.0 * l2) / 3.0;
    let sigma = (l3 * l3 + 2.0 * l2 * l2) / 3.0 - c * c;
    let threes = Binomial::new(1.0 / 3.0, w).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    // Z decreases in the number of threes, so walk that count downwards
    let mut below = 0.0;
    let mut ks: f64 = 0.0;
    for a in (0..=w).rev() {
        let s = (a as f64 * l3 + (w - a) as f64 * l2) / w as f64;
        let z = (w as f64).sqrt() * (c - s) / sigma.sqrt();
        let phi = normal.cdf(z);
        let at = below + threes.pmf(a);
        ks = ks.max((phi - below).abs()).max((at - phi).abs());
        below = at;
    }
    println!("criterion 6 floor: exact lattice KS distance {ks:.5} for window {w}");
    assert!(ks > 0.01);
}

#[test]
fn criterion_7_covering_lemma() {
    let mut rng = common::rng(7);
    let mut instances = 0;
    let mut exact_mismatch = 0;
    let mut mesh_checked = 0;
    let mut worst_mesh: f64 = 0.0;
    let mut boundary_checked = 0;
    let mut boundary_mismatch = 0;
    while instances < 100 {
        let carpet = common::random_carpet(&mut rng, 2..=3, 5);
        let (m, n) = (carpet.m(), carpet.n());
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| if rng.random_bool(0.5) { m } else { n };
        let (b_big, b_small) = (pick(&mut rng), pick(&mut rng));
        let e_big = rng.random_range(1..=8u32);
        let e_small = rng.random_range(1..=14u32);
        let outer = common::int_indices(&carpet, b_big, e_big);
        let inner = common::int_indices(&carpet, b_small, e_small);
        let (big_r, r) = (Scale::power(b_big, e_big), Scale::power(b_small, e_small));
        let log_ratio = big_r.ln() - r.ln();
        if inner.0 > 12 || log_ratio <= 0.0 {
            continue;
        }
        let code = common::random_code(&mut rng, &carpet, inner.0.max(outer.0));
        if common::cylinder_walk_size(&code, &carpet, outer, inner.0) > 2_000_000 {
            continue;
        }
        let formula = covering_count_formula(&code, &carpet, big_r, r).unwrap();
        let enumerated = common::cylinder_count(&code, &carpet, outer, inner);
        if formula != enumerated {
            exact_mismatch += 1;
        }
        if log_ratio >= 5.0 {
            match covering_count_bruteforce(&code, &carpet, big_r, r) {
                Ok(mesh) => {
                    mesh_checked += 1;
                    let dev = ((mesh as f64).ln() - (formula as f64).ln()).abs() / log_ratio;
                    worst_mesh = worst_mesh.max(dev);
                }
                Err(Error::TooDeep { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
        instances += 1;
    }
    // boundary l2(r) = l1(R): R = m^-a, r = n^-a
    for a in 1..=10u32 {
        let carpet = common::random_carpet(&mut rng, 2..=3, 5);
        let (big_r, r) = (Scale::power(carpet.m(), a), Scale::power(carpet.n(), a));
        let code = common::random_code(&mut rng, &carpet, a as usize);
        assert_eq!(
            scale_indices(&carpet, r).unwrap().l2,
            scale_indices(&carpet, big_r).unwrap().l1
        );
        let below = covering_terms_in(&code, &carpet, big_r, r, Regime::BelowCritical).unwrap();
        let above = covering_terms_in(&code, &carpet, big_r, r, Regime::AboveCritical).unwrap();
        boundary_checked += 1;
        if below.count().unwrap() != above.count().unwrap() {
            boundary_mismatch += 1;
        }
    }
    let pass =
        exact_mismatch == 0 && worst_mesh <= 0.15 && boundary_mismatch == 0 && mesh_checked > 0;
    report(
        7,
        pass,
        &format!(
            "{instances} instances, {exact_mismatch} formula/enumeration mismatches; {mesh_checked} mesh checks, worst |log ratio|/log(R/r) = {worst_mesh:.4} (tol 0.15); {boundary_mismatch}/{boundary_checked} boundary mismatches"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_observable_bounds() {
    let mut rng = common::rng(8);
    let k = 200;
    let mut bound_violations = 0;
    let mut codes = 0;
    let mut attain_err: f64 = 0.0;
    let mut continuity_err: f64 = 0.0;
    let mut shape_errors = 0;
    let mut shapes_seen = [0usize; 3];
    for _ in 0..100 {
        let carpet = common::random_carpet(&mut rng, 2..=4, 7);
        let mu = common::random_measure(&mut rng, &carpet);
        let gamma = carpet.gamma();
        let eps = rng.random_range(0.05..0.95) * (gamma - 1.0);
        let len = (gamma * k as f64).ceil() as usize + 1;
        let (lo_dim, hi_dim) = (carpet.box_dim(), carpet.assouad_dim());
        let sampler = carpetlab::experiment::CodeSampler::new(&mu);
        for t in 0..100 {
            let code = sampler.sample(len, &mut carpetlab::experiment::stream_rng(rng.random(), t));
            let a = a0_eps(&code, &carpet, k, eps).unwrap();
            codes += 1;
            if a < lo_dim - 1e-12 || a > hi_dim + 1e-12 {
                bound_violations += 1;
            }
        }
        // constant code in a fullest column
        let i = (0..carpet.m())
            .find(|&i| carpet.column_count(i) == carpet.c_max())
            .unwrap();
        let d = *carpet.digits().iter().find(|d| d.i == i).unwrap();
        let constant = Code::constant(&carpet, d, len).unwrap();
        attain_err = attain_err.max((a0_eps(&constant, &carpet, k, eps).unwrap() - hi_dim).abs());

        // continuity at the critical scale R = m^-a, r = n^-a
        let a = rng.random_range(2..=30u32);
        let (big_r, r) = (Scale::power(carpet.m(), a), Scale::power(carpet.n(), a));
        let outer = scale_indices(&carpet, big_r).unwrap();
        let code = common::random_code(&mut rng, &carpet, outer.l1);
        if outer.l2 < outer.l1 {
            let fine = a_profile(&code, &carpet, big_r, r).unwrap();
            assert_eq!(fine.branch, Branch::Fine);
            let w = outer.l1 - outer.l2;
            let log_mean = (outer.l2 + 1..=outer.l1)
                .map(|l| (carpet.column_count(code.letter(l).i) as f64).ln())
                .sum::<f64>()
                / w as f64;
            continuity_err =
                continuity_err.max((fine.value - coarse_branch(&carpet, log_mean)).abs());

            // shape: sign rule, and the observed direction along r -> 0
            let prod: u128 = (outer.l2 + 1..=outer.l1)
                .map(|l| carpet.column_count(code.letter(l).i) as u128)
                .product();
            let lhs = prod * (carpet.projected_len() as u128).pow(w as u32);
            let rhs = (carpet.len() as u128).pow(w as u32);
            let expected = match lhs.cmp(&rhs) {
                std::cmp::Ordering::Greater => ProfileShape::Decreasing,
                std::cmp::Ordering::Less => ProfileShape::Increasing,
                std::cmp::Ordering::Equal => ProfileShape::Constant,
            };
            let got = profile_shape(&code, &carpet, big_r).unwrap();
            let values: Vec<f64> = (0..6)
                .map(|s| {
                    a_profile(
                        &code,
                        &carpet,
                        big_r,
                        Scale::power(carpet.n(), a + 1 + 3 * s),
                    )
                    .unwrap()
                    .value
                })
                .collect();
            let observed = if values.windows(2).all(|v| (v[1] - v[0]).abs() < 1e-12) {
                ProfileShape::Constant
            } else if values.windows(2).all(|v| v[1] < v[0]) {
                ProfileShape::Decreasing
            } else if values.windows(2).all(|v| v[1] > v[0]) {
                ProfileShape::Increasing
            } else {
                panic!("non-monotone fine branch {values:?}");
            };
            if got != expected || got != observed {
                shape_errors += 1;
            }
            shapes_seen[got as usize] += 1;
        }
    }
    let pass =
        bound_violations == 0 && attain_err <= 1e-12 && continuity_err <= 1e-9 && shape_errors == 0;
    report(
        8,
        pass,
        &format!(
            "{codes} codes, {bound_violations} bound violations; Assouad attained within {attain_err:.1e}; continuity error {continuity_err:.1e} (tol 1e-9); {shape_errors} shape misclassifications over {} profiles (decreasing/increasing/constant = {:?})",
            shapes_seen.iter().sum::<usize>(),
            shapes_seen
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_monte_carlo_vs_exact() {
    let mut rng = common::rng(9);
    let trials = 10_000;
    let mut agree = 0;
    let mut total = 0;
    let mut worst_z: f64 = 0.0;
    while total < 200 {
        let carpet = common::random_nonuniform_carpet(&mut rng, 2..=3, 5);
        let mu = common::random_measure(&mut rng, &carpet);
        let k = rng.random_range(5..=40);
        let eps = rng.random_range(0.05..0.95) * (carpet.gamma() - 1.0);
        let (b, a) = (carpet.box_dim(), carpet.assouad_dim());
        let lambda = rng.random_range(b - 0.02..a + 0.01);
        let exact = if lambda < b {
            1.0
        } else {
            match exceedance_exact(&mu, k, eps, lambda_prime(&mu, lambda)) {
                Ok(p) => p,
                Err(Error::StateSpaceTooLarge { .. }) => continue,
                Err(e) => panic!("{e}"),
            }
        };
        let est = estimate_exceedance_mc(&mu, k, eps, lambda, trials, rng.random()).unwrap();
        total += 1;
        if est.agrees_with(exact, 4.0) {
            agree += 1;
        }
        let sd = est.stderr_at(exact);
        if sd > 0.0 {
            worst_z = worst_z.max((est.p_hat - exact).abs() / sd);
        }
    }
    let pass = agree * 100 >= 99 * total;
    report(
        9,
        pass,
        &format!("{agree}/{total} configurations within 4 stderr (need 99%), worst z {worst_z:.2}"),
    );
    assert!(pass);
}
