use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use carpetlab::config::{CarpetConfig, CodeSpec};
use carpetlab::deviation::{ldp_rate_symbolic, RateFunction, TailTable};
use carpetlab::experiment::{
    clt_test, estimate_exceedance_mc, ldp_fit, least_squares, linspace, profile_rows,
    profile_rows_parametric, rate_rows, write_profile_csv, write_rate_csv, CLT_TAUS,
};
use carpetlab::symbolic::{covering_count_bruteforce, covering_terms, scale_indices, Scale};
use carpetlab::Error;

#[derive(Parser, Debug)]
#[command(
    name = "carpetlab",
    version,
    about = "Dimensions, local Assouad observables and deviation experiments for self-affine carpets"
)]
struct Cli {
    /// Carpet configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for Monte Carlo runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form dimensions and measure statistics.
    Dims,
    /// Rate function curve over a lambda grid.
    Rate {
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        /// Comma separated lambdas; defaults to an even grid over [box, assouad].
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// A(d, R, r) over a grid of fine scales.
    Profile {
        #[arg(long)]
        code: Option<String>,
        /// Geometric mean C_d(R) used instead of a code.
        #[arg(long)]
        geo_mean: Option<f64>,
        #[arg(long = "big-r")]
        big_r: String,
        /// Comma separated scales, or `base^-a..b` for exponents a..=b.
        #[arg(long)]
        r: String,
    },
    /// Exceedance probabilities of A_0^eps and their decay slope.
    Ldp {
        #[arg(long, default_value_t = 0.2)]
        eps: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300, 400, 500, 600, 700, 800, 900, 1000])]
        k: Vec<usize>,
        /// Monte Carlo trials; exact dynamic programming when omitted.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Distribution of the normalised single-window observable.
    Clt {
        #[arg(long, default_value_t = 1.2)]
        delta: f64,
        #[arg(long, default_value_t = 2000)]
        k: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Covering count formula against the mesh-count oracle.
    CoverCheck {
        #[arg(long)]
        code: String,
        #[arg(long = "big-r")]
        big_r: String,
        #[arg(long)]
        r: String,
    },
    /// Rectangles of the depth-k approximation.
    Render {
        #[arg(long)]
        k: usize,
    },
}

enum Failure {
    Config(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BadGrid { .. } | Error::BadDigits(_) | Error::BadWeights(_) => 2,
        Error::Io { .. } | Error::Overflow(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let cfg = CarpetConfig::load(path).map_err(|e| Failure::Config(e.0))?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Dims => cmd_dims(&cfg, out),
        Command::Rate {
            eps,
            lambda,
            points,
        } => cmd_rate(&cfg, *eps, lambda, *points, out),
        Command::Profile {
            code,
            geo_mean,
            big_r,
            r,
        } => cmd_profile(&cfg, code.as_deref(), *geo_mean, big_r, r, out),
        Command::Ldp {
            eps,
            lambda,
            k,
            trials,
        } => cmd_ldp(&cfg, *eps, *lambda, k, *trials, cli.seed, out),
        Command::Clt { delta, k, trials } => cmd_clt(&cfg, *delta, *k, *trials, cli.seed, out),
        Command::CoverCheck { code, big_r, r } => cmd_cover_check(&cfg, code, big_r, r, out),
        Command::Render { k } => cmd_render(&cfg, *k, out),
    }
    .map_err(Failure::Lib)
}

/// Runs `write` against `--out` when given.
fn emit(
    out: Option<&Path>,
    write: impl FnOnce(&mut dyn Write) -> io::Result<()>,
) -> carpetlab::Result<()> {
    let Some(path) = out else { return Ok(()) };
    let io_err = |e: io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err)
}

fn cmd_dims(cfg: &CarpetConfig, out: Option<&Path>) -> carpetlab::Result<()> {
    let (c, mu) = (&cfg.carpet, &cfg.measure);
    let rows = [
        ("assouad", c.assouad_dim()),
        ("box", c.box_dim()),
        ("hausdorff", c.hausdorff_dim()),
        ("gamma", c.gamma()),
        ("alpha", mu.alpha_mean()),
        ("argmax_mass", mu.argmax_mass()),
    ];
    let summary: Vec<String> = rows.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
    println!(
        "{} uniform_fibres={}",
        summary.join(" "),
        c.is_uniform_fibres()
    );
    emit(out, |w| {
        writeln!(w, "quantity,value")?;
        for (k, v) in rows {
            writeln!(w, "{k},{v}")?;
        }
        writeln!(w, "uniform_fibres,{}", c.is_uniform_fibres())
    })
}

fn cmd_rate(
    cfg: &CarpetConfig,
    eps: f64,
    lambda: &[f64],
    points: usize,
    out: Option<&Path>,
) -> carpetlab::Result<()> {
    let rf = RateFunction::new(&cfg.measure);
    let c = &cfg.carpet;
    let grid = if lambda.is_empty() {
        linspace(c.box_dim(), c.assouad_dim(), points)
    } else {
        lambda.to_vec()
    };
    let rows = rate_rows(&rf, &grid, eps)?;
    let top = rf.rate(rf.log_cmax() - 1e-6);
    println!(
        "points={} c={:.6} log_cmax={:.6} rate_near_top={} limit={:.6}",
        rows.len(),
        rf.mean(),
        rf.log_cmax(),
        top,
        -rf.argmax_mass().ln()
    );
    emit(out, |w| write_rate_csv(&rows, w))
}

fn parse_scale_grid(spec: &str, m: u32, n: u32) -> carpetlab::Result<Vec<Scale>> {
    if let Some((first, last)) = spec.split_once("..") {
        let start = Scale::parse(first, m, n)?;
        let Scale::Power { base, exp } = start else {
            return Err(Error::InvalidArgument(format!(
                "range '{spec}' needs a power scale on the left"
            )));
        };
        let end: u32 = last
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad range end in '{spec}'")))?;
        if end < exp {
            return Err(Error::InvalidArgument(format!("empty range '{spec}'")));
        }
        return Ok((exp..=end).map(|e| Scale::power(base, e)).collect());
    }
    spec.split(',').map(|s| Scale::parse(s, m, n)).collect()
}

fn cmd_profile(
    cfg: &CarpetConfig,
    code: Option<&str>,
    geo_mean: Option<f64>,
    big_r: &str,
    r: &str,
    out: Option<&Path>,
) -> carpetlab::Result<()> {
    let c = &cfg.carpet;
    let big_r = Scale::parse(big_r, c.m(), c.n())?;
    let grid = parse_scale_grid(r, c.m(), c.n())?;
    let rows = match (code, geo_mean) {
        (Some(spec), None) => {
            let length = scale_indices(c, big_r)?.l1;
            let code = spec.parse::<CodeSpec>()?.realize(&cfg.measure, length)?;
            profile_rows(&code, c, big_r, &grid)?
        }
        (None, Some(g)) => profile_rows_parametric(c, g, big_r, &grid)?,
        _ => {
            return Err(Error::InvalidArgument(
                "profile needs exactly one of --code or --geo-mean".into(),
            ))
        }
    };
    let first = rows.first().map(|r| r.point.value).unwrap_or(f64::NAN);
    let last = rows.last().map(|r| r.point.value).unwrap_or(f64::NAN);
    println!(
        "points={} first={first:.6} last={last:.6} box={:.6}",
        rows.len(),
        c.box_dim()
    );
    emit(out, |w| write_profile_csv(&rows, w))
}

fn cmd_ldp(
    cfg: &CarpetConfig,
    eps: f64,
    lambda: f64,
    k_list: &[usize],
    trials: Option<usize>,
    seed: u64,
    out: Option<&Path>,
) -> carpetlab::Result<()> {
    let mu = &cfg.measure;
    let predicted = ldp_rate_symbolic(&RateFunction::new(mu), lambda, eps)?;
    let (table, slope) = match trials {
        None => {
            let fit = ldp_fit(mu, eps, lambda, k_list)?;
            (fit.table, fit.slope)
        }
        Some(trials) => {
            let mut table = TailTable::default();
            for &k in k_list {
                let est = estimate_exceedance_mc(mu, k, eps, lambda, trials, seed)?;
                table.push(k, est.p_hat);
            }
            let (xs, ys): (Vec<f64>, Vec<f64>) = table
                .rows
                .iter()
                .filter(|r| r.probability > 0.0)
                .map(|r| (r.k as f64, -r.probability.ln()))
                .unzip();
            let slope = if xs.len() >= 2 {
                least_squares(&xs, &ys).0
            } else {
                f64::NAN
            };
            (table, slope)
        }
    };
    println!(
        "mode={} slope={slope:.6} predicted={predicted:.6} rel_err={:.4}",
        if trials.is_some() {
            "monte_carlo"
        } else {
            "exact"
        },
        (slope - predicted).abs() / predicted
    );
    emit(out, |w| table.write_csv(w))
}

fn cmd_clt(
    cfg: &CarpetConfig,
    delta: f64,
    k: usize,
    trials: usize,
    seed: u64,
    out: Option<&Path>,
) -> carpetlab::Result<()> {
    let report = clt_test(&cfg.measure, k, delta, trials, seed, &CLT_TAUS)?;
    let worst = report
        .rows
        .iter()
        .map(|r| (r.empirical - r.phi).abs())
        .fold(0.0, f64::max);
    println!(
        "window={} trials={} ks_stat={:.5} ks_mid={:.5} max_tau_diff={worst:.5}",
        report.window, report.trials, report.ks_stat, report.ks_mid
    );
    emit(out, |w| {
        writeln!(w, "tau,empirical,phi,stderr")?;
        for r in &report.rows {
            writeln!(w, "{},{},{},{}", r.tau, r.empirical, r.phi, r.stderr)?;
        }
        Ok(())
    })
}

fn cmd_cover_check(
    cfg: &CarpetConfig,
    code: &str,
    big_r: &str,
    r: &str,
    out: Option<&Path>,
) -> carpetlab::Result<()> {
    let c = &cfg.carpet;
    let big_r = Scale::parse(big_r, c.m(), c.n())?;
    let r = Scale::parse(r, c.m(), c.n())?;
    let length = scale_indices(c, big_r)?.l1.max(scale_indices(c, r)?.l1);
    let code = code.parse::<CodeSpec>()?.realize(&cfg.measure, length)?;
    let terms = covering_terms(&code, c, big_r, r)?;
    let formula = terms.count()?;
    let mesh = covering_count_bruteforce(&code, c, big_r, r)?;
    let ratio = ((mesh as f64).ln() - (formula as f64).ln()) / (big_r.ln() - r.ln());
    println!(
        "regime={:?} formula={formula} bruteforce={mesh} log_ratio={ratio:.6}",
        terms.regime
    );
    emit(out, |w| {
        writeln!(w, "R,r,formula,bruteforce,log_ratio")?;
        writeln!(
            w,
            "{},{},{formula},{mesh},{ratio}",
            big_r.value(),
            r.value()
        )
    })
}

fn cmd_render(cfg: &CarpetConfig, k: usize, out: Option<&Path>) -> carpetlab::Result<()> {
    let rects = cfg.carpet.render_depth(k)?;
    println!("depth={k} rectangles={}", rects.len());
    emit(out, |w| {
        writeln!(w, "x,y,width,height")?;
        for r in &rects {
            writeln!(w, "{},{},{},{}", r.x, r.y, r.width, r.height)?;
        }
        Ok(())
    })
}
