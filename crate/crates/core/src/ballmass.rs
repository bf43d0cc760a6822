//! Ball-mass lower bounds from stopping times, and the singularity series
//! `ln(m(B(x, ε(n))) / ε(n)^2)` along `ε(n) = exp(-n b)`.
//!
//! Balls in the flow are not representable symbolically; everything here
//! is the cylinder proxy `(ε/2) μ_P([ω]_{-n2}^{n1})` with `n1`, `n2` the
//! stopping times of the unstable and stable expansion sums.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{MarkovMeasure, PathSampler};
use crate::sft::{LocallyConstantFn, Symbol, Word};

/// Relative slack when comparing an expansion sum with its target, so that
/// `k` copies of `ln 2` reach `k ln 2`.
const CROSSING_SLACK: f64 = 1e-12;

fn reaches(sum: f64, target: f64) -> bool {
    sum >= target - CROSSING_SLACK * target.abs().max(1.0)
}

/// Incremental scan of both stopping times along one path. Targets must be
/// fed in nondecreasing order.
struct Scan {
    depth_u: usize,
    depth_s: usize,
    terms_u: usize,
    sum_u: f64,
    terms_s: usize,
    sum_s: f64,
    // Σ ln P over (0,1), ..., (n1-1, n1).
    log_fwd: f64,
    fwd_edges: usize,
    // Σ ln P over (-n2, -n2+1), ..., (-1, 0).
    log_back: f64,
    back_edges: usize,
}

impl Scan {
    fn new(fu: &LocallyConstantFn, fs: &LocallyConstantFn) -> Self {
        Self {
            depth_u: fu.depth(),
            depth_s: fs.depth(),
            terms_u: 0,
            sum_u: 0.0,
            terms_s: 0,
            sum_s: 0.0,
            log_fwd: 0.0,
            fwd_edges: 0,
            log_back: 0.0,
            back_edges: 0,
        }
    }

    /// Advances to the stopping times for `target`; `at(i)` returns the
    /// symbol at index `i` or `None` past the end of the path.
    fn advance(
        &mut self,
        fu: &LocallyConstantFn,
        fs: &LocallyConstantFn,
        target: f64,
        mut at: impl FnMut(i64) -> Option<Symbol>,
        need: usize,
    ) -> Result<(usize, usize)> {
        let short = || Error::WordTooShort { len: 0, need };
        let mut window = vec![0; self.depth_u.max(self.depth_s)];
        while self.terms_u == 0 || !reaches(self.sum_u, target) {
            let k = self.terms_u as i64;
            for (t, w) in window[..self.depth_u].iter_mut().enumerate() {
                *w = at(k + t as i64).ok_or_else(short)?;
            }
            self.sum_u += fu.value(&window[..self.depth_u]);
            self.terms_u += 1;
        }
        while self.terms_s == 0 || !reaches(self.sum_s, target) {
            let k = self.terms_s as i64;
            for (t, w) in window[..self.depth_s].iter_mut().enumerate() {
                *w = at(t as i64 - k).ok_or_else(short)?;
            }
            self.sum_s += fs.value(&window[..self.depth_s]);
            self.terms_s += 1;
        }
        Ok((self.terms_u - 1, self.terms_s - 1))
    }

    fn log_mass(&mut self, measure: &MarkovMeasure, n1: usize, n2: usize, at: impl Fn(i64) -> Symbol) -> f64 {
        while self.fwd_edges < n1 {
            let i = self.fwd_edges as i64;
            self.log_fwd += measure.transition(at(i), at(i + 1)).ln();
            self.fwd_edges += 1;
        }
        while self.back_edges < n2 {
            let i = self.back_edges as i64 + 1;
            self.log_back += measure.transition(at(-i), at(-i + 1)).ln();
            self.back_edges += 1;
        }
        measure.stationary()[at(-(n2 as i64))].ln() + self.log_back + self.log_fwd
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

/// Minimal `n1` with `sum_{k=0}^{n1} F^u(σ^k ω) >= -ln ε + C` and minimal
/// `n2` with `sum_{k=0}^{n2} F^s(σ^{-k} ω) >= -ln ε + C`.
pub fn stopping_times(
    path: &Word,
    fu: &LocallyConstantFn,
    fs: &LocallyConstantFn,
    epsilon: f64,
    c: f64,
) -> Result<(usize, usize)> {
    check_epsilon(epsilon)?;
    let mut scan = Scan::new(fu, fs);
    scan.advance(fu, fs, -epsilon.ln() + c, |i| path.at(i), path.len() + 1)
        .map_err(|_| Error::WordTooShort { len: path.len(), need: path.len() + 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassBound {
    pub n1: usize,
    pub n2: usize,
    /// `ln μ_P([ω]_{-n2}^{n1})`.
    pub log_mass: f64,
    /// `(ε/2) μ_P([ω]_{-n2}^{n1})`.
    pub bound: f64,
    pub ratio: f64,
    pub log_bound: f64,
    /// `ln(bound / ε^2)`, finite even where `bound` underflows.
    pub log_ratio: f64,
}

pub fn mass_lower_bound(
    measure: &MarkovMeasure,
    path: &Word,
    fu: &LocallyConstantFn,
    fs: &LocallyConstantFn,
    epsilon: f64,
    c: f64,
) -> Result<MassBound> {
    let (n1, n2) = stopping_times(path, fu, fs, epsilon, c)?;
    let cyl = path.span(-(n2 as i64), n1 as i64).ok_or(Error::WordTooShort { len: path.len(), need: n1 + n2 + 1 })?;
    let log_mass = measure.log_cylinder_mass(cyl);
    let log_bound = epsilon.ln() - std::f64::consts::LN_2 + log_mass;
    let log_ratio = log_bound - 2.0 * epsilon.ln();
    Ok(MassBound { n1, n2, log_mass, bound: log_bound.exp(), ratio: log_ratio.exp(), log_bound, log_ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub n: usize,
    /// `exp(-n b)`; underflows to 0 for large `n`, use `log_epsilon`.
    pub epsilon: f64,
    pub log_epsilon: f64,
    pub max_log_ratio: f64,
    pub q90_log_ratio: f64,
    pub frac_exceed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesParams {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub c_tilde: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSeries {
    pub rows: Vec<SeriesRow>,
    pub params: SeriesParams,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Increasing,
    Decreasing,
    Mixed,
}

impl DiagnosticSeries {
    /// Monotonicity of `max_log_ratio` along the grid.
    pub fn growth(&self) -> Growth {
        let m: Vec<f64> = self.rows.iter().map(|r| r.max_log_ratio).collect();
        if m.windows(2).all(|w| w[1] > w[0]) {
            Growth::Increasing
        } else if m.windows(2).all(|w| w[1] < w[0]) {
            Growth::Decreasing
        } else {
            Growth::Mixed
        }
    }
}

/// `ln(bound / ε(n)^2)` for one sampled path at every `n` of the grid,
/// using the path of sample `sample` under `seed`.
pub fn sample_log_ratios(
    measure: &MarkovMeasure,
    fu: &LocallyConstantFn,
    fs: &LocallyConstantFn,
    c: f64,
    n_grid: &[usize],
    seed: u64,
    sample: u64,
) -> Result<Vec<f64>> {
    let b = measure.integrate(fu);
    let mut path = PathSampler::new(measure, seed, sample);
    let mut scan = Scan::new(fu, fs);
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let target = n as f64 * b + c;
        let (n1, n2) = loop {
            let reach = path.forward().len();
            let back = path.backward().len();
            let res = scan.advance(fu, fs, target, |i| sampled(&path, i), 0);
            match res {
                Ok(t) => break t,
                Err(_) => {
                    path.extend_forward(2 * reach + 16);
                    path.extend_backward(2 * back + 16);
                }
            }
        };
        let log_mass = scan.log_mass(measure, n1, n2, |i| path.at(i));
        out.push(n as f64 * b - std::f64::consts::LN_2 + log_mass);
    }
    Ok(out)
}

fn sampled(path: &PathSampler<'_>, i: i64) -> Option<Symbol> {
    if i >= 0 {
        path.forward().get(i as usize).copied()
    } else {
        path.backward().get((-i - 1) as usize).copied()
    }
}

pub const DEFAULT_C: f64 = 0.0;

/// The singularity series: for each `n` of the grid, the maximum, 90th
/// percentile, and exceedance fraction of `ln(bound / ε(n)^2)` over
/// `samples` stationary paths. A sample counts as exceeding when its
/// statistic is at least `D sqrt(n) - 2 C̃`.
#[allow(clippy::too_many_arguments)]
pub fn singularity_series(
    measure: &MarkovMeasure,
    fu: &LocallyConstantFn,
    fs: &LocallyConstantFn,
    big_d: f64,
    c: f64,
    c_tilde: f64,
    n_grid: &[usize],
    samples: usize,
    seed: u64,
) -> Result<DiagnosticSeries> {
    if n_grid.is_empty() || n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("n_grid must be nonempty, positive and strictly increasing".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    fu.check_positive()?;
    fs.check_positive()?;
    let mut warnings = Vec::new();
    let b = measure.integrate(fu);
    let ratio = measure.entropy() / b;
    if (ratio - 0.5).abs() > 1e-6 {
        warnings.push(format!("h/∫F^u = {ratio:.9} is not 1/2; the measure is not of dimension two"));
    }
    let per_sample: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| sample_log_ratios(measure, fu, fs, c, n_grid, seed, k))
        .collect::<Result<_>>()?;
    let rows = n_grid
        .iter()
        .enumerate()
        .map(|(slot, &n)| {
            let mut col: Vec<f64> = per_sample.iter().map(|r| r[slot]).collect();
            col.sort_by(f64::total_cmp);
            let threshold = big_d * (n as f64).sqrt() - 2.0 * c_tilde;
            let exceed = col.len() - col.partition_point(|&x| x < threshold);
            let q90 = col[((0.9 * col.len() as f64).ceil() as usize).clamp(1, col.len()) - 1];
            SeriesRow {
                n,
                epsilon: (-(n as f64) * b).exp(),
                log_epsilon: -(n as f64) * b,
                max_log_ratio: *col.last().unwrap(),
                q90_log_ratio: q90,
                frac_exceed: exceed as f64 / col.len() as f64,
            }
        })
        .collect();
    Ok(DiagnosticSeries {
        rows,
        params: SeriesParams { d: big_d, c, c_tilde, samples, seed },
        warnings,
    })
}

pub const CSV_HEADER: &str = "n,epsilon,max_log_ratio,q90_log_ratio,frac_exceed";

/// Twelve significant digits, fixed notation.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // Rounding can carry into a new leading digit (9.99.. -> 10.0..).
    let digits = s.chars().filter(char::is_ascii_digit).collect::<String>();
    if digits.trim_start_matches('0').len() > 12 && decimals > 0 {
        let decimals = decimals - 1;
        return format!("{x:.decimals$}");
    }
    s
}

/// `exp(log_x)` with twelve significant digits: fixed notation where the
/// value is representable in 30 decimals, otherwise `m.mmmmmmmmmmme-N`.
pub fn format_from_log(log_x: f64) -> String {
    let log10 = log_x / std::f64::consts::LN_10;
    if log10 >= -18.0 {
        return format_sig12(log_x.exp());
    }
    let mut e = log10.floor();
    let mut m = 10f64.powf(log10 - e);
    if format!("{m:.11}").starts_with("10") {
        m /= 10.0;
        e += 1.0;
    }
    format!("{m:.11}e{}", e as i64)
}

fn parse_log_value(s: &str) -> Option<f64> {
    match s.split_once('e') {
        Some((m, e)) => {
            let m: f64 = m.parse().ok()?;
            let e: i64 = e.parse().ok()?;
            Some(m.ln() + e as f64 * std::f64::consts::LN_10)
        }
        None => s.parse::<f64>().ok().map(f64::ln),
    }
}

pub fn write_series(series: &DiagnosticSeries, mut out: impl Write) -> io::Result<()> {
    let mut buf = String::new();
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for r in &series.rows {
        let _ = writeln!(
            buf,
            "{},{},{},{},{}",
            r.n,
            format_from_log(r.log_epsilon),
            format_sig12(r.max_log_ratio),
            format_sig12(r.q90_log_ratio),
            format_sig12(r.frac_exceed)
        );
    }
    out.write_all(buf.as_bytes())
}

pub fn export_series(series: &DiagnosticSeries, destination: &Path) -> io::Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(destination)?);
    write_series(series, &mut f)?;
    f.flush()
}

/// Rows of an exported CSV. Values carry the twelve digits that were
/// written, so exporting the result again gives the same bytes.
pub fn read_series(input: impl BufRead) -> io::Result<Vec<SeriesRow>> {
    let bad = |line: &str| io::Error::new(io::ErrorKind::InvalidData, format!("malformed series line: {line}"));
    let mut lines = input.lines();
    match lines.next().transpose()? {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(bad(other.as_deref().unwrap_or(""))),
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(&line));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&line));
        let log_epsilon = parse_log_value(f[1]).ok_or_else(|| bad(&line))?;
        rows.push(SeriesRow {
            n: f[0].parse().map_err(|_| bad(&line))?,
            epsilon: log_epsilon.exp(),
            log_epsilon,
            max_log_ratio: num(f[2])?,
            q90_log_ratio: num(f[3])?,
            frac_exceed: num(f[4])?,
        });
    }
    Ok(rows)
}
