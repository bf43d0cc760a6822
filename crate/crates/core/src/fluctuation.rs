//! Fluctuations of the Birkhoff sums `X_n = -S_n G` and `Y_n = S_n F`
//! around `n a` and `n b`: exact Green–Kubo covariance, periodic-orbit
//! nondegeneracy tests, and a Monte Carlo harness for the tail events
//! `{X_n <= n a - D sqrt(n), Y_n >= n b + C}`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::markov::{MarkovMeasure, PathSampler};
use crate::sft::{cycle_sum, Cycle, LocallyConstantFn, Sft, Word};
use crate::solver::{level_set_sample, solve_dimension_two, SolveOptions, SolveResult};

/// Centered Birkhoff sums, entry `n` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenteredObs {
    pub xu: Vec<f64>,
    pub yu: Vec<f64>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

/// Centered sums along `path`:
///
/// ```text
/// Xu_n = -sum_{i=0}^{n-1} G(σ^i ω) - n a     Yu_n = sum_{i=0}^{n-1} F^u(σ^i ω) - n b
/// Xs_n = -sum_{i=1}^{n} G(σ^-i ω) - n a      Ys_n = sum_{i=0}^{n-1} F^s(σ^-i ω) - n b
/// ```
///
/// with `a = -∫G` and `b = ∫F^u`. The path must cover indices `-n_max` to
/// `n_max + depth - 1`.
pub fn centered_sums(
    measure: &MarkovMeasure,
    fu: &LocallyConstantFn,
    fs: &LocallyConstantFn,
    path: &Word,
    n_max: usize,
) -> Result<CenteredObs> {
    let depth = fu.depth().max(fs.depth()).max(2);
    let lo = -(n_max as i64);
    let hi = n_max as i64 + depth as i64 - 1;
    let w = path.span(lo, hi).ok_or(Error::WordTooShort {
        len: path.len(),
        need: (hi - lo + 1) as usize,
    })?;
    let g = measure.potential_g();
    let a = measure.entropy();
    let b = measure.integrate(fu);
    // Offset of index 0 inside `w`.
    let o = n_max;
    let mut obs = CenteredObs {
        xu: vec![0.0; n_max + 1],
        yu: vec![0.0; n_max + 1],
        xs: vec![0.0; n_max + 1],
        ys: vec![0.0; n_max + 1],
    };
    let (mut xu, mut yu, mut xs, mut ys) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n_max {
        xu -= g.eval(&w[o + i..]);
        yu += fu.eval(&w[o + i..]);
        xs -= g.eval(&w[o - i - 1..]);
        ys += fs.eval(&w[o - i..]);
        let n = (i + 1) as f64;
        obs.xu[i + 1] = xu - n * a;
        obs.yu[i + 1] = yu - n * b;
        obs.xs[i + 1] = xs - n * a;
        obs.ys[i + 1] = ys - n * b;
    }
    Ok(obs)
}

/// Asymptotic covariance of `(X_n - n a, Y_n - n b) / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceQ {
    pub q: [[f64; 2]; 2],
    pub lag_used: usize,
    /// Bound on each entry of the next lag term when the sum stopped.
    pub truncation_residual: f64,
}

impl CovarianceQ {
    pub fn det(&self) -> f64 {
        self.q[0][0] * self.q[1][1] - self.q[0][1] * self.q[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.q[0][0] + self.q[1][1]
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let half_tr = 0.5 * self.trace();
        let disc = (half_tr * half_tr - self.det()).max(0.0).sqrt();
        [half_tr - disc, half_tr + disc]
    }

    pub fn frobenius_distance(&self, other: &[[f64; 2]; 2]) -> f64 {
        self.q.iter().flatten().zip(other.iter().flatten()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_distance(&[[0.0; 2]; 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagPolicy {
    /// Stop once `2 max|phi| max|E[phi(e_k) | e_0]|` falls below this.
    pub tol: f64,
    pub max_lag: usize,
}

impl Default for LagPolicy {
    fn default() -> Self {
        Self { tol: 1e-12, max_lag: 10_000 }
    }
}

/// Exact Green–Kubo covariance `Q = C_0 + sum_{k>=1} (C_k + C_k^T)` of the
/// pair `(-G - a, F - b)`, computed on the stationary edge chain with
/// matrix powers of `P`. `F` deeper than 2 is handled on the block
/// presentation, which leaves `Q` unchanged.
pub fn green_kubo_covariance(
    measure: &MarkovMeasure,
    f: &LocallyConstantFn,
    policy: &LagPolicy,
) -> Result<CovarianceQ> {
    if f.depth() > 2 {
        let (code, recoded) = measure.recode(f.depth() - 1)?;
        return green_kubo_covariance(&recoded, &code.recode_fn(f)?, policy);
    }
    let sft = measure.sft();
    let n = sft.alphabet_size();
    let f2 = f.lift(sft, 2)?;
    let a = measure.entropy();
    let b = measure.integrate(f);
    let p = measure.matrix();
    let v = measure.stationary();
    let edges: Vec<(usize, usize)> = sft.words(2).into_iter().map(|w| (w[0], w[1])).collect();
    let weight: Vec<f64> = edges.iter().map(|&(i, j)| v[i] * p[(i, j)]).collect();
    let phi: Vec<[f64; 2]> = edges
        .iter()
        .map(|&(i, j)| [-p[(i, j)].ln() - a, f2.value(&[i, j]) - b])
        .collect();
    let cross = |g: &[[f64; 2]]| -> [[f64; 2]; 2] {
        let mut c = [[0.0; 2]; 2];
        for e in 0..edges.len() {
            for r in 0..2 {
                for s in 0..2 {
                    c[r][s] += weight[e] * phi[e][r] * g[e][s];
                }
            }
        }
        c
    };
    let mut q = cross(&phi);
    let phi_max = phi.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    // g_k(e) = E[phi(e_k) | e_0 = e]; depends on e = (i, j) only through j.
    let mut g = phi.clone();
    let mut lag = 0;
    let mut residual = f64::INFINITY;
    while lag < policy.max_lag {
        let mut next_state = vec![[0.0; 2]; n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            for r in 0..2 {
                next_state[i][r] += p[(i, j)] * g[e][r];
            }
        }
        g = edges.iter().map(|&(_, j)| next_state[j]).collect();
        lag += 1;
        let c = cross(&g);
        for r in 0..2 {
            for s in 0..2 {
                q[r][s] += c[r][s] + c[s][r];
            }
        }
        // A lag term can vanish exactly while later ones do not (Bernoulli
        // on a block presentation), so bound the tail through g instead.
        residual = 2.0 * phi_max * g.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
        if residual < policy.tol {
            break;
        }
    }
    Ok(CovarianceQ { q, lag_used: lag, truncation_residual: residual })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoboundaryVerdict {
    pub is_degenerate: bool,
    /// First periodic orbit whose centered sum does not vanish.
    pub witness: Option<Cycle>,
    pub witness_sum: Option<f64>,
    pub cycles_checked: usize,
}

/// Vanishing threshold for centered periodic-orbit sums.
pub const CYCLE_SUM_TOL: f64 = 1e-10;

/// Livšic-type test: `f - mean` can only be a coboundary if its sum around
/// every periodic orbit vanishes. Checks all orbits of period `<= max_len`.
pub fn coboundary_test(sft: &Sft, f: &LocallyConstantFn, mean: f64, max_len: usize) -> CoboundaryVerdict {
    let cycles = sft.cycles(max_len);
    let cycles_checked = cycles.len();
    for c in cycles {
        let s = cycle_sum(f, &c) - mean * c.len() as f64;
        if s.abs() > CYCLE_SUM_TOL {
            return CoboundaryVerdict { is_degenerate: false, witness: Some(c), witness_sum: Some(s), cycles_checked };
        }
    }
    CoboundaryVerdict { is_degenerate: true, witness: None, witness_sum: None, cycles_checked }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonsingularityReport {
    pub q: CovarianceQ,
    pub det_q: f64,
    /// Dimension of the span of the centered cycle vectors
    /// `(S_γ(-G) - a|γ|, S_γ(F) - b|γ|)`.
    pub rank_cycles: usize,
    pub singular_values: Vec<f64>,
    pub nonsingular: bool,
    pub x_verdict: CoboundaryVerdict,
    pub y_verdict: CoboundaryVerdict,
}

pub const RANK_TOL: f64 = 1e-9;

/// Nondegeneracy of the two-dimensional fluctuations, by periodic orbits
/// (rank of the centered cycle vectors) and by the exact covariance.
pub fn nonsingularity_check(
    measure: &MarkovMeasure,
    f: &LocallyConstantFn,
    max_len: usize,
) -> Result<NonsingularityReport> {
    let sft = measure.sft();
    let g = measure.potential_g();
    let minus_g = g.map(|x| -x);
    let a = measure.entropy();
    let b = measure.integrate(f);
    let cycles = sft.cycles(max_len);
    let rows: Vec<f64> = cycles
        .iter()
        .flat_map(|c| {
            let len = c.len() as f64;
            [cycle_sum(&minus_g, c) - a * len, cycle_sum(f, c) - b * len]
        })
        .collect();
    let singular_values: Vec<f64> = if cycles.is_empty() {
        Vec::new()
    } else {
        let mut sv: Vec<f64> =
            DMatrix::from_row_slice(cycles.len(), 2, &rows).singular_values().iter().copied().collect();
        sv.sort_by(|x, y| y.total_cmp(x));
        sv
    };
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank_cycles = singular_values.iter().filter(|&&s| s > RANK_TOL * top.max(1.0)).count();
    let q = green_kubo_covariance(measure, f, &LagPolicy::default())?;
    let det_q = q.det();
    let nonsingular = rank_cycles == 2 && det_q > 1e-12 * q.trace().powi(2);
    Ok(NonsingularityReport {
        q,
        det_q,
        rank_cycles,
        singular_values,
        nonsingular,
        x_verdict: coboundary_test(sft, &minus_g, a, max_len),
        y_verdict: coboundary_test(sft, f, b, max_len),
    })
}

/// A dimension-two measure whose fluctuation covariance is nonsingular.
///
/// The solver's own solution is tried first. On symmetric models it can be
/// degenerate (a Bernoulli solution on the full shift with a one-symbol
/// `F^u` makes `X_n` and `Y_n` affine in the same symbol count), so further
/// points of the level set are tried in their deterministic order.
pub fn select_nonsingular(
    sft: &Sft,
    fu: &LocallyConstantFn,
    roof: &LocallyConstantFn,
    opts: &SolveOptions,
    max_len: usize,
    max_candidates: usize,
) -> Result<(SolveResult, NonsingularityReport)> {
    let base = solve_dimension_two(sft, fu, roof, opts)?;
    let report = nonsingularity_check(&base.measure, &base.presentation.fu, max_len)?;
    if report.nonsingular || max_candidates <= 1 || base.presentation.sft.free_parameters() <= 1 {
        return Ok((base, report));
    }
    let Ok(candidates) = level_set_sample(sft, fu, roof, max_candidates, opts) else {
        return Ok((base, report));
    };
    for cand in candidates.into_iter().skip(1) {
        let r = nonsingularity_check(&cand.measure, &cand.presentation.fu, max_len)?;
        if r.nonsingular {
            return Ok((cand, r));
        }
    }
    Ok((base, report))
}

/// `P(X <= -D sqrt(n), Y >= c)` for `(X, Y) ~ N(0, n Q)`.
pub fn normal_tail_probability(q: &[[f64; 2]; 2], n: f64, big_d: f64, c: f64) -> f64 {
    let sx = (n * q[0][0]).max(0.0).sqrt();
    let sy = (n * q[1][1]).max(0.0).sqrt();
    let x_cut = -big_d * n.sqrt();
    if sx == 0.0 {
        return if 0.0 <= x_cut && 0.0 >= c { 1.0 } else { 0.0 };
    }
    let h = x_cut / sx;
    if sy == 0.0 {
        return if c <= 0.0 { norm_cdf(h) } else { 0.0 };
    }
    let k = c / sy;
    let r = (q[0][1] / (q[0][0] * q[1][1]).sqrt()).clamp(-1.0, 1.0);
    let s = (1.0 - r * r).max(0.0).sqrt();
    if s < 1e-12 {
        // Y = r X exactly: need z <= h and r z >= k.
        let upper = if r > 0.0 { h } else { h.min(-k) };
        let lower = if r > 0.0 { k } else { f64::NEG_INFINITY };
        return (norm_cdf(upper) - norm_cdf(lower)).max(0.0);
    }
    // ∫_{-∞}^{h} φ(z) P(Y >= k | z) dz, composite Simpson on [h - 12, h].
    let integrand = |z: f64| norm_pdf(z) * norm_sf((k - r * z) / s);
    let lo = h - 12.0;
    let steps = 4000;
    let width = (h - lo) / steps as f64;
    let mut total = integrand(lo) + integrand(h);
    for i in 1..steps {
        let z = lo + i as f64 * width;
        total += if i % 2 == 1 { 4.0 } else { 2.0 } * integrand(z);
    }
    total * width / 3.0
}

fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn norm_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEventStats {
    pub n_grid: Vec<usize>,
    pub freq_u: Vec<f64>,
    pub freq_s: Vec<f64>,
    pub freq_joint: Vec<f64>,
    /// Product `freq_u * freq_s`, for comparison with `freq_joint`.
    pub freq_product: Vec<f64>,
    pub rho_pred: Vec<f64>,
    pub samples: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub c_tilde: f64,
    pub q: CovarianceQ,
    pub warnings: Vec<String>,
}

pub const DEFAULT_D: f64 = 1.5;
pub const DEFAULT_C_TILDE: f64 = 5.0;
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Frequencies of `E_n^u`, `E_n^s` and both, over stationary two-sided
/// paths. Sample `k` uses the random streams of `(seed, k)`, so results do
/// not depend on the number of worker threads.
#[allow(clippy::too_many_arguments)]
pub fn asip_harness(
    measure: &MarkovMeasure,
    fu: &LocallyConstantFn,
    fs: &LocallyConstantFn,
    n_grid: &[usize],
    samples: usize,
    big_d: f64,
    c_tilde: f64,
    seed: u64,
) -> Result<TailEventStats> {
    if n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid.first() == Some(&0) {
        return Err(Error::InvalidParameter("n_grid must be strictly increasing and positive".into()));
    }
    let q = green_kubo_covariance(measure, fu, &LagPolicy::default())?;
    let mut warnings = Vec::new();
    if !(q.det() > 1e-12 * q.trace().powi(2)) {
        warnings.push("covariance Q is singular; tail events may be unreachable".to_string());
    }
    let g = measure.potential_g();
    let a = measure.entropy();
    let b = measure.integrate(fu);
    let bs = measure.integrate(fs);
    if (b - bs).abs() > 1e-8 * b.abs().max(1.0) {
        warnings.push(format!("∫F^u = {b} differs from ∫F^s = {bs}"));
    }
    let n_max = n_grid.last().copied().unwrap_or(0);
    let depth = fu.depth().max(fs.depth()).max(2);
    let slots = n_grid.len();

    let counts = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut path = PathSampler::new(measure, seed, k);
            path.extend_forward(n_max + depth);
            path.extend_backward(n_max + depth);
            let fwd = path.forward();
            let back = path.backward();
            let mut out = vec![[0u64; 3]; slots];
            let (mut xu, mut yu, mut xs, mut ys) = (0.0, 0.0, 0.0, 0.0);
            let mut slot = 0;
            let mut window = vec![0; depth];
            for i in 0..n_max {
                xu -= g.eval(&fwd[i..]);
                yu += fu.eval(&fwd[i..]);
                // G(σ^{-(i+1)} ω) reads ω_{-(i+1)}, ω_{-i}.
                let prev = if i == 0 { fwd[0] } else { back[i - 1] };
                xs -= g.value(&[back[i], prev]);
                // F^s(σ^{-i} ω) reads ω_{-i}, ω_{-i+1}, ...
                for (t, slot_sym) in window.iter_mut().enumerate() {
                    let idx = t as i64 - i as i64;
                    *slot_sym = path.at(idx);
                }
                ys += fs.eval(&window);
                let n = i + 1;
                if slot < slots && n_grid[slot] == n {
                    let nf = n as f64;
                    let cut = -big_d * nf.sqrt();
                    let eu = xu - nf * a <= cut && yu - nf * b >= c_tilde;
                    let es = xs - nf * a <= cut && ys - nf * b >= c_tilde;
                    out[slot] = [u64::from(eu), u64::from(es), u64::from(eu && es)];
                    slot += 1;
                }
            }
            out
        })
        .reduce(
            || vec![[0u64; 3]; slots],
            |mut acc, x| {
                for (a, b) in acc.iter_mut().zip(&x) {
                    for t in 0..3 {
                        a[t] += b[t];
                    }
                }
                acc
            },
        );

    let total = samples.max(1) as f64;
    let freq = |t: usize| counts.iter().map(|c| c[t] as f64 / total).collect::<Vec<_>>();
    let (freq_u, freq_s, freq_joint) = (freq(0), freq(1), freq(2));
    let freq_product = freq_u.iter().zip(&freq_s).map(|(x, y)| x * y).collect();
    let rho_pred = n_grid.iter().map(|&n| normal_tail_probability(&q.q, n as f64, big_d, c_tilde)).collect();
    Ok(TailEventStats {
        n_grid: n_grid.to_vec(),
        freq_u,
        freq_s,
        freq_joint,
        freq_product,
        rho_pred,
        samples,
        d: big_d,
        c_tilde,
        q,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::validate_markov;
    use approx::assert_relative_eq;

    fn full2() -> Sft {
        Sft::full_shift(2, 0.5).unwrap()
    }

    fn golden() -> Sft {
        Sft::new(&[vec![1, 1], vec![1, 0]], 0.5).unwrap()
    }

    #[test]
    fn centered_sums_basics() {
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let b = 0.9;
        let fu = LocallyConstantFn::constant(m.sft(), b);
        let path = m.sample_path(50, 52, 3);
        let obs = centered_sums(&m, &fu, &fu, &path, 50).unwrap();
        assert_eq!((obs.xu[0], obs.yu[0], obs.xs[0], obs.ys[0]), (0.0, 0.0, 0.0, 0.0));
        assert!(obs.yu.iter().chain(&obs.ys).all(|&y| y.abs() < 1e-12));
        assert!(matches!(centered_sums(&m, &fu, &fu, &path, 60), Err(Error::WordTooShort { .. })));
    }

    #[test]
    fn centered_sums_match_direct_birkhoff_sums() {
        use crate::sft::birkhoff_sum;
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let fu = LocallyConstantFn::from_fn(m.sft(), 2, |w| 1.0 + w[0] as f64 + 0.5 * w[1] as f64).unwrap();
        let fs = LocallyConstantFn::from_fn(m.sft(), 1, |w| 2.0 - w[0] as f64).unwrap();
        let path = m.sample_path(30, 32, 9);
        let obs = centered_sums(&m, &fu, &fs, &path, 30).unwrap();
        let g = m.potential_g();
        let (a, b) = (m.entropy(), m.integrate(&fu));
        for n in [1usize, 7, 30] {
            let fwd = path.span(0, n as i64).unwrap();
            assert_relative_eq!(obs.xu[n], -birkhoff_sum(&g, fwd).unwrap() - n as f64 * a, epsilon = 1e-12);
            let fwd_f = path.span(0, n as i64).unwrap();
            assert_relative_eq!(obs.yu[n], birkhoff_sum(&fu, fwd_f).unwrap() - n as f64 * b, epsilon = 1e-12);
            let back = path.span(-(n as i64), 0).unwrap();
            assert_relative_eq!(obs.xs[n], -birkhoff_sum(&g, back).unwrap() - n as f64 * a, epsilon = 1e-12);
            let back_f = path.span(-(n as i64) + 1, 0).unwrap();
            assert_relative_eq!(obs.ys[n], birkhoff_sum(&fs, back_f).unwrap() - n as f64 * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn centered_means_vanish() {
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let fu = LocallyConstantFn::constant(m.sft(), 1.0);
        let samples = 100_000u64;
        for n in [10usize, 100] {
            let xs: Vec<f64> = (0..samples)
                .into_par_iter()
                .map(|k| {
                    let mut s = PathSampler::new(&m, 21, k);
                    let w = s.word(n, n + 2);
                    centered_sums(&m, &fu, &fu, &w, n).unwrap().xu[n]
                })
                .collect();
            let mean = xs.iter().sum::<f64>() / samples as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (samples - 1) as f64;
            let se = (var / samples as f64).sqrt();
            assert!(mean.abs() < 3.0 * se, "n={n} mean {mean} se {se}");
        }
    }

    #[test]
    fn iid_rows_have_no_lag_terms() {
        let m = validate_markov(&full2(), &[vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let fu = LocallyConstantFn::from_fn(m.sft(), 1, |w| 1.0 + 2.0 * w[0] as f64).unwrap();
        let q = green_kubo_covariance(&m, &fu, &LagPolicy::default()).unwrap();
        // -G - a reads x_1 and F reads x_0, so only the lag-1 cross term
        // survives.
        let (p0, p1) = (0.3f64, 0.7f64);
        let var_g = p0 * p1 * (p0.ln() - p1.ln()).powi(2);
        let var_f = p0 * p1 * 4.0;
        assert_relative_eq!(q.q[0][0], var_g, epsilon = 1e-14);
        assert_relative_eq!(q.q[1][1], var_f, epsilon = 1e-14);
        let cov = p0 * p1 * (p1.ln() - p0.ln()) * (1.0 - 3.0);
        assert_relative_eq!(q.q[0][1], cov, epsilon = 1e-14);
        assert!(q.lag_used <= 2);

        // On 3-blocks the lag-1 and lag-2 terms vanish and the cross term
        // sits at lag 3.
        let (code, rm) = m.recode(3).unwrap();
        let rq = green_kubo_covariance(&rm, &code.recode_fn(&fu).unwrap(), &LagPolicy::default()).unwrap();
        assert!(q.frobenius_distance(&rq.q) < 1e-14, "{:?} vs {:?}", q.q, rq.q);
    }

    #[test]
    fn constant_observable_gives_zero_row() {
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let fu = LocallyConstantFn::constant(m.sft(), 1.7);
        let q = green_kubo_covariance(&m, &fu, &LagPolicy::default()).unwrap();
        assert_eq!(q.q[1][1], 0.0);
        assert_eq!(q.q[0][1], 0.0);
        assert_eq!(q.q[1][0], 0.0);
        assert!(q.q[0][0] > 0.0);
    }

    #[test]
    fn covariance_is_psd_and_recoding_invariant() {
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let fu = LocallyConstantFn::from_fn(m.sft(), 2, |w| 1.0 + w[0] as f64 + 0.5 * w[1] as f64).unwrap();
        let q = green_kubo_covariance(&m, &fu, &LagPolicy::default()).unwrap();
        assert!(q.eigenvalues()[0] >= -1e-10);
        assert_eq!(q.q[0][1], q.q[1][0]);
        for ell in 2..4 {
            let (code, rm) = m.recode(ell).unwrap();
            let rq = green_kubo_covariance(&rm, &code.recode_fn(&fu).unwrap(), &LagPolicy::default()).unwrap();
            assert!(q.frobenius_distance(&rq.q) < 1e-10, "ell {ell}: {:?} vs {:?}", q.q, rq.q);
        }
        // Depth-3 functions are recoded internally.
        let f3 = fu.lift(m.sft(), 3).unwrap();
        let q3 = green_kubo_covariance(&m, &f3, &LagPolicy::default()).unwrap();
        assert!(q.frobenius_distance(&q3.q) < 1e-10);
    }

    #[test]
    fn coboundary_examples() {
        let f2 = full2();
        let c = LocallyConstantFn::constant(&f2, 0.4);
        assert!(coboundary_test(&f2, &c, 0.4, 6).is_degenerate);
        let m = validate_markov(&f2, &[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let f = LocallyConstantFn::from_fn(&f2, 1, |w| [1.0, 2.0][w[0]]).unwrap();
        let verdict = coboundary_test(&f2, &f, m.integrate(&f), 6);
        assert!(!verdict.is_degenerate);
        assert_eq!(verdict.witness.unwrap().len(), 1);
        // f = h∘σ - h for a depth-1 h.
        for (sft, h) in [(full2(), vec![0.3, -1.2]), (golden(), vec![2.5, 0.1])] {
            let cob = LocallyConstantFn::from_fn(&sft, 2, |w| h[w[1]] - h[w[0]]).unwrap();
            for l in 2..9 {
                assert!(coboundary_test(&sft, &cob, 0.0, l).is_degenerate);
            }
        }
    }

    #[test]
    fn constant_fu_has_rank_at_most_one() {
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let fu = LocallyConstantFn::constant(m.sft(), 1.1);
        let r = nonsingularity_check(&m, &fu, 8).unwrap();
        assert!(r.rank_cycles <= 1);
        assert!(!r.nonsingular);
        assert!(r.y_verdict.is_degenerate);
    }

    #[test]
    fn parry_measure_kills_the_entropy_coordinate() {
        let m = validate_markov(&full2(), &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let fu = LocallyConstantFn::constant(m.sft(), 0.8);
        let r = nonsingularity_check(&m, &fu, 8).unwrap();
        assert_eq!(r.rank_cycles, 0);
        assert!(r.x_verdict.is_degenerate);
    }

    #[test]
    fn bernoulli_solution_is_degenerate() {
        // On the full 2-shift with a one-symbol F^u, Bernoulli measures make
        // both observables affine in the same symbol count.
        let f2 = full2();
        let m = validate_markov(&f2, &[vec![0.8, 0.2], vec![0.8, 0.2]]).unwrap();
        let fu = LocallyConstantFn::from_fn(&f2, 1, |w| [2f64.ln(), 6f64.ln()][w[0]]).unwrap();
        let r = nonsingularity_check(&m, &fu, 8).unwrap();
        assert_eq!(r.rank_cycles, 1);
        assert!(!r.nonsingular);
        assert!(r.det_q.abs() < 1e-12);
    }

    #[test]
    fn coboundary_perturbation_has_null_variance() {
        let g = golden();
        let m = validate_markov(&g, &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let h = [0.4, -0.9];
        let fu = LocallyConstantFn::from_fn(&g, 2, |w| 3.0 + h[w[1]] - h[w[0]]).unwrap();
        let r = nonsingularity_check(&m, &fu, 8).unwrap();
        assert!(r.y_verdict.is_degenerate);
        assert!(r.q.q[1][1] < 1e-8);
    }

    #[test]
    fn tail_probability_oracles() {
        // Independent coordinates factorize.
        let q = [[0.5, 0.0], [0.0, 2.0]];
        let n = 100.0;
        let p = normal_tail_probability(&q, n, 0.3, 4.0);
        let expected = norm_cdf(-0.3 * 10.0 / (50f64).sqrt()) * norm_sf(4.0 / (200f64).sqrt());
        assert_relative_eq!(p, expected, epsilon = 1e-10);
        // Perfect positive correlation makes low X and high Y incompatible.
        let q = [[1.0, 2.0], [2.0, 4.0]];
        assert_eq!(normal_tail_probability(&q, n, 0.5, 1.0), 0.0);
        // Zero Y variance with positive offset is unreachable.
        let q = [[1.0, 0.0], [0.0, 0.0]];
        assert_eq!(normal_tail_probability(&q, n, 0.5, 1.0), 0.0);
    }

    #[test]
    fn tail_probability_vs_monte_carlo() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let q = [[0.6, -0.25], [-0.25, 0.9]];
        let n = 50.0;
        let (d, c) = (0.4, 2.0);
        let p = normal_tail_probability(&q, n, d, c);
        let l11 = q[0][0].sqrt();
        let l21 = q[1][0] / l11;
        let l22 = (q[1][1] - l21 * l21).sqrt();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let trials = 400_000;
        let mut hits = 0;
        for _ in 0..trials {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let x = n.sqrt() * l11 * z1;
            let y = n.sqrt() * (l21 * z1 + l22 * z2);
            if x <= -d * n.sqrt() && y >= c {
                hits += 1;
            }
        }
        let f = hits as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((f - p).abs() < 4.0 * se, "{f} vs {p}");
    }

    #[test]
    fn harness_edge_cases() {
        let m = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let fu = LocallyConstantFn::constant(m.sft(), 1.0);
        let t = asip_harness(&m, &fu, &fu, &[10, 50], 2000, 1.5, 5.0, 1).unwrap();
        assert!(t.freq_u.iter().all(|&f| f == 0.0));
        assert!(!t.warnings.is_empty());
        let fu = LocallyConstantFn::from_fn(m.sft(), 1, |w| 1.0 + w[0] as f64).unwrap();
        let t = asip_harness(&m, &fu, &fu, &[100], 2000, 1e3, 0.0, 1).unwrap();
        assert_eq!(t.freq_u, vec![0.0]);
        assert!(asip_harness(&m, &fu, &fu, &[100, 50], 10, 1.5, 5.0, 1).is_err());
        let a = asip_harness(&m, &fu, &fu, &[20, 40], 3000, 0.2, 0.5, 8).unwrap();
        let b = asip_harness(&m, &fu, &fu, &[20, 40], 3000, 0.2, 0.5, 8).unwrap();
        assert_eq!(a, b);
    }
}
