//! Markov measures on the dimension-two level set `h(mu_P) / ∫F^u = 1/2`.
//!
//! Feasibility is decided by the Bowen root `s*` of `P(-s F^u) = 0`: no
//! Markov measure of any block order has ratio above `s*`, and the
//! equilibrium state of `-s* F^u` attains it. Solutions are found by
//! bisection on the segment from a near-deterministic cycle measure (ratio
//! close to 0) to that equilibrium state.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{rng_stream, MarkovMeasure};
use crate::perron::perron;
use crate::sft::{block_recode, BlockCode, LocallyConstantFn, Sft, Symbol};
use crate::suspension::{check_dim_two, flow_stats, DimTwoReport, FlowStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub ell_max: usize,
    pub delta_interior: f64,
    pub max_bisect: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, ell_max: 4, delta_interior: 1e-6, max_bisect: 200, seed: 0 }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {}", self.tol)));
        }
        if self.ell_max < 1 {
            return Err(Error::InvalidParameter("ell_max must be at least 1".into()));
        }
        if !(self.delta_interior > 0.0 && self.delta_interior < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta_interior must lie in (0,1), got {}",
                self.delta_interior
            )));
        }
        Ok(())
    }
}

/// A presentation of the model: the original shift (`code == None`) or its
/// `ell`-block recoding, with `F^u` and the roof transferred to it.
#[derive(Debug, Clone)]
pub struct Presentation {
    pub ell: usize,
    pub code: Option<BlockCode>,
    pub sft: Sft,
    pub fu: LocallyConstantFn,
    pub roof: LocallyConstantFn,
}

impl Presentation {
    pub fn new(sft: &Sft, fu: &LocallyConstantFn, roof: &LocallyConstantFn, ell: usize) -> Result<Self> {
        if ell <= 1 {
            return Ok(Self { ell: 1, code: None, sft: sft.clone(), fu: fu.clone(), roof: roof.clone() });
        }
        let (code, mut fns) = block_recode(sft, &[fu, roof], ell)?;
        let roof = fns.pop().unwrap();
        let fu = fns.pop().unwrap();
        Ok(Self { ell, sft: code.sft.clone(), code: Some(code), fu, roof })
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Lives on `presentation.sft`, which is the block recoding when
    /// `ell_used > 1`.
    pub measure: MarkovMeasure,
    pub ell_used: usize,
    pub stats: FlowStats,
    /// Largest entropy-to-exponent ratio at the level used.
    pub a_ell: f64,
    pub s_star: f64,
    pub report: DimTwoReport,
    pub presentation: Presentation,
    low: DMatrix<f64>,
    high: DMatrix<f64>,
}

/// The weighted transfer matrix `M(s)_ij = A_ij exp(-s F(i,j))`.
fn transfer_matrix(sft: &Sft, fu2: &LocallyConstantFn, s: f64) -> DMatrix<f64> {
    let n = sft.alphabet_size();
    DMatrix::from_fn(n, n, |i, j| if sft.allowed(i, j) { (-s * fu2.value(&[i, j])).exp() } else { 0.0 })
}

fn depth_two(sft: &Sft, fu: &LocallyConstantFn) -> Result<LocallyConstantFn> {
    if fu.depth() > 2 {
        return Err(Error::DepthTooLarge { depth: fu.depth(), max: 2 });
    }
    fu.lift(sft, 2)
}

/// `ln` of the spectral radius of `M(s)`, the pressure of `-s F^u`.
pub fn pressure(sft: &Sft, fu: &LocallyConstantFn, s: f64) -> Result<f64> {
    let fu2 = depth_two(sft, fu)?;
    Ok(perron(&transfer_matrix(sft, &fu2, s))?.radius.ln())
}

/// Root of the strictly decreasing map `s -> ln rho(M(s))`.
pub fn bowen_root(sft: &Sft, fu: &LocallyConstantFn) -> Result<f64> {
    fu.check_positive()?;
    if !sft.is_mixing() {
        return Err(Error::NotMixing);
    }
    let fu2 = depth_two(sft, fu)?;
    let log_radius = |s: f64| -> Result<f64> { Ok(perron(&transfer_matrix(sft, &fu2, s))?.radius.ln()) };
    // rho(M(s)) lies between rho(A) e^{-s max F} and rho(A) e^{-s min F}.
    let htop = log_radius(0.0)?;
    let mut lo = htop / fu2.max();
    let mut hi = htop / fu2.min();
    let (f_lo, f_hi) = (log_radius(lo)?, log_radius(hi)?);
    // Perron roots are accurate to a few ulps, so allow that much slack.
    if f_lo < -1e-13 || f_hi > 1e-13 {
        return Err(Error::Numerical(format!("pressure bracket invalid: P({lo})={f_lo}, P({hi})={f_hi}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_radius(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Equilibrium state of `-s F^u`: `P_ij = M_ij u_j / (rho u_i)`.
pub fn gibbs_matrix(sft: &Sft, fu: &LocallyConstantFn, s: f64) -> Result<DMatrix<f64>> {
    let fu2 = depth_two(sft, fu)?;
    let m = transfer_matrix(sft, &fu2, s);
    let data = perron(&m)?;
    let n = sft.alphabet_size();
    let mut p = DMatrix::from_fn(n, n, |i, j| m[(i, j)] * data.right[j] / (data.radius * data.right[i]));
    for i in 0..n {
        let sum = p.row(i).sum();
        p.row_mut(i).scale_mut(1.0 / sum);
    }
    Ok(p)
}

/// The ratio-maximizing Markov measure and its ratio `a_1`.
pub fn max_markov_measure(sft: &Sft, fu: &LocallyConstantFn) -> Result<(f64, MarkovMeasure)> {
    let s_star = bowen_root(sft, fu)?;
    let measure = MarkovMeasure::from_matrix(sft, gibbs_matrix(sft, fu, s_star)?)?;
    Ok((ratio(&measure, fu), measure))
}

/// Entropy-to-exponent ratio `h(mu_P) / ∫F^u`.
pub fn ratio(measure: &MarkovMeasure, fu: &LocallyConstantFn) -> f64 {
    measure.entropy() / measure.integrate(fu)
}

/// A `delta`-smoothing of the deterministic measure on the first periodic
/// orbit: cycle states step along the cycle, other states along a shortest
/// path into it, and every row is mixed with the uniform distribution on
/// allowed successors.
pub fn cycle_measure_matrix(sft: &Sft, delta: f64) -> DMatrix<f64> {
    let n = sft.alphabet_size();
    let cycle = sft.cycles(n).into_iter().next().expect("a mixing shift has periodic orbits");
    let c = cycle.symbols();
    let mut next: Vec<Option<Symbol>> = vec![None; n];
    for k in 0..c.len() {
        next[c[k]] = Some(c[(k + 1) % c.len()]);
    }
    // Breadth-first search backwards from the cycle.
    let mut frontier: Vec<Symbol> = c.to_vec();
    while !frontier.is_empty() {
        let mut grown = Vec::new();
        for (i, slot) in next.iter_mut().enumerate() {
            if slot.is_none() {
                if let Some(&j) = frontier.iter().filter(|&&j| sft.allowed(i, j)).min() {
                    *slot = Some(j);
                    grown.push(i);
                }
            }
        }
        frontier = grown;
    }
    DMatrix::from_fn(n, n, |i, j| {
        if !sft.allowed(i, j) {
            return 0.0;
        }
        let uniform = delta / sft.out_degree(i) as f64;
        if next[i] == Some(j) {
            1.0 - delta + uniform
        } else {
            uniform
        }
    })
}

struct Segment<'a> {
    sft: &'a Sft,
    fu: &'a LocallyConstantFn,
    from: &'a DMatrix<f64>,
    to: &'a DMatrix<f64>,
}

impl Segment<'_> {
    fn at(&self, t: f64) -> Result<MarkovMeasure> {
        let p = self.from * (1.0 - t) + self.to * t;
        MarkovMeasure::from_matrix(self.sft, p)
    }

    fn excess(&self, t: f64) -> Result<(f64, MarkovMeasure)> {
        let m = self.at(t)?;
        Ok((ratio(&m, self.fu) - 0.5, m))
    }

    /// Bisects for the level 1/2, given the excess is negative at `from`
    /// and positive at `to`.
    fn solve(&self, tol: f64, max_iter: usize) -> Result<MarkovMeasure> {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let (f_lo, _) = self.excess(lo)?;
        let (f_hi, _) = self.excess(hi)?;
        if !(f_lo < 0.0 && f_hi > 0.0) {
            return Err(Error::Numerical(format!("segment does not straddle 1/2: {f_lo:e}, {f_hi:e}")));
        }
        let mut best: Option<(f64, MarkovMeasure)> = None;
        for _ in 0..max_iter {
            let mid = 0.5 * (lo + hi);
            let (f, m) = self.excess(mid)?;
            if best.as_ref().is_none_or(|(b, _)| f.abs() < b.abs()) {
                best = Some((f, m));
            }
            if f.abs() <= 0.01 * tol || mid <= lo || mid >= hi {
                break;
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        match best {
            Some((f, m)) if f.abs() <= tol => Ok(m),
            Some((f, _)) => Err(Error::Numerical(format!("bisection stalled with residual {f:e}"))),
            None => Err(Error::Numerical("bisection made no evaluations".into())),
        }
    }
}

fn finish(
    presentation: Presentation,
    measure: MarkovMeasure,
    a_ell: f64,
    s_star: f64,
    tol: f64,
    low: DMatrix<f64>,
    high: DMatrix<f64>,
) -> Result<SolveResult> {
    let stats = flow_stats(&measure, &presentation.roof, &presentation.fu)?;
    let report = check_dim_two(&stats, tol);
    if !report.is_dim_two {
        return Err(Error::Numerical(format!("solution residual {:e} exceeds tol", report.residual_ratio)));
    }
    Ok(SolveResult { measure, ell_used: presentation.ell, stats, a_ell, s_star, report, presentation, low, high })
}

/// Finds a Markov measure with `h(mu_P) / ∫F^u = 1/2`.
///
/// `F^u` of depth `k > 2` is handled on the `(k-1)`-block presentation. If
/// the maximal ratio at a level does not exceed 1/2 the model is recoded
/// one level higher, up to `ell_max`.
pub fn solve_dimension_two(
    sft: &Sft,
    fu: &LocallyConstantFn,
    roof: &LocallyConstantFn,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    fu.check_positive()?;
    roof.check_positive()?;
    if !sft.is_mixing() {
        return Err(Error::NotMixing);
    }
    let first = fu.depth().saturating_sub(1).max(1);
    let mut s_star = f64::NAN;
    for ell in first..=opts.ell_max.max(first) {
        let pres = Presentation::new(sft, fu, roof, ell)?;
        s_star = bowen_root(&pres.sft, &pres.fu)?;
        let high = gibbs_matrix(&pres.sft, &pres.fu, s_star)?;
        let top = MarkovMeasure::from_matrix(&pres.sft, high.clone())?;
        let a_ell = ratio(&top, &pres.fu);
        let low = cycle_measure_matrix(&pres.sft, opts.delta_interior);
        if (a_ell - 0.5).abs() <= opts.tol {
            return finish(pres, top, a_ell, s_star, opts.tol, low, high);
        }
        if a_ell > 0.5 {
            let segment = Segment { sft: &pres.sft, fu: &pres.fu, from: &low, to: &high };
            let measure = segment.solve(opts.tol, opts.max_bisect)?;
            return finish(pres, measure, a_ell, s_star, opts.tol, low, high);
        }
        // Every block order shares the same Bowen root, so recoding cannot
        // lift the maximum past s*.
        if s_star < 0.5 - opts.tol {
            break;
        }
    }
    Err(Error::Infeasible { s_star })
}

/// Tangent direction of the compatible stochastic matrices: zero off the
/// support, zero row sums, unit max-norm.
fn random_direction(sft: &Sft, rng: &mut impl Rng) -> Option<DMatrix<f64>> {
    let n = sft.alphabet_size();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let allowed: Vec<Symbol> = sft.successors(i).collect();
        if allowed.len() < 2 {
            continue;
        }
        let g: Vec<f64> = allowed.iter().map(|_| rng.sample(StandardNormal)).collect();
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        for (&j, x) in allowed.iter().zip(&g) {
            d[(i, j)] = x - mean;
        }
    }
    let norm = d.amax();
    (norm > 1e-12).then(|| d / norm)
}

/// Largest step along `d` keeping all supported entries of `p + t d` at
/// least `margin`.
fn max_step(p: &DMatrix<f64>, d: &DMatrix<f64>, margin: f64) -> f64 {
    p.iter()
        .zip(d.iter())
        .filter(|(_, &dx)| dx < 0.0)
        .map(|(&x, &dx)| (x - margin) / -dx)
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// `count` distinct points of the level set, starting with the
/// `solve_dimension_two` solution. Each further point comes from a random
/// tangent direction through the known solution: the displaced matrix is
/// joined to whichever end (cycle measure or equilibrium state) lies on the
/// other side of 1/2 and the level is bisected on that segment.
pub fn level_set_sample(
    sft: &Sft,
    fu: &LocallyConstantFn,
    roof: &LocallyConstantFn,
    count: usize,
    opts: &SolveOptions,
) -> Result<Vec<SolveResult>> {
    let base = solve_dimension_two(sft, fu, roof, opts)?;
    if count <= 1 {
        return Ok(if count == 1 { vec![base] } else { Vec::new() });
    }
    let pres = base.presentation.clone();
    let free = pres.sft.free_parameters();
    if free <= 1 {
        return Err(Error::DegenerateLevelSet { free_parameters: free, count });
    }
    let p0 = base.measure.matrix().clone();
    let mut out = vec![base];
    let max_attempts = 50 * count as u64;
    for attempt in 0..max_attempts {
        if out.len() == count {
            break;
        }
        let mut rng = rng_stream(opts.seed, attempt);
        let Some(d) = random_direction(&pres.sft, &mut rng) else { continue };
        let step = max_step(&p0, &d, opts.delta_interior) * rng.gen_range(0.2..0.9);
        let q = &p0 + &d * step;
        let Ok(qm) = MarkovMeasure::from_matrix(&pres.sft, q.clone()) else { continue };
        let excess = ratio(&qm, &pres.fu) - 0.5;
        let solved = if excess.abs() <= 0.01 * opts.tol {
            Ok(qm)
        } else if excess > 0.0 {
            Segment { sft: &pres.sft, fu: &pres.fu, from: &out[0].low, to: &q }.solve(opts.tol, opts.max_bisect)
        } else {
            Segment { sft: &pres.sft, fu: &pres.fu, from: &q, to: &out[0].high }.solve(opts.tol, opts.max_bisect)
        };
        let Ok(measure) = solved else { continue };
        let distinct = out.iter().all(|r| (r.measure.matrix() - measure.matrix()).amax() >= 1e-6);
        if distinct {
            let (low, high) = (out[0].low.clone(), out[0].high.clone());
            out.push(finish(pres.clone(), measure, out[0].a_ell, out[0].s_star, opts.tol, low, high)?);
        }
    }
    if out.len() < count {
        return Err(Error::Numerical(format!("found only {} of {count} level-set points", out.len())));
    }
    Ok(out)
}
