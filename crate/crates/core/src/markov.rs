//! Markov measures compatible with a subshift: validation, stationary
//! vector, cylinder masses, entropy, integrals, and stationary path sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::perron::stationary_vector;
use crate::sft::{block_recode, BlockCode, LocallyConstantFn, Sft, Symbol, Word};

/// Rows must sum to one within this tolerance to be accepted as given.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Rows within this tolerance are renormalized (and flagged); beyond it they
/// are rejected.
pub const RENORMALIZE_TOL: f64 = 1e-9;
const STATIONARY_TOL: f64 = 1e-12;

/// The shift-invariant Markov measure `mu_P` of a compatible stochastic
/// matrix `P`.
#[derive(Debug, Clone)]
pub struct MarkovMeasure {
    sft: Sft,
    p: DMatrix<f64>,
    v: DVector<f64>,
    renormalized: bool,
    forward_cdf: Vec<f64>,
    backward_cdf: Vec<f64>,
    stationary_cdf: Vec<f64>,
}

pub fn validate_markov(sft: &Sft, p: &[Vec<f64>]) -> Result<MarkovMeasure> {
    let n = sft.alphabet_size();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.len() });
    }
    if let Some(row) = p.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: row.len() });
    }
    MarkovMeasure::from_matrix(sft, DMatrix::from_fn(n, n, |i, j| p[i][j]))
}

impl MarkovMeasure {
    pub fn from_matrix(sft: &Sft, mut p: DMatrix<f64>) -> Result<Self> {
        let n = sft.alphabet_size();
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.nrows() });
        }
        for i in 0..n {
            for j in 0..n {
                let x = p[(i, j)];
                let positive = x > 0.0 && x.is_finite();
                if positive != sft.allowed(i, j) || (!positive && x != 0.0) {
                    return Err(Error::SupportMismatch(i, j));
                }
            }
        }
        let mut renormalized = false;
        for i in 0..n {
            let sum: f64 = p.row(i).sum();
            let dev = (sum - 1.0).abs();
            if dev > RENORMALIZE_TOL {
                return Err(Error::RowSum(i));
            }
            if dev > ROW_SUM_TOL {
                p.row_mut(i).scale_mut(1.0 / sum);
                renormalized = true;
            }
        }
        if !sft.is_mixing() {
            return Err(Error::NotMixing);
        }
        let v = stationary_vector(&p).ok_or(Error::NotMixing)?;
        if v.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::NotMixing);
        }
        let residual = (v.transpose() * &p - v.transpose()).amax();
        if residual > STATIONARY_TOL {
            return Err(Error::Numerical(format!("stationary residual {residual:e}")));
        }
        let backward = DMatrix::from_fn(n, n, |i, j| v[j] * p[(j, i)] / v[i]);
        let forward_cdf = cdf_rows(&p);
        let backward_cdf = cdf_rows(&backward);
        let stationary_cdf = cdf_rows(&DMatrix::from_row_slice(1, n, v.as_slice()));
        Ok(Self { sft: sft.clone(), p, v, renormalized, forward_cdf, backward_cdf, stationary_cdf })
    }

    pub fn sft(&self) -> &Sft {
        &self.sft
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.p.nrows()).map(|i| self.p.row(i).iter().copied().collect()).collect()
    }

    #[inline]
    pub fn transition(&self, from: Symbol, to: Symbol) -> f64 {
        self.p[(from, to)]
    }

    pub fn stationary(&self) -> &DVector<f64> {
        &self.v
    }

    /// True when some input row was rescaled onto the simplex.
    pub fn was_renormalized(&self) -> bool {
        self.renormalized
    }

    /// `mu_P` of the cylinder spelled by `word`; independent of where the
    /// word is placed.
    pub fn cylinder_mass(&self, word: &[Symbol]) -> f64 {
        match word.split_first() {
            None => 1.0,
            Some((&first, _)) => {
                self.v[first] * word.windows(2).map(|w| self.p[(w[0], w[1])]).product::<f64>()
            }
        }
    }

    /// Logarithm of `cylinder_mass`, safe for words long enough to underflow.
    pub fn log_cylinder_mass(&self, word: &[Symbol]) -> f64 {
        match word.first() {
            None => 0.0,
            Some(&first) => {
                self.v[first].ln() + word.windows(2).map(|w| self.p[(w[0], w[1])].ln()).sum::<f64>()
            }
        }
    }

    pub fn word_mass(&self, word: &Word) -> f64 {
        self.cylinder_mass(word.symbols())
    }

    /// Entropy `h(mu_P) = -sum_i v_i sum_j P_ij ln P_ij`.
    pub fn entropy(&self) -> f64 {
        let n = self.p.nrows();
        -(0..n)
            .map(|i| {
                self.v[i]
                    * (0..n)
                        .map(|j| self.p[(i, j)])
                        .filter(|&x| x > 0.0)
                        .map(|x| x * x.ln())
                        .sum::<f64>()
            })
            .sum::<f64>()
    }

    /// Shannon entropy of the stationary vector.
    pub fn marginal_entropy(&self) -> f64 {
        -self.v.iter().map(|&x| x * x.ln()).sum::<f64>()
    }

    pub fn integrate(&self, f: &LocallyConstantFn) -> f64 {
        if let Some(c) = f.constant_value() {
            return c;
        }
        if f.depth() == 1 {
            return (0..self.v.len()).map(|i| self.v[i] * f.value(&[i])).sum();
        }
        self.sft
            .words(f.depth())
            .iter()
            .map(|w| self.cylinder_mass(w) * f.value(w))
            .sum()
    }

    /// The potential `G(x) = ln P_{x_0 x_1}`.
    pub fn potential_g(&self) -> LocallyConstantFn {
        LocallyConstantFn::from_fn(&self.sft, 2, |w| self.p[(w[0], w[1])].ln())
            .expect("depth-2 tables are always small enough")
    }

    /// The induced measure on the `ell`-block presentation, where a block
    /// `u` moves to `w` with probability `P_{last(u), last(w)}`.
    pub fn recode(&self, ell: usize) -> Result<(BlockCode, MarkovMeasure)> {
        let (code, _) = block_recode(&self.sft, &[], ell)?;
        let n = code.sft.alphabet_size();
        let p = DMatrix::from_fn(n, n, |a, b| {
            if code.sft.allowed(a, b) {
                let last = *code.block(b).last().unwrap();
                self.p[(code.block(a)[ell - 1], last)]
            } else {
                0.0
            }
        });
        let measure = MarkovMeasure::from_matrix(&code.sft, p)?;
        Ok((code, measure))
    }

    /// Stationary two-sided path on indices `-n_back ..= n_fwd`.
    pub fn sample_path(&self, n_back: usize, n_fwd: usize, seed: u64) -> Word {
        let mut sampler = PathSampler::new(self, seed, 0);
        sampler.word(n_back, n_fwd)
    }
}

fn cdf_rows(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let mut acc = 0.0;
        let last_positive = (0..c).rev().find(|&j| m[(i, j)] > 0.0);
        for j in 0..c {
            acc += m[(i, j)];
            out.push(if Some(j) == last_positive { f64::INFINITY } else { acc });
        }
    }
    out
}

#[inline]
fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> Symbol {
    let u: f64 = rng.gen();
    cdf.iter().position(|&c| u < c).expect("last positive entry is +inf")
}

/// Random number stream for `(seed, stream)`. ChaCha8 keyed by the seed
/// with the stream id in the nonce, so streams are independent and the
/// output is the same on every platform.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Lazily extended stationary two-sided path. Sample `k` uses streams
/// `2k` (symbol 0 and forward steps, via `P`) and `2k + 1` (backward steps,
/// via the time-reversed chain), so the path does not depend on the order
/// in which either side is extended.
pub struct PathSampler<'a> {
    measure: &'a MarkovMeasure,
    forward_rng: ChaCha8Rng,
    backward_rng: ChaCha8Rng,
    forward: Vec<Symbol>,
    backward: Vec<Symbol>,
}

impl<'a> PathSampler<'a> {
    pub fn new(measure: &'a MarkovMeasure, seed: u64, sample: u64) -> Self {
        let mut forward_rng = rng_stream(seed, 2 * sample);
        let backward_rng = rng_stream(seed, 2 * sample + 1);
        let first = draw(&measure.stationary_cdf, &mut forward_rng);
        Self { measure, forward_rng, backward_rng, forward: vec![first], backward: Vec::new() }
    }

    /// Makes indices `0..=n` available.
    pub fn extend_forward(&mut self, n: usize) {
        let k = self.measure.p.nrows();
        while self.forward.len() <= n {
            let last = *self.forward.last().unwrap();
            let s = draw(&self.measure.forward_cdf[last * k..(last + 1) * k], &mut self.forward_rng);
            self.forward.push(s);
        }
    }

    /// Makes indices `-n..=-1` available.
    pub fn extend_backward(&mut self, n: usize) {
        let k = self.measure.p.nrows();
        while self.backward.len() < n {
            let last = *self.backward.last().unwrap_or(&self.forward[0]);
            let s = draw(&self.measure.backward_cdf[last * k..(last + 1) * k], &mut self.backward_rng);
            self.backward.push(s);
        }
    }

    /// Symbol at index `i`; the side must already be extended far enough.
    #[inline]
    pub fn at(&self, i: i64) -> Symbol {
        if i >= 0 {
            self.forward[i as usize]
        } else {
            self.backward[(-i - 1) as usize]
        }
    }

    pub fn forward(&self) -> &[Symbol] {
        &self.forward
    }

    /// Symbols at `-1, -2, ...` in that order.
    pub fn backward(&self) -> &[Symbol] {
        &self.backward
    }

    pub fn word(&mut self, n_back: usize, n_fwd: usize) -> Word {
        self.extend_forward(n_fwd);
        self.extend_backward(n_back);
        let mut symbols: Vec<Symbol> = self.backward[..n_back].iter().rev().copied().collect();
        symbols.extend_from_slice(&self.forward[..=n_fwd]);
        Word::from_parts(symbols, -(n_back as i64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn golden() -> Sft {
        Sft::new(&[vec![1, 1], vec![1, 0]], 0.5).unwrap()
    }

    fn golden_measure() -> MarkovMeasure {
        validate_markov(&golden(), &[vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap()
    }

    fn uniform2() -> MarkovMeasure {
        validate_markov(&Sft::full_shift(2, 0.5).unwrap(), &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn validation_examples() {
        let u = uniform2();
        assert_relative_eq!(u.stationary()[0], 0.5, epsilon = 1e-15);
        let g = golden_measure();
        assert_relative_eq!(g.stationary()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g.stationary()[1], 1.0 / 3.0, epsilon = 1e-15);
        let bad = validate_markov(&golden(), &[vec![0.5, 0.5], vec![0.9, 0.1]]);
        assert_eq!(bad.unwrap_err(), Error::SupportMismatch(1, 1));
        let zero = validate_markov(&golden(), &[vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(zero.unwrap_err(), Error::SupportMismatch(0, 1));
        let rows = validate_markov(&golden(), &[vec![0.5, 0.6], vec![1.0, 0.0]]);
        assert_eq!(rows.unwrap_err(), Error::RowSum(0));
        let perm = Sft::new(&[vec![0, 1], vec![1, 0]], 0.5).unwrap();
        assert_eq!(validate_markov(&perm, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err(), Error::NotMixing);
        assert!(matches!(validate_markov(&golden(), &[vec![1.0]]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn renormalization_is_reported() {
        let m = validate_markov(&golden(), &[vec![0.5, 0.5 + 1e-10], vec![1.0, 0.0]]).unwrap();
        assert!(m.was_renormalized());
        assert_relative_eq!(m.matrix().row(0).sum(), 1.0, epsilon = 1e-15);
        assert!(!golden_measure().was_renormalized());
    }

    #[test]
    fn cylinder_masses() {
        assert_relative_eq!(uniform2().cylinder_mass(&[0, 1]), 0.25);
        assert_relative_eq!(golden_measure().cylinder_mass(&[0, 1]), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(golden_measure().cylinder_mass(&[1]), 1.0 / 3.0, epsilon = 1e-15);
        let w = Word::new(&golden(), vec![0, 1, 0], -5).unwrap();
        let v = Word::new(&golden(), vec![0, 1, 0], 7).unwrap();
        assert_eq!(golden_measure().word_mass(&w), golden_measure().word_mass(&v));
        assert_relative_eq!(
            golden_measure().log_cylinder_mass(&[0, 1, 0, 0]),
            golden_measure().cylinder_mass(&[0, 1, 0, 0]).ln(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn entropy_examples() {
        assert_relative_eq!(uniform2().entropy(), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(golden_measure().entropy(), 2.0 / 3.0 * 2f64.ln(), epsilon = 1e-15);
        // A smoothed deterministic 2-cycle has entropy tending to 0.
        let full = Sft::full_shift(2, 0.5).unwrap();
        let mut last = f64::INFINITY;
        for d in [1e-2, 1e-4, 1e-6, 1e-8] {
            let m = validate_markov(&full, &[vec![d, 1.0 - d], vec![1.0 - d, d]]).unwrap();
            assert!(m.entropy() < last);
            last = m.entropy();
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn potential_and_entropy_identity() {
        let g = uniform2().potential_g();
        assert!(g.entries().iter().all(|(_, v)| (*v + 2f64.ln()).abs() < 1e-15));
        let gm = golden_measure();
        assert_eq!(gm.potential_g().value(&[1, 0]), 0.0);
        let a = -gm.integrate(&gm.potential_g());
        assert!((a - gm.entropy()).abs() < 1e-12);
    }

    #[test]
    fn integrate_examples() {
        let gm = golden_measure();
        let f = LocallyConstantFn::from_fn(&golden(), 1, |w| 1.0 + w[0] as f64).unwrap();
        assert_relative_eq!(gm.integrate(&f), 2.0 / 3.0 + 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(gm.integrate(&LocallyConstantFn::constant(&golden(), 0.3)), 0.3);
    }

    #[test]
    fn integrate_depth_three_vs_monte_carlo() {
        let gm = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        let f = LocallyConstantFn::from_fn(&golden(), 3, |w| (w[0] + 2 * w[1] + 4 * w[2]) as f64 * 0.7 - 1.0)
            .unwrap();
        let exact = gm.integrate(&f);
        // Windows from one long stationary path.
        let n = 1_000_000;
        let path = gm.sample_path(0, n + 2, 11);
        let s = path.symbols();
        let vals: Vec<f64> = (0..n).map(|i| f.value(&s[i..i + 3])).collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        // Batch means absorb the serial correlation of overlapping windows.
        let batches = 1000;
        let size = n / batches;
        let bm: Vec<f64> = (0..batches)
            .map(|b| vals[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let var = bm.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
        let se = (var / batches as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "mean {mean} exact {exact} se {se}");
    }

    #[test]
    fn sampling_is_deterministic_and_stationary() {
        let gm = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        assert_eq!(gm.sample_path(20, 30, 5), gm.sample_path(20, 30, 5));
        assert_ne!(gm.sample_path(20, 30, 5), gm.sample_path(20, 30, 6));
        let w = gm.sample_path(20, 30, 5);
        assert_eq!(w.start_index(), -20);
        assert_eq!(w.end_index(), 30);
        assert!(golden().is_admissible(w.symbols()));

        let samples = 100_000u64;
        let mut zero = 0u64;
        let mut pairs = [0u64; 4];
        for k in 0..samples {
            let mut s = PathSampler::new(&gm, 99, k);
            s.extend_forward(1);
            s.extend_backward(1);
            if s.at(0) == 0 {
                zero += 1;
            }
            pairs[s.at(-1) * 2 + s.at(0)] += 1;
        }
        let n = samples as f64;
        let v0 = gm.stationary()[0];
        let se = (v0 * (1.0 - v0) / n).sqrt();
        assert!((zero as f64 / n - v0).abs() < 3.0 * se);
        for a in 0..2 {
            for b in 0..2 {
                let p = gm.cylinder_mass(&[a, b]);
                let f = pairs[a * 2 + b] as f64 / n;
                let se = (p * (1.0 - p) / n).sqrt().max(1e-12);
                assert!((f - p).abs() <= 3.0 * se, "pair {a}{b}: {f} vs {p}");
            }
        }
    }

    #[test]
    fn extension_order_does_not_matter() {
        let gm = golden_measure();
        let mut a = PathSampler::new(&gm, 3, 8);
        a.extend_forward(50);
        a.extend_backward(50);
        let mut b = PathSampler::new(&gm, 3, 8);
        b.extend_backward(10);
        b.extend_forward(20);
        b.extend_backward(50);
        b.extend_forward(50);
        assert_eq!(a.word(50, 50), b.word(50, 50));
    }

    #[test]
    fn recoded_measure_matches_cylinders() {
        let gm = validate_markov(&golden(), &[vec![0.3, 0.7], vec![1.0, 0.0]]).unwrap();
        for ell in 2..4 {
            let (code, rm) = gm.recode(ell).unwrap();
            for (s, block) in code.blocks().iter().enumerate() {
                assert_relative_eq!(rm.stationary()[s], gm.cylinder_mass(block), epsilon = 1e-13);
            }
            assert_relative_eq!(rm.entropy(), gm.entropy(), epsilon = 1e-13);
        }
    }

    fn arb_measure() -> impl Strategy<Value = MarkovMeasure> {
        let sfts = [
            Sft::full_shift(2, 0.5).unwrap(),
            golden(),
            Sft::new(&[vec![1, 1, 0], vec![0, 1, 1], vec![1, 0, 1]], 0.5).unwrap(),
            Sft::full_shift(3, 0.5).unwrap(),
        ];
        (0..sfts.len(), proptest::collection::vec(0.05f64..1.0, 9)).prop_map(move |(k, w)| {
            let sft = sfts[k].clone();
            let n = sft.alphabet_size();
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let raw: Vec<f64> =
                        (0..n).map(|j| if sft.allowed(i, j) { w[i * 3 + j] } else { 0.0 }).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|x| x / s).collect()
                })
                .collect();
            validate_markov(&sft, &rows).unwrap()
        })
    }

    proptest! {
        #[test]
        fn masses_sum_to_one_and_are_consistent(m in arb_measure(), len in 1usize..9) {
            let words = m.sft().words(len);
            let total: f64 = words.iter().map(|w| m.cylinder_mass(w)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for w in words.iter().take(20) {
                let ext: f64 = m.sft().successors(*w.last().unwrap())
                    .map(|j| { let mut e = w.clone(); e.push(j); m.cylinder_mass(&e) })
                    .sum();
                prop_assert!((ext - m.cylinder_mass(w)).abs() < 1e-13);
            }
        }

        #[test]
        fn entropy_equals_minus_integral_of_g(m in arb_measure()) {
            let a = -m.integrate(&m.potential_g());
            prop_assert!((a - m.entropy()).abs() < 1e-12);
        }

        #[test]
        fn block_entropy_has_exact_correction(m in arb_measure(), len in 1usize..8) {
            let hm: f64 = m.sft().words(len).iter()
                .map(|w| m.cylinder_mass(w)).map(|x| -x * x.ln()).sum();
            let predicted = m.marginal_entropy() + (len as f64 - 1.0) * m.entropy();
            prop_assert!((hm - predicted).abs() < 1e-11);
        }
    }
}
