//! Subshifts of finite type, words and cycles over them, locally constant
//! functions, Birkhoff sums, and higher block recoding.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

/// Zero-based position in the alphabet.
pub type Symbol = usize;

/// A two-sided subshift of finite type given by a 0/1 transition matrix.
///
/// `theta` is the base of the symbolic metric `d(x, y) = theta^n(x, y)`. It is
/// kept with the model but no computed quantity depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sft {
    size: usize,
    adjacency: Vec<bool>,
    theta: f64,
}

/// Validates a transition matrix and metric base.
pub fn validate_sft(adjacency: &[Vec<u8>], theta: f64) -> Result<Sft> {
    Sft::new(adjacency, theta)
}

impl Sft {
    pub fn new(adjacency: &[Vec<u8>], theta: f64) -> Result<Self> {
        let size = adjacency.len();
        for (row, entries) in adjacency.iter().enumerate() {
            if entries.len() != size {
                return Err(Error::NotSquare { rows: size, row, len: entries.len() });
            }
        }
        if size < 2 {
            return Err(Error::AlphabetTooSmall(size));
        }
        let mut flat = Vec::with_capacity(size * size);
        for (i, entries) in adjacency.iter().enumerate() {
            for (j, &a) in entries.iter().enumerate() {
                match a {
                    0 => flat.push(false),
                    1 => flat.push(true),
                    _ => return Err(Error::NotBinary(i, j)),
                }
            }
        }
        for i in 0..size {
            let row_empty = (0..size).all(|j| !flat[i * size + j]);
            let col_empty = (0..size).all(|j| !flat[j * size + i]);
            if row_empty || col_empty {
                return Err(Error::StrandedSymbol(i));
            }
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::BadTheta(theta));
        }
        Ok(Self { size, adjacency: flat, theta })
    }

    pub fn full_shift(size: usize, theta: f64) -> Result<Self> {
        Self::new(&vec![vec![1; size]; size], theta)
    }

    pub fn alphabet_size(&self) -> usize {
        self.size
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    #[inline]
    pub fn allowed(&self, from: Symbol, to: Symbol) -> bool {
        self.adjacency[from * self.size + to]
    }

    pub fn successors(&self, from: Symbol) -> impl Iterator<Item = Symbol> + '_ {
        (0..self.size).filter(move |&to| self.allowed(from, to))
    }

    pub fn out_degree(&self, from: Symbol) -> usize {
        self.successors(from).count()
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        (0..self.size)
            .map(|i| (0..self.size).map(|j| u8::from(self.allowed(i, j))).collect())
            .collect()
    }

    /// Number of free coordinates of a compatible stochastic matrix:
    /// each row has out-degree entries constrained to sum to one.
    pub fn free_parameters(&self) -> usize {
        (0..self.size).map(|i| self.out_degree(i) - 1).sum()
    }

    /// Number of admissible transitions, i.e. entries equal to one.
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().filter(|&&a| a).count()
    }

    pub fn is_admissible(&self, word: &[Symbol]) -> bool {
        self.check_word(word).is_ok()
    }

    /// Checks symbols are in range and consecutive pairs are allowed.
    pub fn check_word(&self, word: &[Symbol]) -> Result<()> {
        for &s in word {
            if s >= self.size {
                return Err(Error::UnknownSymbol { symbol: s, size: self.size });
            }
        }
        for (pos, pair) in word.windows(2).enumerate() {
            if !self.allowed(pair[0], pair[1]) {
                return Err(Error::Inadmissible(pos));
            }
        }
        Ok(())
    }

    /// Smallest `p <= p_max` with every entry of `A^p` positive.
    pub fn mixing_index(&self, p_max: usize) -> Option<usize> {
        let n = self.size;
        let mut power = self.adjacency.clone();
        for p in 1..=p_max {
            if power.iter().all(|&x| x) {
                return Some(p);
            }
            let mut next = vec![false; n * n];
            for i in 0..n {
                for k in 0..n {
                    if power[i * n + k] {
                        for j in 0..n {
                            if self.allowed(k, j) {
                                next[i * n + j] = true;
                            }
                        }
                    }
                }
            }
            power = next;
        }
        None
    }

    /// Mixing index with Wielandt's bound `(n-1)^2 + 1` as the cap, which is
    /// exact for primitivity.
    pub fn is_mixing(&self) -> bool {
        let n = self.size;
        self.mixing_index((n - 1) * (n - 1) + 1).is_some()
    }

    /// All admissible words of length `k` in lexicographic order.
    pub fn words(&self, k: usize) -> Vec<Vec<Symbol>> {
        let mut out = Vec::new();
        if k == 0 {
            return out;
        }
        let mut stack = Vec::with_capacity(k);
        self.extend_words(&mut stack, k, &mut out);
        out
    }

    fn extend_words(&self, prefix: &mut Vec<Symbol>, k: usize, out: &mut Vec<Vec<Symbol>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for s in 0..self.size {
            if prefix.last().is_none_or(|&last| self.allowed(last, s)) {
                prefix.push(s);
                self.extend_words(prefix, k, out);
                prefix.pop();
            }
        }
    }

    /// Primitive periodic orbits of period at most `max_len`, one
    /// representative per rotation class, ordered by length then
    /// lexicographically.
    pub fn cycles(&self, max_len: usize) -> Vec<Cycle> {
        let mut out = Vec::new();
        for len in 1..=max_len {
            for start in 0..self.size {
                let mut prefix = vec![start];
                self.extend_cycles(&mut prefix, len, &mut out);
            }
        }
        out
    }

    fn extend_cycles(&self, prefix: &mut Vec<Symbol>, len: usize, out: &mut Vec<Cycle>) {
        if prefix.len() == len {
            let closes = self.allowed(*prefix.last().unwrap(), prefix[0]);
            if closes && is_canonical_primitive(prefix) {
                out.push(Cycle(prefix.clone()));
            }
            return;
        }
        // The canonical rotation starts with its minimal symbol.
        let first = prefix[0];
        let last = *prefix.last().unwrap();
        for s in first..self.size {
            if self.allowed(last, s) {
                prefix.push(s);
                self.extend_cycles(prefix, len, out);
                prefix.pop();
            }
        }
    }
}

/// True when `word` is strictly smaller than every nontrivial rotation,
/// which both selects the minimal rotation and rejects proper powers.
fn is_canonical_primitive(word: &[Symbol]) -> bool {
    let len = word.len();
    (1..len).all(|shift| {
        let rotated = word[shift..].iter().chain(&word[..shift]);
        word.iter().lt(rotated)
    })
}

pub fn enumerate_words(sft: &Sft, k: usize) -> Vec<Vec<Symbol>> {
    sft.words(k)
}

pub fn enumerate_cycles(sft: &Sft, max_len: usize) -> Vec<Cycle> {
    sft.cycles(max_len)
}

/// A finite admissible word placed at an absolute position of a two-sided
/// sequence: symbol `k` of the word sits at index `start + k`. This is how
/// cylinders `[w]_{start}^{end}` are represented.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    symbols: Vec<Symbol>,
    start: i64,
}

impl Word {
    pub fn new(sft: &Sft, symbols: Vec<Symbol>, start: i64) -> Result<Self> {
        sft.check_word(&symbols)?;
        Ok(Self { symbols, start })
    }

    /// Skips the admissibility check; for internally generated paths.
    pub(crate) fn from_parts(symbols: Vec<Symbol>, start: i64) -> Self {
        Self { symbols, start }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    pub fn start_index(&self) -> i64 {
        self.start
    }

    /// Index of the last symbol.
    pub fn end_index(&self) -> i64 {
        self.start + self.symbols.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn at(&self, index: i64) -> Option<Symbol> {
        let offset = index - self.start;
        if offset < 0 {
            return None;
        }
        self.symbols.get(offset as usize).copied()
    }

    /// Symbols at absolute indices `from..=to`, or `None` if not covered.
    pub fn span(&self, from: i64, to: i64) -> Option<&[Symbol]> {
        if from > to + 1 || from < self.start || to > self.end_index() {
            return None;
        }
        let a = (from - self.start) as usize;
        let b = (to - self.start + 1) as usize;
        Some(&self.symbols[a..b])
    }
}

/// A periodic orbit, stored as its lexicographically minimal rotation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Cycle(Vec<Symbol>);

impl Cycle {
    /// Canonicalizes `symbols` to its minimal rotation after checking cyclic
    /// admissibility.
    pub fn new(sft: &Sft, symbols: &[Symbol]) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidParameter("empty cycle".into()));
        }
        let mut closed = symbols.to_vec();
        closed.push(symbols[0]);
        sft.check_word(&closed)?;
        let best = (0..symbols.len())
            .map(|r| symbols[r..].iter().chain(&symbols[..r]).copied().collect::<Vec<_>>())
            .min()
            .unwrap();
        Ok(Self(best))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A function on the shift space that depends only on the `depth` symbols
/// `x_0 .. x_{depth-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocallyConstantFn {
    depth: usize,
    size: usize,
    // Dense table indexed by the base-`size` value of the window; NaN marks
    // inadmissible windows.
    values: Vec<f64>,
}

/// Largest table the dense representation will allocate.
const MAX_TABLE: usize = 1 << 24;

impl LocallyConstantFn {
    pub fn from_fn(sft: &Sft, depth: usize, mut f: impl FnMut(&[Symbol]) -> f64) -> Result<Self> {
        let size = sft.alphabet_size();
        let len = table_len(size, depth)?;
        let mut values = vec![f64::NAN; len];
        for w in sft.words(depth) {
            values[index_of(size, &w)] = f(&w);
        }
        Ok(Self { depth, size, values })
    }

    /// Builds a function from an explicit table which must list every
    /// admissible `depth`-word exactly once and nothing else.
    pub fn from_table(sft: &Sft, depth: usize, table: &BTreeMap<Vec<Symbol>, f64>) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Table("depth must be at least 1".into()));
        }
        for (w, v) in table {
            if w.len() != depth {
                return Err(Error::Table(format!("word {w:?} has length {}, expected {depth}", w.len())));
            }
            if !sft.is_admissible(w) {
                return Err(Error::Table(format!("word {w:?} is not admissible")));
            }
            if !v.is_finite() {
                return Err(Error::Table(format!("value for word {w:?} is not finite")));
            }
        }
        let mut missing = None;
        let f = Self::from_fn(sft, depth, |w| match table.get(w) {
            Some(&v) => v,
            None => {
                missing.get_or_insert_with(|| w.to_vec());
                f64::NAN
            }
        })?;
        if let Some(w) = missing {
            return Err(Error::Table(format!("missing entry for word {w:?}")));
        }
        Ok(f)
    }

    pub fn constant(sft: &Sft, value: f64) -> Self {
        Self { depth: 1, size: sft.alphabet_size(), values: vec![value; sft.alphabet_size()] }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn alphabet_size(&self) -> usize {
        self.size
    }

    /// Value on a window of exactly `depth` symbols.
    #[inline]
    pub fn value(&self, window: &[Symbol]) -> f64 {
        debug_assert_eq!(window.len(), self.depth);
        self.values[index_of(self.size, window)]
    }

    /// Value at `x` given by its leading symbols; extra symbols are ignored.
    #[inline]
    pub fn eval(&self, word: &[Symbol]) -> f64 {
        self.value(&word[..self.depth])
    }

    /// Admissible windows and values, lexicographically ordered.
    pub fn entries(&self) -> Vec<(Vec<Symbol>, f64)> {
        (0..self.values.len())
            .filter(|&i| !self.values[i].is_nan())
            .map(|i| (word_of(self.size, self.depth, i), self.values[i]))
            .collect()
    }

    pub fn min(&self) -> f64 {
        self.finite_values().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.finite_values().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Some(c)` when every admissible window has the same value `c`.
    pub fn constant_value(&self) -> Option<f64> {
        let mut it = self.finite_values();
        let first = it.next()?;
        it.all(|v| v == first).then_some(first)
    }

    pub fn check_positive(&self) -> Result<()> {
        for (w, v) in self.entries() {
            if !(v > 0.0) {
                return Err(Error::NonPositiveFunction { word: w, value: v });
            }
        }
        Ok(())
    }

    /// The same function viewed at a larger depth.
    pub fn lift(&self, sft: &Sft, depth: usize) -> Result<Self> {
        if depth < self.depth {
            return Err(Error::InvalidParameter(format!(
                "cannot lift depth {} to smaller depth {depth}",
                self.depth
            )));
        }
        if depth == self.depth {
            return Ok(self.clone());
        }
        Self::from_fn(sft, depth, |w| self.eval(w))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let values = self.values.iter().map(|&v| if v.is_nan() { v } else { f(v) }).collect();
        Self { depth: self.depth, size: self.size, values }
    }

    fn finite_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }
}

fn table_len(size: usize, depth: usize) -> Result<usize> {
    size.checked_pow(depth as u32)
        .filter(|&len| len <= MAX_TABLE)
        .ok_or(Error::DepthTooLarge { depth, max: max_depth(size) })
}

fn max_depth(size: usize) -> usize {
    let mut d = 0;
    let mut len = 1usize;
    while let Some(next) = len.checked_mul(size).filter(|&l| l <= MAX_TABLE) {
        len = next;
        d += 1;
    }
    d
}

#[inline]
fn index_of(size: usize, window: &[Symbol]) -> usize {
    window.iter().fold(0, |acc, &s| acc * size + s)
}

fn word_of(size: usize, depth: usize, mut index: usize) -> Vec<Symbol> {
    let mut w = vec![0; depth];
    for slot in w.iter_mut().rev() {
        *slot = index % size;
        index /= size;
    }
    w
}

/// Sum of `f` over every full window of `word`: `word.len() - depth + 1` terms.
pub fn birkhoff_sum(f: &LocallyConstantFn, word: &[Symbol]) -> Result<f64> {
    if word.len() < f.depth() {
        return Err(Error::WordTooShort { len: word.len(), need: f.depth() });
    }
    Ok(word.windows(f.depth()).map(|w| f.value(w)).sum())
}

/// Sum of `f` around a periodic orbit, one term per point of the orbit.
pub fn cycle_sum(f: &LocallyConstantFn, cycle: &Cycle) -> f64 {
    let c = cycle.symbols();
    let len = c.len();
    let mut window = vec![0; f.depth()];
    (0..len)
        .map(|i| {
            for (k, slot) in window.iter_mut().enumerate() {
                *slot = c[(i + k) % len];
            }
            f.value(&window)
        })
        .sum()
}

/// The `ell`-block presentation of a subshift: symbols are admissible
/// `ell`-words, and `u -> w` is allowed when `w` continues `u` by one symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCode {
    pub sft: Sft,
    pub ell: usize,
    blocks: Vec<Vec<Symbol>>,
}

impl BlockCode {
    /// The original word spelled by each new symbol.
    pub fn blocks(&self) -> &[Vec<Symbol>] {
        &self.blocks
    }

    pub fn block(&self, symbol: Symbol) -> &[Symbol] {
        &self.blocks[symbol]
    }

    pub fn symbol_of(&self, block: &[Symbol]) -> Option<Symbol> {
        self.blocks.binary_search_by(|b| b.as_slice().cmp(block)).ok()
    }

    /// Sliding-window image of an original word; `len - ell + 1` symbols.
    pub fn encode(&self, word: &[Symbol]) -> Result<Vec<Symbol>> {
        if word.len() < self.ell {
            return Err(Error::WordTooShort { len: word.len(), need: self.ell });
        }
        word.windows(self.ell)
            .enumerate()
            .map(|(pos, w)| self.symbol_of(w).ok_or(Error::Inadmissible(pos)))
            .collect()
    }

    /// Inverse of `encode` for admissible recoded words.
    pub fn decode(&self, word: &[Symbol]) -> Vec<Symbol> {
        let mut out = Vec::with_capacity(word.len() + self.ell - 1);
        if let Some(&first) = word.first() {
            out.extend_from_slice(&self.blocks[first]);
            for &s in &word[1..] {
                out.push(*self.blocks[s].last().unwrap());
            }
        }
        out
    }

    /// Transfers a function to the block presentation. A depth-`k` function
    /// becomes depth `max(1, k - ell + 1)` and reads its value off the first
    /// `k` symbols of the spelled-out word.
    pub fn recode_fn(&self, f: &LocallyConstantFn) -> Result<LocallyConstantFn> {
        let depth = f.depth().saturating_sub(self.ell - 1).max(1);
        LocallyConstantFn::from_fn(&self.sft, depth, |w| f.eval(&self.decode(w)))
    }
}

/// Recodes `sft` and the given functions to the `ell`-block presentation.
pub fn block_recode(
    sft: &Sft,
    fns: &[&LocallyConstantFn],
    ell: usize,
) -> Result<(BlockCode, Vec<LocallyConstantFn>)> {
    if ell < 2 {
        return Err(Error::InvalidParameter(format!("block length must be at least 2, got {ell}")));
    }
    let blocks = sft.words(ell);
    let n = blocks.len();
    let adjacency: Vec<Vec<u8>> = blocks
        .iter()
        .map(|u| {
            blocks
                .iter()
                .map(|w| u8::from(u[1..] == w[..ell - 1]))
                .collect()
        })
        .collect();
    debug_assert_eq!(adjacency.len(), n);
    let code = BlockCode { sft: Sft::new(&adjacency, sft.theta())?, ell, blocks };
    let recoded = fns.iter().map(|f| code.recode_fn(f)).collect::<Result<Vec<_>>>()?;
    Ok((code, recoded))
}
