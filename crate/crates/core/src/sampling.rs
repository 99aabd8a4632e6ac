//! Histogram-valued sampling.
//!
//! Every statistic in this crate is a function of symbol counts, so samples
//! are materialized as histograms and never as sequences. A [`Histogram`] is
//! stored sparsely (sorted `(symbol, count)` pairs over its support), which
//! keeps a trial in the sparse regime at `O(N + n)` memory and time instead
//! of `O(m)`.
//!
//! # Seed substreams
//!
//! A [`SeedSpec`] `(master_seed, trial_index, stream)` maps to a ChaCha8
//! generator keyed by `ChaCha8Rng::seed_from_u64(master_seed)` and positioned
//! on stream number `trial_index * 16 + stream.code()`. Stream codes are
//! `X = 0`, `Y = 1`, `Z = 2`, `ZAlt = 3` and `Aux(k) = 4 + k` for `k < 12`.
//! This mapping is part of the reproducibility contract: changing it changes
//! every recorded result.

use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Binomial, Poisson};
use serde::{Deserialize, Serialize};

use crate::alphabet_model::{check_permutation, Distribution};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Counts per symbol over `[m]`, stored over the support only.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Histogram {
    m: usize,
    total: u64,
    /// Sorted by symbol, counts strictly positive.
    entries: Vec<(u32, u32)>,
}

impl Histogram {
    pub fn empty(m: usize) -> Self {
        assert!(m <= u32::MAX as usize, "alphabet size {m} exceeds u32 range");
        Self {
            m,
            total: 0,
            entries: Vec::new(),
        }
    }

    /// Builds a histogram from a dense count vector of length `m`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        if counts.len() > u32::MAX as usize {
            return Err(Error::invalid_argument("alphabet too large"));
        }
        let mut entries = Vec::new();
        let mut total = 0u64;
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                let c32 = u32::try_from(c)
                    .map_err(|_| Error::invalid_argument(format!("count {c} exceeds u32 range")))?;
                entries.push((j as u32, c32));
                total += c;
            }
        }
        Ok(Self {
            m: counts.len(),
            total,
            entries,
        })
    }

    /// Builds a histogram from `(symbol, count)` pairs in any order; repeated
    /// symbols are merged and zero counts dropped.
    pub fn from_pairs(m: usize, pairs: impl IntoIterator<Item = (usize, u64)>) -> Result<Self> {
        let mut dense: Vec<(usize, u64)> = pairs.into_iter().filter(|&(_, c)| c > 0).collect();
        if let Some(&(j, _)) = dense.iter().find(|&&(j, _)| j >= m) {
            return Err(Error::invalid_argument(format!("symbol {j} outside [0, {m})")));
        }
        dense.sort_unstable_by_key(|&(j, _)| j);
        let mut h = Histogram::empty(m);
        for (j, c) in dense {
            let c32 = u32::try_from(c)
                .map_err(|_| Error::invalid_argument(format!("count {c} exceeds u32 range")))?;
            match h.entries.last_mut() {
                Some((s, prev)) if *s as usize == j => {
                    *prev = prev
                        .checked_add(c32)
                        .ok_or_else(|| Error::invalid_argument("count overflow"))?;
                }
                _ => h.entries.push((j as u32, c32)),
            }
            h.total += c;
        }
        Ok(h)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, symbol: usize) -> u64 {
        match self.entries.binary_search_by_key(&(symbol as u32), |&(s, _)| s) {
            Ok(i) => self.entries[i].1 as u64,
            Err(_) => 0,
        }
    }

    /// `(symbol, count)` over the support, in increasing symbol order.
    pub fn iter(&self) -> impl ExactSizeIterator<Item = (usize, u64)> + '_ {
        self.entries.iter().map(|&(s, c)| (s as usize, c as u64))
    }

    pub(crate) fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn max_count(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c as u64).max().unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<u64> {
        let mut counts = vec![0; self.m];
        for (j, c) in self.iter() {
            counts[j] = c;
        }
        counts
    }

    /// Relabels symbol `j` as `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.m)?;
        Histogram::from_pairs(self.m, self.iter().map(|(j, c)| (perm[j], c)))
    }

    /// Rebuilds from sorted symbol draws (run-length encoding).
    fn fill_from_sorted_draws(&mut self, draws: &[u32]) {
        self.entries.clear();
        self.total = draws.len() as u64;
        for &s in draws {
            match self.entries.last_mut() {
                Some((last, c)) if *last == s => *c += 1,
                _ => self.entries.push((s, 1)),
            }
        }
    }

    fn insert_count(&mut self, symbol: usize, count: u64) {
        if count == 0 {
            return;
        }
        let s = symbol as u32;
        match self.entries.binary_search_by_key(&s, |&(x, _)| x) {
            Ok(i) => self.entries[i].1 += count as u32,
            Err(i) => self.entries.insert(i, (s, count as u32)),
        }
        self.total += count;
    }
}

/// Substream tag of a [`SeedSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stream {
    X,
    Y,
    /// Test sequence, null leg.
    Z,
    /// Test sequence, alternative leg.
    ZAlt,
    /// Auxiliary randomness, `k < 12`.
    Aux(u8),
}

impl Stream {
    pub fn code(self) -> u64 {
        match self {
            Stream::X => 0,
            Stream::Y => 1,
            Stream::Z => 2,
            Stream::ZAlt => 3,
            Stream::Aux(k) => {
                assert!(k < 12, "auxiliary stream index {k} out of range");
                4 + k as u64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub trial_index: u64,
    pub stream: Stream,
}

impl SeedSpec {
    pub fn new(master_seed: u64, trial_index: u64, stream: Stream) -> Self {
        Self {
            master_seed,
            trial_index,
            stream,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.trial_index.wrapping_mul(16).wrapping_add(self.stream.code()));
        rng
    }
}

/// Precomputed multinomial sampler for one distribution.
///
/// Samples with `size < 2m` draw each observation from an alias
/// table and sort; larger ones walk the symbols with conditional binomials.
#[derive(Debug, Clone)]
pub struct HistogramSampler {
    weights: Vec<f64>,
    /// `suffix[j] = sum_{k >= j} weights[k]`
    suffix: Vec<f64>,
    last_positive: usize,
    alias: WeightedAliasIndex<f64>,
}

impl HistogramSampler {
    pub fn new(dist: &Distribution) -> Self {
        Self::from_weights(dist.probs().to_vec()).expect("a distribution has positive mass")
    }

    /// Unnormalized nonnegative weights with positive total.
    fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let last_positive = weights
            .iter()
            .rposition(|&w| w > 0.0)
            .ok_or_else(|| Error::invalid_argument("sampling weights have zero total"))?;
        let mut suffix = vec![0.0; weights.len()];
        let mut acc = crate::numeric::CompensatedSum::new();
        for j in (0..weights.len()).rev() {
            acc.add(weights[j]);
            suffix[j] = acc.value();
        }
        let alias = WeightedAliasIndex::new(weights.clone())
            .map_err(|e| Error::invalid_argument(format!("alias table: {e}")))?;
        Ok(Self {
            weights,
            suffix,
            last_positive,
            alias,
        })
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, size: u64, rng: &mut R) -> Histogram {
        let mut out = Histogram::empty(self.m());
        let mut scratch = Vec::new();
        self.sample_into(size, rng, &mut out, &mut scratch);
        out
    }

    /// Like [`sample`](Self::sample) but reuses the allocations of `out` and
    /// `scratch`.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        size: u64,
        rng: &mut R,
        out: &mut Histogram,
        scratch: &mut Vec<u32>,
    ) {
        out.m = self.m();
        if (size as u128) < 2 * self.m() as u128 {
            scratch.clear();
            scratch.extend((0..size).map(|_| self.alias.sample(rng) as u32));
            scratch.sort_unstable();
            out.fill_from_sorted_draws(scratch);
        } else {
            self.sample_binomial_walk(size, rng, out);
        }
    }

    fn sample_binomial_walk<R: Rng + ?Sized>(&self, size: u64, rng: &mut R, out: &mut Histogram) {
        out.entries.clear();
        out.total = size;
        let mut remaining = size;
        for (j, &w) in self.weights.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if w <= 0.0 {
                continue;
            }
            let c = if j == self.last_positive {
                remaining
            } else {
                let p = (w / self.suffix[j]).clamp(0.0, 1.0);
                if p >= 1.0 {
                    remaining
                } else {
                    Binomial::new(remaining, p)
                        .expect("valid binomial parameters")
                        .sample(rng)
                }
            };
            if c > 0 {
                out.entries.push((j as u32, c as u32));
                remaining -= c;
            }
        }
    }
}

/// Histogram of `size` i.i.d. draws from `dist`.
pub fn sample_histogram(dist: &Distribution, size: u64, seed: SeedSpec) -> Histogram {
    HistogramSampler::new(dist).sample(size, &mut seed.rng())
}

/// Multinomial draws conditioned on one symbol's count.
///
/// The pinned count is fixed and the remaining `size - pinned_count`
/// observations are drawn from `dist` restricted to the other symbols and
/// renormalized.
#[derive(Debug, Clone)]
pub struct ConditionedSampler {
    m: usize,
    size: u64,
    pinned_symbol: usize,
    pinned_count: u64,
    rest: Option<HistogramSampler>,
}

impl ConditionedSampler {
    pub fn new(
        dist: &Distribution,
        size: u64,
        pinned_symbol: usize,
        pinned_count: u64,
    ) -> Result<Self> {
        if pinned_symbol >= dist.m() {
            return Err(Error::invalid_argument(format!(
                "pinned symbol {pinned_symbol} outside [0, {})",
                dist.m()
            )));
        }
        if pinned_count > size {
            return Err(Error::invalid_argument(format!(
                "pinned count {pinned_count} exceeds sample size {size}"
            )));
        }
        if dist.prob(pinned_symbol) <= 0.0 {
            return Err(Error::invalid_argument(format!(
                "pinned symbol {pinned_symbol} has zero probability"
            )));
        }
        let rest = if pinned_count < size {
            let mut weights = dist.probs().to_vec();
            weights[pinned_symbol] = 0.0;
            let mass = compensated_sum(weights.iter().copied());
            if mass <= 0.0 {
                return Err(Error::invalid_argument(
                    "no mass outside the pinned symbol to draw the remaining observations",
                ));
            }
            weights.iter_mut().for_each(|w| *w /= mass);
            Some(HistogramSampler::from_weights(weights)?)
        } else {
            None
        };
        Ok(Self {
            m: dist.m(),
            size,
            pinned_symbol,
            pinned_count,
            rest,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Histogram {
        let mut h = match &self.rest {
            Some(s) => s.sample(self.size - self.pinned_count, rng),
            None => Histogram::empty(self.m),
        };
        h.insert_count(self.pinned_symbol, self.pinned_count);
        h
    }
}

pub fn sample_conditioned_count(
    dist: &Distribution,
    size: u64,
    pinned_symbol: usize,
    pinned_count: u64,
    seed: SeedSpec,
) -> Result<Histogram> {
    Ok(ConditionedSampler::new(dist, size, pinned_symbol, pinned_count)?.sample(&mut seed.rng()))
}

/// Independent counts `counts_j ~ Poisson(lambda * dist_j)`; the total is
/// random. Callers without a preferred intensity use `lambda = N`, the size of
/// the fixed-length sample being approximated.
pub fn poissonized_histogram(dist: &Distribution, lambda: f64, seed: SeedSpec) -> Result<Histogram> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::invalid_argument(format!(
            "Poisson intensity must be positive and finite, got {lambda}"
        )));
    }
    let mut rng = seed.rng();
    let mut pairs = Vec::new();
    for (j, &p) in dist.probs().iter().enumerate() {
        let mean = lambda * p;
        if mean <= 0.0 {
            continue;
        }
        let c: f64 = Poisson::new(mean)
            .map_err(|e| Error::invalid_argument(format!("Poisson({mean}): {e}")))?
            .sample(&mut rng);
        if c > 0.0 {
            pairs.push((j, c as u64));
        }
    }
    Histogram::from_pairs(dist.m(), pairs)
}

/// Maps each symbol `j` to the `b` sub-symbols `j*b .. j*b + b - 1` and
/// reassigns each of its observations uniformly among them.
pub fn inflate_alphabet(hist: &Histogram, b: usize, seed: SeedSpec) -> Result<Histogram> {
    if b == 0 {
        return Err(Error::invalid_argument("inflation factor must be >= 1"));
    }
    let m_out = hist
        .m()
        .checked_mul(b)
        .filter(|&m| m <= u32::MAX as usize)
        .ok_or_else(|| Error::invalid_argument("inflated alphabet exceeds u32 range"))?;
    if b == 1 {
        return Ok(hist.clone());
    }
    let mut rng = seed.rng();
    let mut out = Histogram::empty(m_out);
    let mut split = Vec::new();
    for (j, c) in hist.iter() {
        let base = j * b;
        if (c as usize) < b {
            split.clear();
            split.extend((0..c).map(|_| rng.random_range(0..b) as u32));
            split.sort_unstable();
            for chunk in split.chunk_by(|a, b| a == b) {
                out.entries.push(((base + chunk[0] as usize) as u32, chunk.len() as u32));
            }
        } else {
            let mut remaining = c;
            for t in 0..b {
                if remaining == 0 {
                    break;
                }
                let parts_left = (b - t) as f64;
                let k = if t + 1 == b {
                    remaining
                } else {
                    Binomial::new(remaining, 1.0 / parts_left)
                        .expect("valid binomial parameters")
                        .sample(&mut rng)
                };
                if k > 0 {
                    out.entries.push(((base + t) as u32, k as u32));
                    remaining -= k;
                }
            }
        }
        out.total += c;
    }
    Ok(out)
}
