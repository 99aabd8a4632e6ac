//! Closed-form and enumeration oracles.
//!
//! Every probability is returned in natural-log space as a [`LogProb`]. The
//! no-collision probabilities `P(all N draws distinct) = N! e_N(p_1, .., p_m)`
//! come from one dynamic program over symbols that keeps each partial
//! elementary symmetric sum as an `f64` mantissa with its own base-2
//! exponent, so `m = 10^6, N = 10^4` neither underflows nor needs an
//! `exp`/`ln` per update.

use serde::{Deserialize, Serialize};

use crate::alphabet_model::Distribution;
use crate::classifiers::{Decision, JointCounts};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, isqrt, ln_binomial, ln_factorial, CompensatedSum};
use crate::sampling::Histogram;

/// Converse constant for the test-sequence event, reported as a literal only.
pub const CONVERSE_J2: f64 = 5.0;

/// Slack allowed above zero for rounding in a log-probability.
pub const LOG_PROB_SLACK: f64 = 1e-12;

/// Natural-log probability, `value <= 0` up to [`LOG_PROB_SLACK`].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogProb(f64);

impl LogProb {
    pub const CERTAIN: LogProb = LogProb(0.0);
    pub const IMPOSSIBLE: LogProb = LogProb(f64::NEG_INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value > LOG_PROB_SLACK {
            return Err(Error::invalid_argument(format!(
                "{value} is not a log-probability"
            )));
        }
        Ok(Self(value))
    }

    fn from_computed(value: f64) -> Self {
        debug_assert!(!value.is_nan() && value <= LOG_PROB_SLACK, "bad log-prob {value}");
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_impossible(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn log10(self) -> f64 {
        self.0 / std::f64::consts::LN_10
    }
}

impl std::ops::Add for LogProb {
    type Output = LogProb;

    /// Log of the product of two probabilities.
    fn add(self, rhs: LogProb) -> LogProb {
        LogProb(self.0 + rhs.0)
    }
}

/// `min(N^2, N n) / m`
pub fn normalization_r(n_train: u64, n_test: u64, m: u64) -> Result<f64> {
    if n_train == 0 || n_test == 0 || m == 0 {
        return Err(Error::invalid_argument(format!(
            "normalization needs positive N, n, m; got ({n_train}, {n_test}, {m})"
        )));
    }
    let (nt, ns) = (n_train as u128, n_test as u128);
    Ok((nt * nt).min(nt * ns) as f64 / m as f64)
}

/// `sum_{k < N} ln(1 - k/m)`, the birthday no-collision probability under the
/// uniform distribution.
pub fn prob_all_distinct_uniform(m: u64, n: u64) -> Result<LogProb> {
    if m == 0 {
        return Err(Error::invalid_argument("alphabet size must be positive"));
    }
    if n > m {
        return Ok(LogProb::IMPOSSIBLE);
    }
    let mf = m as f64;
    let total = compensated_sum((1..n).map(|k| (-(k as f64) / mf).ln_1p()));
    Ok(LogProb::from_computed(total))
}

/// Floating value `mantissa * 2^exponent` with a wide exponent.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    mant: f64,
    exp: i64,
}

impl Scaled {
    const ZERO: Scaled = Scaled { mant: 0.0, exp: 0 };
    const ONE: Scaled = Scaled { mant: 1.0, exp: 0 };

    #[inline]
    fn pow2(d: i64) -> f64 {
        debug_assert!((-1022..=1023).contains(&d));
        f64::from_bits(((d + 1023) as u64) << 52)
    }

    /// `self += p * other`
    #[inline]
    fn add_scaled(&mut self, p: f64, other: Scaled) {
        let mb = p * other.mant;
        if mb == 0.0 {
            return;
        }
        if self.mant == 0.0 {
            self.mant = mb;
            self.exp = other.exp;
        } else {
            let d = other.exp - self.exp;
            if d >= 0 {
                if d > 1000 {
                    self.mant = mb;
                } else {
                    self.mant = self.mant * Self::pow2(-d) + mb;
                }
                self.exp = other.exp;
            } else if d >= -1000 {
                self.mant += mb * Self::pow2(d);
            }
        }
        self.normalize();
    }

    #[inline]
    fn normalize(&mut self) {
        const HI: f64 = 1.6069380442589903e60; // 2^200
        const LO: f64 = 6.223015277861142e-61; // 2^-200
        if self.mant > HI || self.mant < LO {
            let e = ((self.mant.to_bits() >> 52) & 0x7ff) as i64 - 1023;
            self.mant *= Self::pow2(-e);
            self.exp += e;
        }
    }

    fn ln(self) -> f64 {
        if self.mant == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.mant.ln() + self.exp as f64 * std::f64::consts::LN_2
        }
    }
}

/// `ln(k! e_k(w))` for nonnegative weights `w`.
fn ln_distinct_from_weights(weights: impl Iterator<Item = f64>, k: usize) -> f64 {
    let mut e = vec![Scaled::ZERO; k + 1];
    e[0] = Scaled::ONE;
    let mut seen = 0usize;
    for w in weights {
        if w <= 0.0 {
            continue;
        }
        seen += 1;
        for i in (1..=seen.min(k)).rev() {
            let prev = e[i - 1];
            e[i].add_scaled(w, prev);
        }
    }
    if seen < k {
        return f64::NEG_INFINITY;
    }
    e[k].ln() + ln_factorial(k as u64)
}

/// Exact log-probability that `N` i.i.d. draws from `dist` are all distinct.
pub fn prob_all_distinct(dist: &Distribution, n: u64) -> LogProb {
    if n <= 1 {
        return LogProb::CERTAIN;
    }
    if n as usize > dist.m() {
        return LogProb::IMPOSSIBLE;
    }
    let v = ln_distinct_from_weights(dist.probs().iter().copied(), n as usize);
    LogProb::from_computed(v.min(0.0))
}

/// Binomial-convolution form of [`prob_all_distinct`] for a bi-uniform
/// distribution: `N! sum_k C(m/2, k) C(m/2, N-k) a^k b^(N-k)` with
/// `a = (1+eps)/m`, `b = (1-eps)/m`.
pub fn prob_all_distinct_bi_uniform(m: u64, epsilon: f64, n: u64) -> Result<LogProb> {
    if m == 0 || m % 2 != 0 {
        return Err(Error::invalid_argument(format!("need an even alphabet size, got {m}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid_argument(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    if n <= 1 {
        return Ok(LogProb::CERTAIN);
    }
    if n > m {
        return Ok(LogProb::IMPOSSIBLE);
    }
    let half = m / 2;
    let ln_a = ((1.0 + epsilon) / m as f64).ln();
    let ln_b = ((1.0 - epsilon) / m as f64).ln();
    let lo = n.saturating_sub(half);
    let hi = n.min(half);
    let terms: Vec<f64> = (lo..=hi)
        .map(|k| {
            ln_binomial(half, k) + ln_binomial(half, n - k) + k as f64 * ln_a + (n - k) as f64 * ln_b
        })
        .collect();
    let v = log_sum_exp(&terms) + ln_factorial(n);
    Ok(LogProb::from_computed(v.min(0.0)))
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + compensated_sum(terms.iter().map(|t| (t - max).exp())).ln()
}

/// `P(A)`: neither training sample repeats a symbol (X and Y independent).
pub fn prob_event_a(dist_x: &Distribution, dist_y: &Distribution, n: u64) -> Result<LogProb> {
    if dist_x.m() != dist_y.m() {
        return Err(Error::invalid_argument("distributions live on different alphabets"));
    }
    Ok(prob_all_distinct(dist_x, n) + prob_all_distinct(dist_y, n))
}

/// Main term `-(1 + eps^2/2) N^2 / m` of the event-A log-probability under
/// `(u, q^omega)`.
pub fn lemma_a_rate(epsilon: f64, n: u64, m: u64) -> Result<f64> {
    if m == 0 {
        return Err(Error::invalid_argument("alphabet size must be positive"));
    }
    let nf = n as f64;
    Ok(-(1.0 + 0.5 * epsilon * epsilon) * nf * nf / m as f64)
}

/// `P(B | X = x, Y = y)`: `n` test draws from `z_dist` are distinct and avoid
/// `supp(ax) ∪ supp(ay)`. Equals `n! e_n` over the available symbols.
pub fn prob_event_b_given_xy(
    ax: &Histogram,
    ay: &Histogram,
    z_dist: &Distribution,
    n: u64,
) -> Result<LogProb> {
    let m = z_dist.m();
    if ax.m() != m || ay.m() != m {
        return Err(Error::invalid_argument("histograms and distribution differ in alphabet"));
    }
    let mut blocked = vec![false; m];
    for (j, _) in ax.iter().chain(ay.iter()) {
        blocked[j] = true;
    }
    let available = blocked.iter().filter(|b| !**b).count();
    if n == 0 {
        return Ok(LogProb::CERTAIN);
    }
    if (n as usize) > available {
        return Ok(LogProb::IMPOSSIBLE);
    }
    let weights = z_dist
        .probs()
        .iter()
        .zip(&blocked)
        .filter(|(_, b)| !**b)
        .map(|(p, _)| *p);
    let v = ln_distinct_from_weights(weights, n as usize);
    Ok(LogProb::from_computed(v.min(0.0)))
}

/// Exact and asymptotic log-probability of the count spike event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEventReport {
    /// `floor(4 n / sqrt(m))`
    pub k: u64,
    /// `ln P(Binomial(N, 1/m) = k)`
    pub log_prob: LogProb,
    /// `-4 (n / sqrt(m)) ln m`
    pub asymptote: f64,
}

/// `floor(4 n / sqrt(m))`, computed exactly in integers.
pub fn spike_count(m: u64, n: u64) -> u64 {
    let n = n as u128;
    isqrt(16 * n * n / m as u128) as u64
}

/// Log-probability that symbol 1 appears exactly `floor(4n/sqrt(m))` times in
/// a uniform training sample of size `N`.
pub fn prob_c_n(m: u64, n_train: u64, n_test: u64) -> Result<SpikeEventReport> {
    if m == 0 || n_train == 0 || n_test == 0 {
        return Err(Error::invalid_argument(format!(
            "need positive m, N, n; got ({m}, {n_train}, {n_test})"
        )));
    }
    let k = spike_count(m, n_test);
    let mf = m as f64;
    let log_prob = if k > n_train {
        LogProb::IMPOSSIBLE
    } else if m == 1 {
        if k == n_train {
            LogProb::CERTAIN
        } else {
            LogProb::IMPOSSIBLE
        }
    } else {
        let v = ln_binomial(n_train, k) - k as f64 * mf.ln()
            + (n_train - k) as f64 * (-1.0 / mf).ln_1p();
        LogProb::from_computed(v.min(0.0))
    };
    Ok(SpikeEventReport {
        k,
        log_prob,
        asymptote: -4.0 * (n_test as f64 / mf.sqrt()) * mf.ln(),
    })
}

/// The log-MGF main terms as a quadratic in `gamma`:
/// `scale * (gamma * linear + gamma^2 * quadratic)` with `scale = min(N^2, nN)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaQuadratic {
    pub scale: f64,
    /// `sum_j 1/2 (pi_j - nu_j)^2 - 1/2 (mu_j - nu_j)^2`
    pub linear: f64,
    /// `sum_j pi_j nu_j + mu_j nu_j + 1/2 (pi_j^2 + mu_j^2)`
    pub quadratic: f64,
}

impl LambdaQuadratic {
    pub fn new(
        pi: &Distribution,
        mu: &Distribution,
        nu: &Distribution,
        n_train: u64,
        n_test: u64,
    ) -> Result<Self> {
        let m = pi.m();
        if mu.m() != m || nu.m() != m {
            return Err(Error::invalid_argument("distributions live on different alphabets"));
        }
        let mut lin = CompensatedSum::new();
        let mut quad = CompensatedSum::new();
        for ((&p, &q), &v) in pi.probs().iter().zip(mu.probs()).zip(nu.probs()) {
            lin.add(0.5 * (p - v) * (p - v) - 0.5 * (q - v) * (q - v));
            quad.add(p * v + q * v + 0.5 * (p * p + q * q));
        }
        let (nt, ns) = (n_train as f64, n_test as f64);
        Ok(Self {
            scale: (nt * nt).min(nt * ns),
            linear: lin.value(),
            quadratic: quad.value(),
        })
    }

    pub fn at(&self, gamma: f64) -> BoundReport {
        let linear_term = self.scale * gamma * self.linear;
        let quadratic_term = self.scale * gamma * gamma * self.quadratic;
        BoundReport {
            gamma,
            theta: self.scale * gamma,
            scale: self.scale,
            linear_coefficient: self.linear,
            quadratic_coefficient: self.quadratic,
            linear_term,
            quadratic_term,
            main_term: linear_term + quadratic_term,
            note: remainder_note(),
        }
    }

    /// Unconstrained minimizer `-linear / (2 quadratic)`; `None` when the
    /// quadratic coefficient vanishes.
    pub fn optimal_gamma(&self) -> Option<f64> {
        (self.quadratic > 0.0).then(|| -self.linear / (2.0 * self.quadratic))
    }

    /// `-scale * linear^2 / (4 quadratic)`
    pub fn vertex_value(&self) -> Option<f64> {
        (self.quadratic > 0.0).then(|| -self.scale * self.linear * self.linear / (4.0 * self.quadratic))
    }
}

fn remainder_note() -> String {
    format!(
        "main-term bound only: the O(min(N^2,nN) max(N,n)/m^2) and O(1) remainders are not \
         computed; converse constant J2 = {CONVERSE_J2} (literal)"
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    /// `theta = min(N^2, nN) * gamma`
    pub theta: f64,
    pub scale: f64,
    pub linear_coefficient: f64,
    pub quadratic_coefficient: f64,
    pub linear_term: f64,
    pub quadratic_term: f64,
    /// `linear_term + quadratic_term`
    pub main_term: f64,
    pub note: String,
}

/// Explicit main terms of the upper bound on the log-MGF of `T_n` at
/// `theta = min(N^2, nN) gamma`.
pub fn chernoff_lambda_bound(
    pi: &Distribution,
    mu: &Distribution,
    nu: &Distribution,
    gamma: f64,
    n_train: u64,
    n_test: u64,
) -> Result<BoundReport> {
    if !gamma.is_finite() {
        return Err(Error::invalid_argument(format!("gamma must be finite, got {gamma}")));
    }
    Ok(LambdaQuadratic::new(pi, mu, nu, n_train, n_test)?.at(gamma))
}

/// Lower bound `eps^4 / (160 c_bar^2)` on the generalized exponent of the
/// coincidence classifier.
pub fn achievability_exponent(epsilon: f64, c_bar: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(c_bar > 0.0) || !epsilon.is_finite() || !c_bar.is_finite() {
        return Err(Error::invalid_argument(format!(
            "need positive epsilon and c_bar, got ({epsilon}, {c_bar})"
        )));
    }
    Ok(epsilon.powi(4) / (160.0 * c_bar * c_bar))
}

/// Default cap on enumerated histogram triples.
pub const ENUMERATION_BUDGET: f64 = 1e8;

/// All count vectors of length `m` summing to `total`, in lexicographic order.
pub fn compositions(total: u64, m: usize) -> Vec<Vec<u64>> {
    fn rec(rest: u64, slot: usize, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if slot + 1 == cur.len() {
            cur[slot] = rest;
            out.push(cur.clone());
            return;
        }
        for c in (0..=rest).rev() {
            cur[slot] = c;
            rec(rest - c, slot + 1, cur, out);
        }
        cur[slot] = 0;
    }
    let mut out = Vec::new();
    if m == 0 {
        return out;
    }
    rec(total, 0, &mut vec![0; m], &mut out);
    out
}

/// `ln` of the multinomial probability of `counts` under `dist`.
fn ln_multinomial_weight(counts: &[u64], dist: &Distribution) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut v = ln_factorial(total);
    for (&c, &p) in counts.iter().zip(dist.probs()) {
        if c == 0 {
            continue;
        }
        if p == 0.0 {
            return f64::NEG_INFINITY;
        }
        v += c as f64 * p.ln() - ln_factorial(c);
    }
    v
}

/// Number of `(ax, ay, az)` histogram triples the enumeration would visit.
pub fn enumeration_size(m: usize, n_train: u64, n_test: u64) -> f64 {
    let m1 = m as u64 - 1;
    let lx = ln_binomial(n_train + m1, m1);
    let lz = ln_binomial(n_test + m1, m1);
    (2.0 * lx + lz).exp()
}

/// Exact `1/2 P(phi = 1 | Z ~ pi) + 1/2 P(phi = 0 | Z ~ mu)` at a fixed pair,
/// by enumerating every histogram triple with its multinomial weight.
pub fn exact_error_bruteforce<F>(
    pi: &Distribution,
    mu: &Distribution,
    n_train: u64,
    n_test: u64,
    classifier: F,
) -> Result<f64>
where
    F: Fn(&JointCounts) -> Result<Decision>,
{
    exact_error_bruteforce_with_budget(pi, mu, n_train, n_test, classifier, ENUMERATION_BUDGET)
}

pub fn exact_error_bruteforce_with_budget<F>(
    pi: &Distribution,
    mu: &Distribution,
    n_train: u64,
    n_test: u64,
    classifier: F,
    budget: f64,
) -> Result<f64>
where
    F: Fn(&JointCounts) -> Result<Decision>,
{
    let m = pi.m();
    if mu.m() != m {
        return Err(Error::invalid_argument("pi and mu live on different alphabets"));
    }
    let estimated = enumeration_size(m, n_train, n_test);
    if estimated > budget * (1.0 + 1e-9) {
        return Err(Error::EnumerationBudget { estimated, budget });
    }

    struct Weighted {
        hist: Histogram,
        under_pi: f64,
        under_mu: f64,
    }
    let tabulate = |total: u64| -> Result<Vec<Weighted>> {
        compositions(total, m)
            .into_iter()
            .map(|c| {
                Ok(Weighted {
                    under_pi: ln_multinomial_weight(&c, pi).exp(),
                    under_mu: ln_multinomial_weight(&c, mu).exp(),
                    hist: Histogram::from_counts(&c)?,
                })
            })
            .collect()
    };
    let train = tabulate(n_train)?;
    let test = tabulate(n_test)?;

    let mut err = CompensatedSum::new();
    for x in &train {
        if x.under_pi == 0.0 {
            continue;
        }
        for y in &train {
            let w_xy = x.under_pi * y.under_mu;
            if w_xy == 0.0 {
                continue;
            }
            for z in &test {
                if z.under_pi == 0.0 && z.under_mu == 0.0 {
                    continue;
                }
                let jc = JointCounts::new(x.hist.clone(), y.hist.clone(), z.hist.clone())?;
                let wrong = match classifier(&jc)? {
                    Decision::H1 => z.under_pi,
                    Decision::H0 => z.under_mu,
                };
                err.add(w_xy * wrong);
            }
        }
    }
    Ok(0.5 * err.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet_model::{bi_uniform, uniform, BiUniformSpec};
    use crate::classifiers::{classify_f, classify_t, oracle_lrt};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalization_r(100, 50, 1000).unwrap(), 5.0);
        assert_eq!(normalization_r(100, 100, 1000).unwrap(), 10.0);
        assert_eq!(normalization_r(10, 1_000_000, 10_000).unwrap(), 0.01);
        assert!(normalization_r(0, 1, 1).is_err());
    }

    #[test]
    fn birthday_examples() {
        assert_eq!(prob_all_distinct_uniform(365, 0).unwrap(), LogProb::CERTAIN);
        assert_eq!(prob_all_distinct_uniform(365, 1).unwrap(), LogProb::CERTAIN);
        let v = prob_all_distinct_uniform(365, 23).unwrap().value();
        assert!((v - (-0.7078)).abs() < 5e-4, "{v}");
        assert!(prob_all_distinct_uniform(365, 366).unwrap().is_impossible());
        assert!(prob_all_distinct_uniform(365, 365).unwrap().value().is_finite());
    }

    #[test]
    fn dp_matches_uniform_closed_form() {
        for (m, ns) in [
            (365u64, vec![2u64, 23, 100, 365]),
            (10_000, vec![2, 100, 5_000, 10_000]),
        ] {
            let u = uniform(m as usize).unwrap();
            for n in ns {
                let dp = prob_all_distinct(&u, n).value();
                let cf = prob_all_distinct_uniform(m, n).unwrap().value();
                assert!((dp - cf).abs() < 1e-10 * cf.abs().max(1.0), "m={m} N={n}: {dp} vs {cf}");
            }
        }
    }

    #[test]
    fn forced_collisions() {
        let point = Distribution::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert!(prob_all_distinct(&point, 2).is_impossible());
        assert!(prob_all_distinct(&uniform(3).unwrap(), 4).is_impossible());
    }

    #[test]
    fn bi_uniform_second_order_approximation() {
        let q = bi_uniform(&BiUniformSpec::canonical(10_000, 0.5).unwrap());
        let v = prob_all_distinct(&q, 100).value();
        let approx = -(1.0 + 0.25) * 100.0 * 100.0 / (2.0 * 10_000.0);
        assert!(rel(v, approx) < 0.03, "{v} vs {approx}");
    }

    #[test]
    fn dp_matches_binomial_convolution() {
        for (m, eps, n) in [(10usize, 0.3, 4u64), (1000, 0.8, 200), (10_000, 0.5, 1000), (64, 0.5, 64)] {
            let q = bi_uniform(&BiUniformSpec::canonical(m, eps).unwrap());
            let dp = prob_all_distinct(&q, n).value();
            let conv = prob_all_distinct_bi_uniform(m as u64, eps, n).unwrap().value();
            assert!(rel(dp, conv) < 1e-10, "m={m} N={n}: {dp} vs {conv}");
        }
    }

    #[test]
    fn dp_handles_deep_underflow() {
        // 1e6 symbols, 1e4 draws: e_N itself is ~1e-35000
        let u = uniform(1_000_000).unwrap();
        let dp = prob_all_distinct(&u, 10_000).value();
        let cf = prob_all_distinct_uniform(1_000_000, 10_000).unwrap().value();
        assert!(rel(dp, cf) < 1e-10, "{dp} vs {cf}");
    }

    #[test]
    fn event_a_examples() {
        let u = uniform(100).unwrap();
        assert_eq!(prob_event_a(&u, &u, 1).unwrap(), LogProb::CERTAIN);
        let u365 = uniform(365).unwrap();
        let v = prob_event_a(&u365, &u365, 23).unwrap().value();
        let single = prob_all_distinct_uniform(365, 23).unwrap().value();
        assert!((v - 2.0 * single).abs() < 1e-12);

        let m = 100_000;
        let q = bi_uniform(&BiUniformSpec::canonical(m, 0.5).unwrap());
        let v = prob_event_a(&uniform(m).unwrap(), &q, 1000).unwrap().value();
        let rate = lemma_a_rate(0.5, 1000, m as u64).unwrap();
        assert_eq!(rate, -11.25);
        assert!(rel(v, rate) < 0.05, "{v} vs {rate}");
    }

    #[test]
    fn lemma_a_rate_examples() {
        assert_eq!(lemma_a_rate(0.0, 30, 900).unwrap(), -1.0);
        assert_eq!(lemma_a_rate(1.0, 30, 900).unwrap(), -1.5);
        assert_eq!(lemma_a_rate(0.5, 1000, 100_000).unwrap(), -11.25);
    }

    #[test]
    fn event_b_examples() {
        let m = 4;
        let u = uniform(m).unwrap();
        let empty = Histogram::empty(m);
        let v = prob_event_b_given_xy(&empty, &empty, &u, 3).unwrap().value();
        let w = prob_all_distinct_uniform(4, 3).unwrap().value();
        assert!((v - w).abs() < 1e-14);

        let ax = Histogram::from_counts(&[2, 0, 0, 0]).unwrap();
        let ay = Histogram::from_counts(&[1, 1, 0, 0]).unwrap();
        let v = prob_event_b_given_xy(&ax, &ay, &u, 2).unwrap().value();
        assert!((v - (1.0f64 / 8.0).ln()).abs() < 1e-14);
        assert_eq!(prob_event_b_given_xy(&ax, &ay, &u, 0).unwrap(), LogProb::CERTAIN);
        assert!(prob_event_b_given_xy(&ax, &ay, &u, 3).unwrap().is_impossible());
    }

    /// Falling-factorial form `(m-s)(m-s-1)...(m-s-n+1)/m^n` for uniform z.
    #[test]
    fn event_b_uniform_falling_factorial() {
        let m = 500usize;
        let u = uniform(m).unwrap();
        let ax = Histogram::from_pairs(m, (0..40).map(|j| (j * 3, 1))).unwrap();
        let ay = Histogram::from_pairs(m, (0..40).map(|j| (j * 5, 2))).unwrap();
        let s = (0..m).filter(|&j| ax.count(j) > 0 || ay.count(j) > 0).count() as f64;
        for n in [1u64, 10, 60] {
            let ff: f64 = (0..n).map(|k| ((m as f64 - s - k as f64) / m as f64).ln()).sum();
            let v = prob_event_b_given_xy(&ax, &ay, &u, n).unwrap().value();
            assert!(rel(v, ff) < 1e-12, "n={n}: {v} vs {ff}");
        }
    }

    #[test]
    fn spike_event_examples() {
        // 4n < sqrt(m): k = 0, binomial at zero
        let r = prob_c_n(10_000, 50, 20).unwrap();
        assert_eq!(r.k, 0);
        let zero = 50.0 * (1.0f64 - 1e-4).ln();
        assert!(rel(r.log_prob.value(), zero) < 1e-12);

        let r = prob_c_n(4096, 512, 512).unwrap();
        assert_eq!(r.k, 32);
        let oracle = {
            use statrs::distribution::{Binomial, Discrete};
            Binomial::new(1.0 / 4096.0, 512).unwrap().ln_pmf(32)
        };
        assert!(rel(r.log_prob.value(), oracle) < 1e-10, "{} vs {oracle}", r.log_prob.value());
        assert!((r.asymptote - (-266.168_517_335)).abs() < 1e-6, "{}", r.asymptote);

        // more spikes than draws
        assert!(prob_c_n(16, 3, 100).unwrap().log_prob.is_impossible());
    }

    #[test]
    fn spike_count_is_exact_floor() {
        assert_eq!(spike_count(4096, 512), 32);
        assert_eq!(spike_count(16384, 646), 20);
        // 4n = sqrt(m) exactly
        assert_eq!(spike_count(1600, 10), 1);
        assert_eq!(spike_count(1601, 10), 0);
    }

    #[test]
    fn lambda_bound_examples() {
        let u = uniform(50).unwrap();
        let r = chernoff_lambda_bound(&u, &u, &u, 0.7, 40, 30).unwrap();
        assert_eq!(r.linear_term, 0.0);
        let expected = 0.49 * 1200.0 * 3.0 * u.collision_mass();
        assert!(rel(r.main_term, expected) < 1e-12);
        assert_eq!(r.main_term, r.linear_term + r.quadratic_term);

        let q = bi_uniform(&BiUniformSpec::canonical(50, 0.6).unwrap());
        let lq = LambdaQuadratic::new(&u, &q, &u, 40, 30).unwrap();
        assert!(lq.linear < 0.0);
        assert!(lq.optimal_gamma().unwrap() > 0.0);
        assert!(lq.vertex_value().unwrap() < 0.0);
    }

    /// `u` vs `q^omega`, `nu = u`, `m = 1e4`, `eps = 0.5`, `N = n = 100`:
    /// linear = -eps^2/(2m), quadratic = (6 + eps^2)/(2m), vertex value
    /// -N^2 * (eps^2/(2m))^2 / (4 (6+eps^2)/(2m)) = -1.25e-3.
    #[test]
    fn lambda_vertex_frozen_value() {
        let m = 10_000;
        let u = uniform(m).unwrap();
        let q = bi_uniform(&BiUniformSpec::canonical(m, 0.5).unwrap());
        let lq = LambdaQuadratic::new(&u, &q, &u, 100, 100).unwrap();
        assert!(rel(lq.linear, -1.25e-5) < 1e-9);
        assert!(rel(lq.quadratic, 3.125e-4) < 1e-9);
        let v = lq.vertex_value().unwrap();
        assert!(rel(v, -1.25e-3) < 1e-9, "{v}");
        let at = lq.at(lq.optimal_gamma().unwrap());
        assert!(rel(at.main_term, v) < 1e-12);
    }

    /// Golden-section refinement of a coarse grid minimum.
    fn numeric_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        let steps = 2000;
        let h = (hi - lo) / steps as f64;
        let best = (0..=steps)
            .map(|i| lo + i as f64 * h)
            .min_by(|a, b| f(*a).total_cmp(&f(*b)))
            .unwrap();
        let (mut a, mut b) = (best - h, best + h);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        f((a + b) / 2.0)
    }

    #[test]
    fn vertex_matches_numeric_minimization() {
        let m = 200;
        let u = uniform(m).unwrap();
        let q = bi_uniform(&BiUniformSpec::new(m, 0.7, (0..m).step_by(2).collect()).unwrap());
        for (nu, nt, ns) in [(&u, 30, 10), (&q, 20, 50)] {
            let lq = LambdaQuadratic::new(&u, &q, nu, nt, ns).unwrap();
            let g = lq.optimal_gamma().unwrap();
            let num = numeric_min(|x| lq.at(x).main_term, g - 10.0 * g.abs() - 1.0, g + 10.0 * g.abs() + 1.0);
            let v = lq.vertex_value().unwrap();
            assert!(rel(num, v) < 1e-8, "{num} vs {v}");
        }
    }

    #[test]
    fn achievability_examples() {
        assert_eq!(achievability_exponent(1.0, 1.0).unwrap(), 0.00625);
        assert!(rel(achievability_exponent(0.5, 2.0).unwrap(), 9.765625e-5) < 1e-12);
        let a = achievability_exponent(0.4, 1.5).unwrap();
        assert!(achievability_exponent(0.5, 1.5).unwrap() > a);
        assert!(achievability_exponent(0.4, 2.0).unwrap() < a);
        assert!(achievability_exponent(0.0, 1.0).is_err());
    }

    #[test]
    fn compositions_enumerate_all() {
        let c = compositions(3, 3);
        assert_eq!(c.len(), 10);
        assert_eq!(c[0], vec![3, 0, 0]);
        assert_eq!(c[9], vec![0, 0, 3]);
        assert!(c.iter().all(|v| v.iter().sum::<u64>() == 3));
    }

    #[test]
    fn bruteforce_identical_hypotheses_is_half() {
        let p = Distribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let lrt = |jc: &JointCounts| oracle_lrt(jc.az(), &p, &p);
        for v in [
            exact_error_bruteforce(&p, &p, 2, 3, classify_t).unwrap(),
            exact_error_bruteforce(&p, &p, 3, 2, classify_f).unwrap(),
            exact_error_bruteforce(&p, &p, 2, 2, lrt).unwrap(),
        ] {
            assert!((v - 0.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn bruteforce_point_masses_are_separable() {
        let p = Distribution::new(vec![1.0, 0.0]).unwrap();
        let q = Distribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(exact_error_bruteforce(&p, &q, 2, 2, classify_t).unwrap(), 0.0);
    }

    /// Regression constant for `m = 4, N = n = 3, eps = 0.8`, `classify_f`,
    /// `(u, q^omega)`; the value was computed independently by enumerating
    /// all `4^9` raw sequence triples in exact rational arithmetic
    /// (12164913 / 32000000).
    pub(crate) const F_M4_N3_EPS08: f64 = 0.380_153_531_25;

    #[test]
    fn bruteforce_regression_constant() {
        let u = uniform(4).unwrap();
        let q = bi_uniform(&BiUniformSpec::canonical(4, 0.8).unwrap());
        let v = exact_error_bruteforce(&u, &q, 3, 3, classify_f).unwrap();
        assert!((v - F_M4_N3_EPS08).abs() < 1e-12, "{v}");
    }

    #[test]
    fn bruteforce_refuses_large_instances() {
        let u = uniform(20).unwrap();
        let err = exact_error_bruteforce(&u, &u, 10, 10, classify_t).unwrap_err();
        assert!(matches!(err, Error::EnumerationBudget { estimated, .. } if estimated > 1e8));
    }

    #[test]
    fn bruteforce_swap_symmetry() {
        let u = uniform(4).unwrap();
        let q = bi_uniform(&BiUniformSpec::canonical(4, 0.5).unwrap());
        for stat in [classify_t as fn(&JointCounts) -> Result<Decision>, classify_f] {
            let direct = exact_error_bruteforce(&u, &q, 3, 2, stat).unwrap();
            let mirrored = exact_error_bruteforce(&q, &u, 3, 2, |jc: &JointCounts| {
                Ok(stat(&jc.swapped_training())?.flipped())
            })
            .unwrap();
            assert!((direct - mirrored).abs() < 1e-14, "{direct} vs {mirrored}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn dp_uniform_agreement(m in 1u64..400, frac in 0.0f64..=1.0) {
            let n = (frac * m as f64).round() as u64;
            let dp = prob_all_distinct(&uniform(m as usize).unwrap(), n).value();
            let cf = prob_all_distinct_uniform(m, n).unwrap().value();
            if cf == 0.0 {
                prop_assert!(dp.abs() < 1e-14);
            } else {
                prop_assert!(rel(dp, cf) < 1e-10);
            }
        }

        #[test]
        fn dp_is_permutation_invariant(
            raw in prop::collection::vec(0.01f64..1.0, 2..40),
            n in 0u64..6,
        ) {
            let s: f64 = raw.iter().sum();
            let p = Distribution::new(raw.iter().map(|x| x / s).collect()).unwrap();
            let mut perm: Vec<usize> = (0..p.m()).collect();
            perm.reverse();
            perm.rotate_left(p.m() / 3);
            let a = prob_all_distinct(&p, n).value();
            let b = prob_all_distinct(&p.permuted(&perm).unwrap(), n).value();
            prop_assert!(a == b || rel(a, b) < 1e-12);
        }

        #[test]
        fn dp_nonincreasing_in_n(raw in prop::collection::vec(0.01f64..1.0, 2..30)) {
            let s: f64 = raw.iter().sum();
            let p = Distribution::new(raw.iter().map(|x| x / s).collect()).unwrap();
            let mut prev = 0.0;
            for n in 0..=p.m() as u64 + 1 {
                let v = prob_all_distinct(&p, n).value();
                prop_assert!(v <= prev + 1e-12);
                prev = v;
            }
        }

        #[test]
        fn lambda_breakdown_resums(gamma in -5.0f64..5.0, nt in 1u64..500, ns in 1u64..500) {
            let u = uniform(30).unwrap();
            let q = bi_uniform(&BiUniformSpec::canonical(30, 0.4).unwrap());
            let r = chernoff_lambda_bound(&u, &q, &q, gamma, nt, ns).unwrap();
            prop_assert_eq!(r.main_term, r.linear_term + r.quadratic_term);
            prop_assert_eq!(r.scale, ((nt * nt).min(nt * ns)) as f64);
        }
    }
}
