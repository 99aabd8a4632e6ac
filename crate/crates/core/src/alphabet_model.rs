//! Distributions over a finite alphabet `[m]`, the uniform and bi-uniform
//! families, and membership in the model class of rare-symbol pairs.
//!
//! Symbols are 0-based indices `0..m` throughout the crate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Absolute tolerance for the sum-to-one check and the l1 identities.
pub const PROB_TOLERANCE: f64 = 1e-12;

/// A probability vector over `[m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates nonnegativity and that the entries sum to one within
    /// [`PROB_TOLERANCE`] (compensated summation).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid_argument("distribution needs at least one symbol"));
        }
        if let Some((j, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::invalid_argument(format!(
                "probability of symbol {j} is {p}, expected a finite nonnegative value"
            )));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > PROB_TOLERANCE {
            return Err(Error::invalid_argument(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn m(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Sum of squared probabilities, the single-pair collision probability.
    pub fn collision_mass(&self) -> f64 {
        compensated_sum(self.probs.iter().map(|p| p * p))
    }

    /// Returns the distribution with symbols relabeled so that new symbol
    /// `perm[j]` carries the mass of old symbol `j`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.m())?;
        let mut probs = vec![0.0; self.m()];
        for (j, &p) in self.probs.iter().enumerate() {
            probs[perm[j]] = p;
        }
        Ok(Self { probs })
    }
}

pub(crate) fn check_permutation(perm: &[usize], m: usize) -> Result<()> {
    if perm.len() != m {
        return Err(Error::invalid_argument(format!(
            "permutation has length {}, alphabet has {m} symbols",
            perm.len()
        )));
    }
    let mut seen = vec![false; m];
    for &j in perm {
        if j >= m || std::mem::replace(&mut seen[j], true) {
            return Err(Error::invalid_argument("not a permutation of the alphabet"));
        }
    }
    Ok(())
}

/// Text form: first line `m`, second line whitespace-separated probabilities.
impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.m())?;
        let line = self
            .probs
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join(" ");
        writeln!(f, "{line}")
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidInput("empty distribution text".into()))?;
        let m: usize = header.trim().parse().map_err(|_| {
            Error::InvalidInput(format!("first line must be the alphabet size, got {header:?}"))
        })?;
        let probs = lines
            .flat_map(str::split_whitespace)
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("bad probability {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if probs.len() != m {
            return Err(Error::InvalidInput(format!(
                "header declares {m} symbols but {} probabilities follow",
                probs.len()
            )));
        }
        Distribution::new(probs).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Parameters of the model class: l1 separation `epsilon` and rarity
/// constant `c_bar` (every symbol has probability at most `c_bar / m`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelClassParams {
    pub epsilon: f64,
    pub c_bar: f64,
    pub m: usize,
}

impl ModelClassParams {
    pub fn new(epsilon: f64, c_bar: f64, m: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 2.0) {
            return Err(Error::invalid_argument(format!(
                "epsilon must lie in (0, 2], got {epsilon}"
            )));
        }
        if !(c_bar >= 1.0) || !c_bar.is_finite() {
            return Err(Error::invalid_argument(format!("c_bar must be >= 1, got {c_bar}")));
        }
        if m == 0 {
            return Err(Error::invalid_argument("alphabet size must be positive"));
        }
        Ok(Self { epsilon, c_bar, m })
    }
}

/// A bi-uniform specification: mass `(1+eps)/m` on the half-alphabet `omega`,
/// `(1-eps)/m` on its complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiUniformSpec {
    m: usize,
    epsilon: f64,
    omega: Vec<usize>,
}

impl BiUniformSpec {
    pub fn new(m: usize, epsilon: f64, mut omega: Vec<usize>) -> Result<Self> {
        if m == 0 || m % 2 != 0 {
            return Err(Error::invalid_argument(format!(
                "bi-uniform distributions need an even alphabet size, got m={m}"
            )));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::invalid_argument(format!(
                "bi-uniform epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        omega.sort_unstable();
        omega.dedup();
        if omega.len() != m / 2 {
            return Err(Error::invalid_argument(format!(
                "omega must contain exactly m/2 = {} distinct symbols, got {}",
                m / 2,
                omega.len()
            )));
        }
        if let Some(&j) = omega.iter().find(|&&j| j >= m) {
            return Err(Error::invalid_argument(format!("omega symbol {j} is outside [0, {m})")));
        }
        Ok(Self { m, epsilon, omega })
    }

    /// The representative with `omega = {0, .., m/2 - 1}` (heavy first half).
    pub fn canonical(m: usize, epsilon: f64) -> Result<Self> {
        Self::new(m, epsilon, (0..m / 2).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }
}

pub fn uniform(m: usize) -> Result<Distribution> {
    if m == 0 {
        return Err(Error::invalid_argument("uniform distribution needs m >= 1"));
    }
    Ok(Distribution {
        probs: vec![1.0 / m as f64; m],
    })
}

pub fn bi_uniform(spec: &BiUniformSpec) -> Distribution {
    let m = spec.m as f64;
    let light = (1.0 - spec.epsilon) / m;
    let heavy = (1.0 + spec.epsilon) / m;
    let mut probs = vec![light; spec.m];
    for &j in &spec.omega {
        probs[j] = heavy;
    }
    Distribution { probs }
}

pub fn l1_distance(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.m() != q.m() {
        return Err(Error::invalid_argument(format!(
            "alphabet sizes differ: {} vs {}",
            p.m(),
            q.m()
        )));
    }
    Ok(compensated_sum(
        p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case")]
pub enum Violation {
    L1Separation { distance: f64, required: f64 },
    RarityPi { symbol: usize, prob: f64, bound: f64 },
    RarityMu { symbol: usize, prob: f64, bound: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::L1Separation { distance, required } => {
                write!(f, "l1 separation: distance {distance} < epsilon {required}")
            }
            Violation::RarityPi { symbol, prob, bound } => {
                write!(f, "rarity bound on pi: symbol {symbol} has {prob} > {bound}")
            }
            Violation::RarityMu { symbol, prob, bound } => {
                write!(f, "rarity bound on mu: symbol {symbol} has {prob} > {bound}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub l1_distance: f64,
    pub max_pi: f64,
    pub max_mu: f64,
    pub violations: Vec<Violation>,
}

impl MembershipReport {
    pub fn is_member(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for MembershipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "member");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks `||mu - pi||_1 >= epsilon` and `max_j pi_j, max_j mu_j <= c_bar/m`.
///
/// Both comparisons allow [`PROB_TOLERANCE`] of slack so that constructions
/// saturating a constraint exactly (e.g. `(u, q^omega)` with `c_bar = 1 + eps`)
/// are accepted despite rounding. Only the first offending symbol per
/// distribution is reported.
pub fn check_class_membership(
    pi: &Distribution,
    mu: &Distribution,
    params: &ModelClassParams,
) -> Result<MembershipReport> {
    if pi.m() != params.m || mu.m() != params.m {
        return Err(Error::invalid_argument(format!(
            "alphabet sizes ({}, {}) do not match class parameter m={}",
            pi.m(),
            mu.m(),
            params.m
        )));
    }
    let distance = l1_distance(pi, mu)?;
    let bound = params.c_bar / params.m as f64;
    let mut violations = Vec::new();
    if distance < params.epsilon - PROB_TOLERANCE {
        violations.push(Violation::L1Separation {
            distance,
            required: params.epsilon,
        });
    }
    let over = |d: &Distribution| {
        d.probs
            .iter()
            .enumerate()
            .find(|(_, &p)| p > bound * (1.0 + PROB_TOLERANCE))
            .map(|(j, &p)| (j, p))
    };
    if let Some((symbol, prob)) = over(pi) {
        violations.push(Violation::RarityPi { symbol, prob, bound });
    }
    if let Some((symbol, prob)) = over(mu) {
        violations.push(Violation::RarityMu { symbol, prob, bound });
    }
    Ok(MembershipReport {
        l1_distance: distance,
        max_pi: pi.max_prob(),
        max_mu: mu.max_prob(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform(4).unwrap().probs(), &[0.25; 4]);
        assert_eq!(uniform(1).unwrap().probs(), &[1.0]);
        let u10 = uniform(10).unwrap();
        assert!(u10.probs().iter().all(|&p| p == 0.1));
        assert!((compensated_sum(u10.probs().iter().copied()) - 1.0).abs() < 1e-15);
        assert!(matches!(uniform(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn bi_uniform_examples() {
        let q = bi_uniform(&BiUniformSpec::new(4, 0.5, vec![0, 1]).unwrap());
        assert_eq!(q.probs(), &[0.375, 0.375, 0.125, 0.125]);

        let q = bi_uniform(&BiUniformSpec::new(2, 0.5, vec![0]).unwrap());
        assert_eq!(q.probs(), &[0.75, 0.25]);

        let q = bi_uniform(&BiUniformSpec::new(6, 0.3, vec![0, 2, 4]).unwrap());
        for j in [0, 2, 4] {
            assert!((q.prob(j) - 1.3 / 6.0).abs() < 1e-15);
        }
        for j in [1, 3, 5] {
            assert!((q.prob(j) - 0.7 / 6.0).abs() < 1e-15);
        }
        let d = l1_distance(&uniform(6).unwrap(), &q).unwrap();
        assert!((d - 0.3).abs() < PROB_TOLERANCE);
    }

    #[test]
    fn bi_uniform_rejects_bad_specs() {
        assert!(BiUniformSpec::new(5, 0.5, vec![0, 1]).is_err());
        assert!(BiUniformSpec::new(4, 0.5, vec![0]).is_err());
        assert!(BiUniformSpec::new(4, 0.5, vec![0, 0]).is_err());
        assert!(BiUniformSpec::new(4, 0.5, vec![0, 7]).is_err());
        assert!(BiUniformSpec::new(4, 1.0, vec![0, 1]).is_err());
        assert!(BiUniformSpec::new(4, 0.0, vec![0, 1]).is_err());
    }

    #[test]
    fn l1_examples() {
        let p = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(l1_distance(&p, &p).unwrap(), 0.0);
        let a = Distribution::new(vec![1.0, 0.0]).unwrap();
        let b = Distribution::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(l1_distance(&a, &b).unwrap(), 2.0);
        assert!(l1_distance(&a, &p).is_err());
    }

    #[test]
    fn membership_examples() {
        let m = 8;
        let eps = 0.4;
        let u = uniform(m).unwrap();
        let q = bi_uniform(&BiUniformSpec::canonical(m, eps).unwrap());
        let params = ModelClassParams::new(eps, 1.0 + eps, m).unwrap();
        assert!(check_class_membership(&u, &q, &params).unwrap().is_member());

        let report = check_class_membership(&u, &u, &params).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::L1Separation { .. }));
        assert!(report.to_string().starts_with("l1 separation"));

        // pi_0 = 2 c_bar / m
        let c_bar = 1.5;
        let mut probs = vec![0.0; m];
        probs[0] = 2.0 * c_bar / m as f64;
        let rest = (1.0 - probs[0]) / (m - 1) as f64;
        probs[1..].iter_mut().for_each(|p| *p = rest);
        let pi = Distribution::new(probs).unwrap();
        let params = ModelClassParams::new(0.1, c_bar, m).unwrap();
        let report = check_class_membership(&pi, &u, &params).unwrap();
        assert!(!report.is_member());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::RarityPi { symbol: 0, .. })));
        assert!(report.to_string().contains("rarity bound on pi"));
    }

    #[test]
    fn text_form_roundtrips() {
        let q = bi_uniform(&BiUniformSpec::new(6, 0.3, vec![1, 3, 5]).unwrap());
        let parsed: Distribution = q.to_string().parse().unwrap();
        assert_eq!(parsed, q);
        assert!("3\n0.5 0.5".parse::<Distribution>().is_err());
        assert!("2\n0.5 0.6".parse::<Distribution>().is_err());
        assert!("x\n1".parse::<Distribution>().is_err());
    }

    #[test]
    fn rejects_invalid_vectors() {
        assert!(Distribution::new(vec![]).is_err());
        assert!(Distribution::new(vec![-0.1, 1.1]).is_err());
        assert!(Distribution::new(vec![0.5, 0.4]).is_err());
        assert!(Distribution::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn large_uniform_sums_to_one() {
        let u = uniform(10_000_000).unwrap();
        let s = compensated_sum(u.probs().iter().copied());
        assert!((s - 1.0).abs() < PROB_TOLERANCE);
    }

    fn spec_strategy() -> impl Strategy<Value = BiUniformSpec> {
        (1usize..200, 0.001f64..0.999, any::<u64>()).prop_map(|(half, eps, seed)| {
            let m = 2 * half;
            // seeded Fisher-Yates to pick a half-subset
            let mut idx: Vec<usize> = (0..m).collect();
            let mut s = seed;
            for i in (1..m).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                idx.swap(i, j);
            }
            idx.truncate(half);
            BiUniformSpec::new(m, eps, idx).unwrap()
        })
    }

    proptest! {
        #[test]
        fn bi_uniform_is_eps_from_uniform(spec in spec_strategy()) {
            let q = bi_uniform(&spec);
            let u = uniform(spec.m()).unwrap();
            prop_assert!((l1_distance(&u, &q).unwrap() - spec.epsilon()).abs() <= PROB_TOLERANCE);
            let params = ModelClassParams::new(spec.epsilon(), 1.0 + spec.epsilon(), spec.m()).unwrap();
            prop_assert!(check_class_membership(&u, &q, &params).unwrap().is_member());
        }

        #[test]
        fn bi_uniform_invariant_under_within_half_permutations(spec in spec_strategy()) {
            // rotate the symbols of omega among themselves, and likewise the complement
            let m = spec.m();
            let heavy = spec.omega().to_vec();
            let light: Vec<usize> = (0..m).filter(|j| heavy.binary_search(j).is_err()).collect();
            let mut perm = vec![0; m];
            for group in [&heavy, &light] {
                for (i, &j) in group.iter().enumerate() {
                    perm[j] = group[(i + 1) % group.len()];
                }
            }
            let q = bi_uniform(&spec);
            prop_assert_eq!(q.permuted(&perm).unwrap(), q);
        }
    }
}
