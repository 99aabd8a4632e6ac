//! Seeded Monte Carlo estimates of the average error, grid sweeps with an
//! exponent fit, and the count-spike experiment against the l2 classifier.
//!
//! Trial `t` of a run draws every sequence from its own ChaCha stream keyed by
//! `(master_seed, t, stream)`, so tallies do not depend on how trials are
//! split across workers.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet_model::{
    bi_uniform, check_class_membership, uniform, BiUniformSpec, Distribution, ModelClassParams,
};
use crate::classifiers::{classify_f, classify_t, Decision, JointCounts, LikelihoodRatioTest};
use crate::error::{Error, Result};
use crate::exact_analysis::{normalization_r, prob_c_n};
use crate::numeric::normal_quantile_two_sided;
use crate::sampling::{ConditionedSampler, Histogram, HistogramSampler, SeedSpec, Stream};

/// Trials per scheduling unit.
const BATCH: u64 = 2048;

pub const DEFAULT_CONFIDENCE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub m: usize,
    /// `N`
    pub n_train: u64,
    /// `n`
    pub n_test: u64,
}

impl GridPoint {
    pub fn new(m: usize, n_train: u64, n_test: u64) -> Self {
        Self { m, n_train, n_test }
    }

    pub fn r(&self) -> Result<f64> {
        normalization_r(self.n_train, self.n_test, self.m as u64)
    }
}

impl fmt::Display for GridPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(m={}, N={}, n={})", self.m, self.n_train, self.n_test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassifierId {
    F,
    T,
    Oracle,
}

impl ClassifierId {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierId::F => "F",
            ClassifierId::T => "T",
            ClassifierId::Oracle => "ORACLE",
        }
    }

    /// Smallest sample sizes the statistic is defined for.
    fn min_sizes(self) -> u64 {
        match self {
            ClassifierId::F | ClassifierId::Oracle => 1,
            ClassifierId::T => 2,
        }
    }
}

impl fmt::Display for ClassifierId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "F" => Ok(ClassifierId::F),
            "T" => Ok(ClassifierId::T),
            "ORACLE" | "LRT" => Ok(ClassifierId::Oracle),
            other => Err(Error::invalid_argument(format!(
                "unknown classifier '{other}' (expected F, T or ORACLE)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub trials: u64,
    /// Trials whose `Z ~ pi` leg was classified `H1`.
    pub errors_h0: u64,
    /// Trials whose `Z ~ mu` leg was classified `H0`.
    pub errors_h1: u64,
    /// `(errors_h0 + errors_h1) / (2 trials)`
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    /// No errors observed; `ci_high` is then the rule-of-three bound `3 / trials`.
    pub censored: bool,
}

impl ErrorEstimate {
    pub fn from_tallies(trials: u64, errors_h0: u64, errors_h1: u64, confidence: f64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::invalid_argument("need at least one trial"));
        }
        if errors_h0 > trials || errors_h1 > trials {
            return Err(Error::invalid_argument(format!(
                "error tallies ({errors_h0}, {errors_h1}) exceed {trials} trials"
            )));
        }
        let errors = errors_h0 + errors_h1;
        let legs = 2 * trials;
        let p_hat = errors as f64 / legs as f64;
        let (mut ci_low, mut ci_high) = wilson_interval(errors, legs, confidence)?;
        let censored = errors == 0;
        if censored {
            ci_low = 0.0;
            ci_high = (3.0 / trials as f64).min(1.0);
        }
        Ok(Self {
            trials,
            errors_h0,
            errors_h1,
            p_hat,
            ci_low: ci_low.min(p_hat),
            ci_high: ci_high.max(p_hat),
            confidence,
            censored,
        })
    }

    pub fn overlaps(&self, other: &ErrorEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Wilson score interval for `successes` out of `n` at a two-sided level.
pub fn wilson_interval(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid_argument("Wilson interval needs n >= 1"));
    }
    if successes > n {
        return Err(Error::invalid_argument(format!("{successes} successes out of {n}")));
    }
    check_confidence(confidence)?;
    let z = normal_quantile_two_sided(confidence);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2n = z * z / nf;
    let denom = 1.0 + z2n;
    let center = (p + 0.5 * z2n) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt();
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

fn check_confidence(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid_argument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// Runs `body(start, end)` over fixed trial batches on a local pool and adds
/// the returned tallies.
fn run_batched<F>(trials: u64, threads: Option<usize>, body: F) -> Result<(u64, u64)>
where
    F: Fn(u64, u64) -> Result<(u64, u64)> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid_argument(format!("thread pool: {e}")))?;
    let batches = trials.div_ceil(BATCH);
    pool.install(|| {
        (0..batches)
            .into_par_iter()
            .map(|b| body(b * BATCH, ((b + 1) * BATCH).min(trials)))
            .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
    })
}

enum Decider {
    F,
    T,
    Oracle(LikelihoodRatioTest),
}

impl Decider {
    fn new(id: ClassifierId, pi: &Distribution, mu: &Distribution) -> Result<Self> {
        Ok(match id {
            ClassifierId::F => Decider::F,
            ClassifierId::T => Decider::T,
            ClassifierId::Oracle => Decider::Oracle(LikelihoodRatioTest::new(pi, mu)?),
        })
    }

    fn decide(&self, jc: &JointCounts) -> Result<Decision> {
        match self {
            Decider::F => classify_f(jc),
            Decider::T => classify_t(jc),
            Decider::Oracle(lrt) => lrt.decide(jc.az()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    pub n_train: u64,
    pub n_test: u64,
    pub classifier: ClassifierId,
    pub trials: u64,
    pub master_seed: u64,
    pub confidence: f64,
    /// Worker count; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Class membership is checked when present.
    pub class_params: Option<ModelClassParams>,
    /// Run anyway when the pair violates the class constraints.
    pub allow_outside_class: bool,
}

impl EstimateConfig {
    pub fn new(n_train: u64, n_test: u64, classifier: ClassifierId, trials: u64, master_seed: u64) -> Self {
        Self {
            n_train,
            n_test,
            classifier,
            trials,
            master_seed,
            confidence: DEFAULT_CONFIDENCE,
            threads: None,
            class_params: None,
            allow_outside_class: false,
        }
    }
}

/// Monte Carlo estimate of `1/2 P(phi = 1 | Z ~ pi) + 1/2 P(phi = 0 | Z ~ mu)`.
///
/// Each trial shares one training draw `(ax ~ pi^N, ay ~ mu^N)` between the
/// two test legs `az ~ pi^n` (stream `Z`) and `az ~ mu^n` (stream `ZAlt`).
pub fn estimate_error(pi: &Distribution, mu: &Distribution, cfg: &EstimateConfig) -> Result<ErrorEstimate> {
    if cfg.trials == 0 {
        return Err(Error::invalid_argument("need at least one trial"));
    }
    check_confidence(cfg.confidence)?;
    if pi.m() != mu.m() {
        return Err(Error::invalid_argument("pi and mu live on different alphabets"));
    }
    let min = cfg.classifier.min_sizes();
    if cfg.n_train < min || cfg.n_test < min {
        return Err(Error::invalid_argument(format!(
            "classifier {} needs N, n >= {min}; got N={}, n={}",
            cfg.classifier, cfg.n_train, cfg.n_test
        )));
    }
    if let Some(params) = &cfg.class_params {
        let report = check_class_membership(pi, mu, params)?;
        if !report.is_member() && !cfg.allow_outside_class {
            return Err(Error::OutsideModelClass(report));
        }
    }
    let decider = Decider::new(cfg.classifier, pi, mu)?;
    let (sp, sm) = (HistogramSampler::new(pi), HistogramSampler::new(mu));
    let m = pi.m();
    let (h0, h1) = run_batched(cfg.trials, cfg.threads, |start, end| {
        let (mut ax, mut ay) = (Histogram::empty(m), Histogram::empty(m));
        let mut az = Histogram::empty(m);
        let mut scratch = Vec::new();
        let (mut e0, mut e1) = (0u64, 0u64);
        for t in start..end {
            let rng = |s| SeedSpec::new(cfg.master_seed, t, s).rng();
            sp.sample_into(cfg.n_train, &mut rng(Stream::X), &mut ax, &mut scratch);
            sm.sample_into(cfg.n_train, &mut rng(Stream::Y), &mut ay, &mut scratch);
            sp.sample_into(cfg.n_test, &mut rng(Stream::Z), &mut az, &mut scratch);
            let jc = JointCounts::new(ax, ay, az)?;
            e0 += (decider.decide(&jc)? == Decision::H1) as u64;
            (ax, ay, az) = jc.into_parts();
            sm.sample_into(cfg.n_test, &mut rng(Stream::ZAlt), &mut az, &mut scratch);
            let jc = JointCounts::new(ax, ay, az)?;
            e1 += (decider.decide(&jc)? == Decision::H0) as u64;
            (ax, ay, az) = jc.into_parts();
        }
        Ok((e0, e1))
    })?;
    ErrorEstimate::from_tallies(cfg.trials, h0, h1, cfg.confidence)
}

/// The pair `(u, q^omega)` with the heavy half first.
pub fn canonical_pair(m: usize, epsilon: f64) -> Result<(Distribution, Distribution)> {
    if m == 0 || m % 2 != 0 {
        return Err(Error::invalid_argument(format!(
            "the bi-uniform pair needs an even alphabet size, got m={m}"
        )));
    }
    Ok((uniform(m)?, bi_uniform(&BiUniformSpec::canonical(m, epsilon)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid: Vec<GridPoint>,
    pub epsilon: f64,
    pub c_bar: f64,
    pub classifier: ClassifierId,
    pub trials_per_point: u64,
    pub confidence: f64,
    pub master_seed: u64,
    pub threads: Option<usize>,
    /// Require `max(N, n) < m` at every point.
    pub check_sparse: bool,
    /// Require `m < min(N^2, N n)` at every point.
    pub check_consistency: bool,
    pub allow_outside_class: bool,
}

impl SweepConfig {
    pub fn new(grid: Vec<GridPoint>, epsilon: f64, classifier: ClassifierId, trials_per_point: u64) -> Self {
        Self {
            grid,
            epsilon,
            c_bar: 1.0 + epsilon,
            classifier,
            trials_per_point,
            confidence: DEFAULT_CONFIDENCE,
            master_seed: 0,
            threads: None,
            check_sparse: false,
            check_consistency: false,
            allow_outside_class: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::invalid_argument("grid is empty"));
        }
        if self.trials_per_point == 0 {
            return Err(Error::invalid_argument("trials per point must be positive"));
        }
        check_confidence(self.confidence)?;
        for p in &self.grid {
            if p.m == 0 || p.m % 2 != 0 {
                return Err(Error::invalid_argument(format!(
                    "grid point {p}: the bi-uniform pair needs an even alphabet size"
                )));
            }
            let min = self.classifier.min_sizes();
            if p.n_train < min || p.n_test < min {
                return Err(Error::invalid_argument(format!(
                    "grid point {p}: classifier {} needs N, n >= {min}",
                    self.classifier
                )));
            }
            let m = p.m as u128;
            let (nt, ns) = (p.n_train as u128, p.n_test as u128);
            if self.check_sparse && nt.max(ns) >= m {
                return Err(Error::invalid_argument(format!(
                    "grid point {p} violates the sparse regime max(N, n) < m"
                )));
            }
            if self.check_consistency && m >= (nt * nt).min(nt * ns) {
                return Err(Error::invalid_argument(format!(
                    "grid point {p} violates the consistency regime m < min(N^2, N n)"
                )));
            }
        }
        Ok(())
    }

    /// Seed of grid point `index`.
    pub fn point_seed(&self, index: usize) -> u64 {
        self.master_seed
            .wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub point: GridPoint,
    pub r: f64,
    pub estimate: ErrorEstimate,
}

/// Estimates the error at every grid point, in grid order.
pub fn run_grid(cfg: &SweepConfig) -> Result<Vec<PointEstimate>> {
    cfg.validate()?;
    cfg.grid
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (pi, mu) = canonical_pair(p.m, cfg.epsilon)?;
            let est_cfg = EstimateConfig {
                n_train: p.n_train,
                n_test: p.n_test,
                classifier: cfg.classifier,
                trials: cfg.trials_per_point,
                master_seed: cfg.point_seed(i),
                confidence: cfg.confidence,
                threads: cfg.threads,
                class_params: Some(ModelClassParams::new(cfg.epsilon, cfg.c_bar, p.m)?),
                allow_outside_class: cfg.allow_outside_class,
            };
            Ok(PointEstimate {
                point: *p,
                r: p.r()?,
                estimate: estimate_error(&pi, &mu, &est_cfg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub point: GridPoint,
    pub r: f64,
    /// `-ln p_hat`; absent for censored points.
    pub minus_log_pe: Option<f64>,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub points: Vec<FitPoint>,
    /// Estimated exponent `J`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub censored_points: Vec<GridPoint>,
}

fn distinct_r(rs: impl Iterator<Item = f64>) -> bool {
    let mut first = None;
    for r in rs {
        match first {
            None => first = Some(r),
            Some(f) if f != r => return true,
            _ => {}
        }
    }
    false
}

/// Least squares of `-ln p_hat` on `r` with intercept over the uncensored
/// points.
pub fn fit_exponent(rows: &[PointEstimate]) -> Result<ExponentFit> {
    if rows.is_empty() {
        return Err(Error::invalid_argument("nothing to fit"));
    }
    let points: Vec<FitPoint> = rows
        .iter()
        .map(|row| FitPoint {
            point: row.point,
            r: row.r,
            minus_log_pe: (!row.estimate.censored).then(|| -row.estimate.p_hat.ln()),
            ci_low: row.estimate.ci_low,
            ci_high: row.estimate.ci_high,
        })
        .collect();
    let censored_points: Vec<GridPoint> = rows
        .iter()
        .filter(|row| row.estimate.censored)
        .map(|row| row.point)
        .collect();
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.minus_log_pe.map(|y| (p.r, y)))
        .collect();
    if xy.is_empty() {
        return Err(Error::AllCensored {
            censored: censored_points,
        });
    }
    if !distinct_r(xy.iter().map(|p| p.0)) {
        return Err(Error::DegenerateGrid(format!(
            "the {} uncensored point(s) share one value of r; the slope is undefined",
            xy.len()
        )));
    }
    let n = xy.len() as f64;
    let mean_x = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(ExponentFit {
        points,
        slope,
        intercept,
        r_squared,
        censored_points,
    })
}

/// Fails with [`Error::DegenerateGrid`] when every point has the same `r`.
pub fn ensure_r_spread(grid: &[GridPoint]) -> Result<()> {
    let rs = grid.iter().map(|p| p.r()).collect::<Result<Vec<f64>>>()?;
    if !distinct_r(rs.into_iter()) {
        return Err(Error::DegenerateGrid(
            "every grid point has the same r; the slope is undefined".into(),
        ));
    }
    Ok(())
}

pub fn sweep_and_fit(cfg: &SweepConfig) -> Result<ExponentFit> {
    cfg.validate()?;
    ensure_r_spread(&cfg.grid)?;
    fit_exponent(&run_grid(cfg)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub m: usize,
    pub n_train: u64,
    pub n_test: u64,
    pub epsilon: f64,
    /// Pinned count `floor(4 n / sqrt(m))` of symbol 1 in `Y`.
    pub k: u64,
    pub trials: u64,
    pub misses: u64,
    pub p_cond: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub confidence: f64,
    /// `ln P(C_n)`
    pub log_prob_cn: f64,
    /// `-4 (n / sqrt(m)) ln m`
    pub asymptote: f64,
    /// `ln(1/2) + ln P(C_n) + ln p_cond`, a lower bound on `ln P_e` of the l2 classifier.
    pub bound: f64,
}

/// Conditional miss rate of the l2 classifier under `(pi, mu) = (q, u)` with
/// `Z ~ u`, given that symbol 1 appears exactly `k = floor(4n/sqrt(m))` times
/// in `Y`.
///
/// The spike inflates `||ay/N - az/n||` by about `(k/N)^2`, far more than the
/// `eps^2/m` gap separating the hypotheses, so the classifier sides with `X`.
pub fn conditional_false_alarm_experiment(
    m: usize,
    n_train: u64,
    n_test: u64,
    epsilon: f64,
    trials: u64,
    master_seed: u64,
    confidence: f64,
    threads: Option<usize>,
) -> Result<CounterexampleReport> {
    if trials == 0 {
        return Err(Error::invalid_argument("need at least one trial"));
    }
    check_confidence(confidence)?;
    let (u, q) = canonical_pair(m, epsilon)?;
    let spike = prob_c_n(m as u64, n_train, n_test)?;
    let k = spike.k;
    if k == 0 {
        return Err(Error::invalid_argument(format!(
            "spike count floor(4n/sqrt(m)) is 0 at m={m}, n={n_test}; need 4n >= sqrt(m)"
        )));
    }
    if k > n_train {
        return Err(Error::invalid_argument(format!(
            "spike count {k} exceeds the training size N={n_train}"
        )));
    }
    let sx = HistogramSampler::new(&q);
    let sy = ConditionedSampler::new(&u, n_train, 0, k)?;
    let sz = HistogramSampler::new(&u);
    let (misses, _) = run_batched(trials, threads, |start, end| {
        let (mut ax, mut az) = (Histogram::empty(m), Histogram::empty(m));
        let mut scratch = Vec::new();
        let mut misses = 0u64;
        for t in start..end {
            let rng = |s| SeedSpec::new(master_seed, t, s).rng();
            sx.sample_into(n_train, &mut rng(Stream::X), &mut ax, &mut scratch);
            let ay = sy.sample(&mut rng(Stream::Y));
            sz.sample_into(n_test, &mut rng(Stream::Z), &mut az, &mut scratch);
            let jc = JointCounts::new(ax, ay, az)?;
            misses += (classify_f(&jc)? == Decision::H0) as u64;
            (ax, _, az) = jc.into_parts();
        }
        Ok((misses, 0))
    })?;
    let p_cond = misses as f64 / trials as f64;
    let (ci_low, ci_high) = wilson_interval(misses, trials, confidence)?;
    let log_prob_cn = spike.log_prob.value();
    Ok(CounterexampleReport {
        m,
        n_train,
        n_test,
        epsilon,
        k,
        trials,
        misses,
        p_cond,
        ci_low: ci_low.min(p_cond),
        ci_high: ci_high.max(p_cond),
        confidence,
        log_prob_cn,
        asymptote: spike.asymptote,
        bound: 0.5f64.ln() + log_prob_cn + p_cond.ln(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub m: usize,
    /// `N = n = ceil(m^alpha)`
    pub n: u64,
    pub r: f64,
    pub estimate: ErrorEstimate,
}

/// `T`-classifier errors at `(u, q^omega)` along `N = n = ceil(m^alpha)`.
pub fn consistency_boundary_sweep(
    m_list: &[usize],
    alpha: f64,
    epsilon: f64,
    trials: u64,
    master_seed: u64,
) -> Result<Vec<BoundaryRow>> {
    consistency_boundary_sweep_with(m_list, alpha, epsilon, trials, master_seed, DEFAULT_CONFIDENCE, None)
}

pub fn consistency_boundary_sweep_with(
    m_list: &[usize],
    alpha: f64,
    epsilon: f64,
    trials: u64,
    master_seed: u64,
    confidence: f64,
    threads: Option<usize>,
) -> Result<Vec<BoundaryRow>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid_argument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let grid = m_list
        .iter()
        .map(|&m| {
            let n = ((m as f64).powf(alpha).ceil() as u64).max(2);
            GridPoint::new(m, n, n)
        })
        .collect();
    let cfg = SweepConfig {
        confidence,
        master_seed,
        threads,
        ..SweepConfig::new(grid, epsilon, ClassifierId::T, trials)
    };
    Ok(run_grid(&cfg)?
        .into_iter()
        .map(|row| BoundaryRow {
            m: row.point.m,
            n: row.point.n_train,
            r: row.r,
            estimate: row.estimate,
        })
        .collect())
}
