//! Test statistics over joint training/test counts and the induced decisions.
//!
//! Decision `H1` (1) attributes the test sample to the Y-source `mu`, `H0` (0)
//! to the X-source `pi`. Both statistics decide `H1` on a tie at zero.
//!
//! Both statistics are evaluated over the union of the three supports only,
//! and both are computed through an exact integer numerator: `F_n * (nN)^2`
//! and `T_n * (nN)^2` are integers. Decisions use the sign of the numerator,
//! and the reported `f64` value is the numerator divided once by `(nN)^2`.
//! Swapping the training histograms therefore negates both values bit for
//! bit, and relabeling symbols leaves them unchanged.

use serde::{Deserialize, Serialize};

use crate::alphabet_model::Distribution;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::sampling::Histogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    /// Test sample attributed to the X-source.
    H0,
    /// Test sample attributed to the Y-source.
    H1,
}

impl Decision {
    pub fn from_indicator(fires: bool) -> Self {
        if fires {
            Decision::H1
        } else {
            Decision::H0
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Decision::H0 => 0,
            Decision::H1 => 1,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Decision::H0 => Decision::H1,
            Decision::H1 => Decision::H0,
        }
    }
}

/// Training histograms `ax`, `ay` (both of size `N`) and test histogram `az`
/// (size `n`) over a common alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointCounts {
    ax: Histogram,
    ay: Histogram,
    az: Histogram,
}

impl JointCounts {
    pub fn new(ax: Histogram, ay: Histogram, az: Histogram) -> Result<Self> {
        if ax.m() != ay.m() || ax.m() != az.m() {
            return Err(Error::invalid_argument(format!(
                "histograms live on different alphabets: {}, {}, {}",
                ax.m(),
                ay.m(),
                az.m()
            )));
        }
        if ax.total() != ay.total() {
            return Err(Error::invalid_argument(format!(
                "training sizes differ: {} vs {}",
                ax.total(),
                ay.total()
            )));
        }
        Ok(Self { ax, ay, az })
    }

    pub fn into_parts(self) -> (Histogram, Histogram, Histogram) {
        (self.ax, self.ay, self.az)
    }

    pub fn ax(&self) -> &Histogram {
        &self.ax
    }

    pub fn ay(&self) -> &Histogram {
        &self.ay
    }

    pub fn az(&self) -> &Histogram {
        &self.az
    }

    pub fn m(&self) -> usize {
        self.ax.m()
    }

    /// `N`
    pub fn n_train(&self) -> u64 {
        self.ax.total()
    }

    /// `n`
    pub fn n_test(&self) -> u64 {
        self.az.total()
    }

    pub fn swapped_training(&self) -> Self {
        Self {
            ax: self.ay.clone(),
            ay: self.ax.clone(),
            az: self.az.clone(),
        }
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self {
            ax: self.ax.permuted(perm)?,
            ay: self.ay.permuted(perm)?,
            az: self.az.permuted(perm)?,
        })
    }

    /// Calls `f(ax_j, ay_j, az_j)` for every symbol in the union of the
    /// three supports, in increasing symbol order.
    pub fn for_each_joint(&self, f: impl FnMut(u64, u64, u64)) {
        merge_supports(
            self.ax.entries(),
            self.ay.entries(),
            self.az.entries(),
            f,
        );
    }
}

fn merge_supports(
    a: &[(u32, u32)],
    b: &[(u32, u32)],
    c: &[(u32, u32)],
    mut f: impl FnMut(u64, u64, u64),
) {
    const END: u64 = u64::MAX;
    let (mut i, mut j, mut k) = (0, 0, 0);
    loop {
        let sa = a.get(i).map_or(END, |e| e.0 as u64);
        let sb = b.get(j).map_or(END, |e| e.0 as u64);
        let sc = c.get(k).map_or(END, |e| e.0 as u64);
        let s = sa.min(sb).min(sc);
        if s == END {
            break;
        }
        let take = |sym: u64, list: &[(u32, u32)], idx: &mut usize| {
            if sym == s {
                let v = list[*idx].1 as u64;
                *idx += 1;
                v
            } else {
                0
            }
        };
        let x = take(sa, a, &mut i);
        let y = take(sb, b, &mut j);
        let z = take(sc, c, &mut k);
        f(x, y, z);
    }
}

fn require_sizes(jc: &JointCounts, min: u64) -> Result<(u64, u64)> {
    let (nt, ns) = (jc.n_train(), jc.n_test());
    if nt < min || ns < min {
        return Err(Error::invalid_argument(format!(
            "statistic needs N >= {min} and n >= {min}, got N={nt}, n={ns}"
        )));
    }
    Ok((nt, ns))
}

/// `F_n * (nN)^2 = sum_j (N az_j - n ax_j)^2 - (N az_j - n ay_j)^2`, exactly.
pub fn f_numerator(jc: &JointCounts) -> Result<i128> {
    let (nt, ns) = require_sizes(jc, 1)?;
    let (nt, ns) = (nt as i128, ns as i128);
    let mut acc: i128 = 0;
    jc.for_each_joint(|x, y, z| {
        let z = nt * z as i128;
        let dx = z - ns * x as i128;
        let dy = z - ns * y as i128;
        acc += dx * dx - dy * dy;
    });
    Ok(acc)
}

/// `F_n = ||az/n - ax/N||^2 - ||az/n - ay/N||^2`.
pub fn f_statistic(jc: &JointCounts) -> Result<f64> {
    let num = f_numerator(jc)?;
    Ok(num as f64 / scale_sq(jc))
}

fn scale_sq(jc: &JointCounts) -> f64 {
    let s = jc.n_train() as f64 * jc.n_test() as f64;
    s * s
}

/// Per-symbol indicator tallies of the weighted coincidence statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoincidenceTallies {
    /// `ax_j = 2, az_j = 0`, weight `+1/N^2`
    pub x_pair_z_absent: u64,
    /// `ax_j = 0, az_j = 2`, weight `+1/n^2`
    pub z_pair_x_absent: u64,
    /// `ax_j = 1, az_j = 1`, weight `-1/(nN)`
    pub x_z_single: u64,
    /// `ay_j = 1, az_j = 1`, weight `+1/(nN)`
    pub y_z_single: u64,
    /// `ay_j = 0, az_j = 2`, weight `-1/n^2`
    pub z_pair_y_absent: u64,
    /// `ay_j = 2, az_j = 0`, weight `-1/N^2`
    pub y_pair_z_absent: u64,
}

impl CoincidenceTallies {
    /// `T_n * (nN)^2`.
    pub fn numerator(&self, n_train: u64, n_test: u64) -> i128 {
        let (nt, ns) = (n_train as i128, n_test as i128);
        let d = |a: u64, b: u64| a as i128 - b as i128;
        d(self.x_pair_z_absent, self.y_pair_z_absent) * ns * ns
            + d(self.z_pair_x_absent, self.z_pair_y_absent) * nt * nt
            + d(self.y_z_single, self.x_z_single) * nt * ns
    }

    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

pub fn coincidence_tallies(jc: &JointCounts) -> CoincidenceTallies {
    let mut t = CoincidenceTallies::default();
    jc.for_each_joint(|x, y, z| {
        let hit = |c: bool| c as u64;
        t.x_pair_z_absent += hit(x == 2 && z == 0);
        t.z_pair_x_absent += hit(x == 0 && z == 2);
        t.x_z_single += hit(x == 1 && z == 1);
        t.y_z_single += hit(y == 1 && z == 1);
        t.z_pair_y_absent += hit(y == 0 && z == 2);
        t.y_pair_z_absent += hit(y == 2 && z == 0);
    });
    t
}

pub fn t_numerator(jc: &JointCounts) -> Result<i128> {
    let (nt, ns) = require_sizes(jc, 2)?;
    Ok(coincidence_tallies(jc).numerator(nt, ns))
}

/// The weighted coincidence statistic `T_n`.
pub fn t_statistic(jc: &JointCounts) -> Result<f64> {
    Ok(t_numerator(jc)? as f64 / scale_sq(jc))
}

/// `I{F_n >= 0}`
pub fn classify_f(jc: &JointCounts) -> Result<Decision> {
    Ok(Decision::from_indicator(f_numerator(jc)? >= 0))
}

/// `I{T_n >= 0}`
pub fn classify_t(jc: &JointCounts) -> Result<Decision> {
    Ok(Decision::from_indicator(t_numerator(jc)? >= 0))
}

/// Genie likelihood-ratio test that knows `(pi, mu)` and ignores training data.
#[derive(Debug, Clone)]
pub struct LikelihoodRatioTest {
    /// `ln mu_j - ln pi_j`; NaN where both vanish.
    log_ratio: Vec<f64>,
}

impl LikelihoodRatioTest {
    pub fn new(pi: &Distribution, mu: &Distribution) -> Result<Self> {
        if pi.m() != mu.m() {
            return Err(Error::invalid_argument("pi and mu live on different alphabets"));
        }
        let log_ratio = pi
            .probs()
            .iter()
            .zip(mu.probs())
            .map(|(&p, &q)| match (p > 0.0, q > 0.0) {
                (true, true) => q.ln() - p.ln(),
                (false, true) => f64::INFINITY,
                (true, false) => f64::NEG_INFINITY,
                (false, false) => f64::NAN,
            })
            .collect();
        Ok(Self { log_ratio })
    }

    /// `I{sum_j az_j (ln mu_j - ln pi_j) >= 0}`.
    ///
    /// When the sample is impossible under both hypotheses (infinite terms of
    /// both signs) the likelihoods tie at zero and the decision is `H1`.
    pub fn decide(&self, az: &Histogram) -> Result<Decision> {
        if az.m() != self.log_ratio.len() {
            return Err(Error::invalid_argument("test histogram alphabet mismatch"));
        }
        let (mut pos_inf, mut neg_inf) = (false, false);
        let mut sum = CompensatedSum::new();
        for (j, c) in az.iter() {
            let l = self.log_ratio[j];
            if l.is_nan() {
                return Err(Error::InvalidInput(format!(
                    "symbol {j} observed but has zero probability under both hypotheses"
                )));
            }
            if l == f64::INFINITY {
                pos_inf = true;
            } else if l == f64::NEG_INFINITY {
                neg_inf = true;
            } else {
                sum.add(c as f64 * l);
            }
        }
        Ok(match (pos_inf, neg_inf) {
            (true, false) => Decision::H1,
            (false, true) => Decision::H0,
            (true, true) => Decision::H1,
            (false, false) => Decision::from_indicator(sum.value() >= 0.0),
        })
    }
}

pub fn oracle_lrt(az: &Histogram, pi: &Distribution, mu: &Distribution) -> Result<Decision> {
    LikelihoodRatioTest::new(pi, mu)?.decide(az)
}

/// `phi_i` = number of symbols appearing exactly `i` times, for `i >= 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    /// `phi[i - 1]`, trailing zeros trimmed.
    phi: Vec<u64>,
}

impl Profile {
    pub fn phi(&self, multiplicity: usize) -> u64 {
        if multiplicity == 0 {
            return 0;
        }
        self.phi.get(multiplicity - 1).copied().unwrap_or(0)
    }

    /// `[phi_1, phi_2, ...]` up to the largest nonzero multiplicity.
    pub fn as_slice(&self) -> &[u64] {
        &self.phi
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// `sum_i i * phi_i`
    pub fn sample_size(&self) -> u64 {
        self.phi
            .iter()
            .enumerate()
            .map(|(i, &p)| (i as u64 + 1) * p)
            .sum()
    }

    /// `sum_i phi_i`
    pub fn distinct_symbols(&self) -> u64 {
        self.phi.iter().sum()
    }
}

pub fn profile(h: &Histogram) -> Profile {
    let mut phi = vec![0u64; h.max_count() as usize];
    for (_, c) in h.iter() {
        phi[c as usize - 1] += 1;
    }
    let p = Profile { phi };
    debug_assert_eq!(p.sample_size(), h.total());
    p
}

/// No symbol repeats within either training histogram.
pub fn event_a(ax: &Histogram, ay: &Histogram) -> bool {
    ax.max_count() <= 1 && ay.max_count() <= 1
}

/// The test histogram has no repeats and is disjoint from both training
/// supports.
pub fn event_b(jc: &JointCounts) -> bool {
    let mut ok = true;
    jc.for_each_joint(|x, y, z| {
        if z > 1 || (z > 0 && (x > 0 || y > 0)) {
            ok = false;
        }
    });
    ok
}
