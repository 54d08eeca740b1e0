//! Generalized (Poisson) binomial distribution: the law of a sum of
//! independent Bernoulli variables with individual success probabilities.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::ln_choose;

/// Largest vector accepted by [`brute_force_pmf`].
pub const BRUTE_FORCE_MAX: usize = 20;

/// Distribution of X = Σ X_j with independent X_j ~ Bernoulli(p_j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedBinomial {
    probs: Vec<f64>,
}

/// P(X = k) for k = 0..=n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmfTable {
    values: Vec<f64>,
}

/// Moment-matched binomial Bi(n, p̄) for a generalized binomial law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomialApprox {
    pub n: usize,
    pub p_bar: f64,
    /// n·p̄(1−p̄) − Σ p_j(1−p_j); nonnegative by Cauchy-Schwarz.
    pub variance_gap: f64,
}

fn validate(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::EmptyProbabilities);
    }
    if let Some((index, &value)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(Error::ProbabilityOutOfRange { index, value });
    }
    Ok(())
}

impl GeneralizedBinomial {
    /// Validates that `probs` is nonempty with every entry in [0, 1].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate(&probs)?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    /// Exact PMF by adding one Bernoulli cell at a time:
    /// T_j(k) = p_j·T_{j−1}(k−1) + (1−p_j)·T_{j−1}(k), T_0 = (1).
    /// O(n²) time, one buffer of length n+1.
    pub fn pmf(&self) -> PmfTable {
        let n = self.n();
        let mut t = vec![0.0; n + 1];
        t[0] = 1.0;
        for (j, &p) in self.probs.iter().enumerate() {
            let q = 1.0 - p;
            // walk downwards so t[k-1] still holds the previous row
            for k in (1..=j + 1).rev() {
                t[k] = p * t[k - 1] + q * t[k];
            }
            t[0] *= q;
        }
        PmfTable { values: t }
    }

    /// P(X ≤ k).
    pub fn cdf(&self, k: usize) -> Result<f64> {
        self.pmf().cdf(k)
    }

    /// (Σ p_j, Σ p_j(1−p_j)).
    pub fn mean_var(&self) -> (f64, f64) {
        self.probs
            .iter()
            .fold((0.0, 0.0), |(m, v), &p| (m + p, v + p * (1.0 - p)))
    }

    /// φ(t) = Π (1 − p_j + p_j e^{it}).
    pub fn char_function(&self, t: f64) -> Complex64 {
        let eit = Complex64::from_polar(1.0, t);
        self.probs
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, &p| {
                acc * (Complex64::new(1.0 - p, 0.0) + eit * p)
            })
    }

    /// One draw: the number of successes among n independent Bernoulli trials.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.probs
            .iter()
            .filter(|&&p| rng.random::<f64>() < p)
            .count()
    }

    pub fn binomial_approx(&self) -> BinomialApprox {
        let n = self.n();
        let (mean, var) = self.mean_var();
        let p_bar = mean / n as f64;
        BinomialApprox {
            n,
            p_bar,
            variance_gap: n as f64 * p_bar * (1.0 - p_bar) - var,
        }
    }

    /// sup_k |F_GBi(k) − F_Bi(k)| over every support point 0..=n.
    pub fn max_cdf_distance(&self, approx: &BinomialApprox) -> f64 {
        let own = self.pmf();
        let bin = binomial_pmf(approx.n, approx.p_bar);
        let mut f_own = 0.0;
        let mut f_bin = 0.0;
        let mut sup: f64 = 0.0;
        let len = own.values.len().max(bin.values.len());
        for k in 0..len {
            f_own += own.values.get(k).copied().unwrap_or(0.0);
            f_bin += bin.values.get(k).copied().unwrap_or(0.0);
            sup = sup.max((f_own - f_bin).abs());
        }
        sup.min(1.0)
    }
}

/// PMF by direct summation over all subsets of size k (exponential cost;
/// used as an independent reference for small n).
pub fn brute_force_pmf(probs: &[f64]) -> Result<PmfTable> {
    validate(probs)?;
    let n = probs.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::TooManyProbabilities {
            got: n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let mut values = vec![0.0; n + 1];
    for mask in 0u32..(1u32 << n) {
        let prob: f64 = probs
            .iter()
            .enumerate()
            .map(|(j, &p)| if mask & (1 << j) != 0 { p } else { 1.0 - p })
            .product();
        values[mask.count_ones() as usize] += prob;
    }
    Ok(PmfTable { values })
}

/// Binomial(n, p) PMF evaluated term by term in log space.
pub fn binomial_pmf(n: usize, p: f64) -> PmfTable {
    let values = (0..=n)
        .map(|k| {
            if p == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            if p == 1.0 {
                return if k == n { 1.0 } else { 0.0 };
            }
            (ln_choose(n as u64, k as u64) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
        })
        .collect();
    PmfTable { values }
}

impl PmfTable {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Largest support point n.
    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    /// Σ_{j ≤ k} P(X = j).
    pub fn cdf(&self, k: usize) -> Result<f64> {
        if k > self.n() {
            return Err(Error::SupportIndex { k, n: self.n() });
        }
        Ok(self.values[..=k].iter().sum())
    }

    /// P(X > k), summed from the upper tail so that tiny values keep their
    /// relative precision.
    pub fn upper_tail(&self, k: usize) -> Result<f64> {
        if k > self.n() {
            return Err(Error::SupportIndex { k, n: self.n() });
        }
        Ok(self.values[k + 1..].iter().rev().sum())
    }

    /// (Σ k·P_k, Σ k²·P_k − mean²).
    pub fn moments(&self) -> (f64, f64) {
        let (m1, m2) = self
            .values
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(a, b), (k, &p)| {
                let k = k as f64;
                (a + k * p, b + k * k * p)
            });
        (m1, m2 - m1 * m1)
    }

    /// Σ_k P_k e^{ikt}.
    pub fn fourier(&self, t: f64) -> Complex64 {
        self.values
            .iter()
            .enumerate()
            .map(|(k, &p)| Complex64::from_polar(p, k as f64 * t))
            .sum()
    }
}
