//! Order statistics of cell flip probabilities and bit masking.
//!
//! Masking ignores the r largest probabilities of a response; the remaining
//! cells have a lower mean error rate but the correction capacity shrinks.
//! Monte Carlo routines split replicates into fixed-size blocks, each with
//! its own derived generator, and reduce block results in index order, so
//! output depends only on the seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_model::{HyperParams, PosteriorPredictive, ScaledBeta};
use crate::seeding::rng_for;
use crate::special::{ln_beta, ln_choose};

/// Replicates per generator stream.
pub const REPLICATE_BLOCK: usize = 1024;

/// Reports with fewer replicates are flagged as low precision.
pub const LOW_PRECISION_REPLICATES: usize = 100;

/// The k-th smallest of n draws (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderStatSpec {
    pub k: usize,
    pub n: usize,
}

impl OrderStatSpec {
    pub fn new(k: usize, n: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::invalid(format!("order statistic rank {k} outside 1..={n}")));
        }
        Ok(Self { k, n })
    }

    /// The rank of the same statistic counted from the top, n − k + 1.
    pub fn mirrored(&self) -> Self {
        Self {
            k: self.n - self.k + 1,
            n: self.n,
        }
    }
}

/// Density of X_(k) for iid draws with CDF `cdf` and density `pdf`:
/// n!/((k−1)!(n−k)!) F^{k−1} (1−F)^{n−k} f.
pub fn orderstat_pdf(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, spec: OrderStatSpec, x: f64) -> f64 {
    let f = pdf(x);
    if !(f > 0.0) {
        return 0.0;
    }
    let big_f = cdf(x).clamp(0.0, 1.0);
    let (k, n) = (spec.k as u64, spec.n as u64);
    let lower = if k == 1 { 0.0 } else { (k - 1) as f64 * big_f.ln() };
    let upper = if k == n { 0.0 } else { (n - k) as f64 * (-big_f).ln_1p() };
    let ln_c = (n as f64).ln() + ln_choose(n - 1, k - 1);
    (ln_c + lower + upper + f.ln()).exp()
}

/// E X_(k) for X ~ Be_[a,b](α, 1):
/// a + (b − a)·B(k + 1/α, n − k + 1) / B(k, n − k + 1), via log-beta.
pub fn expected_orderstat_scaled_beta_alpha1(a: f64, b: f64, alpha: f64, spec: OrderStatSpec) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("shape α = {alpha} must be positive")));
    }
    if !(a < b) {
        return Err(Error::invalid(format!("support [{a}, {b}] is empty")));
    }
    let k = spec.k as f64;
    let tail = (spec.n - spec.k + 1) as f64;
    let ratio = (ln_beta(k + 1.0 / alpha, tail) - ln_beta(k, tail)).exp();
    Ok(a + (b - a) * ratio)
}

/// E X_(k) for X ~ Be_[a,b](1, β), through a + b − X ~ Be_[a,b](β, 1).
pub fn expected_orderstat_scaled_beta_beta1(a: f64, b: f64, beta: f64, spec: OrderStatSpec) -> Result<f64> {
    Ok(a + b - expected_orderstat_scaled_beta_alpha1(a, b, beta, spec.mirrored())?)
}

/// Source of iid (or device-correlated) cell flip probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CellSampler {
    /// Every cell has the same probability.
    Constant(f64),
    ScaledBeta(ScaledBeta),
    /// Each cell is an independent posterior-predictive draw.
    PosteriorPredictive(HyperParams),
    /// One (δ, K) per response, then cells from that device's law.
    Device(HyperParams),
}

impl CellSampler {
    pub fn mean(&self) -> f64 {
        match self {
            CellSampler::Constant(p) => *p,
            CellSampler::ScaledBeta(law) => law.mean(),
            CellSampler::PosteriorPredictive(h) | CellSampler::Device(h) => h.expected_delta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CellSampler::Constant(p) if !(0.0..=1.0).contains(p) => {
                Err(Error::invalid(format!("constant probability {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Fill `out` with one response worth of probabilities.
    pub fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        match self {
            CellSampler::Constant(p) => out.fill(*p),
            CellSampler::ScaledBeta(law) => out.iter_mut().for_each(|v| *v = law.sample(rng)),
            CellSampler::PosteriorPredictive(h) => {
                let pp = PosteriorPredictive::new(*h);
                out.iter_mut().for_each(|v| *v = pp.sample(rng));
            }
            CellSampler::Device(h) => {
                let law = h.sample_device_params(rng).cell_distribution();
                out.iter_mut().for_each(|v| *v = law.sample(rng));
            }
        }
    }
}

/// Run `replicates` replicates of `one` in blocks and return the per-block
/// results in block order.
fn run_blocks<T: Send>(
    replicates: usize,
    seed: u64,
    stream: u64,
    one_block: impl Fn(usize, &mut crate::seeding::SimRng) -> T + Sync,
) -> Vec<T> {
    let blocks = replicates.div_ceil(REPLICATE_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let len = REPLICATE_BLOCK.min(replicates - b * REPLICATE_BLOCK);
            let mut rng = rng_for(seed, &[stream, b as u64]);
            one_block(len, &mut rng)
        })
        .collect()
}

const STREAM_ORDERSTAT: u64 = 1;
const STREAM_MASK: u64 = 2;
const STREAM_CURVE: u64 = 3;

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: usize,
}

/// Mean of the k-th smallest of n sampler draws over `replicates` replicates.
pub fn expected_orderstat_mc(
    sampler: &CellSampler,
    spec: OrderStatSpec,
    replicates: usize,
    seed: u64,
) -> Result<McEstimate> {
    if replicates < 100 {
        return Err(Error::invalid("order-statistic simulation needs at least 100 replicates"));
    }
    sampler.validate()?;
    let sums = run_blocks(replicates, seed, STREAM_ORDERSTAT, |len, rng| {
        let mut buf = vec![0.0; spec.n];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..len {
            sampler.fill(&mut buf, rng);
            let (_, kth, _) = buf.select_nth_unstable_by(spec.k - 1, f64::total_cmp);
            s += *kth;
            s2 += *kth * *kth;
        }
        (s, s2)
    });
    let (s, s2) = sums.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    let n = replicates as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        replicates,
    })
}

/// Which cells are ignored and what correction capacity remains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPolicy {
    pub response_len: usize,
    pub ignored: usize,
    pub base_capacity: usize,
    /// Capacity drops by one for every this many ignored cells.
    pub capacity_decrement_per: usize,
}

impl MaskPolicy {
    pub fn new(response_len: usize, ignored: usize, base_capacity: usize, capacity_decrement_per: usize) -> Result<Self> {
        let p = Self {
            response_len,
            ignored,
            base_capacity,
            capacity_decrement_per,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.response_len == 0 {
            return Err(Error::invalid("response length must be positive"));
        }
        if self.ignored >= self.response_len {
            return Err(Error::invalid(format!(
                "cannot ignore {} of {} cells",
                self.ignored, self.response_len
            )));
        }
        if self.capacity_decrement_per == 0 {
            return Err(Error::invalid("capacity decrement interval must be positive"));
        }
        self.effective_capacity().map(|_| ())
    }

    /// base_capacity − ⌊r / decrement⌋.
    pub fn effective_capacity(&self) -> Result<usize> {
        let drop = self.ignored / self.capacity_decrement_per;
        self.base_capacity.checked_sub(drop).ok_or_else(|| {
            Error::invalid(format!(
                "ignoring {} cells exhausts the correction capacity {}",
                self.ignored, self.base_capacity
            ))
        })
    }
}

/// Across-replicate summary of one masking policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub ignored: usize,
    pub capacity: usize,
    pub mean_error_rate_after_mask: f64,
    pub avg_failure_prob: f64,
    pub max_failure_prob: f64,
    pub replicates: usize,
    pub low_precision: bool,
}

/// P(S > capacity) for S generalized binomial over `probs`, from the lower
/// CDF; the PMF recursion is truncated at `capacity`.
pub fn gbin_upper_tail(probs: &[f64], capacity: usize, buf: &mut Vec<f64>) -> f64 {
    if capacity >= probs.len() {
        return 0.0;
    }
    buf.clear();
    buf.resize(capacity + 1, 0.0);
    buf[0] = 1.0;
    for (i, &p) in probs.iter().enumerate() {
        let top = capacity.min(i + 1);
        for k in (1..=top).rev() {
            buf[k] = buf[k] * (1.0 - p) + buf[k - 1] * p;
        }
        buf[0] *= 1.0 - p;
    }
    let lower: f64 = buf.iter().sum();
    (1.0 - lower).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Default)]
struct MaskAccum {
    mean_rate: f64,
    failure: f64,
    max_failure: f64,
}

/// Masking reports for r = 0..=r_max evaluated on the same simulated
/// responses. Probabilities are sorted ascending with ties kept in draw
/// order, and the r largest are dropped.
pub fn mask_table(
    response_len: usize,
    r_max: usize,
    base_capacity: usize,
    capacity_decrement_per: usize,
    sampler: &CellSampler,
    replicates: usize,
    seed: u64,
) -> Result<Vec<MaskReport>> {
    if replicates == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    sampler.validate()?;
    let policies = (0..=r_max)
        .map(|r| MaskPolicy::new(response_len, r, base_capacity, capacity_decrement_per))
        .collect::<Result<Vec<_>>>()?;
    let capacities: Vec<usize> = policies.iter().map(|p| p.effective_capacity().unwrap()).collect();

    let blocks = run_blocks(replicates, seed, STREAM_MASK, |len, rng| {
        let mut acc = vec![MaskAccum::default(); r_max + 1];
        let mut probs = vec![0.0; response_len];
        let mut buf = Vec::new();
        for _ in 0..len {
            sampler.fill(&mut probs, rng);
            probs.sort_by(f64::total_cmp);
            let mut kept_sum: f64 = probs.iter().sum();
            for r in 0..=r_max {
                let kept = &probs[..response_len - r];
                if r > 0 {
                    kept_sum -= probs[response_len - r];
                }
                let tail = gbin_upper_tail(kept, capacities[r], &mut buf);
                let a = &mut acc[r];
                a.mean_rate += kept_sum.max(0.0) / kept.len() as f64;
                a.failure += tail;
                a.max_failure = a.max_failure.max(tail);
            }
        }
        acc
    });

    let n = replicates as f64;
    Ok((0..=r_max)
        .map(|r| {
            let (s_rate, s_fail, max_fail) = blocks.iter().fold((0.0, 0.0, 0.0f64), |(a, b, c), blk| {
                (a + blk[r].mean_rate, b + blk[r].failure, c.max(blk[r].max_failure))
            });
            MaskReport {
                ignored: r,
                capacity: capacities[r],
                mean_error_rate_after_mask: s_rate / n,
                avg_failure_prob: s_fail / n,
                max_failure_prob: max_fail,
                replicates,
                low_precision: replicates < LOW_PRECISION_REPLICATES,
            }
        })
        .collect())
}

/// Masking report for a single policy.
pub fn mask_analysis(policy: MaskPolicy, sampler: &CellSampler, replicates: usize, seed: u64) -> Result<MaskReport> {
    policy.validate()?;
    if replicates == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    sampler.validate()?;
    let capacity = policy.effective_capacity()?;
    let len = policy.response_len;
    let kept_len = len - policy.ignored;
    let blocks = run_blocks(replicates, seed, STREAM_MASK, |count, rng| {
        let mut acc = MaskAccum::default();
        let mut probs = vec![0.0; len];
        let mut buf = Vec::new();
        for _ in 0..count {
            sampler.fill(&mut probs, rng);
            probs.sort_by(f64::total_cmp);
            let kept = &probs[..kept_len];
            let tail = gbin_upper_tail(kept, capacity, &mut buf);
            acc.mean_rate += kept.iter().sum::<f64>() / kept_len as f64;
            acc.failure += tail;
            acc.max_failure = acc.max_failure.max(tail);
        }
        acc
    });
    let n = replicates as f64;
    let total = blocks.iter().fold(MaskAccum::default(), |a, b| MaskAccum {
        mean_rate: a.mean_rate + b.mean_rate,
        failure: a.failure + b.failure,
        max_failure: a.max_failure.max(b.max_failure),
    });
    Ok(MaskReport {
        ignored: policy.ignored,
        capacity,
        mean_error_rate_after_mask: total.mean_rate / n,
        avg_failure_prob: total.failure / n,
        max_failure_prob: total.max_failure,
        replicates,
        low_precision: replicates < LOW_PRECISION_REPLICATES,
    })
}

/// Mean error rate of the remaining cells after ignoring the r largest, for
/// r = 0..=r_max.
pub fn mask_curve(
    response_len: usize,
    r_max: usize,
    sampler: &CellSampler,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if r_max >= response_len {
        return Err(Error::invalid(format!("cannot ignore {r_max} of {response_len} cells")));
    }
    if replicates == 0 {
        return Err(Error::invalid("at least one replicate is required"));
    }
    sampler.validate()?;
    let blocks = run_blocks(replicates, seed, STREAM_CURVE, |count, rng| {
        let mut acc = vec![0.0; r_max + 1];
        let mut probs = vec![0.0; response_len];
        for _ in 0..count {
            sampler.fill(&mut probs, rng);
            probs.sort_by(f64::total_cmp);
            // prefix sums of the ascending values give every masked mean
            let mut prefix = 0.0;
            let mut sums = vec![0.0; response_len + 1];
            for (i, &p) in probs.iter().enumerate() {
                prefix += p;
                sums[i + 1] = prefix;
            }
            for (r, a) in acc.iter_mut().enumerate() {
                let kept = response_len - r;
                *a += sums[kept] / kept as f64;
            }
        }
        acc
    });
    let n = replicates as f64;
    Ok((0..=r_max).map(|r| blocks.iter().map(|b| b[r]).sum::<f64>() / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_model::failure_probability;
    use crate::quadrature::gauss_legendre;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn spec(k: usize, n: usize) -> OrderStatSpec {
        OrderStatSpec::new(k, n).unwrap()
    }

    const PUBLISHED: [f64; 16] = [
        2.45e-7, 2.45e-6, 1.35e-5, 5.38e-5, 0.00017, 0.00048, 0.00122, 0.00279, 0.00594, 0.01189, 0.02260,
        0.04110, 0.07193, 0.12173, 0.2, 0.32,
    ];

    #[test]
    fn spec_validation() {
        assert!(OrderStatSpec::new(0, 3).is_err());
        assert!(OrderStatSpec::new(4, 3).is_err());
        assert_eq!(spec(1, 16).mirrored(), spec(16, 16));
    }

    #[test]
    fn uniform_orderstat_density_is_beta() {
        let s = spec(3, 7);
        let law = ScaledBeta::new(0.0, 1.0, 3.0, 5.0).unwrap();
        for x in [0.05, 0.3, 0.5, 0.9] {
            let got = orderstat_pdf(|x| x, |_| 1.0, s, x);
            assert_relative_eq!(got, law.pdf(x), max_relative = 1e-12);
        }
        let single = spec(1, 1);
        let base = ScaledBeta::half(2.0, 3.0).unwrap();
        assert_relative_eq!(
            orderstat_pdf(|x| base.cdf(x), |x| base.pdf(x), single, 0.1),
            base.pdf(0.1),
            max_relative = 1e-14
        );
    }

    #[test]
    fn maximum_density_matches_numerical_derivative() {
        let base = ScaledBeta::half(1.0 / 9.0, 1.0).unwrap();
        let s = spec(16, 16);
        for x in [0.05, 0.2, 0.35, 0.45] {
            let h = 1e-6;
            let deriv = (base.cdf(x + h).powi(16) - base.cdf(x - h).powi(16)) / (2.0 * h);
            let got = orderstat_pdf(|x| base.cdf(x), |x| base.pdf(x), s, x);
            assert_relative_eq!(got, deriv, max_relative = 1e-6);
        }
    }

    #[test]
    fn orderstat_density_integrates_to_one() {
        let base = ScaledBeta::half(2.0, 5.0).unwrap();
        let rule = gauss_legendre(200, 0.0, 0.5);
        for (k, n) in [(1, 5), (3, 5), (5, 5), (8, 16)] {
            let total = rule.integrate(|x| orderstat_pdf(|x| base.cdf(x), |x| base.pdf(x), spec(k, n), x));
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-6);
        }
    }

    /// The first four entries are printed with three significant figures,
    /// the rest with five decimals (cut, not rounded: 0.000489… shows as 0.00048).
    #[test]
    fn closed_form_reproduces_published_table() {
        for (i, &want) in PUBLISHED.iter().enumerate() {
            let got = expected_orderstat_scaled_beta_alpha1(0.0, 0.5, 1.0 / 9.0, spec(i + 1, 16)).unwrap();
            if i < 4 {
                assert_relative_eq!(got, want, max_relative = 0.01);
            } else {
                assert_abs_diff_eq!((got * 1e5 + 1e-6).floor() / 1e5, want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn closed_form_uniform_and_mirror() {
        for (k, n) in [(1, 1), (2, 5), (7, 9)] {
            let u = expected_orderstat_scaled_beta_alpha1(0.0, 1.0, 1.0, spec(k, n)).unwrap();
            assert_relative_eq!(u, k as f64 / (n + 1) as f64, max_relative = 1e-13);
            let v = expected_orderstat_scaled_beta_beta1(0.0, 1.0, 1.0, spec(k, n)).unwrap();
            assert_relative_eq!(v, k as f64 / (n + 1) as f64, max_relative = 1e-12);
        }
        let low = expected_orderstat_scaled_beta_beta1(0.0, 0.5, 1.0 / 9.0, spec(1, 16)).unwrap();
        let high = expected_orderstat_scaled_beta_alpha1(0.0, 0.5, 1.0 / 9.0, spec(16, 16)).unwrap();
        assert_abs_diff_eq!(low, 0.5 - high, epsilon = 1e-12);
        assert_relative_eq!(low, 0.18, max_relative = 0.01);
        assert!(expected_orderstat_scaled_beta_alpha1(0.0, 0.5, 0.0, spec(1, 2)).is_err());
    }

    #[test]
    fn closed_form_survives_large_n() {
        let v = expected_orderstat_scaled_beta_alpha1(0.0, 0.5, 0.3, spec(900, 1000)).unwrap();
        assert!(v.is_finite() && v > 0.0 && v < 0.5);
    }

    proptest! {
        #[test]
        fn orderstat_sum_is_n_times_mean(alpha in 0.05f64..20.0, n in 1usize..40) {
            let total: f64 = (1..=n)
                .map(|k| expected_orderstat_scaled_beta_alpha1(0.0, 0.5, alpha, spec(k, n)).unwrap())
                .sum();
            let mean = 0.5 * alpha / (alpha + 1.0);
            prop_assert!((total / (n as f64 * mean) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn orderstat_increasing_in_k(alpha in 0.05f64..20.0, n in 2usize..40) {
            let vals: Vec<f64> = (1..=n)
                .map(|k| expected_orderstat_scaled_beta_alpha1(0.0, 0.5, alpha, spec(k, n)).unwrap())
                .collect();
            prop_assert!(vals.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(vals.iter().all(|v| (0.0..=0.5).contains(v)));
        }
    }

    #[test]
    fn monte_carlo_matches_closed_forms() {
        let law = CellSampler::ScaledBeta(ScaledBeta::half(1.0 / 9.0, 1.0).unwrap());
        let mc = expected_orderstat_mc(&law, spec(15, 16), 100_000, 5).unwrap();
        assert!((mc.estimate - 0.2).abs() < 3.0 * mc.std_error + 0.002, "{mc:?}");
        let exact = expected_orderstat_scaled_beta_alpha1(0.0, 0.5, 1.0 / 9.0, spec(15, 16)).unwrap();
        assert!((mc.estimate - exact).abs() < 3.0 * mc.std_error, "{mc:?} vs {exact}");

        let uniform = CellSampler::ScaledBeta(ScaledBeta::new(0.0, 1.0, 1.0, 1.0).unwrap());
        let mc = expected_orderstat_mc(&uniform, spec(3, 5), 20_000, 6).unwrap();
        assert!((mc.estimate - 0.5).abs() < 3.0 * mc.std_error, "{mc:?}");
        assert!(expected_orderstat_mc(&uniform, spec(3, 5), 99, 6).is_err());
    }

    #[test]
    fn monte_carlo_is_seed_deterministic() {
        let law = CellSampler::ScaledBeta(ScaledBeta::half(0.5, 2.0).unwrap());
        let a = expected_orderstat_mc(&law, spec(2, 9), 5000, 11).unwrap();
        let b = expected_orderstat_mc(&law, spec(2, 9), 5000, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn policy_validation() {
        assert!(MaskPolicy::new(16, 16, 3, 2).is_err());
        assert!(MaskPolicy::new(16, 8, 3, 2).is_err());
        assert_eq!(MaskPolicy::new(16, 6, 3, 2).unwrap().effective_capacity().unwrap(), 0);
        assert_eq!(MaskPolicy::new(16, 5, 3, 2).unwrap().effective_capacity().unwrap(), 1);
        assert!(MaskPolicy::new(16, 1, 3, 0).is_err());
    }

    #[test]
    fn constant_sampler_reduces_to_binomial_tail() {
        let policy = MaskPolicy::new(16, 0, 3, 2).unwrap();
        let report = mask_analysis(policy, &CellSampler::Constant(0.05), 3, 1).unwrap();
        let exact = failure_probability(16, 3, 0.05).unwrap();
        assert_abs_diff_eq!(report.avg_failure_prob, exact, epsilon = 1e-12);
        assert_abs_diff_eq!(report.max_failure_prob, exact, epsilon = 1e-12);
        assert_abs_diff_eq!(report.mean_error_rate_after_mask, 0.05, epsilon = 1e-15);
        assert!(report.low_precision);
    }

    #[test]
    fn truncated_tail_matches_full_pmf() {
        let probs = [0.01, 0.2, 0.35, 0.05, 0.49, 0.0, 0.3];
        let full = crate::gbin::GeneralizedBinomial::new(probs.to_vec()).unwrap().pmf();
        let mut buf = Vec::new();
        for c in 0..probs.len() {
            let want: f64 = full.values()[c + 1..].iter().sum();
            assert_abs_diff_eq!(gbin_upper_tail(&probs, c, &mut buf), want, epsilon = 1e-15);
        }
        assert_eq!(gbin_upper_tail(&probs, 7, &mut buf), 0.0);
    }

    #[test]
    fn single_remaining_cell_is_smallest_orderstat() {
        let law = ScaledBeta::half(1.0 / 9.0, 1.0).unwrap();
        let sampler = CellSampler::ScaledBeta(law);
        let policy = MaskPolicy::new(4, 3, 3, 100).unwrap();
        let rep = mask_analysis(policy, &sampler, 20_000, 8).unwrap();
        let mc = expected_orderstat_mc(&sampler, spec(1, 4), 20_000, 8).unwrap();
        let exact = expected_orderstat_scaled_beta_alpha1(0.0, 0.5, 1.0 / 9.0, spec(1, 4)).unwrap();
        assert!((rep.mean_error_rate_after_mask - exact).abs() < 4.0 * mc.std_error.max(1e-6));
        // capacity 3 with one cell never fails
        assert_eq!(rep.max_failure_prob, 0.0);
    }

    #[test]
    fn table_and_single_policy_agree() {
        let sampler = CellSampler::ScaledBeta(ScaledBeta::half(0.3, 2.0).unwrap());
        let table = mask_table(12, 4, 3, 2, &sampler, 3000, 9).unwrap();
        for row in &table {
            let policy = MaskPolicy::new(12, row.ignored, 3, 2).unwrap();
            let single = mask_analysis(policy, &sampler, 3000, 9).unwrap();
            assert_relative_eq!(single.avg_failure_prob, row.avg_failure_prob, max_relative = 1e-12);
            assert_eq!(single.max_failure_prob, row.max_failure_prob);
            assert_relative_eq!(single.mean_error_rate_after_mask, row.mean_error_rate_after_mask, max_relative = 1e-12);
        }
        let curve = mask_curve(12, 4, &sampler, 3000, 9).unwrap();
        assert!(curve.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn curve_edge_cases() {
        let sampler = CellSampler::Constant(0.07);
        let curve = mask_curve(10, 0, &sampler, 5, 1).unwrap();
        assert_eq!(curve.len(), 1);
        assert_abs_diff_eq!(curve[0], 0.07, epsilon = 1e-15);
        assert!(mask_curve(10, 10, &sampler, 5, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn masked_mean_nonincreasing(seed in any::<u64>(), len in 2usize..40) {
            let sampler = CellSampler::ScaledBeta(ScaledBeta::half(0.2, 1.5).unwrap());
            let curve = mask_curve(len, len - 1, &sampler, 3, seed).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
