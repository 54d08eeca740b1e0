//! The hierarchical noise model.
//!
//! Cell flip probabilities of device i follow Be_[0,1/2](2δ_i·K_i, (1−2δ_i)·K_i);
//! device means δ_i follow Be_[0,1/2](α, β) and shapes K_i follow
//! Gamma(κ, λ) with λ a *rate* (E K = κ/λ). Error counts of a cell over m
//! evaluations are Binomial(m, p_ij).

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma as GammaSampler};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, inv_beta_reg};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::special::{ln_beta, ln_choose, ln_gamma, log_add_exp};

/// Draw ln G with G ~ Gamma(shape, 1). Small shapes use
/// G(a) = G(a+1)·U^{1/a} in log space so that the result never underflows.
fn ln_standard_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        let g = GammaSampler::new(shape, 1.0).expect("shape validated by caller");
        g.sample(rng).ln()
    } else {
        let g = GammaSampler::new(shape + 1.0, 1.0).expect("shape validated by caller");
        let u: f64 = rng.random::<f64>();
        // u in [0,1); avoid ln(0)
        let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
        g.sample(rng).ln() + u.ln() / shape
    }
}

/// Beta(α, β) draw via two gamma variates, X/(X+Y), evaluated in log space.
pub(crate) fn sample_unit_beta<R: Rng + ?Sized>(alpha: f64, beta: f64, rng: &mut R) -> f64 {
    let lx = ln_standard_gamma(alpha, rng);
    let ly = ln_standard_gamma(beta, rng);
    1.0 / (1.0 + (ly - lx).exp())
}

/// Beta law transported onto `[a, b]`: Q = a + (b − a)·P with P ~ Be(α, β).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBeta {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ScaledBeta {
    pub fn new(a: f64, b: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::invalid(format!("scaled beta needs a < b, got [{a}, {b}]")));
        }
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!(
                "scaled beta shapes must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { a, b, alpha, beta })
    }

    /// Be_[0,1/2](α, β), the support used throughout the model.
    pub fn half(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(0.0, 0.5, alpha, beta)
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn mean(&self) -> f64 {
        self.a + self.width() * self.alpha / (self.alpha + self.beta)
    }

    pub fn variance(&self) -> f64 {
        let s = self.alpha + self.beta;
        self.width().powi(2) * self.alpha * self.beta / (s * s * (s + 1.0))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.a + self.width() * sample_unit_beta(self.alpha, self.beta, rng)
    }

    /// Log density; −∞ outside the open support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > self.a && x < self.b) {
            return f64::NEG_INFINITY;
        }
        let u = (x - self.a) / self.width();
        (self.alpha - 1.0) * u.ln() + (self.beta - 1.0) * (-u).ln_1p()
            - ln_beta(self.alpha, self.beta)
            - self.width().ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.a {
            0.0
        } else if x >= self.b {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, (x - self.a) / self.width())
        }
    }

    pub fn quantile(&self, q: f64) -> f64 {
        self.a + self.width() * inv_beta_reg(self.alpha, self.beta, q.clamp(0.0, 1.0))
    }
}

/// Gamma law with shape κ and rate λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    pub shape: f64,
    pub rate: f64,
}

impl GammaLaw {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma shape and rate must be positive, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        ln_standard_gamma(self.shape, rng).exp() / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() + (self.shape - 1.0) * x.ln() - self.rate * x - ln_gamma(self.shape)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_lr(self.shape, self.rate * x)
        }
    }

    pub fn quantile(&self, q: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Gamma};
        Gamma::new(self.shape, self.rate)
            .expect("validated at construction")
            .inverse_cdf(q.clamp(0.0, 1.0))
    }
}

/// Per-device parameters (δ, K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub delta: f64,
    pub k_shape: f64,
}

impl DeviceParams {
    pub fn new(delta: f64, k_shape: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return Err(Error::invalid(format!("device mean δ = {delta} outside (0, 1/2)")));
        }
        if !(k_shape > 0.0 && k_shape.is_finite()) {
            return Err(Error::invalid(format!("device shape K = {k_shape} must be positive")));
        }
        Ok(Self { delta, k_shape })
    }

    /// Be_[0,1/2](2δK, (1−2δ)K), whose mean is δ.
    pub fn cell_distribution(&self) -> ScaledBeta {
        ScaledBeta {
            a: 0.0,
            b: 0.5,
            alpha: 2.0 * self.delta * self.k_shape,
            beta: (1.0 - 2.0 * self.delta) * self.k_shape,
        }
    }
}

/// Free function form of [`DeviceParams::cell_distribution`].
pub fn device_cell_distribution(params: &DeviceParams) -> ScaledBeta {
    params.cell_distribution()
}

/// Population hyperparameters (α, β, κ, λ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub lambda: f64,
}

impl HyperParams {
    pub fn new(alpha: f64, beta: f64, kappa: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta), ("kappa", kappa), ("lambda", lambda)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("hyperparameter {name} = {v} must be positive")));
            }
        }
        Ok(Self {
            alpha,
            beta,
            kappa,
            lambda,
        })
    }

    /// Estimates reported for the measured 15-device population.
    pub fn measured_population() -> Self {
        Self {
            alpha: 9378.324,
            beta: 81409.79,
            kappa: 7166.669,
            lambda: 3965.296,
        }
    }

    /// Hyperparameters used for the estimator-comparison simulation study.
    pub fn simulation_truth() -> Self {
        Self {
            alpha: 100.0,
            beta: 900.0,
            kappa: 800.0,
            lambda: 900.0,
        }
    }

    pub fn delta_distribution(&self) -> ScaledBeta {
        ScaledBeta {
            a: 0.0,
            b: 0.5,
            alpha: self.alpha,
            beta: self.beta,
        }
    }

    pub fn k_distribution(&self) -> GammaLaw {
        GammaLaw {
            shape: self.kappa,
            rate: self.lambda,
        }
    }

    /// E δ = α / (2(α + β)).
    pub fn expected_delta(&self) -> f64 {
        0.5 * self.alpha / (self.alpha + self.beta)
    }

    /// E K = κ / λ.
    pub fn expected_k(&self) -> f64 {
        self.kappa / self.lambda
    }

    /// Draw (δ, K) for one device.
    pub fn sample_device_params<R: Rng + ?Sized>(&self, rng: &mut R) -> DeviceParams {
        let delta = self.delta_distribution().sample(rng);
        let k_shape = self.k_distribution().sample(rng);
        DeviceParams { delta, k_shape }
    }
}

/// One simulated device: its parameters and per-cell flip probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDevice {
    pub params: DeviceParams,
    pub probs: Vec<f64>,
}

impl SimulatedDevice {
    /// Draw (δ, K) from `h`, then `cells` probabilities from the device law.
    pub fn sample<R: Rng + ?Sized>(h: &HyperParams, cells: usize, rng: &mut R) -> Self {
        let params = h.sample_device_params(rng);
        let law = params.cell_distribution();
        let probs = (0..cells).map(|_| law.sample(rng)).collect();
        Self { params, probs }
    }
}

/// Draw `m_dev` devices with `cells` cells each, sequentially from `rng`.
pub fn sample_population<R: Rng + ?Sized>(
    h: &HyperParams,
    m_dev: usize,
    cells: usize,
    rng: &mut R,
) -> Result<Vec<SimulatedDevice>> {
    if m_dev == 0 || cells == 0 {
        return Err(Error::invalid("population needs at least one device and one cell"));
    }
    Ok((0..m_dev).map(|_| SimulatedDevice::sample(h, cells, rng)).collect())
}

/// Error counts x_j ~ Binomial(m, p_j) for every cell of `dev`.
pub fn simulate_measurements<R: Rng + ?Sized>(
    dev: &SimulatedDevice,
    m: u64,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if m == 0 {
        return Err(Error::invalid("at least one measurement per cell is required"));
    }
    dev.probs
        .iter()
        .map(|&p| {
            Binomial::new(m, p)
                .map(|b| b.sample(rng))
                .map_err(|e| Error::invalid(format!("binomial({m}, {p}): {e}")))
        })
        .collect()
}

/// Compound law of a generalized binomial whose n cell probabilities are
/// iid with mean `pi_mean`: exactly Bi(n, pi_mean).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundBinomial {
    pub n: u64,
    pub p: f64,
}

impl CompoundBinomial {
    pub fn mean(&self) -> f64 {
        self.n as f64 * self.p
    }

    pub fn variance(&self) -> f64 {
        self.n as f64 * self.p * (1.0 - self.p)
    }

    pub fn pmf(&self) -> crate::gbin::PmfTable {
        crate::gbin::binomial_pmf(self.n as usize, self.p)
    }
}

pub fn compound_binomial(n: u64, pi_mean: f64) -> Result<CompoundBinomial> {
    if !(0.0..=1.0).contains(&pi_mean) {
        return Err(Error::invalid(format!("mean cell probability {pi_mean} outside [0, 1]")));
    }
    Ok(CompoundBinomial { n, p: pi_mean })
}

/// Natural log of P(Bi(n, p) > capacity).
///
/// Terms ln C(n,k) + k ln p + (n−k) ln(1−p) are accumulated with log-sum-exp
/// starting at the largest term of the tail and moving outward; a direction
/// stops once its terms fall 60 nats below the running sum. When the tail
/// contains the mode, the lower tail is summed instead and complemented.
pub fn ln_failure_probability(n: u64, capacity: u64, pi_mean: f64) -> Result<f64> {
    if capacity > n {
        return Err(Error::invalid(format!("capacity {capacity} exceeds response length {n}")));
    }
    if !(0.0..=1.0).contains(&pi_mean) {
        return Err(Error::invalid(format!("mean cell probability {pi_mean} outside [0, 1]")));
    }
    if capacity == n || pi_mean == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if pi_mean == 1.0 {
        return Ok(0.0);
    }
    let lp = pi_mean.ln();
    let lq = (-pi_mean).ln_1p();
    let term = |k: u64| ln_choose(n, k) + k as f64 * lp + (n - k) as f64 * lq;
    let mode = ((n + 1) as f64 * pi_mean).floor().min(n as f64) as u64;
    if capacity < mode {
        // the tail holds the bulk of the mass: go through the complement
        let lower = log_sum_outward(&term, 0, capacity, capacity);
        return Ok((-lower.exp()).ln_1p().min(0.0));
    }
    let first = capacity + 1;
    Ok(log_sum_outward(&term, first, n, first).min(0.0))
}

/// ln Σ_{k=lo..=hi} exp(term(k)) for unimodal terms, starting at `start`
/// (the largest term in range) and moving outward until terms drop 60 nats
/// below the running sum.
fn log_sum_outward(term: &impl Fn(u64) -> f64, lo: u64, hi: u64, start: u64) -> f64 {
    const CUTOFF: f64 = 60.0;
    let mut total = term(start);
    let mut k = start;
    while k < hi {
        k += 1;
        let t = term(k);
        if t < total - CUTOFF {
            break;
        }
        total = log_add_exp(total, t);
    }
    let mut k = start;
    while k > lo {
        k -= 1;
        let t = term(k);
        if t < total - CUTOFF {
            break;
        }
        total = log_add_exp(total, t);
    }
    total
}

/// P(Bi(n, p) > capacity): probability that a mechanism correcting up to
/// `capacity` errors in an n-bit response fails.
pub fn failure_probability(n: u64, capacity: u64, pi_mean: f64) -> Result<f64> {
    ln_failure_probability(n, capacity, pi_mean).map(f64::exp)
}

/// Sampler for the posterior-predictive law of a cell probability:
/// δ ~ Be_[0,1/2](α,β), K ~ Gamma(κ,λ), p ~ Be_[0,1/2](2δK, (1−2δ)K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorPredictive {
    pub hyper: HyperParams,
}

impl PosteriorPredictive {
    pub fn new(hyper: HyperParams) -> Self {
        Self { hyper }
    }

    /// One draw, kept inside the open interval (0, 1/2).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let dev = self.hyper.sample_device_params(rng);
        let law = dev.cell_distribution();
        let p = law.sample(rng);
        p.clamp(f64::MIN_POSITIVE, 0.5 * (1.0 - f64::EPSILON))
    }

    /// E p = E δ.
    pub fn mean(&self) -> f64 {
        self.hyper.expected_delta()
    }
}

pub fn posterior_predictive_sample<R: Rng + ?Sized>(
    h: &HyperParams,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    let pp = PosteriorPredictive::new(*h);
    Ok((0..count).map(|_| pp.sample(rng)).collect())
}

/// Tensor Gauss-Legendre grid for the posterior-predictive density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub delta_nodes: usize,
    pub k_nodes: usize,
    /// Probability mass left out of each integration range (split evenly
    /// between both tails).
    pub tail_mass: f64,
}

impl Default for DensityGrid {
    fn default() -> Self {
        Self {
            delta_nodes: 200,
            k_nodes: 200,
            tail_mass: 1e-8,
        }
    }
}

/// Posterior-predictive density with the (δ, K) integration grid
/// precomputed. Each grid point stores the cell-law shapes, its ln B term
/// and its ln weight (quadrature weight × prior densities).
#[derive(Debug, Clone)]
pub struct PredictiveDensity {
    nodes: Vec<GridNode>,
}

#[derive(Debug, Clone, Copy)]
struct GridNode {
    am1: f64,
    bm1: f64,
    ln_norm: f64,
}

impl PredictiveDensity {
    pub fn new(h: &HyperParams, grid: DensityGrid) -> Self {
        let dd = h.delta_distribution();
        let kd = h.k_distribution();
        let lo = grid.tail_mass / 2.0;
        let hi = 1.0 - lo;
        let drule = gauss_legendre(grid.delta_nodes, dd.quantile(lo), dd.quantile(hi));
        let krule = gauss_legendre(grid.k_nodes, kd.quantile(lo), kd.quantile(hi));
        let mut nodes = Vec::with_capacity(drule.len() * krule.len());
        for (&d, &wd) in drule.nodes.iter().zip(&drule.weights) {
            let ld = wd.ln() + dd.ln_pdf(d);
            for (&k, &wk) in krule.nodes.iter().zip(&krule.weights) {
                let a = 2.0 * d * k;
                let b = (1.0 - 2.0 * d) * k;
                let lw = ld + wk.ln() + kd.ln_pdf(k);
                if lw.is_finite() {
                    nodes.push(GridNode {
                        am1: a - 1.0,
                        bm1: b - 1.0,
                        // scaled-beta density on [0, 1/2]: 2·Beta(2p; a, b)
                        ln_norm: lw - ln_beta(a, b) + std::f64::consts::LN_2,
                    });
                }
            }
        }
        Self { nodes }
    }

    /// f(p); zero outside (0, 1/2).
    pub fn density(&self, p: f64) -> f64 {
        if !(p > 0.0 && p < 0.5) {
            return 0.0;
        }
        let lu = (2.0 * p).ln();
        let l1u = (-2.0 * p).ln_1p();
        self.nodes
            .iter()
            .map(|n| (n.ln_norm + n.am1 * lu + n.bm1 * l1u).exp())
            .sum()
    }
}

/// f(p | α̂, β̂, κ̂, λ̂) by tensor quadrature over (δ, K).
pub fn posterior_predictive_density(h: &HyperParams, p: f64, grid: DensityGrid) -> f64 {
    if !(p > 0.0 && p < 0.5) {
        return 0.0;
    }
    PredictiveDensity::new(h, grid).density(p)
}
