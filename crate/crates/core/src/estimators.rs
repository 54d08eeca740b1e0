//! Layer-by-layer estimation of the hierarchy.
//!
//! Cell probabilities are estimated from error counts (moments/MLE ratio or
//! the posterior mean under a scaled Jeffreys prior), device parameters
//! (δ, K) from the cell estimates (moments, MLE or joint posterior mode), and
//! population hyperparameters (α, β, κ, λ) from the device estimates
//! (moments or MLE). Any combination of layer methods can be chosen.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise_model::{DeviceParams, HyperParams};
use crate::optim::NelderMead;
use crate::quadrature::chebyshev_gauss_unit;
use crate::special::{digamma, ln_beta, trigamma};

/// Cell estimates on the boundary of (0, 1/2) are moved to ε or 1/2 − ε
/// before any beta log-density is evaluated.
pub const LIKELIHOOD_CLAMP: f64 = 1e-6;

/// Boundary values (≤ 0 or ≥ 1/2) move inside by `eps`; interior values,
/// however small, are kept so exact draws are not distorted.
pub fn clamp_to_interior(p: f64, eps: f64) -> f64 {
    if !(p > 0.0) {
        eps
    } else if p >= 0.5 {
        0.5 - eps
    } else {
        p
    }
}

/// Default node count of the Jeffreys posterior-mean quadrature.
pub const JEFFREYS_NODES: usize = 512;

/// Errors x observed in m evaluations of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellCounts {
    pub errors: u64,
    pub trials: u64,
}

impl CellCounts {
    pub fn new(errors: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::invalid("a cell needs at least one trial"));
        }
        if errors > trials {
            return Err(Error::invalid(format!("{errors} errors in {trials} trials")));
        }
        Ok(Self { errors, trials })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellMethod {
    /// x/m (method of moments and MLE coincide).
    Moments,
    /// Posterior mean under the Be_[0,1/2](1/2, 1/2) prior.
    Jeffreys,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceMethod {
    Moments,
    Mle,
    /// Joint posterior mode under p(δ, K) ∝ 1 / (K·sqrt(2δ(1−2δ))).
    BayesMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HyperMethod {
    Moments,
    Mle,
}

/// One estimator per layer. Serialized as `cell/device/hyper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct MethodSelection {
    pub cell: CellMethod,
    pub device: DeviceMethod,
    pub hyper: HyperMethod,
}

impl MethodSelection {
    pub const fn new(cell: CellMethod, device: DeviceMethod, hyper: HyperMethod) -> Self {
        Self { cell, device, hyper }
    }

    /// The eight combinations compared in the estimator study, in table order.
    pub fn comparison_set() -> [MethodSelection; 8] {
        use CellMethod as C;
        use DeviceMethod as D;
        use HyperMethod as H;
        [
            Self::new(C::Moments, D::Moments, H::Moments),
            Self::new(C::Moments, D::Mle, H::Mle),
            Self::new(C::Jeffreys, D::Moments, H::Moments),
            Self::new(C::Jeffreys, D::Moments, H::Mle),
            Self::new(C::Jeffreys, D::Mle, H::Moments),
            Self::new(C::Jeffreys, D::Mle, H::Mle),
            Self::new(C::Jeffreys, D::BayesMode, H::Moments),
            Self::new(C::Jeffreys, D::BayesMode, H::Mle),
        ]
    }

    /// Jeffreys cells, posterior-mode devices, MLE hyperparameters.
    pub fn bayes_bayes_mle() -> Self {
        Self::new(CellMethod::Jeffreys, DeviceMethod::BayesMode, HyperMethod::Mle)
    }
}

impl fmt::Display for MethodSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.cell {
            CellMethod::Moments => "Moments",
            CellMethod::Jeffreys => "Bayes",
        };
        let d = match self.device {
            DeviceMethod::Moments => "Moments",
            DeviceMethod::Mle => "MLE",
            DeviceMethod::BayesMode => "Bayes",
        };
        let h = match self.hyper {
            HyperMethod::Moments => "Moments",
            HyperMethod::Mle => "MLE",
        };
        write!(f, "{c}/{d}/{h}")
    }
}

impl std::str::FromStr for MethodSelection {
    type Err = Error;

    /// Parses `cell/device/hyper`, e.g. `Bayes/Bayes/MLE` or
    /// `jeffreys/bayes-mode/mle` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<String> = s.split('/').map(|p| p.trim().to_ascii_lowercase()).collect();
        if parts.len() != 3 {
            return Err(Error::invalid(format!("method selection '{s}' is not cell/device/hyper")));
        }
        let cell = match parts[0].as_str() {
            "moments" | "mle" | "moments-mle" => CellMethod::Moments,
            "bayes" | "jeffreys" => CellMethod::Jeffreys,
            other => return Err(Error::invalid(format!("unknown cell method '{other}'"))),
        };
        let device = match parts[1].as_str() {
            "moments" => DeviceMethod::Moments,
            "mle" => DeviceMethod::Mle,
            "bayes" | "bayes-mode" | "mode" => DeviceMethod::BayesMode,
            other => return Err(Error::invalid(format!("unknown device method '{other}'"))),
        };
        let hyper = match parts[2].as_str() {
            "moments" => HyperMethod::Moments,
            "mle" => HyperMethod::Mle,
            other => return Err(Error::invalid(format!("unknown hyper method '{other}'"))),
        };
        Ok(Self { cell, device, hyper })
    }
}

impl TryFrom<String> for MethodSelection {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodSelection> for String {
    fn from(m: MethodSelection) -> String {
        m.to_string()
    }
}

/// A cell estimate together with the flag raised when x/m exceeded 1/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellEstimate {
    pub value: f64,
    pub flagged: bool,
}

/// x/m clamped into [0, 1/2]; ratios above 1/2 point at a misassigned
/// stable state and are flagged.
pub fn estimate_p_moments(c: CellCounts) -> CellEstimate {
    let ratio = c.errors as f64 / c.trials as f64;
    CellEstimate {
        value: ratio.min(0.5),
        flagged: ratio > 0.5,
    }
}

/// Posterior mean of p on [0, 1/2] for the density
/// ∝ p^x (1−p)^{m−x} / sqrt(2p(1−2p)).
///
/// With u = 2p the prior singularities become the Chebyshev weight
/// u^{-1/2}(1−u)^{-1/2}, so both integrals are Chebyshev-Gauss sums of the
/// smooth likelihood factor. `trials = 0` returns the prior mean 1/4.
pub fn jeffreys_posterior_mean(errors: u64, trials: u64, nodes: usize) -> Result<f64> {
    if errors > trials {
        return Err(Error::invalid(format!("{errors} errors in {trials} trials")));
    }
    let rule = chebyshev_gauss_unit(nodes.max(1));
    let x = errors as f64;
    let y = (trials - errors) as f64;
    let log_lik: Vec<f64> = rule
        .nodes
        .iter()
        .map(|&u| {
            let p = 0.5 * u;
            let a = if errors == 0 { 0.0 } else { x * p.ln() };
            let b = if trials == errors { 0.0 } else { y * (-p).ln_1p() };
            a + b
        })
        .collect();
    let peak = log_lik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (num, den) = rule
        .nodes
        .iter()
        .zip(&log_lik)
        .fold((0.0, 0.0), |(n, d), (&u, &l)| {
            let w = (l - peak).exp();
            (n + 0.5 * u * w, d + w)
        });
    let mean = num / den;
    if !mean.is_finite() || !(mean > 0.0 && mean < 0.5) {
        return Err(Error::Numerical(format!(
            "Jeffreys posterior mean for ({errors}, {trials}) evaluated to {mean}"
        )));
    }
    Ok(mean)
}

pub fn estimate_p_jeffreys(c: CellCounts, nodes: usize) -> Result<f64> {
    jeffreys_posterior_mean(c.errors, c.trials, nodes)
}

/// Jeffreys estimates cached per (x, m); counts repeat heavily in practice.
#[derive(Debug, Default)]
pub struct JeffreysCache {
    nodes: usize,
    table: HashMap<(u64, u64), f64>,
}

impl JeffreysCache {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            table: HashMap::new(),
        }
    }

    pub fn get(&mut self, c: CellCounts) -> Result<f64> {
        if let Some(&v) = self.table.get(&(c.errors, c.trials)) {
            return Ok(v);
        }
        let v = estimate_p_jeffreys(c, self.nodes)?;
        self.table.insert((c.errors, c.trials), v);
        Ok(v)
    }
}

fn mean_and_sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, ss / (n - 1.0))
}

/// δ̂ = mean of p̂, K̂ = 2δ̂(1−2δ̂) / (4·s²) − 1 with s² the sample variance.
pub fn estimate_device_moments(p_hats: &[f64]) -> Result<DeviceParams> {
    if p_hats.len() < 2 {
        return Err(Error::invalid("moment estimates need at least two cells"));
    }
    let (delta, var) = mean_and_sample_variance(p_hats);
    if !(var > 0.0) {
        return Err(Error::Degenerate("all cell estimates are equal; K is undefined".into()));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Degenerate(format!("mean cell estimate {delta} outside (0, 1/2)")));
    }
    let k = 2.0 * delta * (1.0 - 2.0 * delta) / (4.0 * var) - 1.0;
    if !(k > 0.0) {
        return Err(Error::Degenerate(format!(
            "moment estimate K = {k} is not positive (cells over-dispersed)"
        )));
    }
    DeviceParams::new(delta, k)
}

/// Sufficient statistics of a scaled-beta sample on [0, 1/2]: with u = 2p,
/// the log-likelihood is (a−1)·Σln u + (b−1)·Σln(1−u) − n·ln B(a,b) + n·ln 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfBetaStats {
    pub n: f64,
    pub sum_ln_u: f64,
    pub sum_ln_1mu: f64,
}

impl HalfBetaStats {
    /// Boundary values are moved inside first, see [`clamp_to_interior`].
    pub fn from_cells(p_hats: &[f64], eps: f64) -> Self {
        let mut s = Self {
            n: 0.0,
            sum_ln_u: 0.0,
            sum_ln_1mu: 0.0,
        };
        for &p in p_hats {
            let u = 2.0 * clamp_to_interior(p, eps);
            s.n += 1.0;
            s.sum_ln_u += u.ln();
            s.sum_ln_1mu += (-u).ln_1p();
        }
        s
    }

    pub fn log_likelihood(&self, a: f64, b: f64) -> f64 {
        (a - 1.0) * self.sum_ln_u + (b - 1.0) * self.sum_ln_1mu - self.n * ln_beta(a, b)
            + self.n * std::f64::consts::LN_2
    }
}

/// Outcome of a likelihood-based device fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceFit {
    pub params: DeviceParams,
    /// Maximized log-likelihood (or log posterior, up to a constant).
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// (δ, K) from (logit 2δ, ln K).
fn device_from_unconstrained(theta: &[f64]) -> (f64, f64) {
    (0.5 * logistic(theta[0]), theta[1].exp())
}

fn device_objective(stats: &HalfBetaStats, delta: f64, k: f64, with_prior: bool) -> f64 {
    let two_d = 2.0 * delta;
    let a = two_d * k;
    let b = (1.0 - two_d) * k;
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return f64::NEG_INFINITY;
    }
    let ll = stats.log_likelihood(a, b);
    if with_prior {
        ll - k.ln() - 0.5 * two_d.ln() - 0.5 * (-two_d).ln_1p()
    } else {
        ll
    }
}

fn fit_device(p_hats: &[f64], nm: &NelderMead, with_prior: bool) -> Result<DeviceFit> {
    if p_hats.is_empty() {
        return Err(Error::invalid("no cell estimates"));
    }
    let clamped: Vec<f64> = p_hats
        .iter()
        .map(|&p| clamp_to_interior(p, LIKELIHOOD_CLAMP))
        .collect();
    let stats = HalfBetaStats::from_cells(&clamped, LIKELIHOOD_CLAMP);
    let start = estimate_device_moments(&clamped)
        .unwrap_or(DeviceParams {
            delta: 0.05,
            k_shape: 1.0,
        });
    let x0 = [(2.0 * start.delta / (1.0 - 2.0 * start.delta)).ln(), start.k_shape.ln()];
    let res = nm.minimize(
        |theta| {
            let (d, k) = device_from_unconstrained(theta);
            -device_objective(&stats, d, k, with_prior)
        },
        &x0,
    );
    if !res.converged {
        return Err(Error::NoConvergence {
            evaluations: res.evaluations,
        });
    }
    let (delta, k) = device_from_unconstrained(&res.x);
    let params = DeviceParams::new(delta, k).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(DeviceFit {
        params,
        objective: -res.value,
        evaluations: res.evaluations,
        converged: true,
    })
}

/// Maximum-likelihood (δ, K) for cell estimates modeled as iid
/// Be_[0,1/2](2δK, (1−2δ)K).
pub fn estimate_device_mle(p_hats: &[f64], nm: &NelderMead) -> Result<DeviceFit> {
    fit_device(p_hats, nm, false)
}

/// Joint posterior mode of (δ, K) under p(δ, K) ∝ 1/(K·sqrt(2δ(1−2δ))).
pub fn estimate_device_bayes_mode(p_hats: &[f64], nm: &NelderMead) -> Result<DeviceFit> {
    fit_device(p_hats, nm, true)
}

/// Hyperparameters from summary statistics of the device estimates
/// (means and sample variances of δ̂ and K̂).
pub fn hyper_moments_from_summary(
    mean_delta: f64,
    var_delta: f64,
    mean_k: f64,
    var_k: f64,
) -> Result<HyperParams> {
    if !(var_delta > 0.0 && var_k > 0.0) {
        return Err(Error::Degenerate("device estimates show no spread".into()));
    }
    let m = 2.0 * mean_delta;
    if !(m > 0.0 && m < 1.0) {
        return Err(Error::Degenerate(format!("mean δ̂ = {mean_delta} outside (0, 1/2)")));
    }
    let ratio = m * (1.0 - m) / (4.0 * var_delta);
    if !(ratio > 1.0) {
        return Err(Error::Degenerate(format!(
            "δ̂ variance {var_delta} too large for a beta law with mean {mean_delta}"
        )));
    }
    let factor = ratio - 1.0;
    if !(mean_k > 0.0) {
        return Err(Error::Degenerate(format!("mean K̂ = {mean_k} is not positive")));
    }
    HyperParams::new(m * factor, (1.0 - m) * factor, mean_k * mean_k / var_k, mean_k / var_k)
}

/// Method-of-moments hyperparameters from device estimates.
pub fn estimate_hyper_moments(deltas: &[f64], ks: &[f64]) -> Result<HyperParams> {
    if deltas.len() < 2 || ks.len() < 2 {
        return Err(Error::invalid("hyperparameter estimation needs at least two devices"));
    }
    let (md, vd) = mean_and_sample_variance(deltas);
    let (mk, vk) = mean_and_sample_variance(ks);
    hyper_moments_from_summary(md, vd, mk, vk)
}

/// Hyperparameter MLE with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperFit {
    pub hyper: HyperParams,
    /// Maximized Be_[0,1/2](α, β) log-likelihood of the δ̂.
    pub beta_objective: f64,
    /// Maximized Gamma(κ, λ) log-likelihood of the K̂.
    pub gamma_objective: f64,
    pub evaluations: usize,
    pub newton_iterations: usize,
}

/// Be_[0,1/2](α, β) maximum likelihood by Nelder-Mead over (ln α, ln β).
pub fn beta_mle_half(deltas: &[f64], nm: &NelderMead) -> Result<(f64, f64, f64, usize)> {
    if deltas.len() < 2 {
        return Err(Error::invalid("beta MLE needs at least two values"));
    }
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0 && **d < 0.5)) {
        return Err(Error::invalid(format!("δ̂ = {d} outside (0, 1/2)")));
    }
    let stats = HalfBetaStats::from_cells(deltas, 0.0);
    let (md, vd) = mean_and_sample_variance(deltas);
    let m = 2.0 * md;
    let ratio = m * (1.0 - m) / (4.0 * vd);
    let (a0, b0) = if vd > 0.0 && ratio > 1.0 {
        (m * (ratio - 1.0), (1.0 - m) * (ratio - 1.0))
    } else {
        (1.0, 1.0)
    };
    let res = nm.minimize(
        |t| -stats.log_likelihood(t[0].exp(), t[1].exp()),
        &[a0.ln(), b0.ln()],
    );
    if !res.converged {
        return Err(Error::NoConvergence {
            evaluations: res.evaluations,
        });
    }
    Ok((res.x[0].exp(), res.x[1].exp(), -res.value, res.evaluations))
}

/// Gamma(κ, rate λ) maximum likelihood: Newton on
/// ln κ − ψ(κ) = ln K̄ − mean(ln K), then λ = κ / K̄.
pub fn gamma_mle(ks: &[f64], max_iter: usize) -> Result<(f64, f64, f64, usize)> {
    if ks.len() < 2 {
        return Err(Error::invalid("gamma MLE needs at least two values"));
    }
    if let Some(k) = ks.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
        return Err(Error::invalid(format!("K̂ = {k} is not positive")));
    }
    let n = ks.len() as f64;
    let (mean, var) = mean_and_sample_variance(ks);
    let mean_ln = ks.iter().map(|k| k.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if !(s > 1e-14) || !(var > 0.0) {
        return Err(Error::Degenerate(
            "K̂ values have no spread; gamma MLE diverges".into(),
        ));
    }
    // moments start, else the closed-form approximation
    let mut kappa = if var > 0.0 { mean * mean / var } else { 0.0 };
    if !(kappa > 0.0 && kappa.is_finite()) {
        kappa = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    }
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let f = kappa.ln() - digamma(kappa) - s;
        let df = 1.0 / kappa - trigamma(kappa);
        let mut next = kappa - f / df;
        if !(next > 0.0) || !next.is_finite() {
            next = kappa / 2.0;
        }
        let step = (next - kappa).abs();
        kappa = next;
        if step <= 1e-12 * kappa {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            evaluations: iterations,
        });
    }
    let lambda = kappa / mean;
    let ll = n * (kappa * lambda.ln() - crate::special::ln_gamma(kappa)) + (kappa - 1.0) * n * mean_ln
        - lambda * n * mean;
    Ok((kappa, lambda, ll, iterations))
}

/// Maximum-likelihood hyperparameters from device estimates.
pub fn estimate_hyper_mle(deltas: &[f64], ks: &[f64], budgets: &FitBudgets) -> Result<HyperFit> {
    let (alpha, beta, beta_objective, evaluations) = beta_mle_half(deltas, &budgets.optimizer)?;
    let (kappa, lambda, gamma_objective, newton_iterations) = gamma_mle(ks, budgets.newton_iterations)?;
    let hyper = HyperParams::new(alpha, beta, kappa, lambda).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(HyperFit {
        hyper,
        beta_objective,
        gamma_objective,
        evaluations,
        newton_iterations,
    })
}

/// Numerical budgets for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitBudgets {
    pub optimizer: NelderMead,
    pub jeffreys_nodes: usize,
    pub newton_iterations: usize,
}

impl Default for FitBudgets {
    fn default() -> Self {
        Self {
            optimizer: NelderMead::default(),
            jeffreys_nodes: JEFFREYS_NODES,
            newton_iterations: 100,
        }
    }
}

/// Error counts of every cell of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCounts {
    pub device_id: String,
    pub cells: Vec<CellCounts>,
}

/// Per-device diagnostics collected by [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDiagnostics {
    pub device_id: String,
    /// Cells whose x/m exceeded 1/2 (moments cell layer only).
    pub flagged_cells: usize,
    /// Present for likelihood-based device fits.
    pub objective: Option<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperDiagnostics {
    pub beta_objective: Option<f64>,
    pub gamma_objective: Option<f64>,
    pub converged: bool,
}

/// Every intermediate estimate of a hierarchical fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub selection: MethodSelection,
    pub cell_probs: Vec<Vec<f64>>,
    pub device_params: Vec<DeviceParams>,
    pub hyper: HyperParams,
    pub devices: Vec<DeviceDiagnostics>,
    pub hyper_diagnostics: HyperDiagnostics,
}

/// Cell-layer estimates for one device: (values, flagged count).
pub fn estimate_cells(
    cells: &[CellCounts],
    method: CellMethod,
    cache: &mut JeffreysCache,
) -> Result<(Vec<f64>, usize)> {
    match method {
        CellMethod::Moments => {
            let mut flagged = 0;
            let v = cells
                .iter()
                .map(|&c| {
                    let e = estimate_p_moments(c);
                    flagged += e.flagged as usize;
                    e.value
                })
                .collect();
            Ok((v, flagged))
        }
        CellMethod::Jeffreys => {
            let v = cells.iter().map(|&c| cache.get(c)).collect::<Result<Vec<_>>>()?;
            Ok((v, 0))
        }
    }
}

/// Device-layer estimate with diagnostics fields (objective, evaluations).
pub fn estimate_device(
    p_hats: &[f64],
    method: DeviceMethod,
    nm: &NelderMead,
) -> Result<(DeviceParams, Option<f64>, usize)> {
    match method {
        DeviceMethod::Moments => estimate_device_moments(p_hats).map(|p| (p, None, 0)),
        DeviceMethod::Mle => estimate_device_mle(p_hats, nm).map(|f| (f.params, Some(f.objective), f.evaluations)),
        DeviceMethod::BayesMode => {
            estimate_device_bayes_mode(p_hats, nm).map(|f| (f.params, Some(f.objective), f.evaluations))
        }
    }
}

/// Hyper-layer estimate with diagnostics.
pub fn estimate_hyper(
    params: &[DeviceParams],
    method: HyperMethod,
    budgets: &FitBudgets,
) -> Result<(HyperParams, HyperDiagnostics)> {
    let deltas: Vec<f64> = params.iter().map(|p| p.delta).collect();
    let ks: Vec<f64> = params.iter().map(|p| p.k_shape).collect();
    match method {
        HyperMethod::Moments => estimate_hyper_moments(&deltas, &ks).map(|h| {
            (
                h,
                HyperDiagnostics {
                    beta_objective: None,
                    gamma_objective: None,
                    converged: true,
                },
            )
        }),
        HyperMethod::Mle => estimate_hyper_mle(&deltas, &ks, budgets).map(|f| {
            (
                f.hyper,
                HyperDiagnostics {
                    beta_objective: Some(f.beta_objective),
                    gamma_objective: Some(f.gamma_objective),
                    converged: true,
                },
            )
        }),
    }
}

/// Cell estimates, flagged cells, device estimate, objective, evaluations.
type DeviceOutcome = (Vec<f64>, usize, DeviceParams, Option<f64>, usize);

/// Run the three layers in order. Devices are processed in parallel; each
/// device's work is independent, so the result does not depend on the
/// thread schedule.
pub fn fit(dataset: &[DeviceCounts], sel: MethodSelection, budgets: &FitBudgets) -> Result<FitResult> {
    if dataset.len() < 2 {
        return Err(Error::invalid("fitting needs at least two devices").in_layer("hyper"));
    }
    if let Some(d) = dataset.iter().find(|d| d.cells.len() < 2) {
        return Err(Error::invalid("device needs at least two cells").in_device(&d.device_id));
    }
    let per_device: Vec<DeviceOutcome> = dataset
        .par_iter()
        .map(|d| {
            let mut cache = JeffreysCache::new(budgets.jeffreys_nodes);
            let (p_hats, flagged) = estimate_cells(&d.cells, sel.cell, &mut cache)
                .map_err(|e| e.in_layer("cell").in_device(&d.device_id))?;
            let (params, objective, evals) = estimate_device(&p_hats, sel.device, &budgets.optimizer)
                .map_err(|e| e.in_layer("device").in_device(&d.device_id))?;
            Ok((p_hats, flagged, params, objective, evals))
        })
        .collect::<Result<Vec<_>>>()?;

    let device_params: Vec<DeviceParams> = per_device.iter().map(|d| d.2).collect();
    let (hyper, hyper_diagnostics) =
        estimate_hyper(&device_params, sel.hyper, budgets).map_err(|e| e.in_layer("hyper"))?;

    let mut cell_probs = Vec::with_capacity(dataset.len());
    let mut devices = Vec::with_capacity(dataset.len());
    for (d, (p_hats, flagged, _, objective, evaluations)) in dataset.iter().zip(per_device) {
        cell_probs.push(p_hats);
        devices.push(DeviceDiagnostics {
            device_id: d.device_id.clone(),
            flagged_cells: flagged,
            objective,
            evaluations,
            converged: true,
        });
    }
    Ok(FitResult {
        selection: sel,
        cell_probs,
        device_params,
        hyper,
        devices,
        hyper_diagnostics,
    })
}
