//! Reproducible experiments: the estimator comparison study and the
//! binomial-approximation diagnostic.
//!
//! Replication i, device d draws from the stream `derive_seed(master, [i, d])`
//! (see [`crate::seeding`]), so results do not depend on the thread schedule.
//! Per-replication results are reduced in replication order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{fit, CellCounts, DeviceCounts, FitBudgets, MethodSelection};
use crate::gbin::GeneralizedBinomial;
use crate::noise_model::{simulate_measurements, HyperParams, SimulatedDevice};
use crate::orderstats::CellSampler;
use crate::seeding::rng_for;

/// Declarative description of an estimator comparison study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub true_hyper: HyperParams,
    pub m_dev: usize,
    pub cells: usize,
    /// Evaluations per cell.
    pub trials: u64,
    pub replications: usize,
    /// Defaults to the eight-row comparison set.
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodSelection>,
    pub master_seed: u64,
    #[serde(default)]
    pub budgets: FitBudgets,
}

fn default_methods() -> Vec<MethodSelection> {
    MethodSelection::comparison_set().to_vec()
}

impl StudyConfig {
    /// Reduced-scale study at the simulation truth (100, 900, 800, 900).
    pub fn desk_scale(master_seed: u64) -> Self {
        Self {
            true_hyper: HyperParams::simulation_truth(),
            m_dev: 20,
            cells: 2000,
            trials: 100,
            replications: 200,
            methods: default_methods(),
            master_seed,
            budgets: FitBudgets::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_dev < 2 {
            return Err(Error::invalid("a study needs at least two devices"));
        }
        if self.cells < 2 || self.trials == 0 || self.replications == 0 {
            return Err(Error::invalid("cells (≥ 2), trials and replications must be positive"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("methods list is empty"));
        }
        let h = &self.true_hyper;
        HyperParams::new(h.alpha, h.beta, h.kappa, h.lambda)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("study config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Squared Euclidean distance ‖θ − θ̂‖².
pub fn quadratic_loss(theta: (f64, f64), theta_hat: (f64, f64)) -> f64 {
    (theta.0 - theta_hat.0).powi(2) + (theta.1 - theta_hat.1).powi(2)
}

/// Mean losses of one method over the successful replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub method: MethodSelection,
    /// Mean of (α − α̂)² + (β − β̂)².
    pub mean_loss_ab: f64,
    /// Mean of (κ − κ̂)² + (λ − λ̂)².
    pub mean_loss_kl: f64,
    /// Mean of α̂ / (2(α̂ + β̂)).
    pub mean_edelta: f64,
    pub successes: usize,
    /// Replications whose fit failed for this method.
    pub excluded: usize,
}

/// Simulated counts of replication `rep`.
pub fn simulate_replication(cfg: &StudyConfig, rep: usize) -> Result<Vec<DeviceCounts>> {
    (0..cfg.m_dev)
        .map(|d| {
            let mut rng = rng_for(cfg.master_seed, &[rep as u64, d as u64]);
            let dev = SimulatedDevice::sample(&cfg.true_hyper, cfg.cells, &mut rng);
            let x = simulate_measurements(&dev, cfg.trials, &mut rng)?;
            Ok(DeviceCounts {
                device_id: format!("r{rep}d{d}"),
                cells: x
                    .into_iter()
                    .map(|errors| CellCounts {
                        errors,
                        trials: cfg.trials,
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Per-method outcome of one replication: (loss_ab, loss_kl, E δ̂) or None.
type RepOutcome = Vec<Option<(f64, f64, f64)>>;

fn run_replication(cfg: &StudyConfig, rep: usize) -> Result<RepOutcome> {
    let data = simulate_replication(cfg, rep)?;
    let h = &cfg.true_hyper;
    Ok(cfg
        .methods
        .iter()
        .map(|&sel| {
            fit(&data, sel, &cfg.budgets).ok().map(|r| {
                let e = &r.hyper;
                (
                    quadratic_loss((h.alpha, h.beta), (e.alpha, e.beta)),
                    quadratic_loss((h.kappa, h.lambda), (e.kappa, e.lambda)),
                    e.expected_delta(),
                )
            })
        })
        .collect())
}

/// Runs every replication and method; failed fits are excluded from that
/// method's means and counted.
pub fn run_estimation_study(cfg: &StudyConfig) -> Result<Vec<LossRow>> {
    cfg.validate()?;
    let outcomes = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Result<Vec<_>>>()?;
    Ok(cfg
        .methods
        .iter()
        .enumerate()
        .map(|(j, &method)| {
            let (mut ab, mut kl, mut ed, mut ok) = (0.0, 0.0, 0.0, 0usize);
            for rep in &outcomes {
                if let Some((a, k, e)) = rep[j] {
                    ab += a;
                    kl += k;
                    ed += e;
                    ok += 1;
                }
            }
            let n = ok as f64;
            LossRow {
                method,
                mean_loss_ab: if ok > 0 { ab / n } else { f64::NAN },
                mean_loss_kl: if ok > 0 { kl / n } else { f64::NAN },
                mean_edelta: if ok > 0 { ed / n } else { f64::NAN },
                successes: ok,
                excluded: cfg.replications - ok,
            }
        })
        .collect())
}

/// Variance gaps against maximum CDF distances for a batch of random
/// generalized binomial laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxDiagnostic {
    /// (variance_gap, max_cdf_distance) per law.
    pub pairs: Vec<(f64, f64)>,
    /// Pearson correlation of the pairs; None when either coordinate is constant.
    pub correlation: Option<f64>,
}

/// Pearson correlation; None when fewer than two points or zero variance.
pub fn pearson(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    let denom = (sxx * syy).sqrt();
    (denom > 0.0).then(|| sxy / denom)
}

/// Draws `count` laws with `n` probabilities each from `sampler`; law i uses
/// the stream `derive_seed(seed, [i])`.
pub fn approx_diagnostic_batch(count: usize, n: usize, sampler: &CellSampler, seed: u64) -> Result<ApproxDiagnostic> {
    if count < 2 {
        return Err(Error::invalid("the diagnostic needs at least two laws"));
    }
    if n == 0 {
        return Err(Error::invalid("laws need at least one probability"));
    }
    sampler.validate()?;
    let pairs = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(seed, &[i as u64]);
            let mut probs = vec![0.0; n];
            sampler.fill(&mut probs, &mut rng);
            let law = GeneralizedBinomial::new(probs)?;
            let approx = law.binomial_approx();
            // rounding can leave gaps of order −1e-16 on equal probabilities
            Ok((approx.variance_gap.max(0.0), law.max_cdf_distance(&approx)))
        })
        .collect::<Result<Vec<_>>>()?;
    let correlation = pearson(&pairs);
    Ok(ApproxDiagnostic { pairs, correlation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_model::ScaledBeta;
    use approx::assert_abs_diff_eq;

    #[test]
    fn loss_examples() {
        assert_eq!(quadratic_loss((3.0, 4.0), (3.0, 4.0)), 0.0);
        assert_eq!(quadratic_loss((100.0, 900.0), (101.0, 899.0)), 2.0);
        assert_eq!(quadratic_loss((1.0, 2.0), (4.0, -2.0)), quadratic_loss((4.0, -2.0), (1.0, 2.0)));
    }

    fn small(seed: u64) -> StudyConfig {
        StudyConfig {
            m_dev: 6,
            cells: 300,
            replications: 4,
            ..StudyConfig::desk_scale(seed)
        }
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = small(3);
        let a = run_estimation_study(&cfg).unwrap();
        let b = run_estimation_study(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        for row in &a {
            assert_eq!(row.successes + row.excluded, 4);
            if row.successes > 0 {
                assert!(row.mean_loss_ab >= 0.0 && row.mean_loss_kl >= 0.0);
                assert!(row.mean_edelta > 0.0 && row.mean_edelta < 0.5);
            }
        }
        let other = run_estimation_study(&small(4)).unwrap();
        assert_ne!(format!("{a:?}"), format!("{other:?}"));
    }

    #[test]
    fn single_replication() {
        let cfg = StudyConfig {
            replications: 1,
            methods: vec![MethodSelection::bayes_bayes_mle()],
            ..small(5)
        };
        let rows = run_estimation_study(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        let data = simulate_replication(&cfg, 0).unwrap();
        let direct = fit(&data, MethodSelection::bayes_bayes_mle(), &cfg.budgets).unwrap();
        let h = cfg.true_hyper;
        let want = quadratic_loss((h.alpha, h.beta), (direct.hyper.alpha, direct.hyper.beta));
        assert_eq!(rows[0].mean_loss_ab, want);
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            m_dev = 20
            cells = 2000
            trials = 100
            replications = 200
            master_seed = 1
            methods = ["Bayes/Bayes/MLE", "Moments/Moments/Moments"]
            [true_hyper]
            alpha = 100.0
            beta = 900.0
            kappa = 800.0
            lambda = 900.0
        "#;
        let cfg = StudyConfig::from_toml(text).unwrap();
        assert_eq!(cfg.methods.len(), 2);
        assert_eq!(cfg.true_hyper, HyperParams::simulation_truth());
        let empty = text.replace(r#"["Bayes/Bayes/MLE", "Moments/Moments/Moments"]"#, "[]");
        assert!(StudyConfig::from_toml(&empty).is_err());
        let unknown = format!("bogus = 1\n{text}");
        assert!(StudyConfig::from_toml(&unknown).is_err());
        let defaulted = text.replace(r#"methods = ["Bayes/Bayes/MLE", "Moments/Moments/Moments"]"#, "");
        assert_eq!(StudyConfig::from_toml(&defaulted).unwrap().methods.len(), 8);
    }

    #[test]
    fn diagnostic_pairs_are_nonnegative() {
        let sampler = CellSampler::ScaledBeta(ScaledBeta::new(0.0, 1.0, 1.5, 1.8).unwrap());
        let d = approx_diagnostic_batch(200, 100, &sampler, 1).unwrap();
        assert_eq!(d.pairs.len(), 200);
        assert!(d.pairs.iter().all(|&(g, m)| g >= 0.0 && m >= 0.0));
        assert!(d.correlation.unwrap() > 0.5);
    }

    #[test]
    fn diagnostic_degenerate_cases() {
        let d = approx_diagnostic_batch(5, 50, &CellSampler::Constant(0.3), 1).unwrap();
        for &(g, m) in &d.pairs {
            assert_abs_diff_eq!(g, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-12);
        }
        assert_eq!(pearson(&[(1.0, 2.0), (1.0, 3.0)]), None);
        let two = approx_diagnostic_batch(2, 10, &CellSampler::ScaledBeta(ScaledBeta::half(1.0, 1.0).unwrap()), 2).unwrap();
        assert_eq!(two.pairs.len(), 2);
        assert!(approx_diagnostic_batch(1, 10, &CellSampler::Constant(0.1), 1).is_err());
    }

    #[test]
    fn pearson_reference_values() {
        let line: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 1.0)).collect();
        assert_abs_diff_eq!(pearson(&line).unwrap(), 1.0, epsilon = 1e-15);
        let anti: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -(i as f64))).collect();
        assert_abs_diff_eq!(pearson(&anti).unwrap(), -1.0, epsilon = 1e-15);
        // hand-computed: x = (1,2,3), y = (1,3,2) → r = 0.5
        assert_abs_diff_eq!(pearson(&[(1.0, 1.0), (2.0, 3.0), (3.0, 2.0)]).unwrap(), 0.5, epsilon = 1e-15);
    }
}
