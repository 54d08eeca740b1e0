//! Parsing of compact command-line specifications.

use puf_noise::noise_model::{HyperParams, ScaledBeta};
use puf_noise::orderstats::CellSampler;

use crate::error::{CliError, CliResult};

/// A real number or a fraction such as `1/9`.
pub fn parse_real(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| format!("invalid number {s:?}"))?;
            let d: f64 = d.trim().parse().map_err(|_| format!("invalid number {s:?}"))?;
            n / d
        }
        None => s.parse().map_err(|_| format!("invalid number {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not a finite number"))
    }
}

fn reals(list: &str, want: &[usize]) -> CliResult<Vec<f64>> {
    let v = list
        .split(',')
        .map(parse_real)
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Usage)?;
    if !want.contains(&v.len()) {
        return Err(CliError::usage(format!("expected {want:?} comma-separated values, got {:?}", list)));
    }
    Ok(v)
}

/// `alpha,beta,kappa,lambda`, or `measured` / `truth` for the reference sets.
pub fn parse_hyper(s: &str) -> CliResult<HyperParams> {
    match s.trim() {
        "measured" => Ok(HyperParams::measured_population()),
        "truth" => Ok(HyperParams::simulation_truth()),
        list => {
            let v = reals(list, &[4])?;
            HyperParams::new(v[0], v[1], v[2], v[3]).map_err(CliError::arg)
        }
    }
}

/// Cell sampler specification:
///
/// * `constant:P`
/// * `beta:ALPHA,BETA` on [0, 1/2], or `beta:A,B,ALPHA,BETA` on [A, B]
/// * `predictive[:HYPER]`, independent posterior-predictive cells
/// * `device[:HYPER]`, one (δ, K) per response
///
/// HYPER is as in [`parse_hyper`] and defaults to `measured`.
pub fn parse_sampler(s: &str) -> CliResult<CellSampler> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let sampler = match kind.trim() {
        "constant" => CellSampler::Constant(reals(rest, &[1])?[0]),
        "beta" => {
            let v = reals(rest, &[2, 4])?;
            let law = if v.len() == 2 {
                ScaledBeta::half(v[0], v[1])
            } else {
                ScaledBeta::new(v[0], v[1], v[2], v[3])
            };
            CellSampler::ScaledBeta(law.map_err(CliError::arg)?)
        }
        "predictive" | "device" => {
            let h = if rest.trim().is_empty() {
                HyperParams::measured_population()
            } else {
                parse_hyper(rest)?
            };
            if kind.trim() == "predictive" {
                CellSampler::PosteriorPredictive(h)
            } else {
                CellSampler::Device(h)
            }
        }
        other => return Err(CliError::usage(format!("unknown sampler kind {other:?}"))),
    };
    sampler.validate().map_err(CliError::arg)?;
    Ok(sampler)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions_and_samplers() {
        assert_eq!(parse_real("1/9").unwrap(), 1.0 / 9.0);
        assert_eq!(parse_real(" 0.25 ").unwrap(), 0.25);
        assert!(parse_real("1/0").is_err());
        assert!(parse_real("x").is_err());
        assert_eq!(parse_sampler("constant:0.05").unwrap(), CellSampler::Constant(0.05));
        assert_eq!(
            parse_sampler("beta:1/9,1").unwrap(),
            CellSampler::ScaledBeta(ScaledBeta::half(1.0 / 9.0, 1.0).unwrap())
        );
        assert_eq!(
            parse_sampler("predictive").unwrap(),
            CellSampler::PosteriorPredictive(HyperParams::measured_population())
        );
        assert_eq!(parse_sampler("device:truth").unwrap(), CellSampler::Device(HyperParams::simulation_truth()));
        assert!(parse_sampler("beta:1").is_err());
        assert!(parse_sampler("constant:2").is_err());
        assert!(parse_sampler("normal:0,1").is_err());
        assert!(parse_hyper("1,2,3").is_err());
        assert!(parse_hyper("1,2,3,-4").is_err());
    }
}
