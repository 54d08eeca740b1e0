use std::collections::HashSet;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use puf_noise::estimators::{fit, DeviceCounts, FitBudgets, MethodSelection};
use puf_noise::ingest::{self, RowFormat};
use puf_noise::noise_model::{
    failure_probability, ln_failure_probability, posterior_predictive_sample, simulate_measurements,
    DensityGrid, HyperParams, PredictiveDensity, SimulatedDevice,
};
use puf_noise::orderstats::{
    expected_orderstat_mc, expected_orderstat_scaled_beta_alpha1, expected_orderstat_scaled_beta_beta1,
    mask_curve, mask_table, CellSampler, OrderStatSpec,
};
use puf_noise::seeding::rng_for;
use puf_noise::studies::{approx_diagnostic_batch, run_estimation_study, StudyConfig};
use puf_noise::ScaledBeta;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{num, OutDir, RunManifest, Table};
use crate::spec::{parse_hyper, parse_real, parse_sampler};
use crate::{
    ApproxDiagArgs, Cli, Command, DumpFormat, FailureArgs, FitArgs, IngestArgs, MaskArgs, OrderstatArgs,
    SimulateArgs, DEFAULT_SEED,
};

/// Stream identifiers below the master seed, one per subcommand.
const STREAM_SIMULATE: u64 = 10;
const STREAM_FAILURE: u64 = 11;

pub fn run(cli: &Cli) -> CliResult<()> {
    let mut out = OutDir::create(&cli.out)?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let (name, seed) = match &cli.command {
        Command::Ingest(a) => ("ingest", ingest_cmd(a, &mut out).map(|_| seed)?),
        Command::Fit(a) => ("fit", fit_cmd(a, &mut out).map(|_| seed)?),
        Command::Simulate(a) => ("simulate", simulate_cmd(a, seed, &mut out).map(|_| seed)?),
        Command::Failure(a) => ("failure", failure_cmd(a, seed, &mut out).map(|_| seed)?),
        Command::Mask(a) => ("mask", mask_cmd(a, seed, &mut out).map(|_| seed)?),
        Command::Orderstat(a) => ("orderstat", orderstat_cmd(a, seed, &mut out).map(|_| seed)?),
        Command::Study => ("study", study_cmd(cli, &mut out)?),
        Command::ApproxDiag(a) => ("approx-diag", approx_cmd(a, seed, &mut out).map(|_| seed)?),
    };
    RunManifest::write(name, cli.config.as_deref(), seed, &mut out)?;
    Ok(())
}

fn file_stem_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn histogram(values: impl Iterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for v in values {
        let t = ((v - lo) / (hi - lo) * bins as f64).floor();
        let i = (t.max(0.0) as usize).min(bins - 1);
        h[i] += 1;
    }
    h
}

fn ingest_cmd(a: &IngestArgs, out: &mut OutDir) -> CliResult<()> {
    if a.bins == 0 {
        return Err(CliError::usage("--bins must be positive"));
    }
    let format = match a.format {
        DumpFormat::Auto => RowFormat::Auto,
        DumpFormat::Text => RowFormat::Text,
        DumpFormat::Hex => RowFormat::Hex,
    };
    let mut seen = HashSet::new();
    let mut weights = Table::new(&["device_id", "bin_lo", "bin_hi", "count"]);
    for path in &a.dumps {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mat = ingest::parse_evaluations(BufReader::new(file), format)
            .map_err(|e| CliError::data(e).in_file(path))?;
        if !seen.insert(mat.device_id.clone()) {
            return Err(CliError::Data(format!("{}: duplicate device id {}", path.display(), mat.device_id)));
        }
        let kept = ingest::discard_aging(&mat, a.skip).map_err(|e| CliError::data(e).in_file(path))?;
        let summary = ingest::summarize_cells(&kept);
        let counts: Vec<_> = summary.iter().map(|s| s.counts()).collect();
        let mut buf = Vec::new();
        ingest::write_counts_csv(&mat.device_id, &counts, &mut buf).map_err(CliError::data)?;
        out.write(&format!("{}.counts.csv", file_stem_safe(&mat.device_id)), &buf)?;
        let h = histogram(summary.iter().map(|s| s.bit_weight), 0.0, 1.0, a.bins);
        for (i, c) in h.iter().enumerate() {
            weights.push(vec![
                mat.device_id.clone(),
                num(i as f64 / a.bins as f64),
                num((i + 1) as f64 / a.bins as f64),
                c.to_string(),
            ]);
        }
        println!("{}: {} cells, {} evaluations kept", mat.device_id, kept.cells(), kept.rows());
    }
    out.write_table("bit_weights.csv", &weights)?;
    Ok(())
}

fn read_counts(paths: &[std::path::PathBuf]) -> CliResult<Vec<DeviceCounts>> {
    let mut all = Vec::new();
    let mut seen = HashSet::new();
    for path in paths {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let devices = ingest::read_counts_csv(BufReader::new(file)).map_err(|e| CliError::data(e).in_file(path))?;
        for d in devices {
            if !seen.insert(d.device_id.clone()) {
                return Err(CliError::Data(format!("{}: duplicate device id {}", path.display(), d.device_id)));
            }
            all.push(d);
        }
    }
    Ok(all)
}

#[derive(Serialize)]
struct Interval {
    level: f64,
    delta: [f64; 2],
    k_shape: [f64; 2],
}

#[derive(Serialize)]
struct DeviceEntry {
    device_id: String,
    cells: usize,
    delta: f64,
    k_shape: f64,
    flagged_cells: usize,
    objective: Option<f64>,
}

#[derive(Serialize)]
struct FitReport {
    methods: MethodSelection,
    devices_count: usize,
    hyper: HyperParams,
    expected_delta: f64,
    expected_k: f64,
    intervals: Interval,
    devices: Vec<DeviceEntry>,
    hyper_diagnostics: puf_noise::estimators::HyperDiagnostics,
}

fn fit_cmd(a: &FitArgs, out: &mut OutDir) -> CliResult<()> {
    let sel: MethodSelection = a.methods.parse().map_err(CliError::arg)?;
    if a.bins == 0 {
        return Err(CliError::usage("--bins must be positive"));
    }
    let data = read_counts(&a.counts)?;
    let res = fit(&data, sel, &FitBudgets::default()).map_err(CliError::data)?;
    let h = res.hyper;
    let dd = h.delta_distribution();
    let kd = h.k_distribution();
    let report = FitReport {
        methods: sel,
        devices_count: data.len(),
        hyper: h,
        expected_delta: h.expected_delta(),
        expected_k: h.expected_k(),
        intervals: Interval {
            level: 0.95,
            delta: [dd.quantile(0.025), dd.quantile(0.975)],
            k_shape: [kd.quantile(0.025), kd.quantile(0.975)],
        },
        devices: data
            .iter()
            .zip(&res.device_params)
            .zip(&res.devices)
            .map(|((d, p), diag)| DeviceEntry {
                device_id: d.device_id.clone(),
                cells: d.cells.len(),
                delta: p.delta,
                k_shape: p.k_shape,
                flagged_cells: diag.flagged_cells,
                objective: diag.objective,
            })
            .collect(),
        hyper_diagnostics: res.hyper_diagnostics.clone(),
    };
    out.write_json("fit.json", &report)?;

    let mut hist = Table::new(&["bin_lo", "bin_hi", "count"]);
    let h_cells = histogram(res.cell_probs.iter().flatten().copied(), 0.0, 0.5, a.bins);
    for (i, c) in h_cells.iter().enumerate() {
        let w = 0.5 / a.bins as f64;
        hist.push(vec![num(i as f64 * w), num((i + 1) as f64 * w), c.to_string()]);
    }
    out.write_table("cell_estimates_hist.csv", &hist)?;

    if a.density_points > 0 {
        let density = PredictiveDensity::new(&h, DensityGrid::default());
        let mut t = Table::new(&["p", "density"]);
        for i in 0..a.density_points {
            let p = 0.5 * (i as f64 + 0.5) / a.density_points as f64;
            t.push(vec![num(p), num(density.density(p))]);
        }
        out.write_table("predictive_density.csv", &t)?;
    }
    println!(
        "{sel}: alpha={} beta={} kappa={} lambda={} E[delta]={} E[K]={}",
        h.alpha,
        h.beta,
        h.kappa,
        h.lambda,
        h.expected_delta(),
        h.expected_k()
    );
    Ok(())
}

fn simulate_cmd(a: &SimulateArgs, seed: u64, out: &mut OutDir) -> CliResult<()> {
    if a.devices == 0 || a.cells == 0 || a.trials == 0 {
        return Err(CliError::usage("devices, cells and trials must be positive"));
    }
    let h = parse_hyper(&a.hyper)?;
    let width = a.devices.to_string().len();
    let mut counts = Vec::new();
    let mut params = Table::new(&["device_id", "delta", "k_shape"]);
    for d in 0..a.devices {
        let mut rng = rng_for(seed, &[STREAM_SIMULATE, d as u64]);
        let dev = SimulatedDevice::sample(&h, a.cells, &mut rng);
        let x = simulate_measurements(&dev, a.trials, &mut rng).map_err(CliError::arg)?;
        let id = format!("sim{d:0width$}");
        let cells: Vec<_> = x
            .into_iter()
            .map(|errors| puf_noise::estimators::CellCounts { errors, trials: a.trials })
            .collect();
        let mut buf = Vec::new();
        ingest::write_counts_csv(&id, &cells, &mut buf).map_err(CliError::data)?;
        if d > 0 {
            // keep a single header
            let nl = buf.iter().position(|&b| b == b'\n').map_or(0, |i| i + 1);
            buf.drain(..nl);
        }
        counts.extend_from_slice(&buf);
        params.push(vec![id, num(dev.params.delta), num(dev.params.k_shape)]);
    }
    out.write("simulated.counts.csv", &counts)?;
    out.write_table("simulated.devices.csv", &params)?;
    Ok(())
}

#[derive(Serialize)]
struct FailureReport {
    n: u64,
    capacity: u64,
    p_bar: f64,
    p_bar_source: &'static str,
    sample_size: Option<usize>,
    expected_errors: f64,
    failure_probability: f64,
    log10_failure_probability: f64,
}

fn failure_cmd(a: &FailureArgs, seed: u64, out: &mut OutDir) -> CliResult<()> {
    if a.capacity > a.n {
        return Err(CliError::usage(format!("capacity {} exceeds response length {}", a.capacity, a.n)));
    }
    let (p_bar, source) = match (&a.p_bar, &a.hyper) {
        (Some(p), _) => (parse_real(p).map_err(CliError::Usage)?, "given"),
        (None, Some(h)) => {
            let h = parse_hyper(h)?;
            match a.sample_size {
                Some(s) => {
                    let mut rng = rng_for(seed, &[STREAM_FAILURE]);
                    let draws = posterior_predictive_sample(&h, s, &mut rng).map_err(CliError::arg)?;
                    (draws.iter().sum::<f64>() / s as f64, "posterior_predictive_sample")
                }
                None => (h.expected_delta(), "expected_delta"),
            }
        }
        (None, None) => return Err(CliError::usage("either --p-bar or --hyper is required")),
    };
    let ln_fail = ln_failure_probability(a.n, a.capacity, p_bar).map_err(CliError::arg)?;
    let fail = failure_probability(a.n, a.capacity, p_bar).map_err(CliError::arg)?;
    let report = FailureReport {
        n: a.n,
        capacity: a.capacity,
        p_bar,
        p_bar_source: source,
        sample_size: a.sample_size,
        expected_errors: a.n as f64 * p_bar,
        failure_probability: fail,
        log10_failure_probability: ln_fail / std::f64::consts::LN_10,
    };
    out.write_json("failure.json", &report)?;
    let shown = if fail >= 1e-15 {
        num(fail)
    } else {
        format!("10^{}", report.log10_failure_probability)
    };
    println!(
        "p_bar={} expected_errors={} failure_probability={shown}",
        p_bar, report.expected_errors
    );
    Ok(())
}

fn mask_cmd(a: &MaskArgs, seed: u64, out: &mut OutDir) -> CliResult<()> {
    let sampler = parse_sampler(&a.sampler)?;
    if a.replicates == 0 {
        return Err(CliError::usage("--replicates must be positive"));
    }
    if a.r_max >= a.len {
        return Err(CliError::usage(format!("--r-max {} must be below --len {}", a.r_max, a.len)));
    }
    if let Some(base) = a.base_capacity {
        let rows = mask_table(a.len, a.r_max, base, a.decrement, &sampler, a.replicates, seed).map_err(CliError::arg)?;
        let mut t = Table::new(&[
            "ignored",
            "capacity",
            "mean_error_rate_after_mask",
            "avg_failure_prob",
            "max_failure_prob",
            "replicates",
            "low_precision",
        ]);
        for r in &rows {
            t.push(vec![
                r.ignored.to_string(),
                r.capacity.to_string(),
                num(r.mean_error_rate_after_mask),
                num(r.avg_failure_prob),
                num(r.max_failure_prob),
                r.replicates.to_string(),
                r.low_precision.to_string(),
            ]);
            println!(
                "r={} capacity={} avg={} max={}",
                r.ignored, r.capacity, r.avg_failure_prob, r.max_failure_prob
            );
        }
        out.write_table("mask_report.csv", &t)?;
        if rows.first().is_some_and(|r| r.low_precision) {
            eprintln!("pufnoise: warning: {} replicates give low-precision estimates", a.replicates);
        }
    }
    let curve = mask_curve(a.len, a.r_max, &sampler, a.replicates, seed).map_err(CliError::arg)?;
    let mut t = Table::new(&["ignored", "mean_error_rate"]);
    for (r, v) in curve.iter().enumerate() {
        t.push(vec![r.to_string(), num(*v)]);
    }
    out.write_table("mask_curve.csv", &t)?;
    println!("mean error rate: r=0 {} r={} {}", curve[0], a.r_max, curve[a.r_max]);
    Ok(())
}

fn orderstat_cmd(a: &OrderstatArgs, seed: u64, out: &mut OutDir) -> CliResult<()> {
    let law = ScaledBeta::new(a.a, a.b, a.alpha, a.beta).map_err(CliError::arg)?;
    let closed = a.beta == 1.0 || a.alpha == 1.0;
    if !closed && a.replicates.is_none() {
        return Err(CliError::usage("no closed form unless alpha or beta is 1; pass --replicates"));
    }
    let ranks: Vec<usize> = match a.k {
        Some(k) => vec![k],
        None => (1..=a.n).collect(),
    };
    let mut t = Table::new(&["k", "n", "closed_form", "mc_estimate", "mc_std_error"]);
    for k in ranks {
        let spec = OrderStatSpec::new(k, a.n).map_err(CliError::arg)?;
        let exact = if a.beta == 1.0 {
            Some(expected_orderstat_scaled_beta_alpha1(a.a, a.b, a.alpha, spec).map_err(CliError::arg)?)
        } else if a.alpha == 1.0 {
            Some(expected_orderstat_scaled_beta_beta1(a.a, a.b, a.beta, spec).map_err(CliError::arg)?)
        } else {
            None
        };
        let mc = match a.replicates {
            Some(r) => Some(
                expected_orderstat_mc(&CellSampler::ScaledBeta(law), spec, r, seed).map_err(CliError::arg)?,
            ),
            None => None,
        };
        t.push(vec![
            k.to_string(),
            a.n.to_string(),
            exact.map(num).unwrap_or_default(),
            mc.map(|m| num(m.estimate)).unwrap_or_default(),
            mc.map(|m| num(m.std_error)).unwrap_or_default(),
        ]);
    }
    out.write_table("orderstat.csv", &t)?;
    Ok(())
}

fn load_study(path: &Path) -> CliResult<StudyConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    StudyConfig::from_toml(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn study_cmd(cli: &Cli, out: &mut OutDir) -> CliResult<u64> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::usage("study requires --config"))?;
    let mut cfg = load_study(path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    let rows = run_estimation_study(&cfg).map_err(CliError::data)?;
    let mut t = Table::new(&["method", "mean_loss_ab", "mean_loss_kl", "mean_edelta", "successes", "excluded"]);
    for r in &rows {
        t.push(vec![
            r.method.to_string(),
            num(r.mean_loss_ab),
            num(r.mean_loss_kl),
            num(r.mean_edelta),
            r.successes.to_string(),
            r.excluded.to_string(),
        ]);
        println!(
            "{:<24} loss(alpha,beta)={} loss(kappa,lambda)={} E[delta]={} excluded={}",
            r.method.to_string(),
            r.mean_loss_ab,
            r.mean_loss_kl,
            r.mean_edelta,
            r.excluded
        );
    }
    out.write_table("study.csv", &t)?;
    Ok(cfg.master_seed)
}

#[derive(Serialize)]
struct ApproxSummary {
    count: usize,
    n: usize,
    correlation: Option<f64>,
}

fn approx_cmd(a: &ApproxDiagArgs, seed: u64, out: &mut OutDir) -> CliResult<()> {
    let sampler = parse_sampler(&a.sampler)?;
    let d = approx_diagnostic_batch(a.count, a.n, &sampler, seed).map_err(CliError::arg)?;
    let mut t = Table::new(&["variance_gap", "max_cdf_distance"]);
    for (g, m) in &d.pairs {
        t.push(vec![num(*g), num(*m)]);
    }
    out.write_table("approx_diag.csv", &t)?;
    out.write_json(
        "approx_diag.json",
        &ApproxSummary {
            count: a.count,
            n: a.n,
            correlation: d.correlation,
        },
    )?;
    match d.correlation {
        Some(r) => println!("correlation={r}"),
        None => println!("correlation undefined (constant coordinate)"),
    }
    Ok(())
}
