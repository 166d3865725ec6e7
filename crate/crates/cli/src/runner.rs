//! Runs a validated experiment and writes its result files.

use std::path::{Path, PathBuf};

use serde_json::{json, Value as Json};
use transportlab::dynamics::{
    profile_distance, time_average, time_average_resolvent, EnergyGrid, Method, MomentTable, TimeAverageProfile,
};
use transportlab::exponents::{
    fit_moments, fit_outside, lower_bound_certificate, sublinearity_check, two_sided_premise_scan,
    upper_bound_premise_scan, CertificateSampling, SublinearityConfig,
};
use transportlab::numerics::least_squares;
use transportlab::tracemap::{band_zeros, eta_constant, radius_bounds, trace_orbit, upper_exponent_from_radii};
use transportlab::transfer::{critical_energy_test, equidistributed_phases, PhaseFamily};
use transportlab::{PotentialSpec, WavePacket};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::output::{fmt_f64, to_csv_bytes, to_json_bytes, write_atomic};

/// Largest half-width for which `--verify` also runs the eigenbasis routes.
pub const VERIFY_MAX_HALF_WIDTH: usize = 1000;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub verify: bool,
    pub jobs: Option<usize>,
}

#[derive(Debug)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    /// Numerical-guard failures (leakage or non-finite results).
    pub guard_failures: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// A parameter combination the library rejects at run time.
    #[error("configuration rejected: {0}")]
    Config(transportlab::Error),
    #[error("numerical failure: {0}")]
    Numerical(transportlab::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<transportlab::Error> for RunError {
    fn from(e: transportlab::Error) -> Self {
        use transportlab::Error::*;
        match e {
            SingularSolve { .. } | ZeroCountMismatch { .. } => RunError::Numerical(e),
            _ => RunError::Config(e),
        }
    }
}

/// Files and metadata produced by one experiment.
struct Outputs {
    files: Vec<(&'static str, Vec<u8>)>,
    derived: serde_json::Map<String, Json>,
    guard: Vec<String>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new(), derived: serde_json::Map::new(), guard: Vec::new() }
    }

    fn json(&mut self, name: &'static str, value: &impl serde::Serialize) -> Result<(), RunError> {
        self.files.push((name, to_json_bytes(value)?));
        Ok(())
    }

    fn csv(&mut self, name: &'static str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        self.files.push((name, to_csv_bytes(header, rows)?));
        Ok(())
    }

    fn check_leakage(&mut self, profiles: &[TimeAverageProfile], tol: f64) {
        for p in profiles {
            if !(p.leakage <= tol) {
                self.guard.push(format!(
                    "leakage {} at T = {} (L = {}) exceeds {}",
                    fmt_f64(p.leakage),
                    fmt_f64(p.time),
                    p.half_width,
                    fmt_f64(tol)
                ));
            }
        }
    }
}

pub fn run_experiment(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport, RunError> {
    let outputs = match options.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| std::io::Error::other(e.to_string()))?;
            pool.install(|| compute(config, options.verify))?
        }
        None => compute(config, options.verify)?,
    };
    let mut files = Vec::new();
    for (name, bytes) in &outputs.files {
        files.push(write_atomic(&options.out, name, bytes)?);
    }
    let mut resolved = config.clone();
    resolved.output = options.out.to_string_lossy().into_owned();
    let names: Vec<&str> = outputs.files.iter().map(|(n, _)| *n).collect();
    let meta = json!({
        "config": resolved.to_json(),
        "runner": { "verify": options.verify, "jobs": options.jobs },
        "versions": { "transportlab": transportlab::VERSION, "transportlab-cli": env!("CARGO_PKG_VERSION") },
        "seed": config.seed,
        "derived": outputs.derived,
        "guard": { "passed": outputs.guard.is_empty(), "failures": outputs.guard },
        "outputs": names,
    });
    files.push(write_atomic(&options.out, "run_meta.json", &to_json_bytes(&meta)?)?);
    Ok(RunReport { files, guard_failures: outputs.guard })
}

/// Writes a plain-text error report into `dir`.
pub fn write_error_report(dir: &Path, name: &str, lines: &[String]) -> std::io::Result<PathBuf> {
    let mut text = lines.join("\n");
    text.push('\n');
    write_atomic(dir, name, text.as_bytes())
}

fn compute(config: &ExperimentConfig, verify: bool) -> Result<Outputs, RunError> {
    let spec = config.spec()?;
    let psi = config.packet()?;
    let mut out = Outputs::new();
    match config.kind {
        ExperimentKind::Profile => profile(config, &spec, &psi, verify, &mut out)?,
        ExperimentKind::Moments | ExperimentKind::Beta | ExperimentKind::SAlpha => {
            moments(config, &spec, &psi, verify, &mut out)?
        }
        ExperimentKind::PremiseScan => premise(config, &spec, &mut out)?,
        ExperimentKind::Certificate => certificate(config, &spec, &psi, verify, &mut out)?,
        ExperimentKind::Tracemap => tracemap(config, &mut out)?,
        ExperimentKind::BandScan => bands(config, &mut out)?,
        ExperimentKind::CriticalScan => critical(config, &mut out)?,
        ExperimentKind::Sublinearity => sublinearity(config, &spec, &psi, &mut out)?,
    }
    Ok(out)
}

/// Profile with the configured route and energy-grid overrides.
fn profile_at(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    psi: &WavePacket,
    time: f64,
    method: Method,
) -> Result<TimeAverageProfile, RunError> {
    let l = config.boxing.profile_config().half_width_for(spec, psi, time)?;
    Ok(match method {
        Method::Resolvent => {
            let mut grid = EnergyGrid::standard(spec.bound(), time);
            if let Some(h) = config.grid.half_span {
                grid.half_span = h;
            }
            grid.spacing = config.grid.spacing_factor / time;
            grid.tail_panels = config.grid.tail_panels;
            time_average_resolvent(psi, spec, time, l, &grid)?
        }
        other => time_average(psi, spec, time, l, other)?,
    })
}

/// Distances from `base` to the other routes at the same box, when affordable.
fn oracle_distances(spec: &PotentialSpec, psi: &WavePacket, base: &TimeAverageProfile) -> Result<Json, RunError> {
    let l = base.half_width;
    if l > VERIFY_MAX_HALF_WIDTH {
        return Ok(json!({ "time": base.time, "skipped": format!("half-width {l} above {VERIFY_MAX_HALF_WIDTH}") }));
    }
    let mut entry = serde_json::Map::new();
    entry.insert("time".into(), json!(base.time));
    for method in [Method::Resolvent, Method::TimeQuadrature, Method::EigenExact] {
        if method == base.method {
            continue;
        }
        if method == Method::EigenExact && l > transportlab::dynamics::EIGEN_EXACT_MAX_L {
            entry.insert(
                "skipped".into(),
                json!(format!("eigen-exact: half-width {l} above {}", transportlab::dynamics::EIGEN_EXACT_MAX_L)),
            );
            continue;
        }
        let other = time_average(psi, spec, base.time, l, method)?;
        entry.insert(format!("distance_{}", method.name()), json!(profile_distance(base, &other)));
    }
    Ok(Json::Object(entry))
}

fn moment_rows(table: &MomentTable) -> Vec<Vec<String>> {
    table.entries.iter().map(|e| vec![fmt_f64(e.time), fmt_f64(e.p), fmt_f64(e.moment), fmt_f64(e.error_bar)]).collect()
}

const MOMENT_HEADER: [&str; 4] = ["T", "p", "moment", "err_bar"];

fn profile(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    psi: &WavePacket,
    verify: bool,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let time = config.times()[0];
    let res = profile_at(config, spec, psi, time, Method::Resolvent)?;
    let quad = if verify || config.boxing.method == Method::TimeQuadrature {
        Some(time_average(psi, spec, time, res.half_width, Method::TimeQuadrature)?)
    } else {
        None
    };
    let l = res.half_width as i64;
    let rows: Vec<Vec<String>> = (-l..=l)
        .map(|n| {
            let mut row = vec![n.to_string(), fmt_f64(res.get(n))];
            if let Some(q) = &quad {
                row.push(fmt_f64(q.get(n)));
            }
            row
        })
        .collect();
    let header: &[&str] = if quad.is_some() { &["n", "a_resolvent", "a_quadrature"] } else { &["n", "a_resolvent"] };
    out.csv("profile.csv", header, &rows)?;
    let table = MomentTable::from_profiles(std::slice::from_ref(&res), &config.analysis.p)?;
    out.csv("moments.csv", &MOMENT_HEADER, &moment_rows(&table))?;
    out.derived.insert("half_width".into(), json!(res.half_width));
    out.derived.insert("total".into(), json!(res.total()));
    out.derived.insert("leakage".into(), json!(res.leakage));
    if verify {
        out.derived.insert("oracles".into(), json!([oracle_distances(spec, psi, &res)?]));
    }
    let mut profiles = vec![res];
    profiles.extend(quad);
    out.check_leakage(&profiles, config.boxing.leakage_tol);
    Ok(())
}

fn moments(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    psi: &WavePacket,
    verify: bool,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let times = config.times();
    let profiles =
        times.iter().map(|&t| profile_at(config, spec, psi, t, config.boxing.method)).collect::<Result<Vec<_>, _>>()?;
    out.check_leakage(&profiles, config.boxing.leakage_tol);
    let table = MomentTable::from_profiles(&profiles, &config.analysis.p)?;
    out.csv("moments.csv", &MOMENT_HEADER, &moment_rows(&table))?;
    out.derived.insert("half_widths".into(), json!(profiles.iter().map(|p| p.half_width).collect::<Vec<_>>()));
    out.derived.insert("leakage".into(), json!(profiles.iter().map(|p| p.leakage).collect::<Vec<_>>()));
    if verify {
        let oracles = profiles.iter().map(|p| oracle_distances(spec, psi, p)).collect::<Result<Vec<_>, _>>()?;
        out.derived.insert("oracles".into(), json!(oracles));
    }
    match config.kind {
        ExperimentKind::Beta => {
            let fits = config
                .analysis
                .p
                .iter()
                .map(|&p| {
                    let series: Vec<f64> = table.series(p).into_iter().map(|(_, m)| m).collect();
                    fit_moments(&times, &series, p)
                })
                .collect::<transportlab::Result<Vec<_>>>()?;
            out.json("exponents.json", &json!({ "kind": "beta", "fits": fits }))?;
        }
        ExperimentKind::SAlpha => {
            let alpha = config.analysis.alpha.expect("validated");
            let outside = profiles
                .iter()
                .map(|p| Ok(p.outside_probability(p.time.powf(alpha))?.total))
                .collect::<transportlab::Result<Vec<f64>>>()?;
            let fit = fit_outside(&times, &outside, alpha)?;
            out.json("exponents.json", &json!({ "kind": "s_alpha", "fit": fit }))?;
        }
        _ => {}
    }
    Ok(())
}

fn premise(config: &ExperimentConfig, spec: &PotentialSpec, out: &mut Outputs) -> Result<(), RunError> {
    let a = &config.analysis;
    let alpha = a.alpha.expect("validated");
    let times = config.times();
    let (scan, values) = if a.two_sided {
        let scan = two_sided_premise_scan(spec, alpha, a.m, a.c, &times)?;
        let values: Vec<f64> = scan.forward.iter().zip(&scan.backward).map(|(f, b)| f.max(*b)).collect();
        (serde_json::to_value(&scan).map_err(std::io::Error::other)?, values)
    } else {
        let family = PhaseFamily::new(spec.clone())?;
        let scan = upper_bound_premise_scan(&family, alpha, a.m, a.c, &times, &equidistributed_phases(a.phases))?;
        let values = scan.values.clone();
        (serde_json::to_value(&scan).map_err(std::io::Error::other)?, values)
    };
    // log-log slope of the scan value: decay faster than any power shows up
    // as a steepening, increasingly negative slope
    let usable: Vec<(f64, f64)> =
        times.iter().zip(&values).filter(|(_, v)| **v > 0.0).map(|(t, v)| (t.ln(), v.ln())).collect();
    let slope = if usable.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
        Some(least_squares(&x, &y).0)
    } else {
        None
    };
    out.json(
        "exponents.json",
        &json!({ "kind": "premise_scan", "two_sided": a.two_sided, "scan": scan, "log_log_slope": slope }),
    )?;
    if values.iter().any(|v| !v.is_finite()) {
        out.guard.push("non-finite premise-scan value".into());
    }
    Ok(())
}

fn certificate(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    psi: &WavePacket,
    verify: bool,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let a = &config.analysis;
    let time = config.times()[0];
    let measure = if verify { Some(config.boxing.profile_config().half_width_for(spec, psi, time)?) } else { None };
    let sampling = CertificateSampling { measure_half_width: measure, ..CertificateSampling::default() };
    let cert = lower_bound_certificate(
        spec,
        psi,
        &a.intervals,
        a.alpha.expect("validated"),
        a.c,
        a.epsilon,
        time,
        &a.p,
        &sampling,
    )?;
    let verdict = if cert.passed { "pass" } else { "fail" };
    out.json("certificate.json", &json!({ "verdict": verdict, "certificate": cert }))?;
    Ok(())
}

fn tracemap(config: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let lambda = config.potential.coupling;
    let energy = config.analysis.energy.expect("validated");
    let orbit = trace_orbit(lambda, energy, config.analysis.k_max)?;
    let eta = if lambda > 0.0 { Some(eta_constant(lambda)?) } else { None };
    out.json("exponents.json", &json!({ "kind": "tracemap", "orbit": orbit, "eta": eta }))?;
    Ok(())
}

fn bands(config: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let a = &config.analysis;
    let lambda = config.potential.coupling;
    let mut rows = Vec::new();
    let mut ks = Vec::new();
    let mut outer = Vec::new();
    let mut proxies = Vec::new();
    for k in a.k_min..=a.k_max {
        let band = band_zeros(lambda, k)?;
        let radii = radius_bounds(&band, a.delta)?;
        for (j, zero) in band.zeros.iter().enumerate() {
            rows.push(vec![
                k.to_string(),
                j.to_string(),
                fmt_f64(*zero),
                fmt_f64(band.derivatives[j]),
                fmt_f64(radii.inner[j]),
                fmt_f64(radii.outer[j]),
            ]);
        }
        ks.push(k);
        outer.push(radii.outer_max);
        proxies.push(json!({ "k": k, "lyapunov_proxy": band.lyapunov_proxy(), "degenerate": radii.degenerate }));
    }
    out.csv("bands.csv", &["k", "j", "zero", "derivative", "r_proxy", "R_proxy"], &rows)?;
    let upper = if ks.len() >= 3 { Some(upper_exponent_from_radii(&ks, &outer)?) } else { None };
    let eta = if lambda > 0.0 { Some(eta_constant(lambda)?) } else { None };
    out.json(
        "exponents.json",
        &json!({ "kind": "band_scan", "delta": a.delta, "upper_exponent": upper, "levels": proxies, "eta": eta }),
    )?;
    Ok(())
}

fn critical(config: &ExperimentConfig, out: &mut Outputs) -> Result<(), RunError> {
    let a = &config.analysis;
    let (plus, minus) = config.potential.blocks().expect("validated");
    let step = (a.energy_max - a.energy_min) / (a.energy_count - 1) as f64;
    let mut critical = Vec::new();
    for i in 0..a.energy_count {
        let e = a.energy_min + step * i as f64;
        let report = critical_energy_test(&plus, &minus, e, a.tol)?;
        if report.critical {
            critical.push(report);
        }
    }
    out.json(
        "exponents.json",
        &json!({ "kind": "critical_scan", "energies_scanned": a.energy_count, "critical": critical }),
    )?;
    Ok(())
}

fn sublinearity(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    psi: &WavePacket,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let second = config.second_packet().expect("validated")?;
    let (x, y) = config.mix;
    let report = sublinearity_check(
        spec,
        psi,
        &second,
        x,
        y,
        config.analysis.p[0],
        &config.times(),
        &config.boxing.profile_config(),
        &SublinearityConfig::default(),
    )?;
    out.json("exponents.json", &json!({ "kind": "sublinearity", "report": report }))?;
    Ok(())
}
