//! Job configuration, deterministic execution and report output.
//!
//! Every job draws its randomness from `RandomStream::new(seed)`; instance `k`
//! uses substream `k` (certification additionally reserves one substream for
//! the preparation angles), so each record can be regenerated from the
//! `stream` address it carries.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certify::{
    apply_noise, decompose, parent_hamiltonian, run_protocol, CertificationReport, DecompositionKind,
    EnergySampler, NoiseModel, ProtocolConfig, Source, Verdict,
};
use crate::circuits::{run_ensemble, summarize_gammas};
use crate::error::{Error, Result};
use crate::iqproute::{normalize, random_iqp, schedule_linear, verify_schedule, MAX_VERIFY_QUBITS};
use crate::ising::{identity_report, z_transfer, IsingFieldConfig};
use crate::lattice::{Architecture, IsingCouplings, Lattice};
use crate::prep::{product_state, sample_beta_with, PrepOptions};
use crate::rng::RandomStream;
use crate::statevec::evolve_diagonal;

/// Version of the report layout written by [`write_report`].
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Anticoncentration,
    IdentityCheck,
    Certification,
    IqpRoute,
    PartitionBench,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Anticoncentration => "anticoncentration",
            JobKind::IdentityCheck => "identity-check",
            JobKind::Certification => "certification",
            JobKind::IqpRoute => "iqp-route",
            JobKind::PartitionBench => "partition-bench",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    #[default]
    Perfect,
    /// `Z` applied to the central primitive site.
    Flipped,
    /// Per-site depolarizing noise with probability `noise`.
    Depolarizing,
    /// Coherent Z rotation by angle `noise` on every site.
    ZRotation,
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid("params.source", format!("unknown source `{s}`")))
    }
}

/// Parameters used only by some job kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JobParams {
    #[serde(rename = "F_T")]
    pub f_t: f64,
    pub eps: f64,
    pub p_err: f64,
    pub source: SourceKind,
    pub noise: f64,
    pub decomposition: Option<DecompositionKind>,
    /// Architecture-III preparation angle on (`theta`) or off (0).
    pub uniform_on: bool,
    /// Include per-outcome residuals in identity-check records.
    pub verbose: bool,
}

impl Default for JobParams {
    fn default() -> Self {
        JobParams {
            f_t: 0.9,
            eps: 0.05,
            p_err: 0.05,
            source: SourceKind::Perfect,
            noise: 0.0,
            decomposition: None,
            uniform_on: true,
            verbose: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobConfig {
    pub kind: JobKind,
    pub arch: Architecture,
    pub rows: usize,
    pub cols: usize,
    pub instances: usize,
    pub seed: u64,
    #[serde(default)]
    pub params: JobParams,
}

impl JobConfig {
    pub fn new(kind: JobKind, arch: Architecture, rows: usize, cols: usize, instances: usize, seed: u64) -> Self {
        JobConfig {
            kind,
            arch,
            rows,
            cols,
            instances,
            seed,
            params: JobParams::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Range checks; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::invalid("rows", "must be positive"));
        }
        if self.kind != JobKind::IqpRoute && self.cols == 0 {
            return Err(Error::invalid("cols", "must be positive"));
        }
        match self.kind {
            JobKind::Anticoncentration => {
                if self.rows > crate::circuits::MAX_LOGICAL_QUBITS {
                    return Err(Error::invalid(
                        "rows",
                        format!("at most {} logical qubits", crate::circuits::MAX_LOGICAL_QUBITS),
                    ));
                }
            }
            JobKind::IdentityCheck => {
                let sites = self.rows * self.cols * self.arch.cell_size();
                if sites > crate::statevec::MAX_QUBITS {
                    return Err(Error::invalid(
                        "rows",
                        format!("lattice has {sites} sites, limit {}", crate::statevec::MAX_QUBITS),
                    ));
                }
            }
            JobKind::Certification => {
                let sites = self.rows * self.cols * self.arch.cell_size();
                if sites > crate::certify::MAX_CERTIFY_SITES {
                    return Err(Error::invalid(
                        "rows",
                        format!("lattice has {sites} sites, limit {}", crate::certify::MAX_CERTIFY_SITES),
                    ));
                }
                let p = &self.params;
                ProtocolConfig {
                    f_t: p.f_t,
                    eps: p.eps,
                    p_err: p.p_err,
                }
                .validate()
                .map_err(|e| match e {
                    Error::Invalid { field, reason } => Error::invalid(format!("params.{field}"), reason),
                    other => other,
                })?;
                if p.source == SourceKind::Depolarizing && !(0.0..=1.0).contains(&p.noise) {
                    return Err(Error::invalid("params.noise", "depolarizing probability must lie in [0, 1]"));
                }
                if let Some(kind) = p.decomposition {
                    let dangling = self.arch.has_dangling_bonds();
                    if dangling == (kind == DecompositionKind::TwoColor) {
                        return Err(Error::invalid(
                            "params.decomposition",
                            format!("{kind:?} does not apply to architecture {}", self.arch),
                        ));
                    }
                }
            }
            JobKind::IqpRoute => {
                if self.rows > 64 {
                    return Err(Error::invalid("rows", "at most 64 qubits"));
                }
            }
            JobKind::PartitionBench => {
                if self.rows > crate::ising::MAX_TRANSFER_ROWS {
                    return Err(Error::invalid(
                        "rows",
                        format!("at most {} rows", crate::ising::MAX_TRANSFER_ROWS),
                    ));
                }
            }
        }
        Ok(())
    }

    fn prep_options(&self) -> PrepOptions {
        PrepOptions {
            uniform_on: self.params.uniform_on,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRecord {
    pub arch: Architecture,
    pub n: usize,
    pub m: usize,
    pub instance: u64,
    pub seed: u64,
    pub gamma: f64,
    pub tv: f64,
    pub stream: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub instance: u64,
    pub stream: String,
    pub beta: String,
    pub outcomes: usize,
    pub max_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRecord {
    pub instance: u64,
    pub stream: String,
    pub n: usize,
    pub gates: usize,
    pub depth: usize,
    pub meetings: usize,
    /// `None` above the dense verification limit.
    pub deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub instance: u64,
    pub stream: String,
    pub rows: usize,
    pub cols: usize,
    pub ln_abs_z: f64,
    pub arg_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "items", rename_all = "kebab-case")]
pub enum Records {
    Anticoncentration(Vec<GammaRecord>),
    IdentityCheck(Vec<IdentityRecord>),
    Certification(Vec<CertificationReport>),
    IqpRoute(Vec<RouteRecord>),
    PartitionBench(Vec<PartitionRecord>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Anticoncentration(v) => v.len(),
            Records::IdentityCheck(v) => v.len(),
            Records::Certification(v) => v.len(),
            Records::IqpRoute(v) => v.len(),
            Records::PartitionBench(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Five-number summary with the inclusive-median convention: for an odd
/// count the median belongs to both halves when computing `q1` and `q3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let (lower, upper) = if n % 2 == 1 {
        (&v[..=n / 2], &v[n / 2..])
    } else {
        (&v[..n / 2], &v[n / 2..])
    };
    Some(Quartiles {
        min: v[0],
        q1: median_sorted(lower),
        median: median_sorted(&v),
        q3: median_sorted(upper),
        max: v[n - 1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub version: String,
    pub config: JobConfig,
    pub records: Records,
    pub aggregates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub quartiles: BTreeMap<String, Quartiles>,
    /// Wall-clock seconds; the only non-deterministic part of a report.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Execute `config`. Results depend only on the configuration.
pub fn run_job(config: &JobConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let root = RandomStream::new(config.seed);
    let mut aggregates = BTreeMap::new();
    let mut quart = BTreeMap::new();
    let mut timings = BTreeMap::new();
    let records = match config.kind {
        JobKind::Anticoncentration => {
            let stats = run_ensemble(
                config.arch,
                config.rows,
                config.cols,
                config.instances,
                &root,
                &config.prep_options(),
            )?;
            let gammas: Vec<f64> = stats.iter().map(|s| s.gamma).collect();
            let tvs: Vec<f64> = stats.iter().map(|s| s.tv).collect();
            if !stats.is_empty() {
                let ac = summarize_gammas(gammas.clone());
                aggregates.insert("mean_gamma".into(), ac.mean_gamma);
                aggregates.insert("alpha".into(), ac.alpha);
                aggregates.insert("mean_tv".into(), tvs.iter().sum::<f64>() / tvs.len() as f64);
            }
            if let Some(q) = quartiles(&gammas) {
                quart.insert("gamma".into(), q);
            }
            if let Some(q) = quartiles(&tvs) {
                quart.insert("tv".into(), q);
            }
            Records::Anticoncentration(
                stats
                    .into_iter()
                    .map(|s| GammaRecord {
                        arch: config.arch,
                        n: config.rows,
                        m: config.cols,
                        instance: s.instance,
                        seed: config.seed,
                        gamma: s.gamma,
                        tv: s.tv,
                        stream: s.stream,
                    })
                    .collect(),
            )
        }
        JobKind::IdentityCheck => {
            let lattice = Lattice::build(config.arch, config.rows, config.cols)?;
            let recs = (0..config.instances as u64)
                .map(|k| {
                    let sub = root.substream(k);
                    let beta = sample_beta_with(config.arch, &lattice, &sub, &config.prep_options())?;
                    let rep = identity_report(config.arch, config.rows, config.cols, &beta, config.params.verbose)?;
                    Ok(IdentityRecord {
                        instance: k,
                        stream: sub.address(),
                        beta: rep.beta,
                        outcomes: rep.outcomes,
                        max_residual: rep.max_residual,
                        residuals: rep.residuals,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if !recs.is_empty() {
                let worst = recs.iter().map(|r| r.max_residual).fold(0.0, f64::max);
                aggregates.insert("max_residual".into(), worst);
            }
            Records::IdentityCheck(recs)
        }
        JobKind::Certification => {
            let reps = run_certification(config, &root)?;
            if !reps.is_empty() {
                let n = reps.len() as f64;
                let acc = reps.iter().filter(|r| r.verdict == Verdict::Accept).count() as f64;
                aggregates.insert("accept_fraction".into(), acc / n);
                aggregates.insert("mean_E_star".into(), reps.iter().map(|r| r.e_star).sum::<f64>() / n);
                aggregates.insert("m_samples".into(), reps[0].m_samples as f64);
            }
            let es: Vec<f64> = reps.iter().map(|r| r.e_star).collect();
            if let Some(q) = quartiles(&es) {
                quart.insert("E_star".into(), q);
            }
            Records::Certification(reps)
        }
        JobKind::IqpRoute => {
            let n = config.rows;
            let recs = (0..config.instances as u64)
                .into_par_iter()
                .map(|k| {
                    let sub = root.substream(k);
                    let c = normalize(&random_iqp(n, &sub)?)?;
                    let s = schedule_linear(&c)?;
                    let deviation = if n <= MAX_VERIFY_QUBITS.min(8) {
                        Some(verify_schedule(&c, &s)?)
                    } else {
                        None
                    };
                    Ok(RouteRecord {
                        instance: k,
                        stream: sub.address(),
                        n,
                        gates: c.gate_count(),
                        depth: s.depth(),
                        meetings: s.meetings().len(),
                        deviation,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if !recs.is_empty() {
                aggregates.insert("max_depth".into(), recs.iter().map(|r| r.depth).max().unwrap_or(0) as f64);
                aggregates.insert("depth_bound".into(), (2 * n + 2) as f64);
                if let Some(d) = recs.iter().filter_map(|r| r.deviation).reduce(f64::max) {
                    aggregates.insert("max_deviation".into(), d);
                }
            }
            Records::IqpRoute(recs)
        }
        JobKind::PartitionBench => {
            let (rows, cols) = (config.rows, config.cols);
            let mut per = Vec::new();
            let mut recs = Vec::new();
            for k in 0..config.instances as u64 {
                let sub = root.substream(k);
                let mut rng = sub.rng();
                let field = (0..rows * cols)
                    .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
                    .collect();
                let cfg = IsingFieldConfig::new(rows, cols, field)?;
                let t = Instant::now();
                let z = z_transfer(&cfg)?;
                per.push(t.elapsed().as_secs_f64());
                recs.push(PartitionRecord {
                    instance: k,
                    stream: sub.address(),
                    rows,
                    cols,
                    ln_abs_z: z.ln_abs(),
                    arg_z: z.mantissa.arg(),
                });
            }
            if !per.is_empty() {
                timings.insert("mean_transfer_seconds".into(), per.iter().sum::<f64>() / per.len() as f64);
                timings.insert("max_transfer_seconds".into(), per.iter().copied().fold(0.0, f64::max));
            }
            Records::PartitionBench(recs)
        }
    };
    timings.insert("wall_seconds".into(), start.elapsed().as_secs_f64());
    Ok(RunReport {
        schema: REPORT_SCHEMA,
        version: crate::VERSION.to_string(),
        config: config.clone(),
        records,
        aggregates,
        quartiles: quart,
        timings,
    })
}

/// One protocol run per instance on a single resource state. The state's
/// angles come from substream `u64::MAX`; run `k` uses substream `k`.
fn run_certification(config: &JobConfig, root: &RandomStream) -> Result<Vec<CertificationReport>> {
    let lattice = Lattice::build(config.arch, config.rows, config.cols)?;
    let beta = sample_beta_with(config.arch, &lattice, &root.substream(u64::MAX), &config.prep_options())?;
    let psi = evolve_diagonal(
        &product_state(&beta, &lattice)?,
        &IsingCouplings::from_lattice(&lattice),
        &lattice,
    )?;
    let parent = parent_hamiltonian(&lattice, &beta)?;
    let kind = config.params.decomposition.unwrap_or(if lattice.arch.has_dangling_bonds() {
        DecompositionKind::TwoBody
    } else {
        DecompositionKind::TwoColor
    });
    let dec = decompose(&parent, &lattice, kind)?;
    let p = &config.params;
    let source = match p.source {
        SourceKind::Perfect => Source::perfect(psi)?,
        SourceKind::Flipped => Source::flipped(&psi, lattice.primitive_index(config.rows / 2, config.cols / 2))?,
        SourceKind::Depolarizing => apply_noise(&psi, NoiseModel::Depolarizing { p: p.noise })?,
        SourceKind::ZRotation => apply_noise(&psi, NoiseModel::ZRotation { angle: p.noise })?,
    };
    let protocol = ProtocolConfig {
        f_t: p.f_t,
        eps: p.eps,
        p_err: p.p_err,
    };
    let mut sampler = EnergySampler::new(&source, &dec, &lattice)?;
    (0..config.instances as u64)
        .map(|k| run_protocol(&protocol, &mut sampler, &root.substream(k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::invalid("format", format!("unknown format `{other}`"))),
        }
    }
}

/// Write per-instance rows as CSV, with a fixed header even when empty.
pub fn write_records_csv<W: Write>(records: &Records, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    match records {
        Records::Anticoncentration(v) => {
            wtr.write_record(["arch", "n", "m", "instance", "seed", "gamma", "tv"])?;
            for r in v {
                wtr.write_record([
                    r.arch.to_string(),
                    r.n.to_string(),
                    r.m.to_string(),
                    r.instance.to_string(),
                    r.seed.to_string(),
                    r.gamma.to_string(),
                    r.tv.to_string(),
                ])?;
            }
        }
        Records::IdentityCheck(v) => {
            wtr.write_record(["instance", "stream", "beta", "outcomes", "max_residual"])?;
            for r in v {
                wtr.write_record([
                    r.instance.to_string(),
                    r.stream.clone(),
                    r.beta.clone(),
                    r.outcomes.to_string(),
                    r.max_residual.to_string(),
                ])?;
            }
        }
        Records::Certification(v) => {
            wtr.write_record([
                "arch", "n", "m_lattice", "seed", "stream", "F_T", "eps", "p_err", "m_samples", "E_star",
                "F_min_star", "verdict",
            ])?;
            for r in v {
                wtr.write_record([
                    r.arch.to_string(),
                    r.n.to_string(),
                    r.m_lattice.to_string(),
                    r.seed.to_string(),
                    r.stream.clone(),
                    r.f_t.to_string(),
                    r.eps.to_string(),
                    r.p_err.to_string(),
                    r.m_samples.to_string(),
                    r.e_star.to_string(),
                    r.f_min_star.to_string(),
                    match r.verdict {
                        Verdict::Accept => "accept".into(),
                        Verdict::Reject => "reject".into(),
                    },
                ])?;
            }
        }
        Records::IqpRoute(v) => {
            wtr.write_record(["instance", "stream", "n", "gates", "depth", "meetings", "deviation"])?;
            for r in v {
                wtr.write_record([
                    r.instance.to_string(),
                    r.stream.clone(),
                    r.n.to_string(),
                    r.gates.to_string(),
                    r.depth.to_string(),
                    r.meetings.to_string(),
                    opt(r.deviation),
                ])?;
            }
        }
        Records::PartitionBench(v) => {
            wtr.write_record(["instance", "stream", "rows", "cols", "ln_abs_z", "arg_z"])?;
            for r in v {
                wtr.write_record([
                    r.instance.to_string(),
                    r.stream.clone(),
                    r.rows.to_string(),
                    r.cols.to_string(),
                    r.ln_abs_z.to_string(),
                    r.arg_z.to_string(),
                ])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Write `report` under `dir`. JSON writes the whole report to `<kind>.json`;
/// CSV writes per-instance rows to `<kind>.csv` plus aggregates to
/// `<kind>.summary.json`. Returns the paths written.
pub fn write_report(report: &RunReport, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let name = report.config.kind.name();
    match format {
        OutputFormat::Json => {
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_string_pretty(report)?)?;
            Ok(vec![path])
        }
        OutputFormat::Csv => {
            let rows = dir.join(format!("{name}.csv"));
            write_records_csv(&report.records, fs::File::create(&rows)?)?;
            let summary = dir.join(format!("{name}.summary.json"));
            let body = serde_json::json!({
                "schema": report.schema,
                "version": report.version,
                "config": report.config,
                "aggregates": report.aggregates,
                "quartiles": report.quartiles,
                "timings": report.timings,
            });
            fs::write(&summary, serde_json::to_string_pretty(&body)?)?;
            Ok(vec![rows, summary])
        }
    }
}
