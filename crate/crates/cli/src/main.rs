use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use ppuf_fwupdate::actors::{FirmwareRepo, RejectCause, Verdict};
use ppuf_fwupdate::attacks::{self, AttackOutcome, ScenarioKind};
use ppuf_fwupdate::bench::{self, BenchReport, REFERENCE_SIZES_KIB};
use ppuf_fwupdate::config::SimConfig;
use ppuf_fwupdate::crypto::CryptoProfile;
use ppuf_fwupdate::dppuf::{sac_report, PpufModel};
use ppuf_fwupdate::sim::{Fixture, Simulation, DEFAULT_DEVICE};
use ppuf_fwupdate::store::{ModelStore, RepoManifest};
use ppuf_fwupdate::wire::{DeviceKey, FirmwareVersion};
use ppuf_fwupdate::{Dppuf, PublicModel};

const EXIT_REJECT: u8 = 2;
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "ppuf-fwupdate", version, about = "PPUF firmware update protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults apply to anything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// lightweight, midweight or heavyweight.
    #[arg(long)]
    profile: Option<CryptoProfile>,
}

impl Common {
    fn load(&self) -> Result<SimConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.profile {
            cfg.profile = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one honest update session.
    Update {
        #[command(flatten)]
        common: Common,
        /// Synthetic image size in bytes, used without --repo.
        #[arg(long, default_value_t = 323 * 1024)]
        size: usize,
        /// Firmware manifest to serve instead of a synthetic image.
        #[arg(long)]
        repo: Option<PathBuf>,
        /// Device as hex `vendor:type:hw`.
        #[arg(long, value_parser = parse_device)]
        device: Option<DeviceKey>,
        /// Revision installed on the device.
        #[arg(long, default_value_t = 1)]
        installed_sw: u32,
        #[arg(long)]
        noise_flips: Option<usize>,
        /// Write the event trace here as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run attack scenarios.
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present = "all")]
        scenario: Option<ScenarioKind>,
        #[arg(long, conflicts_with = "scenario")]
        all: bool,
    },
    /// Time updates over profiles and image sizes.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Image sizes in KiB.
        #[arg(long, value_delimiter = ',', default_values_t = REFERENCE_SIZES_KIB)]
        sizes: Vec<usize>,
        /// Fit the payload cipher rates instead of running the grid.
        #[arg(long)]
        calibrate: bool,
    },
    /// Measure the avalanche behaviour of one instance.
    Sac {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        vectors: usize,
        /// Instance seed.
        #[arg(long, default_value_t = 1)]
        instance: u64,
    },
    /// Build an instance and write its public model.
    ExportModel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instance: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add a public model to a model store, creating it if needed.
    Enroll {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, conflicts_with = "instance", required_unless_present = "instance")]
        model: Option<PathBuf>,
        #[arg(long)]
        instance: Option<u64>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ppuf_fwupdate::config::ConfigError),
    #[error(transparent)]
    Store(#[from] ppuf_fwupdate::store::StoreError),
    #[error(transparent)]
    Sim(#[from] ppuf_fwupdate::sim::SimError),
    #[error(transparent)]
    Attack(#[from] attacks::AttackError),
    #[error(transparent)]
    Puf(#[from] ppuf_fwupdate::dppuf::DppufError),
    #[error(transparent)]
    Model(#[from] ppuf_fwupdate::dppuf::ModelFileError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no firmware for device {0}")]
    NoFirmware(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_device(s: &str) -> Result<DeviceKey, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [v, t, h] = parts[..] else {
        return Err("expected vendor:type:hw".into());
    };
    let hex = |x: &str| u32::from_str_radix(x, 16).map_err(|e| format!("`{x}`: {e}"));
    Ok(DeviceKey {
        vendor_id: hex(v)?.try_into().map_err(|_| "vendor id above 16 bits")?,
        device_type: hex(t)?.try_into().map_err(|_| "device type above 16 bits")?,
        hw_revision: hex(h)?.try_into().map_err(|_| "hw revision above 8 bits")?,
    })
}

fn device_string(k: &DeviceKey) -> String {
    format!("{:04x}:{:04x}:{:02x}", k.vendor_id, k.device_type, k.hw_revision)
}

fn emit(v: &Value) {
    println!("{v}");
}

/// Prints an aligned table to stderr so stdout stays line-delimited JSON.
fn table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<String>| {
        let s: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        eprintln!("{}", s.join("  ").trim_end());
    };
    line(header.iter().map(|s| s.to_string()).collect());
    line(widths.iter().map(|w| "-".repeat(*w)).collect());
    for r in rows {
        line(r.clone());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            emit(&json!({ "error": e.to_string() }));
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cmd: Command) -> Result<u8, CliError> {
    match cmd {
        Command::Update {
            common,
            size,
            repo,
            device,
            installed_sw,
            noise_flips,
            trace,
        } => {
            let mut cfg = common.load()?;
            if let Some(n) = noise_flips {
                cfg.noise_flips = n;
                cfg.validate()?;
            }
            update(
                &cfg,
                size,
                repo.as_deref(),
                device.unwrap_or(DEFAULT_DEVICE),
                installed_sw,
                trace.as_deref(),
            )
        }
        Command::Attack { common, scenario, all } => {
            let cfg = common.load()?;
            let kinds = if all {
                ScenarioKind::ALL.to_vec()
            } else {
                scenario.into_iter().collect()
            };
            let mut outcomes = Vec::new();
            for k in kinds {
                let o = attacks::run_scenario(k, &cfg)?;
                emit(&attacks::outcome_json(&o));
                outcomes.push(o);
            }
            attack_table(&outcomes);
            Ok(if outcomes.iter().all(AttackOutcome::defended) {
                0
            } else {
                EXIT_REJECT
            })
        }
        Command::Bench {
            common,
            sizes,
            calibrate,
        } => {
            let cfg = common.load()?;
            if calibrate {
                let rates = bench::calibrate(&cfg)?;
                for (p, r) in CryptoProfile::ALL.iter().zip(rates) {
                    emit(&json!({ "profile": p, "payload_cipher_ps_per_byte": r }));
                }
                return Ok(0);
            }
            let report = bench::run_bench(&cfg, &sizes)?;
            for c in &report.cells {
                emit(&json!(c));
            }
            emit(&json!({ "monotonic": report.monotonic, "max_relative_error": report.max_relative_error }));
            bench_table(&report);
            Ok(if report.monotonic { 0 } else { EXIT_REJECT })
        }
        Command::Sac {
            common,
            vectors,
            instance,
        } => {
            let cfg = common.load()?;
            let inst = Dppuf::build(cfg.puf.instance(instance))?;
            let r = sac_report(&inst, vectors, cfg.derive_seed("sac"))?;
            emit(&json!(r));
            table(
                &["width", "vectors", "mean"],
                &[vec![
                    r.width.to_string(),
                    r.vectors.to_string(),
                    format!("{:.4}", r.mean),
                ]],
            );
            Ok(0)
        }
        Command::ExportModel { common, instance, out } => {
            let cfg = common.load()?;
            let m = model_for(&cfg, instance)?;
            std::fs::write(&out, m.to_bytes()).map_err(io(&out))?;
            emit(&json!({ "instance_id": hex::encode(m.instance_id()), "path": out, "width": m.width() }));
            Ok(0)
        }
        Command::Enroll {
            common,
            store,
            model,
            instance,
        } => {
            let cfg = common.load()?;
            let m = match (model, instance) {
                (Some(p), _) => PublicModel::from_bytes(&std::fs::read(&p).map_err(io(&p))?)?,
                (None, Some(i)) => model_for(&cfg, i)?,
                (None, None) => unreachable!("clap requires one"),
            };
            let mut s = if store.exists() {
                ModelStore::load(&store)?
            } else {
                ModelStore::new()
            };
            let id = m.instance_id();
            s.push(m)?;
            s.save(&store)?;
            emit(&json!({ "enrolled": hex::encode(id), "models": s.models().len() }));
            Ok(0)
        }
    }
}

fn model_for(cfg: &SimConfig, instance: u64) -> Result<PublicModel, CliError> {
    let costs = cfg.effective_costs();
    let hw = Dppuf::build(cfg.puf.instance(instance))?;
    Ok(PpufModel::export(&hw, costs.ppuf_sim, costs.ppuf_hw)?)
}

fn update(
    cfg: &SimConfig,
    size: usize,
    repo: Option<&Path>,
    device: DeviceKey,
    installed_sw: u32,
    trace: Option<&Path>,
) -> Result<u8, CliError> {
    let fixture = match repo {
        Some(path) => {
            let repo: FirmwareRepo = RepoManifest::load_repo(path)?;
            if repo.get(&device).is_none() {
                return Err(CliError::NoFirmware(device_string(&device)));
            }
            Fixture {
                installed: FirmwareVersion::for_device(device, installed_sw, 0, u64::MAX),
                repo,
            }
        }
        None => Fixture::standard(cfg, size),
    };
    let served = fixture.repo.get(&fixture.installed.device_key()).map(|e| e.fv);
    let mut sim = Simulation::new(cfg.clone(), fixture, 1)?;
    sim.initiate(0)?;
    sim.run()?;
    if let Some(p) = trace {
        std::fs::write(p, sim.trace().to_jsonl()).map_err(io(p))?;
    }

    let verdict = sim.verdicts().iter().find(|v| v.ed == 0);
    let cause: Option<RejectCause> = match verdict.map(|v| &v.verdict) {
        Some(Verdict::Accept { .. }) => None,
        Some(Verdict::Reject(c)) => Some(*c),
        None => sim.ed(0).failures().next().map(|&(_, c)| c).or(Some(RejectCause::Late)),
    };
    let image = sim.ed(0).image().map(|i| hex::encode(Sha256::digest(i)));
    let installed = sim.ed(0).installed();
    emit(&json!({
        "command": "update",
        "profile": cfg.profile,
        "accepted": cause.is_none(),
        "cause": cause,
        "served_sw_revision": served.map(|f| f.sw_revision),
        "installed_sw_revision": installed.sw_revision,
        "image_sha256": image,
        "decided_ns": verdict.map(|v| v.decided),
        "messages": sim.net_stats().sent,
        "bytes_on_wire": sim.net_stats().bytes,
    }));
    table(
        &["profile", "result", "installed", "decided_ns"],
        &[vec![
            cfg.profile.to_string(),
            cause.map_or("accept".into(), |c| format!("reject ({c})")),
            installed.sw_revision.to_string(),
            verdict.map_or("-".into(), |v| v.decided.to_string()),
        ]],
    );
    Ok(if cause.is_none() { 0 } else { EXIT_REJECT })
}

fn attack_table(outcomes: &[AttackOutcome]) {
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.scenario.to_string(),
                if o.adversary_succeeded { "yes" } else { "no" }.into(),
                o.rejection_cause.map_or("-".into(), |c| c.to_string()),
                if o.control_accepted { "accept" } else { "FAIL" }.into(),
                o.adversary_meter_ns.to_string(),
                o.server_meter_ns.to_string(),
            ]
        })
        .collect();
    table(
        &[
            "scenario",
            "adversary won",
            "cause",
            "control",
            "adversary ns",
            "server ns",
        ],
        &rows,
    );
}

fn bench_table(r: &BenchReport) {
    let rows: Vec<Vec<String>> = r
        .cells
        .iter()
        .map(|c| {
            vec![
                c.profile.to_string(),
                c.size_kib.to_string(),
                format!("{:.4}", c.virtual_seconds),
                c.reference_seconds.map_or("-".into(), |s| format!("{s:.4}")),
                c.relative_error.map_or("-".into(), |e| format!("{:.2}%", e * 100.0)),
                format!("{:.0}", c.wall_ms),
                if c.accepted { "accept" } else { "reject" }.into(),
            ]
        })
        .collect();
    table(
        &[
            "profile",
            "KiB",
            "virtual s",
            "reference s",
            "error",
            "wall ms",
            "result",
        ],
        &rows,
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_keys_parse() {
        let k = parse_device("5eed:0233:01").unwrap();
        assert_eq!(k, DEFAULT_DEVICE);
        assert_eq!(device_string(&k), "5eed:0233:01");
        assert!(parse_device("5eed:0233").is_err());
        assert!(parse_device("5eed:0233:100").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
