//! Benchmark CLI: runs handshake scenarios across key-exchange combinations
//! and topologies and emits CSV or markdown reports.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use qstls::bench::{
    emit_report, emit_report_to_path, run_scenario, run_scenarios_stress, BenchConfig,
    BenchScenario, ReportFormat, TopologyKind,
};
use qstls::sdn::TopologyConfig;
use qstls::suite::{self, SecurityLevel};

const USAGE: &str = "\
qstls-bench — handshake benchmark harness

USAGE:
    qstls-bench [OPTIONS]

OPTIONS:
    --topology <direct|relay|both>   Topology selection [default: both]
    --kex <LABEL|all>                Key-exchange combination, e.g. ECDH-QKD-PQC [default: all]
    --iterations <N>                 Handshakes per scenario [default: 25]
    --level <1|3|5>                  Security level [default: 1]
    --rekeys <N>                     Key Update rounds per connection [default: 0]
    --no-provision                   Disable deploy-time key provisioning
    --latency-ms <MS>                Injected per-request network latency [default: 0]
    --config <PATH>                  Topology config (TOML) replacing the built-in
    --format <csv|md>                Report format [default: md]
    --out <PATH>                     Write the report to a file instead of stdout
    --seed <N>                       Deterministic run seed [default: 1]
    --stress                         Run all selected scenarios concurrently as a
                                     correctness stress; no timing report
    --list-kex                       List the key-exchange combinations and exit
    -h, --help                       Show this help
";

struct Args {
    topologies: Vec<TopologyKind>,
    kex: Vec<u16>,
    iterations: u32,
    level: SecurityLevel,
    rekeys: u32,
    provisioning: bool,
    latency: Duration,
    config: Option<PathBuf>,
    format: ReportFormat,
    out: Option<PathBuf>,
    seed: u64,
    stress: bool,
}

fn parse_args() -> Result<Option<Args>, String> {
    let mut args = Args {
        topologies: vec![TopologyKind::Direct, TopologyKind::KeyRelay],
        kex: suite::hybrid_combinations().map(|s| s.code_point).collect(),
        iterations: 25,
        level: SecurityLevel::Level1,
        rekeys: 0,
        provisioning: true,
        latency: Duration::ZERO,
        config: None,
        format: ReportFormat::Markdown,
        out: None,
        seed: 1,
        stress: false,
    };
    let mut it = std::env::args().skip(1);
    while let Some(arg) = it.next() {
        let mut value = |name: &str| {
            it.next()
                .ok_or_else(|| format!("missing value for {name}"))
        };
        match arg.as_str() {
            "--topology" => {
                args.topologies = match value("--topology")?.as_str() {
                    "direct" => vec![TopologyKind::Direct],
                    "relay" | "key_relay" => vec![TopologyKind::KeyRelay],
                    "both" => vec![TopologyKind::Direct, TopologyKind::KeyRelay],
                    other => return Err(format!("unknown topology '{other}'")),
                };
            }
            "--kex" => {
                let v = value("--kex")?;
                if v == "all" {
                    args.kex = suite::hybrid_combinations().map(|s| s.code_point).collect();
                } else {
                    let s = suite::hybrid_by_label(&v)
                        .ok_or_else(|| format!("unknown key-exchange combination '{v}'"))?;
                    args.kex = vec![s.code_point];
                }
            }
            "--iterations" => {
                args.iterations = value("--iterations")?
                    .parse()
                    .map_err(|_| "iterations must be a number".to_string())?;
            }
            "--level" => {
                let n: u8 = value("--level")?
                    .parse()
                    .map_err(|_| "level must be 1, 3 or 5".to_string())?;
                args.level = SecurityLevel::from_nist_level(n)
                    .ok_or_else(|| "level must be 1, 3 or 5".to_string())?;
            }
            "--rekeys" => {
                args.rekeys = value("--rekeys")?
                    .parse()
                    .map_err(|_| "rekeys must be a number".to_string())?;
            }
            "--no-provision" => args.provisioning = false,
            "--latency-ms" => {
                let ms: f64 = value("--latency-ms")?
                    .parse()
                    .map_err(|_| "latency must be a number of milliseconds".to_string())?;
                args.latency = Duration::from_secs_f64(ms / 1e3);
            }
            "--config" => args.config = Some(PathBuf::from(value("--config")?)),
            "--format" => {
                let v = value("--format")?;
                args.format = ReportFormat::parse(&v)
                    .ok_or_else(|| format!("unknown format '{v}'"))?;
            }
            "--out" => args.out = Some(PathBuf::from(value("--out")?)),
            "--stress" => args.stress = true,
            "--seed" => {
                args.seed = value("--seed")?
                    .parse()
                    .map_err(|_| "seed must be a number".to_string())?;
            }
            "--list-kex" => {
                for s in suite::hybrid_combinations() {
                    println!("{:<14} {:#06x}  {}", s.kex_label(), s.code_point, s.name);
                }
                return Ok(None);
            }
            "-h" | "--help" => {
                print!("{USAGE}");
                return Ok(None);
            }
            other => return Err(format!("unknown option '{other}'")),
        }
    }
    Ok(Some(args))
}

fn main() -> ExitCode {
    let args = match parse_args() {
        Ok(Some(args)) => args,
        Ok(None) => return ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}\n\n{USAGE}");
            return ExitCode::FAILURE;
        }
    };

    let topology_config = match &args.config {
        Some(path) => match std::fs::read_to_string(path)
            .map_err(|e| e.to_string())
            .and_then(|text| TopologyConfig::from_toml(&text).map_err(|e| e.to_string()))
        {
            Ok(cfg) => Some(cfg),
            Err(e) => {
                eprintln!("error: cannot load {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        },
        None => None,
    };

    let cfg = BenchConfig {
        provisioning: args.provisioning,
        latency: args.latency,
        seed: args.seed,
        topology_config,
    };

    let scenarios: Vec<BenchScenario> = args
        .topologies
        .iter()
        .flat_map(|&topology| {
            args.kex.iter().map(move |&kex| BenchScenario {
                topology,
                kex,
                iterations: args.iterations,
                level: args.level,
                rekeys_per_conn: args.rekeys,
            })
        })
        .collect();

    if args.stress {
        eprintln!(
            "stress mode: running {} scenarios concurrently (no timing report)",
            scenarios.len()
        );
        return match run_scenarios_stress(&scenarios, &cfg) {
            Ok(()) => {
                eprintln!("stress mode: all scenarios completed");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: stress run failed: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let mut reports = Vec::new();
    for scenario in &scenarios {
        {
            eprintln!(
                "running {} over {} ({} iterations, level {}, {} rekeys)...",
                suite::lookup(scenario.kex)
                    .map(|s| s.kex_label())
                    .unwrap_or_default(),
                scenario.topology.name(),
                args.iterations,
                args.level.nist_level(),
                args.rekeys
            );
            match run_scenario(scenario, &cfg) {
                Ok(report) => reports.push(report),
                Err(e) => {
                    eprintln!("error: scenario failed: {e}");
                    return ExitCode::FAILURE;
                }
            }
        }
    }

    let result = match &args.out {
        Some(path) => emit_report_to_path(&reports, args.format, path),
        None => {
            let mut stdout = std::io::stdout().lock();
            emit_report(&reports, args.format, &mut stdout)
        }
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    if let Some(path) = &args.out {
        eprintln!("report written to {}", path.display());
    }
    ExitCode::SUCCESS
}
