//! `auditkit`: design, run and analyze an audit study from the command line.
//!
//! Exit codes: 0 success, 1 operation failed (a JSON error object is printed on
//! standard error), 2 usage error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auditkit::allocation::{
    self, allocate, assignments_to_csv, parse_testers, provision_tokens, reallocate_dropout,
};
use auditkit::analysis::{run_prereg_report, AnalysisPlan, ReportOptions};
use auditkit::dataset::AnalysisTable;
use auditkit::design::{enumerate_cells, validate_design, AuditDesign};
use auditkit::diagnosis::{
    estimate_power, recommend_sample_size, DecisionModel, Recommendation, DEFAULT_ALPHA,
    DEFAULT_N_GRID, DEFAULT_SIMS,
};
use auditkit::ingest::load_fixture_dir;
use auditkit::ledger::{self, Decision, Ledger, Observation};
use auditkit::prompts::{generate_prompts, parse_prompts_jsonl, prompts_to_jsonl};
use auditkit_coordinator::{sessions_from_testers, Coordinator, CoordinatorConfig};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "auditkit",
    version,
    about = "Audit-study toolkit: design, diagnose, generate, allocate, serve, record, analyze"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a design file and list its cells.
    ValidateDesign {
        /// Design JSON file.
        #[arg(long)]
        design: PathBuf,
        /// Output format.
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Estimate power per candidate sample size by simulating studies.
    Diagnose {
        /// Design JSON file.
        #[arg(long)]
        design: PathBuf,
        /// Decision model JSON file.
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated per-cell sample sizes.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_N_GRID)]
        n_grid: Vec<u32>,
        /// Simulated studies per grid size.
        #[arg(long, default_value_t = DEFAULT_SIMS)]
        sims: u32,
        /// Random seed.
        #[arg(long)]
        seed: u64,
        /// Two-sided significance level.
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        /// Power the recommendation must reach for every contrast.
        #[arg(long, default_value_t = 0.8)]
        target_power: f64,
        /// Report format.
        #[arg(long, value_enum, default_value = "json")]
        format: ReportFormat,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render the prompt set from subject fixtures.
    Generate {
        /// Design JSON file.
        #[arg(long)]
        design: PathBuf,
        /// Directory with candidates/albums/parks/parades .jsonl files.
        #[arg(long)]
        fixtures: PathBuf,
        /// Prompts per cell.
        #[arg(long)]
        n: u32,
        /// Random seed for subject sampling.
        #[arg(long)]
        seed: u64,
        /// Output prompts file (JSON Lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign prompts to testers and record the assignments.
    Allocate {
        /// Prompts file from `generate`.
        #[arg(long)]
        prompts: PathBuf,
        /// Testers JSON file (array of tester objects).
        #[arg(long)]
        testers: PathBuf,
        /// Random seed for the tester order within each stratum.
        #[arg(long)]
        seed: u64,
        /// Design JSON file; the built-in political-ad design when omitted.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Assignment CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the testers file with provisioned tokens.
        #[arg(long)]
        tokens_out: Option<PathBuf>,
        /// Ledger to append the assignments to.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: Option<PathBuf>,
        /// Creation timestamp (RFC 3339); now when omitted.
        #[arg(long)]
        created_at: Option<DateTime<Utc>>,
    },
    /// Run the coordination service.
    Serve {
        /// Ledger file.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: PathBuf,
        /// TCP port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Testers file with tokens (the `--tokens-out` file of `allocate`).
        #[arg(long)]
        testers: PathBuf,
        /// Operator bearer token for the progress endpoint.
        #[arg(long, env = "AUDITKIT_OPERATOR_TOKEN", hide_env_values = true)]
        operator_token: String,
        /// Tester tokens expire this many hours after start.
        #[arg(long)]
        token_ttl_hours: Option<i64>,
        /// Directory of static files (the tester UI) served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Write a ledger snapshot every this many entries.
        #[arg(long, default_value_t = auditkit_coordinator::DEFAULT_SNAPSHOT_EVERY)]
        snapshot_every: u64,
    },
    /// Rebuild ad-level rows from a per-cell summary CSV.
    ImportTable2 {
        /// CSV with factor columns, `n` and `published_pct`.
        #[arg(long)]
        csv: PathBuf,
        /// Dataset CSV output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also append the rows to the ledger as assignments and outcomes.
        #[arg(long)]
        into_ledger: bool,
        /// Ledger used with `--into-ledger`.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: Option<PathBuf>,
    },
    /// Record a decision directly in the ledger (when no service is running).
    Record {
        /// Ledger file.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: PathBuf,
        /// Assignment id.
        #[arg(long)]
        assignment: String,
        /// published, prohibited_political, blocked_other or pending.
        #[arg(long)]
        decision: String,
        /// Decision timestamp (RFC 3339).
        #[arg(long)]
        decided_at: DateTime<Utc>,
        /// Notes; required for blocked_other.
        #[arg(long)]
        notes: Option<String>,
    },
    /// Export the analysis dataset and its exclusions sidecar.
    Export {
        /// Ledger file.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: PathBuf,
        /// Dataset CSV output; the sidecar goes to `<stem>.exclusions.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print per-cell progress from the ledger.
    Progress {
        /// Ledger file.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: PathBuf,
    },
    /// List the blocked-for-other-reasons queue, or retry one assignment.
    Retry {
        /// Ledger file.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: PathBuf,
        /// Assignment to retry; lists the queue when omitted.
        #[arg(long)]
        assignment: Option<String>,
        /// Tester for the retry; the original tester when omitted.
        #[arg(long)]
        tester: Option<String>,
        /// Creation timestamp (RFC 3339); now when omitted.
        #[arg(long)]
        created_at: Option<DateTime<Utc>>,
    },
    /// Move a departed tester's open assignments to others in the same stratum.
    Dropout {
        /// Ledger file.
        #[arg(long, env = "AUDITKIT_LEDGER")]
        ledger: PathBuf,
        /// Testers JSON file.
        #[arg(long)]
        testers: PathBuf,
        /// Tester who left.
        #[arg(long)]
        tester: String,
        /// Random seed for tie-breaking.
        #[arg(long)]
        seed: u64,
        /// Creation timestamp (RFC 3339); now when omitted.
        #[arg(long)]
        created_at: Option<DateTime<Utc>>,
    },
    /// Write a locked analysis plan.
    LockPlan {
        /// Design JSON file the plan is registered against.
        #[arg(long)]
        design: PathBuf,
        /// Plan to lock; the built-in political-ad plan when omitted.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Locked plan output.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pre-registered analysis and write the report bundle.
    Analyze {
        /// Dataset CSV.
        #[arg(long)]
        data: PathBuf,
        /// Locked plan JSON.
        #[arg(long)]
        plan: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Design JSON file; checked against the plan's design hash.
        #[arg(long)]
        design: Option<PathBuf>,
        /// Allow an unlocked or modified plan; every output is marked exploratory.
        #[arg(long)]
        exploratory: bool,
        /// Upstream seeds to record, as `name=value`.
        #[arg(long = "seed", value_parser = parse_seed)]
        seeds: Vec<(String, u64)>,
    },
}

fn parse_seed(s: &str) -> Result<(String, u64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let value = value.parse().map_err(|e| format!("seed `{value}`: {e}"))?;
    Ok((name.to_string(), value))
}

#[derive(Debug)]
struct CliError {
    kind: &'static str,
    message: String,
}

fn err<E: Display>(kind: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError {
        kind,
        message: e.to_string(),
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(err("io"))?;
    }
    fs::write(path, bytes).map_err(|e| CliError {
        kind: "io",
        message: format!("{}: {e}", path.display()),
    })
}

fn emit(out: Option<&Path>, text: &str) -> CliResult {
    match out {
        Some(path) => write(path, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(err("io")),
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult {
    emit(
        None,
        &(serde_json::to_string_pretty(value).expect("serializes") + "\n"),
    )
}

fn load_design(path: &Path) -> CliResult<AuditDesign> {
    AuditDesign::from_json_slice(&read(path)?).map_err(err("design"))
}

fn open_ledger(path: &Path) -> CliResult<Ledger> {
    Ledger::open(path).map_err(err("ledger"))
}

fn run(command: Command) -> CliResult {
    match command {
        Command::ValidateDesign { design, format } => {
            let d = load_design(&design)?;
            let violations = validate_design(&d);
            if !violations.is_empty() {
                return Err(CliError {
                    kind: "design",
                    message: violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
            let cells = enumerate_cells(&d).map_err(err("design"))?;
            match format {
                Format::Json => print_json(&json!({
                    "ok": true,
                    "design_hash": d.content_hash(),
                    "cells": cells.iter().map(|c| c.id()).collect::<Vec<_>>(),
                })),
                Format::Text => {
                    let mut text = format!(
                        "ok: {} cells, design hash {}\n",
                        cells.len(),
                        d.content_hash()
                    );
                    for c in &cells {
                        text.push_str(&c.id());
                        text.push('\n');
                    }
                    emit(None, &text)
                }
            }
        }
        Command::Diagnose {
            design,
            model,
            n_grid,
            sims,
            seed,
            alpha,
            target_power,
            format,
            out,
        } => {
            let d = load_design(&design)?;
            let m = DecisionModel::from_json_slice(&read(&model)?).map_err(err("model"))?;
            let mut report =
                estimate_power(&d, &m, &n_grid, sims, alpha, seed).map_err(err("diagnosis"))?;
            let n = recommend_sample_size(&report, target_power).map_err(err("diagnosis"))?;
            report.recommendation = Some(Recommendation {
                target_power,
                n_per_cell: n,
            });
            let text = match format {
                ReportFormat::Json => report.to_json_pretty() + "\n",
                ReportFormat::Csv => report.to_csv(),
            };
            emit(out.as_deref(), &text)
        }
        Command::Generate {
            design,
            fixtures,
            n,
            seed,
            out,
        } => {
            let d = load_design(&design)?;
            let pool = load_fixture_dir(&fixtures)
                .and_then(|f| f.pool(&d))
                .map_err(err("ingest"))?;
            let prompts = generate_prompts(&d, &pool, n, seed).map_err(err("prompts"))?;
            for p in &prompts {
                for w in p.creative.limit_warnings() {
                    tracing::warn!(prompt = %p.prompt_id, "{w}");
                }
            }
            write(&out, prompts_to_jsonl(&prompts))?;
            eprintln!("wrote {} prompts to {}", prompts.len(), out.display());
            Ok(())
        }
        Command::Allocate {
            prompts,
            testers,
            seed,
            design,
            out,
            tokens_out,
            ledger,
            created_at,
        } => {
            let d = match design {
                Some(path) => load_design(&path)?,
                None => AuditDesign::paper(),
            };
            let text = String::from_utf8(read(&prompts)?).map_err(err("prompts"))?;
            let specs = parse_prompts_jsonl(&text).map_err(err("prompts"))?;
            let mut team = parse_testers(&read(&testers)?).map_err(err("allocation"))?;
            let created_at = created_at.unwrap_or_else(Utc::now);
            let assignments =
                allocate(&d, &specs, &team, seed, created_at).map_err(err("allocation"))?;
            if team.iter().any(|t| t.auth_token.is_none()) {
                let Some(path) = &tokens_out else {
                    return Err(CliError {
                        kind: "usage",
                        message: "some testers have no token; pass --tokens-out to provision them"
                            .into(),
                    });
                };
                provision_tokens(&mut team);
                write(
                    path,
                    serde_json::to_string_pretty(&team).expect("serializes") + "\n",
                )?;
            } else if let Some(path) = &tokens_out {
                write(
                    path,
                    serde_json::to_string_pretty(&team).expect("serializes") + "\n",
                )?;
            }
            if let Some(path) = ledger {
                let mut l = open_ledger(&path)?;
                let by_id: BTreeMap<&str, _> =
                    specs.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
                for a in &assignments {
                    let prompt = by_id.get(a.prompt_id.as_str()).map(|p| (*p).clone());
                    l.append_assignment(a.clone(), prompt)
                        .map_err(err("ledger"))?;
                }
                eprintln!(
                    "appended {} assignments to {}",
                    assignments.len(),
                    path.display()
                );
            }
            emit(out.as_deref(), &assignments_to_csv(&assignments))
        }
        Command::Serve {
            ledger,
            port,
            bind,
            testers,
            operator_token,
            token_ttl_hours,
            static_dir,
            snapshot_every,
        } => {
            let l = open_ledger(&ledger)?;
            let team = parse_testers(&read(&testers)?).map_err(err("allocation"))?;
            let expires_at = token_ttl_hours.map(|h| Utc::now() + chrono::Duration::hours(h));
            let sessions = sessions_from_testers(&team, expires_at).map_err(err("config"))?;
            let config = CoordinatorConfig {
                operator_token,
                sessions,
                static_dir,
                snapshot_every,
            };
            let coordinator = Coordinator::new(l, config).map_err(err("config"))?;
            let runtime = tokio::runtime::Runtime::new().map_err(err("io"))?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind((bind.as_str(), port))
                    .await
                    .map_err(err("io"))?;
                eprintln!(
                    "listening on http://{}",
                    listener.local_addr().map_err(err("io"))?
                );
                let shutdown = async {
                    let _ = tokio::signal::ctrl_c().await;
                };
                auditkit_coordinator::serve(listener, coordinator, shutdown)
                    .await
                    .map_err(err("io"))
            })
        }
        Command::ImportTable2 {
            csv,
            out,
            into_ledger,
            ledger,
        } => {
            let rows = ledger::parse_table2_csv(&read(&csv)?).map_err(err("table2"))?;
            let rec = ledger::reconstruct_reference_dataset(&rows).map_err(err("table2"))?;
            for w in &rec.warnings {
                tracing::warn!("{w}");
            }
            if into_ledger {
                let path = ledger.ok_or_else(|| CliError {
                    kind: "usage",
                    message: "--into-ledger needs --ledger or AUDITKIT_LEDGER".into(),
                })?;
                let mut l = open_ledger(&path)?;
                let n = ledger::import_reference(&mut l, &rec).map_err(err("ledger"))?;
                eprintln!("appended {n} entries to {}", path.display());
            }
            eprintln!(
                "reconstructed {} rows from {} cells",
                rec.table.len(),
                rows.len()
            );
            emit(out.as_deref(), &rec.table.to_csv())
        }
        Command::Record {
            ledger,
            assignment,
            decision,
            decided_at,
            notes,
        } => {
            let decision: Decision =
                serde_json::from_value(json!(decision)).map_err(err("usage"))?;
            let mut l = open_ledger(&ledger)?;
            let ack = l
                .append_outcome(Observation {
                    assignment_id: assignment,
                    decision,
                    decided_at,
                    notes,
                })
                .map_err(err("ledger"))?;
            print_json(&ack)
        }
        Command::Export { ledger, out } => {
            let export = open_ledger(&ledger)?.export_dataset();
            write(&out, export.table.to_csv())?;
            let sidecar = out.with_extension("exclusions.json");
            write(
                &sidecar,
                serde_json::to_string_pretty(&export.exclusions).expect("serializes") + "\n",
            )?;
            eprintln!("exported {} rows to {}", export.table.len(), out.display());
            Ok(())
        }
        Command::Progress { ledger } => print_json(&open_ledger(&ledger)?.progress()),
        Command::Retry {
            ledger,
            assignment,
            tester,
            created_at,
        } => {
            let mut l = open_ledger(&ledger)?;
            match assignment {
                None => {
                    let queue: Vec<_> = l.retry_queue().into_iter().map(|s| s.current()).collect();
                    print_json(&queue)
                }
                Some(id) => {
                    let at = created_at.unwrap_or_else(Utc::now);
                    let retry = l
                        .append_retry(&id, tester.as_deref(), at)
                        .map_err(err("ledger"))?;
                    print_json(&retry)
                }
            }
        }
        Command::Dropout {
            ledger,
            testers,
            tester,
            seed,
            created_at,
        } => {
            let mut l = open_ledger(&ledger)?;
            let team = parse_testers(&read(&testers)?).map_err(err("allocation"))?;
            let open: Vec<_> = l
                .assignments()
                .filter(|s| s.is_open())
                .map(|s| s.current())
                .collect();
            let at = created_at.unwrap_or_else(Utc::now);
            let moved =
                reallocate_dropout(&open, &team, &tester, seed, at).map_err(err("allocation"))?;
            for a in &moved {
                let prompt = a
                    .retry_of
                    .as_deref()
                    .and_then(|id| l.assignment(id))
                    .and_then(|s| s.prompt.clone());
                l.append_assignment(a.clone(), prompt)
                    .map_err(err("ledger"))?;
            }
            emit(None, &allocation::assignments_to_csv(&moved))
        }
        Command::LockPlan { design, plan, out } => {
            let d = load_design(&design)?;
            let mut p = match plan {
                Some(path) => AnalysisPlan::from_json_slice(&read(&path)?).map_err(err("plan"))?,
                None => AnalysisPlan::paper(&d),
            };
            let unknown = p.unknown_factors(&d);
            if !unknown.is_empty() {
                return Err(CliError {
                    kind: "plan",
                    message: format!("plan references unknown factor(s): {}", unknown.join(", ")),
                });
            }
            p.design_hash = Some(d.content_hash());
            let hash = p.lock();
            write(&out, p.to_json_pretty() + "\n")?;
            print_json(&json!({ "plan_hash": hash, "design_hash": d.content_hash() }))
        }
        Command::Analyze {
            data,
            plan,
            out,
            design,
            exploratory,
            seeds,
        } => {
            let table = AnalysisTable::from_csv(&read(&data)?).map_err(err("dataset"))?;
            let p = AnalysisPlan::from_json_slice(&read(&plan)?).map_err(err("plan"))?;
            let d = design.as_deref().map(load_design).transpose()?;
            let options = ReportOptions {
                exploratory,
                seeds: seeds.into_iter().collect(),
            };
            let bundle =
                run_prereg_report(&table, &p, d.as_ref(), &options).map_err(err("analysis"))?;
            bundle.write_to_dir(&out).map_err(err("io"))?;
            eprintln!("wrote report to {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind, "message": e.message } });
            eprintln!("{body}");
            ExitCode::from(if e.kind == "usage" { 2 } else { 1 })
        }
    }
}
