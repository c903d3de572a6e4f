//! `rankforge`: fit models from IPD, rank covariate profiles, serve queries.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 invalid input
//! (files, schema, profile, arguments), 3 numeric failure while fitting or
//! sampling, 4 the service could not bind its address.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use rankforge_core::model::{fit_model, FitDiagnostics, FitOptions, FittedModel, RankRequest};
use rankforge_core::persist::{
    parse_ipd_csv, parse_profile_json, parse_schema_config, read_model, sha256_hex, write_model,
    write_report_json, ModelArtifact,
};
use rankforge_core::stage2::DEFAULT_PRIOR_SD;
use rankforge_core::{Error, ErrorClass, HierarchyReport};
use rankforge_service::{AppState, ServiceConfig};

#[derive(Parser)]
#[command(name = "rankforge", version, about = "Personalized treatment hierarchies from IPD network meta-analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model from long-format IPD and write the model artifact.
    Fit {
        #[arg(long, value_name = "CSV")]
        ipd: PathBuf,
        #[arg(long, value_name = "JSON")]
        schema: PathBuf,
        /// Standard deviation of the independent normal prior on every basic parameter.
        #[arg(long, default_value_t = DEFAULT_PRIOR_SD, value_parser = positive_f64)]
        prior_sd: f64,
        #[arg(long, value_name = "MODEL")]
        out: PathBuf,
    },
    /// Rank treatments for one covariate profile.
    Rank {
        #[arg(long, value_name = "MODEL")]
        model: PathBuf,
        #[arg(long, value_name = "JSON")]
        profile: PathBuf,
        #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..=10_000_000))]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Treatment label that effect summaries are expressed against (default: the network reference).
        #[arg(long)]
        comparator: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Serve the HTTP API for a fitted model.
    Serve {
        #[arg(long, value_name = "MODEL")]
        model: PathBuf,
        #[arg(long, value_name = "ADDR:PORT", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Allowed CORS origin; repeat for several, `*` for any.
        #[arg(long = "cors-origin", value_name = "ORIGIN")]
        cors_origins: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be > 0, got {s}"))
    }
}

/// An error with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Input => 2,
            ErrorClass::Numeric => 3,
        };
        Failure { code, message: e.to_string() }
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure { code: 2, message: format!("cannot read {}: {e}", path.display()) })
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure { code: 1, message: format!("cannot write {}: {e}", path.display()) })
}

fn load_model(path: &Path) -> Result<ModelArtifact, Failure> {
    read_model(&read_input(path)?).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RANKFORGE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit { ipd, schema, prior_sd, out } => cmd_fit(&ipd, &schema, prior_sd, &out),
        Command::Rank { model, profile, samples, seed, comparator, format } => {
            cmd_rank(&model, &profile, samples as usize, seed, comparator.as_deref(), format)
        }
        Command::Serve { model, listen, cors_origins } => cmd_serve(&model, &listen, cors_origins),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_fit(ipd: &Path, schema: &Path, prior_sd: f64, out: &Path) -> Result<(), Failure> {
    let network = parse_schema_config(&read_input(schema)?)?;
    let csv = read_input(ipd)?;
    let dataset = parse_ipd_csv(&csv, &network)?;
    let (model, diagnostics) = fit_model(&dataset, &FitOptions { prior_sd, ..FitOptions::default() })?;
    for w in &diagnostics.validation.warnings {
        eprintln!("warning: {}", w.message);
    }
    let artifact = ModelArtifact::from_model(&model, sha256_hex(&csv), chrono::Utc::now().to_rfc3339());
    let bytes = write_model(&artifact)?;
    write_output(out, &bytes)?;

    let mut stdout = std::io::stdout().lock();
    print_fit_summary(&mut stdout, &model, &diagnostics)
        .and_then(|_| writeln!(stdout, "\nmodel written to {} (sha256 {})", out.display(), sha256_hex(&bytes)))
        .map_err(|e| Failure { code: 1, message: e.to_string() })
}

fn print_fit_summary(w: &mut impl Write, model: &FittedModel, diagnostics: &FitDiagnostics) -> std::io::Result<()> {
    let labels = &model.network.treatments;
    writeln!(w, "Stage 1: per-study fits")?;
    let rows: Vec<[String; 5]> = model
        .stage1
        .iter()
        .map(|s| {
            let arms: Vec<&str> = std::iter::once(s.reference).chain(s.contrasts.iter().copied()).map(|t| labels.label(t)).collect();
            [
                s.study.clone(),
                s.n_records.to_string(),
                arms.join(", "),
                format!("{:.4}", s.residual_variance.sqrt()),
                if s.jitter > 0.0 { format!("{:.1e}", s.jitter) } else { "-".into() },
            ]
        })
        .collect();
    write_table(w, &["Study", "N", "Arms (reference first)", "Residual SD", "Jitter"], &rows)?;

    writeln!(w, "\nStage 2: posterior of basic parameters")?;
    let rows: Vec<[String; 4]> = diagnostics
        .parameters
        .iter()
        .map(|p| [p.name.clone(), format!("{:.4}", p.mean), format!("{:.4}", p.sd), p.informing_studies.to_string()])
        .collect();
    write_table(w, &["Parameter", "Mean", "SD", "Studies"], &rows)?;
    writeln!(w, "all {} parameters estimable", diagnostics.parameters.len())
}

fn write_table<const N: usize>(w: &mut impl Write, header: &[&str; N], rows: &[[String; N]]) -> std::io::Result<()> {
    let mut widths = header.map(|h| h.chars().count());
    for row in rows {
        for (width, cell) in widths.iter_mut().zip(row) {
            *width = (*width).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, &wd)| format!("{c:<wd$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_owned()
    };
    writeln!(w, "{}", line(header.to_vec()))?;
    writeln!(w, "{}", widths.iter().map(|&wd| "-".repeat(wd)).collect::<Vec<_>>().join("-+-"))?;
    for row in rows {
        writeln!(w, "{}", line(row.iter().map(String::as_str).collect()))?;
    }
    Ok(())
}

fn cmd_rank(
    model_path: &Path,
    profile_path: &Path,
    samples: usize,
    seed: u64,
    comparator: Option<&str>,
    format: Format,
) -> Result<(), Failure> {
    let model = load_model(model_path)?.to_model()?;
    let profile = parse_profile_json(&read_input(profile_path)?, &model.network.schema)?;
    let comparator = match comparator {
        Some(label) => model.treatment(label)?,
        None => rankforge_core::TreatmentId::REFERENCE,
    };
    let request = RankRequest { n_samples: samples, seed, comparator, ..RankRequest::default() };
    let report = model.hierarchy(&profile, &request)?;

    let mut out = match format {
        Format::Json => write_report_json(&report)?,
        Format::Table => render_table(&report),
    };
    if !out.ends_with(b"\n") {
        out.push(b'\n');
    }
    std::io::stdout()
        .lock()
        .write_all(&out)
        .map_err(|e| Failure { code: 1, message: e.to_string() })
}

/// Treatment | SUCRA | Rank, best first.
fn render_table(report: &HierarchyReport) -> Vec<u8> {
    let rows: Vec<[String; 3]> = report
        .by_position()
        .into_iter()
        .map(|t| [t.label.clone(), format!("{:.2}", t.sucra), t.position.to_string()])
        .collect();
    let mut out = Vec::new();
    write_table(&mut out, &["Treatment", "SUCRA", "Rank"], &rows).expect("writing to memory");
    for group in &report.sucra_ties {
        let names: Vec<&str> = group.iter().map(|&t| report.summary(t).label.as_str()).collect();
        writeln!(out, "\nnote: equal SUCRA for {}; order among them follows network order", names.join(", ")).unwrap();
    }
    out
}

fn cmd_serve(model_path: &Path, listen: &str, cors_origins: Vec<String>) -> Result<(), Failure> {
    let artifact = load_model(model_path)?;
    let state = AppState::new(artifact, ServiceConfig { cors_origins, ..ServiceConfig::default() })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure { code: 1, message: e.to_string() })?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(|e| Failure { code: 4, message: format!("cannot bind {listen}: {e}") })?;
        if let Ok(addr) = listener.local_addr() {
            eprintln!("rankforge serving model {} on http://{addr}", state.digest());
        }
        rankforge_service::serve(listener, Arc::new(state), shutdown_signal())
            .await
            .map_err(|e| Failure { code: 1, message: e.to_string() })
    })
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = match signal(SignalKind::terminate()) {
            Ok(s) => s,
            Err(_) => return std::future::pending().await,
        };
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
    log::info!("shutting down");
}
