use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use base64::Engine;
use clap::{Args, Parser, Subcommand};

use sandhub::bench::{self, RunOptions, WorkloadKind};
use sandhub::clock::{OsEntropy, SystemClock};
use sandhub::csp::CspPolicy;
use sandhub::manifest::{
    check_entry_point_presence, validate_manifest, validate_manifest_with_policy, ManifestError,
    Presence, SourceRef,
};
use sandhub::server::{self, ServerConfig};
use sandhub::share::{self, Passphrase};
use sandhub::store::{PermissionKind, Registry, RegistryConfig, SqliteStorage};

#[derive(Parser)]
#[command(
    name = "sandhub",
    version,
    about = "Registry and result-sharing service for browser-sandboxed analysis apps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP server. Configuration comes from SANDHUB_* variables;
    /// flags override them.
    Serve {
        #[arg(long)]
        bind: Option<String>,
        #[arg(long)]
        public_origin: Option<String>,
        #[arg(long)]
        storage: Option<PathBuf>,
    },
    /// Load the built-in application corpus.
    Seed(StorageArg),
    /// Account administration.
    Admin {
        #[command(subcommand)]
        action: AdminAction,
    },
    /// Check a manifest file and report every violation.
    Validate {
        manifest: PathBuf,
        /// Also accept source URLs on this deployment origin.
        #[arg(long)]
        origin: Option<String>,
    },
    /// Seal a file into a passphrase-protected blob.
    Seal {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Name stored in the envelope; defaults to the input's file name.
        #[arg(long)]
        name: Option<String>,
        /// Write standard base64 instead of raw bytes.
        #[arg(long)]
        base64: bool,
        #[command(flatten)]
        passphrase: PassphraseArgs,
    },
    /// Open a sealed blob and write its payload.
    Unseal {
        input: PathBuf,
        /// Payload destination. Without it the envelope's file name is used
        /// inside --out-dir.
        #[arg(short, long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Input is base64 text.
        #[arg(long)]
        base64: bool,
        #[command(flatten)]
        passphrase: PassphraseArgs,
    },
    /// Native timing workloads.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Args)]
struct StorageArg {
    #[arg(long, env = server::ENV_STORAGE, default_value = "sandhub.db")]
    storage: PathBuf,
}

#[derive(Subcommand)]
enum AdminAction {
    /// Grant a permission (publish-app or upload-data) to a user.
    Grant {
        user: String,
        permission: String,
        #[command(flatten)]
        storage: StorageArg,
    },
}

#[derive(Args)]
struct PassphraseArgs {
    /// Environment variable holding the passphrase.
    #[arg(long, default_value = "SANDHUB_PASSPHRASE")]
    passphrase_env: String,
    /// Read the passphrase from a file (one trailing newline is stripped).
    #[arg(long)]
    passphrase_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchAction {
    /// Time one workload over a size sweep and write a CSV.
    Run {
        #[arg(long)]
        kind: WorkloadKind,
        /// Comma-separated; defaults depend on the workload.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = bench::DEFAULT_ITERATIONS)]
        iterations: u32,
        #[arg(long, default_value_t = bench::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "native")]
        env_label: String,
        #[arg(long, default_value_t = 1024)]
        memory_budget_mib: u64,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Compare per-cell medians of a native and a sandbox CSV.
    Compare {
        #[arg(long)]
        native: PathBuf,
        #[arg(long)]
        sandbox: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve {
            bind,
            public_origin,
            storage,
        } => {
            let storage = storage.map(|p| p.to_string_lossy().into_owned());
            let config = ServerConfig::from_lookup(|k| {
                let flag = match k {
                    server::ENV_BIND => bind.clone(),
                    server::ENV_PUBLIC_ORIGIN => public_origin.clone(),
                    server::ENV_STORAGE => storage.clone(),
                    _ => None,
                };
                flag.or_else(|| std::env::var(k).ok())
            })?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(config))?;
        }
        Command::Seed(s) => {
            let registry = open_registry(&s.storage)?;
            let op = registry.operator()?;
            registry.grant_directly(&op.handle, PermissionKind::PublishApp)?;
            let added = registry.seed(&op.user_id)?;
            println!("seeded {added} applications into {}", s.storage.display());
        }
        Command::Admin {
            action:
                AdminAction::Grant {
                    user,
                    permission,
                    storage,
                },
        } => {
            let kind = PermissionKind::from_label(&permission).ok_or_else(|| {
                anyhow!("unknown permission {permission:?}; expected publish-app or upload-data")
            })?;
            let account = open_registry(&storage.storage)?.grant_directly(&user, kind)?;
            println!("granted {} to {}", kind.label(), account.handle);
        }
        Command::Validate { manifest, origin } => return validate(&manifest, origin.as_deref()),
        Command::Seal {
            input,
            out,
            name,
            base64,
            passphrase,
        } => {
            let payload =
                fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let name = match name {
                Some(n) => n,
                None => input
                    .file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| anyhow!("input has no usable file name; pass --name"))?
                    .to_owned(),
            };
            let pw = read_passphrase(&passphrase)?;
            let blob = share::seal(&payload, &name, &pw, &mut rand::rngs::OsRng)?.to_bytes();
            let bytes = if base64 {
                let mut s = base64::engine::general_purpose::STANDARD.encode(&blob);
                s.push('\n');
                s.into_bytes()
            } else {
                blob
            };
            write_output(&out, &bytes)?;
        }
        Command::Unseal {
            input,
            out,
            out_dir,
            base64,
            passphrase,
        } => {
            let mut raw = read_input(&input)?;
            if base64 {
                let text: String = String::from_utf8(raw)
                    .context("base64 input is not text")?
                    .split_whitespace()
                    .collect();
                raw = base64::engine::general_purpose::STANDARD
                    .decode(text)
                    .context("decoding base64 input")?;
            }
            let pw = read_passphrase(&passphrase)?;
            let envelope = share::open_bytes(&raw, &pw).map_err(|e| match e {
                share::ShareError::IntegrityFailure => {
                    anyhow!("wrong passphrase or corrupted data")
                }
                other => anyhow!(other),
            })?;
            let dest = out.unwrap_or_else(|| out_dir.join(&envelope.file_name));
            write_output(&dest, &envelope.payload)?;
            eprintln!(
                "{} ({} bytes) -> {}",
                envelope.file_name,
                envelope.payload.len(),
                dest.display()
            );
        }
        Command::Bench { action } => bench_command(action)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn open_registry(path: &Path) -> Result<Registry> {
    let storage =
        SqliteStorage::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(Registry::new(
        Box::new(storage),
        Arc::new(SystemClock),
        Arc::new(OsEntropy),
        RegistryConfig::default(),
    ))
}

fn read_passphrase(args: &PassphraseArgs) -> Result<Passphrase> {
    let text = match &args.passphrase_file {
        Some(path) => {
            let mut s = fs::read_to_string(path)
                .with_context(|| format!("reading passphrase file {}", path.display()))?;
            if s.ends_with('\n') {
                s.pop();
                if s.ends_with('\r') {
                    s.pop();
                }
            }
            s
        }
        None => std::env::var(&args.passphrase_env)
            .with_context(|| format!("passphrase variable {} is not set", args.passphrase_env))?,
    };
    Ok(Passphrase::new(text)?)
}

fn read_input(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        Ok(buf)
    } else {
        fs::read(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if path == Path::new("-") {
        io::stdout().write_all(bytes)?;
        return Ok(());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn validate(path: &Path, origin: Option<&str>) -> Result<ExitCode> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let result = match origin {
        Some(o) => validate_manifest_with_policy(&text, &CspPolicy::new(o)?),
        None => validate_manifest(&text),
    };
    match result {
        Ok(m) => {
            println!("ok: {} {} ({})", m.name, m.version, m.runtime);
            if let SourceRef::Inline(src) = &m.source {
                if check_entry_point_presence(&m, src) == Presence::Missing {
                    println!(
                        "warning: inline source does not appear to define `{}`",
                        m.entry_point.function_name
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(ManifestError::Invalid(report)) => {
            println!("{} violation(s):", report.violations.len());
            for v in &report.violations {
                println!("  {}: {}", v.path, v.message);
            }
            Ok(ExitCode::FAILURE)
        }
        Err(e) => bail!(e),
    }
}

fn bench_command(action: BenchAction) -> Result<()> {
    match action {
        BenchAction::Run {
            kind,
            sizes,
            iterations,
            seed,
            env_label,
            memory_budget_mib,
            out,
        } => {
            let sizes = if sizes.is_empty() {
                kind.default_sizes().to_vec()
            } else {
                sizes
            };
            let opts = RunOptions {
                environment: env_label,
                memory_budget: memory_budget_mib << 20,
                ..RunOptions::default()
            };
            let records = bench::run_sweep(kind, &sizes, iterations, seed, &opts)?;
            let mut text = Vec::new();
            bench::write_csv(&records, &mut text)?;
            write_output(&out, &text)?;
            print!("{}", bench::render_summaries(&bench::summarize(&records)?));
        }
        BenchAction::Compare {
            native,
            sandbox,
            out,
        } => {
            let load = |p: &Path| -> Result<Vec<bench::BenchmarkRecord>> {
                let text = read_input(p)?;
                bench::parse_csv(text.as_slice())
                    .with_context(|| format!("parsing {}", p.display()))
            };
            let report = bench::compare_environments(&load(&native)?, &load(&sandbox)?)?;
            let text = bench::render_comparison(&report);
            match out {
                Some(path) => write_output(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
