//! `actordb` — serve loop, benchmarks, queries, key/policy admin, and DAG
//! tooling over the engine library.
//!
//! Exit codes: 0 ok, 1 runtime error (including a failed benchmark gate),
//! 2 validation error (bad config, parse errors, unknown names, cycles).

mod alloc_probe;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[global_allocator]
static COUNTING_ALLOC: alloc_probe::CountingAllocator = alloc_probe::CountingAllocator;

#[derive(Parser)]
#[command(name = "actordb", version, about = "Event-sourced database engine")]
struct Cli {
    /// Engine config file (JSON). Missing file means built-in defaults.
    #[arg(long, global = true, default_value = "actordb.json")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the engine and serve the line protocol until killed.
    Serve,
    /// Run a benchmark and print its report.
    Bench {
        #[arg(value_enum)]
        which: BenchKind,
        /// Number of measured operations (10% extra run as warmup).
        #[arg(long, default_value_t = 10_000)]
        n: u64,
        /// Emit the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Execute a SELECT against the configured engine.
    Query {
        /// Path to a PoP token JSON file.
        #[arg(long)]
        token: PathBuf,
        sql: String,
    },
    /// Policy administration.
    Policy {
        #[command(subcommand)]
        action: PolicyAction,
    },
    /// Key administration.
    Keys {
        #[command(subcommand)]
        action: KeysAction,
    },
    /// Process-DAG tooling.
    Dag {
        #[command(subcommand)]
        action: DagAction,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    Write,
    Read,
    E2e,
}

#[derive(Subcommand)]
enum PolicyAction {
    /// Validate and install a policy document (JSON array).
    Apply { path: PathBuf },
}

#[derive(Subcommand)]
enum KeysAction {
    /// Create a principal + signing key and issue a PoP token.
    Issue {
        #[arg(long)]
        principal: String,
        /// Comma-separated roles for the principal.
        #[arg(long, value_delimiter = ',')]
        roles: Vec<String>,
        /// Token lifetime in seconds (max 300).
        #[arg(long, default_value_t = 300)]
        ttl: i64,
        /// Where to write <principal>.secret and <principal>.token.json.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Revoke a key; verifiers reject it within the poll interval.
    Revoke {
        #[arg(long)]
        key_id: String,
    },
}

#[derive(Subcommand)]
enum DagAction {
    /// Check a manifest for duplicate nodes, unknown deps, and cycles.
    Validate { path: PathBuf },
    /// Print the topological startup order.
    Order { path: PathBuf },
    /// Print the diagnosis order for a failed node.
    Diagnose {
        path: PathBuf,
        #[arg(long)]
        node: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Serve => commands::serve(&cli.config),
        Command::Bench { which, n, json } => commands::bench(
            match which {
                BenchKind::Write => "write",
                BenchKind::Read => "read",
                BenchKind::E2e => "e2e",
            },
            n,
            json,
            &cli.config,
        ),
        Command::Query { token, sql } => commands::query(&cli.config, &token, &sql),
        Command::Policy {
            action: PolicyAction::Apply { path },
        } => commands::policy_apply(&cli.config, &path),
        Command::Keys { action } => match action {
            KeysAction::Issue {
                principal,
                roles,
                ttl,
                out,
            } => commands::keys_issue(&cli.config, &principal, &roles, ttl, &out),
            KeysAction::Revoke { key_id } => commands::keys_revoke(&cli.config, &key_id),
        },
        Command::Dag { action } => match action {
            DagAction::Validate { path } => commands::dag_validate(&path),
            DagAction::Order { path } => commands::dag_order(&path),
            DagAction::Diagnose { path, node } => commands::dag_diagnose(&path, &node),
        },
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(commands::classify(&err))
        }
    }
}
