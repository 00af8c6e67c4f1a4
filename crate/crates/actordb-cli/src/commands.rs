//! Subcommand implementations: thin wrappers over the engine library with
//! JSON output and meaningful exit codes.

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use ed25519_dalek::SigningKey;

use actordb_core::bench::{bench_e2e, bench_read, bench_write, AllocProbe, BenchReport};
use actordb_core::dag;
use actordb_core::engine::{parse_policies, save_security_state};
use actordb_core::security::PopToken;
use actordb_core::{Engine, EngineConfig, Server};

use crate::alloc_probe;

/// Map an error chain to the documented exit codes: validation problems
/// exit 2, runtime failures exit 1.
pub fn classify(err: &anyhow::Error) -> u8 {
    let text = format!("{err:#}");
    const VALIDATION_MARKERS: [&str; 15] = [
        "cycle",
        "duplicate",
        "unknown node",
        "unknown dependency",
        "depends on unknown",
        "is unknown",
        "unknown projection",
        "unknown column",
        "invalid config",
        "configuration error",
        "invalid manifest",
        "invalid policy",
        "parse error",
        "lex error",
        "invalid argument",
    ];
    let lower = text.to_lowercase();
    if VALIDATION_MARKERS.iter().any(|m| lower.contains(m)) {
        2
    } else {
        1
    }
}

fn load_config(path: &Path) -> Result<EngineConfig> {
    if path.exists() {
        EngineConfig::from_file(path).map_err(|e| anyhow!("invalid config: {e}"))
    } else {
        Ok(EngineConfig::default())
    }
}

fn start_engine(config_path: &Path) -> Result<Arc<Engine>> {
    let config = load_config(config_path)?;
    Engine::start(config).context("engine startup failed")
}

pub fn serve(config_path: &Path) -> Result<ExitCode> {
    let engine = start_engine(config_path)?;
    let addr = engine.config().listen_addr.clone();
    engine.start_workers();
    let server = Server::start(Arc::clone(&engine), &addr).context("cannot bind listen address")?;
    println!("listening on {}", server.local_addr());
    println!("startup order: {}", engine.startup_order().join(" -> "));
    use std::io::Write;
    std::io::stdout().flush().ok();
    loop {
        std::thread::park();
    }
}

pub fn bench(which: &str, n: u64, json: bool, config_path: &Path) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let probe: AllocProbe = Arc::new(alloc_probe::allocated_bytes);
    let report: BenchReport = match which {
        "write" => bench_write(n, Some(probe)),
        "read" => bench_read(n, Some(probe)),
        "e2e" => bench_e2e(n, config.polling_interval_ms, Some(probe)),
        other => bail!("unknown benchmark {other:?}"),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.human_table());
    }
    Ok(if report.gate.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn query(config_path: &Path, token_path: &Path, sql: &str) -> Result<ExitCode> {
    let engine = start_engine(config_path)?;
    let token: PopToken = serde_json::from_str(
        &std::fs::read_to_string(token_path)
            .with_context(|| format!("cannot read token {}", token_path.display()))?,
    )
    .context("invalid token file")?;
    let principal = engine
        .authenticate(&token)
        .map_err(|e| anyhow!("{}: {e}", e.code()))?;
    let rows = engine
        .query(sql, &principal)
        .map_err(|e| anyhow!("{}: {e}", e.code()))?;
    println!("{}", serde_json::to_string_pretty(&serde_json::json!({ "rows": rows }))?);
    Ok(ExitCode::SUCCESS)
}

pub fn policy_apply(config_path: &Path, policy_path: &Path) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let text = std::fs::read_to_string(policy_path)
        .with_context(|| format!("cannot read {}", policy_path.display()))?;
    let policies = parse_policies(&text).map_err(|e| anyhow!("invalid policy document: {e}"))?;
    let n = policies.len();

    let engine = Engine::start(config.clone()).context("engine startup failed")?;
    engine
        .apply_policies(policies)
        .map_err(|e| anyhow!("invalid policy document: {e}"))?;
    if let Some(dir) = &config.security_state_dir {
        save_security_state(engine.security(), dir)
            .map_err(|e| anyhow!("persisting security state: {e}"))?;
    }
    println!("{}", serde_json::json!({ "applied": n }));
    Ok(ExitCode::SUCCESS)
}

pub fn keys_issue(
    config_path: &Path,
    principal_id: &str,
    roles: &[String],
    ttl: i64,
    out_dir: &Path,
) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let engine = Engine::start(config.clone()).context("engine startup failed")?;
    let now = engine.clock().now_ms();

    let seed: [u8; 32] = rand::random();
    let signing = SigningKey::from_bytes(&seed);
    let key_id = format!("key-{}", short_hex(&rand::random::<[u8; 8]>()));
    let token_id = format!("tok-{}", short_hex(&rand::random::<[u8; 8]>()));

    let mut principal = actordb_core::Principal::new(principal_id);
    if !roles.is_empty() {
        principal = principal.with_roles(roles.iter().cloned());
    }
    engine.security().upsert_principal(principal);
    engine
        .security()
        .register_key(&key_id, signing.verifying_key().to_bytes(), principal_id, now)
        .map_err(|e| anyhow!("{}: {e}", e.code()))?;
    let token = engine
        .security()
        .issue_token(&token_id, principal_id, &key_id, ttl, now)
        .map_err(|e| anyhow!("{}: {e}", e.code()))?;

    if let Some(dir) = &config.security_state_dir {
        save_security_state(engine.security(), dir)
            .map_err(|e| anyhow!("persisting security state: {e}"))?;
    }

    std::fs::create_dir_all(out_dir)?;
    let secret_path = out_dir.join(format!("{principal_id}.secret"));
    let token_path = out_dir.join(format!("{principal_id}.token.json"));
    std::fs::write(&secret_path, hex(&seed))?;
    std::fs::write(&token_path, serde_json::to_string_pretty(&token)?)?;

    println!(
        "{}",
        serde_json::json!({
            "principal": principal_id,
            "key_id": key_id,
            "token": token_path.display().to_string(),
            "secret": secret_path.display().to_string(),
            "expires_at": token.expires_at,
        })
    );
    Ok(ExitCode::SUCCESS)
}

pub fn keys_revoke(config_path: &Path, key_id: &str) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let engine = Engine::start(config.clone()).context("engine startup failed")?;
    engine
        .security()
        .revoke_key(key_id, engine.clock().now_ms())
        .map_err(|e| anyhow!("{}: {e}", e.code()))?;
    if let Some(dir) = &config.security_state_dir {
        save_security_state(engine.security(), dir)
            .map_err(|e| anyhow!("persisting security state: {e}"))?;
    }
    println!("{}", serde_json::json!({ "revoked": key_id }));
    Ok(ExitCode::SUCCESS)
}

fn load_manifest(path: &Path) -> Result<dag::DagManifest> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    dag::load(&text).map_err(|e| anyhow!("{e}"))
}

pub fn dag_validate(path: &Path) -> Result<ExitCode> {
    let manifest = load_manifest(path)?;
    println!(
        "{}",
        serde_json::json!({
            "nodes": manifest.nodes.len(),
            "root_hash": manifest.root_hex(),
        })
    );
    Ok(ExitCode::SUCCESS)
}

pub fn dag_order(path: &Path) -> Result<ExitCode> {
    let manifest = load_manifest(path)?;
    println!("{}", serde_json::json!(manifest.topo_order()));
    Ok(ExitCode::SUCCESS)
}

pub fn dag_diagnose(path: &Path, node: &str) -> Result<ExitCode> {
    let manifest = load_manifest(path)?;
    let order = manifest.diagnose(node).map_err(|e| anyhow!("{e}"))?;
    println!("{}", serde_json::json!(order));
    Ok(ExitCode::SUCCESS)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn short_hex(bytes: &[u8]) -> String {
    hex(bytes)
}
