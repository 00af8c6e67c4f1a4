//! Shared fixtures for integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use ed25519_dalek::SigningKey;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use actordb_core::engine::CommandOutcome;
use actordb_core::scalar::{Document, Scalar};
use actordb_core::security::{sign_command, Effect, Policy, PopToken};
use actordb_core::store::NewEvent;
use actordb_core::{Engine, EngineConfig};

pub fn engine_mem() -> Arc<Engine> {
    Engine::start(EngineConfig::default()).unwrap()
}

/// Register a principal with a fresh signing key and an issued token.
pub struct Signer {
    pub principal_id: String,
    pub key_id: String,
    pub signing: SigningKey,
    pub token: PopToken,
}

pub fn issue_signer(engine: &Engine, principal_id: &str, roles: &[&str], seed: u8) -> Signer {
    let now = engine.clock().now_ms();
    let mut principal = actordb_core::Principal::new(principal_id);
    if !roles.is_empty() {
        principal = principal.with_roles(roles.iter().copied());
    }
    engine.security().upsert_principal(principal);
    let signing = SigningKey::from_bytes(&[seed; 32]);
    let key_id = format!("key-{principal_id}-{seed}");
    engine
        .security()
        .register_key(&key_id, signing.verifying_key().to_bytes(), principal_id, now)
        .unwrap();
    let token = engine
        .security()
        .issue_token(&format!("tok-{principal_id}-{seed}"), principal_id, &key_id, 300, now)
        .unwrap();
    Signer {
        principal_id: principal_id.to_string(),
        key_id,
        signing,
        token,
    }
}

pub fn allow_all_policy(role: &str) -> Policy {
    Policy {
        policy_id: format!("allow-{role}"),
        effect: Effect::Allow,
        resource: "*".into(),
        role_any_of: [role.to_string()].into(),
        attribute_conditions: Vec::new(),
        row_predicate: None,
        column_masks: BTreeSet::new(),
        is_default: false,
    }
}

/// Sign and submit one command through the engine's write entry point.
pub fn signed_append(
    engine: &Engine,
    signer: &Signer,
    actor_id: &str,
    expected_sequence: Option<u64>,
    events: Vec<NewEvent>,
    command_id: &str,
) -> Result<CommandOutcome, actordb_core::EngineError> {
    let cmd = sign_command(
        &signer.signing,
        &signer.token,
        command_id,
        engine.clock().now_ms(),
        actor_id,
        expected_sequence,
        events,
    )
    .unwrap();
    engine.submit_command(&cmd)
}

/// Small random payload document over a fixed field vocabulary.
pub fn gen_payload(rng: &mut StdRng, key: &str) -> Document {
    let mut doc = Document::new();
    doc.insert("k".into(), Scalar::Str(key.to_string()));
    doc.insert("v".into(), Scalar::Int(rng.gen_range(-100..100)));
    if rng.gen_bool(0.3) {
        doc.insert("f".into(), Scalar::Float(rng.gen_range(-5.0..5.0)));
    }
    if rng.gen_bool(0.2) {
        doc.insert("tag".into(), Scalar::Str(format!("t{}", rng.gen_range(0..4))));
    }
    doc
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}
