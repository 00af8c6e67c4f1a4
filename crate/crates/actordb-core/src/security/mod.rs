//! Message-level zero-trust security.
//!
//! Principals hold Ed25519 keys registered in a revocable registry. Writes
//! travel as detached-signature envelopes carrying a short-lived
//! proof-of-possession token; verification walks token signature, expiry,
//! key binding, revocation state, and envelope signature in that order,
//! and every outcome is audited. Policy evaluation produces row predicates
//! and column masks that the query layer applies transparently.

mod audit;
mod envelope;
mod keys;
mod policy;
mod principal;
mod token;

pub use audit::{AuditAction, AuditDecision, AuditRecord, AuditSink};
pub use envelope::{sign_command, CommandBody, EnvelopeHeader, SignedCommand, ALGORITHM};
pub use keys::{KeyRecord, KeyRegistry, KeyStatus, RevocationView};
pub use policy::{
    apply_masks, AttributeCondition, Effect, Policy, PolicyDecision, PolicyEngine, MASK_TOKEN,
};
pub use principal::Principal;
pub use token::{verify_token_signature, PopToken, TokenAuthority, MAX_TTL_S};

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine as _;
use ed25519_dalek::VerifyingKey;
use thiserror::Error;

pub(crate) fn b64encode(bytes: &[u8]) -> String {
    URL_SAFE_NO_PAD.encode(bytes)
}

pub(crate) fn b64decode(s: &str) -> Result<Vec<u8>, base64::DecodeError> {
    URL_SAFE_NO_PAD.decode(s)
}

/// Tolerance applied to token expiry checks to absorb clock skew.
pub const CLOCK_SKEW_MS: i64 = 2_000;

#[derive(Debug, Error)]
pub enum SecurityError {
    #[error("unknown principal {0:?}")]
    UnknownPrincipal(String),

    #[error("key {key_id:?} is not owned by principal {principal_id:?}")]
    KeyNotOwned { key_id: String, principal_id: String },

    #[error("key {0:?} is revoked")]
    KeyRevoked(String),

    #[error("key {0:?} is unknown")]
    KeyUnknown(String),

    #[error("key {0:?} already registered")]
    DuplicateKey(String),

    #[error("ttl {ttl_s}s exceeds maximum {max_s}s")]
    TtlTooLong { ttl_s: i64, max_s: i64 },

    #[error("token expired")]
    TokenExpired,

    #[error("token forged: {0}")]
    TokenForged(String),

    #[error("bad envelope signature")]
    BadSignature,

    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl SecurityError {
    /// Stable machine-readable code, used on the wire and in audit reasons.
    pub fn code(&self) -> &'static str {
        match self {
            SecurityError::UnknownPrincipal(_) => "UnknownPrincipal",
            SecurityError::KeyNotOwned { .. } => "KeyNotOwned",
            SecurityError::KeyRevoked(_) => "KeyRevoked",
            SecurityError::KeyUnknown(_) => "KeyUnknown",
            SecurityError::DuplicateKey(_) => "DuplicateKey",
            SecurityError::TtlTooLong { .. } => "TtlTooLong",
            SecurityError::TokenExpired => "TokenExpired",
            SecurityError::TokenForged(_) => "TokenForged",
            SecurityError::BadSignature => "BadSignature",
            SecurityError::MalformedEnvelope(_) => "MalformedEnvelope",
            SecurityError::InvalidPolicy(_) => "InvalidPolicy",
            SecurityError::Serialization(_) => "SerializationError",
        }
    }
}

/// Facade over principals, keys, tokens, policies, and the audit stream.
pub struct SecurityLayer {
    principals: RwLock<HashMap<String, Principal>>,
    keys: KeyRegistry,
    authority: TokenAuthority,
    view: RevocationView,
    policies: PolicyEngine,
    audit: Arc<AuditSink>,
}

impl SecurityLayer {
    pub fn new(
        authority: TokenAuthority,
        revocation_poll_interval_ms: i64,
        audit: Arc<AuditSink>,
        now: i64,
    ) -> Self {
        let keys = KeyRegistry::new();
        let view = RevocationView::new(&keys, revocation_poll_interval_ms, now);
        SecurityLayer {
            principals: RwLock::new(HashMap::new()),
            keys,
            authority,
            view,
            policies: PolicyEngine::new(),
            audit,
        }
    }

    pub fn audit(&self) -> &Arc<AuditSink> {
        &self.audit
    }

    pub fn policies(&self) -> &PolicyEngine {
        &self.policies
    }

    pub fn keys(&self) -> &KeyRegistry {
        &self.keys
    }

    pub fn authority_key(&self) -> VerifyingKey {
        self.authority.verifying_key()
    }

    pub fn upsert_principal(&self, principal: Principal) {
        self.principals
            .write()
            .expect("principal lock poisoned")
            .insert(principal.principal_id.clone(), principal);
    }

    pub fn principal(&self, principal_id: &str) -> Option<Principal> {
        self.principals
            .read()
            .expect("principal lock poisoned")
            .get(principal_id)
            .cloned()
    }

    pub fn principals(&self) -> Vec<Principal> {
        let map = self.principals.read().expect("principal lock poisoned");
        let mut out: Vec<Principal> = map.values().cloned().collect();
        out.sort_by(|a, b| a.principal_id.cmp(&b.principal_id));
        out
    }

    /// Register a new signing key for a principal. Registration is a local
    /// control operation, so verifier views pick it up immediately.
    pub fn register_key(
        &self,
        key_id: &str,
        public_key: [u8; 32],
        owner: &str,
        now: i64,
    ) -> Result<(), SecurityError> {
        if self.principal(owner).is_none() {
            return Err(SecurityError::UnknownPrincipal(owner.to_string()));
        }
        self.keys.register(key_id, public_key, owner)?;
        self.view.refresh(&self.keys, now);
        Ok(())
    }

    /// Issue a short-lived PoP token binding a principal to one of its
    /// active keys.
    pub fn issue_token(
        &self,
        token_id: &str,
        principal_id: &str,
        key_id: &str,
        ttl_s: i64,
        now: i64,
    ) -> Result<PopToken, SecurityError> {
        if self.principal(principal_id).is_none() {
            return Err(SecurityError::UnknownPrincipal(principal_id.to_string()));
        }
        let record = self
            .keys
            .get(key_id)
            .ok_or_else(|| SecurityError::KeyUnknown(key_id.to_string()))?;
        if record.status == KeyStatus::Revoked {
            return Err(SecurityError::KeyRevoked(key_id.to_string()));
        }
        if record.owner != principal_id {
            return Err(SecurityError::KeyNotOwned {
                key_id: key_id.to_string(),
                principal_id: principal_id.to_string(),
            });
        }
        let token = self.authority.issue(token_id, principal_id, key_id, ttl_s, now)?;
        self.audit.emit(
            now,
            principal_id,
            AuditAction::TokenIssued,
            key_id,
            AuditDecision::Allow,
            &format!("token {token_id} ttl {ttl_s}s"),
        );
        Ok(token)
    }

    /// Force the verifier view up to date. Used when loading persisted
    /// security state at startup — pre-existing revocations are not subject
    /// to the live propagation delay.
    pub fn refresh_revocation_view(&self, now: i64) {
        self.view.refresh(&self.keys, now);
    }

    /// Revoke a key and publish to the revocation feed. Verifier views see
    /// it at their next poll.
    pub fn revoke_key(&self, key_id: &str, now: i64) -> Result<(), SecurityError> {
        self.keys.revoke(key_id, now)?;
        self.audit.emit(
            now,
            "system",
            AuditAction::KeyRevoked,
            key_id,
            AuditDecision::NotApplicable,
            "key revoked",
        );
        Ok(())
    }

    /// Verify a signed command end to end and return the authenticated
    /// principal. Checks run in order: token issuer signature, token
    /// expiry (with skew tolerance), key binding, key status per the
    /// current revocation view, envelope signature. Every outcome is
    /// audited as command_accepted or command_rejected.
    pub fn verify_command(
        &self,
        cmd: &SignedCommand,
        now: i64,
    ) -> Result<Principal, SecurityError> {
        let result = self.verify_command_inner(cmd, now);
        let (action, decision, reason) = match &result {
            Ok(p) => (
                AuditAction::CommandAccepted,
                AuditDecision::Allow,
                format!("principal {}", p.principal_id),
            ),
            Err(e) => (
                AuditAction::CommandRejected,
                AuditDecision::Deny,
                e.code().to_string(),
            ),
        };
        let principal_id = result
            .as_ref()
            .map(|p| p.principal_id.clone())
            .unwrap_or_else(|_| cmd.header.token.principal_id.clone());
        let resource = cmd
            .body()
            .map(|b| b.actor_id)
            .unwrap_or_else(|_| "<unparsable>".to_string());
        self.audit
            .emit(now, &principal_id, action, &resource, decision, &reason);
        result
    }

    fn verify_command_inner(
        &self,
        cmd: &SignedCommand,
        now: i64,
    ) -> Result<Principal, SecurityError> {
        let token = &cmd.header.token;

        verify_token_signature(token, &self.authority.verifying_key())?;

        if now + CLOCK_SKEW_MS < token.issued_at {
            return Err(SecurityError::TokenForged("token issued in the future".into()));
        }
        if now >= token.expires_at + CLOCK_SKEW_MS {
            return Err(SecurityError::TokenExpired);
        }

        if cmd.header.algorithm != ALGORITHM {
            return Err(SecurityError::MalformedEnvelope(format!(
                "unsupported algorithm {:?}",
                cmd.header.algorithm
            )));
        }
        if cmd.header.key_id != token.key_id {
            return Err(SecurityError::TokenForged(
                "envelope key_id does not match token binding".into(),
            ));
        }

        let record = self
            .view
            .lookup(&self.keys, &cmd.header.key_id, now)
            .ok_or_else(|| SecurityError::KeyUnknown(cmd.header.key_id.clone()))?;
        if record.status == KeyStatus::Revoked {
            return Err(SecurityError::KeyRevoked(record.key_id));
        }
        if record.owner != token.principal_id {
            return Err(SecurityError::TokenForged(
                "token principal does not own the signing key".into(),
            ));
        }

        let verifying = VerifyingKey::from_bytes(&record.public_key)
            .map_err(|_| SecurityError::KeyUnknown(record.key_id.clone()))?;
        cmd.verify_signature(&verifying)?;

        self.principal(&token.principal_id)
            .ok_or_else(|| SecurityError::UnknownPrincipal(token.principal_id.clone()))
    }

    /// Authenticate a bare PoP token (query path: authenticated, not
    /// body-signed).
    pub fn authenticate_token(
        &self,
        token: &PopToken,
        now: i64,
    ) -> Result<Principal, SecurityError> {
        verify_token_signature(token, &self.authority.verifying_key())?;
        if now >= token.expires_at + CLOCK_SKEW_MS {
            return Err(SecurityError::TokenExpired);
        }
        let record = self
            .view
            .lookup(&self.keys, &token.key_id, now)
            .ok_or_else(|| SecurityError::KeyUnknown(token.key_id.clone()))?;
        if record.status == KeyStatus::Revoked {
            return Err(SecurityError::KeyRevoked(record.key_id));
        }
        if record.owner != token.principal_id {
            return Err(SecurityError::TokenForged(
                "token principal does not own the bound key".into(),
            ));
        }
        self.principal(&token.principal_id)
            .ok_or_else(|| SecurityError::UnknownPrincipal(token.principal_id.clone()))
    }

    /// Evaluate the policy set for a principal/resource pair.
    pub fn evaluate_policy(&self, principal: &Principal, resource: &str) -> PolicyDecision {
        self.policies.evaluate(principal, resource)
    }

    /// Replace the policy set, emitting a policy_change audit record.
    pub fn apply_policies(&self, policies: Vec<Policy>, now: i64) -> Result<(), SecurityError> {
        let n = policies.len();
        self.policies.replace_all(policies)?;
        self.audit.emit(
            now,
            "system",
            AuditAction::PolicyChange,
            "*",
            AuditDecision::NotApplicable,
            &format!("policy set replaced ({n} policies)"),
        );
        Ok(())
    }
}
