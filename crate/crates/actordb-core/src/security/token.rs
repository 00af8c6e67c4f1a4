//! Short-lived proof-of-possession tokens.
//!
//! A token binds a principal to one of its signing keys for at most 300
//! seconds and is itself signed by the node's token authority. Holding a
//! valid token plus the ability to sign with the bound key is what proves
//! possession.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use super::SecurityError;
use crate::scalar::canonical_json;

/// Maximum token lifetime in seconds.
pub const MAX_TTL_S: i64 = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopToken {
    pub token_id: String,
    pub principal_id: String,
    pub key_id: String,
    pub issued_at: i64,
    pub expires_at: i64,
    /// Authority signature over the canonical token body, base64url.
    pub signature: String,
}

#[derive(Serialize)]
struct TokenBody<'a> {
    expires_at: i64,
    issued_at: i64,
    key_id: &'a str,
    principal_id: &'a str,
    token_id: &'a str,
}

fn token_body_bytes(token: &PopToken) -> Result<Vec<u8>, SecurityError> {
    canonical_json(&TokenBody {
        expires_at: token.expires_at,
        issued_at: token.issued_at,
        key_id: &token.key_id,
        principal_id: &token.principal_id,
        token_id: &token.token_id,
    })
    .map_err(SecurityError::Serialization)
}

/// Issues and verifies PoP tokens with the node's authority key.
pub struct TokenAuthority {
    signing: SigningKey,
}

impl TokenAuthority {
    pub fn new(signing: SigningKey) -> Self {
        TokenAuthority { signing }
    }

    pub fn from_seed(seed: &[u8; 32]) -> Self {
        TokenAuthority {
            signing: SigningKey::from_bytes(seed),
        }
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn issue(
        &self,
        token_id: &str,
        principal_id: &str,
        key_id: &str,
        ttl_s: i64,
        now: i64,
    ) -> Result<PopToken, SecurityError> {
        if ttl_s <= 0 || ttl_s > MAX_TTL_S {
            return Err(SecurityError::TtlTooLong { ttl_s, max_s: MAX_TTL_S });
        }
        let mut token = PopToken {
            token_id: token_id.to_string(),
            principal_id: principal_id.to_string(),
            key_id: key_id.to_string(),
            issued_at: now,
            expires_at: now + ttl_s * 1000,
            signature: String::new(),
        };
        let body = token_body_bytes(&token)?;
        let sig = self.signing.sign(&body);
        token.signature = crate::security::b64encode(&sig.to_bytes());
        Ok(token)
    }
}

/// Check the authority signature on a token.
pub fn verify_token_signature(
    token: &PopToken,
    authority: &VerifyingKey,
) -> Result<(), SecurityError> {
    let body = token_body_bytes(token)?;
    let sig_bytes = crate::security::b64decode(&token.signature)
        .map_err(|_| SecurityError::TokenForged("undecodable token signature".into()))?;
    let sig_arr: [u8; 64] = sig_bytes
        .try_into()
        .map_err(|_| SecurityError::TokenForged("token signature length".into()))?;
    let sig = Signature::from_bytes(&sig_arr);
    authority
        .verify(&body, &sig)
        .map_err(|_| SecurityError::TokenForged("token signature check failed".into()))
}
