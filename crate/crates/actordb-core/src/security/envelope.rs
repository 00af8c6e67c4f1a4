//! Signed command envelopes — the only way to cause a write.
//!
//! Wire form is three base64url segments joined by dots:
//! `b64(header canonical JSON) . b64(body canonical JSON) . b64(signature)`.
//! The Ed25519 signature covers `header_bytes || '.' || body_bytes` exactly
//! as transmitted, so any bit flip in either segment invalidates it. The
//! PoP token rides inside the header and is therefore covered too.
//!
//! Decoding is strict: segments must re-encode to the identical string, so
//! non-canonical base64 variants of a signed envelope are rejected rather
//! than silently accepted.

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use super::token::PopToken;
use super::SecurityError;
use crate::scalar::canonical_json;
use crate::store::NewEvent;

/// Fixed detached-signature scheme tag. No algorithm agility by design.
pub const ALGORITHM: &str = "ed25519";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeHeader {
    pub algorithm: String,
    pub key_id: String,
    pub issued_at: i64,
    pub command_id: String,
    pub token: PopToken,
}

/// The signed payload: what the command does to which actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandBody {
    pub actor_id: String,
    pub expected_sequence: Option<u64>,
    pub events: Vec<NewEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedCommand {
    pub header: EnvelopeHeader,
    /// Canonical header bytes exactly as signed/transmitted.
    pub header_bytes: Vec<u8>,
    /// Canonical body bytes exactly as signed/transmitted.
    pub body_bytes: Vec<u8>,
    pub signature: [u8; 64],
}

impl SignedCommand {
    pub fn body(&self) -> Result<CommandBody, SecurityError> {
        serde_json::from_slice(&self.body_bytes).map_err(SecurityError::Serialization)
    }

    pub fn to_wire(&self) -> String {
        format!(
            "{}.{}.{}",
            super::b64encode(&self.header_bytes),
            super::b64encode(&self.body_bytes),
            super::b64encode(&self.signature),
        )
    }

    pub fn from_wire(wire: &str) -> Result<SignedCommand, SecurityError> {
        let mut parts = wire.split('.');
        let (Some(h), Some(b), Some(s), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(SecurityError::MalformedEnvelope(
                "expected exactly three dot-separated segments".into(),
            ));
        };
        let header_bytes = decode_segment(h, "header")?;
        let body_bytes = decode_segment(b, "body")?;
        let sig_bytes = decode_segment(s, "signature")?;
        let signature: [u8; 64] = sig_bytes
            .try_into()
            .map_err(|_| SecurityError::MalformedEnvelope("signature must be 64 bytes".into()))?;
        let header: EnvelopeHeader = serde_json::from_slice(&header_bytes)
            .map_err(|e| SecurityError::MalformedEnvelope(format!("header json: {e}")))?;
        Ok(SignedCommand {
            header,
            header_bytes,
            body_bytes,
            signature,
        })
    }

    /// Verify the envelope signature against a verifying key. Callers are
    /// responsible for having picked the key that `header.key_id` names.
    pub fn verify_signature(&self, key: &VerifyingKey) -> Result<(), SecurityError> {
        let mut message =
            Vec::with_capacity(self.header_bytes.len() + 1 + self.body_bytes.len());
        message.extend_from_slice(&self.header_bytes);
        message.push(b'.');
        message.extend_from_slice(&self.body_bytes);
        key.verify(&message, &Signature::from_bytes(&self.signature))
            .map_err(|_| SecurityError::BadSignature)
    }
}

fn decode_segment(seg: &str, what: &str) -> Result<Vec<u8>, SecurityError> {
    let bytes = super::b64decode(seg)
        .map_err(|_| SecurityError::MalformedEnvelope(format!("{what}: invalid base64url")))?;
    if super::b64encode(&bytes) != seg {
        return Err(SecurityError::MalformedEnvelope(format!(
            "{what}: non-canonical base64url"
        )));
    }
    Ok(bytes)
}

/// Build and sign a command envelope. Canonical serialization makes the
/// envelope deterministic: the same inputs produce the same bytes.
pub fn sign_command(
    signing_key: &SigningKey,
    token: &PopToken,
    command_id: &str,
    issued_at: i64,
    actor_id: &str,
    expected_sequence: Option<u64>,
    events: Vec<NewEvent>,
) -> Result<SignedCommand, SecurityError> {
    let header = EnvelopeHeader {
        algorithm: ALGORITHM.to_string(),
        key_id: token.key_id.clone(),
        issued_at,
        command_id: command_id.to_string(),
        token: token.clone(),
    };
    let body = CommandBody {
        actor_id: actor_id.to_string(),
        expected_sequence,
        events,
    };
    let header_bytes = canonical_json(&header).map_err(SecurityError::Serialization)?;
    let body_bytes = canonical_json(&body).map_err(SecurityError::Serialization)?;

    let mut message = Vec::with_capacity(header_bytes.len() + 1 + body_bytes.len());
    message.extend_from_slice(&header_bytes);
    message.push(b'.');
    message.extend_from_slice(&body_bytes);
    let signature = signing_key.sign(&message).to_bytes();

    Ok(SignedCommand {
        header,
        header_bytes,
        body_bytes,
        signature,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::doc;
    use crate::security::token::TokenAuthority;

    fn fixture() -> (SigningKey, PopToken) {
        let signing = SigningKey::from_bytes(&[9; 32]);
        let authority = TokenAuthority::from_seed(&[42; 32]);
        let token = authority.issue("t1", "alice", "k1", 300, 1_000).unwrap();
        (signing, token)
    }

    fn sample_events() -> Vec<NewEvent> {
        vec![NewEvent::new("item_added", 5_000, doc([("qty", 2i64)]), "cmd-1")]
    }

    #[test]
    fn sign_verify_round_trip() {
        let (sk, token) = fixture();
        let cmd = sign_command(&sk, &token, "cmd-1", 2_000, "cart-1", Some(0), sample_events())
            .unwrap();
        cmd.verify_signature(&sk.verifying_key()).unwrap();

        let wire = cmd.to_wire();
        let parsed = SignedCommand::from_wire(&wire).unwrap();
        assert_eq!(parsed, cmd);
        parsed.verify_signature(&sk.verifying_key()).unwrap();
    }

    #[test]
    fn flipped_body_byte_fails_verification() {
        let (sk, token) = fixture();
        let mut cmd = sign_command(&sk, &token, "cmd-1", 2_000, "cart-1", Some(0), sample_events())
            .unwrap();
        cmd.body_bytes[10] ^= 0x01;
        assert!(matches!(
            cmd.verify_signature(&sk.verifying_key()),
            Err(SecurityError::BadSignature)
        ));
    }

    #[test]
    fn canonicalization_makes_body_bytes_order_independent() {
        let (sk, token) = fixture();
        let payload_a = doc([("alpha", 1i64), ("beta", 2i64)]);
        let mut payload_b = crate::scalar::Document::new();
        payload_b.insert("beta".into(), crate::scalar::Scalar::Int(2));
        payload_b.insert("alpha".into(), crate::scalar::Scalar::Int(1));

        let ev_a = vec![NewEvent::new("t", 1, payload_a, "c")];
        let ev_b = vec![NewEvent::new("t", 1, payload_b, "c")];
        let a = sign_command(&sk, &token, "c", 0, "x", None, ev_a).unwrap();
        let b = sign_command(&sk, &token, "c", 0, "x", None, ev_b).unwrap();
        assert_eq!(a.body_bytes, b.body_bytes);
        assert_eq!(a.to_wire(), b.to_wire());
    }

    #[test]
    fn malformed_wire_is_rejected() {
        assert!(SignedCommand::from_wire("onlytwo.parts").is_err());
        assert!(SignedCommand::from_wire("a.b.c.d").is_err());
        assert!(SignedCommand::from_wire("!!!.???.###").is_err());
    }

    #[test]
    fn non_canonical_base64_is_rejected() {
        let (sk, token) = fixture();
        let cmd = sign_command(&sk, &token, "cmd-1", 2_000, "cart-1", Some(0), sample_events())
            .unwrap();
        let wire = cmd.to_wire();
        // Padding chars make a segment non-canonical without changing bytes.
        let (head, rest) = wire.split_once('.').unwrap();
        let padded = format!("{head}==.{rest}");
        assert!(SignedCommand::from_wire(&padded).is_err());
    }
}
