//! ABAC/RBAC policies with row-level security predicates and column masks.
//!
//! Combining rules: deny by default; an explicit Deny overrides any Allow;
//! across matching Allow policies the row predicates OR together and a
//! column stays masked only if every matching Allow masks it.

use std::collections::BTreeSet;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::principal::Principal;
use super::SecurityError;
use crate::expr::{CompOp, Expression};
use crate::scalar::{Document, Scalar};

pub const MASK_TOKEN: &str = "***";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Allow,
    Deny,
}

/// One principal-attribute condition, e.g. `clearance >= 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeCondition {
    pub attribute: String,
    pub op: CompOp,
    pub value: Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub policy_id: String,
    pub effect: Effect,
    /// Projection name or `*`.
    pub resource: String,
    pub role_any_of: BTreeSet<String>,
    pub attribute_conditions: Vec<AttributeCondition>,
    /// Row filter; `None` means all rows.
    pub row_predicate: Option<Expression>,
    pub column_masks: BTreeSet<String>,
    /// Default rules match every principal and need no role/attribute
    /// conditions.
    pub is_default: bool,
}

impl Policy {
    pub fn validate(&self) -> Result<(), SecurityError> {
        if self.policy_id.is_empty() {
            return Err(SecurityError::InvalidPolicy("policy_id must be non-empty".into()));
        }
        if !self.is_default && self.role_any_of.is_empty() && self.attribute_conditions.is_empty() {
            return Err(SecurityError::InvalidPolicy(format!(
                "policy {:?} has no role or attribute conditions and is not a default rule",
                self.policy_id
            )));
        }
        Ok(())
    }

    fn matches(&self, principal: &Principal, resource: &str) -> bool {
        if self.resource != "*" && self.resource != resource {
            return false;
        }
        if self.is_default {
            return true;
        }
        let roles_ok = self.role_any_of.is_empty()
            || self.role_any_of.iter().any(|r| principal.roles.contains(r));
        let attrs_ok = self.attribute_conditions.iter().all(|cond| {
            principal
                .attributes
                .get(&cond.attribute)
                .map(|v| crate::expr::compare_scalars(v, &cond.value, cond.op))
                .unwrap_or(false)
        });
        roles_ok && attrs_ok
    }
}

/// Outcome of policy evaluation for one principal/resource pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    pub allowed: bool,
    /// Combined row predicate; `Bool(true)` when unrestricted.
    pub row_predicate: Expression,
    /// Columns to mask in results.
    pub masks: BTreeSet<String>,
}

impl PolicyDecision {
    pub fn deny() -> Self {
        PolicyDecision {
            allowed: false,
            row_predicate: Expression::Bool(false),
            masks: BTreeSet::new(),
        }
    }
}

/// Read-mostly policy store; updates replace the whole set atomically.
#[derive(Default)]
pub struct PolicyEngine {
    policies: RwLock<Arc<Vec<Policy>>>,
}

impl PolicyEngine {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace the whole policy set.
    pub fn replace_all(&self, policies: Vec<Policy>) -> Result<(), SecurityError> {
        for p in &policies {
            p.validate()?;
        }
        *self.policies.write().expect("policy lock poisoned") = Arc::new(policies);
        Ok(())
    }

    /// Insert or update one policy by id.
    pub fn upsert(&self, policy: Policy) -> Result<(), SecurityError> {
        policy.validate()?;
        let mut guard = self.policies.write().expect("policy lock poisoned");
        let mut next: Vec<Policy> = guard.iter().cloned().collect();
        match next.iter_mut().find(|p| p.policy_id == policy.policy_id) {
            Some(slot) => *slot = policy,
            None => next.push(policy),
        }
        *guard = Arc::new(next);
        Ok(())
    }

    pub fn all(&self) -> Arc<Vec<Policy>> {
        self.policies.read().expect("policy lock poisoned").clone()
    }

    /// Evaluate the policy set. Absence of any matching Allow is a Deny.
    pub fn evaluate(&self, principal: &Principal, resource: &str) -> PolicyDecision {
        let policies = self.all();
        let matching: Vec<&Policy> =
            policies.iter().filter(|p| p.matches(principal, resource)).collect();

        if matching.iter().any(|p| p.effect == Effect::Deny) {
            return PolicyDecision::deny();
        }
        let allows: Vec<&Policy> =
            matching.into_iter().filter(|p| p.effect == Effect::Allow).collect();
        if allows.is_empty() {
            return PolicyDecision::deny();
        }

        // Row predicate: OR across allows; a predicate-free allow opens all rows.
        let row_predicate = if allows.iter().any(|p| p.row_predicate.is_none()) {
            Expression::Bool(true)
        } else {
            allows
                .iter()
                .filter_map(|p| p.row_predicate.clone())
                .reduce(|acc, e| acc.or(e))
                .unwrap_or(Expression::Bool(true))
        };

        // Masks: a column is masked only if every matching allow masks it.
        let mut masks = allows[0].column_masks.clone();
        for p in &allows[1..] {
            masks = masks.intersection(&p.column_masks).cloned().collect();
        }

        PolicyDecision {
            allowed: true,
            row_predicate,
            masks,
        }
    }
}

/// Replace masked columns with the mask token. The key column is never
/// masked — it identifies the row. Masking an absent column is a no-op.
pub fn apply_masks(row: &mut Document, masks: &BTreeSet<String>, key_column: &str) {
    for column in masks {
        if column == key_column {
            continue;
        }
        if let Some(slot) = row.get_mut(column) {
            *slot = Scalar::Str(MASK_TOKEN.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::col_cmp;
    use crate::scalar::doc;

    fn principal(id: &str, roles: &[&str]) -> Principal {
        Principal {
            principal_id: id.to_string(),
            roles: roles.iter().map(|r| r.to_string()).collect(),
            attributes: Document::new(),
        }
    }

    fn allow_for_role(id: &str, role: &str, predicate: Option<Expression>) -> Policy {
        Policy {
            policy_id: id.to_string(),
            effect: Effect::Allow,
            resource: "*".to_string(),
            role_any_of: [role.to_string()].into(),
            attribute_conditions: Vec::new(),
            row_predicate: predicate,
            column_masks: BTreeSet::new(),
            is_default: false,
        }
    }

    #[test]
    fn no_matching_policy_denies() {
        let engine = PolicyEngine::new();
        let d = engine.evaluate(&principal("p", &["user"]), "view");
        assert!(!d.allowed);
    }

    #[test]
    fn unconditional_admin_allow() {
        let engine = PolicyEngine::new();
        engine.replace_all(vec![allow_for_role("a1", "admin", None)]).unwrap();
        let d = engine.evaluate(&principal("p", &["admin"]), "view");
        assert!(d.allowed);
        assert_eq!(d.row_predicate, Expression::Bool(true));
        assert!(d.masks.is_empty());
        assert!(!engine.evaluate(&principal("p", &["user"]), "view").allowed);
    }

    #[test]
    fn two_allows_or_their_predicates() {
        let engine = PolicyEngine::new();
        let p1 = col_cmp("region", CompOp::Eq, "eu");
        let p2 = col_cmp("region", CompOp::Eq, "us");
        engine
            .replace_all(vec![
                allow_for_role("a1", "user", Some(p1.clone())),
                allow_for_role("a2", "user", Some(p2.clone())),
            ])
            .unwrap();
        let d = engine.evaluate(&principal("p", &["user"]), "view");
        assert!(d.allowed);

        // Behaves as p1 OR p2 on every row.
        for region in ["eu", "us", "apac"] {
            let row = doc([("region", region)]);
            let expected = p1.eval(&row, None) || p2.eval(&row, None);
            assert_eq!(d.row_predicate.eval(&row, None), expected, "region {region}");
        }
    }

    #[test]
    fn explicit_deny_overrides_allow() {
        let engine = PolicyEngine::new();
        let mut deny = allow_for_role("d1", "user", None);
        deny.effect = Effect::Deny;
        engine
            .replace_all(vec![allow_for_role("a1", "user", None), deny])
            .unwrap();
        assert!(!engine.evaluate(&principal("p", &["user"]), "view").allowed);
    }

    #[test]
    fn masks_intersect_across_allows() {
        let engine = PolicyEngine::new();
        let mut a = allow_for_role("a1", "user", None);
        a.column_masks = ["email".to_string(), "ssn".to_string()].into();
        let mut b = allow_for_role("a2", "ops", None);
        b.column_masks = ["ssn".to_string()].into();
        engine.replace_all(vec![a, b]).unwrap();

        // Only one allow matches: its masks apply in full.
        let d = engine.evaluate(&principal("p", &["user"]), "view");
        assert_eq!(d.masks, ["email".to_string(), "ssn".to_string()].into());

        // Both match: only the commonly-masked column stays masked.
        let d = engine.evaluate(&principal("p", &["user", "ops"]), "view");
        assert_eq!(d.masks, ["ssn".to_string()].into());
    }

    #[test]
    fn attribute_conditions_gate_matching() {
        let engine = PolicyEngine::new();
        let mut p = allow_for_role("a1", "user", None);
        p.role_any_of.clear();
        p.attribute_conditions = vec![AttributeCondition {
            attribute: "clearance".into(),
            op: CompOp::Ge,
            value: Scalar::Int(3),
        }];
        engine.replace_all(vec![p]).unwrap();

        let mut high = principal("p", &[]);
        high.attributes = doc([("clearance", 4i64)]);
        assert!(engine.evaluate(&high, "view").allowed);

        let mut low = principal("p", &[]);
        low.attributes = doc([("clearance", 2i64)]);
        assert!(!engine.evaluate(&low, "view").allowed);

        let no_attr = principal("p", &[]);
        assert!(!engine.evaluate(&no_attr, "view").allowed);
    }

    #[test]
    fn non_default_policy_needs_conditions() {
        let mut p = allow_for_role("a1", "user", None);
        p.role_any_of.clear();
        assert!(p.validate().is_err());
        p.is_default = true;
        assert!(p.validate().is_ok());
    }

    #[test]
    fn mask_application() {
        let masks: BTreeSet<String> = ["b".to_string(), "cart_id".to_string(), "zz".to_string()].into();
        let mut row = doc([("cart_id", "c-1"), ("b", "secret")]);
        apply_masks(&mut row, &masks, "cart_id");
        assert_eq!(row["cart_id"], Scalar::Str("c-1".into()), "key column never masked");
        assert_eq!(row["b"], Scalar::Str(MASK_TOKEN.into()));
        assert!(!row.contains_key("zz"), "masking an absent column is a no-op");

        let mut row2 = doc([("a", 1i64)]);
        apply_masks(&mut row2, &BTreeSet::new(), "a");
        assert_eq!(row2, doc([("a", 1i64)]), "empty mask set is identity");
    }
}
