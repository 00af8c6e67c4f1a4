//! Principals: the identities that hold keys and issue commands.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::scalar::Document;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Principal {
    pub principal_id: String,
    #[serde(default)]
    pub roles: BTreeSet<String>,
    #[serde(default)]
    pub attributes: Document,
}

impl Principal {
    pub fn new(principal_id: &str) -> Self {
        Principal {
            principal_id: principal_id.to_string(),
            roles: BTreeSet::new(),
            attributes: Document::new(),
        }
    }

    pub fn with_roles(mut self, roles: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.roles = roles.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_attributes(mut self, attributes: Document) -> Self {
        self.attributes = attributes;
        self
    }

    pub fn ctx(&self) -> crate::expr::PrincipalCtx<'_> {
        crate::expr::PrincipalCtx {
            id: &self.principal_id,
            attributes: &self.attributes,
        }
    }
}
