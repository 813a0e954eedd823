//! Versioned JSON result documents.

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: &str = "1.0.0";
const SUPPORTED_MAJOR: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Document<T> {
    pub schema: Schema,
    pub body: T,
}

impl<T: Serialize> Document<T> {
    pub fn new(name: &str, body: T) -> Self {
        Self {
            schema: Schema {
                name: name.to_string(),
                version: SCHEMA_VERSION.to_string(),
            },
            body,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

fn major(version: &str) -> Result<u64> {
    version
        .split('.')
        .next()
        .and_then(|m| m.parse().ok())
        .with_context(|| format!("malformed schema version {version:?}"))
}

/// Parse a document, checking its name and major version before the body.
pub fn parse<T: DeserializeOwned>(text: &str, expected_name: &str) -> Result<Document<T>> {
    #[derive(Deserialize)]
    struct Header {
        schema: Schema,
    }
    let header: Header = serde_json::from_str(text).context("document has no schema section")?;
    if header.schema.name != expected_name {
        bail!("expected a {expected_name:?} document, found {:?}", header.schema.name);
    }
    let found = major(&header.schema.version)?;
    if found != SUPPORTED_MAJOR {
        bail!(
            "unsupported schema version {} (this build reads major version {SUPPORTED_MAJOR})",
            header.schema.version
        );
    }
    serde_json::from_str(text).context("document body does not match the schema")
}

pub fn read<T: DeserializeOwned>(path: &Path, expected_name: &str) -> Result<Document<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text, expected_name).with_context(|| format!("in {}", path.display()))
}
