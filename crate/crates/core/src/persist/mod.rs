//! File formats: IPD CSV, schema config, model artifact, profiles and
//! hierarchy reports.
//!
//! Every JSON document this crate writes goes through [`to_canonical_json`]:
//! object keys sorted, no insignificant whitespace, shortest round-trip
//! float formatting. Identical values therefore give identical bytes.

mod artifact;
mod ipd;
mod report;

pub use artifact::{
    read_model, write_model, ModelArtifact, Provenance, Stage1Record, FORMAT_VERSION,
};
pub use ipd::{parse_ipd_csv, write_ipd_csv};
pub use report::{parse_profile_json, profile_from_value, profile_to_value, report_to_value, write_report_json};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::domain::NetworkSpec;
use crate::error::{Error, Result};

/// Serializes with sorted keys and no whitespace. Callers check finiteness
/// first: serde_json turns NaN and infinities into `null`.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let value = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::new();
    write_canonical(&value, &mut out)?;
    Ok(out)
}

pub fn value_to_canonical_json(value: &Value) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_canonical(value, &mut out)?;
    Ok(out)
}

fn write_canonical(value: &Value, out: &mut Vec<u8>) -> Result<()> {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                serde_json::to_writer(&mut *out, key).map_err(|e| Error::Format(e.to_string()))?;
                out.push(b':');
                write_canonical(&map[key], out)?;
            }
            out.push(b'}');
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_canonical(item, out)?;
            }
            out.push(b']');
        }
        other => {
            serde_json::to_writer(&mut *out, other).map_err(|e| Error::Format(e.to_string()))?
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Parses a schema config: treatment labels in network order, the covariate
/// schema and the benefit direction.
pub fn parse_schema_config(bytes: &[u8]) -> Result<NetworkSpec> {
    serde_json::from_slice(bytes).map_err(|e| Error::Schema(e.to_string()))
}

pub fn write_schema_config(network: &NetworkSpec) -> Result<Vec<u8>> {
    to_canonical_json(network)
}
