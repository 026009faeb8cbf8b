//! Versioned JSON documents for fitted objects.
//!
//! Every document is wrapped as `{"format": ..., "version": ..., "body": ...}`
//! so that a file written for one kind of object is rejected when loaded as
//! another.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};

pub trait Document: Sized {
    const FORMAT: &'static str;
    const VERSION: u32;
    type Body: Serialize + DeserializeOwned;

    fn to_body(&self) -> Self::Body;
    fn from_body(body: Self::Body) -> Result<Self>;
}

#[derive(Serialize, Deserialize)]
struct Envelope<B> {
    format: String,
    version: u32,
    body: B,
}

pub fn to_json<T: Document>(value: &T) -> Result<String> {
    let env = Envelope {
        format: T::FORMAT.to_string(),
        version: T::VERSION,
        body: value.to_body(),
    };
    Ok(serde_json::to_string_pretty(&env)?)
}

pub fn from_json<T: Document>(text: &str) -> Result<T> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.format != T::FORMAT {
        return Err(AliceError::Format(format!(
            "expected a `{}` document, found `{}`",
            T::FORMAT,
            env.format
        )));
    }
    if env.version != T::VERSION {
        return Err(AliceError::Format(format!(
            "unsupported `{}` version {} (expected {})",
            T::FORMAT,
            env.version,
            T::VERSION
        )));
    }
    T::from_body(serde_json::from_value(env.body)?)
}

pub fn save<T: Document>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn load<T: Document>(path: impl AsRef<Path>) -> Result<T> {
    from_json(&fs::read_to_string(path)?)
}
