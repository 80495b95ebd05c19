//! Canonical byte encoding and hashing.
//!
//! Every value that is hashed or signed goes through [`encode_canonical`], a
//! strict JSON subset:
//!
//! - UTF-8, no whitespace between tokens
//! - object keys sorted ascending by code point, unique
//! - integers are signed 64-bit, base-10, no leading zeros
//! - strings escape only `"`, `\` and U+0000..U+001F (as `\u00xx`, lowercase hex)
//! - byte-strings are emitted as lowercase hex text
//! - no floating point
//!
//! Decoding is strict: input is accepted only if re-encoding the parsed value
//! reproduces the input byte-for-byte, so each logical value has exactly one
//! accepted byte representation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::de::{self, DeserializeOwned, Deserializer, Visitor};
use serde::ser::{SerializeMap, SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Errors raised by the canonical codec.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    /// The value cannot be represented (floats, out-of-range integers,
    /// non-string map keys). This is a programming error, not bad input.
    #[error("unsupported value: {0}")]
    UnsupportedValue(String),
    #[error("invalid json: {0}")]
    InvalidJson(String),
    /// Parsed fine but is not the canonical byte form of its value.
    #[error("input is not in canonical form")]
    NonCanonical,
    #[error("schema mismatch: {0}")]
    Schema(String),
}

/// A value in the canonical data model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalValue {
    Null,
    Bool(bool),
    Int(i64),
    Text(String),
    /// Emitted as lowercase hex text. Decoding yields [`CanonicalValue::Text`].
    Bytes(Vec<u8>),
    List(Vec<CanonicalValue>),
    Map(BTreeMap<String, CanonicalValue>),
}

impl CanonicalValue {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            CanonicalValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            CanonicalValue::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[CanonicalValue]> {
        match self {
            CanonicalValue::List(l) => Some(l),
            _ => None,
        }
    }

    /// Rewrites every `Bytes` node into the `Text` node it encodes as.
    pub fn normalized(&self) -> CanonicalValue {
        match self {
            CanonicalValue::Bytes(b) => CanonicalValue::Text(hex::encode(b)),
            CanonicalValue::List(items) => {
                CanonicalValue::List(items.iter().map(CanonicalValue::normalized).collect())
            }
            CanonicalValue::Map(m) => CanonicalValue::Map(
                m.iter()
                    .map(|(k, v)| (k.clone(), v.normalized()))
                    .collect(),
            ),
            other => other.clone(),
        }
    }

    fn from_json(value: serde_json::Value) -> Result<Self, CodecError> {
        Ok(match value {
            serde_json::Value::Null => CanonicalValue::Null,
            serde_json::Value::Bool(b) => CanonicalValue::Bool(b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => CanonicalValue::Int(i),
                None => return Err(CodecError::UnsupportedValue(format!("number {n}"))),
            },
            serde_json::Value::String(s) => CanonicalValue::Text(s),
            serde_json::Value::Array(items) => CanonicalValue::List(
                items
                    .into_iter()
                    .map(CanonicalValue::from_json)
                    .collect::<Result<_, _>>()?,
            ),
            serde_json::Value::Object(map) => {
                let mut out = BTreeMap::new();
                for (k, v) in map {
                    out.insert(k, CanonicalValue::from_json(v)?);
                }
                CanonicalValue::Map(out)
            }
        })
    }

    fn into_json(self) -> serde_json::Value {
        match self {
            CanonicalValue::Null => serde_json::Value::Null,
            CanonicalValue::Bool(b) => serde_json::Value::Bool(b),
            CanonicalValue::Int(i) => serde_json::Value::from(i),
            CanonicalValue::Text(s) => serde_json::Value::String(s),
            CanonicalValue::Bytes(b) => serde_json::Value::String(hex::encode(b)),
            CanonicalValue::List(items) => {
                serde_json::Value::Array(items.into_iter().map(Self::into_json).collect())
            }
            CanonicalValue::Map(m) => serde_json::Value::Object(
                m.into_iter().map(|(k, v)| (k, v.into_json())).collect(),
            ),
        }
    }
}

impl From<&str> for CanonicalValue {
    fn from(s: &str) -> Self {
        CanonicalValue::Text(s.to_owned())
    }
}

impl From<String> for CanonicalValue {
    fn from(s: String) -> Self {
        CanonicalValue::Text(s)
    }
}

impl From<i64> for CanonicalValue {
    fn from(i: i64) -> Self {
        CanonicalValue::Int(i)
    }
}

impl Serialize for CanonicalValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            CanonicalValue::Null => serializer.serialize_unit(),
            CanonicalValue::Bool(b) => serializer.serialize_bool(*b),
            CanonicalValue::Int(i) => serializer.serialize_i64(*i),
            CanonicalValue::Text(s) => serializer.serialize_str(s),
            CanonicalValue::Bytes(b) => serializer.serialize_str(&hex::encode(b)),
            CanonicalValue::List(items) => {
                let mut seq = serializer.serialize_seq(Some(items.len()))?;
                for item in items {
                    seq.serialize_element(item)?;
                }
                seq.end()
            }
            CanonicalValue::Map(m) => {
                let mut map = serializer.serialize_map(Some(m.len()))?;
                for (k, v) in m {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for CanonicalValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        CanonicalValue::from_json(json).map_err(de::Error::custom)
    }
}

/// Serializes `v` into its canonical byte form.
pub fn encode_canonical(v: &CanonicalValue) -> Vec<u8> {
    let mut out = Vec::with_capacity(64);
    write_value(v, &mut out);
    out
}

fn write_value(v: &CanonicalValue, out: &mut Vec<u8>) {
    match v {
        CanonicalValue::Null => out.extend_from_slice(b"null"),
        CanonicalValue::Bool(true) => out.extend_from_slice(b"true"),
        CanonicalValue::Bool(false) => out.extend_from_slice(b"false"),
        CanonicalValue::Int(i) => out.extend_from_slice(i.to_string().as_bytes()),
        CanonicalValue::Text(s) => write_str(s, out),
        CanonicalValue::Bytes(b) => write_str(&hex::encode(b), out),
        CanonicalValue::List(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        CanonicalValue::Map(m) => {
            // BTreeMap<String, _> iterates in byte order, which for UTF-8 is
            // code point order.
            out.push(b'{');
            for (i, (k, v)) in m.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_str(k, out);
                out.push(b':');
                write_value(v, out);
            }
            out.push(b'}');
        }
    }
}

fn write_str(s: &str, out: &mut Vec<u8>) {
    out.push(b'"');
    for ch in s.chars() {
        match ch {
            '"' => out.extend_from_slice(b"\\\""),
            '\\' => out.extend_from_slice(b"\\\\"),
            c if (c as u32) < 0x20 => {
                out.extend_from_slice(format!("\\u{:04x}", c as u32).as_bytes());
            }
            c => {
                let mut buf = [0u8; 4];
                out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
            }
        }
    }
    out.push(b'"');
}

/// Parses canonical bytes back into a value, rejecting any non-canonical form.
pub fn decode_canonical(bytes: &[u8]) -> Result<CanonicalValue, CodecError> {
    let json: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| CodecError::InvalidJson(e.to_string()))?;
    let value = CanonicalValue::from_json(json)?;
    if encode_canonical(&value) != bytes {
        return Err(CodecError::NonCanonical);
    }
    Ok(value)
}

/// Converts any serializable value into the canonical data model.
pub fn to_canonical_value<T: Serialize + ?Sized>(v: &T) -> Result<CanonicalValue, CodecError> {
    let json = serde_json::to_value(v).map_err(|e| CodecError::UnsupportedValue(e.to_string()))?;
    CanonicalValue::from_json(json)
}

/// Canonical bytes of any serializable value.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>, CodecError> {
    Ok(encode_canonical(&to_canonical_value(v)?))
}

pub fn from_canonical_value<T: DeserializeOwned>(v: CanonicalValue) -> Result<T, CodecError> {
    serde_json::from_value(v.into_json()).map_err(|e| CodecError::Schema(e.to_string()))
}

/// Strict typed decode: the bytes must be canonical and must round-trip
/// through `T` unchanged (no unknown fields, no alternative spellings).
pub fn from_canonical_bytes<T: Serialize + DeserializeOwned>(bytes: &[u8]) -> Result<T, CodecError> {
    let value = decode_canonical(bytes)?;
    let typed: T = from_canonical_value(value)?;
    if to_canonical_bytes(&typed)? != bytes {
        return Err(CodecError::NonCanonical);
    }
    Ok(typed)
}

/// A SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest32(pub [u8; 32]);

impl Digest32 {
    pub const ZERO: Digest32 = Digest32([0u8; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest32({})", self.to_hex())
    }
}

impl FromStr for Digest32 {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Digest32(parse_lower_hex::<32>(s)?))
    }
}

impl Serialize for Digest32 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest32 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        deserializer.deserialize_str(LowerHexVisitor::<32>).map(Digest32)
    }
}

/// Parses exactly `N` bytes of lowercase hex.
pub fn parse_lower_hex<const N: usize>(s: &str) -> Result<[u8; N], CodecError> {
    if s.len() != N * 2 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(CodecError::Schema(format!(
            "expected {} lowercase hex characters",
            N * 2
        )));
    }
    let mut out = [0u8; N];
    hex::decode_to_slice(s, &mut out).map_err(|e| CodecError::Schema(e.to_string()))?;
    Ok(out)
}

struct LowerHexVisitor<const N: usize>;

impl<'de, const N: usize> Visitor<'de> for LowerHexVisitor<N> {
    type Value = [u8; N];

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} lowercase hex characters", N * 2)
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
        parse_lower_hex::<N>(v).map_err(E::custom)
    }
}

/// Serde adapter for fixed 64-byte values (signatures) as lowercase hex.
pub mod hex64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[u8; 64], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<[u8; 64], D::Error> {
        deserializer.deserialize_str(LowerHexVisitor::<64>)
    }
}

/// Serde adapter for variable-length byte strings as lowercase hex.
pub mod hex_bytes {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[u8], serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s.len() % 2 != 0 || !s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
            return Err(de::Error::custom("expected lowercase hex"));
        }
        hex::decode(&s).map_err(de::Error::custom)
    }
}

pub fn hash_sha256(data: &[u8]) -> Digest32 {
    Digest32(Sha256::digest(data).into())
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_concat(parts: &[&[u8]]) -> Digest32 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p);
    }
    Digest32(hasher.finalize().into())
}

const VERHOEFF_D: [[u8; 10]; 10] = [
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    [1, 2, 3, 4, 0, 6, 7, 8, 9, 5],
    [2, 3, 4, 0, 1, 7, 8, 9, 5, 6],
    [3, 4, 0, 1, 2, 8, 9, 5, 6, 7],
    [4, 0, 1, 2, 3, 9, 5, 6, 7, 8],
    [5, 9, 8, 7, 6, 0, 4, 3, 2, 1],
    [6, 5, 9, 8, 7, 1, 0, 4, 3, 2],
    [7, 6, 5, 9, 8, 2, 1, 0, 4, 3],
    [8, 7, 6, 5, 9, 3, 2, 1, 0, 4],
    [9, 8, 7, 6, 5, 4, 3, 2, 1, 0],
];

const VERHOEFF_P: [[u8; 10]; 8] = [
    [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
    [1, 5, 7, 6, 2, 8, 3, 0, 9, 4],
    [5, 8, 0, 3, 7, 9, 6, 1, 4, 2],
    [8, 9, 1, 6, 0, 4, 3, 5, 2, 7],
    [9, 4, 5, 3, 1, 2, 6, 8, 7, 0],
    [4, 2, 8, 6, 5, 7, 3, 9, 0, 1],
    [2, 7, 9, 3, 8, 0, 6, 4, 1, 5],
    [7, 0, 4, 6, 9, 1, 3, 2, 5, 8],
];

const VERHOEFF_INV: [u8; 10] = [0, 4, 3, 2, 1, 5, 6, 7, 8, 9];

/// True iff `digits` is non-empty ASCII decimal and carries a valid Verhoeff
/// check digit in its last position.
pub fn verhoeff_validate(digits: &str) -> bool {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return false;
    }
    let c = digits
        .bytes()
        .rev()
        .enumerate()
        .fold(0u8, |c, (i, b)| VERHOEFF_D[c as usize][VERHOEFF_P[i % 8][(b - b'0') as usize] as usize]);
    c == 0
}

/// The check digit that makes `digits ++ check` Verhoeff-valid.
pub fn verhoeff_check_digit(digits: &str) -> Option<u8> {
    if !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let c = digits.bytes().rev().enumerate().fold(0u8, |c, (i, b)| {
        VERHOEFF_D[c as usize][VERHOEFF_P[(i + 1) % 8][(b - b'0') as usize] as usize]
    });
    Some(VERHOEFF_INV[c as usize])
}
