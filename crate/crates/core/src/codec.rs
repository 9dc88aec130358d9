//! Frame codec: a 4-byte big-endian payload length followed by the
//! canonical JSON text of a value-map (sorted keys, no whitespace).

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::value::{find_non_finite, Value, ValueMap};

pub const PREFIX_LEN: usize = 4;

/// 16 MiB.
pub const DEFAULT_MAX_FRAME: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("non-encodable value at `{path}`: numbers must be finite")]
    NonFinite { path: String },
    #[error("incomplete frame: need {needed} bytes, have {available}")]
    Incomplete { needed: usize, available: usize },
    #[error("frame of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: usize, max: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// Canonical JSON text of `message`, without the length prefix.
pub fn encode_payload(message: &ValueMap) -> Result<Vec<u8>, CodecError> {
    if let Some(path) = find_non_finite(message) {
        return Err(CodecError::NonFinite { path });
    }
    serde_json::to_vec(message).map_err(|e| CodecError::Malformed(e.to_string()))
}

pub fn encode_frame(message: &ValueMap) -> Result<Vec<u8>, CodecError> {
    encode_frame_limited(message, DEFAULT_MAX_FRAME)
}

pub fn encode_frame_limited(message: &ValueMap, max: usize) -> Result<Vec<u8>, CodecError> {
    let payload = encode_payload(message)?;
    if payload.len() > max || payload.len() > u32::MAX as usize {
        return Err(CodecError::Oversize {
            len: payload.len(),
            max,
        });
    }
    let mut out = Vec::with_capacity(PREFIX_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Validates a length prefix against `max` and returns the payload length.
pub fn payload_len(prefix: [u8; PREFIX_LEN], max: usize) -> Result<usize, CodecError> {
    let len = u32::from_be_bytes(prefix) as usize;
    if len > max {
        return Err(CodecError::Oversize { len, max });
    }
    Ok(len)
}

/// Parses a payload. The top level must be a JSON object.
pub fn decode_payload(payload: &[u8]) -> Result<ValueMap, CodecError> {
    let value: Value =
        serde_json::from_slice(payload).map_err(|e| CodecError::Malformed(e.to_string()))?;
    value
        .into_map()
        .ok_or_else(|| CodecError::Malformed("top-level value is not an object".into()))
}

/// Decodes one frame from the front of `buf` under the default limit.
/// Returns the message and the number of bytes consumed.
pub fn decode_frame(buf: &[u8]) -> Result<(ValueMap, usize), CodecError> {
    decode_frame_limited(buf, DEFAULT_MAX_FRAME)
}

pub fn decode_frame_limited(buf: &[u8], max: usize) -> Result<(ValueMap, usize), CodecError> {
    if buf.len() < PREFIX_LEN {
        return Err(CodecError::Incomplete {
            needed: PREFIX_LEN,
            available: buf.len(),
        });
    }
    let len = payload_len([buf[0], buf[1], buf[2], buf[3]], max)?;
    let end = PREFIX_LEN + len;
    if buf.len() < end {
        return Err(CodecError::Incomplete {
            needed: end,
            available: buf.len(),
        });
    }
    Ok((decode_payload(&buf[PREFIX_LEN..end])?, end))
}

/// Parses a JSON document (for config files) into a value-map.
pub fn parse_text(text: &str) -> Result<ValueMap, CodecError> {
    decode_payload(text.as_bytes())
}

/// Canonical JSON text of `message`.
pub fn to_text(message: &ValueMap) -> Result<String, CodecError> {
    let bytes = encode_payload(message)?;
    // serde_json only emits UTF-8
    String::from_utf8(bytes).map_err(|e| CodecError::Malformed(e.to_string()))
}
