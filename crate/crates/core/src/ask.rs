//! One prompt, parsed, with bounded re-asks on unparseable output.

use crate::gateway::{CompletionRequest, Gateway, GatewayError};
use crate::prompting::ParseFailure;

/// Extra asks after the first unparseable response.
pub const DEFAULT_PARSE_RETRIES: u32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Asked<T> {
    Parsed { value: T, raw: String, asks: u32 },
    Invalid { raws: Vec<String>, reason: String },
}

impl<T> Asked<T> {
    pub(crate) fn ok(self) -> Option<T> {
        match self {
            Asked::Parsed { value, .. } => Some(value),
            Asked::Invalid { .. } => None,
        }
    }
}

/// Sends `request` up to `1 + parse_retries` times (same tag, same prompt) until
/// `parse` accepts the text. Gateway errors end the exchange immediately.
pub(crate) fn ask<T>(
    gateway: &Gateway,
    request: &CompletionRequest,
    parse_retries: u32,
    parse: impl Fn(&str) -> Result<T, ParseFailure>,
) -> Result<Asked<T>, GatewayError> {
    let mut raws = Vec::new();
    let mut reason = String::new();
    for asks in 1..=parse_retries + 1 {
        let resp = gateway.complete(request)?;
        match parse(&resp.text) {
            Ok(value) => return Ok(Asked::Parsed { value, raw: resp.text, asks }),
            Err(e) => {
                tracing::debug!(tag = %request.request_tag, asks, reason = %e.reason, "unparseable response");
                reason = e.reason;
                raws.push(resp.text);
            }
        }
    }
    tracing::warn!(tag = %request.request_tag, "response still unparseable after re-asks");
    Ok(Asked::Invalid { raws, reason })
}
