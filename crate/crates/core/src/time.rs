use alloc::string::String;
use core::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// UTC instant with one-second resolution, as seconds since the Unix epoch.
/// Serialized as an ISO-8601 / RFC 3339 string; integers are accepted on
/// input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const fn from_secs(secs: i64) -> Self {
        Self(secs)
    }

    pub const fn secs(self) -> i64 {
        self.0
    }

    pub const fn plus_days(self, days: i64) -> Self {
        Self(self.0 + days * SECONDS_PER_DAY)
    }

    pub const fn minus_days(self, days: i64) -> Self {
        Self(self.0 - days * SECONDS_PER_DAY)
    }

    pub const fn plus_secs(self, secs: i64) -> Self {
        Self(self.0 + secs)
    }

    /// Start of the epoch-aligned bucket of `width_secs` containing `self`.
    pub const fn align_down(self, width_secs: i64) -> Self {
        Self(self.0.div_euclid(width_secs) * width_secs)
    }

    /// Parses RFC 3339 (`2024-05-01T12:00:00Z`, any offset). Sub-second
    /// parts are truncated.
    pub fn parse_rfc3339(s: &str) -> Result<Self> {
        DateTime::parse_from_rfc3339(s)
            .map(|t| Self(t.timestamp()))
            .map_err(|e| Error::InvalidRecord(alloc::format!("bad timestamp {s:?}: {e}")))
    }

    pub fn to_rfc3339(self) -> String {
        match DateTime::<Utc>::from_timestamp(self.0, 0) {
            Some(t) => t.to_rfc3339_opts(SecondsFormat::Secs, true),
            None => alloc::format!("{}", self.0),
        }
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rfc3339())
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_rfc3339())
    }
}

struct TimestampVisitor;

impl Visitor<'_> for TimestampVisitor {
    type Value = Timestamp;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("an RFC 3339 timestamp or epoch seconds")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> core::result::Result<Timestamp, E> {
        Timestamp::parse_rfc3339(v).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> core::result::Result<Timestamp, E> {
        Ok(Timestamp(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> core::result::Result<Timestamp, E> {
        i64::try_from(v).map(Timestamp).map_err(E::custom)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        d.deserialize_any(TimestampVisitor)
    }
}
