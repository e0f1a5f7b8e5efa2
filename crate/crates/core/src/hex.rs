//! `0x`-prefixed hexadecimal (de)serialization for 32-bit words.

use serde::{de, Deserialize, Deserializer, Serializer};

pub fn format(v: u32) -> String {
    format!("0x{v:08x}")
}

pub fn parse(s: &str) -> Result<u32, String> {
    let digits = s
        .strip_prefix("0x")
        .ok_or_else(|| format!("expected 0x-prefixed hex, got {s:?}"))?;
    u32::from_str_radix(digits, 16).map_err(|e| format!("bad hex {s:?}: {e}"))
}

pub fn serialize<S: Serializer>(v: &u32, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&format(*v))
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u32, D::Error> {
    let s = String::deserialize(d)?;
    parse(&s).map_err(de::Error::custom)
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<u32>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_str(&super::format(*v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u32>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| super::parse(&s).map_err(de::Error::custom))
            .transpose()
    }
}
