//! Internally tagged enums accept stray keys next to a unit variant's tag;
//! these helpers close that gap.

use serde_json::Value;

/// Rejects `{"type": tag, ...}` objects that carry keys besides the tag when
/// `tag` names a unit variant.
pub(crate) fn check_unit_tags<E: serde::de::Error>(v: &Value, unit_tags: &[&str]) -> Result<(), E> {
    let Some(obj) = v.as_object() else { return Ok(()) };
    let Some(tag) = obj.get("type").and_then(Value::as_str) else { return Ok(()) };
    if unit_tags.contains(&tag) {
        if let Some(extra) = obj.keys().find(|k| *k != "type") {
            return Err(E::custom(format!("unknown field `{extra}` for `{tag}`")));
        }
    }
    Ok(())
}

/// Trait impls for a type deriving serde with `remote = "Self"`.
macro_rules! strict_tagged {
    ($ty:ty, [$($unit:literal),* $(,)?]) => {
        impl serde::Serialize for $ty {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                <$ty>::serialize(self, s)
            }
        }

        impl<'de> serde::Deserialize<'de> for $ty {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let v = <serde_json::Value as serde::Deserialize>::deserialize(d)?;
                $crate::strict::check_unit_tags::<D::Error>(&v, &[$($unit),*])?;
                <$ty>::deserialize(v).map_err(<D::Error as serde::de::Error>::custom)
            }
        }
    };
}

pub(crate) use strict_tagged;
