//! Test cases shipped with the crate.
//!
//! IEEE 5/30/57/118 come from the standard published data; the 33-bus
//! feeder is the Baran & Wu distribution system in single-phase form; the
//! two-bus case is the slack + PQ system used for surface plots.

use crate::error::{Error, Result};
use crate::network::NetworkCase;

const BUNDLED: &[(&str, &str)] = &[
    ("two_bus", include_str!("../cases/two_bus.json")),
    ("ieee5", include_str!("../cases/ieee5.json")),
    ("ieee30", include_str!("../cases/ieee30.json")),
    ("ieee33", include_str!("../cases/ieee33.json")),
    ("ieee57", include_str!("../cases/ieee57.json")),
    ("ieee118", include_str!("../cases/ieee118.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(name, _)| *name)
}

pub fn json(name: &str) -> Option<&'static str> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

pub fn load(name: &str) -> Result<NetworkCase> {
    let text =
        json(name).ok_or_else(|| Error::InvalidInput(format!("no bundled case named {name:?}")))?;
    NetworkCase::from_json_str(text)
}
