//! Domain vocabulary: network addresses, gossip timestamps, address records,
//! autonomous-system categories and the routability policy that gates relay.

mod routability;
mod spam;

pub use routability::{is_routable, CidrBlock, PolicyError, RoutabilityPolicy};
pub use spam::{make_spam_batch, make_spam_batch_with, SpamBatchError};

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::net::{Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Default port carried by generated addresses.
pub const DEFAULT_PORT: u16 = 8333;

/// Address family of a [`NetAddress`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AddrFamily {
    V4,
    V6,
}

/// An IPv4/IPv6 endpoint. Equality is bytewise and the derived order is
/// total over (family, value, port), so logs and report tables sort stably.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetAddress {
    family: AddrFamily,
    value: u128,
    port: u16,
}

impl NetAddress {
    pub fn v4(value: u32, port: u16) -> Self {
        NetAddress {
            family: AddrFamily::V4,
            value: value as u128,
            port,
        }
    }

    pub fn v6(value: u128, port: u16) -> Self {
        NetAddress {
            family: AddrFamily::V6,
            value,
            port,
        }
    }

    pub fn family(&self) -> AddrFamily {
        self.family
    }

    /// Raw address bits; fits in 32 bits for V4 addresses.
    pub fn value(&self) -> u128 {
        self.value
    }

    pub fn port(&self) -> u16 {
        self.port
    }
}

impl fmt::Display for NetAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            AddrFamily::V4 => write!(f, "{}:{}", Ipv4Addr::from(self.value as u32), self.port),
            AddrFamily::V6 => write!(f, "[{}]:{}", Ipv6Addr::from(self.value), self.port),
        }
    }
}

/// Error parsing a `NetAddress`, an [`AddrRecord`] or an AS category token.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid {what}: {input:?}")]
pub struct ParseError {
    pub what: &'static str,
    pub input: String,
}

impl ParseError {
    fn new(what: &'static str, input: &str) -> Self {
        ParseError {
            what,
            input: input.to_string(),
        }
    }
}

impl FromStr for NetAddress {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseError::new("address", s);
        if let Some(rest) = s.strip_prefix('[') {
            let (ip, port) = rest.split_once("]:").ok_or_else(err)?;
            let ip: Ipv6Addr = ip.parse().map_err(|_| err())?;
            let port: u16 = port.parse().map_err(|_| err())?;
            Ok(NetAddress::v6(ip.into(), port))
        } else {
            let (ip, port) = s.rsplit_once(':').ok_or_else(err)?;
            let ip: Ipv4Addr = ip.parse().map_err(|_| err())?;
            let port: u16 = port.parse().map_err(|_| err())?;
            Ok(NetAddress::v4(ip.into(), port))
        }
    }
}

impl Serialize for NetAddress {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NetAddress {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Seconds since the scenario epoch. Gossip payloads carry this coarse
/// clock; the engine itself runs on milliseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub fn secs(&self) -> u64 {
        self.0
    }

    pub fn saturating_add(&self, secs: u64) -> Timestamp {
        Timestamp(self.0.saturating_add(secs))
    }

    /// Signed difference `self - other` in seconds.
    pub fn delta_secs(&self, other: Timestamp) -> i64 {
        self.0 as i64 - other.0 as i64
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The gossip payload unit: an announced address plus its timestamp.
/// A batch of these sharing one timestamp is what marks a spam wave victim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AddrRecord {
    pub address: NetAddress,
    pub timestamp: Timestamp,
}

impl AddrRecord {
    pub fn new(address: NetAddress, timestamp: Timestamp) -> Self {
        AddrRecord { address, timestamp }
    }
}

impl fmt::Display for AddrRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.address, self.timestamp)
    }
}

impl FromStr for AddrRecord {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, ts) = s
            .rsplit_once('@')
            .ok_or_else(|| ParseError::new("addr record", s))?;
        Ok(AddrRecord {
            address: addr.parse()?,
            timestamp: Timestamp(ts.parse().map_err(|_| ParseError::new("addr record", s))?),
        })
    }
}

/// Category of the autonomous system hosting a peer.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub enum AsCategory {
    #[serde(rename = "isp")]
    Isp,
    #[serde(rename = "cloud")]
    CloudProvider,
    #[serde(rename = "both")]
    Both,
    #[default]
    #[serde(rename = "uncategorized")]
    Uncategorized,
}

impl fmt::Display for AsCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AsCategory::Isp => "isp",
            AsCategory::CloudProvider => "cloud",
            AsCategory::Both => "both",
            AsCategory::Uncategorized => "uncategorized",
        };
        f.write_str(s)
    }
}

impl FromStr for AsCategory {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "isp" => Ok(AsCategory::Isp),
            "cloud" => Ok(AsCategory::CloudProvider),
            "both" => Ok(AsCategory::Both),
            "uncategorized" => Ok(AsCategory::Uncategorized),
            _ => Err(ParseError::new("as category", s)),
        }
    }
}

/// Autonomous-system identity and category of a peer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AsInfo {
    pub asn: u32,
    pub category: AsCategory,
}

impl AsInfo {
    pub fn new(asn: u32, category: AsCategory) -> Self {
        AsInfo { asn, category }
    }

    pub fn uncategorized(asn: u32) -> Self {
        AsInfo {
            asn,
            category: AsCategory::Uncategorized,
        }
    }
}

/// Error loading an `asn,category` mapping table.
#[derive(Debug, Error)]
pub enum AsMapError {
    #[error("failed to read AS mapping: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed AS mapping row {line}: {row:?}")]
    MalformedRow { line: usize, row: String },
}

/// ASN to category mapping loaded from a CSV table.
#[derive(Debug, Clone, Default)]
pub struct AsCategoryMap {
    map: BTreeMap<u32, AsCategory>,
}

impl AsCategoryMap {
    pub fn from_entries(entries: impl IntoIterator<Item = (u32, AsCategory)>) -> Self {
        AsCategoryMap {
            map: entries.into_iter().collect(),
        }
    }

    /// Parses `asn,category` rows. A header row is allowed; blank lines and
    /// `#` comments are skipped. Malformed rows fail naming the line.
    pub fn from_reader(reader: impl BufRead) -> Result<Self, AsMapError> {
        let mut map = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let row = line.trim();
            if row.is_empty() || row.starts_with('#') {
                continue;
            }
            if idx == 0 && row.eq_ignore_ascii_case("asn,category") {
                continue;
            }
            let malformed = || AsMapError::MalformedRow {
                line: idx + 1,
                row: row.to_string(),
            };
            let (asn, category) = row.split_once(',').ok_or_else(malformed)?;
            let asn: u32 = asn.trim().parse().map_err(|_| malformed())?;
            let category: AsCategory = category.trim().parse().map_err(|_| malformed())?;
            map.insert(asn, category);
        }
        Ok(AsCategoryMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AsMapError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Looks up the category for an ASN; unknown ASNs map to `Uncategorized`.
pub fn categorize_as(asn: u32, map: &AsCategoryMap) -> AsInfo {
    AsInfo {
        asn,
        category: map.map.get(&asn).copied().unwrap_or_default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn address_order_is_family_value_port() {
        let a = NetAddress::v4(0x01020304, 8333);
        let b = NetAddress::v4(0x01020304, 8334);
        let c = NetAddress::v4(0x01020305, 1);
        let d = NetAddress::v6(1, 1);
        assert!(a < b && b < c && c < d);
    }

    #[test]
    fn address_roundtrips_through_display() {
        for addr in [
            NetAddress::v4(u32::from(Ipv4Addr::new(8, 8, 8, 8)), 8333),
            NetAddress::v6(
                u128::from(Ipv6Addr::new(0x2600, 0, 0, 0, 0, 0, 0, 7)),
                18444,
            ),
        ] {
            let parsed: NetAddress = addr.to_string().parse().unwrap();
            assert_eq!(parsed, addr);
        }
    }

    #[test]
    fn record_roundtrips_through_display() {
        let rec = AddrRecord::new(NetAddress::v4(0x08080808, 8333), Timestamp(86940));
        let parsed: AddrRecord = rec.to_string().parse().unwrap();
        assert_eq!(parsed, rec);
    }

    #[test]
    fn categorize_known_absent_and_both() {
        let map = AsCategoryMap::from_entries([
            (13335, AsCategory::CloudProvider),
            (3320, AsCategory::Isp),
            (701, AsCategory::Both),
        ]);
        assert_eq!(
            categorize_as(13335, &map).category,
            AsCategory::CloudProvider
        );
        assert_eq!(categorize_as(701, &map).category, AsCategory::Both);
        assert_eq!(
            categorize_as(65000, &map).category,
            AsCategory::Uncategorized
        );
    }

    #[test]
    fn as_map_parses_csv_with_header() {
        let input = "asn,category\n13335,cloud\n3320,isp\n# comment\n701,both\n";
        let map = AsCategoryMap::from_reader(Cursor::new(input)).unwrap();
        assert_eq!(map.len(), 3);
        assert_eq!(categorize_as(3320, &map).category, AsCategory::Isp);
    }

    #[test]
    fn as_map_rejects_malformed_row_naming_line() {
        let input = "13335,cloud\nbogus-row\n";
        let err = AsCategoryMap::from_reader(Cursor::new(input)).unwrap_err();
        match err {
            AsMapError::MalformedRow { line, row } => {
                assert_eq!(line, 2);
                assert_eq!(row, "bogus-row");
            }
            other => panic!("unexpected error: {other}"),
        }
    }
}
