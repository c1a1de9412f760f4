//! Exclusion-list routability: an address is relayable unless it falls in a
//! configured CIDR block. The default block set excludes 1.30 % of the IPv4
//! space, so a uniform 5,000-address batch carries ~4,935 routable entries.

use std::net::{Ipv4Addr, Ipv6Addr};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use super::{AddrFamily, NetAddress};

/// A CIDR block such as `10.0.0.0/8` or `2001:db8::/32`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CidrBlock {
    pub family: AddrFamily,
    pub network: u128,
    pub prefix_len: u8,
}

impl CidrBlock {
    pub fn v4(network: Ipv4Addr, prefix_len: u8) -> Self {
        CidrBlock {
            family: AddrFamily::V4,
            network: u32::from(network) as u128,
            prefix_len,
        }
    }

    pub fn v6(network: Ipv6Addr, prefix_len: u8) -> Self {
        CidrBlock {
            family: AddrFamily::V6,
            network: network.into(),
            prefix_len,
        }
    }

    fn bits(&self) -> u8 {
        match self.family {
            AddrFamily::V4 => 32,
            AddrFamily::V6 => 128,
        }
    }

    /// First and last address covered by the block.
    fn range(&self) -> (u128, u128) {
        let host_bits = (self.bits() - self.prefix_len) as u32;
        let size = if host_bits == 128 {
            u128::MAX
        } else {
            (1u128 << host_bits) - 1
        };
        let start = self.network & !size;
        (start, start | size)
    }
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("failed to read routability policy: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid CIDR block on line {line}: {block:?}")]
    InvalidBlock { line: usize, block: String },
}

impl FromStr for CidrBlock {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || PolicyError::InvalidBlock {
            line: 0,
            block: s.to_string(),
        };
        let (ip, prefix) = s.split_once('/').ok_or_else(invalid)?;
        let prefix_len: u8 = prefix.trim().parse().map_err(|_| invalid())?;
        if let Ok(v4) = ip.trim().parse::<Ipv4Addr>() {
            if prefix_len > 32 {
                return Err(invalid());
            }
            Ok(CidrBlock::v4(v4, prefix_len))
        } else if let Ok(v6) = ip.trim().parse::<Ipv6Addr>() {
            if prefix_len > 128 {
                return Err(invalid());
            }
            Ok(CidrBlock::v6(v6, prefix_len))
        } else {
            Err(invalid())
        }
    }
}

/// Set of excluded blocks, held as disjoint sorted ranges per family.
#[derive(Debug, Clone)]
pub struct RoutabilityPolicy {
    v4: Vec<(u128, u128)>,
    v6: Vec<(u128, u128)>,
}

/// Default excluded v4 blocks: loopback, RFC1918 private ranges, link-local,
/// carrier-grade NAT, benchmarking and documentation nets, and 0.0.0.0/8.
/// Together these cover 55,837,440 addresses, 1.3000 % of the v4 space.
const DEFAULT_V4_BLOCKS: &[&str] = &[
    "0.0.0.0/8",
    "10.0.0.0/8",
    "100.64.0.0/10",
    "127.0.0.0/8",
    "169.254.0.0/16",
    "172.16.0.0/12",
    "192.0.2.0/24",
    "192.168.0.0/16",
    "198.18.0.0/15",
    "198.51.100.0/24",
    "203.0.113.0/24",
];

const DEFAULT_V6_BLOCKS: &[&str] = &[
    "::/128",
    "::1/128",
    "2001:db8::/32",
    "fc00::/7",
    "fe80::/10",
];

impl Default for RoutabilityPolicy {
    fn default() -> Self {
        let blocks = DEFAULT_V4_BLOCKS
            .iter()
            .chain(DEFAULT_V6_BLOCKS)
            .map(|s| s.parse().expect("default blocks parse"))
            .collect::<Vec<_>>();
        RoutabilityPolicy::from_blocks(&blocks)
    }
}

impl RoutabilityPolicy {
    /// Builds a policy from blocks, normalizing overlaps into disjoint ranges.
    pub fn from_blocks(blocks: &[CidrBlock]) -> Self {
        let mut v4: Vec<(u128, u128)> = Vec::new();
        let mut v6: Vec<(u128, u128)> = Vec::new();
        for block in blocks {
            match block.family {
                AddrFamily::V4 => v4.push(block.range()),
                AddrFamily::V6 => v6.push(block.range()),
            }
        }
        RoutabilityPolicy {
            v4: normalize(v4),
            v6: normalize(v6),
        }
    }

    /// Parses one CIDR per line; blank lines and `#` comments are skipped.
    pub fn from_lines(lines: &str) -> Result<Self, PolicyError> {
        let mut blocks = Vec::new();
        for (idx, line) in lines.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let block: CidrBlock = line.parse().map_err(|e| match e {
                PolicyError::InvalidBlock { block, .. } => PolicyError::InvalidBlock {
                    line: idx + 1,
                    block,
                },
                other => other,
            })?;
            blocks.push(block);
        }
        Ok(RoutabilityPolicy::from_blocks(&blocks))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        Self::from_lines(&std::fs::read_to_string(path)?)
    }

    /// An empty policy that treats every address as routable.
    pub fn allow_all() -> Self {
        RoutabilityPolicy {
            v4: Vec::new(),
            v6: Vec::new(),
        }
    }

    /// True unless the address falls in an excluded block.
    pub fn is_routable(&self, addr: &NetAddress) -> bool {
        let ranges = match addr.family() {
            AddrFamily::V4 => &self.v4,
            AddrFamily::V6 => &self.v6,
        };
        let value = addr.value();
        let idx = ranges.partition_point(|&(start, _)| start <= value);
        idx == 0 || ranges[idx - 1].1 < value
    }

    /// Fraction of the 32-bit v4 space covered by excluded blocks, computed
    /// from the normalized range set.
    pub fn excluded_v4_fraction(&self) -> f64 {
        let covered: u128 = self.v4.iter().map(|&(s, e)| e - s + 1).sum();
        covered as f64 / 2f64.powi(32)
    }
}

fn normalize(mut ranges: Vec<(u128, u128)>) -> Vec<(u128, u128)> {
    ranges.sort_unstable();
    let mut out: Vec<(u128, u128)> = Vec::with_capacity(ranges.len());
    for (start, end) in ranges {
        match out.last_mut() {
            Some(last) if start <= last.1.saturating_add(1) => last.1 = last.1.max(end),
            _ => out.push((start, end)),
        }
    }
    out
}

/// Shorthand for [`RoutabilityPolicy::is_routable`].
pub fn is_routable(addr: &NetAddress, policy: &RoutabilityPolicy) -> bool {
    policy.is_routable(addr)
}
