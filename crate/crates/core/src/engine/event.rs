//! Append-only event logs and their on-disk line format.
//!
//! Logs are newline-delimited with a fixed column order, stable across runs:
//!
//! ```text
//! <time_ms>,<seq>,conn_open,<conn>,<local>,<remote>,<remote_addr>,<dir>,<remote_asn>
//! <time_ms>,<seq>,conn_close,<conn>,<local>,<remote>,<remote_addr>,<dir>,<initiator>
//! <time_ms>,<seq>,addr_msg,<conn>,<sender>,<sender_addr>,<receiver>,<count>,<records>
//! ```
//!
//! `dir` is `in` or `out` from the log owner's perspective, `records` is a
//! `;`-joined list of `address@timestamp` entries, and lines starting with
//! `#` are comments (the first line names the owner and label).

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::model::{AddrRecord, NetAddress};

use super::{ConnId, Direction, PeerId, SimTime};

/// One observable event: a connection opening or closing, or an addr
/// message arriving.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    ConnOpen {
        conn: ConnId,
        local: PeerId,
        remote: PeerId,
        remote_addr: NetAddress,
        direction: Direction,
        remote_asn: u32,
    },
    ConnClose {
        conn: ConnId,
        local: PeerId,
        remote: PeerId,
        remote_addr: NetAddress,
        direction: Direction,
        initiator: PeerId,
    },
    AddrMsg {
        conn: ConnId,
        sender: PeerId,
        sender_addr: NetAddress,
        receiver: PeerId,
        records: Vec<AddrRecord>,
    },
}

/// What a log sink records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFilter {
    /// Connection events and addr messages (monitor logs).
    All,
    /// Connection events only (sentinel and probe-tester logs).
    ConnOnly,
}

/// An append-only, time-ordered record of what one peer observed.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub owner: Option<PeerId>,
    pub label: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("failed to read event log: {0}")]
    Io(#[from] io::Error),
    #[error("malformed event log line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl EventLog {
    pub fn new(owner: PeerId, label: impl Into<String>) -> Self {
        EventLog {
            owner: Some(owner),
            label: label.into(),
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, event: Event) {
        debug_assert!(self
            .events
            .last()
            .is_none_or(|last| (last.time, last.seq) <= (event.time, event.seq)));
        self.events.push(event);
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Serializes the log in the documented line format.
    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(
            w,
            "# addrnet-log v1 owner={} label={}",
            self.owner.map_or(-1i64, |p| p.0 as i64),
            self.label
        )?;
        let mut buf = String::new();
        for event in &self.events {
            buf.clear();
            format_event(event, &mut buf);
            writeln!(w, "{buf}")?;
        }
        Ok(())
    }

    /// Parses a log previously written with [`EventLog::write_to`].
    pub fn read_from(reader: impl BufRead) -> Result<Self, LogError> {
        let mut log = EventLog::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(header) = trimmed.strip_prefix('#') {
                parse_header(header, &mut log);
                continue;
            }
            let event = parse_event(trimmed, line_no)?;
            log.events.push(event);
        }
        Ok(log)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, LogError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> io::Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()
    }

    /// Applies open/close events mechanically and returns the set of
    /// connections still open at the end, keyed by connection id. Used to
    /// check that a recorded run can be reproduced from its log alone.
    pub fn replay_connections(&self) -> std::collections::BTreeMap<u64, ReplayedConn> {
        let mut open = std::collections::BTreeMap::new();
        for event in &self.events {
            match &event.kind {
                EventKind::ConnOpen {
                    conn,
                    local,
                    remote,
                    remote_addr,
                    direction,
                    ..
                } => {
                    open.insert(
                        conn.0,
                        ReplayedConn {
                            local: *local,
                            remote: *remote,
                            remote_addr: *remote_addr,
                            direction: *direction,
                        },
                    );
                }
                EventKind::ConnClose { conn, .. } => {
                    open.remove(&conn.0);
                }
                EventKind::AddrMsg { .. } => {}
            }
        }
        open
    }
}

/// A connection as reconstructed from a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplayedConn {
    pub local: PeerId,
    pub remote: PeerId,
    pub remote_addr: NetAddress,
    pub direction: Direction,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Inbound => f.write_str("in"),
            Direction::Outbound => f.write_str("out"),
        }
    }
}

fn format_event(event: &Event, out: &mut String) {
    use fmt::Write;
    match &event.kind {
        EventKind::ConnOpen {
            conn,
            local,
            remote,
            remote_addr,
            direction,
            remote_asn,
        } => {
            write!(
                out,
                "{},{},conn_open,{},{},{},{},{},{}",
                event.time.0,
                event.seq,
                conn.0,
                local.0,
                remote.0,
                remote_addr,
                direction,
                remote_asn
            )
            .unwrap();
        }
        EventKind::ConnClose {
            conn,
            local,
            remote,
            remote_addr,
            direction,
            initiator,
        } => {
            write!(
                out,
                "{},{},conn_close,{},{},{},{},{},{}",
                event.time.0,
                event.seq,
                conn.0,
                local.0,
                remote.0,
                remote_addr,
                direction,
                initiator.0
            )
            .unwrap();
        }
        EventKind::AddrMsg {
            conn,
            sender,
            sender_addr,
            receiver,
            records,
        } => {
            write!(
                out,
                "{},{},addr_msg,{},{},{},{},{},",
                event.time.0,
                event.seq,
                conn.0,
                sender.0,
                sender_addr,
                receiver.0,
                records.len()
            )
            .unwrap();
            for (i, record) in records.iter().enumerate() {
                if i > 0 {
                    out.push(';');
                }
                write!(out, "{record}").unwrap();
            }
        }
    }
}

fn parse_header(header: &str, log: &mut EventLog) {
    for token in header.split_whitespace() {
        if let Some(owner) = token.strip_prefix("owner=") {
            if let Ok(id) = owner.parse::<i64>() {
                log.owner = (id >= 0).then_some(PeerId(id as u32));
            }
        } else if let Some(label) = token.strip_prefix("label=") {
            log.label = label.to_string();
        }
    }
}

fn parse_event(line: &str, line_no: usize) -> Result<Event, LogError> {
    let malformed = |reason: &str| LogError::Malformed {
        line: line_no,
        reason: reason.to_string(),
    };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() < 3 {
        return Err(malformed("expected at least 3 fields"));
    }
    let time = SimTime(fields[0].parse().map_err(|_| malformed("bad time field"))?);
    let seq: u64 = fields[1].parse().map_err(|_| malformed("bad seq field"))?;
    let parse_peer = |s: &str, what: &str| -> Result<PeerId, LogError> {
        s.parse::<u32>()
            .map(PeerId)
            .map_err(|_| malformed(&format!("bad {what} field")))
    };
    let parse_addr = |s: &str| -> Result<NetAddress, LogError> {
        s.parse().map_err(|_| malformed("bad address field"))
    };
    let kind = match fields[2] {
        "conn_open" | "conn_close" => {
            if fields.len() != 9 {
                return Err(malformed("expected 9 fields for connection event"));
            }
            let conn = ConnId(fields[3].parse().map_err(|_| malformed("bad conn id"))?);
            let local = parse_peer(fields[4], "local")?;
            let remote = parse_peer(fields[5], "remote")?;
            let remote_addr = parse_addr(fields[6])?;
            let direction = match fields[7] {
                "in" => Direction::Inbound,
                "out" => Direction::Outbound,
                _ => return Err(malformed("bad direction field")),
            };
            if fields[2] == "conn_open" {
                EventKind::ConnOpen {
                    conn,
                    local,
                    remote,
                    remote_addr,
                    direction,
                    remote_asn: fields[8].parse().map_err(|_| malformed("bad asn"))?,
                }
            } else {
                EventKind::ConnClose {
                    conn,
                    local,
                    remote,
                    remote_addr,
                    direction,
                    initiator: parse_peer(fields[8], "initiator")?,
                }
            }
        }
        "addr_msg" => {
            if fields.len() != 9 {
                return Err(malformed("expected 9 fields for addr message"));
            }
            let conn = ConnId(fields[3].parse().map_err(|_| malformed("bad conn id"))?);
            let sender = parse_peer(fields[4], "sender")?;
            let sender_addr = parse_addr(fields[5])?;
            let receiver = parse_peer(fields[6], "receiver")?;
            let count: usize = fields[7]
                .parse()
                .map_err(|_| malformed("bad record count"))?;
            let mut records = Vec::with_capacity(count);
            if !fields[8].is_empty() {
                for token in fields[8].split(';') {
                    records.push(token.parse().map_err(|_| malformed("bad addr record"))?);
                }
            }
            if records.len() != count {
                return Err(malformed("record count mismatch"));
            }
            EventKind::AddrMsg {
                conn,
                sender,
                sender_addr,
                receiver,
                records,
            }
        }
        other => return Err(malformed(&format!("unknown event kind {other:?}"))),
    };
    Ok(Event { time, seq, kind })
}
