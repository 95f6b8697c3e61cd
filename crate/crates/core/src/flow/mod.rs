//! Packet records and bidirectional flow sessions.
//!
//! Packets are grouped by a canonical 5-tuple so that both directions of a
//! conversation land in the same [`FlowSession`]. The endpoint that sent the
//! first observed packet is the initiator; its packets form the forward list.

mod assemble;
mod filter;
pub mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use assemble::{assemble, FlowAssembler, DEFAULT_IDLE_TIMEOUT_SECS};
pub use filter::{filter_packets, FilterPolicy, FilterReport};

pub const PROTO_ICMP: u16 = 1;
pub const PROTO_TCP: u16 = 6;
pub const PROTO_UDP: u16 = 17;
pub const PROTO_SCTP: u16 = 132;
/// Non-IP records (ARP) carry their EtherType in the protocol slot.
pub const PROTO_ARP: u16 = 0x0806;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;
pub const TCP_URG: u8 = 0x20;
pub const TCP_ECE: u8 = 0x40;
pub const TCP_CWR: u8 = 0x80;

/// Microseconds since the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * 1e6).round() as i64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn micros(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:06}", abs / 1_000_000, abs % 1_000_000)
    }
}

pub fn protocol_name(proto: u16) -> String {
    match proto {
        PROTO_ICMP => "ICMP".into(),
        PROTO_TCP => "TCP".into(),
        PROTO_UDP => "UDP".into(),
        PROTO_SCTP => "SCTP".into(),
        PROTO_ARP => "ARP".into(),
        other => format!("proto{other}"),
    }
}

pub fn is_portless(proto: u16) -> bool {
    !matches!(proto, PROTO_TCP | PROTO_UDP | PROTO_SCTP)
}

/// One observed packet, already decoded and de-tunneled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts: Timestamp,
    pub src_ip: String,
    pub dst_ip: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub proto: u16,
    pub ip_len: u32,
    pub payload_len: u32,
    pub ttl: u8,
    pub tcp_flags: u8,
    pub tcp_window: u32,
    pub tcp_seq: u32,
    pub tcp_ack: u32,
}

impl PacketRecord {
    pub fn src(&self) -> Endpoint {
        Endpoint::new(&self.src_ip, self.src_port)
    }

    pub fn dst(&self) -> Endpoint {
        Endpoint::new(&self.dst_ip, self.dst_port)
    }

    pub fn key(&self) -> FlowKey {
        FlowKey::new(self.src(), self.dst(), self.proto)
    }

    pub fn is_tcp(&self) -> bool {
        self.proto == PROTO_TCP
    }

    pub fn has_flag(&self, flag: u8) -> bool {
        self.tcp_flags & flag != 0
    }

    /// The same packet seen travelling the other way.
    pub fn reversed(&self) -> PacketRecord {
        PacketRecord {
            src_ip: self.dst_ip.clone(),
            dst_ip: self.src_ip.clone(),
            src_port: self.dst_port,
            dst_port: self.src_port,
            ..self.clone()
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.ts.0 < 0 {
            return Err(format!("negative timestamp {}", self.ts));
        }
        if self.payload_len > self.ip_len {
            return Err(format!(
                "payload_len {} exceeds ip_len {}",
                self.payload_len, self.ip_len
            ));
        }
        if is_portless(self.proto) && (self.src_port != 0 || self.dst_port != 0) {
            return Err(format!(
                "{} record carries ports {}/{}",
                protocol_name(self.proto),
                self.src_port,
                self.dst_port
            ));
        }
        if !self.is_tcp()
            && (self.tcp_flags != 0 || self.tcp_window != 0 || self.tcp_seq != 0 || self.tcp_ack != 0)
        {
            return Err("tcp fields set on a non-TCP record".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub ip: String,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: &str, port: u16) -> Self {
        Endpoint {
            ip: ip.to_owned(),
            port,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.ip, self.port)
    }
}

/// Direction-free 5-tuple: the smaller endpoint always comes first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub lo: Endpoint,
    pub hi: Endpoint,
    pub proto: u16,
}

impl FlowKey {
    pub fn new(a: Endpoint, b: Endpoint, proto: u16) -> Self {
        if a <= b {
            FlowKey { lo: a, hi: b, proto }
        } else {
            FlowKey { lo: b, hi: a, proto }
        }
    }

    pub fn involves_ip(&self, ip: &str) -> bool {
        self.lo.ip == ip || self.hi.ip == ip
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <-> {} ({})", self.lo, self.hi, protocol_name(self.proto))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloseReason {
    Fin,
    Rst,
    IdleTimeout,
    StreamEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowState {
    Open,
    Closed(CloseReason),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowSession {
    /// Creation ordinal within one assembly run.
    pub id: u64,
    pub key: FlowKey,
    pub initiator: Endpoint,
    pub fwd_packets: Vec<PacketRecord>,
    pub bwd_packets: Vec<PacketRecord>,
    pub state: FlowState,
    pub first_ts: Timestamp,
    pub last_ts: Timestamp,
}

impl FlowSession {
    pub fn packet_count(&self) -> usize {
        self.fwd_packets.len() + self.bwd_packets.len()
    }

    pub fn is_closed(&self) -> bool {
        matches!(self.state, FlowState::Closed(_))
    }

    pub fn responder(&self) -> &Endpoint {
        if self.key.lo == self.initiator {
            &self.key.hi
        } else {
            &self.key.lo
        }
    }

    /// All packets merged in timestamp order; ties keep forward before backward.
    pub fn packets_in_order(&self) -> Vec<&PacketRecord> {
        let mut all: Vec<(&PacketRecord, bool)> = self
            .fwd_packets
            .iter()
            .map(|p| (p, true))
            .chain(self.bwd_packets.iter().map(|p| (p, false)))
            .collect();
        all.sort_by_key(|(p, fwd)| (p.ts, !*fwd));
        all.into_iter().map(|(p, _)| p).collect()
    }

    /// The same session with the roles of initiator and responder exchanged.
    pub fn swapped(&self) -> FlowSession {
        FlowSession {
            initiator: self.responder().clone(),
            fwd_packets: self.bwd_packets.clone(),
            bwd_packets: self.fwd_packets.clone(),
            ..self.clone()
        }
    }
}
