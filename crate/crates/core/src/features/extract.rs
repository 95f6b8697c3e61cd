use std::collections::HashSet;

use super::FeatureVector;
use crate::flow::{FlowSession, PacketRecord, TCP_ACK, TCP_SYN};

const MICROS: f64 = 1e6;

#[derive(Default)]
struct DirStats {
    packets: u64,
    bytes: u64,
    payload: u64,
    ttl_sum: u64,
    window_sum: u64,
    tcp_packets: u64,
    data_packets: u64,
    retransmits: u64,
}

impl DirStats {
    fn collect(packets: &[PacketRecord]) -> Self {
        let mut s = DirStats::default();
        let mut seen: HashSet<(u32, u32)> = HashSet::new();
        for p in packets {
            s.packets += 1;
            s.bytes += u64::from(p.ip_len);
            s.payload += u64::from(p.payload_len);
            s.ttl_sum += u64::from(p.ttl);
            if p.is_tcp() {
                s.tcp_packets += 1;
                s.window_sum += u64::from(p.tcp_window);
                if p.payload_len > 0 {
                    s.data_packets += 1;
                    if !seen.insert((p.tcp_seq, p.payload_len)) {
                        s.retransmits += 1;
                    }
                }
            }
        }
        s
    }
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        (num / den, true)
    } else {
        (0.0, false)
    }
}

fn secs(us: i64) -> f64 {
    us as f64 / MICROS
}

/// Handshake timings in microseconds: (SYN→SYN+ACK, SYN→ACK, ACK→data).
fn handshake(ordered: &[&PacketRecord]) -> Option<(i64, i64, Option<i64>)> {
    let syn_idx = ordered
        .iter()
        .position(|p| p.is_tcp() && p.has_flag(TCP_SYN) && !p.has_flag(TCP_ACK))?;
    let syn = ordered[syn_idx];
    let opener = syn.src();

    let synack_idx = syn_idx
        + 1
        + ordered[syn_idx + 1..].iter().position(|p| {
            p.has_flag(TCP_SYN) && p.has_flag(TCP_ACK) && p.src() != opener
        })?;
    let synack = ordered[synack_idx];

    let ack_idx = synack_idx
        + 1
        + ordered[synack_idx + 1..]
            .iter()
            .position(|p| p.has_flag(TCP_ACK) && !p.has_flag(TCP_SYN) && p.src() == opener)?;
    let ack = ordered[ack_idx];

    let data = ordered[ack_idx..]
        .iter()
        .find(|p| p.payload_len > 0)
        .map(|p| p.ts.0 - ack.ts.0);

    Some((synack.ts.0 - syn.ts.0, ack.ts.0 - syn.ts.0, data))
}

/// Computes the 28-feature vector of one session.
///
/// Inapplicable features (no packets in a direction, zero duration, non-TCP
/// timings) are 0 with their presence bit cleared.
pub fn extract(flow: &FlowSession) -> FeatureVector {
    let fwd = DirStats::collect(&flow.fwd_packets);
    let bwd = DirStats::collect(&flow.bwd_packets);
    let ordered = flow.packets_in_order();

    let (first, last) = match (ordered.first(), ordered.last()) {
        (Some(a), Some(b)) => (a.ts.0, b.ts.0),
        _ => (0, 0),
    };
    let duration_us = last - first;
    let duration = secs(duration_us);
    let n = fwd.packets + bwd.packets;

    let mut v = FeatureVector::default();
    v.set(1, duration, true);

    let (ttl_f, has_f) = ratio(fwd.ttl_sum as f64, fwd.packets as f64);
    let (ttl_b, has_b) = ratio(bwd.ttl_sum as f64, bwd.packets as f64);
    v.set(2, ttl_f, has_f);
    v.set(3, ttl_b, has_b);

    v.set(4, n as f64, true);
    v.set(5, fwd.packets as f64, true);
    v.set(6, bwd.packets as f64, true);
    v.set(7, (fwd.bytes + bwd.bytes) as f64, true);
    v.set(8, fwd.bytes as f64, true);
    v.set(9, bwd.bytes as f64, true);

    let (iat, has_iat) = ratio(duration, n.saturating_sub(1) as f64);
    v.set(10, iat, has_iat);

    let (size_f, p) = ratio(fwd.bytes as f64, fwd.packets as f64);
    v.set(11, size_f, p);
    let (size_b, p) = ratio(bwd.bytes as f64, bwd.packets as f64);
    v.set(12, size_b, p);

    v.set(13, (fwd.payload + bwd.payload) as f64, true);
    v.set(14, fwd.payload as f64, true);
    v.set(15, bwd.payload as f64, true);

    let (loss, p) = ratio(
        (fwd.retransmits + bwd.retransmits) as f64,
        (fwd.data_packets + bwd.data_packets) as f64,
    );
    v.set(16, loss, p);
    let (loss, p) = ratio(fwd.retransmits as f64, fwd.data_packets as f64);
    v.set(17, loss, p);
    let (loss, p) = ratio(bwd.retransmits as f64, bwd.data_packets as f64);
    v.set(18, loss, p);

    let (win, p) = ratio(fwd.window_sum as f64, fwd.tcp_packets as f64);
    v.set(19, win, p);
    let (win, p) = ratio(bwd.window_sum as f64, bwd.tcp_packets as f64);
    v.set(20, win, p);

    match handshake(&ordered) {
        Some((rtt, syn_ack, data)) => {
            v.set(21, secs(rtt), true);
            v.set(22, secs(syn_ack), true);
            v.set(23, data.map_or(0.0, secs), data.is_some());
        }
        None => {
            v.set(21, 0.0, false);
            v.set(22, 0.0, false);
            v.set(23, 0.0, false);
        }
    }

    for (idx, num) in [
        (24, n as f64),
        (25, fwd.packets as f64),
        (26, bwd.packets as f64),
        (27, fwd.bytes as f64),
        (28, bwd.bytes as f64),
    ] {
        let (rate, p) = ratio(num, duration);
        v.set(idx, rate, p);
    }
    v
}
