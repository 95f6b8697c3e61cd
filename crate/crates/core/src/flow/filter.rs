use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{protocol_name, PacketRecord, Timestamp, PROTO_ARP};
use crate::error::{Error, Result};

/// Which records to discard before assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterPolicy {
    pub drop_protocols: BTreeSet<u16>,
    /// Largest tolerated backwards step in timestamps, in microseconds.
    pub ts_tolerance_us: i64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            drop_protocols: BTreeSet::from([PROTO_ARP]),
            ts_tolerance_us: 1_000,
        }
    }
}

impl FilterPolicy {
    pub fn keep_all() -> Self {
        FilterPolicy {
            drop_protocols: BTreeSet::new(),
            ..Default::default()
        }
    }

    pub fn dropping(mut self, proto: u16) -> Self {
        self.drop_protocols.insert(proto);
        self
    }

    pub fn keeping(mut self, proto: u16) -> Self {
        self.drop_protocols.remove(&proto);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    /// Dropped record count per protocol number.
    pub dropped: BTreeMap<u16, usize>,
}

impl FilterReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    pub fn dropped_by_name(&self) -> BTreeMap<String, usize> {
        self.dropped
            .iter()
            .map(|(p, n)| (protocol_name(*p), *n))
            .collect()
    }
}

/// Removes records whose protocol the policy drops, preserving order.
///
/// Every record is validated, including dropped ones; the error carries the
/// zero-based index of the first offending record.
pub fn filter_packets<I>(stream: I, policy: &FilterPolicy) -> Result<(Vec<PacketRecord>, FilterReport)>
where
    I: IntoIterator<Item = PacketRecord>,
{
    let mut kept = Vec::new();
    let mut report = FilterReport::default();
    let mut high_water: Option<Timestamp> = None;

    for (index, pkt) in stream.into_iter().enumerate() {
        pkt.validate()
            .map_err(|reason| Error::MalformedRecord { index, reason })?;
        if let Some(hw) = high_water {
            if hw.0 - pkt.ts.0 > policy.ts_tolerance_us {
                return Err(Error::MalformedRecord {
                    index,
                    reason: format!("timestamp {} regresses past {}", pkt.ts, hw),
                });
            }
        }
        high_water = Some(high_water.map_or(pkt.ts, |hw| hw.max(pkt.ts)));

        if policy.drop_protocols.contains(&pkt.proto) {
            *report.dropped.entry(pkt.proto).or_default() += 1;
        } else {
            kept.push(pkt);
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{PROTO_ICMP, PROTO_TCP};

    fn rec(ts: i64, proto: u16) -> PacketRecord {
        let portless = crate::flow::is_portless(proto);
        PacketRecord {
            ts: Timestamp(ts),
            src_ip: "10.0.0.1".into(),
            dst_ip: "10.0.0.2".into(),
            src_port: if portless { 0 } else { 1000 },
            dst_port: if portless { 0 } else { 80 },
            proto,
            ip_len: 60,
            payload_len: 0,
            ttl: 64,
            tcp_flags: 0,
            tcp_window: 0,
            tcp_seq: 0,
            tcp_ack: 0,
        }
    }

    #[test]
    fn drops_arp_by_default() {
        let mut stream: Vec<PacketRecord> = (0..10).map(|i| rec(i * 10, PROTO_TCP)).collect();
        stream.insert(3, rec(25, PROTO_ARP));
        stream.push(rec(200, PROTO_ARP));
        let (kept, report) = filter_packets(stream, &FilterPolicy::default()).unwrap();
        assert_eq!(kept.len(), 10);
        assert!(kept.windows(2).all(|w| w[0].ts <= w[1].ts));
        assert_eq!(report.dropped_by_name(), BTreeMap::from([("ARP".to_string(), 2)]));
    }

    #[test]
    fn empty_stream() {
        let (kept, report) = filter_packets(Vec::new(), &FilterPolicy::default()).unwrap();
        assert!(kept.is_empty());
        assert_eq!(report.dropped_total(), 0);
    }

    #[test]
    fn icmp_kept_unless_dropped() {
        let stream: Vec<PacketRecord> = (0..5).map(|i| rec(i, PROTO_ICMP)).collect();
        let (kept, _) = filter_packets(stream.clone(), &FilterPolicy::default()).unwrap();
        assert_eq!(kept.len(), 5);
        let (kept, r) = filter_packets(stream, &FilterPolicy::default().dropping(PROTO_ICMP)).unwrap();
        assert_eq!(kept.len(), 0);
        assert_eq!(r.dropped[&PROTO_ICMP], 5);
    }

    #[test]
    fn regression_tolerance() {
        let ok = vec![rec(10_000, PROTO_TCP), rec(9_000, PROTO_TCP)];
        assert!(filter_packets(ok, &FilterPolicy::default()).is_ok());
        let bad = vec![rec(10_000, PROTO_TCP), rec(12_000, PROTO_TCP), rec(10_999, PROTO_TCP)];
        match filter_packets(bad, &FilterPolicy::default()) {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_lengths_rejected() {
        let mut r = rec(0, PROTO_TCP);
        r.payload_len = 100;
        match filter_packets(vec![rec(0, PROTO_TCP), r], &FilterPolicy::default()) {
            Err(Error::MalformedRecord { index, .. }) => assert_eq!(index, 1),
            other => panic!("{other:?}"),
        }
    }
}
