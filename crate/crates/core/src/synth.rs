//! Seeded synthetic data: random packet traces for property checks, and a
//! two-population Gaussian generator whose class boundary rotates between
//! the offline and incoming populations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::features::{FeatureVector, Label, LabeledSample, BENIGN_TAG, FEATURE_COUNT};
use crate::flow::{
    PacketRecord, Timestamp, PROTO_ICMP, PROTO_TCP, PROTO_UDP, TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST,
    TCP_SYN,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub packets: usize,
    pub conversations: usize,
    /// Mean gap between packets, seconds.
    pub mean_gap: f64,
    /// Probability that a gap is stretched past `long_gap`.
    pub long_gap_prob: f64,
    pub long_gap: f64,
    pub start_ts: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            packets: 40,
            conversations: 4,
            mean_gap: 0.5,
            long_gap_prob: 0.05,
            long_gap: 100.0,
            start_ts: 1_600_000_000.0,
        }
    }
}

const HOSTS: [&str; 5] = ["10.0.0.1", "10.0.0.2", "10.0.0.7", "192.168.1.20", "172.16.5.4"];

/// A time-ordered random trace over a handful of conversations, mixing TCP
/// (with handshakes, FIN/RST and repeated sequence numbers), UDP and ICMP.
pub fn random_trace(seed: u64, cfg: &TraceConfig) -> Vec<PacketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let convs: Vec<(usize, usize, u16, u16, u16)> = (0..cfg.conversations.max(1))
        .map(|_| {
            let a = rng.random_range(0..HOSTS.len());
            let mut b = rng.random_range(0..HOSTS.len());
            if b == a {
                b = (a + 1) % HOSTS.len();
            }
            let proto = match rng.random_range(0..10) {
                0..=5 => PROTO_TCP,
                6..=8 => PROTO_UDP,
                _ => PROTO_ICMP,
            };
            let (sp, dp) = if proto == PROTO_ICMP {
                (0, 0)
            } else {
                (rng.random_range(1024..1100), *[53u16, 80, 443].get(rng.random_range(0..3)).unwrap())
            };
            (a, b, sp, dp, proto)
        })
        .collect();

    let gap = Exp::new(1.0 / cfg.mean_gap.max(1e-6)).expect("positive rate");
    let mut t = Timestamp::from_secs_f64(cfg.start_ts).0;
    let mut out = Vec::with_capacity(cfg.packets);
    for _ in 0..cfg.packets {
        let mut g: f64 = gap.sample(&mut rng);
        if rng.random_bool(cfg.long_gap_prob.clamp(0.0, 1.0)) {
            g += cfg.long_gap;
        }
        t += (g * 1e6).round() as i64;
        let (a, b, sp, dp, proto) = convs[rng.random_range(0..convs.len())];
        let forward = rng.random_bool(0.6);
        let (src, dst, s_port, d_port) = if forward {
            (a, b, sp, dp)
        } else {
            (b, a, dp, sp)
        };
        let payload: u32 = if rng.random_bool(0.4) { 0 } else { rng.random_range(1..1400) };
        let header = if proto == PROTO_TCP { 40 } else { 28 };
        let tcp = proto == PROTO_TCP;
        let flags = if tcp {
            match rng.random_range(0..20) {
                0..=1 => TCP_SYN,
                2..=3 => TCP_SYN | TCP_ACK,
                4 => TCP_FIN | TCP_ACK,
                5 if rng.random_bool(0.3) => TCP_RST,
                6..=9 => TCP_PSH | TCP_ACK,
                _ => TCP_ACK,
            }
        } else {
            0
        };
        out.push(PacketRecord {
            ts: Timestamp(t),
            src_ip: HOSTS[src].to_owned(),
            dst_ip: HOSTS[dst].to_owned(),
            src_port: s_port,
            dst_port: d_port,
            proto,
            ip_len: header + payload,
            payload_len: payload,
            ttl: rng.random_range(1..=255),
            tcp_flags: flags,
            tcp_window: if tcp { rng.random_range(0..65_536) } else { 0 },
            tcp_seq: if tcp { rng.random_range(0..6) * 1000 } else { 0 },
            tcp_ack: if tcp { rng.random_range(0..1_000_000) } else { 0 },
        });
    }
    out
}

/// Two labeled populations with Gaussian class clusters. Offline classes
/// separate along feature 0; the incoming separating direction is rotated
/// by `rotation_deg` toward feature 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftPairConfig {
    pub offline: usize,
    pub incoming: usize,
    /// Distance between class means, in noise standard deviations.
    pub separation: f64,
    pub rotation_deg: f64,
    pub malicious_fraction: f64,
    /// Added to every coordinate so raw features are positive.
    pub offset: f64,
    pub seed: u64,
}

impl Default for DriftPairConfig {
    fn default() -> Self {
        DriftPairConfig {
            offline: 10_000,
            incoming: 10_000,
            separation: 6.0,
            rotation_deg: 80.0,
            malicious_fraction: 0.5,
            offset: 10.0,
            seed: 42,
        }
    }
}

impl DriftPairConfig {
    /// Unit direction from benign toward malicious mean.
    pub fn direction(&self, incoming: bool) -> [f64; FEATURE_COUNT] {
        let mut u = [0.0; FEATURE_COUNT];
        if incoming {
            let th = self.rotation_deg.to_radians();
            u[0] = th.cos();
            u[1] = th.sin();
        } else {
            u[0] = 1.0;
        }
        u
    }

    /// The generator's optimal rule: which side of the mid-plane `x` lies on.
    pub fn bayes_predict(&self, incoming: bool, x: &[f64]) -> u8 {
        let u = self.direction(incoming);
        let proj: f64 = x.iter().zip(&u).map(|(v, d)| (v - self.offset) * d).sum();
        u8::from(proj > 0.0)
    }
}

pub const SYNTH_ATTACK: &str = "Synthetic";

fn population(
    rng: &mut ChaCha8Rng,
    n: usize,
    cfg: &DriftPairConfig,
    incoming: bool,
    origin: &str,
) -> Vec<LabeledSample> {
    let u = cfg.direction(incoming);
    let half = cfg.separation / 2.0;
    (0..n)
        .map(|_| {
            let malicious = rng.random_bool(cfg.malicious_fraction.clamp(0.0, 1.0));
            let sign = if malicious { 1.0 } else { -1.0 };
            let mut values = [0.0; FEATURE_COUNT];
            for (v, d) in values.iter_mut().zip(&u) {
                let noise: f64 = StandardNormal.sample(rng);
                *v = cfg.offset + sign * half * d + noise;
            }
            let (label, tag) = if malicious {
                (Label::Malicious, SYNTH_ATTACK)
            } else {
                (Label::Benign, BENIGN_TAG)
            };
            LabeledSample::new(FeatureVector::from_values(values), label, tag, origin)
                .expect("consistent tag")
        })
        .collect()
}

/// `(offline, incoming)` populations, tagged `BS2` and `BS1`.
pub fn drift_pair(cfg: &DriftPairConfig) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offline = population(&mut rng, cfg.offline, cfg, false, "BS2");
    let incoming = population(&mut rng, cfg.incoming, cfg, true, "BS1");
    (offline, incoming)
}
