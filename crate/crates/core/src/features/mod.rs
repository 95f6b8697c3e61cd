//! The 28 protocol-agnostic statistical flow features.
//!
//! | idx | meaning                                   | unit |
//! |-----|-------------------------------------------|------|
//! | 01  | flow duration                             | s    |
//! | 02/03 | mean TTL fwd/bwd                        |      |
//! | 04–06 | packet count total/fwd/bwd              |      |
//! | 07–09 | ip_len byte totals total/fwd/bwd        | B    |
//! | 10  | mean inter-arrival time                   | s    |
//! | 11/12 | mean packet size fwd/bwd                | B    |
//! | 13–15 | payload byte totals total/fwd/bwd       | B    |
//! | 16–18 | retransmission ratio total/fwd/bwd      |      |
//! | 19/20 | mean TCP window fwd/bwd                 |      |
//! | 21  | SYN → SYN+ACK                             | s    |
//! | 22  | SYN → handshake-completing ACK            | s    |
//! | 23  | completing ACK → first payload            | s    |
//! | 24–26 | packet rate total/fwd/bwd               | 1/s  |
//! | 27/28 | byte rate fwd/bwd                       | B/s  |
//!
//! "src"/"dst" rates are the initiator and responder directions.

mod extract;
pub mod io;
mod label;

use serde::{Deserialize, Serialize};

pub use extract::extract;
pub use label::{extract_batch, BatchExtraction, IpLabeler, LabelError, Labeler};

pub const FEATURE_COUNT: usize = 28;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "flow_duration",
    "ttl_fwd",
    "ttl_bwd",
    "packets",
    "packets_fwd",
    "packets_bwd",
    "bytes",
    "bytes_fwd",
    "bytes_bwd",
    "mean_iat",
    "mean_pkt_size_fwd",
    "mean_pkt_size_bwd",
    "payload",
    "payload_fwd",
    "payload_bwd",
    "loss_rate",
    "loss_rate_fwd",
    "loss_rate_bwd",
    "tcp_window_fwd",
    "tcp_window_bwd",
    "tcp_rtt",
    "syn_ack_time",
    "ack_data_time",
    "flow_rate",
    "flow_rate_src",
    "flow_rate_dst",
    "data_rate_src",
    "data_rate_dst",
];

/// Column name (`f01`..`f28`) of the zero-based feature index.
pub fn column_name(index: usize) -> String {
    format!("f{:02}", index + 1)
}

/// Zero-based feature index of a `fNN` column name.
pub fn column_index(name: &str) -> Option<usize> {
    let n: usize = name.strip_prefix('f')?.parse().ok()?;
    (name.len() == 3 && (1..=FEATURE_COUNT).contains(&n)).then(|| n - 1)
}

const ALL_PRESENT: u32 = (1 << FEATURE_COUNT) - 1;

/// Feature values plus a presence bitmask; bit `i` is clear when feature
/// `i` was inapplicable to the flow and its value is a placeholder 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub present: u32,
}

impl Default for FeatureVector {
    fn default() -> Self {
        FeatureVector {
            values: [0.0; FEATURE_COUNT],
            present: ALL_PRESENT,
        }
    }
}

impl FeatureVector {
    pub fn from_values(values: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector {
            values,
            present: ALL_PRESENT,
        }
    }

    /// One-based accessor matching the `fNN` column numbering.
    pub fn f(&self, n: usize) -> f64 {
        self.values[n - 1]
    }

    pub fn is_present(&self, index: usize) -> bool {
        self.present & (1 << index) != 0
    }

    pub(crate) fn set(&mut self, n: usize, value: f64, present: bool) {
        self.values[n - 1] = value;
        if present {
            self.present |= 1 << (n - 1);
        } else {
            self.present &= !(1 << (n - 1));
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Benign = 0,
    Malicious = 1,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Malicious),
            _ => None,
        }
    }

    /// Accepts `0`/`1` and the usual textual spellings.
    pub fn parse(s: &str) -> Option<Label> {
        match s.trim().to_ascii_lowercase().as_str() {
            "0" | "0.0" | "benign" | "normal" | "false" => Some(Label::Benign),
            "1" | "1.0" | "malicious" | "attack" | "true" => Some(Label::Malicious),
            _ => None,
        }
    }
}

pub const BENIGN_TAG: &str = "Benign";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub features: FeatureVector,
    pub label: Label,
    pub attack_type: String,
    pub origin: String,
}

impl LabeledSample {
    /// Builds a sample, rejecting a label that disagrees with the tag.
    pub fn new(
        features: FeatureVector,
        label: Label,
        attack_type: impl Into<String>,
        origin: impl Into<String>,
    ) -> crate::Result<Self> {
        let attack_type = attack_type.into();
        if (label == Label::Benign) != (attack_type == BENIGN_TAG) {
            return Err(crate::Error::invalid(format!(
                "label {label:?} inconsistent with attack type `{attack_type}`"
            )));
        }
        Ok(LabeledSample {
            features,
            label,
            attack_type,
            origin: origin.into(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn column_names_round_trip() {
        for i in 0..FEATURE_COUNT {
            assert_eq!(column_index(&column_name(i)), Some(i));
        }
        assert_eq!(column_index("f29"), None);
        assert_eq!(column_index("f00"), None);
        assert_eq!(column_index("f1"), None);
        assert_eq!(column_index("label"), None);
    }

    #[test]
    fn label_tag_consistency() {
        let fv = FeatureVector::default();
        assert!(LabeledSample::new(fv, Label::Benign, "Benign", "BS1").is_ok());
        assert!(LabeledSample::new(fv, Label::Malicious, "Benign", "BS1").is_err());
        assert!(LabeledSample::new(fv, Label::Benign, "UDPFlood", "BS1").is_err());
    }
}
