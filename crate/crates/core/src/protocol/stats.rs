use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::features::{Label, LabeledSample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsRow {
    pub origin: String,
    pub attack_type: String,
    pub label: Label,
    pub flows: u64,
}

/// Flow counts per (origin, attack type).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: Vec<StatsRow>,
    pub benign: u64,
    pub malicious: u64,
}

impl DatasetStats {
    pub fn total(&self) -> u64 {
        self.benign + self.malicious
    }

    pub fn count(&self, origin: &str, attack_type: &str) -> u64 {
        self.rows
            .iter()
            .filter(|r| r.origin == origin && r.attack_type == attack_type)
            .map(|r| r.flows)
            .sum()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:<24} {:<10} {:>10}", "origin", "attack_type", "label", "flows");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<10} {:<24} {:<10} {:>10}",
                r.origin,
                r.attack_type,
                format!("{:?}", r.label),
                r.flows
            );
        }
        let _ = writeln!(s, "benign {}  malicious {}  total {}", self.benign, self.malicious, self.total());
        s
    }
}

pub fn dataset_stats(samples: &[LabeledSample]) -> DatasetStats {
    let mut counts: BTreeMap<(String, String, Label), u64> = BTreeMap::new();
    let mut stats = DatasetStats::default();
    for s in samples {
        *counts
            .entry((s.origin.clone(), s.attack_type.clone(), s.label))
            .or_default() += 1;
        match s.label {
            Label::Benign => stats.benign += 1,
            Label::Malicious => stats.malicious += 1,
        }
    }
    stats.rows = counts
        .into_iter()
        .map(|((origin, attack_type, label), flows)| StatsRow {
            origin,
            attack_type,
            label,
            flows,
        })
        .collect();
    stats
}
