use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{extract, Label, LabeledSample, BENIGN_TAG};
use crate::flow::FlowSession;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelError(pub String);

impl std::fmt::Display for LabelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ground-truth assignment for a flow: binary label plus attack-type tag.
pub trait Labeler {
    fn label(&self, flow: &FlowSession) -> Result<(Label, String), LabelError>;
}

impl<F> Labeler for F
where
    F: Fn(&FlowSession) -> Result<(Label, String), LabelError>,
{
    fn label(&self, flow: &FlowSession) -> Result<(Label, String), LabelError> {
        self(flow)
    }
}

/// Flows touching a listed attacker address are malicious with that
/// address's attack type. Other flows are benign, or a labeling failure
/// when `strict` is set and neither endpoint is in `benign_hosts`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IpLabeler {
    pub attackers: BTreeMap<String, String>,
    pub benign_hosts: Vec<String>,
    pub strict: bool,
}

impl IpLabeler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attacker(mut self, ip: impl Into<String>, attack_type: impl Into<String>) -> Self {
        self.attackers.insert(ip.into(), attack_type.into());
        self
    }
}

impl Labeler for IpLabeler {
    fn label(&self, flow: &FlowSession) -> Result<(Label, String), LabelError> {
        // lo before hi keeps the choice deterministic if both ends are listed.
        for ip in [&flow.key.lo.ip, &flow.key.hi.ip] {
            if let Some(kind) = self.attackers.get(ip) {
                return Ok((Label::Malicious, kind.clone()));
            }
        }
        if self.strict
            && !self
                .benign_hosts
                .iter()
                .any(|h| flow.key.involves_ip(h))
        {
            return Err(LabelError(format!("no ground truth for {}", flow.key)));
        }
        Ok((Label::Benign, BENIGN_TAG.to_owned()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchExtraction {
    pub samples: Vec<LabeledSample>,
    pub dropped: usize,
    pub drop_reasons: Vec<String>,
}

/// Extracts and labels every flow, preserving order. Flows the labeler
/// cannot place are dropped and counted.
pub fn extract_batch<L: Labeler + ?Sized>(
    flows: &[FlowSession],
    labeler: &L,
    origin: &str,
) -> BatchExtraction {
    let mut out = BatchExtraction::default();
    for flow in flows {
        let labeled = labeler.label(flow).and_then(|(label, tag)| {
            LabeledSample::new(extract(flow), label, tag, origin)
                .map_err(|e| LabelError(e.to_string()))
        });
        match labeled {
            Ok(s) => out.samples.push(s),
            Err(e) => {
                out.dropped += 1;
                out.drop_reasons.push(e.0);
            }
        }
    }
    out
}
