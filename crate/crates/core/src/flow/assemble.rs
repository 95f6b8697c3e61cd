use std::collections::HashMap;

use super::{
    CloseReason, FlowKey, FlowSession, FlowState, PacketRecord, Timestamp, TCP_FIN,
    TCP_RST,
};

pub const DEFAULT_IDLE_TIMEOUT_SECS: f64 = 64.0;

#[derive(Debug)]
struct ActiveFlow {
    session: FlowSession,
    fin_fwd: bool,
    fin_bwd: bool,
}

impl ActiveFlow {
    fn open(id: u64, pkt: PacketRecord) -> (Self, Option<CloseReason>) {
        let key = pkt.key();
        let initiator = pkt.src();
        let ts = pkt.ts;
        let mut flow = ActiveFlow {
            session: FlowSession {
                id,
                key,
                initiator,
                fwd_packets: Vec::new(),
                bwd_packets: Vec::new(),
                state: FlowState::Open,
                first_ts: ts,
                last_ts: ts,
            },
            fin_fwd: false,
            fin_bwd: false,
        };
        let reason = flow.push(pkt);
        (flow, reason)
    }

    /// Appends the packet and reports whether it closes the session.
    fn push(&mut self, pkt: PacketRecord) -> Option<CloseReason> {
        let forward = pkt.src() == self.session.initiator;
        let tcp = pkt.is_tcp();
        let rst = tcp && pkt.has_flag(TCP_RST);
        if tcp && pkt.has_flag(TCP_FIN) {
            if forward {
                self.fin_fwd = true;
            } else {
                self.fin_bwd = true;
            }
        }

        let s = &mut self.session;
        s.first_ts = s.first_ts.min(pkt.ts);
        s.last_ts = s.last_ts.max(pkt.ts);
        let list = if forward {
            &mut s.fwd_packets
        } else {
            &mut s.bwd_packets
        };
        insert_by_ts(list, pkt);

        if rst {
            Some(CloseReason::Rst)
        } else if self.fin_fwd && self.fin_bwd {
            Some(CloseReason::Fin)
        } else {
            None
        }
    }

    fn close(mut self, reason: CloseReason) -> FlowSession {
        self.session.state = FlowState::Closed(reason);
        self.session
    }
}

/// Slightly late packets are placed after every packet with an equal or
/// earlier timestamp.
fn insert_by_ts(list: &mut Vec<PacketRecord>, pkt: PacketRecord) {
    let pos = list.partition_point(|p| p.ts <= pkt.ts);
    list.insert(pos, pkt);
}

/// Sequential flow table. Feed packets in time order with [`push`], then
/// call [`finish`] to flush whatever is still open.
///
/// [`push`]: FlowAssembler::push
/// [`finish`]: FlowAssembler::finish
#[derive(Debug)]
pub struct FlowAssembler {
    idle_timeout_us: i64,
    active: HashMap<FlowKey, ActiveFlow>,
    next_id: u64,
}

impl FlowAssembler {
    pub fn new(idle_timeout_secs: f64) -> Self {
        FlowAssembler {
            idle_timeout_us: Timestamp::from_secs_f64(idle_timeout_secs).0,
            active: HashMap::new(),
            next_id: 0,
        }
    }

    pub fn open_flows(&self) -> usize {
        self.active.len()
    }

    /// Adds one packet; returns the sessions this packet caused to close.
    pub fn push(&mut self, pkt: PacketRecord) -> Vec<FlowSession> {
        let mut closed = Vec::new();
        let key = pkt.key();

        if let Some(flow) = self.active.get(&key) {
            if pkt.ts.0 - flow.session.last_ts.0 > self.idle_timeout_us {
                let stale = self.active.remove(&key).expect("present");
                closed.push(stale.close(CloseReason::IdleTimeout));
            }
        }

        match self.active.get_mut(&key) {
            Some(flow) => {
                if let Some(reason) = flow.push(pkt) {
                    let done = self.active.remove(&key).expect("present");
                    closed.push(done.close(reason));
                }
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                // A lone RST still forms a session, but a closed one.
                match ActiveFlow::open(id, pkt) {
                    (flow, Some(reason)) => closed.push(flow.close(reason)),
                    (flow, None) => {
                        self.active.insert(key, flow);
                    }
                }
            }
        }
        closed
    }

    /// Closes every open session. Sessions already idle longer than the
    /// timeout at `now` close as idle, the rest as stream end.
    pub fn finish(&mut self, now: Option<Timestamp>) -> Vec<FlowSession> {
        let mut rest: Vec<ActiveFlow> = self.active.drain().map(|(_, f)| f).collect();
        rest.sort_by_key(|f| f.session.id);
        rest.into_iter()
            .map(|f| {
                let idle = now.is_some_and(|n| n.0 - f.session.last_ts.0 > self.idle_timeout_us);
                f.close(if idle {
                    CloseReason::IdleTimeout
                } else {
                    CloseReason::StreamEnd
                })
            })
            .collect()
    }
}

/// Groups a filtered, time-ordered packet stream into sessions, returned in
/// order of creation.
pub fn assemble<I>(stream: I, idle_timeout_secs: f64) -> Vec<FlowSession>
where
    I: IntoIterator<Item = PacketRecord>,
{
    let mut asm = FlowAssembler::new(idle_timeout_secs);
    let mut out = Vec::new();
    let mut now: Option<Timestamp> = None;
    for pkt in stream {
        now = Some(now.map_or(pkt.ts, |n| n.max(pkt.ts)));
        out.extend(asm.push(pkt));
    }
    out.extend(asm.finish(now));
    out.sort_by_key(|s| s.id);
    out
}
