use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chord::{Hop, Message, Request, Response};
use crate::error::{Error, Result};

pub const HEADER_BYTES: u64 = 32;
pub const PEER_REF_BYTES: u64 = 20;
pub const NODE_ID_BYTES: u64 = 8;

/// Abstract wire size: a 32-byte header, 20 bytes per embedded peer
/// reference, 8 per bare identifier.
pub fn message_size(msg: &Message) -> u64 {
    HEADER_BYTES
        + match msg {
            Message::Request(r) => match r {
                Request::FindSuccessor(_) => NODE_ID_BYTES,
                Request::Notify(_) => PEER_REF_BYTES,
                Request::GetPredecessor | Request::GetSuccessorList | Request::Ping => 0,
            },
            Message::Response(r) => match r {
                Response::FindSuccessor(Hop::Found(_) | Hop::Next(_)) => PEER_REF_BYTES,
                Response::Predecessor(p) => p.map_or(0, |_| PEER_REF_BYTES),
                Response::SuccessorList(l) => PEER_REF_BYTES * l.len() as u64,
                Response::Ack => 0,
            },
        }
}

/// Link and host timing. One-way delay is
/// `(base_latency + bytes * per_byte) * (1 + U(-jitter, jitter))`.
/// Each delivered message then occupies the receiving host for
/// `service_time`; a host serves messages one at a time in arrival order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub base_latency: f64,
    pub per_byte: f64,
    pub jitter: f64,
    pub rpc_timeout: f64,
    pub service_time: f64,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            base_latency: 0.000_5,
            per_byte: 1e-6 / 1024.0,
            jitter: 0.10,
            rpc_timeout: 2.0,
            service_time: 0.020,
        }
    }
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        let ok = self.base_latency >= 0.0
            && self.per_byte >= 0.0
            && (0.0..1.0).contains(&self.jitter)
            && self.rpc_timeout > 0.0
            && self.service_time >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid network model {self:?}")))
        }
    }

    pub fn nominal_latency(&self, bytes: u64) -> f64 {
        self.base_latency + bytes as f64 * self.per_byte
    }

    pub fn latency<R: Rng>(&self, bytes: u64, rng: &mut R) -> f64 {
        let j = if self.jitter > 0.0 {
            rng.random_range(-self.jitter..self.jitter)
        } else {
            0.0
        };
        self.nominal_latency(bytes) * (1.0 + j)
    }
}
