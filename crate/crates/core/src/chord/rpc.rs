use crate::ring::NodeId;

use super::PeerRef;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    FindSuccessor(NodeId),
    GetPredecessor,
    GetSuccessorList,
    Notify(PeerRef),
    Ping,
}

/// One step of an iterative lookup as answered by the queried node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hop {
    /// The key's successor.
    Found(PeerRef),
    /// Ask this peer next.
    Next(PeerRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    FindSuccessor(Hop),
    Predecessor(Option<PeerRef>),
    SuccessorList(Vec<PeerRef>),
    Ack,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Request(Request),
    Response(Response),
}

impl Request {
    pub fn name(&self) -> &'static str {
        match self {
            Request::FindSuccessor(_) => "find_successor",
            Request::GetPredecessor => "get_predecessor",
            Request::GetSuccessorList => "get_successor_list",
            Request::Notify(_) => "notify",
            Request::Ping => "ping",
        }
    }
}
