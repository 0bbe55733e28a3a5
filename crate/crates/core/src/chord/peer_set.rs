use crate::ring::{in_half_open, in_open, NodeId};

use super::PeerRef;

/// A node's links.
///
/// The successor serves both correct routing and repair, the predecessor and
/// successor list serve repair, and fingers serve efficient routing.
/// `successor == successor_list[0]` whenever the list is non-empty; the list
/// is strictly ordered by clockwise distance from the owner and never
/// contains the owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerSet {
    owner: PeerRef,
    successor: PeerRef,
    predecessor: Option<PeerRef>,
    successor_list: Vec<PeerRef>,
    fingers: Vec<Option<PeerRef>>,
    list_len: usize,
}

impl PeerSet {
    /// A singleton peer set: the owner is its own successor.
    pub fn new(owner: PeerRef, finger_count: usize, list_len: usize) -> Self {
        PeerSet {
            owner,
            successor: owner,
            predecessor: None,
            successor_list: Vec::new(),
            fingers: vec![None; finger_count],
            list_len: list_len.max(1),
        }
    }

    pub fn owner(&self) -> PeerRef {
        self.owner
    }

    pub fn successor(&self) -> PeerRef {
        self.successor
    }

    pub fn predecessor(&self) -> Option<PeerRef> {
        self.predecessor
    }

    pub fn successor_list(&self) -> &[PeerRef] {
        &self.successor_list
    }

    /// Finger `i` for `i` in `1..=m`.
    pub fn finger(&self, i: u32) -> Option<PeerRef> {
        self.fingers.get(i as usize - 1).copied().flatten()
    }

    pub fn fingers(&self) -> &[Option<PeerRef>] {
        &self.fingers
    }

    fn dist(&self, id: NodeId) -> u64 {
        self.owner.id.distance_to(id)
    }

    /// Makes `p` the successor, keeping list entries that lie beyond it.
    pub fn install_successor(&mut self, p: PeerRef) -> bool {
        let before = (self.successor, self.successor_list.clone());
        if p == self.owner {
            self.successor = p;
            self.successor_list.clear();
        } else {
            let d = self.dist(p.id);
            let owner = self.owner;
            self.successor_list
                .retain(|e| *e != p && *e != owner && owner.id.distance_to(e.id) > d);
            self.successor_list.insert(0, p);
            self.successor_list.truncate(self.list_len);
            self.successor = p;
        }
        before != (self.successor, self.successor_list.clone())
    }

    /// Replaces the successor list with `successor` followed by the usable
    /// prefix of `tail` (entries must keep moving clockwise and stop before
    /// wrapping back to the owner).
    pub fn refresh_successor_list(&mut self, tail: &[PeerRef]) -> bool {
        if self.successor == self.owner {
            return false;
        }
        let mut list = vec![self.successor];
        let mut last = self.dist(self.successor.id);
        for e in tail {
            if list.len() >= self.list_len {
                break;
            }
            if *e == self.owner || list.contains(e) {
                break;
            }
            let d = self.dist(e.id);
            if d <= last {
                break;
            }
            list.push(*e);
            last = d;
        }
        if list != self.successor_list {
            self.successor_list = list;
            true
        } else {
            false
        }
    }

    pub fn set_predecessor(&mut self, p: Option<PeerRef>) -> bool {
        let changed = self.predecessor != p;
        self.predecessor = p;
        changed
    }

    pub fn set_finger(&mut self, i: u32, p: Option<PeerRef>) -> bool {
        let slot = &mut self.fingers[i as usize - 1];
        let changed = *slot != p;
        *slot = p;
        changed
    }

    /// Drops every reference to `peer`. The successor falls back to the next
    /// list entry, or to the owner when the list is exhausted.
    pub fn remove(&mut self, peer: PeerRef) -> bool {
        let mut changed = false;
        if self.predecessor == Some(peer) {
            self.predecessor = None;
            changed = true;
        }
        for f in self.fingers.iter_mut() {
            if *f == Some(peer) {
                *f = None;
                changed = true;
            }
        }
        let n = self.successor_list.len();
        self.successor_list.retain(|e| *e != peer);
        changed |= n != self.successor_list.len();
        if self.successor == peer {
            self.successor = self.successor_list.first().copied().unwrap_or(self.owner);
            changed = true;
        }
        changed
    }

    /// Accepts a notify from `candidate` when it lies between the current
    /// predecessor and the owner.
    pub fn offer_predecessor(&mut self, candidate: PeerRef) -> bool {
        if candidate == self.owner {
            return false;
        }
        let adopt = match self.predecessor {
            None => true,
            Some(p) => in_open(candidate.id, p.id, self.owner.id),
        };
        adopt && self.set_predecessor(Some(candidate))
    }

    /// Finger or successor-list entry with the greatest id in `(owner, key)`,
    /// or the owner if there is none.
    pub fn closest_preceding_peer(&self, key: NodeId) -> PeerRef {
        let owner = self.owner;
        std::iter::once(self.successor)
            .chain(self.successor_list.iter().copied())
            .chain(self.fingers.iter().flatten().copied())
            .filter(|p| *p != owner && in_open(p.id, owner.id, key))
            .max_by_key(|p| owner.id.distance_to(p.id))
            .unwrap_or(owner)
    }

    /// The successor, if `key` falls in `(owner, successor]`.
    pub fn local_successor_of(&self, key: NodeId) -> Option<PeerRef> {
        in_half_open(key, self.owner.id, self.successor.id).then_some(self.successor)
    }

    /// Best local guess for `key`'s successor from the successor list: the
    /// entry that follows the window containing `key`. Lists can lag behind
    /// joins, so this is a hint for finger repair, never a routing answer.
    pub fn successor_list_hint(&self, key: NodeId) -> Option<PeerRef> {
        self.local_successor_of(key).or_else(|| {
            self.successor_list
                .windows(2)
                .find(|w| in_half_open(key, w[0].id, w[1].id))
                .map(|w| w[1])
        })
    }

    /// Distinct peers known to this node other than itself.
    pub fn known_peers(&self) -> Vec<PeerRef> {
        let mut v: Vec<PeerRef> = std::iter::once(self.successor)
            .chain(self.predecessor)
            .chain(self.successor_list.iter().copied())
            .chain(self.fingers.iter().flatten().copied())
            .filter(|p| *p != self.owner)
            .collect();
        v.sort_by_key(|p| (p.id, p.addr));
        v.dedup();
        v
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(first) = self.successor_list.first() {
            if *first != self.successor {
                return Err("successor differs from successor_list[0]".into());
            }
        }
        if self.successor_list.len() > self.list_len {
            return Err("successor list too long".into());
        }
        let mut last = 0u64;
        for e in &self.successor_list {
            let d = self.dist(e.id);
            if *e == self.owner || d <= last {
                return Err("successor list not strictly clockwise".into());
            }
            last = d;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::Address;

    fn p(id: u64) -> PeerRef {
        PeerRef::new(NodeId(id), Address(id as u32))
    }

    #[test]
    fn closest_preceding_examples() {
        let mut ps = PeerSet::new(p(0), 6, 4);
        assert_eq!(ps.closest_preceding_peer(NodeId(35)), p(0));
        ps.set_finger(4, Some(p(10)));
        ps.set_finger(5, Some(p(20)));
        ps.set_finger(6, Some(p(40)));
        assert_eq!(ps.closest_preceding_peer(NodeId(35)), p(20));
        assert_eq!(ps.closest_preceding_peer(NodeId(1)), p(0));
    }

    #[test]
    fn install_and_remove_keep_list_head() {
        let mut ps = PeerSet::new(p(0), 6, 3);
        ps.install_successor(p(20));
        ps.refresh_successor_list(&[p(30), p(40), p(50)]);
        assert_eq!(ps.successor_list(), &[p(20), p(30), p(40)]);
        assert!(ps.install_successor(p(10)));
        assert_eq!(ps.successor_list(), &[p(10), p(20), p(30)]);
        assert!(ps.remove(p(10)));
        assert_eq!(ps.successor(), p(20));
        ps.check_invariants().unwrap();
        ps.remove(p(20));
        ps.remove(p(30));
        assert_eq!(ps.successor(), p(0));
        assert!(ps.successor_list().is_empty());
    }

    #[test]
    fn refresh_stops_at_wrap() {
        let mut ps = PeerSet::new(p(10), 6, 4);
        ps.install_successor(p(20));
        ps.refresh_successor_list(&[p(30), p(5), p(10), p(15)]);
        assert_eq!(ps.successor_list(), &[p(20), p(30), p(5)]);
        ps.check_invariants().unwrap();
    }

    #[test]
    fn notify_rules() {
        let mut ps = PeerSet::new(p(30), 6, 4);
        assert!(ps.offer_predecessor(p(10)));
        assert!(ps.offer_predecessor(p(20)));
        assert!(!ps.offer_predecessor(p(15)));
        assert!(!ps.offer_predecessor(p(40)));
        assert_eq!(ps.predecessor(), Some(p(20)));
    }

    #[test]
    fn list_hint_uses_windows() {
        let mut ps = PeerSet::new(p(0), 6, 4);
        ps.install_successor(p(10));
        ps.refresh_successor_list(&[p(20), p(40)]);
        assert_eq!(ps.local_successor_of(NodeId(5)), Some(p(10)));
        assert_eq!(ps.local_successor_of(NodeId(15)), None);
        assert_eq!(ps.successor_list_hint(NodeId(5)), Some(p(10)));
        assert_eq!(ps.successor_list_hint(NodeId(15)), Some(p(20)));
        assert_eq!(ps.successor_list_hint(NodeId(40)), Some(p(40)));
        assert_eq!(ps.successor_list_hint(NodeId(41)), None);
    }
}
