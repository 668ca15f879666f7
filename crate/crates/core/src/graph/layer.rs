use std::hint::spin_loop;
use std::sync::atomic::{AtomicU32, Ordering};

use rayon::prelude::*;

use super::GraphError;

/// Marker for an unused slot. Never a valid node id.
pub const EMPTY: u32 = u32::MAX;

const LOCK_BIT: u32 = 1 << 31;

/// Result of offering a candidate to a node's direct slots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InsertOutcome {
    pub improved: bool,
    /// Entry pushed out of the last direct slot, if any.
    pub evicted: Option<(u32, f32)>,
}

impl InsertOutcome {
    const UNCHANGED: Self = Self {
        improved: false,
        evicted: None,
    };
}

#[inline]
fn before(a: (f32, u32), b: (f32, u32)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt()
}

/// One layer of the hierarchy: every node owns `k = k_nn + k_sym` id slots.
///
/// Slots `[0, k_nn)` hold the node's nearest neighbors found so far, sorted
/// by `(distance, id)`, filled as a prefix. Slots `[k_nn, k_nn + sym_count)`
/// hold inverse links. Inverse slots are claimed through
/// [`reserve_sym_slot`](Self::reserve_sym_slot), which is safe to call from
/// many threads at once; everything else mutating takes `&mut self`.
pub struct AdjacencyLayer {
    node_count: usize,
    k_nn: usize,
    k_sym: usize,
    adjacency: Vec<AtomicU32>,
    nn_dists: Vec<f32>,
    sym_count: Vec<AtomicU32>,
    d_nn1: Vec<f32>,
}

impl std::fmt::Debug for AdjacencyLayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdjacencyLayer")
            .field("node_count", &self.node_count)
            .field("k_nn", &self.k_nn)
            .field("k_sym", &self.k_sym)
            .finish_non_exhaustive()
    }
}

impl Clone for AdjacencyLayer {
    fn clone(&self) -> Self {
        let copy = |v: &[AtomicU32]| {
            v.iter()
                .map(|a| AtomicU32::new(a.load(Ordering::Relaxed)))
                .collect()
        };
        Self {
            node_count: self.node_count,
            k_nn: self.k_nn,
            k_sym: self.k_sym,
            adjacency: copy(&self.adjacency),
            nn_dists: self.nn_dists.clone(),
            sym_count: copy(&self.sym_count),
            d_nn1: self.d_nn1.clone(),
        }
    }
}

impl PartialEq for AdjacencyLayer {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.k_nn == other.k_nn
            && self.k_sym == other.k_sym
            && self.adjacency_raw() == other.adjacency_raw()
            && self.sym_counts_raw() == other.sym_counts_raw()
            && self.nn_dists.iter().map(|d| d.to_bits()).eq(other.nn_dists.iter().map(|d| d.to_bits()))
            && self.d_nn1.iter().map(|d| d.to_bits()).eq(other.d_nn1.iter().map(|d| d.to_bits()))
    }
}

impl AdjacencyLayer {
    pub fn new(node_count: usize, k_nn: usize, k_sym: usize) -> Self {
        assert!(k_nn >= 1, "k_nn must be >= 1");
        assert!(node_count < EMPTY as usize, "node count exceeds id space");
        let k = k_nn + k_sym;
        Self {
            node_count,
            k_nn,
            k_sym,
            adjacency: (0..node_count * k).map(|_| AtomicU32::new(EMPTY)).collect(),
            nn_dists: vec![f32::INFINITY; node_count * k_nn],
            sym_count: (0..node_count).map(|_| AtomicU32::new(0)).collect(),
            d_nn1: vec![f32::INFINITY; node_count],
        }
    }

    /// Reassembles a layer from raw arrays, checking every slot invariant.
    pub fn from_parts(
        node_count: usize,
        k_nn: usize,
        k_sym: usize,
        adjacency: Vec<u32>,
        nn_dists: Vec<f32>,
        sym_count: Vec<u32>,
        d_nn1: Vec<f32>,
    ) -> Result<Self, GraphError> {
        let k = k_nn + k_sym;
        if k_nn == 0
            || adjacency.len() != node_count * k
            || nn_dists.len() != node_count * k_nn
            || sym_count.len() != node_count
            || d_nn1.len() != node_count
        {
            return Err(GraphError::Corrupt("layer array lengths disagree".into()));
        }
        let layer = Self {
            node_count,
            k_nn,
            k_sym,
            adjacency: adjacency.into_iter().map(AtomicU32::new).collect(),
            nn_dists,
            sym_count: sym_count.into_iter().map(AtomicU32::new).collect(),
            d_nn1,
        };
        layer.check_invariants().map_err(GraphError::Corrupt)?;
        Ok(layer)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.k_nn + self.k_sym
    }

    #[inline]
    pub fn k_nn(&self) -> usize {
        self.k_nn
    }

    #[inline]
    pub fn k_sym(&self) -> usize {
        self.k_sym
    }

    fn check_node(&self, node: u32) -> Result<usize, GraphError> {
        let n = node as usize;
        if n >= self.node_count {
            return Err(GraphError::NodeOutOfRange {
                node,
                node_count: self.node_count,
            });
        }
        Ok(n)
    }

    #[inline]
    fn slot(&self, node: usize, i: usize) -> u32 {
        self.adjacency[node * self.k() + i].load(Ordering::Relaxed)
    }

    #[inline]
    pub fn sym_count(&self, node: u32) -> usize {
        (self.sym_count[node as usize].load(Ordering::Acquire) & !LOCK_BIT) as usize
    }

    #[inline]
    pub fn d_nn1(&self, node: u32) -> f32 {
        self.d_nn1[node as usize]
    }

    pub fn d_nn1_all(&self) -> &[f32] {
        &self.d_nn1
    }

    /// Direct neighbors then used inverse links.
    pub fn neighbors(&self, node: u32) -> Result<Vec<u32>, GraphError> {
        self.check_node(node)?;
        Ok(self.neighbor_iter(node).collect())
    }

    /// Unchecked hot-path variant of [`neighbors`](Self::neighbors).
    #[inline]
    pub fn neighbor_iter(&self, node: u32) -> impl Iterator<Item = u32> + '_ {
        let n = node as usize;
        let direct = (0..self.k_nn)
            .map(move |i| self.slot(n, i))
            .take_while(|&id| id != EMPTY);
        let used = self.sym_count(node);
        let inverse = (self.k_nn..self.k_nn + used).map(move |i| self.slot(n, i));
        direct.chain(inverse)
    }

    /// Filled direct slots as `(id, distance)`.
    pub fn direct(&self, node: u32) -> Vec<(u32, f32)> {
        let n = node as usize;
        (0..self.k_nn)
            .map(|i| (self.slot(n, i), self.nn_dists[n * self.k_nn + i]))
            .take_while(|&(id, _)| id != EMPTY)
            .collect()
    }

    pub fn direct_ids(&self, node: u32) -> impl Iterator<Item = u32> + '_ {
        let n = node as usize;
        (0..self.k_nn)
            .map(move |i| self.slot(n, i))
            .take_while(|&id| id != EMPTY)
    }

    pub fn is_direct(&self, node: u32, candidate: u32) -> bool {
        self.direct_ids(node).any(|id| id == candidate)
    }

    pub fn sym_ids(&self, node: u32) -> Vec<u32> {
        let n = node as usize;
        (self.k_nn..self.k_nn + self.sym_count(node))
            .map(|i| self.slot(n, i))
            .collect()
    }

    pub fn insert_nn(
        &mut self,
        node: u32,
        candidate: u32,
        dist: f32,
    ) -> Result<InsertOutcome, GraphError> {
        let n = self.check_node(node)?;
        self.check_node(candidate)?;
        if candidate == node {
            return Err(GraphError::SelfLoop(node));
        }
        Ok(self.node_mut(n).insert_nn(candidate, dist))
    }

    /// Claims the next free inverse slot of `node` for `candidate`.
    ///
    /// Returns `false` when the candidate is already linked from `node` or
    /// all `k_sym` slots are taken. Safe under concurrent callers: a per-node
    /// lock bit in the counter serializes claims on the same node.
    pub fn reserve_sym_slot(&self, node: u32, candidate: u32) -> bool {
        assert!(
            (node as usize) < self.node_count && (candidate as usize) < self.node_count,
            "reserve_sym_slot({node}, {candidate}) out of range"
        );
        if node == candidate {
            return false;
        }
        let counter = &self.sym_count[node as usize];
        let count = loop {
            let cur = counter.load(Ordering::Relaxed);
            if cur & LOCK_BIT == 0
                && counter
                    .compare_exchange_weak(cur, cur | LOCK_BIT, Ordering::Acquire, Ordering::Relaxed)
                    .is_ok()
            {
                break cur;
            }
            spin_loop();
        };
        let n = node as usize;
        let used = count as usize;
        let present = (0..self.k_nn + used).any(|i| self.slot(n, i) == candidate);
        let accepted = !present && used < self.k_sym;
        if accepted {
            self.adjacency[n * self.k() + self.k_nn + used].store(candidate, Ordering::Relaxed);
            counter.store(count + 1, Ordering::Release);
        } else {
            counter.store(count, Ordering::Release);
        }
        accepted
    }

    /// Drops every inverse link.
    pub fn clear_sym(&mut self) {
        let k = self.k();
        let k_nn = self.k_nn;
        for (slots, count) in self.adjacency.chunks_mut(k).zip(self.sym_count.iter_mut()) {
            for s in &mut slots[k_nn..] {
                *s.get_mut() = EMPTY;
            }
            *count.get_mut() = 0;
        }
    }

    pub fn node_mut(&mut self, node: usize) -> NodeMut<'_> {
        let k = self.k();
        let k_nn = self.k_nn;
        NodeMut {
            node: node as u32,
            k_nn,
            slots: &mut self.adjacency[node * k..(node + 1) * k],
            dists: &mut self.nn_dists[node * k_nn..(node + 1) * k_nn],
            sym_count: self.sym_count[node].get_mut(),
            d_nn1: &mut self.d_nn1[node],
        }
    }

    /// Mutable per-node views for node-partitioned parallel updates.
    pub fn par_nodes_mut(&mut self) -> impl IndexedParallelIterator<Item = NodeMut<'_>> {
        let k = self.k();
        let k_nn = self.k_nn;
        self.adjacency
            .par_chunks_mut(k)
            .zip(self.nn_dists.par_chunks_mut(k_nn))
            .zip(self.sym_count.par_iter_mut())
            .zip(self.d_nn1.par_iter_mut())
            .enumerate()
            .map(move |(node, (((slots, dists), sym), d_nn1))| NodeMut {
                node: node as u32,
                k_nn,
                slots,
                dists,
                sym_count: sym.get_mut(),
                d_nn1,
            })
    }

    pub fn adjacency_raw(&self) -> Vec<u32> {
        self.adjacency.iter().map(|a| a.load(Ordering::Relaxed)).collect()
    }

    pub fn nn_dists_raw(&self) -> &[f32] {
        &self.nn_dists
    }

    pub fn sym_counts_raw(&self) -> Vec<u32> {
        self.sym_count
            .iter()
            .map(|a| a.load(Ordering::Acquire) & !LOCK_BIT)
            .collect()
    }

    /// Structural slot invariants: sorted unique direct prefix, no self
    /// loops, no duplicates across the full list, bounded inverse count,
    /// `d_nn1` mirroring slot 0.
    pub fn check_invariants(&self) -> Result<(), String> {
        for node in 0..self.node_count {
            let id = node as u32;
            let used = self.sym_count(id);
            if used > self.k_sym {
                return Err(format!("node {node}: sym_count {used} > k_sym {}", self.k_sym));
            }
            let direct = self.direct(id);
            for i in direct.len()..self.k_nn {
                if self.slot(node, i) != EMPTY {
                    return Err(format!("node {node}: direct slots not a filled prefix"));
                }
            }
            for w in direct.windows(2) {
                if before((w[1].1, w[1].0), (w[0].1, w[0].0)) {
                    return Err(format!("node {node}: direct slots not sorted"));
                }
            }
            let mut all: Vec<u32> = direct.iter().map(|e| e.0).collect();
            all.extend(self.sym_ids(id));
            if all.iter().any(|&x| x == id) {
                return Err(format!("node {node}: self loop"));
            }
            if all.iter().any(|&x| x as usize >= self.node_count) {
                return Err(format!("node {node}: slot id out of range"));
            }
            let mut sorted = all.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != all.len() {
                return Err(format!("node {node}: duplicate ids in slots"));
            }
            let expect = direct.first().map_or(f32::INFINITY, |e| e.1);
            if self.d_nn1[node].to_bits() != expect.to_bits() {
                return Err(format!("node {node}: d_nn1 does not match slot 0"));
            }
        }
        Ok(())
    }
}

/// Exclusive access to one node's slots.
pub struct NodeMut<'a> {
    node: u32,
    k_nn: usize,
    slots: &'a mut [AtomicU32],
    dists: &'a mut [f32],
    sym_count: &'a mut u32,
    d_nn1: &'a mut f32,
}

impl NodeMut<'_> {
    #[inline]
    pub fn node(&self) -> u32 {
        self.node
    }

    fn filled(&mut self) -> usize {
        self.slots[..self.k_nn]
            .iter_mut()
            .position(|s| *s.get_mut() == EMPTY)
            .unwrap_or(self.k_nn)
    }

    /// Sorted insertion into the direct slots; see
    /// [`AdjacencyLayer::insert_nn`].
    pub fn insert_nn(&mut self, candidate: u32, dist: f32) -> InsertOutcome {
        if candidate == self.node {
            return InsertOutcome::UNCHANGED;
        }
        let filled = self.filled();
        if self.slots[..filled].iter_mut().any(|s| *s.get_mut() == candidate) {
            return InsertOutcome::UNCHANGED;
        }
        let key = (dist, candidate);
        if filled == self.k_nn {
            let worst = (self.dists[filled - 1], *self.slots[filled - 1].get_mut());
            if !before(key, worst) {
                return InsertOutcome::UNCHANGED;
            }
        }
        let mut pos = filled;
        while pos > 0 && before(key, (self.dists[pos - 1], *self.slots[pos - 1].get_mut())) {
            pos -= 1;
        }
        let evicted = (filled == self.k_nn)
            .then(|| (*self.slots[filled - 1].get_mut(), self.dists[filled - 1]));
        let end = filled.min(self.k_nn - 1);
        for i in (pos..end).rev() {
            let id = *self.slots[i].get_mut();
            *self.slots[i + 1].get_mut() = id;
            self.dists[i + 1] = self.dists[i];
        }
        *self.slots[pos].get_mut() = candidate;
        self.dists[pos] = dist;
        *self.d_nn1 = self.dists[0];
        self.remove_sym(candidate);
        InsertOutcome {
            improved: true,
            evicted,
        }
    }

    /// Replaces the direct slots with the first `k_nn` entries of a list
    /// already sorted by `(distance, id)`.
    pub fn set_direct(&mut self, sorted: &[(u32, f32)]) {
        debug_assert!(sorted
            .windows(2)
            .all(|w| !before((w[1].1, w[1].0), (w[0].1, w[0].0))));
        for i in 0..self.k_nn {
            let (id, d) = sorted.get(i).copied().unwrap_or((EMPTY, f32::INFINITY));
            debug_assert_ne!(id, self.node);
            *self.slots[i].get_mut() = id;
            self.dists[i] = d;
        }
        *self.d_nn1 = self.dists[0];
        for i in 0..self.k_nn.min(sorted.len()) {
            self.remove_sym(sorted[i].0);
        }
    }

    fn remove_sym(&mut self, id: u32) {
        let used = *self.sym_count as usize;
        let base = self.k_nn;
        if let Some(i) = (0..used).find(|&i| *self.slots[base + i].get_mut() == id) {
            let last = *self.slots[base + used - 1].get_mut();
            *self.slots[base + i].get_mut() = last;
            *self.slots[base + used - 1].get_mut() = EMPTY;
            *self.sym_count -= 1;
        }
    }
}
