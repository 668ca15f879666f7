use std::collections::VecDeque;

use crate::config::QueryConfig;

#[inline]
fn key_lt(a: (f32, u32), b: (f32, u32)) -> bool {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_lt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct BestEntry {
    id: u32,
    dist: f32,
    visited: bool,
}

/// Per-query candidate cache.
///
/// Three parts: `best`, the `k_out` closest points found so far in
/// ascending order (each flagged visited or not); `prioq`, a bounded
/// distance-sorted queue of unvisited candidates that did not fit in
/// `best`; and a bounded ring of visited (or rejected) ids. An id is
/// "known" while it sits in any of the three. Ids that fall off the end of
/// the queue or the ring are forgotten and may be rediscovered.
///
/// Membership is a stamped array sized to the layer, so one cache can be
/// reused across queries and layers without reallocating.
pub struct SearchCache {
    k_out: usize,
    prioq_size: usize,
    visited_size: usize,
    best: Vec<BestEntry>,
    prioq: VecDeque<(f32, u32)>,
    visited: VecDeque<u32>,
    known: Vec<u32>,
    touched: Vec<u32>,
    epoch: u32,
    forgotten: usize,
}

impl SearchCache {
    pub fn new(node_capacity: usize, cfg: &QueryConfig) -> Self {
        let mut cache = Self {
            k_out: cfg.k_out,
            prioq_size: cfg.prioq_size,
            visited_size: cfg.visited_size,
            best: Vec::with_capacity(cfg.k_out + 1),
            prioq: VecDeque::with_capacity(cfg.prioq_size + 1),
            visited: VecDeque::with_capacity(cfg.visited_size + 1),
            known: Vec::new(),
            touched: Vec::new(),
            epoch: 0,
            forgotten: 0,
        };
        cache.reset(node_capacity, cfg);
        cache
    }

    /// Empties the cache for a new search over ids `0..node_capacity`.
    pub fn reset(&mut self, node_capacity: usize, cfg: &QueryConfig) {
        self.k_out = cfg.k_out;
        self.prioq_size = cfg.prioq_size;
        self.visited_size = cfg.visited_size;
        self.best.clear();
        self.prioq.clear();
        self.visited.clear();
        self.forgotten = 0;
        if self.known.len() < node_capacity {
            self.known.resize(node_capacity, 0);
            self.touched.resize(node_capacity, 0);
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.known.fill(0);
            self.touched.fill(0);
            self.epoch = 1;
        }
    }

    #[inline]
    pub fn is_known(&self, id: u32) -> bool {
        self.known[id as usize] == self.epoch
    }

    #[inline]
    fn forget(&mut self, id: u32) {
        self.known[id as usize] = 0;
        self.forgotten += 1;
    }

    /// Marks `id` known without storing it anywhere; it is never reported
    /// or expanded and is never forgotten.
    pub fn block(&mut self, id: u32) {
        self.known[id as usize] = self.epoch;
    }

    /// Records a distance evaluation; true the first time `id` is seen in
    /// this search.
    #[inline]
    pub fn note_touched(&mut self, id: u32) -> bool {
        let slot = &mut self.touched[id as usize];
        let first = *slot != self.epoch;
        *slot = self.epoch;
        first
    }

    pub fn was_touched(&self, id: u32) -> bool {
        self.touched[id as usize] == self.epoch
    }

    /// Inserts an unknown candidate.
    pub fn insert(&mut self, id: u32, dist: f32) {
        debug_assert!(!self.is_known(id));
        self.known[id as usize] = self.epoch;
        let key = (dist, id);
        let fits = self.best.len() < self.k_out
            || key_lt(key, {
                let t = self.best.last().unwrap();
                (t.dist, t.id)
            });
        if !fits {
            self.push_prioq(key);
            return;
        }
        let pos = self
            .best
            .partition_point(|e| key_lt((e.dist, e.id), key));
        self.best.insert(
            pos,
            BestEntry {
                id,
                dist,
                visited: false,
            },
        );
        if self.best.len() > self.k_out {
            let out = self.best.pop().unwrap();
            if out.visited {
                self.push_visited(out.id);
            } else {
                self.push_prioq((out.dist, out.id));
            }
        }
    }

    fn push_prioq(&mut self, key: (f32, u32)) {
        let pos = self.prioq.partition_point(|&e| key_lt(e, key));
        if self.prioq.len() >= self.prioq_size && pos == self.prioq.len() {
            self.forget(key.1);
            return;
        }
        self.prioq.insert(pos, key);
        if self.prioq.len() > self.prioq_size {
            let (_, dropped) = self.prioq.pop_back().unwrap();
            self.forget(dropped);
        }
    }

    fn push_visited(&mut self, id: u32) {
        self.visited.push_back(id);
        if self.visited.len() > self.visited_size {
            let old = self.visited.pop_front().unwrap();
            self.forget(old);
        }
    }

    /// Keeps `id` known as a discarded candidate so its distance is not
    /// evaluated again.
    pub fn mark_rejected(&mut self, id: u32) {
        debug_assert!(!self.is_known(id));
        self.known[id as usize] = self.epoch;
        self.push_visited(id);
    }

    /// The closest candidate not yet visited.
    pub fn peek_next(&self) -> Option<(u32, f32)> {
        let from_best = self.best.iter().find(|e| !e.visited).map(|e| (e.dist, e.id));
        let from_queue = self.prioq.front().copied();
        match (from_best, from_queue) {
            (Some(a), Some(b)) => Some(if key_lt(b, a) { b } else { a }),
            (a, b) => a.or(b),
        }
        .map(|(d, id)| (id, d))
    }

    /// Removes the closest unvisited candidate and marks it visited.
    pub fn pop_best(&mut self) -> Option<(u32, f32)> {
        let (id, dist) = self.peek_next()?;
        if let Some(e) = self.best.iter_mut().find(|e| e.id == id && !e.visited) {
            e.visited = true;
        } else {
            self.prioq.pop_front();
            self.push_visited(id);
        }
        Some((id, dist))
    }

    pub fn best_len(&self) -> usize {
        self.best.len()
    }

    pub fn is_best_full(&self) -> bool {
        self.best.len() >= self.k_out
    }

    /// Distance of the first and the last entry of `best`.
    pub fn best_bounds(&self) -> Option<(f32, f32)> {
        Some((self.best.first()?.dist, self.best.last()?.dist))
    }

    pub fn best(&self) -> impl ExactSizeIterator<Item = (u32, f32)> + '_ {
        self.best.iter().map(|e| (e.id, e.dist))
    }

    pub fn queue_len(&self) -> usize {
        self.prioq.len()
    }

    pub fn forgotten(&self) -> usize {
        self.forgotten
    }
}
