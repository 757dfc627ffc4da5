use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

pub const QSTORE_SCHEMA_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"SGQS";

#[derive(Debug, Clone, PartialEq)]
struct QSample {
    seq: u64,
    state: Vec<f64>,
    q: f64,
}

/// Experience memory for nearest-neighbor Q-learning: `(state, action, q)`
/// samples bucketed by action, with oldest-first eviction past `capacity`.
#[derive(Debug, Clone, PartialEq)]
pub struct QStore {
    k: usize,
    capacity: usize,
    buckets: Vec<VecDeque<QSample>>,
    next_seq: u64,
    len: usize,
}

impl QStore {
    pub fn new(num_actions: usize, k: usize, capacity: usize) -> Result<Self> {
        if k == 0 || num_actions == 0 || capacity == 0 {
            return Err(Error::InvalidConfig(
                "QStore needs k, actions and capacity >= 1".into(),
            ));
        }
        Ok(Self {
            k,
            capacity,
            buckets: vec![VecDeque::new(); num_actions],
            next_seq: 0,
            len: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_actions(&self) -> usize {
        self.buckets.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, state: Vec<f64>, action: usize, q: f64) -> Result<()> {
        if action >= self.buckets.len() {
            return Err(Error::InvalidConfig(format!(
                "action {action} out of range"
            )));
        }
        if !q.is_finite() {
            return Err(Error::NonFinite("q value".into()));
        }
        if self.len == self.capacity {
            let oldest = self
                .buckets
                .iter()
                .enumerate()
                .filter_map(|(a, b)| b.front().map(|s| (s.seq, a)))
                .min()
                .map(|(_, a)| a)
                .expect("a full store has samples");
            self.buckets[oldest].pop_front();
            self.len -= 1;
        }
        self.buckets[action].push_back(QSample {
            seq: self.next_seq,
            state,
            q,
        });
        self.next_seq += 1;
        self.len += 1;
        Ok(())
    }

    /// Samples for a given action, oldest first, as `(state, q)`.
    pub fn samples(&self, action: usize) -> impl Iterator<Item = (&[f64], f64)> {
        self.buckets[action]
            .iter()
            .map(|s| (s.state.as_slice(), s.q))
    }

    /// Mean q of the `k` nearest samples sharing `action` (L2 over states;
    /// equal distances prefer the more recent sample). 0 for an empty bucket.
    pub fn q(&self, state: &[f64], action: usize) -> f64 {
        let bucket = &self.buckets[action];
        if bucket.is_empty() {
            return 0.0;
        }
        // Best k as (distance^2, seq, q), kept sorted.
        let mut best: Vec<(f64, u64, f64)> = Vec::with_capacity(self.k + 1);
        for s in bucket {
            let d: f64 = s
                .state
                .iter()
                .zip(state)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if best.len() == self.k {
                let worst = best[self.k - 1];
                if d > worst.0 || (d == worst.0 && s.seq < worst.1) {
                    continue;
                }
            }
            let pos = best
                .iter()
                .position(|&(bd, bseq, _)| d < bd || (d == bd && s.seq > bseq))
                .unwrap_or(best.len());
            best.insert(pos, (d, s.seq, s.q));
            best.truncate(self.k);
        }
        best.iter().map(|b| b.2).sum::<f64>() / best.len() as f64
    }

    /// Argmax over actions, smallest action on ties.
    pub fn greedy(&self, state: &[f64]) -> (usize, f64) {
        let mut best = (0, self.q(state, 0));
        for a in 1..self.num_actions() {
            let q = self.q(state, a);
            if q > best.1 {
                best = (a, q);
            }
        }
        best
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        let dim = self
            .buckets
            .iter()
            .flatten()
            .next()
            .map_or(0, |s| s.state.len());
        for v in [
            QSTORE_SCHEMA_VERSION,
            self.k as u32,
            self.capacity as u32,
            self.num_actions() as u32,
            dim as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut all: Vec<(u64, usize, &QSample)> = self
            .buckets
            .iter()
            .enumerate()
            .flat_map(|(a, b)| b.iter().map(move |s| (s.seq, a, s)))
            .collect();
        all.sort_by_key(|e| e.0);
        w.write_all(&(all.len() as u64).to_le_bytes())?;
        for (_, action, s) in all {
            w.write_all(&(action as u32).to_le_bytes())?;
            w.write_all(&s.q.to_le_bytes())?;
            for v in &s.state {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |why: &str| Error::InvalidParamsFile(why.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("bad QStore magic"));
        }
        let mut u32s = [0usize; 5];
        for v in &mut u32s {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b) as usize;
        }
        let [version, k, capacity, actions, dim] = u32s;
        if version != QSTORE_SCHEMA_VERSION as usize {
            return Err(bad("unsupported QStore version"));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8);
        let mut store = QStore::new(actions, k, capacity)?;
        for _ in 0..count {
            let mut b4 = [0u8; 4];
            r.read_exact(&mut b4)?;
            let action = u32::from_le_bytes(b4) as usize;
            r.read_exact(&mut b8)?;
            let q = f64::from_le_bytes(b8);
            let mut state = Vec::with_capacity(dim);
            for _ in 0..dim {
                r.read_exact(&mut b8)?;
                state.push(f64::from_le_bytes(b8));
            }
            store.insert(state, action, q)?;
        }
        Ok(store)
    }
}

/// Uniform action with probability `epsilon`, else the greedy one.
pub fn select_action(store: &QStore, state: &[f64], epsilon: f64, rng: &mut impl Rng) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..store.num_actions())
    } else {
        store.greedy(state).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next: Vec<f64>,
    pub terminal: bool,
}

/// Appends `(s, a, Q(s,a) + alpha * (target - Q(s,a)))`; returns the stored value.
pub fn nnql_update(store: &mut QStore, t: &Transition, gamma: f64, alpha: f64) -> Result<f64> {
    let target = if t.terminal {
        t.reward
    } else {
        t.reward + gamma * store.greedy(&t.next).1
    };
    let current = store.q(&t.state, t.action);
    let q = current + alpha * (target - current);
    store.insert(t.state.clone(), t.action, q)?;
    Ok(q)
}
