use serde::{Deserialize, Serialize};

use super::{BusType, NetworkCase};

/// Bus positions arranged as the PQ block, then the PV block, then the slack
/// bus. File order is preserved inside each block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusOrdering {
    /// `perm[k]` is the position (in the case file) of the k-th bus in
    /// block order. Zero-based.
    pub perm: Vec<usize>,
    pub n_pq: usize,
    pub n_pv: usize,
}

impl BusOrdering {
    pub fn from_types(types: &[BusType]) -> Self {
        let pick = |t: BusType| {
            types
                .iter()
                .enumerate()
                .filter(move |(_, &bt)| bt == t)
                .map(|(k, _)| k)
        };
        let mut perm: Vec<usize> = pick(BusType::PQ).collect();
        let n_pq = perm.len();
        perm.extend(pick(BusType::PV));
        let n_pv = perm.len() - n_pq;
        perm.extend(pick(BusType::Slack));
        BusOrdering { perm, n_pq, n_pv }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn block_sizes(&self) -> (usize, usize, usize) {
        (
            self.n_pq,
            self.n_pv,
            self.perm.len() - self.n_pq - self.n_pv,
        )
    }

    pub fn pq(&self) -> &[usize] {
        &self.perm[..self.n_pq]
    }

    pub fn pv(&self) -> &[usize] {
        &self.perm[self.n_pq..self.n_pq + self.n_pv]
    }

    /// PQ and PV buses: every bus except the slack.
    pub fn non_slack(&self) -> &[usize] {
        &self.perm[..self.n_pq + self.n_pv]
    }

    /// PV buses followed by the slack: the buses with a voltage setpoint.
    pub fn regulated(&self) -> &[usize] {
        &self.perm[self.n_pq..]
    }

    pub fn slack(&self) -> usize {
        self.perm[self.n_pq + self.n_pv]
    }

    /// `inverse()[bus] = k` such that `perm[k] = bus`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0; self.perm.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            inv[p] = k;
        }
        inv
    }

    /// Rearranges a vector in file order into block order.
    pub fn apply<T: Copy>(&self, values: &[T]) -> Vec<T> {
        self.perm.iter().map(|&p| values[p]).collect()
    }

    /// Rearranges a vector in block order back into file order.
    pub fn unapply<T: Copy + Default>(&self, values: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); values.len()];
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = values[k];
        }
        out
    }
}

pub fn bus_ordering(case: &NetworkCase) -> BusOrdering {
    BusOrdering::from_types(&case.bus_types())
}
