use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::graph::model::{ModelSpec, SymmetryGroup};
use crate::wavelet::{Channel, ChannelLayout};

/// Vertex class (channel, exponent). Positions are carried by edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pub channel: usize,
    pub k: i32,
}

/// Ordered pair (a at position 0, b at position `offset`). The offset is in
/// steps of the coarser of the two channel lattices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub a: Vertex,
    pub b: Vertex,
    pub offset: (i32, i32),
}

impl Edge {
    pub fn diagonal(v: Vertex) -> Self {
        Edge { a: v, b: v, offset: (0, 0) }
    }

    pub fn is_diagonal(&self) -> bool {
        self.a == self.b && self.offset == (0, 0)
    }

    /// Grid displacement u' − u.
    pub fn displacement(&self, layout: &ChannelLayout) -> (i64, i64) {
        let s = layout.stride(self.a.channel).max(layout.stride(self.b.channel)) as i64;
        (s * self.offset.0 as i64, s * self.offset.1 as i64)
    }

    /// The Hermitian partner (b, a, −offset).
    pub fn reversed(&self) -> Self {
        Edge { a: self.b, b: self.a, offset: (-self.offset.0, -self.offset.1) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub layout: ChannelLayout,
    pub group: SymmetryGroup,
    pub delta_n: u32,
    pub delta_j: u32,
    pub delta_l: u32,
    /// Sorted, without duplicates.
    pub edges: Vec<Edge>,
}

/// Lattice offsets n with |n| ≤ 1.5 Δn, in row-major order.
pub fn spatial_offsets(delta_n: u32) -> Vec<(i32, i32)> {
    let r = 1.5 * delta_n as f64;
    let m = r.floor() as i32;
    let mut out = Vec::new();
    for a in -m..=m {
        for b in -m..=m {
            if ((a * a + b * b) as f64) <= r * r + 1e-9 {
                out.push((a, b));
            }
        }
    }
    out
}

pub fn angular_distance(l: usize, l2: usize, q: usize) -> usize {
    let d = l.abs_diff(l2);
    d.min(q - d)
}

pub fn build_foveal_edges(spec: &ModelSpec) -> Result<EdgeSet> {
    spec.validate()?;
    let layout = spec.layout();
    let (q, jmax) = (spec.angles, spec.scales);
    let offsets = spatial_offsets(spec.delta_n);
    let ks: Vec<i32> = (spec.k_min..=spec.k_max).collect();
    let mut set = BTreeSet::new();
    let mut push = |e: Edge| {
        let odd = (e.a.k + e.b.k).rem_euclid(2) == 1;
        if !(spec.group.sign_change && odd) {
            set.insert(e);
        }
    };
    for j in 1..=jmax {
        for l in 0..q {
            let c = layout.wavelet(j, l);
            for &k in &ks {
                let v = Vertex { channel: c, k };
                push(Edge::diagonal(v));
                if k <= spec.spatial_k_max {
                    for &n in &offsets {
                        push(Edge { a: v, b: v, offset: n });
                    }
                }
                for &k2 in &ks {
                    if !spec.pairs.allows(k, k2) {
                        continue;
                    }
                    if k2 != k {
                        push(Edge { a: v, b: Vertex { channel: c, k: k2 }, offset: (0, 0) });
                    }
                    for l2 in 0..q {
                        if l2 != l && angular_distance(l, l2, q) <= spec.delta_l as usize {
                            push(Edge { a: v, b: Vertex { channel: layout.wavelet(j, l2), k: k2 }, offset: (0, 0) });
                        }
                    }
                    for j2 in j + 1..=(j + spec.delta_j as usize).min(jmax) {
                        for l2 in 0..q {
                            if angular_distance(l, l2, q) <= spec.delta_l as usize {
                                push(Edge { a: v, b: Vertex { channel: layout.wavelet(j2, l2), k: k2 }, offset: (0, 0) });
                            }
                        }
                    }
                }
            }
        }
    }
    for k in [0, 1] {
        if k < spec.k_min || k > spec.k_max {
            continue;
        }
        let v = Vertex { channel: layout.lowpass(), k };
        push(Edge::diagonal(v));
        if k <= spec.spatial_k_max {
            for &n in &offsets {
                push(Edge { a: v, b: v, offset: n });
            }
        }
    }
    if set.is_empty() {
        return config("the model defines an empty edge set");
    }
    Ok(EdgeSet {
        layout,
        group: spec.group,
        delta_n: spec.delta_n,
        delta_j: spec.delta_j,
        delta_l: spec.delta_l,
        edges: set.into_iter().collect(),
    })
}

impl EdgeSet {
    pub fn from_edges(layout: ChannelLayout, group: SymmetryGroup, edges: Vec<Edge>) -> Result<Self> {
        let set: BTreeSet<Edge> = edges.into_iter().collect();
        if set.is_empty() {
            return config("empty edge set");
        }
        for e in &set {
            if e.a.channel >= layout.count() || e.b.channel >= layout.count() {
                return config("edge references a channel outside the layout");
            }
        }
        Ok(EdgeSet { layout, group, delta_n: 0, delta_j: 0, delta_l: 0, edges: set.into_iter().collect() })
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Vertex classes touched by the edges, sorted.
    pub fn vertices(&self) -> Vec<Vertex> {
        let s: BTreeSet<Vertex> = self.edges.iter().flat_map(|e| [e.a, e.b]).collect();
        s.into_iter().collect()
    }

    /// Size of the sufficient statistics. Under rotation averaging each
    /// (j, k, j', k') block is counted with its Q angular frequencies.
    pub fn model_size(&self) -> usize {
        if !self.group.rotations {
            return self.edges.len();
        }
        let mut blocks = BTreeSet::new();
        let mut other = 0;
        for e in &self.edges {
            match (self.layout.channel(e.a.channel), self.layout.channel(e.b.channel)) {
                (Channel::Wavelet { j, .. }, Channel::Wavelet { j: j2, .. }) => {
                    blocks.insert((j, e.a.k, j2, e.b.k));
                }
                _ => other += 1,
            }
        }
        blocks.len() * self.layout.angles + other
    }
}
