//! Min-cut / max-flow on 4-connected pixel grids.
//!
//! A binary labeling problem (per-pixel costs plus submodular pairwise
//! tables on grid edges) reduces to a two-terminal flow network whose
//! minimum cut value, plus a labeling-independent constant, equals the
//! minimum energy. Label 0 is the source side, label 1 the sink side.
//!
//! The solver keeps two search trees rooted at the terminals and repairs
//! them with an orphan-adoption pass after every augmentation instead of
//! rebuilding, which is the fast regime for grid graphs whose cuts move
//! only a little between calls.

use crate::raster::GridShape;
use crate::{Error, Result};

/// Costs of the four joint labelings of an edge `(p, q)`:
/// `e01` is "p keeps label 0, q takes label 1".
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseTable {
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
}

impl PairwiseTable {
    /// Margin by which the table satisfies the submodularity inequality
    /// `e00 + e11 ≤ e01 + e10`; non-negative for representable tables.
    pub fn submodularity_margin(&self) -> f64 {
        self.e01 + self.e10 - self.e00 - self.e11
    }
}

/// Tolerance for the submodularity test; tables violating it by more than
/// this are rejected rather than silently truncated.
pub const SUBMODULAR_TOL: f64 = 1e-9;

/// A binary grid labeling problem.
#[derive(Debug, Clone)]
pub struct GridEnergy {
    pub shape: GridShape,
    /// `[cost of label 0, cost of label 1]` per pixel.
    pub unary: Vec<[f64; 2]>,
    /// Table for the edge between `(x, y)` and `(x+1, y)`, stored at the
    /// left pixel's index; `None` means the pixels are not coupled.
    pub horizontal: Vec<Option<PairwiseTable>>,
    /// Table for the edge between `(x, y)` and `(x, y+1)`, stored at the
    /// top pixel's index.
    pub vertical: Vec<Option<PairwiseTable>>,
}

impl GridEnergy {
    pub fn new(shape: GridShape) -> Self {
        GridEnergy {
            shape,
            unary: vec![[0.0, 0.0]; shape.len()],
            horizontal: vec![None; shape.len()],
            vertical: vec![None; shape.len()],
        }
    }

    /// Direct evaluation of the labeling cost (used by tests and oracles).
    pub fn cost(&self, labels: &[bool]) -> f64 {
        let (w, h) = (self.shape.width, self.shape.height);
        let mut total = 0.0;
        for i in 0..self.shape.len() {
            total += self.unary[i][labels[i] as usize];
        }
        for y in 0..h {
            for x in 0..w {
                let i = self.shape.idx(x, y);
                if x + 1 < w {
                    if let Some(t) = self.horizontal[i] {
                        total += t_pick(&t, labels[i], labels[i + 1]);
                    }
                }
                if y + 1 < h {
                    if let Some(t) = self.vertical[i] {
                        total += t_pick(&t, labels[i], labels[i + w]);
                    }
                }
            }
        }
        total
    }
}

fn t_pick(t: &PairwiseTable, a: bool, b: bool) -> f64 {
    match (a, b) {
        (false, false) => t.e00,
        (false, true) => t.e01,
        (true, false) => t.e10,
        (true, true) => t.e11,
    }
}

/// Two-terminal flow network on a 4-connected grid. Capacities are the
/// original (pre-solve) values; the solver works on its own copy.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub shape: GridShape,
    /// Arc source→p; cut when p ends on the sink side (label 1).
    pub src_cap: Vec<f64>,
    /// Arc p→sink; cut when p ends on the source side (label 0).
    pub sink_cap: Vec<f64>,
    /// `neighbor_cap[d][p]` is the arc from `p` to its neighbor in direction
    /// `d` (0 right, 1 left, 2 down, 3 up); entries without a neighbor are 0.
    pub neighbor_cap: [Vec<f64>; 4],
}

pub const RIGHT: usize = 0;
pub const LEFT: usize = 1;
pub const DOWN: usize = 2;
pub const UP: usize = 3;

impl FlowNetwork {
    pub fn zeros(shape: GridShape) -> Self {
        let n = shape.len();
        FlowNetwork {
            shape,
            src_cap: vec![0.0; n],
            sink_cap: vec![0.0; n],
            neighbor_cap: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
        }
    }

    #[inline]
    fn neighbor(&self, p: usize, d: usize) -> Option<usize> {
        let w = self.shape.width;
        let (x, y) = (p % w, p / w);
        match d {
            RIGHT if x + 1 < w => Some(p + 1),
            LEFT if x > 0 => Some(p - 1),
            DOWN if y + 1 < self.shape.height => Some(p + w),
            UP if y >= 1 => Some(p - w),
            _ => None,
        }
    }

    /// Total capacity crossing the cut defined by `side` (false = source).
    pub fn cut_value(&self, side: &[bool]) -> f64 {
        let mut total = 0.0;
        for p in 0..self.shape.len() {
            if side[p] {
                total += self.src_cap[p];
            } else {
                total += self.sink_cap[p];
            }
            for d in [RIGHT, DOWN] {
                if let Some(q) = self.neighbor(p, d) {
                    if !side[p] && side[q] {
                        total += self.neighbor_cap[d][p];
                    } else if side[p] && !side[q] {
                        total += self.neighbor_cap[d ^ 1][q];
                    }
                }
            }
        }
        total
    }
}

/// Builds the flow network for a grid energy. Returns the network together
/// with the constant that must be added to the min-cut value to obtain the
/// minimum energy.
pub fn build_grid_network(energy: &GridEnergy) -> Result<(FlowNetwork, f64)> {
    let shape = energy.shape;
    let (w, h) = (shape.width, shape.height);
    if energy.unary.len() != shape.len()
        || energy.horizontal.len() != shape.len()
        || energy.vertical.len() != shape.len()
    {
        return Err(Error::ShapeMismatch(
            "energy buffers do not match shape".to_string(),
        ));
    }
    let mut net = FlowNetwork::zeros(shape);
    let mut constant = 0.0;

    // A linear-in-one-variable term c·b goes to src_cap when c ≥ 0 (paid on
    // label 1), otherwise to sink_cap with the constant absorbing c.
    let add_linear = |net: &mut FlowNetwork, constant: &mut f64, p: usize, c: f64| {
        if c >= 0.0 {
            net.src_cap[p] += c;
        } else {
            net.sink_cap[p] += -c;
            *constant += c;
        }
    };

    for p in 0..shape.len() {
        let [u0, u1] = energy.unary[p];
        let m = u0.min(u1);
        constant += m;
        net.src_cap[p] += u1 - m;
        net.sink_cap[p] += u0 - m;
    }

    for y in 0..h {
        for x in 0..w {
            let p = shape.idx(x, y);
            let edges = [
                (RIGHT, x + 1 < w, (x + 1, y)),
                (DOWN, y + 1 < h, (x, y + 1)),
            ];
            for (dir, exists, (qx, qy)) in edges {
                if !exists {
                    continue;
                }
                let table = match if dir == RIGHT {
                    energy.horizontal[p]
                } else {
                    energy.vertical[p]
                } {
                    Some(t) => t,
                    None => continue,
                };
                let margin = table.submodularity_margin();
                if margin < -SUBMODULAR_TOL {
                    return Err(Error::NonSubmodular {
                        a: (x, y),
                        b: (qx, qy),
                        margin,
                    });
                }
                let q = shape.idx(qx, qy);
                // E(bp,bq) = e00 + (e10−e00)·bp + (e11−e10)·bq
                //          + (e01+e10−e00−e11)·(1−bp)·bq
                constant += table.e00;
                add_linear(&mut net, &mut constant, p, table.e10 - table.e00);
                add_linear(&mut net, &mut constant, q, table.e11 - table.e10);
                // cut when p stays source-side and q goes sink-side
                net.neighbor_cap[dir][p] += margin.max(0.0);
            }
        }
    }
    Ok((net, constant))
}

/// Result of a max-flow computation: the flow value and, per pixel, which
/// side of the minimum cut it ends on (`false` = source = label 0).
#[derive(Debug, Clone)]
pub struct MaxflowSolution {
    pub flow: f64,
    pub side: Vec<bool>,
}

const PARENT_NONE: u8 = 5;
const PARENT_ROOT: u8 = 4;
const TREE_FREE: u8 = 0;
const TREE_S: u8 = 1;
const TREE_T: u8 = 2;

struct Bk {
    shape: GridShape,
    tr_cap: Vec<f64>,          // >0: residual source→p, <0: residual p→sink
    rcap: [Vec<f64>; 4],       // residual neighbor arcs, same layout as FlowNetwork
    tree: Vec<u8>,
    parent: Vec<u8>,           // direction to parent, PARENT_ROOT, or PARENT_NONE
    ts: Vec<u32>,
    dist: Vec<u32>,
    active: std::collections::VecDeque<u32>,
    in_queue: Vec<bool>,
    orphans: Vec<u32>,
    time: u32,
    flow: f64,
}

impl Bk {
    #[inline]
    fn neighbor(&self, p: usize, d: usize) -> Option<usize> {
        let w = self.shape.width;
        let (x, y) = (p % w, p / w);
        match d {
            RIGHT if x + 1 < w => Some(p + 1),
            LEFT if x > 0 => Some(p - 1),
            DOWN if y + 1 < self.shape.height => Some(p + w),
            UP if y >= 1 => Some(p - w),
            _ => None,
        }
    }

    fn activate(&mut self, p: usize) {
        if !self.in_queue[p] {
            self.in_queue[p] = true;
            self.active.push_back(p as u32);
        }
    }

    /// Grows the trees until they touch; returns the bridging arc
    /// `(s_node, direction, t_node)` or `None` when the flow is maximal.
    fn grow(&mut self) -> Option<(usize, usize, usize)> {
        while let Some(p32) = self.active.pop_front() {
            let p = p32 as usize;
            self.in_queue[p] = false;
            if self.tree[p] == TREE_FREE {
                continue;
            }
            let p_tree = self.tree[p];
            for d in 0..4 {
                let q = match self.neighbor(p, d) {
                    Some(q) => q,
                    None => continue,
                };
                // arc with residual in the growth direction of this tree
                let residual = if p_tree == TREE_S {
                    self.rcap[d][p]
                } else {
                    self.rcap[d ^ 1][q]
                };
                if residual <= 0.0 {
                    continue;
                }
                if self.tree[q] == TREE_FREE {
                    self.tree[q] = p_tree;
                    self.parent[q] = (d ^ 1) as u8;
                    self.ts[q] = self.ts[p];
                    self.dist[q] = self.dist[p] + 1;
                    self.activate(q);
                } else if self.tree[q] != p_tree {
                    // trees touch: orient the bridge from the S side
                    self.activate(p); // resume from p after the augmentation
                    return if p_tree == TREE_S {
                        Some((p, d, q))
                    } else {
                        Some((q, d ^ 1, p))
                    };
                } else if self.ts[q] <= self.ts[p] && self.dist[q] > self.dist[p] + 1 {
                    // same tree: adopt the shorter path to the root
                    self.parent[q] = (d ^ 1) as u8;
                    self.ts[q] = self.ts[p];
                    self.dist[q] = self.dist[p] + 1;
                }
            }
        }
        None
    }

    fn augment(&mut self, a: usize, d_ab: usize, b: usize) {
        // bottleneck over bridge, both tree paths, and the terminal arcs
        let mut bottleneck = self.rcap[d_ab][a];
        let mut x = a;
        loop {
            let pd = self.parent[x] as usize;
            if pd == PARENT_ROOT as usize {
                bottleneck = bottleneck.min(self.tr_cap[x]);
                break;
            }
            let px = self.neighbor(x, pd).expect("parent arc");
            bottleneck = bottleneck.min(self.rcap[pd ^ 1][px]);
            x = px;
        }
        let mut x = b;
        loop {
            let pd = self.parent[x] as usize;
            if pd == PARENT_ROOT as usize {
                bottleneck = bottleneck.min(-self.tr_cap[x]);
                break;
            }
            let px = self.neighbor(x, pd).expect("parent arc");
            bottleneck = bottleneck.min(self.rcap[pd][x]);
            x = px;
        }
        debug_assert!(bottleneck > 0.0);
        self.flow += bottleneck;

        self.rcap[d_ab][a] -= bottleneck;
        self.rcap[d_ab ^ 1][b] += bottleneck;

        // S-side path: saturated arcs orphan the child endpoint
        let mut x = a;
        loop {
            let pd = self.parent[x] as usize;
            if pd == PARENT_ROOT as usize {
                self.tr_cap[x] -= bottleneck;
                if self.tr_cap[x] <= 0.0 {
                    self.parent[x] = PARENT_NONE;
                    self.orphans.push(x as u32);
                }
                break;
            }
            let px = self.neighbor(x, pd).expect("parent arc");
            self.rcap[pd][x] += bottleneck;
            self.rcap[pd ^ 1][px] -= bottleneck;
            if self.rcap[pd ^ 1][px] <= 0.0 {
                self.parent[x] = PARENT_NONE;
                self.orphans.push(x as u32);
            }
            x = px;
        }
        // T-side path
        let mut x = b;
        loop {
            let pd = self.parent[x] as usize;
            if pd == PARENT_ROOT as usize {
                self.tr_cap[x] += bottleneck;
                if self.tr_cap[x] >= 0.0 {
                    self.parent[x] = PARENT_NONE;
                    self.orphans.push(x as u32);
                }
                break;
            }
            let px = self.neighbor(x, pd).expect("parent arc");
            self.rcap[pd ^ 1][px] += bottleneck;
            self.rcap[pd][x] -= bottleneck;
            if self.rcap[pd][x] <= 0.0 {
                self.parent[x] = PARENT_NONE;
                self.orphans.push(x as u32);
            }
            x = px;
        }
    }

    /// Distance from `x` to its tree root, or `None` if the chain dangles.
    /// Marks the walked nodes with the current timestamp for reuse.
    fn origin_distance(&mut self, start: usize) -> Option<u32> {
        let mut d = 0u32;
        let mut x = start;
        let total = loop {
            if self.ts[x] == self.time {
                break d + self.dist[x];
            }
            d += 1;
            match self.parent[x] as usize {
                p if p == PARENT_ROOT as usize => break d,
                p if p == PARENT_NONE as usize => return None,
                pd => x = self.neighbor(x, pd).expect("parent arc"),
            }
        };
        // second pass: cache distances along the walked prefix
        let mut x = start;
        let mut dd = total;
        while self.ts[x] != self.time {
            self.ts[x] = self.time;
            self.dist[x] = dd;
            dd -= 1;
            match self.parent[x] as usize {
                p if p == PARENT_ROOT as usize || p == PARENT_NONE as usize => break,
                pd => x = self.neighbor(x, pd).expect("parent arc"),
            }
        }
        Some(total)
    }

    fn adopt(&mut self) {
        while let Some(p32) = self.orphans.pop() {
            let p = p32 as usize;
            let p_tree = self.tree[p];
            debug_assert_ne!(p_tree, TREE_FREE);
            let mut best: Option<(usize, u32)> = None;
            for d in 0..4 {
                let q = match self.neighbor(p, d) {
                    Some(q) => q,
                    None => continue,
                };
                if self.tree[q] != p_tree {
                    continue;
                }
                let residual = if p_tree == TREE_S {
                    self.rcap[d ^ 1][q] // arc q→p feeds p from the source side
                } else {
                    self.rcap[d][p] // arc p→q drains p toward the sink
                };
                if residual <= 0.0 {
                    continue;
                }
                if let Some(od) = self.origin_distance(q) {
                    if best.map_or(true, |(_, bd)| od < bd) {
                        best = Some((d, od));
                    }
                }
            }
            match best {
                Some((d, od)) => {
                    self.parent[p] = d as u8;
                    self.ts[p] = self.time;
                    self.dist[p] = od + 1;
                }
                None => {
                    // no parent: release p, re-examine its tree neighbors
                    for d in 0..4 {
                        let q = match self.neighbor(p, d) {
                            Some(q) => q,
                            None => continue,
                        };
                        if self.tree[q] != p_tree {
                            continue;
                        }
                        let residual = if p_tree == TREE_S {
                            self.rcap[d ^ 1][q]
                        } else {
                            self.rcap[d][p]
                        };
                        if residual > 0.0 {
                            self.activate(q);
                        }
                        if self.parent[q] as usize == (d ^ 1) {
                            self.parent[q] = PARENT_NONE;
                            self.orphans.push(q as u32);
                        }
                    }
                    self.tree[p] = TREE_FREE;
                }
            }
        }
    }
}

/// Computes the maximum flow / minimum cut of a grid network.
pub fn solve_maxflow(network: &FlowNetwork) -> MaxflowSolution {
    let n = network.shape.len();
    let mut bk = Bk {
        shape: network.shape,
        tr_cap: vec![0.0; n],
        rcap: network.neighbor_cap.clone(),
        tree: vec![TREE_FREE; n],
        parent: vec![PARENT_NONE; n],
        ts: vec![0; n],
        dist: vec![0; n],
        active: std::collections::VecDeque::new(),
        in_queue: vec![false; n],
        orphans: Vec::new(),
        time: 0,
        flow: 0.0,
    };
    for p in 0..n {
        let (s, t) = (network.src_cap[p], network.sink_cap[p]);
        bk.flow += s.min(t); // both terminal arcs partially cancel
        bk.tr_cap[p] = s - t;
        if bk.tr_cap[p] > 0.0 {
            bk.tree[p] = TREE_S;
            bk.parent[p] = PARENT_ROOT;
            bk.dist[p] = 1;
            bk.activate(p);
        } else if bk.tr_cap[p] < 0.0 {
            bk.tree[p] = TREE_T;
            bk.parent[p] = PARENT_ROOT;
            bk.dist[p] = 1;
            bk.activate(p);
        }
    }
    while let Some((a, d, b)) = bk.grow() {
        bk.time += 1;
        bk.augment(a, d, b);
        bk.adopt();
    }

    // Source side = nodes reachable from the source in the residual graph.
    // An explicit sweep keeps the tie-break rule independent of tree state.
    let mut side = vec![true; n];
    let mut queue = std::collections::VecDeque::new();
    for p in 0..n {
        if bk.tr_cap[p] > 0.0 {
            side[p] = false;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for d in 0..4 {
            if let Some(q) = bk.neighbor(p, d) {
                if side[q] && bk.rcap[d][p] > 0.0 {
                    side[q] = false;
                    queue.push_back(q);
                }
            }
        }
    }
    MaxflowSolution { flow: bk.flow, side }
}

/// Convenience: reduce a grid energy, solve it, and return the labeling
/// with its exact energy (`flow + constant`).
pub fn minimize_grid_energy(energy: &GridEnergy) -> Result<(Vec<bool>, f64)> {
    let (network, constant) = build_grid_network(energy)?;
    let solution = solve_maxflow(&network);
    Ok((solution.side, solution.flow + constant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn shape(w: usize, h: usize) -> GridShape {
        GridShape::new(w, h).unwrap()
    }

    #[test]
    fn single_terminal_pair_takes_cheaper_side() {
        let mut net = FlowNetwork::zeros(shape(2, 2));
        net.src_cap[0] = 3.0;
        net.sink_cap[0] = 7.0;
        let sol = solve_maxflow(&net);
        assert_eq!(sol.flow, 3.0);
        // the source arc saturates, so the node is not source-reachable
        assert!(sol.side[0]);
        assert!((net.cut_value(&sol.side) - sol.flow).abs() < 1e-12);
    }

    #[test]
    fn unary_only_energy() {
        let mut energy = GridEnergy::new(shape(2, 2));
        energy.unary[0] = [0.0, 5.0];
        energy.unary[1] = [5.0, 0.0];
        energy.unary[2] = [2.0, 1.0];
        energy.unary[3] = [0.0, 0.0];
        let (labels, value) = minimize_grid_energy(&energy).unwrap();
        assert!(!labels[0]);
        assert!(labels[1]);
        assert!(labels[2]);
        // a node with no residual from the source lands on the sink side,
        // even when both labels cost the same
        assert!(labels[3]);
        assert!((value - 1.0).abs() < 1e-12);
        assert!((energy.cost(&labels) - value).abs() < 1e-12);
    }

    fn random_table(rng: &mut impl Rng) -> PairwiseTable {
        // submodular by construction: lift e01/e10
        let base: [f64; 4] = std::array::from_fn(|_| rng.random::<f64>() * 4.0);
        let bump = rng.random::<f64>() * 4.0;
        PairwiseTable {
            e00: base[0],
            e01: base[1] + bump,
            e10: base[2] + bump,
            e11: base[3].min(base[1] + base[2] + 2.0 * bump - base[0]),
        }
    }

    fn brute_force(energy: &GridEnergy) -> (Vec<bool>, f64) {
        let n = energy.shape.len();
        assert!(n <= 16);
        let mut best = (vec![false; n], f64::INFINITY);
        for bits in 0..(1u32 << n) {
            let labels: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let c = energy.cost(&labels);
            if c < best.1 {
                best = (labels, c);
            }
        }
        best
    }

    #[test]
    fn two_pixel_exhaustive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let mut energy = GridEnergy::new(shape(2, 2));
            for u in &mut energy.unary {
                *u = [rng.random::<f64>() * 3.0, rng.random::<f64>() * 3.0];
            }
            energy.horizontal[0] = Some(random_table(&mut rng));
            let (_, value) = minimize_grid_energy(&energy).unwrap();
            let (_, want) = brute_force(&energy);
            assert!(
                (value - want).abs() < 1e-9,
                "solver {value} vs brute force {want}"
            );
        }
    }

    #[test]
    fn random_3x3_grids_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for round in 0..100 {
            let s = shape(3, 3);
            let mut energy = GridEnergy::new(s);
            for u in &mut energy.unary {
                *u = [rng.random::<f64>() * 5.0, rng.random::<f64>() * 5.0];
            }
            for y in 0..3 {
                for x in 0..3 {
                    let i = s.idx(x, y);
                    if x + 1 < 3 && rng.random::<f64>() > 0.15 {
                        energy.horizontal[i] = Some(random_table(&mut rng));
                    }
                    if y + 1 < 3 && rng.random::<f64>() > 0.15 {
                        energy.vertical[i] = Some(random_table(&mut rng));
                    }
                }
            }
            let (labels, value) = minimize_grid_energy(&energy).unwrap();
            let (_, want) = brute_force(&energy);
            assert!(
                (value - want).abs() < 1e-9,
                "round {round}: solver {value} vs brute force {want}"
            );
            assert!((energy.cost(&labels) - value).abs() < 1e-9);
        }
    }

    #[test]
    fn flow_equals_cut_capacity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let s = shape(4, 3);
            let mut net = FlowNetwork::zeros(s);
            for p in 0..s.len() {
                net.src_cap[p] = rng.random::<f64>() * 3.0;
                net.sink_cap[p] = rng.random::<f64>() * 3.0;
                for d in 0..4 {
                    if net.neighbor(p, d).is_some() {
                        net.neighbor_cap[d][p] = rng.random::<f64>() * 2.0;
                    }
                }
            }
            let sol = solve_maxflow(&net);
            let cut = net.cut_value(&sol.side);
            assert!(
                (sol.flow - cut).abs() < 1e-9,
                "flow {} vs cut {}",
                sol.flow,
                cut
            );
        }
    }

    #[test]
    fn rejects_non_submodular_tables() {
        let mut energy = GridEnergy::new(shape(3, 2));
        energy.vertical[1] = Some(PairwiseTable {
            e00: 5.0,
            e01: 1.0,
            e10: 1.0,
            e11: 5.0,
        });
        let err = build_grid_network(&energy).unwrap_err();
        match err {
            Error::NonSubmodular { a, b, .. } => {
                assert_eq!(a, (1, 0));
                assert_eq!(b, (1, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn saturated_bottleneck_splits_chain() {
        // source→A→B→sink with neighbor bottleneck 1.5
        let mut net = FlowNetwork::zeros(shape(2, 2));
        net.src_cap[0] = 10.0;
        net.neighbor_cap[RIGHT][0] = 1.5;
        net.sink_cap[1] = 10.0;
        let sol = solve_maxflow(&net);
        assert!((sol.flow - 1.5).abs() < 1e-12);
        assert!(!sol.side[0]);
        assert!(sol.side[1]);
    }
}
