//! Query-conditioned prize assignment and prize-collecting Steiner tree
//! subgraph extraction.
//!
//! The solver is a deterministic grow-and-prune heuristic: one tree per
//! positive-prize node, greedy merges along cheapest connecting paths while
//! the merged objective improves, then strong pruning of subtrees whose net
//! contribution is not positive. An exhaustive oracle for small instances
//! (`N <= 12`) pins down solution quality in tests.

use crate::graph::AttributedGraph;
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Default uniform edge cost used by [`assign_prizes`].
pub const DEFAULT_EDGE_COST: f64 = 0.5;

/// Graph plus node prizes and per-edge costs.
#[derive(Clone, Debug)]
pub struct PrizedGraph {
    pub base: AttributedGraph,
    pub prizes: Vec<f64>,
    pub edge_costs: Vec<f64>,
}

impl PrizedGraph {
    pub fn new(base: AttributedGraph, prizes: Vec<f64>, edge_costs: Vec<f64>) -> Result<Self> {
        if prizes.len() != base.node_count() {
            return Err(Error::Dimension(format!(
                "{} prizes for {} nodes",
                prizes.len(),
                base.node_count()
            )));
        }
        if edge_costs.len() != base.edges().len() {
            return Err(Error::Dimension(format!(
                "{} costs for {} edges",
                edge_costs.len(),
                base.edges().len()
            )));
        }
        if prizes.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Invalid("prizes must be finite and >= 0".to_string()));
        }
        if edge_costs.iter().any(|c| !c.is_finite() || *c <= 0.0) {
            return Err(Error::Invalid("edge costs must be finite and > 0".to_string()));
        }
        Ok(Self {
            base,
            prizes,
            edge_costs,
        })
    }
}

/// Ranks nodes by cosine similarity to `query` and hands out integer prizes
/// `top_n, top_n - 1, ..., 1` to the `top_n` best-ranked nodes (ties broken
/// by lower node index); every other prize is 0. Edge costs are uniform.
///
/// Zero-norm queries or features get similarity 0. This prize scheme is an
/// explicit stand-in; swap in [`PrizedGraph::new`] for custom prizes.
pub fn assign_prizes(g: &AttributedGraph, query: &[f64], top_n: usize) -> Result<PrizedGraph> {
    assign_prizes_with_cost(g, query, top_n, DEFAULT_EDGE_COST)
}

pub fn assign_prizes_with_cost(
    g: &AttributedGraph,
    query: &[f64],
    top_n: usize,
    edge_cost: f64,
) -> Result<PrizedGraph> {
    if query.len() != g.feature_dim() {
        return Err(Error::Dimension(format!(
            "query width {} for feature width {}",
            query.len(),
            g.feature_dim()
        )));
    }
    if edge_cost <= 0.0 || !edge_cost.is_finite() {
        return Err(Error::Invalid(format!("edge cost {edge_cost} must be > 0")));
    }
    let qnorm = norm(query);
    let n = g.node_count();
    let sims: Vec<f64> = (0..n)
        .map(|i| {
            let row = g.node_features().row(i);
            let rnorm = norm(row);
            if qnorm == 0.0 || rnorm == 0.0 {
                0.0
            } else {
                dot(query, row) / (qnorm * rnorm)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| sims[*b].partial_cmp(&sims[*a]).unwrap().then(a.cmp(b)));
    let mut prizes = vec![0.0; n];
    let top = top_n.min(n);
    for (rank, &node) in order.iter().take(top).enumerate() {
        prizes[node] = (top - rank) as f64;
    }
    let costs = vec![edge_cost; g.edges().len()];
    PrizedGraph::new(g.clone(), prizes, costs)
}

/// A subgraph of a [`PrizedGraph`]'s base, stored as indices into the base
/// node and edge lists so objectives can be scored exactly.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PcstSolution {
    /// Selected node indices, ascending.
    pub nodes: Vec<usize>,
    /// Selected edge indices into the base edge list, ascending.
    pub edges: Vec<usize>,
}

impl PcstSolution {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Materializes the induced subgraph with nodes renumbered in the order
    /// of `self.nodes`.
    pub fn to_graph(&self, base: &AttributedGraph) -> Result<AttributedGraph> {
        let mut remap = vec![usize::MAX; base.node_count()];
        for (new, &old) in self.nodes.iter().enumerate() {
            if old >= base.node_count() {
                return Err(Error::Invalid(format!("node {old} not in base graph")));
            }
            remap[old] = new;
        }
        let mut features = Matrix::zeros(self.nodes.len(), base.feature_dim());
        for (new, &old) in self.nodes.iter().enumerate() {
            features
                .row_mut(new)
                .copy_from_slice(base.node_features().row(old));
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        for &ei in &self.edges {
            let e = base
                .edges()
                .get(ei)
                .ok_or_else(|| Error::Invalid(format!("edge {ei} not in base graph")))?;
            edges.push(crate::graph::Edge {
                src: remap[e.src],
                dst: remap[e.dst],
                rel: e.rel.clone(),
                feat: e.feat.clone(),
            });
        }
        let labels = base
            .node_labels()
            .map(|ls| self.nodes.iter().map(|&i| ls[i].clone()).collect());
        AttributedGraph::new(features, edges, labels, base.is_undirected())
    }
}

/// `sum(prizes over nodes) - sum(costs over edges)`; errors when an index
/// falls outside the base graph.
pub fn pcst_objective(sub: &PcstSolution, pg: &PrizedGraph) -> Result<f64> {
    let mut value = 0.0;
    for &v in &sub.nodes {
        if v >= pg.base.node_count() {
            return Err(Error::Invalid(format!("node {v} not in base graph")));
        }
        value += pg.prizes[v];
    }
    for &e in &sub.edges {
        if e >= pg.base.edges().len() {
            return Err(Error::Invalid(format!("edge {e} not in base graph")));
        }
        value -= pg.edge_costs[e];
    }
    Ok(value)
}

/// Undirected incidence lists: `adj[u] = [(v, edge_index), ...]`.
fn adjacency_lists(pg: &PrizedGraph) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); pg.base.node_count()];
    for (i, e) in pg.base.edges().iter().enumerate() {
        adj[e.src].push((e.dst, i));
        if e.src != e.dst {
            adj[e.dst].push((e.src, i));
        }
    }
    adj
}

/// Minimum spanning tree over the edges induced by `nodes` (Kruskal,
/// deterministic tie-break by edge index). Returns `None` when the node set
/// is not connected by induced edges.
fn induced_mst(pg: &PrizedGraph, nodes: &[usize]) -> Option<Vec<usize>> {
    if nodes.len() <= 1 {
        return Some(Vec::new());
    }
    let mut member = vec![false; pg.base.node_count()];
    for &v in nodes {
        member[v] = true;
    }
    let mut candidates: Vec<usize> = pg
        .base
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| member[e.src] && member[e.dst] && e.src != e.dst)
        .map(|(i, _)| i)
        .collect();
    candidates.sort_by(|a, b| {
        pg.edge_costs[*a]
            .partial_cmp(&pg.edge_costs[*b])
            .unwrap()
            .then(a.cmp(b))
    });
    let mut leader: Vec<usize> = (0..pg.base.node_count()).collect();
    fn find(leader: &mut [usize], v: usize) -> usize {
        let mut root = v;
        while leader[root] != root {
            root = leader[root];
        }
        let mut cur = v;
        while leader[cur] != root {
            let next = leader[cur];
            leader[cur] = root;
            cur = next;
        }
        root
    }
    let mut picked = Vec::new();
    for ei in candidates {
        let e = &pg.base.edges()[ei];
        let (a, b) = (find(&mut leader, e.src), find(&mut leader, e.dst));
        if a != b {
            leader[a] = b;
            picked.push(ei);
            if picked.len() == nodes.len() - 1 {
                break;
            }
        }
    }
    (picked.len() == nodes.len() - 1).then_some(picked)
}

fn tree_value(pg: &PrizedGraph, nodes: &[usize], edges: &[usize]) -> f64 {
    nodes.iter().map(|&v| pg.prizes[v]).sum::<f64>()
        - edges.iter().map(|&e| pg.edge_costs[e]).sum::<f64>()
}

/// Cheapest-edge-cost shortest paths from a seed set; returns
/// `(dist, parent_edge, parent_node)`. O(N^2) scan, deterministic.
fn multi_source_dijkstra(
    pg: &PrizedGraph,
    adj: &[Vec<(usize, usize)>],
    sources: &[usize],
) -> (Vec<f64>, Vec<usize>, Vec<usize>) {
    let n = pg.base.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent_edge = vec![usize::MAX; n];
    let mut parent_node = vec![usize::MAX; n];
    let mut done = vec![false; n];
    for &s in sources {
        dist[s] = 0.0;
    }
    loop {
        let mut current = usize::MAX;
        for v in 0..n {
            if !done[v]
                && dist[v].is_finite()
                && (current == usize::MAX || dist[v] < dist[current])
            {
                current = v;
            }
        }
        if current == usize::MAX {
            break;
        }
        done[current] = true;
        for &(next, ei) in &adj[current] {
            let cand = dist[current] + pg.edge_costs[ei];
            if cand < dist[next] {
                dist[next] = cand;
                parent_edge[next] = ei;
                parent_node[next] = current;
            }
        }
    }
    (dist, parent_edge, parent_node)
}

/// Best connected subtree of the given tree: strong pruning via one rooted
/// pass of `net(v) = prize(v) + sum(max(0, net(child) - cost(edge)))`,
/// keeping only strictly positive child contributions.
fn strong_prune(pg: &PrizedGraph, nodes: &[usize], edges: &[usize]) -> PcstSolution {
    if nodes.is_empty() {
        return PcstSolution::default();
    }
    let mut tree_adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); pg.base.node_count()];
    for &ei in edges {
        let e = &pg.base.edges()[ei];
        tree_adj[e.src].push((e.dst, ei));
        tree_adj[e.dst].push((e.src, ei));
    }
    let root = nodes[0];
    // Iterative post-order from `root`.
    let mut order = Vec::with_capacity(nodes.len());
    let mut parent = vec![usize::MAX; pg.base.node_count()];
    let mut parent_edge = vec![usize::MAX; pg.base.node_count()];
    let mut stack = vec![root];
    parent[root] = root;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &(c, ei) in &tree_adj[v] {
            if parent[c] == usize::MAX {
                parent[c] = v;
                parent_edge[c] = ei;
                stack.push(c);
            }
        }
    }
    let mut net = vec![0.0; pg.base.node_count()];
    for &v in order.iter().rev() {
        let mut value = pg.prizes[v];
        for &(c, ei) in &tree_adj[v] {
            if parent[c] == v && c != v {
                let contribution = net[c] - pg.edge_costs[ei];
                if contribution > 0.0 {
                    value += contribution;
                }
            }
        }
        net[v] = value;
    }
    // The best subtree's top node maximizes net(v); ties pick the earliest
    // node in traversal order.
    let mut top = root;
    for &v in &order {
        if net[v] > net[top] {
            top = v;
        }
    }
    if net[top] <= 0.0 {
        return PcstSolution::default();
    }
    let mut keep_nodes = Vec::new();
    let mut keep_edges = Vec::new();
    let mut walk = vec![top];
    while let Some(v) = walk.pop() {
        keep_nodes.push(v);
        for &(c, ei) in &tree_adj[v] {
            if parent[c] == v && c != v && net[c] - pg.edge_costs[ei] > 0.0 {
                keep_edges.push(ei);
                walk.push(c);
            }
        }
    }
    keep_nodes.sort_unstable();
    keep_edges.sort_unstable();
    PcstSolution {
        nodes: keep_nodes,
        edges: keep_edges,
    }
}

/// One candidate merge between two components: the union node set (both
/// components plus the cheapest connecting path) spanned by an MST.
struct Merge {
    i: usize,
    j: usize,
    path_cost: f64,
    gain: f64,
    union: Vec<usize>,
    tree: Vec<usize>,
}

fn candidate_merges(
    pg: &PrizedGraph,
    adj: &[Vec<(usize, usize)>],
    comps: &[(Vec<usize>, Vec<usize>)],
) -> Vec<Merge> {
    let values: Vec<f64> = comps
        .iter()
        .map(|(ns, es)| tree_value(pg, ns, es))
        .collect();
    let mut merges = Vec::new();
    for i in 0..comps.len() {
        let (dist, _, parent_node) = multi_source_dijkstra(pg, adj, &comps[i].0);
        for j in (i + 1)..comps.len() {
            let mut entry = usize::MAX;
            for &v in &comps[j].0 {
                if dist[v].is_finite() && (entry == usize::MAX || dist[v] < dist[entry]) {
                    entry = v;
                }
            }
            if entry == usize::MAX {
                continue;
            }
            let mut union: Vec<usize> = comps[i].0.iter().chain(&comps[j].0).copied().collect();
            let mut walk = entry;
            while parent_node[walk] != usize::MAX {
                union.push(walk);
                walk = parent_node[walk];
            }
            union.sort_unstable();
            union.dedup();
            let Some(tree) = induced_mst(pg, &union) else {
                continue;
            };
            let merged_value = tree_value(pg, &union, &tree);
            merges.push(Merge {
                i,
                j,
                path_cost: dist[entry],
                gain: merged_value - values[i].max(values[j]),
                union,
                tree,
            });
        }
    }
    merges
}

/// How many prized nodes the exact subset dynamic program handles before
/// the solver falls back to grow-and-prune.
const DW_TERMINAL_LIMIT: usize = 10;

/// Deterministic PCST solver.
///
/// Instances with at most [`DW_TERMINAL_LIMIT`] prized nodes are solved
/// exactly by a Dreyfus-Wagner dynamic program over terminal subsets.
/// Larger instances use grow-and-prune: one tree per positive-prize node,
/// merges along cheapest connecting paths under several schedules (largest
/// positive gain, cheapest pair, and nearest-seed growth from each anchor),
/// with every intermediate tree strong-pruned and hill-climbed. The best
/// tree wins; when nothing has positive net value the empty solution is
/// returned, so the objective is always `>= 0`.
pub fn solve_pcst(pg: &PrizedGraph) -> Result<PcstSolution> {
    let adj = adjacency_lists(pg);
    let terminals: Vec<usize> = (0..pg.base.node_count())
        .filter(|&v| pg.prizes[v] > 0.0)
        .collect();
    if terminals.is_empty() {
        return Ok(PcstSolution::default());
    }
    if terminals.len() <= DW_TERMINAL_LIMIT {
        return Ok(solve_small_exact(pg, &adj, &terminals));
    }
    let seeds: Vec<(Vec<usize>, Vec<usize>)> =
        terminals.iter().map(|&v| (vec![v], Vec::new())).collect();

    let mut answer = PcstSolution::default();
    let mut answer_value = 0.0;
    let mut consider = |nodes: &[usize], edges: &[usize]| {
        let (pruned, value) = refine(pg, &adj, nodes, edges);
        if value > answer_value {
            answer_value = value;
            answer = pruned;
        }
    };
    for (nodes, edges) in &seeds {
        consider(nodes, edges);
    }

    // Schedule 1: merge the largest positive gain until none remains.
    let mut comps = seeds.clone();
    loop {
        let merges = candidate_merges(pg, &adj, &comps);
        let Some(best) = merges
            .into_iter()
            .filter(|m| m.gain > 0.0)
            .max_by(|a, b| a.gain.partial_cmp(&b.gain).unwrap().then(b.i.cmp(&a.i)))
        else {
            break;
        };
        consider(&best.union, &best.tree);
        comps.remove(best.j);
        comps.remove(best.i);
        comps.push((best.union, best.tree));
    }

    // Schedule 2: agglomerate by cheapest connecting path regardless of
    // gain; intermediate unions are pruned, so costly detours drop out.
    let mut comps = seeds.clone();
    loop {
        let merges = candidate_merges(pg, &adj, &comps);
        let Some(best) = merges.into_iter().min_by(|a, b| {
            a.path_cost
                .partial_cmp(&b.path_cost)
                .unwrap()
                .then(a.i.cmp(&b.i))
                .then(a.j.cmp(&b.j))
        }) else {
            break;
        };
        consider(&best.union, &best.tree);
        comps.remove(best.j);
        comps.remove(best.i);
        comps.push((best.union, best.tree));
    }

    // Schedule 3: shortest-path growth anchored at each seed in turn,
    // always absorbing the nearest remaining seed. Different anchors reach
    // different shared-hub topologies.
    for anchor in 0..seeds.len() {
        let mut comps = seeds.clone();
        let mut current = anchor;
        loop {
            let merges = candidate_merges(pg, &adj, &comps);
            let Some(best) = merges
                .into_iter()
                .filter(|m| m.i == current || m.j == current)
                .min_by(|a, b| {
                    a.path_cost
                        .partial_cmp(&b.path_cost)
                        .unwrap()
                        .then(a.i.cmp(&b.i))
                        .then(a.j.cmp(&b.j))
                })
            else {
                break;
            };
            consider(&best.union, &best.tree);
            comps.remove(best.j);
            comps.remove(best.i);
            comps.push((best.union, best.tree));
            current = comps.len() - 1;
        }
    }

    Ok(answer)
}

#[derive(Clone, Copy)]
enum DwChoice {
    Leaf,
    /// Attached along the edge from the stored neighbor.
    Walk(usize),
    /// Union of two subtrees meeting at this node; stores one submask.
    Split(u32),
}

/// Exact small-instance solver: Dreyfus-Wagner over terminal subsets.
/// `cost[mask][v]` is the cheapest tree connecting terminal subset `mask`
/// and node `v`; the best objective over all subsets (prizes collected
/// minus tree cost) is reconstructed into a strong-pruned tree.
#[allow(clippy::needless_range_loop)] // mask/node indices drive the DP tables
fn solve_small_exact(
    pg: &PrizedGraph,
    adj: &[Vec<(usize, usize)>],
    terminals: &[usize],
) -> PcstSolution {
    let n = pg.base.node_count();
    let t = terminals.len();
    let masks = 1usize << t;
    let mut cost = vec![vec![f64::INFINITY; n]; masks];
    let mut choice = vec![vec![DwChoice::Leaf; n]; masks];

    // Deterministic Dijkstra sweep that layers walk moves over whatever
    // seed values a mask's row already holds.
    let relax = |row: &mut Vec<f64>, choices: &mut Vec<DwChoice>| {
        let mut done = vec![false; n];
        loop {
            let mut v = usize::MAX;
            for u in 0..n {
                if !done[u] && row[u].is_finite() && (v == usize::MAX || row[u] < row[v]) {
                    v = u;
                }
            }
            if v == usize::MAX {
                break;
            }
            done[v] = true;
            for &(u, ei) in &adj[v] {
                let cand = row[v] + pg.edge_costs[ei];
                if cand < row[u] {
                    row[u] = cand;
                    choices[u] = DwChoice::Walk(v);
                }
            }
        }
    };

    for (i, &term) in terminals.iter().enumerate() {
        let mask = 1usize << i;
        cost[mask][term] = 0.0;
        relax(&mut cost[mask], &mut choice[mask]);
    }
    for mask in 1..masks {
        if mask.count_ones() <= 1 {
            continue;
        }
        // Merge complementary submask trees at every node.
        let mut sub = (mask - 1) & mask;
        while sub > 0 {
            let rest = mask ^ sub;
            if sub < rest {
                for v in 0..n {
                    let cand = cost[sub][v] + cost[rest][v];
                    if cand < cost[mask][v] {
                        cost[mask][v] = cand;
                        choice[mask][v] = DwChoice::Split(sub as u32);
                    }
                }
            }
            sub = (sub - 1) & mask;
        }
        relax(&mut cost[mask], &mut choice[mask]);
    }

    let mut best_value = 0.0;
    let mut best: Option<(usize, usize)> = None;
    for mask in 1..masks {
        let prize: f64 = (0..t)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| pg.prizes[terminals[i]])
            .sum();
        for v in 0..n {
            let value = prize - cost[mask][v];
            if value > best_value {
                best_value = value;
                best = Some((mask, v));
            }
        }
    }
    let Some((mask, root)) = best else {
        return PcstSolution::default();
    };

    // Collect the tree's node set, then re-span and prune it.
    let mut nodes = Vec::new();
    let mut stack = vec![(mask, root)];
    while let Some((mask, v)) = stack.pop() {
        nodes.push(v);
        match choice[mask][v] {
            DwChoice::Leaf => {}
            DwChoice::Walk(u) => stack.push((mask, u)),
            DwChoice::Split(sub) => {
                stack.push((sub as usize, v));
                stack.push((mask ^ sub as usize, v));
            }
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    let tree = induced_mst(pg, &nodes).expect("reconstructed node set is connected");
    strong_prune(pg, &nodes, &tree)
}

/// Strong-prunes a tree, then hill-climbs: repeatedly try growing the node
/// set by one adjacent node, or by an adjacent node plus one of its
/// neighbors, re-spanning and re-pruning after each move, while the pruned
/// value improves. Deterministic: the best move wins, ties go to the
/// earliest candidate.
fn refine(
    pg: &PrizedGraph,
    adj: &[Vec<(usize, usize)>],
    nodes: &[usize],
    edges: &[usize],
) -> (PcstSolution, f64) {
    let mut current = strong_prune(pg, nodes, edges);
    let mut value = tree_value(pg, &current.nodes, &current.edges);
    if current.is_empty() {
        return (current, value);
    }
    loop {
        let mut in_tree = vec![false; pg.base.node_count()];
        for &v in &current.nodes {
            in_tree[v] = true;
        }
        // Frontier: nodes one edge away from the tree.
        let mut frontier = Vec::new();
        {
            let mut seen = vec![false; pg.base.node_count()];
            for &v in &current.nodes {
                for &(u, _) in &adj[v] {
                    if !in_tree[u] && !seen[u] {
                        seen[u] = true;
                        frontier.push(u);
                    }
                }
            }
            frontier.sort_unstable();
        }
        let mut best: Option<(f64, PcstSolution)> = None;
        let try_union = |extra: &[usize], best: &mut Option<(f64, PcstSolution)>| {
            let mut union = current.nodes.clone();
            union.extend_from_slice(extra);
            union.sort_unstable();
            union.dedup();
            if let Some(tree) = induced_mst(pg, &union) {
                let pruned = strong_prune(pg, &union, &tree);
                let v = tree_value(pg, &pruned.nodes, &pruned.edges);
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    *best = Some((v, pruned));
                }
            }
        };
        for &v in &frontier {
            try_union(&[v], &mut best);
            let mut seconds: Vec<usize> = adj[v]
                .iter()
                .map(|&(u, _)| u)
                .filter(|&u| !in_tree[u] && u != v)
                .collect();
            seconds.sort_unstable();
            seconds.dedup();
            for w in seconds {
                try_union(&[v, w], &mut best);
            }
        }
        match best {
            Some((v, pruned)) if v > value + 1e-12 => {
                value = v;
                current = pruned;
            }
            _ => break,
        }
    }
    (current, value)
}

/// Exhaustive optimum for `N <= 12`: enumerates connected vertex subsets,
/// costs each with a minimum spanning tree over induced edges, and returns
/// the best objective (the empty set scores 0).
pub fn exact_pcst_oracle(pg: &PrizedGraph) -> Result<f64> {
    exact_pcst_search(pg).map(|(value, _)| value)
}

/// [`exact_pcst_oracle`] plus the maximizing vertex set (first maximum in
/// subset enumeration order).
pub fn exact_pcst_search(pg: &PrizedGraph) -> Result<(f64, Vec<usize>)> {
    let n = pg.base.node_count();
    if n > 12 {
        return Err(Error::Invalid(format!(
            "exact oracle refuses N = {n} > 12"
        )));
    }
    let adj = adjacency_lists(pg);
    let mut best = 0.0;
    let mut best_set = Vec::new();
    for mask in 1u32..(1 << n) {
        let nodes: Vec<usize> = (0..n).filter(|v| mask & (1 << v) != 0).collect();
        if !subset_connected(&nodes, &adj) {
            continue;
        }
        let Some(tree) = induced_mst(pg, &nodes) else {
            continue;
        };
        let value = tree_value(pg, &nodes, &tree);
        if value > best {
            best = value;
            best_set = nodes;
        }
    }
    Ok((best, best_set))
}

fn subset_connected(nodes: &[usize], adj: &[Vec<(usize, usize)>]) -> bool {
    if nodes.len() <= 1 {
        return true;
    }
    let mut member = vec![false; adj.len()];
    for &v in nodes {
        member[v] = true;
    }
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![nodes[0]];
    seen[nodes[0]] = true;
    let mut count = 0;
    while let Some(v) = stack.pop() {
        count += 1;
        for &(u, _) in &adj[v] {
            if member[u] && !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    count == nodes.len()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
