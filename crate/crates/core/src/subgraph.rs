//! Graphs, pattern matching, and the node/edge-privacy K-relations built
//! from the matches.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::expr::{is_identifier, Expr, ParticipantId};
use crate::krelation::{AnnotatedRelation, LinearQuery, RelationError, Schema};
use crate::mechanism::{release_evaluator, MechanismError, MechanismParams, MechanismTrace, NoiseSource};
use crate::lp::SequenceEvaluator;

/// Largest custom pattern, in nodes.
pub const MAX_PATTERN_NODES: usize = 8;
/// Default cap on the number of matches.
pub const DEFAULT_MATCH_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SubgraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
    #[error("invalid pattern: {0}")]
    Pattern(String),
    #[error("more than {limit} matches")]
    Capacity { limit: usize },
    #[error("invalid generator parameters: {0}")]
    Generator(String),
    #[error("edge variable {name} names both {first} and {second}")]
    EdgeNameCollision { name: String, first: String, second: String },
    #[error(transparent)]
    Relation(#[from] RelationError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// Simple undirected graph; node indices follow the sorted node names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<usize>>,
    num_edges: usize,
}

impl Graph {
    /// Builds a graph; self-loops are dropped and counted, duplicates merged.
    pub fn from_parts<N, E>(nodes: N, edges: E) -> Result<(Graph, usize), SubgraphError>
    where
        N: IntoIterator<Item = String>,
        E: IntoIterator<Item = (String, String)>,
    {
        let mut names: BTreeSet<String> = nodes.into_iter().collect();
        let mut pairs = BTreeSet::new();
        let mut self_loops = 0;
        for (u, v) in edges {
            if u == v {
                self_loops += 1;
                names.insert(u);
                continue;
            }
            names.insert(u.clone());
            names.insert(v.clone());
            pairs.insert(if u < v { (u, v) } else { (v, u) });
        }
        if let Some(bad) = names.iter().find(|n| !is_identifier(n)) {
            return Err(SubgraphError::Parse { line: 0, message: format!("invalid node id {bad:?}") });
        }
        let names: Vec<String> = names.into_iter().collect();
        let index: HashMap<String, usize> = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        let mut adj = vec![Vec::new(); names.len()];
        for (u, v) in &pairs {
            let (a, b) = (index[u], index[v]);
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok((Graph { names, index, adj, num_edges: pairs.len() }, self_loops))
    }

    pub fn num_nodes(&self) -> usize {
        self.names.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, v: usize) -> &str {
        &self.names[v]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges as index pairs `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn is_connected(&self) -> bool {
        if self.names.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.names.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// The graph with node `name` and its incident edges removed.
    pub fn without_node(&self, name: &str) -> Graph {
        let nodes = self.names.iter().filter(|n| *n != name).cloned();
        let edges = self
            .edges()
            .filter(|&(u, v)| self.names[u] != name && self.names[v] != name)
            .map(|(u, v)| (self.names[u].clone(), self.names[v].clone()));
        Graph::from_parts(nodes, edges).expect("subgraph of a valid graph").0
    }

    /// Edge-list text accepted by [`parse_graph`]; isolated nodes get their own line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.edges() {
            out.push_str(&format!("{} {}\n", self.names[u], self.names[v]));
        }
        for (v, name) in self.names.iter().enumerate() {
            if self.adj[v].is_empty() {
                out.push_str(name);
                out.push('\n');
            }
        }
        out
    }
}

/// Parse outcome that is not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub self_loops: usize,
}

/// Edge list: one `u v` pair per line, `#` comments, blank lines ignored.
/// A line holding a single id declares an isolated node.
pub fn parse_graph(text: &str) -> Result<(Graph, LoadReport), SubgraphError> {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() > 2 {
            return Err(SubgraphError::Parse { line, message: format!("expected `u v`, found {} fields", tokens.len()) });
        }
        if let Some(bad) = tokens.iter().find(|t| !is_identifier(t)) {
            return Err(SubgraphError::Parse { line, message: format!("invalid node id {bad:?}") });
        }
        match tokens[..] {
            [v] => nodes.push(v.to_string()),
            [u, v] => edges.push((u.to_string(), v.to_string())),
            _ => unreachable!(),
        }
    }
    let (g, self_loops) = Graph::from_parts(nodes, edges)?;
    Ok((g, LoadReport { self_loops }))
}

pub fn load_graph(path: &Path) -> Result<(Graph, LoadReport), SubgraphError> {
    let text = std::fs::read_to_string(path).map_err(|e| SubgraphError::Io(format!("{}: {e}", path.display())))?;
    parse_graph(&text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Triangle,
    Star(usize),
    KTriangle(usize),
    Custom(Graph),
}

impl Pattern {
    pub fn validate(&self) -> Result<(), SubgraphError> {
        match self {
            Pattern::Star(0) | Pattern::KTriangle(0) => Err(SubgraphError::Pattern("k must be at least 1".into())),
            Pattern::Custom(p) if p.num_nodes() == 0 => Err(SubgraphError::Pattern("empty pattern".into())),
            Pattern::Custom(p) if p.num_nodes() > MAX_PATTERN_NODES => Err(SubgraphError::Pattern(format!(
                "{} nodes; at most {MAX_PATTERN_NODES} supported",
                p.num_nodes()
            ))),
            Pattern::Custom(p) if !p.is_connected() => Err(SubgraphError::Pattern("pattern is not connected".into())),
            _ => Ok(()),
        }
    }

    /// Column names of the counting relation.
    pub fn schema(&self) -> Schema {
        let attrs: Vec<String> = match self {
            Pattern::Triangle => vec!["A".into(), "B".into(), "C".into()],
            Pattern::Star(k) => std::iter::once("center".to_string()).chain((1..=*k).map(|i| format!("L{i}"))).collect(),
            Pattern::KTriangle(k) => ["U".to_string(), "V".to_string()]
                .into_iter()
                .chain((1..=*k).map(|i| format!("W{i}")))
                .collect(),
            Pattern::Custom(p) => (0..p.num_nodes()).map(|i| format!("N{i}")).collect(),
        };
        Schema::new(attrs).expect("distinct generated names")
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Triangle => f.write_str("triangle"),
            Pattern::Star(k) => write!(f, "star:{k}"),
            Pattern::KTriangle(k) => write!(f, "ktriangle:{k}"),
            Pattern::Custom(p) => write!(f, "custom:{}n{}e", p.num_nodes(), p.num_edges()),
        }
    }
}

/// `triangle`, `star:K` or `ktriangle:K`; custom patterns come from files.
impl FromStr for Pattern {
    type Err = SubgraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| SubgraphError::Pattern(format!("bad k in {s:?}")))
        };
        let p = match s.split_once(':') {
            None if s == "triangle" => Pattern::Triangle,
            Some(("star", v)) => Pattern::Star(k(v)?),
            Some(("ktriangle", v)) => Pattern::KTriangle(k(v)?),
            _ => return Err(SubgraphError::Pattern(format!("unknown pattern {s:?}"))),
        };
        p.validate()?;
        Ok(p)
    }
}

/// One occurrence of a pattern.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Match {
    /// Graph nodes in the column order of [`Pattern::schema`].
    pub labels: Vec<usize>,
    /// Graph edges used, `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl Match {
    fn new(labels: Vec<usize>, mut edges: Vec<(usize, usize)>) -> Match {
        for e in &mut edges {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.sort_unstable();
        edges.dedup();
        Match { labels, edges }
    }

    /// Distinct nodes, sorted.
    pub fn nodes(&self) -> Vec<usize> {
        let mut v = self.labels.clone();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Calls `visit` with every `k`-subset of `items`, in lexicographic order.
fn for_each_combination<F>(items: &[usize], k: usize, mut visit: F) -> Result<(), SubgraphError>
where
    F: FnMut(&[usize]) -> Result<(), SubgraphError>,
{
    if k > items.len() {
        return Ok(());
    }
    let mut idx: Vec<usize> = (0..k).collect();
    let mut chosen: Vec<usize> = idx.iter().map(|&i| items[i]).collect();
    loop {
        visit(&chosen)?;
        let mut pos = k;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            if idx[pos] < items.len() - k + pos {
                break;
            }
        }
        idx[pos] += 1;
        for p in pos + 1..k {
            idx[p] = idx[p - 1] + 1;
        }
        for p in pos..k {
            chosen[p] = items[idx[p]];
        }
    }
}

/// All occurrences of `pat` in `g` (non-induced), in canonical order.
pub fn enumerate_matches(g: &Graph, pat: &Pattern, limit: usize) -> Result<Vec<Match>, SubgraphError> {
    pat.validate()?;
    let mut out = Vec::new();
    let mut push = |m: Match| {
        if out.len() >= limit {
            return Err(SubgraphError::Capacity { limit });
        }
        out.push(m);
        Ok(())
    };
    match pat {
        Pattern::Triangle => {
            for (u, v) in g.edges() {
                for w in sorted_intersection(g.neighbors(u), g.neighbors(v)) {
                    if w > v {
                        push(Match::new(vec![u, v, w], vec![(u, v), (u, w), (v, w)]))?;
                    }
                }
            }
        }
        Pattern::Star(k) => {
            for c in 0..g.num_nodes() {
                for_each_combination(g.neighbors(c), *k, |leaves| {
                    let labels = std::iter::once(c).chain(leaves.iter().copied()).collect();
                    push(Match::new(labels, leaves.iter().map(|&l| (c, l)).collect()))
                })?;
            }
        }
        Pattern::KTriangle(k) => {
            for (u, v) in g.edges() {
                let common = sorted_intersection(g.neighbors(u), g.neighbors(v));
                for_each_combination(&common, *k, |apexes| {
                    let labels = [u, v].into_iter().chain(apexes.iter().copied()).collect();
                    let mut edges = vec![(u, v)];
                    for &w in apexes {
                        edges.push((u, w));
                        edges.push((v, w));
                    }
                    push(Match::new(labels, edges))
                })?;
            }
        }
        Pattern::Custom(p) => {
            let autos = automorphisms(p);
            let order = connected_order(p);
            let mut image = vec![usize::MAX; p.num_nodes()];
            let mut used = vec![false; g.num_nodes()];
            embed(g, p, &order, 0, &mut image, &mut used, &mut |img| {
                let canonical = autos
                    .iter()
                    .all(|sigma| sigma.iter().map(|&s| img[s]).cmp(img.iter().copied()) != std::cmp::Ordering::Less);
                if canonical {
                    let edges = p.edges().map(|(a, b)| (img[a], img[b])).collect();
                    push(Match::new(img.to_vec(), edges))?;
                }
                Ok(())
            })?;
        }
    }
    out.sort();
    Ok(out)
}

/// Permutations `σ` of the pattern nodes with `{σa, σb}` an edge for every edge `{a, b}`.
fn automorphisms(p: &Graph) -> Vec<Vec<usize>> {
    let n = p.num_nodes();
    let mut out = Vec::new();
    let mut perm: Vec<usize> = (0..n).collect();
    // Heap's algorithm
    let mut c = vec![0; n];
    let check = |perm: &[usize]| p.edges().all(|(a, b)| p.has_edge(perm[a], perm[b]));
    if check(&perm) {
        out.push(perm.clone());
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            if check(&perm) {
                out.push(perm.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Breadth-first order of the pattern nodes, so each node after the first
/// has an already placed neighbour.
fn connected_order(p: &Graph) -> Vec<usize> {
    let mut order = vec![0];
    let mut seen = vec![false; p.num_nodes()];
    seen[0] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &v in p.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                order.push(v);
            }
        }
    }
    order
}

fn embed<F>(
    g: &Graph,
    p: &Graph,
    order: &[usize],
    depth: usize,
    image: &mut Vec<usize>,
    used: &mut Vec<bool>,
    visit: &mut F,
) -> Result<(), SubgraphError>
where
    F: FnMut(&[usize]) -> Result<(), SubgraphError>,
{
    if depth == order.len() {
        return visit(image);
    }
    let a = order[depth];
    let placed: Vec<usize> = p.neighbors(a).iter().filter(|&&b| image[b] != usize::MAX).map(|&b| image[b]).collect();
    let candidates: Vec<usize> = match placed.first() {
        None => (0..g.num_nodes()).collect(),
        Some(&anchor) => g.neighbors(anchor).to_vec(),
    };
    for v in candidates {
        if used[v] || !placed.iter().all(|&w| g.has_edge(v, w)) {
            continue;
        }
        image[a] = v;
        used[v] = true;
        embed(g, p, order, depth + 1, image, used, visit)?;
        used[v] = false;
        image[a] = usize::MAX;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrivacyMode {
    Node,
    Edge,
}

impl fmt::Display for PrivacyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrivacyMode::Node => "node",
            PrivacyMode::Edge => "edge",
        })
    }
}

impl FromStr for PrivacyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "node" => Ok(PrivacyMode::Node),
            "edge" => Ok(PrivacyMode::Edge),
            _ => Err(format!("privacy must be node or edge, got {s:?}")),
        }
    }
}

/// Participant name of the edge `{u, v}`: `e_<u>_<v>` with `u < v`.
pub fn edge_variable(g: &Graph, u: usize, v: usize) -> String {
    let (a, b) = if u < v { (u, v) } else { (v, u) };
    format!("e_{}_{}", g.name(a), g.name(b))
}

fn edge_participants(g: &Graph) -> Result<BTreeMap<(usize, usize), ParticipantId>, SubgraphError> {
    let mut seen: HashMap<String, (usize, usize)> = HashMap::new();
    let mut out = BTreeMap::new();
    for (u, v) in g.edges() {
        let name = edge_variable(g, u, v);
        if let Some(&(a, b)) = seen.get(&name) {
            return Err(SubgraphError::EdgeNameCollision {
                name,
                first: format!("{}-{}", g.name(a), g.name(b)),
                second: format!("{}-{}", g.name(u), g.name(v)),
            });
        }
        seen.insert(name.clone(), (u, v));
        out.insert((u, v), ParticipantId::new(name).expect("ids built from identifiers"));
    }
    Ok(out)
}

/// One tuple per match. Node mode: conjunction of the match's nodes over all
/// graph nodes as participants. Edge mode: conjunction of its edges over all
/// graph edges.
pub fn build_krelation(
    g: &Graph,
    pat: &Pattern,
    matches: &[Match],
    mode: PrivacyMode,
) -> Result<AnnotatedRelation, SubgraphError> {
    let node_vars: Vec<ParticipantId> = g
        .names()
        .iter()
        .map(|n| ParticipantId::new(n.clone()).expect("graph ids are identifiers"))
        .collect();
    let edge_vars = match mode {
        PrivacyMode::Edge => edge_participants(g)?,
        PrivacyMode::Node => BTreeMap::new(),
    };
    let rows = matches.iter().map(|m| {
        let values = m.labels.iter().map(|&v| g.name(v).to_string()).collect();
        let annotation = match mode {
            PrivacyMode::Node => Expr::all(m.nodes().into_iter().map(|v| Expr::Var(node_vars[v].clone()))),
            PrivacyMode::Edge => Expr::all(m.edges.iter().map(|e| Expr::Var(edge_vars[e].clone()))),
        };
        (values, annotation)
    });
    let participants = match mode {
        PrivacyMode::Node => node_vars.iter().cloned().collect(),
        PrivacyMode::Edge => edge_vars.values().cloned().collect(),
    };
    Ok(AnnotatedRelation::new(pat.schema(), rows, Some(participants))?)
}

/// Enumerate, build the relation, and release the match count.
pub fn count_pipeline(
    g: &Graph,
    pat: &Pattern,
    mode: PrivacyMode,
    params: &MechanismParams,
    ns: &mut NoiseSource,
    limit: usize,
) -> Result<(f64, MechanismTrace), SubgraphError> {
    let matches = enumerate_matches(g, pat, limit)?;
    let r = build_krelation(g, pat, &matches, mode)?;
    params.validate()?;
    let q = LinearQuery::Count;
    let mut se = SequenceEvaluator::new(&r, &q).map_err(MechanismError::from)?;
    Ok(release_evaluator(&mut se, &r, &q, params, ns)?)
}

/// Erdős–Rényi graph: each of the `C(n, 2)` edges independently with
/// probability `avgdeg / (n - 1)`. Node names are `v` plus a zero-padded index.
pub fn generate_gnp(n: usize, avgdeg: f64, seed: u64) -> Result<Graph, SubgraphError> {
    if n < 2 {
        return Err(SubgraphError::Generator(format!("n = {n}; need n >= 2")));
    }
    if !(0.0..=(n - 1) as f64).contains(&avgdeg) {
        return Err(SubgraphError::Generator(format!("avgdeg = {avgdeg}; need 0 <= avgdeg <= {}", n - 1)));
    }
    let p = avgdeg / (n - 1) as f64;
    let width = (n - 1).to_string().len();
    let names: Vec<String> = (0..n).map(|i| format!("v{i:0width$}")).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                edges.push((names[u].clone(), names[v].clone()));
            }
        }
    }
    Ok(Graph::from_parts(names.clone(), edges)?.0)
}
