//! Layered edge lists: a TSV on-disk format for undirected multi-layer
//! networks, plus the preprocessing pipeline that turns a weighted graph
//! into a binary adjacency tensor (weight thresholding, dropping layers
//! with small largest connected components, node-set intersection).
//!
//! File format, tab-separated:
//!
//! ```text
//! # free comments
//! #layers<TAB>trade_wheat<TAB>trade_rice
//! #nodes<TAB>AUT<TAB>BEL<TAB>CAN
//! trade_wheat<TAB>AUT<TAB>BEL<TAB>12.5
//! trade_rice<TAB>BEL<TAB>CAN<TAB>3
//! ```
//!
//! `#layers` and `#nodes` lines are repeatable declarations; `#nodes` is
//! optional (ids are otherwise interned in first-seen order) but keeps
//! isolated nodes across a write/read round trip. Edges are undirected
//! and stored once; duplicate `(u,v)` / `(v,u)` rows merge by maximum
//! weight.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// An undirected weighted multi-layer network over a shared node set.
/// Edges are stored once per unordered pair with `src <= dst` (indices
/// into `node_ids`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGraph {
    layer_names: Vec<String>,
    node_ids: Vec<String>,
    /// Per layer: (src, dst, weight), deduplicated, src <= dst.
    edges: Vec<Vec<(usize, usize, f64)>>,
}

impl LayeredGraph {
    pub fn new(
        layer_names: Vec<String>,
        node_ids: Vec<String>,
        edges: Vec<Vec<(usize, usize, f64)>>,
    ) -> Result<Self> {
        if edges.len() != layer_names.len() {
            return Err(Error::InvalidParameter(format!(
                "{} edge lists for {} layers",
                edges.len(),
                layer_names.len()
            )));
        }
        let n = node_ids.len();
        let mut normalized = Vec::with_capacity(edges.len());
        for per_layer in edges {
            let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
            for (src, dst, w) in per_layer {
                if src >= n || dst >= n {
                    return Err(Error::InvalidParameter(format!(
                        "edge ({src},{dst}) references a node outside 0..{n}"
                    )));
                }
                if !(w >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "edge ({src},{dst}) has negative or non-finite weight {w}"
                    )));
                }
                let key = (src.min(dst), src.max(dst));
                let slot = merged.entry(key).or_insert(0.0);
                *slot = slot.max(w);
            }
            let mut list: Vec<(usize, usize, f64)> =
                merged.into_iter().map(|((s, d), w)| (s, d, w)).collect();
            list.sort_by_key(|&(s, d, _)| (s, d));
            normalized.push(list);
        }
        Ok(Self { layer_names, node_ids, edges: normalized })
    }

    pub fn layer_names(&self) -> &[String] {
        &self.layer_names
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn num_layers(&self) -> usize {
        self.layer_names.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edges(&self, layer: usize) -> &[(usize, usize, f64)] {
        &self.edges[layer]
    }

    /// Converts a tensor of non-negative symmetric slices into a graph,
    /// storing each strictly positive entry of the upper triangle
    /// (diagonal included) as one edge. Nodes are named `v0, v1, ...`
    /// and layers `layer0, layer1, ...`.
    pub fn from_tensor(t: &Tensor3) -> Result<Self> {
        let (n, n2, l) = t.dims();
        assert_eq!(n, n2, "graph slices must be square");
        let node_ids = (0..n).map(|i| format!("v{i}")).collect();
        let layer_names = (0..l).map(|j| format!("layer{j}")).collect();
        let mut edges = Vec::with_capacity(l);
        for layer in 0..l {
            let mut list = Vec::new();
            for i1 in 0..n {
                for i2 in i1..n {
                    let w = t.get(i1, i2, layer);
                    if w > 0.0 {
                        list.push((i1, i2, w));
                    }
                }
            }
            edges.push(list);
        }
        Self::new(layer_names, node_ids, edges)
    }

    /// Dense symmetric tensor of raw weights, `n x n x L`.
    pub fn to_tensor(&self) -> Tensor3 {
        let n = self.num_nodes();
        let mut t = Tensor3::zeros(n, n, self.num_layers());
        for (layer, list) in self.edges.iter().enumerate() {
            for &(src, dst, w) in list {
                t.set(src, dst, layer, w);
                t.set(dst, src, layer, w);
            }
        }
        t
    }
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Reads the TSV format documented on this module. Node ids referenced
/// by edges but not declared in a `#nodes` line are interned in
/// first-seen order after the declared ones.
pub fn load_layered_edgelist(path: impl AsRef<Path>) -> Result<LayeredGraph> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut layer_names: Vec<String> = Vec::new();
    let mut layer_index: HashMap<String, usize> = HashMap::new();
    let mut node_ids: Vec<String> = Vec::new();
    let mut node_index: HashMap<String, usize> = HashMap::new();
    let mut raw_edges: Vec<Vec<(usize, usize, f64)>> = Vec::new();

    let intern_node = |id: &str,
                           node_ids: &mut Vec<String>,
                           node_index: &mut HashMap<String, usize>|
     -> usize {
        if let Some(&i) = node_index.get(id) {
            return i;
        }
        node_ids.push(id.to_string());
        node_index.insert(id.to_string(), node_ids.len() - 1);
        node_ids.len() - 1
    };

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#layers\t") {
            for name in rest.split('\t').filter(|s| !s.is_empty()) {
                if layer_index.contains_key(name) {
                    return Err(parse_error(lineno, format!("duplicate layer '{name}'")));
                }
                layer_index.insert(name.to_string(), layer_names.len());
                layer_names.push(name.to_string());
                raw_edges.push(Vec::new());
            }
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("#nodes\t") {
            for id in rest.split('\t').filter(|s| !s.is_empty()) {
                intern_node(id, &mut node_ids, &mut node_index);
            }
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_error(
                lineno,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let layer = *layer_index.get(fields[0]).ok_or_else(|| {
            parse_error(lineno, format!("unknown layer '{}' (declare it in a #layers line)", fields[0]))
        })?;
        let src = intern_node(fields[1], &mut node_ids, &mut node_index);
        let dst = intern_node(fields[2], &mut node_ids, &mut node_index);
        let weight: f64 = fields[3]
            .parse()
            .map_err(|_| parse_error(lineno, format!("bad weight '{}'", fields[3])))?;
        if !(weight >= 0.0) {
            return Err(parse_error(lineno, format!("negative weight {weight}")));
        }
        raw_edges[layer].push((src, dst, weight));
    }
    LayeredGraph::new(layer_names, node_ids, raw_edges)
}

/// Writes the TSV format documented on this module, declaring all layers
/// and nodes so the file round-trips exactly (isolated nodes included).
pub fn write_layered_edgelist(g: &LayeredGraph, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut out = BufWriter::new(file);
    if !g.layer_names().is_empty() {
        writeln!(out, "#layers\t{}", g.layer_names().join("\t"))?;
    }
    if !g.node_ids().is_empty() {
        writeln!(out, "#nodes\t{}", g.node_ids().join("\t"))?;
    }
    for (layer, name) in g.layer_names().iter().enumerate() {
        for &(src, dst, w) in g.edges(layer) {
            writeln!(out, "{name}\t{}\t{}\t{w}", g.node_ids()[src], g.node_ids()[dst])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Disjoint-set forest for connected components.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins: keeps component labels deterministic.
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Nodes of the largest connected component under the given edges
/// (isolated nodes are singleton components); ties go to the component
/// containing the smallest node index.
fn largest_component(n: usize, edges: &[(usize, usize, f64)]) -> Vec<usize> {
    let mut uf = UnionFind::new(n);
    for &(src, dst, _) in edges {
        uf.union(src, dst);
    }
    let mut size: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        *size.entry(uf.find(i)).or_insert(0) += 1;
    }
    let best_root = (0..n)
        .map(|i| uf.find(i))
        .max_by_key(|&root| (size[&root], std::cmp::Reverse(root)))
        .unwrap();
    (0..n).filter(|&i| uf.find(i) == best_root).collect()
}

/// A preprocessed graph: the binary adjacency tensor together with the
/// ids of the surviving nodes and the names of the surviving layers.
#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub tensor: Tensor3,
    pub node_ids: Vec<String>,
    pub layer_names: Vec<String>,
}

/// Thresholds edge weights, drops weak layers, optionally intersects the
/// surviving layers' largest components, and binarizes.
///
/// Steps: (1) keep edges with weight >= `weight_min`; (2) drop layers
/// whose largest connected component has fewer than `min_component`
/// nodes; (3) if `intersect`, restrict nodes to the intersection of the
/// surviving layers' largest components, otherwise keep all nodes;
/// (4) emit a 0/1 tensor over the surviving nodes plus their ids.
pub fn preprocess(
    g: &LayeredGraph,
    weight_min: f64,
    min_component: usize,
    intersect: bool,
) -> Result<Preprocessed> {
    let n = g.num_nodes();
    let mut kept_layers: Vec<(usize, Vec<(usize, usize, f64)>, Vec<usize>)> = Vec::new();
    for layer in 0..g.num_layers() {
        let strong: Vec<(usize, usize, f64)> = g
            .edges(layer)
            .iter()
            .copied()
            .filter(|&(_, _, w)| w >= weight_min)
            .collect();
        let component = largest_component(n, &strong);
        if component.len() < min_component {
            log::info!(
                "dropping layer '{}': largest component has {} nodes (< {min_component})",
                g.layer_names()[layer],
                component.len()
            );
            continue;
        }
        kept_layers.push((layer, strong, component));
    }
    if kept_layers.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no layer survives the component threshold {min_component}"
        )));
    }

    let keep_nodes: Vec<usize> = if intersect {
        let mut alive = vec![true; n];
        let mut count = kept_layers[0].2.len();
        let mut in_first = vec![false; n];
        for &i in &kept_layers[0].2 {
            in_first[i] = true;
        }
        for i in 0..n {
            alive[i] = in_first[i];
        }
        if count == 0 {
            return Err(Error::EmptyIntersection {
                layer: g.layer_names()[kept_layers[0].0].clone(),
            });
        }
        for (orig, _, component) in kept_layers.iter().skip(1) {
            let mut member = vec![false; n];
            for &i in component {
                member[i] = true;
            }
            for i in 0..n {
                if alive[i] && !member[i] {
                    alive[i] = false;
                    count -= 1;
                }
            }
            if count == 0 {
                return Err(Error::EmptyIntersection {
                    layer: g.layer_names()[*orig].clone(),
                });
            }
        }
        (0..n).filter(|&i| alive[i]).collect()
    } else {
        (0..n).collect()
    };

    let mut remap = vec![usize::MAX; n];
    for (new, &old) in keep_nodes.iter().enumerate() {
        remap[old] = new;
    }
    let n_new = keep_nodes.len();
    let mut t = Tensor3::zeros(n_new, n_new, kept_layers.len());
    for (slot, (_, strong, _)) in kept_layers.iter().enumerate() {
        for &(src, dst, _) in strong {
            let (a, b) = (remap[src], remap[dst]);
            if a != usize::MAX && b != usize::MAX {
                t.set(a, b, slot, 1.0);
                t.set(b, a, slot, 1.0);
            }
        }
    }
    Ok(Preprocessed {
        tensor: t,
        node_ids: keep_nodes.iter().map(|&i| g.node_ids()[i].clone()).collect(),
        layer_names: kept_layers
            .iter()
            .map(|(orig, _, _)| g.layer_names()[*orig].clone())
            .collect(),
    })
}
