//! Node and path features of a CFG, and their vectorization.
//!
//! A node feature is `<label>-<in_degree>-<out_degree>`. A path feature is
//! the dash-joined label sequence of a shortest path, either from the entry
//! to another node or from an interior node to the exit.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::io::Write;
use std::path::Path;

use crate::cfg::ControlFlowGraph;
use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

/// Multiset of feature strings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureBag {
    counts: BTreeMap<String, u64>,
}

impl FeatureBag {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, feature: impl Into<String>, count: u64) {
        let feature = feature.into();
        assert!(!feature.is_empty(), "empty feature string");
        if count > 0 {
            *self.counts.entry(feature).or_insert(0) += count;
        }
    }

    /// Count-wise sum of two bags.
    pub fn merge(&mut self, other: &FeatureBag) {
        for (f, &c) in &other.counts {
            self.add(f.clone(), c);
        }
    }

    pub fn get(&self, feature: &str) -> u64 {
        self.counts.get(feature).copied().unwrap_or(0)
    }

    /// Number of distinct features.
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(f, &c)| (f.as_str(), c))
    }
}

impl<S: Into<String>> FromIterator<(S, u64)> for FeatureBag {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        let mut bag = FeatureBag::new();
        for (f, c) in iter {
            bag.add(f, c);
        }
        bag
    }
}

pub fn node_features(g: &ControlFlowGraph) -> FeatureBag {
    let ins = g.in_degrees();
    let outs = g.out_degrees();
    g.nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| (format!("{}-{}-{}", n.label, ins[i], outs[i]), 1))
        .collect()
}

/// Shortest-path features.
///
/// Entry-to-node paths follow the BFS tree from the entry, where each node's
/// parent is the first node (in BFS order, successors visited in declaration
/// order) that discovered it. Node-to-exit paths step greedily to the first
/// successor in declaration order that is one hop closer to the exit.
/// Graphs without a unique entry or exit yield no path features.
pub fn path_features(g: &ControlFlowGraph) -> FeatureBag {
    let mut bag = FeatureBag::new();
    let (entry, exit) = match (g.entry(), g.exit()) {
        (Some(a), Some(b)) => (a, b),
        _ => return bag,
    };
    let succ = g.successors();
    let join = |path: &[usize]| -> String {
        path.iter().map(|&v| g.label(v)).collect::<Vec<_>>().join("-")
    };

    let parent = bfs_parents(entry, &succ);
    for v in 0..g.node_count() {
        if v == entry || parent[v].is_none() {
            continue;
        }
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = parent[cur] {
            if cur == entry {
                break;
            }
            path.push(p);
            cur = p;
        }
        path.reverse();
        bag.add(join(&path), 1);
    }

    let dist = bfs_distances(exit, &g.predecessors());
    for v in 0..g.node_count() {
        if v == entry || v == exit || dist[v].is_none() {
            continue;
        }
        let mut path = vec![v];
        let mut cur = v;
        while cur != exit {
            let d = dist[cur].expect("on a path to exit");
            cur = *succ[cur]
                .iter()
                .find(|&&w| dist[w] == Some(d - 1))
                .expect("some successor is one hop closer");
            path.push(cur);
        }
        bag.add(join(&path), 1);
    }
    bag
}

fn bfs_parents(start: usize, succ: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut parent = vec![None; succ.len()];
    parent[start] = Some(start);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &succ[v] {
            if parent[w].is_none() {
                parent[w] = Some(v);
                queue.push_back(w);
            }
        }
    }
    parent
}

fn bfs_distances(start: usize, adj: &[Vec<usize>]) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Node features plus path features.
pub fn extract(g: &ControlFlowGraph) -> FeatureBag {
    let mut bag = node_features(g);
    bag.merge(&path_features(g));
    bag
}

/// Sorted global feature index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVocabulary {
    features: Vec<String>,
    index: HashMap<String, usize>,
}

impl FeatureVocabulary {
    pub fn from_features<I: IntoIterator<Item = String>>(features: I) -> Result<Self> {
        let set: BTreeSet<String> = features.into_iter().collect();
        if set.is_empty() {
            return Err(Error::InsufficientData("empty feature vocabulary".into()));
        }
        let features: Vec<String> = set.into_iter().collect();
        let index = features.iter().enumerate().map(|(i, f)| (f.clone(), i)).collect();
        Ok(Self { features, index })
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn position(&self, feature: &str) -> Option<usize> {
        self.index.get(feature).copied()
    }
}

pub fn build_vocabulary(bags: &[FeatureBag]) -> Result<FeatureVocabulary> {
    FeatureVocabulary::from_features(bags.iter().flat_map(|b| b.iter().map(|(f, _)| f.to_string())))
}

/// Dense row of raw counts, plus the number of distinct bag features that
/// were not in the vocabulary and were dropped.
pub fn vectorize(bag: &FeatureBag, vocab: &FeatureVocabulary) -> (Vec<f64>, usize) {
    let mut row = vec![0.0; vocab.len()];
    let mut dropped = 0;
    for (f, c) in bag.iter() {
        match vocab.position(f) {
            Some(j) => row[j] = c as f64,
            None => dropped += 1,
        }
    }
    (row, dropped)
}

/// Design matrix with one row per method.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    row_ids: Vec<String>,
    values: DenseMatrix,
}

impl FeatureMatrix {
    pub fn new(row_ids: Vec<String>, values: DenseMatrix) -> Result<Self> {
        if row_ids.len() != values.rows() {
            return Err(Error::DimensionMismatch {
                expected: values.rows(),
                found: row_ids.len(),
            });
        }
        if values.data().iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidParameter("feature values must be non-negative".into()));
        }
        Ok(Self { row_ids, values })
    }

    /// Rows named `0..n`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let values = DenseMatrix::from_rows(rows)?;
        let ids = (0..values.rows()).map(|i| i.to_string()).collect();
        Self::new(ids, values)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    /// Matrix of the selected rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            values: self.values.select_rows(indices),
        }
    }
}

/// Vectorizes every bag against `vocab`; returns the matrix and the total
/// number of dropped out-of-vocabulary features.
pub fn featurize_all(
    ids: Vec<String>,
    bags: &[FeatureBag],
    vocab: &FeatureVocabulary,
) -> Result<(FeatureMatrix, usize)> {
    let mut rows = Vec::with_capacity(bags.len());
    let mut dropped = 0;
    for bag in bags {
        let (row, d) = vectorize(bag, vocab);
        rows.push(row);
        dropped += d;
    }
    let values = DenseMatrix::from_flat(bags.len(), vocab.len(), rows.concat())?;
    Ok((FeatureMatrix::new(ids, values)?, dropped))
}

/// Writes `method_id,<feature>,...` then one `id,count,...` line per row.
pub fn write_matrix<W: Write>(out: W, vocab: &FeatureVocabulary, matrix: &FeatureMatrix) -> Result<()> {
    if vocab.len() != matrix.cols() {
        return Err(Error::DimensionMismatch {
            expected: vocab.len(),
            found: matrix.cols(),
        });
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec!["method_id".to_string()];
    header.extend(vocab.features().iter().cloned());
    w.write_record(&header)?;
    for i in 0..matrix.rows() {
        let mut record = vec![matrix.row_ids()[i].clone()];
        record.extend(matrix.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| Error::io("<matrix>", e))?;
    Ok(())
}

pub fn save_matrix(path: &Path, vocab: &FeatureVocabulary, matrix: &FeatureMatrix) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(&mut buf, vocab, matrix)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads the format produced by [`write_matrix`].
pub fn read_matrix(text: &str) -> Result<(FeatureVocabulary, FeatureMatrix)> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::InvalidParameter("empty matrix file".into()))??;
    let features: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let vocab = FeatureVocabulary::from_features(features.clone())?;
    if vocab.features() != features.as_slice() {
        return Err(Error::InvalidParameter("matrix header is not a sorted, distinct vocabulary".into()));
    }
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for (n, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() != features.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: features.len() + 1,
                found: rec.len(),
            });
        }
        ids.push(rec[0].to_string());
        for cell in rec.iter().skip(1) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: n + 2,
                message: format!("bad count {cell:?}"),
            })?;
            data.push(v);
        }
    }
    let values = DenseMatrix::from_flat(ids.len(), features.len(), data)?;
    Ok((vocab, FeatureMatrix::new(ids, values)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{parse_dot, validate};
    use proptest::prelude::*;

    const FIXTURE: &str = r#"digraph fig1 {
        start; add1 [label="add"]; if; assi; add2 [label="add"]; end;
        start -> add1; add1 -> if; if -> assi; assi -> if; if -> add2; add2 -> end;
    }"#;

    fn bag(items: &[(&str, u64)]) -> FeatureBag {
        items.iter().map(|&(f, c)| (f, c)).collect()
    }

    #[test]
    fn fixture_node_features() {
        let g = parse_dot(FIXTURE).unwrap();
        assert_eq!(
            node_features(&g),
            bag(&[("start-0-1", 1), ("add-1-1", 2), ("if-2-2", 1), ("assi-1-1", 1), ("end-1-0", 1)])
        );
    }

    #[test]
    fn fixture_path_features() {
        let g = parse_dot(FIXTURE).unwrap();
        let expected = bag(&[
            ("start-add", 1),
            ("start-add-if", 1),
            ("start-add-if-assi", 1),
            ("start-add-if-add", 1),
            ("start-add-if-add-end", 1),
            ("add-if-add-end", 1),
            ("if-add-end", 1),
            ("assi-if-add-end", 1),
            ("add-end", 1),
        ]);
        assert_eq!(path_features(&g), expected);
    }

    #[test]
    fn fixture_extract_totals() {
        let g = parse_dot(FIXTURE).unwrap();
        let b = extract(&g);
        assert_eq!(b.len(), 14);
        assert_eq!(b.total(), 15);
    }

    #[test]
    fn small_graphs() {
        let single = parse_dot("digraph g { start; }").unwrap();
        assert_eq!(node_features(&single), bag(&[("start-0-0", 1)]));
        assert!(path_features(&single).is_empty());
        assert_eq!(extract(&single), bag(&[("start-0-0", 1)]));

        let ab = parse_dot("digraph g { a -> b; }").unwrap();
        assert_eq!(node_features(&ab), bag(&[("a-0-1", 1), ("b-1-0", 1)]));
        assert_eq!(extract(&ab), bag(&[("a-0-1", 1), ("b-1-0", 1), ("a-b", 1)]));

        let abc = parse_dot("digraph g { a -> b -> c; }").unwrap();
        assert_eq!(path_features(&abc), bag(&[("a-b", 1), ("a-b-c", 1), ("b-c", 1)]));
    }

    #[test]
    fn bfs_ties_follow_declaration_order() {
        // two shortest routes s->x->t and s->y->t; x declared first
        let g = parse_dot("digraph g { s; y; x; t; s -> x; s -> y; x -> t; y -> t; }").unwrap();
        let b = path_features(&g);
        assert_eq!(b.get("s-y-t"), 1);
        assert_eq!(b.get("s-x-t"), 0);
    }

    #[test]
    fn unreachable_nodes_contribute_no_paths() {
        let mut g = parse_dot("digraph g { a -> b; c -> d; d -> c; }").unwrap();
        validate(&mut g);
        assert_eq!(path_features(&g), bag(&[("a-b", 1)]));
    }

    #[test]
    fn vocabulary_examples() {
        let v = build_vocabulary(&[bag(&[("a", 1)]), bag(&[("b", 2)])]).unwrap();
        assert_eq!(v.features(), ["a", "b"]);
        let v = build_vocabulary(&[bag(&[("b", 1)]), bag(&[("a", 1), ("b", 1)])]).unwrap();
        assert_eq!(v.features(), ["a", "b"]);
        assert!(build_vocabulary(&[FeatureBag::new()]).is_err());
    }

    #[test]
    fn vectorize_examples() {
        let vocab = FeatureVocabulary::from_features(["f1", "f2", "f3"].map(String::from)).unwrap();
        assert_eq!(vectorize(&bag(&[("f1", 2), ("f2", 1)]), &vocab), (vec![2.0, 1.0, 0.0], 0));
        let vocab = FeatureVocabulary::from_features(["f1".to_string()]).unwrap();
        assert_eq!(vectorize(&FeatureBag::new(), &vocab), (vec![0.0], 0));
        assert_eq!(vectorize(&bag(&[("g", 5)]), &vocab), (vec![0.0], 1));
    }

    #[test]
    fn matrix_file_round_trip() {
        let bags = [bag(&[("a,b", 2), ("c", 1)]), bag(&[("c", 3)])];
        let vocab = build_vocabulary(&bags).unwrap();
        let (m, _) = featurize_all(vec!["m1".into(), "m2".into()], &bags, &vocab).unwrap();
        let mut buf = Vec::new();
        write_matrix(&mut buf, &vocab, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "method_id,\"a,b\",c\nm1,2,1\nm2,0,3\n");
        let (v2, m2) = read_matrix(&text).unwrap();
        assert_eq!(v2, vocab);
        assert_eq!(m2, m);
    }

    proptest! {
        #[test]
        fn vectorized_sum_bounded_by_bag_total(
            items in prop::collection::vec(("[a-e]{1,2}", 1u64..5), 0..10),
            vocab_items in prop::collection::btree_set("[a-e]{1,2}", 1..8),
        ) {
            let b: FeatureBag = items.into_iter().collect();
            let vocab = FeatureVocabulary::from_features(vocab_items).unwrap();
            let (row, dropped) = vectorize(&b, &vocab);
            let sum: f64 = row.iter().sum();
            prop_assert!(sum <= b.total() as f64);
            if dropped == 0 {
                prop_assert_eq!(sum, b.total() as f64);
            }
        }
    }
}
