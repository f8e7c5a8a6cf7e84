//! Corpora of labeled CFGs, metamorphic-relation input transformations, and
//! a seeded synthetic corpus generator.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::cfg::{load_graph, ControlFlowGraph, Diagnostic, LabelMap};
use crate::error::{Error, Result};
use crate::featurize::{build_vocabulary, extract, featurize_all, FeatureMatrix, FeatureVocabulary};
use crate::Label;

/// The six metamorphic relations, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mr {
    Addition,
    Multiplication,
    Permutation,
    Inclusion,
    Exclusion,
    Inversion,
}

impl Mr {
    pub const ALL: [Mr; 6] = [
        Mr::Addition,
        Mr::Multiplication,
        Mr::Permutation,
        Mr::Inclusion,
        Mr::Exclusion,
        Mr::Inversion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mr::Addition => "addition",
            Mr::Multiplication => "multiplication",
            Mr::Permutation => "permutation",
            Mr::Inclusion => "inclusion",
            Mr::Exclusion => "exclusion",
            Mr::Inversion => "inversion",
        }
    }

    /// Statement token whose presence drives this relation's label in
    /// synthetic corpora.
    pub fn motif_token(self) -> &'static str {
        match self {
            Mr::Addition => "add",
            Mr::Multiplication => "mult",
            Mr::Permutation => "swap",
            Mr::Inclusion => "append",
            Mr::Exclusion => "remove",
            Mr::Inversion => "div",
        }
    }
}

impl fmt::Display for Mr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mr::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown metamorphic relation {s:?}")))
    }
}

pub const LABELS_HEADER: &str = "method_id,addition,multiplication,permutation,inclusion,exclusion,inversion";

/// Applies the relation's input transformation to build a follow-up input.
///
/// Addition adds `c` to each element, multiplication scales by `c`,
/// permutation rotates right by one, inclusion appends `c`, exclusion drops
/// the last element and inversion takes reciprocals.
pub fn apply_mr_transform(mr: Mr, input: &[f64], c: f64) -> Result<Vec<f64>> {
    if input.is_empty() {
        return Err(Error::InvalidParameter("input sequence is empty".into()));
    }
    Ok(match mr {
        Mr::Addition => input.iter().map(|v| v + c).collect(),
        Mr::Multiplication => input.iter().map(|v| v * c).collect(),
        Mr::Permutation => {
            let mut out = input.to_vec();
            out.rotate_right(1);
            out
        }
        Mr::Inclusion => {
            let mut out = input.to_vec();
            out.push(c);
            out
        }
        Mr::Exclusion => {
            if input.len() < 2 {
                return Err(Error::InvalidParameter("exclusion needs at least 2 elements".into()));
            }
            input[..input.len() - 1].to_vec()
        }
        Mr::Inversion => {
            if input.contains(&0.0) {
                return Err(Error::InvalidParameter("inversion of a zero element".into()));
            }
            input.iter().map(|v| 1.0 / v).collect()
        }
    })
}

/// Seeded arbitrary permutation, the general form of the permutation
/// relation.
pub fn permute_seeded(input: &[f64], seed: u64) -> Vec<f64> {
    let mut out = input.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Parses a comma-separated number list such as `"1,2,3"`.
pub fn parse_sequence(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("not a number: {t:?}")))
        })
        .collect()
}

pub fn format_sequence(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

// ---------------------------------------------------------------------------
// Loading

#[derive(Debug, Clone)]
pub struct Dataset {
    pub method_ids: Vec<String>,
    pub vocabulary: FeatureVocabulary,
    pub features: FeatureMatrix,
    pub labels: BTreeMap<Mr, Vec<Label>>,
    /// SHA-256 over graph sources and the labels file.
    pub fingerprint: String,
}

impl Dataset {
    pub fn labels(&self, mr: Mr) -> &[Label] {
        &self.labels[&mr]
    }

    pub fn len(&self) -> usize {
        self.method_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.method_ids.is_empty()
    }
}

/// Parsed labels table: method ids in file order and one column per MR.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub method_ids: Vec<String>,
    pub labels: BTreeMap<Mr, Vec<Label>>,
}

pub fn parse_labels_csv(text: &str) -> Result<LabelTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::LabelsFormat("empty labels file".into()))??;
    let header: Vec<&str> = header.iter().collect();
    if header.join(",") != LABELS_HEADER {
        return Err(Error::LabelsFormat(format!("header must be `{LABELS_HEADER}`")));
    }
    let mut ids = Vec::new();
    let mut seen = HashSet::new();
    let mut columns: Vec<Vec<Label>> = vec![Vec::new(); Mr::ALL.len()];
    for rec in records {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != Mr::ALL.len() + 1 {
            return Err(Error::LabelsFormat(format!(
                "row {row}: expected {} fields, found {}",
                Mr::ALL.len() + 1,
                rec.len()
            )));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(Error::LabelsFormat(format!("row {row}: empty method_id")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateMethod(id));
        }
        for (col, cell) in columns.iter_mut().zip(rec.iter().skip(1)) {
            col.push(match cell {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::InvalidLabel {
                        row,
                        value: other.to_string(),
                    })
                }
            });
        }
        ids.push(id);
    }
    Ok(LabelTable {
        method_ids: ids,
        labels: Mr::ALL.into_iter().zip(columns).collect(),
    })
}

struct Featurized {
    ids: Vec<String>,
    vocabulary: FeatureVocabulary,
    matrix: FeatureMatrix,
    diagnostics: Vec<Diagnostic>,
    hasher: Sha256,
}

/// One source file after reading and validation.
type LoadedGraph = (String, Vec<u8>, ControlFlowGraph, Vec<Diagnostic>);

fn featurize_sources(sources: Vec<(String, PathBuf)>, labels: &LabelMap) -> Result<Featurized> {
    let loaded: Vec<Result<LoadedGraph>> = sources
        .into_par_iter()
        .map(|(id, path)| {
            let bytes = match std::fs::read(&path) {
                Ok(b) => b,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingGraph(id)),
                Err(e) => return Err(Error::io(&path, e)),
            };
            let text = String::from_utf8_lossy(&bytes);
            let (g, diags) = load_graph(&text, labels).map_err(|e| match e {
                Error::InvalidGraph(msg) => Error::InvalidGraph(format!("{}: {msg}", path.display())),
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", path.display()),
                },
                Error::EmptyGraph => Error::InvalidGraph(format!("{}: empty graph", path.display())),
                other => other,
            })?;
            let diags = diags
                .into_iter()
                .map(|mut d| {
                    d.subject = format!("{}: {}", path.display(), d.subject);
                    d
                })
                .collect();
            Ok((id, bytes, g, diags))
        })
        .collect();

    let mut hasher = Sha256::new();
    let mut ids = Vec::new();
    let mut bags = Vec::new();
    let mut diagnostics = Vec::new();
    for item in loaded {
        let (id, bytes, g, diags) = item?;
        hasher.update(id.as_bytes());
        hasher.update([0]);
        hasher.update(&bytes);
        hasher.update([0]);
        bags.push(extract(&g));
        diagnostics.extend(diags);
        ids.push(id);
    }
    if bags.is_empty() {
        return Err(Error::InsufficientData("corpus has no methods".into()));
    }
    let vocabulary = build_vocabulary(&bags)?;
    let (matrix, _) = featurize_all(ids.clone(), &bags, &vocabulary)?;
    Ok(Featurized {
        ids,
        vocabulary,
        matrix,
        diagnostics,
        hasher,
    })
}

/// Loads `<dot_dir>/<method_id>.dot` for every row of the labels file and
/// builds the design matrix over a corpus-wide vocabulary. Returned
/// diagnostics are warnings; graph errors abort the load.
pub fn load_corpus(dot_dir: &Path, labels_csv: &Path, label_map: &LabelMap) -> Result<(Dataset, Vec<Diagnostic>)> {
    let text = std::fs::read_to_string(labels_csv).map_err(|e| Error::io(labels_csv, e))?;
    let table = parse_labels_csv(&text)?;
    let sources = table
        .method_ids
        .iter()
        .map(|id| (id.clone(), dot_dir.join(format!("{id}.dot"))))
        .collect();
    let mut f = featurize_sources(sources, label_map)?;
    f.hasher.update(text.as_bytes());
    let dataset = Dataset {
        method_ids: f.ids,
        vocabulary: f.vocabulary,
        features: f.matrix,
        labels: table.labels,
        fingerprint: hex::encode(f.hasher.finalize()),
    };
    Ok((dataset, f.diagnostics))
}

/// Featurizes every `*.dot` file in `dir` (sorted by file name; the method
/// id is the file stem), without labels.
pub fn featurize_dir(dir: &Path, label_map: &LabelMap) -> Result<(FeatureVocabulary, FeatureMatrix, Vec<Diagnostic>)> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut sources = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "dot") {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            sources.push((id, path));
        }
    }
    sources.sort();
    let f = featurize_sources(sources, label_map)?;
    Ok((f.vocabulary, f.matrix, f.diagnostics))
}

// ---------------------------------------------------------------------------
// Synthetic corpora

const FILLER_TOKENS: [&str; 6] = ["assi", "call", "load", "store", "cmp", "sub"];

/// Generated corpus held in memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    /// `(method_id, dot source)` pairs.
    pub methods: Vec<(String, String)>,
    pub labels_csv: String,
}

#[derive(Debug)]
enum Block {
    Stmt(&'static str),
    If(Vec<Block>, Vec<Block>),
    Loop(Vec<Block>),
}

fn random_blocks(stmts: Vec<&'static str>, rng: &mut ChaCha8Rng) -> Vec<Block> {
    let mut out = Vec::new();
    let mut rest = stmts.into_iter().peekable();
    while rest.peek().is_some() {
        let roll: f64 = rng.random();
        if roll < 0.55 {
            out.push(Block::Stmt(rest.next().expect("peeked")));
            continue;
        }
        let take = rng.random_range(1..=3);
        let body: Vec<&'static str> = rest.by_ref().take(take).collect();
        if roll < 0.8 {
            let split = rng.random_range(0..=body.len());
            let mut then = body;
            let els = then.split_off(split);
            let then = if then.is_empty() {
                vec![Block::Stmt(random_filler(rng))]
            } else {
                then.into_iter().map(Block::Stmt).collect()
            };
            out.push(Block::If(then, els.into_iter().map(Block::Stmt).collect()));
        } else {
            out.push(Block::Loop(body.into_iter().map(Block::Stmt).collect()));
        }
    }
    out
}

struct Builder {
    g: ControlFlowGraph,
}

impl Builder {
    fn node(&mut self, label: &str) -> usize {
        let id = format!("n{}", self.g.node_count());
        self.g.add_node(&id, label)
    }

    fn link(&mut self, preds: &[usize], to: usize) {
        for &p in preds {
            self.g.add_edge(p, to);
        }
    }

    /// Emits `blocks` after `preds`; returns the dangling exits.
    fn emit(&mut self, blocks: &[Block], preds: Vec<usize>) -> Vec<usize> {
        let mut preds = preds;
        for block in blocks {
            preds = match block {
                Block::Stmt(tok) => {
                    let n = self.node(tok);
                    self.link(&preds, n);
                    vec![n]
                }
                Block::If(then, els) => {
                    let cond = self.node("if");
                    self.link(&preds, cond);
                    let mut exits = self.emit(then, vec![cond]);
                    if els.is_empty() {
                        exits.push(cond);
                    } else {
                        exits.extend(self.emit(els, vec![cond]));
                    }
                    exits
                }
                Block::Loop(body) => {
                    let head = self.node("loop");
                    self.link(&preds, head);
                    let tails = self.emit(body, vec![head]);
                    self.link(&tails, head);
                    vec![head]
                }
            };
        }
        preds
    }
}

/// Methods per family, on average.
const FAMILY_SIZE: usize = 8;
/// Chance that a method differs from its family on a given motif.
const MOTIF_DRIFT: f64 = 0.1;
/// Chance that a method replaces one of its family's filler statements.
const FILLER_DRIFT: f64 = 0.3;

struct Family {
    motifs: Vec<bool>,
    filler: Vec<&'static str>,
    layout_seed: u64,
}

fn random_filler(rng: &mut ChaCha8Rng) -> &'static str {
    FILLER_TOKENS[rng.random_range(0..FILLER_TOKENS.len())]
}

/// Generates `n_methods` random structured CFGs and their labels.
///
/// Methods come in families of about eight that share filler statements,
/// block layout and, mostly, motifs. Each family holds each relation's
/// motif token with probability 1/2 and each method deviates from its
/// family per motif with a small probability, so motif presence is still a
/// fair coin per method. With probability `signal` a label equals the
/// method's own motif presence; otherwise it is a fair coin flip. Output is
/// fully determined by `seed`.
pub fn generate_synthetic(n_methods: usize, seed: u64, signal: f64) -> Result<SyntheticCorpus> {
    if n_methods < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 methods, got {n_methods}")));
    }
    if !(0.0..=1.0).contains(&signal) {
        return Err(Error::InvalidParameter(format!("signal must be in [0, 1], got {signal}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_families = n_methods.div_ceil(FAMILY_SIZE).max(2);
    let families: Vec<Family> = (0..n_families)
        .map(|_| Family {
            motifs: Mr::ALL.iter().map(|_| rng.random_bool(0.5)).collect(),
            filler: (0..rng.random_range(1..=6)).map(|_| random_filler(&mut rng)).collect(),
            layout_seed: rng.random(),
        })
        .collect();

    let width = (n_methods - 1).to_string().len().max(3);
    let mut methods = Vec::with_capacity(n_methods);
    let mut csv = String::from(LABELS_HEADER);
    csv.push('\n');
    for m in 0..n_methods {
        let id = format!("m{m:0width$}");
        let family = &families[rng.random_range(0..n_families)];
        let present: Vec<bool> = family.motifs.iter().map(|&p| p != rng.random_bool(MOTIF_DRIFT)).collect();
        let mut stmts = family.filler.clone();
        if rng.random_bool(FILLER_DRIFT) {
            let at = rng.random_range(0..stmts.len());
            stmts[at] = random_filler(&mut rng);
        }
        for (mr, &p) in Mr::ALL.iter().zip(&present) {
            if p {
                stmts.push(mr.motif_token());
            }
        }
        let mut layout = ChaCha8Rng::seed_from_u64(family.layout_seed);
        stmts.shuffle(&mut layout);
        let blocks = random_blocks(stmts, &mut layout);

        let mut b = Builder {
            g: ControlFlowGraph::new(),
        };
        let start = b.node("start");
        let exits = b.emit(&blocks, vec![start]);
        let end = b.node("end");
        b.link(&exits, end);
        methods.push((id.clone(), b.g.to_dot(&id)));

        csv.push_str(&id);
        for &p in &present {
            let label = if rng.random_bool(signal) { p } else { rng.random_bool(0.5) };
            csv.push(',');
            csv.push(if label { '1' } else { '0' });
        }
        csv.push('\n');
    }
    Ok(SyntheticCorpus {
        methods,
        labels_csv: csv,
    })
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl SyntheticCorpus {
    /// Writes `<id>.dot` files and `labels.csv` into `dir`, each file via
    /// write-then-rename.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (id, dot) in &self.methods {
            write_atomic(&dir.join(format!("{id}.dot")), dot.as_bytes())?;
        }
        write_atomic(&dir.join("labels.csv"), self.labels_csv.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transform_examples() {
        assert_eq!(apply_mr_transform(Mr::Addition, &[1.0, 2.0, 3.0], 2.0).unwrap(), [3.0, 4.0, 5.0]);
        assert_eq!(apply_mr_transform(Mr::Multiplication, &[1.0, 2.0], 3.0).unwrap(), [3.0, 6.0]);
        assert_eq!(apply_mr_transform(Mr::Permutation, &[1.0, 2.0, 3.0], 0.0).unwrap(), [3.0, 1.0, 2.0]);
        assert_eq!(apply_mr_transform(Mr::Inclusion, &[1.0, 2.0], 7.0).unwrap(), [1.0, 2.0, 7.0]);
        assert_eq!(apply_mr_transform(Mr::Exclusion, &[1.0, 2.0], 0.0).unwrap(), [1.0]);
        assert_eq!(apply_mr_transform(Mr::Inversion, &[1.0, 2.0, 4.0], 0.0).unwrap(), [1.0, 0.5, 0.25]);
    }

    #[test]
    fn transform_errors() {
        assert!(apply_mr_transform(Mr::Inversion, &[1.0, 0.0], 0.0).is_err());
        assert!(apply_mr_transform(Mr::Exclusion, &[1.0], 0.0).is_err());
        assert!(apply_mr_transform(Mr::Addition, &[], 1.0).is_err());
    }

    #[test]
    fn seeded_permutation_is_a_permutation() {
        let input: Vec<f64> = (0..20).map(f64::from).collect();
        let out = permute_seeded(&input, 3);
        assert_eq!(out, permute_seeded(&input, 3));
        let mut sorted = out.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(sorted, input);
    }

    #[test]
    fn mr_names_round_trip() {
        for mr in Mr::ALL {
            assert_eq!(mr.name().parse::<Mr>().unwrap(), mr);
        }
        assert!("exclusive".parse::<Mr>().is_err());
    }

    #[test]
    fn sequence_parsing() {
        assert_eq!(parse_sequence("1, 2,3.5").unwrap(), [1.0, 2.0, 3.5]);
        assert!(parse_sequence("1,x").is_err());
        assert_eq!(format_sequence(&[3.0, 4.0, 0.5]), "3,4,0.5");
    }

    #[test]
    fn labels_csv_errors() {
        let ok = format!("{LABELS_HEADER}\na,1,0,1,0,1,0\n");
        assert_eq!(parse_labels_csv(&ok).unwrap().method_ids, ["a"]);
        let bad_value = format!("{LABELS_HEADER}\na,1,0,1,0,1,0\nb,1,2,1,0,1,0\n");
        match parse_labels_csv(&bad_value).unwrap_err() {
            Error::InvalidLabel { row, value } => assert_eq!((row, value.as_str()), (3, "2")),
            other => panic!("{other:?}"),
        }
        let dup = format!("{LABELS_HEADER}\na,1,0,1,0,1,0\na,1,0,1,0,1,0\n");
        assert!(matches!(parse_labels_csv(&dup), Err(Error::DuplicateMethod(_))));
        assert!(matches!(parse_labels_csv("id,x\n"), Err(Error::LabelsFormat(_))));
    }

    #[test]
    fn synthetic_is_deterministic_and_valid() {
        let a = generate_synthetic(20, 11, 0.5).unwrap();
        assert_eq!(a, generate_synthetic(20, 11, 0.5).unwrap());
        assert_ne!(a, generate_synthetic(20, 12, 0.5).unwrap());
        for (_, dot) in &a.methods {
            let (_, diags) = load_graph(dot, &LabelMap::default()).unwrap();
            assert!(diags.is_empty(), "{diags:?}");
        }
        assert!(generate_synthetic(9, 0, 0.5).is_err());
        assert!(generate_synthetic(10, 0, 1.5).is_err());
    }

    proptest! {
        #[test]
        fn inclusion_then_exclusion_is_identity(s in prop::collection::vec(-1e6f64..1e6, 1..10), c in -10.0f64..10.0) {
            let grown = apply_mr_transform(Mr::Inclusion, &s, c).unwrap();
            prop_assert_eq!(apply_mr_transform(Mr::Exclusion, &grown, 0.0).unwrap(), s);
        }

        #[test]
        fn double_inversion_is_identity(s in prop::collection::vec(prop_oneof![0.001f64..1e3, -1e3f64..-0.001], 1..10)) {
            let back = apply_mr_transform(
                Mr::Inversion,
                &apply_mr_transform(Mr::Inversion, &s, 0.0).unwrap(),
                0.0,
            ).unwrap();
            for (a, b) in back.iter().zip(&s) {
                prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }

        #[test]
        fn n_rotations_restore_sequence(s in prop::collection::vec(-100.0f64..100.0, 1..12)) {
            let mut cur = s.clone();
            for _ in 0..s.len() {
                cur = apply_mr_transform(Mr::Permutation, &cur, 0.0).unwrap();
            }
            prop_assert_eq!(cur, s);
        }
    }
}
