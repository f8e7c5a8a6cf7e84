//! Control-flow graphs read from a small DOT subset.
//!
//! Supported input is a single `digraph` (optionally `strict`) whose body
//! holds node statements, `a -> b` edge statements (chains allowed), graph
//! attribute assignments and `graph`/`node`/`edge` default attribute lists.
//! Only the `label` attribute of a node is interpreted. Subgraphs, ports,
//! undirected edges and HTML strings are rejected.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Token used when a label normalizes to nothing.
pub const FALLBACK_LABEL: &str = "stmt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub label: String,
}

/// Directed graph of statement nodes.
///
/// Nodes keep file declaration order and edges are unique. Entry and exit
/// are derived from degrees: the entry is the unique node without
/// predecessors and the exit the unique node without successors. Run
/// [`validate`] to repair multiple exits before relying on them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ControlFlowGraph {
    nodes: Vec<Node>,
    edges: Vec<(usize, usize)>,
    index: HashMap<String, usize>,
}

impl ControlFlowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a node, or returns the index of an existing node with that id.
    pub fn add_node(&mut self, id: &str, label: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(Node {
            id: id.to_string(),
            label: label.to_string(),
        });
        self.index.insert(id.to_string(), i);
        i
    }

    /// Adds an edge between existing node indices. Returns `false` if the
    /// edge was already present.
    pub fn add_edge(&mut self, from: usize, to: usize) -> bool {
        assert!(from < self.nodes.len() && to < self.nodes.len(), "edge endpoint out of range");
        if self.edges.contains(&(from, to)) {
            return false;
        }
        self.edges.push((from, to));
        true
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn label(&self, node: usize) -> &str {
        &self.nodes[node].label
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(_, to) in &self.edges {
            deg[to] += 1;
        }
        deg
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(from, _) in &self.edges {
            deg[from] += 1;
        }
        deg
    }

    /// Successor lists, each sorted by declaration order.
    pub fn successors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(from, to) in &self.edges {
            adj[from].push(to);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Predecessor lists, each sorted by declaration order.
    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(from, to) in &self.edges {
            adj[to].push(from);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// The unique node with in-degree 0, if there is exactly one.
    pub fn entry(&self) -> Option<usize> {
        unique_zero(&self.in_degrees())
    }

    /// The unique node with out-degree 0, if there is exactly one.
    pub fn exit(&self) -> Option<usize> {
        unique_zero(&self.out_degrees())
    }

    /// Renders the graph in the supported DOT subset. Parsing the output
    /// yields an equal graph.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph {} {{\n", quote(name));
        for node in &self.nodes {
            out.push_str(&format!("    {} [label={}];\n", quote(&node.id), quote(&node.label)));
        }
        for &(from, to) in &self.edges {
            out.push_str(&format!(
                "    {} -> {};\n",
                quote(&self.nodes[from].id),
                quote(&self.nodes[to].id)
            ));
        }
        out.push_str("}\n");
        out
    }
}

fn unique_zero(degrees: &[usize]) -> Option<usize> {
    let mut zeros = degrees.iter().enumerate().filter(|(_, &d)| d == 0);
    match (zeros.next(), zeros.next()) {
        (Some((i, _)), None) => Some(i),
        _ => None,
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    /// Node id or file path the message is about.
    pub subject: String,
}

impl Diagnostic {
    pub fn error(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            message: message.into(),
            subject: subject.into(),
        }
    }

    pub fn warning(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            message: message.into(),
            subject: subject.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{level}: {}: {}", self.subject, self.message)
    }
}

/// Reduces raw statement text to a category token: the first
/// whitespace-delimited word, lowercased, with trailing non-alphanumeric
/// characters removed. Empty results become [`FALLBACK_LABEL`].
pub fn normalize_label(raw: &str) -> String {
    let word = raw.split_whitespace().next().unwrap_or("").to_lowercase();
    let token = word.trim_end_matches(|c: char| !c.is_alphanumeric());
    if token.is_empty() {
        FALLBACK_LABEL.to_string()
    } else {
        token.to_string()
    }
}

/// User-supplied `raw_prefix=token` overrides for label normalization.
///
/// The longest prefix matching the trimmed raw label wins; among equally
/// long prefixes the first line in the file wins. Labels matching no prefix
/// fall through to [`normalize_label`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    rules: Vec<(String, String)>,
}

impl LabelMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses one `raw_prefix=token` pair per line. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (prefix, token) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected raw_prefix=token".into(),
            })?;
            let (prefix, token) = (prefix.trim(), token.trim());
            if prefix.is_empty() || token.is_empty() {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "empty prefix or token".into(),
                });
            }
            rules.push((prefix.to_string(), token.to_string()));
        }
        Ok(Self { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn normalize(&self, raw: &str) -> String {
        let trimmed = raw.trim();
        let mut best: Option<&(String, String)> = None;
        for rule in &self.rules {
            if trimmed.starts_with(rule.0.as_str()) && best.is_none_or(|b| rule.0.len() > b.0.len()) {
                best = Some(rule);
            }
        }
        match best {
            Some((_, token)) => token.clone(),
            None => normalize_label(raw),
        }
    }
}

// ---------------------------------------------------------------------------
// Lexer

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    /// Quoted string; never a keyword.
    Str(String),
    Arrow,
    UndirectedEdge,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eq,
    Semi,
    Comma,
    Colon,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn is_id_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '.' || !c.is_ascii()
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>> {
    let chars: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut line = 1;
    let mut at_line_start = true;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            at_line_start = true;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start_of_line = at_line_start;
        at_line_start = false;
        let next = chars.get(i + 1).copied();
        match c {
            '#' if start_of_line => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if next == Some('/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '/' if next == Some('*') => {
                let open_line = line;
                i += 2;
                loop {
                    match chars.get(i) {
                        None => return Err(parse_err(open_line, "unterminated comment")),
                        Some('*') if chars.get(i + 1) == Some(&'/') => {
                            i += 2;
                            break;
                        }
                        Some('\n') => line += 1,
                        _ => {}
                    }
                    i += 1;
                }
            }
            '"' => {
                let open_line = line;
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(parse_err(open_line, "unterminated string")),
                        Some('"') => break,
                        Some('\\') if matches!(chars.get(i + 1), Some('"') | Some('\\')) => {
                            s.push(chars[i + 1]);
                            i += 1;
                        }
                        Some('\\') if chars.get(i + 1) == Some(&'\n') => {
                            // line continuation
                            line += 1;
                            i += 1;
                        }
                        Some(&ch) => {
                            if ch == '\n' {
                                line += 1;
                            }
                            s.push(ch);
                        }
                    }
                    i += 1;
                }
                i += 1;
                toks.push((Tok::Str(s), open_line));
            }
            '-' if next == Some('>') => {
                toks.push((Tok::Arrow, line));
                i += 2;
            }
            '-' if next == Some('-') => {
                toks.push((Tok::UndirectedEdge, line));
                i += 2;
            }
            '{' | '}' | '[' | ']' | '=' | ';' | ',' | ':' => {
                let tok = match c {
                    '{' => Tok::LBrace,
                    '}' => Tok::RBrace,
                    '[' => Tok::LBracket,
                    ']' => Tok::RBracket,
                    '=' => Tok::Eq,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    _ => Tok::Colon,
                };
                toks.push((tok, line));
                i += 1;
            }
            '<' => return Err(parse_err(line, "HTML strings are not supported")),
            c if is_id_char(c) || c == '-' => {
                let mut s = String::new();
                s.push(c);
                i += 1;
                while i < chars.len() && is_id_char(chars[i]) {
                    s.push(chars[i]);
                    i += 1;
                }
                toks.push((Tok::Id(s), line));
            }
            other => return Err(parse_err(line, format!("unexpected character {other:?}"))),
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    last_line: usize,
    labels: &'a LabelMap,
    graph: ControlFlowGraph,
    diagnostics: Vec<Diagnostic>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map_or(self.last_line, |(_, l)| *l)
    }

    fn bump(&mut self) -> Option<Tok> {
        let tok = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        tok
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<()> {
        let line = self.line();
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(parse_err(line, format!("expected {what}, found {t:?}"))),
            None => Err(parse_err(line, format!("expected {what}, found end of input"))),
        }
    }

    fn id(&mut self, what: &str) -> Result<String> {
        let line = self.line();
        match self.bump() {
            Some(Tok::Id(s)) | Some(Tok::Str(s)) => Ok(s),
            Some(t) => Err(parse_err(line, format!("expected {what}, found {t:?}"))),
            None => Err(parse_err(line, format!("expected {what}, found end of input"))),
        }
    }

    fn graph(&mut self) -> Result<()> {
        let mut kw = self.id("'digraph'")?;
        if kw.eq_ignore_ascii_case("strict") {
            kw = self.id("'digraph'")?;
        }
        if kw.eq_ignore_ascii_case("graph") {
            return Err(parse_err(self.line(), "undirected graphs are not supported"));
        }
        if !kw.eq_ignore_ascii_case("digraph") {
            return Err(parse_err(self.line(), format!("expected 'digraph', found {kw:?}")));
        }
        if let Some(Tok::Id(_) | Tok::Str(_)) = self.peek() {
            self.bump();
        }
        self.expect(Tok::LBrace, "'{'")?;
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.bump();
                    break;
                }
                None => return Err(parse_err(self.line(), "unexpected end of input, missing '}'")),
                _ => self.statement()?,
            }
        }
        if self.peek().is_some() {
            return Err(parse_err(self.line(), "unexpected content after graph body"));
        }
        Ok(())
    }

    fn statement(&mut self) -> Result<()> {
        let line = self.line();
        match self.peek() {
            Some(Tok::Semi) | Some(Tok::Comma) => {
                self.bump();
                return Ok(());
            }
            Some(Tok::LBrace) => return Err(parse_err(line, "subgraphs are not supported")),
            Some(Tok::Id(_) | Tok::Str(_)) => {}
            Some(t) => return Err(parse_err(line, format!("unexpected {t:?}"))),
            None => return Err(parse_err(line, "unexpected end of input")),
        }
        let keyword = match self.peek() {
            Some(Tok::Id(s)) => s.to_ascii_lowercase(),
            _ => String::new(),
        };
        let first = self.id("statement")?;
        if keyword == "subgraph" {
            return Err(parse_err(line, "subgraphs are not supported"));
        }
        if matches!(keyword.as_str(), "graph" | "node" | "edge") && self.peek() == Some(&Tok::LBracket) {
            self.attributes()?;
            return Ok(());
        }
        match self.peek() {
            Some(Tok::Eq) => {
                self.bump();
                self.id("attribute value")?;
            }
            Some(Tok::Colon) => return Err(parse_err(line, "ports are not supported")),
            Some(Tok::UndirectedEdge) => return Err(parse_err(line, "undirected edges are not supported")),
            Some(Tok::Arrow) => {
                let mut chain = vec![(first, line)];
                while self.peek() == Some(&Tok::Arrow) {
                    self.bump();
                    let l = self.line();
                    if matches!(self.peek(), Some(Tok::LBrace)) {
                        return Err(parse_err(l, "subgraphs are not supported"));
                    }
                    let target = self.id("edge target")?;
                    if self.peek() == Some(&Tok::Colon) {
                        return Err(parse_err(l, "ports are not supported"));
                    }
                    chain.push((target, l));
                }
                if self.peek() == Some(&Tok::UndirectedEdge) {
                    return Err(parse_err(self.line(), "undirected edges are not supported"));
                }
                if self.peek() == Some(&Tok::LBracket) {
                    self.attributes()?;
                }
                let ends: Vec<usize> = chain.iter().map(|(id, l)| self.edge_endpoint(id, *l)).collect();
                for pair in ends.windows(2) {
                    if !self.graph.add_edge(pair[0], pair[1]) {
                        let subject = format!(
                            "{} -> {}",
                            self.graph.nodes[pair[0]].id, self.graph.nodes[pair[1]].id
                        );
                        self.diagnostics
                            .push(Diagnostic::warning(subject, format!("line {line}: duplicate edge collapsed")));
                    }
                }
            }
            _ => {
                let attrs = if self.peek() == Some(&Tok::LBracket) {
                    self.attributes()?
                } else {
                    Vec::new()
                };
                let raw = attrs
                    .iter()
                    .rev()
                    .find(|(k, _)| k == "label")
                    .map(|(_, v)| v.clone());
                match self.graph.node_index(&first) {
                    Some(i) => {
                        if let Some(raw) = raw {
                            self.graph.nodes[i].label = self.labels.normalize(&raw);
                        }
                    }
                    None => {
                        let label = self.labels.normalize(raw.as_deref().unwrap_or(&first));
                        self.graph.add_node(&first, &label);
                    }
                }
            }
        }
        Ok(())
    }

    fn edge_endpoint(&mut self, id: &str, line: usize) -> usize {
        if let Some(i) = self.graph.node_index(id) {
            return i;
        }
        self.diagnostics.push(Diagnostic::warning(
            id,
            format!("line {line}: edge references undeclared node; declared implicitly"),
        ));
        let label = self.labels.normalize(id);
        self.graph.add_node(id, &label)
    }

    fn attributes(&mut self) -> Result<Vec<(String, String)>> {
        let mut attrs = Vec::new();
        while self.peek() == Some(&Tok::LBracket) {
            self.bump();
            loop {
                match self.peek() {
                    Some(Tok::RBracket) => {
                        self.bump();
                        break;
                    }
                    Some(Tok::Comma) | Some(Tok::Semi) => {
                        self.bump();
                    }
                    _ => {
                        let key = self.id("attribute name")?;
                        self.expect(Tok::Eq, "'='")?;
                        let value = self.id("attribute value")?;
                        attrs.push((key, value));
                    }
                }
            }
        }
        Ok(attrs)
    }
}

/// Parses DOT text with the default label normalization, discarding
/// parse warnings.
pub fn parse_dot(text: &str) -> Result<ControlFlowGraph> {
    parse_dot_with(text, &LabelMap::default()).map(|(g, _)| g)
}

/// Parses DOT text, returning the graph and any warnings (implicitly
/// declared nodes, collapsed parallel edges).
pub fn parse_dot_with(text: &str, labels: &LabelMap) -> Result<(ControlFlowGraph, Vec<Diagnostic>)> {
    let toks = lex(text)?;
    let last_line = toks.last().map_or(1, |(_, l)| *l);
    let mut parser = Parser {
        toks,
        pos: 0,
        last_line,
        labels,
        graph: ControlFlowGraph::new(),
        diagnostics: Vec::new(),
    };
    parser.graph()?;
    if parser.graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    Ok((parser.graph, parser.diagnostics))
}

/// Checks entry/exit structure and reachability.
///
/// Zero or several entry candidates are errors. Several sinks are repaired
/// by appending a synthetic `end` node fed by every sink (one warning).
/// Nodes unreachable from the entry, or unable to reach the exit, produce
/// warnings since they contribute no path features.
pub fn validate(g: &mut ControlFlowGraph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if g.is_empty() {
        diags.push(Diagnostic::error("<graph>", "empty graph"));
        return diags;
    }

    let sources: Vec<usize> = zero_positions(&g.in_degrees());
    match sources.len() {
        0 => diags.push(Diagnostic::error("<graph>", "no entry node: every node has a predecessor")),
        1 => {}
        _ => {
            let ids: Vec<&str> = sources.iter().map(|&i| g.nodes[i].id.as_str()).collect();
            diags.push(Diagnostic::error(
                ids.join(", "),
                format!("multiple entry nodes ({})", ids.len()),
            ));
        }
    }

    let sinks: Vec<usize> = zero_positions(&g.out_degrees());
    match sinks.len() {
        0 => diags.push(Diagnostic::error("<graph>", "no exit node: every node has a successor")),
        1 => {}
        _ => {
            let id = fresh_id(g, "end");
            let exit = g.add_node(&id, "end");
            for &s in &sinks {
                g.add_edge(s, exit);
            }
            let ids: Vec<&str> = sinks.iter().map(|&i| g.nodes[i].id.as_str()).collect();
            diags.push(Diagnostic::warning(
                id.clone(),
                format!("{} exit nodes ({}) joined into synthetic exit", sinks.len(), ids.join(", ")),
            ));
        }
    }

    if diags.iter().any(Diagnostic::is_error) {
        return diags;
    }
    let (entry, exit) = match (g.entry(), g.exit()) {
        (Some(a), Some(b)) => (a, b),
        _ => return diags,
    };
    let forward = reachable(entry, &g.successors());
    let backward = reachable(exit, &g.predecessors());
    for (i, node) in g.nodes.iter().enumerate() {
        if !forward[i] {
            diags.push(Diagnostic::warning(node.id.clone(), "unreachable from entry"));
        } else if !backward[i] {
            diags.push(Diagnostic::warning(node.id.clone(), "cannot reach exit"));
        }
    }
    diags
}

/// Parses and validates, failing on any error-level diagnostic. Returned
/// diagnostics are warnings only.
pub fn load_graph(text: &str, labels: &LabelMap) -> Result<(ControlFlowGraph, Vec<Diagnostic>)> {
    let (mut g, mut diags) = parse_dot_with(text, labels)?;
    diags.extend(validate(&mut g));
    let errors: Vec<String> = diags
        .iter()
        .filter(|d| d.is_error())
        .map(|d| format!("{}: {}", d.subject, d.message))
        .collect();
    if !errors.is_empty() {
        return Err(Error::InvalidGraph(errors.join("; ")));
    }
    Ok((g, diags))
}

fn zero_positions(degrees: &[usize]) -> Vec<usize> {
    degrees
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 0)
        .map(|(i, _)| i)
        .collect()
}

fn fresh_id(g: &ControlFlowGraph, base: &str) -> String {
    if g.node_index(base).is_none() {
        return base.to_string();
    }
    (1..)
        .map(|n| format!("{base}_{n}"))
        .find(|id| g.node_index(id).is_none())
        .expect("unbounded id search")
}

fn reachable(start: usize, adj: &[Vec<usize>]) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}
