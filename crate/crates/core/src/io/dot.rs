//! Workflow DOT reader and writer.
//!
//! Accepted grammar (a subset of Graphviz DOT):
//!
//! ```text
//! graph      := ["strict"] "digraph" [id] "{" stmt* "}"
//! stmt       := (node_stmt | edge_stmt | attr_stmt | id "=" id) [";"]
//! node_stmt  := id [attr_list]
//! edge_stmt  := id ("->" id)+ [attr_list]
//! attr_stmt  := ("graph" | "node" | "edge") attr_list
//! attr_list  := ("[" [a_list] "]")+
//! a_list     := id "=" id [("," | ";")] [a_list]
//! id         := [A-Za-z0-9_.+-]+ | '"' (char | '\"')* '"'
//! ```
//!
//! Comments (`// ...`, `# ...` at line start, `/* ... */`) are skipped.
//! Node attributes `work` (default 1) and `memory` (default 0) and edge
//! attribute `size` (default 0) are read as reals; other attributes are
//! ignored. `node [...]` and `edge [...]` statements set defaults for later
//! statements. Every edge endpoint must be declared as a node somewhere in
//! the file, and a node declared twice is merged (later attributes win).

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::workflow::{WorkflowBuilder, WorkflowDag};

pub const DEFAULT_WORK: f64 = 1.0;
pub const DEFAULT_MEMORY: f64 = 0.0;
pub const DEFAULT_SIZE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Id(String),
    Quoted(String),
    Arrow,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Eq,
    Sep,
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    at_line_start: bool,
}

fn is_id_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '.' | '+')
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer {
            chars: text.chars().peekable(),
            line: 1,
            at_line_start: true,
        }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.at_line_start = true;
        } else if !c.is_whitespace() {
            self.at_line_start = false;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<()> {
        loop {
            match self.chars.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('#') if self.at_line_start => {
                    while self.chars.peek().is_some_and(|&c| c != '\n') {
                        self.bump();
                    }
                }
                Some('/') => {
                    let mut ahead = self.chars.clone();
                    ahead.next();
                    match ahead.peek() {
                        Some('/') => {
                            while self.chars.peek().is_some_and(|&c| c != '\n') {
                                self.bump();
                            }
                        }
                        Some('*') => {
                            let start = self.line;
                            self.bump();
                            self.bump();
                            let mut prev = ' ';
                            loop {
                                match self.bump() {
                                    Some('/') if prev == '*' => break,
                                    Some(c) => prev = c,
                                    None => {
                                        return Err(Error::Parse {
                                            line: start,
                                            message: "unterminated comment".into(),
                                        })
                                    }
                                }
                            }
                        }
                        _ => return Ok(()),
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// Next token with the line it starts on.
    fn next(&mut self) -> Result<Option<(Tok, usize)>> {
        self.skip_trivia()?;
        let line = self.line;
        let Some(&c) = self.chars.peek() else {
            return Ok(None);
        };
        let tok = match c {
            '{' => {
                self.bump();
                Tok::LBrace
            }
            '}' => {
                self.bump();
                Tok::RBrace
            }
            '[' => {
                self.bump();
                Tok::LBracket
            }
            ']' => {
                self.bump();
                Tok::RBracket
            }
            '=' => {
                self.bump();
                Tok::Eq
            }
            ';' | ',' => {
                self.bump();
                Tok::Sep
            }
            '"' => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        Some('\\') => match self.bump() {
                            Some('"') => s.push('"'),
                            Some('\\') => s.push('\\'),
                            Some('\n') => {}
                            Some(other) => {
                                s.push('\\');
                                s.push(other);
                            }
                            None => {
                                return Err(Error::Parse {
                                    line,
                                    message: "unterminated string".into(),
                                })
                            }
                        },
                        Some('"') => break,
                        Some(ch) => s.push(ch),
                        None => {
                            return Err(Error::Parse {
                                line,
                                message: "unterminated string".into(),
                            })
                        }
                    }
                }
                Tok::Quoted(s)
            }
            '-' => {
                self.bump();
                match self.chars.peek() {
                    Some('>') => {
                        self.bump();
                        Tok::Arrow
                    }
                    Some('-') => return Err(self.err("undirected edge `--` in a digraph")),
                    _ => {
                        let mut s = String::from("-");
                        while self.chars.peek().is_some_and(|&c| is_id_char(c)) {
                            s.push(self.bump().unwrap());
                        }
                        Tok::Id(s)
                    }
                }
            }
            c if is_id_char(c) => {
                let mut s = String::new();
                loop {
                    match self.chars.peek().copied() {
                        Some(c) if is_id_char(c) => {}
                        Some('-') if !self.arrow_follows() => {}
                        _ => break,
                    }
                    s.push(self.bump().unwrap());
                }
                Tok::Id(s)
            }
            other => return Err(self.err(format!("unexpected character `{other}`"))),
        };
        Ok(Some((tok, line)))
    }

    fn arrow_follows(&self) -> bool {
        let mut ahead = self.chars.clone();
        ahead.next();
        matches!(ahead.peek(), Some('>') | Some('-'))
    }
}

struct Parser<'a> {
    lexer: Lexer<'a>,
    peeked: Option<(Tok, usize)>,
    last_line: usize,
}

type Attrs = Vec<(String, String, usize)>;

impl<'a> Parser<'a> {
    fn peek(&mut self) -> Result<Option<&Tok>> {
        if self.peeked.is_none() {
            self.peeked = self.lexer.next()?;
        }
        Ok(self.peeked.as_ref().map(|(t, _)| t))
    }

    fn next(&mut self) -> Result<Option<Tok>> {
        self.peek()?;
        Ok(self.peeked.take().map(|(t, line)| {
            self.last_line = line;
            t
        }))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.last_line,
            message: message.into(),
        }
    }

    fn expect_id(&mut self, what: &str) -> Result<String> {
        match self.next()? {
            Some(Tok::Id(s) | Tok::Quoted(s)) => Ok(s),
            Some(t) => Err(self.err(format!("expected {what}, found {}", describe(&t)))),
            None => Err(self.err(format!("expected {what}, found end of input"))),
        }
    }

    fn attr_lists(&mut self) -> Result<Attrs> {
        let mut attrs = Vec::new();
        while self.peek()? == Some(&Tok::LBracket) {
            self.next()?;
            loop {
                match self.next()? {
                    Some(Tok::RBracket) => break,
                    Some(Tok::Sep) => continue,
                    Some(Tok::Id(key) | Tok::Quoted(key)) => {
                        let line = self.last_line;
                        match self.next()? {
                            Some(Tok::Eq) => {}
                            _ => {
                                return Err(
                                    self.err(format!("expected `=` after attribute `{key}`"))
                                )
                            }
                        }
                        let value = self.expect_id("attribute value")?;
                        attrs.push((key, value, line));
                    }
                    Some(t) => {
                        return Err(
                            self.err(format!("unexpected {} in attribute list", describe(&t)))
                        )
                    }
                    None => return Err(self.err("unterminated attribute list")),
                }
            }
        }
        Ok(attrs)
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Id(s) => format!("`{s}`"),
        Tok::Quoted(s) => format!("\"{s}\""),
        Tok::Arrow => "`->`".into(),
        Tok::LBrace => "`{`".into(),
        Tok::RBrace => "`}`".into(),
        Tok::LBracket => "`[`".into(),
        Tok::RBracket => "`]`".into(),
        Tok::Eq => "`=`".into(),
        Tok::Sep => "separator".into(),
    }
}

fn real(key: &str, value: &str, line: usize) -> Result<f64> {
    value.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("attribute `{key}` has non-numeric value `{value}`"),
    })
}

#[derive(Clone, Copy)]
struct NodeAttrs {
    work: f64,
    memory: f64,
}

fn apply_node(mut into: NodeAttrs, attrs: &Attrs) -> Result<NodeAttrs> {
    for (k, v, line) in attrs {
        match k.as_str() {
            "work" => into.work = real(k, v, *line)?,
            "memory" => into.memory = real(k, v, *line)?,
            _ => {}
        }
    }
    Ok(into)
}

fn apply_edge(mut size: f64, attrs: &Attrs) -> Result<f64> {
    for (k, v, line) in attrs {
        if k == "size" {
            size = real(k, v, *line)?;
        }
    }
    Ok(size)
}

/// Parses workflow DOT text into a validated DAG.
pub fn parse_dot(text: &str) -> Result<WorkflowDag> {
    let mut p = Parser {
        lexer: Lexer::new(text),
        peeked: None,
        last_line: 1,
    };
    match p.next()? {
        Some(Tok::Id(s)) if s.eq_ignore_ascii_case("strict") => {
            let kw = p.expect_id("`digraph`")?;
            if !kw.eq_ignore_ascii_case("digraph") {
                return Err(p.err(format!("expected `digraph`, found `{kw}`")));
            }
        }
        Some(Tok::Id(s)) if s.eq_ignore_ascii_case("digraph") => {}
        Some(Tok::Id(s)) if s.eq_ignore_ascii_case("graph") => {
            return Err(p.err("undirected graphs are not workflows; use `digraph`"))
        }
        _ => return Err(p.err("expected `digraph`")),
    }
    if let Some(Tok::Id(_) | Tok::Quoted(_)) = p.peek()? {
        p.next()?;
    }
    match p.next()? {
        Some(Tok::LBrace) => {}
        _ => return Err(p.err("expected `{`")),
    }

    let mut node_default = NodeAttrs {
        work: DEFAULT_WORK,
        memory: DEFAULT_MEMORY,
    };
    let mut edge_default = DEFAULT_SIZE;
    let mut nodes: Vec<String> = Vec::new();
    let mut node_attrs: HashMap<String, NodeAttrs> = HashMap::new();
    let mut edges: Vec<(String, String, f64, usize)> = Vec::new();

    loop {
        let tok = p.next()?;
        let line = p.last_line;
        let (first, bare) = match tok {
            Some(Tok::RBrace) => break,
            Some(Tok::Sep) => continue,
            Some(Tok::Id(s)) => (s, true),
            Some(Tok::Quoted(s)) => (s, false),
            Some(t) => return Err(p.err(format!("unexpected {}", describe(&t)))),
            None => return Err(p.err("missing closing `}`")),
        };
        match p.peek()? {
            Some(Tok::Eq) => {
                p.next()?;
                p.expect_id("value")?;
            }
            Some(Tok::LBracket) if bare && matches!(first.as_str(), "graph" | "node" | "edge") => {
                let attrs = p.attr_lists()?;
                match first.as_str() {
                    "node" => node_default = apply_node(node_default, &attrs)?,
                    "edge" => edge_default = apply_edge(edge_default, &attrs)?,
                    _ => {}
                }
            }
            Some(Tok::Arrow) => {
                let mut chain = vec![first];
                while p.peek()? == Some(&Tok::Arrow) {
                    p.next()?;
                    chain.push(p.expect_id("edge head")?);
                }
                let size = apply_edge(edge_default, &p.attr_lists()?)?;
                for pair in chain.windows(2) {
                    edges.push((pair[0].clone(), pair[1].clone(), size, line));
                }
            }
            _ => {
                let attrs = p.attr_lists()?;
                let base = match node_attrs.get(&first) {
                    Some(&a) => a,
                    None => {
                        nodes.push(first.clone());
                        node_default
                    }
                };
                node_attrs.insert(first, apply_node(base, &attrs)?);
            }
        }
    }
    if let Some(t) = p.next()? {
        return Err(p.err(format!("trailing {} after graph", describe(&t))));
    }

    for (tail, head, _, line) in &edges {
        for end in [tail, head] {
            if !node_attrs.contains_key(end) {
                return Err(Error::Parse {
                    line: *line,
                    message: format!("edge {tail} -> {head} uses undeclared node {end}"),
                });
            }
        }
    }
    let mut b = WorkflowBuilder::new();
    for id in nodes {
        let a = node_attrs[&id];
        b.add_task(id, a.work, a.memory);
    }
    for (tail, head, size, _) in edges {
        b.add_edge(tail, head, size);
    }
    b.build()
}

fn quote(id: &str) -> String {
    let plain = !id.is_empty()
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(
            id.to_ascii_lowercase().as_str(),
            "node" | "edge" | "graph" | "digraph" | "strict" | "subgraph"
        );
    if plain {
        id.to_string()
    } else {
        format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Serializes a workflow with every attribute written explicitly. Reals use
/// the shortest decimal form that parses back to the same value.
pub fn write_dot(dag: &WorkflowDag) -> String {
    let mut out = String::from("digraph workflow {\n");
    for t in dag.tasks() {
        let _ = writeln!(
            out,
            "  {} [work={:?}, memory={:?}];",
            quote(&t.id),
            t.work,
            t.memory
        );
    }
    for e in dag.edges() {
        let _ = writeln!(
            out,
            "  {} -> {} [size={:?}];",
            quote(dag.id(e.tail)),
            quote(dag.id(e.head)),
            e.volume
        );
    }
    out.push_str("}\n");
    out
}
