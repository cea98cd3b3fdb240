// SPDX-License-Identifier: MIT OR Apache-2.0

//! Penn-style bracketed constituency trees.

use super::ControlsError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Terminal(String),
    NonTerminal { label: String, children: Vec<Node> },
}

impl Node {
    pub fn nonterminal(label: impl Into<String>, children: Vec<Node>) -> Self {
        Node::NonTerminal { label: label.into(), children }
    }

    pub fn terminal(word: impl Into<String>) -> Self {
        Node::Terminal(word.into())
    }

    fn count_nonterminals(&self) -> usize {
        match self {
            Node::Terminal(_) => 0,
            Node::NonTerminal { children, .. } => {
                1 + children.iter().map(Node::count_nonterminals).sum::<usize>()
            }
        }
    }

    fn collect_terminals<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Node::Terminal(w) => out.push(w),
            Node::NonTerminal { children, .. } => children.iter().for_each(|c| c.collect_terminals(out)),
        }
    }

    fn write_bracketed(&self, out: &mut String) {
        match self {
            Node::Terminal(w) => out.push_str(w),
            Node::NonTerminal { label, children } => {
                out.push('(');
                out.push_str(label);
                for c in children {
                    out.push(' ');
                    c.write_bracketed(out);
                }
                out.push(')');
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub sentence_id: usize,
    pub root: Node,
}

impl ParseTree {
    /// Validates that the root is a nonterminal, every nonterminal has a
    /// child and there is at least one terminal.
    pub fn new(sentence_id: usize, root: Node) -> Result<Self, ControlsError> {
        fn check(node: &Node) -> Result<(), ControlsError> {
            if let Node::NonTerminal { label, children } = node {
                if children.is_empty() {
                    return Err(ControlsError::EmptyNonTerminal { label: label.clone(), offset: None });
                }
                children.iter().try_for_each(check)?;
            }
            Ok(())
        }
        if matches!(root, Node::Terminal(_)) {
            return Err(ControlsError::Parse { offset: 0, message: "tree root must be a bracketed node".into() });
        }
        check(&root)?;
        Ok(Self { sentence_id, root })
    }

    pub fn terminals(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.root.collect_terminals(&mut out);
        out
    }

    pub fn n_nonterminals(&self) -> usize {
        self.root.count_nonterminals()
    }

    pub fn to_bracketed(&self) -> String {
        let mut s = String::new();
        self.root.write_bracketed(&mut s);
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open(usize),
    Close(usize),
    Atom(usize, &'a str),
}

fn lex(line: &str, base: usize) -> Vec<Tok<'_>> {
    let mut toks = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in line.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                toks.push(Tok::Atom(base + s, &line[s..i]));
            }
            match c {
                '(' => toks.push(Tok::Open(base + i)),
                ')' => toks.push(Tok::Close(base + i)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        toks.push(Tok::Atom(base + s, &line[s..]));
    }
    toks
}

/// Parses one bracketed tree per non-blank line. Sentence ids count
/// non-blank lines from 0. Error offsets are bytes into `text`.
pub fn parse_bracketed(text: &str) -> Result<Vec<ParseTree>, ControlsError> {
    let mut trees = Vec::new();
    let mut base = 0;
    for line in text.split_inclusive('\n') {
        let content = line.trim_end_matches(['\n', '\r']);
        if !content.trim().is_empty() {
            let root = parse_line(content, base)?;
            trees.push(ParseTree::new(trees.len(), root)?);
        }
        base += line.len();
    }
    Ok(trees)
}

fn parse_line(line: &str, base: usize) -> Result<Node, ControlsError> {
    let toks = lex(line, base);
    let end = base + line.len();
    // stack of (label, children, open offset)
    let mut stack: Vec<(String, Vec<Node>, usize)> = Vec::new();
    let mut root: Option<Node> = None;
    let mut i = 0;
    while i < toks.len() {
        let tok = toks[i];
        if root.is_some() {
            let offset = match tok {
                Tok::Open(o) | Tok::Close(o) | Tok::Atom(o, _) => o,
            };
            return Err(ControlsError::Parse { offset, message: "content after the tree closed".into() });
        }
        match tok {
            Tok::Open(o) => {
                let label = match toks.get(i + 1) {
                    Some(Tok::Atom(_, l)) => {
                        i += 1;
                        l.to_string()
                    }
                    _ => String::new(),
                };
                stack.push((label, Vec::new(), o));
            }
            Tok::Close(o) => {
                let (label, children, _) = stack
                    .pop()
                    .ok_or(ControlsError::Unbalanced { offset: o })?;
                if children.is_empty() {
                    return Err(ControlsError::EmptyNonTerminal { label, offset: Some(o) });
                }
                let node = Node::NonTerminal { label, children };
                match stack.last_mut() {
                    Some(parent) => parent.1.push(node),
                    None => root = Some(node),
                }
            }
            Tok::Atom(o, word) => match stack.last_mut() {
                Some(parent) => parent.1.push(Node::Terminal(word.to_string())),
                None => {
                    return Err(ControlsError::Parse { offset: o, message: format!("bare word {word:?} outside brackets") })
                }
            },
        }
        i += 1;
    }
    if !stack.is_empty() {
        return Err(ControlsError::Unbalanced { offset: end });
    }
    root.ok_or(ControlsError::Parse { offset: base, message: "no tree on line".into() })
}
