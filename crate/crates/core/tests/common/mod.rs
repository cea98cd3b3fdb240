// SPDX-License-Identifier: MIT OR Apache-2.0

//! Shared test oracles: a random tree generator and stack-machine
//! simulations of the three parsing strategies.

#![allow(dead_code)]

use compscore::controls::{Node, ParseTree, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random tree with at most `max_terminals` words and `max_nodes` nodes in total.
pub fn random_tree(rng: &mut ChaCha8Rng, max_terminals: usize, max_nodes: usize) -> ParseTree {
    loop {
        let n = rng.random_range(1..=max_terminals);
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let root = build(rng, &words, 0);
        let root = match root {
            Node::Terminal(_) => Node::nonterminal("S", vec![root]),
            nt => nt,
        };
        let tree = ParseTree::new(0, root).unwrap();
        let total = tree.n_nonterminals() + tree.terminals().len();
        if total <= max_nodes {
            return tree;
        }
    }
}

fn build(rng: &mut ChaCha8Rng, words: &[String], depth: usize) -> Node {
    if words.len() == 1 {
        // occasional unary chains over a single word
        if depth > 0 && rng.random_bool(0.6) {
            return Node::terminal(words[0].clone());
        }
        let inner = if rng.random_bool(0.3) { build(rng, words, depth + 1) } else { Node::terminal(words[0].clone()) };
        return Node::nonterminal(format!("X{depth}"), vec![inner]);
    }
    let n_children = rng.random_range(1..=words.len().min(3));
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() + 1 < n_children {
        let c = rng.random_range(1..words.len());
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut children = Vec::new();
    let mut start = 0;
    for end in cuts.into_iter().chain(std::iter::once(words.len())) {
        children.push(build(rng, &words[start..end], depth + 1));
        start = end;
    }
    Node::nonterminal(format!("X{depth}"), children)
}

pub fn random_trees(seed: u64, n: usize) -> Vec<ParseTree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_tree(&mut rng, 12, 25)).collect()
}

/// Flattened tree: node kinds, parents and ordered children.
struct Arena {
    is_terminal: Vec<bool>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    terminals: Vec<usize>,
}

impl Arena {
    fn new(tree: &ParseTree) -> Self {
        let mut a = Arena { is_terminal: vec![], parent: vec![], children: vec![], terminals: vec![] };
        a.add(&tree.root, None);
        a
    }

    fn add(&mut self, node: &Node, parent: Option<usize>) -> usize {
        let id = self.is_terminal.len();
        self.parent.push(parent);
        self.children.push(vec![]);
        match node {
            Node::Terminal(_) => {
                self.is_terminal.push(true);
                self.terminals.push(id);
            }
            Node::NonTerminal { children, .. } => {
                self.is_terminal.push(false);
                for c in children {
                    let cid = self.add(c, Some(id));
                    self.children[id].push(cid);
                }
            }
        }
        id
    }
}

/// Predictive parser: expansions performed before shifting a word are charged to it.
pub fn simulate_top_down(tree: &ParseTree) -> Vec<u32> {
    let a = Arena::new(tree);
    let mut counts = vec![0; a.terminals.len()];
    let mut stack = vec![0usize];
    let mut pending = 0;
    let mut word = 0;
    while let Some(node) = stack.pop() {
        if a.is_terminal[node] {
            counts[word] = pending;
            pending = 0;
            word += 1;
        } else {
            pending += 1;
            stack.extend(a.children[node].iter().rev());
        }
    }
    assert_eq!(pending, 0);
    counts
}

/// Shift-reduce parser: reductions made right after shifting a word are charged to it.
pub fn simulate_bottom_up(tree: &ParseTree) -> Vec<u32> {
    let a = Arena::new(tree);
    let mut counts = vec![0; a.terminals.len()];
    let mut stack: Vec<usize> = Vec::new();
    for (w, &t) in a.terminals.iter().enumerate() {
        stack.push(t);
        loop {
            let top = *stack.last().unwrap();
            let Some(p) = a.parent[top] else { break };
            let kids = &a.children[p];
            if stack.len() >= kids.len() && stack[stack.len() - kids.len()..] == kids[..] {
                stack.truncate(stack.len() - kids.len());
                stack.push(p);
                counts[w] += 1;
            } else {
                break;
            }
        }
    }
    assert_eq!(stack, vec![0]);
    counts
}

/// Arc-eager left-corner parser: a parent is projected as soon as its first
/// child is complete; later children attach to the projected parent.
pub fn simulate_left_corner(tree: &ParseTree) -> Vec<u32> {
    let a = Arena::new(tree);
    let mut counts = vec![0; a.terminals.len()];
    // (projected parent, index of the next child it expects)
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for (w, &t) in a.terminals.iter().enumerate() {
        let mut done = t;
        while let Some(p) = a.parent[done] {
            let kids = &a.children[p];
            if kids[0] == done {
                counts[w] += 1;
                if kids.len() == 1 {
                    done = p;
                    continue;
                }
                stack.push((p, 1));
                break;
            }
            let (top, next) = stack.last_mut().expect("a projected parent is waiting");
            assert_eq!((*top, kids[*next]), (p, done));
            *next += 1;
            if *next == kids.len() {
                stack.pop();
                done = p;
            } else {
                break;
            }
        }
    }
    assert!(stack.is_empty());
    counts
}

pub fn simulate(tree: &ParseTree, strategy: Strategy) -> Vec<u32> {
    match strategy {
        Strategy::TopDown => simulate_top_down(tree),
        Strategy::BottomUp => simulate_bottom_up(tree),
        Strategy::LeftCorner => simulate_left_corner(tree),
    }
}
