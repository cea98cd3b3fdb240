// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-word node counts under three incremental parsing strategies.

use serde::{Deserialize, Serialize};

use super::tree::{Node, ParseTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// A node is predicted at the first word of its yield.
    TopDown,
    /// A node is completed at the last word of its yield.
    BottomUp,
    /// A node is announced once its leftmost child is complete.
    LeftCorner,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::TopDown, Strategy::BottomUp, Strategy::LeftCorner];
}

/// Terminal span `[first, last]` of `node`, starting at terminal index `next`.
/// Records the word each nonterminal is attributed to.
fn visit(node: &Node, next: &mut usize, strategy: Strategy, counts: &mut [u32]) -> (usize, usize) {
    match node {
        Node::Terminal(_) => {
            let i = *next;
            *next += 1;
            (i, i)
        }
        Node::NonTerminal { children, .. } => {
            let spans: Vec<(usize, usize)> = children.iter().map(|c| visit(c, next, strategy, counts)).collect();
            let first = spans[0].0;
            let last = spans[spans.len() - 1].1;
            let word = match strategy {
                Strategy::TopDown => first,
                Strategy::BottomUp => last,
                Strategy::LeftCorner => spans[0].1,
            };
            counts[word] += 1;
            (first, last)
        }
    }
}

/// Number of nonterminals attributed to each word. Every nonterminal,
/// including the root, is counted exactly once.
pub fn node_counts(tree: &ParseTree, strategy: Strategy) -> Vec<u32> {
    let mut counts = vec![0; tree.terminals().len()];
    visit(&tree.root, &mut 0, strategy, &mut counts);
    counts
}
