//! Random DAGs and a brute-force d-separation oracle over an adjacency matrix.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dagcheck::graph::{CausalDag, Edge, Variable, VariableKind};
use rand::seq::SliceRandom;
use rand::Rng;

pub struct RandomDag {
    pub dag: CausalDag,
    pub names: Vec<String>,
    /// `adj[i][j]` iff names[i] -> names[j].
    pub adj: Vec<Vec<bool>>,
}

pub fn name(i: usize) -> String {
    format!("V{i}")
}

/// Edges only go forward in a shuffled order, so the result is acyclic.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, p: f64) -> RandomDag {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut adj = vec![vec![false; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                adj[order[a]][order[b]] = true;
            }
        }
    }
    from_adjacency(adj, &[])
}

pub fn from_adjacency(adj: Vec<Vec<bool>>, latent: &[usize]) -> RandomDag {
    let n = adj.len();
    let names: Vec<String> = (0..n).map(name).collect();
    let variables = names
        .iter()
        .enumerate()
        .map(|(i, v)| Variable {
            name: v.clone(),
            kind: if latent.contains(&i) { VariableKind::Latent } else { VariableKind::Observed },
            description: String::new(),
        })
        .collect();
    let mut edges = Vec::new();
    for (i, row) in adj.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            if e {
                edges.push(Edge::new(names[i].clone(), names[j].clone()));
            }
        }
    }
    let dag = CausalDag::new(variables, edges, None, None).expect("forward edges are acyclic");
    RandomDag { dag, names, adj }
}

fn descendants(adj: &[Vec<bool>], v: usize) -> Vec<bool> {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![v];
    seen[v] = true;
    while let Some(u) = stack.pop() {
        for w in 0..adj.len() {
            if adj[u][w] && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

fn any_open_path(adj: &[Vec<bool>], path: &mut Vec<usize>, y: usize, z: &BTreeSet<usize>) -> bool {
    let last = *path.last().unwrap();
    if last == y {
        return path_open(adj, path, z);
    }
    for w in 0..adj.len() {
        if (adj[last][w] || adj[w][last]) && !path.contains(&w) {
            path.push(w);
            let open = any_open_path(adj, path, y, z);
            path.pop();
            if open {
                return true;
            }
        }
    }
    false
}

fn path_open(adj: &[Vec<bool>], path: &[usize], z: &BTreeSet<usize>) -> bool {
    for k in 1..path.len() - 1 {
        let (a, v, b) = (path[k - 1], path[k], path[k + 1]);
        let collider = adj[a][v] && adj[b][v];
        if collider {
            let desc = descendants(adj, v);
            if !z.iter().any(|&q| desc[q]) {
                return false;
            }
        } else if z.contains(&v) {
            return false;
        }
    }
    true
}

/// True iff no simple path between x and y is open given z.
pub fn brute_d_separated(adj: &[Vec<bool>], x: usize, y: usize, z: &BTreeSet<usize>) -> bool {
    let mut path = vec![x];
    !any_open_path(adj, &mut path, y, z)
}

pub fn names_of(set: &BTreeSet<usize>) -> BTreeSet<String> {
    set.iter().map(|&i| name(i)).collect()
}
