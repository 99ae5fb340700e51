//! Search tree bookkeeping: UCB1 selection and running-mean backups.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::{SubGoal, SubGoalRun};
use crate::digest::json_digest;
use crate::guienv::Action;
use crate::skillstore::CoreId;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGoalProposal {
    pub text: String,
    pub source_core_skill: Option<CoreId>,
    /// 1 is the provider's favourite.
    pub prior_rank: usize,
    pub estimated_value: f64,
}

/// What a rollout left in its node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stored {
    pub subgoal: SubGoal,
    pub intent: String,
    pub run: SubGoalRunRecord,
    pub reward: u8,
    /// The episode ended during the rollout; nothing can follow this node.
    pub terminal: bool,
    pub task_success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubGoalRunRecord {
    pub status: crate::agent::SubGoalStatus,
    pub fell_back: bool,
    pub steps: Vec<crate::agent::TrajectoryStep>,
}

impl From<SubGoalRun> for SubGoalRunRecord {
    fn from(r: SubGoalRun) -> Self {
        Self { status: r.status, fell_back: r.fell_back, steps: r.steps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchNode {
    pub parent: Option<NodeId>,
    /// Sub-goal on the edge from the parent; empty for the root.
    pub text: String,
    pub visits: u32,
    pub value: f64,
    pub children: BTreeMap<String, NodeId>,
    pub proposals: Vec<SubGoalProposal>,
    pub stored: Option<Stored>,
    /// Actions from reset that reach this node's state, once known.
    pub prefix: Vec<Action>,
    /// Observation digest at this node's state, once known.
    pub state_digest: Option<String>,
}

impl SearchNode {
    fn new(parent: Option<NodeId>, text: String) -> Self {
        Self {
            parent,
            text,
            visits: 0,
            value: 0.0,
            children: BTreeMap::new(),
            proposals: Vec::new(),
            stored: None,
            prefix: Vec::new(),
            state_digest: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTree {
    pub nodes: Vec<SearchNode>,
}

impl Default for SearchTree {
    fn default() -> Self {
        Self::new()
    }
}

/// Q + c·√(ln N_parent / (1 + N_child)). A parent that was never visited
/// contributes no exploration bonus.
pub fn ucb1(q: f64, child_visits: u32, parent_visits: u32, c_exp: f64) -> f64 {
    let ln = if parent_visits == 0 { 0.0 } else { (parent_visits as f64).ln() };
    q + c_exp * (ln / (1.0 + child_visits as f64)).sqrt()
}

impl SearchTree {
    pub const ROOT: NodeId = 0;

    pub fn new() -> Self {
        Self { nodes: vec![SearchNode::new(None, String::new())] }
    }

    pub fn node(&self, id: NodeId) -> &SearchNode {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut SearchNode {
        &mut self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Adds a child under `parent` for `text`, or returns the existing one.
    pub fn add_child(&mut self, parent: NodeId, text: &str) -> NodeId {
        if let Some(&id) = self.nodes[parent].children.get(text) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(SearchNode::new(Some(parent), text.to_string()));
        self.nodes[parent].children.insert(text.to_string(), id);
        id
    }

    /// Child of `id` with the highest UCB1 score; ties go to the smaller text.
    pub fn best_child(&self, id: NodeId, c_exp: f64) -> Option<NodeId> {
        let parent = &self.nodes[id];
        let mut best: Option<(NodeId, f64)> = None;
        // Children iterate in ascending text order, so strict `>` keeps the
        // smallest text among equals.
        for &child in parent.children.values() {
            let c = &self.nodes[child];
            let score = ucb1(c.value, c.visits, parent.visits, c_exp);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((child, score));
            }
        }
        best.map(|(c, _)| c)
    }

    /// Descends from the root by UCB1 until a node without children.
    pub fn select_leaf(&self, c_exp: f64) -> NodeId {
        let mut id = Self::ROOT;
        while let Some(next) = self.best_child(id, c_exp) {
            id = next;
        }
        id
    }

    /// Nodes from `id` up to the root, inclusive.
    pub fn path_to_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Q ← (Q·N + R)/(N + 1), N ← N + 1 for every node on `path`, leaf first.
    pub fn backpropagate(&mut self, path: &[NodeId], reward: f64) {
        for &id in path {
            let n = &mut self.nodes[id];
            n.value = (n.value * n.visits as f64 + reward) / (n.visits as f64 + 1.0);
            n.visits += 1;
        }
    }

    /// Digest of the tree's shape and statistics.
    pub fn digest(&self) -> String {
        #[derive(Serialize)]
        struct Shape<'a> {
            text: &'a str,
            visits: u32,
            value: f64,
            children: Vec<NodeId>,
            reward: Option<u8>,
        }
        let shape: Vec<Shape<'_>> = self
            .nodes
            .iter()
            .map(|n| Shape {
                text: &n.text,
                visits: n.visits,
                value: n.value,
                children: n.children.values().copied().collect(),
                reward: n.stored.as_ref().map(|s| s.reward),
            })
            .collect();
        json_digest(&shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn childless_root_is_the_leaf() {
        assert_eq!(SearchTree::new().select_leaf(1.414), SearchTree::ROOT);
    }

    #[test]
    fn exploration_term_can_dominate() {
        // A: 0.5 + 1.414·√(ln 10 / 4) ≈ 1.573; B: 0.2 + 1.414·√(ln 10 / 2) ≈ 1.717.
        let mut t = SearchTree::new();
        t.node_mut(0).visits = 10;
        let a = t.add_child(0, "A");
        let b = t.add_child(0, "B");
        t.node_mut(a).value = 0.5;
        t.node_mut(a).visits = 3;
        t.node_mut(b).value = 0.2;
        t.node_mut(b).visits = 1;
        assert_eq!(t.select_leaf(1.414), b);
    }

    #[test]
    fn equal_statistics_pick_smaller_text() {
        let mut t = SearchTree::new();
        t.node_mut(0).visits = 4;
        let z = t.add_child(0, "zeta");
        let a = t.add_child(0, "alpha");
        for id in [z, a] {
            t.node_mut(id).visits = 2;
            t.node_mut(id).value = 0.5;
        }
        assert_eq!(t.select_leaf(1.0), a);
    }

    #[test]
    fn backups_follow_the_running_mean() {
        let mut t = SearchTree::new();
        t.backpropagate(&[0], 1.0);
        assert_eq!((t.node(0).value, t.node(0).visits), (1.0, 1));
        let mut t = SearchTree::new();
        t.node_mut(0).value = 0.5;
        t.node_mut(0).visits = 2;
        let mut u = t.clone();
        t.backpropagate(&[0], 1.0);
        u.backpropagate(&[0], 0.0);
        assert!((t.node(0).value - 2.0 / 3.0).abs() < 1e-12 && t.node(0).visits == 3);
        assert!((u.node(0).value - 1.0 / 3.0).abs() < 1e-12 && u.node(0).visits == 3);
    }

    #[test]
    fn zero_exploration_is_greedy() {
        let mut t = SearchTree::new();
        t.node_mut(0).visits = 9;
        let a = t.add_child(0, "a");
        let b = t.add_child(0, "b");
        t.node_mut(a).value = 0.3;
        t.node_mut(a).visits = 8;
        t.node_mut(b).value = 0.4;
        t.node_mut(b).visits = 1;
        assert_eq!(t.select_leaf(0.0), b);
    }
}
