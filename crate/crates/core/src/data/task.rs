use super::dataset::RawDataset;
use super::splits::{Role, SplitAssignment};
use crate::error::{Error, Result};
use crate::graph::{tokenize_and_index, TripartiteGraph, Vocabulary};

/// A dataset bound to a split: vocabulary, the graph seen during training
/// and evaluation, and per-item tag sets.
///
/// The graph contains every query–item edge. Item–tag edges are present
/// for train and unused items, restricted to the known tags for completion
/// items and absent for full-prediction items.
#[derive(Clone, Debug)]
pub struct TaggingTask {
    pub dataset: RawDataset,
    pub vocab: Vocabulary,
    pub graph: TripartiteGraph,
    pub item_tags: Vec<Vec<usize>>,
    pub splits: SplitAssignment,
}

impl TaggingTask {
    pub fn new(dataset: RawDataset, splits: SplitAssignment, min_count: usize) -> Result<Self> {
        let item_tags = dataset.item_tag_sets();
        if splits.roles().len() != item_tags.len() {
            return Err(Error::invalid(format!(
                "split covers {} items, dataset has {}",
                splits.roles().len(),
                item_tags.len()
            )));
        }
        let vocab = Vocabulary::build(dataset.texts(), min_count.max(1));
        let tokens = |es: &[super::dataset::Entity]| -> Vec<Vec<usize>> {
            es.iter().map(|e| tokenize_and_index(&e.text, &vocab)).collect()
        };
        let mut it_edges = Vec::new();
        for (i, tags) in item_tags.iter().enumerate() {
            let visible: Vec<usize> = match splits.role(i) {
                Role::Train | Role::Unused => tags.clone(),
                Role::ValComp | Role::TestComp => {
                    let held = splits.held_out(i).unwrap_or(&[]);
                    tags.iter().copied().filter(|t| !held.contains(t)).collect()
                }
                Role::ValFull | Role::TestFull => Vec::new(),
            };
            it_edges.extend(visible.into_iter().map(|t| (i, t)));
        }
        let graph = TripartiteGraph::build(
            tokens(&dataset.queries),
            tokens(&dataset.items),
            tokens(&dataset.tags),
            &dataset.query_item,
            &it_edges,
        )?;
        Ok(Self {
            dataset,
            vocab,
            graph,
            item_tags,
            splits,
        })
    }

    pub fn n_tags(&self) -> usize {
        self.graph.n_tags()
    }

    pub fn items_with_role(&self, role: Role) -> Vec<usize> {
        self.splits.items_with(role)
    }

    /// Tags of `item` visible in the graph.
    pub fn known_tags(&self, item: usize) -> Vec<usize> {
        self.graph.item_tags(item)
    }

    /// Tags to be predicted for `item`: the held-out pair for completion
    /// items, the full tag set otherwise.
    pub fn labels(&self, item: usize) -> Vec<usize> {
        match self.splits.held_out(item) {
            Some(h) => h.to_vec(),
            None => self.item_tags[item].clone(),
        }
    }

    /// The graph with completion items' known tags removed as well.
    pub fn graph_without_known_tags(&self) -> TripartiteGraph {
        let roles = self.splits.roles();
        self.graph.filter_edges(|_| true, |i, _| !roles[i].is_completion())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Entity;
    use std::collections::HashMap;

    fn task() -> TaggingTask {
        let ds = RawDataset {
            items: (0..4).map(|i| Entity::new(format!("i{i}"), "word")).collect(),
            queries: vec![Entity::new("q0", "word")],
            tags: (0..4).map(|t| Entity::new(format!("t{t}"), "tag")).collect(),
            query_item: (0..4).map(|i| (0, i, 1.0)).collect(),
            item_tag: vec![(0, 0), (0, 1), (1, 1), (1, 2), (2, 0), (2, 2), (2, 3), (3, 3)],
        };
        let roles = vec![Role::Train, Role::TestFull, Role::TestComp, Role::Unused];
        let held: HashMap<usize, Vec<usize>> = [(2, vec![0, 3])].into();
        let splits = SplitAssignment::new(roles, held, &ds.item_tag_sets()).unwrap();
        TaggingTask::new(ds, splits, 1).unwrap()
    }

    #[test]
    fn graph_hides_the_right_tags() {
        let t = task();
        assert_eq!(t.known_tags(0), vec![0, 1]);
        assert!(t.known_tags(1).is_empty());
        assert_eq!(t.known_tags(2), vec![2]);
        assert_eq!(t.known_tags(3), vec![3]);
        assert_eq!(t.labels(1), vec![1, 2]);
        assert_eq!(t.labels(2), vec![0, 3]);
        assert_eq!(t.graph.query_item_edges().len(), 4);
    }

    #[test]
    fn stripped_graph_drops_completion_tags_only() {
        let t = task();
        let g = t.graph_without_known_tags();
        assert!(g.item_tags(2).is_empty());
        assert_eq!(g.item_tags(0), vec![0, 1]);
        assert_eq!(g.item_tags(3), vec![3]);
    }
}
