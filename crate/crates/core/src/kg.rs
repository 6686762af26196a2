use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type EntityId = u32;
pub type RelationId = u32;

/// Dense ids assigned in sorted label order, so the same label set always
/// yields the same ids regardless of file or split order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(labels: Vec<String>) -> Self {
        Vocabulary::from_labels(labels)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.labels
    }
}

impl Vocabulary {
    pub fn from_labels<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        labels.sort();
        labels.dedup();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        Self { labels, index }
    }

    /// Vocabulary `0..n` labelled by the zero-padded decimal id, for
    /// synthetic data. Padding keeps label order equal to id order.
    pub fn numbered(n: usize) -> Self {
        let width = n.saturating_sub(1).to_string().len();
        let labels: Vec<String> = (0..n).map(|i| format!("{i:0width$}")).collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();
        Self { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains_id(&self, id: u32) -> bool {
        (id as usize) < self.labels.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub const fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub entities: Vocabulary,
    pub relations: Vocabulary,
    triples: Vec<Triple>,
}

impl KnowledgeGraph {
    /// Builds a graph; triples are sorted and deduplicated.
    pub fn new(entities: Vocabulary, relations: Vocabulary, mut triples: Vec<Triple>) -> Result<Self> {
        for t in &triples {
            check_triple(t, entities.len(), relations.len())?;
        }
        triples.sort_unstable();
        triples.dedup();
        Ok(Self {
            entities,
            relations,
            triples,
        })
    }

    /// Builds vocabularies and ids from labelled triples.
    pub fn from_labelled<S: AsRef<str>>(triples: &[(S, S, S)]) -> Self {
        let entities = Vocabulary::from_labels(
            triples
                .iter()
                .flat_map(|(h, _, t)| [h.as_ref().to_string(), t.as_ref().to_string()]),
        );
        let relations =
            Vocabulary::from_labels(triples.iter().map(|(_, r, _)| r.as_ref().to_string()));
        let ids = triples
            .iter()
            .map(|(h, r, t)| {
                Triple::new(
                    entities.id(h.as_ref()).unwrap(),
                    relations.id(r.as_ref()).unwrap(),
                    entities.id(t.as_ref()).unwrap(),
                )
            })
            .collect();
        Self::new(entities, relations, ids).expect("ids come from the vocabularies")
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    /// Incident triple count per entity (in-degree + out-degree; a self-loop counts twice).
    pub fn degrees(&self) -> Vec<u64> {
        let mut deg = vec![0u64; self.num_entities()];
        for t in &self.triples {
            deg[t.head as usize] += 1;
            deg[t.tail as usize] += 1;
        }
        deg
    }
}

pub(crate) fn check_triple(t: &Triple, n_entities: usize, n_relations: usize) -> Result<()> {
    if t.head as usize >= n_entities || t.tail as usize >= n_entities {
        return Err(Error::invalid(format!(
            "triple {t:?} references an entity outside the vocabulary of {n_entities}"
        )));
    }
    if t.relation as usize >= n_relations {
        return Err(Error::invalid(format!(
            "triple {t:?} references a relation outside the vocabulary of {n_relations}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_ids_and_dedup() {
        let kg = KnowledgeGraph::from_labelled(&[
            ("b", "r", "a"),
            ("a", "s", "b"),
            ("a", "s", "c"),
            ("a", "s", "d"),
            ("a", "s", "d"),
        ]);
        assert_eq!(kg.num_entities(), 4);
        assert_eq!(kg.num_relations(), 2);
        assert_eq!(kg.triples().len(), 4);
        assert_eq!(kg.entities.id("a"), Some(0));
        assert_eq!(kg.entities.label(3), Some("d"));
        assert_eq!(kg.degrees(), vec![4, 2, 1, 1]);
    }

    #[test]
    fn self_loop_counts_twice() {
        let kg = KnowledgeGraph::from_labelled(&[("x", "r", "x")]);
        assert_eq!(kg.degrees(), vec![2]);
    }

    #[test]
    fn out_of_vocabulary() {
        let err = KnowledgeGraph::new(
            Vocabulary::numbered(2),
            Vocabulary::numbered(1),
            vec![Triple::new(0, 0, 2)],
        );
        assert!(err.is_err());
        let err = KnowledgeGraph::new(
            Vocabulary::numbered(2),
            Vocabulary::numbered(1),
            vec![Triple::new(0, 1, 1)],
        );
        assert!(err.is_err());
    }

    #[test]
    fn numbered_round_trips_through_json() {
        let v = Vocabulary::numbered(12);
        assert_eq!(v.label(3), Some("03"));
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("11"), Some(11));
    }
}
