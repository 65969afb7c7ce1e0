//! Declarative grouping functions: map dataset rows into named demographic
//! groups, either by a raw attribute, by the intersection of several
//! attributes, or through a registered custom predicate.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error)]
pub enum GroupingError {
    #[error("attribute {0:?} not present in the dataset's raw attributes")]
    UnknownAttribute(String),
    #[error("grouping produced fewer than two groups")]
    FewerThanTwoGroups,
    #[error("group {0:?} is empty")]
    EmptyGroup(String),
    #[error("group {group:?} references index {index} outside 0..{n}")]
    IndexOutOfRange {
        group: String,
        index: usize,
        n: usize,
    },
    #[error("no predicate registered under {0:?}")]
    UnknownPredicate(String),
    #[error("by_attribute takes exactly one attribute, intersection at least two")]
    BadAttributeCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupingKind {
    ByAttribute,
    ByAttributeIntersection,
    CustomPredicate,
}

#[derive(Debug, Clone)]
pub struct GroupingSpec {
    pub kind: GroupingKind,
    pub attribute_names: Vec<String>,
    pub predicate_id: Option<String>,
}

impl GroupingSpec {
    pub fn by_attribute(name: impl Into<String>) -> Self {
        Self {
            kind: GroupingKind::ByAttribute,
            attribute_names: vec![name.into()],
            predicate_id: None,
        }
    }

    pub fn by_intersection(names: Vec<String>) -> Self {
        Self {
            kind: GroupingKind::ByAttributeIntersection,
            attribute_names: names,
            predicate_id: None,
        }
    }

    pub fn custom(predicate_id: impl Into<String>) -> Self {
        Self {
            kind: GroupingKind::CustomPredicate,
            attribute_names: Vec::new(),
            predicate_id: Some(predicate_id.into()),
        }
    }
}

/// Group-id to member indices. Groups may overlap and need not cover the
/// dataset; attribute-based groupings always partition it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignment {
    groups: BTreeMap<String, Vec<usize>>,
}

impl GroupAssignment {
    pub fn new(mut groups: BTreeMap<String, Vec<usize>>, n: usize) -> Result<Self, GroupingError> {
        if groups.len() < 2 {
            return Err(GroupingError::FewerThanTwoGroups);
        }
        for (id, members) in &mut groups {
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(GroupingError::EmptyGroup(id.clone()));
            }
            if let Some(&last) = members.last() {
                if last >= n {
                    return Err(GroupingError::IndexOutOfRange {
                        group: id.clone(),
                        index: last,
                        n,
                    });
                }
            }
        }
        Ok(Self { groups })
    }

    pub fn group(&self, id: &str) -> Option<&[usize]> {
        self.groups.get(id).map(Vec::as_slice)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.groups.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.groups.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

type PredicateFn = dyn Fn(&Dataset) -> BTreeMap<String, Vec<usize>> + Send + Sync;

/// Registry for programmatic grouping functions. The CLI never populates
/// this; library callers register predicates under string keys.
#[derive(Default, Clone)]
pub struct PredicateRegistry {
    predicates: BTreeMap<String, Arc<PredicateFn>>,
}

impl PredicateRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, id: impl Into<String>, predicate: F)
    where
        F: Fn(&Dataset) -> BTreeMap<String, Vec<usize>> + Send + Sync + 'static,
    {
        self.predicates.insert(id.into(), Arc::new(predicate));
    }
}

/// Evaluates a grouping spec without custom predicates.
pub fn assign_groups(dataset: &Dataset, spec: &GroupingSpec) -> Result<GroupAssignment, GroupingError> {
    assign_groups_with(dataset, spec, &PredicateRegistry::new())
}

/// Evaluates a grouping spec, resolving custom predicates from `registry`.
pub fn assign_groups_with(
    dataset: &Dataset,
    spec: &GroupingSpec,
    registry: &PredicateRegistry,
) -> Result<GroupAssignment, GroupingError> {
    let groups = match spec.kind {
        GroupingKind::ByAttribute => {
            if spec.attribute_names.len() != 1 {
                return Err(GroupingError::BadAttributeCount);
            }
            group_by_values(dataset, &spec.attribute_names)?
        }
        GroupingKind::ByAttributeIntersection => {
            if spec.attribute_names.len() < 2 {
                return Err(GroupingError::BadAttributeCount);
            }
            group_by_values(dataset, &spec.attribute_names)?
        }
        GroupingKind::CustomPredicate => {
            let id = spec
                .predicate_id
                .as_deref()
                .ok_or_else(|| GroupingError::UnknownPredicate(String::new()))?;
            let predicate = registry
                .predicates
                .get(id)
                .ok_or_else(|| GroupingError::UnknownPredicate(id.to_string()))?;
            predicate(dataset)
        }
    };
    GroupAssignment::new(groups, dataset.len())
}

/// One group per distinct attribute value tuple; intersection keys join the
/// values with `|`.
fn group_by_values(
    dataset: &Dataset,
    attributes: &[String],
) -> Result<BTreeMap<String, Vec<usize>>, GroupingError> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in 0..dataset.len() {
        let mut parts = Vec::with_capacity(attributes.len());
        for attr in attributes {
            let value = dataset
                .raw_attribute(i, attr)
                .ok_or_else(|| GroupingError::UnknownAttribute(attr.clone()))?;
            parts.push(value.to_string());
        }
        groups.entry(parts.join("|")).or_default().push(i);
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;

    fn dataset_with_attrs(attrs: Vec<BTreeMap<String, String>>) -> Dataset {
        let examples = attrs
            .into_iter()
            .map(|raw_attributes| Example {
                features: vec![0.0],
                label: 0,
                raw_attributes,
            })
            .collect();
        Dataset::new(examples, vec!["x".to_string()], "y".to_string()).unwrap()
    }

    fn attr(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn by_attribute_partitions_ten_rows() {
        // rows 4,5,7,9 (1-indexed) are African American, the rest Caucasian
        let aa = [4usize, 5, 7, 9];
        let attrs = (1..=10)
            .map(|row| {
                let race = if aa.contains(&row) {
                    "African American"
                } else {
                    "Caucasian"
                };
                attr(&[("race", race)])
            })
            .collect();
        let ds = dataset_with_attrs(attrs);
        let assignment = assign_groups(&ds, &GroupingSpec::by_attribute("race")).unwrap();
        assert_eq!(
            assignment.group("Caucasian").unwrap(),
            &[0, 1, 2, 5, 7, 9]
        );
        assert_eq!(assignment.group("African American").unwrap(), &[3, 4, 6, 8]);
    }

    #[test]
    fn intersection_yields_cross_product_groups() {
        let mut attrs = Vec::new();
        for race in ["A", "B"] {
            for sex in ["F", "M"] {
                attrs.push(attr(&[("race", race), ("sex", sex)]));
            }
        }
        let ds = dataset_with_attrs(attrs);
        let spec = GroupingSpec::by_intersection(vec!["race".to_string(), "sex".to_string()]);
        let assignment = assign_groups(&ds, &spec).unwrap();
        let ids: Vec<&str> = assignment.ids().collect();
        assert_eq!(ids, vec!["A|F", "A|M", "B|F", "B|M"]);
    }

    #[test]
    fn single_value_attribute_is_rejected() {
        let attrs = vec![attr(&[("race", "A")]), attr(&[("race", "A")])];
        let ds = dataset_with_attrs(attrs);
        assert!(matches!(
            assign_groups(&ds, &GroupingSpec::by_attribute("race")),
            Err(GroupingError::FewerThanTwoGroups)
        ));
    }

    #[test]
    fn unknown_attribute_is_rejected() {
        let ds = dataset_with_attrs(vec![attr(&[("race", "A")]), attr(&[("race", "B")])]);
        assert!(matches!(
            assign_groups(&ds, &GroupingSpec::by_attribute("sex")),
            Err(GroupingError::UnknownAttribute(a)) if a == "sex"
        ));
    }

    #[test]
    fn by_attribute_groups_are_disjoint_and_cover() {
        let attrs = (0..25)
            .map(|i| attr(&[("g", ["p", "q", "r"][i % 3])]))
            .collect();
        let ds = dataset_with_attrs(attrs);
        let assignment = assign_groups(&ds, &GroupingSpec::by_attribute("g")).unwrap();
        let mut seen = vec![false; ds.len()];
        for (_, members) in assignment.iter() {
            for &i in members {
                assert!(!seen[i], "groups overlap at {i}");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "groups do not cover the dataset");
    }

    #[test]
    fn custom_predicate_may_overlap() {
        let ds = dataset_with_attrs(vec![attr(&[("g", "a")]); 4]);
        let mut registry = PredicateRegistry::new();
        registry.register("halves", |ds: &Dataset| {
            let n = ds.len();
            let mut m = BTreeMap::new();
            m.insert("low".to_string(), (0..n / 2 + 1).collect());
            m.insert("high".to_string(), (n / 2..n).collect());
            m
        });
        let assignment =
            assign_groups_with(&ds, &GroupingSpec::custom("halves"), &registry).unwrap();
        assert_eq!(assignment.group("low").unwrap(), &[0, 1, 2]);
        assert_eq!(assignment.group("high").unwrap(), &[2, 3]);
    }

    #[test]
    fn unregistered_predicate_is_rejected() {
        let ds = dataset_with_attrs(vec![attr(&[("g", "a")]), attr(&[("g", "b")])]);
        assert!(matches!(
            assign_groups(&ds, &GroupingSpec::custom("nope")),
            Err(GroupingError::UnknownPredicate(p)) if p == "nope"
        ));
    }
}
