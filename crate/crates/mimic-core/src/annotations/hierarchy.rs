//! Category hierarchy: a flat category -> classes mapping.
//!
//! File format: a JSON object whose keys are category names and whose
//! values are arrays of class names, e.g.
//! `{"animals": ["dog", "cat"], "vehicles": ["car"]}`. Class names are
//! canonicalized on load; a class may belong to at most one category.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

use super::{canonical_class_name, ClassPool};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryHierarchy {
    categories: BTreeMap<String, BTreeSet<String>>,
}

impl CategoryHierarchy {
    pub fn from_map(raw: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut categories: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut owner: BTreeMap<String, String> = BTreeMap::new();
        for (category, classes) in raw {
            let category = category.trim().to_lowercase();
            if classes.is_empty() {
                return Err(CoreError::Parse {
                    path: "hierarchy".into(),
                    line: None,
                    message: format!("category '{category}' has no classes"),
                });
            }
            let mut set = BTreeSet::new();
            for class in classes {
                let class = canonical_class_name(&class);
                if let Some(first) = owner.get(&class) {
                    return Err(CoreError::DuplicateClass {
                        class,
                        first_category: first.clone(),
                        second_category: category,
                    });
                }
                owner.insert(class.clone(), category.clone());
                set.insert(class);
            }
            categories.insert(category, set);
        }
        Ok(CategoryHierarchy { categories })
    }

    pub fn categories(&self) -> impl Iterator<Item = &String> {
        self.categories.keys()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn classes_of(&self, category: &str) -> Option<&BTreeSet<String>> {
        self.categories.get(category)
    }

    pub fn category_of(&self, class: &str) -> Option<&str> {
        self.categories
            .iter()
            .find(|(_, classes)| classes.contains(class))
            .map(|(name, _)| name.as_str())
    }

    /// Hierarchy classes missing from the pool. These are load warnings,
    /// not errors: a hierarchy may cover more vocabulary than one corpus.
    pub fn unknown_classes(&self, pool: &ClassPool) -> Vec<String> {
        let mut unknown: Vec<String> = self
            .categories
            .values()
            .flatten()
            .filter(|class| !pool.contains(class))
            .cloned()
            .collect();
        unknown.sort();
        unknown.dedup();
        unknown
    }
}

pub fn load_hierarchy(path: &Path) -> Result<CategoryHierarchy> {
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(&text).map_err(|e| {
        CoreError::parse(
            path.display().to_string(),
            Some(e.line() as u64),
            e.to_string(),
        )
    })?;
    CategoryHierarchy::from_map(raw)
}
