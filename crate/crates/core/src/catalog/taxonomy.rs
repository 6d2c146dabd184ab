use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CatalogError;

/// One of the four orthogonal scaffold renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Back,
    Left,
    Right,
}

impl View {
    pub const ALL: [View; 4] = [View::Front, View::Back, View::Left, View::Right];

    pub fn as_str(&self) -> &'static str {
        match self {
            View::Front => "front",
            View::Back => "back",
            View::Left => "left",
            View::Right => "right",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Category universe plus the routing tables that sit on top of it.
///
/// File form is JSON with these keys; `display_names`, `modifier_keywords`
/// and `bundle_category` are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub categories: BTreeSet<String>,
    /// Concept keyword → every category it may denote.
    #[serde(default)]
    pub concept_map: BTreeMap<String, BTreeSet<String>>,
    #[serde(default)]
    pub exclusion_groups: Vec<BTreeSet<String>>,
    #[serde(default)]
    pub view_map: BTreeMap<String, Vec<View>>,
    #[serde(default)]
    pub required_core: BTreeSet<String>,
    #[serde(default)]
    pub display_names: BTreeMap<String, String>,
    /// Modifier keywords that argue for a category when resolving an
    /// exclusion conflict. Categories missing here fall back to the
    /// built-in table.
    #[serde(default)]
    pub modifier_keywords: BTreeMap<String, Vec<String>>,
    /// Category whose assets are body bundles.
    #[serde(default)]
    pub bundle_category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub id: String,
    pub message: String,
}

impl Violation {
    fn new(field: &str, id: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            id: id.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]: {}", self.field, self.id, self.message)
    }
}

impl Taxonomy {
    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path).map_err(|e| CatalogError::io(path, e))?;
        let taxonomy: Taxonomy =
            serde_json::from_str(&text).map_err(|e| CatalogError::InvalidTaxonomy(vec![
                Violation::new("document", path.display().to_string(), e.to_string()),
            ]))?;
        let violations = taxonomy.validate();
        if !violations.is_empty() {
            return Err(CatalogError::InvalidTaxonomy(violations));
        }
        Ok(taxonomy)
    }

    pub fn contains(&self, category_id: &str) -> bool {
        self.categories.contains(category_id)
    }

    pub fn display_name(&self, category_id: &str) -> String {
        self.display_names
            .get(category_id)
            .cloned()
            .unwrap_or_else(|| category_id.replace('_', " "))
    }

    /// The exclusion group containing `category_id`, if any.
    pub fn exclusion_group_of(&self, category_id: &str) -> Option<&BTreeSet<String>> {
        self.exclusion_groups
            .iter()
            .find(|g| g.contains(category_id))
    }

    pub fn mutually_exclusive(&self, a: &str, b: &str) -> bool {
        a != b
            && self
                .exclusion_group_of(a)
                .is_some_and(|g| g.contains(b))
    }

    pub fn bundle_category(&self) -> Option<&str> {
        self.bundle_category.as_deref()
    }

    /// Every violated invariant. Empty means the taxonomy is usable.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (keyword, targets) in &self.concept_map {
            if keyword.trim().is_empty() {
                out.push(Violation::new("concept_map", keyword, "empty concept keyword"));
            }
            if targets.is_empty() {
                out.push(Violation::new("concept_map", keyword, "concept maps to no category"));
            }
            for t in targets {
                if !self.contains(t) {
                    out.push(Violation::new(
                        "concept_map",
                        t,
                        format!("target of concept '{keyword}' is not a declared category"),
                    ));
                }
            }
        }

        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (gi, group) in self.exclusion_groups.iter().enumerate() {
            for member in group {
                if !self.contains(member) {
                    out.push(Violation::new(
                        "exclusion_groups",
                        member,
                        format!("member of group {gi} is not a declared category"),
                    ));
                }
                if let Some(prev) = seen.insert(member, gi) {
                    out.push(Violation::new(
                        "exclusion_groups",
                        member,
                        format!("appears in groups {prev} and {gi}; groups must be disjoint"),
                    ));
                }
            }
            let core: Vec<&String> = group.intersection(&self.required_core).collect();
            if core.len() > 1 {
                out.push(Violation::new(
                    "exclusion_groups",
                    core[1].as_str(),
                    format!("group {gi} holds more than one required_core category"),
                ));
            }
        }

        for (cat, views) in &self.view_map {
            if !self.contains(cat) {
                out.push(Violation::new("view_map", cat, "not a declared category"));
            }
            if views.is_empty() {
                out.push(Violation::new("view_map", cat, "empty view preference list"));
            }
            let unique: BTreeSet<&View> = views.iter().collect();
            if unique.len() != views.len() {
                out.push(Violation::new("view_map", cat, "duplicate view in preference list"));
            }
        }

        for cat in &self.required_core {
            if !self.contains(cat) {
                out.push(Violation::new("required_core", cat, "not a declared category"));
            }
        }
        for cat in self.display_names.keys() {
            if !self.contains(cat) {
                out.push(Violation::new("display_names", cat, "not a declared category"));
            }
        }
        for cat in self.modifier_keywords.keys() {
            if !self.contains(cat) {
                out.push(Violation::new("modifier_keywords", cat, "not a declared category"));
            }
        }
        if let Some(b) = &self.bundle_category {
            if !self.contains(b) {
                out.push(Violation::new("bundle_category", b, "not a declared category"));
            }
        }
        for cat in &self.categories {
            if cat.trim().is_empty() {
                out.push(Violation::new("categories", cat, "empty category id"));
            }
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    pub(crate) fn fixture() -> Taxonomy {
        Taxonomy {
            categories: set(&["body", "sweater", "jacket", "pants", "halo", "back_accessory"]),
            concept_map: [
                ("hoodie", set(&["sweater", "jacket"])),
                ("cargo pants", set(&["pants"])),
                ("pants", set(&["pants"])),
                ("halo", set(&["halo"])),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
            exclusion_groups: vec![set(&["sweater", "jacket"])],
            view_map: [
                ("back_accessory".to_string(), vec![View::Back, View::Left]),
                ("pants".to_string(), vec![View::Front, View::Left]),
            ]
            .into_iter()
            .collect(),
            required_core: set(&["body"]),
            display_names: BTreeMap::new(),
            modifier_keywords: BTreeMap::new(),
            bundle_category: Some("body".into()),
        }
    }

    #[test]
    fn well_formed_taxonomy_has_no_violations() {
        assert_eq!(fixture().validate(), vec![]);
    }

    #[test]
    fn ambiguous_concept_is_valid() {
        let t = fixture();
        assert_eq!(t.concept_map["hoodie"], set(&["sweater", "jacket"]));
        assert!(t.validate().is_empty());
    }

    #[test]
    fn undeclared_exclusion_member_is_one_violation() {
        let mut t = fixture();
        t.exclusion_groups.push(set(&["cape"]));
        let v = t.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "exclusion_groups");
        assert_eq!(v[0].id, "cape");
    }

    #[test]
    fn overlapping_groups_and_bad_views_are_reported() {
        let mut t = fixture();
        t.exclusion_groups.push(set(&["jacket", "pants"]));
        t.view_map.insert("halo".into(), vec![]);
        t.concept_map.insert("wings".into(), set(&["wing"]));
        let v = t.validate();
        assert!(v.iter().any(|x| x.field == "exclusion_groups" && x.id == "jacket"));
        assert!(v.iter().any(|x| x.field == "view_map" && x.id == "halo"));
        assert!(v.iter().any(|x| x.field == "concept_map" && x.id == "wing"));
    }

    #[test]
    fn unknown_view_fails_to_parse() {
        let doc = r#"{"categories":["a"],"view_map":{"a":["top"]}}"#;
        assert!(serde_json::from_str::<Taxonomy>(doc).is_err());
    }

    #[test]
    fn exclusivity_lookup() {
        let t = fixture();
        assert!(t.mutually_exclusive("jacket", "sweater"));
        assert!(!t.mutually_exclusive("jacket", "jacket"));
        assert!(!t.mutually_exclusive("jacket", "pants"));
        assert_eq!(t.display_name("back_accessory"), "back accessory");
    }
}
