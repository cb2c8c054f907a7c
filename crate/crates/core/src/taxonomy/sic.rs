use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    DescriptionStyle, LabelDescription, LabelSource, Result, TaxonomyError, TREE_SEPARATOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SicLevel {
    Division,
    MajorGroup,
    IndustryGroup,
    Industry,
}

impl SicLevel {
    fn for_code_len(len: usize) -> Option<SicLevel> {
        match len {
            2 => Some(SicLevel::MajorGroup),
            3 => Some(SicLevel::IndustryGroup),
            4 => Some(SicLevel::Industry),
            _ => None,
        }
    }
}

impl fmt::Display for SicLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SicLevel::Division => "division",
            SicLevel::MajorGroup => "major_group",
            SicLevel::IndustryGroup => "industry_group",
            SicLevel::Industry => "industry",
        })
    }
}

/// One row of `taxonomy/sic.json`.
///
/// Divisions are keyed by the range of major groups they cover, e.g.
/// `"01-09"`; every other level uses its digit code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SicEntry {
    pub code: String,
    pub level: SicLevel,
    pub title: String,
    #[serde(default)]
    pub long_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SicNode {
    pub code: String,
    pub level: SicLevel,
    pub title: String,
    pub long_text: String,
    pub children: Vec<SicNode>,
}

impl SicNode {
    fn walk<'a>(&'a self, out: &mut Vec<&'a SicNode>) {
        out.push(self);
        for c in &self.children {
            c.walk(out);
        }
    }

    /// Every node below this one, depth first in ascending code order.
    pub fn descendants(&self) -> Vec<&SicNode> {
        let mut out = Vec::new();
        for c in &self.children {
            c.walk(&mut out);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SicHierarchy {
    roots: Vec<SicNode>,
    // code -> child indices from the roots down
    index: BTreeMap<String, Vec<usize>>,
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn division_range(code: &str) -> Option<(u8, u8)> {
    let (lo, hi) = code.split_once('-')?;
    if lo.len() != 2 || hi.len() != 2 || !is_digits(lo) || !is_digits(hi) {
        return None;
    }
    let (lo, hi) = (lo.parse().ok()?, hi.parse().ok()?);
    (lo <= hi).then_some((lo, hi))
}

/// First `k` characters of a 4-digit SIC code.
pub fn code_prefix(code: &str, k: usize) -> Result<String> {
    if code.len() != 4 || !is_digits(code) {
        return Err(TaxonomyError::InvalidCode(code.to_string()));
    }
    if !(1..=4).contains(&k) {
        return Err(TaxonomyError::InvalidPrefixLength(k));
    }
    Ok(code[..k].to_string())
}

impl SicHierarchy {
    pub fn from_entries(entries: Vec<SicEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut divisions = Vec::new();
        let mut by_code: BTreeMap<String, SicEntry> = BTreeMap::new();
        for e in entries {
            if e.title.trim().is_empty() {
                return Err(TaxonomyError::EmptyText(e.code));
            }
            if !seen.insert(e.code.clone()) {
                return Err(TaxonomyError::Duplicate(e.code));
            }
            if e.level == SicLevel::Division {
                let range = division_range(&e.code)
                    .ok_or_else(|| TaxonomyError::InvalidCode(e.code.clone()))?;
                divisions.push((range, e));
                continue;
            }
            if !is_digits(&e.code) {
                return Err(TaxonomyError::InvalidCode(e.code));
            }
            let implied = SicLevel::for_code_len(e.code.len())
                .ok_or_else(|| TaxonomyError::InvalidCode(e.code.clone()))?;
            if implied != e.level {
                return Err(TaxonomyError::LevelMismatch {
                    code: e.code,
                    declared: e.level,
                    implied,
                });
            }
            by_code.insert(e.code.clone(), e);
        }
        for code in by_code.keys() {
            if code.len() > 2 && !by_code.contains_key(&code[..code.len() - 1]) {
                return Err(TaxonomyError::OrphanCode(code.clone()));
            }
        }
        divisions.sort_by_key(|(r, _)| *r);

        fn build(code: &str, by_code: &BTreeMap<String, SicEntry>) -> SicNode {
            let e = &by_code[code];
            // children are exactly the codes one digit longer sharing this prefix
            let children = by_code
                .range(format!("{code}0")..=format!("{code}9"))
                .filter(|(c, _)| c.len() == code.len() + 1)
                .map(|(c, _)| build(c, by_code))
                .collect();
            SicNode {
                code: e.code.clone(),
                level: e.level,
                title: e.title.clone(),
                long_text: e.long_text.clone(),
                children,
            }
        }

        let major: Vec<SicNode> = by_code
            .keys()
            .filter(|c| c.len() == 2)
            .map(|c| build(c, &by_code))
            .collect();

        let mut roots: Vec<SicNode> = divisions
            .into_iter()
            .map(|(_, e)| SicNode {
                code: e.code,
                level: SicLevel::Division,
                title: e.title,
                long_text: e.long_text,
                children: Vec::new(),
            })
            .collect();
        let mut loose = Vec::new();
        for m in major {
            let n: u8 = m.code.parse().expect("digits");
            let home = roots
                .iter_mut()
                .find(|d| division_range(&d.code).is_some_and(|(lo, hi)| (lo..=hi).contains(&n)));
            match home {
                Some(d) => d.children.push(m),
                None => loose.push(m),
            }
        }
        roots.extend(loose);
        roots.sort_by(|a, b| a.code.cmp(&b.code));

        let mut index = BTreeMap::new();
        fn index_nodes(
            nodes: &[SicNode],
            path: &mut Vec<usize>,
            index: &mut BTreeMap<String, Vec<usize>>,
        ) {
            for (i, n) in nodes.iter().enumerate() {
                path.push(i);
                index.insert(n.code.clone(), path.clone());
                index_nodes(&n.children, path, index);
                path.pop();
            }
        }
        index_nodes(&roots, &mut Vec::new(), &mut index);
        Ok(Self { roots, index })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_entries(serde_json::from_slice(&bytes)?)
    }

    pub fn roots(&self) -> &[SicNode] {
        &self.roots
    }

    pub fn get(&self, code: &str) -> Result<&SicNode> {
        let path = self
            .index
            .get(code)
            .ok_or_else(|| TaxonomyError::CodeNotFound(code.to_string()))?;
        let mut node = &self.roots[path[0]];
        for &i in &path[1..] {
            node = &node.children[i];
        }
        Ok(node)
    }

    pub fn title(&self, code: &str) -> Result<&str> {
        self.get(code).map(|n| n.title.as_str())
    }

    /// Flat rows in depth-first order, the inverse of [`Self::from_entries`].
    pub fn to_entries(&self) -> Vec<SicEntry> {
        let mut all = Vec::new();
        for r in &self.roots {
            r.walk(&mut all);
        }
        all.into_iter()
            .map(|n| SicEntry {
                code: n.code.clone(),
                level: n.level,
                title: n.title.clone(),
                long_text: n.long_text.clone(),
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }
}

impl LabelSource for SicHierarchy {
    fn describe(&self, label: &str, style: DescriptionStyle) -> Result<LabelDescription> {
        let node = self
            .get(label)
            .map_err(|_| TaxonomyError::UnknownLabel(label.to_string()))?;
        let text = match style {
            DescriptionStyle::Short => node.title.clone(),
            DescriptionStyle::Tree => std::iter::once(node)
                .chain(node.descendants())
                .map(|n| n.title.as_str())
                .collect::<Vec<_>>()
                .join(TREE_SEPARATOR),
            DescriptionStyle::Long => {
                if node.long_text.trim().is_empty() {
                    return Err(TaxonomyError::MissingLongText(vec![label.to_string()]));
                }
                node.long_text.clone()
            }
        };
        Ok(LabelDescription {
            label: label.to_string(),
            style,
            text,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(code: &str, level: SicLevel, title: &str) -> SicEntry {
        SicEntry {
            code: code.into(),
            level,
            title: title.into(),
            long_text: String::new(),
        }
    }

    fn small() -> SicHierarchy {
        use SicLevel::*;
        SicHierarchy::from_entries(vec![
            entry("0116", Industry, "Soybeans"),
            entry("01-09", Division, "Agriculture, Forestry, And Fishing"),
            entry("01", MajorGroup, "Agricultural Production Crops"),
            entry("011", IndustryGroup, "Cash Grains"),
            entry("0111", Industry, "Wheat"),
            entry("013", IndustryGroup, "Field Crops, Except Cash Grains"),
            entry("60", MajorGroup, "Depository Institutions"),
        ])
        .unwrap()
    }

    #[test]
    fn soybeans_path() {
        let h = small();
        assert_eq!(h.get("0116").unwrap().title, "Soybeans");
        let group = h.get("011").unwrap();
        assert!(group.children.iter().any(|c| c.code == "0116"));
        let major = h.get("01").unwrap();
        assert!(major.children.iter().any(|c| c.code == "011"));
        // "60" is not covered by any division and becomes a root
        assert!(h.roots().iter().any(|r| r.code == "60"));
        assert!(h.roots()[0].children.iter().any(|c| c.code == "01"));
    }

    #[test]
    fn unknown_and_orphan_codes() {
        let h = small();
        assert!(matches!(h.get("99"), Err(TaxonomyError::CodeNotFound(_))));
        let err = SicHierarchy::from_entries(vec![entry("0116", SicLevel::Industry, "Soybeans")])
            .unwrap_err();
        assert!(matches!(err, TaxonomyError::OrphanCode(c) if c == "0116"));
        let err =
            SicHierarchy::from_entries(vec![entry("011", SicLevel::Industry, "x")]).unwrap_err();
        assert!(matches!(err, TaxonomyError::LevelMismatch { .. }));
    }

    #[test]
    fn prefixes() {
        assert_eq!(code_prefix("0116", 2).unwrap(), "01");
        assert_eq!(code_prefix("0116", 4).unwrap(), "0116");
        assert_eq!(code_prefix("6022", 1).unwrap(), "6");
        assert!(code_prefix("60a2", 2).is_err());
        assert!(code_prefix("602", 2).is_err());
        assert!(code_prefix("6022", 0).is_err());
        assert!(code_prefix("6022", 5).is_err());
    }

    #[test]
    fn tree_and_long_descriptions() {
        let h = small();
        let tree = h.describe("01", DescriptionStyle::Tree).unwrap();
        assert_eq!(
            tree.text,
            "Agricultural Production Crops; Cash Grains; Wheat; Soybeans; Field Crops, Except Cash Grains"
        );
        let leaf = h.describe("60", DescriptionStyle::Tree).unwrap();
        assert_eq!(
            leaf.text,
            h.describe("60", DescriptionStyle::Short).unwrap().text
        );
        let err = h
            .describe_all(&["01".into(), "60".into()], DescriptionStyle::Long)
            .unwrap_err();
        match err {
            TaxonomyError::MissingLongText(labels) => assert_eq!(labels, vec!["01", "60"]),
            e => panic!("{e}"),
        }
    }
}
