//! Conditional-utility matrix and contextual choice.
//!
//! Entry `(i, j)` of a [`UtilityMatrix`] is the utility item `i` gains when
//! item `j` is also on offer; the diagonal holds each item's context-free
//! utility. An item's utility inside a [`ChoiceSpace`] is its diagonal plus
//! the entries of its row restricted to the other items in that space.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

/// Opaque, non-empty item identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::EmptyItemId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ItemId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ItemId> for String {
    fn from(value: ItemId) -> Self {
        value.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Parses a comma-separated list of item ids, skipping surrounding whitespace.
pub fn parse_ids(csv: &str) -> Result<Vec<ItemId>> {
    csv.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ItemId::new)
        .collect()
}

/// The ordered set of all possible items. Order fixes matrix indices and is
/// the tie-break order everywhere.
#[derive(Debug, Clone)]
pub struct Catalog {
    items: Vec<ItemId>,
    labels: BTreeMap<ItemId, String>,
    index: HashMap<ItemId, usize>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items && self.labels == other.labels
    }
}

impl Catalog {
    pub fn new(items: Vec<ItemId>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyCatalog);
        }
        let mut index = HashMap::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            if index.insert(item.clone(), i).is_some() {
                return Err(Error::DuplicateItem(item.to_string()));
            }
        }
        Ok(Self {
            items,
            labels: BTreeMap::new(),
            index,
        })
    }

    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Result<Self> {
        let items = ids
            .iter()
            .map(|s| ItemId::new(s.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }

    /// Attaches display labels. Labels for ids outside the catalog are rejected.
    pub fn with_labels(mut self, labels: BTreeMap<ItemId, String>) -> Result<Self> {
        for id in labels.keys() {
            self.index_of(id)?;
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn labels(&self) -> &BTreeMap<ItemId, String> {
        &self.labels
    }

    pub fn item(&self, index: usize) -> &ItemId {
        &self.items[index]
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn index_of(&self, id: &ItemId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownItem(id.to_string()))
    }

    /// Display name, falling back to the id.
    pub fn label<'a>(&'a self, id: &'a ItemId) -> &'a str {
        self.labels
            .get(id)
            .map(String::as_str)
            .unwrap_or(id.as_str())
    }

    /// Catalog indices of the space's items, ascending.
    pub fn resolve(&self, space: &ChoiceSpace) -> Result<Vec<usize>> {
        self.resolve_ids(space.iter())
    }

    pub fn resolve_ids<'a>(&self, ids: impl IntoIterator<Item = &'a ItemId>) -> Result<Vec<usize>> {
        let mut out = ids
            .into_iter()
            .map(|id| self.index_of(id))
            .collect::<Result<Vec<_>>>()?;
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Sorts ids into catalog order. Unknown ids are an error.
    pub fn ordered(&self, ids: impl IntoIterator<Item = ItemId>) -> Result<Vec<ItemId>> {
        let mut ids: Vec<(usize, ItemId)> = ids
            .into_iter()
            .map(|id| Ok((self.index_of(&id)?, id)))
            .collect::<Result<_>>()?;
        ids.sort_by_key(|(i, _)| *i);
        ids.dedup_by_key(|(i, _)| *i);
        Ok(ids.into_iter().map(|(_, id)| id).collect())
    }
}

/// A non-empty set of items offered together.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemId>", into = "Vec<ItemId>")]
pub struct ChoiceSpace {
    items: BTreeSet<ItemId>,
}

impl ChoiceSpace {
    pub fn new(items: impl IntoIterator<Item = ItemId>) -> Result<Self> {
        let items: BTreeSet<ItemId> = items.into_iter().collect();
        if items.is_empty() {
            return Err(Error::EmptySpace);
        }
        Ok(Self { items })
    }

    pub fn from_ids<S: AsRef<str>>(ids: &[S]) -> Result<Self> {
        Self::new(
            ids.iter()
                .map(|s| ItemId::new(s.as_ref()))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn parse(csv: &str) -> Result<Self> {
        Self::new(parse_ids(csv)?)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.items.contains(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ItemId> {
        self.items.iter()
    }

    pub fn as_set(&self) -> &BTreeSet<ItemId> {
        &self.items
    }

    pub fn union<'a>(&self, more: impl IntoIterator<Item = &'a ItemId>) -> ChoiceSpace {
        let mut items = self.items.clone();
        items.extend(more.into_iter().cloned());
        ChoiceSpace { items }
    }

    pub fn is_subset(&self, other: &ChoiceSpace) -> bool {
        self.items.is_subset(&other.items)
    }
}

impl TryFrom<Vec<ItemId>> for ChoiceSpace {
    type Error = Error;

    fn try_from(value: Vec<ItemId>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ChoiceSpace> for Vec<ItemId> {
    fn from(value: ChoiceSpace) -> Self {
        value.items.into_iter().collect()
    }
}

impl fmt::Display for ChoiceSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            f.write_str(item.as_str())?;
        }
        f.write_str("}")
    }
}

/// On-disk matrix document: `{catalog, labels?, entries}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub catalog: Vec<ItemId>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<ItemId, String>,
    pub entries: Vec<Vec<f64>>,
}

/// Square conditional-utility matrix over a catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityMatrix {
    catalog: Catalog,
    n: usize,
    entries: Vec<f64>,
}

impl UtilityMatrix {
    pub fn new(catalog: Catalog, rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = catalog.len();
        if rows.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rows.len(),
            });
        }
        let mut entries = Vec::with_capacity(n * n);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (c, v) in row.into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteEntry { row: r, col: c });
                }
                entries.push(v);
            }
        }
        Ok(Self {
            catalog,
            n,
            entries,
        })
    }

    pub(crate) fn from_flat(catalog: Catalog, entries: Vec<f64>) -> Result<Self> {
        let n = catalog.len();
        debug_assert_eq!(entries.len(), n * n);
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                row: pos / n,
                col: pos % n,
            });
        }
        Ok(Self {
            catalog,
            n,
            entries,
        })
    }

    /// Diagonal `values`, zero elsewhere.
    pub fn diagonal(catalog: Catalog, values: &[f64]) -> Result<Self> {
        let n = catalog.len();
        if values.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.len(),
            });
        }
        let mut rows = vec![vec![0.0; n]; n];
        for (i, v) in values.iter().enumerate() {
            rows[i][i] = *v;
        }
        Self::new(catalog, rows)
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn entry(&self, row: &ItemId, col: &ItemId) -> Result<f64> {
        Ok(self.get(self.catalog.index_of(row)?, self.catalog.index_of(col)?))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Utility of the item at catalog index `k` among the (sorted) indices in
    /// `space`. `k` must be one of them.
    pub(crate) fn utility_at(&self, k: usize, space: &[usize]) -> f64 {
        let row = &self.entries[k * self.n..(k + 1) * self.n];
        let cross: f64 = space.iter().filter(|&&i| i != k).map(|&i| row[i]).sum();
        row[k] + cross
    }

    /// First index (in catalog order) with the strictly highest utility.
    pub(crate) fn argmax_at(&self, space: &[usize]) -> usize {
        let mut best = space[0];
        let mut best_u = self.utility_at(best, space);
        for &k in &space[1..] {
            let u = self.utility_at(k, space);
            if u > best_u {
                best = k;
                best_u = u;
            }
        }
        best
    }

    /// `a_kk + sum of a_ki over the other items i in the space`.
    pub fn contextual_utility(&self, item: &ItemId, space: &ChoiceSpace) -> Result<f64> {
        let k = self.catalog.index_of(item)?;
        let idx = self.catalog.resolve(space)?;
        if !space.contains(item) {
            return Err(Error::ItemNotInSpace {
                item: item.to_string(),
            });
        }
        Ok(self.utility_at(k, &idx))
    }

    pub fn utility_table(&self, space: &ChoiceSpace) -> Result<UtilityTable> {
        let idx = self.catalog.resolve(space)?;
        let entries = idx
            .iter()
            .map(|&k| (self.catalog.item(k).clone(), self.utility_at(k, &idx)))
            .collect();
        Ok(UtilityTable { entries })
    }

    /// The utility-maximizing item; ties go to the item earliest in the catalog.
    pub fn best_choice(&self, space: &ChoiceSpace) -> Result<ItemId> {
        let idx = self.catalog.resolve(space)?;
        Ok(self.catalog.item(self.argmax_at(&idx)).clone())
    }

    pub fn scale(&self, c: f64) -> Result<UtilityMatrix> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::NonPositiveScale(c));
        }
        Self::from_flat(
            self.catalog.clone(),
            self.entries.iter().map(|v| v * c).collect(),
        )
    }

    pub fn to_file(&self) -> MatrixFile {
        MatrixFile {
            catalog: self.catalog.items().to_vec(),
            labels: self.catalog.labels().clone(),
            entries: self.rows(),
        }
    }

    pub fn from_file(file: MatrixFile) -> Result<Self> {
        let catalog = Catalog::new(file.catalog)?.with_labels(file.labels)?;
        Self::new(catalog, file.entries)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("matrix serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Contextual utilities for every item in a space, in catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityTable {
    pub entries: Vec<(ItemId, f64)>,
}

impl UtilityTable {
    pub fn get(&self, id: &ItemId) -> Option<f64> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, v)| *v)
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }
}

impl Serialize for UtilityTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (k, v) in &self.entries {
            map.serialize_entry(k.as_str(), v)?;
        }
        map.end()
    }
}

/// Gain an item receives from a *set* of co-present items, capturing
/// interactions the additive model ignores.
pub trait GainOracle {
    fn gain(&self, item: &ItemId, others: &BTreeSet<ItemId>) -> f64;
}

impl<F> GainOracle for F
where
    F: Fn(&ItemId, &BTreeSet<ItemId>) -> f64,
{
    fn gain(&self, item: &ItemId, others: &BTreeSet<ItemId>) -> f64 {
        self(item, others)
    }
}

/// The additive closure of a matrix's off-diagonal entries.
pub struct AdditiveGains<'a> {
    matrix: &'a UtilityMatrix,
}

impl<'a> AdditiveGains<'a> {
    pub fn new(matrix: &'a UtilityMatrix) -> Self {
        Self { matrix }
    }
}

impl GainOracle for AdditiveGains<'_> {
    fn gain(&self, item: &ItemId, others: &BTreeSet<ItemId>) -> f64 {
        let cat = self.matrix.catalog();
        let k = cat.index_of(item).expect("item in catalog");
        let mut idx: Vec<usize> = others
            .iter()
            .map(|o| cat.index_of(o).expect("item in catalog"))
            .collect();
        idx.sort_unstable();
        idx.iter().map(|&i| self.matrix.get(k, i)).sum()
    }
}

/// Subset-valued ("full method") utility: the item's diagonal plus whatever
/// the oracle says the rest of the space adds as a whole. Exponential in the
/// information it needs, so it only serves as a reference in tests.
pub fn full_method_utility(
    base: &UtilityMatrix,
    gains: &dyn GainOracle,
    item: &ItemId,
    space: &ChoiceSpace,
) -> Result<f64> {
    let k = base.catalog().index_of(item)?;
    base.catalog().resolve(space)?;
    if !space.contains(item) {
        return Err(Error::ItemNotInSpace {
            item: item.to_string(),
        });
    }
    let others: BTreeSet<ItemId> = space.iter().filter(|i| *i != item).cloned().collect();
    let own = base.get(k, k);
    if others.is_empty() {
        return Ok(own);
    }
    Ok(own + gains.gain(item, &others))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m1() -> UtilityMatrix {
        UtilityMatrix::new(
            Catalog::from_ids(&["H", "R", "F"]).unwrap(),
            vec![
                vec![5.0, 0.0, 15.0],
                vec![0.0, 10.0, 0.0],
                vec![0.0, 0.0, 7.0],
            ],
        )
        .unwrap()
    }

    fn id(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn space(s: &str) -> ChoiceSpace {
        ChoiceSpace::parse(s).unwrap()
    }

    #[test]
    fn contextual_utility_sums_over_space_only() {
        let m = m1();
        assert_eq!(
            m.contextual_utility(&id("H"), &space("H,R,F")).unwrap(),
            20.0
        );
        assert_eq!(m.contextual_utility(&id("H"), &space("H,R")).unwrap(), 5.0);
        assert_eq!(m.contextual_utility(&id("R"), &space("H,R")).unwrap(), 10.0);
        assert_eq!(m.contextual_utility(&id("F"), &space("F")).unwrap(), 7.0);
    }

    #[test]
    fn contextual_utility_errors() {
        let m = m1();
        assert!(matches!(
            m.contextual_utility(&id("F"), &space("H,R")),
            Err(Error::ItemNotInSpace { .. })
        ));
        assert!(matches!(
            m.contextual_utility(&id("X"), &space("H,R")),
            Err(Error::UnknownItem(_))
        ));
        assert!(matches!(
            m.contextual_utility(&id("H"), &space("H,X")),
            Err(Error::UnknownItem(_))
        ));
    }

    #[test]
    fn ties_go_to_catalog_order() {
        let cat = Catalog::from_ids(&["B", "A"]).unwrap();
        let m = UtilityMatrix::diagonal(cat, &[3.0, 3.0]).unwrap();
        assert_eq!(m.best_choice(&space("A,B")).unwrap(), id("B"));
    }

    #[test]
    fn scale_rejects_non_positive() {
        let m = m1();
        assert!(matches!(m.scale(0.0), Err(Error::NonPositiveScale(_))));
        assert!(matches!(m.scale(-2.0), Err(Error::NonPositiveScale(_))));
        assert_eq!(m.scale(1.0).unwrap(), m);
        assert_eq!(m.scale(2.0).unwrap().rows()[0], vec![10.0, 0.0, 30.0]);
    }

    #[test]
    fn matrix_validation() {
        let cat = Catalog::from_ids(&["A", "B"]).unwrap();
        assert!(matches!(
            UtilityMatrix::new(cat.clone(), vec![vec![1.0, 2.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            UtilityMatrix::new(cat, vec![vec![1.0, f64::NAN], vec![0.0, 1.0]]),
            Err(Error::NonFiniteEntry { row: 0, col: 1 })
        ));
        assert!(matches!(
            Catalog::from_ids::<&str>(&[]),
            Err(Error::EmptyCatalog)
        ));
        assert!(matches!(
            Catalog::from_ids(&["A", "A"]),
            Err(Error::DuplicateItem(_))
        ));
        assert!(ItemId::new("").is_err());
        assert!(ChoiceSpace::new(Vec::new()).is_err());
    }

    #[test]
    fn json_round_trip_keeps_labels() {
        let json = r#"{"catalog":["H","R"],"labels":{"H":"Hank's"},"entries":[[5,0],[0,10]]}"#;
        let m = UtilityMatrix::from_json(json).unwrap();
        assert_eq!(m.catalog().label(&id("H")), "Hank's");
        assert_eq!(m.catalog().label(&id("R")), "R");
        let back = UtilityMatrix::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn full_method_captures_synergy() {
        // A burger gains 4 from a good bun and 5 from quality beef, but 12 from both.
        let cat = Catalog::from_ids(&["burger", "bun", "beef"]).unwrap();
        let base = UtilityMatrix::new(
            cat,
            vec![
                vec![6.0, 4.0, 5.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
            ],
        )
        .unwrap();
        let additive = AdditiveGains::new(&base);
        let synergy = |item: &ItemId, others: &BTreeSet<ItemId>| -> f64 {
            if item.as_str() == "burger" && others.len() == 2 {
                12.0
            } else {
                additive.gain(item, others)
            }
        };
        let all = space("burger,bun,beef");
        let burger = id("burger");
        assert_eq!(
            full_method_utility(&base, &synergy, &burger, &all).unwrap(),
            18.0
        );
        assert_eq!(base.contextual_utility(&burger, &all).unwrap(), 15.0);
        assert_eq!(
            full_method_utility(&base, &synergy, &burger, &space("burger,bun")).unwrap(),
            base.contextual_utility(&burger, &space("burger,bun"))
                .unwrap()
        );
    }

    #[test]
    fn full_method_singleton_ignores_oracle() {
        let m = m1();
        let wild = |_: &ItemId, _: &BTreeSet<ItemId>| 1e9;
        assert_eq!(
            full_method_utility(&m, &wild, &id("R"), &space("R")).unwrap(),
            10.0
        );
        assert!(full_method_utility(&m, &wild, &id("F"), &space("R")).is_err());
    }
}
