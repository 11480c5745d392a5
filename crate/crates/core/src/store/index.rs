//! Range index over numeric columns of one state table, with an in-place
//! repair overlay for small per-tick changes.

use super::rangetree::{RangeTree, MAX_DIMS};
use super::{Column, StateTable, StoreError};
use crate::analyze::FieldId;
use crate::value::ObjId;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct RangeIndex {
    dims: Vec<FieldId>,
    base: Arc<RangeTree>,
    base_ids: Arc<Vec<ObjId>>,
    /// Base entries that no longer reflect the table.
    dead: HashSet<ObjId>,
    /// Current coordinates of rows changed since the base was built.
    extra: BTreeMap<ObjId, Vec<f64>>,
}

fn numeric(col: &Column, row: usize) -> f64 {
    match col {
        Column::Num(v) => v[row],
        Column::Int(v) => v[row] as f64,
        _ => unreachable!("checked at build"),
    }
}

impl RangeIndex {
    /// Builds an index over `dims`, which must name numeric columns.
    pub fn build(table: &StateTable, dims: &[FieldId]) -> Result<RangeIndex, StoreError> {
        if dims.is_empty() || dims.len() > MAX_DIMS {
            return Err(StoreError::Index(format!("cannot index {} dimensions", dims.len())));
        }
        for &f in dims {
            if !matches!(*table.cols[f as usize], Column::Num(_) | Column::Int(_)) {
                return Err(StoreError::Index(format!("column {f} is not numeric")));
            }
        }
        let d = dims.len();
        let mut coords = Vec::with_capacity(table.len() * d);
        for row in 0..table.len() {
            for &f in dims {
                coords.push(numeric(&table.cols[f as usize], row));
            }
        }
        Ok(RangeIndex {
            dims: dims.to_vec(),
            base: Arc::new(RangeTree::build(d, coords)),
            base_ids: Arc::new(table.ids.clone()),
            dead: HashSet::new(),
            extra: BTreeMap::new(),
        })
    }

    pub fn dims(&self) -> &[FieldId] {
        &self.dims
    }

    pub fn node_count(&self) -> usize {
        self.base.node_count() + self.extra.len()
    }

    /// Number of rows tracked by the overlay rather than the base tree.
    pub fn overlay_len(&self) -> usize {
        self.dead.len().max(self.extra.len())
    }

    /// Ids of rows inside the inclusive box, ascending.
    pub fn query(&self, lo: &[f64], hi: &[f64]) -> Vec<ObjId> {
        let mut out: Vec<ObjId> = self
            .base
            .query(lo, hi)
            .into_iter()
            .map(|p| self.base_ids[p as usize])
            .filter(|id| !self.dead.contains(id))
            .collect();
        if (0..self.dims.len()).all(|k| lo[k] <= hi[k]) {
            for (id, c) in &self.extra {
                if c.iter().enumerate().all(|(k, x)| lo[k] <= *x && *x <= hi[k]) {
                    out.push(*id);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Brings the index up to date with `table` after the rows `changed`
    /// were updated, inserted or removed. Returns `None` when the overlay
    /// would cover more than `threshold` of the rows, in which case the
    /// caller rebuilds.
    pub fn repair(&self, table: &StateTable, changed: &[ObjId], threshold: f64) -> Option<RangeIndex> {
        let mut next = self.clone();
        for &id in changed {
            next.dead.insert(id);
            next.extra.remove(&id);
            if let Some(row) = table.row_of(id) {
                let c: Vec<f64> = self.dims.iter().map(|&f| numeric(&table.cols[f as usize], row)).collect();
                if c.iter().all(|x| !x.is_nan()) {
                    next.extra.insert(id, c);
                }
            }
        }
        let limit = threshold * table.len().max(self.base_ids.len()) as f64;
        if next.overlay_len() as f64 > limit {
            None
        } else {
            Some(next)
        }
    }
}
