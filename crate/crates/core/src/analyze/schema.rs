//! Physical relational schema of a program.
//!
//! Each class `C` gets a state table `C_state(id, f1, ...)` with one column
//! per scalar state field, a table `C_eff_e(id, val)` per effect field, and
//! a child table `C_f(owner_id, elem)` per set-typed state field. Reference
//! element columns are named after the referenced class (`item_id`).

use super::ir::*;
use crate::value::Type;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum TableKind {
    State,
    Effect,
    SetChild,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableDef {
    pub name: String,
    pub kind: TableKind,
    pub class: String,
    pub columns: Vec<ColumnDef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldMapping {
    pub class: String,
    pub field: String,
    pub is_effect: bool,
    pub table: String,
    pub column: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PhysicalSchema {
    pub tables: Vec<TableDef>,
    pub fields: Vec<FieldMapping>,
}

impl PhysicalSchema {
    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn mapping(&self, class: &str, field: &str) -> Option<&FieldMapping> {
        self.fields.iter().find(|m| m.class == class && m.field == field)
    }

    /// Names that occur more than once. A non-empty result means two fields
    /// mapped to the same physical table.
    pub fn duplicate_tables(&self) -> Vec<String> {
        let mut names: Vec<&str> = self.tables.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        let mut dups: Vec<String> = names.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0].to_string()).collect();
        dups.dedup();
        dups
    }
}

fn type_label(p: &Program, ty: &Type) -> String {
    match ty {
        Type::Number => "number".into(),
        Type::Int => "int".into(),
        Type::Bool => "bool".into(),
        Type::Str => "string".into(),
        Type::Null => "null".into(),
        Type::Ref(c) => format!("ref<{}>", p.class(*c).name),
        Type::Set(t) => format!("set<{}>", type_label(p, t)),
    }
}

fn elem_column(p: &Program, elem: &Type) -> String {
    match elem {
        Type::Ref(c) => format!("{}_id", p.class(*c).name.to_lowercase()),
        _ => "elem".into(),
    }
}

pub fn derive_schema(p: &Program) -> PhysicalSchema {
    let mut tables = Vec::new();
    let mut fields = Vec::new();
    for c in &p.classes {
        let state_name = format!("{}_state", c.name);
        let mut cols = vec![ColumnDef {
            name: "id".into(),
            ty: "int".into(),
        }];
        let mut children = Vec::new();
        for f in &c.state {
            match &f.ty {
                Type::Set(elem) => {
                    let table = format!("{}_{}", c.name, f.name);
                    let col = elem_column(p, elem);
                    children.push(TableDef {
                        name: table.clone(),
                        kind: TableKind::SetChild,
                        class: c.name.clone(),
                        columns: vec![
                            ColumnDef {
                                name: "owner_id".into(),
                                ty: "int".into(),
                            },
                            ColumnDef {
                                name: col.clone(),
                                ty: type_label(p, elem),
                            },
                        ],
                    });
                    fields.push(FieldMapping {
                        class: c.name.clone(),
                        field: f.name.clone(),
                        is_effect: false,
                        table,
                        column: col,
                    });
                }
                ty => {
                    cols.push(ColumnDef {
                        name: f.name.clone(),
                        ty: type_label(p, ty),
                    });
                    fields.push(FieldMapping {
                        class: c.name.clone(),
                        field: f.name.clone(),
                        is_effect: false,
                        table: state_name.clone(),
                        column: f.name.clone(),
                    });
                }
            }
        }
        tables.push(TableDef {
            name: state_name,
            kind: TableKind::State,
            class: c.name.clone(),
            columns: cols,
        });
        tables.extend(children);
        for e in &c.effects {
            let table = format!("{}_eff_{}", c.name, e.name);
            let (col, ty) = match &e.ty {
                Type::Set(elem) => (elem_column(p, elem), type_label(p, elem)),
                ty => ("val".to_string(), type_label(p, ty)),
            };
            tables.push(TableDef {
                name: table.clone(),
                kind: TableKind::Effect,
                class: c.name.clone(),
                columns: vec![
                    ColumnDef {
                        name: "id".into(),
                        ty: "int".into(),
                    },
                    ColumnDef { name: col.clone(), ty },
                ],
            });
            fields.push(FieldMapping {
                class: c.name.clone(),
                field: e.name.clone(),
                is_effect: true,
                table,
                column: col,
            });
        }
    }
    PhysicalSchema { tables, fields }
}
