//! Loader and evaluator for the declarative outcome tables in
//! `data/cases.toml`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node, Value,
};
use serde::{Deserialize, Serialize};

use super::PredictError;
use crate::ecology::FitnessSummary;

const BUILTIN: &str = include_str!("../../data/cases.toml");
pub const SUPPORTED_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tree {
    Early,
    Late,
}

/// Final-state token of a table row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum FinalToken {
    #[serde(rename = "none")]
    Extinct,
    #[serde(rename = "0")]
    Wild,
    #[serde(rename = "1")]
    First,
    #[serde(rename = "2")]
    Second,
    #[serde(rename = "01")]
    Pair01,
    #[serde(rename = "02")]
    Pair02,
    #[serde(rename = "12")]
    Pair12,
    #[serde(rename = "012")]
    Interior,
    #[serde(rename = "ambiguous")]
    Ambiguous,
    #[serde(rename = "rps")]
    Cycles,
    #[serde(rename = "classify")]
    Classify,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLet {
    name: String,
    expr: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawCase {
    pub tree: Tree,
    pub label: String,
    pub guard: String,
    #[serde(default)]
    pub when: Option<String>,
    #[serde(rename = "final")]
    pub final_state: FinalToken,
    #[serde(default)]
    pub classes: Option<String>,
    pub duration: String,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default = "default_true")]
    pub second_invades: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    version: u32,
    #[serde(rename = "let", default)]
    lets: Vec<RawLet>,
    #[serde(rename = "case")]
    cases: Vec<RawCase>,
}

type Expr = Node<DefaultNumericTypes>;
type Ctx = HashMapContext<DefaultNumericTypes>;

struct CompiledCase {
    raw: RawCase,
    guard: Expr,
    when: Option<Expr>,
    duration: Expr,
}

pub struct CaseTable {
    lets: Vec<(String, Expr)>,
    /// Rows per tree and label, in file order.
    groups: BTreeMap<Tree, Vec<(String, Vec<CompiledCase>)>>,
}

/// The row selected for one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    pub label: String,
    pub final_state: FinalToken,
    pub classes: Option<String>,
    pub duration: f64,
    pub note: Option<String>,
    pub second_invades: bool,
}

fn compile(src: &str, what: &str) -> Result<Expr, PredictError> {
    build_operator_tree::<DefaultNumericTypes>(src).map_err(|e| PredictError::Table(format!("{what}: {src}: {e}")))
}

impl CaseTable {
    pub fn parse(text: &str) -> Result<Self, PredictError> {
        let raw: RawTable = toml::from_str(text).map_err(|e| PredictError::Table(e.to_string()))?;
        if raw.version != SUPPORTED_VERSION {
            return Err(PredictError::Table(format!(
                "unsupported table version {} (expected {SUPPORTED_VERSION})",
                raw.version
            )));
        }
        let lets = raw
            .lets
            .into_iter()
            .map(|l| Ok((l.name.clone(), compile(&l.expr, &l.name)?)))
            .collect::<Result<Vec<_>, PredictError>>()?;
        let mut groups: BTreeMap<Tree, Vec<(String, Vec<CompiledCase>)>> = BTreeMap::new();
        for c in raw.cases {
            let compiled = CompiledCase {
                guard: compile(&c.guard, &c.label)?,
                when: c.when.as_deref().map(|w| compile(w, &c.label)).transpose()?,
                duration: compile(&c.duration, &c.label)?,
                raw: c,
            };
            let rows = groups.entry(compiled.raw.tree).or_default();
            match rows.iter_mut().find(|(l, _)| *l == compiled.raw.label) {
                Some((_, list)) => {
                    if list[0].raw.guard != compiled.raw.guard {
                        return Err(PredictError::Table(format!(
                            "rows of label {} disagree on the guard",
                            compiled.raw.label
                        )));
                    }
                    if list.last().is_some_and(|r| r.raw.when.is_none()) {
                        return Err(PredictError::Table(format!(
                            "label {} has rows after its fallback",
                            compiled.raw.label
                        )));
                    }
                    list.push(compiled);
                }
                None => rows.push((compiled.raw.label.clone(), vec![compiled])),
            }
        }
        Ok(CaseTable { lets, groups })
    }

    /// The table shipped in `data/cases.toml`.
    pub fn builtin() -> &'static CaseTable {
        static TABLE: OnceLock<CaseTable> = OnceLock::new();
        TABLE.get_or_init(|| CaseTable::parse(BUILTIN).expect("shipped case table is valid"))
    }

    pub fn rows(&self, tree: Tree) -> impl Iterator<Item = &RawCase> {
        self.groups.get(&tree).into_iter().flatten().flat_map(|(_, rows)| rows.iter().map(|r| &r.raw))
    }

    pub fn labels(&self, tree: Tree) -> Vec<&str> {
        self.groups.get(&tree).into_iter().flatten().map(|(l, _)| l.as_str()).collect()
    }

    fn context(&self, summary: &FitnessSummary, alpha: f64) -> Result<Ctx, PredictError> {
        let mut ctx = Ctx::new();
        let mut set = |name: &str, v: Value<DefaultNumericTypes>| {
            ctx.set_value(name.to_string(), v)
                .map_err(|e| PredictError::Table(format!("{name}: {e}")))
        };
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    set(&format!("S{i}{j}"), Value::Float(summary.s(i, j)))?;
                }
            }
            set(&format!("beta{i}"), Value::Float(summary.beta[i]))?;
        }
        for (k, name) in [(0, "S012"), (1, "S102"), (2, "S201")] {
            let v = summary.s_tri(k);
            set(name, Value::Float(v.unwrap_or(0.0)))?;
            set(&format!("has_{name}"), Value::Boolean(v.is_some()))?;
        }
        set("alpha", Value::Float(alpha))?;
        for (name, expr) in &self.lets {
            let v = expr
                .eval_with_context(&ctx)
                .map_err(|e| PredictError::Table(format!("let {name}: {e}")))?;
            ctx.set_value(name.clone(), v)
                .map_err(|e| PredictError::Table(format!("{name}: {e}")))?;
        }
        Ok(ctx)
    }

    /// Labels whose guard holds at this point.
    pub fn matching_labels(&self, tree: Tree, summary: &FitnessSummary, alpha: f64) -> Result<Vec<String>, PredictError> {
        let ctx = self.context(summary, alpha)?;
        let mut out = Vec::new();
        for (label, rows) in self.groups.get(&tree).into_iter().flatten() {
            if eval_bool(&rows[0].guard, &ctx, label)? {
                out.push(label.clone());
            }
        }
        Ok(out)
    }

    pub fn select(&self, tree: Tree, summary: &FitnessSummary, alpha: f64) -> Result<Leaf, PredictError> {
        let ctx = self.context(summary, alpha)?;
        let mut hit: Option<&Vec<CompiledCase>> = None;
        for (label, rows) in self.groups.get(&tree).into_iter().flatten() {
            if eval_bool(&rows[0].guard, &ctx, label)? {
                if let Some(prev) = hit {
                    return Err(PredictError::AmbiguousCase(format!(
                        "{} and {label}",
                        prev[0].raw.label
                    )));
                }
                hit = Some(rows);
            }
        }
        let rows = hit.ok_or_else(|| PredictError::UnhandledCase(crate::lv::sign_pattern(summary)))?;
        for row in rows {
            let chosen = match &row.when {
                None => true,
                Some(w) => eval_bool(w, &ctx, &row.raw.label)?,
            };
            if chosen {
                let duration = row
                    .duration
                    .eval_number_with_context(&ctx)
                    .map_err(|e| PredictError::Table(format!("{} duration: {e}", row.raw.label)))?;
                return Ok(Leaf {
                    label: row.raw.label.clone(),
                    final_state: row.raw.final_state,
                    classes: row.raw.classes.clone(),
                    duration,
                    note: row.raw.note.clone(),
                    second_invades: row.raw.second_invades,
                });
            }
        }
        Err(PredictError::UnhandledCase(format!(
            "no sub-row of {} matches {}",
            rows[0].raw.label,
            crate::lv::sign_pattern(summary)
        )))
    }
}

fn eval_bool(expr: &Expr, ctx: &Ctx, label: &str) -> Result<bool, PredictError> {
    expr.eval_boolean_with_context(ctx)
        .map_err(|e| PredictError::Table(format!("{label}: {e}")))
}
