//! Max-margin estimation of a utility matrix from linear constraints.
//!
//! Three small linear programs, all over the `n * n` entries with
//! `a[0][0] = 1` and every other entry boxed in `[-bounds, bounds]`:
//!
//! 1. (only with equalities) the smallest uniform widening `u` of the
//!    equality tolerances that makes them jointly feasible;
//! 2. the largest `t <= bounds` such that every strict constraint has slack
//!    at least `t`;
//! 3. among matrices reaching that margin, the one closest in L1 to the
//!    default prior (identity).

use std::collections::HashSet;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::{Deserialize, Serialize};

use super::constraints::{LinearConstraint, Relation};
use crate::error::{Error, Result};
use crate::model::{Catalog, ChoiceSpace, ItemId, MatrixFile, UtilityMatrix};

/// Slack at or below this counts as a violated strict constraint.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: LinearConstraint,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    /// Normalized so the first catalog item's diagonal is exactly 1.
    pub matrix: UtilityMatrix,
    /// Smallest slack over strict constraints, capped at the bounds.
    pub margin: f64,
    pub violated: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub item: ItemId,
    /// Top-two utility gap over the sum of their magnitudes; 1 for singletons.
    pub confidence: f64,
}

/// Estimate export: the matrix document plus `margin` and `violated`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateFile {
    #[serde(flatten)]
    pub matrix: MatrixFile,
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default)]
    pub violated: Vec<Violation>,
}

impl MatrixEstimate {
    /// Identity prior with no evidence.
    pub fn prior(catalog: Catalog, bounds: f64) -> Self {
        let n = catalog.len();
        Self {
            matrix: UtilityMatrix::diagonal(catalog, &vec![1.0; n]).expect("identity is valid"),
            margin: bounds,
            violated: Vec::new(),
        }
    }

    pub fn predict_choice(&self, space: &ChoiceSpace) -> Result<Prediction> {
        predict(&self.matrix, space)
    }

    pub fn to_file(&self) -> EstimateFile {
        EstimateFile {
            matrix: self.matrix.to_file(),
            margin: Some(self.margin),
            violated: self.violated.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("estimate serializes")
    }

    /// Reads an estimate export, or a bare matrix document (margin then
    /// defaults to 0).
    pub fn from_json(json: &str) -> Result<Self> {
        let file: EstimateFile = serde_json::from_str(json)?;
        Ok(Self {
            matrix: UtilityMatrix::from_file(file.matrix)?,
            margin: file.margin.unwrap_or(0.0),
            violated: file.violated,
        })
    }
}

/// Best choice plus a confidence from the top-two utility gap.
pub fn predict(matrix: &UtilityMatrix, space: &ChoiceSpace) -> Result<Prediction> {
    let idx = matrix.catalog().resolve(space)?;
    let best = matrix.argmax_at(&idx);
    let item = matrix.catalog().item(best).clone();
    if idx.len() == 1 {
        return Ok(Prediction {
            item,
            confidence: 1.0,
        });
    }
    let top = matrix.utility_at(best, &idx);
    let second = idx
        .iter()
        .filter(|&&k| k != best)
        .map(|&k| matrix.utility_at(k, &idx))
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = top.abs() + second.abs();
    let confidence = if scale > 0.0 {
        ((top - second) / scale).clamp(0.0, 1.0)
    } else {
        0.0
    };
    Ok(Prediction { item, confidence })
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Greater,
    Equal(f64),
}

struct Row {
    terms: Vec<(usize, f64)>,
    kind: Kind,
    rhs: f64,
}

fn lower(constraints: &[LinearConstraint], catalog: &Catalog) -> Result<Vec<Row>> {
    let n = catalog.len();
    let mut rows = Vec::with_capacity(constraints.len());
    let mut seen: HashSet<RowKey> = HashSet::new();
    for c in constraints {
        let mut terms: Vec<(usize, f64)> = Vec::with_capacity(c.terms.len());
        for t in &c.terms {
            let var = catalog.index_of(&t.row)? * n + catalog.index_of(&t.col)?;
            match terms.iter_mut().find(|(v, _)| *v == var) {
                Some((_, coef)) => *coef += t.coef,
                None => terms.push((var, t.coef)),
            }
        }
        terms.retain(|(_, coef)| *coef != 0.0);
        terms.sort_by_key(|(v, _)| *v);
        if !c.rhs.is_finite() || terms.iter().any(|(_, coef)| !coef.is_finite()) {
            return Err(Error::InvalidParameter(
                "constraint has non-finite values".into(),
            ));
        }
        let (kind, tag, eps) = match c.relation {
            Relation::Greater => (Kind::Greater, 0u8, 0.0),
            Relation::EqualWithin { epsilon } => {
                if epsilon.is_nan() || epsilon < 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "equality tolerance must be non-negative, got {epsilon}"
                    )));
                }
                (Kind::Equal(epsilon), 1u8, epsilon)
            }
        };
        let key = (
            terms.iter().map(|(v, c)| (*v, c.to_bits())).collect(),
            tag,
            eps.to_bits(),
            c.rhs.to_bits(),
        );
        if seen.insert(key) {
            rows.push(Row {
                terms,
                kind,
                rhs: c.rhs,
            });
        }
    }
    Ok(rows)
}

type RowKey = (Vec<(usize, u64)>, u8, u64, u64);

fn entry_vars(problem: &mut Problem, n: usize, bounds: f64) -> Vec<Variable> {
    (0..n * n)
        .map(|i| {
            if i == 0 {
                problem.add_var(0.0, (1.0, 1.0))
            } else {
                problem.add_var(0.0, (-bounds, bounds))
            }
        })
        .collect()
}

fn expr(vars: &[Variable], row: &Row) -> Vec<(Variable, f64)> {
    row.terms.iter().map(|&(v, c)| (vars[v], c)).collect()
}

fn add_equalities(problem: &mut Problem, vars: &[Variable], rows: &[Row], relax: f64) {
    for row in rows {
        if let Kind::Equal(eps) = row.kind {
            let e = expr(vars, row);
            problem.add_constraint(e.as_slice(), ComparisonOp::Le, row.rhs + eps + relax);
            problem.add_constraint(e.as_slice(), ComparisonOp::Ge, row.rhs - eps - relax);
        }
    }
}

fn solve(problem: &Problem) -> Result<microlp::Solution> {
    problem
        .solve()
        .map_err(|e| Error::Solver(e.to_string()))?
        .into_solution()
        .map_err(|_| Error::Solver("solve interrupted".into()))
}

/// Smallest uniform widening of the equality tolerances that makes them
/// jointly satisfiable.
fn equality_relaxation(rows: &[Row], n: usize, bounds: f64) -> Result<f64> {
    if !rows.iter().any(|r| matches!(r.kind, Kind::Equal(_))) {
        return Ok(0.0);
    }
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars = entry_vars(&mut problem, n, bounds);
    let u = problem.add_var(1.0, (0.0, f64::INFINITY));
    for row in rows {
        if let Kind::Equal(eps) = row.kind {
            let mut e = expr(&vars, row);
            e.push((u, -1.0));
            problem.add_constraint(e.as_slice(), ComparisonOp::Le, row.rhs + eps);
            e.last_mut().expect("pushed").1 = 1.0;
            problem.add_constraint(e.as_slice(), ComparisonOp::Ge, row.rhs - eps);
        }
    }
    let u_star = solve(&problem)?.var_value(u);
    Ok(if u_star <= VIOLATION_TOLERANCE {
        0.0
    } else {
        u_star + VIOLATION_TOLERANCE
    })
}

fn max_margin(rows: &[Row], n: usize, bounds: f64, relax: f64) -> Result<f64> {
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let vars = entry_vars(&mut problem, n, bounds);
    let t = problem.add_var(1.0, (f64::NEG_INFINITY, bounds));
    for row in rows.iter().filter(|r| r.kind == Kind::Greater) {
        let mut e = expr(&vars, row);
        e.push((t, -1.0));
        problem.add_constraint(e.as_slice(), ComparisonOp::Ge, row.rhs);
    }
    add_equalities(&mut problem, &vars, rows, relax);
    Ok(solve(&problem)?.var_value(t))
}

fn closest_to_prior(
    rows: &[Row],
    n: usize,
    bounds: f64,
    relax: f64,
    margin_floor: Option<f64>,
) -> Result<Vec<f64>> {
    let mut problem = Problem::new(OptimizationDirection::Minimize);
    let vars = entry_vars(&mut problem, n, bounds);
    for (i, &var) in vars.iter().enumerate().skip(1) {
        let prior = if i % (n + 1) == 0 { 1.0 } else { 0.0 };
        let above = problem.add_var(1.0, (0.0, f64::INFINITY));
        let below = problem.add_var(1.0, (0.0, f64::INFINITY));
        problem.add_constraint(
            [(var, 1.0), (above, -1.0), (below, 1.0)],
            ComparisonOp::Eq,
            prior,
        );
    }
    if let Some(floor) = margin_floor {
        for row in rows.iter().filter(|r| r.kind == Kind::Greater) {
            problem.add_constraint(
                expr(&vars, row).as_slice(),
                ComparisonOp::Ge,
                row.rhs + floor,
            );
        }
    }
    add_equalities(&mut problem, &vars, rows, relax);
    let sol = solve(&problem)?;
    Ok(vars
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i == 0 {
                1.0
            } else {
                // normalize -0.0
                sol.var_value(v) + 0.0
            }
        })
        .collect())
}

/// Fits a matrix to the constraints by maximizing the smallest strict slack.
/// If the data are inconsistent (optimal margin <= 0) the least-violating
/// matrix is returned together with every violated constraint.
pub fn estimate_matrix(
    constraints: &[LinearConstraint],
    catalog: &Catalog,
    bounds: f64,
) -> Result<MatrixEstimate> {
    if catalog.is_empty() {
        return Err(Error::EmptyCatalog);
    }
    if !bounds.is_finite() || bounds <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "bounds must be positive, got {bounds}"
        )));
    }
    let n = catalog.len();
    let rows = lower(constraints, catalog)?;
    let has_strict = rows.iter().any(|r| r.kind == Kind::Greater);

    let relax = equality_relaxation(&rows, n, bounds)?;
    let floor = if has_strict {
        let t = max_margin(&rows, n, bounds, relax)?;
        Some(t - 1e-7 * t.abs().max(1.0))
    } else {
        None
    };
    let entries = match closest_to_prior(&rows, n, bounds, relax, floor) {
        Ok(e) => e,
        // The floor sits just under the optimum; retry without it rather
        // than fail on solver round-off.
        Err(_) if floor.is_some() => {
            closest_to_prior(&rows, n, bounds, relax, floor.map(|f| f - 1e-6))?
        }
        Err(e) => return Err(e),
    };
    let matrix = UtilityMatrix::from_flat(catalog.clone(), entries)?;

    let mut violated = Vec::new();
    let mut min_slack = f64::INFINITY;
    for c in constraints {
        let slack = c.slack(&matrix)?;
        let bad = match c.relation {
            Relation::Greater => {
                min_slack = min_slack.min(slack);
                slack <= VIOLATION_TOLERANCE
            }
            Relation::EqualWithin { .. } => slack < -VIOLATION_TOLERANCE,
        };
        if bad {
            violated.push(Violation {
                constraint: c.clone(),
                slack,
            });
        }
    }
    let mut margin = if has_strict {
        min_slack.min(bounds)
    } else {
        bounds
    };
    if !violated.is_empty() {
        margin = margin.min(0.0);
    }
    Ok(MatrixEstimate {
        matrix,
        margin,
        violated,
    })
}
