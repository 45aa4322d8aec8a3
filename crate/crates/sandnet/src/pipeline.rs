//! End-to-end solve: grid, distance field, enlargement, classification,
//! transmission and rolling layer in one call.

use crate::eikonal::{
    classify, enlarge_ties, solve, Classification, DistanceField, SolveError, StructureError,
};
use crate::grid::{Grid, GridError};
use crate::net::{EdgeEvalError, Network};
use crate::netfile::TransmissionOverrides;
use crate::rolling::{compute, RollingField, RollingError, TransmissionSpec};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Eval(#[from] EdgeEvalError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Rolling(#[from] RollingError),
}

/// Everything the solver produces for one grid.
#[derive(Debug, Clone)]
pub struct Solution {
    pub grid: Grid,
    pub distance: DistanceField,
    pub classes: Classification,
    pub spec: TransmissionSpec,
    pub rolling: RollingField,
}

/// Solves on the network's own grid resolution.
pub fn solve_network(
    net: &Network,
    overrides: &TransmissionOverrides,
    tie_rel_tol: f64,
) -> Result<Solution, PipelineError> {
    let grid = Grid::build(net)?;
    solve_on_grid(net, grid, overrides, tie_rel_tol)
}

/// Solves with every edge's node count adjusted to a target step.
pub fn solve_with_step(
    net: &Network,
    h: f64,
    overrides: &TransmissionOverrides,
    tie_rel_tol: f64,
) -> Result<Solution, PipelineError> {
    let grid = Grid::with_target_step(net, h)?;
    solve_on_grid(net, grid, overrides, tie_rel_tol)
}

fn solve_on_grid(
    net: &Network,
    grid: Grid,
    overrides: &TransmissionOverrides,
    tie_rel_tol: f64,
) -> Result<Solution, PipelineError> {
    let field = solve(net, &grid)?;
    let (grid, field) = enlarge_ties(net, &grid, &field, tie_rel_tol)?;
    let classes = classify(net, &grid, &field)?;
    let spec = TransmissionSpec::from_overrides(net, &classes, overrides)
        .map_err(RollingError::Transmission)?;
    let rolling = compute(net, &grid, &field, &classes, &spec)?;
    Ok(Solution {
        grid,
        distance: field,
        classes,
        spec,
        rolling,
    })
}
