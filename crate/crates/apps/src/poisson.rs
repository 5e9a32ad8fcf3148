//! `−∇²u = f` on the unit square with homogeneous Dirichlet data, solved by
//! overlapping strips under the additive Schwarz driver.
//!
//! The grid has `nx × ny` interior points with spacing `h = 1/(nx+1)` and the
//! 5-point stencil. Fields are stored column by column: local column `c` of a
//! strip holds the `ny` values of global column `first_stored + c`.
//!
//! A strip stores its owned columns plus `overlap` halo columns on each side
//! that has a neighbour. The outermost halo column is frozen as Dirichlet
//! data; the remaining halo columns are solved along with the owned ones, so
//! neighbouring solve regions share `2·overlap − 2` columns. After each solve
//! every halo column is overwritten with the owner's value.

use std::f64::consts::PI;
use std::io::Write;

use parapat_core::partition::{collect_subproblem_output_args, simple_partitioning};
use parapat_core::schwarz::{additive_schwarz_iterations, relative_change, ConvergenceParams, SubdomainProblem};
use parapat_core::{Comm, Error, Rank, Result};

use crate::numfmt::format_g17;

/// Inner solves stop once the residual ∞-norm is below this.
pub const INNER_TOLERANCE: f64 = 1e-10;
/// Inner sweep budget per unknown column and row.
pub const SWEEPS_PER_CELL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!("grid needs interior points, got {nx}x{ny}")));
        }
        Ok(Grid2D { nx, ny })
    }

    /// Spacing, taken from the x axis.
    pub fn h(&self) -> f64 {
        1.0 / (self.nx + 1) as f64
    }

    /// Coordinates of interior point `(i, j)`.
    pub fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let h = self.h();
        ((i + 1) as f64 * h, (j + 1) as f64 * h)
    }
}

/// One rank's strip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StripLayout {
    pub rank: Rank,
    pub ranks: usize,
    /// Halo width on each internal side.
    pub overlap: usize,
    /// Owned global columns `owned.0..owned.1`.
    pub owned: (usize, usize),
    /// Stored global columns `stored.0..stored.1`.
    pub stored: (usize, usize),
    pub left: Option<Rank>,
    pub right: Option<Rank>,
}

impl StripLayout {
    pub fn new(nx: usize, rank: Rank, ranks: usize, overlap: usize) -> Result<Self> {
        let widths = simple_partitioning(nx, ranks)?;
        if rank >= ranks {
            return Err(Error::InvalidArgument(format!("rank {rank} out of range for {ranks} ranks")));
        }
        if ranks > 1 {
            if overlap < 2 {
                return Err(Error::InvalidArgument(format!("overlap must be at least 2, got {overlap}")));
            }
            if let Some(&narrow) = widths.iter().min().filter(|&&w| w < overlap) {
                return Err(Error::InvalidArgument(format!(
                    "{nx} columns over {ranks} ranks leaves a strip {narrow} wide, narrower than the overlap {overlap}"
                )));
            }
        }
        let lo: usize = widths[..rank].iter().sum();
        let hi = lo + widths[rank];
        let left = (rank > 0).then(|| rank - 1);
        let right = (rank + 1 < ranks).then_some(rank + 1);
        let stored = (
            if left.is_some() { lo - overlap } else { lo },
            if right.is_some() { hi + overlap } else { hi },
        );
        Ok(StripLayout {
            rank,
            ranks,
            overlap,
            owned: (lo, hi),
            stored,
            left,
            right,
        })
    }

    pub fn stored_columns(&self) -> usize {
        self.stored.1 - self.stored.0
    }

    /// Local index range of the owned columns.
    pub fn owned_local(&self) -> std::ops::Range<usize> {
        self.owned.0 - self.stored.0..self.owned.1 - self.stored.0
    }

    /// Per local column: `true` when it is frozen Dirichlet data.
    pub fn fixed_mask(&self) -> Vec<bool> {
        let last = self.stored_columns() - 1;
        (0..self.stored_columns())
            .map(|c| (c == 0 && self.left.is_some()) || (c == last && self.right.is_some()))
            .collect()
    }
}

/// Outcome of one inner solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolve {
    pub sweeps: usize,
    pub residual: f64,
}

fn at(u: &[f64], ny: usize, cols: usize, c: isize, j: isize) -> f64 {
    if c < 0 || j < 0 || c as usize >= cols || j as usize >= ny {
        0.0
    } else {
        u[c as usize * ny + j as usize]
    }
}

/// ∞-norm of `f + ∇²u` over the unfrozen cells.
pub fn local_residual(u: &[f64], f: &[f64], ny: usize, h: f64, fixed: &[bool]) -> f64 {
    let cols = fixed.len();
    let inv_h2 = 1.0 / (h * h);
    let mut worst = 0.0f64;
    for (c, _) in fixed.iter().enumerate().filter(|(_, &fx)| !fx) {
        for j in 0..ny {
            let (ci, ji) = (c as isize, j as isize);
            let lap = (at(u, ny, cols, ci - 1, ji)
                + at(u, ny, cols, ci + 1, ji)
                + at(u, ny, cols, ci, ji - 1)
                + at(u, ny, cols, ci, ji + 1)
                - 4.0 * u[c * ny + j])
                * inv_h2;
            let r = (f[c * ny + j] + lap).abs();
            if r.is_nan() {
                return f64::NAN;
            }
            worst = worst.max(r);
        }
    }
    worst
}

/// Gauss–Seidel on the unfrozen cells of a `fixed.len() × ny` block, with
/// zero values outside the block. Stops when the residual ∞-norm drops
/// below [`INNER_TOLERANCE`]; errors once `10·cols·ny` sweeps are spent.
pub fn gauss_seidel(u: &mut [f64], f: &[f64], ny: usize, h: f64, fixed: &[bool]) -> Result<InnerSolve> {
    let cols = fixed.len();
    let h2 = h * h;
    let budget = SWEEPS_PER_CELL * cols * ny;
    let mut sweeps = 0;
    loop {
        let residual = local_residual(u, f, ny, h, fixed);
        if residual < INNER_TOLERANCE {
            return Ok(InnerSolve { sweeps, residual });
        }
        if !residual.is_finite() || sweeps == budget {
            return Err(Error::App(format!(
                "inner Gauss-Seidel stopped after {sweeps} sweeps with residual {residual:e}"
            )));
        }
        for c in (0..cols).filter(|&c| !fixed[c]) {
            for j in 0..ny {
                let (ci, ji) = (c as isize, j as isize);
                let sum = at(u, ny, cols, ci - 1, ji)
                    + at(u, ny, cols, ci + 1, ji)
                    + at(u, ny, cols, ci, ji - 1)
                    + at(u, ny, cols, ci, ji + 1);
                u[c * ny + j] = 0.25 * (sum + h2 * f[c * ny + j]);
            }
        }
        sweeps += 1;
    }
}

/// Overwrites every halo column with the owning neighbour's values.
pub fn halo_communicate(field: &mut [f64], layout: &StripLayout, ny: usize, comm: &Comm) -> Result<()> {
    let w = layout.overlap;
    let owned = layout.owned_local();
    let columns = |range: std::ops::Range<usize>| field[range.start * ny..range.end * ny].to_vec();
    if let Some(left) = layout.left {
        comm.send_value(left, &columns(owned.start..owned.start + w))?;
    }
    if let Some(right) = layout.right {
        comm.send_value(right, &columns(owned.end - w..owned.end))?;
    }
    let mut fill = |range: std::ops::Range<usize>, source: Rank| -> Result<()> {
        let values: Vec<f64> = comm.recv_value(source)?;
        if values.len() != range.len() * ny {
            return Err(Error::App(format!("halo from rank {source} has {} values", values.len())));
        }
        field[range.start * ny..range.end * ny].copy_from_slice(&values);
        Ok(())
    };
    if let Some(left) = layout.left {
        fill(0..w, left)?;
    }
    if let Some(right) = layout.right {
        fill(owned.end..owned.end + w, right)?;
    }
    Ok(())
}

/// Manufactured solution `sin(πx) sin(πy)`.
pub fn exact_solution(x: f64, y: f64) -> f64 {
    (PI * x).sin() * (PI * y).sin()
}

/// Right-hand side matching [`exact_solution`].
pub fn manufactured_rhs(x: f64, y: f64) -> f64 {
    2.0 * PI * PI * exact_solution(x, y)
}

/// One rank's share of the Poisson problem.
#[derive(Debug, Clone)]
pub struct PoissonSubdomain {
    pub grid: Grid2D,
    pub layout: StripLayout,
    rhs: Vec<f64>,
    fixed: Vec<bool>,
    /// Sweeps spent by every inner solve so far.
    pub inner_sweeps: usize,
}

impl PoissonSubdomain {
    pub fn new(grid: Grid2D, layout: StripLayout, rhs: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(layout.stored_columns() * grid.ny);
        for i in layout.stored.0..layout.stored.1 {
            for j in 0..grid.ny {
                let (x, y) = grid.point(i, j);
                values.push(rhs(x, y));
            }
        }
        PoissonSubdomain {
            fixed: layout.fixed_mask(),
            grid,
            layout,
            rhs: values,
            inner_sweeps: 0,
        }
    }

    pub fn fixed_mask(&self) -> &[bool] {
        &self.fixed
    }

    pub fn zero_field(&self) -> Vec<f64> {
        vec![0.0; self.layout.stored_columns() * self.grid.ny]
    }

    /// Owned columns of a local field.
    pub fn owned_values(&self, field: &[f64]) -> Vec<f64> {
        let r = self.layout.owned_local();
        field[r.start * self.grid.ny..r.end * self.grid.ny].to_vec()
    }
}

impl SubdomainProblem for PoissonSubdomain {
    type Field = Vec<f64>;

    /// The halo already holds the neighbours' values and the mask is fixed
    /// at construction, so nothing changes here.
    fn set_bc(&mut self, _solution: &mut Vec<f64>) -> Result<()> {
        Ok(())
    }

    fn subdomain_solve(&mut self, solution: &Vec<f64>) -> Result<Vec<f64>> {
        let mut u = solution.clone();
        let done = gauss_seidel(&mut u, &self.rhs, self.grid.ny, self.grid.h(), &self.fixed)?;
        self.inner_sweeps += done.sweeps;
        Ok(u)
    }

    fn communicate(&mut self, solution: &mut Vec<f64>, comm: &Comm) -> Result<()> {
        halo_communicate(solution, &self.layout, self.grid.ny, comm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonConfig {
    pub nx: usize,
    pub ny: usize,
    pub overlap: usize,
    pub threshold: f64,
    pub max_iter: usize,
}

impl Default for PoissonConfig {
    fn default() -> Self {
        PoissonConfig {
            nx: 63,
            ny: 63,
            overlap: 4,
            threshold: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl PoissonConfig {
    pub fn square(n: usize) -> Self {
        PoissonConfig {
            nx: n,
            ny: n,
            ..PoissonConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PoissonReport {
    pub iterations: usize,
    /// Global squared relative change of the last iteration.
    pub rel_change: f64,
    /// ∞-norm distance to the manufactured solution.
    pub max_error: f64,
    pub overlap: usize,
    pub ranks: usize,
    pub converged: bool,
    pub nx: usize,
    pub ny: usize,
    /// Full `nx × ny` field, column by column.
    #[serde(skip)]
    pub field: Vec<f64>,
}

/// Collective solve of the manufactured problem. Rank 0 gets the report.
///
/// The first iterate is one solve per strip with zero halo data followed by a
/// halo exchange, so a single strip is already converged when the Schwarz
/// loop starts.
pub fn run_poisson(cfg: &PoissonConfig, comm: &Comm) -> Result<Option<PoissonReport>> {
    if cfg.nx < 3 || cfg.ny < 3 {
        return Err(Error::InvalidArgument(format!("grid must be at least 3x3, got {}x{}", cfg.nx, cfg.ny)));
    }
    let grid = Grid2D::new(cfg.nx, cfg.ny)?;
    let layout = StripLayout::new(cfg.nx, comm.rank(), comm.size(), cfg.overlap)?;
    let params = ConvergenceParams::new(cfg.max_iter, cfg.threshold)?;
    let mut problem = PoissonSubdomain::new(grid, layout, manufactured_rhs);

    let mut start = problem.subdomain_solve(&problem.zero_field())?;
    problem.communicate(&mut start, comm)?;

    let mut last_change = f64::NAN;
    let outcome = additive_schwarz_iterations(&mut problem, params, start, comm, |u, prev, threshold, comm| {
        last_change = comm.all_reduce_max(relative_change(u, prev))?;
        Ok(last_change < threshold)
    })?;

    let Some(field) = collect_subproblem_output_args(problem.owned_values(&outcome.solution), comm)? else {
        return Ok(None);
    };
    let max_error = max_error(&grid, &field);
    Ok(Some(PoissonReport {
        iterations: outcome.iterations,
        rel_change: last_change,
        max_error,
        overlap: cfg.overlap,
        ranks: comm.size(),
        converged: outcome.converged,
        nx: cfg.nx,
        ny: cfg.ny,
        field,
    }))
}

/// ∞-norm distance between a global field and the manufactured solution.
pub fn max_error(grid: &Grid2D, field: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let (x, y) = grid.point(i, j);
            worst = worst.max((field[i * grid.ny + j] - exact_solution(x, y)).abs());
        }
    }
    worst
}

/// ∞-norm of the global discrete residual `f + ∇²u`.
pub fn global_residual(grid: &Grid2D, field: &[f64]) -> f64 {
    let mut rhs = Vec::with_capacity(field.len());
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let (x, y) = grid.point(i, j);
            rhs.push(manufactured_rhs(x, y));
        }
    }
    local_residual(field, &rhs, grid.ny, grid.h(), &vec![false; grid.nx])
}

/// Writes the global field as CSV: `x,y,u`.
pub fn write_field_csv<W: Write>(out: W, grid: &Grid2D, field: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::App(format!("writing CSV: {e}"));
    w.write_record(["x", "y", "u"]).map_err(err)?;
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let (x, y) = grid.point(i, j);
            w.write_record([format_g17(x), format_g17(y), format_g17(field[i * grid.ny + j])])
                .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::App(format!("writing CSV: {e}")))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use parapat_core::{spawn_group, CommGroup};

    /// Dense solve of the 5-point system on the whole grid.
    fn dense_solve(grid: &Grid2D) -> Vec<f64> {
        let (nx, ny) = (grid.nx, grid.ny);
        let n = nx * ny;
        let inv_h2 = 1.0 / (grid.h() * grid.h());
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                a[(k, k)] = 4.0 * inv_h2;
                if i > 0 {
                    a[(k, k - ny)] = -inv_h2;
                }
                if i + 1 < nx {
                    a[(k, k + ny)] = -inv_h2;
                }
                if j > 0 {
                    a[(k, k - 1)] = -inv_h2;
                }
                if j + 1 < ny {
                    a[(k, k + 1)] = -inv_h2;
                }
                let (x, y) = grid.point(i, j);
                b[k] = manufactured_rhs(x, y);
            }
        }
        a.lu().solve(&b).expect("nonsingular").iter().copied().collect()
    }

    #[test]
    fn single_unknown() {
        let mut u = vec![0.0];
        let done = gauss_seidel(&mut u, &[1.0], 1, 0.5, &[false]).unwrap();
        assert_eq!(u[0], 0.0625);
        assert_eq!(done.sweeps, 1);
    }

    #[test]
    fn zero_data_gives_zero() {
        let mut u = vec![0.0; 12];
        let done = gauss_seidel(&mut u, &[0.0; 12], 4, 0.2, &[false; 3]).unwrap();
        assert_eq!(done.sweeps, 0);
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_data_is_an_error() {
        let mut u = vec![0.0];
        assert!(matches!(gauss_seidel(&mut u, &[f64::NAN], 1, 0.5, &[false]), Err(Error::App(_))));
    }

    #[test]
    fn single_strip_matches_dense_solve() {
        let grid = Grid2D::new(9, 7).unwrap();
        let layout = StripLayout::new(9, 0, 1, 4).unwrap();
        let mut sub = PoissonSubdomain::new(grid, layout, manufactured_rhs);
        let u = sub.subdomain_solve(&sub.zero_field()).unwrap();
        let oracle = dense_solve(&grid);
        let diff = u.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn layout_covers_grid() {
        for (nx, p, w) in [(63, 4, 4), (31, 3, 2), (20, 5, 4), (9, 1, 4)] {
            let layouts: Vec<StripLayout> = (0..p).map(|r| StripLayout::new(nx, r, p, w).unwrap()).collect();
            assert_eq!(layouts[0].owned.0, 0);
            assert_eq!(layouts[p - 1].owned.1, nx);
            for pair in layouts.windows(2) {
                assert_eq!(pair[0].owned.1, pair[1].owned.0);
                // solved regions overlap by 2w - 2 columns
                let left_solved_end = pair[0].stored.1 - 1;
                let right_solved_start = pair[1].stored.0 + 1;
                assert_eq!(left_solved_end - right_solved_start, 2 * w - 2);
            }
        }
        assert!(StripLayout::new(63, 0, 4, 1).is_err());
        assert!(StripLayout::new(10, 0, 4, 4).is_err());
    }

    #[test]
    fn mask_covers_only_outer_halo_columns() {
        let l = StripLayout::new(63, 1, 4, 4).unwrap();
        let mask = l.fixed_mask();
        assert_eq!(mask.len(), 24);
        assert_eq!(mask.iter().filter(|&&m| m).count(), 2);
        assert!(mask[0] && mask[23]);
        let edge = StripLayout::new(63, 0, 4, 4).unwrap().fixed_mask();
        assert_eq!(edge.iter().filter(|&&m| m).count(), 1);
        assert!(*edge.last().unwrap());
        assert!(StripLayout::new(63, 0, 1, 4).unwrap().fixed_mask().iter().all(|&m| !m));
    }

    #[test]
    fn set_bc_leaves_values_alone() {
        let grid = Grid2D::new(12, 4).unwrap();
        let mut sub = PoissonSubdomain::new(grid, StripLayout::new(12, 1, 2, 3).unwrap(), manufactured_rhs);
        let mut u: Vec<f64> = (0..sub.zero_field().len()).map(|k| k as f64).collect();
        let before = u.clone();
        sub.set_bc(&mut u).unwrap();
        assert_eq!(u, before);
    }

    #[test]
    fn halo_swap_of_constant_fields() {
        let grid = Grid2D::new(12, 5).unwrap();
        let out = spawn_group(&CommGroup::threads(2), |comm| {
            let layout = StripLayout::new(12, comm.rank(), 2, 3)?;
            let c = [1.5, -2.0][comm.rank()];
            let mut u = vec![c; layout.stored_columns() * grid.ny];
            halo_communicate(&mut u, &layout, grid.ny, comm)?;
            let once = u.clone();
            halo_communicate(&mut u, &layout, grid.ny, comm)?;
            assert_eq!(u, once);
            Ok((layout, u))
        })
        .unwrap();
        let (l0, u0) = &out[0];
        let (l1, u1) = &out[1];
        let ny = grid.ny;
        assert!(u0[..l0.owned_local().end * ny].iter().all(|&v| v == 1.5));
        assert!(u0[l0.owned_local().end * ny..].iter().all(|&v| v == -2.0));
        assert!(u1[..3 * ny].iter().all(|&v| v == 1.5));
        assert!(u1[3 * ny..].iter().all(|&v| v == -2.0));
        assert_eq!(l1.owned_local().start, 3);
    }

    #[test]
    fn single_rank_converges_in_one_iteration() {
        let report = run_poisson(&PoissonConfig::square(15), &Comm::solo(0)).unwrap().unwrap();
        assert_eq!(report.iterations, 1);
        assert!(report.converged);
        assert_eq!(report.rel_change, 0.0);
        assert!(global_residual(&Grid2D::new(15, 15).unwrap(), &report.field) < 1e-9);
    }

    #[test]
    fn decomposed_solve_approaches_single_strip() {
        let cfg = PoissonConfig::square(15);
        let whole = run_poisson(&cfg, &Comm::solo(0)).unwrap().unwrap();
        let parts = spawn_group(&CommGroup::threads(3), |comm| run_poisson(&cfg, comm)).unwrap();
        let split = parts[0].clone().unwrap();
        assert!(split.converged);
        assert!(split.iterations > 1);
        let diff = whole.field.iter().zip(&split.field).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-4, "{diff}");
    }

    #[test]
    fn field_csv_layout() {
        let grid = Grid2D::new(1, 1).unwrap();
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &grid, &[0.25]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x,y,u\n0.5,0.5,0.25\n");
    }
}
