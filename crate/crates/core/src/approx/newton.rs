//! Newton's method on the plane and basin-of-attraction grids.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::function::{LayerFunctionSpec, DEFAULT_CRITICAL_TOL};
use crate::poly::{Polynomial, C2};
use crate::structure::PredicateSpec;

/// `|p(w)|` a converged Newton limit must meet.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-8;
/// Distance within which a limit is attributed to a computed root.
const ROOT_MATCH_TOL: f64 = 1e-6;

/// `z -> z - p(z)/p'(z)` on `(re, im)`. Coefficients are leading first.
pub fn newton_map(coeffs: &[f64]) -> Result<LayerFunctionSpec> {
    Polynomial::new(coeffs)?;
    Ok(LayerFunctionSpec::NewtonStep { coeffs: coeffs.to_vec(), critical_tol: DEFAULT_CRITICAL_TOL })
}

/// Real and imaginary part, labelled `re` and `im`.
pub fn newton_predicates() -> Vec<PredicateSpec> {
    vec![PredicateSpec::coordinate("re", 0), PredicateSpec::coordinate("im", 1)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonBasinOptions {
    /// `[xmin, xmax, ymin, ymax]`
    pub grid: [f64; 4],
    /// Points per axis; both endpoints are included.
    pub res: usize,
    pub max_iter: usize,
    /// Step size below which the iteration is considered settled.
    pub tol: f64,
}

impl Default for NewtonBasinOptions {
    fn default() -> Self {
        NewtonBasinOptions { grid: [-2.0, 2.0, -2.0, 2.0], res: 201, max_iter: 100, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinCell {
    pub x: f64,
    pub y: f64,
    pub root_index: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Final iterate.
    pub limit: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub roots: Vec<[f64; 2]>,
    pub options: NewtonBasinOptions,
    /// Row-major with `y` outer and `x` inner.
    pub cells: Vec<BasinCell>,
}

#[derive(Serialize)]
struct CsvRow {
    x: f64,
    y: f64,
    root_index: Option<usize>,
    iterations: usize,
    converged: bool,
}

impl BasinGrid {
    /// Writes `x,y,root_index,iterations,converged`; an unattributed cell
    /// has an empty `root_index`.
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for c in &self.cells {
            w.serialize(CsvRow {
                x: c.x,
                y: c.y,
                root_index: c.root_index,
                iterations: c.iterations,
                converged: c.converged,
            })
            .map_err(std::io::Error::other)?;
        }
        w.flush()
    }

    pub fn converged_count(&self) -> usize {
        self.cells.iter().filter(|c| c.converged).count()
    }
}

fn axis(lo: f64, hi: f64, res: usize, i: usize) -> f64 {
    if res == 1 {
        return lo;
    }
    // exact at both ends and at 0 for symmetric ranges
    (lo * (res - 1 - i) as f64 + hi * i as f64) / (res - 1) as f64
}

fn run_cell(p: &Polynomial, roots: &[C2], x: f64, y: f64, opts: &NewtonBasinOptions) -> BasinCell {
    let mut z = C2::new(x, y);
    let mut cell = BasinCell { x, y, root_index: None, iterations: 0, converged: false, limit: [x, y] };
    for it in 1..=opts.max_iter {
        let Ok(next) = p.newton_step(z, DEFAULT_CRITICAL_TOL) else { break };
        if !next.re.is_finite() || !next.im.is_finite() {
            break;
        }
        let step = next.sub(z).norm();
        z = next;
        cell.iterations = it;
        if step < opts.tol || p.eval(z).norm() == 0.0 {
            cell.converged = p.eval(z).norm() <= ROOT_RESIDUAL_TOL;
            break;
        }
    }
    cell.limit = [z.re, z.im];
    if cell.converged {
        cell.root_index = roots
            .iter()
            .enumerate()
            .map(|(k, r)| (k, r.sub(z).norm()))
            .filter(|(_, d)| *d < ROOT_MATCH_TOL)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k);
    }
    cell
}

/// Runs Newton's method from every point of a `res x res` grid.
pub fn newton_basins(coeffs: &[f64], opts: &NewtonBasinOptions) -> Result<BasinGrid> {
    let p = Polynomial::new(coeffs)?;
    let [xmin, xmax, ymin, ymax] = opts.grid;
    if opts.grid.iter().any(|g| !g.is_finite()) || xmin > xmax || ymin > ymax {
        return Err(Error::InvalidArgument(format!("bad grid {:?}", opts.grid)));
    }
    if opts.res == 0 || opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("res, max_iter and tol must be positive".into()));
    }
    let roots = p.roots();
    let cells = (0..opts.res)
        .into_par_iter()
        .flat_map_iter(|j| {
            let y = axis(ymin, ymax, opts.res, j);
            let (p, roots) = (&p, &roots);
            (0..opts.res).map(move |i| run_cell(p, roots, axis(xmin, xmax, opts.res, i), y, opts))
        })
        .collect();
    Ok(BasinGrid { roots: roots.iter().map(|r| [r.re, r.im]).collect(), options: *opts, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::LayerState;

    #[test]
    fn map_examples() {
        let f = newton_map(&[1.0, 0.0, -1.0]).unwrap();
        let at = |x: f64, y: f64| f.eval(&LayerState::new(vec![x, y]).unwrap());
        assert_eq!(at(2.0, 0.0).unwrap().coords(), &[1.25, 0.0]);
        assert_eq!(at(1.0, 0.0).unwrap().coords(), &[1.0, 0.0]);
        assert!(matches!(at(0.0, 0.0), Err(Error::CriticalPoint { .. })));
        assert!(newton_map(&[0.0, 3.0]).is_err());
    }

    #[test]
    fn half_plane_basins() {
        let opts = NewtonBasinOptions { res: 41, ..Default::default() };
        let g = newton_basins(&[1.0, 0.0, -1.0], &opts).unwrap();
        assert_eq!(g.roots.len(), 2);
        assert!((g.roots[0][0] + 1.0).abs() < 1e-12 && (g.roots[1][0] - 1.0).abs() < 1e-12);
        assert_eq!(g.cells.len(), 41 * 41);
        for c in &g.cells {
            if c.x == 0.0 {
                assert!(!c.converged, "{c:?}");
            } else {
                assert!(c.converged, "{c:?}");
                assert_eq!(c.root_index, Some(usize::from(c.x > 0.0)));
                assert_eq!(c.limit[0].signum(), c.x.signum());
            }
        }
        // row-major, y outer
        assert_eq!((g.cells[1].x, g.cells[1].y), (-1.9, -2.0));
    }

    #[test]
    fn csv_layout() {
        let opts = NewtonBasinOptions { grid: [-1.0, 1.0, 0.0, 0.0], res: 3, ..Default::default() };
        let g = newton_basins(&[1.0, 0.0, -1.0], &opts).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,root_index,iterations,converged");
        assert_eq!(lines.len(), 1 + 9);
        assert!(lines[1].starts_with("-1.0,0.0,0,"));
        assert!(lines[2].starts_with("0.0,0.0,,"));
        assert!(!text.contains('\r'));
    }
}
