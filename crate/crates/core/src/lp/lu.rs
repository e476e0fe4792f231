//! Sparse LU factorization of the simplex basis with product-form (eta)
//! updates between refactorizations.
//!
//! The factorization is left-looking: basis columns are processed in order
//! of increasing nonzero count, each is reduced by the lower factor built so
//! far, and a pivot row is picked by threshold partial pivoting that prefers
//! sparse rows. Step `k` pivots row `pivot_row[k]` against basis position
//! `pivot_pos[k]`.

/// Candidates within this fraction of the largest magnitude are eligible pivots.
const PIVOT_THRESHOLD: f64 = 0.1;
const SINGULAR_TOLERANCE: f64 = 1e-11;
const DROP_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Singular {
    /// Basis position whose column could not be pivoted.
    pub position: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct LuFactors {
    m: usize,
    pivot_row: Vec<usize>,
    pivot_pos: Vec<usize>,
    l_cols: Vec<Vec<(usize, f64)>>,
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Eta {
    position: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// Basis inverse representation: LU of the last refactorized basis plus the
/// eta file of subsequent column replacements.
#[derive(Debug, Clone)]
pub(crate) struct BasisInverse {
    lu: LuFactors,
    etas: Vec<Eta>,
    eta_nnz: usize,
}

impl LuFactors {
    /// Factorizes the `m × m` matrix whose column `j` is `columns(j)`.
    pub fn factorize<'a, F>(m: usize, columns: F) -> Result<Self, Singular>
    where
        F: Fn(usize) -> (&'a [usize], &'a [f64]),
    {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&j| columns(j).0.len());

        let mut row_count = vec![0usize; m];
        for j in 0..m {
            for &r in columns(j).0 {
                row_count[r] += 1;
            }
        }

        let mut lu = LuFactors {
            m,
            pivot_row: Vec::with_capacity(m),
            pivot_pos: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
        };
        let mut row_step = vec![usize::MAX; m];
        let mut work = vec![0.0; m];
        let mut touched = vec![false; m];
        let mut nz: Vec<usize> = Vec::new();

        for &pos in &order {
            let (rows, vals) = columns(pos);
            for (&r, &v) in rows.iter().zip(vals) {
                work[r] = v;
                if !touched[r] {
                    touched[r] = true;
                    nz.push(r);
                }
            }
            for step in 0..lu.pivot_row.len() {
                let xr = work[lu.pivot_row[step]];
                if xr == 0.0 {
                    continue;
                }
                for &(r, l) in &lu.l_cols[step] {
                    work[r] -= l * xr;
                    if !touched[r] {
                        touched[r] = true;
                        nz.push(r);
                    }
                }
            }

            let mut u_col = Vec::new();
            let mut amax: f64 = 0.0;
            for &r in &nz {
                let v = work[r];
                if row_step[r] != usize::MAX {
                    if v != 0.0 {
                        u_col.push((row_step[r], v));
                    }
                } else {
                    amax = amax.max(v.abs());
                }
            }
            if amax < SINGULAR_TOLERANCE {
                return Err(Singular { position: pos });
            }
            let mut pivot: Option<usize> = None;
            for &r in &nz {
                if row_step[r] != usize::MAX || work[r].abs() < PIVOT_THRESHOLD * amax {
                    continue;
                }
                pivot = match pivot {
                    None => Some(r),
                    Some(p) if (row_count[r], r) < (row_count[p], p) => Some(r),
                    keep => keep,
                };
            }
            let p = pivot.expect("amax candidate exists");
            let d = work[p];
            let mut l_col = Vec::new();
            for &r in &nz {
                if r != p && row_step[r] == usize::MAX && work[r].abs() > DROP_TOLERANCE {
                    l_col.push((r, work[r] / d));
                }
            }
            for &r in &nz {
                work[r] = 0.0;
                touched[r] = false;
            }
            nz.clear();

            u_col.sort_unstable_by_key(|&(s, _)| s);
            row_step[p] = lu.pivot_row.len();
            lu.pivot_row.push(p);
            lu.pivot_pos.push(pos);
            lu.l_cols.push(l_col);
            lu.u_cols.push(u_col);
            lu.u_diag.push(d);
        }
        Ok(lu)
    }

    /// Solves `B x = b` in place: `x` enters indexed by row and leaves
    /// indexed by basis position.
    fn solve(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        for step in 0..self.m {
            let xr = x[self.pivot_row[step]];
            if xr == 0.0 {
                continue;
            }
            for &(r, l) in &self.l_cols[step] {
                x[r] -= l * xr;
            }
        }
        scratch.clear();
        scratch.extend(self.pivot_row.iter().map(|&r| x[r]));
        for step in (0..self.m).rev() {
            let yi = scratch[step] / self.u_diag[step];
            scratch[step] = yi;
            if yi == 0.0 {
                continue;
            }
            for &(k, u) in &self.u_cols[step] {
                scratch[k] -= u * yi;
            }
        }
        for step in 0..self.m {
            x[self.pivot_pos[step]] = scratch[step];
        }
    }

    /// Solves `Bᵀ y = c` in place: `c` enters indexed by basis position and
    /// leaves indexed by row.
    fn solve_transpose(&self, c: &mut [f64], scratch: &mut Vec<f64>) {
        scratch.clear();
        scratch.resize(self.m, 0.0);
        for step in 0..self.m {
            let mut v = c[self.pivot_pos[step]];
            for &(i, u) in &self.u_cols[step] {
                v -= u * scratch[i];
            }
            scratch[step] = v / self.u_diag[step];
        }
        for step in (0..self.m).rev() {
            let mut v = scratch[step];
            for &(r, l) in &self.l_cols[step] {
                v -= l * c[r];
            }
            c[self.pivot_row[step]] = v;
        }
    }

    pub fn nnz(&self) -> usize {
        self.l_cols.iter().map(Vec::len).sum::<usize>()
            + self.u_cols.iter().map(Vec::len).sum::<usize>()
            + self.m
    }
}

impl BasisInverse {
    pub fn new(lu: LuFactors) -> Self {
        BasisInverse {
            lu,
            etas: Vec::new(),
            eta_nnz: 0,
        }
    }

    pub fn update_count(&self) -> usize {
        self.etas.len()
    }

    /// True when the eta file has grown past the factor size.
    pub fn eta_heavy(&self) -> bool {
        self.eta_nnz > 2 * self.lu.nnz() + 1000
    }

    /// `x ← B⁻¹ x`; input by row, output by basis position.
    pub fn ftran(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        self.lu.solve(x, scratch);
        for eta in &self.etas {
            let xr = x[eta.position] / eta.pivot;
            x[eta.position] = xr;
            if xr == 0.0 {
                continue;
            }
            for &(i, d) in &eta.entries {
                x[i] -= d * xr;
            }
        }
    }

    /// `c ← B⁻ᵀ c`; input by basis position, output by row.
    pub fn btran(&self, c: &mut [f64], scratch: &mut Vec<f64>) {
        for eta in self.etas.iter().rev() {
            let mut v = c[eta.position];
            for &(i, d) in &eta.entries {
                v -= d * c[i];
            }
            c[eta.position] = v / eta.pivot;
        }
        self.lu.solve_transpose(c, scratch);
    }

    /// Records replacement of the column at `position` given the entering
    /// column's representation `alpha = B⁻¹ a_q`.
    pub fn push_update(&mut self, position: usize, alpha: &[f64]) {
        let entries: Vec<(usize, f64)> = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != position && v.abs() > DROP_TOLERANCE)
            .map(|(i, &v)| (i, v))
            .collect();
        self.eta_nnz += entries.len() + 1;
        self.etas.push(Eta {
            position,
            pivot: alpha[position],
            entries,
        });
    }
}
