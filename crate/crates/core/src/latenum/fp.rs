//! Dimension-generic Fincke–Pohst enumeration of integer points in an ellipsoid.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rayon::prelude::*;

use super::EnumError;

/// Which coordinate is fixed first (outermost) in the depth-first search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerOrder {
    /// Outer layers carry the largest conditional pivots, so the top of the
    /// search tree is as narrow as possible.
    LargestPivotOutside,
    /// Natural coordinate order, last coordinate outermost.
    Natural,
}

/// `c^T g c <= bound`, optionally intersected with the box `|c_i| <= coord_box`.
#[derive(Debug, Clone)]
pub struct Ellipsoid<const N: usize> {
    pub g: [[f64; N]; N],
    pub bound: f64,
    pub coord_box: Option<i64>,
    pub layers: LayerOrder,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes: u64,
    pub leaves: u64,
}

impl std::ops::AddAssign for SearchStats {
    fn add_assign(&mut self, o: Self) {
        self.nodes += o.nodes;
        self.leaves += o.leaves;
    }
}

/// Lower Cholesky factor of `g` with rows/columns taken in `order`.
pub fn cholesky<const N: usize>(g: &[[f64; N]; N], order: &[usize; N]) -> Result<[[f64; N]; N], EnumError> {
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = g[order[i]][order[j]];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(EnumError::NotDefinite(i, s));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

pub fn identity_order<const N: usize>() -> [usize; N] {
    std::array::from_fn(|i| i)
}

/// Gauss–Jordan inverse with partial pivoting.
pub fn invert<const N: usize>(g: &[[f64; N]; N]) -> Result<[[f64; N]; N], EnumError> {
    let mut a = *g;
    let mut inv = [[0.0; N]; N];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..N {
        let p = (col..N)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap_or(col);
        if a[p][col] == 0.0 {
            return Err(EnumError::NotDefinite(col, 0.0));
        }
        a.swap(col, p);
        inv.swap(col, p);
        let d = a[col][col];
        for j in 0..N {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..N {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for j in 0..N {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
    }
    Ok(inv)
}

/// Symmetric pivoting taking the smallest remaining Schur-complement diagonal each step.
fn smallest_first<const N: usize>(g: &[[f64; N]; N]) -> Result<[usize; N], EnumError> {
    let mut a = *g;
    let mut order = [0usize; N];
    let mut used = [false; N];
    for step in 0..N {
        let best = (0..N)
            .filter(|&i| !used[i])
            .min_by(|&x, &y| a[x][x].total_cmp(&a[y][y]))
            .expect("unused coordinate remains");
        let piv = a[best][best];
        if !(piv > 0.0) {
            return Err(EnumError::NotDefinite(step, piv));
        }
        used[best] = true;
        order[step] = best;
        let row = a[best];
        for i in 0..N {
            for j in 0..N {
                if !used[i] && !used[j] {
                    a[i][j] -= row[i] * row[j] / piv;
                }
            }
        }
    }
    Ok(order)
}

struct Prepared<const N: usize> {
    /// `order[i]` is the coordinate searched at layer `i`; layer `N-1` is outermost.
    order: [usize; N],
    /// `q[i][i]` squared pivots, `q[i][j]` (j > i) couplings to outer layers.
    q: [[f64; N]; N],
}

fn prepare<const N: usize>(g: &[[f64; N]; N], layers: LayerOrder) -> Result<Prepared<N>, EnumError> {
    let order = match layers {
        LayerOrder::Natural => identity_order(),
        LayerOrder::LargestPivotOutside => {
            // The conditional pivot of an outer layer is the reciprocal of a
            // Schur complement of the inverse form.
            let mut o = smallest_first(&invert(g)?)?;
            o.reverse();
            o
        }
    };
    // With G = L L^T in layer order:
    // y^T G y = sum_j L_jj^2 (y_j + sum_{i>j} (L_ij / L_jj) y_i)^2.
    let l = cholesky(g, &order)?;
    let mut q = [[0.0; N]; N];
    for j in 0..N {
        q[j][j] = l[j][j] * l[j][j];
        for i in (j + 1)..N {
            q[j][i] = l[i][j] / l[j][j];
        }
    }
    Ok(Prepared { order, q })
}

struct Budget<'a> {
    used: &'a AtomicU64,
    limit: u64,
    stop: &'a AtomicBool,
}

impl Budget<'_> {
    /// Record `n` nodes; false once the shared budget is exhausted.
    fn tick(&self, n: u64) -> bool {
        let u = self.used.fetch_add(n, Ordering::Relaxed).saturating_add(n);
        if u > self.limit {
            self.stop.store(true, Ordering::Relaxed);
        }
        !self.stop.load(Ordering::Relaxed)
    }
}

fn interval(center: f64, rem: f64, qii: f64, bx: Option<i64>) -> (i64, i64) {
    let w = (rem.max(0.0) / qii).sqrt();
    let mut lo = (center - w).ceil() as i64;
    let mut hi = (center + w).floor() as i64;
    if let Some(b) = bx {
        lo = lo.max(-b);
        hi = hi.min(b);
    }
    (lo, hi)
}

fn center_of<const N: usize>(p: &Prepared<N>, y: &[i64; N], i: usize) -> f64 {
    let mut c = 0.0;
    for j in (i + 1)..N {
        c -= p.q[i][j] * y[j] as f64;
    }
    c
}

/// Depth-first search of all points whose outermost layer equals `outer`.
/// Returns false if the budget ran out.
fn search_subtree<const N: usize>(
    p: &Prepared<N>,
    bound: f64,
    bx: Option<i64>,
    outer: i64,
    budget: &Budget<'_>,
    visit: &mut dyn FnMut(&[i64; N]),
) -> bool {
    let top = N - 1;
    let mut y = [0i64; N];
    let mut hi = [0i64; N];
    // rem[i]: budget left after layers i..N-1 are fixed.
    let mut rem = vec![0.0f64; N + 1];
    rem[N] = bound;
    y[top] = outer;
    let t = outer as f64;
    rem[top] = bound - p.q[top][top] * t * t;
    if rem[top] < 0.0 {
        return true;
    }
    let mut level = top;
    let mut ticks = 1u64;
    loop {
        // Descend from `level` (the innermost fixed layer).
        if level == 0 {
            let mut c = [0i64; N];
            for i in 0..N {
                c[p.order[i]] = y[i];
            }
            visit(&c);
        } else {
            let i = level - 1;
            let center = center_of(p, &y, i);
            let (lo, h) = interval(center, rem[level], p.q[i][i], bx);
            if lo <= h {
                y[i] = lo;
                hi[i] = h;
                let d = lo as f64 - center;
                rem[i] = rem[level] - p.q[i][i] * d * d;
                level = i;
                ticks += 1;
                if ticks >= 4096 {
                    if !budget.tick(ticks) {
                        return false;
                    }
                    ticks = 0;
                }
                continue;
            }
        }
        // Advance the innermost layer that still has room, backtracking as needed.
        loop {
            if level >= top {
                return budget.tick(ticks);
            }
            if y[level] < hi[level] {
                y[level] += 1;
                let center = center_of(p, &y, level);
                let d = y[level] as f64 - center;
                rem[level] = rem[level + 1] - p.q[level][level] * d * d;
                ticks += 1;
                break;
            }
            level += 1;
        }
    }
}

/// Visit every integer point of the ellipsoid; the visitor may emit any number of results.
///
/// The outermost layer's range is split across the rayon pool and partition
/// outputs are concatenated in increasing order of that layer, so the result
/// order does not depend on the thread count.
pub fn ellipsoid_points<const N: usize, T: Send>(
    ell: &Ellipsoid<N>,
    budget_limit: u64,
    visit: impl Fn(&[i64; N], &mut Vec<T>) + Sync,
) -> Result<(Vec<T>, SearchStats), EnumError> {
    let p = prepare(&ell.g, ell.layers)?;
    let top = N - 1;
    let (lo, hi) = interval(0.0, ell.bound, p.q[top][top], ell.coord_box);
    let used = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let leaves = AtomicU64::new(0);
    let parts: Vec<(bool, Vec<T>)> = (lo..=hi)
        .into_par_iter()
        .map(|outer| {
            let budget = Budget {
                used: &used,
                limit: budget_limit,
                stop: &stop,
            };
            let mut out = Vec::new();
            let mut nleaf = 0u64;
            let ok = search_subtree(&p, ell.bound, ell.coord_box, outer, &budget, &mut |c| {
                nleaf += 1;
                visit(c, &mut out);
            });
            leaves.fetch_add(nleaf, Ordering::Relaxed);
            (ok, out)
        })
        .collect();
    let nodes = used.load(Ordering::Relaxed);
    let found: usize = parts.iter().map(|p| p.1.len()).sum();
    if nodes > budget_limit || parts.iter().any(|p| !p.0) {
        return Err(EnumError::BudgetExceeded {
            budget: budget_limit,
            found,
        });
    }
    let stats = SearchStats {
        nodes,
        leaves: leaves.load(Ordering::Relaxed),
    };
    Ok((parts.into_iter().flat_map(|p| p.1).collect(), stats))
}

/// Minimum of `|F c|^2` over the coordinates in `drop`, as a Gram matrix on
/// the rest (the Schur complement of `F^T F`). `keep` lists the remaining
/// coordinates in order.
///
/// Works on the factor `F` by Householder QR, so a nearly singular `drop`
/// block costs accuracy only in proportion to the conditioning of `F` itself.
pub fn project_factor<const N: usize, const M: usize>(
    f: &[[f64; N]],
    keep: &[usize; M],
    drop: &[usize],
) -> Result<[[f64; M]; M], EnumError> {
    let cols: Vec<usize> = drop.iter().chain(keep.iter()).copied().collect();
    let mut a: Vec<Vec<f64>> = f.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect();
    let rows = a.len();
    for j in 0..drop.len() {
        let norm = (j..rows).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(EnumError::NotDefinite(drop[j], norm));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..rows).map(|i| a[i][j]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for c in j..cols.len() {
            let dot: f64 = (j..rows).map(|i| v[i - j] * a[i][c]).sum();
            let s = 2.0 * dot / vv;
            for i in j..rows {
                a[i][c] -= s * v[i - j];
            }
        }
    }
    let d = drop.len();
    let mut out = [[0.0; M]; M];
    for i in 0..M {
        for k in 0..M {
            out[i][k] = (d..rows).map(|r| a[r][d + i] * a[r][d + k]).sum();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn form3() -> [[f64; 3]; 3] {
        [[4.0, 1.0, 0.5], [1.0, 3.0, -0.7], [0.5, -0.7, 2.0]]
    }

    fn eval<const N: usize>(g: &[[f64; N]; N], c: &[i64; N]) -> f64 {
        (0..N)
            .flat_map(|i| (0..N).map(move |j| (i, j)))
            .map(|(i, j)| g[i][j] * c[i] as f64 * c[j] as f64)
            .sum()
    }

    #[test]
    fn matches_box_scan_in_three_dims() {
        let g = form3();
        let bound = 37.3;
        let mut expect = Vec::new();
        for a in -10..=10 {
            for b in -10..=10 {
                for c in -10..=10 {
                    if eval(&g, &[a, b, c]) <= bound {
                        expect.push([a, b, c]);
                    }
                }
            }
        }
        expect.sort();
        for layers in [LayerOrder::Natural, LayerOrder::LargestPivotOutside] {
            let ell = Ellipsoid {
                g,
                bound,
                coord_box: None,
                layers,
            };
            let (mut got, st) = ellipsoid_points(&ell, u64::MAX, |c, out| out.push(*c)).unwrap();
            got.sort();
            assert_eq!(got, expect);
            assert_eq!(st.leaves as usize, expect.len());
        }
    }

    #[test]
    fn box_restriction() {
        let ell = Ellipsoid {
            g: form3(),
            bound: 37.3,
            coord_box: Some(1),
            layers: LayerOrder::LargestPivotOutside,
        };
        let (got, _) = ellipsoid_points(&ell, u64::MAX, |c, out| out.push(*c)).unwrap();
        assert_eq!(got.len(), 27);
    }

    #[test]
    fn schur_complement_is_the_fiber_minimum() {
        let g = form3();
        let f = cholesky(&g, &identity_order()).unwrap();
        // Rows of L^T, so that L L^T = g.
        let rows: Vec<[f64; 3]> = (0..3).map(|i| std::array::from_fn(|j| f[j][i])).collect();
        let p = project_factor::<3, 1>(&rows, &[2], &[0, 1]).unwrap();
        // Minimise over (x0, x1) for x2 = 1 numerically via the inverse.
        let inv = invert(&g).unwrap();
        assert!((p[0][0] - 1.0 / inv[2][2]).abs() < 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let g = form3();
        let inv = invert(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| g[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
