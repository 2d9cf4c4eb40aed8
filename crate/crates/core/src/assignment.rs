//! Exact rectangular linear assignment (Hungarian method with potentials,
//! shortest augmenting paths, O(n²m) for n ≤ m).

use crate::error::{invalid, Result};
use crate::scalar::Cost;

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Cost> CostMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("cost matrix must be at least 1x1, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return invalid(format!("{} entries for a {rows}x{cols} matrix", data.len()));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite_cost()) {
            return invalid(format!("non-finite entry at ({}, {})", p / cols, p % cols));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged cost matrix");
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn negated(&self) -> Self {
        CostMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| -v).collect() }
    }

    pub fn transposed(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        CostMatrix { rows: self.cols, cols: self.rows, data }
    }

    /// Sum of the entries selected by `pairs`, in the given order.
    pub fn total(&self, pairs: &[(usize, usize)]) -> T {
        pairs.iter().fold(T::zero(), |acc, &(r, c)| acc + self.get(r, c))
    }
}

/// Minimum-cost matching of size `min(rows, cols)`, as `(row, col)` pairs
/// sorted by row.
pub fn solve_min<T: Cost>(costs: &CostMatrix<T>) -> Result<Vec<(usize, usize)>> {
    // revalidate: the fields are private, but a matrix may come from `negated`
    if let Some(p) = costs.data.iter().position(|v| !v.is_finite_cost()) {
        return invalid(format!("non-finite entry at ({}, {})", p / costs.cols, p % costs.cols));
    }
    if costs.rows <= costs.cols {
        Ok(hungarian(costs))
    } else {
        let mut pairs: Vec<(usize, usize)> = hungarian(&costs.transposed()).into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        Ok(pairs)
    }
}

/// Maximum-score matching: [`solve_min`] on the negated matrix.
pub fn solve_max<T: Cost>(scores: &CostMatrix<T>) -> Result<Vec<(usize, usize)>> {
    solve_min(&scores.negated())
}

fn less<T: Cost>(a: T, b: Option<T>) -> bool {
    b.is_none_or(|b| a < b)
}

/// Requires `rows <= cols`. Columns and rows are 1-based internally, with
/// column 0 as the virtual source of each augmenting path.
fn hungarian<T: Cost>(m: &CostMatrix<T>) -> Vec<(usize, usize)> {
    let (n, w) = (m.rows, m.cols);
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); w + 1];
    let mut matched_row = vec![0usize; w + 1];
    let mut way = vec![0usize; w + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<T>> = vec![None; w + 1];
        let mut used = vec![false; w + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0usize;
            for j in 1..=w {
                if used[j] {
                    continue;
                }
                let cur = m.get(i0 - 1, j - 1) - u[i0] - v[j];
                if less(cur, minv[j]) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].unwrap();
                if less(mj, delta) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column always exists while rows <= cols");
            for j in 0..=w {
                if used[j] {
                    u[matched_row[j]] = u[matched_row[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(mv) = minv[j] {
                    minv[j] = Some(mv - delta);
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> =
        (1..=w).filter(|&j| matched_row[j] != 0).map(|j| (matched_row[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best total over every injective row→column (or column→row) map.
    fn brute_force<T: Cost>(m: &CostMatrix<T>, maximize: bool) -> T {
        fn rec<T: Cost>(m: &CostMatrix<T>, r: usize, used: &mut Vec<bool>, acc: T, best: &mut Option<T>, max: bool) {
            if r == m.rows() {
                let better = match *best {
                    None => true,
                    Some(b) => if max { acc > b } else { acc < b },
                };
                if better {
                    *best = Some(acc);
                }
                return;
            }
            for c in 0..m.cols() {
                if !used[c] {
                    used[c] = true;
                    rec(m, r + 1, used, acc + m.get(r, c), best, max);
                    used[c] = false;
                }
            }
        }
        let mm = if m.rows() <= m.cols() { m.clone() } else { m.transposed() };
        let mut best = None;
        rec(&mm, 0, &mut vec![false; mm.cols()], T::zero(), &mut best, maximize);
        best.unwrap()
    }

    fn assert_matching<T: Cost>(m: &CostMatrix<T>, pairs: &[(usize, usize)]) {
        assert_eq!(pairs.len(), m.rows().min(m.cols()));
        let rows: std::collections::BTreeSet<_> = pairs.iter().map(|p| p.0).collect();
        let cols: std::collections::BTreeSet<_> = pairs.iter().map(|p| p.1).collect();
        assert_eq!(rows.len(), pairs.len());
        assert_eq!(cols.len(), pairs.len());
    }

    #[test]
    fn zero_diagonal() {
        let m = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = solve_min(&m).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total(&p), 0.0);
    }

    #[test]
    fn one_by_one() {
        let m = CostMatrix::from_rows(&[vec![5i64]]).unwrap();
        assert_eq!(solve_min(&m).unwrap(), vec![(0, 0)]);
    }

    #[test]
    fn max_two_by_two() {
        let m = CostMatrix::from_rows(&[vec![0.9f64, 0.1], vec![0.2, 0.8]]).unwrap();
        let p = solve_max(&m).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert!((m.total(&p) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn max_rectangular() {
        let m = CostMatrix::from_rows(&[vec![1, 0, 0], vec![0, 1, 0]]).unwrap();
        let p = solve_max(&m).unwrap();
        assert_eq!(p, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total(&p), 2);
        let t = m.transposed();
        let pt = solve_max(&t).unwrap();
        assert_eq!(pt, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn all_equal_matrix() {
        let m = CostMatrix::new(3, 5, vec![Ratio::new(7i64, 3); 15]).unwrap();
        let p = solve_max(&m).unwrap();
        assert_matching(&m, &p);
        assert_eq!(m.total(&p), Ratio::new(7, 1));
    }

    #[test]
    fn invalid_matrices_rejected() {
        assert!(CostMatrix::<f64>::new(0, 2, vec![]).is_err());
        assert!(CostMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(CostMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn random_rational_matrices_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..300 {
            let (r, c) = (rng.random_range(1..=6), rng.random_range(1..=6));
            let data: Vec<Ratio<i64>> =
                (0..r * c).map(|_| Ratio::new(rng.random_range(-50..50), rng.random_range(1..8))).collect();
            let m = CostMatrix::new(r, c, data).unwrap();
            let pmin = solve_min(&m).unwrap();
            assert_matching(&m, &pmin);
            assert_eq!(m.total(&pmin), brute_force(&m, false));
            let pmax = solve_max(&m).unwrap();
            assert_eq!(m.total(&pmax), brute_force(&m, true));
        }
    }

    #[test]
    fn constant_shift_keeps_matching() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..100 {
            let n = rng.random_range(1..=7);
            let data: Vec<i64> = (0..n * n).map(|_| rng.random_range(0..1000)).collect();
            let shift = rng.random_range(-500..500);
            let m = CostMatrix::new(n, n, data.clone()).unwrap();
            let s = CostMatrix::new(n, n, data.iter().map(|v| v + shift).collect()).unwrap();
            assert_eq!(solve_min(&m).unwrap(), solve_min(&s).unwrap());
        }
    }

    #[test]
    fn max_equals_min_of_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        for _ in 0..100 {
            let (r, c) = (rng.random_range(1..=7), rng.random_range(1..=7));
            let data: Vec<f64> = (0..r * c).map(|_| rng.random_range(-4.0..4.0)).collect();
            let m = CostMatrix::new(r, c, data).unwrap();
            assert_eq!(solve_max(&m).unwrap(), solve_min(&m.negated()).unwrap());
        }
    }
}
