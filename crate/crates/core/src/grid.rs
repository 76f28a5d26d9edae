//! Uniform-grid index for exact nearest-neighbour queries in 3D.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use num_traits::Float;

pub(crate) type Cell = [i64; 3];

pub(crate) struct UniformGrid<'a> {
    cell: f64,
    points: &'a [[f64; 3]],
    cells: BTreeMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl<'a> UniformGrid<'a> {
    /// Indexes `points[i]` for every `i` in `ids`.
    pub(crate) fn new(points: &'a [[f64; 3]], ids: &[usize], cell: f64) -> Self {
        let mut cells: BTreeMap<Cell, Vec<usize>> = BTreeMap::new();
        let mut lo = [i64::MAX; 3];
        let mut hi = [i64::MIN; 3];
        for &i in ids {
            let c = cell_of(&points[i], cell);
            for a in 0..3 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
            cells.entry(c).or_default().push(i);
        }
        Self { cell, points, cells, lo, hi }
    }

    /// Closest indexed point to `q`; ties go to the lowest index.
    pub(crate) fn nearest(&self, q: &[f64; 3]) -> Option<usize> {
        if self.cells.is_empty() {
            return None;
        }
        let c = cell_of(q, self.cell);
        // Shells beyond this radius cannot contain indexed cells.
        let max_r = (0..3)
            .map(|a| (c[a] - self.lo[a]).abs().max((self.hi[a] - c[a]).abs()))
            .max()
            .unwrap_or(0);
        let mut best: Option<(f64, usize)> = None;
        let mut r: i64 = 0;
        loop {
            self.scan_shell(c, r, q, &mut best);
            if let Some((d2, _)) = best {
                let reach = r as f64 * self.cell;
                if d2 <= reach * reach {
                    break;
                }
            }
            if r >= max_r {
                break;
            }
            r += 1;
        }
        best.map(|(_, i)| i)
    }

    fn scan_shell(&self, c: Cell, r: i64, q: &[f64; 3], best: &mut Option<(f64, usize)>) {
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                        continue;
                    }
                    let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                    let Some(ids) = self.cells.get(&key) else { continue };
                    for &i in ids {
                        let d2 = dist2(&self.points[i], q);
                        let better = match *best {
                            None => true,
                            Some((bd, bi)) => d2 < bd || (d2 == bd && i < bi),
                        };
                        if better {
                            *best = Some((d2, i));
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn cell_of(p: &[f64; 3], cell: f64) -> Cell {
    [
        Float::floor(p[0] / cell) as i64,
        Float::floor(p[1] / cell) as i64,
        Float::floor(p[2] / cell) as i64,
    ]
}

#[inline]
pub(crate) fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng as _;

    #[test]
    fn nearest_matches_brute_force() {
        let mut rng = stream(3, &[]);
        let pts: Vec<[f64; 3]> = (0..400)
            .map(|_| [rng.random::<f64>(), rng.random::<f64>() * 0.3, rng.random::<f64>()])
            .collect();
        let ids: Vec<usize> = (0..400).step_by(7).collect();
        let grid = UniformGrid::new(&pts, &ids, 0.02);
        for q in &pts {
            let brute = ids
                .iter()
                .copied()
                .min_by(|&a, &b| dist2(&pts[a], q).total_cmp(&dist2(&pts[b], q)).then(a.cmp(&b)))
                .unwrap();
            assert_eq!(grid.nearest(q), Some(brute));
        }
        // far outside the indexed region
        let far = [1.4, -0.4, 1.1];
        let brute = ids
            .iter()
            .copied()
            .min_by(|&a, &b| dist2(&pts[a], &far).total_cmp(&dist2(&pts[b], &far)).then(a.cmp(&b)))
            .unwrap();
        assert_eq!(grid.nearest(&far), Some(brute));
    }
}
