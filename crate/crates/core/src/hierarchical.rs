//! Hierarchical B-spline spaces over dyadically refined tensor meshes.
//!
//! Level `ℓ + 1` inserts the midpoint of every nonempty span of level `ℓ`, so
//! span `s` of level `ℓ` splits into spans `2s` and `2s + 1`. The refined
//! subdomains `Ω^ℓ` are stored as cell masks, nested so that every cell of
//! `Ω^{ℓ+1}` has its parent in `Ω^ℓ`. A level-`ℓ` function is active iff its
//! support lies in `Ω^ℓ` but not in `Ω^{ℓ+1}`.
//!
//! The basis is not truncated, so it does not form a partition of unity on
//! refined regions.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::spline::{Basis, SplineSpace};
use crate::wls::Tessellated;

const INACTIVE: usize = usize::MAX;

/// A cell of a given level, addressed by per-direction span indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellId {
    pub level: usize,
    pub index: Vec<usize>,
}

/// Options controlling [`HierarchicalSpace::refine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefineOptions {
    /// Rings of neighbouring cells refined together with each marked cell.
    pub buffer: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { buffer: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalSpace {
    levels: Vec<SplineSpace>,
    /// Cell masks of `Ω^ℓ`, flat lexicographic over `levels[ℓ].cell_shape()`.
    domains: Vec<Vec<bool>>,
    /// Sorted active function indices per level.
    active: Vec<Vec<usize>>,
    /// Local-to-global index maps (`INACTIVE` when not active).
    global: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

fn flat_cell(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

fn unflat_cell(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        out[d] = flat % shape[d];
        flat /= shape[d];
    }
    out
}

/// Calls `f` on every multi-index of the box `ranges`.
fn for_each_in_box(ranges: &[std::ops::Range<usize>], mut f: impl FnMut(&[usize]) -> bool) -> bool {
    if ranges.iter().any(|r| r.is_empty()) {
        return true;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.start).collect();
    loop {
        if !f(&idx) {
            return false;
        }
        let mut d = ranges.len();
        loop {
            if d == 0 {
                return true;
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < ranges[d].end {
                break;
            }
            idx[d] = ranges[d].start;
        }
    }
}

impl HierarchicalSpace {
    /// Single-level space equal to `base`.
    pub fn new(base: SplineSpace) -> Self {
        let cells: usize = base.cell_shape().iter().product();
        let mut h = Self {
            levels: vec![base],
            domains: vec![vec![true; cells]],
            active: Vec::new(),
            global: Vec::new(),
            offsets: Vec::new(),
        };
        h.update_active();
        h
    }

    /// Rebuilds a space from its base and the cells of `Ω^1, Ω^2, …`.
    pub fn from_subdomains(base: SplineSpace, refined: &[Vec<Vec<usize>>]) -> Result<Self> {
        let mut h = Self::new(base);
        for (i, cells) in refined.iter().enumerate() {
            let level = i + 1;
            if cells.is_empty() {
                break;
            }
            let next = h.levels[level - 1].dyadic_refine();
            let shape = next.cell_shape();
            let mut mask = vec![false; shape.iter().product()];
            for c in cells {
                if c.len() != shape.len() || c.iter().zip(&shape).any(|(&i, &n)| i >= n) {
                    return Err(Error::Nesting {
                        level,
                        cell: c.clone(),
                    });
                }
                let parent: Vec<usize> = c.iter().map(|i| i / 2).collect();
                if !h.in_domain(level - 1, &parent) {
                    return Err(Error::Nesting {
                        level,
                        cell: c.clone(),
                    });
                }
                mask[flat_cell(&shape, c)] = true;
            }
            h.levels.push(next);
            h.domains.push(mask);
        }
        h.update_active();
        Ok(h)
    }

    pub fn base(&self) -> &SplineSpace {
        &self.levels[0]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &SplineSpace {
        &self.levels[l]
    }

    /// Sorted active function indices of level `l`.
    pub fn active(&self, l: usize) -> &[usize] {
        &self.active[l]
    }

    /// Cells of `Ω^l` in lexicographic order.
    pub fn subdomain_cells(&self, l: usize) -> Vec<Vec<usize>> {
        let shape = self.levels[l].cell_shape();
        self.domains[l]
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(f, _)| unflat_cell(&shape, f))
            .collect()
    }

    pub fn in_domain(&self, level: usize, cell: &[usize]) -> bool {
        match self.levels.get(level) {
            Some(space) => {
                let shape = space.cell_shape();
                cell.len() == shape.len()
                    && cell.iter().zip(&shape).all(|(&i, &n)| i < n)
                    && self.domains[level][flat_cell(&shape, cell)]
            }
            None => false,
        }
    }

    fn support_inside(&self, level: usize, j: usize, domain_level: usize) -> bool {
        let space = &self.levels[level];
        let mut ranges = space.support_cells(j);
        let scale = 1usize << (domain_level - level);
        for r in ranges.iter_mut() {
            *r = r.start * scale..r.end * scale;
        }
        if ranges.iter().any(|r| r.is_empty()) {
            return false;
        }
        let shape = self.levels[domain_level].cell_shape();
        let mask = &self.domains[domain_level];
        for_each_in_box(&ranges, |c| mask[flat_cell(&shape, c)])
    }

    fn update_active(&mut self) {
        // drop trailing empty levels
        while self.levels.len() > 1 && !self.domains.last().unwrap().iter().any(|&b| b) {
            self.levels.pop();
            self.domains.pop();
        }
        let nl = self.levels.len();
        self.active.clear();
        self.global.clear();
        self.offsets.clear();
        let mut offset = 0;
        for l in 0..nl {
            let n = self.levels[l].dim();
            let mut act = Vec::new();
            for j in 0..n {
                let inside = self.support_inside(l, j, l);
                let covered = l + 1 < nl && self.support_inside(l, j, l + 1);
                if inside && !covered {
                    act.push(j);
                }
            }
            let mut map = vec![INACTIVE; n];
            for (pos, &j) in act.iter().enumerate() {
                map[j] = offset + pos;
            }
            self.offsets.push(offset);
            offset += act.len();
            self.active.push(act);
            self.global.push(map);
        }
        self.offsets.push(offset);
    }

    /// Refines the marked cells (and `buffer` rings of neighbours inside the
    /// same subdomain) by adding their dyadic children to the next level.
    pub fn refine(&self, marked: &[CellId], options: RefineOptions) -> Result<Self> {
        let mut out = self.clone();
        let mut by_level: Vec<BTreeSet<Vec<usize>>> = Vec::new();
        for c in marked {
            if !self.in_domain(c.level, &c.index) {
                return Err(Error::Nesting {
                    level: c.level,
                    cell: c.index.clone(),
                });
            }
            if by_level.len() <= c.level {
                by_level.resize(c.level + 1, BTreeSet::new());
            }
            by_level[c.level].insert(c.index.clone());
        }
        for (level, cells) in by_level.iter().enumerate() {
            if cells.is_empty() {
                continue;
            }
            if out.levels.len() == level + 1 {
                let next = out.levels[level].dyadic_refine();
                let count = next.cell_shape().iter().product();
                out.levels.push(next);
                out.domains.push(vec![false; count]);
            }
            let shape = out.levels[level].cell_shape();
            let child_shape = out.levels[level + 1].cell_shape();
            let b = options.buffer;
            for cell in cells {
                let ring: Vec<_> = cell
                    .iter()
                    .zip(&shape)
                    .map(|(&i, &n)| i.saturating_sub(b)..(i + b + 1).min(n))
                    .collect();
                for_each_in_box(&ring, |nb| {
                    if out.domains[level][flat_cell(&shape, nb)] {
                        let kids: Vec<_> = nb.iter().map(|&i| 2 * i..2 * i + 2).collect();
                        let mask = &mut out.domains[level + 1];
                        for_each_in_box(&kids, |k| {
                            mask[flat_cell(&child_shape, k)] = true;
                            true
                        });
                    }
                    true
                });
            }
        }
        out.update_active();
        Ok(out)
    }

    /// Level and index of the finest cell of the mesh containing `x`.
    pub fn leaf_cell(&self, x: &[f64]) -> Result<CellId> {
        let mut found = None;
        for (l, space) in self.levels.iter().enumerate() {
            let idx = space.cell_of(x)?;
            if self.in_domain(l, &idx) {
                found = Some(CellId {
                    level: l,
                    index: idx,
                });
            } else {
                break;
            }
        }
        found.ok_or_else(|| Error::OutsideDomain { point: x.to_vec() })
    }

    /// All cells of the hierarchical mesh that are not further refined.
    pub fn leaf_cells(&self) -> Vec<CellId> {
        let mut out = Vec::new();
        for l in 0..self.levels.len() {
            for idx in self.subdomain_cells(l) {
                let child: Vec<usize> = idx.iter().map(|i| 2 * i).collect();
                if !self.in_domain(l + 1, &child) {
                    out.push(CellId {
                        level: l,
                        index: idx,
                    });
                }
            }
        }
        out
    }

    /// Parametric box of a cell.
    pub fn cell_bounds(&self, cell: &CellId) -> Vec<(f64, f64)> {
        let space = &self.levels[cell.level];
        cell.index
            .iter()
            .enumerate()
            .map(|(d, &s)| space.direction(d).span_interval(s))
            .collect()
    }

    /// Global index of level-`l` function `j`, if active.
    pub fn global_index(&self, l: usize, j: usize) -> Option<usize> {
        self.global
            .get(l)
            .and_then(|m| m.get(j))
            .copied()
            .filter(|&g| g != INACTIVE)
    }

    /// `(level, local index)` of a global index.
    pub fn local_index(&self, g: usize) -> (usize, usize) {
        let l = self.offsets.partition_point(|&o| o <= g) - 1;
        (l, self.active[l][g - self.offsets[l]])
    }

    /// Number of active functions per level.
    pub fn level_dims(&self) -> Vec<usize> {
        self.active.iter().map(Vec::len).collect()
    }
}

/// Applies marks level by level, starting from the plain tensor space.
pub fn build_hierarchical(
    base: SplineSpace,
    marked: &[CellId],
    options: RefineOptions,
) -> Result<HierarchicalSpace> {
    let mut h = HierarchicalSpace::new(base);
    let max_level = marked.iter().map(|c| c.level).max();
    if let Some(max_level) = max_level {
        for level in 0..=max_level {
            let at: Vec<CellId> = marked
                .iter()
                .filter(|c| c.level == level)
                .cloned()
                .collect();
            if !at.is_empty() {
                h = h.refine(&at, options)?;
            }
        }
    }
    Ok(h)
}

/// Leaf cells containing the sites whose error exceeds `eps`, deduplicated.
pub fn mark_cells<'a, I>(
    h: &HierarchicalSpace,
    sites: I,
    errors: &[f64],
    eps: f64,
) -> Result<Vec<CellId>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut set = BTreeSet::new();
    for (x, &e) in sites.into_iter().zip(errors) {
        if !h.base().contains(x) {
            return Err(Error::OutsideDomain { point: x.to_vec() });
        }
        if e > eps {
            set.insert(h.leaf_cell(x)?);
        }
    }
    Ok(set.into_iter().collect())
}

impl Basis for HierarchicalSpace {
    fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn param_dim(&self) -> usize {
        self.levels[0].param_dim()
    }

    fn degrees(&self) -> Vec<usize> {
        self.levels[0].degrees()
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        self.levels[0].bounds()
    }

    fn eval_basis_derivatives(&self, x: &[f64], order: &[usize]) -> Result<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        for (l, space) in self.levels.iter().enumerate() {
            let cell = space.cell_of(x)?;
            if !self.in_domain(l, &cell) {
                break;
            }
            for (j, v) in space.eval_basis_derivatives(x, order)? {
                let g = self.global[l][j];
                if g != INACTIVE {
                    out.push((g, v));
                }
            }
        }
        Ok(out)
    }
}

impl Tessellated for HierarchicalSpace {
    fn integration_cells(&self) -> Vec<Vec<(f64, f64)>> {
        self.leaf_cells()
            .iter()
            .map(|c| self.cell_bounds(c))
            .collect()
    }
}

impl Tessellated for SplineSpace {
    fn integration_cells(&self) -> Vec<Vec<(f64, f64)>> {
        let shape = self.cell_shape();
        let ranges: Vec<_> = shape.iter().map(|&n| 0..n).collect();
        let mut out = Vec::new();
        for_each_in_box(&ranges, |idx| {
            out.push(
                idx.iter()
                    .enumerate()
                    .map(|(d, &s)| self.direction(d).span_interval(s))
                    .collect(),
            );
            true
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::KnotVector;

    fn mesh(n: usize, degree: usize) -> SplineSpace {
        let kv = KnotVector::uniform((0.0, 1.0), degree, n - 1).unwrap();
        SplineSpace::new(vec![kv.clone(), kv]).unwrap()
    }

    #[test]
    fn unrefined_space_is_the_tensor_space() {
        let base = mesh(4, 2);
        let h = build_hierarchical(base.clone(), &[], RefineOptions::default()).unwrap();
        assert_eq!(h.num_levels(), 1);
        assert_eq!(h.dim(), base.dim());
        let x = [0.3, 0.8];
        assert_eq!(h.eval_basis(&x).unwrap(), base.eval_basis(&x).unwrap());
    }

    #[test]
    fn full_refinement_gives_next_level() {
        let base = mesh(4, 2);
        let all: Vec<CellId> = (0..4)
            .flat_map(|i| {
                (0..4).map(move |j| CellId {
                    level: 0,
                    index: vec![i, j],
                })
            })
            .collect();
        let h = build_hierarchical(base.clone(), &all, RefineOptions { buffer: 0 }).unwrap();
        assert_eq!(h.level_dims(), vec![0, base.dyadic_refine().dim()]);
    }

    #[test]
    fn nesting_violation_is_an_error() {
        let h = HierarchicalSpace::new(mesh(4, 2));
        let bad = CellId {
            level: 1,
            index: vec![0, 0],
        };
        assert!(matches!(
            h.refine(&[bad], RefineOptions::default()),
            Err(Error::Nesting { .. })
        ));
        let oob = CellId {
            level: 0,
            index: vec![4, 0],
        };
        assert!(h.refine(&[oob], RefineOptions::default()).is_err());
    }

    #[test]
    fn leaf_cells_and_marking() {
        let h = HierarchicalSpace::new(mesh(4, 3))
            .refine(
                &[CellId {
                    level: 0,
                    index: vec![0, 0],
                }],
                RefineOptions { buffer: 0 },
            )
            .unwrap();
        assert_eq!(h.leaf_cells().len(), 15 + 4);
        let leaf = h.leaf_cell(&[0.1, 0.1]).unwrap();
        assert_eq!(
            leaf,
            CellId {
                level: 1,
                index: vec![0, 0]
            }
        );
        let sites: Vec<[f64; 2]> = vec![[0.1, 0.1], [0.11, 0.12], [0.9, 0.9], [0.5, 0.5]];
        let errs = [1.0, 1.0, 0.0, 1.0];
        let marks = mark_cells(&h, sites.iter().map(|s| &s[..]), &errs, 0.5).unwrap();
        assert_eq!(
            marks,
            vec![
                CellId {
                    level: 0,
                    index: vec![2, 2]
                },
                CellId {
                    level: 1,
                    index: vec![0, 0]
                },
            ]
        );
        assert!(mark_cells(&h, sites.iter().map(|s| &s[..]), &[0.0; 4], 0.5)
            .unwrap()
            .is_empty());
        let outside = [[1.5, 0.0]];
        assert!(mark_cells(&h, outside.iter().map(|s| &s[..]), &[1.0], 0.5).is_err());
    }

    #[test]
    fn round_trip_from_subdomains() {
        let h = HierarchicalSpace::new(mesh(4, 2))
            .refine(
                &[CellId {
                    level: 0,
                    index: vec![1, 2],
                }],
                RefineOptions::default(),
            )
            .unwrap();
        let refined: Vec<_> = (1..h.num_levels()).map(|l| h.subdomain_cells(l)).collect();
        let back = HierarchicalSpace::from_subdomains(h.base().clone(), &refined).unwrap();
        assert_eq!(back, h);
        let bad = vec![vec![vec![7, 7]]];
        assert!(HierarchicalSpace::from_subdomains(mesh(2, 2), &bad).is_err());
    }

    #[test]
    fn global_indices_are_level_major() {
        let h = HierarchicalSpace::new(mesh(4, 2))
            .refine(
                &[CellId {
                    level: 0,
                    index: vec![0, 0],
                }],
                RefineOptions::default(),
            )
            .unwrap();
        let dims = h.level_dims();
        assert_eq!(dims.iter().sum::<usize>(), h.dim());
        for g in 0..h.dim() {
            let (l, j) = h.local_index(g);
            assert_eq!(h.global_index(l, j), Some(g));
        }
        assert_eq!(h.local_index(dims[0]).0, 1);
    }
}
