//! k+1 coloring of a k-dimensional lattice with same-color separation R.
//!
//! The pattern is translation invariant with period 2kR per axis: cells of
//! dimension t are fattened to half-width (k-t)R/2 and take color t, the
//! leftover bulk takes color k. Regions are the connected components of each
//! color class.

use crate::error::SclError;
use crate::geometry::{self, GeometryGraph};

#[derive(Debug, Clone)]
pub struct RegionColoring {
    pub regions: Vec<Vec<usize>>,
    pub colors: Vec<usize>,
    pub num_colors: usize,
    pub separation: usize,
}

impl RegionColoring {
    pub fn regions_of_color(&self, color: usize) -> impl Iterator<Item = &Vec<usize>> + '_ {
        self.regions
            .iter()
            .zip(&self.colors)
            .filter(move |(_, &c)| c == color)
            .map(|(r, _)| r)
    }
}

pub fn lattice_region_coloring(
    k: usize,
    dims: &[usize],
    separation: usize,
) -> Result<RegionColoring, SclError> {
    if !(1..=3).contains(&k) {
        return Err(SclError::invalid("lattice dimension k must be 1, 2, or 3"));
    }
    if dims.len() != k {
        return Err(SclError::invalid("dims length must equal k"));
    }
    if separation == 0 {
        return Err(SclError::invalid("separation must be positive"));
    }
    let period = 2 * k * separation;
    if dims.iter().any(|&l| l < period) {
        return Err(SclError::invalid(format!(
            "every dimension must cover one period {} of the coloring",
            period
        )));
    }
    let graph = geometry::lattice(dims);
    let n = graph.vertex_count();

    // Distance of coordinate x to the nearest multiple of the period.
    let axis_dist = |x: usize| -> usize {
        let r = x % period;
        r.min(period - r)
    };
    let color_of = |v: usize| -> usize {
        let mut coords = vec![0usize; k];
        let mut rest = v;
        for axis in (0..k).rev() {
            coords[axis] = rest % dims[axis];
            rest /= dims[axis];
        }
        for t in 0..k {
            // Fattened t-cells: at least k-t coordinates within half-width
            // (k-t)R/2 of a lattice hyperplane (doubled to stay in integers).
            let near = coords
                .iter()
                .filter(|&&x| 2 * axis_dist(x) < (k - t) * separation)
                .count();
            if near >= k - t {
                return t;
            }
        }
        k
    };

    let vertex_colors: Vec<usize> = (0..n).map(color_of).collect();
    let mut region_id = vec![usize::MAX; n];
    let mut regions: Vec<Vec<usize>> = Vec::new();
    let mut colors: Vec<usize> = Vec::new();
    for start in 0..n {
        if region_id[start] != usize::MAX {
            continue;
        }
        let color = vertex_colors[start];
        let mut component = Vec::new();
        let mut queue = std::collections::VecDeque::from([start]);
        region_id[start] = regions.len();
        while let Some(v) = queue.pop_front() {
            component.push(v);
            for u in graph.neighbors(v) {
                if region_id[u] == usize::MAX && vertex_colors[u] == color {
                    region_id[u] = regions.len();
                    queue.push_back(u);
                }
            }
        }
        component.sort_unstable();
        regions.push(component);
        colors.push(color);
    }
    Ok(RegionColoring { regions, colors, num_colors: k + 1, separation })
}

/// Exhaustive check that same-color regions are at least `R` apart and that
/// no region exceeds the (2kR)^k volume bound.
pub fn verify_coloring(
    coloring: &RegionColoring,
    graph: &GeometryGraph,
    k: usize,
) -> Result<(), SclError> {
    let bound = (2 * k * coloring.separation).pow(k as u32);
    for (region, &color) in coloring.regions.iter().zip(&coloring.colors) {
        if region.len() > bound {
            return Err(SclError::invalid(format!(
                "region of color {} has size {} over bound {}",
                color,
                region.len(),
                bound
            )));
        }
    }
    for i in 0..coloring.regions.len() {
        for j in (i + 1)..coloring.regions.len() {
            if coloring.colors[i] != coloring.colors[j] {
                continue;
            }
            let a: std::collections::BTreeSet<usize> = coloring.regions[i].iter().cloned().collect();
            let b: std::collections::BTreeSet<usize> = coloring.regions[j].iter().cloned().collect();
            let d = graph.distance(&a, &b).unwrap_or(usize::MAX);
            if d < coloring.separation {
                return Err(SclError::invalid(format!(
                    "same-color regions {} and {} at distance {} < {}",
                    i, j, d, coloring.separation
                )));
            }
        }
    }
    let covered: usize = coloring.regions.iter().map(|r| r.len()).sum();
    if covered != graph.vertex_count() {
        return Err(SclError::invalid("regions do not partition the lattice"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_alternating_blocks() {
        let c = lattice_region_coloring(1, &[8], 2).unwrap();
        let used: std::collections::BTreeSet<usize> = c.colors.iter().cloned().collect();
        assert_eq!(used.len(), 2);
        verify_coloring(&c, &geometry::line(8), 1).unwrap();
    }

    #[test]
    fn line8_with_r3_gives_blocks_of_at_most_three() {
        let c = lattice_region_coloring(1, &[8], 3).unwrap();
        verify_coloring(&c, &geometry::line(8), 1).unwrap();
        for r in &c.regions {
            assert!(r.len() <= 3);
        }
    }

    #[test]
    fn two_dimensional_three_colors() {
        let c = lattice_region_coloring(2, &[12, 12], 3).unwrap();
        let used: std::collections::BTreeSet<usize> = c.colors.iter().cloned().collect();
        assert_eq!(used.len(), 3);
        verify_coloring(&c, &geometry::lattice(&[12, 12]), 2).unwrap();
    }

    #[test]
    fn two_dimensional_wide_separation() {
        let c = lattice_region_coloring(2, &[24, 24], 6).unwrap();
        let used: std::collections::BTreeSet<usize> = c.colors.iter().cloned().collect();
        assert_eq!(used.len(), 3);
        verify_coloring(&c, &geometry::lattice(&[24, 24]), 2).unwrap();
    }

    #[test]
    fn rejects_undersized_lattices() {
        assert!(lattice_region_coloring(2, &[8, 8], 3).is_err());
        assert!(lattice_region_coloring(4, &[4, 4, 4, 4], 1).is_err());
    }
}
