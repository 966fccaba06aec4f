//! 6-connected component labeling of binary masks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::volume::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    /// 1-based; 0 is background in the label image.
    pub label: u32,
    pub size: usize,
    /// Inclusive `[min, max]` voxel coordinates per axis.
    pub bbox: [[usize; 2]; 3],
}

/// Labels in order of each component's first voxel in flat index order.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<Component>) {
    let g = *mask.geometry();
    let [d0, d1, d2] = g.dims;
    let mut labels = vec![0u32; g.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..g.len() {
        if !mask.get(seed) || labels[seed] != 0 {
            continue;
        }
        let label = components.len() as u32 + 1;
        let c0 = g.coords(seed);
        let mut comp = Component { label, size: 0, bbox: c0.map(|c| [c, c]) };
        labels[seed] = label;
        queue.push_back(seed);
        while let Some(idx) = queue.pop_front() {
            let c = g.coords(idx);
            comp.size += 1;
            for a in 0..3 {
                comp.bbox[a][0] = comp.bbox[a][0].min(c[a]);
                comp.bbox[a][1] = comp.bbox[a][1].max(c[a]);
            }
            let [i, j, k] = c;
            let mut visit = |n: usize| {
                if mask.get(n) && labels[n] == 0 {
                    labels[n] = label;
                    queue.push_back(n);
                }
            };
            if i > 0 { visit(g.index(i - 1, j, k)); }
            if i + 1 < d0 { visit(g.index(i + 1, j, k)); }
            if j > 0 { visit(g.index(i, j - 1, k)); }
            if j + 1 < d1 { visit(g.index(i, j + 1, k)); }
            if k > 0 { visit(g.index(i, j, k - 1)); }
            if k + 1 < d2 { visit(g.index(i, j, k + 1)); }
        }
        components.push(comp);
    }
    (labels, components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeGeometry;

    #[test]
    fn diagonal_neighbours_are_separate() {
        let g = VolumeGeometry::isotropic([3, 3, 1]).unwrap();
        let on = [g.index(0, 0, 0), g.index(1, 1, 0), g.index(2, 2, 0), g.index(2, 1, 0)];
        let mask = BinaryMask::from_fn(g, |i| on.contains(&i));
        let (labels, comps) = label_components(&mask);
        assert_eq!(comps.len(), 2);
        assert_eq!(comps[0].size, 1);
        assert_eq!(comps[1].size, 3);
        assert_eq!(comps[1].bbox, [[1, 2], [1, 2], [0, 0]]);
        assert_eq!(labels[g.index(2, 2, 0)], 2);
        assert_eq!(labels[g.index(0, 1, 0)], 0);
    }

    #[test]
    fn sizes_sum_to_count() {
        let g = VolumeGeometry::isotropic([10, 9, 8]).unwrap();
        let mask = BinaryMask::from_fn(g, |i| (i * 7919) % 13 < 5);
        let (_, comps) = label_components(&mask);
        assert_eq!(comps.iter().map(|c| c.size).sum::<usize>(), mask.count());
    }
}
