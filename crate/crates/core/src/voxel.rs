//! Occupancy masks and 6-connected components over `R³` voxel grids.

/// Component labelling of a boolean mask.
#[derive(Debug, Clone)]
pub struct Components {
    /// Per-voxel label, `None` for unoccupied voxels. Labels follow scan
    /// order of each component's first voxel.
    pub labels: Vec<Option<usize>>,
    /// Voxel count per label.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Label of the largest component; ties go to the lowest label.
    pub fn largest(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (l, &s) in self.sizes.iter().enumerate() {
            if best.is_none_or(|b| s > self.sizes[b]) {
                best = Some(l);
            }
        }
        best
    }

    /// Indicator of the largest component.
    pub fn largest_mask(&self) -> Vec<f64> {
        let big = self.largest();
        self.labels
            .iter()
            .map(|l| if l.is_some() && *l == big { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Labels the 6-connected components of `mask` (flat index
/// `(z * R + y) * R + x`).
pub fn components(mask: &[bool], r: usize) -> Components {
    debug_assert_eq!(mask.len(), r * r * r);
    let mut labels = vec![None; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start].is_some() {
            continue;
        }
        let label = sizes.len();
        let mut size = 0;
        labels[start] = Some(label);
        stack.push(start);
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y, z) = (i % r, (i / r) % r, i / (r * r));
            let mut visit = |j: usize| {
                if mask[j] && labels[j].is_none() {
                    labels[j] = Some(label);
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < r {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - r);
            }
            if y + 1 < r {
                visit(i + r);
            }
            if z > 0 {
                visit(i - r * r);
            }
            if z + 1 < r {
                visit(i + r * r);
            }
        }
        sizes.push(size);
    }
    Components { labels, sizes }
}

/// Mask of voxels whose density exceeds `threshold`.
pub fn threshold_mask(density: &[f64], threshold: f64) -> Vec<bool> {
    density.iter().map(|&d| d > threshold).collect()
}
