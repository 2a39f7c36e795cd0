//! Sort-tile-recursive packed R-trees. Each batch of added documents becomes
//! one immutable tree; trees are merged when there are too many of them.

use crate::model::BoundingBox;

const NODE_CAPACITY: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    bbox: BoundingBox,
    start: usize,
    end: usize,
}

/// Immutable R-tree over `(box, slot)` entries.
#[derive(Debug, Clone)]
pub struct PackedRTree {
    entries: Vec<(BoundingBox, u32)>,
    /// `levels[0]` groups entries, `levels[k]` groups nodes of `levels[k-1]`.
    /// The last level holds a single root.
    levels: Vec<Vec<Node>>,
}

fn str_sort<T>(items: &mut [T], bbox: impl Fn(&T) -> BoundingBox) {
    let n = items.len();
    if n <= NODE_CAPACITY {
        return;
    }
    let leaves = n.div_ceil(NODE_CAPACITY);
    let slices = (leaves as f64).sqrt().ceil() as usize;
    let slice_len = slices * NODE_CAPACITY;
    items.sort_by(|a, b| bbox(a).center().0.total_cmp(&bbox(b).center().0));
    for slice in items.chunks_mut(slice_len) {
        slice.sort_by(|a, b| bbox(a).center().1.total_cmp(&bbox(b).center().1));
    }
}

fn group<T>(items: &[T], bbox: impl Fn(&T) -> BoundingBox) -> Vec<Node> {
    items
        .chunks(NODE_CAPACITY)
        .enumerate()
        .map(|(i, chunk)| {
            let b = chunk
                .iter()
                .map(&bbox)
                .reduce(|a, b| a.union(&b))
                .expect("chunks are non-empty");
            let start = i * NODE_CAPACITY;
            Node {
                bbox: b,
                start,
                end: start + chunk.len(),
            }
        })
        .collect()
}

impl PackedRTree {
    pub fn build(mut entries: Vec<(BoundingBox, u32)>) -> Self {
        let mut levels = Vec::new();
        if !entries.is_empty() {
            str_sort(&mut entries, |e| e.0);
            let mut level = group(&entries, |e| e.0);
            while level.len() > 1 {
                str_sort(&mut level, |n| n.bbox);
                let up = group(&level, |n| n.bbox);
                levels.push(level);
                level = up;
            }
            levels.push(level);
        }
        PackedRTree { entries, levels }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(BoundingBox, u32)] {
        &self.entries
    }

    /// Calls `hit` for every entry whose box intersects `query`.
    pub fn search(&self, query: &BoundingBox, mut hit: impl FnMut(u32)) {
        let Some(top) = self.levels.len().checked_sub(1) else {
            return;
        };
        let mut stack: Vec<(usize, usize)> = vec![(top, 0)];
        while let Some((level, idx)) = stack.pop() {
            let node = &self.levels[level][idx];
            if !node.bbox.intersects(query) {
                continue;
            }
            if level == 0 {
                for (b, slot) in &self.entries[node.start..node.end] {
                    if b.intersects(query) {
                        hit(*slot);
                    }
                }
            } else {
                stack.extend((node.start..node.end).map(|i| (level - 1, i)));
            }
        }
    }
}
