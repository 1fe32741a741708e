//! 8-connected component labeling with a two-pass union-find.

use super::BinaryMask;

/// One 8-connected region of set pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// 1-based label, equal to the component's position in the sorted output plus one.
    pub label: u32,
    pub pixel_count: usize,
    /// Inclusive `(x0, y0, x1, y1)`.
    pub bounding_box: (u32, u32, u32, u32),
    /// Row-major linear indices of the member pixels, ascending.
    pub pixels: Vec<u32>,
}

/// Per-pixel labels (0 = background) together with the components they index.
#[derive(Debug, Clone)]
pub struct Labeling {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub components: Vec<Component>,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let up = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = up;
            x = up;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Labels the 8-connected components of `mask`.
///
/// Components are ordered by `(y0, x0)` of their bounding boxes, ties broken
/// by the first member pixel in raster order; labels follow that order.
pub fn label_components(mask: &BinaryMask) -> Labeling {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let bits = mask.bits();
    let mut provisional = vec![0u32; w * h];
    // Index 0 is the background sentinel.
    let mut sets = DisjointSet { parent: vec![0] };

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !bits[i] {
                continue;
            }
            let mut label = 0u32;
            let mut join = |other: u32, label: &mut u32| {
                if other != 0 {
                    *label = if *label == 0 { other } else { sets.union(*label, other) };
                }
            };
            if x > 0 {
                join(provisional[i - 1], &mut label);
            }
            if y > 0 {
                let up = i - w;
                if x > 0 {
                    join(provisional[up - 1], &mut label);
                }
                join(provisional[up], &mut label);
                if x + 1 < w {
                    join(provisional[up + 1], &mut label);
                }
            }
            provisional[i] = if label == 0 { sets.make() } else { label };
        }
    }

    // Resolve roots and collect components in order of first appearance.
    let mut root_to_slot = vec![u32::MAX; sets.parent.len()];
    let mut comps: Vec<Component> = Vec::new();
    for (i, p) in provisional.iter_mut().enumerate() {
        if *p == 0 {
            continue;
        }
        let root = sets.find(*p) as usize;
        if root_to_slot[root] == u32::MAX {
            root_to_slot[root] = comps.len() as u32;
            comps.push(Component {
                label: 0,
                pixel_count: 0,
                bounding_box: (u32::MAX, u32::MAX, 0, 0),
                pixels: Vec::new(),
            });
        }
        let slot = root_to_slot[root];
        let c = &mut comps[slot as usize];
        let (x, y) = ((i % w) as u32, (i / w) as u32);
        let bb = &mut c.bounding_box;
        *bb = (bb.0.min(x), bb.1.min(y), bb.2.max(x), bb.3.max(y));
        c.pixel_count += 1;
        c.pixels.push(i as u32);
        *p = slot;
    }

    // First-appearance order already sorts by y0 and by first pixel; x0 may still reorder.
    let mut order: Vec<usize> = (0..comps.len()).collect();
    order.sort_by_key(|&s| (comps[s].bounding_box.1, comps[s].bounding_box.0, comps[s].pixels[0]));
    let mut slot_to_label = vec![0u32; comps.len()];
    for (rank, &slot) in order.iter().enumerate() {
        slot_to_label[slot] = rank as u32 + 1;
    }
    // `provisional` now holds slot indices for set pixels.
    let mut labels = provisional;
    for (i, l) in labels.iter_mut().enumerate() {
        if bits[i] {
            *l = slot_to_label[*l as usize];
        }
    }
    let mut components: Vec<Component> = comps;
    for (slot, c) in components.iter_mut().enumerate() {
        c.label = slot_to_label[slot];
    }
    components.sort_by_key(|c| c.label);

    Labeling { width: mask.width(), height: mask.height(), labels, components }
}

/// Components of `mask` under 8-connectivity, ordered by `(y0, x0)`.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    label_components(mask).components
}
