//! Median-split bounding volume hierarchy over axis-aligned boxes.
//!
//! Shared by the proxy-mesh tracer (boxes around triangles) and the Gaussian
//! field (boxes around k-sigma ellipsoid extents).

use alloc::vec::Vec;

use crate::vec3::{Ray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn of_points(points: &[Vec3]) -> Aabb {
        let mut b = Aabb::EMPTY;
        for &p in points {
            b.grow(p);
        }
        b
    }

    #[inline]
    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    #[inline]
    pub fn union(&mut self, o: &Aabb) {
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    #[inline]
    pub fn centroid(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    #[inline]
    pub fn contains(&self, o: &Aabb) -> bool {
        self.min.x <= o.min.x
            && self.min.y <= o.min.y
            && self.min.z <= o.min.z
            && self.max.x >= o.max.x
            && self.max.y >= o.max.y
            && self.max.z >= o.max.z
    }

    /// Slab test; returns true when the ray enters the box within `t_max`.
    #[inline]
    pub fn hit_by(&self, ray: &Ray, t_max: f64) -> bool {
        let mut t0 = 0.0f64;
        let mut t1 = t_max;
        for a in 0..3 {
            let d = ray.dir.get(a);
            let o = ray.origin.get(a);
            if d == 0.0 {
                // Ray parallel to this slab; either always inside or never.
                if o < self.min.get(a) || o > self.max.get(a) {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d;
            let mut near = (self.min.get(a) - o) * inv;
            let mut far = (self.max.get(a) - o) * inv;
            if inv < 0.0 {
                core::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t1 < t0 {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        bounds: Aabb,
        start: usize,
        count: usize,
    },
    Inner {
        bounds: Aabb,
        left: usize,
        right: usize,
    },
}

/// A BVH over externally owned primitives, identified by index.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    /// Primitive index permutation; leaves reference ranges in here.
    order: Vec<usize>,
    /// Per-primitive boxes, indexed like the caller's primitives.
    boxes: Vec<Aabb>,
    root: usize,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(boxes: &[Aabb]) -> Bvh {
        assert!(!boxes.is_empty());
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let mut nodes = Vec::new();
        let root = Self::build_range(boxes, &mut order, 0, boxes.len(), &mut nodes);
        Bvh {
            nodes,
            order,
            boxes: boxes.to_vec(),
            root,
        }
    }

    fn build_range(
        boxes: &[Aabb],
        order: &mut [usize],
        start: usize,
        end: usize,
        nodes: &mut Vec<Node>,
    ) -> usize {
        let mut bounds = Aabb::EMPTY;
        for &i in &order[start..end] {
            bounds.union(&boxes[i]);
        }
        if end - start <= LEAF_SIZE {
            nodes.push(Node::Leaf {
                bounds,
                start,
                count: end - start,
            });
            return nodes.len() - 1;
        }
        // Split along the widest centroid axis at the median.
        let mut cmin = Vec3::splat(f64::INFINITY);
        let mut cmax = Vec3::splat(f64::NEG_INFINITY);
        for &i in &order[start..end] {
            let c = boxes[i].centroid();
            cmin = cmin.min(c);
            cmax = cmax.max(c);
        }
        let ext = cmax - cmin;
        let axis = if ext.x >= ext.y && ext.x >= ext.z {
            0
        } else if ext.y >= ext.z {
            1
        } else {
            2
        };
        let mid = (start + end) / 2;
        order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            boxes[a]
                .centroid()
                .get(axis)
                .partial_cmp(&boxes[b].centroid().get(axis))
                .unwrap()
                .then(a.cmp(&b))
        });
        let left = Self::build_range(boxes, order, start, mid, nodes);
        let right = Self::build_range(boxes, order, mid, end, nodes);
        let mut b = Aabb::EMPTY;
        b.union(match &nodes[left] {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        });
        b.union(match &nodes[right] {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        });
        debug_assert!(b.contains(&bounds) && bounds.contains(&b));
        nodes.push(Node::Inner {
            bounds,
            left,
            right,
        });
        nodes.len() - 1
    }

    /// Calls `visit(primitive_index)` for every primitive whose box the ray
    /// enters within `t_max`. The visitor may shrink `t_max` by returning a
    /// smaller value (nearest-hit pruning).
    pub fn traverse<F: FnMut(usize, f64) -> f64>(&self, ray: &Ray, mut t_max: f64, mut visit: F) {
        let mut stack = Vec::with_capacity(64);
        stack.push(self.root);
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf {
                    bounds,
                    start,
                    count,
                } => {
                    if bounds.hit_by(ray, t_max) {
                        for &prim in &self.order[*start..*start + *count] {
                            if self.boxes[prim].hit_by(ray, t_max) {
                                t_max = visit(prim, t_max);
                            }
                        }
                    }
                }
                Node::Inner {
                    bounds,
                    left,
                    right,
                } => {
                    if bounds.hit_by(ray, t_max) {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
    }

    pub fn primitive_count(&self) -> usize {
        self.order.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use alloc::vec;

    #[test]
    fn two_boxes() {
        let boxes = vec![
            Aabb {
                min: Vec3::new(-1.0, -1.0, -1.0),
                max: Vec3::new(0.0, 0.0, 0.0),
            },
            Aabb {
                min: Vec3::new(5.0, 5.0, 5.0),
                max: Vec3::new(6.0, 6.0, 6.0),
            },
        ];
        let bvh = Bvh::build(&boxes);
        let ray = Ray::new(Vec3::new(-0.5, -0.5, -5.0), Vec3::new(0.0, 0.0, 1.0));
        let mut seen = vec![];
        bvh.traverse(&ray, f64::INFINITY, |i, t| {
            seen.push(i);
            t
        });
        assert_eq!(seen, vec![0]);
    }

    #[test]
    fn miss_all_visits_nothing() {
        let boxes = vec![Aabb {
            min: Vec3::new(0.0, 0.0, 0.0),
            max: Vec3::new(1.0, 1.0, 1.0),
        }];
        let bvh = Bvh::build(&boxes);
        let ray = Ray::new(Vec3::new(5.0, 5.0, 5.0), Vec3::new(0.0, 0.0, 1.0));
        let mut n = 0;
        bvh.traverse(&ray, f64::INFINITY, |_, t| {
            n += 1;
            t
        });
        assert_eq!(n, 0);
    }

    #[test]
    fn traversal_set_matches_brute_force() {
        let mut rng = SplitMix64::new(13);
        let boxes: Vec<Aabb> = (0..200)
            .map(|_| {
                let c = Vec3::new(
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                    rng.uniform(-5.0, 5.0),
                );
                let e = Vec3::new(
                    rng.uniform(0.05, 0.5),
                    rng.uniform(0.05, 0.5),
                    rng.uniform(0.05, 0.5),
                );
                Aabb {
                    min: c - e,
                    max: c + e,
                }
            })
            .collect();
        let bvh = Bvh::build(&boxes);
        for _ in 0..200 {
            let origin = Vec3::new(
                rng.uniform(-8.0, 8.0),
                rng.uniform(-8.0, 8.0),
                rng.uniform(-8.0, 8.0),
            );
            let dir = Vec3::new(
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0),
            )
            .normalized();
            let ray = Ray::new(origin, dir);
            let mut ours: Vec<usize> = vec![];
            bvh.traverse(&ray, f64::INFINITY, |i, t| {
                ours.push(i);
                t
            });
            ours.sort_unstable();
            let brute: Vec<usize> = (0..boxes.len())
                .filter(|&i| boxes[i].hit_by(&ray, f64::INFINITY))
                .collect();
            assert_eq!(ours, brute);
        }
    }
}
