//! Small 3D vector helpers and axis-aligned bounding boxes.

pub type Point3 = [f64; 3];

#[inline]
pub fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn add(a: Point3, b: Point3) -> Point3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn scale(a: Point3, s: f64) -> Point3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Point3, b: Point3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Point3, b: Point3) -> Point3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm(a: Point3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn normalize(a: Point3) -> Point3 {
    let n = norm(a);
    scale(a, 1.0 / n)
}

#[inline]
pub fn dist(a: Point3, b: Point3) -> f64 {
    norm(sub(a, b))
}

/// Axis-aligned bounding box of a point cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3>>(points: I) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.insert(*p);
        }
        b
    }

    pub fn insert(&mut self, p: Point3) {
        for d in 0..3 {
            self.min[d] = self.min[d].min(p[d]);
            self.max[d] = self.max[d].max(p[d]);
        }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    /// Diagonal length of the box.
    pub fn diameter(&self) -> f64 {
        norm(sub(self.max, self.min))
    }

    /// Minimum distance between two boxes (0 if they overlap or touch).
    pub fn distance(&self, other: &Aabb) -> f64 {
        let mut d2 = 0.0;
        for k in 0..3 {
            let gap = (self.min[k] - other.max[k]).max(other.min[k] - self.max[k]).max(0.0);
            d2 += gap * gap;
        }
        d2.sqrt()
    }

    /// Axis with the largest extent; ties resolve to the lowest axis index.
    pub fn longest_axis(&self) -> usize {
        let mut axis = 0;
        for d in 1..3 {
            if self.extent(d) > self.extent(axis) {
                axis = d;
            }
        }
        axis
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_distance_and_diameter() {
        let a = Aabb::from_points([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0]].iter());
        let b = Aabb::from_points([[3.0, 0.0, 0.0], [4.0, 1.0, 0.0]].iter());
        assert_eq!(a.distance(&b), 2.0);
        assert_eq!(a.distance(&a), 0.0);
        assert!((a.diameter() - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn longest_axis_tie_breaks_low() {
        let b = Aabb::from_points([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]].iter());
        assert_eq!(b.longest_axis(), 0);
        let c = Aabb::from_points([[0.0, 0.0, 0.0], [1.0, 2.0, 1.0]].iter());
        assert_eq!(c.longest_axis(), 1);
    }
}
