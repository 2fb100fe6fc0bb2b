use super::Point;

/// Absolute shoelace area of a closed polygon given by its vertices in
/// traversal order. Coordinates are taken relative to the first vertex,
/// which keeps the cross products small for far-from-origin polygons.
pub fn shoelace_area(vertices: &[Point]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let origin = vertices[0];
    let rel = |p: Point| (p.x - origin.x, p.y - origin.y);
    let mut twice = 0.0;
    for w in vertices[1..].windows(2) {
        let (x0, y0) = rel(w[0]);
        let (x1, y1) = rel(w[1]);
        twice += x0 * y1 - x1 * y0;
    }
    twice.abs() / 2.0
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection, counting touching and collinear overlap.
fn segments_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// True when no two non-adjacent edges of the closed polygon meet.
pub fn is_simple_polygon(vertices: &[Point]) -> bool {
    let n = vertices.len();
    if n < 3 {
        return false;
    }
    let edge = |i: usize| (vertices[i], vertices[(i + 1) % n]);
    for i in 0..n {
        for j in i + 1..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (a, b) = edge(i);
            let (c, d) = edge(j);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point> {
        v.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    /// Independent oracle: fan triangulation from vertex 0, summing signed
    /// triangle areas computed with the half cross product.
    fn fan_area(v: &[Point]) -> f64 {
        let mut s = 0.0;
        for i in 1..v.len() - 1 {
            let (a, b, c) = (v[0], v[i], v[i + 1]);
            s += 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y));
        }
        s.abs()
    }

    #[test]
    fn hexagon_area_matches_fan_oracle() {
        let hex = pts(&[(0., 0.), (2., 0.), (3., 1.), (2., 2.), (0., 2.), (-1., 1.)]);
        assert_eq!(fan_area(&hex), 6.0);
        assert_eq!(shoelace_area(&hex), 6.0);
        assert!(is_simple_polygon(&hex));
    }

    #[test]
    fn collinear_midpoints_add_no_area() {
        let sq = pts(&[(0., 0.), (0.5, 0.), (1., 0.), (1., 1.), (0., 1.), (0., 0.5)]);
        assert_eq!(shoelace_area(&sq), 1.0);
        assert!(is_simple_polygon(&sq));
    }

    #[test]
    fn reversal_keeps_area() {
        let mut hex = pts(&[(0., 0.), (2., 0.), (3., 1.), (2., 2.), (0., 2.), (-1., 1.)]);
        hex.reverse();
        assert_eq!(shoelace_area(&hex), 6.0);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bow = pts(&[(0., 0.), (2., 2.), (2., 0.), (0., 2.)]);
        assert!(!is_simple_polygon(&bow));
        let hex = pts(&[(0., 0.), (2., 0.), (0., 2.), (2., 2.), (3., 1.), (-1., 1.)]);
        assert!(!is_simple_polygon(&hex));
    }

    #[test]
    fn touching_non_adjacent_edges_are_not_simple() {
        // vertex 3 lies on edge 0-1
        let p = pts(&[(0., 0.), (4., 0.), (4., 2.), (2., 0.), (0., 2.)]);
        assert!(!is_simple_polygon(&p));
    }
}
