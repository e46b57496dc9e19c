//! Incremental 3D convex hull (quickhull) returning the hull's vertex set.

use std::collections::{HashMap, VecDeque};

use nalgebra::Vector3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HullError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("points are coplanar or collinear")]
    Degenerate,
}

struct Face {
    v: [usize; 3],
    normal: Vector3<f64>,
    offset: f64,
    outside: Vec<usize>,
    alive: bool,
}

impl Face {
    fn new(v: [usize; 3], pts: &[Vector3<f64>]) -> Self {
        let n = (pts[v[1]] - pts[v[0]]).cross(&(pts[v[2]] - pts[v[0]]));
        let len = n.norm();
        let normal = if len > 0.0 { n / len } else { Vector3::zeros() };
        Face {
            v,
            normal,
            offset: normal.dot(&pts[v[0]]),
            outside: Vec::new(),
            alive: true,
        }
    }

    fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

struct Hull<'a> {
    pts: &'a [Vector3<f64>],
    faces: Vec<Face>,
    edges: HashMap<(usize, usize), usize>,
    eps: f64,
}

impl<'a> Hull<'a> {
    fn add_face(&mut self, v: [usize; 3]) -> usize {
        let id = self.faces.len();
        self.faces.push(Face::new(v, self.pts));
        for k in 0..3 {
            self.edges.insert((v[k], v[(k + 1) % 3]), id);
        }
        id
    }

    fn kill_face(&mut self, id: usize) {
        let v = self.faces[id].v;
        for k in 0..3 {
            let key = (v[k], v[(k + 1) % 3]);
            if self.edges.get(&key) == Some(&id) {
                self.edges.remove(&key);
            }
        }
        self.faces[id].alive = false;
    }

    /// Puts each point in the outside set of the first face that sees it.
    fn assign(&mut self, candidates: impl IntoIterator<Item = usize>, faces: &[usize]) {
        for p in candidates {
            let q = &self.pts[p];
            if let Some(&f) = faces.iter().find(|&&f| self.faces[f].distance(q) > self.eps) {
                self.faces[f].outside.push(p);
            }
        }
    }

    fn expand(&mut self, face: usize) {
        let eye = {
            let f = &self.faces[face];
            *f.outside
                .iter()
                .max_by(|&&a, &&b| {
                    f.distance(&self.pts[a])
                        .total_cmp(&f.distance(&self.pts[b]))
                        .then(b.cmp(&a))
                })
                .expect("face has outside points")
        };
        let eye_p = self.pts[eye];
        // faces seen from the eye, grown from the starting face
        let mut visible = vec![face];
        let mut seen: HashMap<usize, bool> = HashMap::from([(face, true)]);
        let mut queue = VecDeque::from([face]);
        let mut horizon = Vec::new();
        while let Some(f) = queue.pop_front() {
            let v = self.faces[f].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                let Some(&g) = self.edges.get(&(b, a)) else {
                    continue;
                };
                let vis = *seen
                    .entry(g)
                    .or_insert_with(|| self.faces[g].distance(&eye_p) > self.eps);
                if vis {
                    if !visible.contains(&g) {
                        visible.push(g);
                        queue.push_back(g);
                    }
                } else {
                    horizon.push((a, b));
                }
            }
        }
        let mut orphans = Vec::new();
        for &f in &visible {
            orphans.append(&mut self.faces[f].outside);
            self.kill_face(f);
        }
        let new_faces: Vec<usize> = horizon.iter().map(|&(a, b)| self.add_face([a, b, eye])).collect();
        self.assign(orphans.into_iter().filter(|&p| p != eye), &new_faces);
    }
}

/// Indices of the points that are vertices of the convex hull, ascending.
pub fn convex_hull_vertices(pts: &[Vector3<f64>]) -> Result<Vec<usize>, HullError> {
    if pts.len() < 4 {
        return Err(HullError::TooFewPoints(pts.len()));
    }
    let extent: f64 = (0..3)
        .map(|k| pts.iter().map(|p| p[k].abs()).fold(0.0, f64::max))
        .sum();
    let eps = 3.0 * f64::EPSILON * extent.max(f64::MIN_POSITIVE);

    // initial tetrahedron from extreme points
    let mut extremes = Vec::new();
    for k in 0..3 {
        let lo = (0..pts.len()).min_by(|&a, &b| pts[a][k].total_cmp(&pts[b][k])).expect("non-empty");
        let hi = (0..pts.len()).max_by(|&a, &b| pts[a][k].total_cmp(&pts[b][k])).expect("non-empty");
        extremes.push(lo);
        extremes.push(hi);
    }
    let mut best = (0.0, 0, 0);
    for &a in &extremes {
        for &b in &extremes {
            let d = (pts[a] - pts[b]).norm_squared();
            if d > best.0 {
                best = (d, a, b);
            }
        }
    }
    let (_, i0, i1) = best;
    if best.0 <= eps * eps {
        return Err(HullError::Degenerate);
    }
    let axis = (pts[i1] - pts[i0]).normalize();
    let i2 = (0..pts.len())
        .max_by(|&a, &b| {
            let da = (pts[a] - pts[i0]).cross(&axis).norm_squared();
            let db = (pts[b] - pts[i0]).cross(&axis).norm_squared();
            da.total_cmp(&db)
        })
        .expect("non-empty");
    if (pts[i2] - pts[i0]).cross(&axis).norm() <= eps {
        return Err(HullError::Degenerate);
    }
    let plane_n = (pts[i1] - pts[i0]).cross(&(pts[i2] - pts[i0])).normalize();
    let i3 = (0..pts.len())
        .max_by(|&a, &b| {
            (pts[a] - pts[i0]).dot(&plane_n).abs().total_cmp(&(pts[b] - pts[i0]).dot(&plane_n).abs())
        })
        .expect("non-empty");
    if (pts[i3] - pts[i0]).dot(&plane_n).abs() <= eps {
        return Err(HullError::Degenerate);
    }

    let mut hull = Hull {
        pts,
        faces: Vec::new(),
        edges: HashMap::new(),
        eps,
    };
    // orient the base so the fourth point is behind it
    let (a, b, c) = if (pts[i3] - pts[i0]).dot(&plane_n) > 0.0 {
        (i0, i2, i1)
    } else {
        (i0, i1, i2)
    };
    let initial = [
        hull.add_face([a, b, c]),
        hull.add_face([a, i3, b]),
        hull.add_face([b, i3, c]),
        hull.add_face([c, i3, a]),
    ];
    let simplex = [i0, i1, i2, i3];
    hull.assign((0..pts.len()).filter(|p| !simplex.contains(p)), &initial);

    let mut stack: Vec<usize> = initial.to_vec();
    while let Some(f) = stack.pop() {
        if !hull.faces[f].alive || hull.faces[f].outside.is_empty() {
            continue;
        }
        let before = hull.faces.len();
        hull.expand(f);
        stack.extend(before..hull.faces.len());
    }

    let mut is_vertex = vec![false; pts.len()];
    for f in hull.faces.iter().filter(|f| f.alive) {
        for &v in &f.v {
            is_vertex[v] = true;
        }
    }
    Ok((0..pts.len()).filter(|&i| is_vertex[i]).collect())
}
