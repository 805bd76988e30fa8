//! Structured triangular meshes; each element contributes its centroid as
//! an expansion point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    #[serde(skip)]
    pub centroids: Vec<[f64; 2]>,
    #[serde(skip)]
    pub hmax: f64,
}

#[derive(Deserialize)]
struct MeshJson {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl TriMesh {
    /// Validates the connectivity and derives centroids and `hmax`.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self {
            vertices,
            triangles,
            centroids: Vec::new(),
            hmax: 0.0,
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= mesh.vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
        }
        for t in 0..mesh.triangles.len() {
            if mesh.area(t) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {t} is degenerate or inverted")));
            }
        }
        mesh.centroids = (0..mesh.triangles.len()).map(|t| mesh.centroid(t)).collect();
        mesh.hmax = (0..mesh.triangles.len()).map(|t| mesh.diameter(t)).fold(0.0, f64::max);
        Ok(mesh)
    }

    /// `n × n` grid on the unit square, `2n²` triangles.
    pub fn structured_square(n: usize) -> Result<Self> {
        Self::structured_rect([[0.0, 1.0], [0.0, 1.0]], n, n)
    }

    /// Grid over `[x0, x1] × [y0, y1]`. Every cell is cut along its
    /// lower-left to upper-right diagonal.
    pub fn structured_rect(bounds: [[f64; 2]; 2], nx: usize, ny: usize) -> Result<Self> {
        let [[x0, x1], [y0, y1]] = bounds;
        if nx < 1 || ny < 1 {
            return Err(Error::InvalidMesh("need at least one cell per direction".into()));
        }
        if !(x1 > x0 && y1 > y0) || !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(Error::InvalidMesh(format!("degenerate bounds {bounds:?}")));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MeshJson = serde_json::from_str(text)?;
        Self::new(m.vertices, m.triangles)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    /// Signed area, positive for counter-clockwise triangles.
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Longest edge.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        dist(a, b).max(dist(b, c)).max(dist(a, c))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.len()).map(|t| self.area(t)).sum()
    }

    /// Elements whose centroid lies within `reach` of the vertical line `x = seam`.
    pub fn seam_adjacent(&self, seam: f64, reach: f64) -> Vec<bool> {
        self.centroids.iter().map(|c| (c[0] - seam).abs() < reach).collect()
    }

    /// `true` for elements with centroid at or left of `x = seam`.
    pub fn left_of(&self, seam: f64) -> Vec<bool> {
        self.centroids.iter().map(|c| c[0] <= seam).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cell() {
        let m = TriMesh::structured_square(1).unwrap();
        assert_eq!(m.len(), 2);
        let want = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
        for (c, w) in m.centroids.iter().zip(want) {
            assert!(dist(*c, w) < 1e-15);
        }
        assert!((m.hmax - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn square_twenty() {
        let m = TriMesh::structured_square(20).unwrap();
        assert_eq!(m.len(), 800);
        assert!((m.total_area() - 1.0).abs() < 1e-13);
        let mut c = m.centroids.clone();
        c.sort_by(|a, b| a.partial_cmp(b).unwrap());
        c.dedup();
        assert_eq!(c.len(), 800);
    }

    #[test]
    fn rect_stand_in() {
        let m = TriMesh::structured_rect([[0.0, 300.0], [-100.0, 0.0]], 10, 10).unwrap();
        assert_eq!(m.len(), 200);
        assert!((m.total_area() - 30000.0).abs() < 1e-13 * 30000.0);
        assert!(m
            .centroids
            .iter()
            .all(|c| c[0] > 0.0 && c[0] < 300.0 && c[1] > -100.0 && c[1] < 0.0));
        let adj = m.seam_adjacent(150.0, m.hmax / 2.0);
        let n_adj = adj.iter().filter(|&&a| a).count();
        assert!(n_adj > 0 && n_adj < m.len());
        let left = m.left_of(150.0).iter().filter(|&&l| l).count();
        assert_eq!(left, 100);
    }

    #[test]
    fn invalid_inputs() {
        assert!(TriMesh::structured_square(0).is_err());
        assert!(TriMesh::structured_rect([[1.0, 1.0], [0.0, 1.0]], 2, 2).is_err());
        assert!(TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0]], vec![[0, 1, 2]]).is_err());
        assert!(TriMesh::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = TriMesh::structured_square(3).unwrap();
        let back = TriMesh::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(m.to_json().unwrap().starts_with("{\"vertices\""));
    }
}
