use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};

/// Triangle mesh with `N` vertices and `T` triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vector3<f64>>,
    trilist: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vector3<f64>>, trilist: Vec<[usize; 3]>) -> Result<Self> {
        validate_trilist(&trilist, vertices.len())?;
        Ok(Self { vertices, trilist })
    }

    /// Builds a mesh from a flat `[x0, y0, z0, x1, ...]` vector.
    pub fn from_flat(points: &[f64], trilist: Vec<[usize; 3]>) -> Result<Self> {
        if points.len() % 3 != 0 {
            return Err(Error::invalid(format!(
                "flat vertex vector length {} is not a multiple of 3",
                points.len()
            )));
        }
        let vertices = points
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        Self::new(vertices, trilist)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.trilist.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn trilist(&self) -> &[[usize; 3]] {
        &self.trilist
    }

    pub fn to_flat(&self) -> DVector<f64> {
        DVector::from_iterator(
            3 * self.vertices.len(),
            self.vertices.iter().flat_map(|v| [v.x, v.y, v.z]),
        )
    }

    pub fn with_vertices(&self, vertices: Vec<Vector3<f64>>) -> Result<Self> {
        crate::error::check_len("mesh vertices", self.vertices.len(), vertices.len())?;
        Ok(Self {
            vertices,
            trilist: self.trilist.clone(),
        })
    }

    /// Area-weighted vertex normals (outward for counter-clockwise winding).
    pub fn vertex_normals(&self) -> Vec<Vector3<f64>> {
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for tri in &self.trilist {
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            let n = (b - a).cross(&(c - a));
            for &i in tri {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }

    /// Vertices lying on an open boundary edge (an edge used by exactly one triangle).
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut edges = std::collections::HashMap::new();
        for tri in &self.trilist {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
            }
        }
        let mut boundary = vec![false; self.vertices.len()];
        for ((a, b), count) in edges {
            if count == 1 {
                boundary[a] = true;
                boundary[b] = true;
            }
        }
        boundary
    }

    /// One-ring vertex adjacency.
    pub fn vertex_neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for tri in &self.trilist {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut inc: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.trilist.iter().enumerate() {
            for &i in tri {
                inc[i].push(t);
            }
        }
        inc
    }
}

pub(crate) fn validate_trilist(trilist: &[[usize; 3]], n_vertices: usize) -> Result<()> {
    for (t, tri) in trilist.iter().enumerate() {
        if let Some(&bad) = tri.iter().find(|&&i| i >= n_vertices) {
            return Err(Error::invalid(format!(
                "triangle {t} references vertex {bad}, mesh has {n_vertices} vertices"
            )));
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(Error::invalid(format!(
                "triangle {t} repeats a vertex index: {tri:?}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad() -> TriMesh {
        TriMesh::new(
            vec![
                Vector3::new(0.0, 0.0, 0.0),
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(1.0, 1.0, 0.0),
                Vector3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriMesh::new(vec![Vector3::zeros(); 2], vec![[0, 1, 2]]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_repeated_index() {
        let err = TriMesh::new(vec![Vector3::zeros(); 3], vec![[0, 1, 1]]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn flat_round_trip() {
        let m = quad();
        let flat = m.to_flat();
        let back = TriMesh::from_flat(flat.as_slice(), m.trilist().to_vec()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn quad_topology() {
        let m = quad();
        assert!(m.boundary_vertices().iter().all(|&b| b));
        assert_eq!(m.vertex_neighbours()[0], vec![1, 2, 3]);
        let n = m.vertex_normals();
        assert!((n[0] - Vector3::z()).norm() < 1e-12);
    }
}
