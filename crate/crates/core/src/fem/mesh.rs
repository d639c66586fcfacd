use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform triangulation of a rectangle.
///
/// Nodes are numbered lexicographically with `x` fastest. Every cell is cut
/// along its lower-left to upper-right diagonal into two triangles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuredMesh {
    ax: f64,
    bx: f64,
    ay: f64,
    by: f64,
    nx: usize,
    ny: usize,
}

impl StructuredMesh {
    /// Mesh of `[ax, bx] x [ay, by]` with `nx x ny` nodes.
    pub fn new(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least 2 nodes per side, got {nx}x{ny}"
            )));
        }
        if !(x.1 > x.0) || !(y.1 > y.0) || ![x.0, x.1, y.0, y.1].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "degenerate domain [{}, {}] x [{}, {}]",
                x.0, x.1, y.0, y.1
            )));
        }
        Ok(Self {
            ax: x.0,
            bx: x.1,
            ay: y.0,
            by: y.1,
            nx,
            ny,
        })
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new((0.0, 1.0), (0.0, 1.0), n, n)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.ax, self.bx)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.ay, self.by)
    }

    pub fn hx(&self) -> f64 {
        (self.bx - self.ax) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.by - self.ay) / (self.ny - 1) as f64
    }

    /// Mesh parameter fed to the sinc rule: the `x` spacing.
    pub fn h(&self) -> f64 {
        self.hx()
    }

    pub fn area(&self) -> f64 {
        (self.bx - self.ax) * (self.by - self.ay)
    }

    pub fn num_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn num_triangles(&self) -> usize {
        2 * (self.nx - 1) * (self.ny - 1)
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k % self.nx, k / self.nx);
        [
            self.ax + i as f64 * self.hx(),
            self.ay + j as f64 * self.hy(),
        ]
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = (k % self.nx, k / self.nx);
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Vertex indices of triangle `t`, counter-clockwise.
    pub fn triangle(&self, t: usize) -> [usize; 3] {
        let cell = t / 2;
        let (i, j) = (cell % (self.nx - 1), cell / (self.nx - 1));
        let n00 = self.node_index(i, j);
        let n10 = n00 + 1;
        let n01 = n00 + self.nx;
        let n11 = n01 + 1;
        if t % 2 == 0 {
            [n00, n10, n11]
        } else {
            [n00, n11, n01]
        }
    }

    pub fn triangles(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        (0..self.num_triangles()).map(|t| self.triangle(t))
    }

    pub fn triangle_area(&self) -> f64 {
        0.5 * self.hx() * self.hy()
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let v = self.triangle(t).map(|k| self.node(k));
        [
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    HomogeneousNeumann,
    HomogeneousDirichlet,
}

/// Node to unknown numbering. Dirichlet problems drop boundary nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    node_to_dof: Vec<Option<usize>>,
    dof_to_node: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &StructuredMesh, bc: BoundaryCondition) -> Self {
        let mut node_to_dof = vec![None; mesh.num_nodes()];
        let mut dof_to_node = Vec::new();
        for (k, slot) in node_to_dof.iter_mut().enumerate() {
            if bc == BoundaryCondition::HomogeneousDirichlet && mesh.is_boundary(k) {
                continue;
            }
            *slot = Some(dof_to_node.len());
            dof_to_node.push(k);
        }
        Self {
            node_to_dof,
            dof_to_node,
        }
    }

    pub fn len(&self) -> usize {
        self.dof_to_node.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_node.is_empty()
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    pub fn node(&self, dof: usize) -> usize {
        self.dof_to_node[dof]
    }

    /// Expands a dof vector to all mesh nodes, zero on eliminated ones.
    pub fn to_nodes(&self, x: &[f64]) -> Vec<f64> {
        self.node_to_dof
            .iter()
            .map(|d| d.map_or(0.0, |d| x[d]))
            .collect()
    }
}
