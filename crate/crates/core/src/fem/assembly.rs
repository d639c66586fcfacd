//! Exact P1 element integrals on the structured mesh.

use serde::{Deserialize, Serialize};

use super::mesh::{BoundaryCondition, DofMap, StructuredMesh};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{CsrMatrix, Vec64};

/// Symmetric 2x2 diffusion tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Tensor2 {
    pub const IDENTITY: Tensor2 = Tensor2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };
    pub const ZERO: Tensor2 = Tensor2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };

    pub fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn scalar(s: f64) -> Self {
        Self::new(s, 0.0, s)
    }

    /// From a full matrix `[[a, b], [c, d]]`; errors unless `b == c` to rounding.
    pub fn from_matrix(m: [[f64; 2]; 2]) -> Result<Self> {
        let scale = m.iter().flatten().fold(0.0_f64, |s, v| s.max(v.abs()));
        if (m[0][1] - m[1][0]).abs() > 1e-10 * scale {
            return Err(Error::NotSymmetric(format!(
                "diffusion tensor off-diagonals {} and {}",
                m[0][1], m[1][0]
            )));
        }
        Ok(Self::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]))
    }

    fn apply(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.xx * g[0] + self.xy * g[1],
            self.xy * g[0] + self.yy * g[1],
        ]
    }
}

/// Diffusion coefficient: one tensor everywhere or one per triangle.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Constant(Tensor2),
    PerElement(Vec<Tensor2>),
}

impl Coefficient {
    /// `I` on triangles whose centroid satisfies `inside`, zero elsewhere.
    pub fn indicator(mesh: &StructuredMesh, inside: impl Fn([f64; 2]) -> bool) -> Self {
        Coefficient::PerElement(
            (0..mesh.num_triangles())
                .map(|t| {
                    if inside(mesh.centroid(t)) {
                        Tensor2::IDENTITY
                    } else {
                        Tensor2::ZERO
                    }
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Constant(f64),
    /// Nodal interpolant given on the unknowns.
    NodeValues(Vec64),
}

/// Gradients of the three barycentric coordinates of triangle `t`.
fn gradients(mesh: &StructuredMesh, tri: [usize; 3]) -> [[f64; 2]; 3] {
    let [p0, p1, p2] = tri.map(|k| mesh.node(k));
    let two_a = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    [
        [(p1[1] - p2[1]) / two_a, (p2[0] - p1[0]) / two_a],
        [(p2[1] - p0[1]) / two_a, (p0[0] - p2[0]) / two_a],
        [(p0[1] - p1[1]) / two_a, (p1[0] - p0[0]) / two_a],
    ]
}

fn local_mass(area: f64) -> [[f64; 3]; 3] {
    let d = area / 6.0;
    let o = area / 12.0;
    [[d, o, o], [o, d, o], [o, o, d]]
}

fn scatter(
    dofs: &DofMap,
    tri: [usize; 3],
    local: &[[f64; 3]; 3],
    out: &mut Vec<(usize, usize, f64)>,
) {
    for a in 0..3 {
        let Some(i) = dofs.dof(tri[a]) else { continue };
        for b in 0..3 {
            if let Some(j) = dofs.dof(tri[b]) {
                if local[a][b] != 0.0 {
                    out.push((i, j, local[a][b]));
                }
            }
        }
    }
}

pub fn assemble_mass(mesh: &StructuredMesh, bc: BoundaryCondition) -> CsrMatrix {
    let dofs = DofMap::new(mesh, bc);
    let local = local_mass(mesh.triangle_area());
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
    for tri in mesh.triangles() {
        scatter(&dofs, tri, &local, &mut trip);
    }
    CsrMatrix::from_triplets(dofs.len(), dofs.len(), &trip)
        .expect("mass triplets lie inside the dof range")
}

/// `[A]_ij = ∫ Θ∇φ_j · ∇φ_i`.
pub fn assemble_stiffness(
    mesh: &StructuredMesh,
    bc: BoundaryCondition,
    coefficient: &Coefficient,
) -> Result<CsrMatrix> {
    if let Coefficient::PerElement(v) = coefficient {
        check_dim("assemble_stiffness", mesh.num_triangles(), v.len())?;
    }
    let dofs = DofMap::new(mesh, bc);
    let area = mesh.triangle_area();
    let mut trip = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().enumerate() {
        let theta = match coefficient {
            Coefficient::Constant(c) => *c,
            Coefficient::PerElement(v) => v[t],
        };
        if theta == Tensor2::ZERO {
            continue;
        }
        let g = gradients(mesh, tri);
        let mut local = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                let tg = theta.apply(g[b]);
                local[a][b] = area * (tg[0] * g[a][0] + tg[1] * g[a][1]);
            }
        }
        scatter(&dofs, tri, &local, &mut trip);
    }
    CsrMatrix::from_triplets(dofs.len(), dofs.len(), &trip)
}

/// `[g]_i = ∫ b φ_i` with `b` constant or the P1 interpolant of nodal values.
pub fn assemble_load(
    mesh: &StructuredMesh,
    bc: BoundaryCondition,
    source: &Source,
) -> Result<Vec64> {
    let dofs = DofMap::new(mesh, bc);
    let area = mesh.triangle_area();
    let mut g = vec![0.0; dofs.len()];
    match source {
        Source::Constant(c) => {
            let share = c * area / 3.0;
            for tri in mesh.triangles() {
                for k in tri {
                    if let Some(i) = dofs.dof(k) {
                        g[i] += share;
                    }
                }
            }
        }
        Source::NodeValues(f) => {
            check_dim("assemble_load", dofs.len(), f.len())?;
            let local = local_mass(area);
            for tri in mesh.triangles() {
                let fv = tri.map(|k| dofs.dof(k).map_or(0.0, |d| f[d]));
                for a in 0..3 {
                    if let Some(i) = dofs.dof(tri[a]) {
                        g[i] += (0..3).map(|b| local[a][b] * fv[b]).sum::<f64>();
                    }
                }
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sym_generalized_eig, DenseMatrix};
    use std::f64::consts::PI;

    const NEU: BoundaryCondition = BoundaryCondition::HomogeneousNeumann;
    const DIR: BoundaryCondition = BoundaryCondition::HomogeneousDirichlet;

    #[test]
    fn mass_total_is_area() {
        for n in [2, 3, 9, 17] {
            let m = StructuredMesh::unit_square(n).unwrap();
            let mass = assemble_mass(&m, NEU);
            let one = vec![1.0; mass.nrows()];
            let total: f64 = mass.spmv(&one).unwrap().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_cell_mass_by_hand() {
        // Triangles (0,1,3) and (0,3,2), each of area 1/2.
        let m = StructuredMesh::unit_square(2).unwrap();
        let mass = assemble_mass(&m, NEU).to_dense();
        let a = 0.5 / 12.0;
        let want = [
            [4.0 * a, a, a, 2.0 * a],
            [a, 2.0 * a, 0.0, a],
            [a, 0.0, 2.0 * a, a],
            [2.0 * a, a, a, 4.0 * a],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert!((mass[(i, j)] - want[i][j]).abs() < 1e-16, "({i},{j})");
            }
        }
    }

    #[test]
    fn mass_is_spd() {
        let m = StructuredMesh::unit_square(5).unwrap();
        let mass = assemble_mass(&m, NEU).to_dense();
        let e = sym_generalized_eig(&mass, &DenseMatrix::identity(25)).unwrap();
        assert!(e.values[0] > 0.0);
    }

    #[test]
    fn neumann_stiffness_kills_constants() {
        let m = StructuredMesh::new((0.0, 1.0), (0.0, 3.0), 7, 11).unwrap();
        let a = assemble_stiffness(&m, NEU, &Coefficient::Constant(Tensor2::new(2.0, 0.3, 1.0)))
            .unwrap();
        let r = a.spmv(&vec![1.0; a.nrows()]).unwrap();
        assert!(r.iter().all(|v| v.abs() <= 1e-13 * a.norm_inf()));
        assert!(a.is_symmetric(1e-14));
    }

    #[test]
    fn dirichlet_laplace_eigenvalue() {
        let m = StructuredMesh::unit_square(33).unwrap();
        let a = assemble_stiffness(&m, DIR, &Coefficient::Constant(Tensor2::IDENTITY)).unwrap();
        let mass = assemble_mass(&m, DIR);
        assert_eq!(a.nrows(), 31 * 31);
        let e = sym_generalized_eig(&a.to_dense(), &mass.to_dense()).unwrap();
        let lam = e.values[0];
        assert!((lam / (2.0 * PI * PI) - 1.0).abs() < 0.02, "{lam}");
    }

    #[test]
    fn indicator_field_matches_element_loop() {
        let m = StructuredMesh::new((-1.0, 1.0), (-1.0, 1.0), 9, 9).unwrap();
        let disc = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1] < 0.25;
        let a = assemble_stiffness(&m, DIR, &Coefficient::indicator(&m, disc)).unwrap();
        // Brute force: dense accumulation over flagged triangles only.
        let dofs = DofMap::new(&m, DIR);
        let mut want = DenseMatrix::zeros(dofs.len(), dofs.len());
        for t in 0..m.num_triangles() {
            if !disc(m.centroid(t)) {
                continue;
            }
            let tri = m.triangle(t);
            let g = gradients(&m, tri);
            for a_ in 0..3 {
                for b in 0..3 {
                    if let (Some(i), Some(j)) = (dofs.dof(tri[a_]), dofs.dof(tri[b])) {
                        want[(i, j)] +=
                            m.triangle_area() * (g[a_][0] * g[b][0] + g[a_][1] * g[b][1]);
                    }
                }
            }
        }
        assert!(a.to_dense().sub(&want).unwrap().max_abs() < 1e-14);
        assert!(a.nnz() > 0);
    }

    #[test]
    fn asymmetric_tensor_rejected() {
        assert!(Tensor2::from_matrix([[1.0, 0.5], [0.2, 1.0]]).is_err());
        assert_eq!(
            Tensor2::from_matrix([[1.0, 0.5], [0.5, 2.0]]).unwrap(),
            Tensor2::new(1.0, 0.5, 2.0)
        );
    }

    #[test]
    fn load_vectors() {
        let m = StructuredMesh::unit_square(9).unwrap();
        let one = assemble_load(&m, NEU, &Source::Constant(1.0)).unwrap();
        assert!((one.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let zero = assemble_load(&m, NEU, &Source::Constant(0.0)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        for bc in [NEU, DIR] {
            let mass = assemble_mass(&m, bc);
            let f: Vec<f64> = (0..mass.nrows()).map(|i| (i as f64 * 0.37).sin()).collect();
            let g = assemble_load(&m, bc, &Source::NodeValues(f.clone())).unwrap();
            let mf = mass.spmv(&f).unwrap();
            for (a, b) in g.iter().zip(&mf) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        assert!(assemble_load(&m, NEU, &Source::NodeValues(vec![1.0; 3])).is_err());
    }

    #[test]
    fn assembly_is_bit_reproducible() {
        let m = StructuredMesh::unit_square(12).unwrap();
        let c = Coefficient::Constant(Tensor2::new(1.3, -0.2, 0.7));
        assert_eq!(
            assemble_stiffness(&m, DIR, &c).unwrap(),
            assemble_stiffness(&m, DIR, &c).unwrap()
        );
    }
}
