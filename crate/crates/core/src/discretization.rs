//! Fine-scale discretization of a model problem: element matrices, the global
//! operator, the load vector and Dirichlet data on a given mesh.

use rayon::prelude::*;

use crate::assembly::{
    assemble_load, constrain_dirichlet, DiffusionForm, HelmholtzForm, LoadData, LocalMatrix, SesquilinearForm,
};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::problems::{ProblemKind, ProblemSpec, Source};
use crate::scalar::{Complex64, Scalar};
use crate::solve::LuFactor;
use crate::sparse::SparseMatrix;

/// Which slot of the form the corrector occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// `a(φ, w) = −a_T(λ_z, w)`; used for diffusion.
    Primal,
    /// `a(w, φ) = −a_T(w, λ_z)`; used for Helmholtz.
    Adjoint,
}

impl Orientation {
    pub fn for_problem(p: &ProblemSpec) -> Self {
        match p.kind {
            ProblemKind::Diffusion => Orientation::Primal,
            ProblemKind::Helmholtz { .. } => Orientation::Adjoint,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Orientation::Primal => "primal",
            Orientation::Adjoint => "adjoint",
        }
    }
}

/// Residual target for the fine reference solve. Fine 1D systems at h = 2^-12
/// have condition numbers near 1e7, so backward-stable LU lands just above
/// 1e-10 relative residual there.
pub const REFERENCE_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct FineSystem<S> {
    pub element_matrices: Vec<LocalMatrix<S>>,
    pub operator: SparseMatrix<S>,
    pub load: Vec<S>,
    /// Sorted Dirichlet nodes.
    pub dirichlet_nodes: Vec<usize>,
    pub orientation: Orientation,
}

fn convert<S: Scalar, T: Scalar>(m: LocalMatrix<T>) -> LocalMatrix<S> {
    let mut out = LocalMatrix::zeros(m.n);
    for i in 0..m.n {
        for j in 0..m.n {
            out.data[i][j] = S::from_parts(m.data[i][j].re_part(), m.data[i][j].im_part());
        }
    }
    out
}

impl<S: Scalar> FineSystem<S> {
    pub fn build(problem: &ProblemSpec, mesh: &Mesh) -> Result<Self> {
        if S::FIELD != problem.field() {
            return Err(Error::InvalidProblem(format!(
                "problem `{}` needs {:?} scalars",
                problem.name,
                problem.field()
            )));
        }
        let ne = mesh.num_elements();
        let element_matrices: Vec<LocalMatrix<S>> = match problem.kind {
            ProblemKind::Diffusion => {
                let form = DiffusionForm::new(mesh, problem.coefficient_field(mesh))?;
                (0..ne).into_par_iter().map(|e| convert(form.element_matrix(e))).collect()
            }
            ProblemKind::Helmholtz { kappa } => {
                let form = HelmholtzForm::new(mesh, kappa)?;
                (0..ne)
                    .into_par_iter()
                    .map(|e| convert::<S, Complex64>(form.element_matrix(e)))
                    .collect()
            }
        };
        let mut trip = Vec::with_capacity(ne * 9);
        for (e, m) in element_matrices.iter().enumerate() {
            let nodes = mesh.element(e);
            for (i, &gi) in nodes.iter().enumerate() {
                for (j, &gj) in nodes.iter().enumerate() {
                    trip.push((gi, gj, m.data[i][j]));
                }
            }
        }
        let operator = SparseMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &trip);
        let Source::Constant(f) = problem.source;
        let load = assemble_load(mesh, &LoadData::Constant(S::of_real(f)))?;
        Ok(Self {
            element_matrices,
            operator,
            load,
            dirichlet_nodes: mesh.dirichlet_nodes(),
            orientation: Orientation::for_problem(problem),
        })
    }

    /// Nodal values of the Dirichlet data at this mesh's Dirichlet nodes.
    pub fn dirichlet_values(&self, problem: &ProblemSpec, mesh: &Mesh) -> Result<Vec<(usize, S)>> {
        self.dirichlet_nodes
            .iter()
            .map(|&v| Ok((v, problem.dirichlet.value::<S>(mesh.point(v))?)))
            .collect()
    }

    /// Galerkin solution on this mesh with nodal Dirichlet data, by sparse LU.
    pub fn galerkin_solution(&self, problem: &ProblemSpec, mesh: &Mesh) -> Result<Vec<S>> {
        let values = self.dirichlet_values(problem, mesh)?;
        let sys = constrain_dirichlet(&self.operator, &self.load, &self.dirichlet_nodes, &values)?;
        if sys.matrix.nrows() == 0 {
            return Ok(sys.lifting.expand(&[]));
        }
        let x = if crate::scalar::norm2(&sys.rhs) == 0.0 {
            vec![S::ZERO; sys.rhs.len()]
        } else {
            LuFactor::new(&sys.matrix)?.solve_refined(&sys.matrix, &sys.rhs, REFERENCE_TOL)?
        };
        Ok(sys.lifting.expand(&x))
    }
}
