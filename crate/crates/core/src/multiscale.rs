//! Coarse multiscale Petrov-Galerkin system and the standard Galerkin comparators.
//!
//! Trial functions are prolonged coarse hats `P λ_j`, test functions the
//! corrected `Λ_i = P λ_i + φ_i`. With the fine operator `K` (rows = test), the
//! coarse matrix is `M_ij = Λ_iᴴ K P λ_j`.

use rayon::prelude::*;

use crate::correctors::CorrectorSet;
use crate::discretization::FineSystem;
use crate::error::{Error, Result};
use crate::interpolation::QuasiInterpolator;
use crate::mesh::MeshHierarchy;
use crate::problems::ProblemSpec;
use crate::scalar::Scalar;
use crate::solve::{DenseLu, LuFactor};
use crate::sparse::{SparseMatrix, SparseVec};

/// Largest coarse dimension for which a failed solve is diagnosed with a dense
/// factorization.
const DENSE_DIAGNOSTIC_LIMIT: usize = 4000;

/// Dirichlet lifting on the coarse level: nodal values of the data at coarse
/// Dirichlet nodes, zero elsewhere, and its prolongation to the fine mesh.
#[derive(Clone, Debug)]
pub struct CoarseLifting<S> {
    pub coarse: Vec<S>,
    pub fine: Vec<S>,
}

impl<S: Scalar> CoarseLifting<S> {
    pub fn build(problem: &ProblemSpec, hier: &MeshHierarchy, prolongation: &SparseMatrix<f64>) -> Result<Self> {
        let mut coarse = vec![S::ZERO; hier.coarse.num_nodes()];
        for z in hier.coarse.dirichlet_nodes() {
            coarse[z] = problem.dirichlet.value(hier.coarse.point(z))?;
        }
        let fine = prolongation.apply(&coarse);
        Ok(Self { coarse, fine })
    }

    pub fn is_zero(&self) -> bool {
        self.coarse.iter().all(|v| *v == S::ZERO)
    }
}

#[derive(Clone, Debug)]
pub struct CoarseSystem<S> {
    /// Rows = test index, columns = trial index, both over free coarse nodes.
    pub matrix: SparseMatrix<S>,
    pub rhs: Vec<S>,
    /// Free coarse nodes in row/column order.
    pub free: Vec<usize>,
    /// Full coarse lifting vector added back after the solve.
    pub lifting: Vec<S>,
}

impl<S: Scalar> CoarseSystem<S> {
    /// Full coarse nodal vector from free-node values.
    pub fn expand(&self, x: &[S]) -> Vec<S> {
        let mut out = self.lifting.clone();
        for (&z, &v) in self.free.iter().zip(x) {
            out[z] += v;
        }
        out
    }
}

/// `K·P` restricted to the free coarse columns, over the operator's field.
fn operator_times_hats<S: Scalar>(
    sys: &FineSystem<S>,
    prolongation: &SparseMatrix<f64>,
    free: &[usize],
) -> Result<SparseMatrix<S>> {
    let p_free: SparseMatrix<S> = prolongation.transpose().submatrix(free, &(0..prolongation.nrows()).collect::<Vec<_>>()).transpose().cast();
    sys.operator.matmul(&p_free)
}

/// Residual load `F − K g` on the fine mesh.
fn lifted_load<S: Scalar>(sys: &FineSystem<S>, lifting: &CoarseLifting<S>) -> Vec<S> {
    if lifting.is_zero() {
        return sys.load.clone();
    }
    let kg = sys.operator.mul_vec(&lifting.fine);
    sys.load.iter().zip(&kg).map(|(f, k)| *f - *k).collect()
}

/// Rows `Λ_iᴴ B` for sparse test vectors against the columns of `b`.
fn test_rows<S: Scalar>(tests: &[&SparseVec<S>], b: &SparseMatrix<S>) -> Vec<Vec<(usize, S)>> {
    let n = b.ncols();
    tests
        .par_iter()
        .map(|lam| {
            let mut acc = vec![S::ZERO; n];
            let mut mark = vec![false; n];
            let mut touched = Vec::new();
            for (&k, &l) in lam.indices.iter().zip(&lam.values) {
                let lc = l.conjugate();
                let (cols, vals) = b.row(k);
                for (&j, &v) in cols.iter().zip(vals) {
                    if !mark[j] {
                        mark[j] = true;
                        touched.push(j);
                    }
                    acc[j] += lc * v;
                }
            }
            touched.sort_unstable();
            touched.into_iter().map(|j| (j, acc[j])).collect()
        })
        .collect()
}

/// Assembles `M_ij = a(P λ_j, Λ_i)` and `b_i = (f, Λ_i) − a(g, Λ_i)`.
pub fn assemble_coarse<S: Scalar>(
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    interp: &QuasiInterpolator,
    prolongation: &SparseMatrix<f64>,
    correctors: &CorrectorSet<S>,
    lifting: &CoarseLifting<S>,
) -> Result<CoarseSystem<S>> {
    if correctors.fine_level != hier.fine.level() || correctors.coarse_level != hier.coarse.level() {
        return Err(Error::DimensionMismatch("correctors belong to another hierarchy".into()));
    }
    let free = interp.free_coarse().to_vec();
    let pt = prolongation.transpose();
    let tests: Vec<SparseVec<S>> = free
        .par_iter()
        .map(|&z| correctors.test_basis(z, &pt))
        .collect::<Result<_>>()?;
    let refs: Vec<&SparseVec<S>> = tests.iter().collect();
    let b = operator_times_hats(sys, prolongation, &free)?;
    let matrix = SparseMatrix::from_rows(free.len(), test_rows(&refs, &b));
    let load = lifted_load(sys, lifting);
    let rhs = tests
        .iter()
        .map(|lam| lam.indices.iter().zip(&lam.values).map(|(&k, l)| l.conjugate() * load[k]).sum())
        .collect();
    Ok(CoarseSystem {
        matrix,
        rhs,
        free,
        lifting: lifting.coarse.clone(),
    })
}

/// Galerkin system `Pᵀ K P` with load `Pᵀ (F − K g)`: standard P1 FEM on the
/// coarse mesh with exactly integrated fine-scale data.
pub fn assemble_coarse_galerkin<S: Scalar>(
    sys: &FineSystem<S>,
    interp: &QuasiInterpolator,
    prolongation: &SparseMatrix<f64>,
    lifting: &CoarseLifting<S>,
) -> Result<CoarseSystem<S>> {
    let free = interp.free_coarse().to_vec();
    let b = operator_times_hats(sys, prolongation, &free)?;
    let pt = prolongation.transpose();
    let hats: Vec<SparseVec<S>> = free
        .iter()
        .map(|&z| {
            let (rows, vals) = pt.row(z);
            SparseVec {
                len: prolongation.nrows(),
                indices: rows.to_vec(),
                values: vals.iter().map(|&v| S::of_real(v)).collect(),
            }
        })
        .collect();
    let refs: Vec<&SparseVec<S>> = hats.iter().collect();
    let matrix = SparseMatrix::from_rows(free.len(), test_rows(&refs, &b));
    let load = lifted_load(sys, lifting);
    let rhs = hats
        .iter()
        .map(|h| h.indices.iter().zip(&h.values).map(|(&k, l)| l.conjugate() * load[k]).sum())
        .collect();
    Ok(CoarseSystem {
        matrix,
        rhs,
        free,
        lifting: lifting.coarse.clone(),
    })
}

/// Solves the coarse system by sparse LU to relative residual 1e−12 and returns
/// the full coarse nodal vector (lifting included). On failure the error
/// reports the smallest pivot of a dense factorization.
pub fn solve_coarse<S: Scalar>(cs: &CoarseSystem<S>) -> Result<Vec<S>> {
    let n = cs.free.len();
    if n == 0 {
        return Ok(cs.lifting.clone());
    }
    if crate::scalar::norm2(&cs.rhs) == 0.0 {
        return Ok(cs.expand(&vec![S::ZERO; n]));
    }
    let attempt = LuFactor::new(&cs.matrix).and_then(|lu| lu.solve_refined(&cs.matrix, &cs.rhs, 1e-12));
    match attempt {
        Ok(x) => Ok(cs.expand(&x)),
        Err(e) => {
            let pivot = if n <= DENSE_DIAGNOSTIC_LIMIT {
                format!("smallest pivot {:e}", DenseLu::new(&cs.matrix.to_dense()).min_pivot())
            } else {
                "pivot diagnostics skipped for large systems".to_string()
            };
            Err(Error::Singular(format!("coarse system ({n} unknowns): {e}; {pivot}")))
        }
    }
}

/// Standard Galerkin solution on a single mesh with nodal Dirichlet data.
pub fn standard_fem<S: Scalar>(problem: &ProblemSpec, mesh: &crate::mesh::Mesh) -> Result<Vec<S>> {
    FineSystem::<S>::build(problem, mesh)?.galerkin_solution(problem, mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::prolongation;
    use crate::correctors::{compute_correctors, CorrectorOptions};
    use crate::mesh::{BoundaryTag, DomainSpec};
    use crate::problems::{helmholtz_1d, random_checkerboard, Coefficient, DirichletData, ProblemKind, Source};
    use crate::scalar::Complex64;

    fn poisson_1d(f: f64) -> ProblemSpec {
        ProblemSpec::new(
            "poisson1d",
            ProblemKind::Diffusion,
            DomainSpec::Interval {
                left: BoundaryTag::Dirichlet,
                right: BoundaryTag::Dirichlet,
            },
            Coefficient::Constant(1.0),
            Source::Constant(f),
            DirichletData::Zero,
        )
        .unwrap()
    }

    fn ideal_discrepancy<S: Scalar>(problem: &ProblemSpec, lc: u32, lf: u32) -> (f64, CoarseSystem<S>) {
        ideal_discrepancy_ell(problem, lc, lf, 100)
    }

    fn ideal_discrepancy_ell<S: Scalar>(problem: &ProblemSpec, lc: u32, lf: u32, ell: usize) -> (f64, CoarseSystem<S>) {
        let hier = MeshHierarchy::build(&problem.domain, lc, lf).unwrap();
        let sys = FineSystem::<S>::build(problem, &hier.fine).unwrap();
        let interp = QuasiInterpolator::build(&hier).unwrap();
        let p = prolongation(&hier);
        let set = compute_correctors(problem, &sys, &hier, &interp, &CorrectorOptions::new(ell)).unwrap();
        assert!(set.ideal);
        let lift = CoarseLifting::build(problem, &hier, &p).unwrap();
        let cs = assemble_coarse(&sys, &hier, &interp, &p, &set, &lift).unwrap();
        let u_h = sys.galerkin_solution(problem, &hier.fine).unwrap();
        let u_c = solve_coarse(&cs).unwrap();
        let lifted: Vec<S> = u_h.iter().zip(&lift.fine).map(|(a, b)| *a - *b).collect();
        let ih = interp.apply(&lifted);
        let scale = u_h.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
        let disc = cs
            .free
            .iter()
            .zip(&ih)
            .fold(0.0f64, |m, (&z, v)| m.max((u_c[z] - *v).modulus()));
        (disc / scale, cs)
    }

    #[test]
    fn ideal_identity_poisson_1d() {
        let (d, cs) = ideal_discrepancy::<f64>(&poisson_1d(1.0), 2, 6);
        assert_eq!(cs.free.len(), 3);
        assert!(d <= 1e-9, "{d}");
        assert!(cs.matrix.asymmetry() <= 1e-9 * cs.matrix.max_abs());
    }

    #[test]
    fn ideal_identity_checkerboard_and_helmholtz() {
        let (d, cs) = ideal_discrepancy::<f64>(&random_checkerboard(2), 2, 6);
        assert!(d <= 1e-8, "{d}");
        assert!(cs.matrix.asymmetry() <= 1e-9 * cs.matrix.max_abs());
        let (d, _) = ideal_discrepancy::<Complex64>(&helmholtz_1d(8.0).unwrap(), 3, 7);
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn zero_data_gives_zero() {
        let p = poisson_1d(0.0);
        let hier = MeshHierarchy::build(&p.domain, 2, 5).unwrap();
        let sys = FineSystem::<f64>::build(&p, &hier.fine).unwrap();
        let interp = QuasiInterpolator::build(&hier).unwrap();
        let pr = prolongation(&hier);
        let set = compute_correctors(&p, &sys, &hier, &interp, &CorrectorOptions::new(1)).unwrap();
        let lift = CoarseLifting::build(&p, &hier, &pr).unwrap();
        let cs = assemble_coarse(&sys, &hier, &interp, &pr, &set, &lift).unwrap();
        assert!(solve_coarse(&cs).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn small_systems() {
        let one = CoarseSystem {
            matrix: SparseMatrix::from_triplets(1, 1, &[(0, 0, 4.0)]),
            rhs: vec![2.0],
            free: vec![1],
            lifting: vec![0.0, 0.0, 0.0],
        };
        assert_eq!(solve_coarse(&one).unwrap(), vec![0.0, 0.5, 0.0]);
        let id = CoarseSystem {
            matrix: SparseMatrix::<f64>::identity(3),
            rhs: vec![1.0, -2.0, 3.0],
            free: vec![0, 1, 2],
            lifting: vec![0.0; 3],
        };
        assert_eq!(solve_coarse(&id).unwrap(), vec![1.0, -2.0, 3.0]);
        let singular = CoarseSystem {
            matrix: SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]),
            rhs: vec![1.0, 0.0],
            free: vec![0, 1],
            lifting: vec![0.0; 2],
        };
        let err = solve_coarse(&singular).unwrap_err();
        assert!(err.to_string().contains("pivot"), "{err}");
    }

    #[test]
    fn helmholtz_without_wave_number_matches_diffusion() {
        // κ → 0: the Helmholtz coarse matrix reduces to the unit-coefficient diffusion one
        let d = DomainSpec::Interval {
            left: BoundaryTag::Dirichlet,
            right: BoundaryTag::Dirichlet,
        };
        let hier = MeshHierarchy::build(&d, 2, 5).unwrap();
        let interp = QuasiInterpolator::build(&hier).unwrap();
        let p = prolongation(&hier);
        let diff = poisson_1d(1.0);
        let sys = FineSystem::<f64>::build(&diff, &hier.fine).unwrap();
        let set = compute_correctors(&diff, &sys, &hier, &interp, &CorrectorOptions::new(1)).unwrap();
        let lift = CoarseLifting::build(&diff, &hier, &p).unwrap();
        let m_real = assemble_coarse(&sys, &hier, &interp, &p, &set, &lift).unwrap().matrix;

        let form = crate::assembly::HelmholtzForm::new(&hier.fine, 0.0).unwrap();
        let sys_c = FineSystem::<Complex64> {
            element_matrices: (0..hier.fine.num_elements())
                .map(|e| crate::assembly::SesquilinearForm::element_matrix(&form, e))
                .collect(),
            operator: crate::assembly::assemble_operator(&form),
            load: sys.load.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            dirichlet_nodes: sys.dirichlet_nodes.clone(),
            orientation: crate::discretization::Orientation::Adjoint,
        };
        let set_c = compute_correctors(&diff, &sys_c, &hier, &interp, &CorrectorOptions::new(1)).unwrap();
        let lift_c = CoarseLifting::<Complex64> {
            coarse: vec![Complex64::new(0.0, 0.0); hier.coarse.num_nodes()],
            fine: vec![Complex64::new(0.0, 0.0); hier.fine.num_nodes()],
        };
        let m_c = assemble_coarse(&sys_c, &hier, &interp, &p, &set_c, &lift_c).unwrap().matrix;
        for (i, j, v) in m_real.triplets() {
            assert!((m_c.get(i, j) - Complex64::new(v, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn galerkin_comparator_matches_direct_coarse_fem() {
        // constant coefficient: Pᵀ K_h P is the coarse stiffness matrix
        let p = poisson_1d(1.0);
        let hier = MeshHierarchy::build(&p.domain, 3, 6).unwrap();
        let sys = FineSystem::<f64>::build(&p, &hier.fine).unwrap();
        let interp = QuasiInterpolator::build(&hier).unwrap();
        let pr = prolongation(&hier);
        let lift = CoarseLifting::build(&p, &hier, &pr).unwrap();
        let u = solve_coarse(&assemble_coarse_galerkin(&sys, &interp, &pr, &lift).unwrap()).unwrap();
        let direct: Vec<f64> = standard_fem(&p, &hier.coarse).unwrap();
        for (a, b) in u.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13);
        }
        for z in 0..hier.coarse.num_nodes() {
            let x = hier.coarse.point(z)[0];
            assert!((u[z] - x * (1.0 - x) / 2.0).abs() < 1e-13);
        }
    }
}
