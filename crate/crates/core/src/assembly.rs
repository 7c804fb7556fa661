//! P1 finite element assembly on simplicial meshes.
//!
//! Element matrices follow the convention `K[i][j] = a(λ_j, λ_i)`: rows are test
//! functions, columns trial functions. For the sesquilinear Helmholtz form the
//! conjugate sits on the test factor, and since P1 basis functions are real the
//! assembled matrix is complex symmetric.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Facet, Mesh, MeshHierarchy};
use crate::scalar::{Complex64, Scalar};
use crate::sparse::SparseMatrix;

/// Dense element matrix of size at most 3x3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalMatrix<S> {
    pub n: usize,
    pub data: [[S; 3]; 3],
}

impl<S: Scalar> LocalMatrix<S> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: [[S::ZERO; 3]; 3],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> S {
        self.data[i][j]
    }

    pub fn add_scaled(&mut self, other: &LocalMatrix<f64>, alpha: S) {
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i][j] += alpha * S::of_real(other.data[i][j]);
            }
        }
    }
}

/// Gradients of the barycentric coordinates and the element measure.
pub fn p1_gradients(mesh: &Mesh, e: usize) -> (f64, Vec<[f64; 2]>) {
    let p = mesh.element_points(e);
    match mesh.dim() {
        1 => {
            let len = p[1][0] - p[0][0];
            (len.abs(), vec![[-1.0 / len, 0.0], [1.0 / len, 0.0]])
        }
        _ => {
            let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
            let grads = (0..3)
                .map(|k| {
                    let a = p[(k + 1) % 3];
                    let b = p[(k + 2) % 3];
                    [(a[1] - b[1]) / det, (b[0] - a[0]) / det]
                })
                .collect();
            (0.5 * det.abs(), grads)
        }
    }
}

/// `∫_e ∇λ_i·∇λ_j` for unit coefficient.
pub fn element_stiffness(mesh: &Mesh, e: usize) -> LocalMatrix<f64> {
    let (meas, g) = p1_gradients(mesh, e);
    let n = g.len();
    let mut m = LocalMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.data[i][j] = meas * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    m
}

/// `∫_e λ_i λ_j`, exact.
pub fn element_mass(mesh: &Mesh, e: usize) -> LocalMatrix<f64> {
    let meas = mesh.measure(e);
    let n = mesh.nodes_per_element();
    let denom = ((n + 1) * n) as f64;
    let mut m = LocalMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            m.data[i][j] = meas * if i == j { 2.0 } else { 1.0 } / denom;
        }
    }
    m
}

/// Boundary mass `∫_f λ_i λ_j` of a facet: the point evaluation in 1D and
/// `(|f|/6)[[2,1],[1,2]]` on an edge in 2D.
pub fn facet_mass(mesh: &Mesh, f: &Facet) -> LocalMatrix<f64> {
    match mesh.dim() {
        1 => {
            let mut m = LocalMatrix::zeros(1);
            m.data[0][0] = 1.0;
            m
        }
        _ => {
            let (p, q) = (mesh.point(f.nodes[0]), mesh.point(f.nodes[1]));
            let len = (p[0] - q[0]).hypot(p[1] - q[1]);
            let mut m = LocalMatrix::zeros(2);
            m.data = [[len / 3.0, len / 6.0, 0.0], [len / 6.0, len / 3.0, 0.0], [0.0; 3]];
            m
        }
    }
}

/// A local (element-wise) sesquilinear form on a fixed mesh.
pub trait SesquilinearForm: Sync {
    type Scalar: Scalar;

    fn mesh(&self) -> &Mesh;

    /// Element matrix of `e` including the boundary terms of the facets owned by
    /// `e`; entry `[i][j] = a_e(λ_j, λ_i)` in the element's local node order.
    fn element_matrix(&self, e: usize) -> LocalMatrix<Self::Scalar>;
}

/// `a(u, v) = ∫ A ∇u·∇v` with `A` constant per element.
#[derive(Clone, Debug)]
pub struct DiffusionForm<'m> {
    mesh: &'m Mesh,
    coefficient: Vec<f64>,
}

impl<'m> DiffusionForm<'m> {
    pub fn new(mesh: &'m Mesh, coefficient: Vec<f64>) -> Result<Self> {
        if coefficient.len() != mesh.num_elements() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficient values for {} elements",
                coefficient.len(),
                mesh.num_elements()
            )));
        }
        if let Some((e, a)) = coefficient.iter().enumerate().find(|(_, a)| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidCoefficient(format!(
                "coefficient {a} on element {e} is not positive"
            )));
        }
        Ok(Self { mesh, coefficient })
    }

    pub fn coefficient(&self) -> &[f64] {
        &self.coefficient
    }
}

impl SesquilinearForm for DiffusionForm<'_> {
    type Scalar = f64;

    fn mesh(&self) -> &Mesh {
        self.mesh
    }

    fn element_matrix(&self, e: usize) -> LocalMatrix<f64> {
        let mut k = element_stiffness(self.mesh, e);
        let a = self.coefficient[e];
        for row in k.data.iter_mut() {
            for v in row.iter_mut() {
                *v *= a;
            }
        }
        k
    }
}

/// `a(u, v) = ∫ ∇u·∇v̄ − κ² ∫ u v̄ − iκ ∫_{Γ_R} u v̄`.
#[derive(Clone, Debug)]
pub struct HelmholtzForm<'m> {
    mesh: &'m Mesh,
    kappa: f64,
    robin: Vec<Vec<usize>>,
}

impl<'m> HelmholtzForm<'m> {
    pub fn new(mesh: &'m Mesh, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidProblem(format!("wave number {kappa} must be nonnegative")));
        }
        let mut robin = vec![Vec::new(); mesh.num_elements()];
        for (k, f) in mesh.facets().iter().enumerate() {
            if f.tag == BoundaryTag::Robin {
                robin[f.element].push(k);
            }
        }
        if robin.iter().all(|r| r.is_empty()) && kappa > 0.0 {
            log::warn!("Helmholtz operator without Robin boundary: the problem may be ill-posed");
        }
        Ok(Self { mesh, kappa, robin })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl SesquilinearForm for HelmholtzForm<'_> {
    type Scalar = Complex64;

    fn mesh(&self) -> &Mesh {
        self.mesh
    }

    fn element_matrix(&self, e: usize) -> LocalMatrix<Complex64> {
        let n = self.mesh.nodes_per_element();
        let mut m = LocalMatrix::zeros(n);
        m.add_scaled(&element_stiffness(self.mesh, e), Complex64::ONE);
        m.add_scaled(&element_mass(self.mesh, e), Complex64::of_real(-self.kappa * self.kappa));
        let nodes = self.mesh.element(e);
        for &k in &self.robin[e] {
            let f = &self.mesh.facets()[k];
            let fm = facet_mass(self.mesh, f);
            let fnodes = self.mesh.facet_nodes(f);
            let local: Vec<usize> = fnodes
                .iter()
                .map(|v| nodes.iter().position(|w| w == v).expect("facet node in element"))
                .collect();
            for (a, &la) in local.iter().enumerate() {
                for (b, &lb) in local.iter().enumerate() {
                    m.data[la][lb] += Complex64::new(0.0, -self.kappa) * fm.data[a][b];
                }
            }
        }
        m
    }
}

/// Sums element matrices into a global sparse matrix. Element matrices are
/// computed in parallel and merged in element order, so the result is
/// bit-reproducible.
pub fn assemble_operator<F: SesquilinearForm>(form: &F) -> SparseMatrix<F::Scalar> {
    assemble_on(form, &(0..form.mesh().num_elements()).collect::<Vec<_>>())
}

/// Assembles the form restricted to a subset of elements (`a_ω` with ω their union).
pub fn assemble_on<F: SesquilinearForm>(form: &F, elements: &[usize]) -> SparseMatrix<F::Scalar> {
    let mesh = form.mesh();
    let locals: Vec<LocalMatrix<F::Scalar>> = elements.par_iter().map(|&e| form.element_matrix(e)).collect();
    let mut trip = Vec::with_capacity(elements.len() * 9);
    for (&e, m) in elements.iter().zip(&locals) {
        let nodes = mesh.element(e);
        for (i, &gi) in nodes.iter().enumerate() {
            for (j, &gj) in nodes.iter().enumerate() {
                trip.push((gi, gj, m.data[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &trip)
}

/// Stiffness matrix `∫ A ∇λ_j·∇λ_i` for one positive coefficient value per element.
pub fn assemble_stiffness(mesh: &Mesh, coefficient: &[f64]) -> Result<SparseMatrix<f64>> {
    Ok(assemble_operator(&DiffusionForm::new(mesh, coefficient.to_vec())?))
}

struct MassForm<'m>(&'m Mesh);

impl SesquilinearForm for MassForm<'_> {
    type Scalar = f64;
    fn mesh(&self) -> &Mesh {
        self.0
    }
    fn element_matrix(&self, e: usize) -> LocalMatrix<f64> {
        element_mass(self.0, e)
    }
}

pub fn assemble_mass(mesh: &Mesh) -> SparseMatrix<f64> {
    assemble_operator(&MassForm(mesh))
}

/// Boundary mass over all facets tagged ROBIN.
pub fn assemble_robin_mass(mesh: &Mesh) -> SparseMatrix<f64> {
    let mut trip = Vec::new();
    for f in mesh.facets().iter().filter(|f| f.tag == BoundaryTag::Robin) {
        let m = facet_mass(mesh, f);
        let nodes = mesh.facet_nodes(f);
        for (a, &ga) in nodes.iter().enumerate() {
            for (b, &gb) in nodes.iter().enumerate() {
                trip.push((ga, gb, m.data[a][b]));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), &trip)
}

/// `stiffness − κ²·mass − iκ·robin_mass` over complex scalars.
pub fn helmholtz_operator(mesh: &Mesh, kappa: f64) -> Result<SparseMatrix<Complex64>> {
    Ok(assemble_operator(&HelmholtzForm::new(mesh, kappa)?))
}

/// Source data for load vectors.
pub enum LoadData<'a, S> {
    Constant(S),
    /// One value per element.
    Elementwise(&'a [S]),
    /// Analytic source, integrated with a rule exact for quadratic integrands.
    Function(&'a (dyn Fn([f64; 2]) -> S + Sync)),
}

/// Load vector `F_i = ∫ f λ_i`.
pub fn assemble_load<S: Scalar>(mesh: &Mesh, f: &LoadData<'_, S>) -> Result<Vec<S>> {
    let n = mesh.nodes_per_element();
    if let LoadData::Elementwise(v) = f {
        if v.len() != mesh.num_elements() {
            return Err(Error::DimensionMismatch("elementwise load length".into()));
        }
    }
    let mut out = vec![S::ZERO; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let meas = mesh.measure(e);
        let nodes = mesh.element(e);
        match f {
            LoadData::Constant(c) => {
                for &v in nodes {
                    out[v] += c.scaled(meas / n as f64);
                }
            }
            LoadData::Elementwise(vals) => {
                for &v in nodes {
                    out[v] += vals[e].scaled(meas / n as f64);
                }
            }
            LoadData::Function(func) => {
                let pts = mesh.element_points(e);
                for (w, bary) in quadrature(mesh.dim()) {
                    let mut x = [0.0; 2];
                    for (k, p) in pts.iter().enumerate() {
                        x[0] += bary[k] * p[0];
                        x[1] += bary[k] * p[1];
                    }
                    let fx = func(x);
                    for (k, &v) in nodes.iter().enumerate() {
                        out[v] += fx.scaled(w * meas * bary[k]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reference quadrature `(weight, barycentric point)`, weights summing to one.
fn quadrature(dim: usize) -> Vec<(f64, Vec<f64>)> {
    match dim {
        1 => {
            let g = 0.5 / 3f64.sqrt();
            vec![(0.5, vec![0.5 + g, 0.5 - g]), (0.5, vec![0.5 - g, 0.5 + g])]
        }
        _ => vec![
            (1.0 / 3.0, vec![0.5, 0.5, 0.0]),
            (1.0 / 3.0, vec![0.0, 0.5, 0.5]),
            (1.0 / 3.0, vec![0.5, 0.0, 0.5]),
        ],
    }
}

/// Prolongation (fine nodes × coarse nodes): coarse P1 functions evaluated at fine nodes.
pub fn prolongation(hier: &MeshHierarchy) -> SparseMatrix<f64> {
    let fine = &hier.fine;
    let rows = (0..fine.num_nodes())
        .map(|v| {
            let fe = fine.node_elements(v)[0];
            let t = hier.parent(fe);
            let bary = hier.coarse.barycentric(t, fine.point(v));
            let mut row: Vec<(usize, f64)> = hier
                .coarse
                .element(t)
                .iter()
                .zip(bary)
                .filter(|(_, b)| b.abs() > 1e-12)
                .map(|(&z, b)| (z, b))
                .collect();
            row.sort_by_key(|&(z, _)| z);
            row
        })
        .collect();
    SparseMatrix::from_rows(hier.coarse.num_nodes(), rows)
}

/// Records how a reduced system on free nodes maps back to the full node set.
#[derive(Clone, Debug)]
pub struct Lifting<S> {
    pub num_nodes: usize,
    pub free: Vec<usize>,
    pub fixed: Vec<usize>,
    pub fixed_values: Vec<S>,
}

impl<S: Scalar> Lifting<S> {
    /// Full vector with the free values inserted and boundary values set exactly.
    pub fn expand(&self, free_values: &[S]) -> Vec<S> {
        assert_eq!(free_values.len(), self.free.len());
        let mut x = vec![S::ZERO; self.num_nodes];
        for (&i, &v) in self.free.iter().zip(free_values) {
            x[i] = v;
        }
        for (&i, &v) in self.fixed.iter().zip(&self.fixed_values) {
            x[i] = v;
        }
        x
    }

    /// The lifting vector: boundary values, zero elsewhere.
    pub fn boundary_vector(&self) -> Vec<S> {
        let mut x = vec![S::ZERO; self.num_nodes];
        for (&i, &v) in self.fixed.iter().zip(&self.fixed_values) {
            x[i] = v;
        }
        x
    }
}

#[derive(Clone, Debug)]
pub struct ReducedSystem<S> {
    pub matrix: SparseMatrix<S>,
    pub rhs: Vec<S>,
    pub lifting: Lifting<S>,
}

/// Eliminates Dirichlet nodes: the reduced system acts on the remaining nodes with
/// `rhs ← rhs − op·g`, where `g` carries the prescribed values. Nodes of
/// `dirichlet` without a prescribed value are fixed to zero.
pub fn constrain_dirichlet<S: Scalar>(
    op: &SparseMatrix<S>,
    rhs: &[S],
    dirichlet: &[usize],
    values: &[(usize, S)],
) -> Result<ReducedSystem<S>> {
    let n = op.nrows();
    if op.ncols() != n || rhs.len() != n {
        return Err(Error::DimensionMismatch("constrain_dirichlet".into()));
    }
    let mut is_fixed = vec![false; n];
    for &d in dirichlet {
        is_fixed[d] = true;
    }
    let mut g = vec![S::ZERO; n];
    for &(node, v) in values {
        if node >= n || !is_fixed[node] {
            return Err(Error::NotDirichletNode(node));
        }
        g[node] = v;
    }
    let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
    let fixed: Vec<usize> = (0..n).filter(|&i| is_fixed[i]).collect();
    let og = op.mul_vec(&g);
    let reduced_rhs = free.iter().map(|&i| rhs[i] - og[i]).collect();
    let matrix = op.submatrix(&free, &free);
    let fixed_values = fixed.iter().map(|&i| g[i]).collect();
    Ok(ReducedSystem {
        matrix,
        rhs: reduced_rhs,
        lifting: Lifting {
            num_nodes: n,
            free,
            fixed,
            fixed_values,
        },
    })
}
