//! Fine-scale correctors in the kernel of the quasi-interpolation.
//!
//! For a coarse element `T` and one of its free vertices `z`, the element
//! corrector `φ_{z,T}` lives on the fine nodes of the patch `Ω_{T,ℓ}` that are
//! neither on the artificial patch boundary nor on the Dirichlet boundary, and
//! satisfies `I_H φ = 0` together with
//!
//! * primal: `a(φ, w) = −a_T(λ_z, w)` for all admissible `w`,
//! * adjoint: `a(w, φ) = −a_T(w, λ_z)` for all admissible `w`.
//!
//! The kernel constraint is imposed through Lagrange multipliers, giving the
//! saddle point system `[[A, Cᴴ], [C, 0]]` with `A` the patch block of the fine
//! operator (its adjoint in the adjoint orientation). One factorization per
//! element serves all of its vertices.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::discretization::{FineSystem, Orientation};
use crate::error::{Error, Result};
use crate::interpolation::{constraint_rows, ConstraintBlock, QuasiInterpolator};
use crate::mesh::{MeshHierarchy, Patch};
use crate::problems::ProblemSpec;
use crate::scalar::{norm2, Field, Scalar};
use crate::solve::{DenseLu, LuFactor};
use crate::sparse::{SparseMatrix, SparseVec};

/// Relative residual demanded from every saddle point solve.
pub const SADDLE_TOL: f64 = 1e-10;
/// Kernel tolerance: `‖I_H φ‖_max ≤ KERNEL_TOL · max(1, ‖φ‖_max)`.
pub const KERNEL_TOL: f64 = 1e-9;

/// Per-element piece `φ_{z,ℓ,T}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementPiece<S> {
    pub element: usize,
    pub node: usize,
    pub vector: SparseVec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorSet<S> {
    pub coarse_level: u32,
    pub fine_level: u32,
    pub ell: usize,
    pub orientation: Orientation,
    /// Every patch covered the whole mesh, so one global solve was used.
    pub ideal: bool,
    pub key: [u8; 32],
    /// `φ_{z,ℓ}` per coarse node; `None` at Dirichlet nodes.
    pub correctors: Vec<Option<SparseVec<S>>>,
    /// Element pieces, kept only on request and never cached.
    pub pieces: Vec<ElementPiece<S>>,
}

impl<S: Scalar> CorrectorSet<S> {
    pub fn corrector(&self, z: usize) -> Result<&SparseVec<S>> {
        self.correctors
            .get(z)
            .and_then(|c| c.as_ref())
            .ok_or(Error::MissingCorrector(z))
    }

    /// `Λ_{z,ℓ} = P λ_z + φ_{z,ℓ}` as a fine vector.
    pub fn test_basis(&self, z: usize, prolongation_t: &SparseMatrix<f64>) -> Result<SparseVec<S>> {
        let phi = self.corrector(z)?;
        let (rows, vals) = prolongation_t.row(z);
        let hat = SparseVec {
            len: phi.len,
            indices: rows.to_vec(),
            values: vals.iter().map(|&v| S::of_real(v)).collect(),
        };
        Ok(SparseVec::sum(phi.len, [&hat, phi]))
    }

    /// Sum of the stored element pieces belonging to `z`.
    pub fn node_from_pieces(&self, z: usize, coarse_elements_of_z: &[usize]) -> Result<SparseVec<S>> {
        let mut parts = Vec::new();
        for &t in coarse_elements_of_z {
            let p = self
                .pieces
                .iter()
                .find(|p| p.element == t && p.node == z)
                .ok_or(Error::MissingCorrector(z))?;
            parts.push(&p.vector);
        }
        let len = parts.first().map(|p| p.len).ok_or(Error::MissingCorrector(z))?;
        Ok(SparseVec::sum(len, parts))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CorrectorOptions {
    pub ell: usize,
    pub keep_pieces: bool,
    /// Resolution constant in the condition `Hκ ≤ c_res`.
    pub c_res: f64,
    /// Number of coarse elements processed per parallel batch.
    pub batch: usize,
}

impl CorrectorOptions {
    pub fn new(ell: usize) -> Self {
        Self {
            ell,
            keep_pieces: false,
            c_res: 1.0,
            batch: 256,
        }
    }
}

/// Saddle matrix `[[A, Cᴴ], [C, 0]]` for the free nodes of a patch.
fn saddle_matrix<S: Scalar>(
    sys: &FineSystem<S>,
    free: &[usize],
    constraint: &ConstraintBlock,
) -> SparseMatrix<S> {
    let n = free.len();
    let m = constraint.matrix.nrows();
    let block = sys.operator.submatrix(free, free);
    let block = match sys.orientation {
        Orientation::Primal => block,
        Orientation::Adjoint => block.adjoint(),
    };
    let mut trip: Vec<(usize, usize, S)> = block.triplets().collect();
    for (r, c, v) in constraint.matrix.triplets() {
        trip.push((n + r, c, S::of_real(v)));
        trip.push((c, n + r, S::of_real(v)));
    }
    SparseMatrix::from_triplets(n + m, n + m, &trip)
}

/// Right-hand side `−(K_T P λ_z)` (or with `K_Tᴴ`) indexed like the patch free nodes.
fn element_rhs<S: Scalar>(
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    t: usize,
    local_vertex: usize,
    col_of: &dyn Fn(usize) -> Option<usize>,
    len: usize,
) -> Vec<S> {
    let fine = &hier.fine;
    let mut rhs = vec![S::ZERO; len];
    for &f in hier.children(t) {
        let nodes = fine.element(f);
        let ke = &sys.element_matrices[f];
        let pv: Vec<f64> = nodes
            .iter()
            .map(|&v| hier.coarse.barycentric(t, fine.point(v))[local_vertex])
            .collect();
        for (i, &gi) in nodes.iter().enumerate() {
            let Some(row) = col_of(gi) else { continue };
            let mut acc = S::ZERO;
            for (j, &p) in pv.iter().enumerate() {
                let k = match sys.orientation {
                    Orientation::Primal => ke.data[i][j],
                    Orientation::Adjoint => ke.data[j][i].conjugate(),
                };
                acc += k.scaled(p);
            }
            rhs[row] -= acc;
        }
    }
    rhs
}

fn check_kernel<S: Scalar>(constraint: &ConstraintBlock, phi: &[S], element: usize) -> Result<()> {
    let mut worst = 0.0f64;
    for r in 0..constraint.matrix.nrows() {
        let (cols, vals) = constraint.matrix.row(r);
        let v: S = cols.iter().zip(vals).map(|(&c, &w)| phi[c].scaled(w)).sum();
        worst = worst.max(v.modulus());
    }
    let scale = phi.iter().fold(1.0f64, |m, v| m.max(v.modulus()));
    if worst > KERNEL_TOL * scale {
        return Err(Error::SingularPatch {
            element,
            reason: format!("kernel constraint violated by {worst:e}"),
        });
    }
    Ok(())
}

/// Saddle system `[[A, Cᴴ], [C, 0]]` solved by eliminating the multipliers:
/// `A` is factored alone and the few constraint rows enter through the dense
/// Schur complement `C A⁻¹ Cᴴ`. Constraint rows can span a large part of the
/// patch, which would cause heavy fill in a factorization of the full saddle.
struct BlockSaddle<S: Scalar> {
    a: SparseMatrix<S>,
    c: SparseMatrix<S>,
    lu: LuFactor<S>,
    /// Columns of `A⁻¹ Cᴴ`.
    y: Vec<Vec<S>>,
    schur: DenseLu<S>,
}

impl<S: Scalar> BlockSaddle<S> {
    fn new(sys: &FineSystem<S>, free: &[usize], constraint: &SparseMatrix<f64>) -> std::result::Result<Self, String> {
        let block = sys.operator.submatrix(free, free);
        let a = match sys.orientation {
            Orientation::Primal => block,
            Orientation::Adjoint => block.adjoint(),
        };
        let c: SparseMatrix<S> = constraint.cast();
        let lu = LuFactor::new(&a).map_err(|e| e.to_string())?;
        let m = c.nrows();
        let n = a.nrows();
        let cols: Vec<Vec<S>> = (0..m)
            .map(|r| {
                let mut col = vec![S::ZERO; n];
                let (idx, vals) = c.row(r);
                for (&i, &v) in idx.iter().zip(vals) {
                    col[i] = v.conjugate();
                }
                col
            })
            .collect();
        let y = lu.solve_many(&cols);
        let dense: Vec<Vec<S>> = (0..m)
            .map(|i| y.iter().map(|yj| row_dot(&c, i, yj)).collect())
            .collect();
        let schur = DenseLu::new(&dense);
        let scale = dense.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.modulus()));
        if m > 0 && !(schur.min_pivot() > 1e-14 * scale) {
            return Err(format!("constraint Schur complement is singular (pivot {:e})", schur.min_pivot()));
        }
        Ok(Self { a, c, lu, y, schur })
    }

    /// Solves `A x + Cᴴ μ = f, C x = g`.
    fn solve_with(&self, f: &[S], g: &[S]) -> (Vec<S>, Vec<S>) {
        let u0 = self.lu.solve(f);
        let rhs: Vec<S> = (0..self.c.nrows()).map(|i| row_dot(&self.c, i, &u0) - g[i]).collect();
        let mu = if rhs.is_empty() { Vec::new() } else { self.schur.solve(&rhs) };
        let mut x = u0;
        for (yj, &mj) in self.y.iter().zip(&mu) {
            for (xi, &yi) in x.iter_mut().zip(yj) {
                *xi -= yi * mj;
            }
        }
        (x, mu)
    }

    fn residual(&self, f: &[S], x: &[S], mu: &[S]) -> (Vec<S>, Vec<S>) {
        let ax = self.a.mul_vec(x);
        let mut r1: Vec<S> = f.iter().zip(&ax).map(|(p, q)| *p - *q).collect();
        for (i, &m) in mu.iter().enumerate() {
            let (idx, vals) = self.c.row(i);
            for (&j, &v) in idx.iter().zip(vals) {
                r1[j] -= v.conjugate() * m;
            }
        }
        let r2: Vec<S> = (0..self.c.nrows()).map(|i| -row_dot(&self.c, i, x)).collect();
        (r1, r2)
    }

    /// Solution of the homogeneous-constraint system with right-hand side `f`,
    /// refined until the saddle residual meets `SADDLE_TOL`.
    fn solve(&self, f: &[S]) -> std::result::Result<Vec<S>, String> {
        let zero = vec![S::ZERO; self.c.nrows()];
        let (mut x, mut mu) = self.solve_with(f, &zero);
        let fnorm = norm2(f);
        let rel = |r1: &[S], r2: &[S]| (norm2(r1).hypot(norm2(r2))) / if fnorm > 0.0 { fnorm } else { 1.0 };
        let (mut r1, mut r2) = self.residual(f, &x, &mu);
        let mut res = rel(&r1, &r2);
        for _ in 0..3 {
            if res <= SADDLE_TOL {
                break;
            }
            let neg_r2: Vec<S> = r2.iter().map(|v| -*v).collect();
            let (dx, dmu) = self.solve_with(&r1, &neg_r2);
            let cx: Vec<S> = x.iter().zip(&dx).map(|(p, q)| *p + *q).collect();
            let cmu: Vec<S> = mu.iter().zip(&dmu).map(|(p, q)| *p + *q).collect();
            let (c1, c2) = self.residual(f, &cx, &cmu);
            let cres = rel(&c1, &c2);
            if !(cres < res) {
                break;
            }
            (x, mu, r1, r2, res) = (cx, cmu, c1, c2, cres);
        }
        if !x.iter().all(|v| v.finite()) || res > SADDLE_TOL {
            return Err(format!("saddle residual {res:e} exceeds {SADDLE_TOL:e}"));
        }
        Ok(x)
    }
}

fn row_dot<S: Scalar>(c: &SparseMatrix<S>, i: usize, x: &[S]) -> S {
    let (idx, vals) = c.row(i);
    idx.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
}

/// Element correctors `φ_{z,ℓ,T}` of all free vertices of `T`, as `(z, φ)` pairs
/// in local vertex order.
pub fn element_correctors<S: Scalar>(
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    interp: &QuasiInterpolator,
    t: usize,
    ell: usize,
) -> Result<Vec<(usize, SparseVec<S>)>> {
    let patch: Patch = hier.element_patch(t, ell.max(1));
    let constraint = constraint_rows(interp, hier, &patch);
    let free = &patch.free_nodes;
    let n = free.len();
    let verts: Vec<(usize, usize)> = hier
        .coarse
        .element(t)
        .iter()
        .enumerate()
        .filter(|(_, &z)| interp.row_of(z).is_some())
        .map(|(k, &z)| (k, z))
        .collect();
    if verts.is_empty() {
        return Ok(Vec::new());
    }
    let fine_n = hier.fine.num_nodes();
    let singular = |reason: String| Error::SingularPatch { element: t, reason };
    if n == 0 {
        return Err(singular("patch has no free fine nodes".into()));
    }
    let solver = BlockSaddle::new(sys, free, &constraint.matrix).map_err(singular)?;
    let col_of = |v: usize| free.binary_search(&v).ok();
    let mut out = Vec::with_capacity(verts.len());
    for (k, z) in verts {
        let rhs = element_rhs(sys, hier, t, k, &col_of, n);
        let x = solver.solve(&rhs).map_err(singular)?;
        check_kernel(&constraint, &x[..n], t)?;
        out.push((
            z,
            SparseVec {
                len: fine_n,
                indices: free.clone(),
                values: x[..n].to_vec(),
            },
        ));
    }
    Ok(out)
}

/// A single element corrector `φ_{z,ℓ,T}`.
pub fn element_corrector<S: Scalar>(
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    interp: &QuasiInterpolator,
    t: usize,
    z: usize,
    ell: usize,
) -> Result<SparseVec<S>> {
    if !hier.coarse.element(t).contains(&z) || interp.row_of(z).is_none() {
        return Err(Error::InvalidProblem(format!("node {z} is not a free vertex of element {t}")));
    }
    element_correctors(sys, hier, interp, t, ell)?
        .into_iter()
        .find(|(v, _)| *v == z)
        .map(|(_, p)| p)
        .ok_or(Error::MissingCorrector(z))
}

/// Ideal correctors `φ_z` from one global saddle point factorization.
pub fn ideal_correctors<S: Scalar>(
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    interp: &QuasiInterpolator,
) -> Result<Vec<Option<SparseVec<S>>>> {
    let whole = hier.element_patch(0, usize::MAX / 2);
    let constraint = constraint_rows(interp, hier, &whole);
    let free = &whole.free_nodes;
    let n = free.len();
    let saddle = saddle_matrix(sys, free, &constraint);
    let lu = LuFactor::new(&saddle)?;
    let prolong_t = crate::assembly::prolongation(hier).transpose();
    let op = match sys.orientation {
        Orientation::Primal => sys.operator.clone(),
        Orientation::Adjoint => sys.operator.adjoint(),
    };
    let fine_n = hier.fine.num_nodes();
    let solved: Vec<Result<(usize, SparseVec<S>)>> = interp
        .free_coarse()
        .par_iter()
        .map(|&z| {
            let (rows, vals) = prolong_t.row(z);
            let mut hat = vec![S::ZERO; fine_n];
            for (&r, &v) in rows.iter().zip(vals) {
                hat[r] = S::of_real(v);
            }
            let k_hat = op.mul_vec(&hat);
            let mut rhs: Vec<S> = free.iter().map(|&v| -k_hat[v]).collect();
            rhs.resize(n + constraint.matrix.nrows(), S::ZERO);
            let x = lu.solve_refined(&saddle, &rhs, SADDLE_TOL)?;
            check_kernel(&constraint, &x[..n], 0)?;
            Ok((
                z,
                SparseVec {
                    len: fine_n,
                    indices: free.clone(),
                    values: x[..n].to_vec(),
                },
            ))
        })
        .collect();
    let mut out = vec![None; hier.coarse.num_nodes()];
    for r in solved {
        let (z, phi) = r?;
        out[z] = Some(phi);
    }
    Ok(out)
}

/// Cache key over the mesh levels, ℓ, the problem, the orientation and the
/// format version.
pub fn cache_key(problem: &ProblemSpec, coarse_level: u32, fine_level: u32, ell: usize, ideal: bool) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(CACHE_MAGIC);
    h.update(CACHE_VERSION.to_le_bytes());
    h.update(coarse_level.to_le_bytes());
    h.update(fine_level.to_le_bytes());
    h.update((if ideal { u64::MAX } else { ell as u64 }).to_le_bytes());
    h.update(Orientation::for_problem(problem).name().as_bytes());
    h.update(problem.canonical_bytes());
    h.finalize().into()
}

/// Computes `φ_{z,ℓ}` for every free coarse node. Uses the ideal global solve
/// when every patch covers the whole mesh. Work runs on the current rayon pool;
/// results do not depend on its size.
pub fn compute_correctors<S: Scalar>(
    problem: &ProblemSpec,
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    interp: &QuasiInterpolator,
    opts: &CorrectorOptions,
) -> Result<CorrectorSet<S>> {
    if let Some(kappa) = problem.kappa() {
        let hk = hier.coarse_width() * kappa;
        if hk > opts.c_res {
            log::warn!("Hκ = {hk} > c_res = {}: cell problems may be indefinite", opts.c_res);
        }
    }
    let ell = opts.ell.max(1);
    let nc = hier.coarse.num_elements();
    let ideal = (0..nc).all(|t| hier.element_patch(t, ell).saturated) && !opts.keep_pieces;
    let key = cache_key(problem, hier.coarse.level(), hier.fine.level(), ell, ideal);
    let fine_n = hier.fine.num_nodes();
    let (correctors, pieces) = if ideal {
        (ideal_correctors(sys, hier, interp)?, Vec::new())
    } else {
        let mut acc: Vec<Option<SparseVec<S>>> = vec![None; hier.coarse.num_nodes()];
        for &z in interp.free_coarse() {
            acc[z] = Some(SparseVec::new(fine_n));
        }
        let mut pieces = Vec::new();
        let elements: Vec<usize> = (0..nc).collect();
        for batch in elements.chunks(opts.batch.max(1)) {
            let results: Vec<Result<Vec<(usize, SparseVec<S>)>>> = batch
                .par_iter()
                .map(|&t| element_correctors(sys, hier, interp, t, ell))
                .collect();
            for (&t, r) in batch.iter().zip(results) {
                for (z, phi) in r? {
                    let slot = acc[z].as_mut().expect("free node");
                    *slot = SparseVec::sum(fine_n, [&*slot, &phi]);
                    if opts.keep_pieces {
                        pieces.push(ElementPiece {
                            element: t,
                            node: z,
                            vector: phi,
                        });
                    }
                }
            }
        }
        (acc, pieces)
    };
    Ok(CorrectorSet {
        coarse_level: hier.coarse.level(),
        fine_level: hier.fine.level(),
        ell,
        orientation: sys.orientation,
        ideal,
        key,
        correctors,
        pieces,
    })
}

const CACHE_MAGIC: &[u8; 8] = b"MSFEMCOR";
pub const CACHE_VERSION: u32 = 1;

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, key: &[u8; 32]) -> PathBuf {
    dir.join(format!("{}.correctors", hex(key)))
}

/// Writes the correctors to `dir`, named by their key. Returns the file path.
pub fn cache_store<S: Scalar>(set: &CorrectorSet<S>, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    buf.extend_from_slice(&set.key);
    buf.push(match S::FIELD {
        Field::Real => 0,
        Field::Complex => 1,
    });
    buf.push(match set.orientation {
        Orientation::Primal => 0,
        Orientation::Adjoint => 1,
    });
    buf.push(set.ideal as u8);
    buf.extend_from_slice(&set.coarse_level.to_le_bytes());
    buf.extend_from_slice(&set.fine_level.to_le_bytes());
    buf.extend_from_slice(&(set.ell as u64).to_le_bytes());
    buf.extend_from_slice(&(set.correctors.len() as u64).to_le_bytes());
    let present = set.correctors.iter().filter(|c| c.is_some()).count();
    buf.extend_from_slice(&(present as u64).to_le_bytes());
    for (z, c) in set.correctors.iter().enumerate() {
        let Some(c) = c else { continue };
        buf.extend_from_slice(&(z as u64).to_le_bytes());
        buf.extend_from_slice(&(c.len as u64).to_le_bytes());
        buf.extend_from_slice(&(c.nnz() as u64).to_le_bytes());
        for &i in &c.indices {
            buf.extend_from_slice(&(i as u64).to_le_bytes());
        }
        for v in &c.values {
            buf.extend_from_slice(&v.re_part().to_le_bytes());
            if S::FIELD == Field::Complex {
                buf.extend_from_slice(&v.im_part().to_le_bytes());
            }
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    let path = cache_path(dir, &set.key);
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Cache("unexpected end of cache file".into()));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Loads correctors stored under `key`. A missing entry is `Ok(None)`; a file
/// from another format version is deleted and reported; a damaged file fails
/// its checksum.
pub fn cache_load<S: Scalar>(dir: &Path, key: &[u8; 32]) -> Result<Option<CorrectorSet<S>>> {
    let path = cache_path(dir, key);
    let data = match fs::read(&path) {
        Ok(d) => d,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    if data.len() < 12 || &data[..8] != CACHE_MAGIC {
        return Err(Error::Cache(format!("{} is not a corrector cache file", path.display())));
    }
    let version = u32::from_le_bytes(data[8..12].try_into().unwrap());
    if version != CACHE_VERSION {
        let _ = fs::remove_file(&path);
        return Err(Error::Cache(format!(
            "cache format version {version} does not match {CACHE_VERSION}; entry invalidated"
        )));
    }
    if data.len() < 16 {
        return Err(Error::Cache("checksum failure: file truncated".into()));
    }
    let (body, tail) = data.split_at(data.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::Cache(format!("checksum failure in {}", path.display())));
    }
    let mut r = Reader { data: body, pos: 12 };
    let stored_key: [u8; 32] = r.take(32)?.try_into().unwrap();
    if &stored_key != key {
        return Ok(None);
    }
    let field = r.u8()?;
    let expected = match S::FIELD {
        Field::Real => 0,
        Field::Complex => 1,
    };
    if field != expected {
        return Ok(None);
    }
    let orientation = match r.u8()? {
        0 => Orientation::Primal,
        _ => Orientation::Adjoint,
    };
    let ideal = r.u8()? != 0;
    let coarse_level = r.u32()?;
    let fine_level = r.u32()?;
    let ell = r.u64()? as usize;
    let num = r.u64()? as usize;
    let present = r.u64()? as usize;
    let mut correctors = vec![None; num];
    for _ in 0..present {
        let z = r.u64()? as usize;
        let len = r.u64()? as usize;
        let nnz = r.u64()? as usize;
        let indices = (0..nnz).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let values = (0..nnz)
            .map(|_| {
                let re = r.f64()?;
                let im = if S::FIELD == Field::Complex { r.f64()? } else { 0.0 };
                Ok(S::from_parts(re, im))
            })
            .collect::<Result<Vec<_>>>()?;
        if z >= num {
            return Err(Error::Cache("corrupt node id".into()));
        }
        correctors[z] = Some(SparseVec { len, indices, values });
    }
    Ok(Some(CorrectorSet {
        coarse_level,
        fine_level,
        ell,
        orientation,
        ideal,
        key: *key,
        correctors,
        pieces: Vec::new(),
    }))
}

/// Loads from the cache when possible, otherwise computes and stores.
/// Unreadable entries are reported, removed and recomputed.
pub fn cached_correctors<S: Scalar>(
    problem: &ProblemSpec,
    sys: &FineSystem<S>,
    hier: &MeshHierarchy,
    interp: &QuasiInterpolator,
    opts: &CorrectorOptions,
    cache_dir: Option<&Path>,
) -> Result<CorrectorSet<S>> {
    let Some(dir) = cache_dir else {
        return compute_correctors(problem, sys, hier, interp, opts);
    };
    let ell = opts.ell.max(1);
    let ideal = (0..hier.coarse.num_elements()).all(|t| hier.element_patch(t, ell).saturated);
    let key = cache_key(problem, hier.coarse.level(), hier.fine.level(), ell, ideal);
    match cache_load::<S>(dir, &key) {
        Ok(Some(set)) => return Ok(set),
        Ok(None) => {}
        Err(e) => {
            log::warn!("{e}; recomputing");
            let _ = fs::remove_file(cache_path(dir, &key));
        }
    }
    let set = compute_correctors(problem, sys, hier, interp, opts)?;
    cache_store(&set, dir)?;
    Ok(set)
}
