//! Experiment drivers: reference solves, multiscale runs over (H, ℓ) grids and
//! CSV reporting.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::analysis::{best_approximation, decay_profile, error_norms, infsup_estimate, NormKind, Norms};
use crate::assembly::prolongation;
use crate::correctors::{cached_correctors, CorrectorOptions, CorrectorSet, SADDLE_TOL};
use crate::discretization::FineSystem;
use crate::error::{Error, Result};
use crate::interpolation::QuasiInterpolator;
use crate::mesh::{Mesh, MeshHierarchy};
use crate::multiscale::{assemble_coarse, assemble_coarse_galerkin, solve_coarse, CoarseLifting};
use crate::problems::{Coefficient, ProblemSpec};
use crate::scalar::Scalar;
use crate::sparse::{SparseMatrix, SparseVec};

/// Largest number of coarse unknowns for which the dense inf-sup diagnostic runs.
pub const INFSUP_LIMIT: usize = 1500;

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub problem: String,
    pub d: usize,
    #[serde(rename = "H")]
    pub coarse_width: f64,
    pub h: f64,
    pub ell: usize,
    pub kappa_or_eps: Option<f64>,
    pub seed: Option<u64>,
    #[serde(rename = "err_L2_rel")]
    pub err_l2_rel: f64,
    #[serde(rename = "err_V_rel")]
    pub err_v_rel: f64,
    #[serde(rename = "err_fem_L2_rel")]
    pub err_fem_l2_rel: f64,
    #[serde(rename = "err_fem_V_rel")]
    pub err_fem_v_rel: f64,
    #[serde(rename = "err_best_L2_rel")]
    pub err_best_l2_rel: f64,
    #[serde(rename = "err_best_V_rel")]
    pub err_best_v_rel: f64,
    pub infsup: Option<f64>,
    pub decay_c: Option<f64>,
    pub t_correctors_s: f64,
    pub t_solve_s: f64,
}

pub const CSV_HEADER: &str = "problem,d,H,h,ell,kappa_or_eps,seed,err_L2_rel,err_V_rel,err_fem_L2_rel,err_fem_V_rel,err_best_L2_rel,err_best_V_rel,infsup,decay_c,t_correctors_s,t_solve_s";

pub fn write_csv(path: &Path, rows: &[RunRecord]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Default)]
pub struct PointOptions {
    pub cache_dir: Option<PathBuf>,
    pub infsup: bool,
    pub decay: bool,
}

/// A problem with its fine discretization and reference solution, shared by
/// all coarse levels of a study.
pub struct Study<S> {
    pub problem: ProblemSpec,
    pub fine_level: u32,
    pub fine: Mesh,
    pub system: FineSystem<S>,
    pub reference: Vec<S>,
    pub norms: Norms,
}

pub struct PointResult<S> {
    pub record: RunRecord,
    pub hierarchy: MeshHierarchy,
    pub correctors: CorrectorSet<S>,
    /// Full coarse nodal vectors.
    pub coarse_ms: Vec<S>,
    pub coarse_fem: Vec<S>,
    /// The same, prolonged to the fine mesh.
    pub fine_ms: Vec<S>,
    pub fine_fem: Vec<S>,
}

impl<S: Scalar> Study<S> {
    /// Builds the fine system and solves for the Galerkin reference `u_h`.
    pub fn new(problem: ProblemSpec, fine_level: u32) -> Result<Self> {
        let fine = Mesh::build(&problem.domain, fine_level)?;
        let system = FineSystem::<S>::build(&problem, &fine)?;
        let reference = system.galerkin_solution(&problem, &fine)?;
        let norms = Norms::build(&fine, problem.kappa())?;
        Ok(Self {
            problem,
            fine_level,
            fine,
            system,
            reference,
            norms,
        })
    }

    /// Replaces the reference by nodal values of a known solution.
    pub fn with_exact_reference(mut self, exact: impl Fn([f64; 2]) -> S) -> Self {
        self.reference = (0..self.fine.num_nodes()).map(|v| exact(self.fine.point(v))).collect();
        self
    }

    pub fn hierarchy(&self, coarse_level: u32) -> Result<MeshHierarchy> {
        let hier = MeshHierarchy::build(&self.problem.domain, coarse_level, self.fine_level)?;
        self.problem.check_resolution(&hier)?;
        Ok(hier)
    }

    /// Multiscale run at one (H, ℓ) with all comparators.
    pub fn point(&self, coarse_level: u32, ell: usize, opts: &PointOptions) -> Result<PointResult<S>> {
        let hier = self.hierarchy(coarse_level)?;
        let interp = QuasiInterpolator::build(&hier)?;
        let p = prolongation(&hier);
        let lifting = CoarseLifting::<S>::build(&self.problem, &hier, &p)?;

        let t0 = Instant::now();
        let correctors = cached_correctors(
            &self.problem,
            &self.system,
            &hier,
            &interp,
            &CorrectorOptions::new(ell),
            opts.cache_dir.as_deref(),
        )?;
        let t_correctors_s = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let cs = assemble_coarse(&self.system, &hier, &interp, &p, &correctors, &lifting)?;
        let coarse_ms = solve_coarse(&cs)?;
        let t_solve_s = t1.elapsed().as_secs_f64();
        let fine_ms = p.apply(&coarse_ms);
        let ms = error_norms(&fine_ms, &self.reference, &self.norms)?;

        let galerkin = assemble_coarse_galerkin(&self.system, &interp, &p, &lifting)?;
        let coarse_fem = solve_coarse(&galerkin)?;
        let fine_fem = p.apply(&coarse_fem);
        let fem = error_norms(&fine_fem, &self.reference, &self.norms)?;

        let free = interp.free_coarse();
        let (best_l2, _) = best_approximation(&self.reference, &lifting.fine, &p, free, &self.norms, NormKind::L2)?;
        let (best_v, _) = best_approximation(&self.reference, &lifting.fine, &p, free, &self.norms, NormKind::V)?;

        let infsup = if opts.infsup && free.len() <= INFSUP_LIMIT {
            Some(self.infsup(&hier, &p, free, &correctors, &cs.matrix)?)
        } else {
            None
        };
        let decay_c = if opts.decay {
            Some(self.decay_rate(&hier, &correctors)?)
        } else {
            None
        };

        let record = RunRecord {
            problem: self.problem.name.clone(),
            d: self.fine.dim(),
            coarse_width: hier.coarse_width(),
            h: hier.fine_width(),
            ell: correctors.ell,
            kappa_or_eps: self.kappa_or_eps(),
            seed: self.seed(),
            err_l2_rel: ms.l2_rel,
            err_v_rel: ms.v_rel,
            err_fem_l2_rel: fem.l2_rel,
            err_fem_v_rel: fem.v_rel,
            err_best_l2_rel: best_l2,
            err_best_v_rel: best_v,
            infsup,
            decay_c,
            t_correctors_s,
            t_solve_s,
        };
        Ok(PointResult {
            record,
            hierarchy: hier,
            correctors,
            coarse_ms,
            coarse_fem,
            fine_ms,
            fine_fem,
        })
    }

    pub fn kappa_or_eps(&self) -> Option<f64> {
        match (self.problem.kappa(), self.problem.coefficient) {
            (Some(k), _) => Some(k),
            (None, Coefficient::Periodic1d { eps }) => Some(eps),
            _ => None,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.problem.coefficient {
            Coefficient::Checkerboard { seed, .. } => Some(seed),
            _ => None,
        }
    }

    fn infsup(
        &self,
        hier: &MeshHierarchy,
        p: &SparseMatrix<f64>,
        free: &[usize],
        correctors: &CorrectorSet<S>,
        m: &SparseMatrix<S>,
    ) -> Result<f64> {
        let n = hier.fine.num_nodes();
        let pt = p.transpose();
        let p_free: SparseMatrix<S> = pt.submatrix(free, &(0..n).collect::<Vec<_>>()).transpose().cast();
        let v: SparseMatrix<S> = self.norms.v.cast();
        let g_v = p_free.adjoint().matmul(&v.matmul(&p_free)?)?;
        let tests: Vec<SparseVec<S>> = free
            .iter()
            .map(|&z| correctors.test_basis(z, &pt))
            .collect::<Result<_>>()?;
        let mut trip = Vec::new();
        for (j, t) in tests.iter().enumerate() {
            for (&i, &val) in t.indices.iter().zip(&t.values) {
                trip.push((i, j, val));
            }
        }
        let lam = SparseMatrix::from_triplets(n, free.len(), &trip);
        let g_w = lam.adjoint().matmul(&v.matmul(&lam)?)?;
        infsup_estimate(&m.to_dense(), &g_v.to_dense(), &g_w.to_dense())
    }

    /// Decay rate of the corrector at the free coarse node closest to the centre
    /// of the domain.
    fn decay_rate(&self, hier: &MeshHierarchy, correctors: &CorrectorSet<S>) -> Result<f64> {
        let z = central_node(hier)?;
        let phi = correctors.corrector(z)?;
        let prof = decay_profile(
            phi,
            hier.coarse.point(z),
            &hier.fine,
            hier.coarse_width(),
            self.problem.kappa(),
            1e3 * SADDLE_TOL,
        )?;
        Ok(prof.rate())
    }
}

/// `max |u_{H,∞} − I_H u_h|` over coarse nodes, relative to `max |u_h|`, for
/// the method with saturated patches.
pub fn ideal_discrepancy<S: Scalar>(study: &Study<S>, coarse_level: u32, cache_dir: Option<&Path>) -> Result<f64> {
    let opts = PointOptions {
        cache_dir: cache_dir.map(Path::to_path_buf),
        ..PointOptions::default()
    };
    let res = study.point(coarse_level, saturating_order(coarse_level), &opts)?;
    let interp = QuasiInterpolator::build(&res.hierarchy)?;
    let p = prolongation(&res.hierarchy);
    let lift = CoarseLifting::<S>::build(&study.problem, &res.hierarchy, &p)?;
    let w: Vec<S> = study.reference.iter().zip(&lift.fine).map(|(a, b)| *a - *b).collect();
    let target = interp.apply_full(&w);
    let worst = res
        .coarse_ms
        .iter()
        .zip(target.iter().zip(&lift.coarse))
        .fold(0.0f64, |m, (u, (t, g))| m.max((*u - (*t + *g)).modulus()));
    let scale = study.reference.iter().fold(0.0f64, |m, v| m.max(v.modulus()));
    Ok(if scale > 0.0 { worst / scale } else { worst })
}

/// Writes nodal samples, one node per line: `x [y] re [im]`.
pub fn write_field<S: Scalar>(path: &Path, mesh: &Mesh, values: &[S]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (v, val) in values.iter().enumerate() {
        let p = mesh.point(v);
        if mesh.dim() == 1 {
            write!(w, "{:.17e}", p[0])?;
        } else {
            write!(w, "{:.17e} {:.17e}", p[0], p[1])?;
        }
        match S::FIELD {
            crate::scalar::Field::Real => writeln!(w, " {:.17e}", val.re_part())?,
            crate::scalar::Field::Complex => writeln!(w, " {:.17e} {:.17e}", val.re_part(), val.im_part())?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Free coarse node nearest to the domain centre (ties broken by index).
pub fn central_node(hier: &MeshHierarchy) -> Result<usize> {
    let c = if hier.coarse.dim() == 1 { [0.5, 0.0] } else { [0.5, 0.5] };
    hier.coarse
        .free_nodes()
        .into_iter()
        .map(|z| {
            let p = hier.coarse.point(z);
            ((p[0] - c[0]).hypot(p[1] - c[1]), z)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, z)| z)
        .ok_or_else(|| Error::InvalidProblem("no free coarse node".into()))
}

/// Patch order that covers the whole mesh from any element. Crossing one
/// cell against the diagonal of the triangulation takes two layers.
pub fn saturating_order(coarse_level: u32) -> usize {
    (2usize << coarse_level) + 1
}
