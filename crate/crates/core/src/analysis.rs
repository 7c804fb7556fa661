//! Error norms, best approximation in the coarse space, corrector decay
//! profiles and the discrete inf-sup diagnostic.

use faer::{Mat, Side};

use crate::assembly::{assemble_mass, assemble_stiffness, element_mass, element_stiffness};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::{Complex64, Scalar};
use crate::solve::LuFactor;
use crate::sparse::{SparseMatrix, SparseVec};

/// Gram matrices of the L² and V inner products on a fine mesh.
#[derive(Clone, Debug)]
pub struct Norms {
    pub l2: SparseMatrix<f64>,
    pub v: SparseMatrix<f64>,
    /// `None` for the diffusion seminorm, `Some(κ)` for the κ-weighted norm.
    pub kappa: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L2,
    V,
}

impl Norms {
    /// V is the unweighted H¹ seminorm for diffusion and `κ²‖·‖² + |·|²_{H¹}` for Helmholtz.
    pub fn build(mesh: &Mesh, kappa: Option<f64>) -> Result<Self> {
        let l2 = assemble_mass(mesh);
        let k = assemble_stiffness(mesh, &vec![1.0; mesh.num_elements()])?;
        let v = match kappa {
            None => k,
            Some(kappa) => k.linear_combination(1.0, &l2, kappa * kappa)?,
        };
        Ok(Self { l2, v, kappa })
    }

    pub fn gram(&self, kind: NormKind) -> &SparseMatrix<f64> {
        match kind {
            NormKind::L2 => &self.l2,
            NormKind::V => &self.v,
        }
    }

    pub fn norm<S: Scalar>(&self, kind: NormKind, x: &[S]) -> f64 {
        quadratic_norm(self.gram(kind), x)
    }
}

/// `sqrt(Re xᴴ G x)` for a real symmetric `G`.
pub fn quadratic_norm<S: Scalar>(g: &SparseMatrix<f64>, x: &[S]) -> f64 {
    let gx = g.apply(x);
    let s: f64 = x.iter().zip(&gx).map(|(a, b)| (a.conjugate() * *b).re_part()).sum();
    s.max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub l2_rel: f64,
    pub v_rel: f64,
}

/// Relative L² and V errors of a fine-mesh approximation against a reference.
pub fn error_norms<S: Scalar>(approx: &[S], reference: &[S], norms: &Norms) -> Result<ErrorNorms> {
    if approx.len() != reference.len() || approx.len() != norms.l2.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "error norms of vectors of length {} and {} on a mesh with {} nodes",
            approx.len(),
            reference.len(),
            norms.l2.nrows()
        )));
    }
    let diff: Vec<S> = approx.iter().zip(reference).map(|(a, b)| *a - *b).collect();
    let rel = |kind| {
        let r = norms.norm(kind, reference);
        let e = norms.norm(kind, &diff);
        if r == 0.0 {
            e
        } else {
            e / r
        }
    };
    Ok(ErrorNorms {
        l2_rel: rel(NormKind::L2),
        v_rel: rel(NormKind::V),
    })
}

/// Best approximation of `reference` from `lifting + span{P λ_z : z free}` in the
/// selected norm. Returns the relative error and the approximant.
pub fn best_approximation<S: Scalar>(
    reference: &[S],
    lifting: &[S],
    prolongation: &SparseMatrix<f64>,
    free_coarse: &[usize],
    norms: &Norms,
    kind: NormKind,
) -> Result<(f64, Vec<S>)> {
    let n = prolongation.nrows();
    if reference.len() != n || lifting.len() != n {
        return Err(Error::DimensionMismatch("best approximation".into()));
    }
    let g = norms.gram(kind);
    let pt_free = prolongation.transpose().submatrix(free_coarse, &(0..n).collect::<Vec<_>>());
    let p_free = pt_free.transpose();
    let gram_c = pt_free.matmul(&g.matmul(&p_free)?)?;
    let target: Vec<S> = reference.iter().zip(lifting).map(|(a, b)| *a - *b).collect();
    let rhs = pt_free.apply(&g.apply(&target));
    let coeff = if free_coarse.is_empty() || crate::scalar::norm2(&rhs) == 0.0 {
        vec![S::ZERO; free_coarse.len()]
    } else {
        let gc: SparseMatrix<S> = gram_c.cast();
        LuFactor::new(&gc)?.solve_refined(&gc, &rhs, 1e-10)?
    };
    let approx: Vec<S> = p_free.apply(&coeff).iter().zip(lifting).map(|(a, b)| *a + *b).collect();
    let diff: Vec<S> = reference.iter().zip(&approx).map(|(a, b)| *a - *b).collect();
    let r = quadratic_norm(g, reference);
    let e = quadratic_norm(g, &diff);
    Ok((if r == 0.0 { e } else { e / r }, approx))
}

/// Tail norms of a function outside growing balls and their log-linear fit.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayProfile {
    pub center: [f64; 2],
    /// Radii `R_k = k·H`, `k = 0, 1, …`.
    pub radii: Vec<f64>,
    /// `‖v‖_{V, Ω∖B_{R_k}}`; the first entry is the full norm.
    pub tails: Vec<f64>,
    /// Fitted `log(tail) ≈ intercept + slope·R/H` over the usable window.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Number of radii inside the fit window.
    pub used: usize,
}

impl DecayProfile {
    /// Decay rate `c` in `exp(−c R/H)`.
    pub fn rate(&self) -> f64 {
        -self.slope
    }

    /// Fitted tail reduction per layer of width H.
    pub fn layer_ratio(&self) -> f64 {
        self.slope.exp()
    }
}

/// Decay profile of `v` around `center`. Element energies (V-norm, κ-weighted
/// when `kappa` is given) are assigned to balls by element centroid; the fit
/// uses radii whose tail exceeds `floor` times the full norm.
pub fn decay_profile<S: Scalar>(
    v: &SparseVec<S>,
    center: [f64; 2],
    mesh: &Mesh,
    coarse_width: f64,
    kappa: Option<f64>,
    floor: f64,
) -> Result<DecayProfile> {
    if v.len != mesh.num_nodes() {
        return Err(Error::DimensionMismatch("decay profile vector".into()));
    }
    let x = v.to_dense();
    let mut energies: Vec<(f64, f64)> = (0..mesh.num_elements())
        .map(|e| {
            let nodes = mesh.element(e);
            let k = element_stiffness(mesh, e);
            let m = element_mass(mesh, e);
            let w = kappa.map_or(0.0, |k| k * k);
            let mut s = 0.0;
            for i in 0..nodes.len() {
                for j in 0..nodes.len() {
                    let a = k.data[i][j] + w * m.data[i][j];
                    s += (x[nodes[i]].conjugate() * x[nodes[j]]).re_part() * a;
                }
            }
            let c = mesh.centroid(e);
            let r = (c[0] - center[0]).hypot(c[1] - center[1]);
            (r, s.max(0.0))
        })
        .collect();
    energies.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_r = energies.last().map_or(0.0, |e| e.0);
    let kmax = (max_r / coarse_width).ceil() as usize + 1;
    // suffix sums of energies sorted by distance
    let mut suffix = vec![0.0; energies.len() + 1];
    for i in (0..energies.len()).rev() {
        suffix[i] = suffix[i + 1] + energies[i].1;
    }
    let mut radii = Vec::with_capacity(kmax + 1);
    let mut tails = Vec::with_capacity(kmax + 1);
    for k in 0..=kmax {
        let r = k as f64 * coarse_width;
        let first_outside = energies.partition_point(|e| e.0 <= r);
        radii.push(r);
        tails.push(suffix[first_outside].sqrt());
    }
    let total = tails[0];
    let usable: Vec<(f64, f64)> = (1..tails.len())
        .filter(|&k| tails[k] > floor * total && tails[k] > 0.0)
        .map(|k| (k as f64, tails[k].ln()))
        .collect();
    if usable.len() < 3 {
        return Err(Error::TooFewRadii(usable.len()));
    }
    let n = usable.len() as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = usable.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(DecayProfile {
        center,
        radii,
        tails,
        slope,
        intercept,
        r_squared,
        used: usable.len(),
    })
}

fn to_faer<S: Scalar>(a: &[Vec<S>]) -> Mat<Complex64> {
    let n = a.len();
    let m = a.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| Complex64::new(a[i][j].re_part(), a[i][j].im_part()))
}

/// `G^{-1/2}` of a Hermitian positive definite matrix.
fn inverse_sqrt(g: &Mat<Complex64>, what: &str) -> Result<Mat<Complex64>> {
    let n = g.nrows();
    let mut herm = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            herm = herm.max((g[(i, j)] - g[(j, i)].conj()).norm());
            scale = scale.max(g[(i, j)].norm());
        }
    }
    if herm > 1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotSpd(format!("{what} Gram matrix is not Hermitian")));
    }
    let eig = g
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NotSpd(format!("{what} Gram eigendecomposition failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let u = eig.U();
    let lmax = (0..n).map(|i| s[i].re).fold(0.0f64, f64::max);
    if (0..n).any(|i| !(s[i].re > 1e-14 * lmax)) {
        return Err(Error::NotSpd(format!("{what} Gram matrix is not positive definite")));
    }
    Ok(Mat::from_fn(n, n, |i, j| {
        (0..n)
            .map(|k| u[(i, k)] * u[(j, k)].conj() * (1.0 / s[k].re.sqrt()))
            .sum()
    }))
}

/// Smallest generalized singular value of `m` (rows = test, columns = trial)
/// in the trial metric `g_v` and test metric `g_w`:
/// `σ_min(G_W^{-1/2} M G_V^{-1/2})`.
pub fn infsup_estimate<S: Scalar>(m: &[Vec<S>], g_v: &[Vec<S>], g_w: &[Vec<S>]) -> Result<f64> {
    let n = m.len();
    if g_w.len() != n || m.iter().any(|r| r.len() != g_v.len()) || g_v.iter().any(|r| r.len() != g_v.len()) {
        return Err(Error::DimensionMismatch("inf-sup estimate".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let wv = inverse_sqrt(&to_faer(g_v), "trial")?;
    let ww = inverse_sqrt(&to_faer(g_w), "test")?;
    let x = &ww * &to_faer(m) * &wv;
    let sv = x
        .singular_values()
        .map_err(|e| Error::Singular(format!("singular value decomposition failed: {e:?}")))?;
    Ok(sv.last().copied().unwrap_or(0.0))
}
