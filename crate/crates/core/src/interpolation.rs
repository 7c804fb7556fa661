//! Quasi-interpolation `I_H = E_H ∘ Π_H`: elementwise L² projection onto P1(T)
//! followed by averaging the discontinuous vertex values over adjacent elements.

use rayon::prelude::*;

use crate::assembly::element_mass;
use crate::error::{Error, Result};
use crate::mesh::{MeshHierarchy, Patch};
use crate::solve::{DenseLu, LuFactor};
use crate::sparse::SparseMatrix;

/// Sparse quasi-interpolation operator of shape (free coarse nodes × fine nodes).
///
/// Every fine node of every coarse element adjacent to a free vertex is stored
/// as a structural entry, so row supports are exactly the element stars.
#[derive(Clone, Debug)]
pub struct QuasiInterpolator {
    op: SparseMatrix<f64>,
    free_coarse: Vec<usize>,
    row_of: Vec<Option<usize>>,
    num_coarse: usize,
}

impl QuasiInterpolator {
    pub fn build(hier: &MeshHierarchy) -> Result<Self> {
        let coarse = &hier.coarse;
        let fine = &hier.fine;
        let d1 = coarse.nodes_per_element();

        // Π_H per coarse element: (d+1) rows over the element's fine nodes.
        let local: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..coarse.num_elements())
            .into_par_iter()
            .map(|t| {
                let nodes = hier.fine_nodes_of_element(t);
                let mut moments = vec![vec![0.0; nodes.len()]; d1];
                for &f in hier.children(t) {
                    let mf = element_mass(fine, f);
                    let fnodes = fine.element(f);
                    let bary: Vec<Vec<f64>> = fnodes.iter().map(|&w| coarse.barycentric(t, fine.point(w))).collect();
                    for (b, &v) in fnodes.iter().enumerate() {
                        let col = nodes.binary_search(&v).expect("child node inside parent");
                        for (k, row) in moments.iter_mut().enumerate() {
                            for (a, ba) in bary.iter().enumerate() {
                                row[col] += ba[k] * mf.data[a][b];
                            }
                        }
                    }
                }
                let mt = element_mass(coarse, t);
                let dense: Vec<Vec<f64>> = (0..d1).map(|i| (0..d1).map(|j| mt.data[i][j]).collect()).collect();
                let lu = DenseLu::new(&dense);
                let mut proj = vec![vec![0.0; nodes.len()]; d1];
                for c in 0..nodes.len() {
                    let rhs: Vec<f64> = moments.iter().map(|r| r[c]).collect();
                    let x = lu.solve(&rhs);
                    for k in 0..d1 {
                        proj[k][c] = x[k];
                    }
                }
                (nodes, proj)
            })
            .collect();

        let free_coarse = coarse.free_nodes();
        let mut row_of = vec![None; coarse.num_nodes()];
        for (r, &z) in free_coarse.iter().enumerate() {
            row_of[z] = Some(r);
        }
        let rows: Vec<Vec<(usize, f64)>> = free_coarse
            .par_iter()
            .map(|&z| {
                let stars = coarse.node_elements(z);
                let w = 1.0 / stars.len() as f64;
                let mut entries: Vec<(usize, f64)> = Vec::new();
                for &t in stars {
                    let k = coarse.element(t).iter().position(|&v| v == z).unwrap();
                    let (nodes, proj) = &local[t];
                    entries.extend(nodes.iter().zip(&proj[k]).map(|(&v, &p)| (v, w * p)));
                }
                entries.sort_by_key(|&(v, _)| v);
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                for (v, p) in entries {
                    match row.last_mut() {
                        Some(last) if last.0 == v => last.1 += p,
                        _ => row.push((v, p)),
                    }
                }
                row
            })
            .collect();
        if rows.iter().any(|r| r.iter().any(|(_, p)| !p.is_finite())) {
            return Err(Error::Singular("element mass system in the L2 projection".into()));
        }
        Ok(Self {
            op: SparseMatrix::from_rows(fine.num_nodes(), rows),
            free_coarse,
            row_of,
            num_coarse: coarse.num_nodes(),
        })
    }

    pub fn operator(&self) -> &SparseMatrix<f64> {
        &self.op
    }

    /// Coarse free nodes in row order.
    pub fn free_coarse(&self) -> &[usize] {
        &self.free_coarse
    }

    pub fn row_of(&self, coarse_node: usize) -> Option<usize> {
        self.row_of[coarse_node]
    }

    pub fn num_coarse_nodes(&self) -> usize {
        self.num_coarse
    }

    /// Applies `I_H` and returns values on free coarse nodes (row order).
    pub fn apply<S: crate::scalar::Scalar>(&self, fine: &[S]) -> Vec<S> {
        assert_eq!(fine.len(), self.op.ncols());
        (0..self.op.nrows())
            .map(|r| {
                let (cols, vals) = self.op.row(r);
                cols.iter().zip(vals).map(|(&c, &w)| fine[c].scaled(w)).sum()
            })
            .collect()
    }

    /// Applies `I_H` and scatters into a full coarse vector (zero at Dirichlet nodes).
    pub fn apply_full<S: crate::scalar::Scalar>(&self, fine: &[S]) -> Vec<S> {
        let mut out = vec![S::ZERO; self.num_coarse];
        for (r, v) in self.apply(fine).into_iter().enumerate() {
            out[self.free_coarse[r]] = v;
        }
        out
    }
}

/// The kernel constraint of a patch corrector problem: rows of `I_H` touching
/// the patch's free fine nodes, restricted to those nodes.
#[derive(Clone, Debug)]
pub struct ConstraintBlock {
    /// Coarse free node of each row.
    pub coarse_nodes: Vec<usize>,
    /// Shape (rows × patch free nodes), columns ordered as `Patch::free_nodes`.
    pub matrix: SparseMatrix<f64>,
}

pub fn constraint_rows(interp: &QuasiInterpolator, hier: &MeshHierarchy, patch: &Patch) -> ConstraintBlock {
    let fine_n = hier.fine.num_nodes();
    let mut col_of = vec![usize::MAX; fine_n];
    for (c, &v) in patch.free_nodes.iter().enumerate() {
        col_of[v] = c;
    }
    // candidate rows: free coarse vertices of the patch elements
    let mut cand: Vec<usize> = patch
        .coarse_elements
        .iter()
        .flat_map(|&t| hier.coarse.element(t).iter().copied())
        .filter(|&z| interp.row_of(z).is_some())
        .collect();
    cand.sort_unstable();
    cand.dedup();
    let mut coarse_nodes = Vec::new();
    let mut rows = Vec::new();
    for z in cand {
        let r = interp.row_of(z).unwrap();
        let (cols, vals) = interp.operator().row(r);
        let mut row: Vec<(usize, f64)> = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| col_of[c] != usize::MAX)
            .map(|(&c, &w)| (col_of[c], w))
            .collect();
        if row.is_empty() {
            continue;
        }
        row.sort_by_key(|&(c, _)| c);
        coarse_nodes.push(z);
        rows.push(row);
    }
    ConstraintBlock {
        coarse_nodes,
        matrix: SparseMatrix::from_rows(patch.free_nodes.len(), rows),
    }
}

/// Estimates `‖P·I_H‖` in the norm induced by `gram` (an SPD matrix on the
/// fine nodes listed in `nodes`) by power iteration on `G⁻¹ Qᵀ G Q`.
pub fn ih_operator_norm(
    interp: &QuasiInterpolator,
    prolongation: &SparseMatrix<f64>,
    gram: &SparseMatrix<f64>,
    nodes: &[usize],
    max_iter: usize,
) -> Result<f64> {
    let n = nodes.len();
    if gram.nrows() != n || gram.ncols() != n {
        return Err(Error::DimensionMismatch("Gram matrix does not match node list".into()));
    }
    let fine_n = prolongation.nrows();
    let free_coarse = interp.free_coarse();
    let q = |x: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; fine_n];
        for (&v, &xv) in nodes.iter().zip(x) {
            full[v] = xv;
        }
        let c = interp.apply(&full);
        let mut coarse = vec![0.0; interp.num_coarse_nodes()];
        for (&z, &cv) in free_coarse.iter().zip(&c) {
            coarse[z] = cv;
        }
        let y = prolongation.mul_vec(&coarse);
        nodes.iter().map(|&v| y[v]).collect()
    };
    let qt = |y: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; fine_n];
        for (&v, &yv) in nodes.iter().zip(y) {
            full[v] = yv;
        }
        let coarse = prolongation.transpose().mul_vec(&full);
        let mut out = vec![0.0; fine_n];
        for (r, &z) in free_coarse.iter().enumerate() {
            let (cols, vals) = interp.operator().row(r);
            for (&c, &w) in cols.iter().zip(vals) {
                out[c] += w * coarse[z];
            }
        }
        nodes.iter().map(|&v| out[v]).collect()
    };
    let lu = LuFactor::new(gram)?;
    let mut rng = crate::problems::SplitMix64::new(0x5eed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
    let mut lambda = 0.0;
    for it in 0..max_iter {
        let gqx = gram.mul_vec(&q(&x));
        let bx = qt(&gqx);
        let gx = gram.mul_vec(&x);
        let num: f64 = x.iter().zip(&bx).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        let next = num / den;
        let y = lu.solve(&bx);
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(0.0);
        }
        x = y.iter().map(|v| v / scale).collect();
        if it > 0 && (next - lambda).abs() <= 1e-6 * next.abs() {
            return Ok(next.max(0.0).sqrt());
        }
        lambda = next;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_mass, assemble_stiffness, prolongation};
    use crate::mesh::{BoundaryTag, DomainSpec};
    use crate::problems::SplitMix64;

    fn unit_square() -> DomainSpec {
        DomainSpec::Square {
            outer: BoundaryTag::Dirichlet,
        }
    }

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut r = SplitMix64::new(seed);
        (0..n).map(|_| r.next_f64() - 0.5).collect()
    }

    #[test]
    fn reproduces_coarse_functions() {
        for (d, lc, lf) in [
            (
                DomainSpec::Interval {
                    left: BoundaryTag::Dirichlet,
                    right: BoundaryTag::Robin,
                },
                3,
                6,
            ),
            (unit_square(), 2, 4),
        ] {
            let h = MeshHierarchy::build(&d, lc, lf).unwrap();
            let ih = QuasiInterpolator::build(&h).unwrap();
            let p = prolongation(&h);
            let mut vh = random(h.coarse.num_nodes(), 3);
            for z in h.coarse.dirichlet_nodes() {
                vh[z] = 0.0;
            }
            let back = ih.apply_full(&p.mul_vec(&vh));
            for (a, b) in back.iter().zip(&vh) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn idempotent_on_random_fine_vectors() {
        let h = MeshHierarchy::build(&unit_square(), 2, 5).unwrap();
        let ih = QuasiInterpolator::build(&h).unwrap();
        let p = prolongation(&h);
        let v = random(h.fine.num_nodes(), 11);
        let once = ih.apply_full(&v);
        let twice = ih.apply_full(&p.mul_vec(&once));
        let err = once.iter().zip(&twice).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-12, "{err}");
    }

    #[test]
    fn affine_reproduction_at_free_nodes() {
        // x ↦ 1 − x on the interval vanishes at the Dirichlet end x = 1
        let d = DomainSpec::Interval {
            left: BoundaryTag::Robin,
            right: BoundaryTag::Dirichlet,
        };
        let h = MeshHierarchy::build(&d, 2, 5).unwrap();
        let ih = QuasiInterpolator::build(&h).unwrap();
        let v: Vec<f64> = (0..h.fine.num_nodes()).map(|i| 1.0 - h.fine.point(i)[0]).collect();
        let c = ih.apply_full(&v);
        for z in h.coarse.free_nodes() {
            assert!((c[z] - (1.0 - h.coarse.point(z)[0])).abs() < 1e-13);
        }
    }

    #[test]
    fn rows_supported_on_element_stars() {
        let h = MeshHierarchy::build(&unit_square(), 2, 4).unwrap();
        let ih = QuasiInterpolator::build(&h).unwrap();
        let hc = h.coarse_width();
        for (r, &z) in ih.free_coarse().iter().enumerate() {
            let pz = h.coarse.point(z);
            for &c in ih.operator().row(r).0 {
                let q = h.fine.point(c);
                assert!((q[0] - pz[0]).abs() <= hc + 1e-12 && (q[1] - pz[1]).abs() <= hc + 1e-12);
            }
        }
    }

    #[test]
    fn constraint_rows_one_dimensional() {
        let d = DomainSpec::Interval {
            left: BoundaryTag::Dirichlet,
            right: BoundaryTag::Dirichlet,
        };
        let h = MeshHierarchy::build(&d, 3, 5).unwrap();
        let ih = QuasiInterpolator::build(&h).unwrap();
        let patch = h.element_patch(4, 1);
        let block = constraint_rows(&ih, &h, &patch);
        // brute force: rows whose support meets the patch's free nodes
        let brute: Vec<usize> = ih
            .free_coarse()
            .iter()
            .enumerate()
            .filter(|(r, _)| ih.operator().row(*r).0.iter().any(|c| patch.free_nodes.binary_search(c).is_ok()))
            .map(|(_, &z)| z)
            .collect();
        assert_eq!(block.coarse_nodes, brute);
        assert_eq!(block.coarse_nodes, vec![3, 4, 5, 6]);
        let sat = h.element_patch(0, 10);
        assert_eq!(constraint_rows(&ih, &h, &sat).coarse_nodes, ih.free_coarse());
    }

    #[test]
    fn operator_norm_identity_and_lower_bound() {
        let same = MeshHierarchy::build(&unit_square(), 3, 3).unwrap();
        let ih = QuasiInterpolator::build(&same).unwrap();
        let free = same.fine.free_nodes();
        let k = assemble_stiffness(&same.fine, &vec![1.0; same.fine.num_elements()]).unwrap();
        let g = k.submatrix(&free, &free);
        let norm = ih_operator_norm(&ih, &prolongation(&same), &g, &free, 1000).unwrap();
        assert!((norm - 1.0).abs() < 1e-6, "{norm}");

        let h = MeshHierarchy::build(&unit_square(), 2, 4).unwrap();
        let ih = QuasiInterpolator::build(&h).unwrap();
        let free = h.fine.free_nodes();
        let m = assemble_mass(&h.fine).submatrix(&free, &free);
        let norm = ih_operator_norm(&ih, &prolongation(&h), &m, &free, 5000).unwrap();
        assert!(norm >= 1.0 - 1e-9, "{norm}");
    }

    #[test]
    fn stability_constant_uniform_across_levels() {
        let mut constants = Vec::new();
        for lc in 2..=4 {
            let h = MeshHierarchy::build(&unit_square(), lc, lc + 2).unwrap();
            let ih = QuasiInterpolator::build(&h).unwrap();
            let p = prolongation(&h);
            let mut worst = 0.0f64;
            for s in 0..100 {
                let mut v = random(h.fine.num_nodes(), 1000 + s);
                for z in h.fine.dirichlet_nodes() {
                    v[z] = 0.0;
                }
                let iv = p.mul_vec(&ih.apply_full(&v));
                for t in 0..h.coarse.num_elements() {
                    let on_t = energy(&h, &iv, hier_children(&h, &[t]));
                    let star: Vec<usize> = h.element_patch(t, 1).coarse_elements;
                    let on_star = energy(&h, &v, hier_children(&h, &star));
                    worst = worst.max((on_t / on_star).sqrt());
                }
            }
            constants.push(worst);
        }
        let max = constants.iter().cloned().fold(0.0, f64::max);
        let min = constants.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 2.0, "{constants:?}");
    }

    fn hier_children(h: &MeshHierarchy, coarse: &[usize]) -> Vec<usize> {
        coarse.iter().flat_map(|&t| h.children(t).iter().copied()).collect()
    }

    fn energy(h: &MeshHierarchy, v: &[f64], elements: Vec<usize>) -> f64 {
        elements
            .iter()
            .map(|&e| {
                let k = crate::assembly::element_stiffness(&h.fine, e);
                let n = h.fine.element(e);
                let mut s = 0.0;
                for i in 0..n.len() {
                    for j in 0..n.len() {
                        s += v[n[i]] * k.data[i][j] * v[n[j]];
                    }
                }
                s
            })
            .sum()
    }
}
