//! Closed-form and independently computed references for the model problems.

use msfem::analysis::{error_norms, Norms};
use msfem::discretization::FineSystem;
use msfem::experiments::{PointOptions, Study};
use msfem::mesh::Mesh;
use msfem::multiscale::standard_fem;
use msfem::problems::{
    helmholtz_1d, helmholtz_1d_exact, periodic_1d, periodic_1d_exact, periodic_1d_flipped,
    periodic_1d_arithmetic, periodic_1d_homogenized,
};
use msfem::scalar::Complex64;

fn max_nodal_gap(mesh: &Mesh, u: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    (0..mesh.num_nodes())
        .map(|v| (u[v] - f(mesh.point(v)[0])).abs())
        .fold(0.0, f64::max)
}

#[test]
fn periodic_closed_form_matches_fine_solution_and_flipped_sign_does_not() {
    let eps = 1.0 / 32.0;
    let p = periodic_1d(eps).unwrap();
    let mesh = Mesh::build(&p.domain, 12).unwrap();
    let u = FineSystem::<f64>::build(&p, &mesh)
        .unwrap()
        .galerkin_solution(&p, &mesh)
        .unwrap();
    let derived = max_nodal_gap(&mesh, &u, |x| periodic_1d_exact(eps, x));
    let flipped = max_nodal_gap(&mesh, &u, |x| periodic_1d_flipped(eps, x));
    let homogenized = max_nodal_gap(&mesh, &u, periodic_1d_homogenized);
    println!("max nodal gap: derived {derived:.3e}, flipped {flipped:.3e}, homogenized {homogenized:.3e}");
    assert!(derived < 1e-5, "{derived}");
    // the flipped bracket is off by twice the oscillatory term, which is O(ε)
    assert!(flipped > 1e-3 && flipped < 8.0 * eps, "{flipped}");
    assert!(homogenized > 1e-3 && homogenized < 4.0 * eps, "{homogenized}");
}

#[test]
fn coarse_fem_sees_the_arithmetic_mean() {
    // coarse elements span whole periods, so coarse FEM sees the arithmetic
    // mean 1/√3 instead of the harmonic mean 1/2 and converges to 2√3(x − x²);
    // relative to 4(x − x²) that is off by (4 − 2√3)/4, up to O(ε)
    let eps = 1.0 / 32.0;
    let study = Study::<f64>::new(periodic_1d(eps).unwrap(), 12).unwrap();
    let predicted = (4.0 - 2.0 * 3f64.sqrt()) / 4.0;
    for lc in [3, 4, 5] {
        let res = study.point(lc, 1, &PointOptions::default()).unwrap();
        let r = &res.record;
        assert!((r.err_fem_l2_rel - predicted).abs() < 0.05, "H=2^-{lc}: {}", r.err_fem_l2_rel);
        let limit = max_nodal_gap(&res.hierarchy.coarse, &res.coarse_fem, periodic_1d_arithmetic);
        assert!(limit < 0.02, "H=2^-{lc}: {limit}");
    }
}

#[test]
fn direct_coarse_fem_matches_galerkin_comparator_for_helmholtz() {
    let kappa = 16.0;
    let p = helmholtz_1d(kappa).unwrap();
    let study = Study::<Complex64>::new(p.clone(), 9).unwrap();
    let res = study.point(5, 1, &PointOptions::default()).unwrap();
    let coarse = Mesh::build(&p.domain, 5).unwrap();
    let direct = standard_fem::<Complex64>(&p, &coarse).unwrap();
    for (a, b) in direct.iter().zip(&res.coarse_fem) {
        assert!((a - b).norm() < 1e-10);
    }
}

#[test]
fn helmholtz_reference_converges_to_plane_wave() {
    let kappa = 32.0;
    let p = helmholtz_1d(kappa).unwrap();
    let mut errs = Vec::new();
    for level in [8, 9, 10] {
        let mesh = Mesh::build(&p.domain, level).unwrap();
        let u = FineSystem::<Complex64>::build(&p, &mesh)
            .unwrap()
            .galerkin_solution(&p, &mesh)
            .unwrap();
        let exact: Vec<Complex64> = (0..mesh.num_nodes())
            .map(|v| helmholtz_1d_exact(kappa, mesh.point(v)[0]))
            .collect();
        let norms = Norms::build(&mesh, Some(kappa)).unwrap();
        errs.push(error_norms(&u, &exact, &norms).unwrap().l2_rel);
    }
    assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
}
