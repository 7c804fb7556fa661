//! Acceptance checks. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; exits nonzero if any fails.

use std::time::Instant;

use msfem::analysis::Norms;
use msfem::assembly::{assemble_stiffness, prolongation};
use msfem::correctors::{cache_load, cache_store, compute_correctors, CorrectorOptions, KERNEL_TOL};
use msfem::discretization::FineSystem;
use msfem::experiments::{ideal_discrepancy, saturating_order, PointOptions, Study};
use msfem::interpolation::QuasiInterpolator;
use msfem::mesh::{Mesh, MeshHierarchy};
use msfem::multiscale::{assemble_coarse, CoarseLifting};
use msfem::problems::{
    helmholtz_1d, helmholtz_1d_exact, periodic_1d, random_checkerboard, scattering_2d,
};
use msfem::scalar::{Complex64, Scalar};

type Outcome = Result<(bool, String), msfem::Error>;

fn max_abs<S: Scalar>(v: &[S]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.modulus()))
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn criterion_1() -> Outcome {
    let d = ideal_discrepancy(&Study::<f64>::new(random_checkerboard(7), 5)?, 2, None)?;
    let h = ideal_discrepancy(&Study::<Complex64>::new(helmholtz_1d(8.0)?, 8)?, 4, None)?;
    Ok((
        d <= 1e-8 && h <= 1e-8,
        format!("diffusion 2D {d:.2e}, Helmholtz 1D {h:.2e} (tol 1e-8)"),
    ))
}

fn criterion_2() -> Outcome {
    let study = Study::<f64>::new(periodic_1d(1.0 / 32.0)?, 12)?;
    let mut fem = Vec::new();
    for lc in [3, 4, 5] {
        fem.push(study.point(lc, 1, &PointOptions::default())?.record.err_fem_l2_rel);
    }
    let ms = study.point(4, 2, &PointOptions::default())?.record.err_l2_rel;
    let ok = fem.iter().all(|&e| e >= 0.10) && ms <= 0.02;
    Ok((ok, format!("FEM L2 {fem:.4?} (≥ 0.10), MS-PG L2 {ms:.2e} (≤ 0.02)")))
}

fn criterion_3() -> Outcome {
    let study = Study::<f64>::new(random_checkerboard(7), 8)?;
    let opts = PointOptions::default();
    let mut ms = Vec::new();
    let mut best = Vec::new();
    for lc in 1..=4 {
        let r = study.point(lc, 2, &opts)?.record;
        ms.push(r.err_l2_rel);
        best.push(r.err_best_l2_rel);
    }
    let a = ms.iter().zip(&best).all(|(e, b)| *e <= 4.0 * b);
    let b = ms.windows(2).all(|w| w[1] < w[0]);
    let e1 = study.point(4, 1, &opts)?.record.err_l2_rel;
    let e3 = study.point(4, 3, &opts)?.record.err_l2_rel;
    let c = e3 <= e1;
    Ok((
        a && b && c,
        format!("ℓ=2 L2 {}, best {}; H=2^-4: ℓ=1 {e1:.3e}, ℓ=3 {e3:.3e} [a={a} b={b} c={c}]", sci(&ms), sci(&best)),
    ))
}

fn criterion_4() -> Outcome {
    let mut rates = Vec::new();
    let mut ratios = Vec::new();
    for seed in [7, 8, 9] {
        let study = Study::<f64>::new(random_checkerboard(seed), 6)?;
        let hier = study.hierarchy(3)?;
        let interp = QuasiInterpolator::build(&hier)?;
        let set = compute_correctors(
            &study.problem,
            &study.system,
            &hier,
            &interp,
            &CorrectorOptions::new(saturating_order(3)),
        )?;
        let z = msfem::experiments::central_node(&hier)?;
        let prof = msfem::analysis::decay_profile(
            set.corrector(z)?,
            hier.coarse.point(z),
            &hier.fine,
            hier.coarse_width(),
            None,
            1e3 * msfem::correctors::SADDLE_TOL,
        )?;
        rates.push(prof.rate());
        ratios.push(prof.layer_ratio());
    }
    let lo = rates.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = rates.iter().cloned().fold(0.0, f64::max);
    let spread = (hi - lo) / lo;
    let ok = lo > 0.0 && ratios.iter().all(|&r| r <= 0.7) && spread <= 0.2;
    Ok((
        ok,
        format!("c {rates:.3?}, layer ratio {ratios:.3?} (≤ 0.7), spread {:.1}% (≤ 20%)", 100.0 * spread),
    ))
}

fn criterion_5() -> Outcome {
    let kappa = 128.0;
    let study = Study::<Complex64>::new(helmholtz_1d(kappa)?, 12)?
        .with_exact_reference(|p| helmholtz_1d_exact(kappa, p[0]));
    let r = study.point(7, 5, &PointOptions::default())?.record;
    let ok = r.err_fem_v_rel >= 0.5 && r.err_v_rel <= 2.0 * r.err_best_v_rel;
    Ok((
        ok,
        format!(
            "FEM V {:.3} (≥ 0.5), MS-PG V {:.3e}, best V {:.3e} (ratio {:.3} ≤ 2)",
            r.err_fem_v_rel,
            r.err_v_rel,
            r.err_best_v_rel,
            r.err_v_rel / r.err_best_v_rel
        ),
    ))
}

fn criterion_6() -> Outcome {
    let study = Study::<Complex64>::new(scattering_2d(32.0)?, 8)?;
    let opts = PointOptions::default();
    let mut ok = true;
    let mut detail = String::new();
    let mut fem_5 = 0.0;
    let mut ms_5_3 = 0.0;
    for lc in [5, 6] {
        let mut errs = Vec::new();
        for ell in 1..=3 {
            let r = study.point(lc, ell, &opts)?.record;
            if lc == 5 && ell == 3 {
                fem_5 = r.err_fem_v_rel;
                ms_5_3 = r.err_v_rel;
            }
            errs.push(r.err_v_rel);
        }
        ok &= errs.windows(2).all(|w| w[1] < w[0]);
        detail.push_str(&format!("H=2^-{lc}: V {}; ", sci(&errs)));
    }
    ok &= ms_5_3 <= 0.5 * fem_5;
    detail.push_str(&format!("FEM V at H=2^-5 {fem_5:.3e}, ratio {:.3} (≤ 0.5)", ms_5_3 / fem_5));
    Ok((ok, detail))
}

fn invariant_suite() -> Result<Vec<(&'static str, bool)>, msfem::Error> {
    let mut checks = Vec::new();
    let problem = random_checkerboard(7);
    let hier = MeshHierarchy::build(&problem.domain, 2, 6)?;
    let interp = QuasiInterpolator::build(&hier)?;
    let p = prolongation(&hier);

    // I_H ∘ I_H = I_H
    let n = hier.fine.num_nodes();
    let v: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
    let once = p.apply(&interp.apply_full(&v));
    let twice = p.apply(&interp.apply_full(&once));
    let idem = once.iter().zip(&twice).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    checks.push(("interpolation idempotence", idem <= 1e-12));

    // symmetric stiffness, linear in the coefficient
    let coef = problem.coefficient_field(&hier.fine);
    let k = assemble_stiffness(&hier.fine, &coef)?;
    let k3 = assemble_stiffness(&hier.fine, &coef.iter().map(|c| 3.0 * c).collect::<Vec<_>>())?;
    let diff = k3.linear_combination(1.0, &k, -3.0)?.max_abs();
    checks.push(("assembly symmetry and scaling", k.asymmetry() <= 1e-14 * k.max_abs() && diff <= 1e-12 * k3.max_abs()));

    // kernel constraints and I_H Λ = λ_z for localized correctors
    let sys = FineSystem::<f64>::build(&problem, &hier.fine)?;
    let set = compute_correctors(&problem, &sys, &hier, &interp, &CorrectorOptions::new(1))?;
    let pt = p.transpose();
    let mut kernel = 0.0f64;
    let mut nodal = 0.0f64;
    for &z in interp.free_coarse() {
        let phi = set.corrector(z)?;
        kernel = kernel.max(max_abs(&interp.apply(&phi.to_dense())) / phi.max_abs().max(1.0));
        let lam = set.test_basis(z, &pt)?;
        let mut e = interp.apply_full(&lam.to_dense());
        e[z] -= 1.0;
        nodal = nodal.max(max_abs(&e));
    }
    checks.push(("kernel constraints", kernel <= KERNEL_TOL));
    checks.push(("I_H Λ_z = λ_z", nodal <= KERNEL_TOL));

    // ideal diffusion coarse matrix is symmetric
    let ideal = compute_correctors(&problem, &sys, &hier, &interp, &CorrectorOptions::new(saturating_order(2)))?;
    let lift = CoarseLifting::<f64>::build(&problem, &hier, &p)?;
    let cs = assemble_coarse(&sys, &hier, &interp, &p, &ideal, &lift)?;
    checks.push(("ideal coarse matrix symmetry", cs.matrix.asymmetry() <= 1e-10 * cs.matrix.max_abs()));

    // cache round trip is bit-exact
    let dir = tempfile::tempdir()?;
    cache_store(&set, dir.path())?;
    let back = cache_load::<f64>(dir.path(), &set.key)?;
    let exact = back.is_some_and(|b| {
        b.correctors.len() == set.correctors.len()
            && b.correctors.iter().zip(&set.correctors).all(|(x, y)| match (x, y) {
                (Some(x), Some(y)) => {
                    x.indices == y.indices
                        && x.values.iter().zip(&y.values).all(|(a, b)| a.to_bits() == b.to_bits())
                }
                (None, None) => true,
                _ => false,
            })
    });
    checks.push(("cache round trip", exact));

    // worker count does not change results
    let run = |threads: usize| -> Result<Vec<u64>, msfem::Error> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| msfem::Error::InvalidProblem(e.to_string()))?;
        pool.install(|| {
            let study = Study::<Complex64>::new(helmholtz_1d(16.0)?, 9)?;
            let r = study.point(4, 2, &PointOptions::default())?;
            Ok(r.coarse_ms.iter().flat_map(|c| [c.re.to_bits(), c.im.to_bits()]).collect())
        })
    };
    checks.push(("determinism across worker counts", run(1)? == run(4)?));

    // norms of the fine mesh are consistent with the unit square
    let mesh = Mesh::build(&problem.domain, 4)?;
    let norms = Norms::build(&mesh, None)?;
    let one = vec![1.0f64; mesh.num_nodes()];
    checks.push(("L2 norm of the constant", (norms.norm(msfem::analysis::NormKind::L2, &one) - 1.0).abs() <= 1e-12));
    Ok(checks)
}

fn criterion_7() -> Outcome {
    let checks = invariant_suite()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            format!("{} invariants hold", checks.len())
        } else {
            format!("failed: {}", failed.join(", "))
        },
    ))
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("1 ideal-method identity", criterion_1),
        ("2 1D homogenization", criterion_2),
        ("3 2D homogenization", criterion_3),
        ("4 corrector decay", criterion_4),
        ("5 Helmholtz 1D pollution", criterion_5),
        ("6 Helmholtz 2D scattering", criterion_6),
        ("7 invariant suite", criterion_7),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {name}: {} ({detail}) [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
