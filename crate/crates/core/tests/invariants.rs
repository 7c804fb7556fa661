use proptest::prelude::*;

use msfem::assembly::{assemble_stiffness, prolongation};
use msfem::config::parse_int_list;
use msfem::correctors::{compute_correctors, CorrectorOptions, KERNEL_TOL};
use msfem::discretization::FineSystem;
use msfem::interpolation::QuasiInterpolator;
use msfem::mesh::{BoundaryTag, DomainSpec, MeshHierarchy};
use msfem::problems::random_checkerboard;
use msfem::sparse::SparseMatrix;

fn square() -> DomainSpec {
    DomainSpec::Square {
        outer: BoundaryTag::Dirichlet,
    }
}

fn interval() -> DomainSpec {
    DomainSpec::Interval {
        left: BoundaryTag::Dirichlet,
        right: BoundaryTag::Dirichlet,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn interpolation_reproduces_coarse_functions(
        two_d in any::<bool>(),
        lc in 1u32..3,
        extra in 1u32..3,
        seed in any::<u64>(),
    ) {
        let domain = if two_d { square() } else { interval() };
        let hier = MeshHierarchy::build(&domain, lc, lc + extra).unwrap();
        let interp = QuasiInterpolator::build(&hier).unwrap();
        let p = prolongation(&hier);
        let mut rng = msfem::problems::SplitMix64::new(seed);
        let mut v = vec![0.0; hier.coarse.num_nodes()];
        for &z in interp.free_coarse() {
            v[z] = rng.next_f64() - 0.5;
        }
        let back = interp.apply_full(&p.apply(&v));
        for (a, b) in back.iter().zip(&v) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn stiffness_is_symmetric_with_constants_in_its_kernel(
        level in 1u32..5,
        values in proptest::collection::vec(0.1f64..100.0, 1..64),
    ) {
        let mesh = msfem::mesh::Mesh::build(&square(), level).unwrap();
        let coef: Vec<f64> = (0..mesh.num_elements()).map(|e| values[e % values.len()]).collect();
        let k = assemble_stiffness(&mesh, &coef).unwrap();
        prop_assert!(k.asymmetry() <= 1e-13 * k.max_abs());
        let ones = vec![1.0; mesh.num_nodes()];
        let r = k.mul_vec(&ones);
        prop_assert!(r.iter().all(|x| x.abs() <= 1e-11 * k.max_abs()));
    }

    #[test]
    fn triplet_assembly_matches_dense_accumulation(
        entries in proptest::collection::vec((0usize..6, 0usize..5, -10.0f64..10.0), 0..40),
    ) {
        let a = SparseMatrix::from_triplets(6, 5, &entries);
        let mut dense = vec![vec![0.0; 5]; 6];
        for &(i, j, v) in &entries {
            dense[i][j] += v;
        }
        let got = a.to_dense();
        for i in 0..6 {
            for j in 0..5 {
                prop_assert!((got[i][j] - dense[i][j]).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(a.transpose().transpose().to_dense(), got);
    }

    #[test]
    fn integer_lists_expand_ranges(a in 0u32..20, len in 0u32..10, tail in 0u32..50) {
        let text = format!("{a}..{}, {tail}", a + len);
        let got = parse_int_list::<u32>(&text).unwrap();
        let mut want: Vec<u32> = (a..=a + len).collect();
        want.push(tail);
        prop_assert_eq!(got, want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn localized_correctors_lie_in_the_kernel(seed in 0u64..1000, ell in 1usize..3) {
        let problem = random_checkerboard(seed);
        let hier = MeshHierarchy::build(&problem.domain, 2, 5).unwrap();
        let interp = QuasiInterpolator::build(&hier).unwrap();
        let sys = FineSystem::<f64>::build(&problem, &hier.fine).unwrap();
        let set = compute_correctors(&problem, &sys, &hier, &interp, &CorrectorOptions::new(ell)).unwrap();
        for &z in interp.free_coarse() {
            let phi = set.corrector(z).unwrap();
            let scale = phi.max_abs().max(1.0);
            let ih = interp.apply(&phi.to_dense());
            prop_assert!(ih.iter().all(|v| v.abs() <= KERNEL_TOL * scale));
        }
    }
}
