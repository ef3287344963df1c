use proptest::prelude::*;

use speclab_core::cube_basis::{
    boundary_terms, check_poincare, high_mode_projection, neumann_cube_basis, trace_bound_check,
};
use speclab_core::instances::{random_family, random_unit_vector};
use speclab_core::operator::{
    build_laplacian, hamiltonian, sample_disorder, BoundaryCondition, BoxDomain, SingleSite, SiteDistribution,
};
use speclab_core::spectral::{
    birman_schwinger_crossings, eigendecompose, eigenvalues_dense, projector_trace, EnergyInterval,
};
use speclab_core::averaging::support_norm2;
use speclab_core::ssf::{ssf_bound_check, ssf_trace_difference};

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![
        Just(BoundaryCondition::Dirichlet),
        Just(BoundaryCondition::Neumann),
        Just(BoundaryCondition::Periodic),
    ]
}

fn norm2(f: &[f64], w: f64) -> f64 {
    w * f.iter().map(|x| x * x).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn boundary_terms_telescope(d in 1usize..=2, m in 2usize..=4, bc in bc_strategy(), seed in any::<u64>()) {
        let dom = BoxDomain::new(d, 1, m, bc).unwrap();
        let lap = build_laplacian(&dom).unwrap();
        let psi = random_unit_vector(dom.n_points(), dom.cell_volume(), seed);
        let lpsi = lap.matvec(&psi);
        let sum: f64 = boundary_terms(&psi, &lpsi, &dom).unwrap().iter().sum();
        prop_assert!(sum.abs() <= 1e-10 * norm2(&lpsi, dom.cell_volume()).sqrt());
    }

    #[test]
    fn cube_parseval_and_poincare(d in 1usize..=2, m in 2usize..=5, seed in any::<u64>()) {
        let dom = BoxDomain::new(d, 1, m, BoundaryCondition::Dirichlet).unwrap();
        let psi = random_unit_vector(dom.n_points(), dom.cell_volume(), seed);
        let k = (seed % dom.n_cubes() as u64) as usize;
        let full = neumann_cube_basis(m, d, m - 1).unwrap();
        let coeff = full.coefficients(&psi, k, &dom).unwrap();
        let cube_mass: f64 = dom.cell_volume() * dom.cube_points(k).iter().map(|&p| psi[p] * psi[p]).sum::<f64>();
        prop_assert!((coeff.iter().map(|c| c * c).sum::<f64>() - cube_mass).abs() < 1e-10);
        for n in 0..m - 1 {
            let b = neumann_cube_basis(m, d, n).unwrap();
            let high = high_mode_projection(&psi, &b, k, &dom).unwrap();
            let low: f64 = b.coefficients(&psi, k, &dom).unwrap().iter().map(|c| c * c).sum();
            prop_assert!((cube_mass - norm2(&high, dom.cell_volume()) - low).abs() < 1e-10);
            let r = check_poincare(&psi, &b, k, &dom).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }
    }

    #[test]
    fn trace_bound_random_realization(seed in any::<u64>(), n in 0usize..=1, bc in bc_strategy()) {
        let dom = BoxDomain::new(1, 2, 4, bc).unwrap();
        let site = SingleSite::characteristic(1.0, &dom).unwrap();
        let real = sample_disorder(&SiteDistribution::Uniform, &dom, seed, 0);
        let spec = eigendecompose(&hamiltonian(&dom, &site, &real).unwrap()).unwrap();
        let b = 0.8 * neumann_cube_basis(4, 1, n).unwrap().next_level();
        let i = EnergyInterval::closed(0.0, b).unwrap();
        let r = trace_bound_check(&spec, &i, n, &dom).unwrap();
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn projector_trace_monotone_in_interval(seed in any::<u64>(), a in -3.0f64..0.0, w1 in 0.0f64..2.0, w2 in 0.0f64..2.0) {
        let h = speclab_core::instances::random_symmetric(12, seed);
        let s = eigendecompose(&h).unwrap();
        let small = EnergyInterval::closed(a, a + w1.min(w2)).unwrap();
        let big = EnergyInterval::closed(a, a + w1.max(w2)).unwrap();
        prop_assert!(projector_trace(&s, &small) <= projector_trace(&s, &big));
    }

    #[test]
    fn crossing_weights_bounded(seed in any::<u64>(), shift in 0.05f64..0.95, rank in 1usize..6) {
        let fam = random_family(12, rank, seed);
        let s0 = eigenvalues_dense(fam.base_dense());
        let e = s0[5] + shift * (s0[6] - s0[5]);
        let phi = random_unit_vector(12, 1.0, seed ^ 1);
        if let Ok(bs) = birman_schwinger_crossings(&fam, e) {
            let total: f64 = bs.iter().map(|c| c.weight(&phi, 1.0)).sum();
            prop_assert!(total <= support_norm2(&fam, &phi) + 1e-8);
            let window: f64 = bs.iter().filter(|c| c.omega.abs() <= 1.0).map(|c| c.weight(&phi, 1.0)).sum();
            prop_assert!(window <= total + 1e-12);
        }
    }

    #[test]
    fn ssf_monotone_and_bounded(seed in any::<u64>(), e_frac in 0.0f64..1.0, t1 in -1.0f64..0.5, dt in 0.0f64..2.0, dt2 in 0.0f64..1.0) {
        let fam = random_family(10, 3, seed);
        let s0 = eigenvalues_dense(fam.base_dense());
        let e = s0[0] + e_frac * (s0[9] - s0[0]);
        let s1 = eigenvalues_dense(&fam.evaluate(t1));
        let s2 = eigenvalues_dense(&fam.evaluate(t1 + dt));
        let s3 = eigenvalues_dense(&fam.evaluate(t1 + dt + dt2));
        if let (Ok(x2), Ok(x3)) = (ssf_trace_difference(&s1, &s2, e), ssf_trace_difference(&s1, &s3, e)) {
            prop_assert!(x2 >= 0 && x3 >= x2);
            let r = ssf_bound_check(&s1, x2, e, t1, t1 + dt, fam.coupling_norm()).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }
    }

    #[test]
    fn larger_potential_raises_every_eigenvalue(seed in any::<u64>(), bc in bc_strategy()) {
        let dom = BoxDomain::new(1, 2, 3, bc).unwrap();
        let site = SingleSite::characteristic(0.7, &dom).unwrap();
        let lo = sample_disorder(&SiteDistribution::Uniform, &dom, seed, 0);
        let other = sample_disorder(&SiteDistribution::Uniform, &dom, seed, 1);
        let hi = speclab_core::operator::DisorderRealization::from_values(
            lo.omegas().iter().zip(other.omegas()).map(|(a, b)| a.max(*b)).collect(), seed, 2);
        let a = speclab_core::spectral::eigenvalues(&hamiltonian(&dom, &site, &lo).unwrap()).unwrap();
        let b = speclab_core::spectral::eigenvalues(&hamiltonian(&dom, &site, &hi).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(*y >= x - 1e-10 * (1.0 + x.abs()));
        }
    }
}
