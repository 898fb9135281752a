mod common;

use common::{rng, TOL};
use proptest::prelude::*;
use qcat::categorical::{
    cramer, cramer_distance, project, read_family_csv, shift_project, write_family_csv, AtomicLaw, Coeff,
    SupportGrid,
};
use qcat::instances::{random_atomic_law, random_coeff, random_family};
use rand::Rng;

fn grid_strategy() -> impl Strategy<Value = SupportGrid> {
    (-5.0f64..5.0, 0.01f64..2.0, 2usize..60)
        .prop_map(|(lo, stride, d)| SupportGrid::new(lo, stride, d).unwrap())
}

fn coeff_law(p: &Coeff, grid: &SupportGrid) -> AtomicLaw {
    AtomicLaw::from_coeff(p, grid, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn coordinate_metric_is_cramer_distance_of_grid_laws(grid in grid_strategy(), seed: u64) {
        let mut r = rng(seed);
        let p = random_coeff(&mut r, grid.num_atoms());
        let q = random_coeff(&mut r, grid.num_atoms());
        let want = cramer_distance(&coeff_law(&p, &grid), &coeff_law(&q, &grid));
        let got = cramer(&p, &q, &grid).unwrap();
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want), "{got} vs {want}");
    }

    #[test]
    fn metric_axioms(grid in grid_strategy(), seed: u64) {
        let mut r = rng(seed);
        let d = grid.num_atoms();
        let (p, q, s) = (random_coeff(&mut r, d), random_coeff(&mut r, d), random_coeff(&mut r, d));
        let pq = cramer(&p, &q, &grid).unwrap();
        prop_assert_eq!(cramer(&p, &p, &grid).unwrap(), 0.0);
        prop_assert_eq!(pq, cramer(&q, &p, &grid).unwrap());
        prop_assert!(pq <= cramer(&p, &s, &grid).unwrap() + cramer(&s, &q, &grid).unwrap() + TOL);
        prop_assert!(pq <= grid.diameter_metric() + TOL);
    }

    #[test]
    fn projection_is_non_expansive(grid in grid_strategy(), seed: u64) {
        let mut r = rng(seed);
        // Laws reach past both edges so clipping is exercised.
        let (lo, hi) = (grid.theta_min() - 1.0, grid.theta_max() + 1.0);
        let a = random_atomic_law(&mut r, 6, lo, hi);
        let b = random_atomic_law(&mut r, 6, lo, hi);
        let pa = project(a.atoms(), &grid).unwrap();
        let pb = project(b.atoms(), &grid).unwrap();
        prop_assert!(cramer(&pa, &pb, &grid).unwrap() <= cramer_distance(&a, &b) + TOL);
    }

    #[test]
    fn projection_preserves_mean_inside_grid(grid in grid_strategy(), seed: u64) {
        let mut r = rng(seed);
        let a = random_atomic_law(&mut r, 6, grid.theta_min(), grid.theta_max());
        let p = project(a.atoms(), &grid).unwrap();
        let scale = grid.theta_max().abs().max(grid.theta_min().abs()) + 1.0;
        prop_assert!((p.mean(&grid, 0.0) - a.mean()).abs() <= 1e-12 * scale);
    }

    #[test]
    fn projection_commutes_with_translation(grid in grid_strategy(), c in -10.0f64..10.0, seed: u64) {
        let mut r = rng(seed);
        let a = random_atomic_law(&mut r, 6, grid.theta_min() - 0.5, grid.theta_max() + 0.5);
        let base = project(a.atoms(), &grid).unwrap();
        let moved = project(a.translate(c).atoms(), &grid.shifted(c)).unwrap();
        let diff = base.weights().iter().zip(moved.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9, "max coefficient difference {diff}");
    }

    #[test]
    fn shift_project_is_non_expansive_and_lipschitz_in_shift(
        grid in grid_strategy(), b in -3.0f64..3.0, b2 in -3.0f64..3.0, seed: u64,
    ) {
        let mut r = rng(seed);
        let d = grid.num_atoms();
        let (p, q) = (random_coeff(&mut r, d), random_coeff(&mut r, d));
        let lp = shift_project(&p, b, &grid);
        prop_assert!(cramer(&lp, &shift_project(&q, b, &grid), &grid).unwrap() <= cramer(&p, &q, &grid).unwrap() + TOL);
        let moved = cramer(&lp, &shift_project(&p, b2, &grid), &grid).unwrap();
        prop_assert!(moved <= grid.shift_lipschitz() * (b - b2).abs() + TOL);
        let both = cramer(&lp, &shift_project(&q, b2, &grid), &grid).unwrap();
        prop_assert!(both <= cramer(&p, &q, &grid).unwrap() + grid.shift_lipschitz() * (b - b2).abs() + TOL);
    }

    #[test]
    fn shift_project_matches_projection_of_translated_law(grid in grid_strategy(), b in -3.0f64..3.0, seed: u64) {
        let mut r = rng(seed);
        let p = random_coeff(&mut r, grid.num_atoms());
        let want = project(AtomicLaw::from_coeff(&p, &grid, b).atoms(), &grid).unwrap();
        let got = shift_project(&p, b, &grid);
        let diff = want.weights().iter().zip(got.weights()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn family_csv_round_trip_is_exact(grid in grid_strategy(), m in 1usize..6, seed: u64) {
        let family = random_family(&mut rng(seed), m, grid.num_atoms());
        let mut buf = Vec::new();
        write_family_csv(&mut buf, &family, &grid).unwrap();
        let (again, grid2) = read_family_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(again, family);
        prop_assert_eq!(grid2.num_atoms(), grid.num_atoms());
        prop_assert!((grid2.stride() - grid.stride()).abs() <= 1e-12 * grid.stride());
    }
}

#[test]
fn whole_stride_shift_moves_mass_by_one_atom() {
    let grid = SupportGrid::from_range(0.0, 4.0, 5).unwrap();
    let p = Coeff::new(vec![0.1, 0.2, 0.3, 0.4, 0.0]).unwrap();
    let moved = shift_project(&p, 1.0, &grid);
    assert_eq!(moved.weights(), &[0.0, 0.1, 0.2, 0.3, 0.4]);
    let clipped = shift_project(&p, -1.0, &grid);
    assert!((clipped.weights()[0] - 0.3).abs() < 1e-15);
}

#[test]
fn dirac_metric_closed_form() {
    // Diracs at theta_i and theta_j: |F - G| = 1 on |j - i| intervals of length stride.
    let mut r = rng(5);
    for _ in 0..200 {
        let d = r.random_range(2..30);
        let stride = r.random_range(0.01..3.0);
        let grid = SupportGrid::new(0.0, stride, d).unwrap();
        let (i, j) = (r.random_range(0..d), r.random_range(0..d));
        let got = cramer(&Coeff::dirac(d, i), &Coeff::dirac(d, j), &grid).unwrap();
        let want = (stride * i.abs_diff(j) as f64).sqrt();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}
