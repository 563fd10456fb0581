use proptest::prelude::*;

use sdhom::approx::{weak_star_check, SawtoothSequence, StructuredDeformationSample};
use sdhom::density::{CoefficientField, PeriodicBulkDensity, PeriodicSurfaceDensity};
use sdhom::maxflow::FlowNetwork;
use sdhom::sbv::{DiscreteSBVField, Grid};
use sdhom::surface::{solve_graph, CutGraph, SurfaceCellSpec};
use sdhom::Mat;

fn coefficient() -> impl Strategy<Value = CoefficientField> {
    prop_oneof![
        (0.5..3.0f64).prop_map(|value| CoefficientField::Constant { value }),
        (0.5..3.0f64, 0.5..3.0f64, 0..2usize)
            .prop_map(|(a, b, axis)| CoefficientField::Layered { values: vec![a, b], axis }),
        (0.5..3.0f64, 0.5..3.0f64)
            .prop_map(|(a, b)| CoefficientField::Checkerboard { values: [a, b] }),
        (1.0..3.0f64, -0.9..0.9f64).prop_map(|(mean, r)| CoefficientField::Trigonometric {
            mean,
            amplitude: r * mean
        }),
    ]
}

fn surface_density() -> impl Strategy<Value = PeriodicSurfaceDensity> {
    (coefficient(), 0.0..1.0f64).prop_map(|(c, eta)| PeriodicSurfaceDensity::new(c, eta).unwrap())
}

fn direction() -> impl Strategy<Value = Vec<f64>> {
    (-3i64..=3, -3i64..=3, any::<bool>())
        .prop_filter("nonzero", |(q, r, _)| *q != 0 || *r != 0)
        .prop_map(|(q, r, flip)| {
            let l = ((q * q + r * r) as f64).sqrt();
            let s = if flip { -1.0 } else { 1.0 };
            vec![s * q as f64 / l, s * r as f64 / l]
        })
}

fn jump() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 1..=2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn surface_value_lies_in_growth_sandwich(psi in surface_density(), nu in direction(), lambda in jump(), k in 1usize..3, m in 1usize..4) {
        let graph = CutGraph::build(&SurfaceCellSpec::new(lambda.clone(), nu, k, m), &psi).unwrap();
        let v = solve_graph(&graph).unwrap().value;
        let size = lambda.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(psi.c_lower * size <= v + 1e-12);
        prop_assert!(v <= psi.c_upper * size + 1e-12);
    }

    #[test]
    fn surface_value_is_positively_homogeneous(psi in surface_density(), nu in direction(), lambda in jump(), e in -3i32..4) {
        let t = 2f64.powi(e);
        let scaled: Vec<f64> = lambda.iter().map(|x| t * x).collect();
        let a = solve_graph(&CutGraph::build(&SurfaceCellSpec::new(lambda, nu.clone(), 1, 3), &psi).unwrap()).unwrap();
        let b = solve_graph(&CutGraph::build(&SurfaceCellSpec::new(scaled, nu, 1, 3), &psi).unwrap()).unwrap();
        prop_assert_eq!(b.value, t * a.value);
    }

    #[test]
    fn surface_value_is_even_in_the_pair(psi in surface_density(), nu in direction(), lambda in jump(), m in 1usize..5) {
        let a = solve_graph(&CutGraph::build(&SurfaceCellSpec::new(lambda.clone(), nu.clone(), 1, m), &psi).unwrap()).unwrap();
        let nl: Vec<f64> = lambda.iter().map(|x| -x).collect();
        let nn: Vec<f64> = nu.iter().map(|x| -x).collect();
        let b = solve_graph(&CutGraph::build(&SurfaceCellSpec::new(nl, nn, 1, m), &psi).unwrap()).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12);
    }

    #[test]
    fn surface_doubling_never_increases(psi in surface_density(), nu in direction(), lambda in jump(), half_m in 1usize..3) {
        let m = 2 * half_m;
        let g1 = solve_graph(&CutGraph::build(&SurfaceCellSpec::new(lambda.clone(), nu.clone(), 1, m), &psi).unwrap()).unwrap();
        let g2 = solve_graph(&CutGraph::build(&SurfaceCellSpec::new(lambda, nu, 2, m), &psi).unwrap()).unwrap();
        prop_assert!(g2.value <= g1.value + 1e-12);
    }

    #[test]
    fn min_cut_beats_random_admissible_labelings(psi in surface_density(), nu in direction(), lambda in jump(), flips in prop::collection::vec(any::<bool>(), 64)) {
        let graph = CutGraph::build(&SurfaceCellSpec::new(lambda, nu, 1, 3), &psi).unwrap();
        let best = solve_graph(&graph).unwrap();
        prop_assert!(graph.respects_pins(&best.labeling));
        prop_assert!((graph.labeling_cost(&best.labeling) - best.value * graph.frame.side.powi(graph.frame.n_dim as i32 - 1)).abs() <= 1e-9);
        let mut labels = graph.flat_labeling();
        for (c, l) in labels.iter_mut().enumerate() {
            if graph.pins[c].is_none() && flips[c % flips.len()] {
                *l = !*l;
            }
        }
        prop_assert!(graph.labeling_cost(&best.labeling) <= graph.labeling_cost(&labels) + 1e-12);
    }

    #[test]
    fn max_flow_equals_cut_capacity(caps in prop::collection::vec((0usize..6, 0usize..6, 0.0..5.0f64, 0.0..5.0f64), 1..20)) {
        let mut net = FlowNetwork::new(6);
        for (u, v, f, b) in &caps {
            if u != v {
                net.add_pair(*u, *v, *f, *b);
            }
        }
        let flow = net.max_flow(0, 5).unwrap();
        let side = net.source_side(0);
        prop_assert!(side[0] && !side[5]);
        prop_assert!((net.cut_capacity(&side) - flow).abs() <= 1e-9 * (1.0 + flow));
    }

    #[test]
    fn cell_energy_ignores_constant_shifts(c in coefficient(), p in 1.5..3.0f64, seed in prop::collection::vec(-1.0..1.0f64, 64), shift in -5.0..5.0f64) {
        let w = PeriodicBulkDensity::new(c.clone(), p).unwrap();
        let psi = PeriodicSurfaceDensity::new(c, 0.2).unwrap();
        let grid = Grid::new(2, 1, 1, 4).unwrap();
        let dofs: Vec<f64> = (0..grid.n_dofs()).map(|i| seed[i % seed.len()]).collect();
        let active: Vec<bool> = (0..grid.n_faces()).map(|i| seed[(3 * i) % seed.len()] > 0.3).collect();
        let field = DiscreteSBVField::from_parts(grid, true, dofs, active).unwrap();
        let mut moved = field.clone();
        for cell in 0..grid.n_cells() {
            moved.value_mut(cell)[0] += shift;
        }
        let a = Mat::from_slice(1, 2, &[0.3, -0.2]);
        let e0 = field.energy(&w, &psi, &a, &[0.0, 0.0]);
        let e1 = moved.energy(&w, &psi, &a, &[0.0, 0.0]);
        prop_assert!((e0.bulk - e1.bulk).abs() <= 1e-12 * (1.0 + e0.bulk));
        prop_assert!((e0.surface - e1.surface).abs() <= 1e-9 * (1.0 + e0.surface));
    }

    #[test]
    fn sawtooth_variation_is_constant_and_distance_decays(a in -2.0..2.0f64, g in -2.0..2.0f64, n in 1usize..200) {
        let seq = SawtoothSequence::new(StructuredDeformationSample::new(Mat::scalar(a), vec![0.0], Mat::scalar(g)).unwrap());
        prop_assert!((seq.total_variation(n) - seq.total_variation(1)).abs() <= 1e-12 * (1.0 + seq.total_variation(1)));
        prop_assert!((seq.l1_distance(n) - (g - a).abs() / (2.0 * n as f64)).abs() <= 1e-15);
        prop_assert!(seq.l1_distance(2 * n) <= seq.l1_distance(n));
    }

    #[test]
    fn sheets_reproduce_the_disarrangement_weakly(b in prop::collection::vec(-2.0..2.0f64, 4), e in 3u32..7) {
        let n = 1usize << e;
        let sample = StructuredDeformationSample::new(Mat::zeros(2, 2), vec![0.0, 0.0], Mat::from_slice(2, 2, &b)).unwrap();
        let seq = SawtoothSequence::new(sample);
        let coarse = weak_star_check(&seq, n).max_error;
        let fine = weak_star_check(&seq, 2 * n).max_error;
        prop_assert!(fine <= coarse + 1e-12);
    }
}
