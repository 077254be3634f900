mod common;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sonar_avoid::decision::{
    action_collision_cost, cell_membership, weighted_collision_cost, Action, Trajectory, TrajectoryDistribution,
};
use sonar_avoid::geometry::{BeamLayout, CellIndex, PolarMap};
use sonar_avoid::motion::{
    precompute_overlaps, rotational_overlap, translational_overlap, VelocityDistribution,
};

use common::{cell_by_scan, mc_inflow, random_trajectory, small_layout};

#[test]
fn one_cell_shift_far_from_the_apex_moves_everything_one_bin() {
    let layout = BeamLayout::prototype();
    let (jc, kc) = layout.center();
    let beam = layout.beam_at(jc, kc).unwrap();
    let lc = layout.cell_length();
    let target = layout.flat(beam, 100);
    let source = layout.flat(beam, 101);
    let f = translational_overlap(
        &layout,
        layout.cell_index(source),
        layout.cell_index(target),
        lc,
        1.0,
    )
    .unwrap();
    let sampled = mc_inflow(&layout, target, lc, 1_000_000, 7);
    let estimate = sampled.get(&source).copied().unwrap_or(0.0);
    assert!((f - estimate).abs() < 2e-3, "integrated {f}, sampled {estimate}");
    assert!(f > 0.99, "{f}");
}

#[test]
fn table_matches_pairwise_integration() {
    let layout = small_layout();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let v = rng.random_range(0.0..8.0);
        let tau = 0.1;
        let vel = VelocityDistribution::deterministic(v, 0.0, 0.0);
        let table = precompute_overlaps(&layout, &vel, tau).unwrap();
        let t = rng.random_range(0..layout.cell_count());
        let s = rng.random_range(0..layout.cell_count());
        let direct = translational_overlap(&layout, layout.cell_index(s), layout.cell_index(t), v, tau).unwrap();
        assert!((table.translational_fraction(0, s, t) - direct).abs() <= 1e-9);
    }
}

#[test]
fn sub_cell_displacement_touches_at_most_two_radial_neighbors() {
    let layout = small_layout();
    let lc = layout.cell_length();
    for d in [0.05 * lc, 0.5 * lc, 0.99 * lc] {
        let vel = VelocityDistribution::deterministic(d, 0.0, 0.0);
        let table = precompute_overlaps(&layout, &vel, 1.0).unwrap();
        for s in 0..layout.cell_count() {
            for beam in 0..layout.beam_count() {
                let hits = (1..=layout.bin_count())
                    .filter(|&i| table.translational_fraction(0, s, layout.flat(beam, i)) > 0.0)
                    .count();
                assert!(hits <= 2, "source {s} reaches {hits} bins of beam {beam} at d = {d}");
            }
        }
    }
}

#[test]
fn rotational_overlap_examples() {
    let layout = small_layout();
    let cell = |beam: usize, i: usize| layout.cell_index(layout.flat(beam, i));
    assert_eq!(rotational_overlap(&layout, cell(1, 4), cell(1, 4), 0.0, 0.0, 0.1).unwrap(), 1.0);
    // a 10 degree scene rotation to port carries beam 1 wholly into beam 0
    assert_eq!(rotational_overlap(&layout, cell(1, 4), cell(0, 4), 100.0, 0.0, 0.1).unwrap(), 1.0);
    assert_eq!(rotational_overlap(&layout, cell(1, 4), cell(1, 4), 100.0, 0.0, 0.1).unwrap(), 0.0);
    assert_eq!(rotational_overlap(&layout, cell(1, 4), cell(1, 5), 0.0, 0.0, 0.1).unwrap(), 0.0);
}

#[test]
fn membership_matches_a_scan_of_every_cell() {
    let layout = Arc::new(BeamLayout::prototype());
    let map = PolarMap::new(Arc::clone(&layout), 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let traj = random_trajectory(&mut rng, 20.0);
        let mut expected: Vec<CellIndex> = traj
            .samples
            .iter()
            .filter_map(|&p| cell_by_scan(&layout, p))
            .map(|c| layout.cell_index(c))
            .collect();
        expected.sort_by_key(|c| layout.flat_index(*c).unwrap());
        expected.dedup();
        assert_eq!(cell_membership(&traj, &map), expected);
    }
}

#[test]
fn action_cost_is_the_weighted_mean_of_trajectory_costs() {
    let layout = small_layout();
    let mut map = PolarMap::new(Arc::clone(&layout), 0.0).unwrap();
    map.probs_mut()[layout.flat(1, 1)] = 0.2;
    map.probs_mut()[layout.flat(2, 1)] = 0.6;
    let short = Trajectory {
        weight: 0.5,
        ..Trajectory::straight(0.5, 0.1)
    };
    let aside = Trajectory {
        samples: vec![[0.0, 0.0, 0.0], [0.5, 0.09, 0.0]],
        weight: 0.5,
        ..Trajectory::straight(0.5, 0.1)
    };
    assert!((weighted_collision_cost(&short, &map, 0.0) - 0.2).abs() < 1e-15);
    assert!((weighted_collision_cost(&aside, &map, 0.0) - 0.6).abs() < 1e-15);
    let dist = TrajectoryDistribution::new(vec![(Action::Straight, vec![short, aside])]).unwrap();
    let cost = action_collision_cost(Action::Straight, &dist, &map, 0.0).unwrap();
    assert!((cost - 0.4).abs() < 1e-15, "{cost}");
}
