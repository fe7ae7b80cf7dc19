use soundcone::evolution::{apply_channel, evolve, uniform_grid, SolverSettings, Trajectory};
use soundcone::fock::{Model, ModelParams};
use soundcone::lattice::{Graph, VelocityBound};
use soundcone::states::{
    add_boson_channel, lazy_add_channel, phase_channel, thermal_state, ExcitationChannel,
};
use soundcone::verify::{comparison_trajectory, envelope_check, premise_check};

#[test]
fn premise_holds_for_three_channels() {
    let m = Model::new(
        Graph::path(2).unwrap(),
        ModelParams::bose_hubbard(1.0, 1.0),
        2,
    )
    .unwrap();
    let channels: [ExcitationChannel; 3] = [
        add_boson_channel(2, &[0], None).unwrap(),
        lazy_add_channel(2, &[0, 1], 0.5).unwrap(),
        phase_channel(2, 1, 0.7).unwrap(),
    ];
    for ch in &channels {
        let r = premise_check(&m, ch, &[0, 1], &[0.0, 0.5, 1.0, 2.0], 20, 11, 1e-8).unwrap();
        assert!(r.pass, "{}: {}", ch.label, r.worst);
        assert_eq!(r.entries.len(), 23 * 4);
    }
}

fn thermal_path4(dt: f64) -> Trajectory {
    let m = Model::new(
        Graph::path(4).unwrap(),
        ModelParams::bose_hubbard(1.0, 1.0),
        3,
    )
    .unwrap();
    let omega = thermal_state(&m, &[0, 1, 2], 1.0, 1e-12).unwrap();
    let init = apply_channel(&omega, &add_boson_channel(4, &[0], None).unwrap(), &m).unwrap();
    evolve(
        &m,
        &omega,
        &init,
        &uniform_grid(3.0, dt).unwrap(),
        &SolverSettings::default(),
    )
    .unwrap()
}

#[test]
fn empirical_c_stable_under_refinement() {
    let g = Graph::path(4).unwrap();
    let vb = VelocityBound::new(&g, 1.0).unwrap();
    let coarse = envelope_check(&thermal_path4(0.05), &g, &vb, &[0], 1.0).unwrap();
    let fine = envelope_check(&thermal_path4(0.025), &g, &vb, &[0], 1.0).unwrap();
    let rel = (coarse.empirical_c - fine.empirical_c).abs() / fine.empirical_c;
    assert!(rel < 0.1, "{} vs {}", coarse.empirical_c, fine.empirical_c);
}

#[test]
fn gamma_is_monotone_in_time_and_seed() {
    let g = Graph::grid(2, 3).unwrap();
    let times = uniform_grid(2.0, 0.1).unwrap();
    let lo = [0.0, 0.2, 0.0, 0.1, 0.0, 0.0];
    let hi = [0.1, 0.2, 0.0, 0.3, 0.0, 0.05];
    let a = comparison_trajectory(&g, 1.0, &lo, &times).unwrap();
    let b = comparison_trajectory(&g, 1.0, &hi, &times).unwrap();
    for i in 1..times.len() {
        for j in 0..6 {
            assert!(a[i][j] >= a[i - 1][j] - 1e-14);
            assert!(b[i][j] >= a[i][j] - 1e-14);
        }
    }
    assert!(comparison_trajectory(&g, 1.0, &[-0.1, 0.0, 0.0, 0.0, 0.0, 0.0], &times).is_err());
}
