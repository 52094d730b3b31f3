use magnon_web::{localization_profile, simulate_protocol, FourierSession, MAX_SITES};

#[test]
fn movie_frames_are_normalized_and_track_the_trap() {
    let m = simulate_protocol(101, 0.5, 20.0, 30.0, "sta", 7).unwrap();
    assert_eq!(m.times.len(), 7);
    assert_eq!(m.density.len(), 7 * 101);
    for frame in m.density.chunks(101) {
        assert!((frame.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    assert_eq!(m.times[0], 0.0);
    assert!((m.times[6] - 30.0).abs() < 1e-9);
    assert!((m.trap[6] - m.trap[0] - 20.0).abs() < 1e-9);
    assert!((0.0..=1.0).contains(&m.infidelity));
}

#[test]
fn slow_shortcut_beats_fast_linear_ramp() {
    let sta = simulate_protocol(101, 0.5, 20.0, 60.0, "sta", 2).unwrap();
    let lin = simulate_protocol(101, 0.5, 20.0, 10.0, "linear", 2).unwrap();
    assert!(sta.infidelity < 0.05, "{}", sta.infidelity);
    assert!(lin.infidelity > sta.infidelity);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(simulate_protocol(101, 0.5, 20.0, 30.0, "zigzag", 5).is_err());
    assert!(simulate_protocol(MAX_SITES + 2, 0.5, 20.0, 30.0, "sta", 5).is_err());
    assert!(simulate_protocol(101, 0.5, 20.0, -1.0, "sta", 5).is_err());
    assert!(FourierSession::new(101, 0.5, 20.0, 30.0, 0, 0.01).is_err());
    assert!(localization_profile(101, 0.2, 0, 1).is_err());
}

#[test]
fn localization_narrows_with_disorder() {
    let (p1, xi1) = localization_profile(151, 0.1, 20, 0).unwrap();
    let (_, xi2) = localization_profile(151, 0.5, 20, 0).unwrap();
    assert_eq!(p1.len(), 151);
    assert!(xi2 < xi1, "{xi2} vs {xi1}");
}

#[test]
fn fourier_session_lowers_infidelity() {
    let mut s = FourierSession::new(61, 1.0, 10.0, 8.0, 6, 0.05).unwrap();
    let start = s.infidelity().unwrap();
    let first = s.advance(1).unwrap();
    assert_eq!(first, start);
    s.advance(40).unwrap();
    assert_eq!(s.history().len(), 41);
    assert!(s.infidelity().unwrap() < start, "{} vs {start}", s.infidelity().unwrap());
    let p = s.protocol().unwrap();
    assert_eq!(p.samples.len(), 81);
}
