use vsc_stability::config::load_preset;
use vsc_stability::scenario::run_scenario;

#[test]
fn small_limit_recovers_large_limit_sticks() {
    let cfg = load_preset("fig2c").unwrap();
    let end = |i_max: f64| {
        let mut sc = cfg.to_scenario();
        sc.limiter.i_max = i_max;
        *run_scenario(&sc).unwrap().samples.last().unwrap()
    };
    let small = end(1.1);
    assert!((small.i_cd_ref - 0.504).abs() < 1e-3 && small.i_cq_ref.abs() < 1e-3);
    assert!(!small.limiter_active);
    let large = end(4.0);
    assert!(large.limiter_active);
    assert!(large.i_cq_ref.abs() > 1.0, "{large:?}");
}

#[test]
fn anti_windup_restores_recovery() {
    let cfg = load_preset("fig2c").unwrap();
    let mut sc = cfg.to_scenario();
    sc.limiter.i_max = 4.0;
    sc.limiter.anti_windup = true;
    let last = *run_scenario(&sc).unwrap().samples.last().unwrap();
    assert!((last.i_cd_ref - 0.504).abs() < 1e-3 && !last.limiter_active);
}
