use mesoped::bundled;
use mesoped::LoadedScenario;
use mesoped_core::layout::parse_layout;

#[test]
fn every_bundled_scenario_completes_within_its_step_limit() {
    for name in bundled::names() {
        let loaded = LoadedScenario::load(name).unwrap();
        let s = loaded.build().unwrap();
        let out = s.run(loaded.config.seed).unwrap();
        assert!(out.completed(), "{name} incomplete after {} steps", out.steps);
        assert!(out.steps <= loaded.config.max_steps);
        assert!(s.field.provenance().converged);
    }
}

#[test]
fn every_bundled_layout_parses_and_states_its_assumptions() {
    for (name, text) in bundled::LAYOUTS {
        parse_layout(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(text.starts_with('#'), "{name} has no header");
    }
}

#[test]
fn micro_layout_is_the_meso_layout_refined() {
    let meso = parse_layout(bundled::layout("compare_10x15.layout").unwrap()).unwrap();
    let micro = parse_layout(bundled::layout("compare_10x15_micro.layout").unwrap()).unwrap();
    assert_eq!(micro, meso.upscale(2).unwrap());
}

#[test]
fn cinema_geometry() {
    let g = parse_layout(bundled::layout("cinema.layout").unwrap()).unwrap();
    assert_eq!((g.rows(), g.cols(), g.cell_size_m()), (20, 30, 1.0));
    assert_eq!(g.sources().len(), 12);
    assert_eq!(g.sinks().len(), 8);
    assert!(g.sources().iter().all(|c| c.col == 0));
}

#[test]
fn halving_the_main_exit_moves_the_boundary() {
    let a = LoadedScenario::load("cinema_a").unwrap().field().unwrap();
    let b = LoadedScenario::load("cinema_b").unwrap().field().unwrap();
    assert_eq!(a.max_value(), 300.0);
    assert_eq!(b.max_value(), 150.0);
    let door = mesoped_core::Cell::new(1, 1);
    assert!(a.value(door) > 100.0 * 0.985);
    assert!(b.value(door) <= 100.0 * 0.985 + 1e-9);
}
