//! Scenarios and layouts compiled into the binary.

pub const SCENARIOS: &[(&str, &str)] = &[
    ("cinema_a", include_str!("../scenarios/cinema_a.scn")),
    ("cinema_b", include_str!("../scenarios/cinema_b.scn")),
    ("escalator_stair", include_str!("../scenarios/escalator_stair.scn")),
    ("compare_10x15", include_str!("../scenarios/compare_10x15.scn")),
    ("compare_10x15_micro", include_str!("../scenarios/compare_10x15_micro.scn")),
];

pub const LAYOUTS: &[(&str, &str)] = &[
    ("cinema.layout", include_str!("../scenarios/cinema.layout")),
    ("escalator_stair.layout", include_str!("../scenarios/escalator_stair.layout")),
    ("compare_10x15.layout", include_str!("../scenarios/compare_10x15.layout")),
    ("compare_10x15_micro.layout", include_str!("../scenarios/compare_10x15_micro.layout")),
];

pub fn scenario(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn layout(name: &str) -> Option<&'static str> {
    LAYOUTS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|(n, _)| *n)
}
