//! Scenario files shipped inside the binary.

/// (file stem, contents)
pub const SCENARIOS: &[(&str, &str)] = &[
    ("virial_2d", include_str!("../scenarios/virial_2d.cfg")),
    ("blowup_sweep", include_str!("../scenarios/blowup_sweep.cfg")),
    ("profile_gm", include_str!("../scenarios/profile_gm.cfg")),
    ("rate_n3", include_str!("../scenarios/rate_n3.cfg")),
    ("first_order", include_str!("../scenarios/first_order.cfg")),
    ("c2_constant", include_str!("../scenarios/c2_constant.cfg")),
    ("wstar_moments", include_str!("../scenarios/wstar_moments.cfg")),
    ("phi_monotone", include_str!("../scenarios/phi_monotone.cfg")),
    ("potential_bound", include_str!("../scenarios/potential_bound.cfg")),
    ("property_suite", include_str!("../scenarios/property_suite.cfg")),
];

/// Look up `name` or `name.cfg`.
pub fn find(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".cfg").unwrap_or(name);
    SCENARIOS.iter().find(|(n, _)| *n == stem).map(|(_, text)| *text)
}
