//! Scenario files shipped with the binary.

pub struct Bundled {
    pub name: &'static str,
    pub source: &'static str,
}

pub const BUNDLED: &[Bundled] = &[
    Bundled {
        name: "ex1_common_jumps_rolling_s1",
        source: include_str!("../../scenarios/ex1_common_jumps_rolling_s1.toml"),
    },
    Bundled {
        name: "ex1_common_jumps_rolling_s2",
        source: include_str!("../../scenarios/ex1_common_jumps_rolling_s2.toml"),
    },
    Bundled {
        name: "ex1_common_jumps_s1",
        source: include_str!("../../scenarios/ex1_common_jumps_s1.toml"),
    },
    Bundled {
        name: "ex1_common_jumps_s2",
        source: include_str!("../../scenarios/ex1_common_jumps_s2.toml"),
    },
    Bundled {
        name: "ex2_extreme_contagion_s1",
        source: include_str!("../../scenarios/ex2_extreme_contagion_s1.toml"),
    },
    Bundled {
        name: "ex2_extreme_contagion_s2",
        source: include_str!("../../scenarios/ex2_extreme_contagion_s2.toml"),
    },
    Bundled {
        name: "ex3_anti_contagion_s1",
        source: include_str!("../../scenarios/ex3_anti_contagion_s1.toml"),
    },
    Bundled {
        name: "ex3_anti_contagion_s2",
        source: include_str!("../../scenarios/ex3_anti_contagion_s2.toml"),
    },
    Bundled {
        name: "ex4_systemic_importance_s1",
        source: include_str!("../../scenarios/ex4_systemic_importance_s1.toml"),
    },
    Bundled {
        name: "ex4_systemic_importance_s1_alt",
        source: include_str!("../../scenarios/ex4_systemic_importance_s1_alt.toml"),
    },
    Bundled {
        name: "ex4_systemic_importance_s2",
        source: include_str!("../../scenarios/ex4_systemic_importance_s2.toml"),
    },
    Bundled {
        name: "ex5_two_weak_only_s1",
        source: include_str!("../../scenarios/ex5_two_weak_only_s1.toml"),
    },
    Bundled {
        name: "ex5_two_weak_only_s2",
        source: include_str!("../../scenarios/ex5_two_weak_only_s2.toml"),
    },
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    BUNDLED.iter().find(|b| b.name == name)
}
