//! Benchmark fixtures shared by the criterion targets.

use contrakit::system::SystemDef;

pub fn pendulum() -> SystemDef {
    SystemDef::parse(
        "state = [\"theta\", \"omega\"]\nf = [\"omega\", \"-sin(theta) - 0.5*omega\"]",
    )
    .expect("fixture parses")
}

pub fn damped_cubic() -> SystemDef {
    SystemDef::parse(
        "state = [\"x1\"]\nf = [\"-x1 - x1^3\"]\ndomain.lower = [-2]\ndomain.upper = [2]",
    )
    .expect("fixture parses")
}
