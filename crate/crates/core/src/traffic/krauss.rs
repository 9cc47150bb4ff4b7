//! Krauss car-following.

/// Maximum speed at which a follower can still stop behind a leader that
/// brakes with the same deceleration capability, after a reaction delay.
///
/// `gap` is the effective bumper-to-bumper gap (already net of any standstill
/// clearance). The result is clamped at zero.
pub fn krauss_safe_speed(
    v_leader: f64,
    v_follower: f64,
    gap: f64,
    decel_cap: f64,
    reaction_time: f64,
) -> f64 {
    debug_assert!(decel_cap > 0.0 && reaction_time > 0.0);
    let denom = (v_leader + v_follower) / (2.0 * decel_cap) + reaction_time;
    (v_leader + (gap - v_leader * reaction_time) / denom).max(0.0)
}

/// Self-consistent safe speed: the fixed point of [`krauss_safe_speed`] in the
/// follower speed. It satisfies `v * tau + v^2 / (2b) = gap + v_leader^2 / (2b)`,
/// the reaction-plus-braking stopping condition.
pub fn krauss_fixed_point_speed(v_leader: f64, gap: f64, decel_cap: f64, reaction_time: f64) -> f64 {
    let bt = decel_cap * reaction_time;
    let disc = bt * bt + 2.0 * decel_cap * gap.max(0.0) + v_leader * v_leader;
    (disc.sqrt() - bt).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KraussParams {
    pub reaction_time: f64,
    pub decel_cap: f64,
    /// Standstill clearance subtracted from the bumper gap.
    pub min_gap: f64,
    /// Driver imperfection in `[0, 1]`; zero disables random dawdling.
    pub sigma: f64,
}

impl Default for KraussParams {
    fn default() -> Self {
        Self {
            reaction_time: 1.0,
            decel_cap: 4.5,
            min_gap: 2.5,
            sigma: 0.0,
        }
    }
}
