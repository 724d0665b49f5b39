//! Speed caps for a vehicle that must respect a distance-dependent limit
//! one integration step ahead.
//!
//! A limit piece is "speed <= `limit` once within `d_high` of the entrance",
//! relaxed upstream by a braking parabola of deceleration `decel`:
//!
//! ```text
//! g(x) = limit                                   x <= d_high
//! g(x) = sqrt(limit^2 + 2 decel (x - d_high))    x >  d_high
//! ```
//!
//! With semi-implicit Euler the vehicle ends the step at `d - u dt`, so the
//! admissible post-step speeds are `{u >= 0 : u <= g(d - u dt)}`, an interval
//! `[0, u*]`. When `decel <= b_emergency / 2`, every state with `v <= g(d)`
//! can reach `u*` with braking no harder than `b_emergency`, so the set
//! `{v <= g(d)}` is invariant under capped integration.

/// Distance kept from every limit boundary so that rounding in the position
/// update cannot carry a vehicle across it.
pub const POSITION_MARGIN: f64 = 1e-9;

/// Upper end `u*` of the admissible post-step speed interval for one piece.
pub fn piece_speed_cap(d: f64, dt: f64, limit: f64, d_high: f64, decel: f64) -> f64 {
    if d - limit * dt <= d_high {
        return limit;
    }
    let c = limit * limit + 2.0 * decel * (d - d_high);
    let bdt = decel * dt;
    (-bdt + (bdt * bdt + c).sqrt()).max(limit)
}

/// The piece evaluated at a position (not a step-ahead cap).
pub fn piece_profile(x: f64, limit: f64, d_high: f64, decel: f64) -> f64 {
    if x <= d_high {
        limit
    } else {
        (limit * limit + 2.0 * decel * (x - d_high)).sqrt()
    }
}

/// Cap for stopping at the entrance line (`d = 0`).
pub fn stop_line_speed_cap(d: f64, dt: f64, decel: f64) -> f64 {
    if d <= POSITION_MARGIN {
        0.0
    } else {
        piece_speed_cap(d - POSITION_MARGIN, dt, 0.0, 0.0, decel)
    }
}

/// Acceleration that turns speed `v` into at most `cap` in one step, never
/// harder than `-b_emergency`, and never above `proposed`.
pub fn capped_accel(proposed: f64, v: f64, cap: f64, dt: f64, b_emergency: f64) -> f64 {
    let needed = (cap - v) / dt;
    proposed.min(needed.max(-b_emergency))
}
