//! Continuous front of the corridor, integrated with classical RK4.

use crate::error::{Error, Result};
use crate::numerics::brent_root;

use super::{Corridor, Regime};

/// Smallest denominator accepted before a step is declared singular.
const SINGULAR_EPS: f64 = 1e-13;

/// `(r - a) / (r ln(r / a))`: inward speed at the front of a packed zone
/// `[a, r]` whose pressure vanishes at both ends.
fn packed_speed(a: f64, r: f64) -> f64 {
    let eps = r / a - 1.0;
    if eps == 0.0 {
        return 1.0;
    }
    eps / ((1.0 + eps) * eps.ln_1p())
}

fn rk4_step(f: &impl Fn(f64, f64) -> Result<f64>, t: f64, b: f64, h: f64) -> Result<f64> {
    let k1 = f(t, b)?;
    let k2 = f(t + 0.5 * h, b + 0.5 * h * k1)?;
    let k3 = f(t + 0.5 * h, b + 0.5 * h * k2)?;
    let k4 = f(t + h, b + h * k3)?;
    Ok(b + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Front of the closed corridor, `b' = rho0 (b + t) / (b - rho0 (b + t))`,
/// `b(0) = 0`, integrated with `rk4_steps` steps.
///
/// The right-hand side is `0 / 0` at the origin; the first step follows the
/// self-similar slope `c` solving `(1 - rho0) c^2 - 2 rho0 c - rho0 = 0`.
pub fn ode_b_no_exit(rho0: f64, t: f64, rk4_steps: usize) -> Result<f64> {
    if !(rho0 > 0.0 && rho0 < 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < rho0 < 1, got {rho0}")));
    }
    if !(t >= 0.0) || rk4_steps == 0 {
        return Err(Error::InvalidArgument("need t >= 0 and at least one step".into()));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let c = (rho0 + (rho0 * rho0 + rho0 * (1.0 - rho0)).sqrt()) / (1.0 - rho0);
    let f = |s: f64, b: f64| {
        let den = b - rho0 * (b + s);
        if den <= SINGULAR_EPS * (1.0 + b.abs()) {
            return Err(Error::Singularity(format!("front speed denominator {den} at t = {s}")));
        }
        Ok(rho0 * (b + s) / den)
    };
    let h = t / rk4_steps as f64;
    let mut b = c * h;
    for i in 1..rk4_steps {
        b = rk4_step(&f, i as f64 * h, b, h)?;
    }
    Ok(b)
}

/// Time at which the density at the exit first reaches one.
pub fn saturation_time(c: &Corridor) -> f64 {
    if c.rho0 >= 1.0 {
        0.0
    } else {
        c.a * (1.0 - c.rho0) / c.rho0
    }
}

/// Initial slope of the packed zone leaving the exit, the positive root of
/// `(1 - rho0) beta^2 + (1/2 - 2 rho0) beta - rho0 = 0`.
pub fn start_slope(rho0: f64) -> f64 {
    let (qa, qb, qc) = (1.0 - rho0, 0.5 - 2.0 * rho0, -rho0);
    let disc = (qb * qb - 4.0 * qa * qc).sqrt();
    // Stable form of the positive root.
    if qb >= 0.0 {
        2.0 * qc / (-qb - disc)
    } else {
        (-qb + disc) / (2.0 * qa)
    }
}

/// Front speed with an exit: the free-zone branch while `b <= R - t`, the
/// packed branch beyond.
fn exit_speed(c: &Corridor, packed: bool, t: f64, r: f64) -> Result<f64> {
    let r = r.max(c.a);
    let g = packed_speed(c.a, r);
    if packed {
        return Ok(-g);
    }
    let rf = c.rho0 * (1.0 + t / r);
    let den = 1.0 - rf;
    if den <= SINGULAR_EPS {
        return Err(Error::Singularity(format!("free density {rf} reaches one at t = {t}, r = {r}")));
    }
    Ok((rf - g) / den)
}

/// Front with an exit at time `t`, integrated with `rk4_steps` uniform steps.
///
/// For `rho0 < 1` the front sits at `a` until the saturation time and then
/// leaves with the slope [`start_slope`]. For `rho0 = 1` it starts at `R`
/// on the packed branch. The switch between branches is located inside its
/// step.
pub fn ode_b_exit(c: &Corridor, t: f64, rk4_steps: usize) -> Result<f64> {
    if c.regime != Regime::Exit {
        return Err(Error::InvalidArgument("corridor has no exit".into()));
    }
    if !(t >= 0.0) || rk4_steps == 0 {
        return Err(Error::InvalidArgument("need t >= 0 and at least one step".into()));
    }
    let (a, big_r) = (c.a, c.r_max);
    let (mut s, mut b, mut packed) = if c.rho0 >= 1.0 {
        (0.0, big_r, true)
    } else {
        let ts = saturation_time(c);
        if t <= ts {
            return Ok(a);
        }
        // Leave the 0/0 point along the known tangent.
        let h0 = (1e-9 * (1.0 + ts)).min(t - ts);
        (ts + h0, a + start_slope(c.rho0) * h0, false)
    };
    if s >= t {
        return Ok(b);
    }
    let h = (t - s) / rk4_steps as f64;
    let t0 = s;
    for i in 0..rk4_steps {
        let step_end = if i + 1 == rk4_steps { t } else { t0 + (i + 1) as f64 * h };
        let hh = step_end - s;
        let f_free = |u: f64, r: f64| exit_speed(c, false, u, r);
        let f_packed = |u: f64, r: f64| exit_speed(c, true, u, r);
        if packed {
            b = rk4_step(&f_packed, s, b, hh)?;
        } else {
            let next = rk4_step(&f_free, s, b, hh)?;
            if next > big_r - step_end {
                // Free zone exhausted inside this step: find the switch.
                let gap = |th: f64| -> f64 {
                    match rk4_step(&f_free, s, b, th * hh) {
                        Ok(v) => v - (big_r - s - th * hh),
                        Err(_) => 1.0,
                    }
                };
                let th = brent_root(gap, 0.0, 1.0, 1e-15)?;
                let mid = rk4_step(&f_free, s, b, th * hh)?;
                packed = true;
                let rest = (1.0 - th) * hh;
                b = if rest > 0.0 { rk4_step(&f_packed, s + th * hh, mid, rest)? } else { mid };
            } else {
                b = next;
            }
        }
        s = step_end;
        if b <= a {
            return Ok(a);
        }
    }
    Ok(b)
}

/// Self-converged front used as the reference in order studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeReference {
    pub b: f64,
    pub steps: usize,
    /// Difference to the estimate with half the steps.
    pub halving_gap: f64,
}

/// Front at time `t` with `2^20` RK4 steps, reporting the gap to `2^19`.
pub fn ode_reference(c: &Corridor, t: f64) -> Result<OdeReference> {
    let steps = 1 << 20;
    let b = ode_b_exit(c, t, steps)?;
    let half = ode_b_exit(c, t, steps / 2)?;
    Ok(OdeReference {
        b,
        steps,
        halving_gap: (b - half).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_exit_front_is_self_similar() {
        assert_eq!(ode_b_no_exit(0.4, 0.0, 10).unwrap(), 0.0);
        let c = 0.4f64.sqrt() / (1.0 - 0.4f64.sqrt());
        let b = ode_b_no_exit(0.4, 1.0, 1000).unwrap();
        assert!((b - c).abs() < 1e-10 * c, "{b}");
        assert!((b - 1.7207592200561266).abs() < 1e-12);
        let b = ode_b_no_exit(0.25, 2.0, 100).unwrap();
        assert!((b - 2.0).abs() < 1e-10);
        // The slope solves the ODE identically.
        let rhs = 0.4 * (c + 1.0) / (c - 0.4 * (c + 1.0));
        assert!((rhs - c).abs() < 1e-12);
    }

    #[test]
    fn packed_speed_is_smooth_at_exit() {
        assert_eq!(packed_speed(1.0, 1.0), 1.0);
        assert!((packed_speed(1.0, 1.0 + 1e-9) - 1.0).abs() < 1e-8);
        let r: f64 = 3.0;
        assert!((packed_speed(1.0, r) - 2.0 / (3.0 * r.ln())).abs() < 1e-15);
    }

    #[test]
    fn start_slope_matches_local_dynamics() {
        let c = Corridor::fig4();
        let beta = start_slope(c.rho0);
        assert!(beta > c.rho0 / (1.0 - c.rho0));
        let ts = saturation_time(&c);
        let s = 1e-5;
        let v = exit_speed(&c, false, ts + s, c.a + beta * s).unwrap();
        assert!((v - beta).abs() < 1e-3, "{v} vs {beta}");
    }

    #[test]
    fn exit_front_starts_at_exit() {
        let c = Corridor::fig4();
        let ts = saturation_time(&c);
        assert!((ts - 1.5).abs() < 1e-15);
        assert_eq!(ode_b_exit(&c, 0.0, 10).unwrap(), 1.0);
        assert_eq!(ode_b_exit(&c, ts, 10).unwrap(), 1.0);
        assert!(ode_b_exit(&c, ts + 0.5, 1000).unwrap() > 1.0);
    }

    #[test]
    fn saturated_front_decreases() {
        let c = Corridor::saturated();
        let mut prev = c.r_max;
        for k in 1..=10 {
            let b = ode_b_exit(&c, 0.1 * k as f64, 1000).unwrap();
            assert!(b < prev && b > c.a);
            prev = b;
        }
    }

    #[test]
    fn reference_is_converged() {
        let r = ode_reference(&Corridor::saturated(), 1.0).unwrap();
        assert!(r.halving_gap < 1e-10, "{}", r.halving_gap);
    }

    #[test]
    fn exit_front_switches_branch() {
        let c = Corridor::fig4();
        // Long enough for the free zone to run out.
        let b = ode_b_exit(&c, 9.0, 20_000).unwrap();
        assert!(b > 10.0 - 9.0);
        let b2 = ode_b_exit(&c, 9.0, 40_000).unwrap();
        assert!((b - b2).abs() < 1e-8, "{b} vs {b2}");
    }
}
