//! Discrete fronts of the minimising-movement scheme in the corridor.
//!
//! Masses here are in units of `\int 2 r dr`; they are normalised by
//! `rho0 (R^2 - a^2)` only when reported.

use crate::error::{Error, Result};
use crate::numerics::{brent_root, integrate};

use super::{Corridor, RadialProfile, Regime};

/// Closed-form front update without exit: the root `b >= b_prev` of
/// `b^2 - rho0 (b + k tau)^2 = b_prev^2 - rho0 (b_prev + (k - 1) tau)^2`.
///
/// Fails with a regime-end error once the free zone is exhausted
/// (`b + k tau > R`).
pub fn step_b_no_exit(b_prev: f64, k: usize, tau: f64, rho0: f64, r_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho0) {
        return Err(Error::InvalidArgument(format!("need 0 <= rho0 < 1, got {rho0}")));
    }
    if !(tau > 0.0) || k == 0 || !(b_prev >= 0.0) {
        return Err(Error::InvalidArgument("need tau > 0, k >= 1 and b_prev >= 0".into()));
    }
    let kt = k as f64 * tau;
    let inv = b_prev * b_prev - rho0 * (b_prev + kt - tau).powi(2);
    let disc = rho0 * rho0 * kt * kt + (1.0 - rho0) * (rho0 * kt * kt + inv);
    if disc < 0.0 {
        return Err(Error::RegimeEnd(format!("no real front at step {k}")));
    }
    let b = (rho0 * kt + disc.sqrt()) / (1.0 - rho0);
    if b + kt > r_max {
        return Err(Error::RegimeEnd(format!(
            "free zone exhausted at step {k}: b + k tau = {} > R = {r_max}",
            b + kt
        )));
    }
    Ok(b.max(b_prev))
}

/// Iterate before a step: packed on `[a, b)`, free on `[b, end)` after the
/// free part has travelled `shift`.
#[derive(Debug, Clone, Copy)]
struct Previous {
    a: f64,
    b: f64,
    shift: f64,
    end: f64,
    rho0: f64,
}

impl Previous {
    fn new(c: &Corridor, b: f64, shift: f64) -> Self {
        let free_end = (c.r_max - shift).max(c.a);
        Self {
            a: c.a,
            b,
            shift,
            end: free_end.max(b),
            rho0: c.rho0,
        }
    }

    fn packed_mass(&self) -> f64 {
        self.b * self.b - self.a * self.a
    }

    fn cum(&self, r: f64) -> f64 {
        let r = r.clamp(self.a, self.end);
        if r <= self.b {
            r * r - self.a * self.a
        } else {
            self.packed_mass() + self.rho0 * ((r + self.shift).powi(2) - (self.b + self.shift).powi(2))
        }
    }

    fn inv_cum(&self, m: f64) -> f64 {
        let m = m.clamp(0.0, self.total());
        let pm = self.packed_mass();
        if m <= pm {
            (self.a * self.a + m).sqrt()
        } else {
            ((self.b + self.shift).powi(2) + (m - pm) / self.rho0).sqrt() - self.shift
        }
    }

    fn total(&self) -> f64 {
        self.cum(self.end)
    }

    /// `2 r` times the density at `r`.
    fn mass_density(&self, r: f64) -> f64 {
        if r < self.b {
            2.0 * r
        } else {
            2.0 * self.rho0 * (r + self.shift)
        }
    }
}

/// Outcome of packing what stays after sending `[a, r_e]` to the exit.
#[derive(Debug, Clone, Copy)]
enum Packing {
    /// New front, and the first radius whose mass still moves freely.
    Valid { b: f64, free_from: Option<f64> },
    /// The exit took mass that should have stayed: a gap would open at `a`.
    Overshoot,
}

fn pack(prev: &Previous, r_e: f64, tau: f64) -> Result<Packing> {
    let a = prev.a;
    let m_e = prev.cum(r_e);
    let rest = prev.total() - m_e;
    let all_packed = || Packing::Valid {
        b: (a * a + rest.max(0.0)).sqrt(),
        free_from: None,
    };
    // After the shift the free density at `y` is `rho0 (1 + k tau / y)`,
    // so the packed zone must reach `rho0 k tau / (1 - rho0)`.
    let kt = prev.shift + tau;
    let y_min = if prev.rho0 < 1.0 { prev.rho0 * kt / (1.0 - prev.rho0) } else { f64::INFINITY };
    let x_lo = prev.b.max(r_e).max(a + tau).max(y_min + tau);
    if x_lo >= prev.end {
        return Ok(all_packed());
    }
    let g = |x: f64| prev.cum(x) - m_e - ((x - tau).powi(2) - a * a);
    let tol = 1e-14 * (1.0 + prev.end * prev.end);
    let g_lo = g(x_lo);
    if g_lo < -tol {
        return Ok(Packing::Overshoot);
    }
    if g(prev.end) >= 0.0 {
        return Ok(all_packed());
    }
    let x = if g_lo <= 0.0 {
        x_lo
    } else {
        brent_root(g, x_lo, prev.end, 1e-15 * (1.0 + prev.end))?
    };
    Ok(Packing::Valid {
        b: x - tau,
        free_from: Some(x),
    })
}

/// Preimage of `t` in the packed zone of the next iterate.
fn preimage(prev: &Previous, m_e: f64, t: f64) -> f64 {
    prev.inv_cum(m_e + t * t - prev.a * prev.a)
}

/// Breakpoint of the preimage map inside `[a, b]`, where it leaves the old packed zone.
fn split_points(prev: &Previous, m_e: f64, b: f64) -> Vec<f64> {
    let a = prev.a;
    let mut pts = vec![a];
    let m_b = prev.packed_mass() - m_e;
    if m_b > 0.0 {
        let tk = (a * a + m_b).sqrt();
        if tk > a && tk < b {
            pts.push(tk);
        }
    }
    pts.push(b);
    pts
}

/// Pressure at the exit when `[a, r_e]` is absorbed: `p(a) = \int_a^b (1 - (r(t) - t) / tau) dt`
/// with `p(b) = 0` and `r(t)` the preimage in the packed zone. `None` when
/// the exit takes mass that should stay behind.
fn pressure_at_exit(prev: &Previous, r_e: f64, tau: f64) -> Result<Option<f64>> {
    let b = match pack(prev, r_e, tau)? {
        Packing::Overshoot => return Ok(None),
        Packing::Valid { b, .. } => b,
    };
    let m_e = prev.cum(r_e);
    let f = |t: f64| 1.0 - (preimage(prev, m_e, t) - t) / tau;
    let pts = split_points(prev, m_e, b);
    Ok(Some(pts.windows(2).map(|w| integrate(f, w[0], w[1], 1e-15, 1e-13)).sum()))
}

/// Normalised one-step objective `\int (D(T(r)) + |r - T(r)|^2 / 2 tau) drho`
/// of the map that absorbs `[a, r_e]`, packs the next slice and shifts the
/// rest by `tau`. `None` for configurations outside the family.
fn objective(c: &Corridor, prev: &Previous, r_e: f64, tau: f64) -> Result<Option<f64>> {
    let (free_from, b) = match pack(prev, r_e, tau)? {
        Packing::Overshoot => return Ok(None),
        Packing::Valid { b, free_from } => (free_from, b),
    };
    let a = prev.a;
    let m_e = prev.cum(r_e);
    let mut total = 0.0;
    let mut cuts = vec![a];
    if prev.b > a && prev.b < r_e {
        cuts.push(prev.b);
    }
    cuts.push(r_e);
    for w in cuts.windows(2) {
        total += integrate(
            |r| (r - a).powi(2) / (2.0 * tau) * prev.mass_density(r),
            w[0],
            w[1],
            1e-15,
            1e-13,
        );
    }
    let packed = |t: f64| {
        let r = preimage(prev, m_e, t);
        ((t - a) + (r - t).powi(2) / (2.0 * tau)) * 2.0 * t
    };
    for w in split_points(prev, m_e, b).windows(2) {
        total += integrate(packed, w[0], w[1], 1e-15, 1e-13);
    }
    if let Some(x) = free_from {
        let free = |r: f64| (r - tau - a + 0.5 * tau) * prev.mass_density(r);
        let mut cuts = vec![x];
        if prev.b > x && prev.b < prev.end {
            cuts.push(prev.b);
        }
        cuts.push(prev.end);
        for w in cuts.windows(2) {
            total += integrate(free, w[0], w[1], 1e-15, 1e-13);
        }
    }
    Ok(Some(total / c.scale()))
}

/// One step with an exit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitStep {
    pub b: f64,
    /// Mass initially on `[a, r_e]` is absorbed during the step.
    pub r_e: f64,
    /// Normalised mass absorbed during the step.
    pub exit_increment: f64,
}

fn check_step(c: &Corridor, b_prev: f64, k: usize, tau: f64) -> Result<Previous> {
    if c.regime != Regime::Exit {
        return Err(Error::InvalidArgument("corridor has no exit".into()));
    }
    if !(tau > 0.0) || k == 0 {
        return Err(Error::InvalidArgument("need tau > 0 and k >= 1".into()));
    }
    if !(b_prev >= c.a && b_prev <= c.r_max) {
        return Err(Error::Domain(format!("front {b_prev} outside [a, R]")));
    }
    Ok(Previous::new(c, b_prev, (k - 1) as f64 * tau))
}

/// Step with a prescribed exit radius `r_e`.
pub fn step_with_exit_radius(c: &Corridor, b_prev: f64, k: usize, tau: f64, r_e: f64) -> Result<ExitStep> {
    let prev = check_step(c, b_prev, k, tau)?;
    let r_e = r_e.clamp(c.a, prev.end);
    match pack(&prev, r_e, tau)? {
        Packing::Overshoot => Err(Error::InvalidArgument(format!(
            "exit radius {r_e} absorbs mass that must stay"
        ))),
        Packing::Valid { b, .. } => Ok(ExitStep {
            b,
            r_e,
            exit_increment: prev.cum(r_e) / c.scale(),
        }),
    }
}

/// Pressure at the exit for a candidate exit radius; `None` outside the admissible family.
pub fn exit_pressure(c: &Corridor, b_prev: f64, k: usize, tau: f64, r_e: f64) -> Result<Option<f64>> {
    let prev = check_step(c, b_prev, k, tau)?;
    pressure_at_exit(&prev, r_e.clamp(c.a, prev.end), tau)
}

/// One-step objective for a candidate exit radius; `None` outside the admissible family.
pub fn exit_objective(c: &Corridor, b_prev: f64, k: usize, tau: f64, r_e: f64) -> Result<Option<f64>> {
    let prev = check_step(c, b_prev, k, tau)?;
    objective(c, &prev, r_e.clamp(c.a, prev.end), tau)
}

/// Front update with an exit.
///
/// The exit radius minimises the one-step objective over the family of maps
/// that absorb `[a, r_e]`; the minimiser is located through its optimality
/// condition, zero pressure at the exit, which decreases in `r_e`.
pub fn step_b_exit(c: &Corridor, b_prev: f64, k: usize, tau: f64) -> Result<ExitStep> {
    let prev = check_step(c, b_prev, k, tau)?;
    let a = c.a;
    if prev.total() <= 0.0 {
        return Ok(ExitStep {
            b: a,
            r_e: a,
            exit_increment: 0.0,
        });
    }
    let top = prev.end;
    let signed = |r: f64| -> f64 {
        match pressure_at_exit(&prev, r, tau) {
            Ok(Some(p)) => p,
            Ok(None) => -1.0,
            Err(_) => f64::NAN,
        }
    };
    let r_e = if signed(a) <= 0.0 {
        a
    } else {
        // Widen geometrically from the exit until the pressure changes sign.
        let mut lo = a;
        let mut hi = None;
        for j in (0..=48).rev() {
            let r = a + (top - a) * 0.5f64.powi(j);
            let p = signed(r);
            if p.is_nan() {
                return Err(Error::NoBracket { lo, hi: r });
            }
            if p < 0.0 {
                hi = Some(r);
                break;
            }
            lo = r;
        }
        match hi {
            None => top,
            Some(hi) => brent_root(signed, lo, hi, 1e-15 * (1.0 + top)).map_err(|_| Error::NoBracket { lo, hi })?,
        }
    };
    match pack(&prev, r_e, tau)? {
        Packing::Valid { b, .. } => Ok(ExitStep {
            b,
            r_e,
            exit_increment: prev.cum(r_e) / c.scale(),
        }),
        Packing::Overshoot => {
            // The root sits on the edge of the family; step back inside it.
            let r_in = r_e - 1e-14 * (1.0 + top);
            step_with_exit_radius(c, b_prev, k, tau, r_in)
        }
    }
}

/// Discrete profiles `rho_tau^0, ..., rho_tau^steps`.
///
/// Without an exit the packing construction is run with `r_e = a`, which
/// reproduces [`step_b_no_exit`] and continues past full packing.
pub fn discrete_profiles(c: &Corridor, tau: f64, steps: usize) -> Result<Vec<RadialProfile>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {tau}")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = c.initial_profile();
    out.push(cur);
    for k in 1..=steps {
        let (b, inc) = match c.regime {
            Regime::Exit => {
                let s = step_b_exit(c, cur.b, k, tau).map_err(|e| e.at_step(k))?;
                (s.b, s.exit_increment)
            }
            Regime::NoExit => {
                let prev = Previous::new(c, cur.b, (k - 1) as f64 * tau);
                match pack(&prev, c.a, tau).map_err(|e| e.at_step(k))? {
                    Packing::Valid { b, .. } => (b, 0.0),
                    Packing::Overshoot => return Err(Error::Invariant("closed corridor lost mass".into()).at_step(k)),
                }
            }
        };
        cur = c.profile(k as f64 * tau, b, cur.exited + inc);
        out.push(cur);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(k: usize, tau: f64, rho0: f64) -> f64 {
        let c = rho0.sqrt();
        k as f64 * tau * c / (1.0 - c)
    }

    #[test]
    fn first_step_from_rest() {
        let b = step_b_no_exit(0.0, 1, 0.01, 0.4, 10.0).unwrap();
        assert!((b - 0.017207592200561266).abs() < 1e-15, "{b}");
        assert!(step_b_no_exit(0.0, 1, 0.01, 1e-12, 10.0).unwrap() < 1e-7);
    }

    #[test]
    fn iterates_are_exact() {
        for rho0 in [0.1, 0.4, 0.7] {
            for tau in [0.1, 0.01] {
                let mut b = 0.0;
                for k in 1.. {
                    match step_b_no_exit(b, k, tau, rho0, 10.0) {
                        Ok(nb) => b = nb,
                        Err(Error::RegimeEnd(_)) => break,
                        Err(e) => panic!("{e}"),
                    }
                    let want = closed_form(k, tau, rho0);
                    assert!((b - want).abs() <= 1e-10 * want, "rho0 {rho0} tau {tau} k {k}");
                }
            }
        }
        let mut b = 0.0;
        for k in 1..=100 {
            b = step_b_no_exit(b, k, 0.01, 0.4, 10.0).unwrap();
        }
        assert!((b - 1.7207592200561266).abs() < 1e-12, "{b}");
    }

    #[test]
    fn packing_reproduces_closed_form() {
        let c = Corridor::fig3();
        let prof = discrete_profiles(&c, 0.01, 300).unwrap();
        let mut b = 0.0;
        for (k, p) in prof.iter().enumerate().skip(1) {
            b = step_b_no_exit(b, k, 0.01, 0.4, 10.0).unwrap();
            assert!((p.b - b).abs() <= 1e-11 * b, "k {k}: {} vs {b}", p.b);
        }
    }

    #[test]
    fn closed_corridor_ends_packed() {
        let c = Corridor::fig3();
        assert!(matches!(step_b_no_exit(6.0, 400, 0.01, 0.4, 10.0), Err(Error::RegimeEnd(_))));
        let prof = discrete_profiles(&c, 0.1, 80).unwrap();
        let last = prof.last().unwrap();
        assert!((last.b - 10.0 * 0.4f64.sqrt()).abs() < 1e-12);
        assert!(prof.iter().all(|p| (p.total_mass() - 1.0).abs() < 1e-10));
    }

    #[test]
    fn zero_exit_radius_follows_recurrence() {
        let c = Corridor::fig4();
        let tau = 0.05;
        let (b_prev, k) = (1.8, 60);
        let s = step_with_exit_radius(&c, b_prev, k, tau, c.a).unwrap();
        assert_eq!(s.exit_increment, 0.0);
        let lhs = s.b * s.b - 1.0 - 0.4 * (s.b + k as f64 * tau).powi(2);
        let rhs = b_prev * b_prev - 1.0 - 0.4 * (b_prev + (k - 1) as f64 * tau).powi(2);
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn optimal_step_follows_both_recurrences() {
        // Free zone present.
        let c = Corridor::fig4();
        let (tau, k) = (0.05, 60);
        let b_prev = 1.8;
        let s = step_b_exit(&c, b_prev, k, tau).unwrap();
        assert!(s.r_e > c.a && s.r_e < b_prev);
        let kt = k as f64 * tau;
        let lhs = s.b * s.b - 1.0 - 0.4 * (s.b + kt).powi(2);
        let rhs = b_prev * b_prev - s.r_e * s.r_e - 0.4 * (b_prev + kt - tau).powi(2);
        assert!((lhs - rhs).abs() < 1e-11, "{lhs} vs {rhs}");
        // Fully packed.
        let c = Corridor::saturated();
        let s = step_b_exit(&c, 10.0, 1, 0.1).unwrap();
        assert!((s.b * s.b - 1.0 - (100.0 - s.r_e * s.r_e)).abs() < 1e-11);
    }

    #[test]
    fn exit_radius_minimises_objective() {
        for (c, b_prev, k, tau) in [
            (Corridor::saturated(), 10.0, 1, 0.1),
            (Corridor::saturated(), 9.6, 20, 0.025),
            (Corridor::fig4(), 1.8, 60, 0.05),
        ] {
            let s = step_b_exit(&c, b_prev, k, tau).unwrap();
            let v = exit_objective(&c, b_prev, k, tau, s.r_e).unwrap().unwrap();
            for d in [1e-3, 1e-4] {
                for r in [s.r_e - d, s.r_e + d] {
                    if let Some(w) = exit_objective(&c, b_prev, k, tau, r).unwrap() {
                        assert!(w >= v - 1e-13, "r_e {} objective {v}, at {r}: {w}", s.r_e);
                    }
                }
            }
            let p = exit_pressure(&c, b_prev, k, tau, s.r_e).unwrap().unwrap();
            assert!(p.abs() < 1e-9, "b_prev {b_prev}: r_e {} b {} p {p}", s.r_e, s.b);
        }
    }

    #[test]
    fn free_start_drains_one_step_of_travel() {
        let c = Corridor::fig4();
        let s = step_b_exit(&c, c.a, 1, 0.1).unwrap();
        assert!((s.r_e - 1.1).abs() < 1e-9, "{}", s.r_e);
        assert!((s.b - c.a).abs() < 1e-12);
    }

    #[test]
    fn packed_zone_forms_after_saturation() {
        let c = Corridor::fig4();
        let tau = 0.01;
        let prof = discrete_profiles(&c, tau, 300).unwrap();
        for p in &prof {
            assert!(p.density(c.a + 1e-12) <= 1.0 + 1e-9, "t {}: {}", p.t, p.density(c.a + 1e-12));
        }
        assert_eq!(prof[140].b, c.a);
        let ode = super::super::ode_b_exit(&c, 3.0, 4000).unwrap();
        assert!((prof[300].b - ode).abs() < 1e-2, "{} vs {ode}", prof[300].b);
    }

    #[test]
    fn exit_bookkeeping() {
        for c in [Corridor::saturated(), Corridor::fig4()] {
            let prof = discrete_profiles(&c, 0.05, 100).unwrap();
            for w in prof.windows(2) {
                assert!(w[1].exited >= w[0].exited);
                assert!(w[1].b >= c.a && w[1].b <= c.r_max);
            }
            for p in &prof {
                assert!((p.exited - (1.0 - p.interior_mass())).abs() < 1e-10);
            }
        }
    }
}
