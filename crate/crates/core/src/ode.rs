//! Adaptive Dormand-Prince 5(4) integration of planar systems with a
//! terminal crossing event.

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Dopri5 {
    pub tol: Tolerances,
    pub h_init: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self { tol: Tolerances { rtol: 1e-11, atol: 1e-24 }, h_init: 1e-3, h_max: 0.5, max_steps: 2_000_000 }
    }
}

/// How an event-driven integration finished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// The event function crossed zero; state and time at the crossing.
    Event { t: f64, y: State, steps: usize },
    /// The abort predicate fired.
    Aborted { t: f64, y: State, steps: usize },
    /// `t_max` reached (or the step budget ran out) without an event.
    Exhausted { t: f64, y: State, steps: usize },
}

// Dormand-Prince tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn axpy(y: &State, terms: &[(f64, &State)], h: f64) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One Dormand-Prince step: fifth-order state and the embedded error vector.
pub fn step<F: Fn(&State) -> State>(rhs: &F, y: &State, h: f64) -> (State, State) {
    let k1 = rhs(y);
    let k2 = rhs(&axpy(y, &[(A21, &k1)], h));
    let k3 = rhs(&axpy(y, &[(A31, &k1), (A32, &k2)], h));
    let k4 = rhs(&axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
    let k5 = rhs(&axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
    let k6 = rhs(&axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
    let y5 = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
    let k7 = rhs(&y5);
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

impl Dopri5 {
    /// Integrate from `y0` until `event(y)` turns non-positive, `abort(y)`
    /// holds, or `t_max` is reached. The crossing is located by re-stepping
    /// from the last accepted state with a root-found step length.
    pub fn integrate_until<F, E, A>(&self, rhs: F, y0: State, t_max: f64, event: E, abort: A) -> Outcome
    where
        F: Fn(&State) -> State,
        E: Fn(&State) -> f64,
        A: Fn(&State) -> bool,
    {
        let mut t = 0.0;
        let mut y = y0;
        let mut h = self.h_init;
        let mut steps = 0;
        let mut g_prev = event(&y);
        while t < t_max && steps < self.max_steps {
            h = h.min(t_max - t).min(self.h_max);
            let (y_new, err) = step(&rhs, &y, h);
            let mut norm: f64 = 0.0;
            for i in 0..2 {
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                norm = norm.max((err[i] / sc).abs());
            }
            if !norm.is_finite() {
                h *= 0.1;
                continue;
            }
            if norm <= 1.0 {
                steps += 1;
                let g_new = event(&y_new);
                if g_prev > 0.0 && g_new <= 0.0 {
                    let (hs, ys) = self.locate(&rhs, &event, &y, h, g_prev, g_new);
                    return Outcome::Event { t: t + hs, y: ys, steps };
                }
                t += h;
                y = y_new;
                g_prev = g_new;
                if abort(&y) {
                    return Outcome::Aborted { t, y, steps };
                }
            }
            let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        }
        Outcome::Exhausted { t, y, steps }
    }

    fn locate<F, E>(&self, rhs: &F, event: &E, y: &State, h: f64, g0: f64, g1: f64) -> (f64, State)
    where
        F: Fn(&State) -> State,
        E: Fn(&State) -> f64,
    {
        // Illinois false position on the step length.
        let (mut a, mut b) = (0.0, h);
        let (mut ga, mut gb) = (g0, g1);
        let mut side = 0;
        let mut best = (h, step(rhs, y, h).0);
        for _ in 0..100 {
            let c = (a * gb - b * ga) / (gb - ga);
            let c = if c > a && c < b { c } else { 0.5 * (a + b) };
            let yc = step(rhs, y, c).0;
            let gc = event(&yc);
            best = (c, yc);
            if gc == 0.0 || (b - a) <= 1e-15 * h.max(1.0) {
                break;
            }
            if gc > 0.0 {
                a = c;
                ga = gc;
                if side == 1 {
                    gb *= 0.5;
                }
                side = 1;
            } else {
                b = c;
                gb = gc;
                if side == -1 {
                    ga *= 0.5;
                }
                side = -1;
            }
            if gc.abs() <= 1e-15 * (g0.abs().max(g1.abs())) {
                break;
            }
        }
        best
    }
}
