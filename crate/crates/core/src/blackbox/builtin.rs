//! Closed-form trajectory generators standing in for robot simulators.
//!
//! Each generator produces the raw signals a simulator would log; the
//! robustness landscape only appears after monitoring the paired formula.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{Dimension, Distribution, Domain};
use crate::seed::splitmix;
use crate::stl::Trace;

use super::{BlackBox, BlackBoxError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BuiltinId {
    /// Gripper reaching for a cube on a table (2-D target position).
    ReachArc,
    /// Pick-and-place of a cube of varying mass (1-D, grams).
    PickMass,
    /// Puck slid towards a goal (2-D goal position).
    SlideShifted,
}

impl BuiltinId {
    pub const ALL: [BuiltinId; 3] = [BuiltinId::ReachArc, BuiltinId::PickMass, BuiltinId::SlideShifted];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinId::ReachArc => "reach-arc",
            BuiltinId::PickMass => "pick-mass",
            BuiltinId::SlideShifted => "slide-shifted",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn dim(self) -> usize {
        match self {
            BuiltinId::PickMass => 1,
            BuiltinId::ReachArc | BuiltinId::SlideShifted => 2,
        }
    }

    /// The environment domain the generator is meant to be explored over.
    pub fn domain(self) -> Domain {
        let dim = |name: &str, unit: &str, lo: f64, hi: f64| Dimension {
            name: name.into(),
            unit: unit.into(),
            dist: Distribution::Uniform { lo, hi },
        };
        let dims = match self {
            BuiltinId::ReachArc => vec![dim("target_x", "m", -0.6, 0.6), dim("target_y", "m", 0.0, 0.8)],
            BuiltinId::PickMass => vec![dim("mass", "g", 20.0, 70.0)],
            BuiltinId::SlideShifted => vec![dim("goal_x", "m", 0.1, 1.0), dim("goal_y", "m", 0.0, 0.6)],
        };
        Domain::new(dims).expect("builtin domains are valid")
    }

    /// The task specification paired with the generator.
    pub fn formula_text(self) -> &'static str {
        match self {
            // reach the cube within one second
            BuiltinId::ReachArc => "ev[0, 1] (clamp(norm(r.x - c.x, r.y - c.y, r.z - c.z), 0, 0.1) <= 0)",
            // never lose the cube while grasping, and have it at the goal by the end
            BuiltinId::PickMass => {
                "alw[0, 3] ((clamp(grasp, 0, 1) <= 0) | (clamp(norm(r.x - c.x, r.y - c.y, r.z - c.z), 0, 1) <= -0.8)) \
                 & ev[2.5, 3] (clamp(norm(c.x - g.x, c.y - g.y, c.z - g.z), 0, 0.5) <= -0.8)"
            }
            // settle within 10 cm of the goal and stay there
            BuiltinId::SlideShifted => "ev[0, 2] alw[0, 2] (clamp(norm(p.x - g.x, p.y - g.y), 0, 1) <= -0.8)",
        }
    }

    /// Noise-free trace at `x`.
    pub fn trace(self, x: &[f64]) -> Result<Trace, BlackBoxError> {
        if x.len() != self.dim() {
            return Err(BlackBoxError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(BlackBoxError::NonFinite);
        }
        let tr = match self {
            BuiltinId::ReachArc => reach_arc(x[0], x[1]),
            BuiltinId::PickMass => pick_mass(x[0]),
            BuiltinId::SlideShifted => slide_shifted(x[0], x[1]),
        };
        tr.map_err(|e| BlackBoxError::InvalidTrace(e.to_string()))
    }
}

/// A builtin generator with optional additive Gaussian measurement noise.
/// The noise stream is a deterministic function of `(seed, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Builtin {
    pub id: BuiltinId,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise: f64,
}

impl Builtin {
    pub fn new(id: BuiltinId) -> Self {
        Self { id, seed: 0, noise: 0.0 }
    }
}

impl BlackBox for Builtin {
    fn evaluate(&mut self, x: &[f64]) -> Result<Trace, BlackBoxError> {
        let tr = self.id.trace(x)?;
        if self.noise == 0.0 {
            return Ok(tr);
        }
        let mut key = self.seed;
        for v in x {
            key = splitmix(key ^ v.to_bits());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let channels: Vec<(String, Vec<f64>)> = tr
            .channel_names()
            .map(|name| {
                let values = tr.channel(name).unwrap().iter().map(|v| v + self.noise * gaussian(&mut rng)).collect();
                (name.to_string(), values)
            })
            .collect();
        Trace::new(tr.dt(), channels).map_err(|e| BlackBoxError::InvalidTrace(e.to_string()))
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; 1 - u keeps the logarithm finite
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

fn lerp3(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + (b[0] - a[0]) * s, a[1] + (b[1] - a[1]) * s, a[2] + (b[2] - a[2]) * s]
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn xyz_channels(prefix: &str, pts: &[[f64; 3]]) -> [(String, Vec<f64>); 3] {
    [0, 1, 2].map(|k| (format!("{prefix}.{}", ["x", "y", "z"][k]), pts.iter().map(|p| p[k]).collect()))
}

mod reach {
    pub const DT: f64 = 0.02;
    pub const SAMPLES: usize = 61;
    pub const HOME: [f64; 3] = [0.0, 0.4, 0.2];
    pub const SPEED: f64 = 0.9;
    /// The arm cannot fold closer to its base than this.
    pub const R_MIN: f64 = 0.25;
    pub const X_MAX: f64 = 0.5;
    pub const Y_MAX: f64 = 0.7;
}

/// Closest point the arm can reach to a table target; the base sits at the
/// origin.
fn reachable(tx: f64, ty: f64) -> (f64, f64) {
    let mut x = tx.clamp(-reach::X_MAX, reach::X_MAX);
    let mut y = ty.clamp(0.0, reach::Y_MAX);
    let r = x.hypot(y);
    if r < reach::R_MIN {
        if r == 0.0 {
            (x, y) = (0.0, reach::R_MIN);
        } else {
            (x, y) = (x * reach::R_MIN / r, y * reach::R_MIN / r);
        }
    }
    (x, y)
}

fn reach_arc(tx: f64, ty: f64) -> Result<Trace, crate::stl::StlError> {
    let (px, py) = reachable(tx, ty);
    let end = [px, py, 0.0];
    let length = dist3(reach::HOME, end);
    let gripper: Vec<[f64; 3]> = (0..reach::SAMPLES)
        .map(|i| {
            let travelled = reach::SPEED * i as f64 * reach::DT;
            let s = if length > 0.0 { (travelled / length).min(1.0) } else { 1.0 };
            lerp3(reach::HOME, end, s)
        })
        .collect();
    let cube = vec![[tx, ty, 0.0]; reach::SAMPLES];
    Trace::new(reach::DT, xyz_channels("r", &gripper).into_iter().chain(xyz_channels("c", &cube)))
}

mod pick {
    pub const DT: f64 = 0.05;
    pub const SAMPLES: usize = 71;
    pub const START: [f64; 3] = [0.0, 0.0, 0.02];
    pub const GOAL: [f64; 3] = [0.5, 0.2, 0.02];
    pub const CARRY_Z: f64 = 0.25;
    /// Waypoint times of the nominal motion.
    pub const T_GRASP: f64 = 0.4;
    pub const T_LIFTED: f64 = 0.8;
    pub const T_ARRIVED: f64 = 2.0;
    pub const T_RELEASE: f64 = 2.4;
    pub const T_RETREAT: f64 = 2.8;
    /// Stages where inertial load peaks, as (time, minimum slipping mass in
    /// grams); the grip fails at the first stage whose threshold the mass
    /// reaches. Thresholds fall geometrically from lift-off at 60 g to 35 g,
    /// as for a friction limit under a load factor growing by a constant
    /// ratio per stage.
    pub const SLIP_STAGES: [(f64, f64); 5] = [(0.5, 60.0), (1.1, 52.44), (1.3, 45.83), (1.5, 40.05), (1.7, 35.0)];
    /// A slip happens up to this long before its stage, earlier for heavier
    /// cubes within the stage's mass band.
    pub const SLIP_LEAD: f64 = 0.03;
    pub const FALL_TIME: f64 = 0.2;
}

fn gripper_nominal(t: f64) -> [f64; 3] {
    use pick::*;
    let above = |p: [f64; 3]| [p[0], p[1], CARRY_Z];
    let smooth = |s: f64| {
        let s = s.clamp(0.0, 1.0);
        s * s * (3.0 - 2.0 * s)
    };
    let approach = [START[0], START[1], 0.3];
    if t < T_GRASP {
        lerp3(approach, START, smooth(t / T_GRASP))
    } else if t < T_LIFTED {
        lerp3(START, above(START), smooth((t - T_GRASP) / (T_LIFTED - T_GRASP)))
    } else if t < T_ARRIVED {
        lerp3(above(START), above(GOAL), smooth((t - T_LIFTED) / (T_ARRIVED - T_LIFTED)))
    } else if t < T_RELEASE {
        lerp3(above(GOAL), GOAL, smooth((t - T_ARRIVED) / (T_RELEASE - T_ARRIVED)))
    } else {
        lerp3(GOAL, above(GOAL), smooth((t - T_RELEASE) / (T_RETREAT - T_RELEASE)))
    }
}

/// Time at which a cube of mass `m` slips out of the gripper, if it does.
fn slip_time(m: f64) -> Option<f64> {
    let stages = pick::SLIP_STAGES;
    let k = stages.iter().position(|&(_, thr)| m >= thr)?;
    let (t, thr) = stages[k];
    // position within the stage's mass band, 0 at its threshold
    let frac = if k == 0 { 0.0 } else { ((m - thr) / (stages[k - 1].1 - thr)).clamp(0.0, 1.0) };
    Some(t - pick::SLIP_LEAD * frac)
}

fn pick_mass(m: f64) -> Result<Trace, crate::stl::StlError> {
    use pick::*;
    let slip = slip_time(m);
    let mut gripper = Vec::with_capacity(SAMPLES);
    let mut cube = Vec::with_capacity(SAMPLES);
    let mut grasp = Vec::with_capacity(SAMPLES);
    let drop_from = slip.map(gripper_nominal);
    for i in 0..SAMPLES {
        let t = i as f64 * DT;
        let r = gripper_nominal(t);
        let closed = (T_GRASP..T_RELEASE).contains(&t);
        let c = match (slip, drop_from) {
            (Some(ts), Some(p)) if t >= ts => {
                // free fall onto the table below the slip point
                let s = ((t - ts) / FALL_TIME).min(1.0);
                [p[0], p[1], p[2] + (START[2] - p[2]) * s * s]
            }
            _ if t < T_GRASP => START,
            _ if t < T_RELEASE => r,
            _ => GOAL,
        };
        gripper.push(r);
        cube.push(c);
        grasp.push(if closed { 1.0 } else { 0.0 });
    }
    let goal = vec![GOAL; SAMPLES];
    Trace::new(
        DT,
        xyz_channels("r", &gripper)
            .into_iter()
            .chain(xyz_channels("c", &cube))
            .chain(xyz_channels("g", &goal))
            .chain([("grasp".to_string(), grasp)]),
    )
}

mod slide {
    pub const DT: f64 = 0.1;
    pub const SAMPLES: usize = 51;
    pub const START: (f64, f64) = (0.25, 0.0);
    /// Goals beyond this x make the puck overshoot off the far side.
    pub const OVERSHOOT_X: f64 = 0.7;
    pub const OVERSHOOT_WIDTH: f64 = 0.03;
    pub const OVERSHOOT: f64 = 0.2;
    /// Region where the learned pushing policy veers sideways.
    pub const POCKET: (f64, f64) = (0.25, 0.5);
    pub const POCKET_WIDTH: f64 = 0.05;
    pub const POCKET_DEFLECTION: f64 = 0.25;
    pub const DAMPING: f64 = 0.5;
    pub const OMEGA: f64 = 4.0;
}

fn slide_shifted(gx: f64, gy: f64) -> Result<Trace, crate::stl::StlError> {
    use slide::*;
    let (dx, dy) = (gx - START.0, gy - START.1);
    let len = dx.hypot(dy);
    let dir = if len > 1e-12 { (dx / len, dy / len) } else { (0.0, 1.0) };
    let overshoot = OVERSHOOT / (1.0 + (-(gx - OVERSHOOT_X) / OVERSHOOT_WIDTH).exp());
    let pr2 = (gx - POCKET.0).powi(2) + (gy - POCKET.1).powi(2);
    let deflection = POCKET_DEFLECTION * (-pr2 / (2.0 * POCKET_WIDTH * POCKET_WIDTH)).exp();
    let fx = gx + dir.0 * overshoot + deflection;
    let fy = gy + dir.1 * overshoot;

    // underdamped step response from rest
    let wd = OMEGA * (1.0 - DAMPING * DAMPING).sqrt();
    let k = DAMPING / (1.0 - DAMPING * DAMPING).sqrt();
    let remaining = |t: f64| (-DAMPING * OMEGA * t).exp() * ((wd * t).cos() + k * (wd * t).sin());
    let mut px = Vec::with_capacity(SAMPLES);
    let mut py = Vec::with_capacity(SAMPLES);
    for i in 0..SAMPLES {
        let r = remaining(i as f64 * DT);
        px.push(fx + (START.0 - fx) * r);
        py.push(fy + (START.1 - fy) * r);
    }
    Trace::new(
        DT,
        [
            ("p.x".to_string(), px),
            ("p.y".to_string(), py),
            ("g.x".to_string(), vec![gx; SAMPLES]),
            ("g.y".to_string(), vec![gy; SAMPLES]),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robustness::agm_rob;
    use crate::stl::{parse_formula, required_horizon};

    fn rob(id: BuiltinId, x: &[f64]) -> f64 {
        let f = parse_formula(id.formula_text()).unwrap();
        agm_rob(&f, &id.trace(x).unwrap(), 0).unwrap().value()
    }

    #[test]
    fn traces_cover_formula_horizon() {
        for id in BuiltinId::ALL {
            let f = parse_formula(id.formula_text()).unwrap();
            let dom = id.domain();
            let (lo, hi) = dom.bounding_box();
            let mid: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
            let tr = id.trace(&mid).unwrap();
            assert!(tr.len() > required_horizon(&f, tr.dt()).unwrap(), "{}", id.name());
        }
    }

    #[test]
    fn reach_arc_centre_converges() {
        let tr = BuiltinId::ReachArc.trace(&[0.0, 0.4]).unwrap();
        let d: Vec<f64> = (0..tr.len())
            .map(|i| {
                let g = |n: &str| tr.channel(n).unwrap()[i];
                ((g("r.x") - g("c.x")).powi(2) + (g("r.y") - g("c.y")).powi(2) + (g("r.z") - g("c.z")).powi(2)).sqrt()
            })
            .collect();
        assert!(d.windows(2).all(|w| w[1] <= w[0]));
        assert!(*d.last().unwrap() < 0.05);
        assert!(rob(BuiltinId::ReachArc, &[0.0, 0.4]) > 0.0);
    }

    #[test]
    fn reach_arc_field_shape() {
        // dead zone next to the base
        assert!(rob(BuiltinId::ReachArc, &[0.0, 0.1]) < 0.0);
        assert!(rob(BuiltinId::ReachArc, &[0.12, 0.05]) < 0.0);
        // off the reachable table edges
        assert!(rob(BuiltinId::ReachArc, &[0.59, 0.4]) < 0.0);
        assert!(rob(BuiltinId::ReachArc, &[0.0, 0.79]) < 0.0);
        // along a ray from the centre to the far edge
        let values: Vec<f64> = (0..=40).map(|k| rob(BuiltinId::ReachArc, &[0.0, 0.4 + 0.01 * k as f64])).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-15), "{values:?}");
        assert!(values[0] > values[40]);
    }

    #[test]
    fn pick_mass_landscape() {
        let light = rob(BuiltinId::PickMass, &[25.0]);
        assert!(light > 0.0);
        for m in [20.0, 22.5, 30.0, 34.9] {
            assert_eq!(rob(BuiltinId::PickMass, &[m]), light);
        }
        let heavy = rob(BuiltinId::PickMass, &[65.0]);
        assert!(heavy < 0.0);
        for m in [60.0, 62.0, 68.0, 70.0] {
            assert!((rob(BuiltinId::PickMass, &[m]) - heavy).abs() < 1e-3);
        }
        let sweep: Vec<f64> = (0..=2500).map(|k| rob(BuiltinId::PickMass, &[35.0 + 0.01 * k as f64])).collect();
        let jumps = sweep.windows(2).filter(|w| (w[1] - w[0]).abs() > 0.1).count();
        assert!(jumps >= 3, "{jumps} jumps");
    }

    #[test]
    fn slide_shifted_landscape() {
        assert!(rob(BuiltinId::SlideShifted, &[0.9, 0.3]) < 0.0);
        assert!(rob(BuiltinId::SlideShifted, &[0.4, 0.3]) > 0.0);
        let c = slide::POCKET;
        assert!(rob(BuiltinId::SlideShifted, &[c.0, c.1]) < 0.0);
        let r = 0.15;
        for (dx, dy) in [(r, 0.0), (-r, 0.0), (0.0, r), (0.0, -r)] {
            let x = [(c.0 + dx).max(0.1), (c.1 + dy).min(0.6)];
            assert!(rob(BuiltinId::SlideShifted, &x) > 0.0, "{x:?}");
        }
    }

    #[test]
    fn noise_is_deterministic_per_point() {
        let mut a = Builtin { id: BuiltinId::SlideShifted, seed: 4, noise: 0.01 };
        let mut b = a.clone();
        let x = [0.5, 0.3];
        assert_eq!(a.evaluate(&x).unwrap(), b.evaluate(&x).unwrap());
        assert_ne!(a.evaluate(&x).unwrap(), BuiltinId::SlideShifted.trace(&x).unwrap());
    }

    #[test]
    fn wrong_dimension() {
        assert!(matches!(
            BuiltinId::PickMass.trace(&[1.0, 2.0]),
            Err(BlackBoxError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }
}
