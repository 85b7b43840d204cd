#![allow(dead_code)]

use phaseplan::geometry::{BezierPath, Orientation, ParameterizedPath};
use phaseplan::model::{ActuatorLimits, ConstraintTable, DiffCaster, KinematicModel, UnitModel};
use phaseplan::pipeline::Problem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRID: usize = 1000;

pub struct Fixture {
    pub name: &'static str,
    pub problem: Problem,
    pub s_dot_start: f64,
    pub s_dot_end: f64,
    /// Sweep range as fractions of Max(MVC).
    pub sweep: (f64, f64),
}

impl Fixture {
    pub fn max_accel(&self) -> f64 {
        self.problem.table().limits().max_accel()
    }

    pub fn sweep_grid(&self, steps: usize) -> Vec<f64> {
        let top = self.problem.limits().max_mvc();
        let (lo, hi) = self.sweep;
        (0..steps)
            .map(|i| top * (lo + (hi - lo) * i as f64 / (steps - 1) as f64))
            .collect()
    }
}

pub fn straight(len: f64) -> ParameterizedPath {
    let bez = BezierPath::new(
        [vec![0.0], vec![len / 3.0], vec![2.0 * len / 3.0], vec![len]],
        Orientation::None,
    )
    .unwrap();
    ParameterizedPath::new(bez, 200).unwrap()
}

pub fn unit_problem(len: f64, v: f64, a: f64, grid: usize) -> Problem {
    let limits = ActuatorLimits::new(vec![v], vec![a]).unwrap();
    Problem::new(Box::new(UnitModel { dim: 1 }), &limits, straight(len), grid).unwrap()
}

pub fn curved_problem(points: [[f64; 2]; 4], offset: f64, grid: usize) -> Problem {
    let bez = BezierPath::new(points.map(|p| p.to_vec()), Orientation::Linear).unwrap();
    let path = ParameterizedPath::new(bez, 2000).unwrap();
    let limits = ActuatorLimits::new(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
    let model: Box<dyn KinematicModel> = Box::new(DiffCaster { offset });
    Problem::new(model, &limits, path, grid).unwrap()
}

pub const CURVES: [([[f64; 2]; 4], f64); 3] = [
    ([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.0]], 0.5),
    ([[0.0, 0.0], [1.0, 0.8], [2.0, 0.8], [3.0, 0.0]], 0.3),
    ([[0.0, 0.0], [1.5, 0.0], [1.5, 1.5], [0.5, 1.5]], 0.4),
];

/// Unit trapezoid, unit triangle and three curved paths for the offset
/// wheel model, all on a 1000-interval grid.
pub fn fixtures() -> Vec<Fixture> {
    let mut out = vec![
        Fixture {
            name: "trapezoid",
            problem: unit_problem(2.0, 1.0, 1.0, GRID),
            s_dot_start: 0.0,
            s_dot_end: 0.0,
            sweep: (0.3, 1.0),
        },
        Fixture {
            name: "triangle",
            problem: unit_problem(2.0, 10.0, 1.0, GRID),
            s_dot_start: 0.0,
            s_dot_end: 0.0,
            sweep: (0.03, 0.15),
        },
    ];
    for (i, (pts, offset)) in CURVES.iter().enumerate() {
        out.push(Fixture {
            name: ["s-bend", "arch", "hook"][i],
            problem: curved_problem(*pts, *offset, GRID),
            s_dot_start: 0.0,
            s_dot_end: 0.0,
            sweep: (0.2, 1.0),
        });
    }
    out
}

/// A random smooth two-actuator table on `[0, 2]` with `intervals` cells.
/// `J q_s` stays away from zero so there are no zero-inertia points.
pub fn toy_table(seed: u64, intervals: usize) -> ConstraintTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 2.0;
    let mut wave = |base: f64, amp: f64| {
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(-amp..amp) / 3.0,
                    rng.gen_range(0.5..4.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        move |s: f64| base + terms.iter().map(|(a, f, p)| a * (f * s + p).sin()).sum::<f64>()
    };
    let j0 = wave(1.2, 0.8);
    let j1 = wave(-0.9, 0.5);
    let b0 = wave(0.0, 1.5);
    let b1 = wave(0.3, 1.0);
    let (jq, bq): (Vec<_>, Vec<_>) = (0..=intervals)
        .map(|k| {
            let s = len * k as f64 / intervals as f64;
            (vec![j0(s), j1(s)], vec![b0(s), b1(s)])
        })
        .unzip();
    let v_max = vec![rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2)];
    let a_max = vec![rng.gen_range(0.8..2.0), rng.gen_range(0.8..2.0)];
    let limits = ActuatorLimits::new(v_max, a_max).unwrap();
    ConstraintTable::from_projections(len, &jq, &bq, limits).unwrap()
}

/// Lower bound on the minimum traveling time of the node-evaluated
/// phase-plane problem on `table`'s grid, from rest to rest, by dynamic
/// programming over `levels` velocity-squared levels per node.
///
/// The levels at node `k` split `[0, top_k]` evenly, where `top_k` bounds
/// every admissible rest-to-rest profile there from above. Rounding such a
/// profile up to the next level gives a path the program accepts: a step
/// from the level `y_k` may land on any level whose lower neighbour is at
/// most `y_k + 2h β(y_k)` and which is at least `p + 2h α(p)`, with `p` the
/// level below `y_k`. Both maps are increasing in `u` (asserted), so the
/// rounded path stays inside. Rounding up only shortens the time, hence
/// the bound.
pub fn dp_lower_bound(table: &ConstraintTable, levels: usize) -> f64 {
    let nodes = table.nodes();
    let h = table.step();
    let rows = table.rows();
    let tol_zi = table.zero_inertia_tol();

    let beta = |k: usize, u: f64| {
        let (a, b, c) = (table.a_row(k), table.b_row(k), table.c_row(k));
        (0..rows)
            .filter(|&i| a[i] > tol_zi)
            .map(|i| (-b[i] * u - c[i]) / a[i])
            .fold(f64::INFINITY, f64::min)
    };
    let alpha = |k: usize, u: f64| {
        let (a, b, c) = (table.a_row(k), table.b_row(k), table.c_row(k));
        (0..rows)
            .filter(|&i| a[i] < -tol_zi)
            .map(|i| (-b[i] * u - c[i]) / a[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let admissible = |k: usize, u: f64| {
        let (a, b, c) = (table.a_row(k), table.b_row(k), table.c_row(k));
        alpha(k, u) <= beta(k, u)
            && (0..rows).all(|i| a[i].abs() > tol_zi || b[i] * u + c[i] <= 0.0)
    };

    let caps: Vec<f64> = (0..nodes)
        .map(|k| {
            let (a, b, d) = (table.a_row(k), table.b_row(k), table.d_row(k));
            for i in 0..rows {
                if a[i].abs() > tol_zi {
                    assert!(1.0 - 2.0 * h * b[i] / a[i] >= 0.0, "step map not monotone");
                }
            }
            let u_v = (0..rows)
                .filter(|&i| a[i] > tol_zi)
                .map(|i| (d[i] / a[i]).powi(2))
                .fold(f64::INFINITY, f64::min);
            assert!(u_v.is_finite() && admissible(k, 0.0));
            if admissible(k, u_v) {
                return u_v;
            }
            // the admissible set is an interval from 0; keep its upper end
            // on the infeasible side
            let (mut lo, mut hi) = (0.0, u_v);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if admissible(k, mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        })
        .collect();
    // every profile from rest to rest stays under the acceleration chain
    // from rest and the deceleration chain into rest
    let mut fwd = vec![0.0; nodes];
    for k in 0..nodes - 1 {
        fwd[k + 1] = (fwd[k] + 2.0 * h * beta(k, fwd[k])).min(caps[k + 1]);
    }
    let mut bwd = vec![0.0; nodes];
    for k in (0..nodes - 1).rev() {
        let lands = |u: f64| u + 2.0 * h * alpha(k, u) <= bwd[k + 1];
        bwd[k] = if lands(caps[k]) {
            caps[k]
        } else {
            let (mut lo, mut hi) = (0.0, caps[k]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if lands(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
    }
    let grid: Vec<Vec<f64>> = (0..nodes)
        .map(|k| {
            let top = fwd[k].min(bwd[k]);
            (0..levels)
                .map(|j| top * j as f64 / (levels - 1) as f64)
                .collect()
        })
        .collect();
    let level = |k: usize, j: usize| grid[k][j];

    let mut best = vec![f64::INFINITY; levels];
    best[0] = 0.0;
    for k in 0..nodes - 1 {
        let mut next = vec![f64::INFINITY; levels];
        for (j, &t) in best.iter().enumerate() {
            if !t.is_finite() {
                continue;
            }
            let y = level(k, j);
            let below = if j == 0 { 0.0 } else { level(k, j - 1) };
            let up = y + 2.0 * h * beta(k, y);
            let down = below + 2.0 * h * alpha(k, below);
            let slack = 1e-9 * (1.0 + y);
            for (i, slot) in next.iter_mut().enumerate() {
                let z = level(k + 1, i);
                let z_below = if i == 0 { 0.0 } else { level(k + 1, i - 1) };
                if z_below > up + slack || z < down - slack {
                    continue;
                }
                let speed = y.sqrt() + z.sqrt();
                if speed > 0.0 {
                    *slot = slot.min(t + 2.0 * h / speed);
                }
            }
        }
        best = next;
    }
    best[0]
}
