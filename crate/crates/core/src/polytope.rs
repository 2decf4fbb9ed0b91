//! The feasible set: product of the vertex simplex and the capped unit box
//! over complement edges, with its faces and linear optimization oracles.

use rand::Rng;
use thiserror::Error;

/// Tolerance for classifying active constraints and for bound snapping.
/// Identification is combinatorial, so iterate coordinates this close to a
/// bound are set exactly to it after every step.
pub const TAU_FEAS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PolytopeError {
    #[error("zero direction")]
    ZeroDirection,
    #[error("infeasible direction: max feasible step {0:.3e} is not positive")]
    InfeasibleDirection(f64),
    #[error("face has {ones} unit y-coordinates but budget is {s}")]
    InfeasibleFace { ones: usize, s: usize },
    #[error("point infeasible: {0}")]
    Infeasible(String),
}

/// A point z = (x, y) of the product polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct FeasiblePoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: usize,
}

impl FeasiblePoint {
    pub fn new(x: Vec<f64>, y: Vec<f64>, s: usize) -> Self {
        FeasiblePoint { x, y, s }
    }

    pub fn check_feasible(&self) -> Result<(), PolytopeError> {
        let sum_x: f64 = self.x.iter().sum();
        if (sum_x - 1.0).abs() > 1e-9 {
            return Err(PolytopeError::Infeasible(format!("sum(x) = {sum_x}")));
        }
        if let Some(&bad) = self.x.iter().find(|&&v| v < -TAU_FEAS) {
            return Err(PolytopeError::Infeasible(format!("x coordinate {bad}")));
        }
        if let Some(&bad) = self
            .y
            .iter()
            .find(|&&v| !(-TAU_FEAS..=1.0 + TAU_FEAS).contains(&v))
        {
            return Err(PolytopeError::Infeasible(format!("y coordinate {bad}")));
        }
        let sum_y: f64 = self.y.iter().sum();
        if sum_y > self.s as f64 + TAU_FEAS {
            return Err(PolytopeError::Infeasible(format!(
                "sum(y) = {sum_y} > s = {}",
                self.s
            )));
        }
        Ok(())
    }

    /// Snaps coordinates within `TAU_FEAS` of a bound exactly onto it and
    /// renormalizes x onto the simplex.
    pub fn snap(&mut self) {
        for v in &mut self.x {
            if *v < TAU_FEAS {
                *v = 0.0;
            }
        }
        let sum: f64 = self.x.iter().sum();
        if sum > 0.0 && (sum - 1.0).abs() > f64::EPSILON {
            for v in &mut self.x {
                *v /= sum;
            }
        }
        for v in &mut self.y {
            if *v < TAU_FEAS {
                *v = 0.0;
            } else if *v > 1.0 - TAU_FEAS {
                *v = 1.0;
            }
        }
    }
}

/// A vertex of the product polytope: x = e_vx, y = indicator of vy, |vy| <= s.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolytopeVertex {
    pub vx: usize,
    /// Sorted indices of the unit y-coordinates.
    pub vy: Vec<usize>,
}

/// The minimal face of the polytope containing a point: support of x plus the
/// zero/one/fractional partition of y and the activity of the budget
/// constraint sum(y) = s.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceDescriptor {
    pub x_support: Vec<usize>,
    pub y_zero: Vec<usize>,
    pub y_one: Vec<usize>,
    pub y_free: Vec<usize>,
    pub sum_active: bool,
}

impl FaceDescriptor {
    /// Dimension of the face: free x directions plus free y directions minus
    /// the budget equality when active.
    pub fn dim(&self) -> usize {
        let xd = self.x_support.len().saturating_sub(1);
        let yd = if self.sum_active {
            self.y_free.len().saturating_sub(1)
        } else {
            self.y_free.len()
        };
        xd + yd
    }
}

pub fn minimal_face(z: &FeasiblePoint, tol: f64) -> FaceDescriptor {
    let mut x_support = Vec::new();
    for (i, &v) in z.x.iter().enumerate() {
        if v > tol {
            x_support.push(i);
        }
    }
    let (mut y_zero, mut y_one, mut y_free) = (Vec::new(), Vec::new(), Vec::new());
    for (e, &v) in z.y.iter().enumerate() {
        if v <= tol {
            y_zero.push(e);
        } else if v >= 1.0 - tol {
            y_one.push(e);
        } else {
            y_free.push(e);
        }
    }
    let sum_y: f64 = z.y.iter().sum();
    let sum_active = (sum_y - z.s as f64).abs() <= tol;
    FaceDescriptor {
        x_support,
        y_zero,
        y_one,
        y_free,
        sum_active,
    }
}

/// Indices of the k largest entries by `key`, ties broken toward smaller
/// index, restricted to `pool`.
fn top_k(pool: impl Iterator<Item = usize>, key: &[f64], k: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = pool.collect();
    let better = |a: &usize, b: &usize| {
        key[*b]
            .partial_cmp(&key[*a])
            .unwrap()
            .then_with(|| a.cmp(b))
    };
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, better);
        cand.truncate(k);
    }
    cand.sort_unstable();
    cand
}

/// Linear maximization oracle over the whole polytope: the simplex part picks
/// the largest gradient coordinate (smallest index on ties); the y part picks
/// the min(s, #positive) largest strictly positive coordinates.
pub fn fw_vertex(gx: &[f64], gy: &[f64], s: usize) -> PolytopeVertex {
    let mut vx = 0;
    for (i, &v) in gx.iter().enumerate() {
        if v > gx[vx] {
            vx = i;
        }
    }
    let npos = gy.iter().filter(|&&v| v > 0.0).count();
    let k = s.min(npos);
    let vy = if k == 0 {
        Vec::new()
    } else {
        top_k((0..gy.len()).filter(|&e| gy[e] > 0.0), gy, k)
    };
    PolytopeVertex { vx, vy }
}

/// Linear minimization oracle restricted to the face: x picks the smallest
/// gradient coordinate of the support; fixed y coordinates stay fixed; when
/// the budget is active exactly s - |y_one| free coordinates are set to one
/// (the smallest-gradient ones), otherwise negative-gradient free coordinates
/// are set to one, capped at the budget by dropping the largest first.
pub fn in_face_min_vertex(
    gx: &[f64],
    gy: &[f64],
    face: &FaceDescriptor,
    s: usize,
) -> Result<PolytopeVertex, PolytopeError> {
    if face.y_one.len() > s {
        return Err(PolytopeError::InfeasibleFace {
            ones: face.y_one.len(),
            s,
        });
    }
    let mut vx = *face.x_support.first().expect("nonempty face");
    for &i in &face.x_support {
        if gx[i] < gx[vx] {
            vx = i;
        }
    }
    let mut vy: Vec<usize> = face.y_one.clone();
    if face.sum_active {
        let b = s - face.y_one.len();
        debug_assert!(b <= face.y_free.len());
        // b smallest-gy free coordinates: negate the key reuse of top_k
        let neg: Vec<f64> = gy.iter().map(|v| -v).collect();
        vy.extend(top_k(face.y_free.iter().copied(), &neg, b));
    } else {
        let mut ones: Vec<usize> = face
            .y_free
            .iter()
            .copied()
            .filter(|&e| gy[e] < 0.0)
            .collect();
        let cap = s - face.y_one.len();
        if ones.len() > cap {
            // drop largest-gy ones first
            ones.sort_unstable_by(|a, b| gy[*a].partial_cmp(&gy[*b]).unwrap().then(a.cmp(b)));
            ones.truncate(cap);
        }
        vy.extend(ones);
    }
    vy.sort_unstable();
    Ok(PolytopeVertex { vx, vy })
}

/// Largest alpha with z + alpha d feasible, by ratio tests on x >= 0,
/// 0 <= y <= 1 and sum(y) <= s. The simplex equality is preserved because
/// directions are differences of simplex points.
pub fn max_feasible_step(
    z: &FeasiblePoint,
    dx: &[f64],
    dy: &[f64],
) -> Result<f64, PolytopeError> {
    const DIR_EPS: f64 = 1e-15;
    let zero = dx.iter().chain(dy.iter()).all(|v| v.abs() <= DIR_EPS);
    if zero {
        return Err(PolytopeError::ZeroDirection);
    }
    let mut alpha = f64::INFINITY;
    for (i, &d) in dx.iter().enumerate() {
        if d < -DIR_EPS {
            alpha = alpha.min(z.x[i] / -d);
        }
    }
    for (e, &d) in dy.iter().enumerate() {
        if d < -DIR_EPS {
            alpha = alpha.min(z.y[e] / -d);
        } else if d > DIR_EPS {
            alpha = alpha.min((1.0 - z.y[e]) / d);
        }
    }
    let sum_dy: f64 = dy.iter().sum();
    if sum_dy > DIR_EPS {
        let slack = (z.s as f64 - z.y.iter().sum::<f64>()).max(0.0);
        alpha = alpha.min(slack / sum_dy);
    }
    if !alpha.is_finite() {
        // P is bounded; an unconstrained ratio test means d was numerically zero.
        return Err(PolytopeError::ZeroDirection);
    }
    if alpha <= TAU_FEAS {
        return Err(PolytopeError::InfeasibleDirection(alpha));
    }
    Ok(alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartMode {
    Fdfw,
    Fwdc,
}

/// Random feasible starting point: x is uniform noise normalized to the
/// simplex; y is normalized the same way for FDFW and zero for FWdc.
pub fn random_start<R: Rng>(
    rng: &mut R,
    n: usize,
    m: usize,
    s: usize,
    mode: StartMode,
) -> FeasiblePoint {
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let sx: f64 = x.iter().sum();
    for v in &mut x {
        *v /= sx;
    }
    let y = match mode {
        StartMode::Fwdc => vec![0.0; m],
        StartMode::Fdfw => {
            if m == 0 || s == 0 {
                vec![0.0; m]
            } else {
                let mut y: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
                let sy: f64 = y.iter().sum();
                for v in &mut y {
                    *v /= sy;
                }
                y
            }
        }
    };
    FeasiblePoint { x, y, s }
}
