//! Frank-Wolfe with in-face directions on the product polytope.
//!
//! Each iteration compares the classic FW direction toward the best vertex of
//! the whole polytope with the away direction inside the minimal face of the
//! current iterate, takes the better slope, and steps with the configured
//! rule. Maximal in-face steps drop the face dimension, which is what
//! identifies the support of a maximizer in finitely many steps.

use std::collections::VecDeque;
use std::time::Instant;

use crate::graph::Graph;
use crate::model::{
    self, extract_certificate, DefectiveCliqueCertificate, GradientCache, ModelParams,
    StepApplied, CERT_TOL,
};
use crate::polytope::{
    self, fw_vertex, in_face_min_vertex, max_feasible_step, minimal_face, FaceDescriptor,
    FeasiblePoint, PolytopeVertex, TAU_FEAS,
};
use crate::solve::{
    Algo, DirectionKind, SolveResult, StopConfig, StopReason, TheoryStats, TraceStep,
    STATIONARY_EPS, TIME_CHECK_MASK, TRACE_CAPACITY,
};
use crate::stepsize::{
    armijo, curve_along, exact_line_search, s1_step, verify_s1_s2, DirectionalCurve, StepRule,
    StepsizeConfig,
};

/// Interval for refreshing the tracked objective from scratch.
const OBJECTIVE_REFRESH_MASK: u64 = 511;

/// Solver state between iterations.
pub struct SolveState {
    pub z: FeasiblePoint,
    pub cache: GradientCache,
    pub face: FaceDescriptor,
    pub iter: u64,
    pub last_direction_kind: Option<DirectionKind>,
    pub last_step_maximal: bool,
    pub gap: f64,
    pub face_gap: f64,
    pub objective: f64,
    pub monotone_so_far: bool,
    scratch_dx: Vec<f64>,
    scratch_dy: Vec<f64>,
    cert_memo: CertMemo,
}

/// Avoids re-running the structural certificate checks while neither the
/// rounded support nor the rounded y changed.
#[derive(Default)]
struct CertMemo {
    supp: Vec<usize>,
    y_ones: Vec<usize>,
    structural_reject: bool,
}

impl SolveState {
    pub fn new(g: &Graph, p: &ModelParams, mut z0: FeasiblePoint) -> Self {
        z0.snap();
        z0.check_feasible().expect("infeasible starting point");
        let cache = model::gradient(g, p, &z0);
        let face = minimal_face(&z0, TAU_FEAS);
        let objective = model::objective(g, p, &z0);
        SolveState {
            scratch_dx: vec![0.0; g.n()],
            scratch_dy: vec![0.0; g.comp_edge_count()],
            z: z0,
            cache,
            face,
            iter: 0,
            last_direction_kind: None,
            last_step_maximal: false,
            gap: 0.0,
            face_gap: 0.0,
            objective,
            monotone_so_far: true,
            cert_memo: CertMemo::default(),
        }
    }
}

pub(crate) struct ChosenDirection {
    pub kind: DirectionKind,
    pub vertex: PolytopeVertex,
    pub slope: f64,
    pub gap: f64,
    pub face_gap: f64,
}

/// Oracle phase: FW vertex and in-face away vertex, slopes and gaps.
fn choose_direction(state: &SolveState) -> ChosenDirection {
    let z = &state.z;
    let cache = &state.cache;
    let s_k = fw_vertex(&cache.gx, &cache.gy, z.s);
    let slope_fw = model::multiplier(cache, z, &s_k);
    let gap = slope_fw.max(0.0);
    let v_k = in_face_min_vertex(&cache.gx, &cache.gy, &state.face, z.s)
        .expect("iterate face is feasible");
    let slope_fd = -model::multiplier(cache, z, &v_k);
    // step 7 of the method: ties go to the FW direction
    if slope_fw >= slope_fd {
        ChosenDirection {
            kind: DirectionKind::Fw,
            vertex: s_k,
            slope: slope_fw,
            gap,
            face_gap: slope_fw.max(slope_fd),
        }
    } else {
        ChosenDirection {
            kind: DirectionKind::InFace,
            vertex: v_k,
            slope: slope_fd,
            gap,
            face_gap: slope_fd,
        }
    }
}

pub(crate) struct StepRecord {
    pub alpha: f64,
    pub capped: bool,
    pub delta_h: f64,
    pub y_moved: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum IterateError {
    #[error("no ascent direction while gap = {gap:.3e} > eps")]
    NonAscent { gap: f64 },
    #[error("stepsize failure: {0}")]
    Stepsize(#[from] crate::stepsize::StepsizeError),
    #[error("infeasible direction: {0}")]
    Direction(#[from] polytope::PolytopeError),
}

/// One FDFW iteration: pick the direction, choose the stepsize, move, snap,
/// refresh gradient, face, objective and the instrumentation counters.
pub fn fdfw_iterate(
    state: &mut SolveState,
    g: &Graph,
    p: &ModelParams,
    stepconf: &StepsizeConfig,
    lipschitz: f64,
    theory: &mut TheoryStats,
) -> Result<StepRecord, IterateError> {
    let dir = choose_direction(state);
    state.gap = dir.gap;
    state.face_gap = dir.face_gap;
    debug_assert!(dir.slope >= dir.face_gap - 1e-12);
    if (dir.slope - dir.face_gap).abs() > 1e-10 * (1.0 + dir.face_gap.abs()) {
        theory.slope_mismatches += 1;
    }
    if dir.slope <= STATIONARY_EPS {
        return Err(IterateError::NonAscent { gap: dir.gap });
    }

    // dense direction: toward the vertex for FW, away from it in-face
    let (dx, dy) = (&mut state.scratch_dx, &mut state.scratch_dy);
    let toward = dir.kind == DirectionKind::Fw;
    let sign = if toward { 1.0 } else { -1.0 };
    for (i, d) in dx.iter_mut().enumerate() {
        *d = -sign * state.z.x[i];
    }
    dx[dir.vertex.vx] += sign;
    for (e, d) in dy.iter_mut().enumerate() {
        *d = -sign * state.z.y[e];
    }
    for &e in &dir.vertex.vy {
        dy[e] += sign;
    }

    let alpha_max = if toward {
        1.0
    } else {
        max_feasible_step(&state.z, dx, dy)?
    };
    let ndx: f64 = dx.iter().map(|v| v * v).sum();
    let ndy: f64 = dy.iter().map(|v| v * v).sum();
    let dir_norm_sq = ndx + ndy;
    let curve = curve_along(g, p, &state.z, state.objective, dir.slope, dx, dy);
    #[cfg(debug_assertions)]
    validate_curve(g, p, &state.z, dx, dy, &curve, alpha_max);

    let alpha = match stepconf.rule {
        StepRule::S1Fixed => s1_step(dir.slope, dir_norm_sq, alpha_max, stepconf.c_const)?,
        StepRule::Armijo => armijo(
            |a| curve.delta(a),
            dir.slope,
            alpha_max,
            stepconf.c1,
            stepconf.gamma,
        )?,
        StepRule::Exact => exact_line_search(&curve, alpha_max),
    };
    let capped = alpha >= alpha_max - 1e-15;
    let delta_h = curve.delta(alpha);

    if capped {
        theory.capped_steps += 1;
        if dir.gap > STATIONARY_EPS && alpha_max > dir.gap / dir.face_gap + 1e-10 {
            theory.lemma41_violations += 1;
        }
    }
    if let Some(rho) = stepconf.rho() {
        let c_theory = stepconf.s1_c_const(lipschitz);
        let (s1, s2) = verify_s1_s2(
            dir.slope,
            dir_norm_sq,
            alpha_max,
            alpha,
            delta_h,
            c_theory,
            rho,
        );
        if !s1 {
            theory.s1_violations += 1;
        }
        if !s2 {
            theory.s2_violations += 1;
        }
    }

    for (i, d) in dx.iter().enumerate() {
        state.z.x[i] += alpha * d;
    }
    for (e, d) in dy.iter().enumerate() {
        state.z.y[e] += alpha * d;
    }
    state.z.snap();
    let version = state.cache.version;
    model::update_gradient(
        &mut state.cache,
        g,
        p,
        &state.z,
        &StepApplied::Affine {
            vertex: &dir.vertex,
            alpha,
            toward,
        },
        version,
    );
    state.face = minimal_face(&state.z, TAU_FEAS);
    state.objective += delta_h;
    if state.iter & OBJECTIVE_REFRESH_MASK == 0 {
        state.objective = model::objective(g, p, &state.z);
    }
    state.monotone_so_far &= delta_h >= -1e-12;
    state.last_direction_kind = Some(dir.kind);
    state.last_step_maximal = capped;
    state.iter += 1;
    Ok(StepRecord {
        alpha,
        capped,
        delta_h,
        y_moved: alpha > 0.0 && ndy > 1e-30,
    })
}

#[cfg(debug_assertions)]
fn validate_curve(
    g: &Graph,
    p: &ModelParams,
    z: &FeasiblePoint,
    dx: &[f64],
    dy: &[f64],
    curve: &DirectionalCurve,
    alpha_max: f64,
) {
    for &a in &[0.0, 0.5 * alpha_max, alpha_max] {
        let mut zt = z.clone();
        for (i, d) in dx.iter().enumerate() {
            zt.x[i] += a * d;
        }
        for (e, d) in dy.iter().enumerate() {
            zt.y[e] += a * d;
        }
        let direct = model::objective(g, p, &zt);
        debug_assert!(
            (curve.eval(a) - direct).abs() <= 1e-8 * (1.0 + direct.abs()),
            "curve {} vs objective {} at alpha {}",
            curve.eval(a),
            direct,
            a
        );
    }
}

/// Certificate attempt with structural-reject memoization.
fn try_certificate(
    state: &mut SolveState,
    g: &Graph,
    p: &ModelParams,
) -> Option<DefectiveCliqueCertificate> {
    let supp: Vec<usize> = (0..g.n()).filter(|&i| state.z.x[i] > CERT_TOL).collect();
    let y_ones: Vec<usize> = (0..state.z.y.len())
        .filter(|&e| state.z.y[e] > 1.0 - CERT_TOL)
        .collect();
    let memo = &mut state.cert_memo;
    if memo.structural_reject && memo.supp == supp && memo.y_ones == y_ones {
        return None;
    }
    match extract_certificate(g, p, &state.z, CERT_TOL) {
        Ok(cert) => Some(cert),
        Err(reason) => {
            use crate::model::RejectReason::*;
            memo.structural_reject =
                matches!(reason, SupportNotDefective | MissingEdgeNotInY | NotMaximal | SumYNotS);
            memo.supp = supp;
            memo.y_ones = y_ones;
            None
        }
    }
}

/// Uniform Lipschitz bound for the x-gradient over the whole feasible set:
/// twice the largest augmented degree a feasible y can produce, plus alpha.
/// The augmented row sum at i is at most deg(i) + min(comp_deg(i), s).
pub fn lipschitz_bound(g: &Graph, p: &ModelParams) -> f64 {
    let dmax_aug = (0..g.n())
        .map(|i| g.degree(i) + g.comp_neighbors(i).len().min(p.s))
        .max()
        .unwrap_or(0);
    2.0 * dmax_aug as f64 + p.alpha
}

pub(crate) struct RunLoop {
    pub start: Instant,
    pub trace: Option<VecDeque<TraceStep>>,
}

impl RunLoop {
    pub fn new(trace: bool) -> Self {
        RunLoop {
            start: Instant::now(),
            trace: trace.then(|| VecDeque::with_capacity(TRACE_CAPACITY)),
        }
    }

    pub fn record(&mut self, step: TraceStep) {
        if let Some(buf) = &mut self.trace {
            if buf.len() == TRACE_CAPACITY {
                buf.pop_front();
            }
            buf.push_back(step);
        }
    }
}

/// Rounded support and fake edges of the terminal iterate, for reporting
/// with or without a certificate.
pub(crate) fn rounded_candidate(g: &Graph, z: &FeasiblePoint) -> (Vec<usize>, Vec<(usize, usize)>) {
    let clique: Vec<usize> = (0..g.n()).filter(|&i| z.x[i] > CERT_TOL).collect();
    let fake: Vec<(usize, usize)> = (0..z.y.len())
        .filter(|&e| z.y[e] > 1.0 - CERT_TOL)
        .map(|e| g.comp_edges()[e])
        .collect();
    (clique, fake)
}

/// Runs the FDFW from `z0` until the stopping rule fires.
pub fn run_fdfw(
    g: &Graph,
    p: &ModelParams,
    z0: FeasiblePoint,
    stepconf: &StepsizeConfig,
    stopconf: &StopConfig,
    trace: bool,
) -> SolveResult {
    let mut state = SolveState::new(g, p, z0);
    let mut looper = RunLoop::new(trace);
    let lipschitz = lipschitz_bound(g, p);
    let mut theory = TheoryStats::default();
    let mut certificate = None;
    let mut y_changes = 0u64;
    let deadline = looper.start + stopconf.time_limit;

    let stop_reason = loop {
        if state.iter >= stopconf.max_iters {
            break StopReason::MaxIters;
        }
        if state.iter & TIME_CHECK_MASK == 0 && Instant::now() >= deadline {
            break StopReason::TimeLimit;
        }
        // stopping rule: gap at threshold plus an accepted certificate
        state.gap = model::fw_gap(&state.cache, &state.z, state.z.s);
        if state.gap <= stopconf.eps_gap {
            if !stopconf.require_certificate {
                break StopReason::GapReached;
            }
            if let Some(cert) = try_certificate(&mut state, g, p) {
                certificate = Some(cert);
                break StopReason::Certified;
            }
        }
        match fdfw_iterate(&mut state, g, p, stepconf, lipschitz, &mut theory) {
            Ok(step) => {
                if step.y_moved {
                    y_changes += 1;
                }
                looper.record(TraceStep {
                    iter: state.iter,
                    x: if looper.trace.is_some() {
                        state.z.x.clone()
                    } else {
                        Vec::new()
                    },
                    y_changed: step.y_moved,
                    h: state.objective,
                    gap: state.gap,
                    face_gap: state.face_gap,
                    kind: state.last_direction_kind.unwrap(),
                    alpha: step.alpha,
                    capped: step.capped,
                });
            }
            Err(IterateError::NonAscent { gap }) => {
                if gap > stopconf.eps_gap {
                    log::error!("fdfw: no ascent direction at gap {gap:.3e}");
                    break StopReason::Stalled;
                }
                if stopconf.require_certificate {
                    if let Some(cert) = try_certificate(&mut state, g, p) {
                        certificate = Some(cert);
                        break StopReason::Certified;
                    }
                }
                break StopReason::Stationary;
            }
            Err(err) => {
                log::error!("fdfw: {err}");
                break StopReason::Stalled;
            }
        }
    };

    let (clique, fake_edges) = match &certificate {
        Some(cert) => (
            cert.clique.clone(),
            cert.y_vertex.iter().map(|&e| g.comp_edges()[e]).collect(),
        ),
        None => rounded_candidate(g, &state.z),
    };
    SolveResult {
        algo: Algo::Fdfw,
        instance: String::new(),
        s: p.s,
        seed: 0,
        clique,
        fake_edges,
        certificate,
        objective: model::objective(g, p, &state.z),
        gap: state.gap,
        iters: state.iter,
        y_changes,
        time_ms: looper.start.elapsed().as_secs_f64() * 1e3,
        stop_reason,
        monotone: state.monotone_so_far,
        theory,
        gradient_rebuilds: state.cache.rebuilds,
        trace: looper.trace.map(|buf| buf.into_iter().collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{random_start, StartMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k3() -> Graph {
        Graph::from_edge_list(3, &[(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    fn p3() -> Graph {
        Graph::from_edge_list(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn k3_uniform_start_is_certified_fixed_point() {
        let g = k3();
        let p = ModelParams::for_graph(&g, 1.0, None, 0).unwrap();
        let u = 1.0 / 3.0;
        let z0 = FeasiblePoint::new(vec![u, u, u], vec![], 0);
        let res = run_fdfw(
            &g,
            &p,
            z0,
            &StepsizeConfig::exact(),
            &StopConfig::default(),
            false,
        );
        assert_eq!(res.stop_reason, StopReason::Certified);
        assert_eq!(res.clique, vec![0, 1, 2]);
        let expect = 1.0 - (2.0 - 1.0) / 6.0;
        assert!((res.objective - expect).abs() < 1e-10);
    }

    #[test]
    fn p3_random_starts_certify_the_triangle() {
        let g = p3();
        let p = ModelParams::for_graph(&g, 1.0, Some(2.0 / 9.0), 1).unwrap();
        let mut best = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z0 = random_start(&mut rng, 3, 1, 1, StartMode::Fdfw);
            let res = run_fdfw(
                &g,
                &p,
                z0,
                &StepsizeConfig::exact(),
                &StopConfig::default(),
                false,
            );
            assert_eq!(res.stop_reason, StopReason::Certified, "seed {seed}");
            assert!(res.theory.clean(), "seed {seed}: {:?}", res.theory);
            best = best.max(res.clique.len());
        }
        assert_eq!(best, 3);
    }

    #[test]
    fn maximal_in_face_step_drops_face_dimension() {
        // run a few iterations on a random instance and check the recorded
        // dimension drop after every capped in-face step
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = Graph::gnp(10, 0.5, &mut rng);
        let m = g.comp_edge_count();
        let p = ModelParams::for_graph(&g, 1.0, None, 2).unwrap();
        let z0 = random_start(&mut rng, 10, m, p.s, StartMode::Fdfw);
        let mut state = SolveState::new(&g, &p, z0);
        let lip = lipschitz_bound(&g, &p);
        let mut theory = TheoryStats::default();
        let mut drops = 0;
        for _ in 0..200 {
            let before = state.face.dim();
            match fdfw_iterate(&mut state, &g, &p, &StepsizeConfig::exact(), lip, &mut theory) {
                Ok(step) => {
                    if step.capped && state.last_direction_kind == Some(DirectionKind::InFace) {
                        assert!(
                            state.face.dim() < before,
                            "maximal in-face step kept dim {} -> {}",
                            before,
                            state.face.dim()
                        );
                        drops += 1;
                    }
                }
                Err(_) => break,
            }
        }
        assert!(drops > 0, "no maximal in-face steps observed");
        assert!(theory.clean());
    }

    #[test]
    fn stalls_are_limited_to_s1_fixed_rule() {
        // the fixed rule with C = 2, alpha = 1 makes no on-face progress;
        // the run must still terminate via the iteration budget
        let g = p3();
        let p = ModelParams::for_graph(&g, 1.0, Some(2.0 / 9.0), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z0 = random_start(&mut rng, 3, 1, 1, StartMode::Fdfw);
        let stop = StopConfig {
            max_iters: 3000,
            ..StopConfig::default()
        };
        let res = run_fdfw(&g, &p, z0, &StepsizeConfig::s1_fixed(2.0), &stop, false);
        assert!(matches!(
            res.stop_reason,
            StopReason::MaxIters | StopReason::Certified
        ));
    }

    #[test]
    fn trace_ring_buffer_caps_length() {
        let g = p3();
        let p = ModelParams::for_graph(&g, 1.0, Some(2.0 / 9.0), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z0 = random_start(&mut rng, 3, 1, 1, StartMode::Fdfw);
        let res = run_fdfw(
            &g,
            &p,
            z0,
            &StepsizeConfig::exact(),
            &StopConfig::default(),
            true,
        );
        let trace = res.trace.unwrap();
        assert!(!trace.is_empty());
        assert!(trace.len() <= TRACE_CAPACITY);
        assert_eq!(trace.last().unwrap().iter, res.iters);
    }
}
