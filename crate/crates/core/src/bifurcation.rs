//! Bifurcation points `mu_n`: roots of `g_n(mu) = p*''(1-eps) + dp1^n/dr(1-eps)`.
//!
//! Every evaluation re-solves the steady state, so `rho4 = rho4(mu)` moves
//! with `mu` during the search.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid_bvp::Grid;
use crate::linearized::{solve_mode, ModeSolution};
use crate::params::{compute_mu_c, leading_order_coeffs, Parameters, BETA_DISTINCT, MU_C_NEGATIVE};
use crate::steady_state::{solve_steady_state, SteadyState};

/// One evaluation of the Frechet coefficient together with its pieces.
#[derive(Debug, Clone)]
pub struct GEvaluation {
    pub n: u32,
    pub mu: f64,
    pub g: f64,
    pub d2p: f64,
    pub dp1n: f64,
    pub rho4: f64,
}

fn steady_at(mu: f64, params: &Parameters, grid: &Grid) -> Result<SteadyState> {
    let p = params.with_mu(mu);
    solve_steady_state(&p, &grid.with_epsilon(p.epsilon)?)
}

fn evaluation(n: u32, state: &SteadyState, mode: &ModeSolution) -> GEvaluation {
    GEvaluation {
        n,
        mu: state.mu,
        g: state.boundary.d2p + mode.dp1n_inner,
        d2p: state.boundary.d2p,
        dp1n: mode.dp1n_inner,
        rho4: state.rho4,
    }
}

pub fn evaluate_g(n: u32, mu: f64, params: &Parameters, grid: &Grid) -> Result<GEvaluation> {
    let ctx = |e: Error| e.at(n, mu, params.epsilon);
    let state = steady_at(mu, params, grid).map_err(ctx)?;
    let mode = solve_mode(n, &state).map_err(ctx)?;
    Ok(evaluation(n, &state, &mode))
}

/// `g_n(mu)`.
pub fn g_n(n: u32, mu: f64, params: &Parameters, grid: &Grid) -> Result<f64> {
    Ok(evaluate_g(n, mu, params, grid)?.g)
}

/// `g_n` for several modes against one steady state.
pub fn evaluate_g_modes(modes: &[u32], mu: f64, params: &Parameters, grid: &Grid) -> Result<Vec<GEvaluation>> {
    let state = steady_at(mu, params, grid).map_err(|e| e.at(modes[0], mu, params.epsilon))?;
    modes
        .iter()
        .map(|&n| {
            let mode = solve_mode(n, &state).map_err(|e| e.at(n, mu, params.epsilon))?;
            Ok(evaluation(n, &state, &mode))
        })
        .collect()
}

/// `(gamma + H0) n^2 (1 - n^2)` for `n >= 2`, zero for `n` in {0, 1}.
pub fn predicted_mu_n(n: u32, params: &Parameters) -> f64 {
    let n2 = f64::from(n * n);
    if n <= 1 {
        0.0
    } else {
        params.gamma_h0() * n2 * (1.0 - n2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationPoint {
    pub n: u32,
    pub epsilon: f64,
    pub mu_n: f64,
    /// `g_n(mu_n)`
    pub residual: f64,
    /// `dg_n/dmu` at the root by a centered secant.
    pub slope: f64,
    pub prediction: f64,
    /// `|mu_n - prediction| / |prediction|`, or the absolute deviation when the
    /// prediction is zero.
    pub rel_dev: f64,
    pub bracket: (f64, f64),
    /// Sign changes seen in the scan of the final bracket.
    pub sign_changes: usize,
    /// Residual tolerance used, `1e-10 max(1, |p*''|)`.
    pub tolerance: f64,
    /// Uncertainty of `mu_n` implied by the final residual and slope (or the
    /// collapsed bracket width, whichever is larger).
    pub mu_tolerance: f64,
    pub evaluations: usize,
}

/// Number of `g_n` samples in a bracket scan.
const SCAN_POINTS: usize = 9;
const EXPANSIONS: usize = 4;
const MAX_POLISH: usize = 80;

/// Bracket narrowed to a few ulps of `mu`.
fn collapsed(a: f64, b: f64) -> bool {
    (b - a).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn default_bracket(n: u32, params: &Parameters) -> (f64, f64) {
    let centre = predicted_mu_n(n, params);
    let half = if n >= 2 { 0.5 * centre.abs() } else { 10.0 * params.epsilon * params.gamma_h0() };
    (centre - half, centre + half)
}

fn clip_to_mu_c(bracket: (f64, f64), mu_c: f64) -> (f64, f64) {
    let floor = mu_c + 1e-6 * mu_c.abs().max(1.0);
    (bracket.0.max(floor), bracket.1)
}

struct Scan {
    mus: Vec<f64>,
    gs: Vec<f64>,
}

impl Scan {
    fn sign_changes(&self) -> Vec<usize> {
        (0..self.gs.len() - 1).filter(|&i| self.gs[i] == 0.0 || self.gs[i] * self.gs[i + 1] < 0.0).collect()
    }
}

fn scan(n: u32, bracket: (f64, f64), params: &Parameters, grid: &Grid) -> Result<Scan> {
    let mus: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| bracket.0 + (bracket.1 - bracket.0) * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let gs = mus
        .par_iter()
        .map(|&mu| g_n(n, mu, params, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scan { mus, gs })
}

/// Locates `mu_n` by bisection then secant polishing inside a bracket with
/// a sign change. Without `hint` the bracket is seeded from the asymptotic
/// prediction and widened geometrically up to four times.
pub fn find_mu_n(n: u32, params: &Parameters, hint: Option<(f64, f64)>, grid: &Grid) -> Result<BifurcationPoint> {
    let mu_c = compute_mu_c(params)?;
    let mut bracket = clip_to_mu_c(hint.unwrap_or_else(|| default_bracket(n, params)), mu_c);
    if !(bracket.0 < bracket.1) {
        if hint.is_some() {
            return Err(Error::Usage(format!("empty bracket {bracket:?} (mu_c = {mu_c})")));
        }
        return Err(Error::Hypothesis(format!(
            "predicted mu_{n} = {} lies below mu_c = {mu_c}, where no radial steady state is constructed",
            predicted_mu_n(n, params)
        )));
    }
    let mut trace = String::new();
    let mut evaluations = 0;
    let (sc, changes) = loop {
        let sc = scan(n, bracket, params, grid)?;
        evaluations += SCAN_POINTS;
        let changes = sc.sign_changes();
        trace.push_str(&format!(
            "[{:.6e}, {:.6e}]: g in [{:.3e}, {:.3e}]; ",
            bracket.0,
            bracket.1,
            sc.gs.iter().cloned().fold(f64::INFINITY, f64::min),
            sc.gs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        ));
        if !changes.is_empty() {
            break (sc, changes);
        }
        if evaluations >= SCAN_POINTS * (EXPANSIONS + 1) {
            return Err(Error::RootNotFound { n, trace });
        }
        let centre = 0.5 * (bracket.0 + bracket.1);
        let half = bracket.1 - bracket.0;
        bracket = clip_to_mu_c((centre - half, centre + half), mu_c);
    };

    // the change closest to the prediction
    let pred = predicted_mu_n(n, params);
    let pick = *changes
        .iter()
        .min_by(|&&i, &&j| {
            let d = |k: usize| (0.5 * (sc.mus[k] + sc.mus[k + 1]) - pred).abs();
            d(i).total_cmp(&d(j))
        })
        .expect("non-empty");
    let (mut a, mut b) = (sc.mus[pick], sc.mus[pick + 1]);
    let (mut ga, mut gb) = (sc.gs[pick], sc.gs[pick + 1]);

    let eval = |mu: f64| evaluate_g(n, mu, params, grid);
    let mut x = a;
    if ga != 0.0 {
        // bisection to shrink the bracket
        for _ in 0..8 {
            let m = 0.5 * (a + b);
            let gm = eval(m)?.g;
            evaluations += 1;
            if gm == 0.0 {
                (a, b, ga, gb) = (m, m, 0.0, 0.0);
                break;
            }
            if (gm < 0.0) == (ga < 0.0) {
                (a, ga) = (m, gm);
            } else {
                (b, gb) = (m, gm);
            }
        }
        x = if ga.abs() < gb.abs() { a } else { b };
        // Illinois-modified regula falsi
        let mut side = 0i8;
        for _ in 0..MAX_POLISH {
            if ga == 0.0 || gb == 0.0 || a == b {
                x = if ga == 0.0 { a } else { b };
                break;
            }
            let s = (a * gb - b * ga) / (gb - ga);
            let e = eval(s)?;
            evaluations += 1;
            let prev = x;
            x = s;
            if e.g == 0.0 {
                break;
            }
            if (e.g < 0.0) == (ga < 0.0) {
                (a, ga) = (s, e.g);
                if side == -1 {
                    gb *= 0.5;
                }
                side = -1;
            } else {
                (b, gb) = (s, e.g);
                if side == 1 {
                    ga *= 0.5;
                }
                side = 1;
            }
            let tolerance = 1e-10 * e.d2p.abs().max(1.0);
            let small_step = (x - prev).abs() <= 1e-10 * x.abs().max(1.0);
            let narrow = (b - a).abs() <= 1e-12 * x.abs().max(1.0);
            if e.g.abs() <= tolerance && (small_step || narrow) {
                break;
            }
            if collapsed(a, b) {
                x = if ga.abs() < gb.abs() { a } else { b };
                break;
            }
        }
    }
    let at_root = eval(x)?;
    evaluations += 1;
    let tolerance = 1e-10 * at_root.d2p.abs().max(1.0);
    let gx = at_root.g;
    // With large parameter magnitudes g carries evaluation noise above the
    // residual tolerance; a bracket shrunk to roundoff width still pins the root.
    if gx.abs() > tolerance && !collapsed(a, b) {
        return Err(Error::RootNotFound {
            n,
            trace: format!("{trace}polishing stalled at mu = {x:e} with g = {gx:e} (tolerance {tolerance:e})"),
        });
    }
    let slope = slope_at(n, x, params, grid)?;
    evaluations += 2;
    let mu_tolerance = (gx.abs().max(tolerance) / slope.abs()).max(if collapsed(a, b) { (b - a).abs() } else { 0.0 });
    let rel_dev = if pred == 0.0 { (x - pred).abs() } else { (x - pred).abs() / pred.abs() };
    Ok(BifurcationPoint {
        n,
        epsilon: params.epsilon,
        mu_n: x,
        residual: gx,
        slope,
        prediction: pred,
        rel_dev,
        bracket,
        sign_changes: changes.len(),
        tolerance,
        mu_tolerance,
        evaluations,
    })
}

/// Centered secant `dg_n/dmu` with `dmu = 1e-4 max(1, |mu|)`.
pub fn slope_at(n: u32, mu: f64, params: &Parameters, grid: &Grid) -> Result<f64> {
    let d = 1e-4 * mu.abs().max(1.0);
    let (gp, gm) = rayon::join(|| g_n(n, mu + d, params, grid), || g_n(n, mu - d, params, grid));
    Ok((gp? - gm?) / (2.0 * d))
}

fn check_gap_hypotheses(params: &Parameters) -> Result<f64> {
    if params.beta1 == params.beta2 {
        return Err(Error::Hypothesis(format!(
            "{BETA_DISTINCT} (beta1 = beta2 = {})",
            params.beta1
        )));
    }
    let mu_c = compute_mu_c(params)?;
    if !(mu_c < 0.0) {
        return Err(Error::Hypothesis(format!("{MU_C_NEGATIVE} (mu_c = {mu_c})")));
    }
    Ok(mu_c)
}

/// Gap data at one epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEntry {
    pub epsilon: f64,
    /// `dp1^1/dr - dp1^0/dr` at `(1 - eps, mu_0)`
    pub delta: f64,
    /// `eps^2 (1/beta1 - 1/beta2) rho4 F*1 / M0` with `rho4` from the solve
    pub predicted_delta: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub rho4: f64,
    pub slope1: f64,
    /// Larger of the two root-location tolerances in `mu`.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub entries: Vec<GapEntry>,
    /// `(1/beta1 - 1/beta2) rho4_leading F*1 / M0`
    pub predicted_constant: f64,
    /// Least-squares slope of `log |delta|` against `log eps`.
    pub fitted_slope: f64,
    /// `delta / eps^2` at the smallest epsilon.
    pub fitted_constant: f64,
    /// Least-squares slope of `log |mu1 - mu0|` against `log eps`.
    pub mu_gap_order: f64,
}

pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.abs().ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.abs().ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn gap_entry(params: &Parameters, nodes: usize) -> Result<GapEntry> {
    let grid = Grid::new(params.epsilon, nodes)?;
    let (p0, p1) = rayon::join(|| find_mu_n(0, params, None, &grid), || find_mu_n(1, params, None, &grid));
    let (p0, p1) = (p0?, p1?);
    let evals = evaluate_g_modes(&[0, 1], p0.mu_n, params, &grid)?;
    let d = leading_order_coeffs(params)?;
    let rho4 = evals[0].rho4;
    let eps = params.epsilon;
    Ok(GapEntry {
        epsilon: eps,
        delta: evals[1].dp1n - evals[0].dp1n,
        predicted_delta: eps * eps * (1.0 / params.beta1 - 1.0 / params.beta2) * rho4 * d.fstar1 / params.m0,
        mu0: p0.mu_n,
        mu1: p1.mu_n,
        rho4,
        slope1: p1.slope,
        tolerance: p0.mu_tolerance.max(p1.mu_tolerance),
    })
}

/// Runs the gap study over a strictly decreasing epsilon ladder with `nodes`
/// grid points per annulus.
pub fn gap_analysis(params: &Parameters, ladder: &[f64], nodes: usize) -> Result<GapReport> {
    check_gap_hypotheses(params)?;
    if ladder.len() < 2 || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Usage("epsilon ladder must be strictly decreasing with at least two entries".into()));
    }
    let entries = ladder
        .par_iter()
        .map(|&eps| gap_entry(&params.with_epsilon(eps), nodes))
        .collect::<Result<Vec<_>>>()?;
    let d = leading_order_coeffs(params)?;
    let rho4 = d
        .rho4_leading
        .ok_or_else(|| Error::Degenerate("leading-order rho4 undefined".into()))?;
    let predicted_constant = (1.0 / params.beta1 - 1.0 / params.beta2) * rho4 * d.fstar1 / params.m0;
    let eps: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
    let deltas: Vec<f64> = entries.iter().map(|e| e.delta).collect();
    let gaps: Vec<f64> = entries.iter().map(|e| e.mu1 - e.mu0).collect();
    let last = entries.last().expect("ladder has entries");
    Ok(GapReport {
        predicted_constant,
        fitted_slope: loglog_slope(&eps, &deltas),
        fitted_constant: last.delta / (last.epsilon * last.epsilon),
        mu_gap_order: loglog_slope(&eps, &gaps),
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinctnessReport {
    pub epsilon: f64,
    pub points: Vec<BifurcationPoint>,
    /// `(n, m, |mu_n - mu_m|)` for all `n < m`.
    pub pairs: Vec<(u32, u32, f64)>,
    /// `min_{n != 1} |mu_n - mu_1|`, `None` when only `n = 1` is present.
    pub min_separation_from_1: Option<f64>,
}

pub fn mode_distinctness(params: &Parameters, n_max: u32, nodes: usize) -> Result<DistinctnessReport> {
    let grid = Grid::new(params.epsilon, nodes)?;
    let mu_c = compute_mu_c(params)?;
    let points = (0..=n_max)
        .into_par_iter()
        .map(|n| find_mu_n(n, params, None, &grid))
        .collect::<Result<Vec<_>>>()?;
    if let Some(bad) = points.iter().find(|p| p.mu_n <= mu_c) {
        return Err(Error::Hypothesis(format!("mu_{} = {} is not above mu_c = {mu_c}", bad.n, bad.mu_n)));
    }
    let mut pairs = Vec::new();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            pairs.push((a.n, b.n, (a.mu_n - b.mu_n).abs()));
        }
    }
    let min_separation_from_1 = pairs
        .iter()
        .filter(|(a, b, _)| (*a == 1) != (*b == 1))
        .map(|(_, _, s)| *s)
        .reduce(f64::min);
    Ok(DistinctnessReport { epsilon: params.epsilon, points, pairs, min_separation_from_1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gap_params() -> Parameters {
        crate::steady_state::tests::gap_params()
    }

    #[test]
    fn predictions() {
        let p = Parameters { gamma: 0.05, h0: 0.15, ..gap_params() };
        assert!((predicted_mu_n(2, &p) + 2.4).abs() < 1e-12);
        assert_eq!(predicted_mu_n(1, &p), 0.0);
        assert_eq!(predicted_mu_n(0, &p), 0.0);
    }

    #[test]
    fn g_difference_is_flux_difference() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 201).unwrap();
        let e = evaluate_g_modes(&[0, 1], 0.01, &p, &grid).unwrap();
        assert!(((e[1].g - e[0].g) - (e[1].dp1n - e[0].dp1n)).abs() <= 1e-12);
        let g0 = g_n(0, 0.01, &p, &grid).unwrap();
        assert_eq!(g0, e[0].g);
    }

    #[test]
    fn g_is_continuous() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 201).unwrap();
        for mu in [-0.02, 0.0, 0.03] {
            let g = g_n(1, mu, &p, &grid).unwrap();
            let d1 = (g_n(1, mu + 1e-3, &p, &grid).unwrap() - g).abs();
            let d2 = (g_n(1, mu + 1e-4, &p, &grid).unwrap() - g).abs();
            assert!(d2 < 0.2 * d1, "{d1} {d2}");
        }
    }

    #[test]
    fn finds_mu1_near_zero() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 201).unwrap();
        let pt = find_mu_n(1, &p, None, &grid).unwrap();
        assert!(pt.residual.abs() <= pt.tolerance);
        assert!(pt.mu_n.abs() <= 10.0 * p.epsilon * p.gamma_h0());
        assert!(pt.slope.abs() > 1e-6);
        let g0 = g_n(1, 0.0, &p, &grid).unwrap();
        assert_eq!(g0 > 0.0, pt.slope * (0.0 - pt.mu_n) > 0.0);
        let other = find_mu_n(1, &p, Some((pt.mu_n - 0.05, pt.mu_n + 0.03)), &grid).unwrap();
        assert!((other.mu_n - pt.mu_n).abs() <= 1e-8 * pt.mu_n.abs().max(1.0));
    }

    #[test]
    fn root_not_found_carries_trace() {
        let p = gap_params();
        let grid = Grid::new(p.epsilon, 101).unwrap();
        match find_mu_n(1, &p, Some((5.0, 5.1)), &grid) {
            Err(Error::RootNotFound { n: 1, trace }) => assert!(trace.contains("g in")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gap_refuses_equal_betas() {
        let p = Parameters { beta2: 1.0, ..gap_params() };
        match gap_analysis(&p, &[0.02, 0.01], 101) {
            Err(Error::Hypothesis(msg)) => assert!(msg.contains("β₁≠β₂")),
            other => panic!("{other:?}"),
        }
        let p = Parameters { rho2: 0.0, ..gap_params() };
        assert!(matches!(gap_analysis(&p, &[0.02, 0.01], 101), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn loglog_slope_exact() {
        let x = [0.02, 0.01, 0.005];
        let y: Vec<f64> = x.iter().map(|e| 3.0 * e * e).collect();
        assert!((loglog_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
