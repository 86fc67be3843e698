use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::output::{kf, kv, Cell, RunDir};
use crate::asymptotics::{
    crosscheck_with_bvp, inner_flux_expansion, inner_value_expansion, kernel_k, psi1_derivatives, Forcing,
    InnerCondition, ModelProblem, TrigPolynomial,
};
use crate::bifurcation::{
    evaluate_g, find_mu_n, gap_analysis, mode_distinctness, BifurcationPoint,
};
use crate::error::{Error, Result};
use crate::grid_bvp::Grid;
use crate::linearized::{leading_mode_values, mode_difference_diagnostics, solve_mode};
use crate::params::{compute_mu_c, leading_order_coeffs, Parameters};
use crate::steady_state::solve_steady_state;

pub const BIFURCATION_HEADER: [&str; 7] = ["n", "epsilon", "mu_n", "residual", "slope", "prediction", "rel_dev"];
pub const LEMMA_HEADER: [&str; 4] = ["check", "observed", "tolerance", "pass"];

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    /// `(file, sha256)` in write order.
    pub files: Vec<(String, String)>,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e.root_cause() {
        Error::Config(_) | Error::Usage(_) | Error::Manifest(_) | Error::Io(_) => 2,
        Error::Hypothesis(_) | Error::Degenerate(_) => 4,
        _ => 3,
    }
}

/// Short tag naming the error variant, for the diagnostic stream.
pub fn error_kind(e: &Error) -> &'static str {
    match e.root_cause() {
        Error::Domain(_) => "domain",
        Error::Config(_) => "config",
        Error::Solvability(_) => "solvability",
        Error::Convergence { .. } => "convergence",
        Error::Degenerate(_) => "degenerate",
        Error::Hypothesis(_) => "hypothesis",
        Error::RootNotFound { .. } => "root_not_found",
        Error::UnsupportedMode(_) => "unsupported_mode",
        Error::Accuracy(_) => "accuracy",
        Error::Usage(_) => "usage",
        Error::Manifest(_) => "manifest",
        Error::Io(_) => "io",
        Error::AtPoint { .. } => unreachable!("root_cause strips context"),
    }
}

fn params_meta(p: &Parameters) -> Vec<(String, String)> {
    vec![
        kf("k1", p.k1),
        kf("k2", p.k2),
        kf("K1", p.big_k1),
        kf("K2", p.big_k2),
        kf("rho1", p.rho1),
        kf("rho2", p.rho2),
        kf("rho3", p.rho3),
        kf("lambda", p.lambda),
        kf("gamma", p.gamma),
        kf("D", p.diffusivity),
        kf("M0", p.m0),
        kf("H0", p.h0),
        kf("beta1", p.beta1),
        kf("beta2", p.beta2),
        kf("mu", p.mu),
    ]
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn bifurcation_row(b: &BifurcationPoint) -> Vec<Cell> {
    vec![
        Cell::U(u64::from(b.n)),
        Cell::F(b.epsilon),
        Cell::F(b.mu_n),
        Cell::F(b.residual),
        Cell::F(b.slope),
        Cell::F(b.prediction),
        Cell::F(b.rel_dev),
    ]
}

/// Executes the experiment and writes its artifacts under `out`, falling
/// back to the directory named in the configuration.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Config("no output directory (use --out or `out` in the config)".into()))?;
    RunDir::ensure_fresh(&dir)?;
    if cfg.kind != ExperimentKind::LemmaSuite {
        let v = cfg.params.validate_positivity();
        if let Some(v) = v.first() {
            return Err(Error::Hypothesis(format!("{}: {}", v.constraint, v.detail)));
        }
    }
    // Every computation happens before the directory is touched, so a failed
    // run leaves nothing behind.
    let artifacts = match cfg.kind {
        ExperimentKind::Steady => steady(cfg)?,
        ExperimentKind::Modes => modes(cfg)?,
        ExperimentKind::MuSweep => mu_sweep(cfg)?,
        ExperimentKind::Gap => gap(cfg)?,
        ExperimentKind::Distinctness => distinctness(cfg)?,
        ExperimentKind::LemmaSuite => lemma_suite(cfg)?,
    };
    let mut out = RunDir::create(&dir)?;
    let mut meta = vec![
        kv("kind", cfg.kind.name()),
        kv("parameter_set", &cfg.set_name),
        kv("seed", cfg.seed),
        kv("grid", join(&cfg.grid)),
        kv("epsilons", cfg.epsilons.iter().map(|e| super::output::fmt_f64(*e)).collect::<Vec<_>>().join(" ")),
        kv("modes", join(&cfg.modes)),
    ];
    meta.extend(params_meta(&cfg.params));
    out.meta("run.meta", &meta)?;
    for a in artifacts {
        match a {
            Artifact::Csv { name, header, rows } => out.csv(&name, &header, &rows)?,
            Artifact::Meta { name, pairs } => out.meta(&name, &pairs)?,
        }
    }
    let files = out.finish()?;
    Ok(RunSummary { dir, files })
}

enum Artifact {
    Csv { name: String, header: Vec<&'static str>, rows: Vec<Vec<Cell>> },
    Meta { name: String, pairs: Vec<(String, String)> },
}

fn csv(name: impl Into<String>, header: &[&'static str], rows: Vec<Vec<Cell>>) -> Artifact {
    Artifact::Csv { name: name.into(), header: header.to_vec(), rows }
}

fn floats<const K: usize>(rows: Vec<[f64; K]>) -> Vec<Vec<Cell>> {
    rows.into_iter().map(|r| r.into_iter().map(Cell::F).collect()).collect()
}

fn steady(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let states = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let p = cfg.params.with_epsilon(eps);
            solve_steady_state(&p, &Grid::new(eps, cfg.nodes())?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let mut summary = Vec::new();
    for (k, s) in states.iter().enumerate() {
        let d = leading_order_coeffs(&s.params)?;
        out.push(csv(format!("steady_{k:02}.csv"), &["r", "L", "H", "F", "p"], floats(s.profile_rows())));
        out.push(Artifact::Meta {
            name: format!("steady_{k:02}.meta"),
            pairs: vec![
                kf("epsilon", s.epsilon()),
                kf("mu", s.mu),
                kf("mu_c", d.mu_c),
                kf("rho4", s.rho4),
                kf("rho4_leading", d.rho4_leading.unwrap_or(f64::NAN)),
                kf("d2p_inner", s.boundary.d2p),
                kf("boundary_residual", s.boundary_residual),
                kf("interior_residual", s.interior_residual),
                kv("newton_iterations", s.report.iterations),
                kv("warnings", s.warnings.join("; ")),
            ],
        });
        let lead = [
            crate::params::DerivedConstants::lstar0(&s.params) + s.epsilon() * d.lstar1,
            s.params.h0 + s.epsilon() * d.hstar1,
            s.epsilon() * d.fstar1,
        ];
        let dev = (0..s.grid.len()).fold([0.0f64; 3], |m, i| {
            [
                m[0].max((s.l.values[i] - lead[0]).abs()),
                m[1].max((s.h.values[i] - lead[1]).abs()),
                m[2].max((s.f.values[i] - lead[2]).abs()),
            ]
        });
        summary.push([s.epsilon(), s.rho4, d.rho4_leading.unwrap_or(f64::NAN), dev[0], dev[1], dev[2], s.boundary_residual]);
    }
    out.push(csv(
        "steady_summary.csv",
        &["epsilon", "rho4", "rho4_leading", "dev_L", "dev_H", "dev_F", "boundary_residual"],
        floats(summary),
    ));
    Ok(out)
}

fn modes(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let solved = cfg
        .epsilons
        .par_iter()
        .map(|&eps| {
            let p = cfg.params.with_epsilon(eps);
            let state = solve_steady_state(&p, &Grid::new(eps, cfg.nodes())?)?;
            let ms = cfg
                .modes
                .iter()
                .map(|&n| solve_mode(n, &state).map_err(|e| e.at(n, p.mu, eps)))
                .collect::<Result<Vec<_>>>()?;
            Ok((state, ms))
        })
        .collect::<Result<Vec<_>>>()?;
    let lead = leading_mode_values(&cfg.params)?;
    let mut out = Vec::new();
    let mut summary = Vec::new();
    let mut diffs = Vec::new();
    for (k, (state, ms)) in solved.iter().enumerate() {
        for m in ms {
            out.push(csv(format!("mode_n{}_{k:02}.csv", m.n), &["r", "L1", "H1", "F1", "p1"], floats(m.profile_rows())));
            summary.push(vec![
                Cell::U(u64::from(m.n)),
                Cell::F(m.epsilon),
                Cell::F(m.mu),
                Cell::F(m.eta_n),
                Cell::F(m.dp1n_inner),
                Cell::F(inner_flux_expansion(m.eta_n, m.epsilon)),
                Cell::F(m.l1.values[0] - lead[0]),
                Cell::F(m.h1.values[0] - lead[1]),
                Cell::F(m.f1.values[0] - lead[2]),
            ]);
        }
        let find = |n| ms.iter().find(|m| m.n == n);
        if let (Some(m1), Some(m0)) = (find(1), find(0)) {
            let r = mode_difference_diagnostics(m1, m0, state)?;
            diffs.push([r.epsilon, r.observed[0], r.observed[1], r.observed[2], r.predicted[0], r.predicted[1], r.predicted[2]]);
        }
    }
    out.push(csv(
        "modes_summary.csv",
        &["n", "epsilon", "mu", "eta_n", "dp1n_inner", "dp1n_expansion", "dev_L1", "dev_H1", "dev_F1"],
        summary,
    ));
    if !diffs.is_empty() {
        out.push(csv(
            "mode_differences.csv",
            &["epsilon", "dL", "dH", "dF", "pred_dL", "pred_dH", "pred_dF"],
            floats(diffs),
        ));
    }
    Ok(out)
}

/// Empirical orders `log2`-style between consecutive entries of a ladder.
fn pairwise_orders(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (y[0].abs() / y[1].abs()).ln() / (x[0] / x[1]).ln())
        .collect()
}

fn mu_sweep(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let tasks: Vec<(usize, f64, u32)> = cfg
        .grid
        .iter()
        .flat_map(|&nodes| cfg.epsilons.iter().flat_map(move |&e| cfg.modes.iter().map(move |&n| (nodes, e, n))))
        .collect();
    let points = tasks
        .par_iter()
        .map(|&(nodes, eps, n)| find_mu_n(n, &cfg.params.with_epsilon(eps), None, &Grid::new(eps, nodes)?))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    let mut meta = Vec::new();
    let per_grid = cfg.epsilons.len() * cfg.modes.len();
    for (gi, &nodes) in cfg.grid.iter().enumerate() {
        let chunk = &points[gi * per_grid..(gi + 1) * per_grid];
        out.push(csv(format!("bifurcation_N{nodes}.csv"), &BIFURCATION_HEADER, chunk.iter().map(bifurcation_row).collect()));
        for (mi, &n) in cfg.modes.iter().enumerate() {
            let devs: Vec<f64> = (0..cfg.epsilons.len()).map(|ei| chunk[ei * cfg.modes.len() + mi].rel_dev).collect();
            let orders = pairwise_orders(&cfg.epsilons, &devs);
            meta.push(kv(&format!("eps_orders_n{n}_N{nodes}"), orders.iter().map(|o| super::output::fmt_f64(*o)).collect::<Vec<_>>().join(" ")));
        }
    }
    // h-convergence from successive grid refinements, estimated as
    // log2(|mu_a - mu_b| / |mu_b - mu_c|) for node counts in ratio 2.
    if cfg.grid.len() >= 3 {
        for (ei, &eps) in cfg.epsilons.iter().enumerate() {
            for (mi, &n) in cfg.modes.iter().enumerate() {
                let mus: Vec<f64> =
                    (0..cfg.grid.len()).map(|gi| points[gi * per_grid + ei * cfg.modes.len() + mi].mu_n).collect();
                let hs: Vec<f64> = cfg.grid.iter().map(|&m| eps / (m - 1) as f64).collect();
                let orders: Vec<f64> = (0..mus.len() - 2)
                    .map(|i| ((mus[i] - mus[i + 1]).abs() / (mus[i + 1] - mus[i + 2]).abs()).ln() / (hs[i] / hs[i + 1]).ln())
                    .collect();
                meta.push(kv(
                    &format!("grid_orders_n{n}_eps{ei}"),
                    orders.iter().map(|o| super::output::fmt_f64(*o)).collect::<Vec<_>>().join(" "),
                ));
            }
        }
    }
    if let Some(range) = cfg.mu_range {
        let nodes = cfg.nodes();
        let mus: Vec<f64> = (0..range.points)
            .map(|k| range.min + (range.max - range.min) * k as f64 / (range.points - 1) as f64)
            .collect();
        let mut tasks: Vec<(f64, u32, f64)> = Vec::new();
        for &e in &cfg.epsilons {
            for &n in &cfg.modes {
                tasks.extend(mus.iter().map(|&m| (e, n, m)));
            }
        }
        let rows = tasks
            .par_iter()
            .map(|&(eps, n, mu)| {
                let g = evaluate_g(n, mu, &cfg.params.with_epsilon(eps), &Grid::new(eps, nodes)?)?;
                Ok(vec![Cell::U(u64::from(n)), Cell::F(eps), Cell::F(mu), Cell::F(g.g), Cell::F(g.d2p), Cell::F(g.dp1n), Cell::F(g.rho4)])
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(csv("g_samples.csv", &["n", "epsilon", "mu", "g", "d2p", "dp1n", "rho4"], rows));
    }
    out.push(Artifact::Meta { name: "mu_sweep.meta".into(), pairs: meta });
    Ok(out)
}

fn gap(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let report = gap_analysis(&cfg.params, &cfg.epsilons, cfg.nodes())?;
    let rows = report.entries.iter().map(|e| [e.epsilon, e.delta, e.predicted_delta, e.mu0, e.mu1]).collect();
    let detail = report.entries.iter().map(|e| [e.epsilon, e.rho4, e.slope1, e.tolerance]).collect();
    let last = report.entries.last().expect("non-empty ladder");
    let sign_ok = report
        .entries
        .iter()
        .all(|e| e.delta.signum() == (1.0 / cfg.params.beta1 - 1.0 / cfg.params.beta2).signum());
    Ok(vec![
        csv("gap.csv", &["epsilon", "delta", "predicted_delta", "mu0", "mu1"], floats(rows)),
        csv("gap_detail.csv", &["epsilon", "rho4", "slope1", "tolerance"], floats(detail)),
        Artifact::Meta {
            name: "gap.meta".into(),
            pairs: vec![
                kf("fitted_slope", report.fitted_slope),
                kf("fitted_constant", report.fitted_constant),
                kf("predicted_constant", report.predicted_constant),
                kf("constant_rel_dev", (report.fitted_constant / report.predicted_constant - 1.0).abs()),
                kf("mu_gap_order", report.mu_gap_order),
                kf("mu_gap_smallest_eps", (last.mu1 - last.mu0).abs()),
                kf("root_tolerance", last.tolerance),
                kv("sign_matches", sign_ok),
            ],
        },
    ])
}

fn distinctness(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let n_max = *cfg.modes.iter().max().expect("modes non-empty");
    let mu_c = compute_mu_c(&cfg.params)?;
    let reports = cfg
        .epsilons
        .par_iter()
        .map(|&eps| mode_distinctness(&cfg.params.with_epsilon(eps), n_max, cfg.nodes()))
        .collect::<Result<Vec<_>>>()?;
    let rows = reports.iter().flat_map(|r| r.points.iter().map(bifurcation_row)).collect();
    let mut pairs = vec![kf("mu_c", mu_c), kv("n_max", n_max)];
    for (k, r) in reports.iter().enumerate() {
        let min_pair = r.pairs.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
        pairs.push(kf(&format!("min_pair_separation_{k:02}"), min_pair));
        pairs.push(kf(&format!("min_separation_from_1_{k:02}"), r.min_separation_from_1.unwrap_or(f64::NAN)));
    }
    Ok(vec![
        csv("distinctness.csv", &BIFURCATION_HEADER, rows),
        Artifact::Meta { name: "distinctness.meta".into(), pairs },
    ])
}

struct Check {
    name: String,
    observed: f64,
    tolerance: f64,
    /// `observed >= tolerance` passes instead of `observed <= tolerance`.
    at_least: bool,
}

impl Check {
    fn max(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Check { name: name.into(), observed, tolerance, at_least: false }
    }

    fn min(name: impl Into<String>, observed: f64, tolerance: f64) -> Self {
        Check { name: name.into(), observed, tolerance, at_least: true }
    }

    fn pass(&self) -> bool {
        if self.at_least {
            self.observed >= self.tolerance
        } else {
            self.observed <= self.tolerance
        }
    }
}

/// Identities of the closed-form building blocks on random data.
fn lemma_suite(cfg: &ExperimentConfig) -> Result<Vec<Artifact>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();
    for n in [0u32, 1] {
        let mut pde = 0.0f64;
        let mut ends = 0.0f64;
        let mut higher = 0.0f64;
        for eta in [-2.0, 0.5, 3.0] {
            for i in 0..100 {
                let r = 0.75 + 0.25 * f64::from(i) / 99.0;
                let [u, du, d2u, _] = psi1_derivatives(n, eta, r)?;
                pde = pde.max((-d2u - du / r + f64::from(n * n) * u / (r * r) - eta).abs());
            }
            let [u, du, d2u, d3u] = psi1_derivatives(n, eta, 1.0)?;
            ends = ends.max(u.abs()).max(du.abs());
            higher = higher.max((d2u + eta).abs()).max((d3u - eta).abs());
        }
        checks.push(Check::max(format!("psi1_equation_n{n}"), pde, 1e-10));
        checks.push(Check::max(format!("psi1_outer_values_n{n}"), ends, 1e-13));
        checks.push(Check::max(format!("psi1_outer_higher_n{n}"), higher, 1e-10));
        let eps = [0.04, 0.02, 0.01];
        let eta = 1.3;
        let mut flux_err = Vec::new();
        let mut value_err = Vec::new();
        for &e in &eps {
            let [u, du, _, _] = psi1_derivatives(n, eta, 1.0 - e)?;
            flux_err.push((du - inner_flux_expansion(eta, e)).abs());
            value_err.push((u - inner_value_expansion(eta, e)).abs());
        }
        let min_order = |v: &[f64]| pairwise_orders(&eps, v).into_iter().fold(f64::INFINITY, f64::min);
        checks.push(Check::min(format!("inner_flux_taylor_order_n{n}"), min_order(&flux_err), 2.9));
        checks.push(Check::min(format!("inner_value_taylor_order_n{n}"), min_order(&value_err), 2.9));
    }
    let eps = cfg.params.epsilon;
    let r_samples: Vec<f64> = (0..=10).map(|i| 1.0 - eps + eps * f64::from(i) / 10.0).collect();
    let mut worst = [0.0f64; 2];
    for _ in 0..cfg.trials {
        let poly = TrigPolynomial::random(&mut rng, 5, eps, 1.0);
        let sup = poly.sampled_sup(eps, 2000);
        let f = Forcing::Trig(poly);
        for n in [0u32, 1] {
            let factor = if n == 1 { 0.5 } else { 1.0 };
            for &r in &r_samples {
                let (k, dk) = kernel_k(n, &f, r, eps)?;
                let excess = k.abs().max(dk.abs()) - factor * eps * sup;
                worst[n as usize] = worst[n as usize].max(excess);
            }
        }
    }
    checks.push(Check::max("kernel_bound_excess_n0", worst[0], 1e-10));
    checks.push(Check::max("kernel_bound_excess_n1", worst[1], 1e-10));
    let grid = Grid::new(eps, cfg.nodes())?;
    let mut cross = 0.0f64;
    for k in 0..8u32 {
        let inner = if k % 2 == 0 { InnerCondition::Robin { beta: 0.5 + f64::from(k), g: 0.3 } } else { InnerCondition::Dirichlet };
        let problem = ModelProblem {
            n: k % 3 % 2,
            eta: 1.0 - 0.25 * f64::from(k),
            forcing: Forcing::Trig(TrigPolynomial::random(&mut rng, 3, eps, 1.0)),
            epsilon: eps,
            inner,
        };
        cross = cross.max(crosscheck_with_bvp(&problem, &grid)?.max_discrepancy);
    }
    checks.push(Check::max(format!("closed_form_vs_bvp_N{}", grid.len()), cross, 1e-8));
    let rows = checks
        .iter()
        .map(|c| vec![Cell::S(c.name.clone()), Cell::F(c.observed), Cell::F(c.tolerance), Cell::S(c.pass().to_string())])
        .collect();
    Ok(vec![csv("lemma_suite.csv", &LEMMA_HEADER, rows)])
}

/// Resolves `--config` and the overrides, then runs.
pub fn run_from_path(
    config: &Path,
    out: Option<PathBuf>,
    grid: Option<usize>,
    seed: Option<u64>,
) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(config)?.with_overrides(out, grid, seed)?;
    run(&cfg)
}
