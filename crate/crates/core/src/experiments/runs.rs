use std::time::Instant;

use serde_json::json;

use crate::correctors::CorrectorOptions;
use crate::eigen::{
    active_indices, fine_evp, gpe_eigenvalue, gpe_oda, gpe_post_process, post_process,
    solve_in_space, GpeForms, LodSpace,
};
use crate::error::{LodError, Result};
use crate::fem::{galerkin, mass_matrix, stiffness_matrix, AssembledForms, CoefficientField};
use crate::grid::TwoScaleMesh;
use crate::lod::{fine_reference, solve_bvp_with_forms, BvpData, BvpOptions};
use crate::sparse::{generalized_eig_smallest, EigOptions, SparseMatrix};

use super::cache::ReferenceCache;
use super::config::{ExperimentConfig, Problem};
use super::generators::error_norms;
use super::table::{Field, ResultTable};

/// Empirical order `ln(e_prev/e) / ln(H_prev/H)`.
pub fn eoc(e_prev: f64, e: f64, h_prev: f64, h: f64) -> Option<f64> {
    (e_prev > 0.0 && e > 0.0 && h_prev != h).then(|| (e_prev / e).ln() / (h_prev / h).ln())
}

/// Runs the study selected by `cfg.problem`, on `cfg.threads` workers if set.
pub fn run(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let go = || match cfg.problem {
        Problem::Poisson => run_poisson_convergence(cfg),
        Problem::Bvp => run_bvp(cfg),
        Problem::Evp | Problem::KronigPenney => run_evp(cfg),
        Problem::Gpe => run_gpe(cfg),
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| LodError::InvalidArgument(e.to_string()))?
            .install(go),
        None => go(),
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let v = f()?;
    Ok((v, start.elapsed().as_secs_f64()))
}

fn time_field(cfg: &ExperimentConfig, t: Option<f64>) -> Field {
    if cfg.timings {
        Field::opt(t)
    } else {
        Field::Empty
    }
}

struct Norms {
    m_h: SparseMatrix,
    a_unit: SparseMatrix,
}

impl Norms {
    fn new(fine: &TwoScaleMesh) -> Result<Self> {
        Ok(Self {
            m_h: mass_matrix(fine),
            a_unit: stiffness_matrix(fine, &CoefficientField::constant(fine, 1.0)?)?,
        })
    }
}

/// Iterates `(layer spec index, H)` in output order.
fn row_order(cfg: &ExperimentConfig) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for s in 0..cfg.layer_specs().len() {
        for &h in &cfg.coarse_h {
            out.push((s, h));
        }
    }
    out
}

/// Rate columns for consecutive rows of the same layer spec.
fn rates(order: &[(usize, f64)], errs: &[f64]) -> Vec<Option<f64>> {
    (0..order.len())
        .map(|i| {
            (i > 0 && order[i - 1].0 == order[i].0)
                .then(|| eoc(errs[i - 1], errs[i], order[i - 1].1, order[i].1))
                .flatten()
        })
        .collect()
}

/// Symmetric LOD for `−∇·κ∇u = f` with homogeneous Dirichlet data.
pub fn run_poisson_convergence(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let zero = super::config::ScalarFn::Constant { value: 0.0 };
    let cfg = ExperimentConfig {
        g: zero.clone(),
        q: zero,
        source_mode: None,
        ..cfg.clone()
    };
    bvp_table(&cfg)
}

pub fn run_bvp(cfg: &ExperimentConfig) -> Result<ResultTable> {
    bvp_table(cfg)
}

fn bvp_table(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let fine = cfg.fine_mesh()?;
    let kappa = cfg.coefficient.build(&fine)?;
    let norms = Norms::new(&fine)?;
    let data_of = |mesh: &TwoScaleMesh| {
        BvpData::from_functions(
            mesh,
            &cfg.bc,
            |x, y| cfg.f.eval(x, y),
            |x, y| cfg.g.eval(x, y),
            |x, y| cfg.q.eval(x, y),
        )
    };
    let cache = ReferenceCache::new(cfg.cache_dir.clone());
    let key = ReferenceCache::key(&json!({
        "kind": "bvp", "domain": cfg.domain, "fine_h": cfg.fine_h, "bc": cfg.bc,
        "coefficient": cfg.coefficient, "f": cfg.f, "g": cfg.g, "q": cfg.q,
    }));
    let mut t_full = None;
    let (reference, _) = cache.get_or_compute(&key, || {
        let forms = AssembledForms::new(&fine, &cfg.bc, &kappa, None)?;
        let data = data_of(&fine);
        let (u, t) = timed(|| fine_reference(&fine, &cfg.bc, &forms, &data))?;
        t_full = Some(t);
        Ok(u)
    })?;

    let specs = cfg.layer_specs();
    let order = row_order(cfg);
    let correctors = CorrectorOptions {
        reuse_schur: cfg.reuse_schur,
    };
    let mut rows = Vec::new();
    for &(s, h) in &order {
        let mesh = cfg.mesh(h)?;
        let k = specs[s].layers(&mesh, h);
        let forms = AssembledForms::new(&mesh, &cfg.bc, &kappa, None)?;
        let data = data_of(&mesh);
        let opts = BvpOptions {
            k,
            rhs: cfg.rhs,
            source: cfg.source_mode,
            correctors,
        };
        let (sol, t) = timed(|| solve_bvp_with_forms(&mesh, &cfg.bc, &forms, &data, &opts))?;
        let (l2, h1) = error_norms(&sol.u, &reference, &norms.m_h, &norms.a_unit)?;
        rows.push((k, l2, h1, t));
    }
    let l2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let h1: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let (eoc_l2, eoc_h1) = (rates(&order, &l2), rates(&order, &h1));
    let mut table = ResultTable::new(vec![
        "H", "h", "k", "err_l2", "err_h1", "eoc_l2", "eoc_h1", "t_lod", "t_full",
    ]);
    for (i, &(_, h)) in order.iter().enumerate() {
        let (k, l2, h1, t) = rows[i];
        table.push(vec![
            Field::Real(h),
            Field::Real(cfg.fine_h),
            Field::Int(k),
            Field::Real(l2),
            Field::Real(h1),
            Field::opt(eoc_l2[i]),
            Field::opt(eoc_h1[i]),
            time_field(cfg, Some(t)),
            time_field(cfg, if i == 0 { t_full } else { None }),
        ]);
    }
    Ok(table)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Coarse FEM, LOD and fine eigenvalues of `−∇·κ∇u + Vu = λu`.
pub fn run_evp(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let fine = cfg.fine_mesh()?;
    let kappa = cfg.coefficient.build(&fine)?;
    let potential = cfg.potential.build(&fine)?;
    let cache = ReferenceCache::new(cfg.cache_dir.clone());
    let key = ReferenceCache::key(&json!({
        "kind": "evp", "domain": cfg.domain, "fine_h": cfg.fine_h, "bc": cfg.bc, "coefficient": cfg.coefficient,
        "potential": cfg.potential, "n_ev": cfg.n_ev, "eig_tol": cfg.eig_tol,
    }));
    let eig = EigOptions {
        n_ev: cfg.n_ev,
        tol: cfg.eig_tol,
        ..EigOptions::default()
    };
    let correctors = CorrectorOptions {
        reuse_schur: cfg.reuse_schur,
    };
    let specs = cfg.layer_specs();
    let order = row_order(cfg);

    let mut reference: Option<Vec<f64>> = None;
    let mut t_full = None;
    let mut rows = Vec::new();
    for &(s, h) in &order {
        let mesh = cfg.mesh(h)?;
        let k = specs[s].layers(&mesh, h);
        let forms = AssembledForms::new(&mesh, &cfg.bc, &kappa, potential.as_ref())?;
        let energy = forms.energy();
        let active = active_indices(&forms.b_coarse);
        let a_c = galerkin(&forms.p_h, &energy).gather_submatrix(&active, &active)?;
        let m_c = galerkin(&forms.p_h, &forms.m_h).gather_submatrix(&active, &active)?;
        let (coarse, t_coarse) = timed(|| generalized_eig_smallest(&a_c, &m_c, &eig))?;
        let (space, t_corr) = timed(|| LodSpace::new(&mesh, &cfg.bc, &forms, k, &correctors))?;
        let (lod, t_lod) = timed(|| solve_in_space(&forms, &space, &eig))?;
        let (lambda_post, _) = post_process(
            lod.lambdas[0],
            &lod.fine[0],
            &energy,
            &forms.m_h,
            &forms.b_fine,
        )?;
        if reference.is_none() {
            // Shift just below the LOD estimate of the lowest eigenvalue.
            let shift = 0.9 * lod.lambdas[0];
            let (lambdas, _) = cache.get_or_compute(&key, || {
                let fine_forms = AssembledForms::new(&fine, &cfg.bc, &kappa, potential.as_ref())?;
                let opts = EigOptions {
                    shift,
                    ..eig.clone()
                };
                let (r, t) = timed(|| fine_evp(&fine_forms, &opts))?;
                t_full = Some(t);
                Ok(r.lambdas)
            })?;
            reference = Some(lambdas);
        }
        let full = reference.as_ref().expect("reference computed");
        let rel = |l: f64| (l - full[0]) / full[0];
        let min_gap = lod
            .lambdas
            .iter()
            .zip(full)
            .map(|(a, b)| (a - b) / b)
            .fold(f64::INFINITY, f64::min);
        rows.push(EvpRow {
            k,
            rel_lod: rel(lod.lambdas[0]),
            rel_post: rel(lambda_post),
            lambda_lod: lod.lambdas[0],
            lambda_post,
            err_coarse: max_diff(&coarse.lambdas, full),
            err_lod: max_diff(&lod.lambdas, full),
            min_gap,
            t: [t_coarse, t_corr, t_lod],
        });
    }
    let full = reference.expect("at least one row");
    let rel: Vec<f64> = rows.iter().map(|r| r.rel_lod).collect();
    let eocs = rates(&order, &rel);
    let mut table = ResultTable::new(vec![
        "problem",
        "H",
        "h",
        "k",
        "n_ev",
        "lambda0_full",
        "lambda0_lod",
        "lambda0_post",
        "rel_err0_lod",
        "rel_err0_post",
        "eoc_rel0_lod",
        "min_rel_gap_lod",
        "err_coarse",
        "err_lod",
        "t_coarse",
        "t_full",
        "t_corr",
        "t_lod",
    ]);
    for (i, &(_, h)) in order.iter().enumerate() {
        let r = &rows[i];
        table.push(vec![
            Field::Text(cfg.problem.name().into()),
            Field::Real(h),
            Field::Real(cfg.fine_h),
            Field::Int(r.k),
            Field::Int(cfg.n_ev),
            Field::Real(full[0]),
            Field::Real(r.lambda_lod),
            Field::Real(r.lambda_post),
            Field::Real(r.rel_lod),
            Field::Real(r.rel_post),
            Field::opt(eocs[i]),
            Field::Real(r.min_gap),
            Field::Real(r.err_coarse),
            Field::Real(r.err_lod),
            time_field(cfg, Some(r.t[0])),
            time_field(cfg, if i == 0 { t_full } else { None }),
            time_field(cfg, Some(r.t[1])),
            time_field(cfg, Some(r.t[2])),
        ]);
    }
    Ok(table)
}

struct EvpRow {
    k: usize,
    rel_lod: f64,
    rel_post: f64,
    lambda_lod: f64,
    lambda_post: f64,
    err_coarse: f64,
    err_lod: f64,
    min_gap: f64,
    t: [f64; 3],
}

fn check_monotone(energies: &[f64]) -> Result<()> {
    for (i, w) in energies.windows(2).enumerate() {
        if w[1] > w[0] + 1e-12 * w[0].abs() {
            return Err(LodError::Solver(format!(
                "energy increased at iteration {}: {:.15e} -> {:.15e}; history {:?}",
                i + 1,
                w[0],
                w[1],
                energies
            )));
        }
    }
    Ok(())
}

/// Gross–Pitaevskii ground states by optimal damping in the LOD space.
pub fn run_gpe(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let fine = cfg.fine_mesh()?;
    let kappa = cfg.coefficient.build(&fine)?;
    let potential = cfg.potential.build(&fine)?;
    let norms = Norms::new(&fine)?;
    let eig = EigOptions {
        n_ev: 1,
        tol: cfg.eig_tol,
        ..EigOptions::default()
    };
    let correctors = CorrectorOptions {
        reuse_schur: cfg.reuse_schur,
    };
    let cache = ReferenceCache::new(cfg.cache_dir.clone());
    let key = ReferenceCache::key(&json!({
        "kind": "gpe", "domain": cfg.domain, "fine_h": cfg.fine_h, "bc": cfg.bc, "coefficient": cfg.coefficient,
        "potential": cfg.potential, "beta": cfg.beta, "delta_tol": cfg.delta_tol, "eig_tol": cfg.eig_tol,
    }));
    let mut t_full = None;
    let (stored, _) = cache.get_or_compute(&key, || {
        let (run, t) = timed(|| {
            let gf = GpeForms::new(
                &fine,
                &cfg.bc,
                &kappa,
                potential.as_ref(),
                cfg.beta,
                0,
                &correctors,
            )?;
            let run = gpe_oda(&gf, cfg.delta_tol, cfg.max_iter, &eig)?;
            let lambda = gpe_eigenvalue(&gf, &run.state.u_fine);
            Ok((run, lambda))
        })?;
        t_full = Some(t);
        let (run, lambda) = run;
        converged(&run.state, cfg.max_iter)?;
        let mut v = vec![lambda];
        v.extend_from_slice(&run.state.u_fine);
        Ok(v)
    })?;
    let (lambda_ref, u_ref) = (stored[0], &stored[1..]);

    let specs = cfg.layer_specs();
    let order = row_order(cfg);
    let mut rows = Vec::new();
    for &(s, h) in &order {
        let mesh = cfg.mesh(h)?;
        let k = specs[s].layers(&mesh, h);
        let (gf, t_corr) = timed(|| {
            GpeForms::new(
                &mesh,
                &cfg.bc,
                &kappa,
                potential.as_ref(),
                cfg.beta,
                k,
                &correctors,
            )
        })?;
        let (run, t_lod) = timed(|| gpe_oda(&gf, cfg.delta_tol, cfg.max_iter, &eig))?;
        check_monotone(&run.energies)?;
        converged(&run.state, cfg.max_iter)?;
        let post = gpe_post_process(&gf, &run.state.u_fine)?;
        let (l2, h1) = error_norms(&run.state.u_fine, u_ref, &norms.m_h, &norms.a_unit)?;
        let ratio = (run.state.s_val / (2.0 * run.state.e_val)).abs();
        rows.push((
            k,
            run.state.nu,
            ratio,
            post.lambda_lod,
            post.lambda_post,
            l2,
            h1,
            t_corr,
            t_lod,
        ));
    }
    let l2: Vec<f64> = rows.iter().map(|r| r.5).collect();
    let h1: Vec<f64> = rows.iter().map(|r| r.6).collect();
    let (eoc_l2, eoc_h1) = (rates(&order, &l2), rates(&order, &h1));
    let mut table = ResultTable::new(vec![
        "H",
        "h",
        "k",
        "beta",
        "iterations",
        "s_over_e",
        "lambda_ref",
        "lambda_lod",
        "lambda_post",
        "err_l2",
        "err_h1",
        "eoc_l2",
        "eoc_h1",
        "t_corr",
        "t_lod",
        "t_full",
    ]);
    for (i, &(_, h)) in order.iter().enumerate() {
        let r = rows[i];
        table.push(vec![
            Field::Real(h),
            Field::Real(cfg.fine_h),
            Field::Int(r.0),
            Field::Real(cfg.beta),
            Field::Int(r.1),
            Field::Real(r.2),
            Field::Real(lambda_ref),
            Field::Real(r.3),
            Field::Real(r.4),
            Field::Real(r.5),
            Field::Real(r.6),
            Field::opt(eoc_l2[i]),
            Field::opt(eoc_h1[i]),
            time_field(cfg, Some(r.7)),
            time_field(cfg, Some(r.8)),
            time_field(cfg, if i == 0 { t_full } else { None }),
        ]);
    }
    Ok(table)
}

fn converged(state: &crate::eigen::OdaState, max_iter: usize) -> Result<()> {
    if state.converged {
        Ok(())
    } else {
        let ratio = (state.s_val / (2.0 * state.e_val)).abs();
        Err(LodError::Convergence {
            iterations: max_iter,
            worst: ratio,
            residuals: vec![ratio],
        })
    }
}
