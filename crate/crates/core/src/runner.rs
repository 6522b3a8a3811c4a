//! Task execution: runs a compiled scenario's tasks in order and collects a
//! deterministic report.

use crate::biprocess::check_biprocess_adapted;
use crate::error::Result;
use crate::integrate::{matrix_element_fast, matrix_element_oracle, tail_bound};
use crate::ito::{boson_table, ito_identity_profile, mfree_table};
use crate::probes::{probe_catalog, random_exponential};
use crate::processes::{MFreeSort, ProcessKind};
use crate::report::{fnum, Report, Row};
use crate::scenario::{Calculus, Compiled, TaskDecl};
use crate::sde::{
    mfree_displayed_conditions, mfree_sde_expand, picard_solve, stabilization_sweep,
    unitarity_check, PicardOptions,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    pub strict: bool,
    /// Worker cap for the randomized suites; `FILTERED_FOCK_THREADS` wins
    /// when set.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: 0, strict: false, threads: 1 }
    }
}

/// Effective worker count: the environment cap takes precedence.
pub fn worker_count(opts: &RunOptions) -> usize {
    std::env::var("FILTERED_FOCK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(opts.threads.max(1))
}

/// Order-preserving map over items with at most `workers` threads.
pub fn parallel_map<T, U, F>(items: Vec<T>, workers: usize, f: F) -> Vec<U>
where
    T: Send + Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let n = items.len();
    let mut out: Vec<Option<U>> = (0..n).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<&mut Option<U>>> =
        out.iter_mut().map(std::sync::Mutex::new).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(n) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(&items[i]);
                **slots[i].lock().unwrap() = Some(v);
            });
        }
    });
    out.into_iter().map(|v| v.expect("worker filled slot")).collect()
}

/// Execute every task of a compiled scenario. Returns the report; the exit
/// status is derived from `Report::all_pass`.
pub fn run(compiled: &Compiled, opts: &RunOptions) -> Result<Report> {
    let mut report = Report::new(opts.seed);
    let basis = &compiled.basis;
    let grid = basis.grid;
    for (task_idx, task) in compiled.tasks.iter().enumerate() {
        if opts.strict && !report.all_pass() {
            break;
        }
        match task {
            TaskDecl::Oracle { biproc, eta, t, n } => {
                let xp = &compiled.biprocs[biproc];
                let t_cells = grid.cells_at_time(*t)?;
                let eta = eta.to_kind();
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (task_idx as u64) << 8);
                let pairs: Vec<_> = (0..*n)
                    .map(|_| {
                        (
                            random_exponential(&grid, &mut rng, 0.6),
                            random_exponential(&grid, &mut rng, 0.6),
                        )
                    })
                    .collect();
                let results = parallel_map(pairs, worker_count(opts), |(x, y)| {
                    let fast = matrix_element_fast(basis, x, xp, eta, t_cells, y);
                    let oracle = matrix_element_oracle(basis, x, xp, eta, t_cells, y);
                    let tau = tail_bound(&grid, x, xp, eta, t_cells, y);
                    (fast, oracle, tau)
                });
                for (i, (fast, oracle, tau)) in results.into_iter().enumerate() {
                    let (fast, oracle) = (fast?, oracle?);
                    let err = (fast - oracle).norm();
                    let mut row = Row::new("oracle", &format!("{biproc}[{i}]"));
                    row.eta = eta.to_string();
                    row.filters = format!("({},{})", xp.d, xp.e);
                    row.t = fnum(*t);
                    row.value = crate::report::fcomplex(fast);
                    row.reference = crate::report::fcomplex(oracle);
                    row.abs_diff = fnum(err);
                    row.bound = fnum(tau);
                    row.pass = if tau == 0.0 { err <= 1e-12 } else { err <= tau };
                    report.push(row);
                }
            }
            TaskDecl::VerifyIto { x1, eta1, x2, eta2, t, n } => {
                let b1 = &compiled.biprocs[x1];
                let b2 = &compiled.biprocs[x2];
                let t_cells = grid.cells_at_time(*t)?;
                let (e1, e2) = (eta1.to_kind(), eta2.to_kind());
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (task_idx as u64) << 8);
                for i in 0..*n {
                    let x = random_exponential(&grid, &mut rng, 0.5);
                    let y = random_exponential(&grid, &mut rng, 0.5);
                    let (profile, gap) =
                        ito_identity_profile(basis, b1, e1, b2, e2, t_cells, &x, &y)?;
                    let ok = profile
                        .iter()
                        .all(|(err, tau)| if *tau == 0.0 { *err <= 1e-11 } else { err <= tau });
                    let (worst_err, worst_tau) = profile
                        .iter()
                        .fold((0.0_f64, 0.0_f64), |acc, (e, t)| (acc.0.max(*e), acc.1.max(*t)));
                    let mut row = Row::new("verify-ito", &format!("{x1}*{x2}[{i}]"));
                    row.eta = format!("{e1}·{e2}");
                    row.filters = format!("({},{})({},{})", b1.d, b1.e, b2.d, b2.e);
                    row.t = fnum(*t);
                    row.value = fnum(worst_err);
                    row.bound = fnum(worst_tau);
                    row.abs_diff = fnum(gap);
                    row.pass = ok && gap <= 1e-12;
                    report.push(row);
                }
            }
            TaskDecl::Adapted { biproc, t } => {
                let xp = &compiled.biprocs[biproc];
                let t_cells = grid.cells_at_time(*t)?;
                let ok = check_biprocess_adapted(basis, xp, t_cells, grid.n_max.min(3))?;
                let mut row = Row::new("adapted", biproc);
                row.t = fnum(*t);
                row.filters = format!("({},{})", xp.d, xp.e);
                row.value = ok.to_string();
                row.pass = ok;
                report.push(row);
            }
            TaskDecl::Solve { sde, t } => {
                let cs = &compiled.sdes[sde];
                let t_cells = grid.cells_at_time(*t)?;
                let popts = PicardOptions {
                    tol: cs.tol,
                    max_iter: cs.max_iter,
                    ..PicardOptions::default()
                };
                let probes = probe_catalog(&grid, 16, opts.seed);
                let (rep, _) = picard_solve(basis, &cs.system, t_cells, popts, &probes)?;
                let max_res = rep.residuals.iter().copied().fold(0.0, f64::max);
                let mut row = Row::new("solve", sde);
                row.t = fnum(*t);
                row.value = fnum(max_res);
                row.bound = fnum(10.0 * cs.tol);
                row.reference = format!(
                    "iters={} kT={} l0={}",
                    rep.iterations.iter().copied().max().unwrap_or(0),
                    fnum(rep.k_t),
                    fnum(rep.l0)
                );
                row.pass = rep.converged && rep.bound_ok && max_res <= 10.0 * cs.tol;
                report.push(row);
            }
            TaskDecl::CheckUnitarity { sde } => {
                let cs = &compiled.sdes[sde];
                let cells: Vec<usize> = (0..grid.n_cells).collect();
                let rows = unitarity_check(basis, &cs.system, &cells, 1e-10)?;
                // report the worst residual per condition
                for cond in ["i", "ii", "iii"] {
                    let worst = rows
                        .iter()
                        .filter(|r| r.condition == cond)
                        .max_by(|a, b| a.residual.total_cmp(&b.residual));
                    if let Some(w) = worst {
                        let mut row = Row::new("check-unitarity", &format!("{sde}:{cond}"));
                        row.value = fnum(w.residual);
                        row.bound = fnum(1e-10);
                        row.t = w.cell.to_string();
                        row.pass = rows.iter().filter(|r| r.condition == cond).all(|r| r.pass);
                        report.push(row);
                    }
                }
            }
            TaskDecl::SweepM { mfree, m_list, t } => {
                let (_, coeffs) = &compiled.mfsdes[mfree];
                let t_cells = grid.cells_at_time(*t)?;
                let probes = probe_catalog(&grid, 4, opts.seed)[12..20].to_vec();
                let rep = stabilization_sweep(
                    basis,
                    coeffs,
                    m_list,
                    t_cells,
                    PicardOptions::default(),
                    &probes,
                    1e-12,
                )?;
                let mut row = Row::new("sweep-m", mfree);
                row.t = fnum(*t);
                row.value = match rep.m_star {
                    Some(m) => format!("m*={m}"),
                    None => "no stabilization".into(),
                };
                row.reference = rep
                    .gaps_to_last
                    .iter()
                    .map(|g| fnum(*g))
                    .collect::<Vec<_>>()
                    .join(" ");
                row.pass = rep.m_star.is_some();
                report.push(row);
            }
            TaskDecl::MFreeUnitarity { mfree } => {
                let (m, coeffs) = &compiled.mfsdes[mfree];
                let (d1, d2) = mfree_displayed_conditions(basis, coeffs, *m)?;
                // the assembled (i)-(iii) of the expanded filtered system
                let sys = mfree_sde_expand(&grid, coeffs, *m)?;
                let rows = unitarity_check(basis, &sys, &[0], 1e-10)?;
                let assembled = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
                let displayed = d1.max(d2);
                let mut row = Row::new("mfree-unitarity", mfree);
                row.value = fnum(displayed);
                row.reference = fnum(assembled);
                row.abs_diff = fnum((displayed - assembled).abs());
                row.bound = fnum(1e-10);
                row.pass = (displayed - assembled).abs() <= 1e-10;
                report.push(row);
            }
            TaskDecl::Dump { u } => {
                let vector = &compiled.vectors[u];
                let amps = basis.exponential_amplitudes(vector)?;
                for line in basis.dump_fock_vector(&amps).lines() {
                    let mut row = Row::new("dump", u);
                    row.value = line.to_string();
                    report.push(row);
                }
            }
            TaskDecl::ItoTable { calculus } => {
                for line in ito_table_lines(calculus) {
                    let mut row = Row::new("ito-table", &format!("{calculus:?}"));
                    row.value = line;
                    report.push(row);
                }
            }
        }
    }
    Ok(report)
}

/// The nontrivial Itô table in the row/column layout of the calculus.
pub fn ito_table_lines(calculus: &Calculus) -> Vec<String> {
    match calculus {
        Calculus::Boson => {
            let header = format!("{:12}| {:12}| {:12}", "dA1dA2", "dA*(k)", "dN(k)");
            let mut lines = vec![header];
            for row in [ProcessKind::Annihilation(1), ProcessKind::Number(1)] {
                let label = match row {
                    ProcessKind::Annihilation(_) => "dA(k)",
                    _ => "dN(k)",
                };
                let cells: Vec<String> = [ProcessKind::Creation(1), ProcessKind::Number(1)]
                    .iter()
                    .map(|col| {
                        boson_table(row, *col)
                            .map(|o| match o {
                                ProcessKind::Time => "dT".to_string(),
                                ProcessKind::Annihilation(_) => "dA(k)".to_string(),
                                ProcessKind::Creation(_) => "dA*(k)".to_string(),
                                ProcessKind::Number(_) => "dN(k)".to_string(),
                            })
                            .unwrap_or_else(|| "0".into())
                    })
                    .collect();
                lines.push(format!("{:12}| {:12}| {:12}", label, cells[0], cells[1]));
            }
            lines
        }
        Calculus::MFree(m) => {
            let t = |s: MFreeSort| match s {
                MFreeSort::Annihilation => format!("dl({m})"),
                MFreeSort::Creation => format!("dl*({m})"),
                MFreeSort::Number => format!("dlN({m})"),
                MFreeSort::Time => format!("dlT({m})"),
            };
            let header = format!("{:12}| {:12}| {:12}", "dl1dl2", t(MFreeSort::Creation), t(MFreeSort::Number));
            let mut lines = vec![header];
            for row in [MFreeSort::Annihilation, MFreeSort::Number] {
                let cells: Vec<String> = [MFreeSort::Creation, MFreeSort::Number]
                    .iter()
                    .map(|col| {
                        mfree_table(row, *col)
                            .map(|(o, trace)| format!("{} [{}]", t(o), match trace {
                                crate::ito::TraceKind::Ip0 => "IP0",
                                crate::ito::TraceKind::Ip1 => "IP1",
                            }))
                            .unwrap_or_else(|| "0".into())
                    })
                    .collect();
                lines.push(format!("{:12}| {:12}| {:12}", t(row), cells[0], cells[1]));
            }
            lines
        }
    }
}

/// Convenience wrapper: parse, compile and run a scenario text.
pub fn run_text(text: &str, opts: &RunOptions) -> std::result::Result<Report, String> {
    let ast = crate::scenario::parse_scenario(text).map_err(|d| d.to_string())?;
    let compiled = crate::scenario::compile(&ast).map_err(|d| d.to_string())?;
    run(&compiled, opts).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_task_list_passes() {
        let report =
            run_text("grid T=1 cells=4 colors=2 nmax=2 h0=1\n", &RunOptions::default()).unwrap();
        assert!(report.all_pass());
        assert_eq!(report.summary.total, 0);
    }

    #[test]
    fn ito_table_layout() {
        let lines = ito_table_lines(&Calculus::Boson);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].contains("dT"));
        assert!(lines[1].contains("dA(k)"));
        assert!(lines[2].contains("dA*(k)"));
        assert!(lines[2].contains("dN(k)"));
        let lines = ito_table_lines(&Calculus::MFree(2));
        assert!(lines[1].contains("dlT(2)"));
        assert!(lines[1].contains("IP0"));
    }

    #[test]
    fn deterministic_report_bytes() {
        let text = r#"
grid T=1 cells=4 colors=2 nmax=2 h0=1
biproc X = [I | {1}] ⊗ [I | FULL] on (0)
task oracle X dA(1) t=1 n=3
task ito-table boson
"#;
        let a = run_text(text, &RunOptions::default()).unwrap();
        let b = run_text(text, &RunOptions::default()).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.all_pass());
    }
}
