//! Benchmark harness: re-solve dumped QP instances and report iterations,
//! residuals and wall time as CSV rows.

use std::path::Path;

use super::{QpError, QpProblem, QpSolver, SolveStatus};

/// One benchmark result row.
#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub instance: String,
    pub n: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_max: f64,
    pub solve_us: f64,
}

impl BenchRecord {
    pub fn csv_header() -> &'static str {
        "instance,n,n_eq,n_ineq,status,iterations,kkt_max,solve_us"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:?},{},{:.3e},{:.1}",
            self.instance, self.n, self.n_eq, self.n_ineq, self.status, self.iterations, self.kkt_max, self.solve_us
        )
    }
}

/// Solve every dump file (optionally several repetitions to stabilize the
/// timing) and return one record per instance.
pub fn run_bench(paths: &[impl AsRef<Path>], repeats: usize) -> Result<Vec<BenchRecord>, QpError> {
    let solver = QpSolver::default();
    let mut out = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let text = std::fs::read_to_string(path)?;
        let problem = QpProblem::from_text_dump(&text)?;
        let mut best_us = f64::INFINITY;
        let mut last = None;
        for _ in 0..repeats.max(1) {
            let sol = solver.solve(&problem, None)?;
            best_us = best_us.min(sol.solve_time_us);
            last = Some(sol);
        }
        let sol = last.expect("at least one repetition");
        out.push(BenchRecord {
            instance: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            n: problem.n(),
            n_eq: problem.n_eq(),
            n_ineq: problem.n_ineq(),
            status: sol.status,
            iterations: sol.iterations,
            kkt_max: sol.kkt.max(),
            solve_us: best_us,
        });
    }
    Ok(out)
}
