//! Dense convex QP: problem container, per-tick assembly and the active-set
//! solver used by the whole-body controller.
//!
//! Problems are small (tens of variables), immutable once built, and carry
//! per-row provenance so a failed solve can name the conflicting constraint
//! family.

mod assembly;
mod bench;
mod linalg;
#[doc(hidden)]
pub mod oracle;
mod solver;

pub use assembly::{
    build_cost, build_friction_rows, build_kinematic_rows, build_physical_consistency,
    build_stance_rows, build_swing_rows, build_wbc_problem, static_feasible_point, QpWeights,
    RegularizationMode, SlackConfig, WbcTaskInputs,
};
pub use bench::{run_bench, BenchRecord};
pub use solver::{certify, KktResiduals, QpSolution, QpSolver, Side, SolveStatus, WarmStart};

use nalgebra::{DMatrix, DVector};

/// Which constraint family a row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConstraintFamily {
    PhysicalConsistency,
    Stance,
    Swing,
    Friction,
    KinematicLimit,
    TorqueLimit,
    SlackBand,
    SlackNonneg,
}

impl std::fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConstraintFamily::PhysicalConsistency => "physical-consistency",
            ConstraintFamily::Stance => "stance",
            ConstraintFamily::Swing => "swing",
            ConstraintFamily::Friction => "friction",
            ConstraintFamily::KinematicLimit => "kinematic-limit",
            ConstraintFamily::TorqueLimit => "torque-limit",
            ConstraintFamily::SlackBand => "slack-band",
            ConstraintFamily::SlackNonneg => "slack-nonneg",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ConstraintFamily {
    type Err = QpError;

    fn from_str(s: &str) -> Result<Self, QpError> {
        Ok(match s {
            "physical-consistency" => ConstraintFamily::PhysicalConsistency,
            "stance" => ConstraintFamily::Stance,
            "swing" => ConstraintFamily::Swing,
            "friction" => ConstraintFamily::Friction,
            "kinematic-limit" => ConstraintFamily::KinematicLimit,
            "torque-limit" => ConstraintFamily::TorqueLimit,
            "slack-band" => ConstraintFamily::SlackBand,
            "slack-nonneg" => ConstraintFamily::SlackNonneg,
            _ => return Err(QpError::Parse(format!("unknown constraint family `{s}`"))),
        })
    }
}

/// Errors from QP assembly, parsing and solving.
#[derive(Debug, thiserror::Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("cost is not convex: {0}")]
    NotConvex(String),
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("equality rows are rank deficient")]
    RankDeficientEqualities,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// How the decision vector is laid out: `[qddot (18); F (3*n_stance);
/// slacks (3*n_swing when enabled)]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionLayout {
    pub stance_legs: Vec<usize>,
    pub swing_legs: Vec<usize>,
    pub slacks_enabled: bool,
}

impl DecisionLayout {
    pub fn n_st(&self) -> usize {
        3 * self.stance_legs.len()
    }

    pub fn n_sw(&self) -> usize {
        3 * self.swing_legs.len()
    }

    pub fn n_slack(&self) -> usize {
        if self.slacks_enabled {
            self.n_sw()
        } else {
            0
        }
    }

    /// Total decision dimension.
    pub fn dim(&self) -> usize {
        crate::NV + self.n_st() + self.n_slack()
    }

    /// Column of the first contact-force entry.
    pub fn force_offset(&self) -> usize {
        crate::NV
    }

    /// Column of the first slack entry.
    pub fn slack_offset(&self) -> usize {
        crate::NV + self.n_st()
    }
}

/// One assembled QP: minimize `1/2 x^T P x + q^T x` subject to `A x = b`
/// and `d_lo <= C x <= d_hi` (infinite bounds allowed).
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub c_ineq: DMatrix<f64>,
    pub d_lo: DVector<f64>,
    pub d_hi: DVector<f64>,
    pub eq_provenance: Vec<ConstraintFamily>,
    pub ineq_provenance: Vec<ConstraintFamily>,
    pub layout: DecisionLayout,
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn n_ineq(&self) -> usize {
        self.c_ineq.nrows()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }

    /// Largest constraint violation at `x` (0 when feasible).
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        let ax = &self.a_eq * x;
        for i in 0..self.n_eq() {
            v = v.max((ax[i] - self.b_eq[i]).abs());
        }
        let cx = &self.c_ineq * x;
        for i in 0..self.n_ineq() {
            v = v.max(self.d_lo[i] - cx[i]).max(cx[i] - self.d_hi[i]);
        }
        v
    }

    /// Index of the most violated row at `x` with its provenance; equality
    /// rows come first in the flat numbering.
    pub fn most_violated_row(&self, x: &DVector<f64>) -> Option<(usize, ConstraintFamily, f64)> {
        let mut worst: Option<(usize, ConstraintFamily, f64)> = None;
        let mut consider = |idx: usize, fam: ConstraintFamily, viol: f64| {
            if viol > worst.map(|w| w.2).unwrap_or(0.0) {
                worst = Some((idx, fam, viol));
            }
        };
        let ax = &self.a_eq * x;
        for i in 0..self.n_eq() {
            consider(i, self.eq_provenance[i], (ax[i] - self.b_eq[i]).abs());
        }
        let cx = &self.c_ineq * x;
        for i in 0..self.n_ineq() {
            let viol = (self.d_lo[i] - cx[i]).max(cx[i] - self.d_hi[i]).max(0.0);
            consider(self.n_eq() + i, self.ineq_provenance[i], viol);
        }
        worst
    }

    /// Structural validation: consistent dimensions and ordered bounds.
    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.n();
        if self.hessian.ncols() != n || self.gradient.len() != n {
            return Err(QpError::Dimension("hessian/gradient".into()));
        }
        if self.a_eq.ncols() != n || self.b_eq.len() != self.a_eq.nrows() {
            return Err(QpError::Dimension("equality block".into()));
        }
        if self.c_ineq.ncols() != n
            || self.d_lo.len() != self.c_ineq.nrows()
            || self.d_hi.len() != self.c_ineq.nrows()
        {
            return Err(QpError::Dimension("inequality block".into()));
        }
        if self.eq_provenance.len() != self.n_eq() || self.ineq_provenance.len() != self.n_ineq() {
            return Err(QpError::Dimension("row provenance".into()));
        }
        for i in 0..self.n_ineq() {
            if !(self.d_lo[i] <= self.d_hi[i]) {
                return Err(QpError::Invalid(format!("row {i}: d_lo > d_hi")));
            }
        }
        Ok(())
    }

    /// Serialize to the line-based text dump consumed by the benchmark
    /// harness and regression snapshots.
    pub fn to_text_dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let fmt_f = |v: f64| -> String {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v:.17e}")
            }
        };
        let write_mat = |s: &mut String, name: &str, m: &DMatrix<f64>| {
            writeln!(s, "{name}").unwrap();
            for r in 0..m.nrows() {
                let row: Vec<String> = (0..m.ncols()).map(|c| fmt_f(m[(r, c)])).collect();
                writeln!(s, "{}", row.join(" ")).unwrap();
            }
        };
        let write_vec = |s: &mut String, name: &str, v: &DVector<f64>| {
            writeln!(s, "{name}").unwrap();
            let row: Vec<String> = v.iter().map(|x| fmt_f(*x)).collect();
            writeln!(s, "{}", row.join(" ")).unwrap();
        };
        writeln!(s, "qpdump v1").unwrap();
        writeln!(
            s,
            "n {} me {} mi {} slacks {}",
            self.n(),
            self.n_eq(),
            self.n_ineq(),
            self.layout.slacks_enabled as u8
        )
        .unwrap();
        let fmt_legs = |legs: &[usize]| legs.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "stlegs {}", fmt_legs(&self.layout.stance_legs)).unwrap();
        writeln!(s, "swlegs {}", fmt_legs(&self.layout.swing_legs)).unwrap();
        write_mat(&mut s, "P", &self.hessian);
        write_vec(&mut s, "q", &self.gradient);
        write_mat(&mut s, "A", &self.a_eq);
        write_vec(&mut s, "b", &self.b_eq);
        write_mat(&mut s, "C", &self.c_ineq);
        write_vec(&mut s, "dlo", &self.d_lo);
        write_vec(&mut s, "dhi", &self.d_hi);
        writeln!(s, "eqprov").unwrap();
        writeln!(
            s,
            "{}",
            self.eq_provenance.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
        )
        .unwrap();
        writeln!(s, "ineqprov").unwrap();
        writeln!(
            s,
            "{}",
            self.ineq_provenance.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(" ")
        )
        .unwrap();
        writeln!(s, "end").unwrap();
        s
    }

    /// Parse a text dump produced by [`QpProblem::to_text_dump`].
    pub fn from_text_dump(text: &str) -> Result<Self, QpError> {
        let mut lines = text.lines();
        let parse_f = |tok: &str| -> Result<f64, QpError> {
            match tok {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => tok.parse().map_err(|e| QpError::Parse(format!("bad float `{tok}`: {e}"))),
            }
        };
        let header = lines.next().ok_or_else(|| QpError::Parse("empty dump".into()))?;
        if header.trim() != "qpdump v1" {
            return Err(QpError::Parse(format!("bad header `{header}`")));
        }
        let dims_line = lines.next().ok_or_else(|| QpError::Parse("missing dims".into()))?;
        let toks: Vec<&str> = dims_line.split_whitespace().collect();
        if toks.len() != 8 || toks[0] != "n" || toks[2] != "me" || toks[4] != "mi" || toks[6] != "slacks" {
            return Err(QpError::Parse(format!("bad dims line `{dims_line}`")));
        }
        let n: usize = toks[1].parse().map_err(|_| QpError::Parse("bad n".into()))?;
        let me: usize = toks[3].parse().map_err(|_| QpError::Parse("bad me".into()))?;
        let mi: usize = toks[5].parse().map_err(|_| QpError::Parse("bad mi".into()))?;
        let slacks = toks[7] == "1";

        let parse_legs = |line: &str, tag: &str| -> Result<Vec<usize>, QpError> {
            let mut it = line.split_whitespace();
            if it.next() != Some(tag) {
                return Err(QpError::Parse(format!("expected `{tag}` line")));
            }
            it.map(|t| t.parse().map_err(|_| QpError::Parse(format!("bad leg index `{t}`"))))
                .collect()
        };
        let stance_legs = parse_legs(lines.next().unwrap_or(""), "stlegs")?;
        let swing_legs = parse_legs(lines.next().unwrap_or(""), "swlegs")?;

        fn expect_line(lines: &mut std::str::Lines, tag: &str) -> Result<(), QpError> {
            match lines.next() {
                Some(l) if l.trim() == tag => Ok(()),
                other => Err(QpError::Parse(format!("expected `{tag}`, got {other:?}"))),
            }
        }
        let read_mat = |rows: usize, cols: usize, lines: &mut std::str::Lines| -> Result<DMatrix<f64>, QpError> {
            let mut m = DMatrix::zeros(rows, cols);
            for r in 0..rows {
                let line = lines.next().ok_or_else(|| QpError::Parse("truncated matrix".into()))?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != cols {
                    return Err(QpError::Parse(format!("row {r}: expected {cols} entries, got {}", toks.len())));
                }
                for c in 0..cols {
                    m[(r, c)] = parse_f(toks[c])?;
                }
            }
            Ok(m)
        };
        let read_vec = |len: usize, lines: &mut std::str::Lines| -> Result<DVector<f64>, QpError> {
            if len == 0 {
                // still consumes one (possibly empty) line
                let _ = lines.next();
                return Ok(DVector::zeros(0));
            }
            let line = lines.next().ok_or_else(|| QpError::Parse("truncated vector".into()))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != len {
                return Err(QpError::Parse(format!("expected {len} entries, got {}", toks.len())));
            }
            let mut v = DVector::zeros(len);
            for i in 0..len {
                v[i] = parse_f(toks[i])?;
            }
            Ok(v)
        };
        let read_prov = |len: usize, lines: &mut std::str::Lines| -> Result<Vec<ConstraintFamily>, QpError> {
            if len == 0 {
                let _ = lines.next();
                return Ok(Vec::new());
            }
            let line = lines.next().ok_or_else(|| QpError::Parse("truncated provenance".into()))?;
            line.split_whitespace().map(|t| t.parse()).collect()
        };

        expect_line(&mut lines, "P")?;
        let hessian = read_mat(n, n, &mut lines)?;
        expect_line(&mut lines, "q")?;
        let gradient = read_vec(n, &mut lines)?;
        expect_line(&mut lines, "A")?;
        let a_eq = read_mat(me, n, &mut lines)?;
        expect_line(&mut lines, "b")?;
        let b_eq = read_vec(me, &mut lines)?;
        expect_line(&mut lines, "C")?;
        let c_ineq = read_mat(mi, n, &mut lines)?;
        expect_line(&mut lines, "dlo")?;
        let d_lo = read_vec(mi, &mut lines)?;
        expect_line(&mut lines, "dhi")?;
        let d_hi = read_vec(mi, &mut lines)?;
        expect_line(&mut lines, "eqprov")?;
        let eq_provenance = read_prov(me, &mut lines)?;
        expect_line(&mut lines, "ineqprov")?;
        let ineq_provenance = read_prov(mi, &mut lines)?;
        expect_line(&mut lines, "end")?;

        let problem = QpProblem {
            hessian,
            gradient,
            a_eq,
            b_eq,
            c_ineq,
            d_lo,
            d_hi,
            eq_provenance,
            ineq_provenance,
            layout: DecisionLayout { stance_legs, swing_legs, slacks_enabled: slacks },
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_problem() -> QpProblem {
        QpProblem {
            hessian: DMatrix::identity(2, 2),
            gradient: DVector::from_vec(vec![1.0, -2.0]),
            a_eq: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            b_eq: DVector::from_vec(vec![1.0]),
            c_ineq: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            d_lo: DVector::from_vec(vec![0.0, f64::NEG_INFINITY]),
            d_hi: DVector::from_vec(vec![f64::INFINITY, 2.0]),
            eq_provenance: vec![ConstraintFamily::PhysicalConsistency],
            ineq_provenance: vec![ConstraintFamily::Friction, ConstraintFamily::KinematicLimit],
            layout: DecisionLayout { stance_legs: vec![0], swing_legs: vec![1, 2], slacks_enabled: false },
        }
    }

    #[test]
    fn dump_round_trip() {
        let p = toy_problem();
        let text = p.to_text_dump();
        let q = QpProblem::from_text_dump(&text).unwrap();
        assert_eq!(q.n(), 2);
        assert_eq!(q.hessian, p.hessian);
        assert_eq!(q.d_lo[1], f64::NEG_INFINITY);
        assert_eq!(q.d_hi[0], f64::INFINITY);
        assert_eq!(q.eq_provenance, p.eq_provenance);
        assert_eq!(q.layout, p.layout);
        // dump of the parse equals the original dump
        assert_eq!(q.to_text_dump(), text);
    }

    #[test]
    fn most_violated_row_reports_provenance() {
        let p = toy_problem();
        let x = DVector::from_vec(vec![-1.0, 2.0]);
        let (row, fam, viol) = p.most_violated_row(&x).unwrap();
        assert_eq!(fam, ConstraintFamily::Friction);
        assert_eq!(row, 1);
        assert!((viol - 1.0).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_crossed_bounds() {
        let mut p = toy_problem();
        p.d_lo[0] = 3.0;
        p.d_hi[0] = 1.0;
        assert!(p.validate().is_err());
    }
}
