//! Plain-text sparse-triplet dump of a [`QcqpProblem`].
//!
//! ```text
//! cast-qcqp 1
//! horizon <T>
//! q <nnz>                         upper-triangle triplets follow
//! <row> <col> <value>
//! p <nnz>
//! <row> <col> <value>
//! constraints <m>
//! constraint <kind> <constant> <quad nnz> <linear nnz>
//! <row> <col> <value>             quadratic part, upper triangle
//! <index> <value>                 linear part on v
//! ```
//!
//! Values are written with shortest round-trip formatting, so a dump parses
//! back bit-identically.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::{build_constraints, ConstraintKind, QcqpProblem, QuadraticConstraint, SparseSym, VariableLayout};
use crate::error::{Error, Result};

const MAGIC: &str = "cast-qcqp 1";

fn upper_triplets(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    let mut out = vec![];
    for c in 0..m.ncols() {
        for r in 0..=c {
            let v = m[(r, c)];
            if v != 0.0 {
                out.push((r, c, v));
            }
        }
    }
    out
}

pub fn write_dump(problem: &QcqpProblem) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "horizon {}", problem.layout.horizon());
    for (name, m) in [("q", &problem.q), ("p", &problem.p)] {
        let trip = upper_triplets(m);
        let _ = writeln!(s, "{name} {}", trip.len());
        for (r, c, v) in trip {
            let _ = writeln!(s, "{r} {c} {v:?}");
        }
    }
    let _ = writeln!(s, "constraints {}", problem.constraints.len());
    for con in &problem.constraints {
        let _ = writeln!(
            s,
            "constraint {} {:?} {} {}",
            con.kind.name(),
            con.constant,
            con.quad.entries().len(),
            con.linear.len()
        );
        for &(r, c, v) in con.quad.entries() {
            let _ = writeln!(s, "{r} {c} {v:?}");
        }
        for &(i, d) in &con.linear {
            let _ = writeln!(s, "{i} {d:?}");
        }
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<Vec<&'a str>> {
        for (n, text) in self.inner.by_ref() {
            self.line = n + 1;
            let text = text.trim();
            if !text.is_empty() && !text.starts_with('#') {
                return Ok(text.split_whitespace().collect());
            }
        }
        Err(Error::Parse { line: self.line + 1, message: "unexpected end of dump".into() })
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, message: message.into() }
    }

    fn keyword(&mut self, key: &str, arity: usize) -> Result<Vec<&'a str>> {
        let tokens = self.next_tokens()?;
        if tokens.first() != Some(&key) || tokens.len() != arity + 1 {
            return Err(self.err(format!("expected `{key}` with {arity} field(s)")));
        }
        Ok(tokens[1..].to_vec())
    }

    fn num<T: std::str::FromStr>(&self, token: &str) -> Result<T> {
        token.parse().map_err(|_| self.err(format!("cannot parse `{token}`")))
    }

    fn triplets(&mut self, count: usize, dim: usize) -> Result<Vec<(usize, usize, f64)>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let t = self.next_tokens()?;
            if t.len() != 3 {
                return Err(self.err("expected `row col value`"));
            }
            let (r, c, v): (usize, usize, f64) = (self.num(t[0])?, self.num(t[1])?, self.num(t[2])?);
            if r > c || c >= dim || !v.is_finite() {
                return Err(self.err(format!("invalid upper-triangle entry ({r}, {c})")));
            }
            out.push((r, c, v));
        }
        Ok(out)
    }
}

fn dense(n: usize, trip: &[(usize, usize, f64)]) -> DMatrix<f64> {
    SparseSym::from_upper(trip.to_vec()).to_dense(n)
}

/// Parses a dump written by [`write_dump`].
///
/// The constraint list must match the one this crate builds for the horizon;
/// a dump from a different constraint set is rejected rather than solved
/// with mismatched rounding.
pub fn parse_dump(text: &str) -> Result<QcqpProblem> {
    let mut lines = Lines { inner: text.lines().enumerate(), line: 0 };
    let head = lines.next_tokens()?;
    if head.join(" ") != MAGIC {
        return Err(lines.err(format!("missing `{MAGIC}` header")));
    }
    let horizon: usize = {
        let f = lines.keyword("horizon", 1)?;
        lines.num(f[0])?
    };
    let layout = VariableLayout::new(horizon).map_err(|e| lines.err(e.to_string()))?;
    let (dim, ldim) = (layout.dim(), layout.linear_dim());

    let nq: usize = {
        let f = lines.keyword("q", 1)?;
        lines.num(f[0])?
    };
    let q = dense(dim, &lines.triplets(nq, dim)?);
    let np: usize = {
        let f = lines.keyword("p", 1)?;
        lines.num(f[0])?
    };
    let p = dense(ldim, &lines.triplets(np, ldim)?);

    let m: usize = {
        let f = lines.keyword("constraints", 1)?;
        lines.num(f[0])?
    };
    let mut constraints = Vec::with_capacity(m);
    for _ in 0..m {
        let f = lines.keyword("constraint", 4)?;
        let kind = ConstraintKind::from_name(f[0]).ok_or_else(|| lines.err(format!("unknown constraint kind `{}`", f[0])))?;
        let constant: f64 = lines.num(f[1])?;
        let (nquad, nlin): (usize, usize) = (lines.num(f[2])?, lines.num(f[3])?);
        let quad = SparseSym::from_upper(lines.triplets(nquad, dim)?);
        let mut linear = Vec::with_capacity(nlin);
        for _ in 0..nlin {
            let t = lines.next_tokens()?;
            if t.len() != 2 {
                return Err(lines.err("expected `index value`"));
            }
            let (i, d): (usize, f64) = (lines.num(t[0])?, lines.num(t[1])?);
            if i >= ldim {
                return Err(lines.err(format!("linear index {i} out of range")));
            }
            linear.push((i, d));
        }
        constraints.push(QuadraticConstraint { quad, linear, constant, kind });
    }
    if constraints != build_constraints(&layout) {
        return Err(Error::InvalidInput(
            "dumped constraints differ from the standard constraint set for this horizon".into(),
        ));
    }
    Ok(QcqpProblem { layout, q, p, constraints })
}
