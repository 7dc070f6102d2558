//! Declarative family files.
//!
//! ```text
//! # cusp normal form
//! name  = cusp
//! dim   = 1
//! rhs1  = t2 + t1*x1 - x1^3
//! lo    = -1, -1
//! hi    = 1, 1
//! sz_edge = right
//! ```
//!
//! Keys: `name`, `dim`, `rhs1..rhsN` or `potential`, `lo`, `hi`, `sz_edge`
//! (default `right`), `fd_step`, `state_radius`. A file may instead name a
//! built-in with `builtin = cusp1`; `lo`, `hi`, `sz_edge`, `fd_step` and
//! `state_radius` then override the built-in values.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::expr::{Expr, Var};
use super::{builtin, gradient_family_from_potential, Edge, FamilySpec, ParamBox, ParamLinearForm};
use crate::error::{Error, Result};

const KNOWN_SCALAR_KEYS: [&str; 8] =
    ["name", "dim", "potential", "lo", "hi", "sz_edge", "fd_step", "state_radius"];

pub fn load_family_file(path: impl AsRef<Path>) -> Result<FamilySpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_family(&text)
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn parse_family(text: &str) -> Result<FamilySpec> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim().to_string();
        let known = KNOWN_SCALAR_KEYS.contains(&key.as_str())
            || key == "builtin"
            || rhs_index(&key).is_some();
        if !known {
            return Err(parse_err(line, format!("unknown key `{key}`")));
        }
        if entries.contains_key(&key) {
            return Err(parse_err(line, format!("duplicate key `{key}`")));
        }
        entries.insert(key, Entry { line, value: value.trim().to_string() });
    }

    let mut fam = match entries.get("builtin") {
        Some(e) => {
            if let Some((k, other)) = entries
                .iter()
                .find(|(k, _)| *k == "dim" || *k == "potential" || rhs_index(k).is_some())
            {
                return Err(parse_err(other.line, format!("`{k}` cannot be combined with `builtin`")));
            }
            let mut fam = builtin(&e.value)?;
            if let Some(n) = entries.get("name") {
                fam.name = n.value.clone();
            }
            let bounds = parse_box(&entries, Some(fam.bounds))?;
            fam = fam.with_bounds(bounds);
            fam
        }
        None => build_expression_family(&entries)?,
    };
    if let Some(e) = entries.get("fd_step") {
        let h = parse_number(e)?;
        if h <= 0.0 {
            return Err(parse_err(e.line, "fd_step must be positive"));
        }
        fam = fam.with_fd_step(h);
    }
    if let Some(e) = entries.get("state_radius") {
        let r = parse_number(e)?;
        if r <= 0.0 {
            return Err(parse_err(e.line, "state_radius must be positive"));
        }
        fam = fam.with_state_radius(r);
    }
    fam.source = Some(text.to_string());
    Ok(fam)
}

fn rhs_index(key: &str) -> Option<usize> {
    key.strip_prefix("rhs")?.parse::<usize>().ok().filter(|&i| i >= 1)
}

fn parse_number(e: &Entry) -> Result<f64> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| parse_err(e.line, format!("expected a number, found `{}`", e.value)))
}

fn parse_pair(e: &Entry) -> Result<[f64; 2]> {
    let parts: Vec<&str> = e.value.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(parse_err(e.line, format!("expected two comma-separated numbers, found `{}`", e.value)));
    }
    let mut out = [0.0; 2];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(e.line, format!("expected a number, found `{p}`")))?;
    }
    Ok(out)
}

fn parse_box(entries: &HashMap<String, Entry>, base: Option<ParamBox>) -> Result<ParamBox> {
    let corner = |key: &str, fallback: Option<[f64; 2]>| -> Result<([f64; 2], usize)> {
        match entries.get(key) {
            Some(e) => Ok((parse_pair(e)?, e.line)),
            None => fallback.map(|v| (v, 0)).ok_or_else(|| parse_err(0, format!("missing key `{key}`"))),
        }
    };
    let (lo, lo_line) = corner("lo", base.map(|b| b.lo))?;
    let (hi, hi_line) = corner("hi", base.map(|b| b.hi))?;
    let edge = match entries.get("sz_edge") {
        Some(e) => Edge::parse(&e.value).ok_or_else(|| {
            parse_err(e.line, format!("sz_edge must be left, right, bottom or top, found `{}`", e.value))
        })?,
        None => base.map(|b| b.sz_edge).unwrap_or(Edge::Right),
    };
    ParamBox::new(lo, hi, edge).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::Parse { line: lo_line.max(hi_line), msg },
        other => other,
    })
}

fn parse_expr(e: &Entry, dim: usize) -> Result<Expr> {
    let ex = Expr::parse(&e.value, dim).map_err(|err| parse_err(e.line, err.to_string()))?;
    if ex.has_variable_exponent() {
        return Err(parse_err(e.line, "exponents must be constant"));
    }
    Ok(ex)
}

fn build_expression_family(entries: &HashMap<String, Entry>) -> Result<FamilySpec> {
    let dim_entry = entries.get("dim").ok_or_else(|| parse_err(0, "missing key `dim`"))?;
    let dim = dim_entry
        .value
        .parse::<usize>()
        .ok()
        .filter(|&d| d >= 1)
        .ok_or_else(|| parse_err(dim_entry.line, format!("dim must be a positive integer, found `{}`", dim_entry.value)))?;
    let name = entries.get("name").map(|e| e.value.clone()).unwrap_or_else(|| "family".into());
    let bounds = parse_box(entries, None)?;

    let rhs_keys: Vec<(&String, &Entry)> = entries.iter().filter(|(k, _)| rhs_index(k).is_some()).collect();
    if let Some(e) = entries.get("potential") {
        if let Some((_, r)) = rhs_keys.first() {
            return Err(parse_err(r.line, "`rhs` keys cannot be combined with `potential`"));
        }
        let pot = parse_expr(e, dim)?;
        let grad: Vec<Expr> = (0..dim).map(|i| pot.derivative(Var::X(i))).collect();
        let rhs_exprs: Vec<Expr> = grad.iter().map(|g| Expr::Neg(Box::new(g.clone()))).collect();
        let hess: Vec<Vec<Expr>> =
            grad.iter().map(|g| (0..dim).map(|j| g.derivative(Var::X(j))).collect()).collect();
        let pot = Arc::new(pot);
        let grad = Arc::new(grad);
        let hess = Arc::new(hess);
        let fam = gradient_family_from_potential(
            name,
            dim,
            bounds,
            Arc::new(move |x: &DVector<f64>, t| pot.eval(x.as_slice(), t)),
            Some(Arc::new(move |x: &DVector<f64>, t| {
                DVector::from_iterator(grad.len(), grad.iter().map(|g| g.eval(x.as_slice(), t)))
            })),
            Some(Arc::new(move |x: &DVector<f64>, t| {
                let n = hess.len();
                DMatrix::from_fn(n, n, |i, j| hess[i][j].eval(x.as_slice(), t))
            })),
        );
        return Ok(attach_param_derivatives(fam, rhs_exprs));
    }

    let mut rhs_exprs = Vec::with_capacity(dim);
    for i in 1..=dim {
        let e = entries
            .get(&format!("rhs{i}"))
            .ok_or_else(|| parse_err(0, format!("missing key `rhs{i}`")))?;
        rhs_exprs.push(parse_expr(e, dim)?);
    }
    if let Some((k, e)) = rhs_keys.iter().find(|(k, _)| rhs_index(k).is_some_and(|i| i > dim)) {
        return Err(parse_err(e.line, format!("`{k}` exceeds dim = {dim}")));
    }

    let exprs = Arc::new(rhs_exprs.clone());
    let jac: Vec<Vec<Expr>> =
        rhs_exprs.iter().map(|f| (0..dim).map(|j| f.derivative(Var::X(j))).collect()).collect();
    let jac = Arc::new(jac);
    let fam = FamilySpec::new(
        name,
        dim,
        bounds,
        Arc::new(move |x: &DVector<f64>, t| {
            DVector::from_iterator(exprs.len(), exprs.iter().map(|f| f.eval(x.as_slice(), t)))
        }),
    )
    .with_jacobian(Arc::new(move |x: &DVector<f64>, t| {
        let n = jac.len();
        DMatrix::from_fn(n, n, |i, j| jac[i][j].eval(x.as_slice(), t))
    }));
    Ok(attach_param_derivatives(fam, rhs_exprs))
}

fn attach_param_derivatives(fam: FamilySpec, rhs: Vec<Expr>) -> FamilySpec {
    let dim = rhs.len();
    let jt: Vec<[Expr; 2]> =
        rhs.iter().map(|f| [f.derivative(Var::T(0)), f.derivative(Var::T(1))]).collect();
    let form = if dim == 1 { linear_form(&rhs[0], &jt[0]) } else { None };
    let jt = Arc::new(jt);
    let fam = fam.with_param_jacobian(Arc::new(move |x: &DVector<f64>, t| {
        DMatrix::from_fn(jt.len(), 2, |i, k| jt[i][k].eval(x.as_slice(), t))
    }));
    match form {
        Some(f) => fam.with_linear_form(f),
        None => fam,
    }
}

/// Recognizes `x' = c (t2 + t1 g(x) + h(x))` with a nonzero constant `c`.
fn linear_form(f: &Expr, jt: &[Expr; 2]) -> Option<ParamLinearForm> {
    let [d1, d2] = jt;
    if d2.has_variables() || d1.depends_on(Var::T(0)) || d1.depends_on(Var::T(1)) {
        return None;
    }
    let c = d2.eval(&[0.0], [0.0, 0.0]);
    if c == 0.0 || !c.is_finite() {
        return None;
    }
    let zero = [0.0, 0.0];
    let g = Arc::new(d1.clone());
    let dg = Arc::new(d1.derivative(Var::X(0)));
    let ddg = Arc::new(dg.derivative(Var::X(0)));
    let h = Arc::new(f.clone());
    let dh = Arc::new(f.derivative(Var::X(0)));
    let ddh = Arc::new(dh.derivative(Var::X(0)));
    let wrap = move |e: Arc<Expr>| -> super::RealFn { Arc::new(move |x: f64| e.eval(&[x], zero) / c) };
    Some(ParamLinearForm {
        g: wrap(g),
        dg: wrap(dg),
        ddg: wrap(ddg),
        h: wrap(h),
        dh: wrap(dh),
        ddh: wrap(ddh),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::FamilyKind;

    const CUSP: &str = "# cusp\nname = c\ndim = 1\nrhs1 = t2 + t1*x1 - x1^3\nlo = -1, -1\nhi = 1, 1\n";

    #[test]
    fn parses_expression_family() {
        let f = parse_family(CUSP).unwrap();
        assert_eq!(f.name, "c");
        assert_eq!(f.bounds.sz_edge, Edge::Right);
        let x = DVector::from_element(1, 0.5);
        assert!((f.eval_rhs(&x, [0.3, 0.2]).unwrap()[0] - (0.2 + 0.15 - 0.125)).abs() < 1e-15);
        assert!((f.jacobian_x(&x, [0.3, 0.2]).unwrap()[(0, 0)] - (0.3 - 0.75)).abs() < 1e-15);
        let form = f.linear_form().expect("parameter-linear");
        assert_eq!((form.g)(0.7), 0.7);
        assert!(((form.h)(0.5) + 0.125).abs() < 1e-15);
        assert!(((form.ddh)(0.5) + 3.0).abs() < 1e-15);
    }

    #[test]
    fn typo_reports_line() {
        let bad = CUSP.replace("x1^3", "x1^^3");
        assert!(matches!(parse_family(&bad), Err(Error::Parse { line: 4, .. })));
        let bad = CUSP.replace("dim", "dimm");
        assert!(matches!(parse_family(&bad), Err(Error::Parse { line: 3, .. })));
        let dup = format!("{CUSP}dim = 1\n");
        assert!(matches!(parse_family(&dup), Err(Error::Parse { line: 7, .. })));
        let var_exp = CUSP.replace("x1^3", "x1^t1");
        assert!(matches!(parse_family(&var_exp), Err(Error::Parse { line: 4, .. })));
    }

    #[test]
    fn potential_family_is_gradient() {
        let text = "dim = 1\npotential = x1^4/4 - t1*x1^2/2 - t2*x1\nlo = -1,-1\nhi = 1,1\n";
        let f = parse_family(text).unwrap();
        assert_eq!(f.kind(), FamilyKind::Gradient);
        let x = DVector::from_element(1, 0.4);
        let expect = 0.3 + 0.5 * 0.4 - 0.064;
        assert!((f.eval_rhs(&x, [0.5, 0.3]).unwrap()[0] - expect).abs() < 1e-14);
        assert!(f.linear_form().is_some());
    }

    #[test]
    fn builtin_with_overrides() {
        let f = parse_family("builtin = cusp1\nlo = 0.2, -1\n").unwrap();
        assert_eq!(f.bounds.lo, [0.2, -1.0]);
        assert_eq!(f.bounds.hi, [1.0, 1.0]);
        assert!(matches!(parse_family("builtin = nope\n"), Err(Error::UnknownFamily(_))));
    }

    #[test]
    fn non_linear_parameter_dependence_has_no_form() {
        let text = "dim = 1\nrhs1 = t2^2 + t1*x1 - x1^3\nlo = -1,-1\nhi = 1,1\n";
        assert!(parse_family(text).unwrap().linear_form().is_none());
    }
}
