//! Built-in demonstration families.
//!
//! | name         | field                                              | box                    | S/Z edge |
//! |--------------|----------------------------------------------------|------------------------|----------|
//! | `cusp1`      | `t2 + t1 x - x^3`                                  | `[-1,1]^2`             | right    |
//! | `quintic3`   | `t2 + t1 x + 2x^3 - x^5`                           | `[-3,1] x [-3,3]`      | right    |
//! | `dualcusp1`  | `t2 + t1 x + x^3`                                  | `[-1,1]^2`             | left     |
//! | `bt2`        | `(x2, t1 + t2 x1 + x1^2 + x1 x2)`                  | `[-1,1]^2`             | right    |
//! | `fh3`        | cusp in `x` times a rotating `(y, z)` plane        | `[-1,1]^2`             | right    |
//! | `dwell_grad` | `-grad (x^4/4 - t1 x^2/2 - t2 x)`                  | `[-1,1]^2`             | right    |
//!
//! In `fh3` the `(y, z)` block has eigenvalues `mu +- i` with
//! `mu = 0.04 - (t1 - 0.75)^2 - (t2 + 0.25)^2`, so the fold curve of the
//! cusp meets the Hopf circle `mu = 0` in two fold-Hopf points.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{
    gradient_family_from_potential, Edge, FamilySpec, ParamBox, ParamLinearForm, RealFn, Theta,
};
use crate::error::{Error, Result};

pub const BUILTIN_NAMES: [&str; 6] = ["cusp1", "quintic3", "bt2", "fh3", "dualcusp1", "dwell_grad"];

/// Centre and squared radius of the Hopf circle in `fh3`.
pub const FH3_CENTER: Theta = [0.75, -0.25];
pub const FH3_RADIUS_SQ: f64 = 0.04;

pub fn builtin(name: &str) -> Result<FamilySpec> {
    match name {
        "cusp1" => Ok(cusp1()),
        "quintic3" => Ok(quintic3()),
        "dualcusp1" => Ok(dualcusp1()),
        "bt2" => Ok(bt2()),
        "fh3" => Ok(fh3()),
        "dwell_grad" => Ok(dwell_grad()),
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

fn unit_box(edge: Edge) -> ParamBox {
    ParamBox::new([-1.0, -1.0], [1.0, 1.0], edge).expect("valid box")
}

fn real(f: fn(f64) -> f64) -> RealFn {
    Arc::new(f)
}

fn scalar_family(
    name: &str,
    bounds: ParamBox,
    f: fn(f64, Theta) -> f64,
    fx: fn(f64, Theta) -> f64,
) -> FamilySpec {
    FamilySpec::new(name, 1, bounds, Arc::new(move |x: &DVector<f64>, t| DVector::from_element(1, f(x[0], t))))
        .with_jacobian(Arc::new(move |x: &DVector<f64>, t| DMatrix::from_element(1, 1, fx(x[0], t))))
        .with_param_jacobian(Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 2, &[x[0], 1.0])))
}

fn cusp1() -> FamilySpec {
    scalar_family(
        "cusp1",
        unit_box(Edge::Right),
        |x, t| t[1] + t[0] * x - x * x * x,
        |x, t| t[0] - 3.0 * x * x,
    )
    .with_linear_form(ParamLinearForm {
        g: real(|x| x),
        dg: real(|_| 1.0),
        ddg: real(|_| 0.0),
        h: real(|x| -x * x * x),
        dh: real(|x| -3.0 * x * x),
        ddh: real(|x| -6.0 * x),
    })
}

fn quintic3() -> FamilySpec {
    let b = ParamBox::new([-3.0, -3.0], [1.0, 3.0], Edge::Right).expect("valid box");
    scalar_family(
        "quintic3",
        b,
        |x, t| t[1] + t[0] * x + 2.0 * x.powi(3) - x.powi(5),
        |x, t| t[0] + 6.0 * x * x - 5.0 * x.powi(4),
    )
    .with_state_radius(3.0)
    .with_linear_form(ParamLinearForm {
        g: real(|x| x),
        dg: real(|_| 1.0),
        ddg: real(|_| 0.0),
        h: real(|x| 2.0 * x.powi(3) - x.powi(5)),
        dh: real(|x| 6.0 * x * x - 5.0 * x.powi(4)),
        ddh: real(|x| 12.0 * x - 20.0 * x.powi(3)),
    })
}

fn dualcusp1() -> FamilySpec {
    scalar_family(
        "dualcusp1",
        unit_box(Edge::Left),
        |x, t| t[1] + t[0] * x + x * x * x,
        |x, t| t[0] + 3.0 * x * x,
    )
    .with_linear_form(ParamLinearForm {
        g: real(|x| x),
        dg: real(|_| 1.0),
        ddg: real(|_| 0.0),
        h: real(|x| x * x * x),
        dh: real(|x| 3.0 * x * x),
        ddh: real(|x| 6.0 * x),
    })
}

fn bt2() -> FamilySpec {
    FamilySpec::new(
        "bt2",
        2,
        unit_box(Edge::Right),
        Arc::new(|x: &DVector<f64>, b: Theta| {
            DVector::from_column_slice(&[x[1], b[0] + b[1] * x[0] + x[0] * x[0] + x[0] * x[1]])
        }),
    )
    .with_jacobian(Arc::new(|x: &DVector<f64>, b: Theta| {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, b[1] + 2.0 * x[0] + x[1], x[0]])
    }))
    .with_param_jacobian(Arc::new(|x: &DVector<f64>, _| {
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, x[0]])
    }))
}

fn fh3_mu(t: Theta) -> (f64, f64, f64) {
    let d1 = t[0] - FH3_CENTER[0];
    let d2 = t[1] - FH3_CENTER[1];
    (FH3_RADIUS_SQ - d1 * d1 - d2 * d2, -2.0 * d1, -2.0 * d2)
}

fn fh3() -> FamilySpec {
    FamilySpec::new(
        "fh3",
        3,
        unit_box(Edge::Right),
        Arc::new(|x: &DVector<f64>, t: Theta| {
            let (mu, _, _) = fh3_mu(t);
            DVector::from_column_slice(&[
                t[1] + t[0] * x[0] - x[0].powi(3),
                mu * x[1] - x[2],
                x[1] + mu * x[2],
            ])
        }),
    )
    .with_jacobian(Arc::new(|x: &DVector<f64>, t: Theta| {
        let (mu, _, _) = fh3_mu(t);
        DMatrix::from_row_slice(
            3,
            3,
            &[t[0] - 3.0 * x[0] * x[0], 0.0, 0.0, 0.0, mu, -1.0, 0.0, 1.0, mu],
        )
    }))
    .with_param_jacobian(Arc::new(|x: &DVector<f64>, t: Theta| {
        let (_, m1, m2) = fh3_mu(t);
        DMatrix::from_row_slice(3, 2, &[x[0], 1.0, x[1] * m1, x[1] * m2, x[2] * m1, x[2] * m2])
    }))
}

fn dwell_grad() -> FamilySpec {
    let fam = gradient_family_from_potential(
        "dwell_grad",
        1,
        unit_box(Edge::Right),
        Arc::new(|x: &DVector<f64>, t: Theta| {
            x[0].powi(4) / 4.0 - t[0] * x[0] * x[0] / 2.0 - t[1] * x[0]
        }),
        Some(Arc::new(|x: &DVector<f64>, t: Theta| {
            DVector::from_element(1, x[0].powi(3) - t[0] * x[0] - t[1])
        })),
        Some(Arc::new(|x: &DVector<f64>, t: Theta| {
            DMatrix::from_element(1, 1, 3.0 * x[0] * x[0] - t[0])
        })),
    );
    fam.with_param_jacobian(Arc::new(|x: &DVector<f64>, _| DMatrix::from_row_slice(1, 2, &[x[0], 1.0])))
        .with_linear_form(ParamLinearForm {
            g: real(|x| x),
            dg: real(|_| 1.0),
            ddg: real(|_| 0.0),
            h: real(|x| -x * x * x),
            dh: real(|x| -3.0 * x * x),
            ddh: real(|x| -6.0 * x),
        })
}
