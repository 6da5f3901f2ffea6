use std::fmt;

use super::{ParamId, ParamStore, Tape, Var};

/// Result of comparing tape gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Max over coordinates of `|a - n| / max(1e-8, |a| + |n|)`.
    pub max_rel_error: f64,
    /// Coordinate attaining the maximum, as (parameter, flat index).
    pub worst: Option<(ParamId, usize)>,
    pub coordinates: usize,
}

impl fmt::Display for GradCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "max rel error {:.3e} over {} coordinates", self.max_rel_error, self.coordinates)?;
        if let Some((id, i)) = self.worst {
            write!(f, " (worst: param {} index {i})", id.0)?;
        }
        Ok(())
    }
}

/// Analytic and central-difference derivative at one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinate {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Coordinate {
    pub fn rel_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / (self.analytic.abs() + self.numeric.abs()).max(1e-8)
    }
}

/// Both derivatives for every coordinate of every parameter, in store order.
pub fn gradient_pairs<F>(params: &ParamStore, f: F, eps: f64) -> Vec<Coordinate>
where
    F: Fn(&mut Tape<'_>) -> Var,
{
    let analytic = {
        let mut tape = Tape::new(params);
        let out = f(&mut tape);
        tape.backward(out)
    };

    let eval = |store: &ParamStore| {
        let mut tape = Tape::new(store);
        let out = f(&mut tape);
        tape.scalar(out)
    };

    let mut probe = params.clone();
    let mut coords = Vec::new();
    for id in params.ids() {
        for i in 0..params.get(id).len() {
            let orig = probe.get(id).data[i];
            probe.get_mut(id).data[i] = orig + eps;
            let up = eval(&probe);
            probe.get_mut(id).data[i] = orig - eps;
            let down = eval(&probe);
            probe.get_mut(id).data[i] = orig;
            coords.push(Coordinate { param: id, index: i, analytic: analytic.get(id)[i], numeric: (up - down) / (2.0 * eps) });
        }
    }
    coords
}

/// Checks the tape gradient of the scalar built by `f` against central
/// differences with step `eps`, over every coordinate of every parameter.
pub fn grad_check<F>(params: &ParamStore, f: F, eps: f64) -> GradCheck
where
    F: Fn(&mut Tape<'_>) -> Var,
{
    let mut report = GradCheck { max_rel_error: 0.0, worst: None, coordinates: 0 };
    for c in gradient_pairs(params, f, eps) {
        report.coordinates += 1;
        let rel = c.rel_error();
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst = Some((c.param, c.index));
        }
    }
    report
}
