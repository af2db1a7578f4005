//! Scalar objectives: least-squares adversarial terms, L1 cycle consistency,
//! L1 temporal matching, and the weighted generator total.

use serde::{Deserialize, Serialize};
use tempcycle_autograd::{Graph, Scalar, Var};

use crate::error::{Error, Result};

fn ensure_finite<T: Scalar>(g: &Graph<'_, T>, v: Var, what: &str) -> Result<()> {
    if g.value(v).all_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            component: what.to_string(),
        })
    }
}

fn ensure_same_shape<T: Scalar>(g: &Graph<'_, T>, a: Var, b: Var, what: &str) -> Result<()> {
    if g.value(a).shape() == g.value(b).shape() {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            g.value(a).shape(),
            g.value(b).shape()
        )))
    }
}

/// `mean((x - target)^2)`
fn mean_squared_to<T: Scalar>(g: &mut Graph<'_, T>, x: Var, target: f64) -> Var {
    let d = g.add_scalar(x, -target);
    let s = g.square(d);
    g.mean(s)
}

/// Discriminator objective, already halved:
/// `0.5 * (mean((real - 1)^2) + mean(fake^2))`.
pub fn lsgan_d_loss<T: Scalar>(g: &mut Graph<'_, T>, real: Var, fake: Var) -> Result<Var> {
    ensure_finite(g, real, "real scores")?;
    ensure_finite(g, fake, "fake scores")?;
    let r = mean_squared_to(g, real, 1.0);
    let f = mean_squared_to(g, fake, 0.0);
    let sum = g.add(r, f)?;
    Ok(g.scale(sum, 0.5))
}

/// Generator adversarial objective `mean((fake - 1)^2)`.
pub fn lsgan_g_loss<T: Scalar>(g: &mut Graph<'_, T>, fake: Var) -> Result<Var> {
    ensure_finite(g, fake, "fake scores")?;
    Ok(mean_squared_to(g, fake, 1.0))
}

/// Mean absolute difference of two same-shaped tensors.
pub fn l1<T: Scalar>(g: &mut Graph<'_, T>, a: Var, b: Var) -> Result<Var> {
    ensure_same_shape(g, a, b, "l1")?;
    let d = g.sub(a, b)?;
    let d = g.abs(d);
    Ok(g.mean(d))
}

/// Frame pair held as graph nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairVars {
    pub earlier: Var,
    pub later: Var,
}

impl PairVars {
    pub fn new(earlier: Var, later: Var) -> Self {
        Self { earlier, later }
    }
}

/// `lambda * mean |original - reconstructed|`, averaged over every element of both frames.
pub fn cycle_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    original: PairVars,
    reconstructed: PairVars,
    lambda: f64,
) -> Result<Var> {
    ensure_same_shape(g, original.earlier, reconstructed.earlier, "cycle_loss")?;
    ensure_same_shape(g, original.later, reconstructed.later, "cycle_loss")?;
    ensure_same_shape(g, original.earlier, original.later, "cycle_loss")?;
    let o = g.concat_channels(&[original.earlier, original.later])?;
    let r = g.concat_channels(&[reconstructed.earlier, reconstructed.later])?;
    let m = l1(g, o, r)?;
    Ok(g.scale(m, lambda))
}

/// L1 distance between the two generator runs' outputs for the same time step.
pub fn temporal_match_loss<T: Scalar>(
    g: &mut Graph<'_, T>,
    run1_later: Var,
    run2_earlier: Var,
) -> Result<Var> {
    l1(g, run1_later, run2_earlier)
}

/// Weights of the generator objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Cycle-consistency weight.
    pub lambda: f64,
    /// Temporal matching weight.
    pub mu: f64,
    /// Identity-mapping weight; 0 disables the term.
    pub identity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            mu: 10.0,
            identity: 0.0,
        }
    }
}

/// Unweighted components of the generator objective. Temporal entries are
/// `None` for the per-frame baseline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorTerms<V> {
    pub g_adv: V,
    pub f_adv: V,
    pub g_temp_adv: Option<V>,
    pub f_temp_adv: Option<V>,
    pub cycle_x: V,
    pub cycle_y: V,
    pub temporal_match_x: Option<V>,
    pub temporal_match_y: Option<V>,
    pub identity: Option<V>,
}

impl<V: Copy> GeneratorTerms<V> {
    /// `(name, weight, value)` for every present component.
    pub fn weighted(&self, w: &LossWeights) -> Vec<(&'static str, f64, V)> {
        let mut out = vec![("g_adv", 1.0, self.g_adv), ("f_adv", 1.0, self.f_adv)];
        let optional = [
            ("g_temp_adv", 1.0, self.g_temp_adv),
            ("f_temp_adv", 1.0, self.f_temp_adv),
        ];
        out.extend(optional.into_iter().filter_map(|(n, k, v)| v.map(|v| (n, k, v))));
        out.push(("cycle_x", w.lambda, self.cycle_x));
        out.push(("cycle_y", w.lambda, self.cycle_y));
        let optional = [
            ("temporal_match_x", w.mu, self.temporal_match_x),
            ("temporal_match_y", w.mu, self.temporal_match_y),
            ("identity", w.identity, self.identity),
        ];
        out.extend(optional.into_iter().filter_map(|(n, k, v)| v.map(|v| (n, k, v))));
        out
    }
}

/// Weighted total as a differentiable node:
/// adversarial terms + lambda * (cycle_x + cycle_y) + mu * (temporal matches) + identity.
pub fn assemble_generator_objective_graph<T: Scalar>(
    g: &mut Graph<'_, T>,
    terms: &GeneratorTerms<Var>,
    weights: &LossWeights,
) -> Result<Var> {
    let mut parts = Vec::new();
    for (name, k, v) in terms.weighted(weights) {
        ensure_finite(g, v, name)?;
        parts.push(if k == 1.0 { v } else { g.scale(v, k) });
    }
    Ok(g.sum_all(&parts)?)
}

/// Same total on plain values, producing the per-step report.
pub fn assemble_generator_objective(
    terms: &GeneratorTerms<f64>,
    weights: &LossWeights,
) -> Result<(f64, LossReport)> {
    let mut total = 0.0;
    for (name, k, v) in terms.weighted(weights) {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                component: name.to_string(),
            });
        }
        total += k * v;
    }
    let report = LossReport {
        g_adv: terms.g_adv,
        f_adv: terms.f_adv,
        g_temp_adv: terms.g_temp_adv,
        f_temp_adv: terms.f_temp_adv,
        cycle_x: terms.cycle_x,
        cycle_y: terms.cycle_y,
        temporal_match_x: terms.temporal_match_x,
        temporal_match_y: terms.temporal_match_y,
        identity: terms.identity,
        total_generators: total,
        ..LossReport::default()
    };
    Ok((total, report))
}

/// All objective values of one training step.
///
/// Cycle and temporal-match entries are unweighted; `total_generators`
/// applies `lambda` and `mu`. Temporal entries are empty for the baseline.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub epoch: u32,
    pub g_adv: f64,
    pub f_adv: f64,
    pub g_temp_adv: Option<f64>,
    pub f_temp_adv: Option<f64>,
    pub cycle_x: f64,
    pub cycle_y: f64,
    pub temporal_match_x: Option<f64>,
    pub temporal_match_y: Option<f64>,
    pub identity: Option<f64>,
    pub d_x: f64,
    pub d_y: f64,
    pub d_tx: Option<f64>,
    pub d_ty: Option<f64>,
    pub total_generators: f64,
    pub total_discriminators: f64,
}

/// Loss log column order (schema version 1).
pub const LOSS_LOG_COLUMNS: [&str; 18] = [
    "step",
    "epoch",
    "g_adv",
    "f_adv",
    "g_temp_adv",
    "f_temp_adv",
    "cycle_x",
    "cycle_y",
    "temporal_match_x",
    "temporal_match_y",
    "identity",
    "d_x",
    "d_y",
    "d_tx",
    "d_ty",
    "total_generators",
    "total_discriminators",
    "schema",
];

pub const LOSS_LOG_SCHEMA_VERSION: u32 = 1;

fn cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl LossReport {
    pub fn csv_header() -> String {
        LOSS_LOG_COLUMNS.join(",")
    }

    /// One CSV row; floats use the shortest representation that round-trips.
    pub fn csv_row(&self) -> String {
        [
            self.step.to_string(),
            self.epoch.to_string(),
            self.g_adv.to_string(),
            self.f_adv.to_string(),
            cell(self.g_temp_adv),
            cell(self.f_temp_adv),
            self.cycle_x.to_string(),
            self.cycle_y.to_string(),
            cell(self.temporal_match_x),
            cell(self.temporal_match_y),
            cell(self.identity),
            self.d_x.to_string(),
            self.d_y.to_string(),
            cell(self.d_tx),
            cell(self.d_ty),
            self.total_generators.to_string(),
            self.total_discriminators.to_string(),
            LOSS_LOG_SCHEMA_VERSION.to_string(),
        ]
        .join(",")
    }

    pub fn json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn components(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("g_adv", self.g_adv),
            ("f_adv", self.f_adv),
            ("cycle_x", self.cycle_x),
            ("cycle_y", self.cycle_y),
            ("d_x", self.d_x),
            ("d_y", self.d_y),
            ("total_generators", self.total_generators),
            ("total_discriminators", self.total_discriminators),
        ];
        let optional = [
            ("g_temp_adv", self.g_temp_adv),
            ("f_temp_adv", self.f_temp_adv),
            ("temporal_match_x", self.temporal_match_x),
            ("temporal_match_y", self.temporal_match_y),
            ("identity", self.identity),
            ("d_tx", self.d_tx),
            ("d_ty", self.d_ty),
        ];
        out.extend(optional.into_iter().filter_map(|(n, v)| v.map(|v| (n, v))));
        out
    }

    pub fn is_well_formed(&self) -> bool {
        self.components()
            .iter()
            .all(|(_, v)| v.is_finite() && *v >= 0.0)
    }

    /// Raw cycle reconstruction error of both directions.
    pub fn cycle_error(&self) -> f64 {
        self.cycle_x + self.cycle_y
    }
}
