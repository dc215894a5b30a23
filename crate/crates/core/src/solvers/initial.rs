use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};

use crate::error::{Error, Result};
use crate::field::{idft, Grid, PeriodicField, ScalarSampler, Spectrum};

/// `ω0 = Σ_{0<|k|≤K} a_k cos(k·x) + b_k sin(k·x)` with `a_k, b_k ~ U[-1, 1]`.
///
/// Each wavevector pair `±k` appears once. Coefficients are drawn in a fixed
/// order from a ChaCha8 stream, so the field depends only on `(K, seed)` and
/// not on the grid.
pub fn random_vorticity(grid: Grid, k_max: usize, seed: u64) -> Result<PeriodicField> {
    if k_max == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    if 2 * k_max >= grid.nx().min(grid.ny()) {
        return Err(Error::Domain(format!(
            "K = {k_max} is not resolved on a {}x{} grid",
            grid.nx(),
            grid.ny()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = Spectrum::zeros(grid);
    let k = k_max as i64;
    for ky in 0..=k {
        for kx in -k..=k {
            if ky == 0 && kx <= 0 {
                continue;
            }
            if kx * kx + ky * ky > k * k {
                continue;
            }
            let a: f64 = rng.gen_range(-1.0..=1.0);
            let b: f64 = rng.gen_range(-1.0..=1.0);
            let c = Complex64::new(0.5 * a, -0.5 * b);
            spec.set(kx, ky, c);
            spec.set(-kx, -ky, c.conj());
        }
    }
    Ok(idft(&spec))
}

/// Indicator of a disc with a rectangular slot cut upwards from its bottom
/// edge, evaluated with periodic distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlottedCylinder {
    pub center: [f64; 2],
    pub radius: f64,
    pub slot_width: f64,
    pub slot_depth: f64,
}

impl Default for SlottedCylinder {
    fn default() -> Self {
        Self {
            center: [PI, PI],
            radius: 1.2,
            slot_width: 0.3,
            slot_depth: 1.0,
        }
    }
}

pub fn slotted_cylinder(
    center: [f64; 2],
    radius: f64,
    slot_width: f64,
    slot_depth: f64,
) -> Result<SlottedCylinder> {
    if !(radius > 0.0 && radius < PI) {
        return Err(Error::Domain(format!("radius must lie in (0, π), got {radius}")));
    }
    if !(slot_width >= 0.0 && slot_depth >= 0.0) || !center.iter().all(|c| c.is_finite()) {
        return Err(Error::Domain("slot dimensions must be nonnegative".into()));
    }
    Ok(SlottedCylinder {
        center,
        radius,
        slot_width,
        slot_depth,
    })
}

#[inline]
fn periodic_offset(a: f64, b: f64) -> f64 {
    (a - b + PI).rem_euclid(2.0 * PI) - PI
}

impl ScalarSampler for SlottedCylinder {
    fn sample(&self, p: [f64; 2]) -> f64 {
        let dx = periodic_offset(p[0], self.center[0]);
        let dy = periodic_offset(p[1], self.center[1]);
        if dx * dx + dy * dy > self.radius * self.radius {
            return 0.0;
        }
        let in_slot = dx.abs() < 0.5 * self.slot_width && dy < -self.radius + self.slot_depth;
        if in_slot {
            0.0
        } else {
            1.0
        }
    }
}

/// Initial condition given as an expression in `x`, `y` (and `pi`), e.g.
/// `math::sin(x) * math::cos(2 * y)`. Functions use the `evalexpr` names.
#[derive(Debug, Clone)]
pub struct ExpressionField {
    source: String,
    tree: Node<DefaultNumericTypes>,
}

impl ExpressionField {
    pub fn parse(source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Config(format!("cannot parse expression {source:?}: {e}")))?;
        let f = Self {
            source: source.to_string(),
            tree,
        };
        f.try_eval([0.3, 0.7])?;
        Ok(f)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn try_eval(&self, p: [f64; 2]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (name, v) in [("x", p[0]), ("y", p[1]), ("pi", PI)] {
            ctx.set_value(name.into(), Value::Float(v))
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        let v = self
            .tree
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::Config(format!("cannot evaluate {:?}: {e}", self.source)))?;
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "{:?} is not finite at ({}, {})",
                self.source, p[0], p[1]
            )));
        }
        Ok(v)
    }

    pub fn sample_grid(&self, grid: Grid) -> Result<PeriodicField> {
        let values = grid.vertices().into_iter().map(|p| self.try_eval(p)).collect::<Result<Vec<_>>>()?;
        PeriodicField::new(grid, 1, values)
    }
}

impl ScalarSampler for ExpressionField {
    fn sample(&self, p: [f64; 2]) -> f64 {
        self.try_eval(p).unwrap_or(f64::NAN)
    }
}
