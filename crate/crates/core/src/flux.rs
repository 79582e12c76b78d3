//! Flux nonlinearities `A`, their derivatives, and the secant slope
//! `B(u, v) = (A(u) − A(v))/(u − v)` that advects the difference of two
//! solutions.
//!
//! Two structural regimes are tracked per model: component-wise coercivity
//! `A′(u)·sign(u) ≥ α|u| − β` (growth exponent `∞`), and polynomial growth
//! `|A(u)|, |A′(u)| ≤ C(1 + |u|)^𝔞` for finite `𝔞`. Both are verified by
//! sampling since models are plain code.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxKind {
    /// `A ≡ 0`: the heat equation.
    Zero,
    /// `A(u) = c·u`.
    Linear { speed: f64 },
    /// `A(u) = u²/2`.
    Burgers,
    /// `A(u) = α·u²/2`, declared coercive with `(α, β)`.
    CoerciveQuadratic { alpha: f64, beta: f64 },
    /// `A(u) = u³/3`, coercive with `(1, ¼)`.
    Cubic,
    /// `A(u) = sin(u)`; bounded slope, never coercive.
    Sine,
}

/// Coercivity constants `(α, β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coercivity {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxModel {
    kind: FluxKind,
    coercivity: Option<Coercivity>,
    growth_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityReport {
    pub pass: bool,
    /// `min over samples of A′(u)sign(u) − α|u| + β`.
    pub worst_margin: f64,
    pub worst_u: f64,
}

impl FluxModel {
    /// Built-in model by name: `zero`, `linear`, `burgers`,
    /// `coercive_quadratic`, `cubic`, `sine`. `params` are positional
    /// (`linear`: speed; `coercive_quadratic`: α, β).
    pub fn builtin(name: &str, params: &[f64]) -> Result<Self> {
        let need = |k: usize| -> Result<()> {
            if params.len() == k {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!(
                    "`{name}` takes {k} parameter(s), got {}",
                    params.len()
                )))
            }
        };
        match name {
            "zero" => {
                need(0)?;
                Ok(Self::new(FluxKind::Zero))
            }
            "linear" => {
                need(1)?;
                Ok(Self::new(FluxKind::Linear { speed: params[0] }))
            }
            "burgers" => {
                need(0)?;
                Ok(Self::new(FluxKind::Burgers))
            }
            "coercive_quadratic" => {
                need(2)?;
                Self::coercive_quadratic(params[0], params[1])
            }
            "cubic" => {
                need(0)?;
                Ok(Self::new(FluxKind::Cubic))
            }
            "sine" => {
                need(0)?;
                Ok(Self::new(FluxKind::Sine))
            }
            other => Err(Error::InvalidModel(format!("unknown flux model `{other}`"))),
        }
    }

    /// Model with its natural coercivity and growth exponent.
    pub fn new(kind: FluxKind) -> Self {
        let (coercivity, growth_exponent) = match kind {
            FluxKind::Zero => (None, 1.0),
            FluxKind::Linear { .. } => (None, 1.0),
            FluxKind::Burgers => (Some(Coercivity { alpha: 1.0, beta: 0.0 }), 2.0),
            FluxKind::CoerciveQuadratic { alpha, beta } => (Some(Coercivity { alpha, beta }), 2.0),
            FluxKind::Cubic => (Some(Coercivity { alpha: 1.0, beta: 0.25 }), 3.0),
            FluxKind::Sine => (None, 1.0),
        };
        Self {
            kind,
            coercivity,
            growth_exponent,
        }
    }

    pub fn burgers() -> Self {
        Self::new(FluxKind::Burgers)
    }

    pub fn zero() -> Self {
        Self::new(FluxKind::Zero)
    }

    pub fn coercive_quadratic(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidModel(format!("α must be positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidModel(format!("β must be nonnegative, got {beta}")));
        }
        Ok(Self::new(FluxKind::CoerciveQuadratic { alpha, beta }))
    }

    /// Replaces the declared coercivity; the claim is checked by
    /// [`FluxModel::check_coercivity`], not here.
    pub fn with_coercivity(mut self, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) || !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "coercivity needs α > 0, β ≥ 0, got ({alpha}, {beta})"
            )));
        }
        self.coercivity = Some(Coercivity { alpha, beta });
        Ok(self)
    }

    pub fn with_growth_exponent(mut self, exponent: f64) -> Result<Self> {
        if exponent.is_nan() || exponent < 1.0 {
            return Err(Error::InvalidModel(format!(
                "growth exponent must lie in [1, ∞], got {exponent}"
            )));
        }
        self.growth_exponent = exponent;
        Ok(self)
    }

    pub fn kind(&self) -> FluxKind {
        self.kind
    }

    pub fn coercivity(&self) -> Option<Coercivity> {
        self.coercivity
    }

    pub fn growth_exponent(&self) -> f64 {
        self.growth_exponent
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, FluxKind::Zero)
    }

    #[inline]
    pub fn flux(&self, u: f64) -> f64 {
        match self.kind {
            FluxKind::Zero => 0.0,
            FluxKind::Linear { speed } => speed * u,
            FluxKind::Burgers => 0.5 * u * u,
            FluxKind::CoerciveQuadratic { alpha, .. } => 0.5 * alpha * u * u,
            FluxKind::Cubic => u * u * u / 3.0,
            FluxKind::Sine => u.sin(),
        }
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        match self.kind {
            FluxKind::Zero => 0.0,
            FluxKind::Linear { speed } => speed,
            FluxKind::Burgers => u,
            FluxKind::CoerciveQuadratic { alpha, .. } => alpha * u,
            FluxKind::Cubic => u * u,
            FluxKind::Sine => u.cos(),
        }
    }

    /// `sup |A′|` over `[lo, hi]` (arguments may come in either order).
    #[inline]
    pub fn lipschitz_bound_on(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        match self.kind {
            FluxKind::Zero => 0.0,
            FluxKind::Linear { speed } => speed.abs(),
            FluxKind::Burgers => lo.abs().max(hi.abs()),
            FluxKind::CoerciveQuadratic { alpha, .. } => alpha * lo.abs().max(hi.abs()),
            FluxKind::Cubic => (lo * lo).max(hi * hi),
            FluxKind::Sine => {
                // |cos| peaks at multiples of π.
                let k = (lo / std::f64::consts::PI).ceil();
                if k * std::f64::consts::PI <= hi {
                    1.0
                } else {
                    lo.cos().abs().max(hi.cos().abs())
                }
            }
        }
    }

    /// Secant slope `B(a, b)`, symmetric to the last bit. Polynomial models
    /// use the factored difference quotient; `sine` switches to
    /// `A′((a + b)/2)` when `|a − b| ≤ 10⁻⁸(1 + |a| + |b|)`.
    #[inline]
    pub fn secant_slope(&self, a: f64, b: f64) -> f64 {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        match self.kind {
            FluxKind::Zero => 0.0,
            FluxKind::Linear { speed } => speed,
            FluxKind::Burgers => 0.5 * (a + b),
            FluxKind::CoerciveQuadratic { alpha, .. } => 0.5 * alpha * (a + b),
            FluxKind::Cubic => (a * a + a * b + b * b) / 3.0,
            FluxKind::Sine => {
                let eps = 1e-8 * (1.0 + a.abs() + b.abs());
                if (a - b).abs() > eps {
                    let half = 0.5 * (b - a);
                    (0.5 * (a + b)).cos() * half.sin() / half
                } else {
                    self.derivative(0.5 * (a + b))
                }
            }
        }
    }

    /// Samples `A′(u)sign(u) − α|u| + β` on `n_samples` equispaced points.
    pub fn check_coercivity(&self, range: (f64, f64), n_samples: usize) -> Result<CoercivityReport> {
        let Coercivity { alpha, beta } = self.coercivity.ok_or(Error::MissingCoercivity)?;
        let samples = sample_points(range, n_samples)?;
        let mut worst = CoercivityReport {
            pass: true,
            worst_margin: f64::INFINITY,
            worst_u: range.0,
        };
        for u in samples {
            let margin = self.derivative(u) * sign(u) - alpha * u.abs() + beta;
            if margin < worst.worst_margin {
                worst.worst_margin = margin;
                worst.worst_u = u;
            }
        }
        worst.pass = worst.worst_margin >= -1e-9;
        Ok(worst)
    }

    /// Smallest `C` with `max(|A(u)|, |A′(u)|) ≤ C(1 + |u|)^𝔞` on the samples.
    pub fn check_growth(&self, range: (f64, f64), n_samples: usize) -> Result<f64> {
        if self.growth_exponent.is_infinite() {
            return Err(Error::InfiniteGrowth);
        }
        let samples = sample_points(range, n_samples)?;
        Ok(samples
            .map(|u| {
                let w = (1.0 + u.abs()).powf(self.growth_exponent);
                self.flux(u).abs().max(self.derivative(u).abs()) / w
            })
            .fold(0.0, f64::max))
    }
}

/// `sign(0) = 0`, matching the pointwise coercivity statement at the origin.
fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn sample_points(range: (f64, f64), n: usize) -> Result<impl Iterator<Item = f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::InvalidArgument(format!("bad sampling range [{lo}, {hi}]")));
    }
    let h = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(move |i| if i == n - 1 { hi } else { lo + h * i as f64 }))
}
