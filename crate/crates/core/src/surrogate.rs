//! Bounding functions used by the SCA subproblems.
//!
//! Every position-dependent power term in this crate is a trigonometric sum
//! `c + Σ aᵢ·cos(ωᵢx + φᵢ)` with `aᵢ ≥ 0`, so its second derivative is
//! bounded in magnitude by `δ = Σ aᵢωᵢ²`. Second-order Taylor expansions with
//! `∓δ/2` curvature then give global minorants and majorants.

/// One term `amp·cos(freq·x + phase)`, `amp ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub freq: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigSum {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

impl TrigSum {
    pub fn value(&self, x: f64) -> f64 {
        self.terms.iter().fold(self.constant, |acc, t| {
            acc + t.amp * (t.freq * x + t.phase).cos()
        })
    }

    pub fn first(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amp * t.freq * (t.freq * x + t.phase).sin())
            .sum()
    }

    pub fn second(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amp * t.freq * t.freq * (t.freq * x + t.phase).cos())
            .sum()
    }

    /// Bound on `|d²/dx²|` valid for every `x`.
    pub fn curvature_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amp * t.freq * t.freq).sum()
    }

    pub fn scaled(&self, k: f64) -> TrigSum {
        assert!(k >= 0.0);
        TrigSum {
            constant: self.constant * k,
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm {
                    amp: t.amp * k,
                    ..*t
                })
                .collect(),
        }
    }

    /// Sum of two trigonometric sums (terms are concatenated).
    pub fn plus(&self, other: &TrigSum) -> TrigSum {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        TrigSum {
            constant: self.constant + other.constant,
            terms,
        }
    }

    pub fn expand(&self, at: f64) -> Taylor {
        Taylor {
            at,
            value: self.value(at),
            slope: self.first(at),
            delta: self.curvature_bound(),
        }
    }
}

/// Quadratic model `value + slope·(x−at) ± (δ/2)(x−at)²` about `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Taylor {
    pub at: f64,
    pub value: f64,
    pub slope: f64,
    pub delta: f64,
}

impl Taylor {
    pub fn lower(&self, x: f64) -> f64 {
        let d = x - self.at;
        self.value + self.slope * d - 0.5 * self.delta * d * d
    }

    pub fn upper(&self, x: f64) -> f64 {
        let d = x - self.at;
        self.value + self.slope * d + 0.5 * self.delta * d * d
    }

    /// Sum of models sharing the same expansion point.
    pub fn sum<'a>(at: f64, parts: impl IntoIterator<Item = &'a Taylor>) -> Taylor {
        parts.into_iter().fold(
            Taylor {
                at,
                value: 0.0,
                slope: 0.0,
                delta: 0.0,
            },
            |acc, t| {
                debug_assert_eq!(t.at, at);
                Taylor {
                    at,
                    value: acc.value + t.value,
                    slope: acc.slope + t.slope,
                    delta: acc.delta + t.delta,
                }
            },
        )
    }
}

/// `½(bⁱ/aⁱ·a² + aⁱ/bⁱ·b²) ≥ a·b` for positive local points.
pub fn product_upper(a: f64, b: f64, a_i: f64, b_i: f64) -> f64 {
    0.5 * (b_i / a_i * a * a + a_i / b_i * b * b)
}

/// Tangent of `2^w − 1` at `w_i`, a global minorant.
pub fn exp2_minus_one_tangent(w: f64, w_i: f64) -> f64 {
    let p = w_i.exp2();
    p - 1.0 + p * (w - w_i) * std::f64::consts::LN_2
}

/// Tangent of `e^β` at `β_i`, a global minorant.
pub fn exp_tangent(beta: f64, beta_i: f64) -> f64 {
    let e = beta_i.exp();
    beta * e + (1.0 - beta_i) * e
}

/// `(1 + ln ζ + ln β − ln ζⁱ − ln βⁱ)·ζⁱβⁱ ≤ ζβ` for positive arguments.
pub fn product_log_lower(zeta: f64, beta: f64, zeta_i: f64, beta_i: f64) -> f64 {
    (1.0 + zeta.ln() + beta.ln() - zeta_i.ln() - beta_i.ln()) * zeta_i * beta_i
}
