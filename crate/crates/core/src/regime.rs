//! √T-versus-linear regime detection on a mean-deficit curve by BIC model
//! selection.
//!
//! The pure model is y = m₁√T + b₁ (2 parameters). The segmented model uses
//! m₁√T + b₁ below a breakpoint T_k and m₂T + b₂ at or above it, with both
//! pieces fitted independently (5 parameters counting T_k). The score is
//! n·ln(MSE) + λ·p·ln(n).

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_BIC_PENALTY: f64 = 2.0;
pub const MIN_GRID_POINTS: usize = 8;
const PURE_PARAMS: f64 = 2.0;
const SEGMENTED_PARAMS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    PureSqrt,
    Segmented,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::PureSqrt => "pure-sqrt",
            Verdict::Segmented => "segmented",
        }
    }
}

/// Least-squares line y = slope·x + intercept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Residual sum of squares.
    pub sse: f64,
}

impl LineFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares; `None` when the x values are (numerically) constant.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(sxx > 1e-24 * scale * scale * n) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    Some(LineFit { slope, intercept, sse })
}

/// Least-squares coefficient of y = m√T with no intercept.
pub fn sqrt_coefficient(horizons: &[f64], y: &[f64]) -> f64 {
    let num: f64 = horizons.iter().zip(y).map(|(t, v)| t.sqrt() * v).sum();
    let den: f64 = horizons.iter().sum();
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentedFit {
    /// T_k, the first grid point on the linear piece.
    pub breakpoint: f64,
    pub breakpoint_index: usize,
    pub sqrt_piece: LineFit,
    pub linear_piece: LineFit,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakpointReport {
    pub verdict: Verdict,
    /// Pure √T fit; the slope is m₁ on √T.
    pub pure: LineFit,
    pub pure_bic: f64,
    /// Best segmented fit over the candidates, whether or not it won.
    pub best_segmented: Option<SegmentedFit>,
}

impl BreakpointReport {
    /// T_k when the segmented model wins.
    pub fn breakpoint(&self) -> Option<f64> {
        self.winner().map(|s| s.breakpoint)
    }

    fn winner(&self) -> Option<&SegmentedFit> {
        match self.verdict {
            Verdict::Segmented => self.best_segmented.as_ref(),
            Verdict::PureSqrt => None,
        }
    }

    /// (m₁, b₁, m₂, b₂) of the selected model; the linear pair is absent for pure-sqrt.
    pub fn coefficients(&self) -> (f64, f64, Option<f64>, Option<f64>) {
        match self.winner() {
            Some(s) => (
                s.sqrt_piece.slope,
                s.sqrt_piece.intercept,
                Some(s.linear_piece.slope),
                Some(s.linear_piece.intercept),
            ),
            None => (self.pure.slope, self.pure.intercept, None, None),
        }
    }

    /// Selected model's √T fit at `horizon`, and its linear fit where that piece applies.
    pub fn fitted(&self, horizon: f64) -> (f64, Option<f64>) {
        match self.winner() {
            Some(s) => {
                let sqrt = s.sqrt_piece.eval(horizon.sqrt());
                let linear = (horizon >= s.breakpoint).then(|| s.linear_piece.eval(horizon));
                (sqrt, linear)
            }
            None => (self.pure.eval(horizon.sqrt()), None),
        }
    }
}

/// Default candidates: every grid index from the third to the (n−3)rd point,
/// which leaves at least two points on the √T piece and three on the linear one.
pub fn default_candidates(n: usize) -> Vec<usize> {
    if n < 6 {
        return Vec::new();
    }
    (2..=n - 4).collect()
}

fn bic(sse: f64, n: usize, params: f64, lambda: f64, floor: f64) -> f64 {
    let nf = n as f64;
    let mse = (sse / nf).max(floor);
    nf * mse.ln() + lambda * params * nf.ln()
}

/// Chooses between the pure and segmented models on (T, mean D) data.
/// `candidates` are grid indices of the first point of the linear piece.
pub fn detect_regime(
    horizons: &[f64],
    values: &[f64],
    lambda: f64,
    candidates: Option<&[usize]>,
) -> Result<BreakpointReport> {
    if horizons.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: horizons.len(),
            right: values.len(),
        });
    }
    let n = horizons.len();
    if n < MIN_GRID_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_GRID_POINTS,
            got: n,
        });
    }
    if horizons.windows(2).any(|w| !(w[1] > w[0])) || horizons[0] <= 0.0 {
        return Err(Error::validation("horizons", "must be positive and strictly increasing"));
    }
    let roots: Vec<f64> = horizons.iter().map(|t| t.sqrt()).collect();
    let y_scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Keeps ln(MSE) finite on exact data.
    let floor = (1e-12 * y_scale).powi(2).max(f64::MIN_POSITIVE);

    let pure = fit_line(&roots, values).ok_or(Error::DegenerateFit { segment: "pure sqrt" })?;
    let pure_bic = bic(pure.sse, n, PURE_PARAMS, lambda, floor);

    let owned;
    let candidates = match candidates {
        Some(c) => c,
        None => {
            owned = default_candidates(n);
            &owned
        }
    };
    let mut best: Option<SegmentedFit> = None;
    let mut degenerate = None;
    for &k in candidates {
        if k < 2 || k + 2 > n {
            return Err(Error::validation("candidates", format!("index {k} leaves a piece with fewer than 2 points")));
        }
        let Some(sqrt_piece) = fit_line(&roots[..k], &values[..k]) else {
            degenerate = Some("sqrt piece");
            continue;
        };
        let Some(linear_piece) = fit_line(&horizons[k..], &values[k..]) else {
            degenerate = Some("linear piece");
            continue;
        };
        let score = bic(sqrt_piece.sse + linear_piece.sse, n, SEGMENTED_PARAMS, lambda, floor);
        if best.is_none_or(|b| score < b.bic) {
            best = Some(SegmentedFit {
                breakpoint: horizons[k],
                breakpoint_index: k,
                sqrt_piece,
                linear_piece,
                bic: score,
            });
        }
    }
    if best.is_none() {
        if let Some(segment) = degenerate {
            return Err(Error::DegenerateFit { segment });
        }
    }
    let verdict = match best {
        Some(s) if s.bic < pure_bic => Verdict::Segmented,
        _ => Verdict::PureSqrt,
    };
    Ok(BreakpointReport {
        verdict,
        pure,
        pure_bic,
        best_segmented: best,
    })
}
