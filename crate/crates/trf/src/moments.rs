//! Generalized Gaussian moments (d0, d1, d2) of an activation at scale
//! sqrt(tau): closed forms for the built-in activations and a quadrature
//! fallback that needs only pointwise evaluation of sigma.
//!
//! Derivative moments are never formed by differencing sigma. They come from
//! the Stein identities
//!
//! ```text
//!   E[sigma'(sqrt(tau) z)]  = E[z sigma(sqrt(tau) z)] / sqrt(tau)
//!   E[sigma''(sqrt(tau) z)] = E[(z^2 - 1) sigma(sqrt(tau) z)] / tau
//! ```
//!
//! which stay valid for activations whose derivatives only exist as
//! distributions (sign, step, ternary).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Result, TrfError};
use crate::linalg::{tridiag_ql, ZTarget};

pub const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF via erfc, accurate to full double precision.
#[inline]
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Pointwise activation identities. `RffPair` is the stacked [cos, sin]
/// pair; its moments are the sums of the component moments.
#[derive(Clone)]
pub enum ActivationKind {
    ReLU,
    Abs,
    LeakyCombo { a_plus: f64, a_minus: f64 },
    Quadratic { a2: f64, a1: f64, a0: f64 },
    /// sigma(t) = exp(-t^2 / 2)
    GaussianBump,
    Cos,
    Sin,
    Identity,
    Sign,
    /// sigma(t) = 1 for t > 0, else 0
    Step,
    RffPair,
    Ternary { s_minus: f64, s_plus: f64 },
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self}")
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActivationKind::ReLU => write!(f, "relu"),
            ActivationKind::Abs => write!(f, "abs"),
            ActivationKind::LeakyCombo { a_plus, a_minus } => {
                write!(f, "leaky:{a_plus},{a_minus}")
            }
            ActivationKind::Quadratic { a2, a1, a0 } => write!(f, "quadratic:{a2},{a1},{a0}"),
            ActivationKind::GaussianBump => write!(f, "gaussian_bump"),
            ActivationKind::Cos => write!(f, "cos"),
            ActivationKind::Sin => write!(f, "sin"),
            ActivationKind::Identity => write!(f, "identity"),
            ActivationKind::Sign => write!(f, "sign"),
            ActivationKind::Step => write!(f, "step"),
            ActivationKind::RffPair => write!(f, "rff_pair"),
            ActivationKind::Ternary { s_minus, s_plus } => write!(f, "ternary:{s_minus},{s_plus}"),
            ActivationKind::Custom(_) => write!(f, "custom"),
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = TrfError;

    fn from_str(s: &str) -> Result<Self> {
        let (head, args) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let floats = |a: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let a = a.ok_or_else(|| TrfError::invalid(format!("{head} needs {n} parameters")))?;
            let vals: std::result::Result<Vec<f64>, _> =
                a.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| TrfError::invalid(format!("bad parameter in '{a}': {e}")))?;
            if vals.len() != n {
                return Err(TrfError::invalid(format!(
                    "{head} needs {n} parameters, got {}",
                    vals.len()
                )));
            }
            Ok(vals)
        };
        match head {
            "relu" => Ok(ActivationKind::ReLU),
            "abs" => Ok(ActivationKind::Abs),
            "leaky" => {
                let v = floats(args, 2)?;
                Ok(ActivationKind::LeakyCombo {
                    a_plus: v[0],
                    a_minus: v[1],
                })
            }
            "quadratic" => {
                let v = floats(args, 3)?;
                Ok(ActivationKind::Quadratic {
                    a2: v[0],
                    a1: v[1],
                    a0: v[2],
                })
            }
            "gaussian_bump" => Ok(ActivationKind::GaussianBump),
            "cos" => Ok(ActivationKind::Cos),
            "sin" => Ok(ActivationKind::Sin),
            "identity" => Ok(ActivationKind::Identity),
            "sign" => Ok(ActivationKind::Sign),
            "step" => Ok(ActivationKind::Step),
            "rff_pair" => Ok(ActivationKind::RffPair),
            "ternary" => {
                let v = floats(args, 2)?;
                if v[0] > v[1] {
                    return Err(TrfError::invalid("ternary requires s_minus <= s_plus"));
                }
                Ok(ActivationKind::Ternary {
                    s_minus: v[0],
                    s_plus: v[1],
                })
            }
            other => Err(TrfError::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

impl ActivationKind {
    /// Pointwise evaluation. Panics on `RffPair`, which is vector valued;
    /// callers special-case it.
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            ActivationKind::ReLU => t.max(0.0),
            ActivationKind::Abs => t.abs(),
            ActivationKind::LeakyCombo { a_plus, a_minus } => {
                a_plus * t.max(0.0) + a_minus * (-t).max(0.0)
            }
            ActivationKind::Quadratic { a2, a1, a0 } => a2 * t * t + a1 * t + a0,
            ActivationKind::GaussianBump => (-0.5 * t * t).exp(),
            ActivationKind::Cos => t.cos(),
            ActivationKind::Sin => t.sin(),
            ActivationKind::Identity => t,
            ActivationKind::Sign => {
                if t > 0.0 {
                    1.0
                } else if t < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Step => {
                if t > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::RffPair => panic!("RffPair is vector valued; no pointwise eval"),
            ActivationKind::Ternary { s_minus, s_plus } => ternary_eval(t, *s_minus, *s_plus),
            ActivationKind::Custom(f) => f(t),
        }
    }

    pub fn is_custom(&self) -> bool {
        matches!(self, ActivationKind::Custom(_))
    }

    /// The built-in scalar kinds, used by the moments table and the
    /// closed-vs-quadrature sweeps.
    pub fn builtin_table(ternary: (f64, f64)) -> Vec<ActivationKind> {
        vec![
            ActivationKind::Abs,
            ActivationKind::ReLU,
            ActivationKind::LeakyCombo {
                a_plus: 1.0,
                a_minus: 0.25,
            },
            ActivationKind::Quadratic {
                a2: 0.5,
                a1: 1.0,
                a0: -0.5,
            },
            ActivationKind::GaussianBump,
            ActivationKind::Cos,
            ActivationKind::Sin,
            ActivationKind::Identity,
            ActivationKind::Sign,
            ActivationKind::Step,
            ActivationKind::RffPair,
            ActivationKind::Ternary {
                s_minus: ternary.0,
                s_plus: ternary.1,
            },
        ]
    }
}

/// Ternary activation with the fixed boundary convention sigma(s-) =
/// sigma(s+) = 0 (the jump conditions are strict inequalities).
#[inline]
pub fn ternary_eval(t: f64, s_minus: f64, s_plus: f64) -> f64 {
    if t < s_minus {
        -1.0
    } else if t > s_plus {
        1.0
    } else {
        0.0
    }
}

/// Raw Gaussian expectations of sigma at scale sqrt(tau):
/// E[sigma], E[sigma^2], E[sigma'], E[sigma''].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawMoments {
    pub mean: f64,
    pub second: f64,
    pub d_mean: f64,
    pub dd_mean: f64,
}

/// The (d0, d1, d2) fingerprint of an activation at a given tau, plus the
/// raw expectations it was assembled from (absent for the summed RffPair).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMoments {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub tau: f64,
    pub aux: Option<RawMoments>,
}

impl GaussianMoments {
    pub fn from_raw(raw: RawMoments, tau: f64) -> GaussianMoments {
        GaussianMoments {
            d0: raw.second - raw.mean * raw.mean - tau * raw.d_mean * raw.d_mean,
            d1: raw.d_mean * raw.d_mean,
            d2: 0.25 * raw.dd_mean * raw.dd_mean,
            tau,
            aux: Some(raw),
        }
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(TrfError::invalid(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

/// Closed-form moments for every built-in activation.
pub fn moments_closed_form(kind: &ActivationKind, tau: f64) -> Result<GaussianMoments> {
    check_tau(tau)?;
    let s = tau.sqrt();
    let raw = match kind {
        ActivationKind::ReLU => RawMoments {
            mean: s / SQRT_2PI,
            second: tau / 2.0,
            d_mean: 0.5,
            dd_mean: 1.0 / (s * SQRT_2PI),
        },
        ActivationKind::Abs => RawMoments {
            mean: 2.0 * s / SQRT_2PI,
            second: tau,
            d_mean: 0.0,
            dd_mean: 2.0 / (s * SQRT_2PI),
        },
        ActivationKind::LeakyCombo { a_plus, a_minus } => RawMoments {
            mean: (a_plus + a_minus) * s / SQRT_2PI,
            second: (a_plus * a_plus + a_minus * a_minus) * tau / 2.0,
            d_mean: (a_plus - a_minus) / 2.0,
            dd_mean: (a_plus + a_minus) / (s * SQRT_2PI),
        },
        ActivationKind::Quadratic { a2, a1, a0 } => RawMoments {
            mean: a2 * tau + a0,
            second: 3.0 * a2 * a2 * tau * tau + a1 * a1 * tau + a0 * a0 + 2.0 * a2 * a0 * tau,
            d_mean: *a1,
            dd_mean: 2.0 * a2,
        },
        ActivationKind::GaussianBump => RawMoments {
            mean: 1.0 / (1.0 + tau).sqrt(),
            second: 1.0 / (1.0 + 2.0 * tau).sqrt(),
            d_mean: 0.0,
            dd_mean: -(1.0 + tau).powf(-1.5),
        },
        ActivationKind::Cos => RawMoments {
            mean: (-tau / 2.0).exp(),
            second: (1.0 + (-2.0 * tau).exp()) / 2.0,
            d_mean: 0.0,
            dd_mean: -(-tau / 2.0).exp(),
        },
        ActivationKind::Sin => RawMoments {
            mean: 0.0,
            second: (1.0 - (-2.0 * tau).exp()) / 2.0,
            d_mean: (-tau / 2.0).exp(),
            dd_mean: 0.0,
        },
        ActivationKind::Identity => RawMoments {
            mean: 0.0,
            second: tau,
            d_mean: 1.0,
            dd_mean: 0.0,
        },
        ActivationKind::Sign => RawMoments {
            mean: 0.0,
            second: 1.0,
            d_mean: 2.0 / (s * SQRT_2PI),
            dd_mean: 0.0,
        },
        ActivationKind::Step => RawMoments {
            mean: 0.5,
            second: 0.5,
            d_mean: 1.0 / (s * SQRT_2PI),
            dd_mean: 0.0,
        },
        ActivationKind::Ternary { s_minus, s_plus } => {
            return moments_ternary_closed(*s_minus, *s_plus, tau);
        }
        ActivationKind::RffPair => {
            let c = moments_closed_form(&ActivationKind::Cos, tau)?;
            let sn = moments_closed_form(&ActivationKind::Sin, tau)?;
            return Ok(GaussianMoments {
                d0: c.d0 + sn.d0,
                d1: c.d1 + sn.d1,
                d2: c.d2 + sn.d2,
                tau,
                aux: None,
            });
        }
        ActivationKind::Custom(_) => {
            return Err(TrfError::Unsupported(
                "no closed form for a custom activation; use moments_quadrature".into(),
            ));
        }
    };
    Ok(GaussianMoments::from_raw(raw, tau))
}

/// Moments of the ternary activation from the weak-derivative closed form.
///
/// With a = s-/sqrt(tau), b = s+/sqrt(tau), Phi the standard normal CDF and
/// phi its density:
///
/// ```text
///   E[sigma]    = 1 - Phi(b) - Phi(a)
///   E[sigma^2]  = Phi(a) + 1 - Phi(b)
///   E[sigma']   = (phi(a) + phi(b)) / sqrt(tau)
///   E[sigma'']  = (s- phi(a) + s+ phi(b)) / tau^(3/2)
/// ```
pub fn moments_ternary_closed(s_minus: f64, s_plus: f64, tau: f64) -> Result<GaussianMoments> {
    check_tau(tau)?;
    if s_minus > s_plus {
        return Err(TrfError::invalid(format!(
            "ternary thresholds out of order: {s_minus} > {s_plus}"
        )));
    }
    let s = tau.sqrt();
    let a = s_minus / s;
    let b = s_plus / s;
    let raw = RawMoments {
        mean: 1.0 - std_normal_cdf(b) - std_normal_cdf(a),
        second: std_normal_cdf(a) + 1.0 - std_normal_cdf(b),
        d_mean: (std_normal_pdf(a) + std_normal_pdf(b)) / s,
        dd_mean: (s_minus * std_normal_pdf(a) + s_plus * std_normal_pdf(b)) / (tau * s),
    };
    Ok(GaussianMoments::from_raw(raw, tau))
}

/// Alternative printed closed form for the ternary (d1, d2) occasionally
/// found in reference material:
///
/// ```text
///   d1 = (1/pi^2)        (exp(-s+^2/tau) + exp(-s-^2/tau))^2
///   d2 = (1/(2 pi tau^3)) (s+ exp(-s+^2/tau) + s- exp(-s-^2/tau))^2
/// ```
///
/// It disagrees with the weak-derivative computation of
/// [`moments_ternary_closed`] in both constants and exponent scaling (at
/// s- = s+ = 0, tau = 1 it yields d1 = 4/pi^2 instead of 2/pi, the value the
/// sign activation must reproduce). Retained verbatim for comparison only;
/// nothing in the calibration pipeline consumes it.
pub fn ternary_d_moments_compat(s_minus: f64, s_plus: f64, tau: f64) -> (f64, f64) {
    let pi = std::f64::consts::PI;
    let ep = (-s_plus * s_plus / tau).exp();
    let em = (-s_minus * s_minus / tau).exp();
    let d1 = (ep + em).powi(2) / (pi * pi);
    let d2 = (s_plus * ep + s_minus * em).powi(2) / (2.0 * pi * tau.powi(3));
    (d1, d2)
}

// ---------------------------------------------------------------------------
// Gauss-Hermite rule (probabilists' convention: weights sum to 1 and
// integrate against the standard normal density).
// ---------------------------------------------------------------------------

type NodesWeights = Arc<(Vec<f64>, Vec<f64>)>;

fn gh_cache() -> &'static Mutex<HashMap<usize, NodesWeights>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, NodesWeights>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Nodes and normalized weights of the n-point Gauss-Hermite rule, built by
/// Golub-Welsch on the Jacobi matrix (zero diagonal, sqrt(k) off-diagonal)
/// and cached per node count.
pub fn gauss_hermite(n: usize) -> Result<NodesWeights> {
    if n == 0 {
        return Err(TrfError::invalid("quadrature needs at least one node"));
    }
    if let Some(hit) = gh_cache().lock().unwrap().get(&n) {
        return Ok(hit.clone());
    }
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = (0..n)
        .map(|i| if i + 1 < n { ((i + 1) as f64).sqrt() } else { 0.0 })
        .collect();
    let mut row = vec![0.0f64; n];
    row[0] = 1.0;
    tridiag_ql(&mut d, &mut e, ZTarget::Row(&mut row))?;
    let weights: Vec<f64> = row.iter().map(|v| v * v).collect();
    let out: NodesWeights = Arc::new((d, weights));
    gh_cache().lock().unwrap().insert(n, out.clone());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Quadrature path
// ---------------------------------------------------------------------------

/// The four base integrals, in x-space against the standard normal density:
/// [ E sigma(s x), E sigma^2(s x), E x sigma(s x), E (x^2 - 1) sigma(s x) ].
#[derive(Debug, Clone, Copy, Default)]
struct BaseIntegrals([f64; 4]);

impl BaseIntegrals {
    fn max_abs_diff(&self, other: &BaseIntegrals) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }
}

fn gh_base<F: Fn(f64) -> f64>(sigma: &F, s: f64, nodes: usize) -> Result<BaseIntegrals> {
    let nw = gauss_hermite(nodes)?;
    let (xs, ws) = (&nw.0, &nw.1);
    let mut acc = [0.0f64; 4];
    for (i, (&x, &w)) in xs.iter().zip(ws.iter()).enumerate() {
        let v = sigma(s * x);
        if !v.is_finite() {
            return Err(TrfError::Eval { node: i, x: s * x });
        }
        acc[0] += w * v;
        acc[1] += w * v * v;
        acc[2] += w * x * v;
        acc[3] += w * (x * x - 1.0) * v;
    }
    Ok(BaseIntegrals(acc))
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule
// (QUADPACK qk15 constants).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

struct Panel {
    a: f64,
    b: f64,
    value: BaseIntegrals,
    err: f64,
}

/// Lagrange basis of the 15 Kronrod nodes evaluated at the panel endpoints
/// -1 and +1, in the fvals layout (2j = -XGK[j], 2j+1 = +XGK[j], 14 = 0).
/// Used to extrapolate the interior node data to the endpoints: a mismatch
/// with the actual endpoint value reveals a jump hiding in the node-free
/// gap next to the edge, where the Kronrod and Gauss rules would otherwise
/// agree on the wrong answer.
fn edge_extrapolation_coeffs() -> &'static ([f64; 15], [f64; 15]) {
    static COEFFS: OnceLock<([f64; 15], [f64; 15])> = OnceLock::new();
    COEFFS.get_or_init(|| {
        let mut xi = [0.0f64; 15];
        for j in 0..7 {
            xi[2 * j] = -XGK[j];
            xi[2 * j + 1] = XGK[j];
        }
        xi[14] = 0.0;
        let lagrange_at = |t: f64| -> [f64; 15] {
            let mut c = [0.0f64; 15];
            for j in 0..15 {
                let mut prod = 1.0;
                for k in 0..15 {
                    if k != j {
                        prod *= (t - xi[k]) / (xi[j] - xi[k]);
                    }
                }
                c[j] = prod;
            }
            c
        };
        (lagrange_at(-1.0), lagrange_at(1.0))
    })
}

fn gk15_panel<F: Fn(f64) -> f64>(
    sigma: &F,
    s: f64,
    a: f64,
    b: f64,
    evals: &mut usize,
) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut fvals = [[0.0f64; 4]; 15];
    let eval_at = |x: f64, evals: &mut usize| -> Result<[f64; 4]> {
        let v = sigma(s * x);
        if !v.is_finite() {
            return Err(TrfError::Eval {
                node: *evals,
                x: s * x,
            });
        }
        *evals += 1;
        let pdf = std_normal_pdf(x);
        Ok([v * pdf, v * v * pdf, v * x * pdf, v * (x * x - 1.0) * pdf])
    };
    // nodes 2j / 2j+1 are the +/- pair for XGK[j]; node 14 is the center
    for j in 0..7 {
        fvals[2 * j] = eval_at(center - half * XGK[j], evals)?;
        fvals[2 * j + 1] = eval_at(center + half * XGK[j], evals)?;
    }
    fvals[14] = eval_at(center, evals)?;
    let f_lo = eval_at(a, evals)?;
    let f_hi = eval_at(b, evals)?;
    let (c_lo, c_hi) = edge_extrapolation_coeffs();
    // width of the node-free gap between the outermost node and the edge
    let edge_gap = half * (1.0 - XGK[0]);

    let mut value = BaseIntegrals::default();
    let mut err = 0.0f64;
    for i in 0..4 {
        let mut resk = WGK[7] * fvals[14][i];
        let mut resg = WG[3] * fvals[14][i];
        for j in 0..7 {
            let pair = fvals[2 * j][i] + fvals[2 * j + 1][i];
            resk += WGK[j] * pair;
            if j % 2 == 1 {
                // XGK[1], XGK[3], XGK[5] are the embedded Gauss-7 nodes
                resg += WG[j / 2] * pair;
            }
        }
        // QUADPACK-style error model: inflate a suspiciously small
        // Kronrod-Gauss difference by the panel's variation, so panels
        // hiding a jump keep getting refined.
        let reskh = resk * 0.5;
        let mut resasc = WGK[7] * (fvals[14][i] - reskh).abs();
        for j in 0..7 {
            resasc += WGK[j]
                * ((fvals[2 * j][i] - reskh).abs() + (fvals[2 * j + 1][i] - reskh).abs());
        }
        resasc *= half;
        let mut abserr = ((resk - resg) * half).abs();
        if resasc != 0.0 && abserr != 0.0 {
            abserr = resasc * 1.0f64.min((200.0 * abserr / resasc).powf(1.5));
        }
        // blind-spot floor: endpoint values vs node extrapolation
        let mut ext_lo = 0.0;
        let mut ext_hi = 0.0;
        for j in 0..15 {
            ext_lo += c_lo[j] * fvals[j][i];
            ext_hi += c_hi[j] * fvals[j][i];
        }
        let floor = edge_gap * ((f_lo[i] - ext_lo).abs() + (f_hi[i] - ext_hi).abs());
        value.0[i] = half * resk;
        err = err.max(abserr.max(floor));
    }
    Ok(Panel { a, b, value, err })
}

/// Globally adaptive Gauss-Kronrod evaluation of the base integrals over
/// [-L, L], refining the worst panel until the summed error estimate drops
/// below `tol`. Jumps and kinks in sigma localize into ever-smaller panels,
/// so discontinuous activations converge where a fixed rule stalls.
fn adaptive_base<F: Fn(f64) -> f64>(
    sigma: &F,
    s: f64,
    initial_panels: usize,
    tol: f64,
    max_panels: usize,
) -> Result<BaseIntegrals> {
    const L: f64 = 12.0;
    let mut panels: Vec<Panel> = Vec::with_capacity(max_panels.min(4096));
    let mut evals = 0usize;
    let step = 2.0 * L / initial_panels as f64;
    for i in 0..initial_panels {
        let a = -L + i as f64 * step;
        let b = if i + 1 == initial_panels { L } else { a + step };
        panels.push(gk15_panel(sigma, s, a, b, &mut evals)?);
    }
    loop {
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        if total_err <= tol || panels.len() >= max_panels {
            break;
        }
        // worst panel, ties broken by the leftmost interval for determinism
        let mut worst = 0usize;
        for (i, p) in panels.iter().enumerate() {
            if p.err > panels[worst].err
                || (p.err == panels[worst].err && p.a < panels[worst].a)
            {
                worst = i;
            }
        }
        let Panel { a, b, .. } = panels[worst];
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // panel at floating-point resolution; its residual mass is below
            // machine noise, stop refining it
            panels[worst].err = 0.0;
            continue;
        }
        let left = gk15_panel(sigma, s, a, mid, &mut evals)?;
        let right = gk15_panel(sigma, s, mid, b, &mut evals)?;
        panels[worst] = left;
        panels.push(right);
    }
    // fixed summation order: by left endpoint
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap());
    let mut out = BaseIntegrals::default();
    for p in &panels {
        for i in 0..4 {
            out.0[i] += p.value.0[i];
        }
    }
    Ok(out)
}

/// Gaussian moments of an arbitrary pointwise activation by quadrature.
///
/// The Gauss-Hermite rule with `nodes` points is the base evaluator. When a
/// half-node rule disagrees with it (the signature of a kink or jump in
/// sigma, which fixed Gaussian rules resolve only at O(1/n) rates), the
/// computation switches to adaptive Gauss-Kronrod panels that localize the
/// roughness and push the error to the 1e-12 scale.
pub fn moments_quadrature<F: Fn(f64) -> f64>(
    sigma: F,
    tau: f64,
    nodes: usize,
) -> Result<GaussianMoments> {
    check_tau(tau)?;
    if nodes < 32 {
        return Err(TrfError::invalid(format!(
            "quadrature needs at least 32 nodes, got {nodes}"
        )));
    }
    let s = tau.sqrt();
    let hi = gh_base(&sigma, s, nodes)?;
    let lo = gh_base(&sigma, s, nodes / 2)?;
    let scale = 1.0 + hi.0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let base = if hi.max_abs_diff(&lo) <= 1e-11 * scale {
        hi
    } else {
        let tol = 5e-13 * scale;
        adaptive_base(&sigma, s, (nodes / 8).max(8), tol, 64 * nodes)?
    };
    let raw = RawMoments {
        mean: base.0[0],
        second: base.0[1],
        d_mean: base.0[2] / s,
        dd_mean: base.0[3] / tau,
    };
    Ok(GaussianMoments::from_raw(raw, tau))
}

/// Quadrature moments for an `ActivationKind`, summing components for the
/// [cos, sin] pair.
pub fn moments_quadrature_kind(
    kind: &ActivationKind,
    tau: f64,
    nodes: usize,
) -> Result<GaussianMoments> {
    match kind {
        ActivationKind::RffPair => {
            let c = moments_quadrature(|t| t.cos(), tau, nodes)?;
            let sn = moments_quadrature(|t| t.sin(), tau, nodes)?;
            Ok(GaussianMoments {
                d0: c.d0 + sn.d0,
                d1: c.d1 + sn.d1,
                d2: c.d2 + sn.d2,
                tau,
                aux: None,
            })
        }
        k => {
            let k = k.clone();
            moments_quadrature(move |t| k.eval(t), tau, nodes)
        }
    }
}
