//! Independent high-precision evaluation of the link budget and secure gain,
//! written from the closed-form definitions in 120-bit MPFR arithmetic. It
//! shares no code with the library.

use rug::ops::Pow;
use rug::Float;

const PRECISION: u32 = 120;

fn f(x: f64) -> Float {
    Float::with_val(PRECISION, x)
}

#[derive(Debug, Clone, Copy)]
pub struct Inputs {
    pub mu: f64,
    pub length_km: f64,
    pub alpha: f64,
    pub efficiency: f64,
    pub dark_prob: f64,
    pub modulation_error: f64,
    pub f_ec: f64,
    pub exact_multiphoton: bool,
}

/// Oracle values rounded to f64 at the very end.
#[derive(Debug, Clone, Copy)]
pub struct Outputs {
    pub transmission: f64,
    pub detect: f64,
    pub multiphoton: f64,
    pub qber: f64,
    pub entropy: f64,
    /// `(P - S) / P`, the single-photon share of detections.
    pub beta: f64,
    /// `None` when P <= S or the effective error reaches one half.
    pub pa_fraction: Option<f64>,
    pub gain: f64,
    /// Magnitude of the terms making up the gain, `P/2 (|tau| + f H)`.
    pub gain_scale: f64,
}

pub fn evaluate(x: &Inputs) -> Outputs {
    let log2 = |v: &Float| v.clone().log2();
    let half = f(0.5);

    let exponent = -(f(x.alpha) * f(x.length_km)) / 10u32;
    let t = Float::with_val(PRECISION, 10u32).pow(&exponent);
    let mu = f(x.mu);
    let signal = mu.clone() * f(x.efficiency) * &t;
    let d = f(x.dark_prob);
    let p = signal.clone() + &d;
    let s = if x.exact_multiphoton {
        1u32 - (-mu.clone()).exp() * (1u32 + mu.clone())
    } else {
        mu.clone().square() / 2u32
    };
    let e = (f(x.modulation_error) * signal + d / 2u32) / &p;
    let h = if e.is_zero() {
        f(0.0)
    } else {
        let q = 1u32 - e.clone();
        -(e.clone() * log2(&e) + q.clone() * log2(&q))
    };
    let beta = (p.clone() - &s) / &p;
    let tau = if p <= s {
        None
    } else {
        let e_eff = e.clone() / &beta;
        if e_eff >= half {
            None
        } else {
            let arg = 1u32 + 4u32 * e_eff.clone() - 4u32 * e_eff.square();
            Some(beta.clone() * (1u32 - log2(&arg)))
        }
    };
    let fh = f(x.f_ec) * &h;
    let tau_v = tau.clone().unwrap_or_else(|| f(0.0));
    let gain = p.clone() / 2u32 * (tau_v.clone() - &fh);
    let scale = p.clone() / 2u32 * (tau_v.abs() + &fh);
    Outputs {
        transmission: t.to_f64(),
        detect: p.to_f64(),
        multiphoton: s.to_f64(),
        qber: e.to_f64(),
        entropy: h.to_f64(),
        beta: beta.to_f64(),
        pa_fraction: tau.map(|v| v.to_f64()),
        gain: gain.to_f64(),
        gain_scale: scale.to_f64(),
    }
}
