//! Adaptive Gauss–Kronrod quadrature shared by the moment integrals and the
//! characteristic-function inversion.

use crate::{Error, Result};

/// 15-point Kronrod abscissae on [-1, 1], positive half (x7 = 0).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

/// 15-point Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_23,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// 7-point Gauss weights for the odd-indexed abscissae of `XGK`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_119,
    0.417_959_183_673_469_4,
];

/// One G7/K15 evaluation on [a, b]; returns (kronrod, |kronrod - gauss|).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut k = 0.0;
    let mut g = 0.0;
    for i in 0..8 {
        if XGK[i] == 0.0 {
            let v = f(mid);
            k += WGK[i] * v;
            g += WG[3] * v;
        } else {
            let lo = f(mid - half * XGK[i]);
            let hi = f(mid + half * XGK[i]);
            k += WGK[i] * (lo + hi);
            if i % 2 == 1 {
                g += WG[i / 2] * (lo + hi);
            }
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive integration of `f` over [a, b] to absolute tolerance `abs_tol`.
///
/// `max_panel` caps the width of the initial uniform panels so oscillatory
/// integrands are seeded finely enough for refinement to see them. Each panel
/// is bisected until its error estimate fits its share of the budget.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_panel: Option<f64>,
) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidArgument(format!(
            "bad integration interval [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let len = b - a;
    let n0 = match max_panel {
        Some(w) if w > 0.0 => ((len / w).ceil() as usize).clamp(1, 200_000),
        _ => 1,
    };
    let mut total = 0.0;
    // Stack of (lo, hi, depth); per-panel budget scales with panel length.
    let mut stack: Vec<(f64, f64, u32)> = (0..n0)
        .rev()
        .map(|i| {
            let lo = a + len * i as f64 / n0 as f64;
            let hi = a + len * (i + 1) as f64 / n0 as f64;
            (lo, hi, 0)
        })
        .collect();
    let mut evals: u64 = 0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        evals += 15;
        if evals > 50_000_000 {
            return Err(Error::Quadrature(format!(
                "evaluation budget exhausted on [{a}, {b}]"
            )));
        }
        let share = abs_tol * ((hi - lo) / len).max(1e-300);
        if err <= share || hi - lo <= 1e-15 * len.abs().max(1.0) {
            total += val;
        } else if depth >= 48 {
            return Err(Error::Quadrature(format!(
                "panel [{lo}, {hi}] did not converge (err {err:.3e}, tol {share:.3e})"
            )));
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    Ok(total)
}
