// SPDX-License-Identifier: Apache-2.0
//! Adaptive Gauss-Kronrod (7/15) integration on finite intervals.
#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let (f1, f2) = (f(c - h * x), f(c + h * x));
        kronrod += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Panel { a, b, value: kronrod * h, error: ((kronrod - gauss) * h).abs() }
}

/// Integrates `f` over `[a, b]` split into `panels` equal pieces, then bisects
/// the worst panel until `error <= max(abs_tol, rel_tol * |value|)`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, panels: usize, abs_tol: f64, rel_tol: f64) -> Result<Integral>
where
    F: FnMut(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::InvalidParameter(format!("integration range [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0, intervals: 0 });
    }
    let panels = panels.max(1);
    const MAX_PANELS: usize = 20_000;
    let width = (b - a) / panels as f64;
    let mut list: Vec<Panel> = (0..panels)
        .map(|k| {
            let lo = a + width * k as f64;
            let hi = if k + 1 == panels { b } else { lo + width };
            gk15(&mut f, lo, hi)
        })
        .collect();
    loop {
        let value: f64 = list.iter().map(|p| p.value).sum();
        let error: f64 = list.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::Quadrature(value));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error, intervals: list.len() });
        }
        if list.len() >= MAX_PANELS {
            return Err(Error::Quadrature(error));
        }
        let worst = list
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty panel list");
        let p = list.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::Quadrature(error));
        }
        list.push(gk15(&mut f, p.a, mid));
        list.push(gk15(&mut f, mid, p.b));
    }
}
