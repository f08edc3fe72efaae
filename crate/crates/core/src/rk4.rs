// Copyright 2026 The chirpmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Fixed-step classical RK4 on a sampled drive.
//!
//! Both the cavity filter and the spin propagator step once per sample
//! interval and need the drive at the interval midpoint, which is
//! reconstructed by four-point interpolation.

use num_complex::Complex64;

/// Drive value halfway between samples `i` and `i + 1`.
#[inline]
pub fn midpoint(samples: &[Complex64], i: usize) -> Complex64 {
    let n = samples.len();
    debug_assert!(i + 1 < n);
    if i >= 1 && i + 2 < n {
        (samples[i] + samples[i + 1]) * 0.5625 - (samples[i - 1] + samples[i + 2]) * 0.0625
    } else if n >= 3 && i == 0 {
        (samples[0] * 3.0 + samples[1] * 6.0 - samples[2]) * 0.125
    } else if n >= 3 {
        (samples[i + 1] * 3.0 + samples[i] * 6.0 - samples[i - 1]) * 0.125
    } else {
        (samples[i] + samples[i + 1]) * 0.5
    }
}

/// One RK4 step of the scalar complex ODE `ẏ = f(u, y)` where the input `u`
/// is given at the start, middle and end of the step.
#[inline]
pub fn step_driven<F>(y: Complex64, h: f64, u0: Complex64, um: Complex64, u1: Complex64, f: F) -> Complex64
where
    F: Fn(Complex64, Complex64) -> Complex64,
{
    let k1 = f(u0, y);
    let k2 = f(um, y + k1 * (0.5 * h));
    let k3 = f(um, y + k2 * (0.5 * h));
    let k4 = f(u1, y + k3 * h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}
