#![allow(dead_code)]

use std::f64::consts::PI;

use dixon_core::phantom::PhantomLayout;
use dixon_core::signal::{ComplexVoxelTruth, FatSpectrum};
use dixon_core::volume::default_echo_times_ms;

pub fn echo_times_s(n: usize) -> Vec<f64> {
    default_echo_times_ms(n).iter().map(|t| t * 1e-3).collect()
}

pub fn uniform_layout(dims: [usize; 3], truth: ComplexVoxelTruth) -> PhantomLayout {
    PhantomLayout { dims, voxel_size_mm: [1.0; 3], background: truth, regions: vec![] }
}

#[derive(Debug, Clone, Copy)]
pub struct GridMinimum {
    pub value: f64,
    pub pdff: f64,
    pub r2star: f64,
    pub total: f64,
}

/// Dense grid search of the Gaussian objective over (PDFF, R2*) with the
/// total density solved in closed form at each node. Returns local minima
/// (3x3 neighbourhood) sorted by objective value.
pub fn grid_local_minima(magnitudes: &[f64], times: &[f64], spectrum: &FatSpectrum) -> Vec<GridMinimum> {
    let np = 1001;
    let nr = 1001;
    let c: Vec<(f64, f64)> = times
        .iter()
        .map(|&t| {
            spectrum.peaks().iter().fold((0.0, 0.0), |(re, im), p| {
                let ph = 2.0 * PI * p.f_hz * t;
                (re + p.alpha * ph.cos(), im + p.alpha * ph.sin())
            })
        })
        .collect();
    let mut obj = vec![0.0; np * nr];
    let mut total = vec![0.0; np * nr];
    for i in 0..np {
        let p = i as f64 / (np - 1) as f64;
        for j in 0..nr {
            let r = 0.5 * j as f64;
            let g: Vec<f64> = times
                .iter()
                .zip(&c)
                .map(|(&t, &(re, im))| {
                    let a = (1.0 - p) + p * re;
                    let b = p * im;
                    (a * a + b * b).sqrt() * (-r * t).exp()
                })
                .collect();
            let gm: f64 = g.iter().zip(magnitudes).map(|(g, m)| g * m).sum();
            let gg: f64 = g.iter().map(|g| g * g).sum();
            let s = if gg > 0.0 { (gm / gg).max(0.0) } else { 0.0 };
            obj[i * nr + j] = g.iter().zip(magnitudes).map(|(g, m)| (s * g - m).powi(2)).sum();
            total[i * nr + j] = s;
        }
    }
    let mut minima = Vec::new();
    for i in 0..np {
        for j in 0..nr {
            let v = obj[i * nr + j];
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= np as i64 || b >= nr as i64 {
                        continue;
                    }
                    if obj[a as usize * nr + b as usize] < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                minima.push(GridMinimum {
                    value: v,
                    pdff: i as f64 / (np - 1) as f64,
                    r2star: 0.5 * j as f64,
                    total: total[i * nr + j],
                });
            }
        }
    }
    minima.sort_by(|a, b| a.value.total_cmp(&b.value));
    minima
}

/// Global grid minimum and the best local minimum in the opposite basin
/// (PDFF at least 0.2 away).
pub fn grid_two_basins(magnitudes: &[f64], times: &[f64], spectrum: &FatSpectrum) -> (GridMinimum, GridMinimum) {
    let minima = grid_local_minima(magnitudes, times, spectrum);
    let best = minima[0];
    let other = *minima
        .iter()
        .find(|m| (m.pdff - best.pdff).abs() > 0.2)
        .expect("second basin on the grid");
    (best, other)
}
