//! Surface discretization and correlated-field generation.
//!
//! The continuous aperture is integrated on a per-partition midpoint grid so
//! every partition's weights sum exactly to its area. The discrete-surface
//! baseline shares the same fine grid but groups points into λ/2 × λ/2
//! elements, each of which can apply only one phase; the continuous surface
//! is the element-per-point special case.
//!
//! Correlated Rayleigh fields are drawn as F·z with z iid CN(0,1) and
//! F·Fᵀ ≈ R, the sinc Gram matrix of the grid. R is numerically low-rank
//! (bandlimited kernel on a finite aperture), so F comes from a pivoted
//! Cholesky factorization that only ever materializes the pivot columns.

use crate::channel::PartitionLayout;
use crate::special::CorrelationModel;
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::FRAC_1_SQRT_2;

/// One integration point of the discretized surface.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub x: f64,
    pub y: f64,
    /// Cell area in m².
    pub weight: f64,
    /// Partition index the point's phase serves.
    pub partition: usize,
    /// Reconfigurable element the point belongs to.
    pub element: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Continuous surface: every point applies its own phase.
    CrisQuadrature,
    /// λ/2-spaced elements, one phase per element.
    DrisLambdaHalf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub points: Vec<GridPoint>,
    pub kind: GridKind,
    pub element_count: usize,
    pub wavelength: f64,
}

/// Midpoint-rule discretization of the partitioned surface.
///
/// Columns are laid per partition (count = ⌈W_k/resolution⌉) so that
/// Σ weights over partition k equals W_k·H exactly. For the discrete kind the
/// same fine grid integrates the continuum, while elements sit on the exact
/// λ/2 lattice of the full surface; a point's partition then follows its
/// element's center, since the whole element applies one phase.
pub fn build_grid(
    layout: &PartitionLayout,
    kind: GridKind,
    resolution: f64,
    wavelength: f64,
) -> Result<SurfaceGrid> {
    if !(resolution > 0.0) || !(wavelength > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "resolution {resolution} and wavelength {wavelength} must be positive"
        )));
    }
    if resolution > wavelength / 4.0 + 1e-12 * wavelength {
        return Err(Error::ResolutionTooCoarse(format!(
            "resolution {resolution} m exceeds λ/4 = {} m; the correlation is unresolved",
            wavelength / 4.0
        )));
    }
    let h = layout.height;
    let total_w = layout.total_width();
    let nrows = (h / resolution).ceil() as usize;
    let rowh = h / nrows as f64;
    let half = wavelength / 2.0;
    let nex = ((total_w / half) - 1e-9).ceil().max(1.0) as usize;
    let ney = ((h / half) - 1e-9).ceil().max(1.0) as usize;
    let cum: Vec<f64> = layout
        .widths
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let partition_of = |x: f64| -> usize {
        for (k, &edge) in cum.iter().enumerate() {
            if x < edge {
                return k;
            }
        }
        cum.len() - 1
    };

    let mut points = Vec::new();
    let mut x0 = 0.0;
    for (k, &w) in layout.widths.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let ncols = (w / resolution).ceil() as usize;
        let colw = w / ncols as f64;
        for c in 0..ncols {
            let x = x0 + (c as f64 + 0.5) * colw;
            for r in 0..nrows {
                let y = (r as f64 + 0.5) * rowh;
                let (element, partition) = match kind {
                    GridKind::CrisQuadrature => (points.len(), k),
                    GridKind::DrisLambdaHalf => {
                        let ex = ((x / half) as usize).min(nex - 1);
                        let ey = ((y / half) as usize).min(ney - 1);
                        let center_x = ((ex as f64 + 0.5) * half).min(total_w * (1.0 - 1e-12));
                        (ex * ney + ey, partition_of(center_x))
                    }
                };
                points.push(GridPoint {
                    x,
                    y,
                    weight: colw * rowh,
                    partition,
                    element,
                });
            }
        }
        x0 += w;
    }
    let element_count = match kind {
        GridKind::CrisQuadrature => points.len(),
        GridKind::DrisLambdaHalf => nex * ney,
    };
    Ok(SurfaceGrid {
        points,
        kind,
        element_count,
        wavelength,
    })
}

/// Square-root factor F with F·Fᵀ ≈ R, stored as its nonzero columns.
#[derive(Debug, Clone)]
pub enum CorrelationFactor {
    /// Independent points: F = I.
    Identity { n: usize },
    /// Rank-r pivoted Cholesky factor: columns of length n.
    LowRank { n: usize, cols: Vec<Vec<f64>> },
}

impl CorrelationFactor {
    pub fn n(&self) -> usize {
        match self {
            CorrelationFactor::Identity { n } => *n,
            CorrelationFactor::LowRank { n, .. } => *n,
        }
    }

    /// Number of iid inputs a sample needs.
    pub fn rank(&self) -> usize {
        match self {
            CorrelationFactor::Identity { n } => *n,
            CorrelationFactor::LowRank { cols, .. } => cols.len(),
        }
    }

    /// F·z for a complex input of length `rank()`.
    pub fn apply(&self, z: &[Complex64]) -> Vec<Complex64> {
        match self {
            CorrelationFactor::Identity { n } => {
                debug_assert_eq!(z.len(), *n);
                z.to_vec()
            }
            CorrelationFactor::LowRank { n, cols } => {
                debug_assert_eq!(z.len(), cols.len());
                let mut out = vec![Complex64::new(0.0, 0.0); *n];
                for (col, &zv) in cols.iter().zip(z) {
                    for (o, &c) in out.iter_mut().zip(col) {
                        *o += c * zv;
                    }
                }
                out
            }
        }
    }

    /// Dense reconstruction (F·Fᵀ)_{ij}; for verification on small grids.
    pub fn reconstruct(&self, i: usize, j: usize) -> f64 {
        match self {
            CorrelationFactor::Identity { .. } => {
                if i == j {
                    1.0
                } else {
                    0.0
                }
            }
            CorrelationFactor::LowRank { cols, .. } => {
                cols.iter().map(|c| c[i] * c[j]).sum()
            }
        }
    }
}

/// Residual-trace stopping target relative to tr(R) = n.
const FACTOR_TRACE_TOL: f64 = 1e-10;

/// Pivoted Cholesky factorization of the grid's correlation matrix.
///
/// Pivots on the largest residual diagonal; negative residual diagonals
/// (roundoff on the rank-deficient sinc Gram) clip to zero. Stops when the
/// residual trace falls below 1e-10·n, which bounds the Frobenius error of
/// F·Fᵀ − R well inside the 1e-8 relative contract.
pub fn correlation_factor(
    grid: &SurfaceGrid,
    model: &CorrelationModel,
) -> Result<CorrelationFactor> {
    let n = grid.points.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    if matches!(model, CorrelationModel::None) {
        return Ok(CorrelationFactor::Identity { n });
    }
    let dist = |i: usize, j: usize| -> f64 {
        let a = &grid.points[i];
        let b = &grid.points[j];
        (a.x - b.x).hypot(a.y - b.y)
    };
    let mut d = vec![1.0f64; n];
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let tol = FACTOR_TRACE_TOL * n as f64;
    loop {
        // Ties break toward the lower index so the factor is reproducible.
        let mut pivot = 0;
        for (i, &di) in d.iter().enumerate() {
            if di > d[pivot] {
                pivot = i;
            }
        }
        let dm = d[pivot];
        let trace: f64 = d.iter().sum();
        if trace <= tol || dm <= 1e-14 || cols.len() == n {
            break;
        }
        let mut v: Vec<f64> = (0..n)
            .map(|j| {
                if j == pivot {
                    1.0
                } else {
                    model.correlation(dist(j, pivot)).unwrap_or(0.0)
                }
            })
            .collect();
        for col in &cols {
            let cp = col[pivot];
            if cp != 0.0 {
                for (vj, &cj) in v.iter_mut().zip(col) {
                    *vj -= cp * cj;
                }
            }
        }
        let scale = dm.sqrt();
        for vj in v.iter_mut() {
            *vj /= scale;
        }
        for (dj, &vj) in d.iter_mut().zip(&v) {
            *dj = (*dj - vj * vj).max(0.0);
        }
        d[pivot] = 0.0;
        cols.push(v);
    }
    if cols.is_empty() {
        return Err(Error::Factorization(
            "correlation matrix produced an empty factor".into(),
        ));
    }
    Ok(CorrelationFactor::LowRank { n, cols })
}

/// One draw of all fading fields on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    /// UE-side fields, one row per user, one entry per grid point.
    pub h: Vec<Vec<Complex64>>,
    /// Shared BS-side field.
    pub g: Vec<Complex64>,
    pub seed: u64,
}

/// SplitMix64 stream derivation: maps (seed, stream) to independent seeds.
pub fn derived_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(stream)
        .wrapping_add(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn draw_field(factor: &CorrelationFactor, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: Vec<Complex64> = (0..factor.rank())
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect();
    factor.apply(&z)
}

/// Draws K independent UE-side fields and one BS-side field, all CN(0,1)
/// marginally with the grid's spatial correlation. Field f uses the derived
/// seed (seed, f), so the draw is independent of evaluation order.
pub fn sample_channels(factor: &CorrelationFactor, k: usize, seed: u64) -> ChannelSample {
    let g = draw_field(factor, derived_seed(seed, 0));
    let h = (0..k)
        .map(|u| draw_field(factor, derived_seed(seed, 1 + u as u64)))
        .collect();
    ChannelSample { h, g, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PartitionLayout;
    use std::f64::consts::FRAC_2_PI;

    const LAMBDA: f64 = 0.0107;

    #[test]
    fn unit_square_grid_counts_and_area() {
        let layout = PartitionLayout::new(vec![LAMBDA], LAMBDA).unwrap();
        let g = build_grid(&layout, GridKind::CrisQuadrature, LAMBDA / 8.0, LAMBDA).unwrap();
        assert_eq!(g.points.len(), 64);
        assert_eq!(g.element_count, 64);
        let area: f64 = g.points.iter().map(|p| p.weight).sum();
        assert!((area - LAMBDA * LAMBDA).abs() < 1e-12 * LAMBDA * LAMBDA);
    }

    #[test]
    fn partition_weights_are_exact() {
        let layout = PartitionLayout::new(vec![0.75 * LAMBDA, 0.25 * LAMBDA], LAMBDA).unwrap();
        let g = build_grid(&layout, GridKind::CrisQuadrature, LAMBDA / 8.0, LAMBDA).unwrap();
        for (k, &w) in layout.widths.iter().enumerate() {
            let area: f64 = g
                .points
                .iter()
                .filter(|p| p.partition == k)
                .map(|p| p.weight)
                .sum();
            assert!(
                (area - w * layout.height).abs() < 1e-9 * w * layout.height,
                "partition {k}"
            );
        }
        // Column counts in 3:1 ratio (±1 column of rows).
        let n1 = g.points.iter().filter(|p| p.partition == 0).count();
        let n2 = g.points.iter().filter(|p| p.partition == 1).count();
        assert!((n1 as i64 - 3 * n2 as i64).unsigned_abs() <= 8, "{n1} vs {n2}");
    }

    #[test]
    fn dris_element_lattice() {
        let layout = PartitionLayout::new(vec![LAMBDA, LAMBDA], LAMBDA).unwrap();
        let g = build_grid(&layout, GridKind::DrisLambdaHalf, LAMBDA / 8.0, LAMBDA).unwrap();
        assert_eq!(g.element_count, 8);
        for p in &g.points {
            assert!(p.element < 8);
        }
        // Elements left of x = λ belong to partition 0.
        for p in &g.points {
            let ex = p.element / 2;
            assert_eq!(p.partition, if ex < 2 { 0 } else { 1 });
        }
    }

    #[test]
    fn coarse_resolution_rejected() {
        let layout = PartitionLayout::new(vec![LAMBDA], LAMBDA).unwrap();
        let err = build_grid(&layout, GridKind::CrisQuadrature, LAMBDA / 3.0, LAMBDA);
        assert!(matches!(err, Err(Error::ResolutionTooCoarse(_))));
    }

    fn two_point_grid(distance: f64) -> SurfaceGrid {
        SurfaceGrid {
            points: vec![
                GridPoint {
                    x: 0.0,
                    y: 0.0,
                    weight: 1.0,
                    partition: 0,
                    element: 0,
                },
                GridPoint {
                    x: distance,
                    y: 0.0,
                    weight: 1.0,
                    partition: 0,
                    element: 1,
                },
            ],
            kind: GridKind::CrisQuadrature,
            element_count: 2,
            wavelength: LAMBDA,
        }
    }

    #[test]
    fn hand_cholesky_two_points_quarter_wavelength() {
        let grid = two_point_grid(LAMBDA / 4.0);
        let model = CorrelationModel::sinc(LAMBDA);
        let f = correlation_factor(&grid, &model).unwrap();
        let rho = FRAC_2_PI; // sinc(1/2) = 2/π
        match &f {
            CorrelationFactor::LowRank { cols, .. } => {
                assert_eq!(cols.len(), 2);
                assert!((cols[0][0] - 1.0).abs() < 1e-12);
                assert!((cols[0][1] - rho).abs() < 1e-12);
                assert!((cols[1][0]).abs() < 1e-12);
                assert!((cols[1][1] - (1.0 - rho * rho).sqrt()).abs() < 1e-12);
            }
            _ => panic!("expected low-rank factor"),
        }
    }

    #[test]
    fn half_wavelength_points_decorrelate() {
        let grid = two_point_grid(LAMBDA / 2.0);
        let model = CorrelationModel::sinc(LAMBDA);
        let f = correlation_factor(&grid, &model).unwrap();
        assert!((f.reconstruct(0, 1)).abs() < 1e-12);
        assert!((f.reconstruct(0, 0) - 1.0).abs() < 1e-12);
        assert!((f.reconstruct(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn none_model_gives_identity() {
        let layout = PartitionLayout::new(vec![LAMBDA], LAMBDA).unwrap();
        let g = build_grid(&layout, GridKind::CrisQuadrature, LAMBDA / 8.0, LAMBDA).unwrap();
        let f = correlation_factor(&g, &CorrelationModel::None).unwrap();
        assert!(matches!(f, CorrelationFactor::Identity { n: 64 }));
    }

    #[test]
    fn factor_reproduces_gram_matrix() {
        let layout = PartitionLayout::new(vec![LAMBDA], LAMBDA).unwrap();
        let g = build_grid(&layout, GridKind::CrisQuadrature, LAMBDA / 8.0, LAMBDA).unwrap();
        let model = CorrelationModel::sinc(LAMBDA);
        let f = correlation_factor(&g, &model).unwrap();
        let n = g.points.len();
        assert!(f.rank() < n, "rank {} should compress below {n}", f.rank());
        let mut err_sq = 0.0;
        let mut norm_sq = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = &g.points[i];
                let b = &g.points[j];
                let r = model
                    .correlation((a.x - b.x).hypot(a.y - b.y))
                    .unwrap();
                let e = f.reconstruct(i, j) - r;
                err_sq += e * e;
                norm_sq += r * r;
            }
        }
        let rel = (err_sq / norm_sq).sqrt();
        assert!(rel < 1e-8, "Frobenius relative error {rel}");
    }

    #[test]
    fn sampling_is_deterministic_and_marginally_unit_variance() {
        let layout = PartitionLayout::new(vec![LAMBDA], LAMBDA).unwrap();
        let g = build_grid(&layout, GridKind::CrisQuadrature, LAMBDA / 8.0, LAMBDA).unwrap();
        let model = CorrelationModel::sinc(LAMBDA);
        let f = correlation_factor(&g, &model).unwrap();
        let a = sample_channels(&f, 2, 42);
        let b = sample_channels(&f, 2, 42);
        assert_eq!(a, b);
        let c = sample_channels(&f, 2, 43);
        assert_ne!(a, c);

        let draws = 4000;
        let mut pow = 0.0;
        let mut count = 0usize;
        for t in 0..draws {
            let s = sample_channels(&f, 1, derived_seed(9, t));
            for v in &s.h[0] {
                pow += v.norm_sqr();
                count += 1;
            }
        }
        let mean_pow = pow / count as f64;
        // |h|² has unit mean. Points within a draw are correlated, so the
        // estimator is noisier than draws × points suggests; a scale bug
        // (missing 1/√2 on the components) would land at 2.0.
        assert!((mean_pow - 1.0).abs() < 0.05, "mean power {mean_pow}");
    }

    #[test]
    fn empirical_pair_correlation_matches_sinc() {
        let grid = two_point_grid(LAMBDA / 4.0);
        let model = CorrelationModel::sinc(LAMBDA);
        let f = correlation_factor(&grid, &model).unwrap();
        let draws = 20_000;
        let mut acc = Complex64::new(0.0, 0.0);
        for t in 0..draws {
            let s = sample_channels(&f, 1, derived_seed(3, t));
            acc += s.h[0][0] * s.h[0][1].conj();
        }
        let est = acc.re / draws as f64;
        let expect = 2.0 / std::f64::consts::PI;
        assert!((est - expect).abs() < 3.0 / (draws as f64).sqrt(), "est {est}");
    }
}
