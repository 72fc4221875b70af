//! Discretised test operators, phantoms, and perturbation models.
//!
//! Clean problems are normalised so that `‖A‖₂ = 1` and `‖x†‖ = 1`.
//! Perturbations are scaled so the realised operator error and data error
//! equal their relative targets exactly (up to rounding).

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite_matrix, spectral_norm, DenseMatrix, Vector};
use crate::rng::{gaussian_matrix, gaussian_vector, seeded};

/// Clean operator, exact solution and exact data.
#[derive(Debug, Clone)]
pub struct TestProblem {
    pub name: String,
    pub a_clean: DenseMatrix,
    pub x_true: Vector,
    pub y_clean: Vector,
}

/// Direction of the operator perturbation `ΔA`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PerturbationKind {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// The Volterra heat matrix of matching size.
    Heat,
    /// A random-ray tomography matrix on a `grid_n × grid_n` image.
    Tomo { grid_n: usize, oversampling: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub eta_rel: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, eta_rel: f64, seed: u64) -> Result<Self> {
        if !(eta_rel > 0.0 && eta_rel < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "relative operator error must lie in (0, 1), got {eta_rel}"
            )));
        }
        Ok(PerturbationSpec { kind, eta_rel, seed })
    }
}

/// Perturbed operator and data with the realised error levels.
#[derive(Debug, Clone)]
pub struct NoisyInstance {
    pub a_noisy: DenseMatrix,
    pub y_noisy: Vector,
    /// `‖A_η - A‖₂`.
    pub eta: f64,
    /// `‖y_δ - y‖`.
    pub delta: f64,
    pub op_seed: u64,
    pub data_seed: u64,
}

/// Scales `a` and `x` to unit norm and recomputes `y = a x`.
pub fn normalize_problem(name: &str, a: DenseMatrix, x: Vector) -> Result<TestProblem> {
    let a_norm = spectral_norm(&a)?;
    if a_norm == 0.0 {
        return Err(Error::InvalidArgument("zero operator".into()));
    }
    let x_norm = x.norm();
    if !(x_norm > 0.0) {
        return Err(Error::InvalidArgument("zero solution".into()));
    }
    let a_clean = a / a_norm;
    let x_true = x / x_norm;
    let y_clean = &a_clean * &x_true;
    Ok(TestProblem {
        name: name.to_string(),
        a_clean,
        x_true,
        y_clean,
    })
}

fn midpoint(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    lo + (hi - lo) * (i as f64 + 0.5) / n as f64
}

/// Unnormalised midpoint collocation of `K(s, t) = exp(s cos t)` on
/// `[0, π/2] × [0, π]`.
pub fn baart_matrix(n: usize) -> DenseMatrix {
    let w = PI / n as f64;
    DenseMatrix::from_fn(n, n, |i, j| {
        let s = midpoint(0.0, PI / 2.0, n, i);
        let t = midpoint(0.0, PI, n, j);
        w * (s * t.cos()).exp()
    })
}

/// Fredholm problem with kernel `exp(s cos t)` and `x†(t) = sin t`.
pub fn gen_baart(n: usize) -> Result<TestProblem> {
    if n < 2 {
        return Err(Error::InvalidArgument("baart needs n >= 2".into()));
    }
    let x = Vector::from_fn(n, |j, _| midpoint(0.0, PI, n, j).sin());
    normalize_problem("baart", baart_matrix(n), x)
}

/// Heat kernel `k(t) = t^{-3/2} / (2√π) · exp(-1/(4t))`, zero for `t ≤ 0`.
pub fn heat_kernel(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let decay = (-1.0 / (4.0 * t)).exp();
    if decay == 0.0 {
        return 0.0;
    }
    t.powf(-1.5) / (2.0 * PI.sqrt()) * decay
}

/// Lower-triangular Volterra matrix `h · k((i - j + ½) h)` on `[0, 1]`.
pub fn gen_heat(n: usize) -> Result<DenseMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument("heat needs n >= 2".into()));
    }
    let h = 1.0 / n as f64;
    Ok(DenseMatrix::from_fn(n, n, |i, j| {
        if j > i {
            0.0
        } else {
            h * heat_kernel((i - j) as f64 * h + 0.5 * h)
        }
    }))
}

/// Banded Gaussian Toeplitz factor `exp(-(i-j)²/(2σ²))` for `|i-j| < band`.
pub fn blur_toeplitz(grid_n: usize, band: usize, sigma: f64) -> DenseMatrix {
    DenseMatrix::from_fn(grid_n, grid_n, |i, j| {
        let d = i.abs_diff(j);
        if d < band {
            let d = d as f64;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        } else {
            0.0
        }
    })
}

/// Gaussian point spread function `h(x, y)`.
pub fn gaussian_psf(x: f64, y: f64, sigma: f64) -> f64 {
    (-(x * x + y * y) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma)
}

/// Unnormalised blur operator `(1/(2πσ²)) T ⊗ T` acting on row-major images.
pub fn blur_matrix(grid_n: usize, band: usize, sigma: f64) -> Result<DenseMatrix> {
    if grid_n < band || band < 1 || !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "blur needs grid_n >= band >= 1 and sigma > 0 (grid_n={grid_n}, band={band}, sigma={sigma})"
        )));
    }
    let t = blur_toeplitz(grid_n, band, sigma);
    Ok(t.kronecker(&t) / (2.0 * PI * sigma * sigma))
}

pub fn gen_blur(grid_n: usize, band: usize, sigma: f64, phantom_seed: u64) -> Result<TestProblem> {
    let a = blur_matrix(grid_n, band, sigma)?;
    normalize_problem("blur", a, gen_phantom(grid_n, phantom_seed)?)
}

/// A straight line `origin + t·direction` through the unit square.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: (f64, f64),
    pub direction: (f64, f64),
}

impl Ray {
    /// Parameter interval of the ray inside `[0,1]²`, if nonempty.
    fn clip(&self) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (p, d) in [
            (self.origin.0, self.direction.0),
            (self.origin.1, self.direction.1),
        ] {
            if d == 0.0 {
                if !(0.0..=1.0).contains(&p) {
                    return None;
                }
            } else {
                let t0 = (0.0 - p) / d;
                let t1 = (1.0 - p) / d;
                lo = lo.max(t0.min(t1));
                hi = hi.min(t0.max(t1));
            }
        }
        (hi > lo).then_some((lo, hi))
    }

    fn speed(&self) -> f64 {
        self.direction.0.hypot(self.direction.1)
    }

    /// Length of the chord inside the unit square.
    pub fn chord_length(&self) -> f64 {
        self.clip().map_or(0.0, |(lo, hi)| (hi - lo) * self.speed())
    }

    /// Intersection lengths with the pixels of a `grid_n × grid_n` grid,
    /// as `(row-major pixel index, length)` pairs. Pixel `(ix, iy)` covers
    /// `[ix/N, (ix+1)/N] × [iy/N, (iy+1)/N]` and has index `iy·N + ix`.
    pub fn pixel_lengths(&self, grid_n: usize) -> Vec<(usize, f64)> {
        let Some((lo, hi)) = self.clip() else {
            return Vec::new();
        };
        let nf = grid_n as f64;
        // Parametric crossings with every grid line strictly inside the chord.
        let mut ts = vec![lo, hi];
        for (p, d) in [
            (self.origin.0, self.direction.0),
            (self.origin.1, self.direction.1),
        ] {
            if d != 0.0 {
                for k in 1..grid_n {
                    let t = (k as f64 / nf - p) / d;
                    if t > lo && t < hi {
                        ts.push(t);
                    }
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        let speed = self.speed();
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(ts.len());
        for w in ts.windows(2) {
            let len = (w[1] - w[0]) * speed;
            if len <= 0.0 {
                continue;
            }
            let tm = 0.5 * (w[0] + w[1]);
            let x = self.origin.0 + tm * self.direction.0;
            let y = self.origin.1 + tm * self.direction.1;
            let ix = ((x * nf).floor() as usize).min(grid_n - 1);
            let iy = ((y * nf).floor() as usize).min(grid_n - 1);
            let idx = iy * grid_n + ix;
            match out.last_mut() {
                Some((last, l)) if *last == idx => *l += len,
                _ => out.push((idx, len)),
            }
        }
        out
    }
}

/// Point on the boundary of the unit square at arc-length `u ∈ [0, 4)`.
fn boundary_point(u: f64) -> (f64, f64) {
    match u {
        u if u < 1.0 => (u, 0.0),
        u if u < 2.0 => (1.0, u - 1.0),
        u if u < 3.0 => (3.0 - u, 1.0),
        u => (0.0, 4.0 - u),
    }
}

const MIN_CHORD: f64 = 1e-9;

fn random_ray<R: Rng>(rng: &mut R) -> Ray {
    loop {
        let origin = boundary_point(4.0 * rng.random::<f64>());
        let angle = 2.0 * PI * rng.random::<f64>();
        let ray = Ray {
            origin,
            direction: (angle.cos(), angle.sin()),
        };
        if ray.chord_length() > MIN_CHORD {
            return ray;
        }
    }
}

/// Unnormalised random-ray tomography matrix with `round(f·N²)` rows.
pub fn tomo_matrix(grid_n: usize, oversampling_f: f64, seed: u64) -> Result<DenseMatrix> {
    if grid_n < 2 || !(oversampling_f > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tomo needs grid_n >= 2 and f > 0 (grid_n={grid_n}, f={oversampling_f})"
        )));
    }
    let cells = grid_n * grid_n;
    let rows = ((oversampling_f * cells as f64).round() as usize).max(1);
    let mut rng = seeded(seed);
    let mut a = DenseMatrix::zeros(rows, cells);
    for r in 0..rows {
        let ray = random_ray(&mut rng);
        for (p, len) in ray.pixel_lengths(grid_n) {
            a[(r, p)] = len;
        }
    }
    Ok(a)
}

pub fn gen_tomo(grid_n: usize, oversampling_f: f64, seed: u64, phantom_seed: u64) -> Result<TestProblem> {
    let a = tomo_matrix(grid_n, oversampling_f, seed)?;
    normalize_problem("tomo", a, gen_phantom(grid_n, phantom_seed)?)
}

/// Nonnegative image made of a few seeded rectangles and discs, flattened
/// row-major and scaled to unit norm.
pub fn gen_phantom(grid_n: usize, seed: u64) -> Result<Vector> {
    if grid_n < 2 {
        return Err(Error::InvalidArgument("phantom needs grid_n >= 2".into()));
    }
    let mut rng = seeded(seed);
    let nf = grid_n as f64;
    let mut img = Vector::zeros(grid_n * grid_n);
    let shapes = rng.random_range(2..=5);
    for _ in 0..shapes {
        let intensity = rng.random_range(0.3..1.0);
        let cx = rng.random_range(0.2..0.8);
        let cy = rng.random_range(0.2..0.8);
        let size = rng.random_range(0.1..0.3);
        let disc = rng.random_bool(0.5);
        for iy in 0..grid_n {
            for ix in 0..grid_n {
                let x = (ix as f64 + 0.5) / nf;
                let y = (iy as f64 + 0.5) / nf;
                let inside = if disc {
                    (x - cx).hypot(y - cy) <= size
                } else {
                    (x - cx).abs() <= size && (y - cy).abs() <= 0.6 * size
                };
                if inside {
                    img[iy * grid_n + ix] += intensity;
                }
            }
        }
    }
    if img.iter().all(|&v| v == 0.0) {
        let c = grid_n / 2;
        img[c * grid_n + c] = 1.0;
    }
    let norm = img.norm();
    Ok(img / norm)
}

/// Builds `A_η = A + C·ΔA` with `‖C·ΔA‖₂ = eta_rel · ‖A‖₂`; returns the
/// perturbed operator and the realised `η`.
pub fn perturb_operator(problem: &TestProblem, spec: &PerturbationSpec) -> Result<(DenseMatrix, f64)> {
    let (m, n) = problem.a_clean.shape();
    let direction = match spec.kind {
        PerturbationKind::Gaussian => gaussian_matrix(m, n, spec.seed),
        PerturbationKind::Heat => {
            if m != n {
                return Err(Error::InvalidArgument(
                    "heat perturbation needs a square operator".into(),
                ));
            }
            gen_heat(n)?
        }
        PerturbationKind::Tomo { grid_n, oversampling } => tomo_matrix(grid_n, oversampling, spec.seed)?,
    };
    if direction.shape() != (m, n) {
        return Err(Error::DimensionMismatch {
            expected: m * n,
            got: direction.len(),
        });
    }
    ensure_finite_matrix(&direction, "perturbation direction")?;
    let dir_norm = spectral_norm(&direction)?;
    if dir_norm == 0.0 {
        return Err(Error::Numeric("zero perturbation direction".into()));
    }
    let target = spec.eta_rel * spectral_norm(&problem.a_clean)?;
    let delta_a = direction * (target / dir_norm);
    let a_noisy = &problem.a_clean + &delta_a;
    let eta = spectral_norm(&(&a_noisy - &problem.a_clean))?;
    Ok((a_noisy, eta))
}

/// Adds Gaussian noise with `‖e‖ = delta_rel · ‖y‖`; returns the noisy data
/// and the realised `δ`.
pub fn perturb_data(problem: &TestProblem, delta_rel: f64, seed: u64) -> Result<(Vector, f64)> {
    if !(delta_rel >= 0.0 && delta_rel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "relative data error must be nonnegative, got {delta_rel}"
        )));
    }
    if delta_rel == 0.0 {
        return Ok((problem.y_clean.clone(), 0.0));
    }
    let mut e = gaussian_vector(problem.y_clean.len(), seed);
    let scale = delta_rel * problem.y_clean.norm() / e.norm();
    e *= scale;
    let y_noisy = &problem.y_clean + &e;
    let delta = (&y_noisy - &problem.y_clean).norm();
    Ok((y_noisy, delta))
}

/// A clean problem paired with its operator-perturbation model.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub problem: TestProblem,
    pub perturbation: PerturbationKind,
}

impl Scenario {
    pub fn instance(&self, delta_rel: f64, eta_rel: f64, op_seed: u64, data_seed: u64) -> Result<NoisyInstance> {
        let spec = PerturbationSpec::new(self.perturbation, eta_rel, op_seed)?;
        let (a_noisy, eta) = perturb_operator(&self.problem, &spec)?;
        let (y_noisy, delta) = perturb_data(&self.problem, delta_rel, data_seed)?;
        Ok(NoisyInstance {
            a_noisy,
            y_noisy,
            eta,
            delta,
            op_seed,
            data_seed,
        })
    }
}
