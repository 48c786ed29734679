use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{GridError, Result};
use crate::grid::CkmGrid;

/// Dense-matrix oracle cap: `materialize_matrix` refuses grids above this pixel count.
pub const ORACLE_PIXEL_CAP: usize = 4096;

/// Which linear degradation operator `A` the observation model `y = Ax + n` uses.
#[derive(Debug, Clone, PartialEq)]
pub enum DegradationKind {
    /// `A = I`: complete but noisy observation.
    Denoise,
    /// Row-selector `A`; mask entries that are true are observed.
    Inpaint(Array2<bool>),
    /// Block-averaging `A` with an `m x m` downsampling factor.
    SuperRes(usize),
    /// `A = 0`: nothing observed, pure generation.
    Generate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    /// Noise standard deviation in normalized pixel units.
    pub noise_std: f64,
    pub seed: u64,
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, noise_std: f64, seed: u64) -> Result<Self> {
        if noise_std < 0.0 || !noise_std.is_finite() {
            return Err(GridError::Invariant(format!(
                "noise_std must be nonnegative, got {noise_std}"
            )));
        }
        if let DegradationKind::SuperRes(m) = kind {
            if m == 0 {
                return Err(GridError::Invariant("SuperRes factor must be positive".into()));
            }
        }
        Ok(DegradationSpec {
            kind,
            noise_std,
            seed,
        })
    }

    fn check_shape(&self, l: usize, w: usize) -> Result<()> {
        match &self.kind {
            DegradationKind::Inpaint(mask) => {
                if mask.dim() != (l, w) {
                    return Err(GridError::Shape(format!(
                        "inpaint mask shape {:?} does not match grid shape ({l}, {w})",
                        mask.dim()
                    )));
                }
            }
            DegradationKind::SuperRes(m) => {
                if l % m != 0 || w % m != 0 {
                    return Err(GridError::Shape(format!(
                        "SuperRes factor {m} does not divide grid shape ({l}, {w})"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Length of the observation vector this spec produces on an `l x w` grid.
    pub fn observation_len(&self, l: usize, w: usize) -> usize {
        match &self.kind {
            DegradationKind::Denoise => l * w,
            DegradationKind::Inpaint(mask) => mask.iter().filter(|&&m| m).count(),
            DegradationKind::SuperRes(m) => (l / m) * (w / m),
            DegradationKind::Generate => 0,
        }
    }
}

/// The observed channel knowledge `y` together with the spec that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub values: Vec<f64>,
    pub spec: DegradationSpec,
    pub source_shape: (usize, usize),
}

/// Applies `y = Ax + n` to the pixel view of a grid, drawing noise from a stream
/// derived from `spec.seed`.
pub fn apply_degradation(grid: &CkmGrid, spec: &DegradationSpec) -> Result<Observation> {
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    apply_degradation_with(grid, spec, &mut rng)
}

/// Same as [`apply_degradation`] with a caller-supplied random stream.
pub fn apply_degradation_with<R: Rng>(
    grid: &CkmGrid,
    spec: &DegradationSpec,
    rng: &mut R,
) -> Result<Observation> {
    let (l, w) = grid.shape();
    spec.check_shape(l, w)?;
    let px = grid.pixels();

    let mut values: Vec<f64> = match &spec.kind {
        DegradationKind::Denoise => px.iter().copied().collect(),
        DegradationKind::Inpaint(mask) => px
            .indexed_iter()
            .filter(|(idx, _)| mask[*idx])
            .map(|(_, &v)| v)
            .collect(),
        DegradationKind::SuperRes(m) => {
            let (lp, wp) = (l / m, w / m);
            let mut out = Vec::with_capacity(lp * wp);
            for br in 0..lp {
                for bc in 0..wp {
                    let mut acc = 0.0;
                    for r in 0..*m {
                        for c in 0..*m {
                            acc += px[(br * m + r, bc * m + c)];
                        }
                    }
                    out.push(acc / (m * m) as f64);
                }
            }
            out
        }
        DegradationKind::Generate => Vec::new(),
    };

    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).expect("validated std");
        for v in values.iter_mut() {
            *v += normal.sample(rng);
        }
    }

    Ok(Observation {
        values,
        spec: spec.clone(),
        source_shape: (l, w),
    })
}

/// Zero-fills an observation back to an `l x w` image: `y_tilde = A^T y`.
///
/// Observed cells keep their values, unobserved cells become 0. SuperRes is not
/// supported here; its low-resolution observation is consumed directly.
pub fn pad_observation(obs: &Observation) -> Result<Array2<f64>> {
    let (l, w) = obs.source_shape;
    match &obs.spec.kind {
        DegradationKind::Denoise => {
            if obs.values.len() != l * w {
                return Err(GridError::Shape(format!(
                    "denoise observation length {} != {}",
                    obs.values.len(),
                    l * w
                )));
            }
            Ok(Array2::from_shape_vec((l, w), obs.values.clone())
                .expect("length checked above"))
        }
        DegradationKind::Inpaint(mask) => {
            let mut out = Array2::zeros((l, w));
            let mut it = obs.values.iter();
            for (idx, &observed) in mask.indexed_iter() {
                if observed {
                    let v = it.next().ok_or_else(|| {
                        GridError::Shape("observation shorter than mask count".into())
                    })?;
                    out[idx] = *v;
                }
            }
            if it.next().is_some() {
                return Err(GridError::Shape("observation longer than mask count".into()));
            }
            Ok(out)
        }
        DegradationKind::Generate => Ok(Array2::zeros((l, w))),
        DegradationKind::SuperRes(_) => Err(GridError::Unsupported(
            "pad_observation does not apply to SuperRes; use the low-resolution image".into(),
        )),
    }
}

/// Materializes the dense `a x lw` degradation matrix for test-oracle use.
///
/// Row-major vectorization order. Generate yields an empty `0 x lw` matrix.
pub fn materialize_matrix(spec: &DegradationSpec, l: usize, w: usize) -> Result<Array2<f64>> {
    if l * w > ORACLE_PIXEL_CAP {
        return Err(GridError::Capacity {
            size: l * w,
            cap: ORACLE_PIXEL_CAP,
        });
    }
    spec.check_shape(l, w)?;
    let n = l * w;
    match &spec.kind {
        DegradationKind::Denoise => Ok(Array2::eye(n)),
        DegradationKind::Inpaint(mask) => {
            let a = spec.observation_len(l, w);
            let mut m = Array2::zeros((a, n));
            let mut row = 0;
            for ((r, c), &observed) in mask.indexed_iter() {
                if observed {
                    m[(row, r * w + c)] = 1.0;
                    row += 1;
                }
            }
            Ok(m)
        }
        DegradationKind::SuperRes(f) => {
            let (lp, wp) = (l / f, w / f);
            let mut m = Array2::zeros((lp * wp, n));
            let weight = 1.0 / (f * f) as f64;
            for br in 0..lp {
                for bc in 0..wp {
                    let row = br * wp + bc;
                    for r in 0..*f {
                        for c in 0..*f {
                            m[(row, (br * f + r) * w + (bc * f + c))] = weight;
                        }
                    }
                }
            }
            Ok(m)
        }
        DegradationKind::Generate => Ok(Array2::zeros((0, n))),
    }
}
