//! Synthetic two-modality data from a shared latent variable, with
//! structure-only views that drop the appearance coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentConfig {
    pub d_s: usize,
    pub d_struct: usize,
    pub d_app: usize,
    pub noise_x: f64,
    pub noise_y: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            d_s: 4,
            d_struct: 8,
            d_app: 8,
            noise_x: 1.0,
            noise_y: 1.0,
            eta_x: 0.05,
            eta_y: 0.05,
            n_samples: 512,
            seed: 0,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_s == 0 || self.d_struct == 0 || self.d_app == 0 {
            return Err(Error::invalid("latent dimensions must be at least 1"));
        }
        for (name, v) in [
            ("noise_x", self.noise_x),
            ("noise_y", self.noise_y),
            ("eta_x", self.eta_x),
            ("eta_y", self.eta_y),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{name} must be a finite non-negative std"
                )));
            }
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples must be at least 2"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.d_struct + self.d_app
    }
}

/// Rows are samples; columns are `[structural | appearance]` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub x: Matrix,
    pub y: Matrix,
    pub x_e: Matrix,
    pub y_e: Matrix,
    pub d_struct: usize,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches shape")
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Fixed mixing matrices of one latent-variable world.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    config: LatentConfig,
    a_x: Matrix,
    c_x: Matrix,
    a_y: Matrix,
    c_y: Matrix,
}

impl LatentModel {
    /// Draws the mixing matrices from the start of `rng`.
    fn draw(config: &LatentConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (d_s, d_struct, d_app) = (config.d_s, config.d_struct, config.d_app);
        let mix = 1.0 / (d_s as f64).sqrt();
        Ok(LatentModel {
            config: config.clone(),
            a_x: gaussian_matrix(rng, d_struct, d_s, mix),
            c_x: gaussian_matrix(rng, d_app, d_s, mix),
            a_y: gaussian_matrix(rng, d_struct, d_s, mix),
            c_y: gaussian_matrix(rng, d_app, d_s, mix),
        })
    }

    pub fn new(config: &LatentConfig) -> Result<Self> {
        Self::draw(config, &mut ChaCha8Rng::seed_from_u64(config.seed))
    }

    pub fn config(&self) -> &LatentConfig {
        &self.config
    }

    /// Per sample draws S, the nuisances N_X, N_Y and the projection noises
    /// η_X, η_Y from `rng`, in that order.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> SyntheticDataset {
        let cfg = &self.config;
        let (d_s, d_struct, d_app) = (cfg.d_s, cfg.d_struct, cfg.d_app);
        let d = cfg.input_dim();
        let mut x = Matrix::zeros(n, d);
        let mut y = Matrix::zeros(n, d);
        let mut x_e = Matrix::zeros(n, d);
        let mut y_e = Matrix::zeros(n, d);
        let normal = |rng: &mut ChaCha8Rng, k: usize| -> Vec<f64> {
            (0..k).map(|_| StandardNormal.sample(rng)).collect()
        };
        for i in 0..n {
            let s = normal(rng, d_s);
            let nx = normal(rng, d_app);
            let ny = normal(rng, d_app);
            let ex = normal(rng, d_struct);
            let ey = normal(rng, d_struct);
            let project = |m: &Matrix, r: usize| crate::numeric::dot(m.row(r), &s);
            for r in 0..d_struct {
                let sx = project(&self.a_x, r);
                let sy = project(&self.a_y, r);
                x.row_mut(i)[r] = sx;
                y.row_mut(i)[r] = sy;
                x_e.row_mut(i)[r] = sign(sx + cfg.eta_x * ex[r]);
                y_e.row_mut(i)[r] = sy + cfg.eta_y * ey[r];
            }
            for r in 0..d_app {
                x.row_mut(i)[d_struct + r] = project(&self.c_x, r) + cfg.noise_x * nx[r];
                y.row_mut(i)[d_struct + r] = project(&self.c_y, r) + cfg.noise_y * ny[r];
            }
        }
        SyntheticDataset {
            x,
            y,
            x_e,
            y_e,
            d_struct,
        }
    }
}

/// Mixing matrices and then `n_samples` samples, all from one stream seeded
/// by `config.seed`.
pub fn synthesize_multimodal(config: &LatentConfig) -> Result<SyntheticDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = LatentModel::draw(config, &mut rng)?;
    Ok(model.sample(config.n_samples, &mut rng))
}
