//! Fourier spectra of series and of trained models, and cross-validated
//! polynomial degree selection.

mod degree;
mod fourier;

pub use degree::{optimal_poly_degree, poly_fit, DegreeSelectionResult, HOLDOUT_FRACTION, TIE_TOLERANCE};
pub use fourier::{dft, dft_angular_grid, dft_bins, dft_with_spacing, nudft, nudft_complex};


use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, InputLayout};
use crate::report::num;
use crate::vae::{VaeError, VaeModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("series needs at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("sample spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("frequencies must be strictly increasing")]
    NotIncreasing,
    #[error("spectrum has no energy outside the DC bin")]
    ZeroEnergy,
    #[error("cutoff {cutoff} outside [0, {max}]")]
    CutoffOutOfRange { cutoff: f64, max: f64 },
    #[error("polynomial design matrix is rank deficient")]
    DegenerateDesign,
    #[error("need at least {needed} points, found {found}")]
    InsufficientData { needed: usize, found: usize },
    #[error(transparent)]
    Vae(#[from] VaeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Reconstruction,
    EncoderMean,
    RawSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Cycles per unit of the sample coordinate, strictly increasing.
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Complex64>,
    pub source: SpectrumSource,
}

impl Spectrum {
    pub fn new(
        frequencies: Vec<f64>,
        amplitudes: Vec<Complex64>,
        source: SpectrumSource,
    ) -> Result<Self, SpectralError> {
        if frequencies.len() != amplitudes.len() {
            return Err(SpectralError::LengthMismatch {
                expected: frequencies.len(),
                found: amplitudes.len(),
            });
        }
        if frequencies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SpectralError::NotIncreasing);
        }
        Ok(Self {
            frequencies,
            amplitudes,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn max_frequency(&self) -> f64 {
        self.frequencies.iter().fold(0.0, |m, f| m.max(f.abs()))
    }

    /// Energy above `cutoff` and total energy, both without the DC bin.
    fn energies(&self, cutoff: f64) -> (f64, f64) {
        let (mut high, mut total) = (0.0, 0.0);
        for (f, a) in self.frequencies.iter().zip(&self.amplitudes) {
            if *f == 0.0 {
                continue;
            }
            let e = a.norm_sqr();
            total += e;
            if f.abs() > cutoff {
                high += e;
            }
        }
        (high, total)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency,amplitude_real,amplitude_imag,amplitude_abs\n");
        for (f, a) in self.frequencies.iter().zip(&self.amplitudes) {
            out.push_str(&format!("{},{},{},{}\n", num(*f), num(a.re), num(a.im), num(a.norm())));
        }
        out
    }
}

fn check_cutoff(cutoff: f64, max: f64) -> Result<(), SpectralError> {
    if !(0.0..=max).contains(&cutoff) {
        return Err(SpectralError::CutoffOutOfRange { cutoff, max });
    }
    Ok(())
}

/// `Σ_{|f|>cutoff} |X|² / Σ_{f≠0} |X|²`.
pub fn high_frequency_fraction(s: &Spectrum, cutoff: f64) -> Result<f64, SpectralError> {
    check_cutoff(cutoff, s.max_frequency())?;
    let (high, total) = s.energies(cutoff);
    if total <= 0.0 {
        return Err(SpectralError::ZeroEnergy);
    }
    Ok(high / total)
}

/// One spectrum per model output dimension, on a shared frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpectra {
    pub per_dim: Vec<Spectrum>,
    /// Mean of `|X(f)|` over dimensions.
    pub mean_amplitude: Vec<f64>,
    /// Nyquist frequency of the (mean) sample spacing.
    pub nyquist: f64,
}

impl ModelSpectra {
    pub fn frequencies(&self) -> &[f64] {
        &self.per_dim[0].frequencies
    }

    /// Default cutoff: one quarter of the Nyquist frequency.
    pub fn default_cutoff(&self) -> f64 {
        self.nyquist / 4.0
    }

    /// High-frequency fraction of the energy pooled over all dimensions.
    pub fn high_frequency_fraction(&self, cutoff: f64) -> Result<f64, SpectralError> {
        check_cutoff(cutoff, self.per_dim[0].max_frequency())?;
        let (mut high, mut total) = (0.0, 0.0);
        for s in &self.per_dim {
            let (h, t) = s.energies(cutoff);
            high += h;
            total += t;
        }
        if total <= 0.0 {
            return Err(SpectralError::ZeroEnergy);
        }
        Ok(high / total)
    }

    /// Columns: frequency, mean amplitude, then `|X|` per dimension.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency,mean_amplitude_abs");
        for d in 0..self.per_dim.len() {
            out.push_str(&format!(",amplitude_abs_{d}"));
        }
        out.push('\n');
        for (i, f) in self.frequencies().iter().enumerate() {
            out.push_str(&format!("{},{}", num(*f), num(self.mean_amplitude[i])));
            for s in &self.per_dim {
                out.push_str(&format!(",{}", num(s.amplitudes[i].norm())));
            }
            out.push('\n');
        }
        out
    }
}

/// True when successive gaps agree to within `1e-9` of the mean gap.
fn uniform_spacing(t: &[f64]) -> Option<f64> {
    let mean = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let uniform = mean > 0.0 && t.windows(2).all(|w| ((w[1] - w[0]) - mean).abs() <= 1e-9 * mean);
    uniform.then_some(mean)
}

/// Spectra of the columns of `values` ordered by `t`: FFT on uniform grids,
/// direct non-uniform sums on the same frequency grid otherwise.
pub fn series_spectra(
    t: &[f64],
    values: &Array2<f64>,
    source: SpectrumSource,
) -> Result<ModelSpectra, SpectralError> {
    if t.len() != values.nrows() {
        return Err(SpectralError::LengthMismatch {
            expected: t.len(),
            found: values.nrows(),
        });
    }
    if t.len() < 2 {
        return Err(SpectralError::TooShort(t.len()));
    }
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[a].total_cmp(&t[b]));
    let ts: Vec<f64> = order.iter().map(|&i| t[i]).collect();
    let n = ts.len();
    let spacing = uniform_spacing(&ts);
    let dt = match spacing {
        Some(dt) => dt,
        None => {
            let mean = (ts[n - 1] - ts[0]) / (n - 1) as f64;
            if !(mean > 0.0) {
                return Err(SpectralError::BadSpacing(mean));
            }
            mean
        }
    };
    let omega = dft_angular_grid(n, dt);
    let per_dim = crate::exec::try_map_indexed(crate::exec::Execution::default(), values.ncols(), |d| {
        let col: Vec<f64> = order.iter().map(|&i| values[(i, d)]).collect();
        let mut s = match spacing {
            Some(dt) => dft_with_spacing(&col, dt)?,
            None => nudft(&ts, &col, &omega)?,
        };
        s.source = source;
        Ok::<_, SpectralError>(s)
    })?;
    let dims = per_dim.len() as f64;
    let mean_amplitude = (0..n)
        .map(|i| per_dim.iter().map(|s| s.amplitudes[i].norm()).sum::<f64>() / dims)
        .collect();
    Ok(ModelSpectra {
        per_dim,
        mean_amplitude,
        nyquist: 0.5 / dt,
    })
}

/// Reconstructed value columns `gθ(μφ(x))` for every example, in dataset order.
pub fn reconstructed_values(model: &VaeModel, data: &Dataset, layout: InputLayout) -> Result<Array2<f64>, SpectralError> {
    let rec = model.reconstruct_batch(data.model_inputs(layout).view())?;
    Ok(rec.slice(s![.., layout.value_offset()..]).to_owned())
}

/// Spectra of the deterministic reconstructions of the value columns over the dataset.
pub fn reconstruction_spectrum(model: &VaeModel, data: &Dataset, layout: InputLayout) -> Result<ModelSpectra, SpectralError> {
    let rec = reconstructed_values(model, data, layout)?;
    series_spectra(&data.coordinates, &rec, SpectrumSource::Reconstruction)
}

/// Spectra of the encoder means `μφ(x)` over the dataset.
pub fn encoder_mean_spectrum(model: &VaeModel, data: &Dataset, layout: InputLayout) -> Result<ModelSpectra, SpectralError> {
    let (mu, _) = model.encode_batch(data.model_inputs(layout).view())?;
    series_spectra(&data.coordinates, &mu, SpectrumSource::EncoderMean)
}
