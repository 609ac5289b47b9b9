use crate::error::{input_err, Result};
use crate::features::{add_deltas, cepstral_mean_normalize, interpolate_time, FeatureMatrix};
use crate::nn::Tensor2D;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(input_err!("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    /// Analysis window length in seconds.
    pub frame_length: f64,
    /// Hop between consecutive frames in seconds.
    pub frame_shift: f64,
    pub n_mels: usize,
    pub n_ceps: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_length: 0.025,
            frame_shift: 0.010,
            n_mels: 24,
            n_ceps: 20,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        (self.frame_length * f64::from(sample_rate)).round() as usize
    }

    pub fn shift_samples(&self, sample_rate: u32) -> usize {
        (self.frame_shift * f64::from(sample_rate)).round() as usize
    }

    pub fn fft_size(&self, sample_rate: u32) -> usize {
        self.frame_samples(sample_rate).next_power_of_two()
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank (HTK mel scale) spanning 0 Hz to Nyquist.
///
/// Returns an `n_mels x (fft_size / 2 + 1)` weight matrix and the centre
/// frequency of every band in Hz.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> (Tensor2D, Vec<f64>) {
    let n_bins = fft_size / 2 + 1;
    let nyquist = f64::from(sample_rate) / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut bank = Tensor2D::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, centre, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * f64::from(sample_rate) / fft_size as f64;
            let w = if f > lo && f <= centre {
                (f - lo) / (centre - lo)
            } else if f > centre && f < hi {
                (hi - f) / (hi - centre)
            } else {
                0.0
            };
            bank.set(m, k, w);
        }
    }
    (bank, edges[1..=n_mels].to_vec())
}

/// Log mel-band energies, `n_mels x frames`, before the cepstral transform.
pub fn log_mel_spectrogram(w: &Waveform, cfg: &MfccConfig) -> Result<Tensor2D> {
    let frame_len = cfg.frame_samples(w.sample_rate);
    let shift = cfg.shift_samples(w.sample_rate);
    if frame_len == 0 || shift == 0 {
        return Err(input_err!("frame length and shift must cover at least one sample"));
    }
    if w.samples.len() < frame_len {
        return Err(input_err!(
            "waveform of {} samples is shorter than one {frame_len}-sample frame",
            w.samples.len()
        ));
    }
    let n_frames = 1 + (w.samples.len() - frame_len) / shift;
    let fft_size = cfg.fft_size(w.sample_rate);
    let (bank, _) = mel_filterbank(cfg.n_mels, fft_size, w.sample_rate);

    let emphasized: Vec<f64> = std::iter::once(w.samples[0])
        .chain(w.samples.windows(2).map(|p| p[1] - cfg.pre_emphasis * p[0]))
        .collect();
    let window: Vec<f64> = (0..frame_len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (frame_len - 1).max(1) as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);

    let mut out = Tensor2D::zeros(cfg.n_mels, n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut magnitude = vec![0.0; fft_size / 2 + 1];
    for t in 0..n_frames {
        let frame = &emphasized[t * shift..t * shift + frame_len];
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for ((b, &x), &h) in buf.iter_mut().zip(frame).zip(&window) {
            b.re = x * h;
        }
        fft.process(&mut buf);
        for (m, c) in magnitude.iter_mut().zip(&buf) {
            *m = c.norm();
        }
        for m in 0..cfg.n_mels {
            let e: f64 = bank.row(m).iter().zip(&magnitude).map(|(a, b)| a * b).sum();
            out.set(m, t, e.max(cfg.log_floor).ln());
        }
    }
    Ok(out)
}

/// `n_ceps x frames` MFCCs: orthonormal DCT-II of the log mel energies.
pub fn extract_mfcc(w: &Waveform, cfg: &MfccConfig) -> Result<FeatureMatrix> {
    if cfg.n_ceps > cfg.n_mels {
        return Err(input_err!("{} cepstra requested from {} mel bands", cfg.n_ceps, cfg.n_mels));
    }
    let logmel = log_mel_spectrogram(w, cfg)?;
    let m = cfg.n_mels as f64;
    let mut out = Tensor2D::zeros(cfg.n_ceps, logmel.cols());
    for k in 0..cfg.n_ceps {
        let scale = if k == 0 { (1.0 / m).sqrt() } else { (2.0 / m).sqrt() };
        let basis: Vec<f64> = (0..cfg.n_mels)
            .map(|j| scale * (PI * k as f64 * (j as f64 + 0.5) / m).cos())
            .collect();
        for t in 0..logmel.cols() {
            let v: f64 = (0..cfg.n_mels).map(|j| basis[j] * logmel.get(j, t)).sum();
            out.set(k, t, v);
        }
    }
    Ok(out)
}

/// Full waveform-to-network-input pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub mfcc: MfccConfig,
    pub deltas: bool,
    pub mean_normalize: bool,
    /// Frame count after interpolation; `None` keeps the raw length.
    pub target_frames: Option<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            mfcc: MfccConfig::default(),
            deltas: true,
            mean_normalize: true,
            target_frames: Some(200),
        }
    }
}

/// MFCC, then deltas, then mean normalisation, then interpolation.
pub fn extract_features(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let mut f = extract_mfcc(w, &cfg.mfcc)?;
    if cfg.deltas {
        f = add_deltas(&f)?;
    }
    if cfg.mean_normalize {
        cepstral_mean_normalize(&mut f);
    }
    match cfg.target_frames {
        Some(t) => interpolate_time(&f, t),
        None => Ok(f),
    }
}
