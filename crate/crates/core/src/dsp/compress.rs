use rustfft::num_complex::Complex64;

use super::ComplexSpectrum;

/// Power-law exponent applied to input feature magnitudes.
pub const DEFAULT_COMPRESS_EXPONENT: f64 = 0.3;

/// `|z|^e * exp(j * arg z)`, computed as a real rescale of `z` so the phase is untouched.
#[inline]
pub fn compress_bin(z: Complex64, exponent: f64) -> Complex64 {
    let mag = z.norm();
    if mag == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    z * mag.powf(exponent - 1.0)
}

/// Inverse of [`compress_bin`].
#[inline]
pub fn decompress_bin(z: Complex64, exponent: f64) -> Complex64 {
    let mag = z.norm();
    if mag == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    z * mag.powf(1.0 / exponent - 1.0)
}

pub fn compress(spec: &ComplexSpectrum, exponent: f64) -> ComplexSpectrum {
    map(spec, |z| compress_bin(z, exponent))
}

pub fn decompress(spec: &ComplexSpectrum, exponent: f64) -> ComplexSpectrum {
    map(spec, |z| decompress_bin(z, exponent))
}

fn map(spec: &ComplexSpectrum, f: impl Fn(Complex64) -> Complex64) -> ComplexSpectrum {
    let mut out = spec.clone();
    for z in out.data_mut() {
        *z = f(*z);
    }
    out
}
