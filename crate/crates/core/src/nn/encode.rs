use num_complex::Complex64;

use super::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Splits a measurement vector into a `2 x M` (real, imaginary) tensor and
/// standardises it over all `2M` values.
pub fn input_encode(measurements: &[Complex64]) -> Tensor {
    let m = measurements.len();
    let mut data = Vec::with_capacity(2 * m);
    data.extend(measurements.iter().map(|z| z.re));
    data.extend(measurements.iter().map(|z| z.im));
    standardize(&mut data);
    Tensor::from_parts(vec![2, m], data)
}

fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt().max(STD_FLOOR);
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
}

/// Encodes a batch of measurement vectors into a `B x 2 x M` tensor.
pub fn encode_batch<'a, I>(batch: I) -> Tensor
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut data = Vec::new();
    let mut count = 0;
    let mut m = 0;
    for y in batch {
        m = y.len();
        data.extend(input_encode(y).into_data());
        count += 1;
    }
    Tensor::from_parts(vec![count, 2, m], data)
}
