// The building blocks of the embedding network on tensors small enough to
// check by hand: 3x3 convolution with zero padding, 2x2 max pooling, global
// average pooling and the dense head.

use tripemb::nn::kernels::{conv3x3_forward, dense_forward, global_avg_pool, maxpool2x2_forward, relu_inplace};
use tripemb::{Result, Tensor};

pub fn run_example() -> Result<Vec<f64>> {
    // A 4x4 single-channel ramp.
    let image = Tensor::new(vec![4, 4, 1], (0..16).map(f64::from).collect())?;

    // Two filters: identity (center tap) and a 3x3 box sum.
    let mut kernel = Tensor::zeros(&[3, 3, 1, 2]);
    for tap in 0..9 {
        kernel.data_mut()[tap * 2 + 1] = 1.0;
    }
    kernel.data_mut()[4 * 2] = 1.0;
    let mut conv = conv3x3_forward(&image, &kernel, &[0.0, -40.0])?;
    println!("conv output shape {:?}", conv.shape());
    println!("box sum at the corner (zero padded): {}", conv.data()[1] + 40.0);
    relu_inplace(&mut conv);

    let pooled = maxpool2x2_forward(&conv)?;
    println!("pooled shape {:?}", pooled.output.shape());
    println!("pooled values {:?}", pooled.output.data());

    let features = global_avg_pool(&pooled.output)?;
    println!("global average per channel {features:?}");

    let weights = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.5])?;
    let embedding = dense_forward(&features, &weights, &[0.0, 1.0])?;
    println!("embedding {embedding:?}");
    Ok(embedding)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
