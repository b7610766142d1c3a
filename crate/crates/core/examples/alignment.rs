//! Balanced alignment on its own: truncate a text embedding to the
//! forecast-proportional length, match its spread to the time-series
//! embedding and score paired vs. shuffled instances with InfoNCE.

use candle_core::{Device, Tensor};
use dualcast::alignment::{alignment_loss, pool_and_normalize, scale, scaling_factor, truncate, truncation_length};

fn main() -> dualcast::Result<()> {
    let dev = Device::Cpu;
    let (n_patches, d) = (63, 32);
    for (h, l) in [(96, 512), (192, 512), (336, 512), (720, 512)] {
        println!("H={h:<3} L={l}: keep {} of {n_patches} text tokens", truncation_length(n_patches, h, l));
    }

    let k = 6;
    let n_keep = truncation_length(n_patches, 96, 512);
    let mut texts = Vec::new();
    let mut times = Vec::new();
    for i in 0..k {
        // text rows are ~50x wider than the patch embeddings, as with frozen word embeddings
        let time = Tensor::randn(0.0, 0.02, (n_patches, d), &dev)?;
        let shared = time.mean(0)?.unsqueeze(0)?.broadcast_as((40, d))?;
        let text = ((Tensor::randn(0.0, 1.0, (40, d), &dev)? + (shared * 50.0)?)? + i as f64)?;
        let kept = truncate(&text, n_keep)?;
        let alpha = scaling_factor(&kept, &time)?;
        let scaled = scale(&kept, alpha)?;
        if i == 0 {
            println!("alpha = {alpha:.4}; kept text is {:?}", kept.dims());
        }
        texts.push(pool_and_normalize(&scaled.values)?);
        times.push(pool_and_normalize(&time)?);
    }
    let text = Tensor::stack(&texts, 0)?;
    let time = Tensor::stack(&times, 0)?;
    let tau = Tensor::new(0.1f64, &dev)?;
    let paired = alignment_loss(&time, &text, &tau)?.to_scalar::<f64>()?;
    let shuffled = alignment_loss(&time, &text.roll(1, 0)?, &tau)?.to_scalar::<f64>()?;
    println!("InfoNCE paired {paired:.4}, shuffled {shuffled:.4}, chance ln K = {:.4}", (k as f64).ln());
    Ok(())
}
