//! Times one forward and one forward+backward pass of every architecture on
//! an 11-channel input.
//!
//! `cargo run --release --example bench_forward -- [SIZE] [WIDTH]`

use std::time::Instant;
use slidens_core::zoo::{build_model, ArchName, ArchSpec};
use slidens_tensor::{Graph, Tensor};

fn main() {
    let size: usize = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(256);
    let width: usize = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(16);
    for arch in ArchName::ALL {
        let spec = ArchSpec::new(arch, 11).with_size(width, 4);
        let m = build_model::<f32>(spec, 1).unwrap();
        let x = Tensor::full(&[1, 11, size, size], 0.3f32);
        let t = Instant::now();
        let y = m.forward(&x).unwrap();
        let inf = t.elapsed();
        let t = Instant::now();
        let mut g = Graph::new();
        let p = g.params(m.params());
        let xv = g.input(x.clone());
        let out = m.forward_on(&mut g, &p, xv);
        let seed = Tensor::full(g.shape(out), 1.0f32);
        let _ = g.backward(out, seed);
        println!("{arch:14} params {:8} fwd {:?} fwd+bwd {:?} shape {:?}", m.param_count(), inf, t.elapsed(), y.shape());
    }
}
