//! The two representation tricks in isolation: the HL-Gauss scalar <->
//! categorical value codec and the SimNorm grouped-softmax latent.

use madtd::nets::{encode, hlgauss_decode, hlgauss_encode, latent_is_valid, init_encoder, NetConfig};
use madtd::numkernel::{Mat, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = NetConfig { obs_dim: 3, act_dim: 1, ..NetConfig::new(3, 1) };
    let geom = cfg.bin_geometry();

    println!("HL-Gauss codec: {} bins on [{}, {}]", geom.bins, -cfg.vmax, cfg.vmax);
    let mut worst: f64 = 0.0;
    for i in 0..=20 {
        let v = -0.9 * cfg.vmax + (i as f64 / 20.0) * 1.8 * cfg.vmax;
        let probs = hlgauss_encode(v, &geom).expect("encode");
        let back = hlgauss_decode(&probs, &geom);
        worst = worst.max((back - v).abs());
        if i % 5 == 0 {
            println!("  {v:8.3} -> encode -> decode -> {back:8.3}");
        }
    }
    println!("  worst round-trip error over the middle 90%: {worst:.2e}");
    println!("  (bin width {:.3}, so quantization is invisible)\n", geom.width());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let enc = init_encoder(&cfg, &mut rng);
    let mut obs = Mat::zeros(512, cfg.obs_dim);
    for v in obs.data.iter_mut() {
        *v = rng.gen_range(-3.0..3.0);
    }
    let mut tape = Tape::new();
    let nodes = tape.params(&enc, false);
    let x = tape.constant(obs);
    let z = encode(&mut tape, &nodes, &cfg, x).expect("encode");
    let z = tape.value(z);
    println!(
        "SimNorm latent: {} dims in groups of {}, all group sums = 1: {}",
        cfg.latent,
        cfg.group_size,
        latent_is_valid(z, cfg.group_size)
    );
    let row = z.row(0);
    let first_group: Vec<String> =
        row[..cfg.group_size].iter().map(|v| format!("{v:.3}")).collect();
    println!("  first group of latent[0]: [{}]", first_group.join(", "));
}
