use scalopr::recon::{reconstruct, ReconConfig};
use scalopr::signals::{add_noise, gen_gaussian_process, metrics};
use scalopr::wavelet::{scalogram, AuxiliaryBank, WaveletFamily};

fn main() {
    let n = 256;
    let family = WaveletFamily::dyadic_morlet(n).unwrap();
    let aux = AuxiliaryBank::build(&family, (-0.006f64).exp()).unwrap();
    let cfg = ReconConfig {
        max_iters: 500,
        ..ReconConfig::default()
    };
    for seed in [0u64, 1, 2, 8, 9] {
        let f = gen_gaussian_process(n, 300 + seed).unwrap();
        let g = scalogram(&f, &family).unwrap();
        let noisy = add_noise(&g, 1e-2, 800 + seed).unwrap();
        let out = reconstruct(noisy.rows(), &family, &aux, &cfg).unwrap();
        let (err, _) = metrics(&f, &out.f_rec, &family).unwrap();
        println!("seed {seed}: ratio {:.3}", err / noisy.amount());
    }
}
