use otfs_lab::channel::NoiseModel;
use otfs_lab::neural::checkpoint;
use otfs_lab::pipeline::{
    draw_trial, init_all_params, run_trial_method, train, ChainContext, ModelSpec, Trainability,
    TrainConfig,
};
use otfs_lab::receivers::EstimatorKind;
use otfs_lab::rng::RngFactory;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let mode = args.get(3).map(String::as_str).unwrap_or("receiver");

    let ctx = ChainContext::new(ModelSpec::desk().unwrap()).unwrap();
    let mut cfg = TrainConfig::desk();
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.trainable = match mode {
        "all" => Trainability::all_on(),
        _ => Trainability::receiver_only(),
    };
    let mut params = init_all_params(&ctx.spec, seed).unwrap();
    let ckpt = std::env::temp_dir().join(format!("probe9-{seed}-{mode}.bin"));
    let t0 = std::time::Instant::now();
    let out = train(&ctx, &cfg, &mut params, None, Some(&ckpt)).unwrap();
    eprintln!("train {:.1} s, best epoch {} val_ber {:.4}", t0.elapsed().as_secs_f64(), out.best_epoch, out.best_val_ber);
    for row in &out.rows {
        if let (Some(ber), Some(nmse)) = (row.val_ber, row.val_nmse) {
            eprintln!("epoch {:3}  loss {:.4}  val_ber {:.4}  val_nmse {:.4e}", row.epoch, row.loss, ber, nmse);
        }
    }

    let best = checkpoint::load(&ckpt).unwrap();
    let learned = Some((&best.params, cfg.trainable));
    let stats = cfg.channel;
    let factory = RngFactory::new(0xE9);
    for (s, &snr_db) in [10.0f64, 15.0, 20.0].iter().enumerate() {
        let sigma_n2 = NoiseModel::Snr { snr_db, symbol_energy: 1.0 }.sigma2();
        let (mut eo, mut ro, mut en, mut rn) = (0.0, 0.0, 0.0, 0.0);
        let (mut beo, mut ben, mut bits) = (0usize, 0usize, 0usize);
        let trials = 150;
        for t in 0..trials {
            let mut rng = factory.stream(((s as u64) << 32) + t as u64);
            let trial = draw_trial(&ctx, &stats, &mut rng).unwrap();
            let omp = run_trial_method(&ctx, &trial, sigma_n2, EstimatorKind::Omp, None).unwrap();
            let net = run_trial_method(&ctx, &trial, sigma_n2, EstimatorKind::Learned, learned).unwrap();
            eo += omp.err_energy;
            ro += omp.ref_energy;
            en += net.err_energy;
            rn += net.ref_energy;
            beo += omp.bit_errors;
            ben += net.bit_errors;
            bits += omp.bits;
        }
        eprintln!(
            "{snr_db} dB ({trials} trials): nmse omp {:.3e} net {:.3e} | ber omp {:.4} net {:.4}",
            eo / ro, en / rn,
            beo as f64 / bits as f64,
            ben as f64 / bits as f64
        );
    }
}
