//! Quick training-curve probe for calibration.
use pdr_core::loocc::{train, LooccConfig, LooccMode, TrainState};
use pdr_core::nets::NetConfig;
use pdr_core::render::RenderConfig;
use pdr_core::scene::{build_dataset_with_threads, DatasetConfig, GeneratorConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let width: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let feat: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(32);
    let batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(16);
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20);
    let mode = match args.get(5).map(|s| s.as_str()) {
        Some("lv") => LooccMode::LooccLv,
        _ => LooccMode::None,
    };
    let gen = GeneratorConfig { image_size: 32, ..Default::default() };
    let ds = build_dataset_with_threads::<f32>(
        &DatasetConfig { n: 512, fractions: [0.8, 0.1, 0.1], seed: 100, generator: gen.clone() },
        4,
    ).unwrap();
    let net = NetConfig { image_size: 32, feature_dim: feat, base_width: width, mlp_hidden: 32 };
    let lr: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let cfg = LooccConfig { mode, batch_size: batch, max_epochs: epochs, learning_rate: lr, ..Default::default() };
    let mut state = TrainState::<f32>::new(&net, &cfg, 101, 102).unwrap();
    let t = std::time::Instant::now();
    train(&mut state, &ds, &cfg, &gen.intrinsics(), &RenderConfig::default(), |m| {
        println!("ep {:>2} train {:?} val {:.4} ({:.0}s)", m.epoch, m.train_recon.map(|v| (v*1e4).round()/1e4), m.val_recon, t.elapsed().as_secs_f64());
    }).unwrap();
    println!("best {:.4} at ep {} | total {:.0}s", state.stopper.best, state.stopper.best_epoch, t.elapsed().as_secs_f64());
}
