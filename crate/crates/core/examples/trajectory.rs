//! Per-epoch trajectory of every acceptance-relevant quantity.
use pdr_core::ad::no_grad;
use pdr_core::eval::{cluster_accuracy, hac_ward, linear_probe, pcc_disentanglement, LabelKind, ProbeConfig, ProbeMode};
use pdr_core::loocc::{cyclic_encode, leave_one_out, train, LooccConfig, LooccMode, TrainState};
use pdr_core::nets::{extract_representation, parse_blocks, FeatureSet, Model, NetConfig};
use pdr_core::render::RenderConfig;
use pdr_core::scene::{build_dataset_with_threads, Dataset, DatasetConfig, GeneratorConfig, Split};
use pdr_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type F = f32;

fn features_of(model: &Model<F>, ds: &Dataset<F>, idx: &[usize]) -> (Tensor<F>, FeatureSet<F>) {
    let _g = no_grad();
    let blocks = parse_blocks("geom,alb").unwrap();
    let mut reps = Vec::new();
    let mut per: Vec<Vec<Tensor<F>>> = vec![Vec::new(); 4];
    for chunk in idx.chunks(32) {
        let x = pdr_core::loocc::assemble_batch(ds, chunk);
        let z = model.encode(&x).unwrap();
        reps.push(extract_representation(&z, &blocks).unwrap());
        per[0].push(z.z_geom); per[1].push(z.z_alb); per[2].push(z.z_cam); per[3].push(z.z_light);
    }
    (Tensor::concat(&reps, 0), FeatureSet {
        z_geom: Tensor::concat(&per[0], 0), z_alb: Tensor::concat(&per[1], 0),
        z_cam: Tensor::concat(&per[2], 0), z_light: Tensor::concat(&per[3], 0),
    })
}

fn loo_cos(model: &Model<F>, ds: &Dataset<F>, idx: &[usize], intr: &pdr_core::render::CameraIntrinsics, rcfg: &RenderConfig) -> f64 {
    let _g = no_grad();
    let cfg = LooccConfig { mode: LooccMode::LooccLv, batch_size: 16, ..Default::default() };
    let (mut total, mut count) = (0.0, 0usize);
    for rep in 0..4u64 {
        for (bi, chunk) in idx.chunks(16).enumerate() {
            let mut rng = ChaCha20Rng::seed_from_u64(777 + rep * 1000 + bi as u64);
            let x = pdr_core::loocc::assemble_batch(ds, chunk);
            let (zx, zaug, which) = cyclic_encode(&x, model, intr, rcfg, &cfg, &mut rng).unwrap();
            let dots = leave_one_out(&zx, which).mul(&leave_one_out(&zaug, which)).sum_axis(1, false).to_vec();
            total += dots.iter().map(|v| *v as f64).sum::<f64>();
            count += dots.len();
        }
    }
    total / count as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = match args.get(1).map(|s| s.as_str()) { Some("lv") => LooccMode::LooccLv, _ => LooccMode::None };
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(4);
    let epochs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(20);
    let gen = GeneratorConfig { image_size: 32, ..Default::default() };
    let ds = build_dataset_with_threads::<F>(&DatasetConfig { n: 512, fractions: [0.8, 0.1, 0.1], seed: 100, generator: gen.clone() }, 4).unwrap();
    let intr = gen.intrinsics();
    let rcfg = RenderConfig::default();
    let net = NetConfig { image_size: 32, feature_dim: 32, base_width: 8, mlp_hidden: 32 };
    let eval_ds = build_dataset_with_threads::<F>(&DatasetConfig { n: 500, fractions: [0.0, 0.0, 1.0], seed: 9000, generator: gen.clone() }, 4).unwrap();
    let eval_idx = eval_ds.indices(Split::Test);
    let labels: Vec<usize> = eval_idx.iter().map(|&i| eval_ds.examples[i].scene.shape_class).collect();
    {
        // pixel + PCA baseline on the eval set
        let pixdim = 32 * 32 * 3;
        let pixels = Tensor::<F>::concat(&eval_idx.iter().map(|&i| eval_ds.examples[i].scene.image.reshape(&[1, pixdim])).collect::<Vec<_>>(), 0);
        let pca = pdr_core::eval::fit_pca(&pixels, 512).unwrap();
        let projected = pca.transform(&pixels);
        let acc = cluster_accuracy(&hac_ward(&projected, 5).unwrap().assignments, &labels).unwrap();
        println!("pixel-PCA baseline on 500 eval scenes: {:.4}", acc);
    }

    let cfg = LooccConfig { mode, batch_size: batch, max_epochs: 1, ..Default::default() };
    let mut state = TrainState::<F>::new(&net, &cfg, 101, 102).unwrap();
    println!("mode {} batch {batch}", mode.name());
    for epoch in 0..=epochs {
        if epoch > 0 {
            let mut c = cfg.clone();
            c.max_epochs = epoch;
            train(&mut state, &ds, &c, &intr, &rcfg, |_| {}).unwrap();
        }
        if epoch % 4 == 0 || epoch == epochs {
            let cos = loo_cos(&state.model, &eval_ds, &eval_idx, &intr, &rcfg);
            let (feats, fs) = features_of(&state.model, &eval_ds, &eval_idx);
            let pcc = pcc_disentanglement(&fs).unwrap().mean_off_diagonal;
            let acc = cluster_accuracy(&hac_ward(&feats, 5).unwrap().assignments, &labels).unwrap();
            let probe = linear_probe(&state.model, &ds, LabelKind::Albedo, &parse_blocks("geom,alb").unwrap(),
                &ProbeConfig { n_train: 100, mode: ProbeMode::Frozen, epochs: 100, seed: 5, ..Default::default() }).unwrap();
            println!("ep {:>2}: cos {:.4} pcc {:.4} cluster {:.4} probe {:.4}", epoch, cos, pcc, acc, probe);
        }
    }
}
