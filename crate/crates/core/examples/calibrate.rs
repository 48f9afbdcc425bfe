//! Calibration harness: runs the full downstream evaluation flow on one
//! seed pair and prints every number the acceptance thresholds depend on.

use std::time::Instant;

use pdr_core::ad::no_grad;
use pdr_core::eval::{
    cluster_accuracy, fit_pca, hac_ward, linear_probe, pcc_disentanglement, LabelKind,
    ProbeConfig, ProbeMode,
};
use pdr_core::loocc::{
    cyclic_encode, leave_one_out, train, LooccConfig, LooccMode, TrainState,
};
use pdr_core::nets::{extract_representation, parse_blocks, FeatureSet, Model};
use pdr_core::render::RenderConfig;
use pdr_core::scene::{build_dataset_with_threads, Dataset, DatasetConfig, GeneratorConfig, Split};
use pdr_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

type F = f32;

fn net_cfg(image_size: usize, feat: usize) -> pdr_core::nets::NetConfig {
    pdr_core::nets::NetConfig { image_size, feature_dim: feat, base_width: 8, mlp_hidden: 32 }
}

fn features_of(
    model: &Model<F>,
    ds: &Dataset<F>,
    idx: &[usize],
) -> (Tensor<F>, FeatureSet<F>) {
    let _g = no_grad();
    let blocks = parse_blocks("geom,alb").unwrap();
    let mut reps = Vec::new();
    let mut per: Vec<Vec<Tensor<F>>> = vec![Vec::new(); 4];
    for chunk in idx.chunks(32) {
        let x = pdr_core::loocc::assemble_batch(ds, chunk);
        let z = model.encode(&x).unwrap();
        reps.push(extract_representation(&z, &blocks).unwrap());
        per[0].push(z.z_geom);
        per[1].push(z.z_alb);
        per[2].push(z.z_cam);
        per[3].push(z.z_light);
    }
    (
        Tensor::concat(&reps, 0),
        FeatureSet {
            z_geom: Tensor::concat(&per[0], 0),
            z_alb: Tensor::concat(&per[1], 0),
            z_cam: Tensor::concat(&per[2], 0),
            z_light: Tensor::concat(&per[3], 0),
        },
    )
}

fn mean_loo_cos(model: &Model<F>, ds: &Dataset<F>, idx: &[usize], intr: &pdr_core::render::CameraIntrinsics, rcfg: &RenderConfig) -> f64 {
    let _g = no_grad();
    let cfg = LooccConfig { mode: LooccMode::LooccLv, batch_size: 16, ..Default::default() };
    let mut total = 0.0;
    let mut count = 0usize;
    for (bi, chunk) in idx.chunks(16).enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(777 + bi as u64);
        let x = pdr_core::loocc::assemble_batch(ds, chunk);
        let (zx, zaug, which) = cyclic_encode(&x, model, intr, rcfg, &cfg, &mut rng).unwrap();
        let u = leave_one_out(&zx, which);
        let ua = leave_one_out(&zaug, which);
        let dots = u.mul(&ua).sum_axis(1, false).to_vec();
        total += dots.iter().map(|v| *v as f64).sum::<f64>();
        count += dots.len();
    }
    total / count as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed_base: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let n_scenes: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(512);
    let image_size: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let max_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(20);
    let batch_none: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(4);
    let batch_lv: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(16);
    let feat: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(32);

    println!("== calibrate: seeds {seed_base}.. n {n_scenes} size {image_size} epochs {max_epochs} batch none/{batch_none} lv/{batch_lv} feat {feat}");
    let t0 = Instant::now();
    let gen = GeneratorConfig { image_size, ..Default::default() };
    let ds = build_dataset_with_threads::<F>(
        &DatasetConfig { n: n_scenes, fractions: [0.8, 0.1, 0.1], seed: seed_base, generator: gen.clone() },
        4,
    )
    .unwrap();
    println!("dataset built in {:.1}s", t0.elapsed().as_secs_f64());
    let intr = gen.intrinsics();
    let rcfg = RenderConfig::default();
    let net = net_cfg(image_size, feat);

    let mut models = Vec::new();
    for (mode, batch) in [(LooccMode::None, batch_none), (LooccMode::LooccLv, batch_lv)] {
        let cfg = LooccConfig { mode, batch_size: batch, max_epochs, ..Default::default() };
        let t = Instant::now();
        let mut state = TrainState::<F>::new(&net, &cfg, seed_base + 1, seed_base + 2).unwrap();
        let hist = train(&mut state, &ds, &cfg, &intr, &rcfg, |_| {}).unwrap();
        state.restore_best();
        let e0 = hist[0].val_recon;
        let best = state.stopper.best;
        println!(
            "mode {:<8}: epochs {} val {:.4} -> best {:.4} (ratio {:.3}) in {:.0}s",
            mode.name(),
            hist.last().unwrap().epoch,
            e0,
            best,
            best / e0,
            t.elapsed().as_secs_f64()
        );
        models.push((mode, state));
    }

    let test_idx = ds.indices(Split::Test);

    // criterion 4: leave-one-out cosine similarity
    let mut cos = Vec::new();
    for (mode, state) in &models {
        let c = mean_loo_cos(&state.model, &ds, &test_idx, &intr, &rcfg);
        println!("mode {:<8}: mean leave-one-out cos = {:.4}", mode.name(), c);
        cos.push(c);
    }
    println!("criterion4 gap (lv - none) = {:.4} (need >= 0.05)", cos[1] - cos[0]);

    // criterion 5: PCC direction
    let mut pccs = Vec::new();
    for (mode, state) in &models {
        let (_, fs) = features_of(&state.model, &ds, &test_idx);
        let p = pcc_disentanglement(&fs).unwrap();
        println!("mode {:<8}: mean off-diag PCC = {:.4}", mode.name(), p.mean_off_diagonal);
        pccs.push(p.mean_off_diagonal);
    }
    println!("criterion5 lv < none: {}", pccs[1] < pccs[0]);

    // criterion 6: shape clustering vs pixel PCA baseline
    let shape_labels: Vec<usize> = test_idx.iter().map(|&i| ds.examples[*(&i)].scene.shape_class).collect();
    let k = 5;
    let pixdim = image_size * image_size * 3;
    let pixels = Tensor::<F>::concat(
        &test_idx
            .iter()
            .map(|&i| ds.examples[i].scene.image.reshape(&[1, pixdim]))
            .collect::<Vec<_>>(),
        0,
    );
    let pca = fit_pca(&pixels, 512).unwrap();
    let projected = pca.transform(&pixels);
    let base_acc = cluster_accuracy(&hac_ward(&projected, k).unwrap().assignments, &shape_labels).unwrap();
    println!("pixel+PCA baseline cluster acc = {:.4}", base_acc);
    for (mode, state) in &models {
        let (feats, _) = features_of(&state.model, &ds, &test_idx);
        let acc = cluster_accuracy(&hac_ward(&feats, k).unwrap().assignments, &shape_labels).unwrap();
        println!("mode {:<8}: cluster acc = {:.4} (need >= baseline + 0.05 = {:.4})", mode.name(), acc, base_acc + 0.05);
    }

    // criterion 7: frozen albedo probe, n_train 100
    for (mode, state) in &models {
        let cfg = ProbeConfig { n_train: 100.min(ds.split_len(Split::Train)), mode: ProbeMode::Frozen, epochs: 100, seed: 5, ..Default::default() };
        let blocks = parse_blocks("geom,alb").unwrap();
        let acc = linear_probe(&state.model, &ds, LabelKind::Albedo, &blocks, &cfg).unwrap();
        println!("mode {:<8}: frozen albedo probe acc = {:.4} (need >= 0.5)", mode.name(), acc);
    }

    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
