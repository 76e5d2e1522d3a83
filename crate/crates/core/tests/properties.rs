use ewc_gan::checkpoint::{decode, encode};
use ewc_gan::data::{read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
use ewc_gan::eval::{quantize, GrayImage};
use ewc_gan::objectives::ewc_penalty;
use ewc_gan::{CondGan, ConsolidationRecord, GanSpec, LambdaWeight, ParamVector, RngStream};
use proptest::prelude::*;

fn gan(seed: u64) -> CondGan {
    let spec = GanSpec {
        z_dim: 2,
        data_dim: 3,
        hidden: 4,
        classes: 3,
        init_std: 0.3,
    };
    CondGan::init(spec, &mut RngStream::new(seed)).unwrap()
}

fn record(n: usize, rng: &mut RngStream, task: usize) -> ConsolidationRecord {
    ConsolidationRecord {
        task_index: task,
        class_ids: vec![task % 3],
        theta_star: ParamVector::new((0..n).map(|_| rng.normal(0.0, 1.0)).collect()),
        fisher_diag: ParamVector::new((0..n).map(|_| rng.uniform(0.0, 3.0)).collect()),
        sample_count: 4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penalty_is_nonnegative_and_linear_in_lambda(seed in 0u64..1000, lambda in 0.0f64..1e4, k in 0usize..4) {
        let g = gan(seed);
        let n = g.generator_params().numel();
        let mut rng = RngStream::new(seed ^ 0xabc);
        let records: Vec<_> = (0..k).map(|t| record(n, &mut rng, t)).collect();
        let p = ewc_penalty(g.generator_params(), &records, LambdaWeight::new(lambda).unwrap()).unwrap().item();
        let unit = ewc_penalty(g.generator_params(), &records, LambdaWeight::new(1.0).unwrap()).unwrap().item();
        prop_assert!(p >= 0.0);
        prop_assert!((p - lambda * unit).abs() <= 1e-9 * p.abs().max(1.0));
        let split: f64 = records
            .iter()
            .map(|r| ewc_penalty(g.generator_params(), std::slice::from_ref(r), LambdaWeight::new(lambda).unwrap()).unwrap().item())
            .sum();
        prop_assert!((p - split).abs() <= 1e-9 * p.abs().max(1.0));
    }

    #[test]
    fn checkpoint_round_trip(seed in 0u64..1000, k in 0usize..3) {
        let g = gan(seed);
        let n = g.generator_params().numel();
        let mut rng = RngStream::new(seed);
        let records: Vec<_> = (0..k).map(|t| record(n, &mut rng, t)).collect();
        let tasks: Vec<Vec<usize>> = (0..k).map(|t| vec![t % 3]).collect();
        let bytes = encode(&g, &records, &tasks);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.gan.generator_params().flatten(), g.generator_params().flatten());
        prop_assert_eq!(back.gan.discriminator_params().flatten(), g.discriminator_params().flatten());
        prop_assert_eq!(&back.records, &records);
        prop_assert_eq!(&back.completed_tasks, &tasks);
        prop_assert_eq!(encode(&back.gan, &back.records, &back.completed_tasks), bytes.clone());
        let cut = (seed as usize) % bytes.len();
        prop_assert!(decode(&bytes[..cut]).is_err());
    }

    #[test]
    fn idx_round_trip(count in 0usize..6, rows in 1usize..5, cols in 1usize..5, fill in any::<u8>()) {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..count * rows * cols).map(|i| fill.wrapping_add(i as u8)).collect();
        let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
        write_idx_images(dir.path().join("i"), count, rows, cols, &pixels).unwrap();
        write_idx_labels(dir.path().join("l"), &labels).unwrap();
        let back = read_idx_images(dir.path().join("i")).unwrap();
        prop_assert_eq!((back.count, back.rows, back.cols), (count, rows, cols));
        let bytes: Vec<u8> = back.pixels.iter().map(|v| quantize(*v)).collect();
        prop_assert_eq!(bytes, pixels);
        prop_assert_eq!(read_idx_labels(dir.path().join("l")).unwrap(), labels);
    }

    #[test]
    fn quantize_is_round_times_255(v in -0.5f64..1.5) {
        let q = quantize(v);
        prop_assert_eq!(q as f64, (v.clamp(0.0, 1.0) * 255.0).round());
        prop_assert_eq!(quantize(q as f64 / 255.0), q);
    }

    #[test]
    fn pgm_is_header_plus_pixels(w in 1usize..9, h in 1usize..9, seed in 0u64..100) {
        let mut rng = RngStream::new(seed);
        let values: Vec<f64> = (0..w * h).map(|_| rng.uniform(0.0, 1.0)).collect();
        let img = GrayImage::from_unit(w, h, &values).unwrap();
        let pgm = img.to_pgm();
        let header = format!("P5\n{w} {h}\n255\n");
        prop_assert!(pgm.starts_with(header.as_bytes()));
        let body: Vec<u8> = values.iter().map(|v| quantize(*v)).collect();
        prop_assert_eq!(&pgm[header.len()..], &body[..]);
    }
}
