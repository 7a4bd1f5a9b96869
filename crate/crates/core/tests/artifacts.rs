use std::path::Path;

use varcomm::baselines::{export_constellation, import_constellation, qam_constellation};
use varcomm::channels::ChannelFamily;
use varcomm::config::{default_config_text, load_config};
use varcomm::eval::{bler, Scheme, StopRule};
use varcomm::systems::{train, SystemConfig, TrainedSystem};
use varcomm::Error;

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn small_config(seed: u64) -> SystemConfig {
    let mut cfg = SystemConfig::awgn_default(4, 2, seed);
    cfg.encoder_hidden = vec![8];
    cfg.decoder_hidden = vec![8];
    cfg.epochs = 200;
    cfg.noise_samples = 16;
    cfg
}

#[test]
fn imported_qpsk_reproduces_generated_qpsk() {
    let imported = import_constellation(fixture("qpsk.csv")).unwrap();
    assert_eq!(imported, qam_constellation(2, 1).unwrap());
}

#[test]
fn exported_sixteen_qam_reimports_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("qam16.csv");
    let c = qam_constellation(4, 1).unwrap();
    export_constellation(&c, &[("config_hash", "x".into()), ("seed", "0".into())], &path).unwrap();
    assert_eq!(import_constellation(&path).unwrap(), c);
}

#[test]
fn checkpoint_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trained = train(&small_config(1)).unwrap();
    let path = dir.path().join("ckpt.json");
    trained.save(&path).unwrap();
    let back = TrainedSystem::load(&path).unwrap();
    assert_eq!(back, trained);
    assert_eq!(back.decode(trained.constellation.point(2)).unwrap(), 2);
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"format\": \"something-else\"}").unwrap();
    assert!(TrainedSystem::load(&path).is_err());
}

#[test]
fn config_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    for family in [ChannelFamily::Awgn, ChannelFamily::Rbf, ChannelFamily::Laplace, ChannelFamily::Cauchy] {
        let path = dir.path().join(format!("{family}.toml"));
        std::fs::write(&path, default_config_text(family)).unwrap();
        let cfg = load_config(&path).unwrap();
        assert_eq!(cfg.system.channel.family(), family);
        cfg.system.validate().unwrap();
    }
    let missing = load_config(dir.path().join("absent.toml")).unwrap_err();
    assert!(matches!(missing, Error::Config(_)), "{missing}");
}

#[test]
fn short_training_beats_untrained_encoder() {
    let stop = StopRule {
        target_errors: 300,
        max_blocks: 100_000,
        ..StopRule::default()
    };
    let mut untrained_cfg = small_config(2);
    untrained_cfg.epochs = 0;
    let untrained = train(&untrained_cfg).unwrap();
    let trained = train(&small_config(2)).unwrap();
    let before = bler(&Scheme::Learned(&untrained), ChannelFamily::Awgn, 8.0, stop, 5).unwrap();
    let after = bler(&Scheme::Learned(&trained), ChannelFamily::Awgn, 8.0, stop, 5).unwrap();
    assert!(after.bler < before.bler, "{} !< {}", after.bler, before.bler);
    let losses: Vec<f64> = trained.loss_history.iter().map(|l| l.total).collect();
    let head: f64 = losses[..20].iter().sum::<f64>() / 20.0;
    let tail: f64 = losses[losses.len() - 20..].iter().sum::<f64>() / 20.0;
    assert!(tail < head);
}
