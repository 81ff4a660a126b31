mod common;

use stochpool::experiment::ExperimentConfig;

#[test]
fn shipped_configs_parse_and_resolve() {
    let dir = common::repo_root().join("configs");
    let mut names = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let config = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            config.network().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let back = ExperimentConfig::from_json(&config.to_json()).unwrap();
            assert_eq!(back, config);
            names.push(path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    names.sort();
    for required in ["mnist-full.json", "cifar10-full.json", "mnist1000-desk.json", "cifar2000-desk.json"] {
        assert!(names.iter().any(|n| n == required), "missing {required}");
    }
}

#[test]
fn full_configs_carry_the_reference_schedule() {
    for name in ["mnist-full.json", "cifar10-full.json", "cifar100-full.json", "svhn-full.json"] {
        let c = ExperimentConfig::load(common::repo_root().join("configs").join(name)).unwrap();
        assert_eq!(c.epochs, 280, "{name}");
        assert_eq!(c.optimizer.momentum, 0.9);
        assert_eq!(c.optimizer.weight_decay, 0.001);
        assert_eq!((c.optimizer.lr_conv, c.optimizer.lr_softmax), (1e-2, 1.0));
        assert_eq!(c.optimizer.final_lr_fraction, 0.01);
    }
}
