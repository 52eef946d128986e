use std::path::Path;

use trgl::config::ExperimentConfig;
use trgl::verify::SuiteSettings;

fn configs_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

#[test]
fn shipped_configs_parse_validate_and_round_trip() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") || path.file_stem().unwrap() == "acceptance" {
            continue;
        }
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        for v in cfg.resolved_variants() {
            cfg.plan_for(&v, cfg.seeds[0]).unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 4);
}

#[test]
fn acceptance_settings_parse() {
    let text = std::fs::read_to_string(configs_dir().join("acceptance.toml")).unwrap();
    let s: SuiteSettings = toml::from_str(&text).unwrap();
    assert_eq!(s.prop1_seeds.len(), 5);
    assert!(toml::from_str::<SuiteSettings>("prop1_treshold = 0.5").is_err());
}
