use std::path::Path;
use std::process::Command;

use horseshoe_cli::cache::{cache_key, Cache, Lookup};
use horseshoe_cli::commands::{parse_point, run, Artifacts, Command as Cmd, DecayArgs, ThermoArgs};
use horseshoe_cli::config::RunConfig;
use horseshoe::MapParams;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_horseshoe"))
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs"))
}

fn horseshoe(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = bin().args(args).arg("--out").arg(dir.join("out")).arg("--cache-dir").arg(dir.join("cache")).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn config(name: &str) -> String {
    configs().join(name).to_str().unwrap().to_string()
}

#[test]
fn reference_configs_load() {
    let strict = RunConfig::load(&configs().join("ref_strict.json")).unwrap();
    assert_eq!(strict.params, MapParams::ref_strict());
    assert_eq!(strict.seed, 42);
    let ex = RunConfig::load(&configs().join("ref_ex.json")).unwrap();
    assert_eq!(ex.params, MapParams::ref_ex());
}

#[test]
fn config_forms() {
    let dir = tempfile::tempdir().unwrap();
    let bare = dir.path().join("bare.json");
    std::fs::write(&bare, MapParams::ref_ex().to_json()).unwrap();
    assert_eq!(RunConfig::load(&bare).unwrap().params, MapParams::ref_ex());
    let indirect = dir.path().join("indirect.json");
    std::fs::write(&indirect, r#"{"params_file": "bare.json", "seed": 7}"#).unwrap();
    let c = RunConfig::load(&indirect).unwrap();
    assert_eq!((c.params, c.seed), (MapParams::ref_ex(), 7));
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"params_file": "bare.json", "colour": 1}"#).unwrap();
    assert!(RunConfig::load(&unknown).is_err());
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(horseshoe(&["validate", "--config", &config("ref_strict.json")], dir.path()).0, 0);
    assert_eq!(horseshoe(&["validate", "--config", &config("ref_ex.json")], dir.path()).0, 1);
    let mut bad = MapParams::ref_ex();
    bad.lambda = 0.5;
    let path = dir.path().join("bad.json");
    std::fs::write(&path, bad.to_json()).unwrap();
    let (code, stdout, _) = horseshoe(&["validate", "--config", path.to_str().unwrap()], dir.path());
    assert_eq!(code, 2);
    assert!(stdout.contains("Invalid"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/validation.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "invalid");
}

#[test]
fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = horseshoe(&["code", "--config", &config("ref_ex.json"), "--point", "2,2"], dir.path());
    assert_eq!(code, 2);
    let e: serde_json::Value = serde_json::from_str(stdout.trim()).unwrap();
    assert!(e["error"].is_string() && e["message"].is_string());
    assert!(dir.path().join("out/error.json").exists());
    let (code, stdout, _) = horseshoe(&["pressure", "--config", &config("ref_ex.json"), "--phi", "nope"], dir.path());
    assert_eq!(code, 2);
    assert!(stdout.contains("invalid_input"));
    let (code, _, _) = horseshoe(&["validate", "--config", "/nonexistent.json"], dir.path());
    assert_eq!(code, 2);
}

#[test]
fn documented_command_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ex = config("ref_ex.json");
    assert_eq!(horseshoe(&["code", "--config", &ex, "--point", "0,0", "--n", "3"], dir.path()).0, 0);
    assert_eq!(std::fs::read_to_string(dir.path().join("out/code.txt")).unwrap().trim(), "000.0000");
    assert_eq!(horseshoe(&["pressure", "--config", &ex, "--phi", "zero", "--m", "4"], dir.path()).0, 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/pressure.json")).unwrap()).unwrap();
    assert!((v["pressure"].as_f64().unwrap() - 1.0986122886681098).abs() < 1e-10);
    assert_eq!(horseshoe(&["decay", "--config", &ex, "--nmax", "3"], dir.path()).0, 0);
    let csv = std::fs::read_to_string(dir.path().join("out/decay.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n,max_diameter,atoms,ratio,rate");
    assert_eq!(lines.count(), 4);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let strict = config("ref_strict.json");
    for dir in [a.path(), b.path()] {
        for args in [
            vec!["holder", "--config", &strict, "--pairs", "300"],
            vec!["cones", "--config", &strict, "--samples", "100"],
            vec!["lyapunov", "--config", &strict, "--n", "100", "--samples", "3"],
        ] {
            let mut args = args.clone();
            args.push("--no-cache");
            assert_eq!(horseshoe(&args, dir).0, 0, "{args:?}");
        }
    }
    for name in ["holder.json", "holder_pairs.csv", "cones.csv", "lyapunov.json"] {
        let x = std::fs::read(a.path().join("out").join(name)).unwrap();
        let y = std::fs::read(b.path().join("out").join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn warm_cache_matches_cold_run() {
    let dir = tempfile::tempdir().unwrap();
    let ex = config("ref_ex.json");
    let args = ["equilibrium", "--config", &ex, "--phi", "x", "--m", "3"];
    let (code, cold_out, _) = horseshoe(&args, dir.path());
    assert_eq!(code, 0);
    let cold = std::fs::read(dir.path().join("out/equilibrium.json")).unwrap();
    let entries: Vec<_> = std::fs::read_dir(dir.path().join("cache")).unwrap().collect();
    assert_eq!(entries.len(), 1);
    std::fs::remove_dir_all(dir.path().join("out")).unwrap();
    let (code, warm_out, stderr) = horseshoe(&args, dir.path());
    assert_eq!(code, 0);
    assert!(stderr.is_empty(), "{stderr}");
    assert_eq!(cold_out, warm_out);
    assert_eq!(std::fs::read(dir.path().join("out/equilibrium.json")).unwrap(), cold);
}

#[test]
fn corrupted_cache_entry_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let ex = config("ref_ex.json");
    let args = ["decay", "--config", &ex, "--nmax", "2"];
    assert_eq!(horseshoe(&args, dir.path()).0, 0);
    let cold = std::fs::read(dir.path().join("out/decay.csv")).unwrap();
    let entry = std::fs::read_dir(dir.path().join("cache")).unwrap().next().unwrap().unwrap().path();
    let text = std::fs::read_to_string(&entry).unwrap();
    std::fs::write(&entry, text.replacen("max_diameter", "max_diamater", 1)).unwrap();
    let (code, _, stderr) = horseshoe(&args, dir.path());
    assert_eq!(code, 0);
    assert!(stderr.contains("corrupted"), "{stderr}");
    assert_eq!(std::fs::read(dir.path().join("out/decay.csv")).unwrap(), cold);
    // the entry was rewritten
    let (_, _, stderr) = horseshoe(&args, dir.path());
    assert!(stderr.is_empty());
}

#[test]
fn cache_keys_separate_inputs() {
    let p = serde_json::to_string(&MapParams::ref_ex()).unwrap();
    let k = cache_key(&p, "decay", "{}", "v1");
    assert_eq!(k, cache_key(&p, "decay", "{}", "v1"));
    assert_ne!(k, cache_key(&p, "decay", "{}", "v2"));
    assert_ne!(k, cache_key(&p, "atoms", "{}", "v1"));
    assert_ne!(cache_key("ab", "c", "", ""), cache_key("a", "bc", "", ""));
}

#[test]
fn cache_round_trip_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path());
    let p = MapParams::ref_ex();
    let cmd = Cmd::Pressure(ThermoArgs { phi: "cos:0.3".into(), m: 3, resolution: 14 });
    let a: Artifacts = run(&p, 1, &cmd).unwrap();
    assert!(matches!(cache.get("k"), Lookup::Miss));
    cache.put("k", &a).unwrap();
    match cache.get("k") {
        Lookup::Hit(b) => assert_eq!(a, b),
        _ => panic!("expected a hit"),
    }
    std::fs::write(cache.path("k"), "{").unwrap();
    assert!(matches!(cache.get("k"), Lookup::Corrupt(_)));
    let again = run(&p, 1, &Cmd::Decay(DecayArgs { nmax: 2, resolution: 10 })).unwrap();
    assert_eq!(again, run(&p, 1, &Cmd::Decay(DecayArgs { nmax: 2, resolution: 10 })).unwrap());
}

#[test]
fn point_parsing() {
    assert_eq!(parse_point("0.5, 0.25").unwrap(), horseshoe::Point::new(0.5, 0.25));
    assert!(parse_point("0.5").is_err());
    assert!(parse_point("a,b").is_err());
    assert!(parse_point("nan,0").is_err());
}
