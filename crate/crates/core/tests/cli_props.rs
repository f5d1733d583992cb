use bethe_lab::cli::run_with;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run_with(std::iter::once("bethe-lab").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

const KSPIN: &[&str] = &["--model", "kspin", "--k", "2", "--d", "3", "--beta", "1"];
const POTTS: &[&str] = &["--model", "potts", "--q", "2", "--d", "3", "--beta", "1"];

fn invocations() -> Vec<Vec<&'static str>> {
    let with = |cmd: &'static str, model: &[&'static str], rest: &[&'static str]| {
        let mut v = vec![cmd];
        v.extend_from_slice(model);
        v.extend_from_slice(rest);
        v
    };
    vec![
        with("graph", KSPIN, &["--n", "10"]),
        with("graph", POTTS, &["--n", "10", "--kind", "simple"]),
        with("graph", POTTS, &["--kind", "tree", "--constraints", "4"]),
        with("exact", POTTS, &["--n", "6", "--marginals"]),
        with("bp", KSPIN, &["--n", "8", "--init", "random", "--marginals"]),
        with("check-pos", KSPIN, &["--trials", "20", "--witness"]),
        with("decompose", POTTS, &["--n", "6", "--samples", "50"]),
        with("popdyn", POTTS, &["--size", "50", "--sweeps", "5", "--samples", "500"]),
        with("free-energy", POTTS, &["--method", "bp", "--n", "6,8", "--graphs", "3"]),
        with("free-energy", POTTS, &["--method", "popdyn", "--size", "50", "--sweeps", "5", "--samples", "500"]),
        vec!["maxcut", "--grid", "2,3", "--size", "50", "--sweeps", "5", "--samples", "500", "--brute-graphs", "2", "--brute-n", "8"],
        vec!["maxsat", "--grid", "2", "--size", "50", "--sweeps", "5", "--samples", "500"],
        vec!["alpha", "--grid", "2", "--size", "50", "--sweeps", "5", "--samples", "500"],
        with("interpolate", POTTS, &["--n", "6", "--graphs", "5", "--t-grid", "0,0.5,1"]),
    ]
}

fn seeded(inv: &[&'static str], seed: &'static str) -> Vec<&'static str> {
    let mut v = inv.to_vec();
    v.extend(["--seed", seed]);
    v
}

#[test]
fn every_subcommand_is_deterministic() {
    for inv in invocations() {
        let args = seeded(&inv, "17");
        let (c1, o1, e1) = run(&args);
        assert_eq!(c1, 0, "{args:?}: {e1}");
        assert!(!o1.is_empty(), "{args:?}");
        let (c2, o2, _) = run(&args);
        assert_eq!(c2, 0);
        assert_eq!(o1, o2, "{args:?}");
    }
}

#[test]
fn different_seeds_give_different_graphs() {
    let a = run(&seeded(&invocations()[0], "1")).1;
    let b = run(&seeded(&invocations()[0], "2")).1;
    assert_ne!(a, b);
}

#[test]
fn emitted_config_round_trips_for_every_subcommand() {
    let dir = std::env::temp_dir().join(format!("bethe-lab-cli-props-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (i, inv) in invocations().into_iter().enumerate() {
        let mut args = seeded(&inv, "5");
        args.extend(["--emit", "config"]);
        let (code, text, err) = run(&args);
        assert_eq!(code, 0, "{args:?}: {err}");
        text.parse::<toml::Table>().unwrap();
        let path = dir.join(format!("{i}.toml"));
        std::fs::write(&path, &text).unwrap();
        let p = path.to_str().unwrap();
        let (code, again, err) = run(&[inv[0], "--config", p, "--emit", "config"]);
        assert_eq!(code, 0, "{err}");
        assert_eq!(again, text, "{args:?}");
        // running from the file matches running from the flags
        let direct = run(&seeded(&inv, "5")).1;
        let from_file = run(&[inv[0], "--config", p]).1;
        assert_eq!(direct, from_file, "{args:?}");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn flags_override_config_file() {
    let (_, text, _) = run(&["check-pos", "--model", "kspin", "--k", "2", "--d", "3", "--beta", "1", "--trials", "7", "--seed", "1", "--emit", "config"]);
    let path = std::env::temp_dir().join(format!("bethe-lab-override-{}.toml", std::process::id()));
    std::fs::write(&path, text).unwrap();
    let (code, text, _) = run(&["check-pos", "--config", path.to_str().unwrap(), "--trials", "9", "--emit", "config"]);
    assert_eq!(code, 0);
    let t: toml::Table = text.parse().unwrap();
    assert_eq!(t["trials"].as_integer(), Some(9));
    std::fs::remove_file(&path).ok();
}

#[test]
fn validation_errors() {
    assert_eq!(run(&["exact", "--model", "potts", "--q", "1", "--d", "3", "--beta", "1", "--seed", "1"]).0, 2);
    assert_eq!(run(&["bp", "--model", "kspin", "--k", "2", "--d", "3", "--beta", "1", "--seed", "1", "--damping", "1.5"]).0, 2);
    assert_eq!(run(&["graph", "--model", "kspin", "--k", "2", "--d", "3", "--beta", "1", "--seed", "1", "--bogus"]).0, 2);
}

#[test]
fn unstabilized_estimates_warn_on_the_given_stream() {
    let (code, out, err) = run(&["alpha", "--grid", "1,2", "--size", "50", "--sweeps", "5", "--samples", "500", "--seed", "3"]);
    assert_eq!(code, 0);
    let rec: serde_json::Value = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(rec["stabilized"] == false, err.contains("did not stabilize"), "{err}");
}
