use std::path::Path;
use std::process::{Command, Output};

fn caia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_caia")).args(args).env_remove("CAIA_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.conf");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn column(csv: &str, row: usize, name: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == name).unwrap();
    lines.nth(row).unwrap().split(',').nth(idx).unwrap().to_owned()
}

#[test]
fn verify_aided_channel_passes() {
    let o = caia(&["verify", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with("receiver,interference_rank,total_rank,decode_residual,pass\n"));
    assert_eq!(s.lines().filter(|l| l.ends_with(",true")).count(), 3);
}

#[test]
fn verify_generic_channel_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "# plain Rayleigh channel\nchannel = generic\n");
    let o = caia(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("condition_i,condition_j,index,re,im\n"));
}

#[test]
fn verify_odd_multiplicity_target_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "n = 3\nn1 = 2\n");
    let o = caia(&["verify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).lines().skip(1).all(|l| l.contains(",3,5,")));
}

#[test]
fn malformed_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["K = three\n", "p = 1\np = 2\n", "nonsense\n", "experiment = pair\n"] {
        let cfg = config(dir.path(), text);
        assert_eq!(caia(&["verify", "--config", &cfg]).status.code(), Some(64), "{text:?}");
    }
    assert_eq!(caia(&["no-such-command"]).status.code(), Some(64));
}

#[test]
fn invalid_thread_count_is_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_caia")).arg("pair").env("CAIA_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(64));
}

#[test]
fn demo_reproduces_example() {
    let o = caia(&["demo-paper-example"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("n = 3, n1 = 2"));
    assert_eq!(s.lines().last(), Some("PASS"));
}

#[test]
fn pair_is_reproducible() {
    let a = caia(&["pair", "--seed", "7"]);
    let b = caia(&["pair", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    assert!(s.starts_with(
        "seed,aided_i,aided_j,v1,v2,v3,u1,u2,u3,required_re,required_im,residual_power,sinr\n"
    ));
    assert_eq!(s.lines().count(), 11);
    assert_ne!(s, stdout(&caia(&["pair", "--seed", "8"])));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.csv");
    let o = caia(&["pair", "--trials", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 3);
}

#[test]
fn delay_phase_matches_closed_form() {
    let o = caia(&["delay-phase", "--seed", "11", "--trials", "100000"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.starts_with(
        "scheme,K,p,psi,delta_phi,delta_h,trials,empirical_mean,empirical_std,theoretical\n"
    ));
    assert_eq!(column(&s, 0, "scheme"), "CAIA");
    let mean: f64 = column(&s, 0, "empirical_mean").parse().unwrap();
    assert!((mean / (10.0 * std::f64::consts::PI) - 1.0).abs() < 0.03, "{mean}");
    assert_eq!(column(&s, 1, "scheme"), "EIA");
    assert_eq!(column(&s, 1, "trials"), "0");
    assert_eq!(column(&s, 1, "empirical_mean"), "");
}

#[test]
fn delay_magnitude_caia_beats_eia() {
    let o = caia(&["delay-magnitude", "--trials", "200", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    let caia_delay: f64 = column(&s, 0, "theoretical").parse().unwrap();
    let eia_delay: f64 = column(&s, 1, "theoretical").parse().unwrap();
    assert!(caia_delay < eia_delay);
}
