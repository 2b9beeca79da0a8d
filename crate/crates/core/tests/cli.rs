use std::path::{Path, PathBuf};

use contact_hj::cli::{self, Args, Status};

fn demo(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("demos")
        .join(format!("{name}.toml"))
}

fn args(config: PathBuf, out: &Path) -> Args {
    Args {
        config,
        task: Vec::new(),
        out: Some(out.to_path_buf()),
        seed: None,
        tolerance: Vec::new(),
    }
}

fn report(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn oscillator_demo_loads_with_expected_tasks() {
    let config = cli::load_config(&demo("oscillator")).unwrap();
    assert_eq!(config.system.alpha, Some(0.5));
    let kinds: Vec<_> = config.tasks.iter().map(|task| task.kind.as_str()).collect();
    assert_eq!(kinds, ["verify", "integrate", "compare"]);
}

#[test]
fn oscillator_demo_passes_the_law_check() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli::execute(&args(demo("oscillator"), dir.path())), 0);
    let r = report(dir.path());
    let integrate = &r["tasks"][1];
    assert_eq!(integrate["status"], "pass");
    assert!(integrate["residuals"]["exponential_law"].as_f64().unwrap() < 1e-5);
}

#[test]
fn thermo_demo_reconstructs_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli::execute(&args(demo("thermo"), dir.path())), 0);
    let r = report(dir.path());
    let tasks = r["tasks"].as_array().unwrap();
    assert!(tasks.iter().all(|task| task["status"] == "pass"), "{r}");
    let compare = tasks.iter().find(|task| task["name"] == "compare").unwrap();
    assert!(compare["residuals"]["max_abs"].as_f64().unwrap() < 1e-6);
    let csv = std::fs::read_to_string(dir.path().join("reconstruct.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,y1,y2,z\n"));
    assert_eq!(csv.lines().count(), 1002);
}

#[test]
fn broken_demo_fails_verify_and_skips_reconstruct() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cli::execute(&args(demo("broken"), dir.path())),
        cli::EXIT_FAIL
    );
    let r = report(dir.path());
    assert_eq!(r["tasks"][0]["status"], "fail");
    assert!(
        r["tasks"][0]["residuals"]["pseudo_isotropy"]
            .as_f64()
            .unwrap()
            > 0.0
    );
    assert_eq!(r["tasks"][1]["status"], "skipped");
}

#[test]
fn sphere_demo_passes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli::execute(&args(demo("sphere"), dir.path())), 0);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing_h = "[system]\nfamily = \"raw\"\nn = 1\n[[tasks]]\nkind = \"compare\"\nfiles = [\"a.csv\", \"b.csv\"]\n";
    let path = write_config(dir.path(), missing_h);
    assert_eq!(
        cli::execute(&args(path.clone(), dir.path())),
        cli::EXIT_CONFIG
    );
    let err = cli::load_config(&path).unwrap_err().to_string();
    assert_eq!(err, "system.H required");

    let mut cli_args = args(demo("thermo"), dir.path());
    cli_args.tolerance = vec!["compare=-1".into()];
    assert_eq!(cli::execute(&cli_args), cli::EXIT_CONFIG);

    let bad_expr = "[system]\nfamily = \"raw\"\nn = 1\nH = \"y1 + w\"\n[[tasks]]\nkind = \"compare\"\nfiles = [\"a.csv\", \"b.csv\"]\n";
    let path = write_config(dir.path(), bad_expr);
    assert_eq!(cli::execute(&args(path, dir.path())), cli::EXIT_CONFIG);
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // q reaches zero before t = 3 for the underdamped oscillator.
    let text = std::fs::read_to_string(demo("oscillator"))
        .unwrap()
        .replace("t_end = 0.5", "t_end = 3.0");
    let path = write_config(dir.path(), &text);
    let mut cli_args = args(path, dir.path());
    cli_args.task = vec!["integrate".into()];
    assert_eq!(cli::execute(&cli_args), cli::EXIT_NUMERICAL);
}

#[test]
fn task_filter_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let mut cli_args = args(demo("thermo"), dir.path());
    cli_args.task = vec!["verify".into()];
    cli_args.seed = Some(7);
    let config = cli::resolve(&cli_args).unwrap();
    assert_eq!(config.seed, 7);
    assert_eq!(config.tasks.len(), 1);

    // Dropping the trajectory a compare depends on is a configuration error.
    cli_args.task = vec!["compare".into()];
    assert!(cli::resolve(&cli_args).is_err());
}

#[test]
fn reports_are_deterministic() {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let runs: Vec<_> = [d1.path(), d2.path()]
        .iter()
        .map(|out| {
            let mut cli_args = args(demo("thermo"), out);
            cli_args.task = vec!["verify".into(), "first-integrals".into()];
            let config = cli::resolve(&cli_args).unwrap();
            let model = cli::Model::build(&config).unwrap();
            cli::run(&config, &model, out).unwrap()
        })
        .collect();
    for (first, second) in runs[0].tasks.iter().zip(&runs[1].tasks) {
        assert_eq!(first.residuals, second.residuals);
        assert_eq!(first.status, Status::Pass);
    }
}

#[test]
fn compare_reads_exported_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cli_args = args(demo("thermo"), dir.path());
    cli_args.task = vec!["reconstruct".into(), "compare".into()];
    assert_eq!(cli::execute(&cli_args), 0);
    let text = format!(
        "[system]\nfamily = \"thermo\"\n[[tasks]]\nkind = \"compare\"\nfiles = [{:?}, {:?}]\n",
        dir.path().join("reconstruct.csv"),
        dir.path().join("compare-rk4.csv"),
    );
    let out = dir.path().join("files");
    let path = write_config(dir.path(), &text);
    assert_eq!(cli::execute(&args(path, &out)), 0);
    let from_files = report(&out)["tasks"][0]["residuals"]["max_abs"]
        .as_f64()
        .unwrap();
    let in_memory = report(dir.path())["tasks"][1]["residuals"]["max_abs"]
        .as_f64()
        .unwrap();
    assert_eq!(from_files, in_memory);
}
