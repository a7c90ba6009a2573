use std::path::{Path, PathBuf};
use std::process::Command;

use oad_cli::convert::{convert_dataset, ConvertOptions};
use oad_cli::embeddings::export_embeddings;
use oad_cli::experiment::{run_dynamic_suite, run_experiment, run_group_size_sweep};
use oad_cli::{parameter_counts, ExperimentConfig, Method};
use oad_core::graph::synthetic::CitationLike;
use oad_core::graph::{GraphDataset, Labels, SplitSizes};
use oad_core::models::{count_parameters, Checkpoint, ModelConfig, StudentModel};
use proptest::prelude::*;

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("small.json");
    std::fs::write(&data, CitationLike::small(4).generate().unwrap().to_json_string().unwrap()).unwrap();
    (dir, data)
}

fn quick(data: &Path, out: &Path, extra: &str) -> ExperimentConfig {
    let text = format!(
        "dataset={}\noutput={}\ntrain.epochs_warmup=3\ntrain.epochs_online=3\ngroup_size=3\n{extra}",
        data.display(),
        out.display()
    );
    let text = if extra.contains("repeats=") { text } else { text + "repeats=2\n" };
    ExperimentConfig::parse(&text).unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn reruns_reproduce_result_files() {
    let (dir, data) = workspace();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out_a = run_experiment(&quick(&data, &a, "method=oad\n")).unwrap();
    run_experiment(&quick(&data, &b, "method=oad\n")).unwrap();
    for f in ["results.csv", "summary.csv", "epochs.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let strip = |p: &Path| read(p).lines().filter(|l| !l.starts_with("output=")).collect::<Vec<_>>().join("\n");
    assert_eq!(strip(&a.join("config.txt")), strip(&b.join("config.txt")));
    for seed in 0..2 {
        for m in 0..3 {
            let f = format!("checkpoints/oad-seed{seed}-student{m}.json");
            assert_eq!(read(&a.join(&f)), read(&b.join(&f)), "{f}");
        }
    }
    // a saved student feeds straight into the embedding export
    let ds = GraphDataset::load(&data).unwrap();
    let csv = dir.path().join("emb.csv");
    export_embeddings(&a.join("checkpoints/oad-seed0-student0.json"), &ds, 0, 1, &csv).unwrap();
    assert!(read(&csv).lines().count() > ds.graphs()[0].num_nodes());
    let results = read(&a.join("results.csv"));
    assert!(results.starts_with("# oad results v1\n"));
    assert!(!results.contains("seconds"));
    assert!(read(&a.join("timing.csv")).contains("seconds"));
    assert_eq!(out_a.rows.len(), 2);
    assert!(out_a.rows.iter().all(|r| (0.0..=1.0).contains(&r.metric)));
    // 6 epochs x 3 students x 2 seeds
    assert_eq!(read(&a.join("epochs.csv")).lines().count(), 2 + 36);
}

#[test]
fn parameter_columns_match_the_formula() {
    let (dir, data) = workspace();
    let ds = GraphDataset::load(&data).unwrap();
    let cfg = quick(&data, &dir.path().join("p"), "method=oad\nrepeats=1\n");
    let out = run_experiment(&cfg).unwrap();
    let r = &out.rows[0];
    let student = cfg.student.build(cfg.arch, ds.num_classes()).unwrap();
    assert_eq!(r.student_params, count_parameters(&student, ds.num_features()));
    let counts = parameter_counts(&cfg, ds.num_features(), ds.num_classes()).unwrap();
    assert_eq!(r.total_params, counts.group);
    assert_eq!(r.teacher_params, 0);
}

#[test]
fn single_repeat_leaves_std_empty() {
    let (dir, data) = workspace();
    let cfg = quick(&data, &dir.path().join("s"), "method=single\nrepeats=1\n");
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.summary[0].std, None);
    let text = read(&out.dir.join("summary.csv"));
    let row = text.lines().nth(2).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[8], "", "{row}");
}

#[test]
fn group_of_one_matches_single_student() {
    let (dir, data) = workspace();
    let single = run_experiment(&quick(&data, &dir.path().join("one"), "method=single\n")).unwrap();
    let sweep = run_group_size_sweep(&quick(&data, &dir.path().join("sw"), ""), &[1, 2]).unwrap();
    let ones: Vec<f64> = sweep.rows.iter().filter(|r| r.group_size == 1).map(|r| r.metric).collect();
    let singles: Vec<f64> = single.rows.iter().map(|r| r.metric).collect();
    assert_eq!(ones, singles);
    assert_eq!(sweep.summary.len(), 2);
    assert!(sweep.dir.join("sweep_summary.csv").exists());
}

#[test]
fn dynamic_level_zero_matches_static_runs() {
    let (dir, data) = workspace();
    let cfg = quick(
        &data,
        &dir.path().join("dyn"),
        "repeats=1\nperturbation.kind=edge_removal\nperturbation.level=0.1\n",
    );
    let out = run_dynamic_suite(&cfg, &[0.0, 0.2]).unwrap();
    assert_eq!(out.deltas.len(), 2);
    assert_eq!(out.rows.len(), 6);
    let d0 = &out.deltas[0];

    let metric = |method: &str| {
        let mut c = cfg.clone();
        c.perturbation = None;
        c.method = method.parse().unwrap();
        c.output = dir.path().join(format!("static-{method}"));
        run_experiment(&c).unwrap().rows[0].metric
    };
    let (s, k, o) = (metric("single"), metric("kd"), metric("oad"));
    assert_eq!((d0.student, d0.kd, d0.oad), (s, k, o));
    assert_eq!(d0.kd_minus_student, k - s);
    assert_eq!(d0.oad_minus_student, o - s);
    // the teacher is trained once per seed and reused across levels
    assert_eq!(std::fs::read_dir(out.dir.join("teachers")).unwrap().count(), 1);
}

#[test]
fn cached_teacher_is_reused() {
    let (dir, data) = workspace();
    let out = dir.path().join("kd");
    let cfg = quick(&data, &out, "method=kd\nrepeats=1\n");
    let first = run_experiment(&cfg).unwrap();
    let cached: Vec<_> = std::fs::read_dir(out.join("teachers")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(cached.len(), 1);
    let stamp = std::fs::metadata(&cached[0]).unwrap().modified().unwrap();
    let second = run_experiment(&cfg).unwrap();
    assert_eq!(std::fs::metadata(&cached[0]).unwrap().modified().unwrap(), stamp);
    assert_eq!(first.rows, second.rows);
    assert!(first.rows[0].teacher_params > first.rows[0].student_params);

    // a configured checkpoint is used as is
    let with_ckpt = quick(
        &data,
        &dir.path().join("kd2"),
        &format!("method=fitnet\nrepeats=1\nteacher.checkpoint={}\n", cached[0].display()),
    );
    let r = run_experiment(&with_ckpt).unwrap();
    assert!(!r.dir.join("teachers").exists());
}

#[test]
fn every_method_runs() {
    let (dir, data) = workspace();
    for m in Method::ALL {
        let cfg = quick(&data, &dir.path().join(m.name()), &format!("method={}\nrepeats=1\n", m.name()));
        let out = run_experiment(&cfg).unwrap();
        let r = &out.rows[0];
        assert_eq!(r.method, m.name());
        assert_eq!(r.group_size, if m.is_group() { 3 } else { 1 });
        if m == Method::Ensemble {
            assert_eq!(r.metric, r.ensemble_test);
        } else {
            assert_eq!(r.metric, r.best_test);
        }
    }
}

#[test]
fn embeddings_export() {
    let (dir, data) = workspace();
    let ds = GraphDataset::load(&data).unwrap();
    let model = StudentModel::new(ModelConfig::gcn(vec![8, 3]), ds.num_features(), 5).unwrap();
    let ckpt = dir.path().join("m.json");
    Checkpoint::from_student(&model).save(&ckpt).unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let anchor = export_embeddings(&ckpt, &ds, 0, 7, &a).unwrap();
    export_embeddings(&ckpt, &ds, 0, 7, &b).unwrap();
    assert_eq!(read(&a), read(&b));
    let text = read(&a);
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# oad embeddings v1"));
    assert_eq!(lines.next().unwrap(), "node,distance,h0,h1,h2,h3,h4,h5,h6,h7");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), ds.graphs()[0].num_nodes());
    assert_eq!(rows[anchor][1], 0.0);
    assert!(rows.iter().all(|r| r[1] >= 0.0));

    let wrong = StudentModel::new(ModelConfig::gcn(vec![8, 3]), 3, 5).unwrap();
    Checkpoint::from_student(&wrong).save(&ckpt).unwrap();
    assert!(export_embeddings(&ckpt, &ds, 0, 7, &a).is_err());
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn convert_toy_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let edges = write(d, "edges.txt", "0 1\n1 0\n0 1\n");
    let feats = write(d, "x.csv", "1,0,2\n0,1,0\n");
    let labels = write(d, "y.csv", "0\n1\n");
    let split = write(d, "split.txt", "train\ntest\n");
    let out = d.join("toy.json");
    let opts = ConvertOptions {
        name: "toy".into(),
        split_file: Some(split),
        split: SplitSizes::default(),
        seed: 0,
    };
    let ds = convert_dataset(&edges, &feats, &labels, &out, &opts).unwrap();
    let back = GraphDataset::load(&out).unwrap();
    assert_eq!(back.to_json_string().unwrap(), ds.to_json_string().unwrap());
    let g = &back.graphs()[0];
    assert_eq!(g.num_edges(), 1);
    assert!(g.adjacency().is_symmetric());
    assert_eq!(g.labels(), &Labels::Single(vec![0, 1]));

    // a directed edge list comes out symmetric
    let directed = write(d, "dir.txt", "# comment\n1,0\n");
    let ds = convert_dataset(&directed, &feats, &labels, &out, &opts).unwrap();
    assert_eq!(ds.graphs()[0].adjacency().get(0, 1), 1.0);
    assert_eq!(ds.graphs()[0].adjacency().get(1, 0), 1.0);

    let three = write(d, "y3.csv", "0\n1\n1\n");
    let e = convert_dataset(&edges, &feats, &three, &out, &opts).unwrap_err();
    assert!(e.to_string().contains("label rows"), "{e}");
    let far = write(d, "far.txt", "0 5\n");
    assert!(convert_dataset(&far, &feats, &labels, &out, &opts).is_err());
}

fn oad(args: &[&str], root: Option<&Path>) -> std::process::Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_oad"));
    c.args(args).env("RUST_LOG", "error");
    match root {
        Some(r) => c.env("OAD_OUTPUT_ROOT", r),
        None => c.env_remove("OAD_OUTPUT_ROOT"),
    };
    c.output().unwrap()
}

#[test]
fn binary_exit_codes_and_output_root() {
    let (dir, data) = workspace();
    let root = dir.path().join("root");
    let data_s = data.display().to_string();
    let base = ["--dataset", &data_s, "--repeats", "1", "--set", "train.epochs_warmup=2", "--set", "train.epochs_online=1"];

    let mut ok: Vec<&str> = vec!["run"];
    ok.extend(base);
    ok.extend(["--method", "single", "--output", "rel"]);
    let out = oad(&ok, Some(&root));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("rel/results.csv").exists());

    let out = oad(&["run", "--set", "nonsense=1"], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonsense"));

    let mut bad: Vec<&str> = vec!["run"];
    bad.extend(base);
    let out_dir = dir.path().join("div").display().to_string();
    bad.extend(["--method", "single", "--set", "train.lr=1e300", "--output", &out_dir]);
    assert_eq!(oad(&bad, None).status.code(), Some(2));

    let out = oad(&["params", "--preset", "cora", "--arch", "gcn"], None);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("student\t23063"), "{text}");
    assert!(text.contains("teacher\t184455"), "{text}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn config_round_trip(
        lr in 1e-6f64..1.0,
        wd in 0.0f64..0.01,
        seed in any::<u64>(),
        alpha in 0.0f64..5.0,
        beta in 0.0f64..5.0,
        hidden in prop::collection::vec(1usize..300, 0..4),
        arch in prop::sample::select(vec!["gcn", "sage"]),
        method in prop::sample::select(Method::ALL.to_vec()),
        noise in prop::option::of(0.0f64..3.0),
    ) {
        let mut text = format!(
            "arch={arch}\nmethod={}\ntrain.lr={lr}\ntrain.weight_decay={wd}\ntrain.seed={seed}\ntrain.alpha={alpha}\ntrain.beta={beta}\nstudent.hidden={}\n",
            method.name(),
            hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(",")
        );
        if let Some(n) = noise {
            text.push_str(&format!("perturbation.kind=attribute_noise\nperturbation.level={n}\n"));
        }
        let method_ok = !(method == Method::Fitnet && hidden.is_empty());
        let parsed = ExperimentConfig::parse(&text);
        prop_assert_eq!(parsed.is_ok(), method_ok);
        if let Ok(c) = parsed {
            let again = ExperimentConfig::parse(&c.to_text()).unwrap();
            prop_assert_eq!(&c, &again);
            prop_assert_eq!(c.train.optimizer.lr, lr);
        }
    }
}
