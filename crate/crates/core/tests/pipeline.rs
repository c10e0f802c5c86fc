use dualse::pipeline::{
    ablate, run, run_eval, run_finetune, run_pretrain, sweep, DatasetSource, FusionMode, RunConfig, SyntheticSpec,
};
use dualse::Error;

fn small() -> RunConfig {
    let mut cfg = RunConfig::synthetic_default();
    cfg.source = DatasetSource::Synthetic(SyntheticSpec {
        per_cluster: 10,
        ..SyntheticSpec::default()
    });
    cfg.layers = vec![16];
    cfg.train.pretrain_epochs = 150;
    cfg.train.finetune_epochs = 30;
    cfg.train.log_every = 0;
    cfg
}

fn read(dir: &std::path::Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn attribute_only_ignores_structure_hyperparameters() {
    let mut a = small();
    a.fusion = FusionMode::AttributeOnly;
    let mut b = a.clone();
    b.train.hyperparams.lambda1 = 100.0;
    b.train.hyperparams.lambda2 = 0.5;
    b.train.hyperparams.fusion_in_loss = true;
    let (oa, ob) = (run(&a).unwrap(), run(&b).unwrap());
    assert_eq!(oa.evaluation.graph, ob.evaluation.graph);
    assert_eq!(oa.state.c_a, ob.state.c_a);
    assert_eq!(oa.report(), ob.report());
    for r in &oa.finetune_history {
        let t = &r.terms;
        assert_eq!(r.c_s_grad_norm, 0.0);
        assert!((r.total - (t.ae + t.reg_a + t.se_a)).abs() <= 1e-12 * r.total);
    }
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.out = Some(dir.path().to_path_buf());
    let out = run(&cfg).unwrap();
    let report = String::from_utf8(read(dir.path(), "report.csv")).unwrap();
    let r = out.report();
    assert_eq!(report, format!("acc,nmi,pur\n{},{},{}\n", r.acc, r.nmi, r.pur));
    let labels = String::from_utf8(read(dir.path(), "labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 41);
    let conf = String::from_utf8(read(dir.path(), "confusion.csv")).unwrap();
    let total: usize = conf
        .lines()
        .skip(1)
        .flat_map(|l| {
            l.split(',')
                .skip(1)
                .map(|v| v.parse::<usize>().unwrap())
                .collect::<Vec<_>>()
        })
        .sum();
    assert_eq!(total, 40);
    let affinity = String::from_utf8(read(dir.path(), "affinity.csv")).unwrap();
    assert_eq!(affinity.lines().count(), 41);
    let history = String::from_utf8(read(dir.path(), "loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1 + 150 + 30);
    assert!(!read(dir.path(), "checkpoint.bin").is_empty());
}

#[test]
fn staged_commands_match_a_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    let full = run(&cfg).unwrap();

    cfg.out = Some(dir.path().join("pre"));
    let (_, history) = run_pretrain(&cfg).unwrap();
    assert_eq!(history, full.pretrain_history);

    cfg.checkpoint = Some(dir.path().join("pre/checkpoint.bin"));
    cfg.out = Some(dir.path().join("fine"));
    let fine = run_finetune(&cfg).unwrap();
    assert_eq!(fine.state, full.state);
    assert_eq!(fine.report(), full.report());

    cfg.checkpoint = Some(dir.path().join("fine/checkpoint.bin"));
    cfg.out = None;
    let ev = run_eval(&cfg).unwrap();
    assert_eq!(ev.report.as_ref(), Some(full.report()));
    assert_eq!(ev.graph, full.evaluation.graph);
}

#[test]
fn checkpoint_for_other_data_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.out = Some(dir.path().to_path_buf());
    cfg.train.pretrain_epochs = 1;
    run_pretrain(&cfg).unwrap();

    let mut other = small();
    other.source = DatasetSource::Synthetic(SyntheticSpec {
        per_cluster: 12,
        ..SyntheticSpec::default()
    });
    other.checkpoint = Some(dir.path().join("checkpoint.bin"));
    for r in [run_finetune(&other).map(|_| ()), run_eval(&other).map(|_| ())] {
        match r {
            Err(Error::Config { field, .. }) => assert_eq!(field, "checkpoint"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
    other.checkpoint = None;
    assert!(matches!(run_finetune(&other), Err(Error::Config { .. })));
}

#[test]
fn ablation_has_fusion_and_structure_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.out = Some(dir.path().to_path_buf());
    let rows = ablate(&cfg).unwrap();
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r.group, r.case.as_str())).collect();
    assert_eq!(
        keys,
        [
            ("fusion", "attribute_only"),
            ("fusion", "structure_only"),
            ("fusion", "equal"),
            ("fusion", "adaptive"),
            ("structure", "cosine"),
            ("structure", "raw"),
            ("structure", "abs_symmetric"),
            ("structure", "mixed_symmetric"),
        ]
    );
    let mut attribute = cfg.clone();
    attribute.fusion = FusionMode::AttributeOnly;
    attribute.out = None;
    assert_eq!(&rows[0].report, run(&attribute).unwrap().report());
    let csv = String::from_utf8(read(dir.path(), "ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert_eq!(csv.lines().next(), Some("group,case,acc,nmi,pur"));
}

#[test]
fn sweep_covers_the_grid_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.train.finetune_epochs = 5;
    cfg.workers = 4;
    cfg.out = Some(dir.path().to_path_buf());
    let rows = sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 49);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(
            (r.lambda1, r.lambda2),
            (cfg.sweep_lambda1[i / 7], cfg.sweep_lambda2[i % 7])
        );
    }
    let csv = String::from_utf8(read(dir.path(), "sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 50);

    cfg.workers = 1;
    cfg.out = None;
    assert_eq!(sweep(&cfg).unwrap(), rows);
}

#[test]
fn single_cell_sweep_equals_a_run() {
    let mut cfg = small();
    cfg.sweep_lambda1 = vec![0.1];
    cfg.sweep_lambda2 = vec![10.0];
    let rows = sweep(&cfg).unwrap();
    cfg.train.hyperparams.lambda1 = 0.1;
    cfg.train.hyperparams.lambda2 = 10.0;
    assert_eq!(&rows[0].report, run(&cfg).unwrap().report());
}
