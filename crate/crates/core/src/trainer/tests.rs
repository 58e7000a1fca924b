use super::*;
use crate::centrality::{katz_with_fallback, KatzConfig};
use crate::testutil::fixture;

fn cfg(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        epochs_intra: 3,
        epochs_inter: 4,
        batch_size: 4,
        lr: 1e-2,
        seed: 11,
        loss: LossConfig {
            n_neg_inter: 4,
            n_pos_intra: 2,
            n_neg_intra: 2,
            ..LossConfig::default()
        },
        fanout: 2,
        dims: EncoderDims::with_width(4),
        exec: Exec::Sequential,
        ..TrainConfig::default()
    }
}

fn table(ds: &CrossDomainDataset) -> CentralityTable {
    katz_with_fallback(&ds.target, &KatzConfig::default()).unwrap()
}

#[test]
fn runs_are_reproducible() {
    let ds = fixture();
    let t = table(&ds);
    for mode in Mode::ALL {
        let (a, la) = train(&ds, &t, &cfg(mode)).unwrap();
        let (b, lb) = train(&ds, &t, &cfg(mode)).unwrap();
        assert_eq!(la.loss_rows(), lb.loss_rows(), "{mode}");
        assert_eq!(a.target, b.target);
        assert_eq!(a.source, b.source);
    }
}

#[test]
fn parallel_policy_matches_sequential() {
    let ds = fixture();
    let t = table(&ds);
    let seq = train(&ds, &t, &cfg(Mode::Full)).unwrap();
    let par = train(
        &ds,
        &t,
        &TrainConfig {
            exec: Exec::Parallel,
            ..cfg(Mode::Full)
        },
    )
    .unwrap();
    assert_eq!(seq.1.loss_rows(), par.1.loss_rows());
    assert_eq!(seq.0.target, par.0.target);
}

#[test]
fn log_shape_per_mode() {
    let ds = fixture();
    let t = table(&ds);
    let (_, full) = train(&ds, &t, &cfg(Mode::Full)).unwrap();
    assert_eq!(full.len(), 7);
    assert!(full.records[..3]
        .iter()
        .all(|r| r.stage == Stage::Intra && r.l_intra_s.is_some() && r.l_inter_u.is_none()));
    assert!(full.records[3..]
        .iter()
        .all(|r| r.stage == Stage::Inter && r.l_inter_n.is_some() && r.l_intra_t.is_none()));
    assert_eq!(full.records.iter().map(|r| r.epoch).collect::<Vec<_>>(), (0..7).collect::<Vec<_>>());

    let (_, mixed) = train(&ds, &t, &cfg(Mode::Mixed)).unwrap();
    assert_eq!(mixed.len(), 7);
    for r in &mixed.records {
        assert_eq!(r.stage, Stage::Mixed);
        assert!(r.losses().iter().all(|v| v.is_some_and(f64::is_finite)));
    }

    let tsv = full.to_tsv();
    let mut lines = tsv.lines();
    assert_eq!(lines.next(), Some(TRAINLOG_HEADER));
    let first: Vec<&str> = lines.next().unwrap().split('\t').collect();
    assert_eq!(&first[..2], &["0", "intra"]);
    assert_eq!(&first[4..6], &["-", "-"]);
}

#[test]
fn mixed_split_only_sets_the_length() {
    let ds = fixture();
    let t = table(&ds);
    let a = TrainConfig {
        epochs_intra: 5,
        epochs_inter: 2,
        ..cfg(Mode::Mixed)
    };
    let b = TrainConfig {
        epochs_intra: 2,
        epochs_inter: 5,
        ..cfg(Mode::Mixed)
    };
    assert_eq!(train(&ds, &t, &a).unwrap().1.loss_rows(), train(&ds, &t, &b).unwrap().1.loss_rows());
}

#[test]
fn zero_intra_weight_leaves_parameters_untouched() {
    let ds = fixture();
    let c = TrainConfig {
        loss: LossConfig {
            lambda_intra: 0.0,
            ..cfg(Mode::Full).loss
        },
        ..cfg(Mode::Full)
    };
    let mut st = TrainState::init(&ds, &c).unwrap();
    let before = st.clone();
    train_stage_intra(&ds, &mut st, &c, &mut TrainLog::default()).unwrap();
    assert_eq!(st.source, before.source);
    assert_eq!(st.target, before.target);
}

#[test]
fn mixed_without_cross_weight_matches_intra_stage() {
    let ds = fixture();
    let t = table(&ds);
    let mixed = TrainConfig {
        loss: LossConfig {
            lambda_inter: 0.0,
            ..cfg(Mode::Mixed).loss
        },
        batch_size: 3,
        ..cfg(Mode::Mixed)
    };
    let (ms, mlog) = train(&ds, &t, &mixed).unwrap();

    let sep = TrainConfig {
        mode: Mode::Full,
        epochs_intra: mixed.total_epochs(),
        ..mixed.clone()
    };
    let mut st = TrainState::init(&ds, &sep).unwrap();
    let mut slog = TrainLog::default();
    train_stage_intra(&ds, &mut st, &sep, &mut slog).unwrap();
    assert_eq!(mlog.series(0), slog.series(0));
    assert_eq!(mlog.series(1), slog.series(1));
    assert_eq!(ms.source, st.source);
    assert_eq!(ms.target, st.target);
}

#[test]
fn first_epoch_loss_matches_a_single_merged_tape() {
    let ds = fixture();
    let c = TrainConfig {
        batch_size: 64,
        epochs_intra: 1,
        ..cfg(Mode::Full)
    };
    let init = TrainState::init(&ds, &c).unwrap();
    let mut st = init.clone();
    let mut log = TrainLog::default();
    train_stage_intra(&ds, &mut st, &c, &mut log).unwrap();

    // Whole graph in one batch per domain, both domains on one tape.
    let mut tape = Tape::new();
    let mut values = Vec::new();
    for d in [Domain::Source, Domain::Target] {
        let g = ds.graph(d);
        let anchors = &intra_batches(g, &c, 0)[0];
        assert_eq!(anchors.len(), g.num_nodes());
        let batch = intra_batch(g, anchors, &c, 0, 0).unwrap();
        let leaves = init.params(d).record(&mut tape);
        let nb = NodeBatch::sampled(g, &batch.nodes, &c.sampler(), 0).unwrap();
        let z = encode(&leaves, &nb, &mut tape).unwrap();
        let term = intra_bce_loss(&mut tape, z, &batch.samples).unwrap().unwrap();
        values.push(tape.scalar(term.node).unwrap());
    }
    assert_eq!(log.records[0].l_intra_s, Some(values[0]));
    assert_eq!(log.records[0].l_intra_t, Some(values[1]));
}

fn after_intra(c: &TrainConfig) -> (CrossDomainDataset, TrainState, CurriculumState) {
    let ds = fixture();
    let t = table(&ds);
    let mut st = TrainState::init(&ds, c).unwrap();
    train_stage_intra(&ds, &mut st, c, &mut TrainLog::default()).unwrap();
    let cur = build_curriculum(&ds, &t, c).unwrap();
    (ds, st, cur)
}

#[test]
fn stop_gradient_freezes_the_source_encoder() {
    for mode in [Mode::Full, Mode::NoCurriculum] {
        let c = cfg(mode);
        let (ds, mut st, cur) = after_intra(&c);
        let source = st.source.clone();
        let adam_steps = st.adam_s.step_count();
        let target = st.target.clone();
        train_stage_inter(&ds, &mut st, &cur, &c, &mut TrainLog::default()).unwrap();
        assert_eq!(st.source, source);
        assert_eq!(st.adam_s.step_count(), adam_steps);
        assert_ne!(st.target, target);
    }
}

#[test]
fn without_stop_gradient_the_source_moves() {
    let c = TrainConfig {
        epochs_inter: 1,
        ..cfg(Mode::NoStopgrad)
    };
    let (ds, mut st, cur) = after_intra(&c);
    let source = st.source.clone();
    train_stage_inter(&ds, &mut st, &cur, &c, &mut TrainLog::default()).unwrap();
    let changed = source
        .embeddings
        .data()
        .iter()
        .zip(st.source.embeddings.data())
        .filter(|(a, b)| a != b)
        .count();
    assert!(changed > 0);
    assert_ne!(source.w1, st.source.w1);
}

#[test]
fn curriculum_controls_the_active_prefix() {
    let c = TrainConfig {
        epochs_inter: 100,
        ..cfg(Mode::Full)
    };
    let (ds, _, cur) = after_intra(&c);
    assert_eq!(cur.n_step, 50);
    assert_eq!(cur.len(), ds.overlap.len());
    assert_eq!(cur.active_count(0).unwrap(), 2);
    assert_eq!(cur.active_count(99).unwrap(), 3);
    let scores = table(&ds);
    for i in 0..cur.len() {
        let p = cur.pool(i);
        assert!(p.windows(2).all(|w| scores.scores[w[0]] >= scores.scores[w[1]]));
        let t = ds.overlap[i].1;
        assert!(!p.contains(&t));
        assert!(p.iter().all(|&v| !ds.target.has_edge_flat(t, v)));
    }
}

#[test]
fn curriculum_off_means_every_negative_from_the_first_epoch() {
    for mode in [Mode::Full, Mode::NoCurriculum] {
        let c = TrainConfig {
            batch_size: 64,
            ..cfg(mode)
        };
        let (ds, st, cur) = after_intra(&c);
        let epoch = c.epochs_intra;
        let pairs = &inter_batches(&ds, &c, epoch)[0];
        assert_eq!(pairs.len(), ds.overlap.len());
        let k = if mode == Mode::Full { cur.active_count(0).unwrap() } else { cur.n_neg };
        let mut tape = Tape::new();
        let ls = st.source.record(&mut tape);
        let lt = st.target.record(&mut tape);
        let r = record_inter(&mut tape, &ls, &lt, &ds, &cur, pairs, k, true, &c, epoch).unwrap();
        let mut trained = st.clone();
        let mut log = TrainLog::default();
        train_stage_inter(&ds, &mut trained, &cur, &TrainConfig { epochs_inter: 1, ..c.clone() }, &mut log).unwrap();
        // Epoch means are count-weighted, hence the round trip through the count.
        let mean = |t: Option<LossTerm>| {
            let t = t.unwrap();
            Some(tape.scalar(t.node).unwrap() * t.count as f64 / t.count as f64)
        };
        assert_eq!(log.records[0].l_inter_u, mean(r.user), "{mode}");
        assert_eq!(log.records[0].l_inter_n, mean(r.neighbor), "{mode}");
    }
}

#[test]
fn modes_differ_only_where_defined() {
    let c = cfg(Mode::Full);
    let (ds, st, cur) = after_intra(&c);
    let pairs: Vec<usize> = (0..ds.overlap.len()).collect();
    let ops = |k: usize, stop: bool| {
        let mut tape = Tape::new();
        let ls = st.source.record(&mut tape);
        let lt = st.target.record(&mut tape);
        let r = record_inter(&mut tape, &ls, &lt, &ds, &cur, &pairs, k, stop, &c, 3).unwrap();
        (tape.op_names(), tape.scalar(r.user.unwrap().node).unwrap())
    };
    let (full, lf) = ops(cur.active_count(0).unwrap(), true);
    let (nocur, ln) = ops(cur.n_neg, true);
    let (nostop, ls) = ops(cur.n_neg, false);
    assert_eq!(full, nocur);
    assert_ne!(lf, ln);
    assert_eq!(ln, ls);
    let without_barrier: Vec<_> = nocur.iter().filter(|n| **n != "stop_gradient").collect();
    assert_eq!(without_barrier.len() + 1, nocur.len());
    assert_eq!(without_barrier, nostop.iter().collect::<Vec<_>>());
}

#[test]
fn checkpoints_round_trip_and_match_golden() {
    let ds = fixture();
    let t = table(&ds);
    let c = cfg(Mode::Full);
    let (st, _) = train(&ds, &t, &c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    st.save_checkpoint(dir.path()).unwrap();
    let (s, tg) = load_checkpoint(dir.path(), &ds, c.dims).unwrap();
    let again = tempfile::tempdir().unwrap();
    for p in [&s, &tg] {
        let d = again.path().join(p.domain.name());
        fs::create_dir_all(&d).unwrap();
        p.save(&d.join("encoder.ckpt")).unwrap();
    }
    for d in ["source", "target"] {
        let a = fs::read(dir.path().join(d).join("encoder.ckpt")).unwrap();
        let b = fs::read(again.path().join(d).join("encoder.ckpt")).unwrap();
        assert_eq!(a, b, "{d}");
    }
    let wrong = EncoderDims::with_width(5);
    let err = load_checkpoint(dir.path(), &ds, wrong).unwrap_err().to_string();
    assert!(err.contains("expected dims"), "{err}");

    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fixture_target.ckpt");
    let current = st.target.to_checkpoint_string();
    if std::env::var_os("SCCDR_BLESS").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &current).unwrap();
    }
    let expected = fs::read_to_string(&golden).expect("golden checkpoint missing; rerun with SCCDR_BLESS=1");
    assert_eq!(current, expected);
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    let bad = [
        TrainConfig {
            epochs_inter: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            lr: -1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            loss: LossConfig {
                n_neg_inter: 5,
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        },
    ];
    assert!(bad.iter().all(|c| matches!(c.validate(), Err(Error::Config(_)))));
    assert_eq!(Mode::parse("no-stopgrad"), Some(Mode::NoStopgrad));
    assert_eq!(Mode::parse("nope"), None);
}
