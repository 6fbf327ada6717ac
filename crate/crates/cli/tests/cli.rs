//! End-to-end checks of the binary: exit codes, file handling, and the
//! train → translate → score pipeline on a generated toy task.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deeptrans"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_config_keys_exit_3_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.conf"), "[model]\ncell_widht = 8\n").unwrap();
    let out = run_in(dir.path(), &["--config", "bad.conf", "train"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("model.cell_widht"), "{}", stderr_of(&out));
}

#[test]
fn malformed_config_lines_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.conf"), "[model\n").unwrap();
    let out = run_in(dir.path(), &["--config", "bad.conf", "train"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--config", "nowhere.conf", "train"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));

    let out = run_in(
        dir.path(),
        &["score", "--candidates", "missing.txt", "--references", "missing.txt"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
}

#[test]
fn score_of_identical_files_is_100() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("text.txt"), "the cat sat on the mat\na b c d e\n").unwrap();
    let out = run_in(
        dir.path(),
        &["score", "--candidates", "text.txt", "--references", "text.txt"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("BLEU 100.00"), "{}", stdout_of(&out));
}

#[test]
fn probe_depth_1_is_rejected_as_vacuous() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["probe", "--depth", "1", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("vacuous"), "{}", stderr_of(&out));
}

#[test]
fn gradcheck_passes_at_a_small_width() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--seed",
            "9",
            "gradcheck",
            "--instances",
            "1",
            "--cell-width",
            "2",
            "--emb-dim",
            "2",
            "--vocab",
            "8",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("match finite differences"), "{}", stdout_of(&out));
}

#[test]
fn make_task_writes_aligned_files_honoring_the_task_relation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--seed",
            "12",
            "make-task",
            "reverse",
            "--vocab-size",
            "6",
            "--min-len",
            "2",
            "--max-len",
            "5",
            "--count",
            "20",
            "--out-prefix",
            "gen/toy",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let src = fs::read_to_string(dir.path().join("gen/toy.src")).unwrap();
    let tgt = fs::read_to_string(dir.path().join("gen/toy.tgt")).unwrap();
    let src_lines: Vec<&str> = src.lines().collect();
    let tgt_lines: Vec<&str> = tgt.lines().collect();
    assert_eq!(src_lines.len(), 20);
    assert_eq!(tgt_lines.len(), 20);
    for (s, t) in src_lines.iter().zip(&tgt_lines) {
        let mut rev: Vec<&str> = s.split_whitespace().collect();
        rev.reverse();
        assert_eq!(rev.join(" "), *t);
    }
}

fn write_toy_setup(dir: &Path) {
    for (args, prefix) in [(40usize, "data/train"), (8, "data/dev")] {
        let out = run_in(
            dir,
            &[
                "--seed",
                if prefix.ends_with("train") { "1" } else { "2" },
                "make-task",
                "copy",
                "--vocab-size",
                "6",
                "--min-len",
                "2",
                "--max-len",
                "4",
                "--count",
                &args.to_string(),
                "--out-prefix",
                prefix,
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }
    fs::write(
        dir.join("run.conf"),
        "[model]\n\
         variant = deep-att\n\
         n_e = 1\n\
         n_d = 1\n\
         emb_dim = 6\n\
         cell_width = 6\n\
         att_hidden = 6\n\
         src_vocab = 32\n\
         tgt_vocab = 32\n\
         \n\
         [train]\n\
         batch_size = 8\n\
         max_epochs = 2\n\
         seed = 5\n\
         \n\
         [paths]\n\
         train_source = data/train.src\n\
         train_target = data/train.tgt\n\
         dev_source = data/dev.src\n\
         dev_target = data/dev.tgt\n\
         src_vocab = out/src.vocab\n\
         tgt_vocab = out/tgt.vocab\n\
         out_dir = out\n",
    )
    .unwrap();
}

#[test]
fn train_translate_and_rerun_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_setup(dir.path());
    // first run builds the vocabularies; they are then named in [paths] for
    // the later commands, so point the builder at the same locations
    let out = run_in(dir.path(), &["--config", "run.conf", "--set", "paths.src_vocab=", "--set", "paths.tgt_vocab=", "train"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(dir.path().join("out/final.ckpt").exists());
    let metrics_a = fs::read(dir.path().join("out/metrics.csv")).unwrap();

    let out = run_in(
        dir.path(),
        &[
            "--config",
            "run.conf",
            "--set",
            "paths.src_vocab=",
            "--set",
            "paths.tgt_vocab=",
            "--set",
            "paths.out_dir=out2",
            "train",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let metrics_b = fs::read(dir.path().join("out2/metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b, "same seed must reproduce the metrics log");
    let ck_a = fs::read(dir.path().join("out/final.ckpt")).unwrap();
    let ck_b = fs::read(dir.path().join("out2/final.ckpt")).unwrap();
    assert_eq!(ck_a, ck_b);

    // translation is deterministic and beam 1 twice agrees with itself
    for (output, beam) in [("hyp1.txt", "1"), ("hyp2.txt", "1"), ("hyp3.txt", "3")] {
        let out = run_in(
            dir.path(),
            &[
                "--config",
                "run.conf",
                "translate",
                "out/final.ckpt",
                "--input",
                "data/dev.src",
                "--output",
                output,
                "--beam",
                beam,
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    }
    let h1 = fs::read(dir.path().join("hyp1.txt")).unwrap();
    let h2 = fs::read(dir.path().join("hyp2.txt")).unwrap();
    assert_eq!(h1, h2);
    let lines = fs::read_to_string(dir.path().join("hyp3.txt")).unwrap();
    assert_eq!(lines.lines().count(), 8);

    // an ensemble of the same checkpoint twice equals the single model
    let out = run_in(
        dir.path(),
        &[
            "--config",
            "run.conf",
            "translate",
            "out/final.ckpt",
            "out/final.ckpt",
            "--input",
            "data/dev.src",
            "--output",
            "hyp4.txt",
            "--beam",
            "3",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let h3 = fs::read(dir.path().join("hyp3.txt")).unwrap();
    let h4 = fs::read(dir.path().join("hyp4.txt")).unwrap();
    assert_eq!(h3, h4);

    // ter runs on the trained checkpoint
    let out = run_in(
        dir.path(),
        &[
            "--config",
            "run.conf",
            "ter",
            "out/final.ckpt",
            "--source",
            "data/dev.src",
            "--target",
            "data/dev.tgt",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    assert!(stdout_of(&out).contains("token error rate"), "{}", stdout_of(&out));

    // scoring the translation against the references runs end to end
    let out = run_in(
        dir.path(),
        &[
            "score",
            "--candidates",
            "hyp3.txt",
            "--references",
            "data/dev.tgt",
            "--sources",
            "data/dev.src",
            "--bucket-width",
            "2",
            "--vocab",
            "out/tgt.vocab",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("BLEU"), "{text}");
    assert!(text.contains("BLEU by source length"), "{text}");
    assert!(text.contains("subset"), "{text}");
}

#[test]
fn translate_rejects_vocabularies_that_do_not_fit_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_setup(dir.path());
    let out = run_in(dir.path(), &["--config", "run.conf", "--set", "paths.src_vocab=", "--set", "paths.tgt_vocab=", "train"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    // a vocabulary with an extra token no longer matches the checkpoint
    let mut vocab = fs::read_to_string(dir.path().join("out/src.vocab")).unwrap();
    vocab.push_str("extra\n");
    fs::write(dir.path().join("big.vocab"), vocab).unwrap();
    let out = run_in(
        dir.path(),
        &[
            "--config",
            "run.conf",
            "--set",
            "paths.src_vocab=big.vocab",
            "translate",
            "out/final.ckpt",
            "--input",
            "data/dev.src",
        ],
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("vocabularies"), "{}", stderr_of(&out));
}
