use std::fs;
use std::path::Path;
use std::process::Command;

use distreg::bounds::BOUND_CSV_HEADER;
use distreg::cli::checkpoint;
use distreg::cli::commands::{metrics_header, DISTANCES_HEADER, SWEEP_HEADER};
use distreg::cli::RunConfig;
use distreg::nn::{parse_architecture, Network};
use distreg::Error;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_distreg"))
}

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn gen(dir: &Path) {
    let (code, _, err) = run(
        dir,
        &[
            "gen-data",
            "--seed",
            "4",
            "--out",
            "gd",
            "--n-pre",
            "300",
            "--n-fine",
            "100",
            "--n-test",
            "100",
            "--dim",
            "6",
            "--classes",
            "3",
        ],
    );
    assert_eq!(code, 0, "{err}");
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let arch = parse_architecture("conv:3:3x3:p1,maxpool:2x2,dense:4").unwrap();
    let net = Network::new(&[1, 6, 6], &arch, 99).unwrap();
    let bytes = checkpoint::encode(&net, 0xdead_beef);
    let ck = checkpoint::decode("mem", &bytes).unwrap();
    assert_eq!(ck.config_hash, 0xdead_beef);
    assert_eq!(ck.network.params(), net.params());
    assert_eq!(ck.network.architecture(), net.architecture());
    assert_eq!(ck.network.seed(), 99);
    assert_eq!(checkpoint::encode(&ck.network, 0xdead_beef), bytes);
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(
            checkpoint::decode("mem", &bytes[..cut]),
            Err(Error::Parse { .. })
        ));
    }
}

#[test]
fn config_errors() {
    let base = Path::new("/cfg");
    let ok = "data_dir = d\noutput_dir = o\narch = dense:3\n";
    assert!(RunConfig::parse(ok, base).is_ok());
    for bad in [
        "epochs = 0\n",
        "batch_size = 0\n",
        "colour = blue\n",
        "optimizer = rmsprop\n",
        "constraint.layer1 = mars:-1\n",
        "delta = 1.5\n",
        "lr_decay_factor = 0.5\n",
    ] {
        let text = format!("{ok}{bad}");
        assert!(
            matches!(RunConfig::parse(&text, base), Err(Error::Config(_))),
            "{bad}"
        );
    }
    assert!(RunConfig::parse("output_dir = o\narch = dense:3\n", base).is_err());
}

#[test]
fn csv_headers_are_fixed() {
    assert_eq!(
        BOUND_CSV_HEADER,
        "epoch,mars,frobenius,spectral,risk,conf,m,c,d,C_inf,C_2,rho,delta"
    );
    assert_eq!(
        SWEEP_HEADER,
        "c,train_loss,train_acc,test_acc,mars,frobenius,spectral,risk,conf"
    );
    assert_eq!(
        DISTANCES_HEADER,
        "layer,mars,frobenius,constraint,gamma,distance,on_boundary,exceeds"
    );
    assert_eq!(
        metrics_header(2),
        "epoch,train_loss,train_acc,test_acc,layer1_mars,layer1_frobenius,layer2_mars,layer2_frobenius"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    fs::write(
        d.join("zero.cfg"),
        "data_dir = gd/pretrain\noutput_dir = o\narch = dense:3\nepochs = 0\n",
    )
    .unwrap();
    assert_eq!(run(d, &["train", "--config", "zero.cfg"]).0, 1);
    assert_eq!(run(d, &["train", "--config", "missing.cfg"]).0, 2);
    fs::write(
        d.join("nodata.cfg"),
        "data_dir = nowhere\noutput_dir = o\narch = dense:3\n",
    )
    .unwrap();
    assert_eq!(run(d, &["train", "--config", "nodata.cfg"]).0, 2);
    fs::write(d.join("junk.ckpt"), b"not a checkpoint").unwrap();
    let (code, _, err) = run(
        d,
        &[
            "bound",
            "--init",
            "junk.ckpt",
            "--final",
            "junk.ckpt",
            "--data",
            "gd/pretrain",
        ],
    );
    assert_eq!(code, 2);
    assert!(err.contains("byte"), "{err}");
    // A learning rate this large overflows the logits.
    fs::write(
        d.join("diverge.cfg"),
        "data_dir = gd/pretrain\noutput_dir = div\narch = dense:64:relu,dense:64:relu,dense:3\noptimizer = sgd\nlr = 1e200\nepochs = 3\n",
    )
    .unwrap();
    assert_eq!(
        run(d, &["train", "--config", "diverge.cfg", "--quiet"]).0,
        3
    );
}

#[test]
fn pipeline_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    gen(d);
    assert!(fs::read_to_string(d.join("gd/meta.txt"))
        .unwrap()
        .contains("shift = 0.5"));
    fs::write(
        d.join("pre.cfg"),
        "data_dir = gd/pretrain\noutput_dir = pre\narch = dense:8:relu,dense:3\nepochs = 2\nbounds_per_epoch = true\n",
    )
    .unwrap();
    let (code, _, err) = run(d, &["train", "--config", "pre.cfg", "--quiet"]);
    assert_eq!(code, 0, "{err}");
    let metrics = fs::read_to_string(d.join("pre/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    let bounds = fs::read_to_string(d.join("pre/bounds.csv")).unwrap();
    assert_eq!(bounds.lines().next().unwrap(), BOUND_CSV_HEADER);
    assert_eq!(bounds.lines().count(), 3);

    fs::write(
        d.join("fine.cfg"),
        "data_dir = gd/finetune\noutput_dir = fine\ninit_checkpoint = pre/final.ckpt\nreinit_head = true\nepochs = 2\nconstraint.body = mars:0.1\nconstraint.head = mars:0.1\n",
    )
    .unwrap();
    assert_eq!(run(d, &["train", "--config", "fine.cfg", "--quiet"]).0, 0);
    let (code, out, _) = run(
        d,
        &[
            "distances",
            "--init",
            "fine/init.ckpt",
            "--final",
            "fine/final.ckpt",
            "--constraints",
            "layer1=mars:0.1,layer2=mars:0.1",
        ],
    );
    assert_eq!(code, 0);
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r.ends_with(",false"), "{r}");
    }
    let (code, out, err) = run(
        d,
        &[
            "bound",
            "--init",
            "fine/init.ckpt",
            "--final",
            "fine/final.ckpt",
            "--data",
            "gd/finetune",
        ],
    );
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().next().unwrap(), BOUND_CSV_HEADER);
    assert!(err.contains("mars"));
    // Different architectures cannot be compared.
    let (code, _, _) = run(
        d,
        &[
            "bound",
            "--init",
            "pre/init.ckpt",
            "--final",
            "fine/final.ckpt",
            "--data",
            "gd/finetune",
        ],
    );
    assert_eq!(code, 0, "same architecture, different weights is fine");
    let (code, out, _) = run(
        d,
        &[
            "sweep",
            "--config",
            "fine.cfg",
            "--factors",
            "0.5,2",
            "--quiet",
        ],
    );
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 3);
    assert!(d.join("fine/run02/final.ckpt").exists());
    assert_eq!(
        run(d, &["sweep", "--config", "fine.cfg", "--factors", "0,2"]).0,
        1
    );
}
