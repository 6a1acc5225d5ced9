"""Command line pipeline: artifacts, determinism, exit codes.

Runs every subcommand on a deliberately tiny problem (16x16 grids, 30
reverse steps) so the whole module stays in the seconds range.
"""

import json
from pathlib import Path

import numpy as np
import pytest

import postcast as pc
from postcast.cli import main

TINY_INI = """\
[schedule]
t = 30
beta_t = 0.05

[kernel]
size = 5
init_mean = 0.02
init_std = 0.01

[guidance]
lr = 0.005
c = -220.0
s_max = 3500.0

[data]
height = 16
width = 16
count = 3
severity = 2

[eval]
poolings = 1,4
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen + fit-prior once; the products feed most of the tests below."""
    root = tmp_path_factory.mktemp("cli")
    ini = root / "tiny.ini"
    ini.write_text(TINY_INI)
    dataset = root / "dataset"
    assert main(["gen", "--out", str(dataset), "--config", str(ini), "--seed", "5"]) == 0
    prior = root / "prior.pcgm"
    assert main(["fit-prior", str(dataset), "--out", str(prior), "--config", str(ini), "--k", "3"]) == 0
    return {"root": root, "ini": str(ini), "dataset": dataset, "prior": str(prior)}


def test_gen_writes_the_documented_dataset(pipeline):
    dataset = pipeline["dataset"]
    names = sorted(p.name for p in dataset.iterdir())
    for i in range(3):
        assert f"clean_{i:03d}.pcf" in names
        assert f"blurry_{i:03d}.pcf" in names
        assert f"kernel_{i:03d}.csv" in names
    assert "index.json" in names
    index = json.loads((dataset / "index.json").read_text())
    assert index["count"] == 3
    assert len(index["entries"]) == 3
    entry = index["entries"][0]
    assert set(entry) == {"clean", "blurry", "kernel", "severity", "family"}
    # planted pairs really are linked by the stored kernel
    clean = pc.read_grid(dataset / entry["clean"])
    blurry = pc.read_grid(dataset / entry["blurry"])
    kernel = pc.read_kernel_csv(dataset / entry["kernel"])
    reblur = pc.convolve(kernel, clean)
    assert np.allclose(reblur.values, blurry.values, atol=1e-7)


def test_gen_is_deterministic(pipeline, tmp_path):
    again = tmp_path / "again"
    assert main(["gen", "--out", str(again), "--config", pipeline["ini"], "--seed", "5"]) == 0
    for name in ("clean_000.pcf", "blurry_002.pcf", "kernel_001.csv", "index.json"):
        assert (again / name).read_bytes() == (pipeline["dataset"] / name).read_bytes()


def test_fit_prior_blob_is_loadable(pipeline):
    gmm = pc.load_gmm(pipeline["prior"])
    assert gmm.weights.shape == (3,)
    assert gmm.means.shape == (3, 16, 16)
    manifest = json.loads((Path(pipeline["prior"]).parent / "manifest.json").read_text())
    assert manifest["command"] == "fit-prior"


def test_train_writes_denoiser_and_loss_curve(pipeline, tmp_path):
    out = tmp_path / "train"
    rc = main(["train", str(pipeline["dataset"]), "--out", str(out),
               "--config", pipeline["ini"], "--epochs", "2"])
    assert rc == 0
    net = pc.load_denoiser(out / "denoiser.pcdn")
    assert net.parameter_count > 0
    lines = (out / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss"
    assert len(lines) == 3


def test_deblur_dataset_artifacts_and_manifest(pipeline, tmp_path):
    out = tmp_path / "deblurred"
    rc = main(["deblur", str(pipeline["dataset"]), "--prior", pipeline["prior"],
               "--out", str(out), "--config", pipeline["ini"], "--seed", "5"])
    assert rc == 0
    for i in range(3):
        stem = f"blurry_{i:03d}"
        deblurred = pc.read_grid(out / f"{stem}_deblurred.pcf")
        assert deblurred.shape == (16, 16)
        pc.read_kernel_csv(out / f"{stem}_kernel.csv")
        trace = pc.read_trace_csv(out / f"{stem}_trace.csv")
        assert [r.t for r in trace] == list(range(30, 0, -1))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "deblur"
    assert manifest["seed"] == 5
    assert manifest["config"]["schedule"]["t"] == 30
    assert manifest["outputs"] == sorted(manifest["outputs"])
    assert {s["status"] for s in manifest["stages"]} == {"ok"}
    assert manifest["package_version"] == pc.__version__
    assert manifest["wall_seconds"] >= 0


def test_deblur_single_grid_file(pipeline, tmp_path):
    out = tmp_path / "single"
    target = pipeline["dataset"] / "blurry_001.pcf"
    rc = main(["deblur", str(target), "--prior", pipeline["prior"],
               "--out", str(out), "--config", pipeline["ini"]])
    assert rc == 0
    assert (out / "blurry_001_deblurred.pcf").exists()


def test_deblur_reruns_are_bitwise_identical(pipeline, tmp_path):
    """Same seed, fresh process pool or not: every artifact byte matches."""
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    out3 = tmp_path / "c"
    base = ["deblur", str(pipeline["dataset"]), "--prior", pipeline["prior"],
            "--config", pipeline["ini"], "--seed", "9"]
    assert main(base + ["--out", str(out1)]) == 0
    assert main(base + ["--out", str(out2)]) == 0
    assert main(base + ["--out", str(out3), "--jobs", "2"]) == 0
    compared = 0
    for p1 in sorted(out1.iterdir()):
        if p1.name == "manifest.json":  # carries wall-clock timing
            continue
        for other in (out2, out3):
            assert (other / p1.name).read_bytes() == p1.read_bytes(), p1.name
        compared += 1
    assert compared == 12  # 3 stems x (pcf, kernel.csv, kernel.csv.json, trace.csv)


def test_deblur_seed_changes_the_output(pipeline, tmp_path):
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    base = ["deblur", str(pipeline["dataset"] / "blurry_000.pcf"), "--prior",
            pipeline["prior"], "--config", pipeline["ini"]]
    assert main(base + ["--out", str(out1), "--seed", "1"]) == 0
    assert main(base + ["--out", str(out2), "--seed", "2"]) == 0
    a = (out1 / "blurry_000_deblurred.pcf").read_bytes()
    b = (out2 / "blurry_000_deblurred.pcf").read_bytes()
    assert a != b


def test_eval_scores_predictions_against_observations(pipeline, tmp_path):
    deblurred = tmp_path / "deblurred"
    assert main(["deblur", str(pipeline["dataset"]), "--prior", pipeline["prior"],
                 "--out", str(deblurred), "--config", pipeline["ini"], "--seed", "5"]) == 0
    report = tmp_path / "report.csv"
    rc = main(["eval", "--pred", str(deblurred), "--obs", str(pipeline["dataset"]),
               "--out", str(report), "--config", pipeline["ini"],
               "--pred-pattern", "*_deblurred.pcf", "--obs-pattern", "clean_*.pcf",
               "--label", "tiny"])
    assert rc == 0
    rows = pc.read_csi_report_csv(report)
    assert [r[2] for r in rows] == [1, 4]  # the configured poolings, in order
    for label, tau, pool, tp, fp, fn, score in rows:
        assert label == "tiny"
        assert 0.0 <= score <= 1.0
        assert score == pytest.approx(tp / max(tp + fp + fn, 1) if tp + fp + fn else 1.0)


def test_eval_rejects_mismatched_counts(pipeline, tmp_path):
    rc = main(["eval", "--pred", str(pipeline["dataset"]), "--obs", str(pipeline["dataset"]),
               "--out", str(tmp_path / "r.csv"), "--pred-pattern", "clean_*.pcf",
               "--obs-pattern", "*.pcf"])
    assert rc == 2


def test_ablate_compares_the_three_variants(pipeline, tmp_path):
    out = tmp_path / "ablation"
    rc = main(["ablate", str(pipeline["dataset"]), "--prior", pipeline["prior"],
               "--out", str(out), "--config", pipeline["ini"], "--seed", "5"])
    assert rc == 0
    for variant in ("model_a", "model_c", "postcast"):
        assert (out / variant / "blurry_000_deblurred.pcf").exists()
    summary = pc.read_csi_report_csv(out / "ablation_summary.csv")
    assert len(summary) == 6  # 3 variants x 2 poolings
    assert {row[0] for row in summary} == {"model_a", "model_c", "postcast"}
    detail = pc.read_csi_report_csv(out / "ablation.csv")
    assert len(detail) == 18  # 3 variants x 2 poolings x 3 instances
    assert detail[0][0].startswith("model_a:")


def test_exit_code_usage_errors():
    assert main(["nope"]) == 1
    assert main(["deblur"]) == 1  # missing required arguments
    assert main([]) == 1


def test_exit_code_data_and_config_errors(pipeline, tmp_path):
    missing = str(tmp_path / "absent")
    assert main(["deblur", missing, "--prior", pipeline["prior"], "--out", str(tmp_path / "o1")]) == 2
    assert main(["deblur", str(pipeline["dataset"]), "--prior", str(tmp_path / "absent.pcgm"),
                 "--out", str(tmp_path / "o2")]) == 2
    bad_ini = tmp_path / "bad.ini"
    bad_ini.write_text("[schedule]\nt = 1\n")
    assert main(["gen", "--out", str(tmp_path / "o3"), "--config", str(bad_ini)]) == 2
    not_a_prior = tmp_path / "garbage.pcgm"
    not_a_prior.write_bytes(b"GARBAGE!")
    assert main(["deblur", str(pipeline["dataset"]), "--prior", str(not_a_prior),
                 "--out", str(tmp_path / "o4")]) == 2


def test_exit_code_numeric_failure(pipeline, tmp_path):
    divergent = tmp_path / "divergent.ini"
    divergent.write_text(TINY_INI.replace("lr = 0.005", "lr = 50.0"))
    with np.errstate(over="ignore", invalid="ignore"):
        rc = main(["deblur", str(pipeline["dataset"] / "blurry_000.pcf"),
                   "--prior", pipeline["prior"], "--out", str(tmp_path / "o"),
                   "--config", str(divergent), "--seed", "5"])
    assert rc == 3
