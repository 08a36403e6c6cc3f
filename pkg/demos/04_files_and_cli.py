"""The command-line workflow end to end, driven from Python."""

import tempfile
from pathlib import Path

from panlut.cli import main

with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)

    def run(*args):
        argv = [str(a) for a in args]
        print("$ panlut", " ".join(a.replace(tmp + "/", "") for a in argv))
        code = main(argv)
        assert code == 0, code

    # %% A scene, its reduced-resolution pair, a short training run and a fused image.
    run("synth", "--size", 64, "--out-hrms", d / "hrms.msr", "--out-pan", d / "pan.msr", "--dtype", "u16")
    run("wald", "--hrms", d / "hrms.msr", "--pan", d / "pan.msr", "--out-ms", d / "ms.msr", "--out-pan", d / "pan_low.msr")
    run("train", "--pan", d / "pan.msr", "--ms", d / "ms.msr", "--gt", d / "hrms.msr", "--out", d / "model.plm",
        "--epochs", 20, "--log", d / "train.log")
    run("sharpen", "--model", d / "model.plm", "--pan", d / "pan.msr", "--ms", d / "ms.msr",
        "--out", d / "fused.msr", "--preview", d / "fused.ppm")

    # %% Reference metrics against the ground truth, no-reference metrics from the inputs.
    run("eval", "--mode", "reduced", "--pred", d / "fused.msr", "--gt", d / "hrms.msr")
    run("eval", "--mode", "full", "--fused", d / "fused.msr", "--ms", d / "ms.msr", "--pan", d / "pan.msr")
    run("lut", "inspect", d / "model.plm")
    print("last training log line:", (d / "train.log").read_text().splitlines()[-1])
