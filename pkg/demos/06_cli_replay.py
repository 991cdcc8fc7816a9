"""The command line front end, driven in-process.

Every command leaves a manifest next to its primary output recording
argv, seed, and library versions. `replay` re-executes a manifest into
a new directory; because nothing in the pipeline consults the clock or
global RNG state, replayed artifacts match the originals byte for byte.
"""

import json
import pathlib
import tempfile

from emodarts.cli import main


def run(argv):
    code = main(argv)
    print(f"$ emodarts {' '.join(argv)}  -> exit {code}")
    assert code == 0


def demo():
    root = pathlib.Path(tempfile.mkdtemp(prefix="emodarts_demo_"))
    out = root / "run"
    out.mkdir()
    ini = root / "tiny.ini"
    ini.write_text("[search]\nC = 1\nN = 1\nB_cnn = 1\nB_seqnn = 1\n"
                   "channels = 4\nhidden = 8\nepochs = 2\nbatch_size = 8\n"
                   "dropout = 0.0\nseq_scope = rnn_1\n")

    data = out / "corpus.edset"
    run(["gen-data", "--out", str(data), "--speakers", "5", "--per", "2",
         "--dims", "16x16", "--seed", "5"])
    run(["search", "--data", str(data), "--out", str(out / "genome.json"),
         "--history", str(out / "search.csv"), "--config", str(ini),
         "--seed", "5"])
    run(["derive", "--genome", str(out / "genome.json"), "--data", str(data),
         "--out", str(out / "model.ckpt"), "--config", str(ini),
         "--seed", "5", "--epochs", "2"])
    run(["export-dot", "--genome", str(out / "genome.json"),
         "--out", str(out / "genome.dot")])

    manifest = json.loads((out / "genome.json.manifest.json").read_text())
    print("\nsearch manifest snapshot:")
    print(" ", {k: manifest[k] for k in ("command", "seed", "outputs")})

    redo = root / "redo"
    redo.mkdir()
    run(["replay", "--manifest", str(out / "genome.json.manifest.json"),
         "--out", str(redo / "genome.json")])
    same = (out / "genome.json").read_bytes() == \
        (redo / "genome.json").read_bytes()
    print("\nreplayed genome identical:", same)
    print("artifacts under", root)


if __name__ == "__main__":
    demo()
