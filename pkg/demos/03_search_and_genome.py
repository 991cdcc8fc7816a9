"""Run a small architecture search and watch the coefficients commit.

The supernet keeps every candidate op on every edge, weighted by a
softmax over learned coefficients. Search alternates coefficient steps
on one split with weight steps on another. Extraction then keeps the
strongest op per edge and the two strongest edges per node.
"""

import numpy as np

from emodarts.config import SearchConfig
from emodarts.features import synth_dataset
from emodarts.genome import detect_degenerate, export_dot, extract_genome, \
    serialize
from emodarts.harness import speaker_cv_split
from emodarts.search import alpha_entropy, search
from emodarts.supernet import build_supernet


def main():
    ds = synth_dataset(n_speakers=6, per=6, dims=(32, 32), seed=7)
    fold = speaker_cv_split(ds, n_folds=3, seed=7)[0]

    cfg = SearchConfig(C=2, N=1, B_cnn=2, B_seqnn=2, channels=8, hidden=16,
                       seq_scope=("lstm_1", "rnn_1"), epochs=8,
                       batch_size=16, dropout=0.0, seed=7)
    net = build_supernet(cfg, np.random.default_rng(7), input_hw=(32, 32))

    history = search(net, ds.split(fold.train_idx), ds.split(fold.val_idx),
                     cfg)
    for h in history:
        print(f"epoch {h.epoch}: search ua {h.search_ua:5.1f}  "
              f"entropy cnn {h.entropy_cnn:.3f}  seq {h.entropy_seqnn:.3f}")

    genome = extract_genome(net)
    print("\nretained edges (seqnn):")
    for e in genome.seqnn:
        print(f"  node {e['to_node']} <- node {e['from_node']}: {e['op']}")
    print("degenerate:", detect_degenerate(genome))

    print("\ngenome document:")
    print(serialize(genome).strip()[:200], "...")

    # the DOT text below renders with any Graphviz install
    print("\n" + export_dot(genome)[:160], "...")


if __name__ == "__main__":
    main()
