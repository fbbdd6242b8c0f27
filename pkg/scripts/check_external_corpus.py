#!/usr/bin/env python3
"""Optional check against a user-supplied slice of a printed-and-scanned
face corpus (e.g. the published SPRITZ-PS/VIPPrint data).

Given directories of real and GAN face images, this runs the full
pipeline (extraction, reconstruction, training, scoring) and reports the
real-vs-GAN mean-similarity gap.  Only the SIGN of the gap is asserted:
exit 0 when mean similarity of real pairs exceeds that of GAN pairs,
exit 1 otherwise.  Magnitudes depend on corpus size and scan quality and
are reported for information only.

Usage:
    python scripts/check_external_corpus.py \
        --real-dir /data/spritz/real --gan-dir /data/spritz/gan --out /tmp/ext
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from iristwin.core import Generator, Source
from iristwin.dataset import CorpusGroup, CorpusSpec, ingest, load_pairs
from iristwin.extraction import ExtractionConfig
from iristwin.reconstruction import InpaintConfig
from iristwin.verifier import (
    LossConfig,
    encode,
    pair_distance,
    similarity_percent,
    train,
)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--real-dir", required=True)
    ap.add_argument("--gan-dir", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--pattern", default="*.png", help="face file glob inside each dir")
    ap.add_argument("--generator", default="stylegan", choices=["progan", "stylegan"])
    ap.add_argument("--max-faces", type=int, default=50, help="cap per class")
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    out = Path(args.out)
    real_dir, gan_dir = Path(args.real_dir), Path(args.gan_dir)
    staging = out / "slice"
    staging.mkdir(parents=True, exist_ok=True)
    # stage a bounded slice so runtime stays desk-scale
    import shutil

    for src, sub in ((real_dir, "real"), (gan_dir, "gan")):
        dst = staging / sub
        dst.mkdir(exist_ok=True)
        for p in sorted(src.glob(args.pattern))[: args.max_faces]:
            shutil.copy(p, dst / p.name)

    spec = CorpusSpec(
        root=str(staging),
        groups=(
            CorpusGroup(Source.REAL, Generator.NONE, "real/" + args.pattern),
            CorpusGroup(Source.GAN, Generator(args.generator), "gan/" + args.pattern),
        ),
        split=(0.7, 0.15, 0.15),
        split_seed=args.seed,
    )
    ext_cfg = ExtractionConfig(crop_size=64)
    manifest = ingest(spec, ext_cfg, InpaintConfig(), out / "dataset")
    print(f"ingested {len(manifest.entries)} iris pairs")

    train_pairs = load_pairs(manifest, out / "dataset", split="train")
    eval_pairs = [
        p
        for split in ("val", "test")
        for p in load_pairs(manifest, out / "dataset", split=split)
    ] or train_pairs
    labels = {y.y for _, y in train_pairs}
    if labels != {0, 1}:
        print("train split lost one class; evaluating with an untrained encoder")
        from iristwin.verifier import init_encoder, smallconv_arch

        size = train_pairs[0][0].left.crop_size if train_pairs else 64
        state = init_encoder(smallconv_arch(size), args.seed)
    else:
        state, _ = train(train_pairs, LossConfig(epochs=args.epochs), args.seed)

    sims = {0: [], 1: []}
    for pair, y in eval_pairs:
        E = pair_distance(encode(state, pair.left), encode(state, pair.right))
        sims[y.y].append(similarity_percent(E))
    mean_real = float(np.mean(sims[1])) if sims[1] else float("nan")
    mean_gan = float(np.mean(sims[0])) if sims[0] else float("nan")
    gap = mean_real - mean_gan
    print(f"mean similarity: real={mean_real:.2f}  gan={mean_gan:.2f}  gap={gap:+.2f} pp")
    if not np.isfinite(gap):
        print("one class missing from the evaluation split; cannot sign the gap")
        return 1
    if gap > 0:
        print("OK: real pairs score more similar than GAN pairs (sign matches)")
        return 0
    print("FAIL: gap sign inverted")
    return 1


if __name__ == "__main__":
    sys.exit(main())
