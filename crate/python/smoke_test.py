"""Exercise the veriframe extension end to end on synthetic data and the test fixtures."""

import json
import math
import os
import random
import sys
import tempfile

import veriframe as vf

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "core", "tests", "fixtures")


def check(cond, what):
    print(("PASS " if cond else "FAIL ") + what)
    if not cond:
        sys.exit(1)


def main():
    rnd = random.Random(7)

    check(abs(vf.kernel_eval([1, 2], [3, 4]) - 11.0) < 1e-12, "linear kernel")
    check(abs(vf.kernel_eval([0, 0], [1, 1], kernel="rbf", gamma=0.5) - math.exp(-1.0)) < 1e-12, "rbf kernel")
    check(abs(vf.cosine_similarity([1, 0], [1, 1]) - 1 / math.sqrt(2)) < 1e-12, "cosine")
    n = vf.l2_normalize([3, 4])
    check(abs(n[0] - 0.6) < 1e-12 and abs(n[1] - 0.8) < 1e-12, "l2 normalize")

    x = [[rnd.gauss(-2, 0.3), rnd.gauss(0, 0.3)] for _ in range(20)]
    x += [[rnd.gauss(2, 0.3), rnd.gauss(0, 0.3)] for _ in range(20)]
    y = ["Real"] * 20 + ["Fake"] * 20
    model = vf.SvmModel.train(x, y, kernel="rbf")
    check(model.predict_batch(x) == y, "binary svm fits separable data")
    restored = vf.SvmModel.from_json(model.to_json())
    check(restored.predict([-2, 0]) == "Real" and restored.predict([2, 0]) == "Fake", "model json round trip")

    pca = vf.Pca.fit(x, 1)
    ev = pca.explained_variance
    check(len(ev) == 1 and ev[0] > 1.0, "pca leading variance")

    check(vf.macro_accuracy(["Real", "Fake", "Fake"], ["Real", "Fake", "Real"]) == 0.75, "macro accuracy")
    agg = vf.aggregate_video({"a": ["Fake", "Fake", "Real"], "b": ["Fake", "Real"]})
    check(agg == {"a": "Fake", "b": "Real"}, "strict majority aggregation")
    pairs = vf.builtin_prompt_pairs()
    check(len(pairs) == 5 and pairs[0][0] == "P1", "builtin prompt pairs")
    check(vf.classify_frame([1, 0], [1, 0], [0, 1]) == "Real", "zero-shot frame")
    check(vf.classify_frame([1, 1], [1, 0], [0, 1]) == "Real", "zero-shot tie is real")

    sources = ["Real", "Veo", "Lumiere"]
    records = []
    vids, srcs, acts, frames, vecs = [], [], [], [], []
    for a in range(10):
        for s in sources:
            vid = f"{s}_{a}"
            records.append({
                "video_id": vid, "source": s, "action_id": a, "path": "none.mp4",
                "width": 64, "height": 48, "duration": 1.0, "fps": 30.0,
            })
            shift = -2.0 if s == "Real" else 2.0
            for f in range(3):
                vids.append(vid)
                srcs.append(s)
                acts.append(a)
                frames.append(f)
                vecs.append([shift + rnd.gauss(0, 0.3) for _ in range(8)])

    with tempfile.TemporaryDirectory() as tmp:
        mpath = os.path.join(tmp, "manifest.json")
        with open(mpath, "w") as fh:
            json.dump({"videos": records, "prompts": [f"action {i}" for i in range(10)]}, fh)
        manifest = vf.Manifest.load(mpath)
        check(len(manifest) == 30, "manifest load")

        store = vf.EmbeddingStore.from_vectors("syn", vids, srcs, acts, frames, vecs)
        spath = os.path.join(tmp, "syn.vfe")
        store.write(spath)
        again = vf.EmbeddingStore.read(spath)
        check(len(again) == 90 and again.dim == 8 and again.backend == "syn", "store round trip")

        report = json.loads(vf.run_experiment(manifest, again, reps=3))
        check(report["mean_video_acc"] == 1.0, "two-class experiment")
        loo = vf.leave_one_out(manifest, again, reps=2)
        check(sorted(loo) == ["Lumiere", "Veo"], "leave one out")

        try:
            vf.EmbeddingStore.read(os.path.join(tmp, "missing.vfe"))
            check(False, "missing store raises")
        except OSError:
            check(True, "missing store raises OSError")

    backend = vf.Backend.load(os.path.join(FIXTURES, "tiny_backend", "backend.json"))
    vec = backend.embed_frame(os.path.join(FIXTURES, "raster_4x2.png"))
    check(len(vec) == backend.embed_dim, "backend embeds a frame")
    check(len(backend.embed_text("a real photo")) == backend.embed_dim, "backend embeds text")

    clip = os.path.join(FIXTURES, "clip_320x240.mp4")
    try:
        info = vf.probe(clip)
        check(info["width"] == 320 and info["height"] == 240, "probe fixture clip")
    except RuntimeError as e:
        print(f"SKIP probe ({e})")

    print("all checks passed")


if __name__ == "__main__":
    main()
