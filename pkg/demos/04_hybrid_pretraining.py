"""Hybrid pretraining: BYOL between two views plus regression of the online
projection onto standardised handcrafted features.

A short run on a small corpus; watch the supervised term fall. Checkpoint,
log and a resumed continuation land in the output directory.

Run: python demos/04_hybrid_pretraining.py [steps]
"""
import sys
import tempfile

from stressrep.corpus import manifest_features, manifest_logmels
from stressrep.features import SupervisionVector, fit_standardizer
from stressrep.synth import gen_corpus
from stressrep.trainer import Pretrainer, TrainConfig, read_train_log

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 40
work = tempfile.mkdtemp(prefix="stressrep_pretrain_")
m = gen_corpus(6, 4, f"{work}/corpus", seed=2)
lms = manifest_logmels(m)
X = manifest_features(m)
st = fit_standardizer([SupervisionVector(x) for x in X])
sup = (X - st.mean) / st.std

cfg = TrainConfig(steps=steps, batch_size=8, seed=0)
pt = Pretrainer(lms, sup, m.ids, cfg)
print(f"network input {pt.net.input_shape}, encoder {pt.net.encoder.channels} -> {pt.net.encoder.embed_dim}")


def show(step, parts):
    if step % 10 == 0 or step == 1:
        print(f"step {step:4d}  l_ss {parts.l_ss:.4f}  l_sup {parts.l_sup:.4f}  l_hybrid {parts.l_hybrid:.4f}")


half = steps // 2
pt.run(steps=half, callback=show)
pt.save(f"{work}/half.ckpt")

again = Pretrainer(lms, sup, m.ids, cfg)
again.resume(f"{work}/half.ckpt")
again.run(out_dir=f"{work}/run", callback=show)
log = read_train_log(f"{work}/run/train_log.csv")
print(f"\n{len(log)} logged steps; checkpoint and log in {work}/run")
