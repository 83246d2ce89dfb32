"""Handcrafted CPS-115 features and the speaker-independent SVM baseline.

Run: python demos/02_features_and_baseline.py
"""
import tempfile

from stressrep.corpus import manifest_features
from stressrep.evaluation import EvalConfig, evaluate
from stressrep.features import FEATURE_NAMES
from stressrep.synth import gen_corpus

m = gen_corpus(10, 5, tempfile.mkdtemp(prefix="stressrep_"), seed=3)
X = manifest_features(m)
print(f"feature matrix {X.shape}; first columns: {', '.join(FEATURE_NAMES[:5])}")

rep = evaluate(m.ids, X, m, EvalConfig(seed=0, folds=3))
print(rep.table())
print(f"train speakers {sorted(rep.train_speakers)}")
print(f"test speakers  {sorted(rep.test_speakers)}")
for C, folds in rep.fold_uars.items():
    print(f"  C={C:<8} fold UARs {[round(u, 3) for u in folds]}")
