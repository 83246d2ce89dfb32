"""Two augmented views of one log-mel spectrogram: mixup with a memory of past
inputs, then a random resize crop, each view normalised on its own.

Run: python demos/03_augmented_views.py
"""
import numpy as np

from stressrep.augment import AugmentConfig, MixupMemory, corpus_stats, make_views
from stressrep.frontend import FrontendConfig, waveform_to_logmel
from stressrep.synth import gen_speaker_profile, gen_utterance

cfg = FrontendConfig()
lms = [waveform_to_logmel(gen_utterance(gen_speaker_profile(1, i), "load", 1.0, np.random.default_rng(i)), cfg).values
       for i in range(8)]
stats = corpus_stats(lms)
print(f"log-mel shape {lms[0].shape}, corpus mean {stats[0]:.2f}, std {stats[1]:.2f}")

mem = MixupMemory(16)
rng = np.random.default_rng(0)
for x in lms:
    pair = make_views(x, mem, AugmentConfig(), rng, stats)
    a, b = pair.view_a, pair.view_b
    print(f"views {a.shape}  mean {a.mean():+.1e} / {b.mean():+.1e}  std {a.std():.3f} / {b.std():.3f}  "
          f"corr {np.corrcoef(a.ravel(), b.ravel())[0, 1]:+.2f}  memory {len(mem.buffer)}")

