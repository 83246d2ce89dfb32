"""Build a small load / no-load corpus and check what the load condition does to a voice.

Run: python demos/01_synthetic_corpus.py [out_dir]
"""
import sys
import tempfile

import numpy as np

from stressrep.features import DESCRIPTORS, extract_lld
from stressrep.synth import gen_corpus, gen_speaker_profile, gen_utterance

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="stressrep_corpus_")
m = gen_corpus(n_speakers=6, utts_per_condition=3, out_dir=out, seed=7)
print(f"{len(m)} utterances from {len(m.speakers)} speakers in {out}")

# one speaker, same random draws, both conditions
prof = gen_speaker_profile(7, 0)
print(f"\n{prof.speaker_id}: base F0 {prof.base_f0:.1f} Hz, jitter {prof.jitter:.4f}, "
      f"rate {prof.syllable_rate:.2f} Hz, SNR {prof.snr_db:.1f} dB")
col = {d: i for i, d in enumerate(DESCRIPTORS)}
for cond in ("no_load", "load"):
    w = gen_utterance(prof, cond, 2.0, np.random.default_rng(0))
    lld = extract_lld(w)
    v = lld.values[lld.voiced_mask]
    print(f"  {cond:<8} median F0 {np.median(v[:, col['f0']]):6.1f} Hz   "
          f"median jitter {np.median(v[:, col['jitter_local']]):.4f}   "
          f"median HNR {np.median(v[:, col['hnr_db']]):5.1f} dB")
