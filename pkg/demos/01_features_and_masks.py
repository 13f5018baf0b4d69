# %% [markdown]
# # From audio to MFCC frames
# A short synthetic recording is rendered as 16 kHz audio, turned into
# 19 cepstral coefficients per 10 ms hop and restricted to speech frames.

# %%
import numpy as np

from ibdiar.features import MfccConfig, apply_speech_mask, extract_mfcc
from ibdiar.synth import SynthSpec, generate

inp = generate(SynthSpec(num_speakers=2, total_duration_s=20, kind="audio", rng_seed=1, recording_id="demo"))
rec = inp.recording
print(f"{rec.samples.size} samples at {rec.sample_rate_hz} Hz")

# %% 25 ms Hamming windows, 10 ms hop, c1..c19
feats = extract_mfcc(rec, MfccConfig())
print("frames x coefficients:", feats.frames.shape)
print("first frame:", np.round(feats.frames[1, :5], 3))

# %% [markdown]
# The reference turns double as a speech mask.  Frames whose centre falls
# in a pause are dropped; `index` maps the kept rows back to time.

# %%
masked, index = apply_speech_mask(feats, inp.speech_mask())
print(f"kept {masked.frames.shape[0]} of {feats.frames.shape[0]} frames")
print("first kept frame starts at", index[0] * feats.frame_shift_s, "s")

# %% Per-speaker means differ, which is what clustering will exploit
labels = np.full(feats.frames.shape[0], -1)
centres = (np.arange(labels.size) + 0.5) * feats.frame_shift_s
for t in inp.reference.turns:
    labels[(centres >= t.start) & (centres < t.end)] = int(t.speaker[1:])
for s in (0, 1):
    print(f"S{s} mean c1..c3:", np.round(feats.frames[labels == s, :3].mean(axis=0), 2))
